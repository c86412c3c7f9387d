//! Aggregation of training histories across seeds.
//!
//! Each run directory holds `history.csv` and the resolved `config.txt`
//! written next to it. Runs are grouped by method and ε taken from the
//! config, and every per-epoch column is reduced to mean and standard
//! deviation over the runs of a group.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::Result;
use crate::metrics::mean_std;
use crate::trainer::{History, Method};

pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone)]
pub struct Run {
    pub dir: PathBuf,
    pub method: Method,
    pub epsilon: f64,
    pub history: History,
}

/// Runs found in `dirs`, plus the paths that were expected but missing or unreadable.
#[derive(Debug, Default)]
pub struct Collected {
    pub runs: Vec<Run>,
    pub missing: Vec<(PathBuf, String)>,
}

/// Loads each directory as a run. A directory without either file, or with
/// a file that fails to parse, is reported in `missing`.
pub fn collect(dirs: &[PathBuf]) -> Collected {
    let mut out = Collected::default();
    for dir in dirs {
        match load_run(dir) {
            Ok(run) => out.runs.push(run),
            Err((path, why)) => out.missing.push((path, why)),
        }
    }
    out
}

fn load_run(dir: &Path) -> std::result::Result<Run, (PathBuf, String)> {
    let cfg_path = dir.join(CONFIG_FILE);
    let hist_path = dir.join(HISTORY_FILE);
    let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| (cfg_path.clone(), e.to_string()))?;
    let cfg = Config::parse(&cfg_text).map_err(|e| (cfg_path.clone(), e.to_string()))?;
    let hist_text = fs::read_to_string(&hist_path).map_err(|e| (hist_path.clone(), e.to_string()))?;
    let history = History::from_csv(&hist_text).map_err(|e| (hist_path.clone(), e.to_string()))?;
    Ok(Run {
        dir: dir.to_path_buf(),
        method: cfg.train.method,
        epsilon: cfg.train.epsilon,
        history,
    })
}

/// Immediate subdirectories of `root` that contain a history or config file,
/// in name order. `root` itself is included when it holds one.
pub fn discover(root: &Path) -> Result<Vec<PathBuf>> {
    let is_run = |p: &Path| p.join(HISTORY_FILE).exists() || p.join(CONFIG_FILE).exists();
    let mut dirs = Vec::new();
    if is_run(root) {
        dirs.push(root.to_path_buf());
    }
    let mut subs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && is_run(p))
        .collect();
    subs.sort();
    dirs.extend(subs);
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub epoch: usize,
    pub runs: usize,
    pub dice: (f64, f64),
    pub size_ratio: (f64, f64),
    pub violations: (f64, f64),
    pub loss_ce: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct Group {
    pub method: Method,
    pub epsilon: f64,
    pub rows: Vec<GroupRow>,
    /// Set when runs disagreed on epoch count and the group was cut to the shortest.
    pub truncated_from: Option<usize>,
}

pub fn aggregate(runs: &[Run]) -> Vec<Group> {
    let mut by_key: BTreeMap<(String, u64), Vec<&Run>> = BTreeMap::new();
    for r in runs {
        by_key
            .entry((r.method.to_string(), r.epsilon.to_bits()))
            .or_default()
            .push(r);
    }
    by_key
        .into_values()
        .map(|members| {
            let lens: Vec<usize> = members.iter().map(|r| r.history.records.len()).collect();
            let shortest = *lens.iter().min().unwrap();
            let longest = *lens.iter().max().unwrap();
            let rows = (0..shortest)
                .map(|e| {
                    let col = |f: &dyn Fn(&crate::trainer::EpochRecord) -> f64| {
                        let v: Vec<f64> = members.iter().map(|r| f(&r.history.records[e])).collect();
                        mean_std(&v)
                    };
                    GroupRow {
                        epoch: members[0].history.records[e].epoch,
                        runs: members.len(),
                        dice: col(&|r| r.val_dice_mean),
                        size_ratio: col(&|r| r.size_ratio_mean),
                        violations: col(&|r| r.violations as f64),
                        loss_ce: col(&|r| r.loss_ce),
                    }
                })
                .collect();
            Group {
                method: members[0].method,
                epsilon: members[0].epsilon,
                rows,
                truncated_from: (shortest != longest).then_some(longest),
            }
        })
        .collect()
}

pub const REPORT_HEADER: &str = "method,epsilon,epoch,runs,val_dice_mean,val_dice_std,size_ratio_mean,size_ratio_std,violations_mean,violations_std,loss_ce_mean,loss_ce_std";

/// Long-format table, one row per group and epoch.
pub fn to_csv(groups: &[Group]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for g in groups {
        for r in &g.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                g.method,
                g.epsilon,
                r.epoch,
                r.runs,
                r.dice.0,
                r.dice.1,
                r.size_ratio.0,
                r.size_ratio.1,
                r.violations.0,
                r.violations.1,
                r.loss_ce.0,
                r.loss_ce.1
            );
        }
    }
    out
}

/// Final-epoch table, one line per group.
pub fn summary(groups: &[Group]) -> String {
    let mut out = format!(
        "{:<14} {:>7} {:>6} {:>5} {:>17} {:>17} {:>13}\n",
        "method", "epsilon", "epochs", "runs", "val dice", "size ratio", "violations"
    );
    for g in groups {
        let Some(r) = g.rows.last() else {
            continue;
        };
        let _ = writeln!(
            out,
            "{:<14} {:>7} {:>6} {:>5} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4} {:>5.2} ± {:<5.2}",
            g.method.to_string(),
            g.epsilon,
            r.epoch,
            r.runs,
            r.dice.0,
            r.dice.1,
            r.size_ratio.0,
            r.size_ratio.1,
            r.violations.0,
            r.violations.1
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::EpochRecord;

    fn run(method: Method, eps: f64, dice: &[f64]) -> Run {
        Run {
            dir: PathBuf::new(),
            method,
            epsilon: eps,
            history: History {
                records: dice
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| EpochRecord {
                        epoch: i + 1,
                        loss_ce: 0.0,
                        loss_admm_hat: 0.0,
                        loss_admm_tilde: 0.0,
                        val_dice_mean: d,
                        size_ratio_mean: 1.0,
                        size_ratio_std: 0.0,
                        violations: 0,
                        proposal_seconds: 0.0,
                        epoch_seconds: 0.0,
                        sgd_seconds: 0.0,
                    })
                    .collect(),
            },
        }
    }

    #[test]
    fn groups_and_truncates() {
        let runs = vec![
            run(Method::Penalty, 0.1, &[0.2, 0.4, 0.6]),
            run(Method::Penalty, 0.1, &[0.4, 0.6]),
            run(Method::CrfPlusSize, 0.1, &[0.5]),
        ];
        let groups = aggregate(&runs);
        assert_eq!(groups.len(), 2);
        let pen = groups.iter().find(|g| g.method == Method::Penalty).unwrap();
        assert_eq!(pen.rows.len(), 2);
        assert_eq!(pen.truncated_from, Some(3));
        assert!((pen.rows[0].dice.0 - 0.3).abs() < 1e-12);
        assert!((pen.rows[0].dice.1 - 0.1).abs() < 1e-12);
        let csv = to_csv(&groups);
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(summary(&groups).lines().count(), 3);
    }

    #[test]
    fn single_run_passes_through() {
        let groups = aggregate(&[run(Method::SizeOnly, 0.0, &[0.7, 0.8])]);
        assert_eq!(groups[0].rows[1].dice, (0.8, 0.0));
        assert_eq!(groups[0].truncated_from, None);
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let got = collect(&[dir.path().to_path_buf()]);
        assert!(got.runs.is_empty());
        assert_eq!(got.missing.len(), 1);
        assert!(got.missing[0].0.ends_with(CONFIG_FILE));
    }
}
