//! Synthetic weakly-annotated segmentation benchmark.
//!
//! Each sample is a single bright shape on a darker, shaded background with
//! additive Gaussian noise. Weak labels come from a centroid-aligned atlas
//! built over the training split: offsets that are foreground in every
//! training mask become foreground seeds, offsets that are foreground in none
//! become background seeds.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{GridImage, GridShape, Mask};
use crate::seg::WeakAnnotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    Disk,
    Ellipse,
    /// Disk minus an offset inner disk: curved and narrow.
    Crescent,
}

impl FromStr for ShapeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" => Ok(ShapeFamily::Disk),
            "ellipse" => Ok(ShapeFamily::Ellipse),
            "crescent" => Ok(ShapeFamily::Crescent),
            other => Err(Error::config(
                "data.family",
                format!("unknown shape family `{other}`"),
            )),
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeFamily::Disk => "disk",
            ShapeFamily::Ellipse => "ellipse",
            ShapeFamily::Crescent => "crescent",
        })
    }
}

/// Appearance and geometry of generated images.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub family: ShapeFamily,
    pub height: usize,
    pub width: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Mean foreground/background intensity gap.
    pub contrast: f64,
    /// Number of bright background blobs that are not part of the target.
    pub distractors: usize,
    /// Maximum slope of a random linear intensity ramp across the frame.
    pub shading: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            family: ShapeFamily::Disk,
            height: 64,
            width: 64,
            noise: 0.05,
            contrast: 0.35,
            distractors: 0,
            shading: 0.0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        if self.height < 12 || self.width < 12 {
            return Err(Error::Generation(format!(
                "frame {}x{} too small for shapes (minimum 12x12)",
                self.height, self.width
            )));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Generation(format!("bad noise level {}", self.noise)));
        }
        if !(self.shading >= 0.0 && self.shading <= 0.5) {
            return Err(Error::Generation(format!("bad shading {}", self.shading)));
        }
        if !(self.contrast > 0.0 && self.contrast <= 0.8) {
            return Err(Error::Generation(format!("bad contrast {}", self.contrast)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: GridImage,
    pub gt: Mask,
    pub annotation: WeakAnnotation,
    pub true_size: usize,
    /// Foreground centroid `(row, col)`.
    pub centroid: (f64, f64),
}

/// Quantizes to the 8-bit grid so images survive a PGM round-trip exactly.
fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn rasterize(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let side = h.min(w);
    let inside: Box<dyn Fn(f64, f64) -> bool> = match cfg.family {
        ShapeFamily::Disk => {
            let r = side * rng.gen_range(0.12..0.22);
            let cy = rng.gen_range(r + 2.0..h - r - 2.0);
            let cx = rng.gen_range(r + 2.0..w - r - 2.0);
            Box::new(move |y, x| (y - cy).powi(2) + (x - cx).powi(2) <= r * r)
        }
        ShapeFamily::Ellipse => {
            let a = side * rng.gen_range(0.12..0.25);
            let b = side * rng.gen_range(0.08..0.16);
            let th = rng.gen_range(0.0..PI);
            let cy = rng.gen_range(a + 2.0..h - a - 2.0);
            let cx = rng.gen_range(a + 2.0..w - a - 2.0);
            let (s, c) = th.sin_cos();
            Box::new(move |y, x| {
                let (dy, dx) = (y - cy, x - cx);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            })
        }
        ShapeFamily::Crescent => {
            let r_out = side * rng.gen_range(0.18..0.26);
            let r_in = r_out * rng.gen_range(0.72..0.85);
            let shift = r_out * rng.gen_range(0.35..0.5);
            let th: f64 = rng.gen_range(-0.35..0.35);
            let cy = rng.gen_range(r_out + 2.0..h - r_out - 2.0);
            let cx = rng.gen_range(r_out + 2.0..w - r_out - 2.0);
            let (iy, ix) = (cy + shift * th.sin(), cx + shift * th.cos());
            Box::new(move |y, x| {
                (y - cy).powi(2) + (x - cx).powi(2) <= r_out * r_out
                    && (y - iy).powi(2) + (x - ix).powi(2) > r_in * r_in
            })
        }
    };
    let bits = (0..cfg.height)
        .flat_map(|y| (0..cfg.width).map(move |x| (y, x)))
        .map(|(y, x)| inside(y as f64, x as f64))
        .collect();
    bits
}

fn generate_sample(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let shape = GridShape::new_2d(cfg.height, cfg.width);
    let bits = rasterize(cfg, rng);
    let gt = Mask::new(shape, bits)?;
    let true_size = gt.count();
    if true_size == 0 || true_size >= shape.len() {
        return Err(Error::Generation(format!(
            "degenerate {} mask with {true_size} foreground pixels",
            cfg.family
        )));
    }

    let background = rng.gen_range(0.2..0.3);
    let foreground = background + cfg.contrast * rng.gen_range(0.9..1.1);
    // linear shading across the frame
    let (gy, gx) = if cfg.shading > 0.0 {
        (
            rng.gen_range(-cfg.shading..cfg.shading),
            rng.gen_range(-cfg.shading..cfg.shading),
        )
    } else {
        (0.0, 0.0)
    };
    let mut blobs = Vec::with_capacity(cfg.distractors);
    for _ in 0..cfg.distractors {
        let r = rng.gen_range(1.5..3.5);
        blobs.push((
            rng.gen_range(0.0..cfg.height as f64),
            rng.gen_range(0.0..cfg.width as f64),
            r,
        ));
    }
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Generation(e.to_string()))?;
    let mut values = Vec::with_capacity(shape.len());
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let p = shape.index(0, y, x);
            let (fy, fx) = (y as f64 / cfg.height as f64 - 0.5, x as f64 / cfg.width as f64 - 0.5);
            let mut v = if gt.get(p) {
                foreground
            } else {
                let near_blob = blobs
                    .iter()
                    .any(|&(by, bx, r)| (y as f64 - by).powi(2) + (x as f64 - bx).powi(2) <= r * r);
                if near_blob {
                    background + 0.8 * cfg.contrast
                } else {
                    background
                }
            };
            v += gy * fy + gx * fx;
            if cfg.noise > 0.0 {
                v += noise.sample(rng);
            }
            values.push(quantize(v));
        }
    }
    let (_, cy, cx) = gt.centroid().expect("non-empty mask");
    Ok(Sample {
        image: GridImage::new(shape, values)?,
        gt,
        annotation: WeakAnnotation::empty(),
        true_size,
        centroid: (cy, cx),
    })
}

/// Generates `n` unannotated samples; identical seeds give identical output.
pub fn generate_dataset(n: usize, cfg: &GeneratorConfig, seed: u64) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Generation("dataset size must be >= 1".into()));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| generate_sample(cfg, &mut rng)).collect()
}

/// Rounded centroid used as the atlas origin.
pub fn anchor(sample: &Sample) -> (i64, i64) {
    (sample.centroid.0.round() as i64, sample.centroid.1.round() as i64)
}

/// Centroid-aligned seed masks as `(row, col)` offsets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Atlas {
    pub fg: BTreeSet<(i64, i64)>,
    pub bg: BTreeSet<(i64, i64)>,
    /// Set when no offset is foreground in every training mask.
    pub empty_foreground: bool,
}

/// Offsets foreground in all samples (fg) and in none (bg), over the union
/// of offsets covered by at least one frame.
pub fn build_atlas(train: &[Sample]) -> Result<Atlas> {
    let first = train
        .first()
        .ok_or_else(|| Error::Generation("atlas needs at least one training sample".into()))?;
    let shape = first.gt.shape();
    if !shape.is_2d() {
        return Err(Error::dim("atlas depth", 1, shape.depth));
    }
    // dense window large enough for every offset of every frame
    let max_h = train.iter().map(|s| s.gt.shape().height).max().unwrap_or(0) as i64;
    let max_w = train.iter().map(|s| s.gt.shape().width).max().unwrap_or(0) as i64;
    let (wh, ww) = (2 * max_h + 1, 2 * max_w + 1);
    let slot = |dy: i64, dx: i64| ((dy + max_h) * ww + (dx + max_w)) as usize;
    let mut fg_count = vec![0usize; (wh * ww) as usize];
    let mut covered = vec![false; (wh * ww) as usize];
    for s in train {
        let sh = s.gt.shape();
        let (ay, ax) = anchor(s);
        for y in 0..sh.height {
            for x in 0..sh.width {
                let k = slot(y as i64 - ay, x as i64 - ax);
                covered[k] = true;
                if s.gt.get(sh.index(0, y, x)) {
                    fg_count[k] += 1;
                }
            }
        }
    }
    let mut atlas = Atlas::default();
    for dy in -max_h..=max_h {
        for dx in -max_w..=max_w {
            let k = slot(dy, dx);
            if !covered[k] {
                continue;
            }
            if fg_count[k] == train.len() {
                atlas.fg.insert((dy, dx));
            } else if fg_count[k] == 0 {
                atlas.bg.insert((dy, dx));
            }
        }
    }
    atlas.empty_foreground = atlas.fg.is_empty();
    Ok(atlas)
}

/// Translates the atlas to the sample's centroid (plus `click` offset) and
/// labels the in-frame pixels it covers.
pub fn annotate_at(sample: &Sample, atlas: &Atlas, click: (i64, i64)) -> Result<WeakAnnotation> {
    let shape = sample.gt.shape();
    let (ay, ax) = anchor(sample);
    let (ay, ax) = (ay + click.0, ax + click.1);
    let mut entries = Vec::with_capacity(atlas.fg.len() + atlas.bg.len());
    let mut place = |set: &BTreeSet<(i64, i64)>, label: u8| {
        for &(dy, dx) in set {
            let (y, x) = (ay + dy, ax + dx);
            if y >= 0 && x >= 0 && (y as usize) < shape.height && (x as usize) < shape.width {
                entries.push((shape.index(0, y as usize, x as usize), label));
            }
        }
    };
    place(&atlas.fg, 1);
    place(&atlas.bg, 0);
    WeakAnnotation::new(shape.len(), entries)
}

pub fn annotate(sample: &Sample, atlas: &Atlas) -> Result<WeakAnnotation> {
    annotate_at(sample, atlas, (0, 0))
}

/// Full benchmark description: generator settings plus split sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub generator: GeneratorConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    /// Radius of the uniform random click offset; 0 places seeds exactly at the centroid.
    pub jitter: u32,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            generator: GeneratorConfig::default(),
            n_train: 40,
            n_val: 10,
            seed: 0,
            jitter: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl Dataset {
    /// Generates both splits and annotates them with the training atlas.
    pub fn generate(spec: &DatasetSpec) -> Result<(Dataset, Atlas)> {
        let mut train = generate_dataset(spec.n_train, &spec.generator, spec.seed)?;
        let mut val = generate_dataset(
            spec.n_val.max(1),
            &spec.generator,
            spec.seed ^ 0x5eed_0f_7a1d,
        )?;
        val.truncate(spec.n_val);
        let atlas = build_atlas(&train)?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(17));
        let j = spec.jitter as i64;
        for s in train.iter_mut().chain(val.iter_mut()) {
            let click = if j > 0 {
                (rng.gen_range(-j..=j), rng.gen_range(-j..=j))
            } else {
                (0, 0)
            };
            s.annotation = annotate_at(s, &atlas, click)?;
        }
        Ok((Dataset { train, val }, atlas))
    }

    /// Mean fraction of each training foreground covered by foreground seeds.
    pub fn foreground_seed_fraction(&self) -> f64 {
        if self.train.is_empty() {
            return 0.0;
        }
        self.train
            .iter()
            .map(|s| s.annotation.foreground_count() as f64 / s.true_size as f64)
            .sum::<f64>()
            / self.train.len() as f64
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        for (split, samples) in [("train", &self.train), ("val", &self.val)] {
            for (i, s) in samples.iter().enumerate() {
                let dir = root.join(split).join(format!("{i:04}"));
                fs::create_dir_all(&dir)?;
                save_sample(s, &dir)?;
            }
        }
        Ok(())
    }

    pub fn load(root: &Path) -> Result<Dataset> {
        let load_split = |split: &str| -> Result<Vec<Sample>> {
            let dir = root.join(split);
            if !dir.is_dir() {
                return Ok(Vec::new());
            }
            let mut names: Vec<_> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .map(|e| e.file_name())
                .collect();
            names.sort();
            names.iter().map(|n| load_sample(&dir.join(n))).collect()
        };
        let ds = Dataset {
            train: load_split("train")?,
            val: load_split("val")?,
        };
        if ds.train.is_empty() {
            return Err(Error::Format(format!(
                "no training samples under {}",
                root.display()
            )));
        }
        Ok(ds)
    }
}

fn write_pgm(path: &Path, shape: GridShape, bytes: &[u8]) -> Result<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(bytes, shape.width as u32, shape.height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    fs::write(path, buf)?;
    Ok(())
}

fn read_pgm(path: &Path) -> Result<(GridShape, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Pnm)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .to_luma8();
    let shape = GridShape::new_2d(img.height() as usize, img.width() as usize);
    Ok((shape, img.into_raw()))
}

pub fn save_sample(s: &Sample, dir: &Path) -> Result<()> {
    let shape = s.image.shape();
    let img: Vec<u8> = s
        .image
        .values()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    write_pgm(&dir.join("image.pgm"), shape, &img)?;
    let gt: Vec<u8> = s.gt.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_pgm(&dir.join("gt.pgm"), shape, &gt)?;
    let mut seeds = vec![128u8; shape.len()];
    for (p, l) in s.annotation.iter() {
        seeds[p] = if l == 1 { 255 } else { 0 };
    }
    write_pgm(&dir.join("seeds.pgm"), shape, &seeds)?;
    fs::write(
        dir.join("meta"),
        format!(
            "true_size = {}\ncentroid = {} {}\n",
            s.true_size, s.centroid.0, s.centroid.1
        ),
    )?;
    Ok(())
}

pub fn load_sample(dir: &Path) -> Result<Sample> {
    let (shape, img) = read_pgm(&dir.join("image.pgm"))?;
    let image = GridImage::new(shape, img.iter().map(|&b| f64::from(b) / 255.0).collect())?;
    let (gshape, gt) = read_pgm(&dir.join("gt.pgm"))?;
    let (sshape, seeds) = read_pgm(&dir.join("seeds.pgm"))?;
    if gshape != shape || sshape != shape {
        return Err(Error::Format(format!("{}: mismatched image sizes", dir.display())));
    }
    let gt = Mask::new(shape, gt.iter().map(|&b| b >= 128).collect())?;
    let mut entries = Vec::new();
    for (p, &b) in seeds.iter().enumerate() {
        match b {
            0 => entries.push((p, 0)),
            255 => entries.push((p, 1)),
            128 => {}
            other => {
                return Err(Error::Format(format!(
                    "{}: seed value {other} at pixel {p}",
                    dir.display()
                )))
            }
        }
    }
    let annotation = WeakAnnotation::new(shape.len(), entries)?;

    let meta = fs::read_to_string(dir.join("meta"))?;
    let mut true_size = None;
    let mut centroid = None;
    for line in meta.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let bad = || Error::Format(format!("{}: bad meta line `{line}`", dir.display()));
        match k.trim() {
            "true_size" => true_size = Some(v.trim().parse::<usize>().map_err(|_| bad())?),
            "centroid" => {
                let parts: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?;
                if parts.len() != 2 {
                    return Err(bad());
                }
                centroid = Some((parts[0], parts[1]));
            }
            _ => {}
        }
    }
    let missing = |k: &str| Error::Format(format!("{}: meta lacks `{k}`", dir.display()));
    Ok(Sample {
        image,
        gt,
        annotation,
        true_size: true_size.ok_or_else(|| missing("true_size"))?,
        centroid: centroid.ok_or_else(|| missing("centroid"))?,
    })
}
