//! Per-image vectors exchanged between the network, the proposal solvers and
//! the training loop.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::grid::GridShape;

/// Foreground probabilities produced by the network, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSeg {
    shape: GridShape,
    values: Vec<f64>,
}

impl SoftSeg {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::dim("SoftSeg", shape.len(), values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numerical(format!("probability {v} outside [0, 1]")));
        }
        Ok(SoftSeg { shape, values })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Size of the τ-thresholded segmentation.
    pub fn hard_size(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

macro_rules! real_vector {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn filled(len: usize, value: f64) -> Self {
                $name(vec![value; len])
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                $name(v)
            }
        }
    };
}

real_vector!(
    /// Auxiliary segmentation coupled to the network output. Holds 1/2
    /// before its first discrete update and values in `{0, 1}` afterwards.
    Proposal
);

real_vector!(
    /// Scaled Lagrange multiplier for one proposal.
    Multiplier
);

impl Proposal {
    pub fn from_labels(labels: &[u8]) -> Self {
        Proposal(labels.iter().map(|&l| f64::from(l)).collect())
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn to_labels(&self) -> Vec<u8> {
        self.0.iter().map(|&v| u8::from(v >= 0.5)).collect()
    }
}

/// Weak labels: a subset Ω of pixel indices with a binary label each.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WeakAnnotation {
    omega: Vec<usize>,
    labels: Vec<u8>,
}

impl WeakAnnotation {
    /// Builds an annotation from `(pixel, label)` pairs. Pixels must be unique
    /// and below `pixel_count`; labels must be 0 or 1.
    pub fn new(pixel_count: usize, mut entries: Vec<(usize, u8)>) -> Result<Self> {
        entries.sort_unstable_by_key(|e| e.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Format(format!("pixel {} labelled twice", w[0].0)));
            }
        }
        if let Some(&(p, _)) = entries.iter().find(|e| e.0 >= pixel_count) {
            return Err(Error::dim("WeakAnnotation", pixel_count, p));
        }
        if let Some(&(p, l)) = entries.iter().find(|e| e.1 > 1) {
            return Err(Error::Format(format!("pixel {p} has non-binary label {l}")));
        }
        Ok(WeakAnnotation {
            omega: entries.iter().map(|e| e.0).collect(),
            labels: entries.iter().map(|e| e.1).collect(),
        })
    }

    pub fn empty() -> Self {
        WeakAnnotation::default()
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.omega.iter().copied().zip(self.labels.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::dim(context, expected, found))
    } else {
        Ok(())
    }
}
