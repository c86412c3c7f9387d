//! Grid geometry shared by images, masks and graph construction.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Extent of a 2D (`depth == 1`) or 3D pixel grid, stored depth-major then
/// row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl GridShape {
    pub fn new_2d(height: usize, width: usize) -> Self {
        GridShape {
            depth: 1,
            height,
            width,
        }
    }

    pub fn new_3d(depth: usize, height: usize, width: usize) -> Self {
        GridShape {
            depth,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.depth * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_2d(&self) -> bool {
        self.depth == 1
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.height + y) * self.width + x
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let plane = self.height * self.width;
        (idx / plane, (idx % plane) / self.width, idx % self.width)
    }

    /// Visits every unordered neighbour pair `(p, q)` with `p < q` once.
    pub fn for_each_neighbor_pair(
        &self,
        nb: Neighborhood,
        mut f: impl FnMut(usize, usize),
    ) -> Result<()> {
        let offsets: &[(isize, isize, isize)] = match nb {
            Neighborhood::Grid4 => &[(0, 0, 1), (0, 1, 0)],
            Neighborhood::Grid8 => {
                if !self.is_2d() {
                    return Err(Error::config(
                        "crf.neighborhood",
                        "grid-8 is only defined for 2D grids",
                    ));
                }
                &[(0, 0, 1), (0, 1, 0), (0, 1, 1), (0, 1, -1)]
            }
            Neighborhood::Grid6 => &[(0, 0, 1), (0, 1, 0), (1, 0, 0)],
        };
        for z in 0..self.depth {
            for y in 0..self.height {
                for x in 0..self.width {
                    let p = self.index(z, y, x);
                    for &(dz, dy, dx) in offsets {
                        let (nz, ny, nx) = (z as isize + dz, y as isize + dy, x as isize + dx);
                        if nz < 0
                            || ny < 0
                            || nx < 0
                            || nz >= self.depth as isize
                            || ny >= self.height as isize
                            || nx >= self.width as isize
                        {
                            continue;
                        }
                        let q = self.index(nz as usize, ny as usize, nx as usize);
                        f(p.min(q), p.max(q));
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_2d() {
            write!(f, "{}x{}", self.height, self.width)
        } else {
            write!(f, "{}x{}x{}", self.depth, self.height, self.width)
        }
    }
}

/// Pixel adjacency system used for pairwise terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    #[default]
    Grid4,
    Grid8,
    /// 3D six-connectivity; equals `Grid4` on a single slice.
    Grid6,
}

impl FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid-4" | "grid4" | "4" => Ok(Neighborhood::Grid4),
            "grid-8" | "grid8" | "8" => Ok(Neighborhood::Grid8),
            "grid-6" | "grid6" | "6" => Ok(Neighborhood::Grid6),
            other => Err(Error::config(
                "crf.neighborhood",
                format!("unknown neighborhood `{other}`"),
            )),
        }
    }
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Neighborhood::Grid4 => "grid-4",
            Neighborhood::Grid8 => "grid-8",
            Neighborhood::Grid6 => "grid-6",
        })
    }
}

/// Intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    shape: GridShape,
    values: Vec<f64>,
}

impl GridImage {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::dim("GridImage", shape.len(), values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!("intensity {v} outside [0, 1]")));
        }
        Ok(GridImage { shape, values })
    }

    pub fn zeros(shape: GridShape) -> Self {
        GridImage {
            shape,
            values: vec![0.0; shape.len()],
        }
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
}

/// Binary mask over a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    shape: GridShape,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(shape: GridShape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != shape.len() {
            return Err(Error::dim("Mask", shape.len(), bits.len()));
        }
        Ok(Mask { shape, bits })
    }

    pub fn empty(shape: GridShape) -> Self {
        Mask {
            shape,
            bits: vec![false; shape.len()],
        }
    }

    /// τ-thresholding: a pixel is foreground iff its probability is ≥ 0.5.
    pub fn threshold(shape: GridShape, probs: &[f64]) -> Result<Self> {
        if probs.len() != shape.len() {
            return Err(Error::dim("Mask::threshold", shape.len(), probs.len()));
        }
        Ok(Mask {
            shape,
            bits: probs.iter().map(|&p| p >= 0.5).collect(),
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, v: bool) {
        self.bits[idx] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Centroid of the foreground `(z, y, x)`, or `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64, f64)> {
        let mut acc = (0.0, 0.0, 0.0);
        let mut n = 0usize;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (z, y, x) = self.shape.coords(i);
            acc.0 += z as f64;
            acc.1 += y as f64;
            acc.2 += x as f64;
            n += 1;
        }
        (n > 0).then(|| (acc.0 / n as f64, acc.1 / n as f64, acc.2 / n as f64))
    }
}
