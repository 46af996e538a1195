//! Dense 3D voxel grids and the element-wise utilities shared by every other
//! module.
//!
//! Storage is x-fastest: voxel `(x, y, z)` lives at `x + nx * (y + ny * z)`,
//! the same order NIfTI uses on disk.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logit magnitude used by the loss code before applying the sigmoid.
pub const LOGIT_CLAMP: f64 = 40.0;

/// Default probability threshold for hard predictions.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct Shape {
    nx: usize,
    ny: usize,
    nz: usize,
}

impl Shape {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!(
                "shape must be strictly positive, got {nx}x{ny}x{nz}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::invalid(format!("shape {nx}x{ny}x{nz} overflows")))?;
        Ok(Shape { nx, ny, nz })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Always false; a shape holds at least one voxel.
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.nx;
        let rest = index / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }
}

impl TryFrom<[usize; 3]> for Shape {
    type Error = Error;

    fn try_from(d: [usize; 3]) -> Result<Self> {
        Shape::new(d[0], d[1], d[2])
    }
}

impl From<Shape> for [usize; 3] {
    fn from(s: Shape) -> Self {
        s.dims()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Physical voxel edge lengths in mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Spacing {
    sx: f64,
    sy: f64,
    sz: f64,
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        for s in [sx, sy, sz] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!(
                    "spacing must be finite and positive, got ({sx}, {sy}, {sz})"
                )));
            }
        }
        Ok(Spacing { sx, sy, sz })
    }

    pub fn unit() -> Self {
        Spacing {
            sx: 1.0,
            sy: 1.0,
            sz: 1.0,
        }
    }

    pub fn sx(&self) -> f64 {
        self.sx
    }

    pub fn sy(&self) -> f64 {
        self.sy
    }

    pub fn sz(&self) -> f64 {
        self.sz
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.sx * self.sy * self.sz
    }

    pub fn is_isotropic(&self) -> bool {
        self.sx == self.sy && self.sy == self.sz
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::unit()
    }
}

impl TryFrom<[f64; 3]> for Spacing {
    type Error = Error;

    fn try_from(s: [f64; 3]) -> Result<Self> {
        Spacing::new(s[0], s[1], s[2])
    }
}

impl From<Spacing> for [f64; 3] {
    fn from(s: Spacing) -> Self {
        s.as_array()
    }
}

/// A dense voxel grid with physical spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    shape: Shape,
    spacing: Spacing,
    data: Vec<T>,
}

/// Ground truth or a hard prediction.
pub type BinaryMask = Grid<bool>;

impl<T> Grid<T> {
    pub fn new(shape: Shape, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "grid of shape {shape} needs {} voxels, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Grid {
            shape,
            spacing,
            data,
        })
    }

    pub fn filled(shape: Shape, spacing: Spacing, value: T) -> Self
    where
        T: Clone,
    {
        Grid {
            shape,
            spacing,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_fn(
        shape: Shape,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for z in 0..shape.nz() {
            for y in 0..shape.ny() {
                for x in 0..shape.nx() {
                    data.push(f(x, y, z));
                }
            }
        }
        Grid {
            shape,
            spacing,
            data,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.shape.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.shape.index(x, y, z);
        self.data[i] = value;
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Mirror the grid along one axis (0 = x, 1 = y, 2 = z).
    pub fn flipped(&self, axis: usize) -> Self
    where
        T: Clone,
    {
        let [nx, ny, nz] = self.shape.dims();
        Grid::from_fn(self.shape, self.spacing, |x, y, z| {
            let (sx, sy, sz) = match axis {
                0 => (nx - 1 - x, y, z),
                1 => (x, ny - 1 - y, z),
                _ => (x, y, nz - 1 - z),
            };
            self.get(sx, sy, sz).clone()
        })
    }

    pub(crate) fn check_same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                actual: other.shape,
            });
        }
        Ok(())
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn empty(shape: Shape, spacing: Spacing) -> Self {
        Grid::filled(shape, spacing, false)
    }
}

/// Network outputs before the sigmoid. Every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVolume(Grid<f64>);

impl LogitVolume {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(i) = grid.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "logit at voxel {:?} is not finite",
                grid.shape.coords(i)
            )));
        }
        Ok(LogitVolume(grid))
    }

    pub fn from_vec(shape: Shape, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        LogitVolume::new(Grid::new(shape, spacing, data)?)
    }

    /// `on` where the mask is set and `off` elsewhere.
    pub fn from_mask(mask: &BinaryMask, on: f64, off: f64) -> Self {
        LogitVolume(mask.map(|&b| if b { on } else { off }))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }
}

impl Deref for LogitVolume {
    type Target = Grid<f64>;

    fn deref(&self) -> &Grid<f64> {
        &self.0
    }
}

/// Soft predictions; every value lies in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVolume(Grid<f64>);

impl ProbVolume {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        if let Some(i) = grid.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "probability {} at voxel {:?} is outside [0, 1]",
                grid.data[i],
                grid.shape.coords(i)
            )));
        }
        Ok(ProbVolume(grid))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }
}

impl Deref for ProbVolume {
    type Target = Grid<f64>;

    fn deref(&self) -> &Grid<f64> {
        &self.0
    }
}

/// Numerically stable logistic function.
///
/// Negative logits always map strictly below 0.5, so thresholding at 0.5
/// agrees exactly with the sign of the logit.
#[inline]
pub fn sigmoid_scalar(l: f64) -> f64 {
    if l >= 0.0 {
        1.0 / (1.0 + (-l).exp())
    } else {
        let e = l.exp();
        let p = e / (1.0 + e);
        if p >= 0.5 {
            0.5f64.next_down()
        } else {
            p
        }
    }
}

pub fn sigmoid(l: &LogitVolume) -> ProbVolume {
    ProbVolume(l.map(|&v| sigmoid_scalar(v)))
}

/// Voxel is set iff `p >= threshold`.
pub fn binarize(p: &ProbVolume, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(p.map(|&v| v >= threshold))
}
