//! Grid containers and finite-difference stencils.
//!
//! Storage is row-major and indexing is `(row, col)`; the `x` axis runs along
//! columns and `y` along rows. Grid spacing is one pixel. Every stencil uses
//! replicated (homogeneous Neumann) boundaries: an out-of-range neighbour
//! takes the value of the nearest in-range pixel.

use std::fmt;

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    height: usize,
    width: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 3 || width < 3 {
            return contract(format!("grid must be at least 3x3, got {height}x{width}"));
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub(crate) fn ensure_same(&self, other: &GridShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected: self.to_string(),
                actual: other.to_string(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along columns (`x`).
    Col,
    /// Along rows (`y`).
    Row,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Half-point at `i + 1/2`.
    Forward,
    /// Half-point at `i - 1/2`.
    Backward,
}

/// A finite real value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    shape: GridShape,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return contract(format!(
                "field of shape {shape} needs {} values, got {}",
                shape.len(),
                values.len()
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return contract(format!("non-finite value at index {pos}"));
        }
        Ok(Self { shape, values })
    }

    pub fn constant(shape: GridShape, value: f64) -> Self {
        assert!(value.is_finite(), "constant field value must be finite");
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    /// Builds a field by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for r in 0..shape.height {
            for c in 0..shape.width {
                values.push(f(r, c));
            }
        }
        Self::new(shape, values)
    }

    /// Skips the finiteness scan; callers guarantee finite values.
    pub(crate) fn from_vec_unchecked(shape: GridShape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, values }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.shape.index(row, col)]
    }

    /// Value with replicated boundaries for signed offsets.
    #[inline]
    pub(crate) fn at_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.shape.height as isize - 1) as usize;
        let c = col.clamp(0, self.shape.width as isize - 1) as usize;
        self.values[r * self.shape.width + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-pixel region index in `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    shape: GridShape,
    labels: Vec<u32>,
    regions: u32,
}

impl LabelMap {
    pub fn new(shape: GridShape, labels: Vec<u32>, regions: u32) -> Result<Self> {
        if regions < 2 {
            return contract(format!("label map needs at least 2 regions, got {regions}"));
        }
        if labels.len() != shape.len() {
            return contract(format!(
                "label map of shape {shape} needs {} labels, got {}",
                shape.len(),
                labels.len()
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > regions) {
            return contract(format!("label {bad} outside 1..={regions}"));
        }
        Ok(Self {
            shape,
            labels,
            regions,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn regions(&self) -> u32 {
        self.regions
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[self.shape.index(row, col)]
    }

    /// Number of pixels carrying `label`.
    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Central differences `(d/dx, d/dy)` with replicated boundaries.
///
/// On the border the missing neighbour is replaced by the pixel itself, so
/// the stencil degrades to a one-sided difference over a half-width.
pub fn central_gradient(field: &ScalarField) -> (ScalarField, ScalarField) {
    let shape = field.shape;
    let (h, w) = (shape.height, shape.width);
    let v = &field.values;
    let mut dx = vec![0.0; shape.len()];
    let mut dy = vec![0.0; shape.len()];
    for r in 0..h {
        let up = r.saturating_sub(1);
        let down = (r + 1).min(h - 1);
        for c in 0..w {
            let left = c.saturating_sub(1);
            let right = (c + 1).min(w - 1);
            let i = r * w + c;
            dx[i] = 0.5 * (v[r * w + right] - v[r * w + left]);
            dy[i] = 0.5 * (v[down * w + c] - v[up * w + c]);
        }
    }
    (
        ScalarField::from_vec_unchecked(shape, dx),
        ScalarField::from_vec_unchecked(shape, dy),
    )
}

#[inline]
fn step(axis: Axis, direction: Direction) -> (isize, isize) {
    let s = match direction {
        Direction::Forward => 1,
        Direction::Backward => -1,
    };
    match axis {
        Axis::Col => (0, s),
        Axis::Row => (s, 0),
    }
}

/// Two-point average onto the half-grid: `(a[i] + a[i±1]) / 2`.
///
/// The output has the input's shape; entry `i` holds the value at `i + 1/2`
/// (forward) or `i - 1/2` (backward). At the edge the missing neighbour is
/// replicated, so the result equals the boundary value.
pub fn half_point_average(field: &ScalarField, axis: Axis, direction: Direction) -> ScalarField {
    let (dr, dc) = step(axis, direction);
    let shape = field.shape;
    let mut out = Vec::with_capacity(shape.len());
    for r in 0..shape.height as isize {
        for c in 0..shape.width as isize {
            out.push(0.5 * (field.at_clamped(r, c) + field.at_clamped(r + dr, c + dc)));
        }
    }
    ScalarField::from_vec_unchecked(shape, out)
}

/// One-sided difference onto the half-grid: `a[i+1] - a[i]` (forward) or
/// `a[i] - a[i-1]` (backward). Zero across the boundary.
pub fn half_point_difference(field: &ScalarField, axis: Axis, direction: Direction) -> ScalarField {
    let (dr, dc) = step(axis, direction);
    let shape = field.shape;
    let mut out = Vec::with_capacity(shape.len());
    for r in 0..shape.height as isize {
        for c in 0..shape.width as isize {
            let a = field.at_clamped(r, c);
            let b = field.at_clamped(r + dr, c + dc);
            out.push(match direction {
                Direction::Forward => b - a,
                Direction::Backward => a - b,
            });
        }
    }
    ScalarField::from_vec_unchecked(shape, out)
}
