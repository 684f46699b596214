//! Periodic grids and the real/complex fields that live on them.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic grid of up to three dimensions, stored row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    extents: Vec<usize>,
}

impl Grid {
    pub fn new(extents: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 3 {
            return Err(Error::UnsupportedGrid(format!(
                "{} dimensions (1 to 3 supported)",
                extents.len()
            )));
        }
        if extents.iter().any(|&n| n == 0) {
            return Err(Error::UnsupportedGrid(format!("zero extent in {extents:?}")));
        }
        Ok(Self {
            extents: extents.to_vec(),
        })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(&[n, n])
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(&[n, n, n])
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Total number of pixels N.
    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims()];
        for axis in (0..self.dims().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.extents[axis + 1];
        }
        strides
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims()];
        for axis in (0..self.dims()).rev() {
            c[axis] = index % self.extents[axis];
            index /= self.extents[axis];
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.extents)
            .fold(0, |acc, (&c, &n)| acc * n + c)
    }

    /// Index of `index` displaced by a signed offset, wrapping periodically.
    pub fn offset(&self, index: usize, offset: &[i64]) -> usize {
        let mut c = self.coords(index);
        for ((ci, &o), &n) in c.iter_mut().zip(offset).zip(&self.extents) {
            *ci = (*ci as i64 + o).rem_euclid(n as i64) as usize;
        }
        self.index(&c)
    }

    /// Index of the pixel at -r (inversion through the origin).
    pub fn negate(&self, index: usize) -> usize {
        let c: Vec<usize> = self
            .coords(index)
            .iter()
            .zip(&self.extents)
            .map(|(&ci, &n)| (n - ci) % n)
            .collect();
        self.index(&c)
    }

    /// Symmetric integer frequency (or minimum-image displacement) per axis.
    pub fn signed_coords(&self, index: usize) -> Vec<i64> {
        self.coords(index)
            .iter()
            .zip(&self.extents)
            .map(|(&c, &n)| {
                let c = c as i64;
                let n = n as i64;
                if 2 * c > n {
                    c - n
                } else {
                    c
                }
            })
            .collect()
    }

    /// Squared minimum-image distance of a pixel from the origin.
    pub fn min_image_sq(&self, index: usize) -> f64 {
        self.signed_coords(index)
            .iter()
            .map(|&c| (c * c) as f64)
            .sum()
    }

    /// Squared wavevector |q|^2 with q = 2*pi*k/n per axis, k symmetric.
    pub fn wavevector_sq(&self, index: usize) -> f64 {
        self.signed_coords(index)
            .iter()
            .zip(&self.extents)
            .map(|(&k, &n)| {
                let q = 2.0 * PI * k as f64 / n as f64;
                q * q
            })
            .sum()
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(self.to_string(), other.to_string()))
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.extents.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Real scalar field on a periodic grid: a point of the object space.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectField {
    grid: Grid,
    values: Vec<f64>,
}

impl ObjectField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value {} at pixel {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    /// Constructor for values already known to be the right length and finite.
    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Returns the field scaled to unit norm.
    pub fn normalize(&self) -> Result<Self> {
        self.normalize_to(1.0)
    }

    pub fn normalize_to(&self, target: f64) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(target / n))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`, pixelwise.
    pub fn combine(&self, a: f64, other: &ObjectField, b: f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self::from_parts(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        )
    }

    pub fn sub(&self, other: &ObjectField) -> Self {
        self.combine(1.0, other, -1.0)
    }

    pub fn add(&self, other: &ObjectField) -> Self {
        self.combine(1.0, other, 1.0)
    }

    pub fn distance(&self, other: &ObjectField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &ObjectField) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| x * y).sum()
    }

    pub fn max_abs_diff(&self, other: &ObjectField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cyclic translation: result(r) = self(r - shift).
    pub fn translated(&self, shift: &[i64]) -> Self {
        let neg: Vec<i64> = shift.iter().map(|s| -s).collect();
        let values = (0..self.len())
            .map(|i| self.values[self.grid.offset(i, &neg)])
            .collect();
        Self::from_parts(self.grid.clone(), values)
    }

    /// Inversion: result(r) = self(-r).
    pub fn inverted(&self) -> Self {
        let values = (0..self.len())
            .map(|i| self.values[self.grid.negate(i)])
            .collect();
        Self::from_parts(self.grid.clone(), values)
    }
}

/// Complex Fourier-domain field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SpectrumField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<Complex64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max |z_q - conj(z_{-q})|.
    pub fn hermitian_residue(&self) -> f64 {
        (0..self.values.len())
            .map(|i| (self.values[i] - self.values[self.grid.negate(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn magnitudes(&self) -> ModulusData {
        ModulusData {
            grid: self.grid.clone(),
            magnitudes: self.values.iter().map(|z| z.norm()).collect(),
        }
    }
}

/// Fourier magnitudes |rho~_q|: nonnegative and Hermitian symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulusData {
    grid: Grid,
    magnitudes: Vec<f64>,
}

impl ModulusData {
    pub fn new(grid: Grid, magnitudes: Vec<f64>) -> Result<Self> {
        if magnitudes.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: magnitudes.len(),
            });
        }
        if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidParameter(
                "modulus values must be finite and nonnegative".into(),
            ));
        }
        let scale = magnitudes.iter().copied().fold(0.0, f64::max).max(1.0);
        let residue = (0..magnitudes.len())
            .map(|i| (magnitudes[i] - magnitudes[grid.negate(i)]).abs())
            .fold(0.0, f64::max);
        let tolerance = 1e-9 * scale;
        if residue > tolerance {
            return Err(Error::NonHermitian { residue, tolerance });
        }
        Ok(Self { grid, magnitudes })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Sum of squared magnitudes; equals the squared norm of any consistent object.
    pub fn total_intensity(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Grid::new(&[3, 4, 5]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(&g.coords(i)), i);
        }
        assert_eq!(g.strides(), vec![20, 5, 1]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(&[]).is_err());
        assert!(Grid::new(&[2, 2, 2, 2]).is_err());
        assert!(Grid::new(&[4, 0]).is_err());
    }

    #[test]
    fn offset_wraps() {
        let g = Grid::square(4).unwrap();
        let i = g.index(&[0, 3]);
        assert_eq!(g.coords(g.offset(i, &[-1, 2])), vec![3, 1]);
        assert_eq!(g.negate(g.index(&[1, 0])), g.index(&[3, 0]));
        assert_eq!(g.signed_coords(g.index(&[3, 2])), vec![-1, 2]);
    }

    #[test]
    fn norm_and_normalize() {
        let g = Grid::line(4).unwrap();
        let f = ObjectField::constant(g.clone(), 0.5);
        assert!((f.norm() - 1.0).abs() < 1e-15);
        let twice = f.scaled(2.0);
        assert!((twice.norm() - 2.0 * f.norm()).abs() < 1e-15);
        let n = ObjectField::new(g.clone(), vec![3.0, 0.0, 4.0, 0.0])
            .unwrap()
            .normalize()
            .unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-12);
        assert!(matches!(
            ObjectField::zeros(g).normalize(),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn norm_matches_direct_sum() {
        let vals = [0.3, -1.2, 2.5, 0.0, 0.7, -0.4, 1.1, 0.9];
        let f = ObjectField::new(Grid::line(8).unwrap(), vals.to_vec()).unwrap();
        let mut acc = 0.0;
        for v in vals {
            acc += v * v;
        }
        assert!((f.norm() - acc.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        let g = Grid::line(2).unwrap();
        assert!(ObjectField::new(g.clone(), vec![1.0]).is_err());
        assert!(ObjectField::new(g, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn modulus_requires_hermitian_symmetry() {
        let g = Grid::line(4).unwrap();
        assert!(ModulusData::new(g.clone(), vec![1.0, 2.0, 3.0, 2.0]).is_ok());
        assert!(ModulusData::new(g.clone(), vec![1.0, 2.0, 3.0, 1.0]).is_err());
        assert!(ModulusData::new(g, vec![1.0, -2.0, 3.0, -2.0]).is_err());
    }

    #[test]
    fn translation_and_inversion() {
        let g = Grid::line(4).unwrap();
        let f = ObjectField::new(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(f.translated(&[1]).values(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.inverted().values(), &[1.0, 4.0, 3.0, 2.0]);
    }
}
