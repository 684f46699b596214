//! Two affine subspaces in R^n with orthogonal linear parts, used to study the
//! difference map where everything is solvable by hand.
//!
//! R^n = X1 + X2 + Y. Constraint 1 is `{x1 + a2 + b1}`, constraint 2 is
//! `{a1 + x2 + b2}` with `a_i` in `X_i` and `b_i` in `Y`. They intersect only when
//! `b1 = b2`; otherwise the closest pairs are separated by `b1 - b2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, ObjectField};
use crate::projections::Projection;

#[derive(Clone, Debug)]
pub struct AffineModel {
    /// Orthonormal columns spanning X1, X2, Y.
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub a1: DVector<f64>,
    pub a2: DVector<f64>,
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
}

fn project_onto(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    basis * (basis.transpose() * v)
}

impl AffineModel {
    pub fn new(
        x1: DMatrix<f64>,
        x2: DMatrix<f64>,
        y: DMatrix<f64>,
        a1: DVector<f64>,
        a2: DVector<f64>,
        b1: DVector<f64>,
        b2: DVector<f64>,
    ) -> Result<Self> {
        let n = x1.nrows();
        if x2.nrows() != n || y.nrows() != n || x1.ncols() + x2.ncols() + y.ncols() != n {
            return Err(Error::InvalidParameter(
                "subspace dimensions must add up to the ambient dimension".into(),
            ));
        }
        let mut all = DMatrix::zeros(n, n);
        all.columns_mut(0, x1.ncols()).copy_from(&x1);
        all.columns_mut(x1.ncols(), x2.ncols()).copy_from(&x2);
        all.columns_mut(x1.ncols() + x2.ncols(), y.ncols()).copy_from(&y);
        let residue = (all.transpose() * &all - DMatrix::identity(n, n)).abs().max();
        if residue > 1e-10 {
            return Err(Error::NonOrthonormal(residue));
        }
        for (v, basis, label) in [(&a1, &x1, "a1"), (&a2, &x2, "a2"), (&b1, &y, "b1"), (&b2, &y, "b2")] {
            if v.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
            if (project_onto(basis, v) - v).norm() > 1e-10 * (1.0 + v.norm()) {
                return Err(Error::InvalidParameter(format!("{label} leaves its subspace")));
            }
        }
        Ok(Self {
            x1,
            x2,
            y,
            a1,
            a2,
            b1,
            b2,
        })
    }

    /// Random orthonormal decomposition of R^n into pieces of dimension `d1`, `d2`
    /// and `n - d1 - d2`, random offsets, and `b2 = b1 + gap`.
    pub fn random(n: usize, d1: usize, d2: usize, gap: f64, seed: u64) -> Result<Self> {
        if d1 + d2 >= n {
            return Err(Error::InvalidParameter("Y must be at least one-dimensional".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = m.qr().q();
        let x1 = q.columns(0, d1).into_owned();
        let x2 = q.columns(d1, d2).into_owned();
        let y = q.columns(d1 + d2, n - d1 - d2).into_owned();
        let mut draw = |basis: &DMatrix<f64>| {
            let c = DVector::from_fn(basis.ncols(), |_, _| rng.gen_range(-1.0..1.0));
            basis * c
        };
        let a1 = draw(&x1);
        let a2 = draw(&x2);
        let b1 = draw(&y);
        let b2 = &b1 + y.column(0) * gap;
        Self::new(x1, x2, y, a1, a2, b1, b2)
    }

    pub fn dim(&self) -> usize {
        self.x1.nrows()
    }

    pub fn grid(&self) -> Grid {
        Grid::line(self.dim()).expect("ambient dimension is positive")
    }

    /// `pi1(v) = x1(v) + a2 + b1`.
    pub fn project1(&self, v: &DVector<f64>) -> DVector<f64> {
        project_onto(&self.x1, v) + &self.a2 + &self.b1
    }

    /// `pi2(v) = a1 + x2(v) + b2`.
    pub fn project2(&self, v: &DVector<f64>) -> DVector<f64> {
        project_onto(&self.x2, v) + &self.a1 + &self.b2
    }

    /// Components of `v` in X1, X2, Y.
    pub fn decompose(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        (
            project_onto(&self.x1, v),
            project_onto(&self.x2, v),
            project_onto(&self.y, v),
        )
    }

    pub fn to_field(&self, v: &DVector<f64>) -> Result<ObjectField> {
        ObjectField::new(self.grid(), v.iter().copied().collect())
    }

    pub fn from_field(&self, f: &ObjectField) -> Result<DVector<f64>> {
        if f.len() != self.dim() {
            return Err(Error::SizeMismatch {
                expected: self.dim(),
                got: f.len(),
            });
        }
        Ok(DVector::from_column_slice(f.values()))
    }

    pub fn constraint(&self, which: Side) -> AffineProjection<'_> {
        AffineProjection { model: self, which }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// One of the model's constraint sets as a [`Projection`] on 1-d fields.
#[derive(Clone, Copy, Debug)]
pub struct AffineProjection<'a> {
    model: &'a AffineModel,
    which: Side,
}

impl Projection for AffineProjection<'_> {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        let v = self.model.from_field(obj)?;
        let p = match self.which {
            Side::First => self.model.project1(&v),
            Side::Second => self.model.project2(&v),
        };
        self.model.to_field(&p)
    }

    fn name(&self) -> &str {
        match self.which {
            Side::First => "affine-1",
            Side::Second => "affine-2",
        }
    }
}
