//! Elementary distance-minimizing projections: Fourier modulus, support,
//! positivity, and histogram.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{forward_values, inverse_values, IMAG_TOLERANCE};
use crate::grid::{Grid, ModulusData, ObjectField};

/// A map onto a constraint set, applied to points of the object space.
pub trait Projection: Send + Sync {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField>;

    fn name(&self) -> &str;
}

impl<P: Projection + ?Sized> Projection for Box<P> {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        (**self).project(obj)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<P: Projection + ?Sized> Projection for &P {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        (**self).project(obj)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Pixel membership set S.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportMask {
    grid: Grid,
    members: Vec<bool>,
    count: usize,
}

impl SupportMask {
    pub fn new(grid: Grid, members: Vec<bool>) -> Result<Self> {
        if members.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: members.len(),
            });
        }
        let count = members.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::InvalidParameter("support mask is empty".into()));
        }
        Ok(Self {
            grid,
            members,
            count,
        })
    }

    pub fn from_indices(grid: Grid, indices: &[usize]) -> Result<Self> {
        let mut members = vec![false; grid.len()];
        for &i in indices {
            *members.get_mut(i).ok_or_else(|| {
                Error::InvalidParameter(format!("support index {i} outside grid"))
            })? = true;
        }
        Self::new(grid, members)
    }

    pub fn full(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            members: vec![true; n],
            count: n,
        }
    }

    /// Nonzero pixels of a field are members.
    pub fn from_field(field: &ObjectField) -> Result<Self> {
        Self::new(
            field.grid().clone(),
            field.values().iter().map(|&v| v != 0.0).collect(),
        )
    }

    /// Centered ball of the given diameter (a disk in 2-d).
    pub fn ball(grid: Grid, diameter: f64) -> Result<Self> {
        let r2 = (diameter / 2.0).powi(2);
        let members = (0..grid.len())
            .map(|i| {
                grid.coords(i)
                    .iter()
                    .zip(grid.extents())
                    .map(|(&c, &n)| {
                        let x = c as f64 + 0.5 - n as f64 / 2.0;
                        x * x
                    })
                    .sum::<f64>()
                    <= r2
            })
            .collect();
        Self::new(grid, members)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members[index]
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Sorted multiset of target pixel values.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    values: Vec<f64>,
}

impl Histogram {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("histogram values must be finite".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    /// Sorted pixel values of an object.
    pub fn of(obj: &ObjectField) -> Self {
        let mut values = obj.values().to_vec();
        values.sort_by(f64::total_cmp);
        Self { values }
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

/// Replaces each Fourier coefficient by the nearest point on the circle of radius m_q.
///
/// Zero coefficients take phase 0.
pub fn project_modulus(obj: &ObjectField, m: &ModulusData) -> Result<ObjectField> {
    obj.grid().check_same(m.grid())?;
    let grid = obj.grid();
    let mut data = forward_values(grid, obj.values());
    for (z, &mag) in data.iter_mut().zip(m.magnitudes()) {
        let r = z.norm();
        *z = if r > 0.0 {
            *z * (mag / r)
        } else {
            Complex64::new(mag, 0.0)
        };
    }
    let (values, imag) = inverse_values(grid, data);
    debug_assert!(
        imag <= IMAG_TOLERANCE * m.total_intensity().sqrt().max(1e-300),
        "modulus projection left imaginary residue {imag:e}"
    );
    Ok(ObjectField::from_parts(grid.clone(), values))
}

/// Zeroes every pixel outside S.
pub fn project_support(obj: &ObjectField, mask: &SupportMask) -> Result<ObjectField> {
    obj.grid().check_same(mask.grid())?;
    let values = obj
        .values()
        .iter()
        .zip(mask.members())
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    Ok(ObjectField::from_parts(obj.grid().clone(), values))
}

pub fn project_positive(obj: &ObjectField) -> ObjectField {
    obj.map(|v| v.max(0.0))
}

/// Support and positivity combined; the two projections commute.
pub fn project_support_positive(obj: &ObjectField, mask: &SupportMask) -> Result<ObjectField> {
    obj.grid().check_same(mask.grid())?;
    let values = obj
        .values()
        .iter()
        .zip(mask.members())
        .map(|(&v, &m)| if m { v.max(0.0) } else { 0.0 })
        .collect();
    Ok(ObjectField::from_parts(obj.grid().clone(), values))
}

/// Pixel ordering by ascending value, ties broken by pixel index.
pub(crate) fn rank_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// The pixel with the n-th smallest value receives the n-th smallest histogram value.
pub fn project_histogram(obj: &ObjectField, hist: &Histogram) -> Result<ObjectField> {
    if hist.len() != obj.len() {
        return Err(Error::SizeMismatch {
            expected: obj.len(),
            got: hist.len(),
        });
    }
    let mut values = vec![0.0; obj.len()];
    for (&pixel, &h) in rank_order(obj.values()).iter().zip(hist.values()) {
        values[pixel] = h;
    }
    Ok(ObjectField::from_parts(obj.grid().clone(), values))
}

#[derive(Clone, Debug)]
pub struct ModulusProjection(pub ModulusData);

impl Projection for ModulusProjection {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        project_modulus(obj, &self.0)
    }

    fn name(&self) -> &str {
        "modulus"
    }
}

#[derive(Clone, Debug)]
pub struct SupportProjection(pub SupportMask);

impl Projection for SupportProjection {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        project_support(obj, &self.0)
    }

    fn name(&self) -> &str {
        "support"
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PositivityProjection;

impl Projection for PositivityProjection {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        Ok(project_positive(obj))
    }

    fn name(&self) -> &str {
        "positive"
    }
}

#[derive(Clone, Debug)]
pub struct SupportPositiveProjection(pub SupportMask);

impl Projection for SupportPositiveProjection {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        project_support_positive(obj, &self.0)
    }

    fn name(&self) -> &str {
        "support-positive"
    }
}

#[derive(Clone, Debug)]
pub struct HistogramProjection(pub Histogram);

impl Projection for HistogramProjection {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        project_histogram(obj, &self.0)
    }

    fn name(&self) -> &str {
        "histogram"
    }
}

/// Rescales the output of another projection to a fixed norm.
#[derive(Clone, Debug)]
pub struct Renormalized<P> {
    pub inner: P,
    pub norm: f64,
}

impl<P: Projection> Projection for Renormalized<P> {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        let p = self.inner.project(obj)?;
        if p.norm() == 0.0 {
            return Ok(p);
        }
        p.normalize_to(self.norm)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
