//! Synthetic test objects and the data derived from them.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atoms::{AtomPlacement, AtomicityConfig, AtomicityProjection};
use crate::error::{Error, Result};
use crate::fourier::{fft_forward, fft_inverse};
use crate::grid::{Grid, ModulusData, ObjectField, SpectrumField};
use crate::projections::{Histogram, SupportMask};

fn uniform(grid: &Grid, rng: &mut ChaCha8Rng) -> ObjectField {
    ObjectField::new(grid.clone(), (0..grid.len()).map(|_| rng.gen::<f64>()).collect())
        .expect("finite values")
}

/// Independent uniform values in [0, 1), normalized to unit norm.
pub fn random_object(grid: &Grid, seed: u64) -> ObjectField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Ok(f) = uniform(grid, &mut rng).normalize() {
            return f;
        }
    }
}

/// Uniform values on a centered disk (ball) of the given diameter, zero outside,
/// unit norm. Returns the object and its support.
pub fn random_disk(grid: &Grid, diameter: f64, seed: u64) -> Result<(ObjectField, SupportMask)> {
    let mask = SupportMask::ball(grid.clone(), diameter)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = mask
        .members()
        .iter()
        .map(|&m| if m { rng.gen::<f64>() } else { 0.0 })
        .collect();
    Ok((ObjectField::new(grid.clone(), values)?.normalize()?, mask))
}

/// Clustering length `xi` in pixels; `xi = 0` gives a white spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub xi: f64,
    pub seed: u64,
}

impl ClusterSpec {
    pub fn new(xi: f64, seed: u64) -> Result<Self> {
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::InvalidParameter(format!("xi = {xi}")));
        }
        Ok(Self { xi, seed })
    }

    pub fn white(seed: u64) -> Self {
        Self { xi: 0.0, seed }
    }

    /// `q0 = 2 pi / xi`; `None` for the white spectrum.
    pub fn q0(&self) -> Option<f64> {
        (self.xi > 0.0).then(|| 2.0 * PI / self.xi)
    }

    /// Power `q0^2 / (|q|^2 + q0^2)` at squared wavevector `q2`.
    pub fn power(&self, q2: f64) -> f64 {
        match self.q0() {
            Some(q0) => q0 * q0 / (q2 + q0 * q0),
            None => 1.0,
        }
    }
}

/// Real field with power spectrum `q0^2 / (|q|^2 + q0^2)` and uniformly random
/// phases, unit norm.
///
/// Phases are paired under `q -> -q`; self-conjugate coefficients get phase zero.
pub fn clustered_random(grid: &Grid, spec: &ClusterSpec) -> Result<ObjectField> {
    let spec = ClusterSpec::new(spec.xi, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    for q in 0..grid.len() {
        let partner = grid.negate(q);
        if partner < q {
            continue;
        }
        let amp = spec.power(grid.wavevector_sq(q)).sqrt();
        if partner == q {
            values[q] = Complex64::new(amp, 0.0);
        } else {
            let z = Complex64::from_polar(amp, rng.gen_range(0.0..2.0 * PI));
            values[q] = z;
            values[partner] = z.conj();
        }
    }
    fft_inverse(&SpectrumField::new(grid.clone(), values)?)?.normalize()
}

/// Atomicity projection of a [`clustered_random`] field, with the atom placements.
pub fn make_atomic_object(
    grid: &Grid,
    config: &AtomicityConfig,
    spec: &ClusterSpec,
) -> Result<(ObjectField, Vec<AtomPlacement>)> {
    let raw = clustered_random(grid, spec)?;
    AtomicityProjection::new(grid, config.clone())?.project_with_placements(&raw)
}

pub fn histogram_of(obj: &ObjectField) -> Histogram {
    Histogram::of(obj)
}

pub fn modulus_of(obj: &ObjectField) -> ModulusData {
    fft_forward(obj).magnitudes()
}

/// Pointwise average of the two objects' Fourier magnitudes, with their shared
/// histogram. Distinct objects usually give data that no object reproduces.
pub fn fabricate_unsolvable(a: &ObjectField, b: &ObjectField) -> Result<(ModulusData, Histogram)> {
    a.grid().check_same(b.grid())?;
    let (ha, hb) = (Histogram::of(a), Histogram::of(b));
    let same = ha
        .values()
        .iter()
        .zip(hb.values())
        .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    if !same {
        return Err(Error::HistogramMismatch);
    }
    let (ma, mb) = (modulus_of(a), modulus_of(b));
    let avg = ma
        .magnitudes()
        .iter()
        .zip(mb.magnitudes())
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    Ok((ModulusData::new(a.grid().clone(), avg)?, ha))
}

/// Length-`n` sequence with `ones` entries equal to one at random positions, unit norm.
pub fn binary_sequence(n: usize, ones: usize, seed: u64) -> Result<ObjectField> {
    if ones == 0 || ones > n {
        return Err(Error::InvalidParameter(format!("{ones} ones in {n} entries")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut values = vec![0.0; n];
    for &i in &idx[..ones] {
        values[i] = 1.0;
    }
    ObjectField::new(Grid::line(n)?, values)?.normalize()
}
