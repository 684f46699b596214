//! The difference map, its relatives (Fienup input-output maps, Gerchberg-Saxton),
//! and the iteration driver.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::atoms::AtomicityProjection;
use crate::error::{Error, Result};
use crate::grid::{ModulusData, ObjectField};
use crate::projections::{
    project_modulus, HistogramProjection, ModulusProjection, Projection, Renormalized,
    SupportMask, SupportPositiveProjection, SupportProjection,
};
use crate::sayre::SayreProjection;
use crate::synth::random_object;

/// `D = 1 + beta (pi1 o f2 - pi2 o f1)` with `f_i = (1 + gamma_i) pi_i - gamma_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceMap {
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl DifferenceMap {
    /// The one-step-convergent choice `gamma1 = -1/beta`, `gamma2 = 1/beta`.
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_gammas(beta, -1.0 / beta, 1.0 / beta)
    }

    pub fn with_gammas(beta: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {beta}")));
        }
        if !gamma1.is_finite() || !gamma2.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        Ok(Self {
            beta,
            gamma1,
            gamma2,
        })
    }

    /// `f_i(x)` given `pi_i(x)`; `None` stands for an unevaluated projection when `1 + gamma = 0`.
    fn estimate(gamma: f64, proj: Option<&ObjectField>, x: &ObjectField) -> ObjectField {
        match proj {
            Some(p) => p.combine(1.0 + gamma, x, -gamma),
            None => x.clone(),
        }
    }

    /// `(pi1 o f2)(x)` and `(pi2 o f1)(x)`.
    ///
    /// `pi_i(x)` is skipped whenever `1 + gamma_i = 0`, which leaves two projections
    /// per step at `beta = +-1`.
    pub fn estimates(
        &self,
        pi1: &dyn Projection,
        pi2: &dyn Projection,
        x: &ObjectField,
    ) -> Result<(ObjectField, ObjectField)> {
        let p2 = if 1.0 + self.gamma2 != 0.0 {
            Some(pi2.project(x)?)
        } else {
            None
        };
        let p1 = if 1.0 + self.gamma1 != 0.0 {
            Some(pi1.project(x)?)
        } else {
            None
        };
        let f2 = Self::estimate(self.gamma2, p2.as_ref(), x);
        let f1 = Self::estimate(self.gamma1, p1.as_ref(), x);
        Ok((pi1.project(&f2)?, pi2.project(&f1)?))
    }

    /// One iteration; returns the new iterate and the error `e = |Delta(x)|`.
    pub fn step(
        &self,
        pi1: &dyn Projection,
        pi2: &dyn Projection,
        x: &ObjectField,
    ) -> Result<(ObjectField, f64)> {
        let (a, b) = self.estimates(pi1, pi2, x)?;
        let delta = a.sub(&b);
        let e = delta.norm();
        Ok((x.combine(1.0, &delta, self.beta), e))
    }

    /// Solution estimate from a fixed point: `(pi2 o f1)(x)`, or `(pi1 o f2)(x)` for
    /// `beta = -1` where it reduces to `pi1(x)`.
    pub fn extract(
        &self,
        pi1: &dyn Projection,
        pi2: &dyn Projection,
        x: &ObjectField,
    ) -> Result<ObjectField> {
        let (a, b) = self.estimates(pi1, pi2, x)?;
        Ok(if self.beta == -1.0 { a } else { b })
    }
}

/// Local convergence factors `(|1 - beta gamma2|, |1 + beta gamma1|)` of the map near a solution.
pub fn contraction_factors(beta: f64, gamma1: f64, gamma2: f64) -> (f64, f64) {
    ((1.0 - beta * gamma2).abs(), (1.0 + beta * gamma1).abs())
}

/// `theta = 2 asin(e/2)` for unit-normalized constraint sets; undefined above `e = 2`.
pub fn error_to_angle(e: f64) -> Option<f64> {
    (0.0..=2.0).contains(&e).then(|| 2.0 * (e / 2.0).asin())
}

pub fn angle_to_error(theta: f64) -> f64 {
    2.0 * (theta / 2.0).sin()
}

/// `rho_n` inside S, `-rho_n` outside.
pub fn flip_sign(obj: &ObjectField, mask: &SupportMask) -> Result<ObjectField> {
    obj.grid().check_same(mask.grid())?;
    let values = obj
        .values()
        .iter()
        .zip(mask.members())
        .map(|(&v, &m)| if m { v } else { -v })
        .collect();
    ObjectField::new(obj.grid().clone(), values)
}

fn piecewise(
    obj: &ObjectField,
    mask: &SupportMask,
    inside: impl Fn(f64, f64) -> f64,
    outside: impl Fn(f64, f64) -> f64,
    m: &ModulusData,
) -> Result<ObjectField> {
    obj.grid().check_same(mask.grid())?;
    let p = project_modulus(obj, m)?;
    let values = obj
        .values()
        .iter()
        .zip(p.values())
        .zip(mask.members())
        .map(|((&x, &pm), &s)| if s { inside(x, pm) } else { outside(x, pm) })
        .collect();
    ObjectField::new(obj.grid().clone(), values)
}

/// Hybrid input-output: `pi_mod(rho)` inside S, `rho - beta_F pi_mod(rho)` outside.
pub fn fienup_hybrid(
    obj: &ObjectField,
    mask: &SupportMask,
    beta_f: f64,
    m: &ModulusData,
) -> Result<ObjectField> {
    piecewise(obj, mask, |_, p| p, |x, p| x - beta_f * p, m)
}

/// Input-output: `rho` inside S, `rho - beta_F pi_mod(rho)` outside.
pub fn fienup_in_out(
    obj: &ObjectField,
    mask: &SupportMask,
    beta_f: f64,
    m: &ModulusData,
) -> Result<ObjectField> {
    piecewise(obj, mask, |x, _| x, |x, p| x - beta_f * p, m)
}

/// Output-output: `pi_mod(rho)` inside S, `(1 - beta_F) pi_mod(rho)` outside.
pub fn fienup_out_out(
    obj: &ObjectField,
    mask: &SupportMask,
    beta_f: f64,
    m: &ModulusData,
) -> Result<ObjectField> {
    piecewise(obj, mask, |_, p| p, |_, p| (1.0 - beta_f) * p, m)
}

/// Closed form of the `beta = -1` support map: `pi_mod(R_S rho)` inside S and
/// `rho + pi_mod(R_S rho)` outside.
pub fn flipped_hybrid(obj: &ObjectField, mask: &SupportMask, m: &ModulusData) -> Result<ObjectField> {
    let p = project_modulus(&flip_sign(obj, mask)?, m)?;
    let values = obj
        .values()
        .iter()
        .zip(p.values())
        .zip(mask.members())
        .map(|((&x, &pm), &s)| if s { pm } else { x + pm })
        .collect();
    ObjectField::new(obj.grid().clone(), values)
}

/// Gerchberg-Saxton: `pi1 o pi2`.
pub fn gerchberg_saxton_step(
    obj: &ObjectField,
    pi1: &dyn Projection,
    pi2: &dyn Projection,
) -> Result<ObjectField> {
    pi1.project(&pi2.project(obj)?)
}

/// The object-domain constraint paired with Fourier modulus projection.
#[derive(Clone, Debug)]
pub enum ObjectConstraint {
    Support(SupportProjection),
    SupportPositive(SupportPositiveProjection),
    /// Support and positivity with the output rescaled to unit norm.
    SupportPositiveNormalized(Renormalized<SupportPositiveProjection>),
    Histogram(HistogramProjection),
    Atomicity(AtomicityProjection),
    Sayre(SayreProjection),
}

impl Projection for ObjectConstraint {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        match self {
            Self::Support(p) => p.project(obj),
            Self::SupportPositive(p) => p.project(obj),
            Self::SupportPositiveNormalized(p) => p.project(obj),
            Self::Histogram(p) => p.project(obj),
            Self::Atomicity(p) => p.project(obj),
            Self::Sayre(p) => p.project(obj),
        }
    }

    fn name(&self) -> &str {
        match self {
            Self::Support(p) => p.name(),
            Self::SupportPositive(p) => p.name(),
            Self::SupportPositiveNormalized(p) => p.name(),
            Self::Histogram(p) => p.name(),
            Self::Atomicity(p) => p.name(),
            Self::Sayre(p) => p.name(),
        }
    }
}

/// `pi1`: an object-domain constraint; `pi2`: Fourier modulus.
#[derive(Clone, Debug)]
pub struct ProjectionPair {
    pub object: ObjectConstraint,
    pub modulus: ModulusProjection,
}

impl ProjectionPair {
    pub fn new(object: ObjectConstraint, modulus: ModulusData) -> Self {
        Self {
            object,
            modulus: ModulusProjection(modulus),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub beta: f64,
    pub max_iterations: usize,
    /// Iteration stops once `e` falls below this.
    pub tolerance: f64,
    /// `e` below this counts as a retrieval success.
    pub success_threshold: f64,
    /// Extra iterations allowed after the first success before stopping anyway.
    pub settle_iterations: Option<usize>,
    /// Keep every k-th iterate.
    pub snapshot_every: Option<usize>,
    /// Seed of the random starting point.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            max_iterations: 10_000,
            tolerance: 1e-8,
            success_threshold: 1e-3,
            settle_iterations: None,
            snapshot_every: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta == 0.0 || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta = {}", self.beta)));
        }
        if !(self.tolerance > 0.0) || !(self.success_threshold > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("iteration budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct IterationTrace {
    /// `e_i` for every completed iteration.
    pub errors: Vec<f64>,
    /// Cumulative wall time after each iteration, milliseconds.
    pub wall_ms: Vec<f64>,
    /// First iteration with `e` below the success threshold.
    pub first_success: Option<usize>,
    /// Iteration at which `e` fell below the stop tolerance.
    pub converged_at: Option<usize>,
    pub snapshots: Vec<(usize, ObjectField)>,
    pub seed: u64,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.errors.len()
    }

    pub fn angles(&self) -> Vec<Option<f64>> {
        self.errors.iter().map(|&e| error_to_angle(e)).collect()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.errors.last().copied()
    }

    /// First iteration whose error is below `threshold`, recomputed from the errors.
    pub fn first_below(&self, threshold: f64) -> Option<usize> {
        self.errors.iter().position(|&e| e < threshold)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: IterationTrace,
    /// Last iterate (the fixed point when converged).
    pub iterate: ObjectField,
    /// Solution estimate extracted from the last iterate.
    pub solution: ObjectField,
    /// Some error fell below the success threshold.
    pub success: bool,
}

/// Iterates the difference map from `start` (or a seeded random unit-norm object).
///
/// Not reaching a solution is an outcome, not an error.
pub fn run(
    pi1: &dyn Projection,
    pi2: &dyn Projection,
    start: Option<ObjectField>,
    grid: &crate::grid::Grid,
    cfg: &RunConfig,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let map = DifferenceMap::new(cfg.beta)?;
    let mut x = match start {
        Some(s) => {
            s.grid().check_same(grid)?;
            s
        }
        None => random_object(grid, cfg.seed),
    };
    let mut trace = IterationTrace {
        seed: cfg.seed,
        ..Default::default()
    };
    let clock = Instant::now();
    for i in 0..cfg.max_iterations {
        if let Some(k) = cfg.snapshot_every {
            if k > 0 && i % k == 0 {
                trace.snapshots.push((i, x.clone()));
            }
        }
        let (next, e) = map.step(pi1, pi2, &x)?;
        trace.errors.push(e);
        trace.wall_ms.push(clock.elapsed().as_secs_f64() * 1e3);
        if i == 0 && e < 0.1 {
            warn!("initial error {e:.3e} is small: the object constraint may be weak");
        }
        x = next;
        if e < cfg.success_threshold && trace.first_success.is_none() {
            trace.first_success = Some(i);
        }
        if e < cfg.tolerance {
            trace.converged_at = Some(i);
            break;
        }
        if let (Some(first), Some(settle)) = (trace.first_success, cfg.settle_iterations) {
            if i >= first + settle {
                break;
            }
        }
    }
    let solution = map.extract(pi1, pi2, &x)?;
    Ok(RunOutcome {
        success: trace.first_success.is_some(),
        trace,
        iterate: x,
        solution,
    })
}

/// [`run`] on an object constraint paired with modulus projection.
pub fn run_pair(pair: &ProjectionPair, start: Option<ObjectField>, cfg: &RunConfig) -> Result<RunOutcome> {
    let grid = pair.modulus.0.grid().clone();
    run(&pair.object, &pair.modulus, start, &grid, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::fft_forward;
    use crate::grid::Grid;
    use crate::projections::Histogram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(grid: &Grid, rng: &mut ChaCha8Rng) -> ObjectField {
        ObjectField::new(
            grid.clone(),
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_zero_beta() {
        assert!(DifferenceMap::new(0.0).is_err());
        assert!(RunConfig {
            beta: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn angle_law_round_trip() {
        assert_eq!(error_to_angle(0.0), Some(0.0));
        assert!((error_to_angle(2.0).unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert!(error_to_angle(2.1).is_none());
        for k in 0..=20 {
            let e = k as f64 * 0.1;
            let back = angle_to_error(error_to_angle(e).unwrap());
            assert!((back - e).abs() < 1e-14);
        }
    }

    #[test]
    fn flip_sign_examples() {
        let g = Grid::line(2).unwrap();
        let x = ObjectField::new(g.clone(), vec![1.0, -2.0]).unwrap();
        let mask = SupportMask::from_indices(g.clone(), &[0]).unwrap();
        assert_eq!(flip_sign(&x, &mask).unwrap().values(), &[1.0, 2.0]);
        let full = SupportMask::full(g);
        assert_eq!(flip_sign(&x, &full).unwrap(), x);
        let twice = flip_sign(&flip_sign(&x, &mask).unwrap(), &mask).unwrap();
        assert_eq!(twice, x);
    }

    #[test]
    fn fienup_special_cases() {
        let g = Grid::square(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = fft_forward(&random(&g, &mut rng)).magnitudes();
        let mask = SupportMask::ball(g.clone(), 5.0).unwrap();
        let x = random(&g, &mut rng);
        assert_eq!(fienup_in_out(&x, &mask, 0.0, &m).unwrap(), x);
        let p = project_modulus(&x, &m).unwrap();
        let oo = fienup_out_out(&x, &mask, 1.0, &m).unwrap();
        for i in 0..g.len() {
            let want = if mask.contains(i) { p.values()[i] } else { 0.0 };
            assert_eq!(oo.values()[i], want);
        }
    }

    #[test]
    fn beta_one_is_hybrid_and_minus_one_is_flipped() {
        let g = Grid::square(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = fft_forward(&random(&g, &mut rng)).magnitudes();
        let mask = SupportMask::ball(g.clone(), 9.0).unwrap();
        let pi1 = SupportProjection(mask.clone());
        let pi2 = ModulusProjection(m.clone());
        for _ in 0..5 {
            let x = random(&g, &mut rng);
            let (d1, _) = DifferenceMap::new(1.0).unwrap().step(&pi1, &pi2, &x).unwrap();
            let h = fienup_hybrid(&x, &mask, 1.0, &m).unwrap();
            assert!(d1.max_abs_diff(&h) <= 1e-12);
            let (dm1, _) = DifferenceMap::new(-1.0).unwrap().step(&pi1, &pi2, &x).unwrap();
            let f = flipped_hybrid(&x, &mask, &m).unwrap();
            assert!(dm1.max_abs_diff(&f) <= 1e-12);
        }
    }

    /// Evaluates all four projections, no shortcuts.
    fn four_projection_step(beta: f64, pi1: &dyn Projection, pi2: &dyn Projection, x: &ObjectField) -> ObjectField {
        let a = pi2.project(x).unwrap().combine(1.0 + 1.0 / beta, x, -1.0 / beta);
        let b = pi1.project(x).unwrap().combine(1.0 - 1.0 / beta, x, 1.0 / beta);
        let delta = pi1.project(&a).unwrap().sub(&pi2.project(&b).unwrap());
        x.combine(1.0, &delta, beta)
    }

    #[test]
    fn shortcut_matches_general_form() {
        let g = Grid::square(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = random(&g, &mut rng);
        let pi1 = HistogramProjection(Histogram::of(&truth));
        let pi2 = ModulusProjection(fft_forward(&truth).magnitudes());
        for beta in [1.0, -1.0, 0.5, -0.7] {
            let x = random(&g, &mut rng);
            let (fast, _) = DifferenceMap::new(beta).unwrap().step(&pi1, &pi2, &x).unwrap();
            let slow = four_projection_step(beta, &pi1, &pi2, &x);
            assert!(fast.max_abs_diff(&slow) <= 1e-12, "beta {beta}");
        }
    }

    #[test]
    fn swapping_projections_negates_beta() {
        let g = Grid::square(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = random(&g, &mut rng);
        let pi1 = HistogramProjection(Histogram::of(&truth));
        let pi2 = ModulusProjection(fft_forward(&truth).magnitudes());
        for beta in [0.3, 1.0, -0.8] {
            let x = random(&g, &mut rng);
            let (a, ea) = DifferenceMap::new(beta).unwrap().step(&pi1, &pi2, &x).unwrap();
            let (b, eb) = DifferenceMap::new(-beta).unwrap().step(&pi2, &pi1, &x).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-12);
            assert!((ea - eb).abs() <= 1e-12);
        }
    }

    #[test]
    fn fixed_point_run_stops_after_one_iteration() {
        let g = Grid::square(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = random(&g, &mut rng).normalize().unwrap();
        let pi1 = HistogramProjection(Histogram::of(&truth));
        let pi2 = ModulusProjection(fft_forward(&truth).magnitudes());
        let cfg = RunConfig::default();
        let out = run(&pi1, &pi2, Some(truth.clone()), &g, &cfg).unwrap();
        assert_eq!(out.trace.iterations(), 1);
        assert!(out.success);
        assert_eq!(out.trace.converged_at, Some(0));
        assert!(out.iterate.max_abs_diff(&truth) < 1e-12);
        assert!(out.solution.max_abs_diff(&truth) < 1e-8);
    }

    #[test]
    fn extraction_rules() {
        let g = Grid::square(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = fft_forward(&random(&g, &mut rng)).magnitudes();
        let mask = SupportMask::ball(g.clone(), 5.0).unwrap();
        let pi1 = SupportProjection(mask.clone());
        let pi2 = ModulusProjection(m.clone());
        let x = random(&g, &mut rng);
        let plus = DifferenceMap::new(1.0).unwrap().extract(&pi1, &pi2, &x).unwrap();
        assert_eq!(plus, project_modulus(&x, &m).unwrap());
        let minus = DifferenceMap::new(-1.0).unwrap().extract(&pi1, &pi2, &x).unwrap();
        assert_eq!(minus, crate::projections::project_support(&x, &mask).unwrap());
    }

    #[test]
    fn contraction_factor_identity_maps() {
        let beta = 1.0;
        let (a, b) = contraction_factors(beta, -1.0, -1.0);
        assert_eq!((a, b), (1.0 + beta, 1.0 - beta));
        let (a, b) = contraction_factors(0.6, -1.0 / 0.6, 1.0 / 0.6);
        assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
    }
}
