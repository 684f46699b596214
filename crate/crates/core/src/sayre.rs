//! Sayre's equation `rho = g * (rho x rho)` as an objective, a gradient flow, and an
//! approximate atomicity projection.
//!
//! Convolutions are periodic and evaluated by FFT. The Gaussian kernel is
//! symmetric under `r -> -r`, so its reflection equals itself.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{convolve_with_spectrum, forward_values, inverse_values, symmetric_kernel_dft};
use crate::grid::{Grid, ModulusData, ObjectField};
use crate::projections::{project_modulus, Projection};

/// Point-spread kernel `g_r = (8/(pi sigma))^(d/4) exp(-2|r|^2/sigma)` on the full grid,
/// with minimum-image distances.
#[derive(Clone, Debug)]
pub struct SayreKernel {
    grid: Grid,
    sigma: f64,
    values: Vec<f64>,
    dft: Vec<f64>,
}

impl SayreKernel {
    pub fn new(grid: &Grid, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel width {sigma}")));
        }
        let amp = (8.0 / (PI * sigma)).powf(grid.dims() as f64 / 4.0);
        let values: Vec<f64> = (0..grid.len())
            .map(|i| amp * (-2.0 * grid.min_image_sq(i) / sigma).exp())
            .collect();
        let dft = symmetric_kernel_dft(grid, &values);
        Ok(Self {
            grid: grid.clone(),
            sigma,
            values,
            dft,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kernel values g_r in grid order (origin at index 0).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `g * x`; equal to `g-bar * x` for this kernel.
    pub fn convolve(&self, x: &[f64]) -> Vec<f64> {
        convolve_with_spectrum(&self.grid, x, &self.dft)
    }
}

/// Continuum single-atom solution `(2/(pi sigma))^(d/4) exp(-|r - r0|^2/sigma)`.
pub fn continuum_atom(grid: &Grid, sigma: f64, center: &[f64]) -> ObjectField {
    let amp = (2.0 / (PI * sigma)).powf(grid.dims() as f64 / 4.0);
    let values = (0..grid.len())
        .map(|i| {
            let r2: f64 = grid
                .coords(i)
                .iter()
                .zip(center)
                .zip(grid.extents())
                .map(|((&c, &r0), &n)| {
                    let n = n as f64;
                    let mut dx = (c as f64 - r0).rem_euclid(n);
                    if dx > n / 2.0 {
                        dx -= n;
                    }
                    dx * dx
                })
                .sum();
            amp * (-r2 / sigma).exp()
        })
        .collect();
    ObjectField::from_parts(grid.clone(), values)
}

fn squared(obj: &ObjectField) -> Vec<f64> {
    obj.values().iter().map(|v| v * v).collect()
}

/// `g * (rho x rho)`.
pub fn sayre_rhs(obj: &ObjectField, kernel: &SayreKernel) -> Result<ObjectField> {
    obj.grid().check_same(kernel.grid())?;
    Ok(ObjectField::from_parts(
        obj.grid().clone(),
        kernel.convolve(&squared(obj)),
    ))
}

fn residual(obj: &ObjectField, kernel: &SayreKernel) -> Result<ObjectField> {
    Ok(obj.sub(&sayre_rhs(obj, kernel)?))
}

/// `V = |rho - g * (rho x rho)|^2 / 2`.
pub fn sayre_objective(obj: &ObjectField, kernel: &SayreKernel) -> Result<f64> {
    Ok(0.5 * residual(obj, kernel)?.norm_sq())
}

/// Gradient of the Sayre objective,
/// `rho - g*(rho^2) - 2 (g-bar*rho) rho + 2 (g-bar*g*(rho^2)) rho`,
/// evaluated in the factored form `r - 2 rho (g-bar * r)` with `r = rho - g*(rho^2)`.
pub fn sayre_gradient(obj: &ObjectField, kernel: &SayreKernel) -> Result<ObjectField> {
    let r = residual(obj, kernel)?;
    let back = kernel.convolve(r.values());
    let values = r
        .values()
        .iter()
        .zip(obj.values())
        .zip(&back)
        .map(|((&ri, &x), &b)| ri - 2.0 * x * b)
        .collect();
    Ok(ObjectField::from_parts(obj.grid().clone(), values))
}

/// `c = 2 (4/3)^(d/2)`.
pub fn sayre_constant(dims: usize) -> f64 {
    2.0 * (4.0f64 / 3.0).powf(dims as f64 / 2.0)
}

#[derive(Clone, Debug)]
pub struct SayreConfig {
    pub kernel: SayreKernel,
    /// Gradient step.
    pub alpha: f64,
    /// Number of normalized gradient steps per projection.
    pub steps: usize,
    /// Atom count M; the normalization sphere is `|rho|^2 = M`.
    pub atoms: usize,
}

impl SayreConfig {
    pub const DEFAULT_ALPHA: f64 = 0.37;
    pub const DEFAULT_STEPS: usize = 3;

    pub fn new(kernel: SayreKernel, alpha: f64, steps: usize, atoms: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("Sayre step {alpha}")));
        }
        if atoms == 0 {
            return Err(Error::InvalidParameter("atom count must be positive".into()));
        }
        Ok(Self {
            kernel,
            alpha,
            steps,
            atoms,
        })
    }

    pub fn with_defaults(kernel: SayreKernel, atoms: usize) -> Result<Self> {
        Self::new(kernel, Self::DEFAULT_ALPHA, Self::DEFAULT_STEPS, atoms)
    }

    pub fn constant(&self) -> f64 {
        sayre_constant(self.kernel.grid().dims())
    }

    fn sphere_norm(&self) -> f64 {
        (self.atoms as f64).sqrt()
    }
}

/// One gradient step followed by rescaling to `|rho|^2 = M`.
pub fn s_norm_step(obj: &ObjectField, cfg: &SayreConfig) -> Result<ObjectField> {
    let grad = sayre_gradient(obj, &cfg.kernel)?;
    let stepped = obj.combine(1.0, &grad, -cfg.alpha);
    stepped.normalize_to(cfg.sphere_norm())
}

/// `S_norm` applied `cfg.steps` times.
pub fn project_sayre(obj: &ObjectField, cfg: &SayreConfig) -> Result<ObjectField> {
    let mut x = obj.clone();
    for _ in 0..cfg.steps {
        x = s_norm_step(&x, cfg)?;
    }
    Ok(x)
}

/// `pi_mod o (1 - alpha grad V)`.
pub fn s_mod_step(obj: &ObjectField, m: &ModulusData, cfg: &SayreConfig) -> Result<ObjectField> {
    let grad = sayre_gradient(obj, &cfg.kernel)?;
    project_modulus(&obj.combine(1.0, &grad, -cfg.alpha), m)
}

/// Sayre projection for objects normalized to `object_norm` rather than `sqrt(M)`.
///
/// The input is first put on the normalization sphere, so that atom amplitudes start
/// near one and inside the basin of the `S_norm` flow.
#[derive(Clone, Debug)]
pub struct SayreProjection {
    pub config: SayreConfig,
    pub object_norm: f64,
}

impl Projection for SayreProjection {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        let start = obj.normalize_to(self.config.sphere_norm())?;
        let out = project_sayre(&start, &self.config)?;
        Ok(out.scaled(self.object_norm / self.config.sphere_norm()))
    }

    fn name(&self) -> &str {
        "sayre"
    }
}

/// Phases of `g~ x (rho~ * rho~)` with the measured moduli.
///
/// Works in the object domain: `g * (rho x rho)` supplies the new phases. A
/// vanishing coefficient keeps its previous phase.
pub fn tangent_formula_step(
    obj: &ObjectField,
    m: &ModulusData,
    kernel: &SayreKernel,
) -> Result<ObjectField> {
    obj.grid().check_same(m.grid())?;
    let grid = obj.grid();
    let current = forward_values(grid, obj.values());
    let target = forward_values(grid, &kernel.convolve(&squared(obj)));
    let floor = 1e-13 * target.iter().map(|u| u.norm()).fold(0.0, f64::max);
    let data: Vec<Complex64> = current
        .iter()
        .zip(&target)
        .zip(m.magnitudes())
        .map(|((&z, &u), &mag)| {
            if u.norm() > floor {
                u * (mag / u.norm())
            } else if z.norm() > 0.0 {
                z * (mag / z.norm())
            } else {
                Complex64::new(mag, 0.0)
            }
        })
        .collect();
    Ok(ObjectField::from_parts(grid.clone(), inverse_values(grid, data).0))
}

/// Tangent formula as a map of Fourier phases (radians, one per coefficient).
///
/// The phases must be odd under `q -> -q` for the object to be real.
pub fn tangent_formula_phases(
    phases: &[f64],
    m: &ModulusData,
    kernel: &SayreKernel,
) -> Result<Vec<f64>> {
    let grid = m.grid();
    if phases.len() != grid.len() {
        return Err(Error::SizeMismatch {
            expected: grid.len(),
            got: phases.len(),
        });
    }
    let spec: Vec<Complex64> = phases
        .iter()
        .zip(m.magnitudes())
        .map(|(&p, &mag)| Complex64::from_polar(mag, p))
        .collect();
    let (values, imag) = inverse_values(grid, spec);
    if imag > 1e-10 * m.total_intensity().sqrt().max(1e-300) {
        return Err(Error::NonHermitian {
            residue: imag,
            tolerance: 1e-10,
        });
    }
    let obj = ObjectField::from_parts(grid.clone(), values);
    let next = tangent_formula_step(&obj, m, kernel)?;
    Ok(forward_values(grid, next.values())
        .iter()
        .zip(phases)
        .map(|(z, &old)| if z.norm() > 0.0 { z.arg() } else { old })
        .collect())
}

/// Scalar normalization map `lambda - alpha [lambda - lambda^2 + c (lambda^3 - lambda^2)]`
/// for a single atom `lambda rho1`.
pub fn f_alpha(lambda: f64, alpha: f64, c: f64) -> f64 {
    lambda - alpha * (lambda - lambda * lambda + c * (lambda.powi(3) - lambda * lambda))
}

pub fn f_alpha_derivative(lambda: f64, alpha: f64, c: f64) -> f64 {
    1.0 - alpha * (1.0 - 2.0 * lambda + c * (3.0 * lambda * lambda - 2.0 * lambda))
}

/// Finite fixed points: non-atom 0, the repulsive separator 1/c, and the atom 1.
pub fn f_alpha_fixed_points(c: f64) -> (f64, f64, f64) {
    (0.0, 1.0 / c, 1.0)
}

/// Largest starting normalization that stays in the atom's basin:
/// the largest root of `1 - alpha (c lambda^2 - lambda) = 0`.
pub fn lambda0_bound(alpha: f64, c: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * c / alpha).sqrt()) / (2.0 * c)
}

/// Largest step for which starting normalizations up to `lambda0` avoid the runaway.
pub fn alpha_max(lambda0: f64, c: f64) -> f64 {
    1.0 / (c * lambda0 * lambda0 - lambda0)
}

/// `k alpha (1 - 1/c)`, to be compared with `ln 2`.
pub fn separator_growth(steps: usize, alpha: f64, c: f64) -> f64 {
    steps as f64 * alpha * (1.0 - 1.0 / c)
}
