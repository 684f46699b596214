//! Unitary discrete Fourier transform on periodic grids, and registration.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Grid, ObjectField, SpectrumField};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Largest tolerated imaginary residue of an inverse transform, relative to the norm.
pub const IMAG_TOLERANCE: f64 = 1e-10;

/// In-place unitary transform of row-major data on `grid`.
pub(crate) fn transform(grid: &Grid, data: &mut [Complex64], direction: FftDirection) {
    debug_assert_eq!(data.len(), grid.len());
    let extents = grid.extents();
    let strides = grid.strides();
    let total = data.len();
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let mut lines: Vec<Complex64> = Vec::new();
        for axis in 0..extents.len() {
            let n = extents[axis];
            if n == 1 {
                continue;
            }
            let fft = planner.plan_fft(n, direction);
            let stride = strides[axis];
            if stride == 1 {
                fft.process(data);
                continue;
            }
            // Gather every line along `axis` into contiguous storage.
            lines.resize(total, Complex64::default());
            let block = n * stride;
            let mut k = 0;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for j in 0..n {
                        lines[k] = data[base + j * stride];
                        k += 1;
                    }
                }
            }
            fft.process(&mut lines);
            let mut k = 0;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for j in 0..n {
                        data[base + j * stride] = lines[k];
                        k += 1;
                    }
                }
            }
        }
    });
    let scale = 1.0 / (total as f64).sqrt();
    for z in data.iter_mut() {
        *z *= scale;
    }
}

pub(crate) fn forward_values(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(grid, &mut data, FftDirection::Forward);
    data
}

/// Inverse transform returning the real part and the norm of the discarded imaginary part.
pub(crate) fn inverse_values(grid: &Grid, mut data: Vec<Complex64>) -> (Vec<f64>, f64) {
    transform(grid, &mut data, FftDirection::Inverse);
    let imag = data.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    (data.into_iter().map(|z| z.re).collect(), imag)
}

/// Unitary forward transform; norm preserving.
pub fn fft_forward(obj: &ObjectField) -> SpectrumField {
    SpectrumField::from_parts(obj.grid().clone(), forward_values(obj.grid(), obj.values()))
}

/// Unitary inverse transform of a Hermitian spectrum to a real field.
pub fn fft_inverse(spec: &SpectrumField) -> Result<ObjectField> {
    let norm = spec.norm();
    let (values, imag) = inverse_values(spec.grid(), spec.values().to_vec());
    let tolerance = IMAG_TOLERANCE * norm;
    if imag > tolerance {
        return Err(Error::NonHermitian {
            residue: imag,
            tolerance,
        });
    }
    Ok(ObjectField::from_parts(spec.grid().clone(), values))
}

/// Periodic convolution with a kernel given by its (non-unitary) DFT.
pub(crate) fn convolve_with_spectrum(grid: &Grid, values: &[f64], kernel_dft: &[f64]) -> Vec<f64> {
    let mut data = forward_values(grid, values);
    for (z, &k) in data.iter_mut().zip(kernel_dft) {
        *z *= k;
    }
    inverse_values(grid, data).0
}

/// Non-unitary DFT of a real, inversion-symmetric kernel (its spectrum is real).
pub(crate) fn symmetric_kernel_dft(grid: &Grid, kernel: &[f64]) -> Vec<f64> {
    let scale = (grid.len() as f64).sqrt();
    forward_values(grid, kernel)
        .into_iter()
        .map(|z| z.re * scale)
        .collect()
}

/// Minimum of `|a - T(b)|` over all cyclic translations `T` and over inversion of `b`.
///
/// Candidate registrations come from FFT cross-correlation; the returned distance is
/// evaluated directly at the best candidate of each parity.
pub fn registered_distance(a: &ObjectField, b: &ObjectField) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    let grid = a.grid();
    let fa = forward_values(grid, a.values());
    let fb = forward_values(grid, b.values());
    let scale = (grid.len() as f64).sqrt();

    let best_shift = |inverted: bool| -> usize {
        let prod: Vec<Complex64> = fa
            .iter()
            .zip(&fb)
            .map(|(x, y)| if inverted { x * y } else { x * y.conj() })
            .collect();
        let (corr, _) = inverse_values(grid, prod);
        corr.iter()
            .enumerate()
            .max_by(|x, y| (x.1 * scale).total_cmp(&(y.1 * scale)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };

    let direct = |shift: usize, inverted: bool| -> f64 {
        let mut acc = 0.0;
        for r in 0..grid.len() {
            // b(r - shift), or b(shift - r) when inverted
            let src = if inverted {
                grid.index(&add_coords(grid, &grid.coords(shift), &grid.coords(grid.negate(r))))
            } else {
                grid.index(&add_coords(
                    grid,
                    &grid.coords(r),
                    &grid.coords(grid.negate(shift)),
                ))
            };
            let d = a.values()[r] - b.values()[src];
            acc += d * d;
        }
        acc.sqrt()
    };

    let plain = direct(best_shift(false), false);
    let inv = direct(best_shift(true), true);
    Ok(plain.min(inv))
}

/// Cyclic translation by a real-valued shift, through a Fourier phase ramp.
///
/// Coefficients on a Nyquist plane lose their imaginary part, so the result stays real.
pub fn translate_fractional(obj: &ObjectField, shift: &[f64]) -> Result<ObjectField> {
    let grid = obj.grid();
    if shift.len() != grid.dims() {
        return Err(Error::SizeMismatch {
            expected: grid.dims(),
            got: shift.len(),
        });
    }
    let mut data = forward_values(grid, obj.values());
    for (q, z) in data.iter_mut().enumerate() {
        let phase: f64 = grid
            .signed_coords(q)
            .iter()
            .zip(shift)
            .zip(grid.extents())
            .map(|((&k, &s), &n)| -2.0 * std::f64::consts::PI * k as f64 * s / n as f64)
            .sum();
        *z *= Complex64::from_polar(1.0, phase);
    }
    ObjectField::new(grid.clone(), inverse_values(grid, data).0)
}

/// [`registered_distance`] refined over fractional translations of `b` on a grid of
/// `subdivisions` offsets per axis in [-1/2, 1/2).
pub fn registered_distance_subpixel(
    a: &ObjectField,
    b: &ObjectField,
    subdivisions: usize,
) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    let dims = a.grid().dims();
    let steps = subdivisions.max(1);
    let mut best = f64::INFINITY;
    for k in 0..steps.pow(dims as u32) {
        let mut rest = k;
        let shift: Vec<f64> = (0..dims)
            .map(|_| {
                let i = rest % steps;
                rest /= steps;
                i as f64 / steps as f64 - 0.5
            })
            .collect();
        let moved = translate_fractional(b, &shift)?;
        best = best.min(registered_distance(a, &moved)?);
    }
    Ok(best)
}

fn add_coords(grid: &Grid, x: &[usize], y: &[usize]) -> Vec<usize> {
    x.iter()
        .zip(y)
        .zip(grid.extents())
        .map(|((a, b), n)| (a + b) % n)
        .collect()
}
