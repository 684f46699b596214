//! Finitely sampled Gaussian atoms and the object-domain atomicity projection.
//!
//! An atom of width `sigma` centered at `p0 + t` (grid point `p0`, fractional
//! translation `t` in `[-1/2, 1/2]^d`) is the continuum Gaussian
//! `(2/(pi sigma))^(d/4) exp(-|r - r0|^2 / sigma)` restricted to the pixels
//! `p0 + S` and rescaled to unit sum of squares.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ModulusData, ObjectField};
use crate::projections::Projection;

/// Integer offsets within distance `sqrt(radius_sq)` of the origin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomSupport {
    dims: usize,
    radius_sq: u32,
    offsets: Vec<Vec<i64>>,
}

impl AtomSupport {
    pub fn new(dims: usize, radius_sq: u32) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(Error::InvalidParameter(format!("atom dimension {dims}")));
        }
        let r = (radius_sq as f64).sqrt().floor() as i64;
        let mut offsets = Vec::new();
        let mut cur = vec![-r; dims];
        loop {
            if cur.iter().map(|c| c * c).sum::<i64>() <= radius_sq as i64 {
                offsets.push(cur.clone());
            }
            let mut axis = dims;
            loop {
                if axis == 0 {
                    return Ok(Self {
                        dims,
                        radius_sq,
                        offsets,
                    });
                }
                axis -= 1;
                if cur[axis] < r {
                    cur[axis] += 1;
                    break;
                }
                cur[axis] = -r;
            }
        }
    }

    /// The 3, 3x3 or 3x3x3 block used for atoms in the experiments.
    pub fn block3(dims: usize) -> Result<Self> {
        Self::new(dims, dims as u32)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn radius(&self) -> f64 {
        (self.radius_sq as f64).sqrt()
    }

    pub fn radius_sq(&self) -> u32 {
        self.radius_sq
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Index of the zero offset.
    pub fn origin(&self) -> usize {
        self.offsets
            .iter()
            .position(|s| s.iter().all(|&c| c == 0))
            .expect("support contains the origin")
    }

    /// The difference set S - S, without repeats.
    pub fn difference_set(&self) -> Vec<Vec<i64>> {
        let mut out: Vec<Vec<i64>> = Vec::new();
        for a in &self.offsets {
            for b in &self.offsets {
                let d: Vec<i64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                if !out.contains(&d) {
                    out.push(d);
                }
            }
        }
        out
    }
}

/// Unnormalized continuum Gaussian sampled on the support at fractional translation `t`.
fn raw_gaussian(support: &AtomSupport, sigma: f64, t: &[f64]) -> Vec<f64> {
    let amp = (2.0 / (PI * sigma)).powf(support.dims as f64 / 4.0);
    support
        .offsets
        .iter()
        .map(|s| {
            let r2: f64 = s.iter().zip(t).map(|(&si, ti)| (si as f64 - ti).powi(2)).sum();
            amp * (-r2 / sigma).exp()
        })
        .collect()
}

/// Normalized sampled Gaussian over the support: unit sum of squares.
pub fn sampled_gaussian(support: &AtomSupport, sigma: f64, t: &[f64]) -> Vec<f64> {
    let raw = raw_gaussian(support, sigma, t);
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / norm).collect()
}

/// Squared distance between the sampled Gaussian and its normalized version.
pub fn sampling_error(support: &AtomSupport, sigma: f64, t: &[f64]) -> f64 {
    let raw = raw_gaussian(support, sigma, t);
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm - 1.0).powi(2)
}

/// Midpoint points per axis for averaging over fractional translations.
fn quadrature_points(dims: usize) -> usize {
    if dims <= 2 {
        17
    } else {
        9
    }
}

/// Average of the sampling error over fractional translations in `(-1/2, 1/2)^d`.
pub fn average_sampling_error(support: &AtomSupport, sigma: f64) -> f64 {
    let n = quadrature_points(support.dims);
    let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64 - 0.5).collect();
    let total = n.pow(support.dims as u32);
    let mut t = vec![0.0; support.dims];
    let mut acc = 0.0;
    for k in 0..total {
        let mut rem = k;
        for ti in t.iter_mut() {
            *ti = nodes[rem % n];
            rem /= n;
        }
        acc += sampling_error(support, sigma, &t);
    }
    acc / total as f64
}

pub const SIGMA_BRACKET: (f64, f64) = (0.1, 5.0);

/// Width minimizing the average sampling error, with that error.
pub fn optimal_sigma(support: &AtomSupport) -> Result<(f64, f64)> {
    let f = |s: f64| average_sampling_error(support, s);
    let (lo, hi) = SIGMA_BRACKET;
    let sigma = golden_section(f, lo, hi, 1e-7);
    let edge = 1e-3 * (hi - lo);
    if sigma - lo < edge || hi - sigma < edge {
        return Err(Error::Minimization(format!(
            "minimum of the sampling error is not bracketed by [{lo}, {hi}] (got sigma = {sigma})"
        )));
    }
    Ok((sigma, f(sigma)))
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Reference rows: (d, R^2, pixels, sigma, average error).
pub const TABLE1_REFERENCE: [(usize, u32, usize, f64, f64); 9] = [
    (1, 1, 3, 1.156, 0.000025),
    (1, 4, 5, 1.800, 4e-8),
    (1, 9, 7, 2.445, 6e-11),
    (2, 1, 5, 0.814, 0.0030),
    (2, 2, 9, 1.115, 0.000060),
    (2, 4, 13, 1.238, 0.000021),
    (3, 1, 7, 0.694, 0.011),
    (3, 2, 19, 0.952, 0.00070),
    (3, 3, 27, 1.091, 0.00010),
];

#[derive(Clone, Debug, Serialize)]
pub struct WidthRow {
    pub dims: usize,
    pub radius_sq: u32,
    pub pixels: usize,
    pub sigma: f64,
    pub delta_ave: f64,
    pub reference_sigma: f64,
    pub reference_delta_ave: f64,
}

/// Optimal widths for every tabulated (d, R), next to the reference values.
pub fn width_table() -> Result<Vec<WidthRow>> {
    TABLE1_REFERENCE
        .iter()
        .map(|&(dims, radius_sq, _, ref_sigma, ref_delta)| {
            let support = AtomSupport::new(dims, radius_sq)?;
            let (sigma, delta_ave) = optimal_sigma(&support)?;
            Ok(WidthRow {
                dims,
                radius_sq,
                pixels: support.len(),
                sigma,
                delta_ave,
                reference_sigma: ref_sigma,
                reference_delta_ave: ref_delta,
            })
        })
        .collect()
}

/// Atom width from the mean squared wavevector of the intensity: 1/sigma = <|q|^2> / d.
pub fn estimate_sigma(m: &ModulusData) -> Result<f64> {
    let grid = m.grid();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &mag) in m.magnitudes().iter().enumerate() {
        let w = mag * mag;
        num += grid.wavevector_sq(i) * w;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::ZeroIntensity);
    }
    let inv = num / den / grid.dims() as f64;
    if inv <= 0.0 {
        return Err(Error::InfiniteWidth);
    }
    Ok(1.0 / inv)
}

/// Sampled Gaussian of fixed width on a fixed support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomTemplate {
    support: AtomSupport,
    sigma: f64,
}

impl AtomTemplate {
    pub fn new(support: AtomSupport, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("atom width {sigma}")));
        }
        Ok(Self { support, sigma })
    }

    /// Template on the support with its optimal width.
    pub fn optimal(support: AtomSupport) -> Result<Self> {
        let (sigma, _) = optimal_sigma(&support)?;
        Self::new(support, sigma)
    }

    /// 3^d block atom with the tabulated width for `R^2 = d`.
    pub fn standard(dims: usize) -> Result<Self> {
        let support = AtomSupport::block3(dims)?;
        let sigma = TABLE1_REFERENCE
            .iter()
            .find(|r| r.0 == dims && r.1 == dims as u32)
            .map(|r| r.3)
            .expect("tabulated block support");
        Self::new(support, sigma)
    }

    pub fn support(&self) -> &AtomSupport {
        &self.support
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dims(&self) -> usize {
        self.support.dims
    }

    pub fn values(&self, t: &[f64]) -> Vec<f64> {
        sampled_gaussian(&self.support, self.sigma, t)
    }

    /// Value-weighted mean offset of the template at fractional translation `t`.
    pub fn centroid(&self, t: &[f64]) -> Vec<f64> {
        centroid_of(&self.support, &self.values(t)).unwrap_or_else(|| vec![0.0; self.dims()])
    }

    /// Fractional translation whose template centroid matches `target`.
    ///
    /// Solved by Newton iteration confined to the closed cube `[-1/2, 1/2]^d`; a
    /// centroid that no interior translation reproduces maps to the boundary.
    pub fn translation_for_centroid(&self, target: &[f64]) -> Vec<f64> {
        let d = self.dims();
        let clip = |x: f64| x.clamp(-0.5, 0.5);
        let mut t: Vec<f64> = target.iter().map(|&x| clip(x)).collect();
        let h = 1e-6;
        for _ in 0..60 {
            let c = self.centroid(&t);
            let resid = DVector::from_iterator(d, c.iter().zip(target).map(|(a, b)| a - b));
            if resid.amax() < 1e-15 {
                break;
            }
            let mut jac = DMatrix::zeros(d, d);
            for j in 0..d {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[j] += h;
                tm[j] -= h;
                let (cp, cm) = (self.centroid(&tp), self.centroid(&tm));
                for i in 0..d {
                    jac[(i, j)] = (cp[i] - cm[i]) / (2.0 * h);
                }
            }
            let Some(step) = jac.lu().solve(&resid) else {
                break;
            };
            let mut moved = 0.0f64;
            for j in 0..d {
                let next = clip(t[j] - step[j]);
                moved = moved.max((next - t[j]).abs());
                t[j] = next;
            }
            if moved < 1e-15 {
                break;
            }
        }
        t
    }
}

impl AtomTemplate {
    /// Translation in `[-1/2, 1/2]^d` maximizing the overlap `sum_s v_s Psi_s(t)` with the
    /// values `v` on the support, by damped Newton ascent from `t`.
    ///
    /// Since the template has unit norm this is the translation nearest to `v`.
    pub fn best_overlap(&self, v: &[f64], mut t: Vec<f64>) -> Vec<f64> {
        let d = self.dims();
        let f = |t: &[f64]| -> f64 { self.values(t).iter().zip(v).map(|(a, b)| a * b).sum() };
        let h = 1e-5;
        let mut ft = f(&t);
        for _ in 0..30 {
            let grad = self.overlap_gradient(v, &t);
            let mut hess = DMatrix::zeros(d, d);
            for j in 0..d {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[j] += h;
                tm[j] -= h;
                let col = (self.overlap_gradient(v, &tp) - self.overlap_gradient(v, &tm)) / (2.0 * h);
                hess.set_column(j, &col);
            }
            let hess = (&hess + hess.transpose()) * 0.5;
            // Ascent direction: Newton where the Hessian is negative definite, gradient otherwise.
            let newton = (-&hess).cholesky().map(|c| c.solve(&grad));
            let dir = newton.unwrap_or_else(|| grad.clone());
            let mut scale = 1.0;
            let mut moved = 0.0f64;
            while scale > 1e-9 {
                let cand: Vec<f64> = (0..d).map(|i| (t[i] + scale * dir[i]).clamp(-0.5, 0.5)).collect();
                let fc = f(&cand);
                // Near the optimum f is flat to round-off; a shrinking gradient decides.
                let flat = fc >= ft - 1e-15 * ft.abs()
                    && self.overlap_gradient(v, &cand).norm() < grad.norm();
                if fc > ft || flat {
                    moved = cand.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    t = cand;
                    ft = fc;
                    break;
                }
                scale *= 0.5;
            }
            if moved < 1e-14 {
                break;
            }
        }
        t
    }

    /// Gradient of `sum_s v_s Psi_s(t)` in `t`.
    fn overlap_gradient(&self, v: &[f64], t: &[f64]) -> DVector<f64> {
        let d = self.dims();
        let psi = self.values(t);
        let offsets = self.support.offsets();
        let mut c = vec![0.0; d];
        for (p, s) in psi.iter().zip(offsets) {
            for j in 0..d {
                c[j] += p * p * s[j] as f64;
            }
        }
        let mut g = DVector::zeros(d);
        for ((p, s), vs) in psi.iter().zip(offsets).zip(v) {
            for j in 0..d {
                g[j] += vs * p * (s[j] as f64 - c[j]);
            }
        }
        g * (2.0 / self.sigma)
    }
}

fn centroid_of(support: &AtomSupport, weights: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut c = vec![0.0; support.dims];
    for (s, &w) in support.offsets.iter().zip(weights) {
        for (ci, &si) in c.iter_mut().zip(s) {
            *ci += w * si as f64;
        }
    }
    Some(c.into_iter().map(|x| x / total).collect())
}

/// Which pairs of atom centers are admissible together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OverlapRule {
    /// p_m - p_n not in S - S: atom supports are disjoint.
    #[default]
    Exclusive,
    /// Centers must differ; supports may overlap and the sum is renormalized.
    DistinctCenters,
}

/// An atom's grid center and fractional translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomPlacement {
    pub center: usize,
    pub translation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicityConfig {
    pub count: usize,
    pub template: AtomTemplate,
    pub overlap: OverlapRule,
    /// Amplitude multiplying each unit-normalized atom.
    pub scale: f64,
    /// Polish each centroid translation to the one nearest the object values.
    #[serde(default)]
    pub refine: bool,
}

impl AtomicityConfig {
    /// M atoms scaled so that an object of M disjoint atoms has unit norm.
    pub fn normalized(count: usize, template: AtomTemplate) -> Self {
        Self {
            count,
            template,
            overlap: OverlapRule::Exclusive,
            scale: 1.0 / (count.max(1) as f64).sqrt(),
            refine: true,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("atom count must be positive".into()));
        }
        if grid.dims() != self.template.dims() {
            return Err(Error::InvalidParameter(format!(
                "{}-d atoms on a {}-d grid",
                self.template.dims(),
                grid.dims()
            )));
        }
        if self.count * self.template.support().len() > grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} atoms of {} pixels do not fit on {} pixels",
                self.count,
                self.template.support().len(),
                grid.len()
            )));
        }
        Ok(())
    }
}

/// Flat pixel indices of `p + s` for every pixel `p` and offset `s`.
#[derive(Clone, Debug)]
struct Neighborhoods {
    width: usize,
    table: Vec<u32>,
}

impl Neighborhoods {
    fn new(grid: &Grid, offsets: &[Vec<i64>]) -> Self {
        let width = offsets.len();
        let ext: Vec<i64> = grid.extents().iter().map(|&n| n as i64).collect();
        let mut table = Vec::with_capacity(grid.len() * width);
        for p in 0..grid.len() {
            let c = grid.coords(p);
            for s in offsets {
                let mut idx = 0i64;
                for ((&ci, &si), &n) in c.iter().zip(s).zip(&ext) {
                    idx = idx * n + (ci as i64 + si).rem_euclid(n);
                }
                table.push(idx as u32);
            }
        }
        Self { width, table }
    }

    fn of(&self, p: usize) -> &[u32] {
        &self.table[p * self.width..(p + 1) * self.width]
    }
}

/// Atomicity projection with neighborhood tables precomputed for one grid.
#[derive(Clone, Debug)]
pub struct AtomicityProjection {
    grid: Grid,
    config: AtomicityConfig,
    support: Neighborhoods,
    exclusion: Neighborhoods,
    kernel: Vec<f64>,
}

impl AtomicityProjection {
    pub fn new(grid: &Grid, config: AtomicityConfig) -> Result<Self> {
        config.validate(grid)?;
        let support = Neighborhoods::new(grid, config.template.support().offsets());
        let exclusion = match config.overlap {
            OverlapRule::Exclusive => {
                Neighborhoods::new(grid, &config.template.support().difference_set())
            }
            OverlapRule::DistinctCenters => {
                Neighborhoods::new(grid, &[vec![0; grid.dims()]])
            }
        };
        let kernel = config.template.values(&vec![0.0; grid.dims()]);
        Ok(Self {
            grid: grid.clone(),
            config,
            support,
            exclusion,
            kernel,
        })
    }

    pub fn config(&self) -> &AtomicityConfig {
        &self.config
    }

    /// Correlation of the object with the centered template.
    fn matched_filter(&self, obj: &ObjectField) -> Vec<f64> {
        let v = obj.values();
        (0..self.grid.len())
            .map(|p| {
                self.support
                    .of(p)
                    .iter()
                    .zip(&self.kernel)
                    .map(|(&q, &g)| g * v[q as usize])
                    .sum()
            })
            .collect()
    }

    /// Greedy non-overlapping centers in order of decreasing filter response.
    pub fn find_centers(&self, obj: &ObjectField) -> Result<Vec<usize>> {
        obj.grid().check_same(&self.grid)?;
        let filtered = self.matched_filter(obj);
        let mut order: Vec<usize> = (0..filtered.len()).collect();
        order.sort_unstable_by(|&a, &b| filtered[b].total_cmp(&filtered[a]).then(a.cmp(&b)));
        let centers = self.admissible_centers(&order);
        if centers.len() < self.config.count {
            return Err(Error::InsufficientCenters {
                found: centers.len(),
                wanted: self.config.count,
            });
        }
        Ok(centers)
    }

    /// Walks `order`, keeping each pixel not excluded by a center kept earlier, until
    /// `count` centers are found or the order is exhausted.
    pub fn admissible_centers(&self, order: &[usize]) -> Vec<usize> {
        let mut blocked = vec![false; self.grid.len()];
        let mut centers = Vec::with_capacity(self.config.count);
        for &p in order {
            if centers.len() == self.config.count {
                break;
            }
            if blocked[p] {
                continue;
            }
            centers.push(p);
            for &q in self.exclusion.of(p) {
                blocked[q as usize] = true;
            }
        }
        centers
    }

    /// Fractional translation at a center from the centroid of the positive object values.
    fn translation_at(&self, obj: &ObjectField, center: usize) -> Vec<f64> {
        let weights: Vec<f64> = self
            .support
            .of(center)
            .iter()
            .map(|&q| obj.values()[q as usize].max(0.0))
            .collect();
        let start = match centroid_of(self.config.template.support(), &weights) {
            Some(c) => self.config.template.translation_for_centroid(&c),
            None => vec![0.0; self.grid.dims()],
        };
        if !self.config.refine {
            return start;
        }
        let local: Vec<f64> = self
            .support
            .of(center)
            .iter()
            .map(|&q| obj.values()[q as usize])
            .collect();
        self.config.template.best_overlap(&local, start)
    }

    pub fn synthesize(&self, placements: &[AtomPlacement]) -> ObjectField {
        let mut out = vec![0.0; self.grid.len()];
        let mut covered = vec![false; self.grid.len()];
        let mut overlapped = false;
        for atom in placements {
            let vals = self.config.template.values(&atom.translation);
            for (&q, v) in self.support.of(atom.center).iter().zip(vals) {
                out[q as usize] += self.config.scale * v;
                overlapped |= std::mem::replace(&mut covered[q as usize], true);
            }
        }
        let field = ObjectField::from_parts(self.grid.clone(), out);
        if overlapped && field.norm() > 0.0 {
            let target = self.config.scale * (placements.len() as f64).sqrt();
            return field.normalize_to(target).unwrap_or(field);
        }
        field
    }

    /// Projects, then re-projects the output until its placements stop changing.
    ///
    /// A single greedy pass can move a center by one pixel when neighbouring atoms
    /// pull the filter peak; the repeat makes the result a fixed point.
    pub fn project_with_placements(
        &self,
        obj: &ObjectField,
    ) -> Result<(ObjectField, Vec<AtomPlacement>)> {
        let (mut field, mut placements) = self.single_pass(obj)?;
        for _ in 0..STABILIZE_PASSES {
            let (next, again) = self.single_pass(&field)?;
            if same_placements(&placements, &again) {
                break;
            }
            field = next;
            placements = again;
        }
        Ok((field, placements))
    }

    fn single_pass(&self, obj: &ObjectField) -> Result<(ObjectField, Vec<AtomPlacement>)> {
        let centers = self.find_centers(obj)?;
        let placements: Vec<AtomPlacement> = centers
            .into_iter()
            .map(|center| AtomPlacement {
                center,
                translation: self.translation_at(obj, center),
            })
            .collect();
        Ok((self.synthesize(&placements), placements))
    }
}

const STABILIZE_PASSES: usize = 4;

fn same_placements(a: &[AtomPlacement], b: &[AtomPlacement]) -> bool {
    fn sorted(p: &[AtomPlacement]) -> Vec<&AtomPlacement> {
        let mut v: Vec<&AtomPlacement> = p.iter().collect();
        v.sort_by_key(|x| x.center);
        v
    }
    a.len() == b.len()
        && sorted(a).iter().zip(sorted(b)).all(|(x, y)| {
            x.center == y.center && x.translation.iter().zip(&y.translation).all(|(s, t)| (s - t).abs() < 1e-8)
        })
}

impl Projection for AtomicityProjection {
    fn project(&self, obj: &ObjectField) -> Result<ObjectField> {
        Ok(self.project_with_placements(obj)?.0)
    }

    fn name(&self) -> &str {
        "atom"
    }
}

/// One-shot atomicity projection; returns the atomic object and its atom placements.
pub fn project_atomicity(
    obj: &ObjectField,
    config: &AtomicityConfig,
) -> Result<(ObjectField, Vec<AtomPlacement>)> {
    AtomicityProjection::new(obj.grid(), config.clone())?.project_with_placements(obj)
}

/// Object made of the given atoms.
pub fn synthesize_atoms(
    grid: &Grid,
    config: &AtomicityConfig,
    placements: &[AtomPlacement],
) -> Result<ObjectField> {
    Ok(AtomicityProjection::new(grid, config.clone())?.synthesize(placements))
}
