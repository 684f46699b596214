//! Experiment orchestration: single runs with trace files, beta sweeps, attractor
//! portraits and the atom width table.
//!
//! Experiments are described by an [`ExperimentSpec`], which can be read from a flat
//! `key = value` file. Every key is also a command line flag of the same name.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `instance` | `disk`, `atoms` or `file` | `disk` |
//! | `extents` | grid shape, e.g. `64x64` | `64x64` |
//! | `diameter` | disk diameter in pixels | half the smallest extent |
//! | `atoms` | atom count (atom instances, atomicity and Sayre constraints) | |
//! | `xi` | clustering length of atom instances, 0 for none | `0` |
//! | `input` | PGF file holding the true object (`instance = file`) | |
//! | `constraint` | `support`, `hist`, `atom` or `sayre` | `hist` |
//! | `sigma` | Sayre atom width; estimated from the data when absent | |
//! | `alpha` | Sayre gradient step | `0.37` |
//! | `k` | Sayre steps per projection | `3` |
//! | `beta` | difference map parameter | `1` |
//! | `budget` | iteration cap | `10000` |
//! | `tolerance` | stop once the error falls below this | `1e-8` |
//! | `threshold` | error counted as success | `1e-3` |
//! | `settle` | iterations allowed after the first success | run to tolerance |
//! | `snapshot-every` | keep every k-th iterate | none |
//! | `seeds` | `0,1,2` or a range `0..3` | `0` |
//! | `out` | output directory | `out` |
//!
//! Seed `s` generates the instance; the random start uses [`start_seed`]`(s)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{estimate_sigma, width_table, AtomTemplate, AtomicityConfig, AtomicityProjection, WidthRow};
use crate::dynamics::{error_to_angle, run_pair, DifferenceMap, ObjectConstraint, ProjectionPair, RunConfig, RunOutcome};
use crate::error::{Error, Result};
use crate::fourier::{fft_forward, registered_distance, registered_distance_subpixel};
use crate::grid::{Grid, ModulusData, ObjectField};
use crate::io::{read_pgf, write_pgf, write_pgm};
use crate::projections::{
    Histogram, HistogramProjection, ModulusProjection, Projection, Renormalized, SupportMask,
    SupportPositiveProjection,
};
use crate::sayre::{SayreConfig, SayreKernel, SayreProjection};
use crate::synth::{self, ClusterSpec};

/// Fractional offsets per axis used for the sub-pixel registered distance.
pub const SUBPIXEL_STEPS: usize = 8;

/// Seed of the random starting point for instance seed `seed`.
pub fn start_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceSpec {
    /// Uniform random values on a centered disk.
    Disk { extents: Vec<usize>, diameter: f64 },
    /// Atomic object built from a clustered random field.
    Atoms { extents: Vec<usize>, atoms: usize, xi: f64 },
    /// True object read from a PGF file and normalized; the seed only affects the start.
    File { input: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConstraintSpec {
    /// Support of the true object plus positivity, output at unit norm.
    Support,
    Hist,
    Atom,
    Sayre { sigma: Option<f64>, alpha: f64, k: usize },
}

impl ConstraintSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Support => "support",
            Self::Hist => "hist",
            Self::Atom => "atom",
            Self::Sayre { .. } => "sayre",
        }
    }

    pub fn sayre_default() -> Self {
        Self::Sayre {
            sigma: None,
            alpha: SayreConfig::DEFAULT_ALPHA,
            k: SayreConfig::DEFAULT_STEPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub instance: InstanceSpec,
    pub constraint: ConstraintSpec,
    /// Atom count for the atomicity and Sayre constraints when the instance does not fix it.
    pub atoms: Option<usize>,
    pub beta: f64,
    pub budget: usize,
    pub tolerance: f64,
    pub threshold: f64,
    pub settle: Option<usize>,
    pub snapshot_every: Option<usize>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            instance: InstanceSpec::Disk {
                extents: vec![64, 64],
                diameter: 32.0,
            },
            constraint: ConstraintSpec::Hist,
            atoms: None,
            beta: 1.0,
            budget: 10_000,
            tolerance: 1e-8,
            threshold: 1e-3,
            settle: None,
            snapshot_every: None,
            seeds: vec![0],
            out: PathBuf::from("out"),
        }
    }
}

/// Keys accepted by [`ExperimentSpec::from_pairs`].
pub const SPEC_KEYS: &[&str] = &[
    "instance",
    "extents",
    "diameter",
    "atoms",
    "xi",
    "input",
    "constraint",
    "sigma",
    "alpha",
    "k",
    "beta",
    "budget",
    "tolerance",
    "threshold",
    "settle",
    "snapshot-every",
    "seeds",
    "out",
];

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        if !SPEC_KEYS.contains(&key.as_str()) {
            return Err(Error::Format(format!("line {}: unknown key `{key}`", n + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("bad value `{value}` for `{key}`")))
}

/// `64x64`, `16384` or `32x32x32`.
pub fn parse_extents(value: &str) -> Result<Vec<usize>> {
    let extents = value
        .split(['x', 'X', ','])
        .map(|p| parse_value::<usize>("extents", p.trim()))
        .collect::<Result<Vec<_>>>()?;
    Grid::new(&extents)?;
    Ok(extents)
}

/// `0,1,2` or the half-open range `0..3`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let (a, b): (u64, u64) = (parse_value("seeds", a.trim())?, parse_value("seeds", b.trim())?);
        return Ok((a..b).collect());
    }
    value
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_value("seeds", p.trim()))
        .collect()
}

fn format_extents(extents: &[usize]) -> String {
    extents.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
}

impl ExperimentSpec {
    /// Builds a spec from flat key-value pairs, falling back to defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        for key in pairs.keys() {
            if !SPEC_KEYS.contains(&key.as_str()) {
                return Err(Error::Format(format!("unknown key `{key}`")));
            }
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let num = |k: &str| -> Result<Option<f64>> { get(k).map(|v| parse_value(k, v)).transpose() };
        let int = |k: &str| -> Result<Option<usize>> { get(k).map(|v| parse_value(k, v)).transpose() };

        let extents = get("extents").map(parse_extents).transpose()?.unwrap_or(vec![64, 64]);
        let atoms = int("atoms")?;
        let instance = match get("instance").unwrap_or("disk") {
            "disk" => {
                let smallest = *extents.iter().min().expect("nonempty extents") as f64;
                InstanceSpec::Disk {
                    diameter: num("diameter")?.unwrap_or(smallest / 2.0),
                    extents,
                }
            }
            "atoms" => InstanceSpec::Atoms {
                extents,
                atoms: atoms.ok_or_else(|| Error::InvalidParameter("atom instance needs `atoms`".into()))?,
                xi: num("xi")?.unwrap_or(0.0),
            },
            "file" => InstanceSpec::File {
                input: get("input")
                    .ok_or_else(|| Error::InvalidParameter("file instance needs `input`".into()))?
                    .into(),
            },
            other => return Err(Error::Format(format!("unknown instance `{other}`"))),
        };
        let constraint = match get("constraint").unwrap_or("hist") {
            "support" => ConstraintSpec::Support,
            "hist" => ConstraintSpec::Hist,
            "atom" => ConstraintSpec::Atom,
            "sayre" => ConstraintSpec::Sayre {
                sigma: num("sigma")?,
                alpha: num("alpha")?.unwrap_or(SayreConfig::DEFAULT_ALPHA),
                k: int("k")?.unwrap_or(SayreConfig::DEFAULT_STEPS),
            },
            other => return Err(Error::Format(format!("unknown constraint `{other}`"))),
        };
        let d = Self::default();
        let spec = Self {
            instance,
            constraint,
            atoms,
            beta: num("beta")?.unwrap_or(d.beta),
            budget: int("budget")?.unwrap_or(d.budget),
            tolerance: num("tolerance")?.unwrap_or(d.tolerance),
            threshold: num("threshold")?.unwrap_or(d.threshold),
            settle: int("settle")?,
            snapshot_every: int("snapshot-every")?,
            seeds: get("seeds").map(parse_seeds).transpose()?.unwrap_or(d.seeds),
            out: get("out").map(PathBuf::from).unwrap_or(d.out),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Inverse of [`from_pairs`](Self::from_pairs).
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match &self.instance {
            InstanceSpec::Disk { extents, diameter } => {
                put("instance", "disk".into());
                put("extents", format_extents(extents));
                put("diameter", format!("{diameter:?}"));
            }
            InstanceSpec::Atoms { extents, atoms, xi } => {
                put("instance", "atoms".into());
                put("extents", format_extents(extents));
                put("atoms", atoms.to_string());
                put("xi", format!("{xi:?}"));
            }
            InstanceSpec::File { input } => {
                put("instance", "file".into());
                put("input", input.display().to_string());
            }
        }
        put("constraint", self.constraint.label().into());
        if let ConstraintSpec::Sayre { sigma, alpha, k } = &self.constraint {
            if let Some(s) = sigma {
                put("sigma", format!("{s:?}"));
            }
            put("alpha", format!("{alpha:?}"));
            put("k", k.to_string());
        }
        if let Some(a) = self.atoms {
            put("atoms", a.to_string());
        }
        put("beta", format!("{:?}", self.beta));
        put("budget", self.budget.to_string());
        put("tolerance", format!("{:?}", self.tolerance));
        put("threshold", format!("{:?}", self.threshold));
        if let Some(s) = self.settle {
            put("settle", s.to_string());
        }
        if let Some(s) = self.snapshot_every {
            put("snapshot-every", s.to_string());
        }
        put(
            "seeds",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        put("out", self.out.display().to_string());
        m
    }

    pub fn to_config(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seed list is empty".into()));
        }
        self.run_config(0).validate()?;
        match &self.instance {
            InstanceSpec::Disk { extents, diameter } => {
                Grid::new(extents)?;
                if !(*diameter > 0.0) {
                    return Err(Error::InvalidParameter(format!("diameter {diameter}")));
                }
            }
            InstanceSpec::Atoms { extents, atoms, xi } => {
                Grid::new(extents)?;
                ClusterSpec::new(*xi, 0)?;
                if *atoms == 0 {
                    return Err(Error::InvalidParameter("atom count must be positive".into()));
                }
            }
            InstanceSpec::File { .. } => {}
        }
        if matches!(self.constraint, ConstraintSpec::Atom | ConstraintSpec::Sayre { .. })
            && self.atom_count().is_none()
        {
            return Err(Error::InvalidParameter(format!(
                "constraint `{}` needs an atom count",
                self.constraint.label()
            )));
        }
        Ok(())
    }

    fn atom_count(&self) -> Option<usize> {
        match (&self.instance, self.atoms) {
            (_, Some(a)) => Some(a),
            (InstanceSpec::Atoms { atoms, .. }, None) => Some(*atoms),
            _ => None,
        }
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            beta: self.beta,
            max_iterations: self.budget,
            tolerance: self.tolerance,
            success_threshold: self.threshold,
            settle_iterations: self.settle,
            snapshot_every: self.snapshot_every,
            seed: start_seed(seed),
        }
    }

    /// True object and its support for instance seed `seed`.
    pub fn generate(&self, seed: u64) -> Result<(ObjectField, SupportMask)> {
        match &self.instance {
            InstanceSpec::Disk { extents, diameter } => {
                synth::random_disk(&Grid::new(extents)?, *diameter, seed)
            }
            InstanceSpec::Atoms { extents, atoms, xi } => {
                let grid = Grid::new(extents)?;
                let cfg = AtomicityConfig::normalized(*atoms, AtomTemplate::standard(grid.dims())?);
                let (obj, _) = synth::make_atomic_object(&grid, &cfg, &ClusterSpec::new(*xi, seed)?)?;
                let mask = SupportMask::from_field(&obj)?;
                Ok((obj, mask))
            }
            InstanceSpec::File { input } => {
                let obj = read_pgf(input)?.normalize()?;
                let mask = SupportMask::from_field(&obj)?;
                Ok((obj, mask))
            }
        }
    }

    /// Object constraint built from the true object, its support and its modulus.
    pub fn object_constraint(
        &self,
        truth: &ObjectField,
        mask: &SupportMask,
        modulus: &ModulusData,
    ) -> Result<ObjectConstraint> {
        let grid = truth.grid();
        let atoms = || {
            self.atom_count()
                .ok_or_else(|| Error::InvalidParameter("missing atom count".into()))
        };
        Ok(match &self.constraint {
            ConstraintSpec::Support => ObjectConstraint::SupportPositiveNormalized(Renormalized {
                inner: SupportPositiveProjection(mask.clone()),
                norm: truth.norm(),
            }),
            ConstraintSpec::Hist => ObjectConstraint::Histogram(HistogramProjection(Histogram::of(truth))),
            ConstraintSpec::Atom => {
                let cfg = AtomicityConfig::normalized(atoms()?, AtomTemplate::standard(grid.dims())?);
                ObjectConstraint::Atomicity(AtomicityProjection::new(grid, cfg)?)
            }
            ConstraintSpec::Sayre { sigma, alpha, k } => {
                let sigma = match sigma {
                    Some(s) => *s,
                    None => estimate_sigma(modulus)?,
                };
                let config = SayreConfig::new(SayreKernel::new(grid, sigma)?, *alpha, *k, atoms()?)?;
                ObjectConstraint::Sayre(SayreProjection {
                    config,
                    object_norm: truth.norm(),
                })
            }
        })
    }
}

/// Per-seed results written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub start_seed: u64,
    pub constraint: String,
    pub beta: f64,
    pub threshold: f64,
    /// Some iteration had error below `threshold`.
    pub success: bool,
    /// The error fell below the stop tolerance.
    pub converged: bool,
    pub iterations: usize,
    pub first_success: Option<usize>,
    pub final_error: f64,
    pub min_error: f64,
    /// Distance of the extracted solution to the truth, up to translation and inversion.
    pub registered_distance: f64,
    /// Same, also minimizing over fractional translations.
    pub subpixel_distance: f64,
    pub wall_ms: f64,
}

impl RunSummary {
    pub fn from_outcome(
        spec: &ExperimentSpec,
        seed: u64,
        outcome: &RunOutcome,
        truth: &ObjectField,
    ) -> Result<Self> {
        let trace = &outcome.trace;
        Ok(Self {
            seed,
            start_seed: start_seed(seed),
            constraint: spec.constraint.label().into(),
            beta: spec.beta,
            threshold: spec.threshold,
            success: outcome.success,
            converged: trace.converged_at.is_some(),
            iterations: trace.iterations(),
            first_success: trace.first_success,
            final_error: trace.final_error().unwrap_or(f64::NAN),
            min_error: trace.errors.iter().copied().fold(f64::INFINITY, f64::min),
            registered_distance: registered_distance(&outcome.solution, truth)?,
            subpixel_distance: registered_distance_subpixel(&outcome.solution, truth, SUBPIXEL_STEPS)?,
            wall_ms: trace.wall_ms.last().copied().unwrap_or(0.0),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub spec: ExperimentSpec,
    pub seeds: Vec<u64>,
    pub start_seeds: Vec<u64>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<RunSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// CSV with columns `iteration,e,theta,wall_ms`; theta is empty when `e > 2`.
pub fn write_trace_csv(path: impl AsRef<Path>, errors: &[f64], wall_ms: &[f64]) -> Result<()> {
    let mut s = String::from("iteration,e,theta,wall_ms\n");
    for (i, (&e, &t)) in errors.iter().zip(wall_ms).enumerate() {
        let theta = error_to_angle(e).map(|a| format!("{a:e}")).unwrap_or_default();
        s.push_str(&format!("{i},{e:e},{theta},{t:.3}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

/// The `e` column of a trace CSV.
pub fn read_trace_errors(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("iteration,e,theta,wall_ms") {
        return Err(Error::Format("unexpected trace header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let e = l
                .split(',')
                .nth(1)
                .ok_or_else(|| Error::Format(format!("short trace line `{l}`")))?;
            parse_value("e", e)
        })
        .collect()
}

/// Success recomputed from a stored trace.
pub fn success_from_trace(path: impl AsRef<Path>, threshold: f64) -> Result<bool> {
    Ok(read_trace_errors(path)?.iter().any(|&e| e < threshold))
}

fn write_field(dir: &Path, stem: &str, field: &ObjectField) -> Result<()> {
    write_pgf(dir.join(format!("{stem}.pgf")), field)?;
    if field.grid().dims() == 2 {
        write_pgm(dir.join(format!("{stem}.pgm")), field)?;
    }
    Ok(())
}

/// Runs the difference map for one seed without writing files.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<(RunOutcome, ObjectField)> {
    let (truth, mask) = spec.generate(seed)?;
    let modulus = synth::modulus_of(&truth);
    let object = spec.object_constraint(&truth, &mask, &modulus)?;
    let pair = ProjectionPair::new(object, modulus);
    let outcome = run_pair(&pair, None, &spec.run_config(seed))?;
    Ok((outcome, truth))
}

/// Runs every seed of `spec`, writing one directory per seed under `spec.out`:
/// `trace.csv`, `iter_<k>` snapshots, `solution` and `truth` fields and `summary.json`.
/// The output directory also receives `manifest.json` and `experiment.conf`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunSummary>> {
    spec.validate()?;
    fs::create_dir_all(&spec.out)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        spec: spec.clone(),
        seeds: spec.seeds.clone(),
        start_seeds: spec.seeds.iter().map(|&s| start_seed(s)).collect(),
    };
    write_json(&spec.out.join("manifest.json"), &manifest)?;
    fs::write(spec.out.join("experiment.conf"), spec.to_config())?;

    let mut summaries = Vec::new();
    for &seed in &spec.seeds {
        let (outcome, truth) = run_seed(spec, seed)?;
        let dir = spec.out.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir)?;
        write_trace_csv(dir.join("trace.csv"), &outcome.trace.errors, &outcome.trace.wall_ms)?;
        for (k, snap) in &outcome.trace.snapshots {
            write_field(&dir, &format!("iter_{k}"), snap)?;
        }
        write_field(&dir, "solution", &outcome.solution)?;
        write_field(&dir, "truth", &truth)?;
        let summary = RunSummary::from_outcome(spec, seed, &outcome, &truth)?;
        write_json(&dir.join("summary.json"), &summary)?;
        info!(
            "seed {seed}: success {} after {} iterations, e = {:.3e}, distance {:.3e}",
            summary.success, summary.iterations, summary.final_error, summary.registered_distance
        );
        summaries.push(summary);
    }
    Ok(summaries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub constraint: ConstraintSpec,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub extent: usize,
    /// Atom count; 40 for Sayre and 30 otherwise when absent.
    pub atoms: Option<usize>,
    pub iterations: usize,
    pub threshold: f64,
}

impl SweepConfig {
    pub fn new(constraint: ConstraintSpec) -> Self {
        Self {
            constraint,
            betas: vec![-1.0, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 1.0],
            seeds: (0..20).collect(),
            extent: 64,
            atoms: None,
            iterations: 100,
            threshold: 1e-3,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.unwrap_or(match self.constraint {
            ConstraintSpec::Sayre { .. } => 40,
            _ => 30,
        })
    }

    fn experiment(&self, beta: f64) -> ExperimentSpec {
        ExperimentSpec {
            instance: InstanceSpec::Atoms {
                extents: vec![self.extent, self.extent],
                atoms: self.atom_count(),
                xi: 0.0,
            },
            constraint: self.constraint.clone(),
            atoms: None,
            beta,
            budget: self.iterations,
            tolerance: self.threshold.min(1e-8),
            threshold: self.threshold,
            settle: Some(0),
            snapshot_every: None,
            seeds: self.seeds.clone(),
            out: PathBuf::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub runs: usize,
    pub successes: usize,
    pub fraction: f64,
    /// First successful iteration of each seed's run, in seed order.
    pub iterations_to_success: Vec<Option<usize>>,
    /// Smallest error of each run.
    pub min_errors: Vec<f64>,
}

impl SweepRow {
    pub fn median_min_error(&self) -> f64 {
        let mut e = self.min_errors.clone();
        e.sort_by(f64::total_cmp);
        match e.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => e[n / 2],
            n => 0.5 * (e[n / 2 - 1] + e[n / 2]),
        }
    }

    /// Runs whose smallest error fell below `level`.
    pub fn count_below(&self, level: f64) -> usize {
        self.min_errors.iter().filter(|&&e| e < level).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub constraint: String,
    pub atoms: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, beta: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.beta == beta)
    }

    /// Highest success fraction over rows matching `keep`.
    pub fn peak(&self, keep: impl Fn(f64) -> bool) -> f64 {
        self.rows
            .iter()
            .filter(|r| keep(r.beta))
            .map(|r| r.fraction)
            .fold(0.0, f64::max)
    }

    /// One line per beta: counts, mean iterations to success, median smallest error.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("beta,runs,successes,fraction,mean_iterations_to_success,median_min_error\n");
        for r in &self.rows {
            let its: Vec<f64> = r.iterations_to_success.iter().flatten().map(|&i| i as f64 + 1.0).collect();
            let mean = if its.is_empty() {
                String::new()
            } else {
                format!("{:.1}", its.iter().sum::<f64>() / its.len() as f64)
            };
            s.push_str(&format!(
                "{},{},{},{:.4},{mean},{:.3e}\n",
                r.beta,
                r.runs,
                r.successes,
                r.fraction,
                r.median_min_error()
            ));
        }
        s
    }
}

/// Success fraction after a fixed number of iterations, for every beta, each seed on
/// its own instance. Runs are distributed over the rayon pool.
pub fn sweep_beta(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.seeds.is_empty() || cfg.betas.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..cfg.betas.len())
        .flat_map(|b| cfg.seeds.iter().map(move |&s| (b, s)))
        .collect();
    let results: Vec<(usize, Option<usize>, f64)> = jobs
        .par_iter()
        .map(|&(b, seed)| {
            let spec = cfg.experiment(cfg.betas[b]);
            let (outcome, _) = run_seed(&spec, seed)?;
            let min = outcome.trace.errors.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((b, outcome.trace.first_success, min))
        })
        .collect::<Result<_>>()?;
    let rows = cfg
        .betas
        .iter()
        .enumerate()
        .map(|(b, &beta)| {
            let mine: Vec<_> = results.iter().filter(|r| r.0 == b).collect();
            let successes = mine.iter().filter(|r| r.1.is_some()).count();
            SweepRow {
                beta,
                runs: mine.len(),
                successes,
                fraction: successes as f64 / mine.len() as f64,
                iterations_to_success: mine.iter().map(|r| r.1).collect(),
                min_errors: mine.iter().map(|r| r.2).collect(),
            }
        })
        .collect();
    Ok(SweepResult {
        constraint: cfg.constraint.label().into(),
        atoms: cfg.atom_count(),
        rows,
    })
}

/// Indices of the four lowest-frequency Fourier coefficients that are not their own
/// conjugate partner, one from each `q, -q` pair, excluding `q = 0`.
pub fn portrait_coefficients(grid: &Grid) -> Vec<usize> {
    let mut qs: Vec<usize> = (1..grid.len()).filter(|&q| grid.negate(q) > q).collect();
    qs.sort_by(|&a, &b| grid.wavevector_sq(a).total_cmp(&grid.wavevector_sq(b)).then(a.cmp(&b)));
    qs.truncate(4);
    qs
}

pub const PORTRAIT_BINS: usize = 64;

#[derive(Clone, Debug)]
pub struct Portrait {
    pub beta: f64,
    pub iterations: usize,
    pub window: f64,
    /// `(phase1, phase2)` of the selected iterates.
    pub points: Vec<(f64, f64)>,
    /// Point counts on a `PORTRAIT_BINS` square over [-pi, pi)^2, row index from phase2.
    pub occupancy: Vec<usize>,
    /// Smallest error seen; data built from distinct objects keep it well above zero.
    pub min_error: f64,
}

impl Portrait {
    pub fn occupied_cells(&self) -> usize {
        self.occupancy.iter().filter(|&&c| c > 0).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase1,phase2\n");
        for (a, b) in &self.points {
            s.push_str(&format!("{a:.6},{b:.6}\n"));
        }
        s
    }

    /// Occupancy as a field for PGM export.
    pub fn density(&self) -> ObjectField {
        let grid = Grid::square(PORTRAIT_BINS).expect("positive bins");
        let values = self.occupancy.iter().map(|&c| (1.0 + c as f64).ln()).collect();
        ObjectField::new(grid, values).expect("finite counts")
    }
}

fn bin(phase: f64) -> usize {
    let t = (phase + PI).rem_euclid(2.0 * PI) / (2.0 * PI);
    ((t * PORTRAIT_BINS as f64) as usize).min(PORTRAIT_BINS - 1)
}

/// Difference map iterates on the averaged data of two objects with a shared
/// histogram, sectioned where the third and fourth phases lie within `window` of zero.
pub fn attractor_portrait(
    a: &ObjectField,
    b: &ObjectField,
    beta: f64,
    iterations: usize,
    window: f64,
    seed: u64,
) -> Result<Portrait> {
    let (modulus, hist) = synth::fabricate_unsolvable(a, b)?;
    let grid = a.grid().clone();
    let coeffs = portrait_coefficients(&grid);
    if coeffs.len() < 4 {
        return Err(Error::UnsupportedGrid(format!("{grid} has fewer than four phase pairs")));
    }
    let pi1 = HistogramProjection(hist);
    let pi2 = ModulusProjection(modulus);
    let map = DifferenceMap::new(beta)?;
    let mut x = synth::random_object(&grid, start_seed(seed));
    let mut points = Vec::new();
    let mut occupancy = vec![0; PORTRAIT_BINS * PORTRAIT_BINS];
    let mut min_error = f64::INFINITY;
    for _ in 0..iterations {
        let (next, e) = map.step(&pi1 as &dyn Projection, &pi2, &x)?;
        x = next;
        min_error = min_error.min(e);
        let spec = fft_forward(&x);
        let phases: Vec<f64> = coeffs.iter().map(|&q| spec.values()[q].arg()).collect();
        if phases[2].abs() <= window && phases[3].abs() <= window {
            occupancy[bin(phases[1]) * PORTRAIT_BINS + bin(phases[0])] += 1;
            points.push((phases[0], phases[1]));
        }
    }
    if points.len() < 100 {
        warn!("only {} iterates fell in the section", points.len());
    }
    Ok(Portrait {
        beta,
        iterations,
        window,
        points,
        occupancy,
        min_error,
    })
}

pub fn write_portrait(dir: impl AsRef<Path>, portrait: &Portrait) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let stem = format!("portrait_beta_{}", portrait.beta);
    fs::write(dir.join(format!("{stem}.csv")), portrait.to_csv())?;
    write_pgm(dir.join(format!("{stem}.pgm")), &portrait.density())
}

/// Optimal atom widths and sampling errors next to the reference values.
pub fn table1_report() -> Result<(Vec<WidthRow>, String)> {
    let rows = width_table()?;
    let mut s = String::from(
        "d,R2,pixels,sigma,delta_ave,reference_sigma,reference_delta_ave,sigma_deviation,delta_ratio\n",
    );
    for r in &rows {
        s.push_str(&format!(
            "{},{},{},{:.4},{:.3e},{},{:e},{:+.4},{:.3}\n",
            r.dims,
            r.radius_sq,
            r.pixels,
            r.sigma,
            r.delta_ave,
            r.reference_sigma,
            r.reference_delta_ave,
            r.sigma - r.reference_sigma,
            r.delta_ave / r.reference_delta_ave
        ));
    }
    Ok((rows, s))
}

/// Writes a field as PGF plus a JSON sidecar describing how it was made.
pub fn write_generated(
    path: impl AsRef<Path>,
    field: &ObjectField,
    sidecar: &impl Serialize,
) -> Result<()> {
    let path = path.as_ref();
    write_pgf(path, field)?;
    write_json(&path.with_extension("json"), sidecar)
}
