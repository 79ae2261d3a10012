//! Scenario and result documents, trace CSV, dataset ingestion and the
//! network-size sweep.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{self, Certificate, ErrorReport, Verdict};
use crate::dual::DualVariable;
use crate::error::{Error, IoError, NetworkError};
use crate::game;
use crate::instance::{AxisBox, Instance};
use crate::network::{self, SensorNetwork};
use crate::projection::DualProjection;
use crate::solver::{self, SaddleTrace, SolveStatus, SolverConfig, StopRule};

pub const SCHEMA_VERSION: u32 = 1;

/// Optional replacements for [`SolverConfig`] fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_rule: Option<StopRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_nonneg: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<usize>,
}

impl SolverOverrides {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        if let Some(v) = self.alpha0 {
            cfg.alpha0 = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.stop_rule {
            cfg.stop_rule = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.tau_nonneg {
            cfg.dual_projection = if v {
                DualProjection::Nonnegative
            } else {
                DualProjection::Exact
            };
        }
        if let Some(v) = self.trace_every {
            cfg.trace_every = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema_version: u32,
    pub dimension: usize,
    pub anchors: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<Vec<f64>>>,
    pub sensing_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<AxisBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

impl ScenarioDocument {
    pub fn from_network(net: &SensorNetwork, boxes: Option<Vec<AxisBox>>) -> Self {
        ScenarioDocument {
            schema_version: SCHEMA_VERSION,
            dimension: net.dimension(),
            anchors: net.anchors().to_vec(),
            ground_truth: net.ground_truth().map(<[_]>::to_vec),
            sensing_radius: net.sensing_radius(),
            boxes,
            solver: None,
        }
    }

    /// The number of sensors is taken from the ground truth, or from the
    /// boxes when no ground truth is present.
    pub fn to_network(&self) -> Result<SensorNetwork, Error> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::SchemaVersion(self.schema_version).into());
        }
        let sensors = match (&self.ground_truth, &self.boxes) {
            (Some(gt), _) => gt.len(),
            (None, Some(b)) => b.len(),
            (None, None) => {
                return Err(IoError::Invalid("neither groundTruth nor boxes gives the sensor count".into()).into())
            }
        };
        Ok(SensorNetwork::new(
            self.dimension,
            sensors,
            self.anchors.clone(),
            self.ground_truth.clone(),
            self.sensing_radius,
        )?)
    }

    pub fn to_instance(&self) -> Result<Instance, Error> {
        let net = self.to_network()?;
        if net.ground_truth().is_none() {
            return Err(NetworkError::GroundTruthRequired.into());
        }
        Ok(Instance::new(net, self.boxes.clone())?)
    }

    /// Default solver settings with this scenario's overrides applied.
    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Some(o) = &self.solver {
            o.apply(&mut cfg);
        }
        cfg
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let doc: Self = serde_json::from_str(text).map_err(IoError::from)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(IoError::SchemaVersion(doc.schema_version).into());
        }
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_json(&read_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        Ok(write_file(path, self.to_json().as_bytes())?)
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    Saddle,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultDocument {
    pub schema_version: u32,
    pub scenario_sha256: String,
    pub scenario: ScenarioDocument,
    pub method: Method,
    pub status: SolveStatus,
    pub positions: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub potential: f64,
    pub certificate: Certificate,
    pub error_report: Option<ErrorReport>,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub config: SolverConfig,
}

impl ResultDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(text).map_err(IoError::from)?)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_json(&read_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        Ok(write_file(path, self.to_json().as_bytes())?)
    }

    pub fn flat_positions(&self) -> Vec<f64> {
        self.positions.iter().flatten().copied().collect()
    }

    /// Recomputes the certificate from the embedded scenario.
    pub fn recertify(&self, eps_cert: f64, eps_stat: Option<f64>) -> Result<Certificate, Error> {
        if self.scenario.fingerprint() != self.scenario_sha256 {
            return Err(IoError::Invalid("scenario fingerprint does not match".into()).into());
        }
        let inst = self.scenario.to_instance()?;
        let x = self.flat_positions();
        if x.len() != inst.num_vars() || self.tau.len() != inst.num_edges() {
            return Err(IoError::Invalid("solution does not fit the scenario".into()).into());
        }
        let eps_stat = eps_stat.unwrap_or_else(|| certify::default_eps_stat(&inst));
        Ok(certify::certify(&inst, &x, &DualVariable(self.tau.clone()), eps_cert, eps_stat))
    }
}

/// Solves a scenario with the saddle method, or with plain descent on the
/// potential when `method` is [`Method::Baseline`] (its certificate then
/// uses the most favourable feasible dual).
pub fn solve_scenario(
    scenario: &ScenarioDocument,
    cfg: &SolverConfig,
    method: Method,
) -> Result<(ResultDocument, SaddleTrace), Error> {
    let inst = scenario.to_instance()?;
    cfg.validate().map_err(IoError::Invalid)?;
    let start = Instant::now();
    let (x, tau, trace) = match method {
        Method::Saddle => {
            let sol = solver::solve_saddle(&inst, cfg, None);
            (sol.x.positions, sol.tau, sol.trace)
        }
        Method::Baseline => {
            let (x, trace) = solver::solve_baseline_descent(&inst, cfg, None);
            let tau = certify::favorable_dual(&inst, &x.positions);
            (x.positions, tau, trace)
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let certificate = certify::certify_default(&inst, &x, &tau);
    let error_report = certify::error_report(inst.network(), &x).ok();
    let n = inst.dim();
    let doc = ResultDocument {
        schema_version: SCHEMA_VERSION,
        scenario_sha256: scenario.fingerprint(),
        scenario: scenario.clone(),
        method,
        status: trace.status,
        positions: x.chunks(n).map(<[f64]>::to_vec).collect(),
        tau: tau.0,
        potential: game::potential(&inst, &x),
        certificate,
        error_report,
        iterations: trace.iterations(),
        wall_time_s,
        config: cfg.clone(),
    };
    Ok((doc, trace))
}

/// Shortest representation that parses back to the same double.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub const TRACE_COLUMNS: [&str; 7] = ["k", "alpha", "P", "Psi", "dx_norm", "dtau_norm", "nash_residual"];

pub fn write_trace_csv<W: Write>(trace: &SaddleTrace, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    for r in &trace.rows {
        w.write_record([
            r.k.to_string(),
            format_f64(r.alpha),
            format_f64(r.potential),
            opt(r.psi),
            format_f64(r.dx_norm),
            format_f64(r.dtau_norm),
            opt(r.nash_residual),
        ])?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}

/// Column mapping for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct IngestColumns {
    pub x: String,
    pub y: String,
    pub z: Option<String>,
    /// Flag column: `1`, `true`, `yes` or `anchor` mark anchors.
    pub anchor: String,
}

impl Default for IngestColumns {
    fn default() -> Self {
        IngestColumns {
            x: "x".into(),
            y: "y".into(),
            z: None,
            anchor: "anchor".into(),
        }
    }
}

/// Maps values to `[0, 1]` by `(v - min) / (max - min)`; a constant axis maps
/// to `0.5`.
pub fn min_max_normalize(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return;
    }
    if hi == lo {
        log::warn!("constant coordinate axis; mapping every value to 0.5");
        values.iter_mut().for_each(|v| *v = 0.5);
        return;
    }
    values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "anchor" | "y" => Some(true),
        "0" | "false" | "no" | "sensor" | "n" | "" => Some(false),
        _ => None,
    }
}

/// Reads positions from CSV text, normalizes each axis over all rows and
/// splits anchors from non-anchors. Row numbers in errors count data rows
/// from 1.
pub fn ingest_reader<R: Read>(input: R, cols: &IngestColumns, sensing_radius: f64) -> Result<SensorNetwork, Error> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(IoError::from)?.clone();
    let find = |name: &str| -> Result<usize, IoError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::Invalid(format!("no column named {name:?}")))
    };
    let mut coord_cols = vec![find(&cols.x)?, find(&cols.y)?];
    if let Some(z) = &cols.z {
        coord_cols.push(find(z)?);
    }
    let flag_col = find(&cols.anchor)?;
    let dim = coord_cols.len();

    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut is_anchor = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| IoError::Ingest {
            row,
            message: e.to_string(),
        })?;
        for (a, &c) in coord_cols.iter().enumerate() {
            let field = rec.get(c).filter(|s| !s.is_empty()).ok_or_else(|| IoError::Ingest {
                row,
                message: format!("missing value in column {:?}", &headers[c]),
            })?;
            let v: f64 = field.parse().map_err(|_| IoError::Ingest {
                row,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(IoError::Ingest {
                    row,
                    message: "non-finite coordinate".into(),
                }
                .into());
            }
            axes[a].push(v);
        }
        let flag = rec.get(flag_col).unwrap_or("");
        is_anchor.push(parse_flag(flag).ok_or_else(|| IoError::Ingest {
            row,
            message: format!("cannot read {flag:?} as an anchor flag"),
        })?);
    }
    for axis in axes.iter_mut() {
        min_max_normalize(axis);
    }

    let mut anchors = Vec::new();
    let mut sensors = Vec::new();
    for (r, anchor) in is_anchor.iter().enumerate() {
        let p: Vec<f64> = axes.iter().map(|a| a[r]).collect();
        if *anchor {
            anchors.push(p);
        } else {
            sensors.push(p);
        }
    }
    Ok(SensorNetwork::new(dim, sensors.len(), anchors, Some(sensors), sensing_radius)?)
}

pub fn ingest_csv(path: &Path, cols: &IngestColumns, sensing_radius: f64) -> Result<SensorNetwork, Error> {
    let file = fs::File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    ingest_reader(file, cols, sensing_radius)
}

pub const DEFAULT_SWEEP_SIZES: [usize; 4] = [10, 20, 35, 50];
pub const DEFAULT_SWEEP_SEEDS: [u64; 3] = [1, 2, 3];
/// Sensing radius used by the sweep when none is given.
pub const DEFAULT_SWEEP_RADIUS: f64 = 1.2;
pub const MAX_GENERATION_ATTEMPTS: usize = 50;

/// Number of anchors for a network of `N` sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorsRule {
    /// `max(n + 1, ceil(N / 5))`.
    Proportional,
    Fixed(usize),
}

impl AnchorsRule {
    pub fn anchors(&self, dim: usize, sensors: usize) -> usize {
        match *self {
            AnchorsRule::Proportional => (dim + 1).max(sensors.div_ceil(5)),
            AnchorsRule::Fixed(m) => m,
        }
    }
}

/// Draws random networks until one passes both rigidity tests. Returns the
/// network, the seed that produced it and the number of attempts used.
pub fn generate_rigid(
    dim: usize,
    sensors: usize,
    anchors: usize,
    radius: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<(SensorNetwork, u64, usize), Error> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=max_attempts {
        let s = if attempt == 1 { seed } else { seeds.gen() };
        let net = SensorNetwork::random(dim, sensors, anchors, radius, s)?;
        let edges = network::EdgeSet::build(&net)?;
        if network::is_generically_rigid(&net, &edges)? && network::is_generically_globally_rigid(&net, &edges)? {
            return Ok((net, s, attempt));
        }
        log::info!("N={sensors} seed {s}: not globally rigid, drawing again");
    }
    Err(Error::RigidityGenerationFailed {
        sensors,
        attempts: max_attempts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub dimension: usize,
    pub radius: f64,
    pub anchors: AnchorsRule,
    pub cfg: SolverConfig,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            sizes: DEFAULT_SWEEP_SIZES.to_vec(),
            seeds: DEFAULT_SWEEP_SEEDS.to_vec(),
            dimension: 2,
            radius: DEFAULT_SWEEP_RADIUS,
            anchors: AnchorsRule::Proportional,
            cfg: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sensors: usize,
    pub anchors: usize,
    pub seed: u64,
    pub instance_seed: u64,
    pub attempts: usize,
    pub edges: usize,
    pub status: SolveStatus,
    pub verdict: Verdict,
    pub iterations: usize,
    pub rmse: f64,
    pub max_error: f64,
    pub potential: f64,
    pub tau_inf: f64,
    pub max_duality_residual: f64,
    pub wall_time_s: f64,
}

pub const SWEEP_COLUMNS: [&str; 15] = [
    "N",
    "M",
    "seed",
    "instance_seed",
    "attempts",
    "edges",
    "status",
    "verdict",
    "iterations",
    "rmse",
    "max_error",
    "P",
    "tau_inf",
    "max_duality_residual",
    "wall_time_s",
];

/// Runs every `(N, seed)` cell in order of `N`, then seed. When `out_dir` is
/// given a result document per cell is written there.
pub fn run_sweep(opts: &SweepOptions, out_dir: Option<&Path>) -> Result<Vec<SweepRow>, Error> {
    if opts.sizes.is_empty() {
        return Err(Error::EmptySweep);
    }
    let mut sizes = opts.sizes.clone();
    sizes.sort_unstable();
    let mut seeds = opts.seeds.clone();
    seeds.sort_unstable();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }

    let mut rows = Vec::new();
    for &n in &sizes {
        let m = opts.anchors.anchors(opts.dimension, n);
        for &seed in &seeds {
            let (net, instance_seed, attempts) =
                generate_rigid(opts.dimension, n, m, opts.radius, seed, MAX_GENERATION_ATTEMPTS)?;
            let scenario = ScenarioDocument::from_network(&net, None);
            let cfg = SolverConfig { seed, ..opts.cfg.clone() };
            let (doc, _) = solve_scenario(&scenario, &cfg, Method::Saddle)?;
            let report = doc.error_report.clone().expect("generated networks carry ground truth");
            log::info!(
                "N={n} seed={seed}: {:?} after {} iterations, rmse {:.3e}",
                doc.certificate.verdict,
                doc.iterations,
                report.rmse
            );
            rows.push(SweepRow {
                sensors: n,
                anchors: m,
                seed,
                instance_seed,
                attempts,
                edges: doc.tau.len(),
                status: doc.status,
                verdict: doc.certificate.verdict,
                iterations: doc.iterations,
                rmse: report.rmse,
                max_error: report.max_error,
                potential: doc.potential,
                tau_inf: doc.tau.iter().fold(0.0, |a, t| a.max(t.abs())),
                max_duality_residual: doc.certificate.max_residual,
                wall_time_s: doc.wall_time_s,
            });
            if let Some(dir) = out_dir {
                doc.save(&dir.join(format!("N{n}_seed{seed}.json")))?;
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.sensors.to_string(),
            r.anchors.to_string(),
            r.seed.to_string(),
            r.instance_seed.to_string(),
            r.attempts.to_string(),
            r.edges.to_string(),
            format!("{:?}", r.status),
            format!("{:?}", r.verdict),
            r.iterations.to_string(),
            format_f64(r.rmse),
            format_f64(r.max_error),
            format_f64(r.potential),
            format_f64(r.tau_inf),
            format_f64(r.max_duality_residual),
            format_f64(r.wall_time_s),
        ])?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}
