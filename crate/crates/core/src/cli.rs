//! Command-line orchestration: resource reports, T-count estimation, sweeps and circuit tools.

use crate::circuit::{count_gates, deserialize, serialize, CircuitBlock, GateCounts};
use crate::model::{build_hamiltonian, SpinChainHamiltonian};
use crate::optim::{lower_toffolis, optimize, OptMode};
use crate::pf::{plan_pf, synth_pf, PfBoundKind, PfOrder};
use crate::qsp::{parse_angles, plan_qsp, qsp_success_lb, synth_qsp, synth_qsp_for_counts, AngleSource, QspBound, QspMode};
use crate::sim::{circuit_unitary, distance_up_to_phase, empirical_r_search, exact_evolution, powerlaw_fit, spectral_distance, EmpiricalTarget, FitResult};
use crate::ts::{synth_ts, ts_params};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Worker threads for sweeps; defaults to the available parallelism.
pub const THREADS_ENV: &str = "HAMSYNTH_THREADS";
/// Label attached to every T-count figure.
pub const T_ESTIMATE_LABEL: &str = "ESTIMATE";

const PF_VALID: &str = "pf accepts --bound analytic|minimized|empirical with --order 1|2|4|6|8, or --bound commutator with --order 1|2|4";
const TS_VALID: &str = "ts takes no --order, --bound or --mode";
const QSP_VALID: &str = "qsp accepts --mode segmented (no --bound), or --mode full with --bound analytic|empirical-ja; no --order";

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

// ---------- T-count estimation ----------

/// Per-rotation T cost `round(c1 log2(1/tau) + c0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TCalibration {
    pub c1: f64,
    pub c0: f64,
}

impl Default for TCalibration {
    fn default() -> Self {
        TCalibration { c1: 3.5, c0: 4.0 }
    }
}

/// T-count ESTIMATE with the default calibration; half of `epsilon` is spent on rotation synthesis.
pub fn t_estimate(rz_count: u128, epsilon: f64, toffoli_count: u128) -> u128 {
    t_estimate_with(rz_count, epsilon, toffoli_count, TCalibration::default())
}

pub fn t_estimate_with(rz_count: u128, epsilon: f64, toffoli_count: u128, cal: TCalibration) -> u128 {
    let tof = 7 * toffoli_count;
    if rz_count == 0 {
        return tof;
    }
    let tau = epsilon / 2.0 / rz_count as f64;
    let per = (cal.c1 * (1.0 / tau).log2() + cal.c0).round().max(0.0) as u128;
    rz_count * per + tof
}

// ---------- options ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmArg {
    Pf,
    Ts,
    Qsp,
}

impl AlgorithmArg {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmArg::Pf => "pf",
            AlgorithmArg::Ts => "ts",
            AlgorithmArg::Qsp => "qsp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoundArg {
    Analytic,
    Minimized,
    Commutator,
    Empirical,
    EmpiricalJa,
}

impl BoundArg {
    pub fn name(self) -> &'static str {
        match self {
            BoundArg::Analytic => "analytic",
            BoundArg::Minimized => "minimized",
            BoundArg::Commutator => "commutator",
            BoundArg::Empirical => "empirical",
            BoundArg::EmpiricalJa => "empirical-ja",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Segmented,
    Full,
}

impl ModeArg {
    pub fn name(self) -> &'static str {
        match self {
            ModeArg::Segmented => "segmented",
            ModeArg::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptArg {
    #[default]
    None,
    Whole,
    Periodic,
}

impl OptArg {
    pub fn name(self) -> &'static str {
        match self {
            OptArg::None => "none",
            OptArg::Whole => "whole",
            OptArg::Periodic => "periodic",
        }
    }

    fn mode(self) -> Option<OptMode> {
        match self {
            OptArg::None => None,
            OptArg::Whole => Some(OptMode::WholeCircuit),
            OptArg::Periodic => Some(OptMode::Periodic),
        }
    }
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_h_max() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Everything needed to rebuild one report bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateOptions {
    pub algorithm: AlgorithmArg,
    pub n: usize,
    #[serde(default)]
    pub order: Option<u32>,
    #[serde(default)]
    pub bound: Option<BoundArg>,
    #[serde(default)]
    pub mode: Option<ModeArg>,
    /// Evolution time; `n` when absent.
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_h_max")]
    pub h_max: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub optimize: OptArg,
    #[serde(default)]
    pub angles: Option<PathBuf>,
    #[serde(default)]
    pub calibration: TCalibration,
}

impl EstimateOptions {
    pub fn new(algorithm: AlgorithmArg, n: usize) -> Self {
        EstimateOptions {
            algorithm,
            n,
            order: None,
            bound: None,
            mode: None,
            t: None,
            epsilon: default_epsilon(),
            h_max: default_h_max(),
            seeds: default_seeds(),
            optimize: OptArg::None,
            angles: None,
            calibration: TCalibration::default(),
        }
    }

    pub fn time(&self) -> f64 {
        self.t.unwrap_or(self.n as f64)
    }
}

/// Validated algorithm configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved {
    Pf { order: PfOrder, bound: PfBoundKind },
    Ts,
    Qsp { mode: QspMode, bound: QspBound },
}

pub fn resolve(o: &EstimateOptions) -> Result<Resolved> {
    if o.seeds.is_empty() {
        return Err(usage("at least one seed is required"));
    }
    match o.algorithm {
        AlgorithmArg::Pf => {
            if o.mode.is_some() {
                return Err(usage(PF_VALID));
            }
            let order = PfOrder::new(o.order.unwrap_or(4)).map_err(|_| usage(PF_VALID))?;
            let bound = match o.bound.unwrap_or(BoundArg::Commutator) {
                BoundArg::Analytic => PfBoundKind::Analytic,
                BoundArg::Minimized => PfBoundKind::Minimized,
                BoundArg::Empirical => PfBoundKind::Empirical,
                BoundArg::Commutator if matches!(order.value(), 1 | 2 | 4) => PfBoundKind::Commutator,
                _ => return Err(usage(PF_VALID)),
            };
            Ok(Resolved::Pf { order, bound })
        }
        AlgorithmArg::Ts => {
            if o.order.is_some() || o.bound.is_some() || o.mode.is_some() {
                return Err(usage(TS_VALID));
            }
            Ok(Resolved::Ts)
        }
        AlgorithmArg::Qsp => {
            if o.order.is_some() {
                return Err(usage(QSP_VALID));
            }
            match (o.mode.unwrap_or(ModeArg::Segmented), o.bound) {
                (ModeArg::Segmented, None) => Ok(Resolved::Qsp { mode: QspMode::Segmented, bound: QspBound::Analytic }),
                (ModeArg::Full, None | Some(BoundArg::Analytic)) => Ok(Resolved::Qsp { mode: QspMode::Full, bound: QspBound::Analytic }),
                (ModeArg::Full, Some(BoundArg::EmpiricalJa)) => Ok(Resolved::Qsp { mode: QspMode::Full, bound: QspBound::EmpiricalJA }),
                _ => Err(usage(QSP_VALID)),
            }
        }
    }
}

// ---------- reports ----------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub r: u64,
    pub k: Option<u32>,
    pub cnot_pre: u64,
    pub rz_pre: u64,
    pub cnot_post: Option<u64>,
    pub rz_post: Option<u64>,
    pub t_estimate: u64,
}

/// One resource estimate; counts and `r` are means over `seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub algorithm: String,
    pub order: Option<u32>,
    pub mode: Option<String>,
    pub bound: Option<String>,
    pub n: usize,
    pub t: f64,
    pub epsilon: f64,
    pub h_max: f64,
    pub r: f64,
    pub k: Option<f64>,
    pub m: Option<u64>,
    pub q: Option<u64>,
    pub qubits: usize,
    pub counts_pre: BTreeMap<String, f64>,
    pub counts_post: Option<BTreeMap<String, f64>>,
    pub optimizer: String,
    pub t_estimate: f64,
    pub t_estimate_label: String,
    pub t_calibration: TCalibration,
    pub success_prob_lb: Option<f64>,
    pub angle_source: Option<String>,
    pub non_functional_for_simulation: bool,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSummary>,
    pub toolkit_version: String,
}

impl ResourceReport {
    pub fn pre(&self, name: &str) -> f64 {
        self.counts_pre.get(name).copied().unwrap_or(0.0)
    }

    pub fn post(&self, name: &str) -> Option<f64> {
        self.counts_post.as_ref().map(|m| m.get(name).copied().unwrap_or(0.0))
    }
}

struct SeedRun {
    summary: SeedSummary,
    qubits: usize,
    pre: GateCounts,
    post: Option<GateCounts>,
    success: Option<f64>,
    mq: Option<(u64, u64)>,
}

fn mean_counts(all: &[&GateCounts]) -> BTreeMap<String, f64> {
    let k = all.len() as f64;
    let mut out = BTreeMap::new();
    for c in all {
        for (name, v) in c.named() {
            *out.entry(name.to_string()).or_insert(0.0) += v as f64 / k;
        }
        *out.entry("TOTAL".to_string()).or_insert(0.0) += c.total() as f64 / k;
    }
    out
}

fn load_angles(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading angle file {}", path.display()))?;
    Ok(parse_angles(&text)?)
}

/// Builds the circuit for one seed; returns circuit, `r`, `K`, qubits, success bound and `(M, q)`.
fn build_circuit(
    o: &EstimateOptions,
    plan: Resolved,
    h: &SpinChainHamiltonian,
    seed: u64,
) -> Result<(CircuitBlock, u64, Option<u32>, usize, Option<f64>, Option<(u64, u64)>)> {
    let t = o.time();
    match plan {
        Resolved::Pf { order, bound } => {
            let p = plan_pf(h, order, bound, t, o.epsilon)?;
            Ok((synth_pf(h, &p)?, p.r, None, h.n, None, None))
        }
        Resolved::Ts => {
            let (c, params, lay) = synth_ts(h, t, o.epsilon)?;
            Ok((c, params.r, Some(params.k), lay.qubits, Some(params.success_prob_lb), None))
        }
        Resolved::Qsp { mode, bound } => {
            let p = plan_qsp(o.n, t, o.epsilon, mode, bound)?;
            let (c, lay) = match (&o.angles, mode) {
                (Some(path), _) => synth_qsp(h, &p, &AngleSource::Explicit(load_angles(path)?))?,
                (None, QspMode::Segmented) => synth_qsp_for_counts(h, &p, seed)?,
                (None, QspMode::Full) => synth_qsp(h, &p, &AngleSource::Placeholder(seed))?,
            };
            Ok((c, p.r, None, lay.qubits, Some(qsp_success_lb(o.epsilon)), Some((p.m, p.q))))
        }
    }
}

fn run_seed(o: &EstimateOptions, plan: Resolved, seed: u64) -> Result<SeedRun> {
    let h = build_hamiltonian(o.n, o.h_max, seed)?;
    let (circuit, r, k, qubits, success, mq) = build_circuit(o, plan, &h, seed)?;
    let pre = count_gates(&lower_toffolis(&circuit));
    let post = o.optimize.mode().map(|m| count_gates(&optimize(&circuit, m)));
    let basis = post.as_ref().unwrap_or(&pre);
    let t_est = t_estimate_with(basis.rz(), o.epsilon, basis.toffoli(), o.calibration) + basis.t_like();
    let summary = SeedSummary {
        seed,
        r,
        k,
        cnot_pre: pre.cnot() as u64,
        rz_pre: pre.rz() as u64,
        cnot_post: post.as_ref().map(|c| c.cnot() as u64),
        rz_post: post.as_ref().map(|c| c.rz() as u64),
        t_estimate: t_est as u64,
    };
    Ok(SeedRun { summary, qubits, pre, post, success, mq })
}

/// Builds the Hamiltonian, plans, synthesizes, optionally optimizes and counts, once per seed.
pub fn estimate(o: &EstimateOptions) -> Result<ResourceReport> {
    let plan = resolve(o)?;
    let runs = o.seeds.iter().map(|&s| run_seed(o, plan, s)).collect::<Result<Vec<_>>>()?;
    let k = runs.len() as f64;
    let mean = |f: &dyn Fn(&SeedRun) -> f64| runs.iter().map(f).sum::<f64>() / k;
    let (order, bound) = match plan {
        Resolved::Pf { order, .. } => (Some(order.value()), Some(o.bound.unwrap_or(BoundArg::Commutator).name().to_string())),
        Resolved::Ts => (None, None),
        Resolved::Qsp { mode: QspMode::Full, bound } => {
            let b = if bound == QspBound::EmpiricalJA { "empirical-ja" } else { "analytic" };
            (None, Some(b.to_string()))
        }
        Resolved::Qsp { .. } => (None, None),
    };
    let mode = match plan {
        Resolved::Qsp { mode, .. } => Some(if mode == QspMode::Full { "full" } else { "segmented" }.to_string()),
        _ => None,
    };
    let angle_source = match (plan, &o.angles) {
        (Resolved::Qsp { .. }, Some(p)) => Some(format!("file:{}", p.display())),
        (Resolved::Qsp { .. }, None) => Some("placeholder".to_string()),
        _ => None,
    };
    let has_k = runs.iter().all(|r| r.summary.k.is_some());
    let post_all: Option<Vec<&GateCounts>> = runs.iter().map(|r| r.post.as_ref()).collect();
    Ok(ResourceReport {
        algorithm: o.algorithm.name().to_string(),
        order,
        mode,
        bound,
        n: o.n,
        t: o.time(),
        epsilon: o.epsilon,
        h_max: o.h_max,
        r: mean(&|r| r.summary.r as f64),
        k: has_k.then(|| mean(&|r| r.summary.k.unwrap_or(0) as f64)),
        m: runs[0].mq.map(|x| x.0),
        q: runs[0].mq.map(|x| x.1),
        qubits: runs.iter().map(|r| r.qubits).max().unwrap_or(0),
        counts_pre: mean_counts(&runs.iter().map(|r| &r.pre).collect::<Vec<_>>()),
        counts_post: post_all.map(|p| mean_counts(&p)),
        optimizer: o.optimize.name().to_string(),
        t_estimate: mean(&|r| r.summary.t_estimate as f64),
        t_estimate_label: T_ESTIMATE_LABEL.to_string(),
        t_calibration: o.calibration,
        success_prob_lb: runs.iter().filter_map(|r| r.success).reduce(f64::min),
        non_functional_for_simulation: angle_source.as_deref() == Some("placeholder"),
        angle_source,
        seeds: o.seeds.clone(),
        per_seed: runs.into_iter().map(|r| r.summary).collect(),
        toolkit_version: VERSION.to_string(),
    })
}

// ---------- sweeps ----------

fn default_sweep_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// One series: fixed configuration over a list of chain lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub algorithm: AlgorithmArg,
    pub n: Vec<usize>,
    #[serde(default)]
    pub order: Option<u32>,
    #[serde(default)]
    pub bound: Option<BoundArg>,
    #[serde(default)]
    pub mode: Option<ModeArg>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_h_max")]
    pub h_max: f64,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub optimize: OptArg,
    #[serde(default)]
    pub angles: Option<PathBuf>,
    #[serde(default)]
    pub calibration: TCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub cells: Vec<SweepCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub series: usize,
    pub options: EstimateOptions,
    pub report: Option<ResourceReport>,
    pub error: Option<String>,
}

pub fn sweep_options(spec: &SweepSpec) -> Vec<(usize, EstimateOptions)> {
    let mut out = Vec::new();
    for (i, c) in spec.cells.iter().enumerate() {
        for &n in &c.n {
            out.push((
                i,
                EstimateOptions {
                    algorithm: c.algorithm,
                    n,
                    order: c.order,
                    bound: c.bound,
                    mode: c.mode,
                    t: c.t,
                    epsilon: c.epsilon,
                    h_max: c.h_max,
                    seeds: c.seeds.clone(),
                    optimize: c.optimize,
                    angles: c.angles.clone(),
                    calibration: c.calibration,
                },
            ));
        }
    }
    out
}

pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |k| k.get()))
}

/// Runs every row; failures are kept per row and do not stop the sweep. Row order is spec order.
pub fn sweep(spec: &SweepSpec, threads: usize) -> Vec<SweepRow> {
    let jobs = sweep_options(spec);
    let slots: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads.max(1).min(jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((series, o)) = jobs.get(i) else { break };
                let (report, error) = match estimate(o) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(format!("{e:#}"))),
                };
                let row = SweepRow { series: *series, options: o.clone(), report, error };
                slots.lock().expect("no poisoned workers")[i] = Some(row);
            });
        }
    });
    slots.into_inner().expect("no poisoned workers").into_iter().map(|r| r.expect("every job ran")).collect()
}

// ---------- output ----------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Circ,
}

/// Fixed CSV column order.
#[derive(Debug, Serialize)]
struct CsvRow {
    series: usize,
    algorithm: String,
    order: Option<u32>,
    mode: Option<String>,
    bound: Option<String>,
    n: usize,
    t: f64,
    epsilon: f64,
    r: Option<f64>,
    k: Option<f64>,
    m: Option<u64>,
    q: Option<u64>,
    qubits: Option<usize>,
    seeds: String,
    cnot_pre: Option<f64>,
    rz_pre: Option<f64>,
    t_pre: Option<f64>,
    h_pre: Option<f64>,
    toffoli_pre: Option<f64>,
    total_pre: Option<f64>,
    cnot_post: Option<f64>,
    rz_post: Option<f64>,
    t_post: Option<f64>,
    total_post: Option<f64>,
    optimizer: String,
    t_estimate: Option<f64>,
    t_estimate_label: String,
    success_prob_lb: Option<f64>,
    non_functional_for_simulation: Option<bool>,
    error: Option<String>,
}

fn csv_row(series: usize, o: &EstimateOptions, r: Option<&ResourceReport>, error: Option<&str>) -> CsvRow {
    let pre = |k: &str| r.map(|r| r.pre(k));
    let post = |k: &str| r.and_then(|r| r.post(k));
    let t_sum = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a + b);
    CsvRow {
        series,
        algorithm: o.algorithm.name().to_string(),
        order: r.and_then(|r| r.order).or(o.order),
        mode: r.and_then(|r| r.mode.clone()),
        bound: r.and_then(|r| r.bound.clone()),
        n: o.n,
        t: o.time(),
        epsilon: o.epsilon,
        r: r.map(|r| r.r),
        k: r.and_then(|r| r.k),
        m: r.and_then(|r| r.m),
        q: r.and_then(|r| r.q),
        qubits: r.map(|r| r.qubits),
        seeds: o.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
        cnot_pre: pre("CNOT"),
        rz_pre: pre("RZ"),
        t_pre: t_sum(pre("T"), pre("TDG")),
        h_pre: pre("H"),
        toffoli_pre: pre("CCX"),
        total_pre: pre("TOTAL"),
        cnot_post: post("CNOT"),
        rz_post: post("RZ"),
        t_post: t_sum(post("T"), post("TDG")),
        total_post: post("TOTAL"),
        optimizer: o.optimize.name().to_string(),
        t_estimate: r.map(|r| r.t_estimate),
        t_estimate_label: T_ESTIMATE_LABEL.to_string(),
        success_prob_lb: r.and_then(|r| r.success_prob_lb),
        non_functional_for_simulation: r.map(|r| r.non_functional_for_simulation),
        error: error.map(str::to_string),
    }
}

fn to_csv(rows: impl IntoIterator<Item = CsvRow>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn report_csv(o: &EstimateOptions, r: &ResourceReport) -> Result<String> {
    to_csv([csv_row(0, o, Some(r), None)])
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    to_csv(rows.iter().map(|r| csv_row(r.series, &r.options, r.report.as_ref(), r.error.as_deref())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes())?;
            Ok(s.flush()?)
        }
    }
}

// ---------- command line ----------

#[derive(Debug, Parser)]
#[command(name = "hamsynth", version, about = "Circuit synthesis and resource estimation for the random-field Heisenberg chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize, optionally optimize and count; prints a resource report.
    Estimate(EstimateArgs),
    /// Segment counts and algorithm parameters without synthesis.
    Bound(BoundArgs),
    /// Dump the synthesized circuit.
    Synth(SynthArgs),
    /// Optimize a circuit file; prints counts before and after.
    Optimize(OptimizeArgs),
    /// Spectral error of a circuit file or of a product formula against exact evolution.
    Simulate(SimulateArgs),
    /// Empirical segment counts over a range of chain lengths and their power-law fit.
    EmpiricalFit(FitArgs),
    /// Run every cell of a JSON sweep spec.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(value_enum)]
    pub algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 13)]
    pub n: usize,
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long, value_enum)]
    pub bound: Option<BoundArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Evolution time (default n).
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h_max: f64,
    /// First field seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds averaged.
    #[arg(long, default_value_t = 1)]
    pub samples: u64,
    /// QSP phase-angle file (JSON array of arrays).
    #[arg(long)]
    pub angles: Option<PathBuf>,
}

impl ProblemArgs {
    pub fn options(&self) -> EstimateOptions {
        EstimateOptions {
            algorithm: self.algorithm,
            n: self.n,
            order: self.order,
            bound: self.bound,
            mode: self.mode,
            t: self.t,
            epsilon: self.epsilon,
            h_max: self.h_max,
            seeds: (self.seed..self.seed + self.samples).collect(),
            optimize: OptArg::None,
            angles: self.angles.clone(),
            calibration: TCalibration::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "none")]
    pub optimize: OptArg,
    /// Slope of the per-rotation T cost in log2(1/tau).
    #[arg(long, default_value_t = 3.5)]
    pub t_c1: f64,
    /// Offset of the per-rotation T cost.
    #[arg(long, default_value_t = 4.0)]
    pub t_c0: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "none")]
    pub optimize: OptArg,
    /// Replace Toffoli macros by Clifford+T.
    #[arg(long)]
    pub lower: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptModeArg {
    Whole,
    Periodic,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "periodic")]
    pub mode: OptModeArg,
    /// Where to write the optimized circuit.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Circuit on exactly n qubits; compared with exp(-iHt).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub h_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub order: u32,
    /// Segment count; searched for the smallest passing value when absent.
    #[arg(long)]
    pub r: Option<u64>,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 10)]
    pub cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 4)]
    pub order: u32,
    #[arg(long, default_value_t = 5)]
    pub n_min: usize,
    #[arg(long, default_value_t = 8)]
    pub n_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub samples: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub h_max: f64,
    #[arg(long, default_value_t = 10)]
    pub cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep spec.
    pub spec: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub n: usize,
    pub r_mean: f64,
    pub r_per_seed: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFitReport {
    pub order: u32,
    pub epsilon: f64,
    pub h_max: f64,
    pub seeds: Vec<u64>,
    pub points: Vec<FitPoint>,
    pub fit: FitResult,
    pub toolkit_version: String,
}

/// Mean empirical `r` at `t = n` for each `n`, then a power-law fit.
pub fn empirical_fit(order: u32, ns: &[usize], seeds: &[u64], epsilon: f64, h_max: f64, cap: usize) -> Result<EmpiricalFitReport> {
    let ord = PfOrder::new(order)?;
    let mut points = Vec::new();
    for &n in ns {
        let mut rs = Vec::new();
        for &s in seeds {
            let h = build_hamiltonian(n, h_max, s)?;
            rs.push(empirical_r_search(&h, ord, n as f64, epsilon, cap)?);
        }
        let r_mean = rs.iter().sum::<u64>() as f64 / rs.len() as f64;
        points.push(FitPoint { n, r_mean, r_per_seed: rs });
    }
    let fit = powerlaw_fit(&points.iter().map(|p| (p.n as f64, p.r_mean)).collect::<Vec<_>>())?;
    Ok(EmpiricalFitReport { order, epsilon, h_max, seeds: seeds.to_vec(), points, fit, toolkit_version: VERSION.to_string() })
}

fn bound_json(o: &EstimateOptions) -> Result<serde_json::Value> {
    let plan = resolve(o)?;
    let seed = o.seeds[0];
    let h = build_hamiltonian(o.n, o.h_max, seed)?;
    let t = o.time();
    let body = match plan {
        Resolved::Pf { order, bound } => serde_json::to_value(plan_pf(&h, order, bound, t, o.epsilon)?)?,
        Resolved::Ts => serde_json::to_value(ts_params(&h, t, o.epsilon)?)?,
        Resolved::Qsp { mode, bound } => serde_json::to_value(plan_qsp(o.n, t, o.epsilon, mode, bound)?)?,
    };
    Ok(serde_json::json!({
        "algorithm": o.algorithm.name(),
        "seed": seed,
        "h_max": o.h_max,
        "lambda": h.lambda,
        "alpha": h.alpha,
        "plan": body,
        "toolkit_version": VERSION,
    }))
}

fn read_circuit(path: &Path) -> Result<CircuitBlock> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(deserialize(&text)?)
}

fn counts_json(c: &GateCounts) -> serde_json::Value {
    let mut m: BTreeMap<String, u64> = c.named().into_iter().map(|(k, v)| (k.to_string(), v as u64)).collect();
    m.insert("TOTAL".to_string(), c.total() as u64);
    serde_json::json!({ "qubits": c.qubits, "counts": m })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate(a) => {
            let mut o = a.problem.options();
            o.optimize = a.optimize;
            o.calibration = TCalibration { c1: a.t_c1, c0: a.t_c0 };
            let r = estimate(&o)?;
            let text = match a.output.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&r)?,
                Format::Csv => report_csv(&o, &r)?,
                Format::Circ => return Err(usage("estimate writes json or csv; use `synth` for circuits")),
            };
            emit(a.output.out.as_deref(), &text)
        }
        Command::Bound(a) => emit(a.out.as_deref(), &to_json(&bound_json(&a.problem.options())?)?),
        Command::Synth(a) => {
            let o = a.problem.options();
            let plan = resolve(&o)?;
            if let Resolved::Qsp { mode: QspMode::Segmented, .. } = plan {
                if o.angles.is_none() {
                    return Err(usage("segmented qsp synthesis needs --angles; `estimate` gives its counts without them"));
                }
            }
            let seed = o.seeds[0];
            let h = build_hamiltonian(o.n, o.h_max, seed)?;
            let (mut c, ..) = build_circuit(&o, plan, &h, seed)?;
            if let Some(m) = a.optimize.mode() {
                c = optimize(&c, m);
            } else if a.lower {
                c = lower_toffolis(&c);
            }
            let text = match a.output.format.unwrap_or(Format::Circ) {
                Format::Circ => serialize(&c),
                Format::Json => to_json(&counts_json(&count_gates(&c)))?,
                Format::Csv => return Err(usage("synth writes circ or json")),
            };
            emit(a.output.out.as_deref(), &text)
        }
        Command::Optimize(a) => {
            let c = read_circuit(&a.input)?;
            let mode = match a.mode {
                OptModeArg::Whole => OptMode::WholeCircuit,
                OptModeArg::Periodic => OptMode::Periodic,
            };
            let before = count_gates(&c);
            let out = optimize(&c, mode);
            let after = count_gates(&out);
            if let Some(p) = &a.out {
                emit(Some(p), &serialize(&out))?;
            }
            emit(None, &to_json(&serde_json::json!({ "before": counts_json(&before), "after": counts_json(&after) }))?)
        }
        Command::Simulate(a) => {
            let h = build_hamiltonian(a.n, a.h_max, a.seed)?;
            let t = a.t.unwrap_or(a.n as f64);
            let v = if let Some(path) = &a.input {
                let c = read_circuit(path)?;
                if c.qubits != a.n {
                    return Err(usage(format!("circuit has {} qubits, expected exactly n = {}", c.qubits, a.n)));
                }
                let u = circuit_unitary(&c, a.cap)?;
                let e = exact_evolution(&h, t)?;
                serde_json::json!({
                    "n": a.n, "t": t, "seed": a.seed, "h_max": a.h_max,
                    "spectral_distance": spectral_distance(&u.mat, &e.mat)?,
                    "distance_up_to_phase": distance_up_to_phase(&u.mat, &e.mat)?,
                })
            } else {
                let order = PfOrder::new(a.order)?;
                let r = match a.r {
                    Some(r) => r,
                    None => empirical_r_search(&h, order, t, a.epsilon, a.cap)?,
                };
                let err = EmpiricalTarget::new(&h, order, t, a.cap)?.error(r);
                serde_json::json!({ "n": a.n, "t": t, "seed": a.seed, "h_max": a.h_max, "order": a.order, "r": r, "spectral_error": err })
            };
            emit(a.out.as_deref(), &to_json(&v)?)
        }
        Command::EmpiricalFit(a) => {
            if a.n_min < 3 || a.n_max < a.n_min + 2 {
                return Err(usage("empirical-fit needs 3 <= n-min and at least three chain lengths"));
            }
            let ns: Vec<usize> = (a.n_min..=a.n_max).collect();
            let seeds: Vec<u64> = (a.seed..a.seed + a.samples).collect();
            let rep = empirical_fit(a.order, &ns, &seeds, a.epsilon, a.h_max, a.cap)?;
            emit(a.out.as_deref(), &to_json(&rep)?)
        }
        Command::Sweep(a) => {
            let text = std::fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
            let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| usage(format!("sweep spec: {e}")))?;
            let rows = sweep(&spec, thread_count());
            let text = match a.output.format.unwrap_or(Format::Csv) {
                Format::Csv => sweep_csv(&rows)?,
                Format::Json => to_json(&rows)?,
                Format::Circ => return Err(usage("sweep writes csv or json")),
            };
            emit(a.output.out.as_deref(), &text)
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<CliError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_estimate_examples() {
        assert_eq!(t_estimate(0, 1e-3, 10), 70);
        let v = t_estimate(7_562_113, 1e-3, 0) as f64;
        assert!((v / 924_482_148.0 - 1.0).abs() < 0.01, "{v}");
        let per1 = t_estimate(1 << 20, 1e-3, 0) as f64 / (1u64 << 20) as f64;
        let per2 = t_estimate(1 << 21, 1e-3, 0) as f64 / (1u64 << 21) as f64;
        assert!((per2 - per1 - 3.5).abs() <= 1.0);
    }

    #[test]
    fn invalid_combinations_are_usage_errors() {
        let mut o = EstimateOptions::new(AlgorithmArg::Pf, 13);
        o.order = Some(6);
        o.bound = Some(BoundArg::Commutator);
        let e = resolve(&o).unwrap_err();
        assert!(matches!(e.downcast_ref::<CliError>(), Some(CliError::Usage(m)) if m.contains("1|2|4")));
        let mut o = EstimateOptions::new(AlgorithmArg::Ts, 13);
        o.order = Some(4);
        assert!(resolve(&o).unwrap_err().downcast_ref::<CliError>().is_some());
        let mut o = EstimateOptions::new(AlgorithmArg::Qsp, 13);
        o.bound = Some(BoundArg::EmpiricalJa);
        assert!(resolve(&o).unwrap_err().downcast_ref::<CliError>().is_some());
        o.mode = Some(ModeArg::Full);
        assert!(resolve(&o).is_ok());
    }

    #[test]
    fn pf_report_has_provenance_and_exact_counts() {
        let o = EstimateOptions::new(AlgorithmArg::Pf, 13);
        let r = estimate(&o).unwrap();
        assert_eq!(r.r, 23268.0);
        assert_eq!(r.pre("CNOT"), 18_149_040.0);
        assert_eq!(r.qubits, 13);
        assert_eq!(r.t_estimate_label, "ESTIMATE");
        assert_eq!(r.bound.as_deref(), Some("commutator"));
        let back: ResourceReport = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn qsp_full_placeholder_is_flagged() {
        let mut o = EstimateOptions::new(AlgorithmArg::Qsp, 4);
        o.mode = Some(ModeArg::Full);
        o.t = Some(1.0);
        let r = estimate(&o).unwrap();
        assert!(r.non_functional_for_simulation);
        assert_eq!(r.m.map(|m| m % 2), Some(0));
    }

    #[test]
    fn sweep_is_deterministic_and_keeps_failures() {
        let spec: SweepSpec = serde_json::from_str(
            r#"{"cells":[{"algorithm":"pf","order":2,"bound":"commutator","n":[4,5],"seeds":[0,1]},
                         {"algorithm":"pf","order":6,"bound":"commutator","n":[4]},
                         {"algorithm":"ts","n":[]}]}"#,
        )
        .unwrap();
        let a = sweep_csv(&sweep(&spec, 2)).unwrap();
        let b = sweep_csv(&sweep(&spec, 1)).unwrap();
        assert_eq!(a, b);
        let rows = sweep(&spec, 1);
        assert_eq!(rows.len(), 3);
        assert!(rows[2].error.as_deref().unwrap().contains("commutator"));
        assert!(rows[0].report.is_some());
    }
}
