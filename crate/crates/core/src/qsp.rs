//! Quantum signal processing: segment counts, Jacobi-Anger truncation and phased-iterate circuits.

use crate::circuit::{CircuitBlock, Gate, Qubit};
use crate::gadgets::{mcx_ancillas, mcz, rz};
use crate::model::SpinChainHamiltonian;
use crate::selectv::{ancillas_needed, control_width, synth_select, SelectRegisters, SelectSpec};
use crate::ts::{coeff_prep_gates, leaf_weights, term_targets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Iterates per segment in segmented mode.
pub const DEFAULT_M: u64 = 28;

#[derive(Debug, Error, PartialEq)]
pub enum QspError {
    #[error("iterate count must be a positive even number, got {0}")]
    OddM(u64),
    #[error("evolution time must be positive, got {0}")]
    BadTime(f64),
    #[error("epsilon must lie in (0, 1/2), got {0}")]
    BadEpsilon(f64),
    #[error("segmented synthesis needs genuine phase angles")]
    PlaceholderRefused,
    #[error("angle file lists {got} segments of lengths {lens:?}, expected {want} arrays of {m}")]
    AngleShape { got: usize, lens: Vec<usize>, want: u64, m: u64 },
    #[error("Bessel recurrence did not converge for x = {0}")]
    Bessel(f64),
    #[error("angle file: {0}")]
    AngleFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QspMode {
    Segmented,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QspBound {
    Analytic,
    EmpiricalJA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AngleSource {
    /// One array of `M` phases per segment, or a single array shared by all segments.
    Explicit(Vec<Vec<f64>>),
    /// Seeded uniform phases; circuit counts are valid but the circuit is not a simulation.
    Placeholder(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QspPlan {
    pub mode: QspMode,
    pub m: u64,
    pub q: u64,
    pub r: u64,
    pub alpha_nominal: f64,
    pub t: f64,
    pub epsilon: f64,
    pub placeholder_angles: bool,
}

fn check(t: f64, epsilon: f64) -> Result<(), QspError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(QspError::BadTime(t));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(QspError::BadEpsilon(epsilon));
    }
    Ok(())
}

fn ln_factorial(q: u64) -> f64 {
    (2..=q).map(|k| (k as f64).ln()).sum()
}

/// `ln(4 x^q / (2^q q!))`, the truncation bound of one segment with `x = alpha t`.
fn ln_truncation(x: f64, q: u64) -> f64 {
    4f64.ln() + q as f64 * (x / 2.0).ln() - ln_factorial(q)
}

/// Smallest `r` with `4 (alpha t / r)^q / (2^q q!) <= epsilon / (8 r)` at `alpha = 4n`.
pub fn qsp_segments(n: usize, t: f64, epsilon: f64, m: u64) -> Result<u64, QspError> {
    check(t, epsilon)?;
    if m == 0 || m % 2 == 1 {
        return Err(QspError::OddM(m));
    }
    let q = m / 2 + 1;
    let x = 4.0 * n as f64 * t;
    let ok = |r: u64| ln_truncation(x / r as f64, q) <= (epsilon / (8.0 * r as f64)).ln();
    Ok(crate::pf::search_min_r(ok))
}

/// `J_0(x) ..= J_kmax(x)` by Miller's downward recurrence normalized with `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j(x: f64, kmax: usize) -> Result<Vec<f64>, QspError> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(QspError::Bessel(x));
    }
    if x == 0.0 {
        let mut v = vec![0.0; kmax + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    let start = kmax.max(x.ceil() as usize) + 60 + (10.0 * x.cbrt()) as usize;
    let start = start + start % 2;
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for k in (1..=start).rev() {
        vals[k - 1] = 2.0 * k as f64 / x * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = vals[0] + 2.0 * vals.iter().step_by(2).skip(1).sum::<f64>();
    if !(norm.is_finite() && norm != 0.0) {
        return Err(QspError::Bessel(x));
    }
    vals.truncate(kmax + 1);
    vals.resize(kmax + 1, 0.0);
    Ok(vals.into_iter().map(|v| v / norm).collect())
}

/// Iterate count `M` for simulating `t` in one QSP run.
pub fn qsp_full_m(n: usize, t: f64, epsilon: f64, bound: QspBound) -> Result<u64, QspError> {
    check(t, epsilon)?;
    let x = 4.0 * n as f64 * t;
    let q = match bound {
        QspBound::Analytic => {
            let target = (epsilon / 8.0).ln();
            (1u64..).find(|&q| q as f64 > x / 2.0 && ln_truncation(x, q) <= target).expect("bound decays")
        }
        QspBound::EmpiricalJA => {
            let kmax = (2.0 * x) as usize + 200;
            let j = bessel_j(x, kmax)?;
            let mut tail = vec![0.0; kmax + 2];
            for k in (0..=kmax).rev() {
                tail[k] = tail[k + 1] + j[k].abs();
            }
            (1..=kmax as u64).find(|&q| 16.0 * tail[q as usize] <= epsilon).ok_or(QspError::Bessel(x))?
        }
    };
    Ok(2 * (q - 1))
}

/// Success probability lower bound after postselection.
pub fn qsp_success_lb(epsilon: f64) -> f64 {
    1.0 - 2.0 * epsilon
}

pub fn plan_qsp(n: usize, t: f64, epsilon: f64, mode: QspMode, bound: QspBound) -> Result<QspPlan, QspError> {
    let (m, r) = match mode {
        QspMode::Segmented => (DEFAULT_M, qsp_segments(n, t, epsilon, DEFAULT_M)?),
        QspMode::Full => (qsp_full_m(n, t, epsilon, bound)?, 1),
    };
    Ok(QspPlan {
        mode,
        m,
        q: m / 2 + 1,
        r,
        alpha_nominal: 4.0 * n as f64,
        t,
        epsilon,
        placeholder_angles: mode == QspMode::Full,
    })
}

/// Seeded uniform phases in `[0, 2 pi)`, one array of `m` per segment.
pub fn placeholder_angles(m: u64, segments: u64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..segments).map(|_| (0..m).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()).collect()
}

pub fn parse_angles(json: &str) -> Result<Vec<Vec<f64>>, QspError> {
    serde_json::from_str(json).map_err(|e| QspError::AngleFile(e.to_string()))
}

pub fn angles_to_json(angles: &[Vec<f64>]) -> String {
    serde_json::to_string_pretty(angles).expect("plain arrays serialize")
}

/// Qubit assignment: system, |G> register, phase qubit, shared pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QspLayout {
    pub n: usize,
    pub w: usize,
    pub g: Vec<Qubit>,
    pub c: Qubit,
    pub pool: Vec<Qubit>,
    pub qubits: usize,
}

impl QspLayout {
    pub fn new(n: usize, num_terms: usize) -> Self {
        let w = control_width(num_terms);
        let g: Vec<Qubit> = (n..n + w).collect();
        let c = n + w;
        let pool_len = ancillas_needed(w, true).max(mcx_ancillas(w));
        QspLayout { n, w, g, c, pool: (c + 1..c + 1 + pool_len).collect(), qubits: c + 1 + pool_len }
    }
}

struct Parts {
    prep: Vec<Gate>,
    unprep: Vec<Gate>,
    select: Vec<Gate>,
    reflect: Vec<Gate>,
}

fn parts(h: &SpinChainHamiltonian, lay: &QspLayout) -> Parts {
    let mut prep = Vec::new();
    coeff_prep_gates(&lay.g, &leaf_weights(&h.terms, lay.w), &mut prep);
    let unprep = prep.iter().rev().map(Gate::inverse).collect();
    let spec = SelectSpec { w: lay.w, targets: term_targets(&h.terms), extra_control: Some(lay.c) };
    let regs = SelectRegisters { controls: lay.g.clone(), ancillas: lay.pool[..lay.w].to_vec() };
    let mut select = Vec::new();
    synth_select(&spec, &regs, lay.qubits).expect("layout sized for the walk").for_each_gate(&mut |g| select.push(*g));
    let mut reflect = Vec::new();
    reflect.push(Gate::Z(lay.c));
    reflect.extend(lay.g.iter().map(|&q| Gate::X(q)));
    let mut ops = vec![lay.c];
    ops.extend_from_slice(&lay.g);
    mcz(&ops, &lay.pool, &mut reflect);
    reflect.extend(lay.g.iter().map(|&q| Gate::X(q)));
    Parts { prep, unprep, select, reflect }
}

/// One run of `angles.len()` phased iterates alternating `V_phi` and `V_{phi + pi}^dag`.
fn iterate_run(p: &Parts, lay: &QspLayout, angles: &[f64], out: &mut Vec<Gate>) {
    let c = lay.c;
    out.push(Gate::H(c));
    out.extend_from_slice(&p.prep);
    for pair in angles.chunks(2) {
        let (fa, fb) = (pair[0], pair[1] + PI);
        rz(-fa, c, out);
        out.extend([Gate::H(c), Gate::Sdg(c)]);
        out.extend_from_slice(&p.select);
        out.extend_from_slice(&p.unprep);
        out.extend_from_slice(&p.reflect);
        out.push(Gate::H(c));
        rz(fa - fb, c, out);
        out.push(Gate::H(c));
        out.extend_from_slice(&p.reflect);
        out.extend_from_slice(&p.prep);
        out.extend(p.select.iter().rev().map(Gate::inverse));
        out.extend([Gate::S(c), Gate::H(c)]);
        rz(fb, c, out);
    }
    out.extend_from_slice(&p.unprep);
    out.push(Gate::H(c));
}

/// Builds the circuit; `Segmented` refuses placeholder phases.
pub fn synth_qsp(h: &SpinChainHamiltonian, plan: &QspPlan, angles: &AngleSource) -> Result<(CircuitBlock, QspLayout), QspError> {
    if plan.m == 0 || plan.m % 2 == 1 {
        return Err(QspError::OddM(plan.m));
    }
    let table = match angles {
        AngleSource::Explicit(a) => a.clone(),
        AngleSource::Placeholder(_) if plan.mode == QspMode::Segmented => return Err(QspError::PlaceholderRefused),
        AngleSource::Placeholder(seed) => placeholder_angles(plan.m, plan.r, *seed),
    };
    build(h, plan, &table)
}

/// Gate counts of a segmented plan under placeholder phases; counts do not depend on phase values.
pub fn synth_qsp_for_counts(h: &SpinChainHamiltonian, plan: &QspPlan, seed: u64) -> Result<(CircuitBlock, QspLayout), QspError> {
    let table = placeholder_angles(plan.m, 1, seed);
    build(h, plan, &table)
}

fn build(h: &SpinChainHamiltonian, plan: &QspPlan, table: &[Vec<f64>]) -> Result<(CircuitBlock, QspLayout), QspError> {
    let shape_ok = table.iter().all(|a| a.len() as u64 == plan.m) && (table.len() == 1 || table.len() as u64 == plan.r);
    if !shape_ok {
        return Err(QspError::AngleShape {
            got: table.len(),
            lens: table.iter().map(Vec::len).collect(),
            want: plan.r,
            m: plan.m,
        });
    }
    let lay = QspLayout::new(h.n, h.len());
    let p = parts(h, &lay);
    let mut c = CircuitBlock::new(lay.qubits);
    let segment = |angles: &[f64]| {
        let mut g = Vec::new();
        iterate_run(&p, &lay, angles, &mut g);
        CircuitBlock::from_gates(lay.qubits, g)
    };
    if table.len() == 1 {
        c.push_repeat(plan.r, segment(&table[0]));
    } else {
        for a in table {
            c.append(segment(a));
        }
    }
    Ok((c, lay))
}
