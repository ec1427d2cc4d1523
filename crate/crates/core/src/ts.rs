//! Truncated Taylor series simulation: parameters, state preparation and the amplified segment.

use crate::circuit::{CircuitBlock, Gate, Qubit};
use crate::gadgets::{mcx_ancillas, multiplexed_ry, reflect_zero, ry};
use crate::model::{PauliTerm, SpinChainHamiltonian};
use crate::selectv::{ancillas_needed, control_width, leaf_register_value, synth_select, PauliTarget, SelectRegisters, SelectSpec};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use thiserror::Error;

/// Largest truncation order searched.
pub const MAX_K: u32 = 40;

#[derive(Debug, Error, PartialEq)]
pub enum TsError {
    #[error("evolution time must be positive, got {0}")]
    BadTime(f64),
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("no truncation order up to {MAX_K} reaches the error target")]
    KOverflow,
    #[error("truncation order must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsParams {
    pub r: u64,
    pub k: u32,
    pub t_seg: f64,
    pub t_rem: f64,
    pub xi: f64,
    pub success_prob_lb: f64,
    pub alpha: f64,
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Per-segment error parameter for truncation order `k` at `alpha * t_seg = ln 2`.
pub fn per_segment_xi(k: u32) -> f64 {
    let delta = 2.0 * LN_2.powi(k as i32 + 1) / factorial(k + 1);
    (delta * delta + 3.0 * delta + 4.0) / 2.0 * delta
}

/// Segment count and truncation order for total evolution `t` with term weight `alpha`.
pub fn ts_params_alpha(alpha: f64, t: f64, epsilon: f64) -> Result<TsParams, TsError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(TsError::BadTime(t));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(TsError::BadEpsilon(epsilon));
    }
    let t_seg = LN_2 / alpha;
    let r = (t / t_seg).ceil().max(1.0) as u64;
    let t_rem = t - (r - 1) as f64 * t_seg;
    let target = (epsilon * epsilon - epsilon.powi(4) / 4.0).sqrt();
    let k = (1..=MAX_K).find(|&k| r as f64 * per_segment_xi(k) <= target).ok_or(TsError::KOverflow)?;
    let xi = r as f64 * per_segment_xi(k);
    Ok(TsParams { r, k, t_seg, t_rem, xi, success_prob_lb: (1.0 - xi).powi(2), alpha })
}

pub fn ts_params(h: &SpinChainHamiltonian, t: f64, epsilon: f64) -> Result<TsParams, TsError> {
    ts_params_alpha(h.alpha, t, epsilon)
}

/// Prepares `sum_k sqrt(beta_k / s) |1^k 0^(K-k)>` with `beta_k = (alpha t)^k / k!`.
pub fn unary_prep_gates(qubits: &[Qubit], alpha_t: f64, out: &mut Vec<Gate>) {
    let kk = qubits.len();
    let beta: Vec<f64> = (0..=kk as u32).map(|k| alpha_t.powi(k as i32) / factorial(k)).collect();
    for (i, &q) in qubits.iter().enumerate() {
        let tail: f64 = beta[i..].iter().sum();
        let theta = 2.0 * (beta[i] / tail).sqrt().acos();
        if i == 0 {
            ry(q, theta, out);
        } else {
            multiplexed_ry(&[qubits[i - 1]], q, &[0.0, theta], out);
        }
    }
}

pub fn synth_unary_prep(k: u32, alpha_t: f64) -> Result<CircuitBlock, TsError> {
    if k == 0 {
        return Err(TsError::ZeroK);
    }
    let qubits: Vec<Qubit> = (0..k as usize).collect();
    let mut g = Vec::new();
    unary_prep_gates(&qubits, alpha_t, &mut g);
    Ok(CircuitBlock::from_gates(k as usize, g))
}

/// Prepares `sum_v sqrt(weights[v]) |v>` on `reg` (most significant first) with a tree of
/// uniformly controlled rotations. Weights need not be normalized.
pub fn coeff_prep_gates(reg: &[Qubit], weights: &[f64], out: &mut Vec<Gate>) {
    let w = reg.len();
    assert_eq!(weights.len(), 1 << w, "one weight per register value");
    for l in 0..w {
        let thetas: Vec<f64> = (0..1usize << l)
            .map(|x| {
                let prefix = (0..l).fold(0usize, |p, j| (p << 1) | ((x >> j) & 1));
                let span = 1usize << (w - l - 1);
                let base = prefix << (w - l);
                let w0: f64 = weights[base..base + span].iter().sum();
                let w1: f64 = weights[base + span..base + 2 * span].iter().sum();
                2.0 * w1.sqrt().atan2(w0.sqrt())
            })
            .collect();
        multiplexed_ry(&reg[..l], reg[l], &thetas, out);
    }
}

/// Register weights `|c_j|` placed on the value that selects leaf `j`.
pub fn leaf_weights(terms: &[PauliTerm], w: usize) -> Vec<f64> {
    let mut weights = vec![0.0; 1 << w];
    for (j, term) in terms.iter().enumerate() {
        weights[leaf_register_value(w, j)] = term.coeff.abs();
    }
    weights
}

pub fn synth_coeff_prep(h: &SpinChainHamiltonian) -> CircuitBlock {
    let w = control_width(h.len());
    let reg: Vec<Qubit> = (0..w).collect();
    let mut g = Vec::new();
    coeff_prep_gates(&reg, &leaf_weights(&h.terms, w), &mut g);
    CircuitBlock::from_gates(w, g)
}

/// Select targets for a term list: each Pauli string on the system register with its sign.
pub fn term_targets(terms: &[PauliTerm]) -> Vec<PauliTarget> {
    terms.iter().map(|t| PauliTarget { ops: t.ops.clone(), negate: t.coeff < 0.0 }).collect()
}

/// Qubit assignment: system, unary, binary registers, rotation ancilla, then a shared pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsLayout {
    pub n: usize,
    pub k: usize,
    pub w: usize,
    pub unary: Vec<Qubit>,
    pub binary: Vec<Vec<Qubit>>,
    pub iso: Qubit,
    pub pool: Vec<Qubit>,
    pub qubits: usize,
}

impl TsLayout {
    pub fn new(n: usize, num_terms: usize, k: usize) -> Self {
        let w = control_width(num_terms);
        let unary: Vec<Qubit> = (n..n + k).collect();
        let binary: Vec<Vec<Qubit>> = (0..k).map(|j| (n + k + j * w..n + k + (j + 1) * w).collect()).collect();
        let iso = n + k + k * w;
        let m = k + k * w + 1;
        let pool_len = ancillas_needed(w, true).max(mcx_ancillas(m - 1));
        let pool: Vec<Qubit> = (iso + 1..iso + 1 + pool_len).collect();
        TsLayout { n, k, w, unary, binary, iso, pool, qubits: iso + 1 + pool_len }
    }

    /// Every qubit reflected by `R`.
    pub fn reflected(&self) -> Vec<Qubit> {
        let mut q = self.unary.clone();
        q.extend(self.binary.iter().flatten());
        q.push(self.iso);
        q
    }
}

/// A term list with its weight, the input to segment synthesis.
#[derive(Debug, Clone)]
pub struct LcuInstance {
    pub n: usize,
    pub terms: Vec<PauliTerm>,
    pub alpha: f64,
}

impl LcuInstance {
    pub fn from_hamiltonian(h: &SpinChainHamiltonian) -> Self {
        LcuInstance { n: h.n, terms: h.terms.clone(), alpha: h.alpha }
    }
}

fn prep_b(inst: &LcuInstance, lay: &TsLayout, dt: f64, out: &mut Vec<Gate>) {
    unary_prep_gates(&lay.unary, inst.alpha * dt, out);
    let weights = leaf_weights(&inst.terms, lay.w);
    for reg in &lay.binary {
        coeff_prep_gates(reg, &weights, out);
    }
}

fn select_blocks(inst: &LcuInstance, lay: &TsLayout, out: &mut Vec<Gate>) {
    let targets = term_targets(&inst.terms);
    for (j, reg) in lay.binary.iter().enumerate() {
        let u = lay.unary[j];
        out.push(Gate::Sdg(u));
        let spec = SelectSpec { w: lay.w, targets: targets.clone(), extra_control: Some(u) };
        let regs = SelectRegisters { controls: reg.clone(), ancillas: lay.pool[..lay.w].to_vec() };
        let block = synth_select(&spec, &regs, lay.qubits).expect("layout sized for the walk");
        block.for_each_gate(&mut |g| out.push(*g));
    }
}

fn w_gates(inst: &LcuInstance, lay: &TsLayout, dt: f64, iso_theta: f64) -> Vec<Gate> {
    let mut g = Vec::new();
    ry(lay.iso, iso_theta, &mut g);
    prep_b(inst, lay, dt, &mut g);
    select_blocks(inst, lay, &mut g);
    let mut b = Vec::new();
    prep_b(inst, lay, dt, &mut b);
    g.extend(b.iter().rev().map(Gate::inverse));
    g
}

/// One amplified segment `-W R W^dag R W` for duration `dt`; the overall sign is dropped.
pub fn ts_segment(inst: &LcuInstance, lay: &TsLayout, dt: f64) -> CircuitBlock {
    let s: f64 = (0..=lay.k as u32).map(|k| (inst.alpha * dt).powi(k as i32) / factorial(k)).sum();
    let iso_theta = 2.0 * (s / 2.0).min(1.0).acos();
    let w = w_gates(inst, lay, dt, iso_theta);
    let mut refl = Vec::new();
    reflect_zero(&lay.reflected(), &lay.pool, &mut refl);
    let mut g = w.clone();
    g.extend_from_slice(&refl);
    g.extend(w.iter().rev().map(Gate::inverse));
    g.extend_from_slice(&refl);
    g.extend_from_slice(&w);
    CircuitBlock::from_gates(lay.qubits, g)
}

/// Full circuit: `r - 1` segments at `t_seg` and one at `t_rem`.
pub fn synth_ts(h: &SpinChainHamiltonian, t: f64, epsilon: f64) -> Result<(CircuitBlock, TsParams, TsLayout), TsError> {
    let p = ts_params(h, t, epsilon)?;
    let inst = LcuInstance::from_hamiltonian(h);
    let lay = TsLayout::new(h.n, h.len(), p.k as usize);
    let mut c = CircuitBlock::new(lay.qubits);
    c.push_repeat(p.r - 1, ts_segment(&inst, &lay, p.t_seg));
    c.append(ts_segment(&inst, &lay, p.t_rem));
    Ok((c, p, lay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::count_gates;
    use crate::model::{build_hamiltonian, from_fields, Axis};
    use crate::sim::{apply_circuit_state, evolve_symmetric};
    use nalgebra::DMatrix;
    use num_complex::Complex64 as C64;

    fn zero_state(q: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); 1 << q];
        v[0] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn parameter_examples() {
        let h = from_fields(vec![1.0; 13], 1.0).unwrap();
        let p = ts_params(&h, 13.0, 1e-3).unwrap();
        assert_eq!((p.r, p.k), (976, 8));
        assert!(p.success_prob_lb >= 0.998);
        let h = from_fields(vec![1.0; 50], 1.0).unwrap();
        let p = ts_params(&h, 50.0, 1e-3).unwrap();
        assert_eq!((p.r, p.k), (14_427, 9));
        assert!(p.t_rem > 0.0 && p.t_rem <= p.t_seg + 1e-15);
    }

    #[test]
    fn truncation_table() {
        let v = per_segment_xi(7);
        assert!((v / 5.28621e-6 - 1.0).abs() < 5e-6, "{v}");
        for k in 1..20 {
            assert!(per_segment_xi(k + 1) < per_segment_xi(k));
        }
        assert_eq!(ts_params_alpha(52.0, 13.0, 0.0), Err(TsError::BadEpsilon(0.0)));
        assert_eq!(ts_params_alpha(52.0, -1.0, 1e-3), Err(TsError::BadTime(-1.0)));
    }

    #[test]
    fn unary_amplitudes() {
        for (k, at) in [(1u32, 0.4f64), (8, LN_2)] {
            let c = synth_unary_prep(k, at).unwrap();
            let mut s = zero_state(k as usize);
            apply_circuit_state(&c, &mut s);
            let beta: Vec<f64> = (0..=k).map(|j| at.powi(j as i32) / factorial(j)).collect();
            let total: f64 = beta.iter().sum();
            let phase = s[0] / s[0].norm();
            for (j, b) in beta.iter().enumerate() {
                let idx = (1usize << j) - 1;
                let amp = s[idx] / phase;
                assert!((amp - C64::new((b / total).sqrt(), 0.0)).norm() < 1e-12, "k={k} j={j}");
            }
            let listed: f64 = (0..=k).map(|j| s[(1usize << j) - 1].norm_sqr()).sum();
            assert!((listed - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coefficient_state() {
        for h in [from_fields(vec![1.0; 4], 1.0).unwrap(), build_hamiltonian(5, 1.0, 9).unwrap(), from_fields(vec![0.5, 0.0, -1.0], 1.0).unwrap()] {
            let c = synth_coeff_prep(&h);
            let w = c.qubits;
            let mut s = zero_state(w);
            apply_circuit_state(&c, &mut s);
            let index = |v: usize| (0..w).fold(0usize, |i, q| i | (((v >> (w - 1 - q)) & 1) << q));
            let first = index(leaf_register_value(w, 0));
            let phase = s[first] / s[first].norm();
            let mut seen = 0.0;
            for (j, term) in h.terms.iter().enumerate() {
                let v = index(leaf_register_value(w, j));
                let want = (term.coeff.abs() / h.alpha).sqrt();
                assert!((s[v] / phase - C64::new(want, 0.0)).norm() < 1e-12, "j={j}");
                seen += s[v].norm_sqr();
            }
            assert!((seen - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qubit_count_at_fifty() {
        let h = from_fields(vec![1.0; 50], 1.0).unwrap();
        let p = ts_params(&h, 50.0, 1e-3).unwrap();
        let lay = TsLayout::new(50, h.len(), p.k as usize);
        assert_eq!(lay.qubits, 172);
    }

    /// Postselected segment on a two-qubit toy instance against the exact propagator.
    #[test]
    fn segment_postselects_to_evolution() {
        let terms = vec![
            PauliTerm::two(1.0, 0, 1, Axis::X),
            PauliTerm::one(0.7, 0, Axis::Z),
            PauliTerm::one(-0.4, 1, Axis::Z),
        ];
        let alpha: f64 = terms.iter().map(|t| t.coeff.abs()).sum();
        let inst = LcuInstance { n: 2, terms: terms.clone(), alpha };
        let k = 3;
        let lay = TsLayout::new(2, terms.len(), k);
        let dt = LN_2 / alpha;
        let seg = ts_segment(&inst, &lay, dt);
        let mut hm = DMatrix::<f64>::zeros(4, 4);
        let mut hi = DMatrix::<f64>::zeros(4, 4);
        for t in &terms {
            let m = crate::model::term_matrix(t, 2).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    hm[(r, c)] += m[(r, c)].re;
                    hi[(r, c)] += m[(r, c)].im;
                }
            }
        }
        assert!(hi.iter().all(|x| x.abs() < 1e-15));
        let exact = evolve_symmetric(hm, dt);
        let mut block = vec![vec![C64::new(0.0, 0.0); 4]; 4];
        for col in 0..4 {
            let mut s = vec![C64::new(0.0, 0.0); 1 << lay.qubits];
            s[col] = C64::new(1.0, 0.0);
            apply_circuit_state(&seg, &mut s);
            for (row, b) in block.iter_mut().enumerate() {
                b[col] = s[row];
            }
        }
        let phase = {
            let tr: C64 = (0..4).map(|i| exact.at(i, i).conj() * block[i][i]).sum();
            tr / tr.norm()
        };
        let mut err = 0.0f64;
        for r in 0..4 {
            for c in 0..4 {
                err = err.max((block[r][c] / phase - exact.at(r, c)).norm());
            }
        }
        assert!(err <= 4.0 * per_segment_xi(k as u32), "err {err}");
        assert!(err < 1e-2);
    }

    #[test]
    fn full_circuit_is_structured() {
        let h = from_fields(vec![1.0; 4], 1.0).unwrap();
        let (c, p, lay) = synth_ts(&h, 4.0, 1e-3).unwrap();
        assert_eq!(c.qubits, lay.qubits);
        c.validate().unwrap();
        let seg = count_gates(&ts_segment(&LcuInstance::from_hamiltonian(&h), &lay, p.t_seg));
        assert_eq!(count_gates(&c).cnot(), seg.cnot() * p.r as u128);
    }
}
