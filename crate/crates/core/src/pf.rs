//! Suzuki product formulas: segment-count bounds, commutation counting and circuit synthesis.

use crate::circuit::{CircuitBlock, Gate, Qubit};
use crate::model::{terms_commute, Axis, PauliTerm, SpinChainHamiltonian};
use serde::{Deserialize, Serialize};
use std::f64::consts::E;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PfError {
    #[error("unsupported product-formula order {0}; valid orders are 1, 2, 4, 6, 8")]
    BadOrder(u32),
    #[error("commutator bound is available for orders 1, 2, 4 only, got {0}")]
    NoCommutatorBound(u32),
    #[error("time, error and norm parameters must be positive")]
    NonPositive,
    #[error("segment count must be at least 1")]
    ZeroSegments,
    #[error("enumeration over {0} sites exceeds the limit of {MAX_ENUM_SITES}")]
    TooLarge(usize),
    #[error("chain needs at least 3 sites, got {0}")]
    TooSmall(usize),
}

/// Largest chain for exhaustive commutation counting.
pub const MAX_ENUM_SITES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PfOrder(u32);

impl PfOrder {
    pub fn new(order: u32) -> Result<Self, PfError> {
        match order {
            1 | 2 | 4 | 6 | 8 => Ok(PfOrder(order)),
            _ => Err(PfError::BadOrder(order)),
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// Number of second-order blocks in one segment (1 for first order).
    pub fn s2_blocks(self) -> u64 {
        if self.0 == 1 {
            1
        } else {
            5u64.pow(self.0 / 2 - 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PfBoundKind {
    Analytic,
    Minimized,
    Commutator,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Pf,
    Ts,
    Qsp,
}

/// One synthesis run: algorithm, order, bound, sizes and the resulting segment count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub algorithm: Algorithm,
    pub order: u32,
    pub bound: PfBoundKind,
    pub n: usize,
    pub t: f64,
    pub epsilon: f64,
    pub r: u64,
}

/// Fourth-order Suzuki weight for recursion level `k`.
pub fn suzuki_p(k: u32) -> f64 {
    1.0 / (4.0 - 4f64.powf(1.0 / (2.0 * k as f64 - 1.0)))
}

/// Step multipliers of the second-order blocks making up one `S_order(s)`.
pub fn s2_weights(order: PfOrder) -> Vec<f64> {
    let mut w = vec![1.0];
    let mut k = 2;
    while 2 * k <= order.value() {
        let p = suzuki_p(k);
        let mut next = Vec::with_capacity(w.len() * 5);
        for c in [p, p, 1.0 - 4.0 * p, p, p] {
            next.extend(w.iter().map(|x| c * x));
        }
        w = next;
        k += 1;
    }
    w
}

/// Ordered (term index, duration) list realizing one segment of length `dt`.
pub fn segment_schedule(order: PfOrder, num_terms: usize, dt: f64) -> Vec<(usize, f64)> {
    if order.value() == 1 {
        return (0..num_terms).map(|l| (l, dt)).collect();
    }
    let mut out = Vec::new();
    for s in s2_weights(order) {
        let half = 0.5 * s * dt;
        out.extend((0..num_terms).map(|l| (l, half)));
        out.extend((0..num_terms).rev().map(|l| (l, half)));
    }
    out
}

fn check_positive(vals: &[f64]) -> Result<(), PfError> {
    if vals.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(PfError::NonPositive)
    }
}

/// Closed-form segment count from the crude Taylor-remainder bound.
pub fn r_analytic(order: PfOrder, l: usize, lambda: f64, t: f64, epsilon: f64) -> Result<u64, PfError> {
    check_positive(&[lambda, t, epsilon])?;
    let l = l as f64;
    let r = if order.value() == 1 {
        let a = l * t * lambda;
        a.max(E * a * a / epsilon)
    } else {
        let k = (order.value() / 2) as i32;
        let a = 2.0 * l * 5f64.powi(k - 1) * lambda * t;
        let root = ((E.ln() + (2 * k + 1) as f64 * a.ln() - (3.0 * epsilon).ln()) / (2 * k) as f64).exp();
        a.max(root)
    };
    Ok(r.ceil() as u64)
}

/// Smallest `r >= 1` with `ok(r)`: doubling then bisection. Assumes monotonicity.
pub fn search_min_r(mut ok: impl FnMut(u64) -> bool) -> u64 {
    let mut hi = 1u64;
    while !ok(hi) {
        hi = hi.checked_mul(2).expect("segment search overflowed");
    }
    if hi == 1 {
        return 1;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Error bound whose minimization defines the minimized segment count.
pub fn minimized_error(order: PfOrder, l: usize, lambda: f64, t: f64, r: u64) -> f64 {
    let l = l as f64;
    let r = r as f64;
    if order.value() == 1 {
        let a = l * lambda * t;
        (2.0 * a.ln() - r.ln() + a / r).exp()
    } else {
        let k = (order.value() / 2) as i32;
        let a = 2.0 * l * 5f64.powi(k - 1) * lambda * t;
        ((2 * k + 1) as f64 * a.ln() - 3f64.ln() - (2 * k) as f64 * r.ln() + a / r).exp()
    }
}

pub fn r_minimized(order: PfOrder, l: usize, lambda: f64, t: f64, epsilon: f64) -> Result<u64, PfError> {
    check_positive(&[lambda, t, epsilon])?;
    Ok(search_min_r(|r| minimized_error(order, l, lambda, t, r) <= epsilon))
}

/// Succinct second-order tuple count.
pub fn eval_t2(n: usize) -> Result<u128, PfError> {
    match n {
        0..=2 => Err(PfError::TooSmall(n)),
        3 => Ok(194),
        _ => {
            let n = n as u128;
            Ok(40 * n * n - 58 * n)
        }
    }
}

/// Succinct fourth-order tuple count.
pub fn eval_t4(n: usize) -> Result<u128, PfError> {
    match n {
        0..=2 => Err(PfError::TooSmall(n)),
        3 => Ok(23_073_564_672),
        4 => Ok(94_192_316_416),
        5 => Ok(278_878_851_840),
        _ => {
            let n = n as i128;
            let v = 1_280_000_000 * n.pow(4) - 7_701_760_000 * n.pow(3) + 23_685_120_000 * n * n - 30_224_677_632 * n;
            Ok(v as u128)
        }
    }
}

/// Commutator-based error bound for `r` segments; `c1` is the noncommuting pair count (order 1 only).
pub fn commutator_error(order: PfOrder, n: usize, lambda: f64, t: f64, r: u64, c1: u128) -> Result<f64, PfError> {
    let nf = n as f64;
    let rf = r as f64;
    let l = 4.0 * nf;
    match order.value() {
        1 => {
            let a = l * lambda * t;
            Ok(c1 as f64 * (lambda * t).powi(2) / rf + (3.0 * a.ln() - 3f64.ln() - 2.0 * rf.ln() + a / rf).exp())
        }
        2 => {
            let lead = (lambda * t).powi(3) * eval_t2(n)? as f64 / (rf * rf);
            let b = 4.0 * nf * lambda * t;
            let tail = (4f64.ln() + 4.0 * b.ln() - 3f64.ln() - 3.0 * rf.ln() + 2.0 * b / rf).exp();
            Ok(lead + tail)
        }
        4 => {
            let q = 4.0 * suzuki_p(2) - 1.0;
            let lead = (q / 2.0 * lambda * t).powi(5) * eval_t4(n)? as f64 / (120.0 * rf.powi(4));
            let b = 20.0 * q * nf * lambda * t;
            let tail = (2f64.ln() + 6.0 * b.ln() - 720f64.ln() - 5.0 * rf.ln() + b / rf).exp();
            Ok(lead + tail)
        }
        o => Err(PfError::NoCommutatorBound(o)),
    }
}

pub fn r_commutator(order: PfOrder, h: &SpinChainHamiltonian, t: f64, epsilon: f64) -> Result<u64, PfError> {
    check_positive(&[t, epsilon])?;
    if !matches!(order.value(), 1 | 2 | 4) {
        return Err(PfError::NoCommutatorBound(order.value()));
    }
    if h.n < 3 {
        return Err(PfError::TooSmall(h.n));
    }
    let c1 = if order.value() == 1 { noncommuting_pairs_of(&h.terms) } else { 0 };
    Ok(search_min_r(|r| commutator_error(order, h.n, h.lambda, t, r, c1).expect("order checked") <= epsilon))
}

fn noncommuting_pairs_of(terms: &[PauliTerm]) -> u128 {
    let mut c = 0;
    for i in 0..terms.len() {
        for j in i + 1..terms.len() {
            if !terms_commute(&terms[i], &terms[j]) {
                c += 1;
            }
        }
    }
    c
}

/// Number of unordered noncommuting pairs in the term list.
pub fn count_noncommuting_pairs(h: &SpinChainHamiltonian) -> u128 {
    noncommuting_pairs_of(&h.terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TripleClasses {
    pub d: u128,
    pub t1: u128,
    pub t2: u128,
    pub t3: u128,
    pub t4: u128,
}

impl TripleClasses {
    /// `D/24 + T2/12 + T3/6 + T4/8`, exact when integral.
    pub fn weighted(&self) -> f64 {
        self.d as f64 / 24.0 + self.t2 as f64 / 12.0 + self.t3 as f64 / 6.0 + self.t4 as f64 / 8.0
    }

    /// The same sum over the common denominator 24.
    pub fn weighted_times_24(&self) -> u128 {
        self.d + 2 * self.t2 + 4 * self.t3 + 3 * self.t4
    }
}

/// Classifies pairs and triples of the mirrored term list by commutation pattern.
pub fn count_triple_classes_of(terms: &[PauliTerm]) -> TripleClasses {
    let mirrored: Vec<&PauliTerm> = terms.iter().chain(terms.iter().rev()).collect();
    let m = mirrored.len();
    let f: Vec<Vec<bool>> =
        (0..m).map(|i| (0..m).map(|j| terms_commute(mirrored[i], mirrored[j])).collect()).collect();
    let mut out = TripleClasses::default();
    for i in 0..m {
        for j in 0..m {
            if i != j && !f[i][j] {
                out.d += 1;
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let (a, b, c) = (f[i][j], f[j][k], f[i][k]);
                match (a, b, c) {
                    (true, true, true) => out.t1 += 1,
                    (true, false, false) | (false, true, false) => out.t2 += 1,
                    (false, false, true) => out.t3 += 1,
                    _ => out.t4 += 1,
                }
            }
        }
    }
    out
}

pub fn count_triple_classes(h: &SpinChainHamiltonian) -> Result<TripleClasses, PfError> {
    if h.n > MAX_ENUM_SITES {
        return Err(PfError::TooLarge(h.n));
    }
    Ok(count_triple_classes_of(&h.terms))
}

/// Power-law constants `(c, gamma)` from the published empirical fits.
pub fn empirical_constants(order: PfOrder) -> (f64, f64) {
    match order.value() {
        1 => (2417.0, 1.964),
        2 => (39.47, 1.883),
        4 => (4.035, 1.555),
        6 => (1.789, 1.311),
        _ => (1.144, 1.141),
    }
}

pub fn r_empirical(order: PfOrder, n: usize) -> u64 {
    let (c, g) = empirical_constants(order);
    r_from_fit(c, g, n)
}

pub fn r_from_fit(c: f64, gamma: f64, n: usize) -> u64 {
    (c * (n as f64).powf(gamma)).ceil().max(1.0) as u64
}

/// Segment count for any bound kind, with `t` and `epsilon` as given.
pub fn plan_pf(
    h: &SpinChainHamiltonian,
    order: PfOrder,
    bound: PfBoundKind,
    t: f64,
    epsilon: f64,
) -> Result<SegmentPlan, PfError> {
    let r = match bound {
        PfBoundKind::Analytic => r_analytic(order, h.len(), h.lambda, t, epsilon)?,
        PfBoundKind::Minimized => r_minimized(order, h.len(), h.lambda, t, epsilon)?,
        PfBoundKind::Commutator => r_commutator(order, h, t, epsilon)?,
        PfBoundKind::Empirical => r_empirical(order, h.n),
    };
    Ok(SegmentPlan { algorithm: Algorithm::Pf, order: order.value(), bound, n: h.n, t, epsilon, r })
}

/// Gate sink that folds a new Rz into the last gate on its qubit when that gate is an Rz.
pub struct Emitter {
    gates: Vec<Option<Gate>>,
    history: Vec<Vec<usize>>,
}

impl Emitter {
    pub fn new(qubits: usize) -> Self {
        Emitter { gates: Vec::new(), history: vec![Vec::new(); qubits] }
    }

    pub fn push(&mut self, g: Gate) {
        if let Gate::Rz(theta, q) = g {
            if theta == 0.0 {
                return;
            }
            if let Some(&i) = self.history[q].last() {
                if let Some(Gate::Rz(prev, _)) = self.gates[i] {
                    let sum = prev + theta;
                    if sum == 0.0 {
                        self.gates[i] = None;
                        self.history[q].pop();
                    } else {
                        self.gates[i] = Some(Gate::Rz(sum, q));
                    }
                    return;
                }
            }
        }
        let idx = self.gates.len();
        for q in g.qubits() {
            self.history[q].push(idx);
        }
        self.gates.push(Some(g));
    }

    pub fn finish(self, qubits: usize) -> CircuitBlock {
        CircuitBlock::from_gates(qubits, self.gates.into_iter().flatten())
    }
}

fn basis_in(e: &mut Emitter, q: Qubit, axis: Axis) {
    match axis {
        Axis::X => e.push(Gate::H(q)),
        Axis::Y => {
            e.push(Gate::H(q));
            e.push(Gate::S(q));
            e.push(Gate::H(q));
        }
        Axis::Z => {}
    }
}

fn basis_out(e: &mut Emitter, q: Qubit, axis: Axis) {
    match axis {
        Axis::X => e.push(Gate::H(q)),
        Axis::Y => {
            e.push(Gate::H(q));
            e.push(Gate::Sdg(q));
            e.push(Gate::H(q));
        }
        Axis::Z => {}
    }
}

/// Emits `exp(-i * coeff * duration * P)` for one term.
pub fn emit_term_exponential(e: &mut Emitter, term: &PauliTerm, duration: f64) {
    let theta = 2.0 * term.coeff * duration;
    if theta == 0.0 {
        return;
    }
    match term.ops.as_slice() {
        [(q, Axis::Z)] => e.push(Gate::Rz(theta, *q)),
        [(q, axis)] => {
            basis_in(e, *q, *axis);
            e.push(Gate::Rz(theta, *q));
            basis_out(e, *q, *axis);
        }
        [(a, ax), (b, bx)] => {
            basis_in(e, *a, *ax);
            basis_in(e, *b, *bx);
            e.push(Gate::Cnot(*a, *b));
            e.push(Gate::Rz(theta, *b));
            e.push(Gate::Cnot(*a, *b));
            basis_out(e, *a, *ax);
            basis_out(e, *b, *bx);
        }
        _ => unreachable!("terms act on one or two sites"),
    }
}

/// One segment `S_order(dt)` as a flat gate list.
pub fn pf_segment(h: &SpinChainHamiltonian, order: PfOrder, dt: f64) -> CircuitBlock {
    let mut e = Emitter::new(h.n);
    for (l, d) in segment_schedule(order, h.len(), dt) {
        emit_term_exponential(&mut e, &h.terms[l], d);
    }
    e.finish(h.n)
}

/// `r` repetitions of the segment for `t / r`.
pub fn synth_pf(h: &SpinChainHamiltonian, plan: &SegmentPlan) -> Result<CircuitBlock, PfError> {
    if plan.r < 1 {
        return Err(PfError::ZeroSegments);
    }
    let order = PfOrder::new(plan.order)?;
    let seg = pf_segment(h, order, plan.t / plan.r as f64);
    let mut c = CircuitBlock::new(h.n);
    c.push_repeat(plan.r, seg);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::count_gates;
    use crate::model::build_hamiltonian;
    use proptest::prelude::*;

    fn o(k: u32) -> PfOrder {
        PfOrder::new(k).unwrap()
    }

    #[test]
    fn s2_block_counts() {
        for (k, b) in [(1, 1), (2, 1), (4, 5), (6, 25), (8, 125)] {
            assert_eq!(o(k).s2_blocks(), b);
            if k > 1 {
                assert_eq!(s2_weights(o(k)).len() as u64, b);
                let total: f64 = s2_weights(o(k)).iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(PfOrder::new(3), Err(PfError::BadOrder(3)));
    }

    #[test]
    fn analytic_values() {
        assert_eq!(r_analytic(o(1), 52, 1.0, 13.0, 1e-3).unwrap(), 1_242_189_557);
        assert_eq!(r_analytic(o(4), 52, 1.0, 13.0, 1e-3).unwrap(), 336_300);
        assert_eq!(r_analytic(o(4), 52, 1.0, 0.0, 1e-3), Err(PfError::NonPositive));
    }

    #[test]
    fn minimized_values() {
        assert_eq!(r_minimized(o(4), 52, 1.0, 13.0, 1e-3).unwrap(), 263_596);
    }

    #[test]
    fn minimized_matches_linear_scan() {
        let r = r_minimized(o(1), 20, 1.0, 5.0, 1.0).unwrap();
        let scan = (1..).find(|&r| minimized_error(o(1), 20, 1.0, 5.0, r) <= 1.0).unwrap();
        assert_eq!(r, scan);
    }

    #[test]
    fn commutator_values() {
        let h = build_hamiltonian(13, 1.0, 1).unwrap();
        assert_eq!(r_commutator(o(4), &h, 13.0, 1e-3).unwrap(), 23_268);
        assert_eq!(r_commutator(o(2), &h, 13.0, 1e-3).unwrap(), 124_335);
        assert_eq!(r_commutator(o(6), &h, 13.0, 1e-3), Err(PfError::NoCommutatorBound(6)));
    }

    #[test]
    fn commutator_is_minimal() {
        for n in [5, 8, 13] {
            let h = build_hamiltonian(n, 1.0, 2).unwrap();
            let t = n as f64;
            for k in [1, 2, 4] {
                let c1 = count_noncommuting_pairs(&h);
                let r = r_commutator(o(k), &h, t, 1e-3).unwrap();
                assert!(commutator_error(o(k), n, 1.0, t, r, c1).unwrap() <= 1e-3);
                assert!(commutator_error(o(k), n, 1.0, t, r - 1, c1).unwrap() > 1e-3);
            }
        }
    }

    #[test]
    fn bound_ordering() {
        for n in 5..=12 {
            let h = build_hamiltonian(n, 1.0, 0).unwrap();
            let t = n as f64;
            for k in [1, 2, 4, 6, 8] {
                let a = r_analytic(o(k), h.len(), 1.0, t, 1e-3).unwrap();
                let m = r_minimized(o(k), h.len(), 1.0, t, 1e-3).unwrap();
                assert!(m <= a, "order {k} n {n}");
                if k <= 4 {
                    assert!(r_commutator(o(k), &h, t, 1e-3).unwrap() <= m);
                }
            }
        }
    }

    #[test]
    fn tuple_polynomials() {
        assert_eq!(eval_t2(3).unwrap(), 194);
        assert_eq!(eval_t2(4).unwrap(), 408);
        assert_eq!(eval_t4(5).unwrap(), 278_878_851_840);
        assert!((eval_t4(13).unwrap() as f64 / 2.3247e13 - 1.0).abs() < 1e-4);
        assert_eq!(eval_t2(13).unwrap(), 6006);
    }

    #[test]
    fn brute_force_t2_small() {
        for n in 3..=5 {
            let h = build_hamiltonian(n, 1.0, 0).unwrap();
            let c = count_triple_classes(&h).unwrap();
            assert_eq!(c.d % 2, 0);
            assert_eq!(c.weighted_times_24() % 24, 0);
            assert_eq!(c.weighted_times_24() / 24, eval_t2(n).unwrap());
        }
    }

    #[test]
    fn all_commuting_list() {
        let terms: Vec<PauliTerm> = (0..5).map(|j| PauliTerm::one(1.0, j, Axis::Z)).collect();
        let c = count_triple_classes_of(&terms);
        assert_eq!((c.d, c.t2, c.t3, c.t4), (0, 0, 0, 0));
        assert_eq!(noncommuting_pairs_of(&terms), 0);
    }

    #[test]
    fn empirical_values() {
        assert_eq!(r_empirical(o(4), 13), 218);
        assert_eq!(r_empirical(o(6), 13), 52);
        assert_eq!(r_empirical(o(8), 13), 22);
    }

    #[test]
    fn per_segment_counts() {
        let h = build_hamiltonian(13, 1.0, 4).unwrap();
        let n = 13u128;
        for (k, cn, rz) in [(1, 6, 4), (2, 12, 7), (4, 60, 35), (6, 300, 175), (8, 1500, 875)] {
            let c = count_gates(&pf_segment(&h, o(k), 1.0));
            assert_eq!(c.cnot(), cn * n, "order {k}");
            assert_eq!(c.rz(), rz * n, "order {k}");
        }
    }

    #[test]
    fn zero_fields_are_elided() {
        let h = build_hamiltonian(5, 0.0, 0).unwrap();
        let c = count_gates(&pf_segment(&h, o(1), 0.1));
        assert_eq!(c.rz(), 15);
        assert_eq!(c.cnot(), 30);
    }

    #[test]
    fn emitter_cancels_opposite_rotations() {
        let mut e = Emitter::new(2);
        e.push(Gate::Rz(0.3, 0));
        e.push(Gate::H(1));
        e.push(Gate::Rz(-0.3, 0));
        e.push(Gate::Rz(0.2, 0));
        let c = e.finish(2);
        assert_eq!(c.body.len(), 2);
    }

    proptest! {
        #[test]
        fn minimized_monotone_in_epsilon(k in prop::sample::select(vec![1u32, 2, 4, 6, 8]), n in 3usize..20, e1 in 1e-6f64..1e-1, f in 0.01f64..1.0) {
            let l = 4 * n;
            let t = n as f64;
            let a = r_minimized(o(k), l, 1.0, t, e1).unwrap();
            let b = r_minimized(o(k), l, 1.0, t, e1 * f).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn search_finds_threshold(thresh in 1u64..1_000_000) {
            prop_assert_eq!(search_min_r(|r| r >= thresh), thresh);
        }
    }
}
