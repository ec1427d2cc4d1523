//! Light circuit optimizer: Toffoli lowering, Hadamard rewrites, commuting cancellation and phase folding.

use crate::circuit::{count_gates, expand, CircuitBlock, Gate, GateCounts, Item, Qubit, EXPAND_CAP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptMode {
    WholeCircuit,
    Periodic,
}

/// How far the cancellation pass looks back past commuting gates.
const WINDOW: usize = 96;
/// Candidate cut positions tried when splitting a repeated body.
const CUTS: usize = 16;
const ANGLE_EPS: f64 = 1e-12;

// ---------- Toffoli lowering ----------

/// Replaces every Toffoli by Clifford+T, pairing compatible Toffolis where possible.
pub fn lower_toffolis(c: &CircuitBlock) -> CircuitBlock {
    let mut out = CircuitBlock::new(c.qubits);
    let mut run: Vec<Gate> = Vec::new();
    for item in &c.body {
        match item {
            Item::Gate(g) => run.push(*g),
            Item::Repeat(k, b) => {
                let mut lowered = Vec::new();
                lower_run(&run, &mut lowered);
                out.extend(lowered);
                run.clear();
                out.push_repeat(*k, lower_toffolis(b));
            }
        }
    }
    let mut lowered = Vec::new();
    lower_run(&run, &mut lowered);
    out.extend(lowered);
    out
}

fn lower_run(gates: &[Gate], out: &mut Vec<Gate>) {
    let mut i = 0;
    while i < gates.len() {
        match gates[i] {
            Gate::Toffoli { c1, p1, c2, p2, t } => {
                if let Some((a, x, j)) = find_pair(gates, i) {
                    pair_head(a, x, t, out);
                    lower_run(&gates[i + 1..j], out);
                    pair_tail(a, x, t, out);
                    i = j + 1;
                    continue;
                }
                single_toffoli(c1, p1, c2, p2, t, out);
            }
            g => out.push(g),
        }
        i += 1;
    }
}

/// Finds a later `TOF(a+, x+; t)` closing `TOF(a+, x-; t)` at `i` across a classical window.
fn find_pair(gates: &[Gate], i: usize) -> Option<(Qubit, Qubit, usize)> {
    let Gate::Toffoli { c1, p1, c2, p2, t } = gates[i] else { return None };
    let (a, x) = match (p1, p2) {
        (true, false) => (c1, c2),
        (false, true) => (c2, c1),
        _ => return None,
    };
    for (k, g) in gates.iter().enumerate().skip(i + 1) {
        if g.touches(x) || g.touches(t) {
            return match *g {
                Gate::Toffoli { c1, p1: true, c2, p2: true, t: tt }
                    if tt == t && ((c1 == a && c2 == x) || (c1 == x && c2 == a)) =>
                {
                    Some((a, x, k))
                }
                _ => None,
            };
        }
        let a_ok = match *g {
            Gate::X(_) => true,
            Gate::Cnot(c, _) => c != a,
            Gate::Toffoli { c1, c2, .. } => c1 != a && c2 != a,
            _ => false,
        };
        if !a_ok {
            return None;
        }
    }
    None
}

fn pair_head(a: Qubit, x: Qubit, t: Qubit, out: &mut Vec<Gate>) {
    out.extend([
        Gate::H(t),
        Gate::T(a),
        Gate::Cnot(x, a),
        Gate::T(a),
        Gate::Cnot(t, a),
        Gate::Tdg(a),
        Gate::Cnot(x, a),
        Gate::Tdg(a),
        Gate::S(t),
    ]);
}

fn pair_tail(a: Qubit, x: Qubit, t: Qubit, out: &mut Vec<Gate>) {
    out.extend([
        Gate::Tdg(a),
        Gate::Cnot(x, a),
        Gate::T(a),
        Gate::Cnot(t, a),
        Gate::Tdg(a),
        Gate::Cnot(x, a),
        Gate::T(a),
        Gate::H(t),
    ]);
}

/// Seven-T form; a phase term flips sign when it holds an odd number of negated controls.
fn single_toffoli(a: Qubit, pa: bool, b: Qubit, pb: bool, t: Qubit, out: &mut Vec<Gate>) {
    let na = !pa;
    let nb = !pb;
    let ph = |q: Qubit, plus: bool, flip: bool| if plus ^ flip { Gate::T(q) } else { Gate::Tdg(q) };
    out.extend([
        Gate::H(t),
        Gate::Cnot(b, t),
        ph(t, false, nb),
        Gate::Cnot(a, t),
        ph(t, true, na ^ nb),
        Gate::Cnot(b, t),
        ph(t, false, na),
        Gate::Cnot(a, t),
        ph(b, true, nb),
        Gate::T(t),
        Gate::H(t),
        Gate::Cnot(a, b),
        ph(a, true, na),
        ph(b, false, na ^ nb),
        Gate::Cnot(a, b),
    ]);
}

// ---------- shared helpers ----------

/// Phase angle of a diagonal single-qubit gate, with its value in eighth turns when it is Clifford+T.
fn diag_angle(g: &Gate) -> Option<(Qubit, f64, Option<i64>)> {
    let (q, e) = match *g {
        Gate::Z(q) => (q, 4),
        Gate::S(q) => (q, 2),
        Gate::Sdg(q) => (q, -2),
        Gate::T(q) => (q, 1),
        Gate::Tdg(q) => (q, -1),
        Gate::Rz(a, q) => return Some((q, a, None)),
        _ => return None,
    };
    Some((q, e as f64 * FRAC_PI_4, Some(e)))
}

fn named_phase(eighths: i64, q: Qubit) -> Vec<Gate> {
    match eighths.rem_euclid(8) {
        0 => vec![],
        1 => vec![Gate::T(q)],
        2 => vec![Gate::S(q)],
        3 => vec![Gate::S(q), Gate::T(q)],
        4 => vec![Gate::Z(q)],
        5 => vec![Gate::Z(q), Gate::T(q)],
        6 => vec![Gate::Sdg(q)],
        _ => vec![Gate::Tdg(q)],
    }
}

fn rz_phase(angle: f64, q: Qubit) -> Vec<Gate> {
    let a = angle - 2.0 * PI * (angle / (2.0 * PI)).round();
    if a.abs() < ANGLE_EPS {
        vec![]
    } else {
        vec![Gate::Rz(a, q)]
    }
}

fn phase_gates(angle: f64, eighths: Option<i64>, q: Qubit) -> Vec<Gate> {
    match eighths {
        Some(e) => named_phase(e, q),
        None => rz_phase(angle, q),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Action {
    Diag,
    Flip,
    Other,
}

/// How a gate acts on qubit `q`: diagonally, as a bit flip, or otherwise.
fn action_on(g: &Gate, q: Qubit) -> Option<Action> {
    if !g.touches(q) {
        return None;
    }
    Some(match *g {
        Gate::Z(_) | Gate::S(_) | Gate::Sdg(_) | Gate::T(_) | Gate::Tdg(_) | Gate::Rz(..) | Gate::Cz(..) => Action::Diag,
        Gate::X(_) => Action::Flip,
        Gate::Cnot(c, _) => {
            if c == q {
                Action::Diag
            } else {
                Action::Flip
            }
        }
        Gate::Toffoli { t, .. } => {
            if t == q {
                Action::Flip
            } else {
                Action::Diag
            }
        }
        Gate::H(_) | Gate::Y(_) => Action::Other,
    })
}

/// Sufficient commutation test: on every shared qubit both gates are diagonal or both are flips.
fn commute(g: &Gate, h: &Gate) -> bool {
    g.qubits().into_iter().all(|q| match (action_on(g, q), action_on(h, q)) {
        (Some(x), Some(y)) => x == y && x != Action::Other,
        _ => true,
    })
}

fn self_inverse_pair(g: &Gate, h: &Gate) -> bool {
    match (*g, *h) {
        (Gate::H(a), Gate::H(b)) | (Gate::X(a), Gate::X(b)) | (Gate::Y(a), Gate::Y(b)) => a == b,
        (Gate::Cnot(a, b), Gate::Cnot(c, d)) => a == c && b == d,
        (Gate::Cz(a, b), Gate::Cz(c, d)) => (a == c && b == d) || (a == d && b == c),
        (Gate::Toffoli { .. }, Gate::Toffoli { .. }) => g == h || same_toffoli(g, h),
        _ => false,
    }
}

fn same_toffoli(g: &Gate, h: &Gate) -> bool {
    match (*g, *h) {
        (Gate::Toffoli { c1, p1, c2, p2, t }, Gate::Toffoli { c1: d1, p1: q1, c2: d2, p2: q2, t: u }) => {
            t == u && c1 == d2 && p1 == q2 && c2 == d1 && p2 == q1
        }
        _ => false,
    }
}

fn live(gates: Vec<Option<Gate>>) -> Vec<Gate> {
    gates.into_iter().flatten().collect()
}

// ---------- Hadamard reduction ----------

fn is_single(g: &Gate) -> bool {
    g.qubits().len() == 1
}

/// Rewrites H-S-H to S†-H-S†, collapses H-conjugated CNOTs to reversed CNOTs and H-conjugated CZs to CNOTs.
fn hadamard_pass(gates: Vec<Gate>, qubits: usize) -> Vec<Gate> {
    let mut g: Vec<Option<Gate>> = gates.into_iter().map(Some).collect();
    let mut seq: Vec<Vec<usize>> = vec![Vec::new(); qubits];
    let mut slot: Vec<[usize; 3]> = Vec::with_capacity(g.len());
    for (i, gate) in g.iter().enumerate() {
        let mut s = [usize::MAX; 3];
        for (k, q) in gate.as_ref().expect("live").qubits().into_iter().enumerate() {
            s[k] = seq[q].len();
            seq[q].push(i);
        }
        slot.push(s);
    }
    let mut dirty = vec![false; g.len()];
    let at = |g: &Vec<Option<Gate>>, i: usize| g[i];
    let neighbour = |seq: &Vec<Vec<usize>>, q: Qubit, pos: usize, delta: isize| -> Option<usize> {
        let p = pos as isize + delta;
        if p < 0 {
            None
        } else {
            seq[q].get(p as usize).copied()
        }
    };
    for i in 0..g.len() {
        if dirty[i] {
            continue;
        }
        match at(&g, i) {
            Some(Gate::Cnot(c, t)) => {
                let (sc, st) = (slot[i][0], slot[i][1]);
                let ids = [
                    neighbour(&seq, c, sc, -1),
                    neighbour(&seq, t, st, -1),
                    neighbour(&seq, c, sc, 1),
                    neighbour(&seq, t, st, 1),
                ];
                let all_h = ids.iter().all(|id| {
                    id.is_some_and(|k| !dirty[k] && matches!(at(&g, k), Some(Gate::H(_))))
                });
                if all_h {
                    for k in ids.into_iter().flatten() {
                        g[k] = None;
                        dirty[k] = true;
                    }
                    g[i] = Some(Gate::Cnot(t, c));
                    dirty[i] = true;
                }
            }
            Some(Gate::Cz(a, b)) => {
                for (q, other, s) in [(b, a, slot[i][1]), (a, b, slot[i][0])] {
                    let before = neighbour(&seq, q, s, -1);
                    let after = neighbour(&seq, q, s, 1);
                    let ok = [before, after].iter().all(|id| {
                        id.is_some_and(|k| !dirty[k] && matches!(at(&g, k), Some(Gate::H(_))))
                    });
                    if ok {
                        g[before.expect("checked")] = None;
                        g[after.expect("checked")] = None;
                        dirty[before.expect("checked")] = true;
                        dirty[after.expect("checked")] = true;
                        g[i] = Some(Gate::Cnot(other, q));
                        dirty[i] = true;
                        break;
                    }
                }
            }
            Some(Gate::H(q)) => {
                let s = slot[i][0];
                let (Some(m), Some(e)) = (neighbour(&seq, q, s, 1), neighbour(&seq, q, s, 2)) else { continue };
                if dirty[m] || dirty[e] {
                    continue;
                }
                let (Some(mid), Some(end)) = (at(&g, m), at(&g, e)) else { continue };
                if !is_single(&mid) || !matches!(end, Gate::H(_)) {
                    continue;
                }
                let side = match mid {
                    Gate::S(_) => Gate::Sdg(q),
                    Gate::Sdg(_) => Gate::S(q),
                    _ => continue,
                };
                g[i] = Some(side);
                g[m] = Some(Gate::H(q));
                g[e] = Some(side);
                dirty[i] = true;
                dirty[m] = true;
                dirty[e] = true;
            }
            _ => {}
        }
    }
    live(g)
}

// ---------- cancellation and merging ----------

/// Cancels inverse pairs and merges diagonal phases across commuting gates.
fn cancel_pass(gates: Vec<Gate>, qubits: usize) -> Vec<Gate> {
    let mut out: Vec<Option<Gate>> = Vec::with_capacity(gates.len());
    let mut hist: Vec<Vec<usize>> = vec![Vec::new(); qubits];
    for g in gates {
        let qs = g.qubits();
        for &q in &qs {
            while hist[q].last().is_some_and(|&k| out[k].is_none()) {
                hist[q].pop();
            }
        }
        let mut ptr: Vec<usize> = qs.iter().map(|&q| hist[q].len()).collect();
        let mut steps = 0;
        let mut done = false;
        while steps < WINDOW {
            let mut best: Option<usize> = None;
            for (k, &q) in qs.iter().enumerate() {
                while ptr[k] > 0 && out[hist[q][ptr[k] - 1]].is_none() {
                    ptr[k] -= 1;
                }
                if ptr[k] > 0 {
                    let idx = hist[q][ptr[k] - 1];
                    best = Some(best.map_or(idx, |b: usize| b.max(idx)));
                }
            }
            let Some(idx) = best else { break };
            for (k, &q) in qs.iter().enumerate() {
                if ptr[k] > 0 && hist[q][ptr[k] - 1] == idx {
                    ptr[k] -= 1;
                }
            }
            steps += 1;
            let h = out[idx].expect("live");
            if self_inverse_pair(&g, &h) {
                out[idx] = None;
                done = true;
                break;
            }
            if let (Some((q1, a1, e1)), Some((q2, a2, e2))) = (diag_angle(&g), diag_angle(&h)) {
                if q1 == q2 {
                    let merged = match (e1, e2) {
                        (Some(x), Some(y)) => named_phase(x + y, q1),
                        _ => rz_phase(a1 + a2, q1),
                    };
                    if merged.len() <= 1 {
                        out[idx] = merged.first().copied();
                        done = true;
                        break;
                    }
                }
            }
            if !commute(&g, &h) {
                break;
            }
        }
        if !done {
            let i = out.len();
            out.push(Some(g));
            for &q in &qs {
                hist[q].push(i);
            }
        }
    }
    live(out)
}

// ---------- phase folding ----------

#[derive(Clone, Copy)]
struct Label {
    key: u128,
    flip: bool,
}

struct Occurrence {
    index: usize,
    qubit: Qubit,
    flip: bool,
}

/// Merges every diagonal phase acting on the same parity of path variables into its first occurrence.
fn phase_fold(gates: Vec<Gate>, qubits: usize) -> Vec<Gate> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut fresh = move || Label { key: rng.gen::<u128>() | 1, flip: false };
    let mut wire: Vec<Label> = (0..qubits).map(|_| fresh()).collect();
    let mut groups: HashMap<u128, (Vec<Occurrence>, f64, Option<i64>)> = HashMap::new();
    let mut order: Vec<u128> = Vec::new();
    for (i, g) in gates.iter().enumerate() {
        if let Some((q, a, e)) = diag_angle(g) {
            let l = wire[q];
            let sign = if l.flip { -1.0 } else { 1.0 };
            let entry = groups.entry(l.key).or_insert_with(|| {
                order.push(l.key);
                (Vec::new(), 0.0, Some(0))
            });
            entry.0.push(Occurrence { index: i, qubit: q, flip: l.flip });
            entry.1 += sign * a;
            entry.2 = match (entry.2, e) {
                (Some(x), Some(y)) => Some(if l.flip { x - y } else { x + y }),
                _ => None,
            };
            continue;
        }
        match *g {
            Gate::X(q) | Gate::Y(q) => wire[q].flip ^= true,
            Gate::H(q) => wire[q] = fresh(),
            Gate::Cnot(c, t) => {
                let lc = wire[c];
                wire[t].key ^= lc.key;
                wire[t].flip ^= lc.flip;
            }
            Gate::Toffoli { t, .. } => wire[t] = fresh(),
            _ => {}
        }
    }
    let mut replace: HashMap<usize, Vec<Gate>> = HashMap::new();
    let mut drop = vec![false; gates.len()];
    for key in order {
        let (occ, total, eighths) = &groups[&key];
        if occ.len() < 2 {
            continue;
        }
        let first = &occ[0];
        let (angle, e) = if first.flip { (-total, eighths.map(|x| -x)) } else { (*total, *eighths) };
        let emitted = phase_gates(angle, e, first.qubit);
        if emitted.len() >= occ.len() {
            continue;
        }
        replace.insert(first.index, emitted);
        for o in &occ[1..] {
            drop[o.index] = true;
        }
    }
    let mut out = Vec::with_capacity(gates.len());
    for (i, g) in gates.into_iter().enumerate() {
        if drop[i] {
            continue;
        }
        match replace.remove(&i) {
            Some(v) => out.extend(v),
            None => out.push(g),
        }
    }
    out
}

// ---------- driver ----------

fn score(gates: &[Gate]) -> (usize, usize) {
    let h = gates.iter().filter(|g| matches!(g, Gate::H(_))).count();
    (gates.len(), h)
}

/// Runs the pass pipeline on a flat gate list until it stops improving.
pub fn optimize_gates(gates: Vec<Gate>, qubits: usize) -> Vec<Gate> {
    let mut best = gates;
    loop {
        let before = score(&best);
        let mut g = hadamard_pass(best.clone(), qubits);
        g = cancel_pass(g, qubits);
        g = phase_fold(g, qubits);
        g = cancel_pass(g, qubits);
        if score(&g) < before {
            best = g;
        } else {
            return best;
        }
    }
}

fn flatten(c: &CircuitBlock) -> Vec<Gate> {
    expand(c, EXPAND_CAP).expect("body within expansion cap")
}

/// Lowers Toffolis, then optimizes; `Periodic` handles top-level repeats at a cost independent of the count.
pub fn optimize(c: &CircuitBlock, mode: OptMode) -> CircuitBlock {
    let c = lower_toffolis(c);
    let q = c.qubits;
    let mode = if mode == OptMode::WholeCircuit && c.expanded_len() > EXPAND_CAP { OptMode::Periodic } else { mode };
    if mode == OptMode::WholeCircuit {
        return CircuitBlock::from_gates(q, optimize_gates(flatten(&c), q));
    }
    let mut out = CircuitBlock::new(q);
    let mut pending: Vec<Gate> = Vec::new();
    for item in &c.body {
        match item {
            Item::Gate(g) => pending.push(*g),
            Item::Repeat(k, b) if *k < 3 || b.expanded_len() > EXPAND_CAP / 4 => {
                if *k < 3 {
                    for _ in 0..*k {
                        pending.extend(flatten(b));
                    }
                } else {
                    out.extend(optimize_gates(std::mem::take(&mut pending), q));
                    out.push_repeat(*k, optimize(b, OptMode::Periodic));
                }
            }
            Item::Repeat(k, b) => {
                let body = flatten(b);
                let (f, g) = best_cut(&body, q);
                let mut left = std::mem::take(&mut pending);
                left.extend_from_slice(&f);
                left.extend_from_slice(&g);
                left.extend_from_slice(&f);
                out.extend(optimize_gates(left, q));
                let mut center = g.clone();
                center.extend_from_slice(&f);
                out.push_repeat(k - 2, CircuitBlock::from_gates(q, optimize_gates(center, q)));
                pending = g;
            }
        }
    }
    out.extend(optimize_gates(pending, q));
    out
}

/// Splits `body = F·G` where the rotated body `G·F` optimizes best.
fn best_cut(body: &[Gate], qubits: usize) -> (Vec<Gate>, Vec<Gate>) {
    let n = body.len();
    let mut best: Option<((usize, usize), usize)> = None;
    for i in 0..CUTS {
        let cut = n * i / CUTS;
        let mut rotated = body[cut..].to_vec();
        rotated.extend_from_slice(&body[..cut]);
        let s = score(&optimize_gates(rotated, qubits));
        if best.map_or(true, |(b, _)| s < b) {
            best = Some((s, cut));
        }
    }
    let cut = best.map_or(0, |(_, c)| c);
    (body[..cut].to_vec(), body[cut..].to_vec())
}

/// Counts before and after optimization.
pub fn optimize_with_counts(c: &CircuitBlock, mode: OptMode) -> (CircuitBlock, GateCounts, GateCounts) {
    let before = count_gates(c);
    let out = optimize(c, mode);
    let after = count_gates(&out);
    (out, before, after)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;
    use crate::model::build_hamiltonian;
    use crate::pf::{pf_segment, PfOrder};
    use crate::sim::{circuit_unitary, distance_up_to_phase};
    use proptest::prelude::*;

    fn same_unitary(a: &CircuitBlock, b: &CircuitBlock) -> f64 {
        let ua = circuit_unitary(a, 8).unwrap();
        let ub = circuit_unitary(b, 8).unwrap();
        distance_up_to_phase(&ua.mat, &ub.mat).unwrap()
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        let pair = (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n));
        let triple = (0..n, 1..n, 1..n - 1, any::<bool>(), any::<bool>()).prop_map(move |(a, d, e, p1, p2)| {
            let b = (a + d) % n;
            let mut c = (b + e) % n;
            if c == a {
                c = (c + 1) % n;
                if c == b {
                    c = (c + 1) % n;
                }
            }
            Gate::Toffoli { c1: a, p1, c2: b, p2, t: c }
        });
        prop_oneof![
            q.clone().prop_map(Gate::H),
            q.clone().prop_map(Gate::X),
            q.clone().prop_map(Gate::S),
            q.clone().prop_map(Gate::Sdg),
            q.clone().prop_map(Gate::T),
            q.clone().prop_map(Gate::Tdg),
            q.clone().prop_map(Gate::Z),
            q.clone().prop_map(Gate::Y),
            (q.clone(), -3.0..3.0f64).prop_map(|(q, a)| Gate::Rz(a, q)),
            pair.clone().prop_map(|(a, b)| Gate::Cnot(a, b)),
            pair.clone().prop_map(|(a, b)| Gate::Cnot(a, b)),
            pair.prop_map(|(a, b)| Gate::Cz(a, b)),
            triple,
        ]
    }

    fn arb_circuit() -> impl Strategy<Value = CircuitBlock> {
        (3usize..=6).prop_flat_map(|n| {
            prop::collection::vec(arb_gate(n), 0..120).prop_map(move |g| CircuitBlock::from_gates(n, g))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn optimize_preserves_unitary(c in arb_circuit()) {
            let o = optimize(&c, OptMode::WholeCircuit);
            prop_assert!(same_unitary(&c, &o) < 1e-9);
            prop_assert!(o.expanded_len() <= c.expanded_len() * 15);
        }

        #[test]
        fn lowering_preserves_unitary(c in arb_circuit()) {
            let o = lower_toffolis(&c);
            prop_assert_eq!(count_gates(&o).toffoli(), 0);
            prop_assert!(same_unitary(&c, &o) < 1e-9);
        }
    }

    #[test]
    fn isolated_toffoli_cost() {
        for (p1, p2) in [(true, true), (true, false), (false, true), (false, false)] {
            let c = CircuitBlock::from_gates(3, [Gate::Toffoli { c1: 0, p1, c2: 1, p2, t: 2 }]);
            let k = count_gates(&lower_toffolis(&c));
            assert_eq!(k.t_like(), 7);
            assert_eq!(k.cnot(), 6);
            assert_eq!(k.get(GateKind::H), 2);
            assert!(same_unitary(&c, &lower_toffolis(&c)) < 1e-12);
        }
    }

    #[test]
    fn paired_toffolis_share_work() {
        let c = CircuitBlock::from_gates(
            4,
            [
                Gate::Toffoli { c1: 0, p1: true, c2: 1, p2: false, t: 2 },
                Gate::Cnot(3, 0),
                Gate::X(0),
                Gate::Toffoli { c1: 1, p1: true, c2: 0, p2: true, t: 2 },
            ],
        );
        let o = lower_toffolis(&c);
        let k = count_gates(&o);
        assert_eq!((k.t_like(), k.get(GateKind::H), k.get(GateKind::S)), (8, 2, 1));
        assert!(same_unitary(&c, &o) < 1e-12);
    }

    #[test]
    fn hadamard_pair_removed() {
        let c = CircuitBlock::from_gates(1, [Gate::H(0), Gate::H(0)]);
        assert_eq!(optimize(&c, OptMode::WholeCircuit).expanded_len(), 0);
    }

    #[test]
    fn phases_merge_across_cnot_conjugation() {
        let c = CircuitBlock::from_gates(
            2,
            [Gate::Cnot(0, 1), Gate::Rz(0.3, 1), Gate::Cnot(0, 1), Gate::Cnot(0, 1), Gate::Rz(-0.3, 1), Gate::Cnot(0, 1)],
        );
        assert_eq!(optimize(&c, OptMode::WholeCircuit).expanded_len(), 0);
        let c = CircuitBlock::from_gates(
            3,
            [Gate::Cnot(0, 2), Gate::Cnot(1, 2), Gate::Rz(0.3, 2), Gate::Cnot(0, 2), Gate::Cnot(2, 0), Gate::Rz(0.2, 0)],
        );
        let o = optimize(&c, OptMode::WholeCircuit);
        assert_eq!(count_gates(&o).rz(), 1);
        assert!(same_unitary(&c, &o) < 1e-12);
    }

    #[test]
    fn idempotent_at_fixpoint() {
        let h = build_hamiltonian(4, 1.0, 3).unwrap();
        let seg = pf_segment(&h, PfOrder::new(4).unwrap(), 0.1);
        let mut c = CircuitBlock::new(4);
        c.append(seg.clone());
        c.append(seg);
        let once = optimize(&c, OptMode::WholeCircuit);
        let twice = optimize(&once, OptMode::WholeCircuit);
        assert_eq!(count_gates(&once), count_gates(&twice));
    }

    #[test]
    fn periodic_matches_whole() {
        let n = 4;
        let h = build_hamiltonian(n, 1.0, 5).unwrap();
        let seg = pf_segment(&h, PfOrder::new(4).unwrap(), 0.05);
        for r in [3u64, 7, 20] {
            let mut c = CircuitBlock::new(n);
            c.push_repeat(r, seg.clone());
            let whole = count_gates(&optimize(&c, OptMode::WholeCircuit));
            let per_c = optimize(&c, OptMode::Periodic);
            let per = count_gates(&per_c);
            for k in [GateKind::Cnot, GateKind::Rz, GateKind::H] {
                let (a, b) = (whole.get(k) as f64, per.get(k) as f64);
                assert!((a - b).abs() <= 1e-3 * a, "r={r} {k:?}: {a} vs {b}");
            }
            if r == 7 {
                assert!(same_unitary(&c, &per_c) < 1e-9);
            }
        }
    }

    #[test]
    fn pf4_segment_reaches_reduced_counts() {
        let n = 6;
        let h = build_hamiltonian(n, 1.0, 1).unwrap();
        let seg = pf_segment(&h, PfOrder::new(4).unwrap(), 0.05);
        let r = 10u64;
        let mut c = CircuitBlock::new(n);
        c.push_repeat(r, seg);
        let o = count_gates(&optimize(&c, OptMode::Periodic));
        let n = n as u128;
        let r = r as u128;
        assert!(o.cnot() <= 40 * n * r + 20 * n, "cnot {}", o.cnot());
        assert!(o.rz() <= 25 * n * r + 10 * n, "rz {}", o.rz());
    }
}
