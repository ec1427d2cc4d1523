//! Shared building blocks: real rotations, uniformly controlled rotations and multi-controlled gates.

use crate::circuit::{Gate, Qubit};

/// Pushes `Rz(theta)` unless `theta` is exactly zero.
pub fn rz(theta: f64, t: Qubit, out: &mut Vec<Gate>) {
    if theta != 0.0 {
        out.push(Gate::Rz(theta, t));
    }
}

/// `exp(-i theta Y / 2)` as Clifford frame plus one Rz; nothing for `theta == 0`.
pub fn ry(t: Qubit, theta: f64, out: &mut Vec<Gate>) {
    if theta == 0.0 {
        return;
    }
    out.extend([Gate::Sdg(t), Gate::H(t), Gate::Rz(theta, t), Gate::H(t), Gate::S(t)]);
}

/// Uniformly controlled Ry: angle `thetas[x]` where bit `j` of `x` is the value of `controls[j]`.
///
/// Lowered as a Gray-code ladder of `2^k` CNOT and up to `2^k` Rz inside a frame mapping Y to Z.
/// Ladder angles that are exactly zero are elided.
pub fn multiplexed_ry(controls: &[Qubit], t: Qubit, thetas: &[f64], out: &mut Vec<Gate>) {
    let k = controls.len();
    let m = 1usize << k;
    assert_eq!(thetas.len(), m, "one angle per control value");
    if k == 0 {
        ry(t, thetas[0], out);
        return;
    }
    let gray = |i: usize| i ^ (i >> 1);
    out.extend([Gate::H(t), Gate::S(t), Gate::H(t)]);
    for i in 0..m {
        let g = gray(i);
        let phi: f64 = thetas
            .iter()
            .enumerate()
            .map(|(x, th)| if (x & g).count_ones() % 2 == 0 { *th } else { -*th })
            .sum::<f64>()
            / m as f64;
        rz(phi, t, out);
        let changed = g ^ gray((i + 1) % m);
        out.push(Gate::Cnot(controls[changed.trailing_zeros() as usize], t));
    }
    out.extend([Gate::H(t), Gate::Sdg(t), Gate::H(t)]);
}

/// Clean ancillas used by [`mcx`] for `k` controls.
pub fn mcx_ancillas(k: usize) -> usize {
    k.saturating_sub(1) / 2
}

fn rtof(a: Qubit, b: Qubit, t: Qubit, out: &mut Vec<Gate>) {
    out.extend([
        Gate::H(t),
        Gate::T(t),
        Gate::Cnot(b, t),
        Gate::Tdg(t),
        Gate::Cnot(a, t),
        Gate::T(t),
        Gate::Cnot(b, t),
        Gate::Tdg(t),
        Gate::H(t),
    ]);
}

fn rc3x(c1: Qubit, c2: Qubit, c3: Qubit, t: Qubit, out: &mut Vec<Gate>) {
    out.extend([
        Gate::H(t),
        Gate::T(t),
        Gate::Cnot(c3, t),
        Gate::Tdg(t),
        Gate::H(t),
        Gate::Cnot(c1, t),
        Gate::T(t),
        Gate::Cnot(c2, t),
        Gate::Tdg(t),
        Gate::Cnot(c1, t),
        Gate::T(t),
        Gate::Cnot(c2, t),
        Gate::Tdg(t),
        Gate::H(t),
        Gate::T(t),
        Gate::Cnot(c3, t),
        Gate::Tdg(t),
        Gate::H(t),
    ]);
}

fn inverse_into(seq: &[Gate], out: &mut Vec<Gate>) {
    out.extend(seq.iter().rev().map(Gate::inverse));
}

/// Multi-controlled X with [`mcx_ancillas`] clean ancillas, built from a chain of relative-phase
/// Toffolis around one Toffoli macro.
pub fn mcx(controls: &[Qubit], t: Qubit, anc: &[Qubit], out: &mut Vec<Gate>) {
    let k = controls.len();
    match k {
        0 => out.push(Gate::X(t)),
        1 => out.push(Gate::Cnot(controls[0], t)),
        2 => out.push(Gate::Toffoli { c1: controls[0], p1: true, c2: controls[1], p2: true, t }),
        _ => {
            let m = mcx_ancillas(k);
            assert!(anc.len() >= m, "mcx on {k} controls needs {m} ancillas");
            let mut compute = Vec::new();
            let mut used;
            if k % 2 == 1 {
                rtof(controls[0], controls[1], anc[0], &mut compute);
                used = 2;
            } else {
                rc3x(controls[0], controls[1], controls[2], anc[0], &mut compute);
                used = 3;
            }
            for i in 1..m {
                rc3x(anc[i - 1], controls[used], controls[used + 1], anc[i], &mut compute);
                used += 2;
            }
            debug_assert_eq!(used, k - 1);
            out.extend_from_slice(&compute);
            out.push(Gate::Toffoli { c1: anc[m - 1], p1: true, c2: controls[k - 1], p2: true, t });
            inverse_into(&compute, out);
        }
    }
}

/// Multi-controlled Z over `qubits` (symmetric in its operands).
pub fn mcz(qubits: &[Qubit], anc: &[Qubit], out: &mut Vec<Gate>) {
    match qubits {
        [] => {}
        [q] => out.push(Gate::Z(*q)),
        [rest @ .., t] => {
            out.push(Gate::H(*t));
            mcx(rest, *t, anc, out);
            out.push(Gate::H(*t));
        }
    }
}

/// `I - 2|0...0><0...0|` on `qubits`.
pub fn reflect_zero(qubits: &[Qubit], anc: &[Qubit], out: &mut Vec<Gate>) {
    out.extend(qubits.iter().map(|&q| Gate::X(q)));
    mcz(qubits, anc, out);
    out.extend(qubits.iter().map(|&q| Gate::X(q)));
}
