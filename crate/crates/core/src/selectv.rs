//! Binary-tree select(V): a depth-first walk over Boolean products of the control literals.
//!
//! Leaves are visited left to right with the left edge taking the positive literal, so the
//! leaf visited `j`-th is selected by register value `2^w - 1 - j` (control 0 is the most
//! significant bit).

use crate::circuit::{count_gates, CircuitBlock, Gate, GateCounts, Qubit};
use crate::model::Axis;
use crate::optim::lower_toffolis;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("{got} targets do not fit a {w}-bit control register")]
    TargetCount { got: usize, w: usize },
    #[error("expected {want} control qubits and {anc} ancillas, got {got_c} and {got_a}")]
    Registers { want: usize, anc: usize, got_c: usize, got_a: usize },
    #[error("control width must be at least 1")]
    ZeroWidth,
}

/// A signed Pauli string applied when the walk reaches its leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTarget {
    pub ops: Vec<(Qubit, Axis)>,
    pub negate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectSpec {
    pub w: usize,
    pub targets: Vec<PauliTarget>,
    pub extra_control: Option<Qubit>,
}

/// Control register (most significant first) and walk ancillas.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectRegisters {
    pub controls: Vec<Qubit>,
    pub ancillas: Vec<Qubit>,
}

/// Walk ancillas: `w - 1`, or `w` when an extra control is threaded through the root.
pub fn ancillas_needed(w: usize, extra_control: bool) -> usize {
    if extra_control {
        w
    } else {
        w.saturating_sub(1)
    }
}

/// Register value selecting the `j`-th visited leaf.
pub fn leaf_register_value(w: usize, j: usize) -> usize {
    (1 << w) - 1 - j
}

/// Smallest `w` with `2^w >= gamma`.
pub fn control_width(gamma: usize) -> usize {
    let mut w = 0;
    while (1usize << w) < gamma {
        w += 1;
    }
    w
}

struct Walk<'a> {
    out: CircuitBlock,
    x: &'a [Qubit],
    anc: &'a [Qubit],
    extra: Option<Qubit>,
}

impl Walk<'_> {
    /// Wire holding `q_d`; `None` stands for the constant 1 at depth 0.
    fn q(&self, d: usize) -> Option<Qubit> {
        match (d, self.extra) {
            (0, c) => c,
            (1, None) => Some(self.x[0]),
            (d, None) => Some(self.anc[d - 2]),
            (d, Some(_)) => Some(self.anc[d - 1]),
        }
    }

    fn in_place_root(&self) -> bool {
        self.extra.is_none()
    }

    /// `target ^= q_ctl` with a constant-one `q_0` giving a plain NOT.
    fn xor_from(&mut self, ctl: usize, target: Qubit) {
        match self.q(ctl) {
            Some(c) => self.out.push(Gate::Cnot(c, target)),
            None => self.out.push(Gate::X(target)),
        }
    }

    /// `target ^= q_ctl AND lit(x_d)`.
    fn and_into(&mut self, ctl: usize, d: usize, positive: bool, target: Qubit) {
        let xd = self.x[d - 1];
        match self.q(ctl) {
            Some(c) => self.out.push(Gate::Toffoli { c1: c, p1: true, c2: xd, p2: positive, t: target }),
            None if positive => self.out.push(Gate::Cnot(xd, target)),
            None => {
                self.out.push(Gate::Cnot(xd, target));
                self.out.push(Gate::X(target));
            }
        }
    }

    /// Toggles `q_d = q_{d-1} AND lit(x_d)`; at depth 1 without extra control the literal is set in place.
    fn toggle(&mut self, d: usize, positive: bool) {
        if d == 1 && self.in_place_root() {
            if !positive {
                self.out.push(Gate::X(self.x[0]));
            }
            return;
        }
        let t = self.q(d).expect("ancilla wire");
        self.and_into(d - 1, d, positive, t);
    }

    /// Moves `q_{d-1}` from the positive to the negative branch and `q_d` onto its positive child.
    fn green(&mut self, d: usize) {
        let qd = self.q(d).expect("ancilla wire");
        let qd1 = self.q(d - 1).expect("walk wire");
        self.out.push(Gate::Cnot(qd1, qd));
        self.and_into(d - 2, d, true, qd);
        self.xor_from(d - 2, qd1);
    }

    fn fire(&mut self, target: &PauliTarget, leaf: Qubit) {
        for &(s, axis) in &target.ops {
            match axis {
                Axis::X => self.out.push(Gate::Cnot(leaf, s)),
                Axis::Y => {
                    self.out.push(Gate::Sdg(s));
                    self.out.push(Gate::Cnot(leaf, s));
                    self.out.push(Gate::S(s));
                }
                Axis::Z => {
                    self.out.push(Gate::H(s));
                    self.out.push(Gate::Cnot(leaf, s));
                    self.out.push(Gate::H(s));
                }
            }
        }
        if target.negate {
            self.out.push(Gate::Z(leaf));
        }
    }
}

/// Emits the NCT walk with targets fired on the leaf wire.
pub fn synth_select(spec: &SelectSpec, regs: &SelectRegisters, qubits: usize) -> Result<CircuitBlock, SelectError> {
    let w = spec.w;
    if w == 0 {
        return Err(SelectError::ZeroWidth);
    }
    let gamma = spec.targets.len();
    if gamma == 0 || gamma > (1 << w) {
        return Err(SelectError::TargetCount { got: gamma, w });
    }
    let anc = ancillas_needed(w, spec.extra_control.is_some());
    if regs.controls.len() != w || regs.ancillas.len() < anc {
        return Err(SelectError::Registers { want: w, anc, got_c: regs.controls.len(), got_a: regs.ancillas.len() });
    }
    let mut walk = Walk { out: CircuitBlock::new(qubits), x: &regs.controls, anc: &regs.ancillas, extra: spec.extra_control };
    let bit = |j: usize, d: usize| (j >> (w - d)) & 1 == 1;
    for d in 1..=w {
        walk.toggle(d, true);
    }
    let leaf = walk.q(w).expect("leaf wire");
    walk.fire(&spec.targets[0], leaf);
    for j in 1..gamma {
        let k = (j - 1).trailing_ones() as usize;
        let flip = w - k;
        if flip == w {
            let t = walk.q(w).expect("leaf wire");
            walk.xor_from(w - 1, t);
        } else {
            for d in (flip + 2..=w).rev() {
                walk.toggle(d, false);
            }
            walk.green(flip + 1);
            for d in flip + 2..=w {
                walk.toggle(d, true);
            }
        }
        walk.fire(&spec.targets[j], leaf);
    }
    let last = gamma - 1;
    for d in (1..=w).rev() {
        walk.toggle(d, !bit(last, d));
    }
    Ok(walk.out)
}

/// Control-generation counts predicted for a full tree: (NOT, CNOT, Toffoli).
pub fn nct_formula(w: usize) -> (u128, u128, u128) {
    let p = 1u128 << w;
    (2, 3 * p / 2 - 2, 3 * p / 2 - 4)
}

/// Clifford+T counts predicted after paired lowering: (T, CNOT, H, S).
pub fn clifford_t_formula(w: usize) -> (u128, u128, u128, u128) {
    let p = 1u128 << w;
    let w = w as u128;
    (15 * p / 2 + 6 * w - 28, 15 * p / 2 + 6 * w - 26, 2 * p + 2 * w - 8, p / 2 - w)
}

/// Walk-only circuit for a full tree (no targets fired), on `w` controls plus ancillas.
pub fn control_generation(w: usize) -> CircuitBlock {
    let anc = ancillas_needed(w, false);
    let regs = SelectRegisters { controls: (0..w).collect(), ancillas: (w..w + anc).collect() };
    let spec = SelectSpec { w, targets: vec![PauliTarget { ops: vec![], negate: false }; 1 << w], extra_control: None };
    synth_select(&spec, &regs, w + anc).expect("valid full tree")
}

/// Clifford+T lowering used for the select(V) count formulas.
pub fn lower_select_clifford_t(c: &CircuitBlock) -> CircuitBlock {
    lower_toffolis(c)
}

pub fn lowered_counts(w: usize) -> GateCounts {
    count_gates(&lower_select_clifford_t(&control_generation(w)))
}
