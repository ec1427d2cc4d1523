//! The periodic random-field Heisenberg chain and its canonical term order.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest site count for which dense matrices are built.
pub const DENSE_CAP: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("chain needs at least 3 sites, got {0}")]
    TooSmall(usize),
    #[error("field bound must be finite and nonnegative, got {0}")]
    BadField(f64),
    #[error("field vector has length {got}, expected {want}")]
    FieldLength { got: usize, want: usize },
    #[error("dense matrix on {0} qubits exceeds the cap of {DENSE_CAP}")]
    TooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A real coefficient times a Pauli string on one or two sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub ops: Vec<(usize, Axis)>,
}

impl PauliTerm {
    pub fn two(coeff: f64, a: usize, b: usize, axis: Axis) -> Self {
        PauliTerm { coeff, ops: vec![(a, axis), (b, axis)] }
    }

    pub fn one(coeff: f64, site: usize, axis: Axis) -> Self {
        PauliTerm { coeff, ops: vec![(site, axis)] }
    }

    pub fn axis_on(&self, site: usize) -> Option<Axis> {
        self.ops.iter().find(|(s, _)| *s == site).map(|(_, a)| *a)
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.ops.iter().map(|(s, _)| *s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinChainHamiltonian {
    pub n: usize,
    pub h_max: f64,
    pub seed: u64,
    pub h: Vec<f64>,
    #[serde(skip)]
    pub terms: Vec<PauliTerm>,
    pub lambda: f64,
    pub alpha: f64,
}

/// Draws `h_j` uniformly from `[-h_max, h_max]` with a seeded ChaCha stream.
pub fn build_hamiltonian(n: usize, h_max: f64, seed: u64) -> Result<SpinChainHamiltonian, ModelError> {
    if !(h_max.is_finite() && h_max >= 0.0) {
        return Err(ModelError::BadField(h_max));
    }
    if n < 3 {
        return Err(ModelError::TooSmall(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = (0..n).map(|_| rng.gen_range(-h_max..=h_max)).collect();
    let mut ham = from_fields(h, h_max)?;
    ham.seed = seed;
    Ok(ham)
}

/// Builds the chain from an explicit field vector.
pub fn from_fields(h: Vec<f64>, h_max: f64) -> Result<SpinChainHamiltonian, ModelError> {
    let n = h.len();
    if n < 3 {
        return Err(ModelError::TooSmall(n));
    }
    let mut terms = Vec::with_capacity(4 * n);
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        for j in 0..n {
            terms.push(PauliTerm::two(1.0, j, (j + 1) % n, axis));
        }
    }
    for (j, &hj) in h.iter().enumerate() {
        terms.push(PauliTerm::one(hj, j, Axis::Z));
    }
    let sum_h: f64 = h.iter().map(|x| x.abs()).sum();
    let max_h = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(SpinChainHamiltonian {
        n,
        h_max,
        seed: 0,
        lambda: 1.0f64.max(h_max.max(max_h)),
        alpha: 3.0 * n as f64 + sum_h,
        h,
        terms,
    })
}

impl SpinChainHamiltonian {
    /// Number of terms, always `4n`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Restores the term list after deserialization.
    pub fn rebuild_terms(&mut self) {
        let rebuilt = from_fields(self.h.clone(), self.h_max).expect("valid field vector");
        self.terms = rebuilt.terms;
    }

    /// Dense real matrix of the whole Hamiltonian.
    pub fn dense(&self) -> Result<DMatrix<f64>, ModelError> {
        if self.n > DENSE_CAP {
            return Err(ModelError::TooLarge(self.n));
        }
        let dim = 1usize << self.n;
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for term in &self.terms {
            let (flip, _) = pauli_masks(term);
            for col in 0..dim {
                let (row, phase) = pauli_action(term, col);
                debug_assert_eq!(row, col ^ flip);
                // Y⊗Y has a real action, single terms never carry Y.
                m[(row, col)] += term.coeff * phase.re;
            }
        }
        Ok(m)
    }
}

/// Bit masks of the sites a term flips (X, Y) and the sites it phases (Y, Z).
pub fn pauli_masks(term: &PauliTerm) -> (usize, usize) {
    let mut flip = 0;
    let mut phase = 0;
    for &(s, a) in &term.ops {
        match a {
            Axis::X => flip |= 1 << s,
            Axis::Y => {
                flip |= 1 << s;
                phase |= 1 << s;
            }
            Axis::Z => phase |= 1 << s,
        }
    }
    (flip, phase)
}

/// Image of basis state `col` under the bare Pauli string: (row, amplitude).
pub fn pauli_action(term: &PauliTerm, col: usize) -> (usize, Complex64) {
    let mut row = col;
    let mut amp = Complex64::new(1.0, 0.0);
    for &(s, a) in &term.ops {
        let bit = (col >> s) & 1;
        match a {
            Axis::X => row ^= 1 << s,
            Axis::Y => {
                row ^= 1 << s;
                amp *= if bit == 0 { Complex64::i() } else { -Complex64::i() };
            }
            Axis::Z => {
                if bit == 1 {
                    amp = -amp;
                }
            }
        }
    }
    (row, amp)
}

/// `coeff` times the Kronecker product Pauli matrix on `n` qubits; site `s` is bit `s`.
pub fn term_matrix(term: &PauliTerm, n: usize) -> Result<DMatrix<Complex64>, ModelError> {
    if n > DENSE_CAP {
        return Err(ModelError::TooLarge(n));
    }
    let dim = 1usize << n;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for col in 0..dim {
        let (row, amp) = pauli_action(term, col);
        m[(row, col)] = amp * term.coeff;
    }
    Ok(m)
}

/// Two Pauli strings commute iff they anticommute on an even number of sites.
pub fn terms_commute(a: &PauliTerm, b: &PauliTerm) -> bool {
    let clashes = a
        .ops
        .iter()
        .filter(|(s, ax)| matches!(b.axis_on(*s), Some(bx) if bx != *ax))
        .count();
    clashes % 2 == 0
}
