//! Dense unitary simulation, exact evolution, spectral distances and empirical segment counts.

use crate::circuit::{CircuitBlock, Gate, Item};
use crate::model::{pauli_action, pauli_masks, SpinChainHamiltonian};
use crate::pf::{search_min_r, segment_schedule, PfOrder};
use matrixmultiply::{zgemm, CGemmOption};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

/// Default qubit cap for dense simulation.
pub const DEFAULT_CAP: usize = 12;
/// Default site cap for empirical segment searches.
pub const EMPIRICAL_CAP: usize = 10;
/// Extended site cap for empirical segment searches.
pub const EMPIRICAL_CAP_EXTENDED: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{got} qubits exceed the simulation cap of {cap}")]
    TooLarge { got: usize, cap: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("power-law fit needs at least 3 positive points with distinct n")]
    DegenerateFit,
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub dim: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        CMat { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn at(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// `self * other` through a blocked complex GEMM.
    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = CMat::zeros(d);
        let s = d as isize;
        // SAFETY: Complex64 is repr(C) with layout [f64; 2]; all buffers hold d*d elements.
        unsafe {
            zgemm(
                CGemmOption::Standard,
                CGemmOption::Standard,
                d,
                d,
                d,
                [1.0, 0.0],
                self.data.as_ptr() as *const [f64; 2],
                s,
                1,
                other.data.as_ptr() as *const [f64; 2],
                s,
                1,
                [0.0, 0.0],
                out.data.as_mut_ptr() as *mut [f64; 2],
                s,
                1,
            );
        }
        out
    }

    /// `self^k` by binary powering.
    pub fn pow(&self, mut k: u64) -> CMat {
        let mut result: Option<CMat> = None;
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.mul(&base),
                });
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result.unwrap_or_else(|| CMat::identity(self.dim))
    }

    pub fn adjoint(&self) -> CMat {
        let d = self.dim;
        let mut out = CMat::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        out
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        CMat { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, z: C64) -> CMat {
        CMat { dim: self.dim, data: self.data.iter().map(|a| a * z).collect() }
    }

    /// Largest entrywise deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let d = self.dim;
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                let want = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((p.at(r, c) - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn adj_matvec(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for (r, xr) in x.iter().enumerate() {
            for (out, a) in y.iter_mut().zip(self.row(r)) {
                *out += a.conj() * xr;
            }
        }
    }
}

/// A unitary on `qubits` qubits; qubit `q` is bit `q` of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseUnitary {
    pub qubits: usize,
    pub mat: CMat,
}

impl DenseUnitary {
    pub fn identity(qubits: usize) -> Self {
        DenseUnitary { qubits, mat: CMat::identity(1 << qubits) }
    }
}

fn rows_pair(data: &mut [C64], cols: usize, i: usize, j: usize) -> (&mut [C64], &mut [C64]) {
    debug_assert!(i < j);
    let (lo, hi) = data.split_at_mut(j * cols);
    (&mut lo[i * cols..(i + 1) * cols], &mut hi[..cols])
}

fn apply_1q(data: &mut [C64], cols: usize, rows: usize, q: usize, m: [[C64; 2]; 2]) {
    let bit = 1 << q;
    for i in 0..rows {
        if i & bit != 0 {
            continue;
        }
        let (r0, r1) = rows_pair(data, cols, i, i | bit);
        for (a, b) in r0.iter_mut().zip(r1.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = m[0][0] * x + m[0][1] * y;
            *b = m[1][0] * x + m[1][1] * y;
        }
    }
}

fn phase_rows(data: &mut [C64], cols: usize, rows: usize, pred: impl Fn(usize) -> Option<C64>) {
    for i in 0..rows {
        if let Some(z) = pred(i) {
            data[i * cols..(i + 1) * cols].iter_mut().for_each(|v| *v *= z);
        }
    }
}

fn swap_rows_where(data: &mut [C64], cols: usize, rows: usize, t: usize, pred: impl Fn(usize) -> bool) {
    let bit = 1 << t;
    for i in 0..rows {
        if i & bit == 0 && pred(i) {
            let (r0, r1) = rows_pair(data, cols, i, i | bit);
            r0.swap_with_slice(r1);
        }
    }
}

/// Left-multiplies the `rows x cols` row-major array by `g`.
pub fn apply_gate_rows(data: &mut [C64], cols: usize, rows: usize, g: &Gate) {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let i = C64::i();
    let has = |x: usize, q: usize| (x >> q) & 1 == 1;
    match *g {
        Gate::X(q) => swap_rows_where(data, cols, rows, q, |_| true),
        Gate::Y(q) => apply_1q(data, cols, rows, q, [[zero, -i], [i, zero]]),
        Gate::Z(q) => phase_rows(data, cols, rows, |x| has(x, q).then_some(-one)),
        Gate::H(q) => {
            let h = C64::new(FRAC_1_SQRT_2, 0.0);
            apply_1q(data, cols, rows, q, [[h, h], [h, -h]])
        }
        Gate::S(q) => phase_rows(data, cols, rows, |x| has(x, q).then_some(i)),
        Gate::Sdg(q) => phase_rows(data, cols, rows, |x| has(x, q).then_some(-i)),
        Gate::T(q) => {
            let z = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
            phase_rows(data, cols, rows, |x| has(x, q).then_some(z))
        }
        Gate::Tdg(q) => {
            let z = C64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
            phase_rows(data, cols, rows, |x| has(x, q).then_some(z))
        }
        Gate::Rz(a, q) => {
            let lo = C64::from_polar(1.0, -a / 2.0);
            let hi = C64::from_polar(1.0, a / 2.0);
            phase_rows(data, cols, rows, |x| Some(if has(x, q) { hi } else { lo }))
        }
        Gate::Cnot(c, t) => swap_rows_where(data, cols, rows, t, |x| has(x, c)),
        Gate::Cz(a, b) => phase_rows(data, cols, rows, |x| (has(x, a) && has(x, b)).then_some(-one)),
        Gate::Toffoli { c1, p1, c2, p2, t } => {
            swap_rows_where(data, cols, rows, t, |x| has(x, c1) == p1 && has(x, c2) == p2)
        }
    }
}

impl DenseUnitary {
    pub fn apply(&mut self, g: &Gate) {
        let d = self.mat.dim;
        apply_gate_rows(&mut self.mat.data, d, d, g);
    }
}

/// Applies a circuit to a statevector in place.
pub fn apply_circuit_state(c: &CircuitBlock, state: &mut [C64]) {
    let rows = state.len();
    c.for_each_gate(&mut |g| apply_gate_rows(state, 1, rows, g));
}

fn block_unitary(c: &CircuitBlock, qubits: usize) -> CMat {
    let mut u = DenseUnitary::identity(qubits);
    for item in &c.body {
        match item {
            Item::Gate(g) => u.apply(g),
            Item::Repeat(k, b) => {
                let p = block_unitary(b, qubits).pow(*k);
                u.mat = p.mul(&u.mat);
            }
        }
    }
    u.mat
}

/// Unitary of a circuit; repeats are raised to their power by squaring.
pub fn circuit_unitary(c: &CircuitBlock, cap: usize) -> Result<DenseUnitary, SimError> {
    if c.qubits > cap {
        return Err(SimError::TooLarge { got: c.qubits, cap });
    }
    Ok(DenseUnitary { qubits: c.qubits, mat: block_unitary(c, c.qubits) })
}

/// `exp(-iHt)`, diagonalized block by block over sectors of fixed magnetization.
pub fn exact_evolution(h: &SpinChainHamiltonian, t: f64) -> Result<DenseUnitary, SimError> {
    if h.n > DEFAULT_CAP {
        return Err(SimError::TooLarge { got: h.n, cap: DEFAULT_CAP });
    }
    let dense = h.dense().map_err(|_| SimError::TooLarge { got: h.n, cap: DEFAULT_CAP })?;
    let dim = dense.nrows();
    let conserving = (0..dim).all(|c| (0..dim).all(|r| dense[(r, c)] == 0.0 || r.count_ones() == c.count_ones()));
    if !conserving {
        return Ok(DenseUnitary { qubits: h.n, mat: evolve_symmetric(dense, t) });
    }
    let mut out = CMat::zeros(dim);
    for w in 0..=h.n as u32 {
        let idx: Vec<usize> = (0..dim).filter(|i| i.count_ones() == w).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| dense[(idx[r], idx[c])]);
        let e = evolve_symmetric(sub, t);
        for (r, &gr) in idx.iter().enumerate() {
            for (c, &gc) in idx.iter().enumerate() {
                out.data[gr * dim + gc] = e.at(r, c);
            }
        }
    }
    Ok(DenseUnitary { qubits: h.n, mat: out })
}

const EIG_TOL: f64 = 1e-10;

fn eigen_defect(a: &DMatrix<f64>, vals: &DVector<f64>, vecs: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    let res = (a * vecs - vecs * DMatrix::from_diagonal(vals)).norm();
    let orth = (vecs.transpose() * vecs - DMatrix::<f64>::identity(d, d)).norm();
    res / a.norm().max(1.0) + orth
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
fn jacobi_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(d, d);
    let scale = m.norm().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..d).flat_map(|c| (0..d).filter(move |&r| r != c).map(move |r| (r, c))).map(|(r, c)| m[(r, c)].powi(2)).sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diagonal(), v)
}

/// Eigenvalues and orthonormal eigenvectors; the QR result is checked and replaced by Jacobi when inaccurate.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    if eigen_defect(a, &eig.eigenvalues, &eig.eigenvectors) <= EIG_TOL {
        return (eig.eigenvalues, eig.eigenvectors);
    }
    jacobi_eigen(a)
}

/// `exp(-iAt)` for a real symmetric matrix.
pub fn evolve_symmetric(a: DMatrix<f64>, t: f64) -> CMat {
    let d = a.nrows();
    let (vals, v) = symmetric_eigen(&a);
    let mut vc = v.clone();
    let mut vs = v.clone();
    for (k, lam) in vals.iter().enumerate() {
        let (s, c) = (lam * t).sin_cos();
        vc.column_mut(k).scale_mut(c);
        vs.column_mut(k).scale_mut(s);
    }
    let re = &vc * v.transpose();
    let im = &vs * v.transpose();
    let mut out = CMat::zeros(d);
    for r in 0..d {
        for c in 0..d {
            out.data[r * d + c] = C64::new(re[(r, c)], -im[(r, c)]);
        }
    }
    out
}

const POWER_TOL: f64 = 1e-6;
const POWER_MIN_ITERS: usize = 20;
const POWER_MAX_ITERS: usize = 400;

fn power_sigma(d: &CMat, seed: u64) -> Option<f64> {
    let n = d.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|z| *z /= nx);
    let mut y = vec![C64::new(0.0, 0.0); n];
    let mut prev = 0.0;
    for it in 0..POWER_MAX_ITERS {
        d.matvec(&x, &mut y);
        let rq = y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        d.adj_matvec(&y, &mut x);
        let nz = norm(&x);
        if nz == 0.0 {
            return Some(0.0);
        }
        x.iter_mut().for_each(|z| *z /= nz);
        if it >= POWER_MIN_ITERS && (rq - prev).abs() <= POWER_TOL * rq {
            return Some(rq.sqrt());
        }
        prev = rq;
    }
    None
}

/// Largest singular value of `A - B`.
pub fn spectral_distance(a: &CMat, b: &CMat) -> Result<f64, SimError> {
    if a.dim != b.dim {
        return Err(SimError::Dimension(a.dim, b.dim));
    }
    Ok(spectral_norm(&a.sub(b)))
}

/// Power iteration on `D†D` with two restarts, falling back to a full SVD.
pub fn spectral_norm(d: &CMat) -> f64 {
    if d.data.iter().all(|z| z.norm_sqr() == 0.0) {
        return 0.0;
    }
    match (power_sigma(d, 0x5eed), power_sigma(d, 0xfeed)) {
        (Some(a), Some(b)) => a.max(b),
        _ => svd_norm(d),
    }
}

pub fn svd_norm(d: &CMat) -> f64 {
    d.to_nalgebra().singular_values().iter().fold(0.0f64, |m, s| m.max(*s))
}

/// Distance after removing the best global phase.
pub fn distance_up_to_phase(a: &CMat, b: &CMat) -> Result<f64, SimError> {
    if a.dim != b.dim {
        return Err(SimError::Dimension(a.dim, b.dim));
    }
    let overlap: C64 = b.data.iter().zip(&a.data).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { C64::new(1.0, 0.0) };
    spectral_distance(a, &b.scale(phase))
}

/// Basis states of each Z-parity sector and the position of every state inside its sector.
pub struct ParitySectors {
    pub members: [Vec<usize>; 2],
    pub pos: Vec<usize>,
}

impl ParitySectors {
    pub fn new(n: usize) -> Self {
        let mut members = [Vec::new(), Vec::new()];
        let mut pos = vec![0; 1 << n];
        for x in 0..1usize << n {
            let p = (x.count_ones() & 1) as usize;
            pos[x] = members[p].len();
            members[p].push(x);
        }
        ParitySectors { members, pos }
    }

    pub fn extract(&self, m: &CMat, p: usize) -> CMat {
        let idx = &self.members[p];
        let d = idx.len();
        let mut out = CMat::zeros(d);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.data[a * d + b] = m.at(i, j);
            }
        }
        out
    }
}

/// One product-formula segment restricted to both parity sectors, built from exact term exponentials.
pub fn segment_blocks(h: &SpinChainHamiltonian, order: PfOrder, dt: f64, sectors: &ParitySectors) -> [CMat; 2] {
    let sched = segment_schedule(order, h.len(), dt);
    let tables: Vec<(usize, Vec<C64>)> = h
        .terms
        .iter()
        .map(|t| {
            let (flip, _) = pauli_masks(t);
            // amp[i]: coefficient of row i in the image of column i ^ flip
            let amp = (0..1usize << h.n).map(|col| pauli_action(t, col).1).collect::<Vec<_>>();
            let by_row = (0..1usize << h.n).map(|row| amp[row ^ flip]).collect();
            (flip, by_row)
        })
        .collect();
    let mut out = [CMat::zeros(0), CMat::zeros(0)];
    for p in 0..2 {
        let idx = &sectors.members[p];
        let d = idx.len();
        let mut m = CMat::identity(d);
        for &(l, dur) in &sched {
            let phi = h.terms[l].coeff * dur;
            if phi == 0.0 {
                continue;
            }
            let (flip, amp) = &tables[l];
            let (s, c) = phi.sin_cos();
            if *flip == 0 {
                for (a, &i) in idx.iter().enumerate() {
                    let z = C64::new(c, 0.0) - C64::new(0.0, s) * amp[i];
                    m.data[a * d..(a + 1) * d].iter_mut().for_each(|v| *v *= z);
                }
            } else {
                for (a, &i) in idx.iter().enumerate() {
                    let j = i ^ flip;
                    let b = sectors.pos[j];
                    if b < a {
                        continue;
                    }
                    let za = C64::new(0.0, -s) * amp[i];
                    let zb = C64::new(0.0, -s) * amp[j];
                    let (ra, rb) = rows_pair(&mut m.data, d, a, b);
                    for (x, y) in ra.iter_mut().zip(rb.iter_mut()) {
                        let (u, v) = (*x, *y);
                        *x = u * c + za * v;
                        *y = v * c + zb * u;
                    }
                }
            }
        }
        out[p] = m;
    }
    out
}

/// Precomputed exact evolution, split by parity sector, for repeated error evaluations.
pub struct EmpiricalTarget<'a> {
    pub h: &'a SpinChainHamiltonian,
    pub order: PfOrder,
    pub t: f64,
    sectors: ParitySectors,
    exact: [CMat; 2],
}

impl<'a> EmpiricalTarget<'a> {
    pub fn new(h: &'a SpinChainHamiltonian, order: PfOrder, t: f64, cap: usize) -> Result<Self, SimError> {
        if h.n > cap {
            return Err(SimError::TooLarge { got: h.n, cap });
        }
        let sectors = ParitySectors::new(h.n);
        let full = exact_evolution(h, t)?;
        let exact = [sectors.extract(&full.mat, 0), sectors.extract(&full.mat, 1)];
        Ok(EmpiricalTarget { h, order, t, sectors, exact })
    }

    /// Spectral error of `r` segments against the exact evolution.
    pub fn error(&self, r: u64) -> f64 {
        let blocks = segment_blocks(self.h, self.order, self.t / r as f64, &self.sectors);
        let mut worst = 0.0f64;
        for p in 0..2 {
            let u = blocks[p].pow(r);
            worst = worst.max(spectral_norm(&u.sub(&self.exact[p])));
        }
        worst
    }
}

/// Smallest `r` whose product formula is within `epsilon` of the exact evolution.
pub fn empirical_r_search(
    h: &SpinChainHamiltonian,
    order: PfOrder,
    t: f64,
    epsilon: f64,
    cap: usize,
) -> Result<u64, SimError> {
    let target = EmpiricalTarget::new(h, order, t, cap)?;
    Ok(search_min_r(|r| target.error(r) <= epsilon))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub prefactor: f64,
    pub exponent: f64,
    pub residual: f64,
    pub points: Vec<(f64, f64)>,
}

/// Least squares of `ln r` against `ln n`.
pub fn powerlaw_fit(points: &[(f64, f64)]) -> Result<FitResult, SimError> {
    if points.len() < 3 || points.iter().any(|(n, r)| *n <= 0.0 || *r <= 0.0) {
        return Err(SimError::DegenerateFit);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return Err(SimError::DegenerateFit);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    Ok(FitResult { prefactor: icpt.exp(), exponent: slope, residual, points: points.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use crate::model::build_hamiltonian;
    use crate::pf::pf_segment;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn hadamard_matrix() {
        let u = circuit_unitary(&CircuitBlock::from_gates(1, [Gate::H(0)]), 4).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!(close(u.mat.at(0, 0), C64::new(h, 0.0)));
        assert!(close(u.mat.at(1, 1), C64::new(-h, 0.0)));
    }

    #[test]
    fn repeated_rz_adds() {
        let mut c = CircuitBlock::new(1);
        c.push_repeat(4, CircuitBlock::from_gates(1, [Gate::Rz(std::f64::consts::FRAC_PI_4, 0)]));
        let u = circuit_unitary(&c, 4).unwrap();
        let want = circuit_unitary(&CircuitBlock::from_gates(1, [Gate::Rz(std::f64::consts::PI, 0)]), 4).unwrap();
        assert!(spectral_distance(&u.mat, &want.mat).unwrap() < 1e-12);
    }

    #[test]
    fn size_cap() {
        let c = CircuitBlock::new(13);
        assert!(matches!(circuit_unitary(&c, 12), Err(SimError::TooLarge { .. })));
    }

    #[test]
    fn evolution_at_zero_is_identity() {
        let h = build_hamiltonian(4, 1.0, 0).unwrap();
        let e = exact_evolution(&h, 0.0).unwrap();
        assert!(spectral_distance(&e.mat, &CMat::identity(16)).unwrap() < 1e-12);
    }

    #[test]
    fn field_only_phases() {
        let a = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, -0.7]);
        let e = evolve_symmetric(a, 1.3);
        assert!(close(e.at(0, 0), C64::from_polar(1.0, -0.91)));
        assert!(close(e.at(1, 1), C64::from_polar(1.0, 0.91)));
    }

    #[test]
    fn distance_examples() {
        let i = CMat::identity(8);
        assert_eq!(spectral_distance(&i, &i).unwrap(), 0.0);
        assert!((spectral_distance(&i, &i.scale(C64::new(-1.0, 0.0))).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pf_converges_to_exact() {
        let h = build_hamiltonian(3, 1.0, 9).unwrap();
        let o = PfOrder::new(6).unwrap();
        let seg = pf_segment(&h, o, 0.01);
        let mut c = CircuitBlock::new(3);
        c.push_repeat(100, seg);
        let u = circuit_unitary(&c, 4).unwrap();
        let e = exact_evolution(&h, 1.0).unwrap();
        assert!(spectral_distance(&u.mat, &e.mat).unwrap() < 1e-8);
    }

    #[test]
    fn blocks_match_circuit() {
        for k in [1, 2, 4] {
            let h = build_hamiltonian(3, 1.0, 5).unwrap();
            let o = PfOrder::new(k).unwrap();
            let sectors = ParitySectors::new(3);
            let blocks = segment_blocks(&h, o, 0.37, &sectors);
            let u = circuit_unitary(&pf_segment(&h, o, 0.37), 4).unwrap();
            for p in 0..2 {
                assert!(spectral_distance(&blocks[p], &sectors.extract(&u.mat, p)).unwrap() < 1e-12);
            }
            for &i in &sectors.members[0] {
                for &j in &sectors.members[1] {
                    assert!(u.mat.at(i, j).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn segment_power_matches_full_circuit() {
        let h = build_hamiltonian(3, 1.0, 2).unwrap();
        let o = PfOrder::new(2).unwrap();
        let target = EmpiricalTarget::new(&h, o, 3.0, 10).unwrap();
        let mut c = CircuitBlock::new(3);
        c.push_repeat(7, pf_segment(&h, o, 3.0 / 7.0));
        let u = circuit_unitary(&c, 4).unwrap();
        let e = exact_evolution(&h, 3.0).unwrap();
        let full = spectral_distance(&u.mat, &e.mat).unwrap();
        let exact = svd_norm(&u.mat.sub(&e.mat));
        assert!((target.error(7) - exact).abs() < 1e-5 * exact);
        assert!((full - exact).abs() < 1e-5 * exact);
    }

    #[test]
    fn error_decreases_in_r() {
        let h = build_hamiltonian(4, 1.0, 1).unwrap();
        let target = EmpiricalTarget::new(&h, PfOrder::new(2).unwrap(), 4.0, 10).unwrap();
        let errs: Vec<f64> = [10, 20, 40, 80, 160].iter().map(|&r| target.error(r)).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn exact_fit_recovered() {
        let pts: Vec<(f64, f64)> = (3..9).map(|n| (n as f64, 2.0 * (n as f64).powf(1.5))).collect();
        let f = powerlaw_fit(&pts).unwrap();
        assert!((f.prefactor - 2.0).abs() < 1e-10 && (f.exponent - 1.5).abs() < 1e-10);
        assert!(f.residual >= 0.0 && f.residual < 1e-20);
        assert_eq!(powerlaw_fit(&[(2.0, 1.0), (2.0, 3.0), (2.0, 4.0)]), Err(SimError::DegenerateFit));
    }

    #[test]
    fn published_order4_points_fit() {
        let pts = [
            (5.0, 48.15),
            (6.0, 67.25),
            (7.0, 81.80),
            (8.0, 103.70),
            (9.0, 123.60),
            (10.0, 146.40),
            (11.0, 165.40),
            (12.0, 190.40),
        ];
        let f = powerlaw_fit(&pts).unwrap();
        assert!(f.exponent > 1.45 && f.exponent < 1.65);
    }

    fn arb_circuit(q: usize) -> impl Strategy<Value = Vec<Gate>> {
        let g = (0..8u8, 0..q, 1..q, -3.0f64..3.0).prop_map(move |(k, a, d, th)| {
            let b = (a + d) % q;
            let c = (b + 1 + (d % (q - 1))) % q;
            match k {
                0 => Gate::H(a),
                1 => Gate::T(a),
                2 => Gate::S(a),
                3 => Gate::Cnot(a, b),
                4 => Gate::Cz(a, b),
                5 => Gate::Rz(if th == 0.0 { 1.0 } else { th }, a),
                6 => Gate::Y(a),
                _ if c != a && c != b => Gate::Toffoli { c1: a, p1: th > 0.0, c2: b, p2: true, t: c },
                _ => Gate::X(a),
            }
        });
        prop::collection::vec(g, 0..25)
    }

    #[test]
    fn checked_eigen_recovers_bad_qr_case() {
        let a = build_hamiltonian(7, 1.0, 4).unwrap().dense().unwrap();
        let (vals, vecs) = symmetric_eigen(&a);
        assert!(eigen_defect(&a, &vals, &vecs) <= EIG_TOL);
        let (jv, jw) = jacobi_eigen(&a.view((0, 0), (40, 40)).into_owned());
        assert!(eigen_defect(&a.view((0, 0), (40, 40)).into_owned(), &jv, &jw) <= EIG_TOL);
    }

    #[test]
    fn sector_evolution_matches_full() {
        let h = build_hamiltonian(5, 1.0, 3).unwrap();
        let full = evolve_symmetric(h.dense().unwrap(), 2.5);
        let blocks = exact_evolution(&h, 2.5).unwrap();
        assert!(spectral_distance(&full, &blocks.mat).unwrap() < 1e-10);
    }

    proptest! {
        #[test]
        fn unitary_matches_statevector(gates in arb_circuit(3)) {
            let c = CircuitBlock::from_gates(3, gates);
            let u = circuit_unitary(&c, 4).unwrap();
            prop_assert!(u.mat.unitarity_defect() < 1e-10);
            for col in 0..8 {
                let mut s = vec![C64::new(0.0, 0.0); 8];
                s[col] = C64::new(1.0, 0.0);
                apply_circuit_state(&c, &mut s);
                for row in 0..8 {
                    prop_assert!((s[row] - u.mat.at(row, col)).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn power_iteration_matches_svd(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = CMat::zeros(12);
            m.data.iter_mut().for_each(|z| *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let a = spectral_norm(&m);
            let b = svd_norm(&m);
            prop_assert!((a - b).abs() <= 1e-5 * b);
        }
    }
}
