//! Reference simulator over full density matrices.
//!
//! This module recomputes circuit evaluations from first principles: every
//! qubit of both parties is kept in a single 2^m x 2^m complex density
//! matrix, two-pair operations act as real unitaries with a per-side
//! depolarizing error, and coincidence measurements project each party's
//! qubit in its local basis with independently flipped reports. Bell-basis
//! weights are read out only at the very end. Nothing here shares code with
//! the Bell-diagonal fold in the parent module, which is the point: the two
//! paths validate each other.

use num_complex::Complex64;

use super::{finish_report, EvalReport, EvaluatorError};
use crate::bellstate::{BcdPerm, ErrorModel, MeasBasis};
use crate::circuit::{Circuit, CircuitOp};
use crate::permgroup::compile_bcd_perm;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Row-major square complex matrix; dimensions stay at or below 64.
#[derive(Clone)]
struct Mat {
    dim: usize,
    a: Vec<C>,
}

impl Mat {
    fn zeros(dim: usize) -> Mat {
        Mat {
            dim,
            a: vec![c(0.0, 0.0); dim * dim],
        }
    }

    fn identity(dim: usize) -> Mat {
        let mut m = Mat::zeros(dim);
        for i in 0..dim {
            m.a[i * dim + i] = c(1.0, 0.0);
        }
        m
    }

    fn from_rows(dim: usize, rows: &[[f64; 4]]) -> Mat {
        let mut m = Mat::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate().take(dim) {
                m.a[i * dim + j] = c(v, 0.0);
            }
        }
        m
    }

    fn get(&self, r: usize, col: usize) -> C {
        self.a[r * self.dim + col]
    }

    fn set(&mut self, r: usize, col: usize, v: C) {
        self.a[r * self.dim + col] = v;
    }

    fn add_scaled(&mut self, other: &Mat, s: f64) {
        for (x, y) in self.a.iter_mut().zip(&other.a) {
            *x += y * s;
        }
    }

    fn scale(&mut self, s: f64) {
        for x in self.a.iter_mut() {
            *x *= s;
        }
    }

    fn trace(&self) -> C {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.dim;
    let mut out = Mat::zeros(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a.get(i, k);
            if aik == c(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out.a[i * n + j] += aik * b.get(k, j);
            }
        }
    }
    out
}

fn dagger(a: &Mat) -> Mat {
    let n = a.dim;
    let mut out = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, a.get(j, i).conj());
        }
    }
    out
}

/// u rho u^dagger.
fn conjugate(rho: &Mat, u: &Mat) -> Mat {
    matmul(&matmul(u, rho), &dagger(u))
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let n = a.dim * b.dim;
    let mut out = Mat::zeros(n);
    for i1 in 0..a.dim {
        for j1 in 0..a.dim {
            let v = a.get(i1, j1);
            for i2 in 0..b.dim {
                for j2 in 0..b.dim {
                    out.set(i1 * b.dim + i2, j1 * b.dim + j2, v * b.get(i2, j2));
                }
            }
        }
    }
    out
}

/// Qubit q's bit of basis index i, qubit 0 most significant among m qubits.
fn bit(i: usize, q: usize, m: usize) -> usize {
    (i >> (m - 1 - q)) & 1
}

/// Lift a 2^k-dimensional operator acting on the listed qubits (in order)
/// to the full m-qubit space.
fn embed(op: &Mat, qubits: &[usize], m: usize) -> Mat {
    let k = qubits.len();
    debug_assert_eq!(op.dim, 1 << k);
    let dim = 1 << m;
    let mut out = Mat::zeros(dim);
    for r in 0..dim {
        'cols: for col in 0..dim {
            // Bits outside the operator's qubits must match.
            for q in 0..m {
                if !qubits.contains(&q) && bit(r, q, m) != bit(col, q, m) {
                    continue 'cols;
                }
            }
            let sub_r: usize = qubits
                .iter()
                .enumerate()
                .map(|(pos, &q)| bit(r, q, m) << (k - 1 - pos))
                .sum();
            let sub_c: usize = qubits
                .iter()
                .enumerate()
                .map(|(pos, &q)| bit(col, q, m) << (k - 1 - pos))
                .sum();
            out.set(r, col, op.get(sub_r, sub_c));
        }
    }
    out
}

/// Trace out the listed qubits.
fn partial_trace(rho: &Mat, traced: &[usize], m: usize) -> Mat {
    let kept: Vec<usize> = (0..m).filter(|q| !traced.contains(q)).collect();
    let kd = 1 << kept.len();
    let td = 1 << traced.len();
    let assemble = |kept_bits: usize, traced_bits: usize| -> usize {
        let mut idx = 0;
        for (pos, &q) in kept.iter().enumerate() {
            idx |= ((kept_bits >> (kept.len() - 1 - pos)) & 1) << (m - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            idx |= ((traced_bits >> (traced.len() - 1 - pos)) & 1) << (m - 1 - q);
        }
        idx
    };
    let mut out = Mat::zeros(kd);
    for r in 0..kd {
        for col in 0..kd {
            let mut acc = c(0.0, 0.0);
            for s in 0..td {
                acc += rho.get(assemble(r, s), assemble(col, s));
            }
            out.set(r, col, acc);
        }
    }
    out
}

/// Discard the listed qubits and put `tau` (of matching dimension) in their
/// place, keeping every correlation among the remaining qubits.
fn replace_qubits(rho: &Mat, qubits: &[usize], tau: &Mat, m: usize) -> Mat {
    let sigma = partial_trace(rho, qubits, m);
    let kept: Vec<usize> = (0..m).filter(|q| !qubits.contains(q)).collect();
    let dim = 1 << m;
    let sub = |i: usize, list: &[usize]| -> usize {
        list.iter()
            .enumerate()
            .map(|(pos, &q)| bit(i, q, m) << (list.len() - 1 - pos))
            .sum()
    };
    let mut out = Mat::zeros(dim);
    for r in 0..dim {
        for col in 0..dim {
            let v = sigma.get(sub(r, &kept), sub(col, &kept))
                * tau.get(sub(r, qubits), sub(col, qubits));
            out.set(r, col, v);
        }
    }
    out
}

/// 'H'/'P' words from the relabeling compiler, rightmost letter applied
/// first.
fn word_matrix(word: &str) -> Mat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = Mat::identity(2);
    for ch in word.chars() {
        let g = match ch {
            'H' => {
                let mut h = Mat::zeros(2);
                h.set(0, 0, c(s, 0.0));
                h.set(0, 1, c(s, 0.0));
                h.set(1, 0, c(s, 0.0));
                h.set(1, 1, c(-s, 0.0));
                h
            }
            'P' => {
                let mut p = Mat::zeros(2);
                p.set(0, 0, c(1.0, 0.0));
                p.set(1, 1, c(0.0, 1.0));
                p
            }
            other => unreachable!("unexpected gate letter {other}"),
        };
        m = matmul(&m, &g);
    }
    m
}

fn cnot4() -> Mat {
    Mat::from_rows(
        4,
        &[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ],
    )
}

fn swap4() -> Mat {
    Mat::from_rows(
        4,
        &[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    )
}

/// The four Bell vectors over (party-A qubit, party-B qubit), indexed by
/// Bell label.
fn bell_vectors() -> [[C; 4]; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)],
        [c(0.0, 0.0), c(s, 0.0), c(-s, 0.0), c(0.0, 0.0)],
        [c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)],
        [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-s, 0.0)],
    ]
}

/// Bell-diagonal two-qubit state with the given label weights.
fn bell_diagonal(weights: [f64; 4]) -> Mat {
    let vecs = bell_vectors();
    let mut rho = Mat::zeros(4);
    for (v, &w) in vecs.iter().zip(&weights) {
        for i in 0..4 {
            for j in 0..4 {
                let e = rho.get(i, j) + v[i] * v[j].conj() * w;
                rho.set(i, j, e);
            }
        }
    }
    rho
}

/// Single-qubit measurement basis vectors, outcome 0 and 1.
fn basis_vectors(basis: MeasBasis) -> [[C; 2]; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match basis {
        MeasBasis::CoinZ => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
        MeasBasis::CoinX => [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]],
        MeasBasis::AntiY => [[c(s, 0.0), c(0.0, s)], [c(s, 0.0), c(0.0, -s)]],
    }
}

fn projector(v: &[C; 2]) -> Mat {
    let mut p = Mat::zeros(2);
    for i in 0..2 {
        for j in 0..2 {
            p.set(i, j, v[i] * v[j].conj());
        }
    }
    p
}

/// One party's share of a noisy two-pair operation: with probability p2 the
/// unitary, otherwise that party's two involved qubits are replaced by the
/// maximally mixed state.
fn noisy_side(rho: &Mat, unitary4: &Mat, side_qubits: &[usize], p2: f64, m: usize) -> Mat {
    let u = embed(unitary4, side_qubits, m);
    let mut out = conjugate(rho, &u);
    out.scale(p2);
    let mut mixed = Mat::identity(4);
    mixed.scale(0.25);
    let fail = replace_qubits(rho, side_qubits, &mixed, m);
    out.add_scaled(&fail, 1.0 - p2);
    out
}

/// Apply an error-free relabeling to one pair using the compiled per-party
/// gate words.
fn apply_bcd(rho: &Mat, pair: usize, perm: BcdPerm, m: usize) -> Mat {
    let (word_a, word_b) = compile_bcd_perm(perm);
    let mut out = rho.clone();
    for (word, qubit) in [(word_a, 2 * pair), (word_b, 2 * pair + 1)] {
        if word.is_empty() {
            continue;
        }
        let u = embed(&word_matrix(word), &[qubit], m);
        out = conjugate(&out, &u);
    }
    out
}

/// Evaluate a circuit by full density-matrix simulation. Supports width <= 3
/// (64-dimensional matrices); measured-out slots keep a placeholder state so
/// the dimension never changes.
pub fn oracle_evaluate(c: &Circuit, em: &ErrorModel) -> Result<EvalReport, EvaluatorError> {
    if c.width > 3 {
        return Err(EvaluatorError::OracleWidth(c.width));
    }
    let m = 2 * c.width;
    let raw4 = bell_diagonal(em.raw.as_array());
    let mut rho = raw4.clone();
    for _ in 1..c.width {
        rho = kron(&rho, &raw4);
    }

    for op in &c.ops {
        match *op {
            CircuitOp::Gate {
                src,
                dst,
                bcd_src,
                bcd_dst,
            } => {
                rho = apply_bcd(&rho, src, bcd_src, m);
                rho = apply_bcd(&rho, dst, bcd_dst, m);
                rho = noisy_side(&rho, &cnot4(), &[2 * src, 2 * dst], em.p2, m);
                rho = noisy_side(&rho, &cnot4(), &[2 * src + 1, 2 * dst + 1], em.p2, m);
            }
            CircuitOp::Swap { a, b } => {
                rho = noisy_side(&rho, &swap4(), &[2 * a, 2 * b], em.p2, m);
                rho = noisy_side(&rho, &swap4(), &[2 * a + 1, 2 * b + 1], em.p2, m);
            }
            CircuitOp::Measure { pair, basis, reset } => {
                let vecs = basis_vectors(basis);
                let anticoincide = basis == MeasBasis::AntiY;
                // Each party's reported outcome flips with probability
                // 1 - eta, so the reported parity matches the true parity
                // with probability eta^2 + (1-eta)^2.
                let p_same = em.eta * em.eta + (1.0 - em.eta) * (1.0 - em.eta);
                let p_diff = 2.0 * em.eta * (1.0 - em.eta);
                let dim = 1 << m;
                let mut accepted = Mat::zeros(dim);
                for ta in 0..2 {
                    for tb in 0..2 {
                        let proj = kron(&projector(&vecs[ta]), &projector(&vecs[tb]));
                        let pi = embed(&proj, &[2 * pair, 2 * pair + 1], m);
                        let projected = conjugate(&rho, &pi);
                        let true_parity_odd = (ta ^ tb) == 1;
                        let weight = if true_parity_odd == anticoincide {
                            p_same
                        } else {
                            p_diff
                        };
                        accepted.add_scaled(&projected, weight);
                    }
                }
                let placeholder = if reset {
                    raw4.clone()
                } else {
                    // Dead slot: park a pure reference state there.
                    bell_diagonal([1.0, 0.0, 0.0, 0.0])
                };
                rho = replace_qubits(&accepted, &[2 * pair, 2 * pair + 1], &placeholder, m);
            }
            CircuitOp::FinalBcd { perm } => {
                rho = apply_bcd(&rho, 0, perm, m);
            }
        }
    }

    let success = rho.trace().re;
    let others: Vec<usize> = (2..m).collect();
    let marg = partial_trace(&rho, &others, m);
    let vecs = bell_vectors();
    let mut weights = [0.0; 4];
    for (w, v) in weights.iter_mut().zip(&vecs) {
        let mut acc = C::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                acc += v[i].conj() * marg.get(i, j) * v[j];
            }
        }
        *w = acc.re;
    }
    finish_report(weights, success, c.op_count(), c.width + c.reset_count())
}
