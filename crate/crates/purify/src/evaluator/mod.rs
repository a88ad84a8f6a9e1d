//! Exact circuit evaluation and derived figures of merit.
//!
//! [`evaluate`] folds the Bell-diagonal channels over a circuit's ops and
//! reports the all-success branch: final pair-0 quadruple, success
//! probability, and best-case raw-pair cost. [`oracle_evaluate`] recomputes
//! the same report from a full density-matrix simulation of every qubit and
//! exists purely to cross-check the fast path. [`evaluate_symbolic`] runs
//! the fold over exact rational polynomials in (F0, p2, eta).

pub mod oracle;
pub mod symbolic;

pub use oracle::oracle_evaluate;
pub use symbolic::{evaluate_symbolic, FirstOrder, Poly, SymbolicReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bellstate::{
    apply_bilateral_gate, apply_measurement, bcd_perm_single, init_distribution,
    mirrored_cnot_perm, BellStateError, ErrorModel, PairQuadruple, TwoPairPerm,
};
use crate::circuit::{Circuit, CircuitOp};

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error(transparent)]
    State(#[from] BellStateError),
    #[error("the reference simulator supports width <= 3, got {0}")]
    OracleWidth(usize),
    #[error("symbolic evaluation supports width <= {max_width} and op count <= {max_ops}, got width {width} with {ops} ops")]
    SymbolicLimits {
        width: usize,
        ops: usize,
        max_width: usize,
        max_ops: usize,
    },
    #[error("symbolic evaluation exceeded the term budget ({terms} > {budget})")]
    TermBudget { terms: usize, budget: usize },
}

/// Results for the all-success branch of a circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Pair 0's Bell quadruple, normalized by the success probability.
    /// Meaningful only when `final_defined` is true.
    #[serde(rename = "final")]
    pub final_state: PairQuadruple,
    /// False when no weight survives post-selection; `final` then holds a
    /// uniform placeholder.
    pub final_defined: bool,
    /// Probability that every measurement reports the accepted outcome.
    pub success_prob: f64,
    /// Executable operations; the final relabeling is free and not counted.
    pub op_count: usize,
    /// Raw pairs consumed when every measurement succeeds on the first try:
    /// the initial register plus one per reset.
    pub raw_pairs_best_case: usize,
    /// Relative shares of the B, C, D labels in the final infidelity; all
    /// zero when the output is exactly pure.
    pub infidelity_components: [f64; 3],
}

impl EvalReport {
    pub fn fidelity(&self) -> f64 {
        self.final_state.p_a()
    }

    pub fn infidelity(&self) -> f64 {
        1.0 - self.final_state.p_a()
    }
}

/// Shared readout arithmetic: normalize an unnormalized pair-0 quadruple by
/// the accumulated success weight. Tiny negative weights from floating-point
/// noise are clamped to zero.
pub(crate) fn finish_report(
    unnormalized: [f64; 4],
    success: f64,
    op_count: usize,
    raw_pairs_best_case: usize,
) -> Result<EvalReport, EvaluatorError> {
    if success <= 0.0 {
        return Ok(EvalReport {
            final_state: PairQuadruple::new([0.25; 4])?,
            final_defined: false,
            success_prob: 0.0,
            op_count,
            raw_pairs_best_case,
            infidelity_components: [0.0; 3],
        });
    }
    let mut p = [0.0; 4];
    for (out, &w) in p.iter_mut().zip(&unnormalized) {
        debug_assert!(w > -1e-9, "weight {w} too negative to be rounding noise");
        *out = (w / success).max(0.0);
    }
    let final_state = PairQuadruple::new(p)?;
    let err = p[1] + p[2] + p[3];
    let infidelity_components = if err > 0.0 {
        [p[1] / err, p[2] / err, p[3] / err]
    } else {
        [0.0; 3]
    };
    Ok(EvalReport {
        final_state,
        final_defined: true,
        success_prob: success,
        op_count,
        raw_pairs_best_case,
        infidelity_components,
    })
}

/// The permutation a gate applies when neither side depolarizes: the
/// per-pair relabelings first, then the mirrored CNOT.
pub(crate) fn gate_perm(op: &CircuitOp) -> Option<TwoPairPerm> {
    match *op {
        CircuitOp::Gate {
            bcd_src, bcd_dst, ..
        } => Some(mirrored_cnot_perm().compose(&TwoPairPerm::product(bcd_src, bcd_dst))),
        CircuitOp::Swap { .. } => Some(TwoPairPerm::swap_pairs()),
        _ => None,
    }
}

/// Evaluate a circuit exactly over the Bell-diagonal representation.
///
/// The state is kept unnormalized: every measurement scales each branch by
/// its reported-success probability, so the final total weight is the
/// probability that the whole circuit succeeds and the final pair-0
/// marginal, normalized by that weight, is the conditional output state.
pub fn evaluate(c: &Circuit, em: &ErrorModel) -> Result<EvalReport, EvaluatorError> {
    let mut state = init_distribution(c.width, em.raw)?;
    for op in &c.ops {
        match *op {
            CircuitOp::Gate { src, dst, .. } => {
                let perm = gate_perm(op).expect("gate op");
                state = apply_bilateral_gate(&state, &perm, src, dst, em.p2)?;
            }
            CircuitOp::Swap { a, b } => {
                state = apply_bilateral_gate(&state, &TwoPairPerm::swap_pairs(), a, b, em.p2)?;
            }
            CircuitOp::Measure { pair, basis, reset } => {
                let (next, _) = apply_measurement(&state, pair, basis, em.eta, em.raw, reset)?;
                state = next;
            }
            CircuitOp::FinalBcd { perm } => {
                state = bcd_perm_single(&state, 0, perm)?;
            }
        }
    }
    let success = state.total();
    let unnormalized = state.marginal(0)?;
    finish_report(
        unnormalized,
        success,
        c.op_count(),
        c.width + c.reset_count(),
    )
}

/// Shannon entropy of a Bell quadruple in bits, with 0 log 0 = 0.
pub fn entropy(p: &PairQuadruple) -> f64 {
    p.as_array()
        .iter()
        .map(|&x| if x > 0.0 { -x * x.log2() } else { 0.0 })
        .sum()
}

/// Lower bound on the asymptotic yield if the circuit's output feeds
/// one-way hashing: (P/N)(1 - H(final)). Negative values mean the bound is
/// vacuous. Meaningful only for perfect local operations.
pub fn hashing_yield(report: &EvalReport) -> f64 {
    report.success_prob / report.raw_pairs_best_case as f64 * (1.0 - entropy(&report.final_state))
}
