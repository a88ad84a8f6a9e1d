//! Exact design, evaluation, and optimization of entanglement purification
//! circuits for Bell pairs.
//!
//! Two remote parties share `width` noisy Bell pairs and try to turn them into
//! one better pair (pair 0) using local two-qubit gates, local single-qubit
//! relabelings, and coincidence measurements whose outcomes are compared over
//! a classical channel. Everything in this crate operates on the Bell-diagonal
//! representation of that register: a nonnegative weight per base-4 string of
//! Bell labels, which is exact for the supported gate and measurement error
//! models.
//!
//! # Modules
//!
//! - [`bellstate`]: Bell labels, per-pair weight quadruples, joint
//!   distributions, and the primitive channels (noisy bilateral gates,
//!   coincidence measurements, local relabelings).
//! - [`permgroup`]: enumeration of the two-qubit Clifford group, of the
//!   bilateral operations that permute the two-pair Bell basis, and the
//!   classification that isolates the useful purification permutations.
//! - [`circuit`]: the circuit IR (gates, measurements, swaps, final
//!   relabeling), canonicalization, builtin reference circuits, and the
//!   component partition used for restart analysis.
//! - [`evaluator`]: exact circuit evaluation (numeric, and symbolic with
//!   exact rational coefficients), an independent density-matrix reference
//!   simulator, entropy, and hashing yield.
//! - [`optimizer`]: mutation-only elitist genetic search over canonical
//!   circuits, with deterministic parallel evaluation.
//! - [`runtime_mc`]: Monte Carlo estimation of the raw-pair cost per produced
//!   pair under measurement failures and block or full restarts.
//! - [`cli`]: the `purify` command-line tool built from the modules above.

pub mod bellstate;
pub mod circuit;
pub mod cli;
pub mod evaluator;
pub mod optimizer;
pub mod permgroup;
pub mod runtime_mc;

pub use bellstate::{
    apply_bilateral_gate, apply_measurement, bcd_perm_single, init_distribution,
    mirrored_cnot_perm, werner_raw, BcdPerm, BellDistribution, BellLabel, BellStateError,
    ErrorModel, MeasBasis, PairQuadruple, TwoPairPerm,
};
pub use circuit::{
    builtin, canonicalize, color_partition, read_circuit, write_circuit, Circuit, CircuitError,
    CircuitOp, ColorPartition, Mode, Subcircuit,
};
pub use evaluator::{
    entropy, evaluate, evaluate_symbolic, hashing_yield, oracle_evaluate, EvalReport,
    EvaluatorError, FirstOrder, Poly, SymbolicReport,
};
pub use optimizer::{
    fitness, mutate, random_circuit, run_ga, GaConfig, GaRun, MutationWeights, OptimizerError,
    Scored,
};
pub use permgroup::{
    classify, compile_bcd_perm, enumerate_bell_permutations, enumerate_c2, BellPermutation,
    BellPermutationSet, ClassCounts, Classification, CliffordOp2, Pauli2, PermClassification,
    PermGroupError,
};
pub use runtime_mc::{mean_pairs, simulate_runs, McConfig, McError, McReport};
