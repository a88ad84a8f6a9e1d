//! Bell-diagonal states of a register of Bell pairs and the primitive
//! channels acting on them.
//!
//! A register of `n` pairs is tracked as an unnormalized weight per base-4
//! string of Bell labels (`A`, `B`, `C`, `D`), with pair 0 in the most
//! significant position. The supported operations (noisy bilateral two-qubit
//! gates, coincidence measurements with independent per-qubit readout flips,
//! and local `{B,C,D}` relabelings) all map Bell-diagonal states to
//! Bell-diagonal states, so this representation is exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when validating that weights form a (sub)probability
/// distribution.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Errors from constructing or transforming Bell-diagonal states.
#[derive(Debug, Error, PartialEq)]
pub enum BellStateError {
    #[error("fidelity {0} outside [0, 1]")]
    FidelityOutOfRange(f64),
    #[error("{name} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("weight {value} at index {index} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights total {total} exceeds 1")]
    TotalExceedsOne { total: f64 },
    #[error("expected {expected} weights for {n_pairs} pairs, got {got}")]
    WeightCount {
        n_pairs: usize,
        expected: usize,
        got: usize,
    },
    #[error("pair index {pair} out of range for {n_pairs} pairs")]
    PairOutOfRange { pair: usize, n_pairs: usize },
    #[error("operation needs two distinct pairs, got {0} twice")]
    SamePair(usize),
    #[error("register size {0} not supported (1..=16)")]
    BadRegisterSize(usize),
}

/// The four Bell states of one pair, in the fixed order used everywhere in
/// this crate for indexing and sorting.
///
/// `A` is the target state of purification; `B`, `C`, `D` are the three
/// orthogonal error states (phase-plus-bit flip, bit flip, phase flip).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BellLabel {
    A = 0,
    B = 1,
    C = 2,
    D = 3,
}

impl BellLabel {
    /// All labels in index order.
    pub const ALL: [BellLabel; 4] = [BellLabel::A, BellLabel::B, BellLabel::C, BellLabel::D];

    /// Label with the given index (0..4).
    pub fn from_index(i: usize) -> Option<BellLabel> {
        Self::ALL.get(i).copied()
    }

    /// Index of this label (0..4).
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-letter name.
    pub fn as_char(self) -> char {
        match self {
            BellLabel::A => 'A',
            BellLabel::B => 'B',
            BellLabel::C => 'C',
            BellLabel::D => 'D',
        }
    }
}

/// The four Bell weights of a single pair: `(p_A, p_B, p_C, p_D)`,
/// nonnegative and summing to at most 1 (within [`WEIGHT_TOL`]).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairQuadruple([f64; 4]);

impl PairQuadruple {
    /// Validate and wrap four Bell weights.
    pub fn new(p: [f64; 4]) -> Result<Self, BellStateError> {
        for (index, &value) in p.iter().enumerate() {
            // also rejects NaN
            if value.is_nan() || value < 0.0 {
                return Err(BellStateError::NegativeWeight { index, value });
            }
        }
        let total: f64 = p.iter().sum();
        if total > 1.0 + WEIGHT_TOL {
            return Err(BellStateError::TotalExceedsOne { total });
        }
        Ok(PairQuadruple(p))
    }

    /// Weight of one label.
    pub fn get(&self, label: BellLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn p_a(&self) -> f64 {
        self.0[0]
    }

    pub fn p_b(&self) -> f64 {
        self.0[1]
    }

    pub fn p_c(&self) -> f64 {
        self.0[2]
    }

    pub fn p_d(&self) -> f64 {
        self.0[3]
    }

    /// Fidelity with the target state: the `A` weight.
    pub fn fidelity(&self) -> f64 {
        self.0[0]
    }

    /// `1 - fidelity`.
    pub fn infidelity(&self) -> f64 {
        1.0 - self.0[0]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }
}

/// Werner pair of fidelity `f0`: weight `f0` on `A` and `(1 - f0) / 3` on
/// each of `B`, `C`, `D`.
pub fn werner_raw(f0: f64) -> Result<PairQuadruple, BellStateError> {
    if !(0.0..=1.0).contains(&f0) {
        return Err(BellStateError::FidelityOutOfRange(f0));
    }
    let q = (1.0 - f0) / 3.0;
    PairQuadruple::new([f0, q, q, q])
}

/// Error model shared by all operations of one evaluation: the raw-pair
/// distribution used at initialization and on resets, the two-qubit gate
/// reliability `p2`, and the per-qubit readout reliability `eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub raw: PairQuadruple,
    pub p2: f64,
    pub eta: f64,
}

impl ErrorModel {
    pub fn new(raw: PairQuadruple, p2: f64, eta: f64) -> Result<Self, BellStateError> {
        if !(0.0..=1.0).contains(&p2) {
            return Err(BellStateError::ProbabilityOutOfRange {
                name: "p2",
                value: p2,
            });
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(BellStateError::ProbabilityOutOfRange {
                name: "eta",
                value: eta,
            });
        }
        Ok(ErrorModel { raw, p2, eta })
    }

    /// Werner raw pairs of fidelity `f0` with gate reliability `p2` and
    /// readout reliability `eta`.
    pub fn werner(f0: f64, p2: f64, eta: f64) -> Result<Self, BellStateError> {
        Self::new(werner_raw(f0)?, p2, eta)
    }
}

/// Unnormalized joint distribution over Bell strings of `n_pairs` pairs.
///
/// Index encoding: base 4 with pair 0 most significant, labels ordered
/// `A < B < C < D`. The total weight never exceeds 1; it shrinks each time a
/// measurement post-selects on the reported-success branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BellDistribution {
    n_pairs: usize,
    weights: Vec<f64>,
}

impl BellDistribution {
    /// Validate and wrap raw weights (`4^n_pairs` of them).
    pub fn new(n_pairs: usize, weights: Vec<f64>) -> Result<Self, BellStateError> {
        if n_pairs == 0 || n_pairs > 16 {
            return Err(BellStateError::BadRegisterSize(n_pairs));
        }
        let expected = 1usize << (2 * n_pairs);
        if weights.len() != expected {
            return Err(BellStateError::WeightCount {
                n_pairs,
                expected,
                got: weights.len(),
            });
        }
        for (index, &value) in weights.iter().enumerate() {
            // also rejects NaN
            if value.is_nan() || value < 0.0 {
                return Err(BellStateError::NegativeWeight { index, value });
            }
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + WEIGHT_TOL {
            return Err(BellStateError::TotalExceedsOne { total });
        }
        Ok(BellDistribution { n_pairs, weights })
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of all branch weights.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Bit shift of `pair` within a string index.
    #[inline]
    fn shift(&self, pair: usize) -> u32 {
        (2 * (self.n_pairs - 1 - pair)) as u32
    }

    /// Label of `pair` within string index `s`.
    #[inline]
    pub fn label_at(&self, s: usize, pair: usize) -> BellLabel {
        BellLabel::ALL[(s >> self.shift(pair)) & 3]
    }

    /// String index `s` with the label of `pair` replaced.
    #[inline]
    pub fn with_label(&self, s: usize, pair: usize, label: BellLabel) -> usize {
        let sh = self.shift(pair);
        (s & !(3 << sh)) | (label.index() << sh)
    }

    /// Unnormalized marginal quadruple of one pair.
    pub fn marginal(&self, pair: usize) -> Result<[f64; 4], BellStateError> {
        self.check_pair(pair)?;
        let mut out = [0.0; 4];
        for (s, &w) in self.weights.iter().enumerate() {
            out[self.label_at(s, pair).index()] += w;
        }
        Ok(out)
    }

    fn check_pair(&self, pair: usize) -> Result<(), BellStateError> {
        if pair >= self.n_pairs {
            return Err(BellStateError::PairOutOfRange {
                pair,
                n_pairs: self.n_pairs,
            });
        }
        Ok(())
    }
}

/// Product state of `n_pairs` pairs, each with the same quadruple.
pub fn init_distribution(
    n_pairs: usize,
    raw: PairQuadruple,
) -> Result<BellDistribution, BellStateError> {
    if n_pairs == 0 || n_pairs > 16 {
        return Err(BellStateError::BadRegisterSize(n_pairs));
    }
    let len = 1usize << (2 * n_pairs);
    let p = raw.as_array();
    let mut weights = vec![0.0; len];
    for (s, w) in weights.iter_mut().enumerate() {
        let mut acc = 1.0;
        for k in 0..n_pairs {
            acc *= p[(s >> (2 * (n_pairs - 1 - k))) & 3];
        }
        *w = acc;
    }
    BellDistribution::new(n_pairs, weights)
}

/// Permutation of the 16 two-pair Bell strings, indexed `4 * first + second`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TwoPairPerm(pub [u8; 16]);

impl TwoPairPerm {
    pub fn identity() -> Self {
        let mut m = [0u8; 16];
        for (i, v) in m.iter_mut().enumerate() {
            *v = i as u8;
        }
        TwoPairPerm(m)
    }

    /// Exchange of the two pairs: `(l1, l2) -> (l2, l1)`.
    pub fn swap_pairs() -> Self {
        let mut m = [0u8; 16];
        for (i, v) in m.iter_mut().enumerate() {
            *v = (((i & 3) << 2) | (i >> 2)) as u8;
        }
        TwoPairPerm(m)
    }

    /// Image of a two-label input.
    pub fn apply(&self, first: BellLabel, second: BellLabel) -> (BellLabel, BellLabel) {
        let t = self.0[4 * first.index() + second.index()] as usize;
        (BellLabel::ALL[t >> 2], BellLabel::ALL[t & 3])
    }

    /// `self` after `other`: `(self.compose(other))(s) = self(other(s))`.
    pub fn compose(&self, other: &TwoPairPerm) -> TwoPairPerm {
        let mut m = [0u8; 16];
        for (i, v) in m.iter_mut().enumerate() {
            *v = self.0[other.0[i] as usize];
        }
        TwoPairPerm(m)
    }

    pub fn inverse(&self) -> TwoPairPerm {
        let mut m = [0u8; 16];
        for (i, &t) in self.0.iter().enumerate() {
            m[t as usize] = i as u8;
        }
        TwoPairPerm(m)
    }

    /// True if all 16 images are distinct.
    pub fn is_permutation(&self) -> bool {
        let mut seen = [false; 16];
        for &t in &self.0 {
            if t >= 16 || seen[t as usize] {
                return false;
            }
            seen[t as usize] = true;
        }
        true
    }

    /// Per-pair product of two single-pair relabelings.
    pub fn product(first: BcdPerm, second: BcdPerm) -> TwoPairPerm {
        let mut m = [0u8; 16];
        for (i, v) in m.iter_mut().enumerate() {
            let l1 = first.apply(BellLabel::ALL[i >> 2]);
            let l2 = second.apply(BellLabel::ALL[i & 3]);
            *v = (4 * l1.index() + l2.index()) as u8;
        }
        TwoPairPerm(m)
    }

    /// Base-4 encoding of the image sequence; the deterministic sort key for
    /// enumerations.
    pub fn encoding(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &t| acc * 16 + t as u64)
    }
}

/// The bilateral mirrored-CNOT permutation on two pairs. The first label is
/// the preserved pair (both parties' control qubits), the second the
/// sacrificial pair (both targets). Applying it twice gives the identity.
pub fn mirrored_cnot_perm() -> TwoPairPerm {
    // Images in input order AA, AB, AC, AD, BA, ..., DD.
    TwoPairPerm([0, 13, 2, 15, 6, 11, 4, 9, 10, 7, 8, 5, 12, 1, 14, 3])
}

/// Noisy bilateral two-qubit operation on pairs `(first, second)`.
///
/// With probability `p2 * p2` (each party's gate succeeding independently)
/// the labels of the two pairs are rewritten through `perm`; otherwise the
/// two pairs are replaced by the uniform mixture over their 16 joint labels,
/// leaving the marginal on the remaining pairs intact. Total weight is
/// conserved.
pub fn apply_bilateral_gate(
    state: &BellDistribution,
    perm: &TwoPairPerm,
    first: usize,
    second: usize,
    p2: f64,
) -> Result<BellDistribution, BellStateError> {
    state.check_pair(first)?;
    state.check_pair(second)?;
    if first == second {
        return Err(BellStateError::SamePair(first));
    }
    if !(0.0..=1.0).contains(&p2) {
        return Err(BellStateError::ProbabilityOutOfRange {
            name: "p2",
            value: p2,
        });
    }

    let ok = p2 * p2;
    let fail_each = (1.0 - ok) / 16.0;
    let n = state.weights.len();
    let sh1 = state.shift(first);
    let sh2 = state.shift(second);
    let clear = !((3usize << sh1) | (3usize << sh2));
    let mut out = vec![0.0; n];

    for (s, &w) in state.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let l1 = (s >> sh1) & 3;
        let l2 = (s >> sh2) & 3;
        let rest = s & clear;
        let t = perm.0[4 * l1 + l2] as usize;
        let moved = rest | ((t >> 2) << sh1) | ((t & 3) << sh2);
        out[moved] += ok * w;
        if fail_each > 0.0 {
            let spread = fail_each * w;
            for l1n in 0..4usize {
                for l2n in 0..4usize {
                    out[rest | (l1n << sh1) | (l2n << sh2)] += spread;
                }
            }
        }
    }
    Ok(BellDistribution {
        n_pairs: state.n_pairs,
        weights: out,
    })
}

/// Coincidence-measurement bases. Each accepts the two Bell labels whose
/// stabilizer sign matches the compared readout pattern: coincidence in Z
/// accepts `{A, D}`, coincidence in X accepts `{A, C}`, anti-coincidence in Y
/// accepts `{A, B}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasBasis {
    #[serde(rename = "coinZ")]
    CoinZ,
    #[serde(rename = "coinX")]
    CoinX,
    #[serde(rename = "antiY")]
    AntiY,
}

impl MeasBasis {
    pub const ALL: [MeasBasis; 3] = [MeasBasis::CoinZ, MeasBasis::CoinX, MeasBasis::AntiY];

    /// Whether a pair in `label` makes the comparison report success under
    /// error-free readout.
    pub fn accepts(self, label: BellLabel) -> bool {
        matches!(
            (self, label),
            (_, BellLabel::A)
                | (MeasBasis::CoinZ, BellLabel::D)
                | (MeasBasis::CoinX, BellLabel::C)
                | (MeasBasis::AntiY, BellLabel::B)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MeasBasis::CoinZ => "coinZ",
            MeasBasis::CoinX => "coinX",
            MeasBasis::AntiY => "antiY",
        }
    }
}

/// Report-success probability per label: each of the two readouts flips
/// independently with probability `1 - eta`, so an accepted label reports
/// success with probability `eta^2 + (1 - eta)^2` and a rejected one with
/// `2 eta (1 - eta)`.
pub fn report_success_prob(basis: MeasBasis, label: BellLabel, eta: f64) -> f64 {
    if basis.accepts(label) {
        eta * eta + (1.0 - eta) * (1.0 - eta)
    } else {
        2.0 * eta * (1.0 - eta)
    }
}

/// Coincidence measurement of `pair`, post-selected on the reported-success
/// branch.
///
/// Returns the new unnormalized distribution together with the success
/// weight (the ratio of new to old total weight; 0 if the state had no
/// weight). If `reset` the measured slot is re-tensored with a fresh `raw`
/// pair; otherwise the slot is parked in the reference label `A` and must
/// not be used again.
pub fn apply_measurement(
    state: &BellDistribution,
    pair: usize,
    basis: MeasBasis,
    eta: f64,
    raw: PairQuadruple,
    reset: bool,
) -> Result<(BellDistribution, f64), BellStateError> {
    state.check_pair(pair)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(BellStateError::ProbabilityOutOfRange {
            name: "eta",
            value: eta,
        });
    }

    let r: [f64; 4] = [
        report_success_prob(basis, BellLabel::A, eta),
        report_success_prob(basis, BellLabel::B, eta),
        report_success_prob(basis, BellLabel::C, eta),
        report_success_prob(basis, BellLabel::D, eta),
    ];
    let n = state.weights.len();
    let sh = state.shift(pair);
    let clear = !(3usize << sh);
    let fresh = raw.as_array();
    let mut out = vec![0.0; n];

    for (s, &w) in state.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let kept = r[(s >> sh) & 3] * w;
        let base = s & clear;
        if reset {
            for (l, &p) in fresh.iter().enumerate() {
                out[base | (l << sh)] += kept * p;
            }
        } else {
            out[base] += kept;
        }
    }

    let before = state.total();
    let after: f64 = out.iter().sum();
    let success_weight = if before > 0.0 { after / before } else { 0.0 };
    Ok((
        BellDistribution {
            n_pairs: state.n_pairs,
            weights: out,
        },
        success_weight,
    ))
}

/// Permutation of `{B, C, D}` with `A` fixed: the relabelings realizable by
/// error-free local single-qubit gates on both sides of one pair.
///
/// Named by the image string of `(B, C, D)`; e.g. `BDC` maps `B -> B`,
/// `C -> D`, `D -> C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BcdPerm {
    images: [BellLabel; 3],
}

impl BcdPerm {
    /// All six relabelings, identity first, in a fixed order.
    pub const ALL: [BcdPerm; 6] = [
        BcdPerm::from_labels([BellLabel::B, BellLabel::C, BellLabel::D]),
        BcdPerm::from_labels([BellLabel::B, BellLabel::D, BellLabel::C]),
        BcdPerm::from_labels([BellLabel::D, BellLabel::C, BellLabel::B]),
        BcdPerm::from_labels([BellLabel::C, BellLabel::D, BellLabel::B]),
        BcdPerm::from_labels([BellLabel::D, BellLabel::B, BellLabel::C]),
        BcdPerm::from_labels([BellLabel::C, BellLabel::B, BellLabel::D]),
    ];

    const fn from_labels(images: [BellLabel; 3]) -> BcdPerm {
        BcdPerm { images }
    }

    pub fn identity() -> BcdPerm {
        Self::ALL[0]
    }

    /// Parse a three-letter image string over `{B, C, D}`.
    pub fn from_name(name: &str) -> Option<BcdPerm> {
        Self::ALL.iter().copied().find(|p| p.name() == name)
    }

    pub fn name(&self) -> &'static str {
        match (
            self.images[0].index(),
            self.images[1].index(),
            self.images[2].index(),
        ) {
            (1, 2, 3) => "BCD",
            (1, 3, 2) => "BDC",
            (3, 2, 1) => "DCB",
            (2, 3, 1) => "CDB",
            (3, 1, 2) => "DBC",
            (2, 1, 3) => "CBD",
            _ => unreachable!("images always form a permutation of B, C, D"),
        }
    }

    pub fn apply(&self, label: BellLabel) -> BellLabel {
        match label {
            BellLabel::A => BellLabel::A,
            BellLabel::B => self.images[0],
            BellLabel::C => self.images[1],
            BellLabel::D => self.images[2],
        }
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &BcdPerm) -> BcdPerm {
        BcdPerm {
            images: [
                self.apply(other.images[0]),
                self.apply(other.images[1]),
                self.apply(other.images[2]),
            ],
        }
    }

    pub fn inverse(&self) -> BcdPerm {
        let mut images = [BellLabel::A; 3];
        for (from, &to) in self.images.iter().enumerate() {
            images[to.index() - 1] = BellLabel::ALL[from + 1];
        }
        BcdPerm { images }
    }
}

impl Serialize for BcdPerm {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for BcdPerm {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BcdPerm::from_name(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown BCD permutation `{s}`")))
    }
}

/// Error-free relabeling of one pair by a `{B, C, D}` permutation.
pub fn bcd_perm_single(
    state: &BellDistribution,
    pair: usize,
    perm: BcdPerm,
) -> Result<BellDistribution, BellStateError> {
    state.check_pair(pair)?;
    let sh = state.shift(pair);
    let clear = !(3usize << sh);
    let mut out = vec![0.0; state.weights.len()];
    for (s, &w) in state.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let l = BellLabel::ALL[(s >> sh) & 3];
        out[(s & clear) | (perm.apply(l).index() << sh)] += w;
    }
    Ok(BellDistribution {
        n_pairs: state.n_pairs,
        weights: out,
    })
}
