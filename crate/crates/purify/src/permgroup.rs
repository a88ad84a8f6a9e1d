//! Enumeration and classification of the local Clifford operations that
//! permute the two-pair Bell basis.
//!
//! A Bell state of two pairs is the joint eigenstate of the four commuting
//! mirrored stabilizers `XX` and `ZZ` on each pair, so it is determined by a
//! sign pattern in GF(2)^4. A bilateral operation (the two parties each apply
//! a two-qubit Clifford to their halves) maps Bell basis states to Bell basis
//! states exactly when the two sides share the same symplectic action; the
//! induced map on sign patterns is then affine, which is what this module
//! enumerates. Quotienting the 16 sign choices per side that produce the same
//! affine map leaves one [`BellPermutation`] per distinct action on the 16
//! two-pair labels.

use std::collections::HashSet;

use thiserror::Error;

use crate::bellstate::{BcdPerm, TwoPairPerm};

/// Errors from permutation-group construction and classification.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermGroupError {
    #[error("expected the full set of {expected} permutations, got {got}")]
    WrongCardinality { expected: usize, got: usize },
    #[error("rows do not preserve the symplectic form")]
    NotSymplectic,
}

/// Number of two-qubit Clifford operations modulo global phase.
pub const C2_SIZE: usize = 11520;

/// Symplectic vectors are 4-bit masks with bit layout (x1, z1, x2, z2).
#[inline]
fn parity(v: u8) -> u8 {
    (v.count_ones() & 1) as u8
}

/// Symplectic inner product of two 4-bit vectors: 1 iff the Paulis they
/// denote anticommute.
#[inline]
fn symplectic_inner(u: u8, v: u8) -> u8 {
    let v_swapped = ((v & 0b0101) << 1) | ((v >> 1) & 0b0101);
    parity(u & v_swapped)
}

/// Rows are images of the generators (X1, Z1, X2, Z2); they must reproduce
/// the generators' commutation pattern.
fn rows_are_symplectic(rows: &[u8; 4]) -> bool {
    for i in 0..4 {
        for j in (i + 1)..4 {
            let want = u8::from((i, j) == (0, 1) || (i, j) == (2, 3));
            if symplectic_inner(rows[i], rows[j]) != want {
                return false;
            }
        }
    }
    true
}

/// Inverse of an invertible 4x4 matrix over GF(2), rows as bit masks.
fn gf2_inv4(m: [u8; 4]) -> [u8; 4] {
    let mut a: [u16; 4] = [
        m[0] as u16 | 1 << 4,
        m[1] as u16 | 1 << 5,
        m[2] as u16 | 1 << 6,
        m[3] as u16 | 1 << 7,
    ];
    for c in 0..4 {
        let p = (c..4)
            .find(|&r| a[r] >> c & 1 == 1)
            .expect("matrix is invertible");
        a.swap(c, p);
        for r in 0..4 {
            if r != c && a[r] >> c & 1 == 1 {
                a[r] ^= a[c];
            }
        }
    }
    [
        (a[0] >> 4) as u8,
        (a[1] >> 4) as u8,
        (a[2] >> 4) as u8,
        (a[3] >> 4) as u8,
    ]
}

/// Matrix-vector product over GF(2); `m` rows as masks, `v` a column vector.
#[inline]
fn matvec(m: &[u8; 4], v: u8) -> u8 {
    let mut out = 0;
    for (i, &row) in m.iter().enumerate() {
        out |= parity(row & v) << i;
    }
    out
}

/// Number of Y components (x and z both set on the same qubit): 0, 1, or 2.
#[inline]
fn y_count(v: u8) -> u8 {
    (v & (v >> 1) & 0b0101).count_ones() as u8
}

/// 1 iff the vector contains an odd number of Y components.
#[inline]
fn y_parity(v: u8) -> u8 {
    y_count(v) & 1
}

/// Two-qubit Pauli operator `i^k * W(v)`, where `W(v)` is the Hermitian
/// Pauli word (tensor of I, X, Z, Y) with symplectic vector `v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pauli2 {
    v: u8,
    k: u8,
}

/// Phase exponent of i picked up when multiplying the single-qubit Hermitian
/// Paulis with bits (x1, z1) and (x2, z2), left times right.
#[inline]
fn phase_g(x1: u8, z1: u8, x2: u8, z2: u8) -> i32 {
    match (x1, z1) {
        (0, 0) => 0,
        (1, 1) => z2 as i32 - x2 as i32,
        (1, 0) => z2 as i32 * (2 * x2 as i32 - 1),
        (0, 1) => x2 as i32 * (1 - 2 * z2 as i32),
        _ => unreachable!(),
    }
}

impl Pauli2 {
    /// Pauli with symplectic vector `v` (low 4 bits) and phase `i^k` (k mod 4).
    pub fn new(v: u8, k: u8) -> Pauli2 {
        Pauli2 {
            v: v & 15,
            k: k & 3,
        }
    }

    pub fn identity() -> Pauli2 {
        Pauli2 { v: 0, k: 0 }
    }

    pub fn vector(self) -> u8 {
        self.v
    }

    /// Phase exponent k in `i^k`.
    pub fn phase_exp(self) -> u8 {
        self.k
    }
}

/// Operator product with exact phase tracking.
impl std::ops::Mul for Pauli2 {
    type Output = Pauli2;

    fn mul(self, other: Pauli2) -> Pauli2 {
        let g = phase_g(self.v & 1, self.v >> 1 & 1, other.v & 1, other.v >> 1 & 1)
            + phase_g(
                self.v >> 2 & 1,
                self.v >> 3 & 1,
                other.v >> 2 & 1,
                other.v >> 3 & 1,
            );
        Pauli2 {
            v: self.v ^ other.v,
            k: ((self.k as i32 + other.k as i32 + g).rem_euclid(4)) as u8,
        }
    }
}

/// A two-qubit Clifford operation modulo global phase: the signed images of
/// the Pauli generators under conjugation.
///
/// `rows[i]` is the symplectic vector of the image of generator i (order X1,
/// Z1, X2, Z2); bit i of `signs` is set when that image carries a minus sign.
/// There are 720 valid row matrices and 16 sign vectors, 11520 operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CliffordOp2 {
    rows: [u8; 4],
    signs: u8,
}

impl CliffordOp2 {
    pub fn new(rows: [u8; 4], signs: u8) -> Result<CliffordOp2, PermGroupError> {
        if rows.iter().any(|&r| r > 15) || signs > 15 || !rows_are_symplectic(&rows) {
            return Err(PermGroupError::NotSymplectic);
        }
        Ok(CliffordOp2 { rows, signs })
    }

    pub fn identity() -> CliffordOp2 {
        CliffordOp2 {
            rows: [0b0001, 0b0010, 0b0100, 0b1000],
            signs: 0,
        }
    }

    pub fn rows(&self) -> [u8; 4] {
        self.rows
    }

    pub fn signs(&self) -> u8 {
        self.signs
    }

    /// Image of `p` under conjugation by this operation.
    ///
    /// Decomposes `p` into generator factors and multiplies their signed
    /// images; the phase calculus is exact, so anti-Hermitian intermediate
    /// phases cancel by the end for any valid Clifford.
    pub fn conjugate(&self, p: Pauli2) -> Pauli2 {
        // W(v) = i^(number of Y components) * X1^x1 Z1^z1 X2^x2 Z2^z2.
        let mut acc = Pauli2::new(0, p.k + y_count(p.v));
        for i in 0..4 {
            if p.v >> i & 1 == 1 {
                acc = acc * Pauli2::new(self.rows[i], 2 * (self.signs >> i & 1));
            }
        }
        acc
    }

    /// `self` after `other`: conjugation first by `other`, then by `self`.
    pub fn compose(&self, other: &CliffordOp2) -> CliffordOp2 {
        let mut rows = [0u8; 4];
        let mut signs = 0u8;
        for (i, row) in rows.iter_mut().enumerate() {
            let p = self.conjugate(Pauli2::new(other.rows[i], 2 * (other.signs >> i & 1)));
            debug_assert_eq!(p.k & 1, 0, "generator image must be Hermitian");
            *row = p.v;
            signs |= (p.k >> 1 & 1) << i;
        }
        CliffordOp2 { rows, signs }
    }

    pub fn inverse(&self) -> CliffordOp2 {
        let inv_rows = gf2_inv4(self.rows);
        // Composing the unsigned inverse with self leaves identity rows with
        // a residual sign vector t; the sign fix u for the inverse satisfies
        // rows * u = t because flipping generator sign u_j flips the image of
        // any vector v by u . v.
        let unsigned = CliffordOp2 {
            rows: inv_rows,
            signs: 0,
        };
        let t = unsigned.compose(self).signs;
        CliffordOp2 {
            rows: inv_rows,
            signs: matvec(&gf2_inv4(self.rows), t),
        }
    }
}

/// All 720 symplectic row matrices, in lexicographic row order.
fn enumerate_symplectic() -> Vec<[u8; 4]> {
    let mut out = Vec::with_capacity(720);
    for r0 in 1..16u8 {
        for r1 in 1..16u8 {
            if symplectic_inner(r0, r1) != 1 {
                continue;
            }
            for r2 in 1..16u8 {
                if symplectic_inner(r0, r2) != 0 || symplectic_inner(r1, r2) != 0 {
                    continue;
                }
                for r3 in 1..16u8 {
                    if symplectic_inner(r0, r3) != 0
                        || symplectic_inner(r1, r3) != 0
                        || symplectic_inner(r2, r3) != 1
                    {
                        continue;
                    }
                    out.push([r0, r1, r2, r3]);
                }
            }
        }
    }
    out
}

/// All 11520 two-qubit Clifford operations (modulo global phase), sorted by
/// (rows, signs).
pub fn enumerate_c2() -> Vec<CliffordOp2> {
    let mut out = Vec::with_capacity(C2_SIZE);
    for rows in enumerate_symplectic() {
        for signs in 0..16u8 {
            out.push(CliffordOp2 { rows, signs });
        }
    }
    out.sort_unstable();
    out
}

// Sign-pattern encoding of a label, bits (xx, zz). The table is its own
// inverse, so it also decodes patterns back to label indices.
const CHI: [usize; 4] = [0b00, 0b11, 0b10, 0b01];

/// Affine action chi' = minv * (chi ^ eps) as a permutation of two-pair
/// labels.
fn mapping_for(minv: &[u8; 4], eps: u8) -> TwoPairPerm {
    let mut m = [0u8; 16];
    for l1 in 0..4 {
        for l2 in 0..4 {
            let chi = (CHI[l1] | CHI[l2] << 2) as u8;
            let out = matvec(minv, chi ^ eps) as usize;
            m[4 * l1 + l2] = (4 * CHI[out & 3] + CHI[out >> 2 & 3]) as u8;
        }
    }
    TwoPairPerm(m)
}

/// One distinct permutation of the 16 two-pair Bell labels, together with
/// the bilateral Clifford data that realizes it.
#[derive(Clone, Debug)]
pub struct BellPermutation {
    mapping: TwoPairPerm,
    symplectic: [u8; 4],
    sign_delta: u8,
}

impl BellPermutation {
    pub fn mapping(&self) -> &TwoPairPerm {
        &self.mapping
    }

    /// The 16 bilateral operation pairs (one per first-side sign vector)
    /// whose joint action is this permutation. Both sides always share the
    /// symplectic part; only the XOR of the sign vectors matters.
    pub fn realizers(&self) -> Vec<(CliffordOp2, CliffordOp2)> {
        (0..16u8)
            .map(|sa| {
                (
                    CliffordOp2 {
                        rows: self.symplectic,
                        signs: sa,
                    },
                    CliffordOp2 {
                        rows: self.symplectic,
                        signs: sa ^ self.sign_delta,
                    },
                )
            })
            .collect()
    }
}

/// The full enumeration result: every distinct Bell-basis permutation
/// realizable bilaterally, plus the count of bilateral operations before the
/// sign quotient.
#[derive(Clone, Debug)]
pub struct BellPermutationSet {
    perms: Vec<BellPermutation>,
    bilateral_count: usize,
}

impl BellPermutationSet {
    /// Permutations sorted by the base-4 encoding of their mapping.
    pub fn perms(&self) -> &[BellPermutation] {
        &self.perms
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    /// Number of (first side, second side) Clifford pairs acting as Bell
    /// permutations: 16 x 16 sign choices for each symplectic part.
    pub fn bilateral_count(&self) -> usize {
        self.bilateral_count
    }

    /// Locate a permutation by its mapping.
    pub fn find(&self, mapping: &TwoPairPerm) -> Option<&BellPermutation> {
        let key = mapping.encoding();
        self.perms
            .binary_search_by_key(&key, |p| p.mapping.encoding())
            .ok()
            .map(|i| &self.perms[i])
    }
}

/// Enumerate every bilateral Clifford action on the two-pair Bell basis.
///
/// A bilateral pair permutes the Bell basis iff both sides have the same
/// symplectic part S; the permutation depends only on S and the XOR of the
/// two sign vectors, giving 720 x 16 distinct mappings realized by
/// 720 x 16 x 16 operation pairs.
pub fn enumerate_bell_permutations() -> BellPermutationSet {
    let sympls = enumerate_symplectic();
    let bilateral_count = sympls.len() * 16 * 16;
    let mut perms = Vec::with_capacity(sympls.len() * 16);
    for rows in sympls {
        let minv = gf2_inv4(rows);
        // A row with a Y component flips the mirrored product's sign:
        // Y (x) Y = -(XX)(ZZ).
        let mut vxz = 0u8;
        for (i, &r) in rows.iter().enumerate() {
            vxz |= y_parity(r) << i;
        }
        for delta in 0..16u8 {
            perms.push(BellPermutation {
                mapping: mapping_for(&minv, delta ^ vxz),
                symplectic: rows,
                sign_delta: delta,
            });
        }
    }
    perms.sort_unstable_by_key(|p| p.mapping.encoding());
    debug_assert!(perms.windows(2).all(|w| w[0].mapping != w[1].mapping));
    BellPermutationSet {
        perms,
        bilateral_count,
    }
}

/// Classification flags for one Bell permutation.
///
/// `is_a_preserving`: fixes the all-A label, so it never spends fidelity.
/// `is_fidelity_trivial`: a per-pair relabeling, possibly with a pair
/// exchange; useless for purification on its own. The remaining A-preserving
/// permutations are `useful`; each is either a product of per-pair
/// relabelings around one mirrored CNOT (`generated_by_cnot_bcd`) or needs a
/// pair exchange in that sandwich as well (`requires_swap`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PermClassification {
    pub is_a_preserving: bool,
    pub is_fidelity_trivial: bool,
    pub generated_by_cnot_bcd: bool,
    pub requires_swap: bool,
}

impl PermClassification {
    pub fn is_useful(&self) -> bool {
        self.is_a_preserving && !self.is_fidelity_trivial
    }
}

/// Subset sizes produced by [`classify`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassCounts {
    pub unique_mappings: usize,
    pub a_preserving: usize,
    pub fidelity_trivial: usize,
    pub useful: usize,
    pub cnot_bcd_generated: usize,
    pub swap_required: usize,
}

/// Classification of the full permutation set, flag vector parallel to
/// `set.perms()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub per_perm: Vec<PermClassification>,
    pub counts: ClassCounts,
}

/// Per-pair relabelings and their pair-exchanged variants: the permutations
/// that cannot change which labels carry weight in a way that matters for
/// fidelity.
fn trivial_mappings() -> HashSet<u64> {
    let swap = TwoPairPerm::swap_pairs();
    let mut out = HashSet::new();
    for s1 in BcdPerm::ALL {
        for s2 in BcdPerm::ALL {
            let prod = TwoPairPerm::product(s1, s2);
            out.insert(prod.encoding());
            out.insert(prod.compose(&swap).encoding());
        }
    }
    out
}

/// Everything reachable as (relabeling) . CNOT . (relabeling).
fn cnot_sandwich_mappings() -> HashSet<u64> {
    let cnot = crate::bellstate::mirrored_cnot_perm();
    sandwich_set(&[cnot])
}

/// Everything reachable as (relabeling) . core . (relabeling) for any core.
fn sandwich_set(cores: &[TwoPairPerm]) -> HashSet<u64> {
    let products: Vec<TwoPairPerm> = BcdPerm::ALL
        .iter()
        .flat_map(|&s1| {
            BcdPerm::ALL
                .iter()
                .map(move |&s2| TwoPairPerm::product(s1, s2))
        })
        .collect();
    let mut out = HashSet::new();
    for core in cores {
        for pre in &products {
            let mid = core.compose(pre);
            for post in &products {
                out.insert(post.compose(&mid).encoding());
            }
        }
    }
    out
}

/// Classify every permutation of the complete enumerated set.
pub fn classify(set: &BellPermutationSet) -> Result<Classification, PermGroupError> {
    if set.len() != C2_SIZE {
        return Err(PermGroupError::WrongCardinality {
            expected: C2_SIZE,
            got: set.len(),
        });
    }
    let trivial = trivial_mappings();
    let sandwich = cnot_sandwich_mappings();
    let mut per_perm = Vec::with_capacity(set.len());
    let mut counts = ClassCounts {
        unique_mappings: set.len(),
        a_preserving: 0,
        fidelity_trivial: 0,
        useful: 0,
        cnot_bcd_generated: 0,
        swap_required: 0,
    };
    for p in set.perms() {
        let enc = p.mapping.encoding();
        let is_a_preserving = p.mapping.0[0] == 0;
        let is_fidelity_trivial = trivial.contains(&enc);
        let useful = is_a_preserving && !is_fidelity_trivial;
        let generated_by_cnot_bcd = useful && sandwich.contains(&enc);
        let requires_swap = useful && !generated_by_cnot_bcd;
        counts.a_preserving += usize::from(is_a_preserving);
        counts.fidelity_trivial += usize::from(is_fidelity_trivial);
        counts.useful += usize::from(useful);
        counts.cnot_bcd_generated += usize::from(generated_by_cnot_bcd);
        counts.swap_required += usize::from(requires_swap);
        per_perm.push(PermClassification {
            is_a_preserving,
            is_fidelity_trivial,
            generated_by_cnot_bcd,
            requires_swap,
        });
    }
    Ok(Classification { per_perm, counts })
}

/// Single-qubit gate strings realizing a `{B, C, D}` relabeling bilaterally.
///
/// Returned as (first side, second side) words over H and P (the quarter
/// phase gate); each word is a matrix product, rightmost gate applied first.
/// Applying the words to the two halves of a Bell pair relabels its Bell
/// component by `perm`, up to global phase.
pub fn compile_bcd_perm(perm: BcdPerm) -> (&'static str, &'static str) {
    match perm.name() {
        "BCD" => ("", ""),
        "BDC" => ("H", "H"),
        "DCB" => ("HPH", "PHP"),
        "CDB" => ("PH", "HPHP"),
        "DBC" => ("PHPH", "HPHPHPHP"),
        "CBD" => ("HPHPH", "HHPHPHPHP"),
        _ => unreachable!("all six relabelings are covered"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellstate::{
        apply_bilateral_gate, apply_measurement, init_distribution, mirrored_cnot_perm, werner_raw,
        BellLabel, MeasBasis,
    };

    /// CNOT sandwiches with one pair exchange inserted on either side of the
    /// CNOT.
    fn swap_sandwich_mappings() -> HashSet<u64> {
        let cnot = mirrored_cnot_perm();
        let swap = TwoPairPerm::swap_pairs();
        sandwich_set(&[cnot.compose(&swap), swap.compose(&cnot)])
    }

    const X1: u8 = 0b0001;
    const Z1: u8 = 0b0010;
    const Y1: u8 = 0b0011;

    #[test]
    fn pauli_phase_calculus() {
        let x = Pauli2::new(X1, 0);
        let z = Pauli2::new(Z1, 0);
        let y = Pauli2::new(Y1, 0);
        // XZ = -iY, ZX = iY: anticommuting product pair.
        assert_eq!(x * z, Pauli2::new(Y1, 3));
        assert_eq!(z * x, Pauli2::new(Y1, 1));
        assert_eq!(y * y, Pauli2::identity());
        assert_eq!(x * y, Pauli2::new(Z1, 1));
        assert_eq!(y * x, Pauli2::new(Z1, 3));
        // Qubits multiply independently.
        let xx = Pauli2::new(0b0101, 0);
        let zz = Pauli2::new(0b1010, 0);
        assert_eq!(xx * zz, Pauli2::new(0b1111, 2));
    }

    #[test]
    fn clifford_conjugation_hand_checks() {
        let id = CliffordOp2::identity();
        for v in 0..16u8 {
            assert_eq!(id.conjugate(Pauli2::new(v, 0)), Pauli2::new(v, 0));
        }
        // Hadamard on qubit 1: X <-> Z, Y -> -Y.
        let h1 = CliffordOp2::new([Z1, X1, 0b0100, 0b1000], 0).unwrap();
        assert_eq!(h1.conjugate(Pauli2::new(X1, 0)), Pauli2::new(Z1, 0));
        assert_eq!(h1.conjugate(Pauli2::new(Y1, 0)), Pauli2::new(Y1, 2));
        // Quarter phase gate on qubit 1: X -> Y, Y -> -X, Z fixed.
        let p1 = CliffordOp2::new([Y1, Z1, 0b0100, 0b1000], 0).unwrap();
        assert_eq!(p1.conjugate(Pauli2::new(X1, 0)), Pauli2::new(Y1, 0));
        assert_eq!(p1.conjugate(Pauli2::new(Y1, 0)), Pauli2::new(X1, 2));
        assert_eq!(p1.conjugate(Pauli2::new(Z1, 0)), Pauli2::new(Z1, 0));
    }

    #[test]
    fn c2_enumeration_counts_and_group_axioms() {
        let ops = enumerate_c2();
        assert_eq!(ops.len(), C2_SIZE);
        let distinct: HashSet<_> = ops.iter().copied().collect();
        assert_eq!(distinct.len(), C2_SIZE);
        let sympl: HashSet<_> = ops.iter().map(|c| c.rows()).collect();
        assert_eq!(sympl.len(), 720);
        assert!(distinct.contains(&CliffordOp2::identity()));

        // Inverses and sampled closure under composition.
        let id = CliffordOp2::identity();
        for (i, op) in ops.iter().enumerate().step_by(607) {
            let inv = op.inverse();
            assert_eq!(op.compose(&inv), id);
            assert_eq!(inv.compose(op), id);
            let other = &ops[(i * 7 + 13) % ops.len()];
            assert!(distinct.contains(&op.compose(other)));
        }
    }

    #[test]
    fn bell_permutation_counts() {
        let set = enumerate_bell_permutations();
        assert_eq!(set.len(), 11520);
        assert_eq!(set.bilateral_count(), 184320);
        for p in set.perms() {
            assert!(p.mapping().is_permutation());
        }
        let encodings: HashSet<_> = set.perms().iter().map(|p| p.mapping().encoding()).collect();
        assert_eq!(encodings.len(), 11520);
        assert!(set.find(&TwoPairPerm::identity()).is_some());
        assert!(set.find(&mirrored_cnot_perm()).is_some());
        assert!(set.find(&TwoPairPerm::swap_pairs()).is_some());
    }

    #[test]
    fn mappings_close_under_composition() {
        let set = enumerate_bell_permutations();
        for (i, p) in set.perms().iter().enumerate().step_by(911) {
            let q = &set.perms()[(i * 31 + 5) % set.len()];
            let comp = p.mapping().compose(q.mapping());
            assert!(set.find(&comp).is_some());
            assert!(set.find(&p.mapping().inverse()).is_some());
        }
    }

    /// Rebuild a permutation directly from one realizer pair by conjugating
    /// the four mirrored stabilizer generators through both sides and solving
    /// the resulting affine relation, then compare with the stored mapping.
    fn mapping_from_realizer(ua: &CliffordOp2, ub: &CliffordOp2) -> TwoPairPerm {
        let mut rows = [0u8; 4];
        let mut eps = 0u8;
        for (i, row) in rows.iter_mut().enumerate() {
            let pa = ua.conjugate(Pauli2::new(1 << i, 0));
            let pb = ub.conjugate(Pauli2::new(1 << i, 0));
            assert_eq!(pa.vector(), pb.vector(), "sides must mirror");
            let k = (pa.phase_exp() + pb.phase_exp() + 2 * y_parity(pa.vector())) & 3;
            assert_eq!(k & 1, 0);
            *row = pa.vector();
            eps |= (k >> 1) << i;
        }
        mapping_for(&gf2_inv4(rows), eps)
    }

    #[test]
    fn realizers_reproduce_their_mapping() {
        let set = enumerate_bell_permutations();
        for p in set.perms().iter().step_by(401) {
            let realizers = p.realizers();
            assert_eq!(realizers.len(), 16);
            let distinct: HashSet<_> = realizers.iter().copied().collect();
            assert_eq!(distinct.len(), 16);
            for (ua, ub) in realizers.iter().step_by(7) {
                assert_eq!(&mapping_from_realizer(ua, ub), p.mapping());
            }
        }
        // The identity mapping is realized by sign-matched identity rows.
        let idp = set.find(&TwoPairPerm::identity()).unwrap();
        assert!(idp
            .realizers()
            .iter()
            .any(|(a, b)| *a == CliffordOp2::identity() && *b == CliffordOp2::identity()));
    }

    #[test]
    fn classification_counts() {
        let set = enumerate_bell_permutations();
        let cls = classify(&set).unwrap();
        assert_eq!(cls.counts.unique_mappings, 11520);
        assert_eq!(cls.counts.a_preserving, 720);
        assert_eq!(cls.counts.fidelity_trivial, 72);
        assert_eq!(cls.counts.useful, 648);
        assert_eq!(cls.counts.cnot_bcd_generated, 324);
        assert_eq!(cls.counts.swap_required, 324);
        for c in &cls.per_perm {
            assert!(!c.is_fidelity_trivial || c.is_a_preserving);
            assert!(!(c.generated_by_cnot_bcd && c.requires_swap));
        }
        // The CNOT itself sits in the sandwich-generated half.
        let cnot_idx = set
            .perms()
            .iter()
            .position(|p| p.mapping() == &mirrored_cnot_perm())
            .unwrap();
        assert!(cls.per_perm[cnot_idx].generated_by_cnot_bcd);
    }

    #[test]
    fn classify_rejects_partial_sets() {
        let set = enumerate_bell_permutations();
        let partial = BellPermutationSet {
            perms: set.perms()[..100].to_vec(),
            bilateral_count: 0,
        };
        assert_eq!(
            classify(&partial),
            Err(PermGroupError::WrongCardinality {
                expected: 11520,
                got: 100
            })
        );
    }

    #[test]
    fn swap_sandwiches_cover_the_remaining_half_exactly() {
        let set = enumerate_bell_permutations();
        let cls = classify(&set).unwrap();
        let plain = cnot_sandwich_mappings();
        let swapped = swap_sandwich_mappings();
        assert!(plain.is_disjoint(&swapped));
        for (p, c) in set.perms().iter().zip(&cls.per_perm) {
            if c.requires_swap {
                assert!(swapped.contains(&p.mapping().encoding()));
            }
        }
    }

    #[test]
    fn useful_permutations_all_purify_werner_pairs() {
        let set = enumerate_bell_permutations();
        let cls = classify(&set).unwrap();
        let f0 = 0.85;
        let raw = werner_raw(f0).unwrap();
        let d = init_distribution(2, raw).unwrap();
        for (p, c) in set.perms().iter().zip(&cls.per_perm) {
            if !c.is_useful() {
                continue;
            }
            let g = apply_bilateral_gate(&d, p.mapping(), 0, 1, 1.0).unwrap();
            let mut best = 0.0f64;
            for basis in MeasBasis::ALL {
                let (m, _) = apply_measurement(&g, 1, basis, 1.0, raw, false).unwrap();
                let total = m.total();
                if total > 0.0 {
                    let fid = m.marginal(0).unwrap()[0] / total;
                    best = best.max(fid);
                }
            }
            assert!(
                best > f0 + 1e-9,
                "mapping {:?} best fidelity {best}",
                p.mapping()
            );
        }
    }

    // Statevector check of the relabeling gate table: apply the returned
    // words to the two halves of each Bell state and identify the image.
    mod statevector {
        use super::*;
        use num_complex::Complex64;

        type Mat = [[Complex64; 2]; 2];

        fn c(re: f64, im: f64) -> Complex64 {
            Complex64::new(re, im)
        }

        fn matmul(a: &Mat, b: &Mat) -> Mat {
            let mut out = [[c(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for (k, bk) in b.iter().enumerate() {
                        out[i][j] += a[i][k] * bk[j];
                    }
                }
            }
            out
        }

        fn word_to_matrix(word: &str) -> Mat {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let h: Mat = [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]];
            let p: Mat = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]];
            let mut m: Mat = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
            for ch in word.chars() {
                m = matmul(&m, if ch == 'H' { &h } else { &p });
            }
            m
        }

        fn bell_vec(label: BellLabel) -> [Complex64; 4] {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            match label {
                BellLabel::A => [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)],
                BellLabel::B => [c(0.0, 0.0), c(s, 0.0), c(-s, 0.0), c(0.0, 0.0)],
                BellLabel::C => [c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)],
                BellLabel::D => [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-s, 0.0)],
            }
        }

        #[test]
        fn compiled_words_realize_each_relabeling() {
            for perm in BcdPerm::ALL {
                let (wa, wb) = compile_bcd_perm(perm);
                let (ga, gb) = (word_to_matrix(wa), word_to_matrix(wb));
                for label in BellLabel::ALL {
                    let v = bell_vec(label);
                    let mut out = [c(0.0, 0.0); 4];
                    for (i, o) in out.iter_mut().enumerate() {
                        let (a, b) = (i >> 1, i & 1);
                        for (j, &vj) in v.iter().enumerate() {
                            let (a2, b2) = (j >> 1, j & 1);
                            *o += ga[a][a2] * gb[b][b2] * vj;
                        }
                    }
                    let expected = perm.apply(label);
                    let target = bell_vec(expected);
                    let overlap: Complex64 =
                        target.iter().zip(&out).map(|(t, o)| t.conj() * o).sum();
                    assert!(
                        (overlap.norm() - 1.0).abs() < 1e-9,
                        "{perm:?} on {label:?}: overlap {overlap}"
                    );
                }
            }
        }
    }
}
