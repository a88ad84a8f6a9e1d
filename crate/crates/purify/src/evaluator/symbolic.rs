//! Exact polynomial circuit evaluation.
//!
//! The same fold as the numeric evaluator, run over sparse polynomials in
//! the raw Werner fidelity F0, the two-pair operation reliability p2, and
//! the report reliability eta, with exact rational coefficients.
//! Normalization is deferred: the report carries the unnormalized pair-0
//! quadruple and the success polynomial, plus the first-order expansion of
//! the final infidelity around the perfect point (1, 1, 1).

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{gate_perm, EvaluatorError};
use crate::bellstate::{BcdPerm, BellLabel, MeasBasis, TwoPairPerm};
use crate::circuit::{Circuit, CircuitOp};

/// Variable order inside exponent vectors.
pub const VAR_NAMES: [&str; 3] = ["f0", "p2", "eta"];
pub const VAR_F0: usize = 0;
pub const VAR_P2: usize = 1;
pub const VAR_ETA: usize = 2;

/// Width and op-count caps for the symbolic fold.
pub const SYMBOLIC_MAX_WIDTH: usize = 4;
pub const SYMBOLIC_MAX_OPS: usize = 20;
/// Total stored terms across the register's polynomials before the fold
/// gives up.
pub const TERM_BUDGET: usize = 200_000;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Sparse polynomial over (f0, p2, eta) with exact rational coefficients.
/// Zero coefficients are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<[u32; 3], BigRational>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn one() -> Poly {
        Poly::constant(BigRational::one())
    }

    pub fn constant(r: BigRational) -> Poly {
        let mut p = Poly::default();
        if !r.is_zero() {
            p.terms.insert([0; 3], r);
        }
        p
    }

    pub fn ratio(n: i64, d: i64) -> Poly {
        Poly::constant(ratio(n, d))
    }

    pub fn var(index: usize) -> Poly {
        assert!(index < 3, "variable index out of range");
        let mut exp = [0u32; 3];
        exp[index] = 1;
        let mut p = Poly::default();
        p.terms.insert(exp, BigRational::one());
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = ([u32; 3], BigRational)>) -> Poly {
        let mut p = Poly::default();
        for (exp, coeff) in terms {
            p.add_term(exp, coeff);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32; 3], &BigRational)> {
        self.terms.iter()
    }

    fn add_term(&mut self, exp: [u32; 3], coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exp) {
            Entry::Vacant(e) => {
                e.insert(coeff);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += coeff;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Poly) {
        for (exp, coeff) in &other.terms {
            self.add_term(*exp, coeff.clone());
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (exp, coeff) in &other.terms {
            out.add_term(*exp, -coeff.clone());
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exp = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                out.add_term(exp, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, s: &BigRational) -> Poly {
        let mut out = Poly::default();
        if s.is_zero() {
            return out;
        }
        for (exp, coeff) in &self.terms {
            out.terms.insert(*exp, coeff * s);
        }
        out
    }

    pub fn scale_ratio(&self, n: i64, d: i64) -> Poly {
        self.scale(&ratio(n, d))
    }

    /// Substitute 1 for one variable, collapsing its exponents.
    pub fn at_one(&self, var: usize) -> Poly {
        let mut out = Poly::default();
        for (exp, coeff) in &self.terms {
            let mut e = *exp;
            e[var] = 0;
            out.add_term(e, coeff.clone());
        }
        out
    }

    pub fn eval_f64(&self, at: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(exp, coeff)| {
                let mono: f64 = (0..3).map(|v| at[v].powi(exp[v] as i32)).product();
                coeff.to_f64().expect("rational fits in f64") * mono
            })
            .sum()
    }

    /// Exact value and gradient at the perfect point (1, 1, 1).
    pub fn value_and_gradient_at_ones(&self) -> (BigRational, [BigRational; 3]) {
        let mut value = BigRational::zero();
        let mut grad = [
            BigRational::zero(),
            BigRational::zero(),
            BigRational::zero(),
        ];
        for (exp, coeff) in &self.terms {
            value += coeff;
            for v in 0..3 {
                grad[v] += coeff * BigRational::from(BigInt::from(exp[v]));
            }
        }
        (value, grad)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut entries: Vec<_> = self.terms.iter().collect();
        entries.sort_by_key(|(exp, _)| {
            (
                std::cmp::Reverse(exp.iter().sum::<u32>()),
                std::cmp::Reverse(**exp),
            )
        });
        for (i, (exp, coeff)) in entries.into_iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{coeff}")?;
            for (v, &e) in exp.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*{}", VAR_NAMES[v])?,
                    _ => write!(f, "*{}^{}", VAR_NAMES[v], e)?,
                }
            }
        }
        Ok(())
    }
}

/// First-order expansion of the final infidelity in (1-F0), (1-p2), (1-eta)
/// around the perfect point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FirstOrder {
    pub constant: BigRational,
    pub coeff_f0: BigRational,
    pub coeff_p2: BigRational,
    pub coeff_eta: BigRational,
}

/// Unnormalized symbolic output of a circuit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicReport {
    /// Pair 0's Bell quadruple before dividing by the success polynomial.
    pub unnormalized: [Poly; 4],
    /// Total surviving weight.
    pub success_poly: Poly,
    pub first_order: FirstOrder,
}

fn shift(width: usize, pair: usize) -> usize {
    2 * (width - 1 - pair)
}

fn apply_gate_sym(
    state: &[Poly],
    width: usize,
    perm: &TwoPairPerm,
    first: usize,
    second: usize,
    ok: &Poly,
    fail_each: &Poly,
) -> Vec<Poly> {
    let size = state.len();
    let sh1 = shift(width, first);
    let sh2 = shift(width, second);
    let clear = !((3 << sh1) | (3 << sh2));
    let mut out = vec![Poly::zero(); size];
    let mut rest = vec![Poly::zero(); size];
    for (s, w) in state.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let l1 = (s >> sh1) & 3;
        let l2 = (s >> sh2) & 3;
        let t = perm.0[(l1 << 2) | l2] as usize;
        let base = s & clear;
        let s2 = base | ((t >> 2) << sh1) | ((t & 3) << sh2);
        out[s2].add_assign(&w.mul(ok));
        rest[base].add_assign(w);
    }
    for (base, acc) in rest.iter().enumerate() {
        if acc.is_zero() {
            continue;
        }
        let wf = acc.mul(fail_each);
        for l1 in 0..4 {
            for l2 in 0..4 {
                out[base | (l1 << sh1) | (l2 << sh2)].add_assign(&wf);
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn apply_measure_sym(
    state: &[Poly],
    width: usize,
    pair: usize,
    basis: MeasBasis,
    reset: bool,
    raw: &[Poly; 4],
    r_acc: &Poly,
    r_rej: &Poly,
) -> Vec<Poly> {
    let size = state.len();
    let sh = shift(width, pair);
    let mut out = vec![Poly::zero(); size];
    for (s, w) in state.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let label = BellLabel::from_index((s >> sh) & 3).expect("two bits");
        let r = if basis.accepts(label) { r_acc } else { r_rej };
        let wr = w.mul(r);
        let base = s & !(3 << sh);
        if reset {
            for (l2, fresh) in raw.iter().enumerate() {
                out[base | (l2 << sh)].add_assign(&wr.mul(fresh));
            }
        } else {
            // Dead slot parked at label A, as in the numeric fold.
            out[base].add_assign(&wr);
        }
    }
    out
}

fn apply_bcd0_sym(state: &[Poly], width: usize, perm: BcdPerm) -> Vec<Poly> {
    let size = state.len();
    let sh = shift(width, 0);
    let mut out = vec![Poly::zero(); size];
    for (s, w) in state.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        let label = BellLabel::from_index((s >> sh) & 3).expect("two bits");
        let mapped = perm.apply(label).index();
        out[(s & !(3 << sh)) | (mapped << sh)].add_assign(w);
    }
    out
}

fn first_order_infidelity(p_a: &Poly, success: &Poly) -> FirstOrder {
    let (a0, ag) = p_a.value_and_gradient_at_ones();
    let (d0, dg) = success.value_and_gradient_at_ones();
    if d0.is_zero() {
        let z = BigRational::zero();
        return FirstOrder {
            constant: z.clone(),
            coeff_f0: z.clone(),
            coeff_p2: z.clone(),
            coeff_eta: z,
        };
    }
    // infidelity = N/D with N = D - pA. Writing each variable v as 1 - x,
    // dN/dx = -dN/dv, so the linear coefficient in x is
    // (N * D' - N' * D) / D^2 evaluated at the perfect point.
    let n0 = &d0 - &a0;
    let d0sq = &d0 * &d0;
    let coeff = |v: usize| {
        let nv = &dg[v] - &ag[v];
        (&n0 * &dg[v] - &nv * &d0) / &d0sq
    };
    FirstOrder {
        constant: &n0 / &d0,
        coeff_f0: coeff(VAR_F0),
        coeff_p2: coeff(VAR_P2),
        coeff_eta: coeff(VAR_ETA),
    }
}

/// Run the Bell-diagonal fold over exact polynomials, for a raw Werner
/// register with fidelity F0.
pub fn evaluate_symbolic(c: &Circuit) -> Result<SymbolicReport, EvaluatorError> {
    let ops = c.op_count();
    if c.width > SYMBOLIC_MAX_WIDTH || ops > SYMBOLIC_MAX_OPS {
        return Err(EvaluatorError::SymbolicLimits {
            width: c.width,
            ops,
            max_width: SYMBOLIC_MAX_WIDTH,
            max_ops: SYMBOLIC_MAX_OPS,
        });
    }

    let f0 = Poly::var(VAR_F0);
    let q = Poly::one().sub(&f0).scale_ratio(1, 3);
    let raw = [f0, q.clone(), q.clone(), q];

    let size = 1usize << (2 * c.width);
    let mut state: Vec<Poly> = (0..size)
        .map(|s| {
            let mut w = Poly::one();
            for k in 0..c.width {
                w = w.mul(&raw[(s >> shift(c.width, k)) & 3]);
            }
            w
        })
        .collect();

    let p2 = Poly::var(VAR_P2);
    let ok = p2.mul(&p2);
    let fail_each = Poly::one().sub(&ok).scale_ratio(1, 16);
    let eta = Poly::var(VAR_ETA);
    let miss = Poly::one().sub(&eta);
    let r_acc = eta.mul(&eta).add(&miss.mul(&miss));
    let r_rej = eta.mul(&miss).scale_ratio(2, 1);

    for op in &c.ops {
        state = match *op {
            CircuitOp::Gate { src, dst, .. } => {
                let perm = gate_perm(op).expect("gate op");
                apply_gate_sym(&state, c.width, &perm, src, dst, &ok, &fail_each)
            }
            CircuitOp::Swap { a, b } => apply_gate_sym(
                &state,
                c.width,
                &TwoPairPerm::swap_pairs(),
                a,
                b,
                &ok,
                &fail_each,
            ),
            CircuitOp::Measure { pair, basis, reset } => {
                apply_measure_sym(&state, c.width, pair, basis, reset, &raw, &r_acc, &r_rej)
            }
            CircuitOp::FinalBcd { perm } => apply_bcd0_sym(&state, c.width, perm),
        };
        let terms: usize = state.iter().map(Poly::term_count).sum();
        if terms > TERM_BUDGET {
            return Err(EvaluatorError::TermBudget {
                terms,
                budget: TERM_BUDGET,
            });
        }
    }

    let mut success_poly = Poly::zero();
    let mut unnormalized = [Poly::zero(), Poly::zero(), Poly::zero(), Poly::zero()];
    let sh0 = shift(c.width, 0);
    for (s, w) in state.iter().enumerate() {
        success_poly.add_assign(w);
        unnormalized[(s >> sh0) & 3].add_assign(w);
    }
    let first_order = first_order_infidelity(&unnormalized[0], &success_poly);
    Ok(SymbolicReport {
        unnormalized,
        success_poly,
        first_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellstate::ErrorModel;
    use crate::circuit::{builtin, Mode};
    use crate::evaluator::evaluate;

    #[test]
    fn fig1_polynomials_match_the_closed_form() {
        let rep = evaluate_symbolic(&builtin("fig1").unwrap()).unwrap();
        // At p2 = eta = 1: unnormalized p_A = F^2 + q^2 = (10F^2 - 2F + 1)/9
        // and success = F^2 + 5q^2 + 2Fq = (8F^2 - 4F + 5)/9.
        let p_a = rep.unnormalized[0].at_one(VAR_P2).at_one(VAR_ETA);
        let expect = Poly::from_terms([
            ([2, 0, 0], ratio(10, 9)),
            ([1, 0, 0], ratio(-2, 9)),
            ([0, 0, 0], ratio(1, 9)),
        ]);
        assert_eq!(p_a, expect);
        let success = rep.success_poly.at_one(VAR_P2).at_one(VAR_ETA);
        let expect = Poly::from_terms([
            ([2, 0, 0], ratio(8, 9)),
            ([1, 0, 0], ratio(-4, 9)),
            ([0, 0, 0], ratio(5, 9)),
        ]);
        assert_eq!(success, expect);
        // The two bit-flip labels come out symmetric (both 2q^2); the
        // phase label does not (2Fq).
        assert_eq!(rep.unnormalized[1], rep.unnormalized[2]);
        let d = rep.unnormalized[3].at_one(VAR_P2).at_one(VAR_ETA);
        let expect = Poly::from_terms([([1, 0, 0], ratio(2, 3)), ([2, 0, 0], ratio(-2, 3))]);
        assert_eq!(d, expect);
    }

    #[test]
    fn substitution_matches_the_numeric_evaluator() {
        for name in ["fig1", "double_selection", "triple_selection"] {
            let c = builtin(name).unwrap();
            let rep = evaluate_symbolic(&c).unwrap();
            for (f0, p2, eta) in [(0.9, 0.99, 0.99), (0.85, 0.95, 0.9), (1.0, 1.0, 1.0)] {
                let at = [f0, p2, eta];
                let em = ErrorModel::werner(f0, p2, eta).unwrap();
                let num = evaluate(&c, &em).unwrap();
                let success = rep.success_poly.eval_f64(at);
                assert!(
                    (success - num.success_prob).abs() < 1e-10,
                    "{name} success {success} vs {}",
                    num.success_prob
                );
                for (poly, want) in rep.unnormalized.iter().zip(num.final_state.as_array()) {
                    assert!(
                        (poly.eval_f64(at) / success - want).abs() < 1e-10,
                        "{name} quadruple mismatch"
                    );
                }
            }
        }
    }

    #[test]
    fn first_order_coefficients() {
        let fig1 = evaluate_symbolic(&builtin("fig1").unwrap())
            .unwrap()
            .first_order;
        assert!(fig1.constant.is_zero());
        assert_eq!(fig1.coeff_f0, ratio(2, 3));
        assert_eq!(fig1.coeff_p2, ratio(3, 4));
        assert!(fig1.coeff_eta.is_zero());

        let dbl = evaluate_symbolic(&builtin("double_selection").unwrap())
            .unwrap()
            .first_order;
        assert!(dbl.constant.is_zero());
        assert_eq!(dbl.coeff_p2, ratio(3, 8));

        // Finite-difference cross-check of the gate coefficient.
        let c = builtin("double_selection").unwrap();
        let eps = 1e-6;
        let em = ErrorModel::werner(1.0, 1.0 - eps, 1.0).unwrap();
        let infid = evaluate(&c, &em).unwrap().infidelity();
        let coeff = dbl.coeff_p2.to_f64().unwrap();
        assert!((infid / eps - coeff).abs() < 1e-4);
    }

    #[test]
    fn fold_limits_are_enforced() {
        let c = Circuit::new(5, Mode::Standard, vec![]);
        assert!(matches!(
            evaluate_symbolic(&c),
            Err(EvaluatorError::SymbolicLimits { width: 5, .. })
        ));
        let mut ops = Vec::new();
        for _ in 0..11 {
            ops.push(CircuitOp::gate(0, 1));
            ops.push(CircuitOp::measure(1, MeasBasis::CoinZ, true));
        }
        let c = Circuit::new(2, Mode::Standard, ops);
        assert!(matches!(
            evaluate_symbolic(&c),
            Err(EvaluatorError::SymbolicLimits { ops: 22, .. })
        ));
    }

    #[test]
    fn display_is_readable() {
        let p = Poly::from_terms([
            ([2, 0, 0], ratio(10, 9)),
            ([0, 0, 0], ratio(1, 9)),
            ([1, 0, 1], ratio(-1, 2)),
        ]);
        assert_eq!(p.to_string(), "10/9*f0^2 + -1/2*f0*eta + 1/9");
    }
}
