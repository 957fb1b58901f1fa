//! Terminating Zassenhaus expansion for the pair `(X, P^m)`.
//!
//! For `A = X`, `B = P^m`,
//!
//! ```text
//! exp(l(A + B)) = exp(lA) exp(lB) exp(l^2 C_2) ... exp(l^(m+1) C_(m+1))
//! exp(l(A + B)) = exp(lB) exp(lA) exp(l^2 C'_2) ... exp(l^(m+1) C'_(m+1))
//! ```
//!
//! with `C_n = (-i)^(n-1) m! / (n! (m-n+1)!) P^(m-n+1)` and
//! `C'_n = -(n-1) C_n`. Every coefficient operator is a polynomial in `P`, so
//! the whole family commutes. Coefficients are kept as exact complex
//! rationals; floating point only enters at matrix substitution.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cvspace::{
    build_quadrature, envelope_start, CvState, FockDim, Operator, Propagator, Quadrature, C64,
};
use crate::error::{Error, Result};

pub type Rational = Ratio<i128>;
pub type ExactComplex = Complex<Rational>;

/// Largest expansion order accepted; keeps `(m + 2)!` inside `i128`.
pub const MAX_ORDER: u32 = 30;

/// Largest tail mass (beyond the envelope start) a column of either side may
/// carry to be included in a factorization residual.
pub const COLUMN_TAIL_TOL: f64 = 1e-16;

/// Ring operations needed by [`PPoly`].
pub trait Coefficient:
    Clone + PartialEq + Zero + Add<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
}

impl<T> Coefficient for T where
    T: Clone + PartialEq + Zero + Add<Output = T> + Mul<Output = T> + Neg<Output = T>
{
}

/// `sum_k c_k P^k` with no explicit zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PPoly<T> {
    coeffs: BTreeMap<u32, T>,
}

impl<T: Coefficient> Default for PPoly<T> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<T: Coefficient> PPoly<T> {
    pub fn zero() -> Self {
        Self { coeffs: BTreeMap::new() }
    }

    pub fn monomial(power: u32, c: T) -> Self {
        let mut p = Self::zero();
        p.accumulate(power, c);
        p
    }

    pub fn constant(c: T) -> Self {
        Self::monomial(0, c)
    }

    fn accumulate(&mut self, power: u32, c: T) {
        let sum = match self.coeffs.remove(&power) {
            Some(old) => old + c,
            None => c,
        };
        if !sum.is_zero() {
            self.coeffs.insert(power, sum);
        }
    }

    pub fn coeff(&self, power: u32) -> T {
        self.coeffs.get(&power).cloned().unwrap_or_else(T::zero)
    }

    pub fn degree(&self) -> Option<u32> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `(power, coefficient)` in increasing power.
    pub fn terms(&self) -> impl Iterator<Item = (u32, &T)> {
        self.coeffs.iter().map(|(k, c)| (*k, c))
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, c) in other.terms() {
            out.accumulate(k, c.clone());
        }
        out
    }

    pub fn scale(&self, c: &T) -> Self {
        let mut out = Self::zero();
        for (k, a) in self.terms() {
            out.accumulate(k, a.clone() * c.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (j, a) in self.terms() {
            for (k, b) in other.terms() {
                out.accumulate(j + k, a.clone() * b.clone());
            }
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero();
        for (k, a) in self.terms() {
            out.accumulate(k, -a.clone());
        }
        out
    }
}

fn rational_to_f64(r: &Rational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

pub fn exact_to_c64(z: &ExactComplex) -> C64 {
    C64::new(rational_to_f64(&z.re), rational_to_f64(&z.im))
}

fn exact(re: i128, im: i128) -> ExactComplex {
    Complex::new(Rational::from_integer(re), Rational::from_integer(im))
}

/// `(-i)^k` exactly.
fn minus_i_pow(k: u32) -> ExactComplex {
    match k % 4 {
        0 => exact(1, 0),
        1 => exact(0, -1),
        2 => exact(-1, 0),
        _ => exact(0, 1),
    }
}

fn binomial(n: u32, k: u32) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as i128 / (j + 1) as i128;
    }
    acc
}

fn factorial(n: u32) -> i128 {
    (1..=n as i128).product()
}

impl PPoly<ExactComplex> {
    pub fn to_c64(&self) -> PPoly<C64> {
        let mut out = PPoly::zero();
        for (k, c) in self.terms() {
            out.accumulate(k, exact_to_c64(c));
        }
        out
    }
}

impl PPoly<C64> {
    /// Largest imaginary part among the coefficients.
    pub fn max_imag(&self) -> f64 {
        self.terms().fold(0.0, |acc, (_, c)| acc.max(c.im.abs()))
    }

    pub fn has_real_coefficients(&self) -> bool {
        self.terms().all(|(_, c)| c.im == 0.0)
    }

    /// Substitute the truncated quadrature `q` for the variable. The result is
    /// flagged Hermitian when every coefficient is real.
    pub fn to_operator(&self, q: Quadrature, dim: FockDim) -> Result<Operator> {
        let base = build_quadrature(dim, q)?;
        let d = dim.get();
        let mut acc = DMatrix::<C64>::zeros(d, d);
        let mut power = DMatrix::<C64>::identity(d, d);
        let mut k_now = 0u32;
        for (k, c) in self.terms() {
            while k_now < k {
                power = &power * base.entries();
                k_now += 1;
            }
            acc += &power * *c;
        }
        if self.has_real_coefficients() {
            let sym = (&acc + acc.adjoint()) * C64::new(0.5, 0.0);
            Operator::hermitian(sym)
        } else {
            Operator::general(acc)
        }
    }

    /// `poly(q) |state>` by Horner's rule on the truncated quadrature.
    pub fn apply(&self, q: Quadrature, state: &CvState) -> Result<DVector<C64>> {
        let base = build_quadrature(state.dim(), q)?;
        let phi = state.amplitudes();
        let Some(deg) = self.degree() else {
            return Ok(DVector::zeros(phi.len()));
        };
        let mut v = phi * self.coeff(deg);
        for k in (0..deg).rev() {
            v = base.entries() * v + phi * self.coeff(k);
        }
        Ok(v)
    }
}

impl fmt::Display for PPoly<ExactComplex> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms()
            .map(|(k, c)| format!("({} + {}i) P^{}", c.re, c.im, k))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Operand order of the factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `A = X`, `B = P^m`: `exp(X + P^m) = exp(X) exp(P^m) exp(sum C_n)`.
    AB,
    /// `A = P^m`, `B = X`: `exp(X + P^m) = exp(P^m) exp(X) exp(sum C'_n)`.
    BA,
}

fn check_order(m: u32) {
    assert!(m >= 1 && m <= MAX_ORDER, "expansion order must lie in 1..={MAX_ORDER}, got {m}");
}

/// Closed form of `C_n` (`AB`) or `C'_n` (`BA`).
pub fn zassenhaus_term(m: u32, n: u32, variant: Variant) -> PPoly<ExactComplex> {
    check_order(m);
    assert!(n >= 2, "Zassenhaus terms start at n = 2");
    if n > m + 1 {
        return PPoly::zero();
    }
    // m!/(n!(m-n+1)!) = binom(m, n-1)/n
    let weight = Rational::new(binomial(m, n - 1), n as i128);
    let weight = match variant {
        Variant::AB => weight,
        Variant::BA => -weight * Rational::from_integer((n - 1) as i128),
    };
    let c = minus_i_pow(n - 1) * Complex::new(weight, Rational::zero());
    PPoly::monomial(m + 1 - n, c)
}

/// `[X, p(P)]` from `[X, P^k] = i k P^(k-1)`.
fn ad_x(p: &PPoly<ExactComplex>) -> PPoly<ExactComplex> {
    let mut out = PPoly::zero();
    for (k, c) in p.terms() {
        if k > 0 {
            out.accumulate(k - 1, c.clone() * exact(0, k as i128));
        }
    }
    out
}

/// `(-1)^(n-1)/n! [X^(n-1), P^m]` built by iterating the commutator
/// symbolically; `[X^(0), B] = B`.
pub fn nested_commutator_oracle(m: u32, n: u32) -> PPoly<ExactComplex> {
    check_order(m);
    assert!(n >= 1, "nested commutator index starts at 1");
    let mut nested = PPoly::monomial(m, ExactComplex::one());
    for _ in 1..n {
        nested = ad_x(&nested);
    }
    let sign = if (n - 1) % 2 == 0 { 1 } else { -1 };
    let pref = Rational::new(sign, factorial(n));
    nested.scale(&Complex::new(pref, Rational::zero()))
}

/// `C_n` or `C'_n` for `n = 2..=m+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTable {
    pub m: u32,
    pub variant: Variant,
    pub terms: Vec<(u32, PPoly<ExactComplex>)>,
}

pub fn expansion_table(m: u32, variant: Variant) -> ExpansionTable {
    check_order(m);
    let terms = (2..=m + 1).map(|n| (n, zassenhaus_term(m, n, variant))).collect();
    ExpansionTable { m, variant, terms }
}

/// Which strategy branch a derivative generator belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    /// `exp(-2iN(theta1 X + theta2 P^m))` of the coherent superposition.
    CsBranch,
    /// The reversed-order switch branch `U2^N U1^N`, written as
    /// `exp(-iN theta1 X) exp(-iN theta2 P^m) exp(E)`.
    SwitchBranch,
}

/// `sum_n lambda^n theta1^(n-1) w_n C_n(P)` with `lambda = -i * time`, as a
/// floating-point polynomial. Exact `i`-powers are resolved before the real
/// scale factors are applied.
fn weighted_exponent(
    m: u32,
    theta1: f64,
    time: f64,
    weight: impl Fn(u32, &PPoly<ExactComplex>) -> PPoly<ExactComplex>,
) -> PPoly<C64> {
    let table = expansion_table(m, Variant::AB);
    let mut out = PPoly::zero();
    for (n, term) in &table.terms {
        let phase = weight(*n, term).scale(&minus_i_pow(*n));
        let real_scale = time.powi(*n as i32) * theta1.powi(*n as i32 - 1);
        let scaled = phase.to_c64().scale(&C64::new(real_scale, 0.0));
        out = out.add(&scaled);
    }
    out
}

/// Exponent (divided by `theta2`) of the Zassenhaus factor of one
/// coherent-superposition branch `exp(-iT(theta1 X + theta2 P^m))`, `T = 2N`.
pub fn cs_branch_exponent(m: u32, theta1: f64, n_queries: u32) -> PPoly<C64> {
    let time = 2.0 * n_queries as f64;
    weighted_exponent(m, theta1, time, |_, c| c.clone())
}

/// Exponent (divided by `theta2`) that reorders the switch branch:
/// `exp(-iN theta2 P^m) exp(-iN theta1 X) = exp(-iN theta1 X) exp(-iN theta2 P^m) exp(theta2 E)`.
/// It is built as `sum_n lambda^n theta1^(n-1) (C_n - C'_n)`, combining the two
/// operand orders.
pub fn switch_reorder_exponent(m: u32, theta1: f64, n_queries: u32) -> PPoly<C64> {
    let time = n_queries as f64;
    weighted_exponent(m, theta1, time, |n, c| {
        let primed = zassenhaus_term(m, n, Variant::BA);
        c.add(&primed.neg())
    })
}

/// `theta2`-derivative generator `g` of a branch, defined by
/// `d/d theta2 |branch> = -i g |branch>` in the frame where all
/// `theta2`-dependence sits in functions of `P`.
pub fn phase_derivative_generator(m: u32, theta1: f64, n_queries: u32, variant: BranchKind) -> PPoly<C64> {
    let (queries, exponent) = match variant {
        BranchKind::CsBranch => (2.0 * n_queries as f64, cs_branch_exponent(m, theta1, n_queries)),
        BranchKind::SwitchBranch => (n_queries as f64, switch_reorder_exponent(m, theta1, n_queries)),
    };
    // branch = exp(-i q theta2 P^m) exp(theta2 E)  =>  g = q P^m + i E
    PPoly::monomial(m, C64::new(queries, 0.0)).add(&exponent.scale(&C64::new(0.0, 1.0)))
}

/// Linear case with the roles of the quadratures exchanged: `theta1`-derivative
/// generators as polynomials in `X`. Uses the `BA` term `C'_2` of the pair
/// `(theta2 P, theta1 X)`.
pub fn theta1_linear_generator(theta2: f64, n_queries: u32, variant: BranchKind, sign: f64) -> PPoly<C64> {
    // C'_2 for (A, B) = (P, X) is +i/2 = -C_2 of the (X, P) pair.
    let c2_prime = exact_to_c64(&zassenhaus_term(1, 2, Variant::BA).coeff(0));
    let c2 = exact_to_c64(&zassenhaus_term(1, 2, Variant::AB).coeff(0));
    let i = C64::new(0.0, 1.0);
    match variant {
        BranchKind::CsBranch => {
            // exp(-iT(theta1 X + s theta2 P)) = exp(-iT s theta2 P) exp(-iT theta1 X) exp(l^2 s theta2 theta1 C'_2)
            let t = 2.0 * n_queries as f64;
            let lambda2 = -t * t;
            let constant = i * c2_prime * (lambda2 * sign * theta2);
            PPoly::monomial(1, C64::new(t, 0.0)).add(&PPoly::constant(constant))
        }
        BranchKind::SwitchBranch => {
            // exp(-iN theta1 X) exp(-iN theta2 P) = exp(-iN theta2 P) exp(-iN theta1 X) exp(l^2 theta1 theta2 (C'_2 - C_2))
            let n = n_queries as f64;
            let lambda2 = -n * n;
            let constant = i * (c2_prime - c2) * (lambda2 * theta2);
            PPoly::monomial(1, C64::new(n, 0.0)).add(&PPoly::constant(constant))
        }
    }
}

/// `exp(M)` for an anti-Hermitian polynomial `M(P)`, computed as
/// `exp(-i K)` with Hermitian `K = i M`.
pub(crate) fn exp_anti_hermitian(poly: &PPoly<C64>, dim: FockDim) -> Result<Operator> {
    if poly.is_zero() {
        return Ok(Operator::identity(dim));
    }
    let k = poly.scale(&C64::new(0.0, 1.0));
    if k.max_imag() > 1e-12 * k.terms().fold(1.0f64, |a, (_, c)| a.max(c.norm())) {
        return Err(Error::Contract("exponent is not anti-Hermitian".into()));
    }
    let mut real = PPoly::zero();
    for (p, c) in k.terms() {
        real = real.add(&PPoly::monomial(p, C64::new(c.re, 0.0)));
    }
    let herm = real.to_operator(Quadrature::P, dim)?;
    Ok(Propagator::new(&herm)?.unitary(1.0))
}

/// `sum_{n=2}^{max_n} lambda^n C_n` (or `C'_n`) with `lambda = -i lambda_im`.
fn substituted_exponent(m: u32, lambda_im: f64, variant: Variant, max_n: u32) -> PPoly<C64> {
    let mut out = PPoly::zero();
    for n in 2..=max_n {
        let term = zassenhaus_term(m, n, variant).scale(&minus_i_pow(n));
        out = out.add(&term.to_c64().scale(&C64::new(lambda_im.powi(n as i32), 0.0)));
    }
    out
}

/// Max-element residual of `LHS - RHS` for the factorization with
/// `lambda = -i lambda_im`, over the block of low Fock columns whose images
/// stay inside the truncation envelope.
pub fn verify_factorization(m: u32, lambda_im: f64, dim: FockDim, variant: Variant) -> Result<f64> {
    verify_factorization_to_order(m, lambda_im, dim, variant, m + 1)
}

/// [`verify_factorization`] with the exponent summed up to `max_n`; terms
/// beyond `m + 1` vanish identically.
pub fn verify_factorization_to_order(
    m: u32,
    lambda_im: f64,
    dim: FockDim,
    variant: Variant,
    max_n: u32,
) -> Result<f64> {
    check_order(m);
    dim.require(2 * m as usize + 2)?;
    let x = build_quadrature(dim, Quadrature::X)?;
    let pm = build_quadrature(dim, Quadrature::P)?.pow(m);
    let lhs = Propagator::new(&x.plus(&pm)?)?.unitary(lambda_im);
    let ux = Propagator::new(&x)?.unitary(lambda_im);
    let upm = Propagator::new(&pm)?.unitary(lambda_im);
    let tail = exp_anti_hermitian(&substituted_exponent(m, lambda_im, variant, max_n), dim)?;
    let rhs = match variant {
        Variant::AB => ux.product(&upm)?.product(&tail)?,
        Variant::BA => upm.product(&ux)?.product(&tail)?,
    };

    let d = dim.get();
    let start = envelope_start(dim, m);
    let column_tail = |mat: &DMatrix<C64>, j: usize| -> f64 {
        (start..d).map(|i| mat[(i, j)].norm_sqr()).sum()
    };
    let mut certified = 0;
    for j in 0..(d / 4).max(1) {
        let mass = column_tail(lhs.entries(), j).max(column_tail(rhs.entries(), j));
        if mass >= COLUMN_TAIL_TOL {
            if j == 0 {
                return Err(Error::Envelope { mass, index: start, dim: d });
            }
            break;
        }
        certified = j + 1;
    }
    let mut residual = 0.0f64;
    for j in 0..certified {
        for i in 0..d {
            residual = residual.max((lhs.entries()[(i, j)] - rhs.entries()[(i, j)]).norm());
        }
    }
    Ok(residual)
}

/// Matrix of `lambda^n C_n` at `lambda = -i lambda_im`.
pub fn substituted_term(m: u32, n: u32, lambda_im: f64, variant: Variant, dim: FockDim) -> Result<Operator> {
    let poly = zassenhaus_term(m, n, variant).scale(&minus_i_pow(n)).to_c64();
    poly.scale(&C64::new(lambda_im.powi(n as i32), 0.0))
        .to_operator(Quadrature::P, dim)
}

/// `max |exp(sum_n lambda^n C_n) - prod_n exp(lambda^n C_n)|` over the full matrix.
pub fn exponent_product_residual(m: u32, lambda_im: f64, dim: FockDim) -> Result<f64> {
    let whole = exp_anti_hermitian(&substituted_exponent(m, lambda_im, Variant::AB, m + 1), dim)?;
    let mut prod = Operator::identity(dim);
    for n in 2..=m + 1 {
        let single = substituted_exponent_single(m, n, lambda_im);
        prod = prod.product(&exp_anti_hermitian(&single, dim)?)?;
    }
    Ok((whole.entries() - prod.entries()).iter().fold(0.0, |a, z| a.max(z.norm())))
}

fn substituted_exponent_single(m: u32, n: u32, lambda_im: f64) -> PPoly<C64> {
    zassenhaus_term(m, n, Variant::AB)
        .scale(&minus_i_pow(n))
        .to_c64()
        .scale(&C64::new(lambda_im.powi(n as i32), 0.0))
}

#[cfg(test)]
mod generator_examples {
    use super::*;

    fn coeffs(g: &PPoly<C64>) -> Vec<(u32, f64)> {
        g.terms().map(|(p, c)| (p, c.re)).collect()
    }

    fn close(a: &[(u32, f64)], b: &[(u32, f64)]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() < 1e-12)
    }

    #[test]
    fn cs_linear_branch() {
        let g = phase_derivative_generator(1, 0.1, 4, BranchKind::CsBranch);
        assert!(close(&coeffs(&g), &[(0, -3.2), (1, 8.0)]));
    }

    #[test]
    fn switch_quadratic_branch() {
        // N P^2 - m theta1 N^2 P + theta1^2 N^3
        let g = phase_derivative_generator(2, 0.1, 3, BranchKind::SwitchBranch);
        assert!(close(&coeffs(&g), &[(0, 0.27), (1, -1.8), (2, 3.0)]), "{:?}", coeffs(&g));
        assert_eq!(g.max_imag(), 0.0);
    }
}
