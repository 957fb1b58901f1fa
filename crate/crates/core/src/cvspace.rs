//! Truncated Fock-basis representation of a single bosonic mode.
//!
//! Operators are dense `d x d` complex matrices in the number basis. The
//! quadratures follow `X = (a + a^dagger)/sqrt(2)` and
//! `P = i(a^dagger - a)/sqrt(2)`, so `[X, P] = i` everywhere except the last
//! diagonal entry, which truncation turns into `i(1 - d)`.
//!
//! Time evolution goes through a Hermitian eigendecomposition of the
//! generator, which keeps every propagator unitary by construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;


/// Bound on `max |A - A^dagger|` (scaled by `max(1, max |A|)`) for a Hermitian claim.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Bound on `max |A^dagger A - I|` for a unitary claim.
pub const UNITARY_TOL: f64 = 1e-10;
/// States must have unit norm to this tolerance.
pub const NORM_TOL: f64 = 1e-10;
/// Occupation allowed near the truncation boundary.
pub const ENVELOPE_TOL: f64 = 1e-12;
/// Probe truncation leakage allowed before renormalisation.
pub const LEAKAGE_TOL: f64 = 1e-10;
/// Imaginary part tolerated (and discarded) in a Hermitian expectation value.
pub const MOMENT_IMAG_TOL: f64 = 1e-10;

/// Number of retained Fock levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockDim(usize);

impl FockDim {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension { got: d, min: 1 });
        }
        Ok(Self(d))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn doubled(self) -> Self {
        Self(self.0 * 2)
    }

    pub(crate) fn require(self, min: usize) -> Result<()> {
        if self.0 < min {
            return Err(Error::InvalidDimension { got: self.0, min });
        }
        Ok(())
    }
}

impl TryFrom<usize> for FockDim {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        Self::new(d)
    }
}

impl From<FockDim> for usize {
    fn from(d: FockDim) -> usize {
        d.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

/// Dense operator with Hermiticity and unitarity claims that are validated
/// on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: FockDim,
    entries: DMatrix<C64>,
    hermitian: bool,
    unitary: bool,
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn square_dim(m: &DMatrix<C64>) -> Result<FockDim> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    FockDim::new(m.nrows())
}

impl Operator {
    /// Operator without any structural claim.
    pub fn general(entries: DMatrix<C64>) -> Result<Self> {
        let dim = square_dim(&entries)?;
        Ok(Self { dim, entries, hermitian: false, unitary: false })
    }

    /// Hermitian operator; fails if the claim does not hold.
    pub fn hermitian(entries: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::general(entries)?;
        let deviation = op.hermitian_deviation();
        if deviation > HERMITIAN_TOL * max_abs(&op.entries).max(1.0) {
            return Err(Error::NotHermitian { deviation });
        }
        op.hermitian = true;
        Ok(op)
    }

    /// Unitary operator; fails if the claim does not hold.
    pub fn unitary(entries: DMatrix<C64>) -> Result<Self> {
        let mut op = Self::general(entries)?;
        let deviation = op.unitarity_deviation();
        if deviation > UNITARY_TOL {
            return Err(Error::Contract(format!(
                "unitary claim violated: max |U^dagger U - I| = {deviation:e}"
            )));
        }
        op.unitary = true;
        Ok(op)
    }

    pub fn identity(dim: FockDim) -> Self {
        Self {
            dim,
            entries: DMatrix::identity(dim.get(), dim.get()),
            hermitian: true,
            unitary: true,
        }
    }

    /// Lowering operator, `a|n> = sqrt(n)|n-1>`.
    pub fn annihilation(dim: FockDim) -> Self {
        let d = dim.get();
        let mut entries = DMatrix::zeros(d, d);
        for n in 1..d {
            entries[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        Self { dim, entries, hermitian: false, unitary: false }
    }

    /// Photon number `a^dagger a`.
    pub fn number(dim: FockDim) -> Self {
        let d = dim.get();
        let entries = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(i as f64, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self { dim, entries, hermitian: true, unitary: d == 1 }
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn hermitian_deviation(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim.get();
        max_abs(&(self.entries.adjoint() * &self.entries - DMatrix::<C64>::identity(d, d)))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.adjoint(),
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }

    fn check_same_dim(&self, other: &Operator) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim.get(), got: other.dim.get() });
        }
        Ok(())
    }

    /// Real multiple; keeps the Hermitian claim.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            entries: &self.entries * C64::new(c, 0.0),
            hermitian: self.hermitian,
            unitary: self.unitary && (c.abs() - 1.0).abs() == 0.0,
        }
    }

    pub fn plus(&self, other: &Operator) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries + &other.entries,
            hermitian: self.hermitian && other.hermitian,
            unitary: false,
        })
    }

    /// `sum_k c_k A_k` with real coefficients.
    pub fn linear_combination(terms: &[(f64, &Operator)]) -> Result<Self> {
        let (first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::Domain("empty linear combination".into()))?;
        let mut acc = first.1.scaled(first.0);
        for (c, op) in rest {
            acc = acc.plus(&op.scaled(*c))?;
        }
        Ok(acc)
    }

    pub fn product(&self, other: &Operator) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            dim: self.dim,
            entries: &self.entries * &other.entries,
            hermitian: false,
            unitary: self.unitary && other.unitary,
        })
    }

    /// `AB - BA`.
    pub fn commutator(&self, other: &Operator) -> Result<Self> {
        self.check_same_dim(other)?;
        Self::general(&self.entries * &other.entries - &other.entries * &self.entries)
    }

    pub fn apply(&self, v: &DVector<C64>) -> Result<DVector<C64>> {
        if v.len() != self.dim.get() {
            return Err(Error::DimensionMismatch { expected: self.dim.get(), got: v.len() });
        }
        Ok(&self.entries * v)
    }

    /// Exact repeated product `A^m`, `m >= 1`.
    pub fn pow(&self, m: u32) -> Self {
        if m == 0 {
            return Self::identity(self.dim);
        }
        let mut entries = self.entries.clone();
        for _ in 1..m {
            entries = &entries * &self.entries;
        }
        if self.hermitian {
            // products of a Hermitian matrix are Hermitian; remove rounding asymmetry
            entries = (&entries + entries.adjoint()) * C64::new(0.5, 0.0);
        }
        Self {
            dim: self.dim,
            entries,
            hermitian: self.hermitian,
            unitary: self.unitary,
        }
    }
}

/// `X` or `P` in the truncated number basis.
pub fn build_quadrature(dim: FockDim, which: Quadrature) -> Result<Operator> {
    dim.require(2)?;
    let a = Operator::annihilation(dim).into_entries();
    let ad = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let entries = match which {
        Quadrature::X => (&a + &ad) * C64::new(s, 0.0),
        Quadrature::P => (&ad - &a) * C64::new(0.0, s),
    };
    Ok(Operator { dim, entries, hermitian: true, unitary: false })
}

/// Result of [`operator_power`]. `degenerate` is set for `m = 0`, where the
/// identity is returned in place of a meaningful Hamiltonian.
#[derive(Debug, Clone)]
pub struct OperatorPower {
    pub op: Operator,
    pub degenerate: bool,
}

pub fn operator_power(op: &Operator, m: u32) -> OperatorPower {
    OperatorPower { op: op.pow(m), degenerate: m == 0 }
}

/// Initial probe of the mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    #[default]
    Vacuum,
    Fock {
        n: usize,
    },
    Coherent {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    SqueezedVacuum {
        r: f64,
    },
}

/// Normalised pure state of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CvState {
    dim: FockDim,
    amplitudes: DVector<C64>,
}

impl CvState {
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        let dim = FockDim::new(amplitudes.len())?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Contract(format!("state norm {norm} is not 1")));
        }
        Ok(Self { dim, amplitudes })
    }

    pub fn normalized(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Domain("cannot normalise a zero or non-finite vector".into()));
        }
        Self::new(amplitudes / C64::new(norm, 0.0))
    }

    pub fn basis(dim: FockDim, n: usize) -> Result<Self> {
        if n >= dim.get() {
            return Err(Error::InvalidProbe(format!("Fock level {n} needs d > {n}, got d = {}", dim.get())));
        }
        let mut amplitudes = DVector::zeros(dim.get());
        amplitudes[n] = C64::new(1.0, 0.0);
        Ok(Self { dim, amplitudes })
    }

    pub fn vacuum(dim: FockDim) -> Self {
        Self::basis(dim, 0).expect("vacuum fits in any positive dimension")
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &CvState) -> Result<C64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim.get(), got: other.dim.get() });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Occupation of levels `index..d`.
    pub fn tail_mass(&self, index: usize) -> f64 {
        tail_mass(self.amplitudes.as_slice(), index)
    }

    /// Safe-envelope check for operations involving `P^m`.
    pub fn check_envelope(&self, m: u32) -> Result<()> {
        check_block_envelope(self.amplitudes.as_slice(), self.dim, m)
    }
}

pub(crate) fn tail_mass(amps: &[C64], index: usize) -> f64 {
    amps.iter().skip(index).map(|z| z.norm_sqr()).sum()
}

pub(crate) fn envelope_start(dim: FockDim, m: u32) -> usize {
    dim.get().saturating_sub(2 * m.max(1) as usize)
}

pub(crate) fn check_block_envelope(amps: &[C64], dim: FockDim, m: u32) -> Result<()> {
    let index = envelope_start(dim, m);
    let mass = tail_mass(amps, index);
    if mass >= ENVELOPE_TOL {
        return Err(Error::Envelope { mass, index, dim: dim.get() });
    }
    Ok(())
}

fn truncate_series(
    dim: FockDim,
    first: C64,
    next: impl Fn(usize, C64) -> C64,
    stride: usize,
) -> Result<(DVector<C64>, f64)> {
    // Walk the series past the cutoff until the terms are negligible so the
    // leakage is summed directly instead of as 1 - (kept mass).
    let d = dim.get();
    let mut amps = DVector::zeros(d);
    let mut leakage = 0.0;
    let mut c = first;
    let mut k = 0usize;
    let mut idx = 0usize;
    loop {
        if idx < d {
            amps[idx] = c;
        } else {
            leakage += c.norm_sqr();
            if c.norm_sqr() < 1e-40 || k > 200_000 {
                break;
            }
        }
        k += 1;
        idx += stride;
        c = next(k, c);
        if idx >= d && c.norm_sqr() == 0.0 {
            break;
        }
    }
    Ok((amps, leakage))
}

pub fn prepare_probe(spec: &ProbeSpec, dim: FockDim) -> Result<CvState> {
    match *spec {
        ProbeSpec::Vacuum => Ok(CvState::vacuum(dim)),
        ProbeSpec::Fock { n } => CvState::basis(dim, n),
        ProbeSpec::Coherent { re, im } => {
            let alpha = C64::new(re, im);
            if !alpha.norm().is_finite() {
                return Err(Error::InvalidProbe("coherent amplitude is not finite".into()));
            }
            let first = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
            let (amps, leakage) =
                truncate_series(dim, first, |k, c| c * alpha / (k as f64).sqrt(), 1)?;
            if leakage > LEAKAGE_TOL {
                return Err(Error::TruncationLeakage { leakage, dim: dim.get() });
            }
            CvState::normalized(amps)
        }
        ProbeSpec::SqueezedVacuum { r } => {
            if !r.is_finite() {
                return Err(Error::InvalidProbe("squeezing parameter is not finite".into()));
            }
            // S(r)|0> = cosh(r)^{-1/2} sum_n (-tanh r)^n sqrt((2n)!)/(2^n n!) |2n>
            let t = -r.tanh();
            let first = C64::new(r.cosh().powf(-0.5), 0.0);
            let (amps, leakage) = truncate_series(
                dim,
                first,
                |n, c| c * t * ((2 * n - 1) as f64 / (2 * n) as f64).sqrt(),
                2,
            )?;
            if leakage > LEAKAGE_TOL {
                return Err(Error::TruncationLeakage { leakage, dim: dim.get() });
            }
            CvState::normalized(amps)
        }
    }
}

/// Anything made of blocks of one mode, e.g. a single mode or a
/// register-controlled mode. Operators on the mode act block by block.
pub trait ModeRegister: Sized {
    fn mode_dim(&self) -> FockDim;
    fn blocks(&self) -> Vec<DVector<C64>>;
    fn with_blocks(&self, blocks: Vec<DVector<C64>>) -> Result<Self>;
}

impl ModeRegister for CvState {
    fn mode_dim(&self) -> FockDim {
        self.dim
    }

    fn blocks(&self) -> Vec<DVector<C64>> {
        vec![self.amplitudes.clone()]
    }

    fn with_blocks(&self, mut blocks: Vec<DVector<C64>>) -> Result<Self> {
        if blocks.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: blocks.len() });
        }
        CvState::new(blocks.pop().expect("one block"))
    }
}

/// Cached eigendecomposition of a Hermitian generator `H = V diag(w) V^dagger`,
/// giving `exp(-i tau H)` for any `tau`.
#[derive(Debug, Clone)]
pub struct Propagator {
    dim: FockDim,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<C64>,
}

impl Propagator {
    pub fn new(generator: &Operator) -> Result<Self> {
        if !generator.is_hermitian() {
            return Err(Error::NotHermitian { deviation: generator.hermitian_deviation() });
        }
        let entries = generator.entries();
        if entries.iter().all(|z| z.im == 0.0) {
            // real symmetric generators (X, P^2, ...) take the cheaper real solver
            let eig = SymmetricEigen::new(entries.map(|z| z.re));
            return Ok(Self {
                dim: generator.dim(),
                eigenvalues: eig.eigenvalues,
                eigenvectors: eig.eigenvectors.map(|v| C64::new(v, 0.0)),
            });
        }
        let eig = SymmetricEigen::new(entries.clone());
        Ok(Self { dim: generator.dim(), eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    fn phases(&self, tau: f64) -> DVector<C64> {
        self.eigenvalues.map(|w| C64::from_polar(1.0, -tau * w))
    }

    /// `exp(-i tau H)` as a matrix.
    pub fn unitary(&self, tau: f64) -> Operator {
        if tau == 0.0 {
            return Operator::identity(self.dim);
        }
        let phases = self.phases(tau);
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        Operator {
            dim: self.dim,
            entries: scaled * self.eigenvectors.adjoint(),
            hermitian: false,
            unitary: true,
        }
    }

    /// `exp(-i tau H) v` without forming the matrix.
    pub fn apply(&self, tau: f64, v: &DVector<C64>) -> Result<DVector<C64>> {
        if v.len() != self.dim.get() {
            return Err(Error::DimensionMismatch { expected: self.dim.get(), got: v.len() });
        }
        if tau == 0.0 {
            return Ok(v.clone());
        }
        let mut coords = self.eigenvectors.adjoint() * v;
        coords.component_mul_assign(&self.phases(tau));
        Ok(&self.eigenvectors * coords)
    }
}

/// `exp(-i tau H)` applied to every mode block of `state`.
pub fn evolve<S: ModeRegister>(state: &S, generator: &Operator, tau: f64) -> Result<S> {
    if !generator.is_hermitian() {
        return Err(Error::NotHermitian { deviation: generator.hermitian_deviation() });
    }
    if generator.dim() != state.mode_dim() {
        return Err(Error::DimensionMismatch {
            expected: state.mode_dim().get(),
            got: generator.dim().get(),
        });
    }
    if tau == 0.0 {
        return state.with_blocks(state.blocks());
    }
    let prop = Propagator::new(generator)?;
    evolve_with(state, &prop, tau)
}

/// Same as [`evolve`] with a precomputed propagator.
pub fn evolve_with<S: ModeRegister>(state: &S, prop: &Propagator, tau: f64) -> Result<S> {
    let before: f64 = state.blocks().iter().map(|b| b.norm_squared()).sum();
    let blocks = state
        .blocks()
        .iter()
        .map(|b| prop.apply(tau, b))
        .collect::<Result<Vec<_>>>()?;
    let after: f64 = blocks.iter().map(|b| b.norm_squared()).sum();
    if (after.sqrt() - before.sqrt()).abs() > NORM_TOL {
        return Err(Error::Contract(format!(
            "evolution changed the norm from {} to {}",
            before.sqrt(),
            after.sqrt()
        )));
    }
    state.with_blocks(blocks)
}

fn check_hermitian_value(z: C64, hermitian: bool) -> Result<C64> {
    if !hermitian {
        return Ok(z);
    }
    if z.im.abs() > MOMENT_IMAG_TOL * z.re.abs().max(1.0) {
        return Err(Error::ImaginaryMoment { imag: z.im });
    }
    Ok(C64::new(z.re, 0.0))
}

/// `<state| op^k |state>`, summed over mode blocks.
pub fn moment<S: ModeRegister>(state: &S, op: &Operator, k: u32) -> Result<C64> {
    if op.dim() != state.mode_dim() {
        return Err(Error::DimensionMismatch { expected: state.mode_dim().get(), got: op.dim().get() });
    }
    let mut total = C64::new(0.0, 0.0);
    for block in state.blocks() {
        let mut v = block.clone();
        for _ in 0..k {
            v = op.entries() * v;
        }
        total += block.dotc(&v);
    }
    check_hermitian_value(total, op.is_hermitian())
}

/// `<op^2> - <op>^2` for a Hermitian operator.
pub fn variance<S: ModeRegister>(state: &S, op: &Operator) -> Result<f64> {
    if !op.is_hermitian() {
        return Err(Error::NotHermitian { deviation: op.hermitian_deviation() });
    }
    let first = moment(state, op, 1)?.re;
    let second = moment(state, op, 2)?.re;
    Ok(second - first * first)
}

/// Settings of the automatic dimension-doubling loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionLoop {
    pub start: usize,
    pub cap: usize,
    pub rel_tol: f64,
}

impl Default for DimensionLoop {
    fn default() -> Self {
        Self { start: 64, cap: 1024, rel_tol: 1e-6 }
    }
}

/// Outcome of [`DimensionLoop::run`].
#[derive(Debug, Clone)]
pub struct Converged<T> {
    pub value: T,
    pub dim_used: FockDim,
    pub converged: bool,
    /// `(d, scalar)` for every dimension that produced a value.
    pub history: Vec<(usize, f64)>,
}

impl DimensionLoop {
    /// Doubles `d` from `start` until the scalar target moves by less than
    /// `rel_tol`, capped at `cap`. Envelope violations at a given `d` are
    /// treated as "not yet large enough". When the cap is reached the last
    /// value is returned with `converged = false`.
    pub fn run<T, F, S>(&self, mut eval: F, scalar: S) -> Result<Converged<T>>
    where
        F: FnMut(FockDim) -> Result<T>,
        S: Fn(&T) -> f64,
    {
        let mut d = FockDim::new(self.start)?;
        let mut prev: Option<(T, f64, FockDim)> = None;
        let mut history = Vec::new();
        let mut last_envelope = None;
        loop {
            match eval(d) {
                Ok(value) => {
                    let s = scalar(&value);
                    history.push((d.get(), s));
                    if let Some((_, ps, _)) = &prev {
                        let scale = s.abs().max(ps.abs());
                        if (s - ps).abs() <= self.rel_tol * scale {
                            return Ok(Converged { value, dim_used: d, converged: true, history });
                        }
                    }
                    prev = Some((value, s, d));
                }
                Err(e @ Error::Envelope { .. }) => {
                    prev = None;
                    last_envelope = Some(e);
                }
                Err(e) => return Err(e),
            }
            if d.get() * 2 > self.cap {
                break;
            }
            d = d.doubled();
        }
        match prev {
            Some((value, _, dim_used)) => Ok(Converged { value, dim_used, converged: false, history }),
            None => Err(Error::NonConvergence(format!(
                "no dimension up to {} satisfied the truncation envelope{}",
                self.cap,
                last_envelope.map(|e| format!(" (last: {e})")).unwrap_or_default()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dim(d: usize) -> FockDim {
        FockDim::new(d).unwrap()
    }

    #[test]
    fn quadrature_entries() {
        let x = build_quadrature(dim(4), Quadrature::X).unwrap();
        let p = build_quadrature(dim(4), Quadrature::P).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(x.entries()[(0, 1)].re, s, epsilon = 1e-15);
        for i in 0..4 {
            assert_eq!(x.entries()[(i, i)], C64::new(0.0, 0.0));
        }
        assert_abs_diff_eq!(p.entries()[(1, 0)].im, s, epsilon = 1e-15);
        assert_abs_diff_eq!(p.entries()[(0, 1)].im, -s, epsilon = 1e-15);
        assert!(x.is_hermitian() && p.is_hermitian());
    }

    #[test]
    fn quadrature_rejects_tiny_dimension() {
        assert!(matches!(
            build_quadrature(dim(1), Quadrature::P),
            Err(Error::InvalidDimension { got: 1, min: 2 })
        ));
        assert!(FockDim::new(0).is_err());
    }

    #[test]
    fn truncated_commutator_d5() {
        let x = build_quadrature(dim(5), Quadrature::X).unwrap();
        let p = build_quadrature(dim(5), Quadrature::P).unwrap();
        let c = x.commutator(&p).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = match (i == j, i) {
                    (true, 4) => C64::new(0.0, -4.0),
                    (true, _) => C64::new(0.0, 1.0),
                    _ => C64::new(0.0, 0.0),
                };
                assert!((c.entries()[(i, j)] - want).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn power_of_quadrature() {
        let p = build_quadrature(dim(6), Quadrature::P).unwrap();
        let p2 = operator_power(&p, 2);
        assert!(!p2.degenerate);
        assert_abs_diff_eq!(p2.op.entries()[(0, 0)].re, 0.5, epsilon = 1e-15);
        let x = build_quadrature(dim(6), Quadrature::X).unwrap();
        assert_eq!(operator_power(&x, 1).op, x);
        let id = operator_power(&x, 0);
        assert!(id.degenerate);
        assert_eq!(id.op, Operator::identity(dim(6)));
    }

    #[test]
    fn power_matches_triple_loop() {
        let p = build_quadrature(dim(8), Quadrature::P).unwrap();
        let a = p.entries();
        let mut naive = DMatrix::<C64>::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..8 {
                    for l in 0..8 {
                        acc += a[(i, k)] * a[(k, l)] * a[(l, j)];
                    }
                }
                naive[(i, j)] = acc;
            }
        }
        let p3 = operator_power(&p, 3).op;
        assert!(p3.is_hermitian());
        assert!(max_abs(&(p3.entries() - naive)) < 1e-13);
    }

    #[test]
    fn hermitian_claim_is_checked() {
        let a = Operator::annihilation(dim(3)).into_entries();
        assert!(matches!(Operator::hermitian(a), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn probes() {
        let v = prepare_probe(&ProbeSpec::Vacuum, dim(8)).unwrap();
        assert_eq!(v.amplitudes()[0], C64::new(1.0, 0.0));
        assert_eq!(v.tail_mass(1), 0.0);

        let d16 = dim(16);
        let coh = prepare_probe(&ProbeSpec::Coherent { re: 0.5, im: 0.0 }, d16).unwrap();
        let x = build_quadrature(d16, Quadrature::X).unwrap();
        let p = build_quadrature(d16, Quadrature::P).unwrap();
        assert_abs_diff_eq!(moment(&coh, &x, 1).unwrap().re, 2f64.sqrt() * 0.5, epsilon = 1e-8);
        // <P^2> = Var P + <P>^2 = 1/2 + 0 for real alpha
        assert_abs_diff_eq!(moment(&coh, &p, 2).unwrap().re, 0.5, epsilon = 1e-8);

        let d32 = dim(32);
        let sq = prepare_probe(&ProbeSpec::SqueezedVacuum { r: 0.3 }, d32).unwrap();
        let x32 = build_quadrature(d32, Quadrature::X).unwrap();
        assert_abs_diff_eq!(variance(&sq, &x32).unwrap(), (-0.6f64).exp() / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn probe_errors() {
        assert!(matches!(
            prepare_probe(&ProbeSpec::Fock { n: 8 }, dim(8)),
            Err(Error::InvalidProbe(_))
        ));
        assert!(matches!(
            prepare_probe(&ProbeSpec::Coherent { re: 3.0, im: 0.0 }, dim(8)),
            Err(Error::TruncationLeakage { .. })
        ));
    }

    #[test]
    fn vacuum_moments() {
        let d = dim(8);
        let v = CvState::vacuum(d);
        let x = build_quadrature(d, Quadrature::X).unwrap();
        let p = build_quadrature(d, Quadrature::P).unwrap();
        assert_abs_diff_eq!(moment(&v, &x, 2).unwrap().re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(variance(&v, &x).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(moment(&v, &p, 1).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn evolve_shifts_quadratures() {
        let d = dim(48);
        let v = CvState::vacuum(d);
        let x = build_quadrature(d, Quadrature::X).unwrap();
        let p = build_quadrature(d, Quadrature::P).unwrap();
        let kicked = evolve(&v, &x, 0.7).unwrap();
        assert_abs_diff_eq!(moment(&kicked, &p, 1).unwrap().re, -0.7, epsilon = 1e-8);
        let pushed = evolve(&v, &p, 0.7).unwrap();
        assert_abs_diff_eq!(moment(&pushed, &x, 1).unwrap().re, 0.7, epsilon = 1e-8);
        assert_eq!(evolve(&pushed, &x, 0.0).unwrap(), pushed);
    }

    #[test]
    fn evolve_rejects_non_hermitian() {
        let d = dim(4);
        let a = Operator::general(Operator::annihilation(d).into_entries()).unwrap();
        assert!(matches!(evolve(&CvState::vacuum(d), &a, 1.0), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn propagator_is_unitary() {
        let d = dim(32);
        let p = build_quadrature(d, Quadrature::P).unwrap();
        let u = Propagator::new(&p.pow(2)).unwrap().unitary(0.4);
        assert!(u.unitarity_deviation() < UNITARY_TOL);
    }

    #[test]
    fn dimension_loop_flags_cap() {
        let lp = DimensionLoop { start: 4, cap: 16, rel_tol: 1e-6 };
        let out = lp.run(|d| Ok(d.get() as f64), |v| *v).unwrap();
        assert!(!out.converged);
        assert_eq!(out.dim_used.get(), 16);
        let out = lp.run(|d| Ok(1.0 + 1e-9 * d.get() as f64), |v| *v).unwrap();
        assert!(out.converged);
        assert_eq!(out.dim_used.get(), 8);
        let err = lp
            .run(|d| Err::<f64, _>(Error::Envelope { mass: 1.0, index: 0, dim: d.get() }), |v| *v)
            .unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)));
    }
}
