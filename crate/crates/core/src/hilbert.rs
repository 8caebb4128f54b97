//! Hilbert-space factors, elementary operators and density matrices.
//!
//! Composite spaces are ordered tensor products of labelled factors; the
//! cavity factor always comes first. The Dicke basis of an `N`-atom ensemble
//! is ordered by descending `S_z` eigenvalue, so the fully excited coherent
//! spin state is basis vector 0.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::sparse::CsrMatrix;

/// Operators on spaces of at least this total dimension are stored sparse.
pub const DENSE_LIMIT: usize = 256;
/// Max-norm tolerance for Hermiticity of algebraically constructed operators.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub const CAVITY: &str = "cavity";
pub const SPIN: &str = "spin";
pub const SPIN_WAVE: &str = "spin_wave";

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct SpaceSignature {
    factors: Vec<Factor>,
}

impl SpaceSignature {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let factors: Vec<Factor> = factors
            .into_iter()
            .map(|(label, dim)| Factor { label: label.into(), dim })
            .collect();
        if factors.is_empty() {
            return Err(Error::InvalidDimension("signature needs at least one factor".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.dim < 1 {
                return Err(Error::InvalidDimension(format!("factor `{}` has dimension 0", f.label)));
            }
            if factors[..i].iter().any(|g| g.label == f.label) {
                return Err(Error::InvalidDimension(format!("duplicate factor label `{}`", f.label)));
            }
        }
        Ok(Self { factors })
    }

    pub fn single(label: &str, dim: usize) -> Result<Self> {
        Self::new([(label, dim)])
    }

    /// Truncated cavity (`n_max + 1` Fock levels) times the `N`-atom Dicke manifold.
    pub fn cavity_spin(n_max: usize, n_atoms: usize) -> Result<Self> {
        Self::new([(CAVITY, n_max + 1), (SPIN, n_atoms + 1)])
    }

    /// Cavity mode and spin-wave boson, truncated at `n_a` and `n_b` quanta.
    pub fn two_mode(n_a: usize, n_b: usize) -> Result<Self> {
        Self::new([(CAVITY, n_a + 1), (SPIN_WAVE, n_b + 1)])
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim).product()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| Error::UnknownFactor(label.to_string()))
    }

    pub fn factor_dim(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.position(label)?].dim)
    }

    fn concat(&self, other: &Self) -> Result<Self> {
        Self::new(
            self.factors
                .iter()
                .chain(&other.factors)
                .map(|f| (f.label.clone(), f.dim)),
        )
    }
}

impl fmt::Display for SpaceSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factors.iter().map(|x| format!("{}[{}]", x.label, x.dim)).collect();
        write!(f, "{}", parts.join(" ⊗ "))
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Dense(Array2<C64>),
    Sparse(CsrMatrix),
}

/// A square operator on a labelled Hilbert space.
///
/// Storage is dense below [`DENSE_LIMIT`] and compressed-row above it; every
/// method works on either representation.
#[derive(Clone, Debug)]
pub struct Operator {
    signature: SpaceSignature,
    repr: Repr,
}

impl Operator {
    pub fn from_dense(signature: SpaceSignature, m: Array2<C64>) -> Result<Self> {
        let d = signature.dim();
        if m.dim() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {:?} but {signature} has dimension {d}",
                m.dim()
            )));
        }
        let repr = if d >= DENSE_LIMIT {
            Repr::Sparse(CsrMatrix::from_dense(&m))
        } else {
            Repr::Dense(m)
        };
        Ok(Self { signature, repr })
    }

    pub fn from_csr(signature: SpaceSignature, m: CsrMatrix) -> Result<Self> {
        let d = signature.dim();
        if (m.nrows(), m.ncols()) != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but {signature} has dimension {d}",
                m.nrows(),
                m.ncols()
            )));
        }
        let repr = if d >= DENSE_LIMIT {
            Repr::Sparse(m)
        } else {
            Repr::Dense(m.to_dense())
        };
        Ok(Self { signature, repr })
    }

    pub fn identity(signature: &SpaceSignature) -> Self {
        let d = signature.dim();
        Self::from_csr(signature.clone(), CsrMatrix::identity(d)).expect("identity matches signature")
    }

    pub fn zeros(signature: &SpaceSignature) -> Self {
        let d = signature.dim();
        Self::from_csr(signature.clone(), CsrMatrix::zeros(d, d)).expect("zeros match signature")
    }

    pub fn signature(&self) -> &SpaceSignature {
        &self.signature
    }

    pub fn dim(&self) -> usize {
        self.signature.dim()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.repr, Repr::Sparse(_))
    }

    pub fn to_dense(&self) -> Array2<C64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Sparse(s) => s.to_dense(),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match &self.repr {
            Repr::Dense(m) => CsrMatrix::from_dense(m),
            Repr::Sparse(s) => s.clone(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        match &self.repr {
            Repr::Dense(m) => m[[row, col]],
            Repr::Sparse(s) => s.get(row, col),
        }
    }

    fn with_repr(&self, repr: Repr) -> Self {
        Self { signature: self.signature.clone(), repr }
    }

    pub fn adjoint(&self) -> Self {
        match &self.repr {
            Repr::Dense(m) => self.with_repr(Repr::Dense(linalg::adjoint(m))),
            Repr::Sparse(s) => self.with_repr(Repr::Sparse(s.adjoint())),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        match &self.repr {
            Repr::Dense(m) => self.with_repr(Repr::Dense(m * s)),
            Repr::Sparse(m) => self.with_repr(Repr::Sparse(m.scale(s))),
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.signature.dim() != other.signature.dim() || self.signature != other.signature {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {}",
                self.signature, other.signature
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self, other_scale: C64) -> Result<Self> {
        self.check_same(other)?;
        let one = C64::new(1.0, 0.0);
        Ok(match (&self.repr, &other.repr) {
            (Repr::Dense(a), Repr::Dense(b)) => self.with_repr(Repr::Dense(a + &(b * other_scale))),
            _ => self.with_repr(Repr::Sparse(self.to_csr().axpby(one, &other.to_csr(), other_scale))),
        })
    }

    pub fn try_matmul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(match (&self.repr, &other.repr) {
            (Repr::Dense(a), Repr::Dense(b)) => self.with_repr(Repr::Dense(a.dot(b))),
            _ => self.with_repr(Repr::Sparse(self.to_csr().matmul(&other.to_csr()))),
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        let ab = self.try_matmul(other)?;
        let ba = other.try_matmul(self)?;
        ab.try_add(&ba, C64::new(-1.0, 0.0))
    }

    /// Kronecker product; the result's signature is the concatenation.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        let sig = self.signature.concat(&other.signature)?;
        Self::from_csr(sig, self.to_csr().kron(&other.to_csr()))
    }

    pub fn max_abs(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => linalg::max_abs(m),
            Repr::Sparse(s) => s.iter().fold(0.0, |acc, (_, _, v)| acc.max(v.norm())),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.try_add(other, C64::new(-1.0, 0.0))?.max_abs())
    }

    /// `‖M − M†‖_max`
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint()).expect("adjoint shares signature")
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() < HERMITIAN_TOL
    }

    /// `Tr(ρ O)`
    pub fn expect(&self, rho: &DensityMatrix) -> Result<C64> {
        if self.signature != rho.signature {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.signature, rho.signature)));
        }
        let r = &rho.matrix;
        let mut acc = C64::new(0.0, 0.0);
        match &self.repr {
            Repr::Dense(m) => {
                for ((i, j), v) in m.indexed_iter() {
                    acc += v * r[[j, i]];
                }
            }
            Repr::Sparse(s) => {
                for (i, j, v) in s.iter() {
                    acc += v * r[[j, i]];
                }
            }
        }
        Ok(acc)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs, C64::new(1.0, 0.0)).expect("operator signatures differ")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.try_add(rhs, C64::new(-1.0, 0.0)).expect("operator signatures differ")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_matmul(rhs).expect("operator signatures differ")
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Bosonic lowering operator on `n_max + 1` Fock levels.
pub fn fock_annihilation(n_max: usize) -> Result<Operator> {
    boson_annihilation(CAVITY, n_max)
}

/// Lowering operator for an arbitrary bosonic factor label.
pub fn boson_annihilation(label: &str, n_max: usize) -> Result<Operator> {
    if n_max < 1 {
        return Err(Error::InvalidDimension(format!("Fock truncation n_max = {n_max} must be ≥ 1")));
    }
    let sig = SpaceSignature::single(label, n_max + 1)?;
    let entries = (1..=n_max)
        .map(|n| (n - 1, n, C64::new((n as f64).sqrt(), 0.0)))
        .collect();
    Operator::from_csr(sig, CsrMatrix::from_triplets(n_max + 1, n_max + 1, entries))
}

/// Collective spin operators of the `j = N/2` Dicke manifold.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    pub sp: Operator,
    pub sm: Operator,
}

impl SpinOperators {
    pub fn n_atoms(&self) -> usize {
        self.sz.dim() - 1
    }
}

pub fn dicke_spin_operators(n_atoms: usize) -> Result<SpinOperators> {
    if n_atoms < 1 {
        return Err(Error::InvalidDimension(format!("atom number N = {n_atoms} must be ≥ 1")));
    }
    let d = n_atoms + 1;
    let sig = SpaceSignature::single(SPIN, d)?;
    let j = n_atoms as f64 / 2.0;
    let m_of = |k: usize| j - k as f64;

    let sz = CsrMatrix::from_triplets(d, d, (0..d).map(|k| (k, k, C64::new(m_of(k), 0.0))).collect());
    // S+ |j,m⟩ = √(j(j+1) − m(m+1)) |j,m+1⟩ and index k−1 holds m+1
    let sp = CsrMatrix::from_triplets(
        d,
        d,
        (1..d)
            .map(|k| {
                let m = m_of(k);
                (k - 1, k, C64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0))
            })
            .collect(),
    );
    let sm = sp.adjoint();
    let half = C64::new(0.5, 0.0);
    let sx = sp.axpby(half, &sm, half);
    let sy = sp.axpby(C64::new(0.0, -0.5), &sm, C64::new(0.0, 0.5));

    let mk = |m: CsrMatrix| Operator::from_csr(sig.clone(), m);
    Ok(SpinOperators {
        sx: mk(sx)?,
        sy: mk(sy)?,
        sz: mk(sz)?,
        sp: mk(sp)?,
        sm: mk(sm)?,
    })
}

/// One entry per tensor factor: an explicit operator or the identity.
#[derive(Clone, Copy, Debug)]
pub enum Slot<'a> {
    Op(&'a Operator),
    Identity,
}

/// Kronecker product of per-factor operators in signature order.
pub fn tensor(signature: &SpaceSignature, slots: &[Slot<'_>]) -> Result<Operator> {
    if slots.len() != signature.factors().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} slots for {} factors",
            slots.len(),
            signature.factors().len()
        )));
    }
    let mut acc = CsrMatrix::identity(1);
    for (slot, factor) in slots.iter().zip(signature.factors()) {
        let m = match slot {
            Slot::Identity => CsrMatrix::identity(factor.dim),
            Slot::Op(op) => {
                if op.dim() != factor.dim {
                    return Err(Error::DimensionMismatch(format!(
                        "operator of dimension {} in slot `{}` of dimension {}",
                        op.dim(),
                        factor.label,
                        factor.dim
                    )));
                }
                op.to_csr()
            }
        };
        acc = acc.kron(&m);
    }
    Operator::from_csr(signature.clone(), acc)
}

/// Lifts a single-factor operator to `signature`, identity on every other factor.
pub fn embed(signature: &SpaceSignature, label: &str, op: &Operator) -> Result<Operator> {
    let pos = signature.position(label)?;
    let slots: Vec<Slot<'_>> = (0..signature.factors().len())
        .map(|i| if i == pos { Slot::Op(op) } else { Slot::Identity })
        .collect();
    tensor(signature, &slots)
}

/// Tolerances a [`DensityMatrix`] must satisfy.
pub const STATE_TRACE_TOL: f64 = 1e-10;
pub const STATE_HERMITIAN_TOL: f64 = 1e-10;
pub const STATE_MIN_EIGENVALUE: f64 = -1e-8;

/// Hermitian, unit-trace, positive operator on a labelled space.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    signature: SpaceSignature,
    matrix: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(signature: SpaceSignature, matrix: Array2<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(signature, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Skips the trace, Hermiticity and positivity checks (dimensions still checked).
    pub fn new_unchecked(signature: SpaceSignature, matrix: Array2<C64>) -> Result<Self> {
        let d = signature.dim();
        if matrix.dim() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {:?} but {signature} has dimension {d}",
                matrix.dim()
            )));
        }
        Ok(Self { signature, matrix })
    }

    /// `|ψ⟩⟨ψ|` with `ψ` normalized first.
    pub fn pure(signature: SpaceSignature, psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if psi.len() != signature.dim() || norm == 0.0 {
            return Err(Error::InvalidState(format!(
                "state vector of length {} and norm {norm} on {signature}",
                psi.len()
            )));
        }
        let d = psi.len();
        let m = Array2::from_shape_fn((d, d), |(i, j)| psi[i] * psi[j].conj() / (norm * norm));
        Ok(Self { signature, matrix: m })
    }

    pub fn basis(signature: SpaceSignature, index: usize) -> Result<Self> {
        let d = signature.dim();
        if index >= d {
            return Err(Error::InvalidState(format!("basis index {index} outside dimension {d}")));
        }
        let mut m = Array2::zeros((d, d));
        m[[index, index]] = C64::new(1.0, 0.0);
        Ok(Self { signature, matrix: m })
    }

    /// `ρ₁ ⊗ ρ₂ ⊗ …`
    pub fn product(states: &[&DensityMatrix]) -> Result<Self> {
        let (first, rest) = states
            .split_first()
            .ok_or_else(|| Error::InvalidState("empty product".into()))?;
        let mut sig = first.signature.clone();
        let mut m = first.matrix.clone();
        for s in rest {
            sig = sig.concat(&s.signature)?;
            m = kron_dense(&m, &s.matrix);
        }
        Ok(Self { signature: sig, matrix: m })
    }

    pub fn signature(&self) -> &SpaceSignature {
        &self.signature
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.signature.dim()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::max_abs(&(&self.matrix - &linalg::adjoint(&self.matrix)))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let h = (&self.matrix + &linalg::adjoint(&self.matrix)) * C64::new(0.5, 0.0);
        Ok(linalg::hermitian_eigvals(&h)?[0])
    }

    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > STATE_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let herm = self.hermiticity_error();
        if herm > STATE_HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("Hermiticity error {herm:e}")));
        }
        let min = self.min_eigenvalue()?;
        if min < STATE_MIN_EIGENVALUE {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn expect(&self, op: &Operator) -> Result<C64> {
        op.expect(self)
    }

    /// Reduced state on the factor `keep`.
    pub fn partial_trace(&self, keep: &str) -> Result<DensityMatrix> {
        let pos = self.signature.position(keep)?;
        let factors = self.signature.factors();
        let left: usize = factors[..pos].iter().map(|f| f.dim).product();
        let dk = factors[pos].dim;
        let right: usize = factors[pos + 1..].iter().map(|f| f.dim).product();
        let mut out = Array2::zeros((dk, dk));
        for a in 0..left {
            for b in 0..right {
                for i in 0..dk {
                    let row = (a * dk + i) * right + b;
                    for j in 0..dk {
                        let col = (a * dk + j) * right + b;
                        out[[i, j]] += self.matrix[[row, col]];
                    }
                }
            }
        }
        Ok(DensityMatrix {
            signature: SpaceSignature::single(keep, dk)?,
            matrix: out,
        })
    }

    /// `½ Σ |λ_i(ρ − σ)|`
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.signature != other.signature {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.signature, other.signature)));
        }
        let diff = &self.matrix - &other.matrix;
        let h = (&diff + &linalg::adjoint(&diff)) * C64::new(0.5, 0.0);
        Ok(0.5 * linalg::hermitian_eigvals(&h)?.iter().map(|l| l.abs()).sum::<f64>())
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Result<f64> {
        if self.signature != other.signature {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.signature, other.signature)));
        }
        Ok(linalg::max_abs(&(&self.matrix - &other.matrix)))
    }
}

pub(crate) fn kron_dense(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (p, q) = b.dim();
    Array2::from_shape_fn((a.nrows() * p, a.ncols() * q), |(i, j)| a[[i / p, j / q]] * b[[i % p, j % q]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn annihilation_two_level() {
        let a = fock_annihilation(1).unwrap();
        let m = a.to_dense();
        assert_eq!(m.dim(), (2, 2));
        assert_eq!(m[[0, 1]], c(1.0));
        assert_eq!(m.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn truncated_boson_commutator() {
        let n_max = 5;
        let a = fock_annihilation(n_max).unwrap();
        let comm = a.commutator(&a.adjoint()).unwrap().to_dense();
        for i in 0..=n_max {
            for j in 0..=n_max {
                let expected = match (i == j, i == n_max) {
                    (true, true) => -(n_max as f64),
                    (true, false) => 1.0,
                    _ => 0.0,
                };
                assert!((comm[[i, j]] - c(expected)).norm() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn annihilation_kills_vacuum() {
        let a = fock_annihilation(4).unwrap().to_dense();
        assert!(a.column(0).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(fock_annihilation(0), Err(Error::InvalidDimension(_))));
        assert!(matches!(dicke_spin_operators(0), Err(Error::InvalidDimension(_))));
        assert!(SpaceSignature::new([("a", 2), ("a", 3)]).is_err());
    }

    #[test]
    fn single_spin_is_pauli_over_two() {
        let s = dicke_spin_operators(1).unwrap();
        let sz = s.sz.to_dense();
        assert_eq!(sz[[0, 0]], c(0.5));
        assert_eq!(sz[[1, 1]], c(-0.5));
        let sx = s.sx.to_dense();
        assert_eq!(sx[[0, 1]], c(0.5));
        assert_eq!(sx[[1, 0]], c(0.5));
        let sy = s.sy.to_dense();
        assert_eq!(sy[[0, 1]], C64::new(0.0, -0.5));
        assert_eq!(sy[[1, 0]], C64::new(0.0, 0.5));
    }

    #[test]
    fn su2_algebra_and_casimir_n18() {
        let s = dicke_spin_operators(18).unwrap();
        let comm = s.sp.commutator(&s.sm).unwrap();
        assert!(comm.max_abs_diff(&(&s.sz * 2.0)).unwrap() < 1e-12);
        let cas = &(&(&s.sx * &s.sx) + &(&s.sy * &s.sy)) + &(&s.sz * &s.sz);
        let id = Operator::identity(s.sz.signature());
        assert!(cas.max_abs_diff(&(&id * 90.0)).unwrap() < 1e-12);
    }

    #[test]
    fn tensor_identities_and_commuting_factors() {
        let sig = SpaceSignature::cavity_spin(3, 4).unwrap();
        let a = fock_annihilation(3).unwrap();
        let s = dicke_spin_operators(4).unwrap();
        let big_a = tensor(&sig, &[Slot::Op(&a), Slot::Identity]).unwrap();
        let big_sm = tensor(&sig, &[Slot::Identity, Slot::Op(&s.sm)]).unwrap();
        assert!(big_a.commutator(&big_sm).unwrap().max_abs() < 1e-14);

        let id = tensor(&sig, &[Slot::Identity, Slot::Identity]).unwrap();
        assert!(id.max_abs_diff(&Operator::identity(&sig)).unwrap() == 0.0);

        let big_sp = tensor(&sig, &[Slot::Identity, Slot::Op(&s.sp)]).unwrap();
        let direct = tensor(&sig, &[Slot::Op(&a), Slot::Op(&s.sp)]).unwrap();
        assert!((&big_a * &big_sp).max_abs_diff(&direct).unwrap() < 1e-14);
    }

    #[test]
    fn tensor_dimension_mismatch() {
        let sig = SpaceSignature::cavity_spin(3, 4).unwrap();
        let a = fock_annihilation(2).unwrap();
        assert!(matches!(
            tensor(&sig, &[Slot::Op(&a), Slot::Identity]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(tensor(&sig, &[Slot::Identity]).is_err());
    }

    #[test]
    fn partial_trace_of_product_and_bell_states() {
        let ca = SpaceSignature::single(CAVITY, 2).unwrap();
        let sp = SpaceSignature::single(SPIN, 3).unwrap();
        let rho_a = DensityMatrix::pure(ca, &[c(0.6), C64::new(0.0, 0.8)]).unwrap();
        let rho_s = DensityMatrix::pure(sp, &[c(1.0), c(1.0), C64::new(0.0, 1.0)]).unwrap();
        let prod = DensityMatrix::product(&[&rho_a, &rho_s]).unwrap();
        let red = prod.partial_trace(SPIN).unwrap();
        assert!(red.max_abs_diff(&rho_s).unwrap() < 1e-14);
        assert!((red.trace() - c(1.0)).norm() < 1e-12);
        let red_a = prod.partial_trace(CAVITY).unwrap();
        assert!(red_a.max_abs_diff(&rho_a).unwrap() < 1e-14);

        let sig = SpaceSignature::new([("left", 2), ("right", 2)]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = DensityMatrix::pure(sig, &[c(h), c(0.0), c(0.0), c(h)]).unwrap();
        let red = bell.partial_trace("right").unwrap();
        assert!((red.matrix()[[0, 0]] - c(0.5)).norm() < 1e-14);
        assert!((red.matrix()[[1, 1]] - c(0.5)).norm() < 1e-14);
        assert!(red.matrix()[[0, 1]].norm() < 1e-14);
        assert!(matches!(bell.partial_trace("nope"), Err(Error::UnknownFactor(_))));
    }

    #[test]
    fn sparse_storage_above_limit() {
        let sig = SpaceSignature::cavity_spin(15, 20).unwrap();
        assert!(sig.dim() >= DENSE_LIMIT);
        let a = fock_annihilation(15).unwrap();
        let big = embed(&sig, CAVITY, &a).unwrap();
        assert!(big.is_sparse());
        let n = &big.adjoint() * &big;
        assert!(n.is_hermitian());
        assert!((n.get(10 * 21 + 3, 10 * 21 + 3) - c(10.0)).norm() < 1e-12);
    }
}
