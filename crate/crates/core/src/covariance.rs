//! Parameters, affinely parametrized systems and the covariance matrices defining error norms.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{BandedCholesky, BandedLu, CsrMatrix};
use crate::scalar::{dot, Scalar};

/// A point of the parameter domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T>(Vec<T>);

impl<T: Scalar> Parameter<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }

    pub fn from_f64(coords: &[f64]) -> Self {
        Self(coords.iter().map(|&v| T::of(v)).collect())
    }
}

impl<T: Scalar> From<Vec<T>> for Parameter<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

impl<T: Scalar> fmt::Display for Parameter<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("parameter domain bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Empty("parameter domain"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::Domain(format!(
                "lower bound {} exceeds upper bound {} in coordinate {i}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains<T: Scalar>(&self, mu: &Parameter<T>) -> bool {
        mu.dim() == self.dim()
            && mu
                .coords()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (&lo, &hi))| {
                    let c = c.as_f64();
                    c >= lo && c <= hi
                })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRole {
    Train,
    Online,
}

/// Finite parameter set drawn i.i.d. uniformly from a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    pub points: Vec<Parameter<T>>,
    pub seed: u64,
    pub role: SampleRole,
}

impl<T: Scalar> SampleSet<T> {
    pub fn from_points(points: Vec<Parameter<T>>, seed: u64, role: SampleRole) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("sample set"));
        }
        Ok(Self { points, seed, role })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter<T>> {
        self.points.iter()
    }
}

/// Draws `count` i.i.d. uniform points; the stream depends only on `seed`.
pub fn sample_parameters<T: Scalar>(
    domain: &ParameterDomain,
    count: usize,
    seed: u64,
    role: SampleRole,
) -> Result<SampleSet<T>> {
    if count == 0 {
        return Err(Error::Empty("sample count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            let c = domain
                .lower
                .iter()
                .zip(&domain.upper)
                .map(|(&lo, &hi)| {
                    let u: f64 = rng.random();
                    T::of(lo + (hi - lo) * u)
                })
                .collect();
            Parameter::new(c)
        })
        .collect();
    SampleSet::from_points(points, seed, role)
}

/// Registry of scalar coefficient functions `μ ↦ θ(μ)` of an affine decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientFn {
    Constant { value: f64 },
    Coordinate { index: usize },
    NegatedCoordinate { index: usize },
    /// `scale · Π_k μ[indices[k]]`
    Product { indices: Vec<usize>, scale: f64 },
}

impl CoefficientFn {
    pub fn eval<T: Scalar>(&self, mu: &Parameter<T>) -> T {
        let c = mu.coords();
        match self {
            Self::Constant { value } => T::of(*value),
            Self::Coordinate { index } => c[*index],
            Self::NegatedCoordinate { index } => -c[*index],
            Self::Product { indices, scale } => {
                indices.iter().fold(T::of(*scale), |acc, &i| acc * c[i])
            }
        }
    }

    /// Smallest parameter dimension this function can be evaluated on.
    pub fn required_dim(&self) -> usize {
        match self {
            Self::Constant { .. } => 0,
            Self::Coordinate { index } | Self::NegatedCoordinate { index } => index + 1,
            Self::Product { indices, .. } => indices.iter().map(|i| i + 1).max().unwrap_or(0),
        }
    }
}

/// `A(μ) = Σ_q α_q(μ) A_q`, `f(μ) = Σ_q ζ_q(μ) f_q`.
#[derive(Debug, Clone)]
pub struct AffineSystem<T> {
    operator_terms: Vec<CsrMatrix<T>>,
    operator_coeffs: Vec<CoefficientFn>,
    rhs_terms: Vec<Vec<T>>,
    rhs_coeffs: Vec<CoefficientFn>,
    dim: usize,
}

impl<T: Scalar> AffineSystem<T> {
    pub fn new(
        operator_terms: Vec<CsrMatrix<T>>,
        operator_coeffs: Vec<CoefficientFn>,
        rhs_terms: Vec<Vec<T>>,
        rhs_coeffs: Vec<CoefficientFn>,
    ) -> Result<Self> {
        if operator_terms.is_empty() {
            return Err(Error::Empty("operator terms"));
        }
        if rhs_terms.is_empty() {
            return Err(Error::Empty("right-hand side terms"));
        }
        check_len("operator coefficients", operator_terms.len(), operator_coeffs.len())?;
        check_len("rhs coefficients", rhs_terms.len(), rhs_coeffs.len())?;
        let dim = operator_terms[0].nrows();
        for a in &operator_terms {
            check_len("operator term rows", dim, a.nrows())?;
            check_len("operator term cols", dim, a.ncols())?;
        }
        for f in &rhs_terms {
            check_len("rhs term length", dim, f.len())?;
        }
        Ok(Self {
            operator_terms,
            operator_coeffs,
            rhs_terms,
            rhs_coeffs,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operator_terms(&self) -> &[CsrMatrix<T>] {
        &self.operator_terms
    }

    pub fn rhs_terms(&self) -> &[Vec<T>] {
        &self.rhs_terms
    }

    pub fn operator_coeff_fns(&self) -> &[CoefficientFn] {
        &self.operator_coeffs
    }

    pub fn rhs_coeff_fns(&self) -> &[CoefficientFn] {
        &self.rhs_coeffs
    }

    pub fn parameter_dim(&self) -> usize {
        self.operator_coeffs
            .iter()
            .chain(&self.rhs_coeffs)
            .map(CoefficientFn::required_dim)
            .max()
            .unwrap_or(0)
    }

    fn check_parameter(&self, mu: &Parameter<T>) -> Result<()> {
        if mu.dim() < self.parameter_dim() {
            return Err(Error::DimensionMismatch {
                context: "parameter dimension",
                expected: self.parameter_dim(),
                found: mu.dim(),
            });
        }
        Ok(())
    }

    pub fn operator_coefficients(&self, mu: &Parameter<T>) -> Vec<T> {
        self.operator_coeffs.iter().map(|c| c.eval(mu)).collect()
    }

    pub fn rhs_coefficients(&self, mu: &Parameter<T>) -> Vec<T> {
        self.rhs_coeffs.iter().map(|c| c.eval(mu)).collect()
    }

    /// Assembles `Σ_q c_q A_q` for an explicit coefficient vector.
    pub fn assemble_with(&self, coeffs: &[T]) -> Result<CsrMatrix<T>> {
        let terms: Vec<&CsrMatrix<T>> = self.operator_terms.iter().collect();
        CsrMatrix::linear_combination(coeffs, &terms)
    }

    pub fn assemble_operator(&self, mu: &Parameter<T>) -> Result<CsrMatrix<T>> {
        self.check_parameter(mu)?;
        self.assemble_with(&self.operator_coefficients(mu))
    }

    pub fn assemble_rhs(&self, mu: &Parameter<T>) -> Result<Vec<T>> {
        self.check_parameter(mu)?;
        let mut f = vec![T::zero(); self.dim];
        for (fq, z) in self.rhs_terms.iter().zip(self.rhs_coefficients(mu)) {
            crate::scalar::axpy(z, fq, &mut f);
        }
        Ok(f)
    }

    /// `A(μ) v` without assembling the operator.
    pub fn apply_operator(&self, mu: &Parameter<T>, v: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        let mut tmp = vec![T::zero(); self.dim];
        for (a, c) in self.operator_terms.iter().zip(self.operator_coefficients(mu)) {
            a.mul_vec_into(v, &mut tmp);
            crate::scalar::axpy(c, &tmp, &mut y);
        }
        y
    }

    /// `A(μ)ᵀ v` without assembling the operator.
    pub fn apply_operator_transpose(&self, mu: &Parameter<T>, v: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        for (a, c) in self.operator_terms.iter().zip(self.operator_coefficients(mu)) {
            crate::scalar::axpy(c, &a.tr_mul_vec(v), &mut y);
        }
        y
    }

    /// Sparse LU of `A(μ)`; serves both `A(μ)` and `A(μ)ᵀ` solves.
    pub fn factor(&self, mu: &Parameter<T>) -> Result<BandedLu<T>> {
        BandedLu::factor(&self.assemble_operator(mu)?)
    }

    /// Full-order solution `u(μ)`.
    pub fn solve(&self, mu: &Parameter<T>) -> Result<Vec<T>> {
        let lu = self.factor(mu)?;
        Ok(lu.solve(&self.assemble_rhs(mu)?))
    }
}

/// Symmetric positive definite matrix with a cached sparse Cholesky factorization.
#[derive(Debug, Clone)]
pub struct SpdMatrix<T> {
    matrix: CsrMatrix<T>,
    chol: BandedCholesky<T>,
}

impl<T: Scalar> SpdMatrix<T> {
    pub fn new(matrix: CsrMatrix<T>) -> Result<Self> {
        if !matrix.is_symmetric(T::of(1e-10)) {
            return Err(Error::Domain("matrix is not symmetric".into()));
        }
        let chol = BandedCholesky::factor(&matrix)?;
        Ok(Self { matrix, chol })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(CsrMatrix::identity(n)).expect("identity is SPD")
    }

    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    pub fn cholesky(&self) -> &BandedCholesky<T> {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        self.matrix.mul_vec(v)
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.chol.solve(b)
    }

    pub fn inner(&self, u: &[T], v: &[T]) -> T {
        dot(u, &self.matrix.mul_vec(v))
    }

    pub fn norm(&self, v: &[T]) -> T {
        self.inner(v, v).max(T::zero()).sqrt()
    }

    /// `sqrt(vᵀ M⁻¹ v)`.
    pub fn dual_norm(&self, v: &[T]) -> T {
        crate::scalar::norm2(&self.chol.whiten(v))
    }

    /// `L⁻¹ P v` with `‖L⁻¹ P v‖₂ = ‖v‖_{M⁻¹}`.
    pub fn whiten(&self, v: &[T]) -> Vec<T> {
        self.chol.whiten(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    Identity,
    SpdMatrix,
    SemidefiniteFactored,
    RankOne,
}

impl CovarianceKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::SpdMatrix => "spd-matrix",
            Self::SemidefiniteFactored => "semidefinite-factored",
            Self::RankOne => "rank-one",
        }
    }
}

#[derive(Debug, Clone)]
enum Factor<T> {
    Identity,
    Cholesky,
    /// Explicit (possibly rectangular) factor `U` with `Σ = UᵀU`.
    Rows(CsrMatrix<T>),
}

/// The matrix `Σ` defining `‖v‖_Σ² = vᵀΣv`, carried through a factorization `Σ = UᵀU`.
#[derive(Debug, Clone)]
pub struct CovarianceSpec<T> {
    kind: CovarianceKind,
    dim: usize,
    sigma: Option<SpdMatrix<T>>,
    factor: Factor<T>,
    vector: Option<Vec<T>>,
    label: String,
}

impl<T: Scalar> CovarianceSpec<T> {
    /// `Σ = I`, the Euclidean norm.
    pub fn identity(n: usize) -> Self {
        Self {
            kind: CovarianceKind::Identity,
            dim: n,
            sigma: None,
            factor: Factor::Identity,
            vector: None,
            label: "identity".into(),
        }
    }

    /// Invertible `Σ` given as a sparse SPD matrix (e.g. a Riesz map).
    pub fn spd(sigma: SpdMatrix<T>, label: impl Into<String>) -> Self {
        Self {
            kind: CovarianceKind::SpdMatrix,
            dim: sigma.dim(),
            sigma: Some(sigma),
            factor: Factor::Cholesky,
            vector: None,
            label: label.into(),
        }
    }

    /// `Σ = Lᵀ R_W L` for an extractor `L` (`m × N`) and an SPD weight `R_W` (`m × m`).
    ///
    /// The factor is `U = Cᵀ P L` where `P R_W Pᵀ = C Cᵀ`; `Σ` itself is never assembled.
    pub fn factored(extractor: &CsrMatrix<T>, weight: &SpdMatrix<T>, label: impl Into<String>) -> Result<Self> {
        let m = extractor.nrows();
        check_len("covariance weight dimension", m, weight.dim())?;
        let n = extractor.ncols();
        let lt = extractor.transpose();
        let mut trip = Vec::new();
        let mut col = vec![T::zero(); m];
        for j in 0..n {
            let (rows, vals) = lt.row(j);
            if rows.is_empty() {
                continue;
            }
            col.iter_mut().for_each(|v| *v = T::zero());
            for (&r, &v) in rows.iter().zip(vals) {
                col[r] = v;
            }
            for (k, u) in weight.cholesky().factor_mul(&col).into_iter().enumerate() {
                if u != T::zero() {
                    trip.push((k, j, u));
                }
            }
        }
        Ok(Self {
            kind: CovarianceKind::SemidefiniteFactored,
            dim: n,
            sigma: None,
            factor: Factor::Rows(CsrMatrix::from_triplets(m, n, &trip)),
            vector: None,
            label: label.into(),
        })
    }

    /// `Σ = l lᵀ` for a scalar quantity of interest `s = lᵀu`.
    pub fn rank_one(l: Vec<T>, label: impl Into<String>) -> Self {
        let n = l.len();
        let trip: Vec<_> = l
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != T::zero())
            .map(|(j, &v)| (0, j, v))
            .collect();
        Self {
            kind: CovarianceKind::RankOne,
            dim: n,
            sigma: None,
            factor: Factor::Rows(CsrMatrix::from_triplets(1, n, &trip)),
            vector: Some(l),
            label: label.into(),
        }
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn vector(&self) -> Option<&[T]> {
        self.vector.as_deref()
    }

    pub fn sigma(&self) -> Option<&SpdMatrix<T>> {
        self.sigma.as_ref()
    }

    pub fn is_invertible(&self) -> bool {
        matches!(self.kind, CovarianceKind::Identity | CovarianceKind::SpdMatrix)
    }

    /// Number of rows of the factor `U`.
    pub fn factor_rows(&self) -> usize {
        match &self.factor {
            Factor::Identity | Factor::Cholesky => self.dim,
            Factor::Rows(u) => u.nrows(),
        }
    }

    /// `U v`.
    pub fn factor_mul(&self, v: &[T]) -> Vec<T> {
        match &self.factor {
            Factor::Identity => v.to_vec(),
            Factor::Cholesky => self.sigma.as_ref().unwrap().cholesky().factor_mul(v),
            Factor::Rows(u) => u.mul_vec(v),
        }
    }

    /// `Uᵀ z`.
    pub fn factor_tr_mul(&self, z: &[T]) -> Vec<T> {
        match &self.factor {
            Factor::Identity => z.to_vec(),
            Factor::Cholesky => self.sigma.as_ref().unwrap().cholesky().factor_tr_mul(z),
            Factor::Rows(u) => u.tr_mul_vec(z),
        }
    }

    /// `Σ v`, through the factor.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        match (&self.factor, &self.sigma) {
            (Factor::Identity, _) => v.to_vec(),
            (Factor::Cholesky, Some(s)) => s.apply(v),
            _ => self.factor_tr_mul(&self.factor_mul(v)),
        }
    }

    /// `‖v‖_Σ = ‖U v‖₂`.
    pub fn sigma_norm(&self, v: &[T]) -> T {
        assert_eq!(v.len(), self.dim, "vector length");
        crate::scalar::norm2(&self.factor_mul(v))
    }

    /// `‖v‖_{Σ⁻¹}`; only defined for invertible `Σ`.
    pub fn sigma_inverse_norm(&self, v: &[T]) -> Result<T> {
        check_len("sigma_inverse_norm vector", self.dim, v.len())?;
        match self.kind {
            CovarianceKind::Identity => Ok(crate::scalar::norm2(v)),
            CovarianceKind::SpdMatrix => Ok(self.sigma.as_ref().unwrap().dual_norm(v)),
            k => Err(Error::NotInvertible(k.name())),
        }
    }

    /// Whitening map `w(v)` with `‖w(v)‖₂ = ‖v‖_{Σ⁻¹}`.
    pub fn whiten(&self, v: &[T]) -> Result<Vec<T>> {
        match self.kind {
            CovarianceKind::Identity => Ok(v.to_vec()),
            CovarianceKind::SpdMatrix => Ok(self.sigma.as_ref().unwrap().whiten(v)),
            k => Err(Error::NotInvertible(k.name())),
        }
    }
}
