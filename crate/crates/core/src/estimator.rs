//! Randomized error estimators: the exact sketch estimator via random dual problems and the fast
//! estimator with Galerkin-projected duals.

use serde::{Deserialize, Serialize};

use crate::covariance::{AffineSystem, CoefficientFn, CovarianceSpec, Parameter, SampleSet};
use crate::error::{check_len, Error, Result};
use crate::linalg::{DMatrix, DenseLu};
use crate::primal::{combine, project_operator_terms, rcond_threshold, ReducedSpace};
use crate::scalar::{axpy, dot, Scalar};
use crate::sketch::{sketch_norm, Sketch};

/// Full dual solutions `Y(μ) = [Y_1 … Y_K]` with `A(μ)ᵀ Y_i = Z_i`.
#[derive(Debug, Clone)]
pub struct DualSnapshotMatrix<T> {
    pub mu: Parameter<T>,
    pub columns: DMatrix<T>,
}

/// One factorization of `A(μ)`, reused for all `K` transposed solves.
pub fn solve_random_duals<T: Scalar>(
    sys: &AffineSystem<T>,
    mu: &Parameter<T>,
    sk: &Sketch<T>,
) -> Result<DualSnapshotMatrix<T>> {
    check_len("sketch dimension", sys.dim(), sk.dim())?;
    let lu = sys.factor(mu)?;
    let mut columns = DMatrix::zeros(sys.dim(), 0);
    for z in sk.vectors().columns() {
        columns.push_column(&lu.solve_transpose(z));
    }
    Ok(DualSnapshotMatrix { mu: mu.clone(), columns })
}

/// `Δ = sqrt((1/K) Σ_i (Z_iᵀ(u − ũ))²)`.
pub fn exact_estimator_from_truth<T: Scalar>(sk: &Sketch<T>, u: &[T], utilde: &[T]) -> Result<T> {
    check_len("estimator arguments", u.len(), utilde.len())?;
    let e: Vec<T> = u.iter().zip(utilde).map(|(&a, &b)| a - b).collect();
    sketch_norm(sk, &e)
}

/// `Δ = sqrt((1/K) Σ_i (Y_iᵀ r)²)`.
pub fn exact_estimator_from_duals<T: Scalar>(duals: &DualSnapshotMatrix<T>, r: &[T]) -> Result<T> {
    check_len("residual", duals.columns.nrows(), r.len())?;
    Ok(Sketch::rms(&duals.columns.tr_mul_vec(r)))
}

/// `max(a/b, b/a)`, with `+∞` when exactly one of them vanishes and `1` when both do.
pub fn effectivity_ratio<T: Scalar>(a: T, b: T) -> T {
    match (a == T::zero(), b == T::zero()) {
        (true, true) => T::one(),
        (true, false) | (false, true) => T::infinity(),
        _ => (a / b).max(b / a),
    }
}

/// `α = max_μ max(Δ/Δ̃, Δ̃/Δ)` over paired samples (one entry per probe point).
pub fn effectivity_alpha<T: Scalar>(exact: &[T], fast: &[T]) -> Result<T> {
    check_len("effectivity samples", exact.len(), fast.len())?;
    if exact.is_empty() {
        return Err(Error::Empty("probe set"));
    }
    Ok(exact
        .iter()
        .zip(fast)
        .map(|(&a, &b)| effectivity_ratio(a, b))
        .fold(T::one(), T::max))
}

/// Galerkin projection of the random duals onto a fixed space `W`:
/// `(WᵀA(μ)W)ᵀ b_i = WᵀZ_i`, `Ỹ_i = W b_i`.
#[derive(Debug, Clone)]
pub struct DualProjector<T> {
    space: ReducedSpace<T>,
    operator_terms: Vec<DMatrix<T>>,
    operator_coeffs: Vec<CoefficientFn>,
    /// `K × n` with rows `Z_iᵀ W`.
    sketch_projections: DMatrix<T>,
}

impl<T: Scalar> DualProjector<T> {
    pub fn new(sys: &AffineSystem<T>, dual: &ReducedSpace<T>, sk: &Sketch<T>) -> Result<Self> {
        check_len("dual space ambient dimension", sys.dim(), dual.ambient_dim())?;
        check_len("sketch dimension", sys.dim(), sk.dim())?;
        let w = dual.basis();
        Ok(Self {
            operator_terms: project_operator_terms(sys, w, w),
            operator_coeffs: sys.operator_coeff_fns().to_vec(),
            sketch_projections: sk.vectors().tr_matmul(w),
            space: dual.clone(),
        })
    }

    pub fn space(&self) -> &ReducedSpace<T> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn k(&self) -> usize {
        self.sketch_projections.nrows()
    }

    pub fn sketch_projections(&self) -> &DMatrix<T> {
        &self.sketch_projections
    }

    pub fn operator_terms(&self) -> &[DMatrix<T>] {
        &self.operator_terms
    }

    pub fn operator_coefficients(&self, mu: &Parameter<T>) -> Vec<T> {
        self.operator_coeffs.iter().map(|c| c.eval(mu)).collect()
    }

    pub fn factor(&self, mu: &Parameter<T>) -> Result<DenseLu<T>> {
        DenseLu::factor_checked(
            combine(&self.operator_terms, &self.operator_coefficients(mu)),
            rcond_threshold::<T>(),
        )
    }

    /// Reduced coefficients `b_i`, as the columns of an `n × K` matrix.
    pub fn project_coeffs(&self, mu: &Parameter<T>) -> Result<DMatrix<T>> {
        let lu = self.factor(mu)?;
        let mut b = DMatrix::zeros(self.dim(), 0);
        for i in 0..self.k() {
            b.push_column(&lu.solve_transpose(&self.sketch_projections.row(i)));
        }
        Ok(b)
    }

    /// Lifted projected duals `Ỹ_i(μ)`.
    pub fn project_duals(&self, mu: &Parameter<T>) -> Result<DualSnapshotMatrix<T>> {
        let b = self.project_coeffs(mu)?;
        Ok(DualSnapshotMatrix {
            mu: mu.clone(),
            columns: self.space.basis().matmul(&b),
        })
    }

    /// `(A(μ)ᵀỸ_i − Z_i)_i`.
    pub fn dual_residuals(&self, sys: &AffineSystem<T>, sk: &Sketch<T>, mu: &Parameter<T>) -> Result<Vec<Vec<T>>> {
        let y = self.project_duals(mu)?;
        Ok(y.columns
            .columns()
            .zip(sk.vectors().columns())
            .map(|(yi, zi)| {
                let mut r = sys.apply_operator_transpose(mu, yi);
                axpy(-T::one(), zi, &mut r);
                r
            })
            .collect())
    }
}

/// Bookkeeping for the multiplicative certificate `[(αw)⁻¹, αw]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCertificate {
    pub w: f64,
    pub delta: f64,
    pub alpha: Option<f64>,
}

impl EstimatorCertificate {
    /// `[(αw)⁻¹, αw]`, or `[w⁻¹, w]` without an α estimate.
    pub fn interval(&self) -> (f64, f64) {
        let c = self.w * self.alpha.unwrap_or(1.0);
        (1.0 / c, c)
    }
}

/// Online form of the fast estimator. After `build`, queries need only reduced quantities and the
/// primal coefficient vector.
#[derive(Debug, Clone)]
pub struct OnlineEstimator<T> {
    projector: DualProjector<T>,
    /// `WᵀA_qV`.
    cross_terms: Vec<DMatrix<T>>,
    /// `Wᵀf_q`.
    rhs_terms: Vec<Vec<T>>,
    rhs_coeffs: Vec<CoefficientFn>,
    n_primal: usize,
    certificate: Option<EstimatorCertificate>,
}

impl<T: Scalar> OnlineEstimator<T> {
    pub fn build(
        sys: &AffineSystem<T>,
        primal: &ReducedSpace<T>,
        dual: &ReducedSpace<T>,
        sk: &Sketch<T>,
    ) -> Result<Self> {
        check_len("primal space ambient dimension", sys.dim(), primal.ambient_dim())?;
        let projector = DualProjector::new(sys, dual, sk)?;
        let w = dual.basis();
        Ok(Self {
            cross_terms: project_operator_terms(sys, w, primal.basis()),
            rhs_terms: sys.rhs_terms().iter().map(|f| w.tr_mul_vec(f)).collect(),
            rhs_coeffs: sys.rhs_coeff_fns().to_vec(),
            n_primal: primal.dim(),
            certificate: None,
            projector,
        })
    }

    pub fn with_certificate(mut self, cert: EstimatorCertificate) -> Self {
        self.certificate = Some(cert);
        self
    }

    pub fn certificate(&self) -> Option<EstimatorCertificate> {
        self.certificate
    }

    pub fn projector(&self) -> &DualProjector<T> {
        &self.projector
    }

    pub fn dual_space(&self) -> &ReducedSpace<T> {
        self.projector.space()
    }

    pub fn n_dual(&self) -> usize {
        self.projector.dim()
    }

    pub fn n_primal(&self) -> usize {
        self.n_primal
    }

    pub fn k(&self) -> usize {
        self.projector.k()
    }

    pub fn cross_terms(&self) -> &[DMatrix<T>] {
        &self.cross_terms
    }

    pub fn rhs_terms(&self) -> &[Vec<T>] {
        &self.rhs_terms
    }

    /// `Wᵀ r(μ) = Σ ζ_q Wᵀf_q − Σ α_q (WᵀA_qV) a`.
    fn projected_residual(&self, mu: &Parameter<T>, alpha: &[T], primal_coeffs: &[T]) -> Result<Vec<T>> {
        check_len("primal coefficients", self.n_primal, primal_coeffs.len())?;
        let mut rhs = vec![T::zero(); self.n_dual()];
        for (f, c) in self.rhs_terms.iter().zip(&self.rhs_coeffs) {
            axpy(c.eval(mu), f, &mut rhs);
        }
        for (m, &a) in self.cross_terms.iter().zip(alpha) {
            axpy(-a, &m.mul_vec(primal_coeffs), &mut rhs);
        }
        Ok(rhs)
    }

    /// `Δ̃(μ)` from a single reduced solve `(WᵀA(μ)W) c = Wᵀr(μ)`: `Δ̃ = rms_i((Z_iᵀW) c)`.
    pub fn fast_estimator(&self, mu: &Parameter<T>, primal_coeffs: &[T]) -> Result<T> {
        let alpha = self.projector.operator_coefficients(mu);
        let rhs = self.projected_residual(mu, &alpha, primal_coeffs)?;
        let lu = self.projector.factor(mu)?;
        let c = lu.solve(&rhs);
        Ok(Sketch::rms(&self.projector.sketch_projections.mul_vec(&c)))
    }

    /// `Δ̃(μ)` through the `K` projected duals: `Δ̃ = rms_i(Ỹ_iᵀ r(μ))`.
    pub fn fast_estimator_k_solves(&self, mu: &Parameter<T>, primal_coeffs: &[T]) -> Result<T> {
        let alpha = self.projector.operator_coefficients(mu);
        let rhs = self.projected_residual(mu, &alpha, primal_coeffs)?;
        let b = self.projector.project_coeffs(mu)?;
        let values: Vec<T> = b.columns().map(|bi| dot(bi, &rhs)).collect();
        Ok(Sketch::rms(&values))
    }
}

/// `max_{μ ∈ probe, i} ‖A(μ)ᵀỸ_i(μ) − Z_i‖_{Σ⁻¹}`.
pub fn epsilon_dual_residual<T: Scalar>(
    sys: &AffineSystem<T>,
    dual: &ReducedSpace<T>,
    sk: &Sketch<T>,
    cov: &CovarianceSpec<T>,
    probe: &SampleSet<T>,
) -> Result<T> {
    if !cov.is_invertible() {
        return Err(Error::NotInvertible("covariance"));
    }
    let proj = DualProjector::new(sys, dual, sk)?;
    let mut eps = T::zero();
    for mu in probe.iter() {
        for r in proj.dual_residuals(sys, sk, mu)? {
            eps = eps.max(cov.sigma_inverse_norm(&r)?);
        }
    }
    Ok(eps)
}
