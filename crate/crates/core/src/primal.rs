//! Primal reduced basis: orthonormal spaces, Galerkin-reduced models, residual dual norms and the
//! weak greedy construction.

use serde::{Deserialize, Serialize};

use crate::covariance::{AffineSystem, CoefficientFn, Parameter, SampleSet, SpdMatrix};
use crate::error::{check_len, Error, Result};
use crate::linalg::{DMatrix, DenseLu, RCOND_THRESHOLD};
use crate::scalar::{axpy, dot, Scalar};

/// Reciprocal-condition threshold for reduced solves at precision `T`.
pub fn rcond_threshold<T: Scalar>() -> f64 {
    RCOND_THRESHOLD.max(100.0 * T::epsilon().as_f64())
}

/// Where a basis column came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ColumnSource {
    Snapshot { mu: Vec<f64> },
    DualVector { mu: Vec<f64>, index: usize },
    DualCombination { mu: Vec<f64>, lambda: Vec<f64> },
    PodMode { eigenvalue: f64 },
    Given,
}

/// How a space construction ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceStatus {
    Complete,
    MaxIterations,
    /// Fewer columns than requested because the data had lower numerical rank.
    Truncated { rank: usize },
}

/// Columns orthonormal in a named SPD inner product, with per-column provenance.
#[derive(Debug, Clone)]
pub struct ReducedSpace<T> {
    basis: DMatrix<T>,
    inner_product: String,
    sources: Vec<ColumnSource>,
    status: SpaceStatus,
}

impl<T: Scalar> ReducedSpace<T> {
    /// Wraps a basis assumed orthonormal in `inner_product`.
    pub fn from_parts(
        basis: DMatrix<T>,
        inner_product: impl Into<String>,
        sources: Vec<ColumnSource>,
        status: SpaceStatus,
    ) -> Result<Self> {
        if basis.ncols() == 0 {
            return Err(Error::Empty("reduced basis"));
        }
        if basis.ncols() > basis.nrows() {
            return Err(Error::Domain(format!(
                "{} basis columns exceed the ambient dimension {}",
                basis.ncols(),
                basis.nrows()
            )));
        }
        check_len("column sources", basis.ncols(), sources.len())?;
        Ok(Self {
            basis,
            inner_product: inner_product.into(),
            sources,
            status,
        })
    }

    /// Orthonormalizes `columns` in `riesz`, skipping numerically dependent ones.
    pub fn orthonormalize(columns: &DMatrix<T>, riesz: &SpdMatrix<T>, label: &str) -> Result<Self> {
        let mut b = Orthonormalizer::new(riesz, label);
        for c in columns.columns() {
            b.push(c, ColumnSource::Given);
        }
        b.into_space()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn inner_product(&self) -> &str {
        &self.inner_product
    }

    pub fn sources(&self) -> &[ColumnSource] {
        &self.sources
    }

    pub fn status(&self) -> SpaceStatus {
        self.status
    }

    pub fn set_status(&mut self, status: SpaceStatus) {
        self.status = status;
    }

    /// The span of the first `n` columns.
    pub fn leading(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.dim() {
            return Err(Error::Domain(format!("cannot take {n} of {} columns", self.dim())));
        }
        Ok(Self {
            basis: self.basis.leading_columns(n),
            inner_product: self.inner_product.clone(),
            sources: self.sources[..n].to_vec(),
            status: self.status,
        })
    }

    /// `V c`.
    pub fn lift(&self, coeffs: &[T]) -> Vec<T> {
        self.basis.mul_vec(coeffs)
    }

    /// Largest entry of `|VᵀRV − I|`.
    pub fn orthonormality_defect(&self, riesz: &SpdMatrix<T>) -> T {
        let mut worst = T::zero();
        let rv: Vec<Vec<T>> = self.basis.columns().map(|c| riesz.apply(c)).collect();
        for i in 0..self.dim() {
            for (j, rvj) in rv.iter().enumerate() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot(self.basis.col(i), rvj) - target).abs());
            }
        }
        worst
    }
}

/// Incremental modified Gram–Schmidt (with one reorthogonalization pass) in an SPD inner product.
#[derive(Debug, Clone)]
pub struct Orthonormalizer<'a, T> {
    riesz: &'a SpdMatrix<T>,
    label: String,
    basis: DMatrix<T>,
    riesz_basis: Vec<Vec<T>>,
    sources: Vec<ColumnSource>,
}

/// Relative norm below which a projected candidate counts as dependent.
pub const DEPENDENCE_TOL: f64 = 1e-10;

impl<'a, T: Scalar> Orthonormalizer<'a, T> {
    pub fn new(riesz: &'a SpdMatrix<T>, label: &str) -> Self {
        Self {
            riesz,
            label: label.to_string(),
            basis: DMatrix::zeros(riesz.dim(), 0),
            riesz_basis: Vec::new(),
            sources: Vec::new(),
        }
    }

    /// Starts from an existing space (assumed orthonormal in `riesz`).
    pub fn from_space(riesz: &'a SpdMatrix<T>, space: &ReducedSpace<T>) -> Self {
        Self {
            riesz,
            label: space.inner_product.clone(),
            basis: space.basis.clone(),
            riesz_basis: space.basis.columns().map(|c| riesz.apply(c)).collect(),
            sources: space.sources.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    /// Appends the normalized orthogonal complement of `v`; returns `false` (and leaves the basis
    /// untouched) if `v` is numerically in the current span.
    pub fn push(&mut self, v: &[T], source: ColumnSource) -> bool {
        assert_eq!(v.len(), self.basis.nrows(), "candidate length");
        let mut w = v.to_vec();
        let before = self.riesz.norm(&w);
        if !(before > T::zero()) || !before.is_finite() {
            return false;
        }
        for _ in 0..2 {
            for (j, rb) in self.riesz_basis.iter().enumerate() {
                let c = dot(&w, rb);
                axpy(-c, self.basis.col(j), &mut w);
            }
        }
        let rw = self.riesz.apply(&w);
        let after = dot(&w, &rw).max(T::zero()).sqrt();
        if after < T::of(DEPENDENCE_TOL) * before {
            return false;
        }
        let s = T::one() / after;
        w.iter_mut().for_each(|x| *x *= s);
        self.basis.push_column(&w);
        self.riesz_basis.push(rw.into_iter().map(|x| x * s).collect());
        self.sources.push(source);
        true
    }

    pub fn into_space(self) -> Result<ReducedSpace<T>> {
        ReducedSpace::from_parts(self.basis, self.label, self.sources, SpaceStatus::Complete)
    }
}

/// Whitened blocks for exact residual dual norms: with `R = LLᵀ` (up to ordering),
/// `‖r‖_{R⁻¹} = ‖Σ ζ_q L⁻¹f_q − Σ α_q L⁻¹A_qV a‖₂`.
#[derive(Debug, Clone)]
struct WhitenedBlocks<T> {
    rhs: Vec<Vec<T>>,
    ops: Vec<DMatrix<T>>,
}

impl<T: Scalar> WhitenedBlocks<T> {
    fn new(sys: &AffineSystem<T>, riesz: &SpdMatrix<T>) -> Self {
        Self {
            rhs: sys.rhs_terms().iter().map(|f| riesz.whiten(f)).collect(),
            ops: vec![DMatrix::zeros(sys.dim(), 0); sys.operator_terms().len()],
        }
    }

    fn extend(&mut self, sys: &AffineSystem<T>, riesz: &SpdMatrix<T>, v: &[T]) {
        for (blk, a) in self.ops.iter_mut().zip(sys.operator_terms()) {
            blk.push_column(&riesz.whiten(&a.mul_vec(v)));
        }
    }

    fn norm(&self, alpha: &[T], zeta: &[T], coeffs: &[T]) -> T {
        let mut r = vec![T::zero(); self.rhs.first().map_or(0, Vec::len)];
        for (f, &z) in self.rhs.iter().zip(zeta) {
            axpy(z, f, &mut r);
        }
        for (blk, &a) in self.ops.iter().zip(alpha) {
            for (j, &c) in coeffs.iter().enumerate() {
                axpy(-a * c, blk.col(j), &mut r);
            }
        }
        dot(&r, &r).sqrt()
    }
}

/// Parameter-independent quantities for `‖r(μ)‖_{R⁻¹}` at cost independent of `N`.
#[derive(Debug, Clone)]
pub struct ResidualGram<T> {
    ff: DMatrix<T>,
    fa: Vec<Vec<Vec<T>>>,
    aa: Vec<Vec<DMatrix<T>>>,
}

impl<T: Scalar> ResidualGram<T> {
    pub fn new(sys: &AffineSystem<T>, space: &ReducedSpace<T>, riesz: &SpdMatrix<T>) -> Self {
        let mut wb = WhitenedBlocks::new(sys, riesz);
        for v in space.basis.columns() {
            wb.extend(sys, riesz, v);
        }
        let qf = wb.rhs.len();
        let qa = wb.ops.len();
        let ff = DMatrix::from_fn(qf, qf, |i, j| dot(&wb.rhs[i], &wb.rhs[j]));
        let fa = (0..qf)
            .map(|p| (0..qa).map(|q| wb.ops[q].tr_mul_vec(&wb.rhs[p])).collect())
            .collect();
        let aa = (0..qa)
            .map(|p| (0..qa).map(|q| wb.ops[p].tr_matmul(&wb.ops[q])).collect())
            .collect();
        Self { ff, fa, aa }
    }

    pub fn dual_norm(&self, alpha: &[T], zeta: &[T], coeffs: &[T]) -> T {
        let mut s = T::zero();
        for p in 0..zeta.len() {
            for q in 0..zeta.len() {
                s += zeta[p] * zeta[q] * self.ff[(p, q)];
            }
        }
        for (p, &z) in zeta.iter().enumerate() {
            for (q, &a) in alpha.iter().enumerate() {
                s -= T::of(2.0) * z * a * dot(&self.fa[p][q], coeffs);
            }
        }
        for (p, &ap) in alpha.iter().enumerate() {
            for (q, &aq) in alpha.iter().enumerate() {
                s += ap * aq * dot(coeffs, &self.aa[p][q].mul_vec(coeffs));
            }
        }
        s.max(T::zero()).sqrt()
    }
}

/// Galerkin projection of an affine system onto a reduced space.
#[derive(Debug, Clone)]
pub struct ReducedModel<T> {
    space: ReducedSpace<T>,
    operator_terms: Vec<DMatrix<T>>,
    rhs_terms: Vec<Vec<T>>,
    operator_coeffs: Vec<CoefficientFn>,
    rhs_coeffs: Vec<CoefficientFn>,
    residual_gram: Option<ResidualGram<T>>,
}

/// `(WᵀA_qV)_q` for arbitrary test and trial bases.
pub fn project_operator_terms<T: Scalar>(sys: &AffineSystem<T>, test: &DMatrix<T>, trial: &DMatrix<T>) -> Vec<DMatrix<T>> {
    sys.operator_terms()
        .iter()
        .map(|a| {
            let mut av = DMatrix::zeros(sys.dim(), 0);
            for c in trial.columns() {
                av.push_column(&a.mul_vec(c));
            }
            test.tr_matmul(&av)
        })
        .collect()
}

/// Projects all affine terms onto `space`.
pub fn reduce<T: Scalar>(sys: &AffineSystem<T>, space: &ReducedSpace<T>) -> Result<ReducedModel<T>> {
    check_len("reduced space ambient dimension", sys.dim(), space.ambient_dim())?;
    let v = space.basis();
    Ok(ReducedModel {
        operator_terms: project_operator_terms(sys, v, v),
        rhs_terms: sys.rhs_terms().iter().map(|f| v.tr_mul_vec(f)).collect(),
        operator_coeffs: sys.operator_coeff_fns().to_vec(),
        rhs_coeffs: sys.rhs_coeff_fns().to_vec(),
        space: space.clone(),
        residual_gram: None,
    })
}

/// Galerkin solution in the reduced space.
#[derive(Debug, Clone)]
pub struct ReducedSolution<T> {
    pub coeffs: Vec<T>,
    pub lifted: Vec<T>,
}

impl<T: Scalar> ReducedModel<T> {
    /// Also preassembles the residual Gram blocks for `residual_dual_norm_fast`.
    pub fn with_residual_gram(mut self, sys: &AffineSystem<T>, riesz: &SpdMatrix<T>) -> Self {
        self.residual_gram = Some(ResidualGram::new(sys, &self.space, riesz));
        self
    }

    pub fn space(&self) -> &ReducedSpace<T> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn operator_terms(&self) -> &[DMatrix<T>] {
        &self.operator_terms
    }

    pub fn rhs_terms(&self) -> &[Vec<T>] {
        &self.rhs_terms
    }

    pub fn operator_coefficients(&self, mu: &Parameter<T>) -> Vec<T> {
        self.operator_coeffs.iter().map(|c| c.eval(mu)).collect()
    }

    pub fn rhs_coefficients(&self, mu: &Parameter<T>) -> Vec<T> {
        self.rhs_coeffs.iter().map(|c| c.eval(mu)).collect()
    }

    pub fn assemble_operator(&self, mu: &Parameter<T>) -> DMatrix<T> {
        combine(&self.operator_terms, &self.operator_coefficients(mu))
    }

    pub fn assemble_rhs(&self, mu: &Parameter<T>) -> Vec<T> {
        let mut b = vec![T::zero(); self.dim()];
        for (f, z) in self.rhs_terms.iter().zip(self.rhs_coefficients(mu)) {
            axpy(z, f, &mut b);
        }
        b
    }

    /// Reduced coefficients only.
    pub fn solve_coeffs(&self, mu: &Parameter<T>) -> Result<Vec<T>> {
        let lu = DenseLu::factor_checked(self.assemble_operator(mu), rcond_threshold::<T>())?;
        Ok(lu.solve(&self.assemble_rhs(mu)))
    }

    /// `‖r(μ)‖_{R⁻¹}` from the preassembled Gram blocks.
    pub fn residual_dual_norm_fast(&self, mu: &Parameter<T>, coeffs: &[T]) -> Result<T> {
        let g = self
            .residual_gram
            .as_ref()
            .ok_or_else(|| Error::Config("reduced model has no residual Gram blocks".into()))?;
        check_len("reduced coefficients", self.dim(), coeffs.len())?;
        Ok(g.dual_norm(&self.operator_coefficients(mu), &self.rhs_coefficients(mu), coeffs))
    }
}

/// `Σ_q c_q M_q` for dense terms.
pub fn combine<T: Scalar>(terms: &[DMatrix<T>], coeffs: &[T]) -> DMatrix<T> {
    let mut m = DMatrix::zeros(terms[0].nrows(), terms[0].ncols());
    for (t, &c) in terms.iter().zip(coeffs) {
        m.scale_add(c, t);
    }
    m
}

/// Solves the reduced system; fails with `Error::Singular` if its reciprocal condition number is
/// below [`rcond_threshold`].
pub fn solve_reduced<T: Scalar>(rm: &ReducedModel<T>, mu: &Parameter<T>) -> Result<ReducedSolution<T>> {
    let coeffs = rm.solve_coeffs(mu)?;
    let lifted = rm.space.lift(&coeffs);
    Ok(ReducedSolution { coeffs, lifted })
}

/// `r(μ) = f(μ) − A(μ) ũ`.
pub fn residual_vector<T: Scalar>(sys: &AffineSystem<T>, mu: &Parameter<T>, utilde: &[T]) -> Result<Vec<T>> {
    check_len("residual argument", sys.dim(), utilde.len())?;
    let mut r = sys.assemble_rhs(mu)?;
    axpy(-T::one(), &sys.apply_operator(mu, utilde), &mut r);
    Ok(r)
}

/// `sqrt(r(μ)ᵀ R⁻¹ r(μ))`.
pub fn residual_dual_norm<T: Scalar>(
    sys: &AffineSystem<T>,
    mu: &Parameter<T>,
    utilde: &[T],
    riesz: &SpdMatrix<T>,
) -> Result<T> {
    check_len("riesz dimension", sys.dim(), riesz.dim())?;
    Ok(riesz.dual_norm(&residual_vector(sys, mu, utilde)?))
}

/// One step of a greedy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub iteration: usize,
    pub mu: Vec<f64>,
    /// Selected dual index (vector greedy) or combination weights (goal-oriented greedy).
    pub index: Option<usize>,
    pub lambda: Option<Vec<f64>>,
    /// Stopping quantity evaluated before this enrichment.
    pub criterion: f64,
    pub dim_after: usize,
}

/// Output of [`weak_greedy_primal`].
#[derive(Debug, Clone)]
pub struct PrimalGreedy<T> {
    pub space: ReducedSpace<T>,
    pub trace: Vec<GreedyStep>,
}

impl<T: Scalar> PrimalGreedy<T> {
    /// First `n` columns as the primal space and the whole run as the reference space.
    pub fn reference_split(&self, n: usize) -> Result<(ReducedSpace<T>, ReducedSpace<T>)> {
        Ok((self.space.leading(n)?, self.space.clone()))
    }
}

fn argmax_first<T: Scalar>(values: &[T], skip: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if skip[i] || v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Weak greedy on the residual dual norm: at each step the training parameter with the largest
/// `‖r(μ)‖_{R⁻¹}` contributes its full solution to the basis. A singular reduced system counts as an
/// infinite residual; a snapshot that is numerically dependent is skipped in favour of the next
/// largest residual.
pub fn weak_greedy_primal<T: Scalar>(
    sys: &AffineSystem<T>,
    riesz: &SpdMatrix<T>,
    train: &SampleSet<T>,
    n_target: usize,
) -> Result<PrimalGreedy<T>> {
    if n_target == 0 {
        return Err(Error::Domain("primal greedy needs n_target >= 1".into()));
    }
    check_len("riesz dimension", sys.dim(), riesz.dim())?;
    let mut builder = Orthonormalizer::new(riesz, "riesz");
    let mut blocks = WhitenedBlocks::new(sys, riesz);
    let mut reduced_ops: Vec<DMatrix<T>> = vec![DMatrix::zeros(0, 0); sys.operator_terms().len()];
    let mut reduced_rhs: Vec<Vec<T>> = vec![Vec::new(); sys.rhs_terms().len()];
    let mut trace = Vec::new();
    let mut used = vec![false; train.len()];
    let mut status = SpaceStatus::Complete;

    while builder.dim() < n_target {
        let norms: Vec<T> = train
            .iter()
            .map(|mu| {
                let alpha = sys.operator_coefficients(mu);
                let zeta = sys.rhs_coefficients(mu);
                if builder.dim() == 0 {
                    return blocks.norm(&alpha, &zeta, &[]);
                }
                let mut b = vec![T::zero(); builder.dim()];
                for (f, &z) in reduced_rhs.iter().zip(&zeta) {
                    axpy(z, f, &mut b);
                }
                match DenseLu::factor_checked(combine(&reduced_ops, &alpha), rcond_threshold::<T>()) {
                    Ok(lu) => blocks.norm(&alpha, &zeta, &lu.solve(&b)),
                    Err(_) => T::infinity(),
                }
            })
            .collect();
        let mut skip = used.clone();
        let mut added = false;
        while let Some(k) = argmax_first(&norms, &skip) {
            skip[k] = true;
            let mu = &train.points[k];
            let u = sys.solve(mu)?;
            if builder.push(&u, ColumnSource::Snapshot { mu: mu.to_f64() }) {
                used[k] = true;
                let v = builder.basis().col(builder.dim() - 1).to_vec();
                blocks.extend(sys, riesz, &v);
                let basis = builder.basis();
                reduced_ops = project_operator_terms(sys, basis, basis);
                for (rf, f) in reduced_rhs.iter_mut().zip(sys.rhs_terms()) {
                    *rf = basis.tr_mul_vec(f);
                }
                trace.push(GreedyStep {
                    iteration: trace.len() + 1,
                    mu: mu.to_f64(),
                    index: None,
                    lambda: None,
                    criterion: norms[k].as_f64(),
                    dim_after: builder.dim(),
                });
                added = true;
                break;
            }
        }
        if !added {
            status = SpaceStatus::Truncated { rank: builder.dim() };
            break;
        }
    }
    let mut space = builder.into_space()?;
    space.set_status(status);
    Ok(PrimalGreedy { space, trace })
}
