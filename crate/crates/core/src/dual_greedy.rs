//! Construction of the dual reduced space: residual-driven vector greedy, goal-oriented greedy with
//! eigenvector combination weights, and a POD baseline.

use serde::{Deserialize, Serialize};

use crate::covariance::{AffineSystem, CovarianceSpec, SampleSet, SpdMatrix};
use crate::error::{check_len, Error, Result};
use crate::estimator::{effectivity_ratio, solve_random_duals, DualProjector, DualSnapshotMatrix, OnlineEstimator};
use crate::linalg::{symmetric_eigen, DMatrix};
use crate::primal::{ColumnSource, GreedyStep, Orthonormalizer, ReducedModel, ReducedSpace, SpaceStatus};
use crate::scalar::{dot, Scalar};
use crate::sketch::Sketch;

/// Element of rank `⌈q·n⌉` (1-based) of the ascending sort; `q = 1` gives the maximum.
/// NaN entries sort last.
pub fn quantile<T: Scalar>(values: &[T], q: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("quantile order must lie in (0,1], got {q}")));
    }
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort_by(|a, b| a.as_f64().total_cmp(&b.as_f64()));
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Norm used to measure dual residuals `A(μ)ᵀỸ_i − Z_i` in the vector greedy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualNorm {
    /// `Σ⁻¹` if the covariance is invertible, `R⁻¹` otherwise.
    Auto,
    SigmaInverse,
    RieszInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub tol: f64,
    pub q: f64,
    pub max_iterations: usize,
    pub norm: DualNorm,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            tol: 2.0,
            q: 1.0,
            max_iterations: 100,
            norm: DualNorm::Auto,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!("q must lie in (0,1], got {}", self.q)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Unit vector of combination weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationWeight<T>(pub Vec<T>);

/// Leading eigenvector of a symmetric positive semidefinite matrix, signed so that its
/// largest-magnitude entry is positive.
pub fn leading_eigenvector<T: Scalar>(m: &DMatrix<T>) -> Result<CombinationWeight<T>> {
    let k = m.nrows();
    if k == 0 || m.ncols() != k {
        return Err(Error::Domain("leading eigenvector needs a nonempty square matrix".into()));
    }
    let scale = m.max_abs().max(T::min_positive_value());
    let slack = T::of(1e-10) * scale;
    for i in 0..k {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > slack {
                return Err(Error::Domain(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    let (vals, vecs) = symmetric_eigen(m);
    if vals[k - 1] < -slack {
        return Err(Error::Domain(format!("matrix is not positive semidefinite ({})", vals[k - 1])));
    }
    if !(vals[0] > T::zero()) {
        return Err(Error::Degenerate("leading eigenvalue vanishes".into()));
    }
    let mut v = vecs.col(0).to_vec();
    let norm = dot(&v, &v).sqrt();
    let mut big = 0;
    for i in 1..k {
        if v[i].abs() > v[big].abs() {
            big = i;
        }
    }
    let s = if v[big] < T::zero() { -T::one() } else { T::one() } / norm;
    v.iter_mut().for_each(|x| *x *= s);
    Ok(CombinationWeight(v))
}

/// Output of the dual space constructions.
#[derive(Debug, Clone)]
pub struct DualGreedy<T> {
    pub space: ReducedSpace<T>,
    pub trace: Vec<GreedyStep>,
    /// Stopping quantity for the returned space.
    pub final_criterion: f64,
    pub converged: bool,
    /// Training points dropped because a reduced primal or reference solve was singular there.
    pub excluded_train: usize,
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

type Whiten<'a, T> = Box<dyn Fn(&[T]) -> Result<Vec<T>> + 'a>;

/// Whitened blocks `C_q = U⁻ᵀ A_qᵀ W` and `Ẑ = U⁻ᵀ Z` giving
/// `‖A(μ)ᵀW b − Z_i‖² = ‖Σ_q α_q C_q b − Ẑ_i‖²` from small Gram matrices.
struct DualResidualGram<'a, T> {
    whiten: Whiten<'a, T>,
    c: Vec<DMatrix<T>>,
    zhat: DMatrix<T>,
    gram: Vec<Vec<DMatrix<T>>>,
    cross: Vec<DMatrix<T>>,
    znorm2: Vec<T>,
}

impl<'a, T: Scalar> DualResidualGram<'a, T> {
    fn new(
        sys: &AffineSystem<T>,
        sk: &Sketch<T>,
        whiten: Whiten<'a, T>,
    ) -> Result<Self> {
        let mut zhat = DMatrix::zeros(sys.dim(), 0);
        for z in sk.vectors().columns() {
            zhat.push_column(&whiten(z)?);
        }
        let znorm2 = zhat.columns().map(|z| dot(z, z)).collect();
        let q = sys.operator_terms().len();
        Ok(Self {
            whiten,
            c: vec![DMatrix::zeros(sys.dim(), 0); q],
            zhat,
            gram: Vec::new(),
            cross: Vec::new(),
            znorm2,
        })
    }

    fn push(&mut self, sys: &AffineSystem<T>, w: &[T]) -> Result<()> {
        for (c, a) in self.c.iter_mut().zip(sys.operator_terms()) {
            c.push_column(&(self.whiten)(&a.tr_mul_vec(w))?);
        }
        self.gram = self.c.iter().map(|cp| self.c.iter().map(|cq| cp.tr_matmul(cq)).collect()).collect();
        self.cross = self.c.iter().map(|cq| cq.tr_matmul(&self.zhat)).collect();
        Ok(())
    }

    fn norm(&self, alpha: &[T], b: &[T], i: usize) -> T {
        let mut s = self.znorm2[i];
        if b.is_empty() {
            return s.sqrt();
        }
        for (p, &ap) in alpha.iter().enumerate() {
            s -= T::of(2.0) * ap * (0..b.len()).map(|j| b[j] * self.cross[p][(j, i)]).sum::<T>();
            for (q, &aq) in alpha.iter().enumerate() {
                s += ap * aq * dot(b, &self.gram[p][q].mul_vec(b));
            }
        }
        s.max(T::zero()).sqrt()
    }
}

/// Resolves [`DualNorm::Auto`] against the covariance.
pub fn resolve_norm<T: Scalar>(norm: DualNorm, cov: &CovarianceSpec<T>) -> DualNorm {
    match norm {
        DualNorm::Auto if cov.is_invertible() => DualNorm::SigmaInverse,
        DualNorm::Auto => DualNorm::RieszInverse,
        other => other,
    }
}

/// Vector greedy over `{1..K} × train`: each step adds the full dual `Y_i(μ)` whose Galerkin
/// projection has the largest residual norm, until the `q`-quantile of all residual norms is at most
/// `tol`. Singular reduced systems rank first. At least one vector is always added.
pub fn greedy_dual_vector<T: Scalar>(
    sys: &AffineSystem<T>,
    cov: &CovarianceSpec<T>,
    riesz: &SpdMatrix<T>,
    sk: &Sketch<T>,
    train: &SampleSet<T>,
    cfg: &GreedyConfig,
) -> Result<DualGreedy<T>> {
    cfg.validate()?;
    check_len("sketch dimension", sys.dim(), sk.dim())?;
    check_len("riesz dimension", sys.dim(), riesz.dim())?;
    let whiten: Whiten<'_, T> = match resolve_norm(cfg.norm, cov) {
        DualNorm::SigmaInverse => Box::new(|v: &[T]| cov.whiten(v)),
        _ => Box::new(|v: &[T]| Ok(riesz.whiten(v))),
    };
    let mut gram = DualResidualGram::new(sys, sk, whiten)?;
    let k = sk.k();
    let mut builder = Orthonormalizer::new(riesz, "riesz");
    let mut trace = Vec::new();
    let mut used = vec![false; k * train.len()];

    loop {
        let projector = if builder.dim() > 0 {
            Some(DualProjector::new(sys, &builder.clone().into_space()?, sk)?)
        } else {
            None
        };
        let mut norms = vec![T::zero(); k * train.len()];
        for (m, mu) in train.iter().enumerate() {
            let alpha = sys.operator_coefficients(mu);
            let row = &mut norms[m * k..(m + 1) * k];
            match &projector {
                None => row.iter_mut().enumerate().for_each(|(i, x)| *x = gram.norm(&alpha, &[], i)),
                Some(p) => match p.project_coeffs(mu) {
                    Ok(b) => row.iter_mut().enumerate().for_each(|(i, x)| *x = gram.norm(&alpha, b.col(i), i)),
                    Err(Error::Singular { .. }) => row.iter_mut().for_each(|x| *x = T::infinity()),
                    Err(e) => return Err(e),
                },
            }
        }
        let criterion = quantile(&norms, cfg.q)?.as_f64();
        let converged = criterion <= cfg.tol && builder.dim() > 0;
        if converged || trace.len() >= cfg.max_iterations {
            let mut space = builder.into_space()?;
            if !converged {
                space.set_status(SpaceStatus::MaxIterations);
            }
            return Ok(DualGreedy {
                space,
                trace,
                final_criterion: criterion,
                converged,
                excluded_train: 0,
            });
        }
        let mut skip = used.clone();
        let mut added = false;
        while let Some(idx) = argmax_first(&norms, &skip) {
            skip[idx] = true;
            let (m, i) = (idx / k, idx % k);
            let mu = &train.points[m];
            let y = sys.factor(mu)?.solve_transpose(sk.vector(i));
            if builder.push(&y, ColumnSource::DualVector { mu: mu.to_f64(), index: i }) {
                used[idx] = true;
                gram.push(sys, builder.basis().col(builder.dim() - 1))?;
                trace.push(GreedyStep {
                    iteration: trace.len() + 1,
                    mu: mu.to_f64(),
                    index: Some(i),
                    lambda: None,
                    criterion,
                    dim_after: builder.dim(),
                });
                added = true;
                break;
            }
        }
        if !added {
            let mut space = builder.into_space()?;
            space.set_status(SpaceStatus::Truncated { rank: space.dim() });
            return Ok(DualGreedy {
                space,
                trace,
                final_criterion: criterion,
                converged: false,
                excluded_train: 0,
            });
        }
    }
}

/// Relative size below which an estimator value is indistinguishable from round-off.
fn roundoff_floor<T: Scalar>() -> T {
    T::of(1e-10_f64.max(1e3 * T::epsilon().as_f64()))
}

/// Reference estimate at one training point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEstimate<T> {
    /// `Δ_ref(μ)`, set to exactly zero when it is at round-off level relative to `scale`.
    pub delta: T,
    /// `rms_i(Z_iᵀ u_ref(μ))`, the magnitude against which round-off is judged.
    pub scale: T,
    /// Primal reduced coefficients of `ũ(μ)`.
    pub coeffs: Vec<T>,
}

/// Reference estimator `Δ_ref(μ) = rms_i(Z_iᵀ(u_ref(μ) − ũ(μ)))` over a training set; `None` where a
/// reduced solve is singular.
pub fn reference_estimates<T: Scalar>(
    sk: &Sketch<T>,
    primal: &ReducedModel<T>,
    reference: &ReducedModel<T>,
    train: &SampleSet<T>,
) -> Result<Vec<Option<ReferenceEstimate<T>>>> {
    let zv = sk.vectors().tr_matmul(primal.space().basis());
    let zr = sk.vectors().tr_matmul(reference.space().basis());
    train
        .iter()
        .map(|mu| {
            let a = match primal.solve_coeffs(mu) {
                Ok(a) => a,
                Err(Error::Singular { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let ar = match reference.solve_coeffs(mu) {
                Ok(a) => a,
                Err(Error::Singular { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let sref = zr.mul_vec(&ar);
            let diff: Vec<T> = sref.iter().zip(zv.mul_vec(&a)).map(|(&x, y)| x - y).collect();
            let scale = Sketch::rms(&sref);
            let mut delta = Sketch::rms(&diff);
            if delta <= roundoff_floor::<T>() * scale {
                delta = T::zero();
            }
            Ok(Some(ReferenceEstimate { delta, scale, coeffs: a }))
        })
        .collect()
}

/// Goal-oriented greedy: selects the training parameter where the fast estimator deviates most
/// from the reference estimator, computes all `K` duals there and appends `Y(μ*)λ` with `λ` the
/// leading eigenvector of `(Y − Ỹ)ᵀ(Y − Ỹ)`. Stops when the `q`-quantile of
/// `max(Δ_ref/Δ̃, Δ̃/Δ_ref)` is at most `tol`.
pub fn greedy_dual_goal_oriented<T: Scalar>(
    sys: &AffineSystem<T>,
    riesz: &SpdMatrix<T>,
    sk: &Sketch<T>,
    primal: &ReducedModel<T>,
    reference: &ReducedModel<T>,
    train: &SampleSet<T>,
    cfg: &GreedyConfig,
) -> Result<DualGreedy<T>> {
    cfg.validate()?;
    check_len("sketch dimension", sys.dim(), sk.dim())?;
    if reference.dim() <= primal.dim() {
        return Err(Error::Domain("reference space must be strictly larger than the primal space".into()));
    }
    let refs = reference_estimates(sk, primal, reference, train)?;
    let active: Vec<(usize, ReferenceEstimate<T>)> =
        refs.into_iter().enumerate().filter_map(|(m, r)| r.map(|r| (m, r))).collect();
    if active.is_empty() {
        return Err(Error::Empty("training points with solvable reduced systems"));
    }
    let excluded_train = train.len() - active.len();
    let mut builder = Orthonormalizer::new(riesz, "riesz");
    let mut trace = Vec::new();
    let mut selected = vec![false; active.len()];

    loop {
        let estimator = if builder.dim() > 0 {
            Some(OnlineEstimator::build(sys, primal.space(), &builder.clone().into_space()?, sk)?)
        } else {
            None
        };
        let mut ratios = Vec::with_capacity(active.len());
        for (m, r) in &active {
            let fast = match &estimator {
                None => T::zero(),
                Some(oe) => match oe.fast_estimator(&train.points[*m], &r.coeffs) {
                    Ok(d) if d <= roundoff_floor::<T>() * r.scale => T::zero(),
                    Ok(d) => d,
                    Err(Error::Singular { .. }) => T::nan(),
                    Err(e) => return Err(e),
                },
            };
            ratios.push(if fast.is_nan() { T::infinity() } else { effectivity_ratio(r.delta, fast) });
        }
        let criterion = quantile(&ratios, cfg.q)?.as_f64();
        let converged = criterion <= cfg.tol && builder.dim() > 0;
        let candidate = argmax_first(&ratios, &selected);
        if converged || trace.len() >= cfg.max_iterations || candidate.is_none() {
            let mut space = builder.into_space()?;
            if !converged {
                space.set_status(SpaceStatus::MaxIterations);
            }
            return Ok(DualGreedy {
                space,
                trace,
                final_criterion: criterion,
                converged,
                excluded_train,
            });
        }
        let j = candidate.unwrap_or_default();
        selected[j] = true;
        let mu = &train.points[active[j].0];
        let y = solve_random_duals(sys, mu, sk)?.columns;
        let mut diff = y.clone();
        if let Some(oe) = &estimator {
            let ytilde = oe.projector().project_duals(mu)?.columns;
            diff.scale_add(-T::one(), &ytilde);
        }
        let m = diff.tr_matmul(&diff);
        let tr_m: T = (0..m.nrows()).map(|i| m[(i, i)]).sum();
        let tr_y: T = y.columns().map(|c| dot(c, c)).sum();
        if tr_m <= T::of(1e-14) * tr_y {
            return Err(Error::Degenerate(format!("projected duals are exact at mu = {}", mu)));
        }
        let lambda = leading_eigenvector(&m)?.0;
        let candidate_vec = y.mul_vec(&lambda);
        let source = ColumnSource::DualCombination {
            mu: mu.to_f64(),
            lambda: lambda.iter().map(|x| x.as_f64()).collect(),
        };
        if builder.push(&candidate_vec, source.clone()) {
            trace.push(GreedyStep {
                iteration: trace.len() + 1,
                mu: mu.to_f64(),
                index: None,
                lambda: Some(lambda.iter().map(|x| x.as_f64()).collect()),
                criterion,
                dim_after: builder.dim(),
            });
        }
    }
}

/// POD of all dual columns in the `R` inner product by the method of snapshots.
/// Returns at most `n_target` modes; flags truncation when the snapshots have lower numerical rank.
pub fn pod_dual_baseline<T: Scalar>(
    snapshots: &[DualSnapshotMatrix<T>],
    riesz: &SpdMatrix<T>,
    n_target: usize,
) -> Result<ReducedSpace<T>> {
    if snapshots.is_empty() {
        return Err(Error::Empty("dual snapshots"));
    }
    if n_target == 0 {
        return Err(Error::Domain("POD needs n_target >= 1".into()));
    }
    let n = riesz.dim();
    let mut s = DMatrix::zeros(n, 0);
    for snap in snapshots {
        check_len("dual snapshot length", n, snap.columns.nrows())?;
        for c in snap.columns.columns() {
            s.push_column(c);
        }
    }
    let mut rs = DMatrix::zeros(n, 0);
    for c in s.columns() {
        rs.push_column(&riesz.apply(c));
    }
    let mut gram = s.tr_matmul(&rs);
    let m = gram.nrows();
    for i in 0..m {
        for j in 0..i {
            let avg = (gram[(i, j)] + gram[(j, i)]) * T::of(0.5);
            gram[(i, j)] = avg;
            gram[(j, i)] = avg;
        }
    }
    let (vals, vecs) = symmetric_eigen(&gram);
    let cutoff = T::of(1e-13) * vals[0].max(T::zero());
    let mut builder = Orthonormalizer::new(riesz, "riesz");
    for (j, &lam) in vals.iter().enumerate() {
        if builder.dim() == n_target || !(lam > cutoff) {
            break;
        }
        let mode: Vec<T> = s.mul_vec(vecs.col(j)).into_iter().map(|x| x / lam.sqrt()).collect();
        builder.push(&mode, ColumnSource::PodMode { eigenvalue: lam.as_f64() });
    }
    let mut space = builder.into_space()?;
    if space.dim() < n_target {
        space.set_status(SpaceStatus::Truncated { rank: space.dim() });
    }
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[5.0], 0.3).unwrap(), 5.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&[4.0, 2.0, 3.0, 1.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[1.0, f64::INFINITY, 3.0], 0.6).unwrap(), 3.0);
        assert!(quantile::<f64>(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn eigenvector_examples() {
        let d = DMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(leading_eigenvector(&d).unwrap().0, vec![1.0, 0.0]);
        let v: [f64; 3] = [1.0, -2.0, 2.0];
        let m = DMatrix::from_fn(3, 3, |i, j| v[i] * v[j]);
        let l = leading_eigenvector(&m).unwrap().0;
        for (a, b) in l.iter().zip([-1.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0]) {
            assert!((a - b).abs() < 1e-12, "{l:?}");
        }
        assert!(matches!(
            leading_eigenvector(&DMatrix::<f64>::zeros(2, 2)),
            Err(Error::Degenerate(_))
        ));
        let nonsym = DMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(leading_eigenvector(&nonsym).is_err());
        let indefinite = DMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(leading_eigenvector(&indefinite).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GreedyConfig::default().validate().is_ok());
        for bad in [
            GreedyConfig { tol: 0.0, ..Default::default() },
            GreedyConfig { q: 1.5, ..Default::default() },
            GreedyConfig { max_iterations: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn pod_of_duplicated_column() {
        let c = vec![1.0, 2.0, 0.0];
        let snap = DualSnapshotMatrix {
            mu: crate::covariance::Parameter::new(vec![0.0]),
            columns: DMatrix::from_columns(3, &[c.clone(), c.clone(), c]),
        };
        let space = pod_dual_baseline(&[snap], &SpdMatrix::identity(3), 3).unwrap();
        assert_eq!(space.dim(), 1);
        assert_eq!(space.status(), SpaceStatus::Truncated { rank: 1 });
    }
}
