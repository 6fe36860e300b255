//! Gaussian sketches: tail bounds, sample-size planning, drawing `Z ~ N(0, Σ)` and sketched norms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceSpec;
use crate::error::{check_len, Error, Result};
use crate::linalg::DMatrix;
use crate::scalar::{dot, Scalar};
use crate::special::chi2_cdf_sf;

fn sqrt_e() -> f64 {
    std::f64::consts::E.sqrt()
}

/// Upper bound `(√e / w)^k` on `P{ Q ∉ [k w⁻², k w²] }` for `Q ~ χ²(k)`.
pub fn chi2_fail_bound(w: f64, k: u32) -> Result<f64> {
    if !(w > sqrt_e()) {
        return Err(Error::Domain(format!("tail bound needs w > sqrt(e), got {w}")));
    }
    if k < 3 {
        return Err(Error::Domain(format!("tail bound needs k >= 3, got {k}")));
    }
    Ok((sqrt_e() / w).powi(k as i32))
}

/// Exact `P{ Q ∉ [k w⁻², k w²] }` for `Q ~ χ²(k)`.
pub fn chi2_fail_exact(w: f64, k: u32) -> Result<f64> {
    if !(w >= 1.0) {
        return Err(Error::Domain(format!("w must be >= 1, got {w}")));
    }
    let kf = f64::from(k);
    let (below, _) = chi2_cdf_sf(kf / (w * w), k)?;
    let (_, above) = chi2_cdf_sf(kf * w * w, k)?;
    Ok((below + above).min(1.0))
}

/// Smallest `K` such that `w⁻¹‖v‖_Σ ≤ ‖Φv‖₂ ≤ w‖v‖_Σ` holds simultaneously for `m_points`
/// vectors with probability at least `1 - delta`:
/// `K = max(⌈(ln m + ln δ⁻¹) / ln(w/√e)⌉, 3)`.
pub fn select_sample_count(m_points: u64, delta: f64, w: f64) -> Result<u32> {
    if m_points == 0 {
        return Err(Error::Domain("number of vectors must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("failure probability must lie in (0,1), got {delta}")));
    }
    if !(w > sqrt_e()) {
        return Err(Error::Domain(format!("w must exceed sqrt(e), got {w}")));
    }
    let ratio = ((m_points as f64).ln() - delta.ln()) / (w / sqrt_e()).ln();
    Ok((ratio.ceil() as u32).max(3))
}

/// The `(w, δ)` pair a sketch was sized for, and the number of vectors it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchCertificate {
    pub w: f64,
    pub delta: f64,
    pub m_points: u64,
}

/// `K` frozen Gaussian vectors `Z_i ~ N(0, Σ)`, stored as the columns of an `N × K` matrix.
#[derive(Debug, Clone)]
pub struct Sketch<T> {
    vectors: DMatrix<T>,
    seed: u64,
    certificate: Option<SketchCertificate>,
    covariance: String,
}

/// Draws `k ≥ 3` vectors `Z_i = Uᵀ Ẑ_i` with `Ẑ_i` standard normal of length `rows(U)`.
///
/// For a rank-one covariance `Σ = l lᵀ` this gives `Z_i = X_i l` with scalar `X_i ~ N(0,1)`.
pub fn draw_sketch<T: Scalar>(cov: &CovarianceSpec<T>, k: u32, seed: u64) -> Result<Sketch<T>> {
    if k < 3 {
        return Err(Error::Domain(format!("a sketch needs k >= 3 vectors, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = cov.factor_rows();
    let mut vectors = DMatrix::zeros(cov.dim(), 0);
    let mut zhat = vec![T::zero(); rows];
    for _ in 0..k {
        for z in zhat.iter_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *z = T::of(x);
        }
        vectors.push_column(&cov.factor_tr_mul(&zhat));
    }
    Ok(Sketch {
        vectors,
        seed,
        certificate: None,
        covariance: cov.label().to_string(),
    })
}

impl<T: Scalar> Sketch<T> {
    /// Wraps explicitly given vectors (any `K ≥ 1`), e.g. a loaded or hand-built sketch.
    pub fn from_vectors(vectors: DMatrix<T>, seed: u64, covariance: impl Into<String>) -> Result<Self> {
        if vectors.ncols() == 0 {
            return Err(Error::Empty("sketch vectors"));
        }
        Ok(Self {
            vectors,
            seed,
            certificate: None,
            covariance: covariance.into(),
        })
    }

    pub fn with_certificate(mut self, cert: SketchCertificate) -> Self {
        self.certificate = Some(cert);
        self
    }

    pub fn k(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vectors(&self) -> &DMatrix<T> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[T] {
        self.vectors.col(i)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn certificate(&self) -> Option<SketchCertificate> {
        self.certificate
    }

    pub fn covariance_label(&self) -> &str {
        &self.covariance
    }

    /// `Φ v = K^{-1/2} (Z_1ᵀv, …, Z_Kᵀv)`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let s = T::one() / T::of(self.k() as f64).sqrt();
        self.vectors.tr_mul_vec(v).into_iter().map(|x| x * s).collect()
    }

    /// Root mean square of the `K` values, i.e. `‖Φ v‖₂` given `(Z_iᵀ v)_i`.
    pub fn rms(values: &[T]) -> T {
        let k = T::of(values.len() as f64);
        (values.iter().map(|&x| x * x).sum::<T>() / k).sqrt()
    }
}

/// `‖Φ v‖₂ = sqrt((1/K) Σ_i (Z_iᵀ v)²)`.
pub fn sketch_norm<T: Scalar>(sk: &Sketch<T>, v: &[T]) -> Result<T> {
    check_len("sketch_norm vector", sk.dim(), v.len())?;
    let proj: Vec<T> = sk.vectors.columns().map(|z| dot(z, v)).collect();
    Ok(Sketch::rms(&proj))
}
