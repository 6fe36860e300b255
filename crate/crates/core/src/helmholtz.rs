//! Anisotropic parametrized Helmholtz benchmark on the unit square with bilinear finite elements.
//!
//! `−∂₁₁u − μ₁∂₂₂u − μ₂u = f` in `(0,1)²`, `u = 0` on the bottom edge, Neumann data `cos(πx₁)` on
//! the top edge and homogeneous Neumann on the sides; `μ ∈ [0.2,1.2] × [10,50]`.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::{AffineSystem, CoefficientFn, CovarianceSpec, Parameter, ParameterDomain, SpdMatrix};
use crate::error::{check_len, Error, Result};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::scalar::{dot, norm2, Scalar};

/// Named choices of `Σ` for the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceChoice {
    /// Euclidean norm of the coefficient vector.
    Identity,
    /// `Σ = R_X`, the discrete H¹ norm.
    H1,
    /// `Σ = R_{L²}`, the mass matrix.
    L2,
    /// `Σ = Lᵀ R_W L`, the L²(Γ) norm of the trace on the left edge.
    Qoi,
    /// `Σ = l lᵀ` with `lᵀu = ∫_Γ u`.
    RankOne,
}

impl CovarianceChoice {
    pub const ALL: [Self; 5] = [Self::Identity, Self::H1, Self::L2, Self::Qoi, Self::RankOne];

    pub fn keyword(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::H1 => "h1",
            Self::L2 => "l2",
            Self::Qoi => "qoi",
            Self::RankOne => "rank-one",
        }
    }
}

impl FromStr for CovarianceChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.keyword() == s)
            .ok_or_else(|| Error::Config(format!("unknown covariance keyword `{s}`")))
    }
}

fn f1(x: f64) -> f64 {
    match x {
        x if (0.0..=0.1).contains(&x) => 5.0,
        x if (0.2..=0.3).contains(&x) => -5.0,
        x if (0.45..=0.55).contains(&x) => 10.0,
        x if (0.7..=0.8).contains(&x) => -5.0,
        x if (0.9..=1.0).contains(&x) => 5.0,
        _ => 0.0,
    }
}

fn f2(x: f64) -> f64 {
    if (0.5..=1.0).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// Source term `f(x) = f₁(x₁) f₂(x₂)`.
pub fn source(x1: f64, x2: f64) -> f64 {
    f1(x1) * f2(x2)
}

/// Bilinear shape functions on `[0,1]²`, counterclockwise from the origin.
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta]
}

fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - eta), -(1.0 - xi)],
        [1.0 - eta, -xi],
        [eta, xi],
        [-eta, 1.0 - xi],
    ]
}

/// Element stiffness blocks `∫∂₁φ_a∂₁φ_b`, `∫∂₂φ_a∂₂φ_b` and mass `∫φ_aφ_b` on a square of side `h`.
fn element_matrices(h: f64) -> [[[f64; 4]; 4]; 3] {
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let mut out = [[[0.0; 4]; 4]; 3];
    for &xi in &pts {
        for &eta in &pts {
            let n = shape(xi, eta);
            let d = shape_grad(xi, eta);
            for a in 0..4 {
                for b in 0..4 {
                    out[0][a][b] += 0.25 * d[a][0] * d[b][0];
                    out[1][a][b] += 0.25 * d[a][1] * d[b][1];
                    out[2][a][b] += 0.25 * h * h * n[a] * n[b];
                }
            }
        }
    }
    out
}

/// 1D P1 mass matrix on the nodes `x_j = j/m`, `j = 1..m` (the node at 0 is constrained).
pub fn trace_mass_matrix<T: Scalar>(m: usize) -> CsrMatrix<T> {
    let h = 1.0 / m as f64;
    let mut t = Vec::new();
    for e in 0..m {
        // element [e h, (e+1) h] joins nodes e and e+1; node 0 is dropped
        let local = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let nodes = [e as isize - 1, e as isize];
        for a in 0..2 {
            for b in 0..2 {
                if nodes[a] >= 0 && nodes[b] >= 0 {
                    t.push((nodes[a] as usize, nodes[b] as usize, T::of(local[a][b])));
                }
            }
        }
    }
    CsrMatrix::from_triplets(m, m, &t)
}

/// The assembled benchmark at one mesh size.
#[derive(Debug, Clone)]
pub struct HelmholtzDiscretization<T> {
    cells: usize,
    system: AffineSystem<T>,
    riesz_h1: SpdMatrix<T>,
    riesz_l2: SpdMatrix<T>,
    trace_extractor: CsrMatrix<T>,
    trace_mass: SpdMatrix<T>,
}

/// Assembles the benchmark for mesh size `h`; `1/h` must be an integer.
pub fn assemble_helmholtz<T: Scalar>(h: f64) -> Result<HelmholtzDiscretization<T>> {
    let inv = 1.0 / h;
    let cells = inv.round();
    if !(h > 0.0) || !inv.is_finite() || cells < 1.0 || (inv - cells).abs() > 1e-9 * inv {
        return Err(Error::Domain(format!("1/h must be a positive integer, got h = {h}")));
    }
    assemble_helmholtz_cells(cells as usize)
}

/// Assembles the benchmark on a grid of `cells × cells` squares.
pub fn assemble_helmholtz_cells<T: Scalar>(cells: usize) -> Result<HelmholtzDiscretization<T>> {
    if cells == 0 {
        return Err(Error::Domain("need at least one cell".into()));
    }
    let n = cells;
    let h = 1.0 / n as f64;
    let ndofs = n * (n + 1);
    let dof = |i: usize, j: usize| -> Option<usize> { (j > 0).then(|| (j - 1) * (n + 1) + i) };
    let em = element_matrices(h);
    let mut trip: [Vec<(usize, usize, T)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut rhs = vec![0.0; ndofs];
    let aligned = n.is_multiple_of(20);
    let sub = [0.25, 0.75];
    for ey in 0..n {
        for ex in 0..n {
            let nodes = [(ex, ey), (ex + 1, ey), (ex + 1, ey + 1), (ex, ey + 1)].map(|(i, j)| dof(i, j));
            for a in 0..4 {
                let Some(da) = nodes[a] else { continue };
                for b in 0..4 {
                    let Some(db) = nodes[b] else { continue };
                    for (t, m) in trip.iter_mut().zip(&em) {
                        if m[a][b] != 0.0 {
                            t.push((da, db, T::of(m[a][b])));
                        }
                    }
                }
            }
            let x0 = ex as f64 * h;
            let y0 = ey as f64 * h;
            let mut load = [0.0; 4];
            if aligned {
                let f = source(x0 + 0.5 * h, y0 + 0.5 * h);
                load = [0.25 * h * h * f; 4];
            } else {
                for &xi in &sub {
                    for &eta in &sub {
                        let f = source(x0 + xi * h, y0 + eta * h);
                        for (l, s) in load.iter_mut().zip(shape(xi, eta)) {
                            *l += 0.25 * h * h * f * s;
                        }
                    }
                }
            }
            for (a, node) in nodes.iter().enumerate() {
                if let Some(d) = node {
                    rhs[*d] += load[a];
                }
            }
        }
    }
    let g = 0.5 * (0.6f64).sqrt();
    let gauss = [(0.5 - g, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + g, 5.0 / 18.0)];
    for i in 0..n {
        let (Some(left), Some(right)) = (dof(i, n), dof(i + 1, n)) else { continue };
        for &(xi, w) in &gauss {
            let flux = (PI * (i as f64 + xi) * h).cos();
            rhs[left] += h * w * flux * (1.0 - xi);
            rhs[right] += h * w * flux * xi;
        }
    }
    let [t11, t22, tm] = trip;
    let a11 = CsrMatrix::from_triplets(ndofs, ndofs, &t11);
    let a22 = CsrMatrix::from_triplets(ndofs, ndofs, &t22);
    let mass = CsrMatrix::from_triplets(ndofs, ndofs, &tm);
    let rx = CsrMatrix::linear_combination(&[T::one(); 3], &[&a11, &a22, &mass])?;
    let riesz_h1 = SpdMatrix::new(rx)?;
    let riesz_l2 = SpdMatrix::new(mass.clone())?;
    let system = AffineSystem::new(
        vec![a11, a22, mass.scaled(-T::one())],
        vec![
            CoefficientFn::Constant { value: 1.0 },
            CoefficientFn::Coordinate { index: 0 },
            CoefficientFn::Coordinate { index: 1 },
        ],
        vec![rhs.into_iter().map(T::of).collect()],
        vec![CoefficientFn::Constant { value: 1.0 }],
    )?;
    let ext: Vec<_> = (1..=n).map(|j| (j - 1, dof(0, j).unwrap_or_default(), T::one())).collect();
    Ok(HelmholtzDiscretization {
        cells: n,
        system,
        riesz_h1,
        riesz_l2,
        trace_extractor: CsrMatrix::from_triplets(n, ndofs, &ext),
        trace_mass: SpdMatrix::new(trace_mass_matrix(n))?,
    })
}

/// `μ₂ = (kπ)² + μ₁((l+½)π)²` for `k, l ≥ 0`, restricted to `[lo, hi]` and sorted.
pub fn resonance_mu2(mu1: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(mu1 > 0.0) {
        return Err(Error::Domain(format!("mu1 must be positive, got {mu1}")));
    }
    let mut out = Vec::new();
    let mut k = 0u32;
    while (f64::from(k) * PI).powi(2) <= hi {
        let mut l = 0u32;
        loop {
            let v = (f64::from(k) * PI).powi(2) + mu1 * ((f64::from(l) + 0.5) * PI).powi(2);
            if v > hi {
                break;
            }
            if v >= lo {
                out.push(v);
            }
            l += 1;
        }
        k += 1;
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Smallest singular value of a sparse square matrix by inverse iteration on `AᵀA`.
pub fn smallest_singular_value<T: Scalar>(a: &CsrMatrix<T>, iterations: usize) -> Result<T> {
    let lu = match BandedLu::factor(a) {
        Ok(lu) => lu,
        Err(Error::Singular { .. }) => return Ok(T::zero()),
        Err(e) => return Err(e),
    };
    let n = a.nrows();
    let mut x: Vec<T> = (0..n).map(|i| T::of(1.0 + ((i * 7919) % 13) as f64 / 13.0)).collect();
    let mut sigma = T::zero();
    for _ in 0..iterations.max(1) {
        let s = T::one() / norm2(&x);
        x.iter_mut().for_each(|v| *v *= s);
        let y = lu.solve_transpose(&lu.solve(&x));
        let growth = dot(&x, &y);
        sigma = T::one() / growth.sqrt();
        x = y;
    }
    Ok(sigma)
}

impl<T: Scalar> HelmholtzDiscretization<T> {
    pub fn domain() -> ParameterDomain {
        ParameterDomain::new(vec![0.2, 10.0], vec![1.2, 50.0]).expect("valid box")
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn n_dofs(&self) -> usize {
        self.system.dim()
    }

    pub fn system(&self) -> &AffineSystem<T> {
        &self.system
    }

    pub fn riesz_h1(&self) -> &SpdMatrix<T> {
        &self.riesz_h1
    }

    pub fn riesz_l2(&self) -> &SpdMatrix<T> {
        &self.riesz_l2
    }

    pub fn trace_extractor(&self) -> &CsrMatrix<T> {
        &self.trace_extractor
    }

    pub fn trace_mass(&self) -> &SpdMatrix<T> {
        &self.trace_mass
    }

    /// Degrees of freedom are `(i, j)`, `i = 0..n`, `j = 1..n`, numbered row by row.
    pub fn dof(&self, i: usize, j: usize) -> Option<usize> {
        let n = self.cells;
        (j >= 1 && j <= n && i <= n).then(|| (j - 1) * (n + 1) + i)
    }

    /// `u(μ)` for `μ` in the benchmark domain.
    pub fn full_solve(&self, mu: &Parameter<T>) -> Result<Vec<T>> {
        if !Self::domain().contains(mu) {
            return Err(Error::Domain(format!("parameter {mu} lies outside the benchmark domain")));
        }
        let lu = self.system.factor(mu)?;
        let f = self.system.assemble_rhs(mu)?;
        let u = lu.solve(&f);
        let mut r = self.system.apply_operator(mu, &u);
        r.iter_mut().zip(&f).for_each(|(ri, fi)| *ri = *fi - *ri);
        let tol = T::of(1e-10_f64.max(1e3 * T::epsilon().as_f64()));
        if norm2(&r) > tol * norm2(&f) {
            return Err(Error::Singular {
                rcond: lu.rcond().as_f64(),
            });
        }
        Ok(u)
    }

    /// Trace on the left edge and its discrete L²(Γ) norm.
    pub fn qoi_extract(&self, u: &[T]) -> Result<(Vec<T>, T)> {
        check_len("state vector", self.n_dofs(), u.len())?;
        let s = self.trace_extractor.mul_vec(u);
        let norm = self.trace_mass.norm(&s);
        Ok((s, norm))
    }

    /// `l` with `lᵀu = ∫_Γ u` (the trace mass applied to the constant one).
    pub fn trace_mean_functional(&self) -> Vec<T> {
        let ones = vec![T::one(); self.cells];
        self.trace_extractor.tr_mul_vec(&self.trace_mass.apply(&ones))
    }

    pub fn covariance(&self, choice: CovarianceChoice) -> Result<CovarianceSpec<T>> {
        Ok(match choice {
            CovarianceChoice::Identity => CovarianceSpec::identity(self.n_dofs()),
            CovarianceChoice::H1 => CovarianceSpec::spd(self.riesz_h1.clone(), "h1"),
            CovarianceChoice::L2 => CovarianceSpec::spd(self.riesz_l2.clone(), "l2"),
            CovarianceChoice::Qoi => CovarianceSpec::factored(&self.trace_extractor, &self.trace_mass, "qoi")?,
            CovarianceChoice::RankOne => CovarianceSpec::rank_one(self.trace_mean_functional(), "rank-one"),
        })
    }
}
