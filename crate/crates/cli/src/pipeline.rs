use randrb::io::SweepRow;
use randrb::primal::{residual_vector, PrimalGreedy};
use randrb::{
    assemble_helmholtz, draw_sketch, exact_estimator_from_duals, exact_estimator_from_truth, greedy_dual_goal_oriented,
    greedy_dual_vector, pod_dual_baseline, reduce, sample_parameters, select_sample_count, solve_random_duals,
    weak_greedy_primal, AffineSystem, CovarianceSpec, DualGreedy, Error, HelmholtzF64, OnlineEstimator, Parameter,
    ParameterDomain, ReducedModel, ReducedSpace, Result, SampleRole, SampleSet, Sketch, SketchCertificate, SpdMatrix,
};

use crate::config::{Benchmark, DualMethod, ExperimentConfig};

/// Everything derived from the benchmark choice alone.
pub struct Setup {
    pub system: AffineSystem<f64>,
    pub riesz: SpdMatrix<f64>,
    pub covariance: CovarianceSpec<f64>,
    pub domain: ParameterDomain,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    let choice = cfg.covariance_choice()?;
    match &cfg.benchmark {
        Benchmark::Helmholtz { h } => {
            let d = assemble_helmholtz::<f64>(*h)?;
            Ok(Setup {
                covariance: d.covariance(choice)?,
                system: d.system().clone(),
                riesz: d.riesz_h1().clone(),
                domain: HelmholtzF64::domain(),
            })
        }
        Benchmark::Manifest { path } => {
            let loaded = randrb::io::load_system::<f64>(path)?;
            let domain = loaded
                .domain
                .ok_or_else(|| Error::Config("manifest has no parameter domain".into()))?;
            let n = loaded.system.dim();
            let riesz = loaded.riesz.unwrap_or_else(|| SpdMatrix::identity(n));
            let covariance = match choice {
                randrb::CovarianceChoice::H1 => CovarianceSpec::spd(riesz.clone(), "h1"),
                _ => CovarianceSpec::identity(n),
            };
            Ok(Setup {
                system: loaded.system,
                riesz,
                covariance,
                domain,
            })
        }
    }
}

pub fn sample_count(cfg: &ExperimentConfig) -> Result<(u32, Option<SketchCertificate>)> {
    let s = &cfg.sketch;
    match (s.k, s.w, s.delta, s.online_count) {
        (Some(k), ..) => Ok((k, None)),
        (None, Some(w), Some(delta), Some(m)) => Ok((
            select_sample_count(m, delta, w)?,
            Some(SketchCertificate { w, delta, m_points: m }),
        )),
        _ => Err(Error::Config("incomplete sketch plan".into())),
    }
}

pub fn draw(setup: &Setup, cfg: &ExperimentConfig, seed: u64) -> Result<Sketch<f64>> {
    let (k, cert) = sample_count(cfg)?;
    let sk = draw_sketch(&setup.covariance, k, seed)?;
    Ok(match cert {
        Some(c) => sk.with_certificate(c),
        None => sk,
    })
}

pub struct Primal {
    pub train: SampleSet<f64>,
    pub greedy: PrimalGreedy<f64>,
    pub space: ReducedSpace<f64>,
    pub reference: ReducedSpace<f64>,
    pub model: ReducedModel<f64>,
    pub reference_model: ReducedModel<f64>,
}

pub fn build_primal(setup: &Setup, cfg: &ExperimentConfig) -> Result<Primal> {
    let train = sample_parameters(&setup.domain, cfg.train_size, cfg.seeds.train, SampleRole::Train)?;
    let greedy = weak_greedy_primal(&setup.system, &setup.riesz, &train, cfg.n_primal + cfg.extra_reference)?;
    if greedy.space.dim() < cfg.n_primal {
        return Err(Error::Degenerate(format!(
            "primal greedy found only {} independent snapshots",
            greedy.space.dim()
        )));
    }
    let (space, reference) = greedy.reference_split(cfg.n_primal)?;
    let model = reduce(&setup.system, &space)?;
    let reference_model = reduce(&setup.system, &reference)?;
    Ok(Primal {
        train,
        greedy,
        space,
        reference,
        model,
        reference_model,
    })
}

pub fn build_dual(setup: &Setup, cfg: &ExperimentConfig, primal: &Primal, sk: &Sketch<f64>) -> Result<DualGreedy<f64>> {
    let gc = cfg.dual.greedy();
    match cfg.dual.method {
        DualMethod::Alg1 => greedy_dual_vector(&setup.system, &setup.covariance, &setup.riesz, sk, &primal.train, &gc),
        DualMethod::Alg2 => greedy_dual_goal_oriented(
            &setup.system,
            &setup.riesz,
            sk,
            &primal.model,
            &primal.reference_model,
            &primal.train,
            &gc,
        ),
        DualMethod::Pod => {
            let params = sample_parameters::<f64>(
                &setup.domain,
                cfg.dual.pod_params,
                cfg.seeds.train.wrapping_add(1),
                SampleRole::Train,
            )?;
            let mut snaps = Vec::new();
            for mu in params.iter() {
                match solve_random_duals(&setup.system, mu, sk) {
                    Ok(s) => snaps.push(s),
                    Err(Error::Singular { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            let space = pod_dual_baseline(&snaps, &setup.riesz, cfg.dual.pod_modes)?;
            Ok(DualGreedy {
                space,
                trace: Vec::new(),
                final_criterion: f64::NAN,
                converged: true,
                excluded_train: cfg.dual.pod_params - snaps.len(),
            })
        }
    }
}

/// Precomputed reduced and (optionally) full solutions at one online parameter.
pub struct OnlinePoint {
    pub mu: Parameter<f64>,
    pub outcome: std::result::Result<PointData, String>,
}

pub struct PointData {
    pub coeffs: Vec<f64>,
    pub utilde: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

pub fn online_points(setup: &Setup, model: &ReducedModel<f64>, set: &SampleSet<f64>, with_truth: bool) -> Vec<OnlinePoint> {
    set.iter()
        .map(|mu| {
            let outcome = (|| -> Result<PointData> {
                let coeffs = model.solve_coeffs(mu)?;
                let utilde = model.space().lift(&coeffs);
                let truth = if with_truth { Some(setup.system.solve(mu)?) } else { None };
                Ok(PointData { coeffs, utilde, truth })
            })()
            .map_err(|e| e.to_string());
            OnlinePoint { mu: mu.clone(), outcome }
        })
        .collect()
}

pub enum DualSource<'a> {
    Reduced(&'a OnlineEstimator<f64>),
    /// Full dual solves in place of the reduced ones.
    Exact,
}

pub struct RowMeta {
    pub seed: u64,
    pub n_primal: usize,
    pub n_dual: usize,
    pub k: usize,
    pub w: Option<f64>,
    pub delta_prob: Option<f64>,
}

pub fn evaluate(setup: &Setup, points: &[OnlinePoint], sk: &Sketch<f64>, dual: &DualSource, meta: &RowMeta) -> Vec<SweepRow> {
    points
        .iter()
        .map(|p| {
            let mut row = SweepRow {
                mu: p.mu.to_f64(),
                true_error_sigma: None,
                delta_exact: None,
                delta_fast: None,
                effectivity: None,
                seed: meta.seed,
                n_primal: meta.n_primal,
                n_dual: meta.n_dual,
                k: meta.k,
                w: meta.w,
                delta_prob: meta.delta_prob,
                status: "ok".into(),
            };
            let data = match &p.outcome {
                Ok(d) => d,
                Err(e) => {
                    row.status = format!("error: {e}");
                    return row;
                }
            };
            let fast = match dual {
                DualSource::Reduced(oe) => oe.fast_estimator(&p.mu, &data.coeffs),
                DualSource::Exact => solve_random_duals(&setup.system, &p.mu, sk).and_then(|y| {
                    exact_estimator_from_duals(&y, &residual_vector(&setup.system, &p.mu, &data.utilde)?)
                }),
            };
            match fast {
                Ok(d) => row.delta_fast = Some(d),
                Err(e) => {
                    row.status = format!("error: {e}");
                    return row;
                }
            }
            if let Some(u) = &data.truth {
                let e: Vec<f64> = u.iter().zip(&data.utilde).map(|(a, b)| a - b).collect();
                let err = setup.covariance.sigma_norm(&e);
                row.true_error_sigma = Some(err);
                row.delta_exact = exact_estimator_from_truth(sk, u, &data.utilde).ok();
                row.effectivity = row.delta_fast.map(|d| d / err);
            }
            row
        })
        .collect()
}
