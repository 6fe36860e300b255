use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use randrb::io::{
    read_json_file, read_samples_csv, save_sketch, save_space, save_system, write_dense_csv, write_json_file,
    write_samples_csv, write_sweep_csv, write_trace_csv, write_vector_csv, SweepRow,
};
use randrb::{
    chi2_fail_bound, chi2_fail_exact, effectivity_alpha, quantile, sample_parameters, select_sample_count, Error,
    EstimatorCertificate, OnlineEstimator, Result, SampleRole, SampleSet,
};

use crate::config::ExperimentConfig;
use crate::pipeline::{
    build_dual, build_primal, draw, evaluate, online_points, prepare, DualSource, Primal, RowMeta, Setup,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Written next to the artifacts of a `build`; `estimate` reads the configuration back from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub stages: Vec<StageRecord>,
    pub n_dofs: Option<usize>,
    pub k: Option<usize>,
    pub n_primal: Option<usize>,
    pub n_reference: Option<usize>,
    pub n_dual: Option<usize>,
    pub dual_converged: Option<bool>,
    pub dual_final_criterion: Option<f64>,
    pub excluded_train: Option<usize>,
}

impl RunManifest {
    fn new(config: ExperimentConfig) -> Self {
        Self {
            config,
            stages: Vec::new(),
            n_dofs: None,
            k: None,
            n_primal: None,
            n_reference: None,
            n_dual: None,
            dual_converged: None,
            dual_final_criterion: None,
            excluded_train: None,
        }
    }

    fn stage<R>(&mut self, name: &str, r: Result<R>) -> Result<R> {
        self.stages.push(StageRecord {
            name: name.into(),
            status: if r.is_ok() { "ok" } else { "failed" }.into(),
            error: r.as_ref().err().map(|e| e.to_string()),
        });
        r
    }

    pub fn ok(&self) -> bool {
        self.stages.iter().all(|s| s.status == "ok")
    }
}

/// Offline phase: primal greedy, sketch, dual space and the reduced estimator blocks.
/// The manifest is written even when a stage fails.
pub fn cmd_build(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg.output.clone();
    fs::create_dir_all(&out)?;
    let mut man = RunManifest::new(cfg.clone());
    let r = build_stages(cfg, &out, &mut man);
    write_json_file(&out.join(MANIFEST_FILE), &man)?;
    r.map(|_| man)
}

fn build_stages(cfg: &ExperimentConfig, out: &Path, man: &mut RunManifest) -> Result<()> {
    let setup = man.stage("assemble", prepare(cfg))?;
    man.n_dofs = Some(setup.system.dim());
    let primal = man.stage("primal", build_primal(&setup, cfg))?;
    man.n_primal = Some(primal.space.dim());
    man.n_reference = Some(primal.reference.dim());
    let sk = man.stage("sketch", draw(&setup, cfg, cfg.seeds.sketch))?;
    man.k = Some(sk.k());
    let dual = man.stage("dual", build_dual(&setup, cfg, &primal, &sk))?;
    man.n_dual = Some(dual.space.dim());
    man.dual_converged = Some(dual.converged);
    man.dual_final_criterion = Some(dual.final_criterion).filter(|c| c.is_finite());
    man.excluded_train = Some(dual.excluded_train);
    let oe = man.stage("estimator", OnlineEstimator::build(&setup.system, &primal.space, &dual.space, &sk))?;
    let persisted = (|| -> Result<()> {
        save_system(&out.join("system"), &setup.system, Some(&setup.riesz), Some(&setup.domain))?;
        write_samples_csv(&out.join("train.csv"), &primal.train)?;
        save_space(out, "primal", &primal.space)?;
        save_space(out, "reference", &primal.reference)?;
        save_space(out, "dual", &dual.space)?;
        save_sketch(out, "sketch", &sk)?;
        let p = setup.domain.dim();
        write_trace_csv(&out.join("primal_trace.csv"), p, &primal.greedy.trace)?;
        write_trace_csv(&out.join("dual_trace.csv"), p, &dual.trace)?;
        save_estimator_blocks(&out.join("estimator"), &oe)
    })();
    man.stage("persist", persisted)
}

fn save_estimator_blocks(dir: &Path, oe: &OnlineEstimator<f64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_dense_csv(&dir.join("sketch_projections.csv"), oe.projector().sketch_projections())?;
    for (q, m) in oe.projector().operator_terms().iter().enumerate() {
        write_dense_csv(&dir.join(format!("dual_operator_{q}.csv")), m)?;
    }
    for (q, m) in oe.cross_terms().iter().enumerate() {
        write_dense_csv(&dir.join(format!("cross_{q}.csv")), m)?;
    }
    for (q, f) in oe.rhs_terms().iter().enumerate() {
        write_vector_csv(&dir.join(format!("dual_rhs_{q}.csv")), "value", f)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct EstimateOptions {
    /// Online parameters; sampled from the configuration when absent.
    pub online: Option<PathBuf>,
    pub with_truth: bool,
    /// Replace the reduced duals by full dual solves.
    pub exact_duals: bool,
    /// Defaults to the artifacts directory.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q01: f64,
    pub q50: f64,
    pub q99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub rows: usize,
    pub failed_rows: usize,
    pub k: usize,
    pub n_primal: usize,
    pub n_dual: usize,
    pub w: Option<f64>,
    pub delta: Option<f64>,
    /// Spread between the exact and fast estimators over the online set.
    pub alpha_on_probe: Option<f64>,
    pub interval: Option<(f64, f64)>,
    pub effectivity: Option<Quantiles>,
    pub fraction_in_interval: Option<f64>,
}

/// Online phase against artifacts written by [`cmd_build`].
pub fn cmd_estimate(artifacts: &Path, opts: &EstimateOptions) -> Result<EstimateSummary> {
    let man: RunManifest = read_json_file(&artifacts.join(MANIFEST_FILE))?;
    if !man.ok() {
        return Err(Error::Config(format!("build in {} did not complete", artifacts.display())));
    }
    let cfg = &man.config;
    let setup = prepare(cfg)?;
    let primal = build_primal(&setup, cfg)?;
    let sk = draw(&setup, cfg, cfg.seeds.sketch)?;
    let online = match &opts.online {
        Some(p) => read_samples_csv(p, cfg.seeds.online, SampleRole::Online)?,
        None => online_set(&setup, cfg)?,
    };
    if online.is_empty() {
        return Err(Error::Empty("online set"));
    }
    if online.iter().any(|mu| mu.dim() != setup.domain.dim()) {
        return Err(Error::Config("online parameters have the wrong dimension".into()));
    }
    let oe;
    let (source, n_dual) = if opts.exact_duals {
        (DualSource::Exact, setup.system.dim())
    } else {
        let dual = build_dual(&setup, cfg, &primal, &sk)?;
        oe = OnlineEstimator::build(&setup.system, &primal.space, &dual.space, &sk)?;
        (DualSource::Reduced(&oe), oe.n_dual())
    };
    let points = online_points(&setup, &primal.model, &online, opts.with_truth);
    let meta = row_meta(&sk, cfg.seeds.sketch, primal.space.dim(), n_dual);
    let rows = evaluate(&setup, &points, &sk, &source, &meta);
    let out = opts.output.clone().unwrap_or_else(|| artifacts.to_path_buf());
    fs::create_dir_all(&out)?;
    write_sweep_csv(&out.join("estimate.csv"), setup.domain.dim(), &rows)?;
    let summary = summarize(&rows, &meta)?;
    write_json_file(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn row_meta(sk: &randrb::Sketch<f64>, seed: u64, n_primal: usize, n_dual: usize) -> RowMeta {
    let cert = sk.certificate();
    RowMeta {
        seed,
        n_primal,
        n_dual,
        k: sk.k(),
        w: cert.map(|c| c.w),
        delta_prob: cert.map(|c| c.delta),
    }
}

pub fn summarize(rows: &[SweepRow], meta: &RowMeta) -> Result<EstimateSummary> {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let pairs: Vec<(f64, f64)> = ok.iter().filter_map(|r| Some((r.delta_exact?, r.delta_fast?))).collect();
    let alpha = if pairs.is_empty() {
        None
    } else {
        let (e, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        Some(effectivity_alpha(&e, &f)?)
    };
    let interval = meta.w.map(|w| {
        EstimatorCertificate {
            w,
            delta: meta.delta_prob.unwrap_or(f64::NAN),
            alpha,
        }
        .interval()
    });
    let eff: Vec<f64> = ok.iter().filter_map(|r| r.effectivity).collect();
    let effectivity = if eff.is_empty() {
        None
    } else {
        Some(Quantiles {
            min: eff.iter().copied().fold(f64::INFINITY, f64::min),
            q01: quantile(&eff, 0.01)?,
            q50: quantile(&eff, 0.5)?,
            q99: quantile(&eff, 0.99)?,
            max: quantile(&eff, 1.0)?,
        })
    };
    let fraction_in_interval = match (interval, eff.is_empty()) {
        (Some((lo, hi)), false) => {
            Some(eff.iter().filter(|&&e| e >= lo && e <= hi).count() as f64 / eff.len() as f64)
        }
        _ => None,
    };
    Ok(EstimateSummary {
        rows: rows.len(),
        failed_rows: rows.len() - ok.len(),
        k: meta.k,
        n_primal: meta.n_primal,
        n_dual: meta.n_dual,
        w: meta.w,
        delta: meta.delta_prob,
        alpha_on_probe: alpha,
        interval,
        effectivity,
        fraction_in_interval,
    })
}

pub const TABLE_DELTAS: [f64; 2] = [1e-2, 1e-4];
pub const TABLE_WS: [f64; 3] = [2.0, 4.0, 10.0];
pub const TABLE_POINTS: [u64; 4] = [1, 1_000, 1_000_000, 1_000_000_000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleCountRow {
    pub delta: f64,
    pub w: f64,
    pub m_points: u64,
    pub k: u32,
}

pub fn table22() -> Result<Vec<SampleCountRow>> {
    let mut rows = Vec::new();
    for &delta in &TABLE_DELTAS {
        for &m_points in &TABLE_POINTS {
            for &w in &TABLE_WS {
                rows.push(SampleCountRow {
                    delta,
                    w,
                    m_points,
                    k: select_sample_count(m_points, delta, w)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_table22(path: &Path) -> Result<Vec<SampleCountRow>> {
    let rows = table22()?;
    let mut wr = csv::Writer::from_path(path)?;
    for r in &rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub w: f64,
    pub k: u32,
    pub exact: f64,
    /// Absent where the bound does not apply (`w ≤ √e`).
    pub bound: Option<f64>,
}

pub const FIG_WS: [f64; 5] = [1.1, 2.0, 5.0, 10.0, 50.0];
pub const FIG_KS: [u32; 2] = [3, 10];

/// Failure probabilities on the tabulated `w` plus a log grid on `[1.1, 100]`.
pub fn fig21(grid: usize) -> Result<Vec<FailureRow>> {
    let mut ws: Vec<f64> = FIG_WS.to_vec();
    if grid >= 2 {
        let (a, b) = (1.1f64.ln(), 100f64.ln());
        ws.extend((0..grid).map(|i| (a + (b - a) * i as f64 / (grid - 1) as f64).exp()));
    }
    let mut rows = Vec::new();
    for &k in &FIG_KS {
        for &w in &ws {
            rows.push(FailureRow {
                w,
                k,
                exact: chi2_fail_exact(w, k)?,
                bound: chi2_fail_bound(w, k).ok(),
            });
        }
    }
    Ok(rows)
}

pub fn cmd_fig21(path: &Path, grid: usize) -> Result<Vec<FailureRow>> {
    let rows = fig21(grid)?;
    let mut wr = csv::Writer::from_path(path)?;
    for r in &rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(rows)
}

/// Repeats the sketch and dual construction with seeds `sketch, sketch + 1, …` for a fixed primal
/// space and online set, and writes all rows to `histogram.csv` under the configured output.
pub fn cmd_sweep_histogram(cfg: &ExperimentConfig, repetitions: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    let setup = prepare(cfg)?;
    let primal = build_primal(&setup, cfg)?;
    let online = online_set(&setup, cfg)?;
    let points = online_points(&setup, &primal.model, &online, true);
    let mut rows = Vec::new();
    for r in 0..repetitions {
        let seed = cfg.seeds.sketch.wrapping_add(r as u64);
        rows.extend(repetition(&setup, cfg, &primal, &points, seed)?);
    }
    fs::create_dir_all(&cfg.output)?;
    write_sweep_csv(&cfg.output.join("histogram.csv"), setup.domain.dim(), &rows)?;
    Ok(rows)
}

fn repetition(
    setup: &Setup,
    cfg: &ExperimentConfig,
    primal: &Primal,
    points: &[crate::pipeline::OnlinePoint],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let sk = draw(setup, cfg, seed)?;
    let dual = build_dual(setup, cfg, primal, &sk)?;
    let oe = OnlineEstimator::build(&setup.system, &primal.space, &dual.space, &sk)?;
    let meta = row_meta(&sk, seed, primal.space.dim(), oe.n_dual());
    Ok(evaluate(setup, points, &sk, &DualSource::Reduced(&oe), &meta))
}

pub fn online_set(setup: &Setup, cfg: &ExperimentConfig) -> Result<SampleSet<f64>> {
    sample_parameters(&setup.domain, cfg.online_size, cfg.seeds.online, SampleRole::Online)
}
