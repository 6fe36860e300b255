use std::fs;
use std::path::Path;

use randrb::io::{load_system, save_system};
use randrb::{AffineSystem, CoefficientFn, CsrMatrix, DualNorm, Error, ParameterDomain, SpdMatrix};
use randrb_cli::config::{Benchmark, DualConfig, DualMethod, ExperimentConfig, Seeds, SketchPlan};
use randrb_cli::pipeline::{build_primal, draw, evaluate, online_points, prepare, DualSource, RowMeta};
use randrb_cli::{cmd_build, cmd_estimate, cmd_fig21, cmd_sweep_histogram, cmd_table22, EstimateOptions};

fn desk_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: 1,
        benchmark: Benchmark::Helmholtz { h: 0.05 },
        covariance: "h1".into(),
        n_primal: 10,
        extra_reference: 10,
        sketch: SketchPlan {
            w: Some(4.0),
            delta: Some(1e-2),
            online_count: Some(10),
            k: None,
        },
        dual: DualConfig {
            method: DualMethod::Alg2,
            tol: 2.0,
            q: 0.99,
            max_iterations: 100,
            norm: DualNorm::Auto,
            pod_params: 40,
            pod_modes: 20,
        },
        train_size: 300,
        online_size: 10,
        seeds: Seeds {
            sketch: 1,
            train: 2,
            online: 3,
        },
        output: out.to_path_buf(),
    }
}

fn toy_system() -> (AffineSystem<f64>, SpdMatrix<f64>, ParameterDomain) {
    let a0 = CsrMatrix::from_dense_rows(&[vec![3.0, 0.1], vec![0.1, 2.0]]);
    let a1 = CsrMatrix::from_dense_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    let sys = AffineSystem::new(
        vec![a0, a1],
        vec![CoefficientFn::Constant { value: 1.0 }, CoefficientFn::Coordinate { index: 0 }],
        vec![vec![1.0, 0.3], vec![-0.2, 1.0 / 3.0]],
        vec![CoefficientFn::Constant { value: 1.0 }, CoefficientFn::Coordinate { index: 0 }],
    )
    .unwrap();
    let riesz = SpdMatrix::new(CsrMatrix::from_diagonal(&[2.0, 1.0])).unwrap();
    (sys, riesz, ParameterDomain::new(vec![0.0], vec![0.5]).unwrap())
}

#[test]
fn toy_manifest_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (sys, riesz, domain) = toy_system();
    let first = save_system(&dir.path().join("a"), &sys, Some(&riesz), Some(&domain)).unwrap();
    let loaded = load_system::<f64>(&first).unwrap();
    assert_eq!(loaded.system.operator_terms(), sys.operator_terms());
    assert_eq!(loaded.system.rhs_terms(), sys.rhs_terms());
    save_system(&dir.path().join("b"), &loaded.system, loaded.riesz.as_ref(), loaded.domain.as_ref()).unwrap();
    for f in ["A0.mtx", "A1.mtx", "f0.csv", "f1.csv", "riesz.mtx", "system.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn build_and_estimate_from_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (sys, riesz, domain) = toy_system();
    let manifest = save_system(&dir.path().join("toy"), &sys, Some(&riesz), Some(&domain)).unwrap();
    let mut cfg = desk_config(&dir.path().join("run"));
    cfg.benchmark = Benchmark::Manifest { path: manifest };
    cfg.covariance = "identity".into();
    cfg.n_primal = 1;
    cfg.extra_reference = 1;
    cfg.train_size = 20;
    let man = cmd_build(&cfg).unwrap();
    assert_eq!(man.n_dofs, Some(2));
    assert_eq!(
        fs::read(dir.path().join("toy/A1.mtx")).unwrap(),
        fs::read(dir.path().join("run/system/A1.mtx")).unwrap()
    );
    let s = cmd_estimate(
        &cfg.output,
        &EstimateOptions {
            with_truth: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(s.rows, 10);

    cfg.covariance = "qoi".into();
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn invalid_covariance_keyword_fails_before_assembly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path());
    cfg.covariance = "energy".into();
    // a mesh this fine would take far longer than the test allows
    cfg.benchmark = Benchmark::Helmholtz { h: 1e-4 };
    let t = std::time::Instant::now();
    assert!(matches!(cmd_build(&cfg), Err(Error::Config(_))));
    assert!(t.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn config_files_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let cfg = desk_config(dir.path());
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    let text = serde_json::to_string(&cfg).unwrap().replace("\"schema_version\":1", "\"schema_version\":7");
    fs::write(&path, text).unwrap();
    assert!(matches!(ExperimentConfig::load(&path), Err(Error::Config(_))));
    let mut both = cfg.clone();
    both.sketch.k = Some(5);
    assert!(both.validate().is_err());
}

#[test]
fn estimate_rows_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let man = cmd_build(&cfg).unwrap();
    assert!(man.ok());
    assert_eq!(man.k, Some(8));
    let s = cmd_estimate(
        dir.path(),
        &EstimateOptions {
            with_truth: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!((s.rows, s.failed_rows), (10, 0));
    let mut rd = csv::Reader::from_path(dir.path().join("estimate.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    for rec in rd.records() {
        let rec = rec.unwrap();
        let get = |name: &str| rec[col(name)].parse::<f64>().unwrap();
        let eff = get("delta_fast") / get("true_error_sigma");
        assert!((get("effectivity") - eff).abs() <= 1e-14 * eff);
        assert_eq!(&rec[col("status")], "ok");
    }
}

#[test]
fn empty_online_set_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(&dir.path().join("run"));
    cmd_build(&cfg).unwrap();
    let online = dir.path().join("online.csv");
    fs::write(&online, "mu_1,mu_2\n").unwrap();
    let r = cmd_estimate(
        &cfg.output,
        &EstimateOptions {
            online: Some(online),
            ..Default::default()
        },
    );
    assert!(matches!(r, Err(Error::Empty(_)) | Err(Error::Config(_))), "{r:?}");
}

#[test]
fn exact_duals_are_certified_with_high_probability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let setup = prepare(&cfg).unwrap();
    let primal = build_primal(&setup, &cfg).unwrap();
    let online = randrb_cli::commands::online_set(&setup, &cfg).unwrap();
    let points = online_points(&setup, &primal.model, &online, true);
    let inside = (0..100u64)
        .filter(|&seed| {
            let sk = draw(&setup, &cfg, 1000 + seed).unwrap();
            let meta = RowMeta {
                seed,
                n_primal: 10,
                n_dual: setup.system.dim(),
                k: sk.k(),
                w: Some(4.0),
                delta_prob: Some(1e-2),
            };
            evaluate(&setup, &points, &sk, &DualSource::Exact, &meta)
                .iter()
                .all(|r| r.effectivity.is_some_and(|e| (0.25..=4.0).contains(&e)))
        })
        .count();
    assert!(inside >= 99, "{inside}/100");
}

#[test]
fn sweep_histogram_concatenates_repetitions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_config(dir.path());
    cfg.online_size = 5;
    let rows = cmd_sweep_histogram(&cfg, 3).unwrap();
    assert_eq!(rows.len(), 15);
    let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(&seeds[..6], &[1, 1, 1, 1, 1, 2]);
    assert!(dir.path().join("histogram.csv").exists());
}

#[test]
fn tables_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let t = cmd_table22(&dir.path().join("t.csv")).unwrap();
    let find = |d: f64, w: f64, m: u64| t.iter().find(|r| r.delta == d && r.w == w && r.m_points == m).unwrap().k;
    assert_eq!(find(1e-2, 4.0, 1_000_000), 21);
    assert_eq!(find(1e-4, 2.0, 1), 48);
    assert_eq!(find(1e-2, 2.0, 1_000_000_000), 132);
    assert_eq!(t.len(), 24);

    let f = cmd_fig21(&dir.path().join("f.csv"), 10).unwrap();
    let row = |w: f64, k: u32| f.iter().find(|r| r.w == w && r.k == k).unwrap();
    let two = |x: f64, t: f64| (x - t).abs() < 10f64.powf(t.log10().floor() - 1.0);
    assert!(two(row(50.0, 10).exact, 2.6e-16) && two(row(50.0, 10).bound.unwrap(), 1.5e-15));
    assert!(two(row(1.1, 3).exact, 8.2e-1) && row(1.1, 3).bound.is_none());
    assert!(two(row(10.0, 3).exact, 1.3e-3) && two(row(10.0, 3).bound.unwrap(), 4.4e-3));
    let text = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert!(text.starts_with("w,k,exact,bound\n"));
    assert!(text.contains("1.1,3,"));
}
