use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use randrb::{CovarianceChoice, DualNorm, Error, GreedyConfig, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Benchmark {
    Helmholtz { h: f64 },
    /// Path to a `system.json` written by `randrb::io::save_system`.
    Manifest { path: PathBuf },
}

/// Either an explicit `k`, or `(w, delta, online_count)` from which `K` is derived.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchPlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub online_count: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualMethod {
    Alg1,
    Alg2,
    Pod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub method: DualMethod,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_norm")]
    pub norm: DualNorm,
    /// Number of parameters whose duals feed the POD.
    #[serde(default = "default_pod_params")]
    pub pod_params: usize,
    #[serde(default = "default_pod_modes")]
    pub pod_modes: usize,
}

fn default_tol() -> f64 {
    2.0
}
fn default_q() -> f64 {
    0.99
}
fn default_max_iterations() -> usize {
    100
}
fn default_norm() -> DualNorm {
    DualNorm::Auto
}
fn default_pod_params() -> usize {
    40
}
fn default_pod_modes() -> usize {
    20
}

impl DualConfig {
    pub fn greedy(&self) -> GreedyConfig {
        GreedyConfig {
            tol: self.tol,
            q: self.q,
            max_iterations: self.max_iterations,
            norm: self.norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub sketch: u64,
    pub train: u64,
    pub online: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub benchmark: Benchmark,
    pub covariance: String,
    pub n_primal: usize,
    #[serde(default = "default_extra")]
    pub extra_reference: usize,
    pub sketch: SketchPlan,
    pub dual: DualConfig,
    pub train_size: usize,
    pub online_size: usize,
    pub seeds: Seeds,
    pub output: PathBuf,
}

fn default_extra() -> usize {
    10
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn covariance_choice(&self) -> Result<CovarianceChoice> {
        self.covariance.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let choice = self.covariance_choice()?;
        match &self.benchmark {
            Benchmark::Helmholtz { h } if h.is_nan() || *h <= 0.0 => {
                return Err(Error::Config(format!("mesh size must be positive, got {h}")));
            }
            Benchmark::Manifest { path } => {
                if !path.exists() {
                    return Err(Error::Config(format!("manifest {} does not exist", path.display())));
                }
                if !matches!(choice, CovarianceChoice::Identity | CovarianceChoice::H1) {
                    return Err(Error::Config(format!(
                        "covariance `{}` needs the benchmark geometry; manifests support identity and h1",
                        choice.keyword()
                    )));
                }
            }
            _ => {}
        }
        if self.n_primal == 0 || self.train_size == 0 || self.online_size == 0 {
            return Err(Error::Config("n_primal, train_size and online_size must be >= 1".into()));
        }
        if self.dual.method == DualMethod::Alg2 && self.extra_reference == 0 {
            return Err(Error::Config("alg2 needs extra_reference >= 1".into()));
        }
        if self.dual.method == DualMethod::Pod && (self.dual.pod_params == 0 || self.dual.pod_modes == 0) {
            return Err(Error::Config("pod needs pod_params and pod_modes >= 1".into()));
        }
        self.dual.greedy().validate()?;
        let s = &self.sketch;
        let derived = [s.w.is_some(), s.delta.is_some(), s.online_count.is_some()];
        match (s.k, derived) {
            (Some(_), [false, false, false]) | (None, [true, true, true]) => Ok(()),
            _ => Err(Error::Config(
                "sketch plan must set either `k` alone or all of `w`, `delta`, `online_count`".into(),
            )),
        }
    }
}
