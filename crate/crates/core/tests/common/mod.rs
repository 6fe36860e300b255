#![allow(dead_code)]

use randrb::{
    assemble_helmholtz, reduce, sample_parameters, weak_greedy_primal, CovarianceChoice, CovarianceSpec,
    HelmholtzF64, ReducedModel, SampleRole, SampleSet,
};

pub struct Desk {
    pub disc: HelmholtzF64,
    pub cov: CovarianceSpec<f64>,
    pub train: SampleSet<f64>,
    pub primal: ReducedModel<f64>,
    pub reference: ReducedModel<f64>,
}

/// `h = 0.05`, 10 primal and 10 extra reference snapshots from `train_size` points.
pub fn desk(train_size: usize) -> Desk {
    let disc = assemble_helmholtz::<f64>(0.05).unwrap();
    let cov = disc.covariance(CovarianceChoice::H1).unwrap();
    let train = sample_parameters(&HelmholtzF64::domain(), train_size, 1, SampleRole::Train).unwrap();
    let g = weak_greedy_primal(disc.system(), disc.riesz_h1(), &train, 20).unwrap();
    let (v, vref) = g.reference_split(10).unwrap();
    Desk {
        primal: reduce(disc.system(), &v).unwrap(),
        reference: reduce(disc.system(), &vref).unwrap(),
        disc,
        cov,
        train,
    }
}

pub fn online(count: usize, seed: u64) -> SampleSet<f64> {
    sample_parameters(&HelmholtzF64::domain(), count, seed, SampleRole::Online).unwrap()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
