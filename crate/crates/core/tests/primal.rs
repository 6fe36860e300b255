mod common;

use common::{desk, online, sub};
use randrb::{
    assemble_helmholtz, reduce, residual_dual_norm, residual_vector, sample_parameters, solve_reduced,
    weak_greedy_primal, AffineSystem, CoefficientFn, CsrMatrix, DMatrix, HelmholtzF64, Parameter, ReducedSpace,
    SampleRole, SpdMatrix,
};

#[test]
fn residual_of_toy_system() {
    let sys = AffineSystem::new(
        vec![CsrMatrix::<f64>::identity(2)],
        vec![CoefficientFn::Constant { value: 1.0 }],
        vec![vec![1.0, 2.0]],
        vec![CoefficientFn::Constant { value: 1.0 }],
    )
    .unwrap();
    let mu = Parameter::new(vec![]);
    assert_eq!(residual_vector(&sys, &mu, &[1.0, 0.0]).unwrap(), vec![0.0, 2.0]);
    assert_eq!(residual_vector(&sys, &mu, &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
    let r = SpdMatrix::new(CsrMatrix::from_diagonal(&[4.0, 1.0])).unwrap();
    let sys2 = AffineSystem::new(
        vec![CsrMatrix::<f64>::identity(2)],
        vec![CoefficientFn::Constant { value: 1.0 }],
        vec![vec![2.0, 3.0]],
        vec![CoefficientFn::Constant { value: 1.0 }],
    )
    .unwrap();
    let d = residual_dual_norm(&sys2, &mu, &[0.0, 0.0], &r).unwrap();
    assert!((d - 10f64.sqrt()).abs() < 1e-14);
}

#[test]
fn snapshot_space_reproduces_its_solution() {
    let d = assemble_helmholtz::<f64>(0.05).unwrap();
    let mu0 = Parameter::new(vec![0.7, 21.0]);
    let u0 = d.full_solve(&mu0).unwrap();
    let space = ReducedSpace::orthonormalize(&DMatrix::from_columns(u0.len(), std::slice::from_ref(&u0)), d.riesz_h1(), "h1").unwrap();
    let rm = reduce(d.system(), &space).unwrap();
    assert_eq!(rm.operator_terms().len(), 3);
    assert!(rm.operator_terms().iter().all(|t| t.nrows() == 1 && t.ncols() == 1));
    let s = solve_reduced(&rm, &mu0).unwrap();
    let e = sub(&u0, &s.lifted);
    assert!(d.riesz_h1().norm(&e) <= 1e-8 * d.riesz_h1().norm(&u0));
    assert!(residual_dual_norm(d.system(), &mu0, &s.lifted, d.riesz_h1()).unwrap() < 1e-8);
}

#[test]
fn greedy_interpolates_its_snapshots() {
    let d = assemble_helmholtz::<f64>(0.05).unwrap();
    let train = sample_parameters(&HelmholtzF64::domain(), 200, 9, SampleRole::Train).unwrap();
    let g = weak_greedy_primal(d.system(), d.riesz_h1(), &train, 15).unwrap();
    assert!(g.space.orthonormality_defect(d.riesz_h1()) < 1e-10);
    let rm = reduce(d.system(), &g.space).unwrap();
    for step in &g.trace {
        let mu = Parameter::from_f64(&step.mu);
        let ut = rm.space().lift(&rm.solve_coeffs(&mu).unwrap());
        let f = d.system().assemble_rhs(&mu).unwrap();
        let r = residual_dual_norm(d.system(), &mu, &ut, d.riesz_h1()).unwrap();
        assert!(r <= 1e-8 * d.riesz_h1().dual_norm(&f), "{r}");
    }
}

#[test]
fn max_residual_decreases_when_galerkin_is_optimal() {
    // With A = R the residual dual norm is the R-norm of the error of an R-orthogonal projection.
    let d = assemble_helmholtz::<f64>(0.05).unwrap();
    let r = d.riesz_h1();
    let n = d.n_dofs();
    let f0 = d.system().rhs_terms()[0].clone();
    let f1: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
    let f2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.05).cos()).collect();
    let sys = AffineSystem::new(
        vec![r.matrix().clone()],
        vec![CoefficientFn::Constant { value: 1.0 }],
        vec![f0, f1, f2],
        vec![
            CoefficientFn::Constant { value: 1.0 },
            CoefficientFn::Coordinate { index: 0 },
            CoefficientFn::Product { indices: vec![1, 1], scale: 1e-3 },
        ],
    )
    .unwrap();
    let train = sample_parameters(&HelmholtzF64::domain(), 100, 4, SampleRole::Train).unwrap();
    let g = weak_greedy_primal(&sys, r, &train, 3).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=g.space.dim() {
        let rm = reduce(&sys, &g.space.leading(k).unwrap()).unwrap();
        let worst = train
            .iter()
            .map(|mu| residual_dual_norm(&sys, mu, &rm.space().lift(&rm.solve_coeffs(mu).unwrap()), r).unwrap())
            .fold(0.0, f64::max);
        assert!(worst <= last * (1.0 + 1e-12), "{worst} > {last}");
        last = worst;
    }
    assert!(last < 1e-8);
}

#[test]
fn desk_primal_accuracy() {
    let d = assemble_helmholtz::<f64>(0.05).unwrap();
    let train = sample_parameters(&HelmholtzF64::domain(), 500, 1, SampleRole::Train).unwrap();
    let g = weak_greedy_primal(d.system(), d.riesz_h1(), &train, 20).unwrap();
    let rm = reduce(d.system(), &g.space).unwrap();
    let mut errs: Vec<f64> = online(200, 8)
        .iter()
        .map(|mu| {
            let u = d.full_solve(mu).unwrap();
            let ut = solve_reduced(&rm, mu).unwrap().lifted;
            d.riesz_h1().norm(&sub(&u, &ut)) / d.riesz_h1().norm(&u)
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    assert!(errs[errs.len() / 2] < 0.1, "median {}", errs[errs.len() / 2]);
}

#[test]
fn reference_split_shapes() {
    let d = assemble_helmholtz::<f64>(0.1).unwrap();
    let train = sample_parameters(&HelmholtzF64::domain(), 200, 2, SampleRole::Train).unwrap();
    let g = weak_greedy_primal(d.system(), d.riesz_h1(), &train, 30).unwrap();
    let (v, vref) = g.reference_split(20).unwrap();
    assert_eq!((v.dim(), vref.dim()), (20, 30));
    let g0 = weak_greedy_primal(d.system(), d.riesz_h1(), &train, 20).unwrap();
    let (v0, vref0) = g0.reference_split(20).unwrap();
    assert_eq!(v0.basis(), vref0.basis());
    assert_eq!(v0.basis(), v.basis());
}

#[test]
fn reference_is_more_accurate() {
    let k = desk(500);
    let set = online(200, 12);
    let better = set
        .iter()
        .filter(|mu| {
            let u = k.disc.full_solve(mu).unwrap();
            let err = |rm: &randrb::ReducedModel<f64>| match solve_reduced(rm, mu) {
                Ok(s) => k.cov.sigma_norm(&sub(&u, &s.lifted)),
                Err(_) => f64::INFINITY,
            };
            err(&k.reference) <= err(&k.primal)
        })
        .count();
    assert!(better as f64 >= 0.95 * set.len() as f64, "{better}");
}
