use tvqueue::bounds::{
    bound_result, decompound_cdf, eta_moment_report, long_idle_probability, mg1_oracles, sample_compound_geometric,
    sample_prop_bound, stability_check, stability_for, tail_constant, tail_ratio, BoundsError, StabilityVerdict,
    TailSetup, TailTarget,
};
use tvqueue::sim::{run_busy_period, run_cycle, run_until_long_idle};
use tvqueue::stats::{mean_estimate, test_st_dominance, EmpiricalDistribution};
use tvqueue::streams::map_replications;
use tvqueue::{
    CostFunction, Discipline, Init, JointLaw, Lane, Marginal, Patience, QueueSpec, RandomStream, RateFunction,
    ReplicationKey, SimOptions,
};

fn exp(rate: f64) -> Marginal {
    Marginal::Exponential { rate }
}

fn periodic_preset() -> QueueSpec {
    QueueSpec::new(
        RateFunction::sinusoid(0.4, 0.2, 1.0, 0.6),
        JointLaw::product(exp(1.0), Patience::finite(exp(1.0))),
        Discipline::Fcfs,
        Init::Empty,
    )
}

#[test]
fn stability_examples() {
    let r = stability_check(1.0, &Marginal::Deterministic { value: 0.5 }, 1.0).unwrap();
    assert_eq!((r.rho_eff, r.verdict), (0.5, StabilityVerdict::Stable));
    let r = stability_check(2.0, &exp(1.0), 0.4).unwrap();
    assert!((r.rho_eff - 0.8).abs() < 1e-15 && r.verdict == StabilityVerdict::Stable);
    let r = stability_check(2.0, &exp(1.0), 1.0).unwrap();
    assert_eq!((r.rho_eff, r.verdict), (2.0, StabilityVerdict::Unstable));
    assert!(r.rho_eff <= r.rho_h);
    assert_eq!(
        stability_check(1.0, &Marginal::Pareto { shape: 1.0, scale: 1.0 }, 1.0),
        Err(BoundsError::InfiniteMeanService)
    );
    let atom = JointLaw::product(exp(1.0), Patience::with_atom(exp(1.0), 0.25));
    assert_eq!(stability_for(2.0, &atom).unwrap().rho_eff, 0.5);
    assert_eq!(stability_for(2.0, &JointLaw::product(exp(1.0), Patience::finite(exp(1.0)))).unwrap().rho_eff, 0.0);
}

#[test]
fn mg1_oracles_close_against_simulation() {
    let presets = [
        (0.5, exp(1.0)),
        (0.3, Marginal::Uniform { low: 0.5, high: 2.5 }),
        (0.4, Marginal::Deterministic { value: 1.0 }),
    ];
    for (lambda, service) in presets {
        let oracle = mg1_oracles(lambda, &service).unwrap();
        let spec = QueueSpec::new(
            RateFunction::constant(lambda),
            JointLaw::infinite_patience(service.clone()),
            Discipline::Fcfs,
            Init::Workload { x: 1.0 },
        );
        let opened = spec.clone().with_init(Init::FromService);
        let g = CostFunction::one();
        let rows = map_replications(100_000, None, |r| {
            let key = ReplicationKey::new(21, r);
            let tau = run_busy_period(&spec, &g, key, SimOptions::default()).unwrap().1.duration;
            let served = run_busy_period(&opened, &g, key, SimOptions::default()).unwrap().1.eta_star as f64 + 1.0;
            (tau, served)
        });
        let tau = mean_estimate(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let served = mean_estimate(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        assert!((tau.mean - oracle.mean_tau(1.0)).abs() <= 3.0 * tau.se, "{service}: E tau {} vs {}", tau.mean, oracle.mean_tau(1.0));
        assert!(
            (served.mean - oracle.busy_count_mean).abs() <= 3.0 * served.se,
            "{service}: served {} vs {}",
            served.mean,
            oracle.busy_count_mean
        );
    }
    assert_eq!(mg1_oracles(0.0, &exp(1.0)).unwrap().mean_tau(2.5), 2.5);
    assert!(mg1_oracles(1e-12, &exp(1.0)).unwrap().mean_tau(1.0) - 1.0 < 1e-11);
    assert!(matches!(mg1_oracles(1.0, &exp(1.0)), Err(BoundsError::UnstableInput(_))));
    let pk = mg1_oracles(0.5, &exp(1.0)).unwrap().pk_mean_workload;
    assert!((pk - 1.0).abs() < 1e-12);
}

#[test]
fn rare_long_idle_bound_collapses_to_one_period() {
    let (kappa, g0) = (1.0, 2.0);
    let b = sample_prop_bound(|_| Ok((5.0, 5.0)), kappa, 1e-6, g0, 10_000, 3, None).unwrap();
    let ones = b.iota.iter().filter(|&&i| i == 1).count();
    assert!(ones >= 9_990);
    for (i, v) in b.iota.iter().zip(&b.prop2) {
        if *i == 1 {
            assert_eq!(*v, kappa * g0);
        }
    }
}

#[test]
fn unit_sampler_gives_geometric_mean() {
    let (kappa, lambda_h) = (1.0, 0.7);
    let b = sample_prop_bound(|_| Ok((1.0, 1.0)), kappa, lambda_h, 0.0, 100_000, 4, None).unwrap();
    for (i, v) in b.iota.iter().zip(&b.prop2) {
        assert_eq!(*v, *i as f64 - 1.0);
    }
    let est = mean_estimate(&b.prop2);
    let want = 1.0 / long_idle_probability(kappa, lambda_h) - 1.0;
    assert!((est.mean - want).abs() <= 3.0 * est.se, "{} vs {want}", est.mean);
    assert!(sample_prop_bound(|_| Ok((1.0, 1.0)), kappa, lambda_h, 0.0, 99, 4, None).is_err());
}

fn dominating_busy_sampler(spec: &QueueSpec, g: &CostFunction) -> impl Fn(ReplicationKey) -> Result<(f64, f64), String> + Sync + Send {
    let hi = spec.clone().with_rate(spec.rate.dominating()).with_init(Init::FromService);
    let g = g.clone();
    move |key| run_busy_period(&hi, &g, key, SimOptions::default()).map(|(_, s)| (s.a, s.a_star)).map_err(|e| e.to_string())
}

#[test]
fn cycle_functional_is_dominated_by_geometric_bounds() {
    let spec = periodic_preset();
    for g in [CostFunction::one(), CostFunction::identity()] {
        let n = 10_000;
        let cycles = map_replications(n, None, |r| run_cycle(&spec, &g, ReplicationKey::new(31, r), SimOptions::default()).unwrap().1);
        let a: Vec<f64> = cycles.iter().map(|s| s.a).collect();
        let a_star: Vec<f64> = cycles.iter().map(|s| s.a_star).collect();
        let a_bar: Vec<f64> = map_replications(n, None, |r| {
            run_until_long_idle(&spec, &g, ReplicationKey::new(31, r), SimOptions::default()).unwrap().1.a_bar
        });
        let b = sample_prop_bound(dominating_busy_sampler(&spec, &g), 1.0, 0.6, g.at_zero(), n, 32, None).unwrap();
        for (lower, upper, what) in [
            (&a, &b.prop2, "A vs geometric bound"),
            (&a_bar, &b.prop2, "A-bar vs geometric bound"),
            (&a_star, &b.prop3, "A* vs geometric bound"),
            (&a, &b.shifted_sum, "A vs shifted sum"),
        ] {
            let v = test_st_dominance(lower, upper, 0.01).unwrap();
            assert!(v.consistent(), "{g} {what}: D+ = {} > {}", v.statistic, v.critical);
        }
    }
}

#[test]
fn point_mass_decompounds_in_closed_form() {
    let f = EmpiricalDistribution::new(vec![1.0; 10]).unwrap();
    let grid = [0.5, 1.9, 2.0, 3.5, 4.0, 4.5];
    let d = decompound_cdf(&f, 1.0, std::f64::consts::LN_2, &grid, 1e-6).unwrap();
    let j35 = d.j[3];
    assert!((j35 - 0.75).abs() <= 1e-9, "J(3.5) = {j35}");
    assert_eq!(d.j[0], 0.0);
    assert_eq!(d.j[1], 0.0);
    assert!((d.j[2] - 0.5).abs() <= 1e-12);
    assert!((d.j[4] - 0.875).abs() <= 1e-9);
    assert_eq!(d.lattice_error, 0.0);
    assert!(d.tol_met && d.residual_weight <= 0.5e-6);
    assert_eq!(d.rounding, "up");
}

#[test]
fn lattice_decompounding_matches_monte_carlo() {
    let mut s = RandomStream::new(41, 0, Lane::Auxiliary);
    let f = EmpiricalDistribution::new((0..2000).map(|_| s.exponential(1.0) + 0.2 * s.uniform()).collect()).unwrap();
    let (kappa, lambda_h, tol) = (1.0, 0.6, 1e-3);
    let mc = EmpiricalDistribution::new(sample_compound_geometric(&f, kappa, lambda_h, 1_000_000, 42)).unwrap();
    let grid: Vec<f64> = (0..50).map(|i| 1.0 + 0.3 * i as f64).collect();
    let d = decompound_cdf(&f, kappa, lambda_h, &grid, tol).unwrap();
    assert!(d.tol_met, "lattice error {} residual {}", d.lattice_error, d.residual_weight);
    for (u, j) in grid.iter().zip(&d.j) {
        let p = mc.ecdf(*u);
        let se = (p * (1.0 - p) / mc.len() as f64).sqrt();
        assert!((j - p).abs() <= 3.0 * se + tol, "J({u}) = {j} vs MC {p}");
    }
    assert!(d.j.windows(2).all(|w| w[0] <= w[1]));
    assert!(d.j.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn large_lattices_use_the_same_convolution() {
    // Spread-out samples push the lattice past the direct-convolution size.
    let mut s = RandomStream::new(43, 0, Lane::Auxiliary);
    let f = EmpiricalDistribution::new((0..500).map(|_| 5.0 * s.uniform()).collect()).unwrap();
    let grid: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
    let d = decompound_cdf(&f, 2.0, 0.5, &grid, 1e-2).unwrap();
    assert!(d.cells > 512);
    let mc = EmpiricalDistribution::new(sample_compound_geometric(&f, 2.0, 0.5, 400_000, 44)).unwrap();
    for (u, j) in grid.iter().zip(&d.j) {
        let p = mc.ecdf(*u);
        let se = (p * (1.0 - p) / mc.len() as f64).sqrt();
        assert!((j - p).abs() <= 3.0 * se + 1e-2, "J({u}) = {j} vs MC {p}");
    }
}

#[test]
fn bound_columns_are_distribution_functions() {
    let spec = periodic_preset();
    let g = CostFunction::one();
    let cycles = map_replications(2000, None, |r| {
        let hi = spec.clone().with_rate(spec.rate.dominating()).with_init(Init::FromService);
        run_busy_period(&hi, &g, ReplicationKey::new(51, r), SimOptions::default()).unwrap().1
    });
    let f = EmpiricalDistribution::new(cycles.iter().map(|s| s.a).collect()).unwrap();
    let f_star = EmpiricalDistribution::new(cycles.iter().map(|s| s.a_star).collect()).unwrap();
    let prop2 = EmpiricalDistribution::new(vec![0.5, 1.0, 7.0]).unwrap();
    let grid: Vec<f64> = (0..60).map(|i| 0.25 * i as f64).collect();
    let b = bound_result(&f, &f_star, &prop2, 1.0, 0.6, &grid, 1e-3).unwrap();
    for col in [&b.j, &b.j_star, &b.prop2_cdf] {
        assert!(col.windows(2).all(|w| w[0] <= w[1]));
        assert!(col.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
    for (u, j) in grid.iter().zip(&b.j) {
        if *u < 1.0 + f.min() {
            assert_eq!(*j, 0.0);
        }
    }
    assert!(b.j_meta.tol_met && b.j_star_meta.tol_met);
    assert!(decompound_cdf(&f, 1.0, 0.6, &grid, 0.0).is_err());
}

#[test]
fn unreachable_tolerance_is_reported() {
    // Many samples just above a grid point keep the round-down and round-up
    // columns apart until the cell cap.
    let mut s = RandomStream::new(52, 0, Lane::Auxiliary);
    let f = EmpiricalDistribution::new((0..1000).map(|_| 1.0 + 1e-9 * s.uniform()).collect()).unwrap();
    let d = decompound_cdf(&f, 1.0, 0.6, &[0.5, 2.0, 3.0], 1e-3).unwrap();
    assert!(!d.tol_met);
    assert!(d.lattice_error > 5e-4);
    assert!(d.cells <= tvqueue::bounds::MAX_LATTICE_CELLS);
}

#[test]
fn tail_reference_and_constant() {
    assert!((tail_constant(1.0, 0.4, 0.8) - 2.459).abs() < 1e-3);
    let pareto = Marginal::Pareto { shape: 1.5, scale: 1.0 };
    let samples: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
    let setup = TailSetup { service: &pareto, rho_h: 0.8, kappa: 1.0, lambda_h: 0.4, g0: 1.0 };
    let t = tail_ratio(&samples, TailTarget::CycleLength, setup, &[0.9, 0.99]).unwrap();
    assert_eq!(t.label, "trend check");
    for row in &t.rows {
        let arg = (row.u - 1.0) * 0.2;
        let want = if arg >= 1.0 { arg.powf(-1.5) } else { 1.0 };
        assert!((row.reference - want).abs() <= 1e-12 * want);
        assert!(row.ratio >= 0.0 && row.reference > 0.0 && row.reference <= 1.0);
        assert_eq!(row.bound, t.bound);
    }
    let busy = tail_ratio(&samples, TailTarget::BusyPeriod, setup, &[0.5]).unwrap();
    assert!((busy.bound - 5.0).abs() < 1e-12);
    let unstable = TailSetup { rho_h: 1.0, ..setup };
    assert!(matches!(tail_ratio(&samples, TailTarget::CycleLength, unstable, &[0.5]), Err(BoundsError::UnstableInput(_))));
    assert!(matches!(tail_ratio(&samples, TailTarget::CycleLength, setup, &[1.0]), Err(BoundsError::QuantileBeyondSample(_))));
}

#[test]
fn served_count_moments() {
    let empty = QueueSpec::new(
        RateFunction::constant_bounded(0.0, 1.0).with_period(1.0),
        JointLaw::product(exp(1.0), Patience::finite(exp(1.0))),
        Discipline::Fcfs,
        Init::Empty,
    );
    let eta: Vec<f64> = (0..200)
        .map(|r| run_cycle(&empty, &CostFunction::one(), ReplicationKey::new(61, r), SimOptions::default()).unwrap().1.eta_star as f64)
        .collect();
    for m in 1..=3 {
        assert_eq!(eta_moment_report(&eta, m, &empty.joint, 1.0, 1).unwrap().estimate.estimate, 0.0);
    }

    let spec = periodic_preset();
    let eta: Vec<f64> = map_replications(100_000, None, |r| {
        run_cycle(&spec, &CostFunction::one(), ReplicationKey::new(62, r), SimOptions::default()).unwrap().1.eta_star as f64
    });
    let m1 = eta_moment_report(&eta, 1, &spec.joint, 0.6, 1).unwrap();
    assert_eq!(m1.estimate.estimate, tvqueue::stats::mean(&eta));
    let m2 = eta_moment_report(&eta, 2, &spec.joint, 0.6, 1).unwrap();
    assert!(m2.applicability.guaranteed_finite);
    let change = m2.estimate.last_doubling_change().unwrap();
    assert!(change < 0.05, "last doubling moved the estimate by {change}");

    let heavy = JointLaw::product(Marginal::Pareto { shape: 1.5, scale: 0.5 }, Patience::finite(exp(1.0)));
    let r = eta_moment_report(&eta, 2, &heavy, 0.6, 1).unwrap();
    assert!(!r.applicability.service_moment_finite && !r.applicability.guaranteed_finite);
    let dependent = JointLaw::comonotone(exp(1.0), Patience::finite(exp(1.0)));
    assert!(!eta_moment_report(&eta, 1, &dependent, 0.6, 1).unwrap().applicability.product_form);
}
