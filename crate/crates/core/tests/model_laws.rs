use proptest::prelude::*;
use tvqueue::model::{eval_rate, validate_cost, CostKind};
use tvqueue::stats::ks_one_sample;
use tvqueue::streams::{sample_joint, Lane, RandomStream};
use tvqueue::{CostFunction, JointLaw, Marginal, Patience, RateFunction};

fn shipped_rates() -> Vec<RateFunction> {
    vec![
        RateFunction::constant(0.7),
        RateFunction::constant_bounded(0.3, 1.0).with_period(2.0),
        RateFunction::sinusoid(0.4, 0.2, 1.0, 0.6),
        RateFunction::sinusoid(0.5, 0.5, 3.0, 1.0),
        RateFunction::piecewise(vec![[0.0, 0.2], [1.0, 0.9]], Some(2.0), 1.0),
        RateFunction::piecewise(vec![[0.0, 0.0], [0.5, 1.5], [2.5, 0.25]], None, 1.5),
    ]
}

#[test]
fn rates_stay_within_bound() {
    let mut s = RandomStream::new(42, 0, Lane::Auxiliary);
    for rate in shipped_rates() {
        let kappa = rate.kappa.unwrap_or(1.0);
        for _ in 0..10_000 {
            let t = 10.0 * kappa * s.uniform();
            let v = eval_rate(&rate, t).unwrap();
            assert!((0.0..=rate.lambda_h).contains(&v), "{rate}: lambda({t}) = {v}");
        }
    }
}

fn joint_kinds() -> Vec<JointLaw> {
    let exp1 = Marginal::Exponential { rate: 1.0 };
    vec![
        JointLaw::product(exp1.clone(), Patience::finite(Marginal::Exponential { rate: 0.5 })),
        JointLaw::comonotone(Marginal::Uniform { low: 0.5, high: 2.0 }, Patience::finite(Marginal::Pareto { shape: 2.0, scale: 1.0 })),
        JointLaw::gaussian_copula(exp1.clone(), Patience::finite(Marginal::Uniform { low: 0.0, high: 3.0 }), 0.6),
        JointLaw::gaussian_copula(Marginal::Pareto { shape: 1.5, scale: 2.0 / 3.0 }, Patience::finite(exp1.clone()), -0.4),
        JointLaw::infinite_patience(Marginal::Deterministic { value: 2.0 }),
    ]
}

#[test]
fn sampled_marginals_match_their_cdfs() {
    for (i, joint) in joint_kinds().into_iter().enumerate() {
        let mut marks = RandomStream::new(7, i as u64, Lane::Marks);
        let draws: Vec<_> = (0..100_000).map(|_| sample_joint(&mut marks, &joint)).collect();
        assert!(draws.iter().all(|m| m.service > 0.0 && m.patience > 0.0));
        if !matches!(joint.service, Marginal::Deterministic { .. }) {
            let s: Vec<f64> = draws.iter().map(|m| m.service).collect();
            let ks = ks_one_sample(&s, &|x| joint.g_cdf(x)).unwrap();
            assert!(ks.p_value > 0.01, "{joint}: service KS p = {}", ks.p_value);
        }
        if !joint.has_infinite_patience() {
            let y: Vec<f64> = draws.iter().map(|m| m.patience).collect();
            let ks = ks_one_sample(&y, &|x| joint.h_cdf(x)).unwrap();
            assert!(ks.p_value > 0.01, "{joint}: patience KS p = {}", ks.p_value);
        } else {
            assert!(draws.iter().all(|m| m.patience == f64::INFINITY));
        }
    }
}

#[test]
fn deterministic_infinite_patience_pairs() {
    let joint = JointLaw::infinite_patience(Marginal::Deterministic { value: 2.0 });
    let mut marks = RandomStream::new(1, 1, Lane::Marks);
    for _ in 0..1000 {
        let m = sample_joint(&mut marks, &joint);
        assert_eq!((m.service, m.patience), (2.0, f64::INFINITY));
    }
}

#[test]
fn product_pairs_are_uncorrelated() {
    let cap = 50.0;
    let joint = JointLaw::product(Marginal::Exponential { rate: 1.0 }, Patience::finite(Marginal::Exponential { rate: 1.0 }));
    let mut marks = RandomStream::new(3, 0, Lane::Marks);
    let n = 100_000;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let m = sample_joint(&mut marks, &joint);
            (m.service, m.patience.min(cap))
        })
        .collect();
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxy = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n as f64;
    let sx = (pairs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n as f64).sqrt();
    let sy = (pairs.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n as f64).sqrt();
    let r = sxy / (sx * sy);
    // Under independence the sample correlation has SE close to 1/sqrt(n).
    assert!(r.abs() < 4.0 / (n as f64).sqrt(), "correlation {r}");
}

#[test]
fn comonotone_ratio_is_exact() {
    let joint = JointLaw::comonotone(Marginal::Exponential { rate: 1.0 }, Patience::finite(Marginal::Exponential { rate: 0.5 }));
    let mut marks = RandomStream::new(9, 0, Lane::Marks);
    for _ in 0..10_000 {
        let m = sample_joint(&mut marks, &joint);
        assert_eq!(m.patience, 2.0 * m.service);
    }
}

fn cost_menu() -> Vec<CostFunction> {
    vec![
        CostFunction::constant(2.5),
        CostFunction::power(0.0),
        CostFunction::power(1.0),
        CostFunction::power(2.5),
        CostFunction::exp_decay(1.3),
        CostFunction::indicator_above(1.0),
        CostFunction::piecewise_linear(vec![[0.0, 1.0], [1.0, 3.0], [2.0, 0.5], [4.0, 0.5]]),
    ]
}

#[test]
fn antiderivatives_differentiate_back() {
    let mut s = RandomStream::new(5, 0, Lane::Auxiliary);
    for g in cost_menu() {
        let breaks = g.breakpoints();
        let mut checked = 0;
        while checked < 100 {
            let w = 0.01 + 5.0 * s.uniform();
            let h = 1e-5 * w;
            if breaks.iter().any(|b| (b - w).abs() < 10.0 * h) {
                continue;
            }
            let d = (g.antiderivative(w + h).unwrap() - g.antiderivative(w - h).unwrap()) / (2.0 * h);
            let want = g.eval(w);
            assert!((d - want).abs() <= 1e-8 * want.abs() + 1e-12, "{g} at {w}: {d} vs {want}");
            checked += 1;
        }
    }
}

#[test]
fn shipped_costs_are_valid() {
    for g in cost_menu() {
        validate_cost(&g).unwrap();
        assert!(g.eval(0.0) >= 0.0);
    }
    assert!(validate_cost(&CostFunction::new(CostKind::Power { exponent: -1.0 })).is_err());
}

proptest! {
    #[test]
    fn costs_are_nonnegative(w in 0.0f64..1e3, idx in 0usize..7) {
        let g = &cost_menu()[idx];
        prop_assert!(g.eval(w) >= 0.0);
    }

    #[test]
    fn indicator_is_lower_semicontinuous(s in 0.0f64..10.0) {
        let g = CostFunction::indicator_above(s);
        // At the threshold the value is the lower one.
        prop_assert_eq!(g.eval(s), 0.0);
        prop_assert_eq!(g.eval(s + 1e-9 * (1.0 + s)), 1.0);
    }

    #[test]
    fn comonotone_pairs_are_ordered(seed in any::<u64>()) {
        let joint = JointLaw::comonotone(
            Marginal::Uniform { low: 0.1, high: 4.0 },
            Patience::finite(Marginal::Pareto { shape: 1.2, scale: 0.5 }),
        );
        let mut marks = RandomStream::new(seed, 0, Lane::Marks);
        let a = sample_joint(&mut marks, &joint);
        let b = sample_joint(&mut marks, &joint);
        prop_assert!((a.service - b.service) * (a.patience - b.patience) >= 0.0);
    }

    #[test]
    fn spec_round_trips_through_json(level in 0.0f64..2.0, x in 0.01f64..10.0) {
        let spec = tvqueue::QueueSpec::new(
            RateFunction::constant_bounded(level, 2.0),
            JointLaw::product(Marginal::Exponential { rate: 1.0 }, Patience::with_atom(Marginal::Exponential { rate: 2.0 }, 0.25)),
            tvqueue::Discipline::LcfsPr { room: tvqueue::Room::Finite(3) },
            tvqueue::Init::Workload { x },
        );
        let text = serde_json::to_string(&spec).unwrap();
        let back: tvqueue::QueueSpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, spec);
    }
}
