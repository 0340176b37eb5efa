use lazyabc::smoothers::{
    fit_binomial_mean, fit_kernel_logistic, fit_positive_mean, fit_tail_prob_boxcox, normal_cdf,
    BoxCoxOptions, KernelOptions, Smoother,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn logistic_with_independent_response_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = uniform(&mut rng, 2000, 0.0, 1.0);
    let z: Vec<f64> = (0..2000).map(|_| f64::from(rng.random_bool(0.5))).collect();
    let s = fit_kernel_logistic(&x, &z, &KernelOptions::default()).unwrap();
    for xv in [0.05, 0.25, 0.5, 0.75, 0.95] {
        assert!((s.eval(xv) - 0.5).abs() < 0.1, "{xv}: {}", s.eval(xv));
    }
}

#[test]
fn logistic_follows_a_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = uniform(&mut rng, 1000, -2.0, 2.0);
    let z: Vec<f64> = x.iter().map(|v| f64::from(*v < 0.0)).collect();
    let s = fit_kernel_logistic(&x, &z, &KernelOptions::default()).unwrap();
    assert!(s.eval(-1.0) > 0.9);
    assert!(s.eval(1.0) < 0.1);
}

#[test]
fn positive_mean_recovers_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(&mut rng, 2000, 0.0, 2.0);
    let y: Vec<f64> = x
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v.exp() + 0.1 * e
        })
        .collect();
    let s = fit_positive_mean(&x, &y, &KernelOptions::default()).unwrap();
    for i in 1..20 {
        let xv = i as f64 / 10.0;
        let rel = (s.eval(xv) - xv.exp()).abs() / xv.exp();
        assert!(rel < 0.1, "{xv}: {rel}");
    }
}

#[test]
fn binomial_mean_recovers_logistic_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = uniform(&mut rng, 1000, -3.0, 3.0);
    let succ: Vec<f64> = x
        .iter()
        .map(|v| Binomial::new(100, logistic(*v)).unwrap().sample(&mut rng) as f64)
        .collect();
    let s = fit_binomial_mean(&x, &succ, 100, &KernelOptions::default()).unwrap();
    for i in -5..=5 {
        let xv = i as f64 * 0.5;
        assert!((s.eval(xv) - logistic(xv)).abs() < 0.05, "{xv}");
        let (lo, hi) = s.interval(xv).unwrap();
        assert!(lo <= s.eval(xv) + 1e-12 && s.eval(xv) <= hi + 1e-12);
    }
}

#[test]
fn boxcox_identity_transform_gives_normal_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let dhat = uniform(&mut rng, n, 5.0, 15.0);
    let d: Vec<f64> = dhat
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            (v + e).max(1e-6)
        })
        .collect();
    let opts = BoxCoxOptions {
        lambda_grid: vec![1.0],
        ..BoxCoxOptions::default()
    };
    let eps = 10.0;
    let s = fit_tail_prob_boxcox(&dhat, &d, eps, None, &opts).unwrap();
    for xv in [6.0, 8.0, 9.0, 10.0, 11.0, 12.0, 14.0] {
        let truth = normal_cdf(eps - xv);
        assert!(
            (s.eval(xv) - truth).abs() < 0.05,
            "{xv}: {} vs {truth}",
            s.eval(xv)
        );
    }
}

#[test]
fn boxcox_selects_log_for_lognormal_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 5_000;
    let sigma = 0.3;
    let dhat = uniform(&mut rng, n, 1.0, 10.0);
    let d: Vec<f64> = dhat
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v * (sigma * e).exp()
        })
        .collect();
    let eps = 4.0;
    let s = fit_tail_prob_boxcox(&dhat, &d, eps, None, &BoxCoxOptions::default()).unwrap();
    let flag = s
        .flags
        .iter()
        .find_map(|f| f.strip_prefix("lambdas by window: "))
        .unwrap();
    let lambdas: Vec<f64> = serde_json::from_str(flag).unwrap();
    let near_log = lambdas.iter().filter(|l| l.abs() <= 0.25).count();
    assert!(near_log * 4 >= lambdas.len() * 3, "{lambdas:?}");
    for xv in [2.0, 3.0, 4.0, 5.0, 6.0, 8.0] {
        let truth = normal_cdf((eps.ln() - f64::ln(xv)) / sigma);
        assert!(
            (s.eval(xv) - truth).abs() < 0.05,
            "{xv}: {} vs {truth}",
            s.eval(xv)
        );
    }
}

#[test]
fn monotone_interpolant_of_decay() {
    let xs: Vec<f64> = (0..10).map(|i| i as f64 * 5.0 / 9.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
    let s = Smoother::monotone_interpolate(&xs, &ys).unwrap();
    for i in 0..=500 {
        let x = i as f64 * 0.01;
        assert!((s.eval(x) - (-x).exp()).abs() < 0.02, "{x}");
    }
}

fn sorted_distinct(v: Vec<f64>) -> Vec<f64> {
    let mut v = v;
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn interpolant_preserves_monotonicity_and_range(
        xs in prop::collection::vec(-100.0f64..100.0, 2..20).prop_map(sorted_distinct),
        steps in prop::collection::vec(0.0f64..10.0, 20),
        t in 0.0f64..=1.0,
        dt in 0.0f64..=1.0,
    ) {
        prop_assume!(xs.len() >= 2);
        let mut ys = vec![0.0];
        for s in steps.iter().take(xs.len() - 1) {
            ys.push(ys.last().unwrap() + s);
        }
        let f = Smoother::monotone_interpolate(&xs, &ys).unwrap();
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        let a = lo + (hi - lo) * t;
        let b = (a + (hi - lo) * dt).min(hi);
        prop_assert!(f.eval(a) <= f.eval(b) + 1e-9);
        prop_assert!(f.eval(a) >= ys[0] - 1e-9 && f.eval(a) <= ys[ys.len() - 1] + 1e-9);
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!((f.eval(*x) - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn logistic_fit_is_a_probability(
        data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 20..60),
        bw in 0.05f64..1.0,
        probe in -1.0f64..2.0,
    ) {
        let x: Vec<f64> = data.iter().map(|d| d.0).collect();
        let z: Vec<f64> = data.iter().map(|d| f64::from(d.1)).collect();
        let opts = KernelOptions { bandwidth: Some(bw), knots: 32, ..KernelOptions::default() };
        let s = fit_kernel_logistic(&x, &z, &opts).unwrap();
        let v = s.eval(probe);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(s.evaluate(probe).extrapolated, s.is_extrapolation(probe));
    }
}
