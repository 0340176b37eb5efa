//! Acceptance criteria, one line each. Set `LAZYABC_ACCEPTANCE=4,5` to run
//! a subset. Failures are reported on their lines and in the summary; the
//! process exits nonzero on failure only with `LAZYABC_ACCEPTANCE_STRICT=1`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use lazyabc::models::extremal::extremal_coeff;
use lazyabc::models::matern::whittle_matern;
use lazyabc::models::schlather::{factorize, simulate_years, SchlatherSettings};
use lazyabc::sampler::{
    accepted_indices, ess, ess_of_weights, evidence_estimate, lazy_likelihood, posterior_mean_sd,
    posthoc_accept_count, posthoc_epsilon, run_abc_is, run_lazy_abc, ConstantPolicy, CostMode,
    SampleSet,
};
use lazyabc::smoothers::{
    fit_kernel_logistic, fit_positive_mean, KernelOptions, Smoother, SmootherKind,
};
use lazyabc::tuning::t2_smoother;
use lazyabc::tuning::{
    backwards_select_subset, estimate_t2, gamma_conservative, gamma_standard, optimize_lambda,
    run_pilot, tune_one_continuous_multistop, tune_single_stop, AlphaPolicy, AlphaRule,
    GammaMethod, PhiKey, PilotOptions, PilotRecord, Provenance, StandardPath, StopProblem, T2Mode,
    DEFAULT_ALPHA_FLOOR, DEFAULT_LEVEL_CAP,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 1. Exhaustive enumeration on a finite model.

fn enumerate_expectation(theta_index: usize, alphas: Option<[f64; 2]>) -> f64 {
    let m = finite_model();
    let theta = [m.thetas[theta_index]];
    let policy = alphas.map(|a| {
        AlphaPolicy::single(
            0,
            AlphaRule::Table {
                component: 0,
                levels: vec![0.0, 1.0],
                values: a.to_vec(),
            },
            DEFAULT_ALPHA_FLOOR,
            Provenance::AdHoc,
        )
    });
    let px = &m.x_probs[theta_index];
    let mut total = 0.0;
    for x in 0..2 {
        let x_mid = px[..x].iter().sum::<f64>() + px[x] / 2.0;
        let py = &m.y_probs[theta_index][x];
        for y in 0..2 {
            let y_mid = py[..y].iter().sum::<f64>() + py[y] / 2.0;
            let branches: Vec<(f64, f64)> = match alphas {
                Some(a) => vec![(a[x], a[x] / 2.0), (1.0 - a[x], (1.0 + a[x]) / 2.0)],
                None => vec![(1.0, 0.5)],
            };
            for (p_coin, coin_value) in branches {
                let mut stages = [FixedRng::uniform(x_mid), FixedRng::uniform(y_mid)];
                let mut coin = FixedRng::uniform(coin_value);
                let out = lazy_likelihood(
                    &m,
                    &theta,
                    1.0,
                    0.5,
                    policy
                        .as_ref()
                        .map(|p| p as &dyn lazyabc::sampler::ContinuationPolicy),
                    &mut stages,
                    &mut coin,
                    CostMode::Sim,
                    false,
                )
                .unwrap();
                total += px[x] * py[y] * p_coin * out.estimate;
            }
        }
    }
    total
}

fn criterion_1() -> Check {
    let m = finite_model();
    let mut worst: f64 = 0.0;
    for t in 0..2 {
        let exact: f64 = (0..2).map(|x| m.x_probs[t][x] * m.y_probs[t][x][0]).sum();
        let abc = enumerate_expectation(t, None);
        for a in [[0.3, 0.7], [0.7, 0.3], [0.3, 0.3]] {
            let lazy = enumerate_expectation(t, Some(a));
            worst = worst.max((lazy - abc).abs()).max((abc - exact).abs());
        }
    }
    ensure(
        worst <= 1e-12,
        format!("max |E lazy - E abc| = {worst:.2e}"),
    )
}

// 2. Policy identically one reproduces ABC-IS.

fn same_weights(a: &SampleSet, b: &SampleSet) -> bool {
    a.samples.len() == b.samples.len()
        && a.samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| x.weight.to_bits() == y.weight.to_bits())
}

fn criterion_2() -> Check {
    let sir = sir_model(73);
    let ext = extremes_model(6, 20, 1.0, 1.0, 5, true);
    let one = ConstantPolicy(1.0);
    for seed in 0..10u64 {
        let a = run_abc_is(&sir_prior(), 100, &sir, 1.0, seed, &opts(None))
            .map_err(|e| e.to_string())?;
        let b = run_lazy_abc(&sir_prior(), 100, &sir, 1.0, &one, seed, &opts(None))
            .map_err(|e| e.to_string())?;
        if !same_weights(&a, &b) {
            return Err(format!("SIR weights differ for seed {seed}"));
        }
        let a = run_abc_is(&extremes_prior(), 40, &ext, 0.5, seed, &opts(None))
            .map_err(|e| e.to_string())?;
        let b = run_lazy_abc(&extremes_prior(), 40, &ext, 0.5, &one, seed, &opts(None))
            .map_err(|e| e.to_string())?;
        if !same_weights(&a, &b) {
            return Err(format!("extremes weights differ for seed {seed}"));
        }
    }
    Ok("bit-identical weights on 10 seeds for both models".into())
}

// 3. Closed-form policy against exhaustive grid search.

struct Cells {
    count: Vec<f64>,
    gamma: Vec<f64>,
    t2: Vec<f64>,
    t1: f64,
}

impl Cells {
    /// Score of per-cell probabilities, computed from cell totals.
    fn score(&self, a: &[f64]) -> f64 {
        let n: f64 = self.count.iter().sum();
        let mut w2 = 0.0;
        let mut t = 0.0;
        for j in 0..a.len() {
            w2 += self.count[j] * self.gamma[j] / a[j];
            t += self.count[j] * (self.t1 + a[j] * self.t2[j]);
        }
        1.0 / (w2 / n * t)
    }

    fn problem(&self) -> StopProblem {
        let mut u = Vec::new();
        let mut g = Vec::new();
        let mut t2 = Vec::new();
        for j in 0..self.count.len() {
            for _ in 0..self.count[j] as usize {
                u.push(1.0);
                g.push(self.gamma[j]);
                t2.push(self.t2[j]);
            }
        }
        let n = u.len();
        StopProblem::new(u, g, t2.clone(), vec![self.t1; n], t2).unwrap()
    }
}

fn grid_best(cells: &Cells, points: usize) -> f64 {
    let grid: Vec<f64> = (0..points)
        .map(|i| (1e-3f64.ln() * (1.0 - i as f64 / (points - 1) as f64)).exp())
        .collect();
    let k = cells.count.len();
    let mut idx = vec![0usize; k];
    let mut best: f64 = 0.0;
    loop {
        let a: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
        best = best.max(cells.score(&a));
        let mut j = 0;
        loop {
            if j == k {
                return best;
            }
            idx[j] += 1;
            if idx[j] < points {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn criterion_3() -> Check {
    let cases = [
        Cells {
            count: vec![600.0, 400.0],
            gamma: vec![0.01, 0.3],
            t2: vec![5.0, 8.0],
            t1: 1.0,
        },
        Cells {
            count: vec![300.0, 500.0, 200.0],
            gamma: vec![0.002, 0.05, 0.6],
            t2: vec![20.0, 10.0, 4.0],
            t1: 0.5,
        },
    ];
    let mut worst: f64 = 0.0;
    for cells in &cases {
        let fit =
            optimize_lambda(&cells.problem(), DEFAULT_ALPHA_FLOOR).map_err(|e| e.to_string())?;
        let grid = grid_best(cells, if cells.count.len() == 2 { 600 } else { 150 });
        worst = worst.max(1.0 - fit.efficiency.score / grid);
    }
    ensure(
        worst <= 0.01,
        format!("closed form within {:.4}% of grid optimum", 100.0 * worst),
    )
}

// 4 and 5. SIR study.

struct SirArm {
    set: SampleSet,
    mean: f64,
    sd: f64,
    ess: f64,
}

impl SirArm {
    fn new(set: SampleSet) -> Self {
        let (mean, sd) = posterior_mean_sd(&set, 0).unwrap();
        let ess = ess(&set).unwrap();
        Self { set, mean, sd, ess }
    }

    fn efficiency(&self) -> f64 {
        self.ess / self.set.total_cost
    }
}

struct SirStudy {
    standard: SirArm,
    ad_hoc: SirArm,
    tuned: SirArm,
    conservative: SirArm,
    estimated: [f64; 2],
}

const SIR_N: usize = 10_000;
const SIR_SEED: u64 = 20_140_601;

fn sir_study() -> &'static SirStudy {
    static STUDY: OnceLock<SirStudy> = OnceLock::new();
    STUDY.get_or_init(|| {
        let model = sir_model(73);
        let prior = sir_prior();
        let eps = 1.0;
        let pilot_seed = lazyabc::rng::derived_seed(SIR_SEED, 1);
        let (_, record) = run_pilot(
            &prior,
            &model,
            1000,
            eps,
            pilot_seed,
            &PilotOptions::default(),
        )
        .unwrap();
        let key = PhiKey::new(0, 0);
        let kernel = KernelOptions::default();
        let t2 = estimate_t2(&record, key, T2Mode::Regression, &kernel).unwrap();
        let path = StandardPath::Binomial {
            successes_aux: 0,
            trials: 100,
            observed: 73.0,
        };
        let g_std = gamma_standard(&record, key, eps, &path, &kernel).unwrap();
        let (p_std, f_std) = tune_single_stop(
            &record,
            key,
            g_std,
            false,
            t2.clone(),
            DEFAULT_ALPHA_FLOOR,
            Provenance::Standard,
        )
        .unwrap();
        let g_con = gamma_conservative(&record, key, Some(3.0), 30, &kernel).unwrap();
        let (p_con, f_con) = tune_single_stop(
            &record,
            key,
            g_con.smoother,
            false,
            t2,
            DEFAULT_ALPHA_FLOOR,
            Provenance::Conservative,
        )
        .unwrap();
        let ad_hoc = AlphaPolicy::ad_hoc_threshold(1000.0, 0.1, DEFAULT_ALPHA_FLOOR);
        let o = opts(None);
        let run = |p: &AlphaPolicy| {
            SirArm::new(run_lazy_abc(&prior, SIR_N, &model, eps, p, SIR_SEED, &o).unwrap())
        };
        SirStudy {
            standard: SirArm::new(run_abc_is(&prior, SIR_N, &model, eps, SIR_SEED, &o).unwrap()),
            ad_hoc: run(&ad_hoc),
            tuned: run(&p_std),
            conservative: run(&p_con),
            estimated: [f_std.relative_efficiency, f_con.relative_efficiency],
        }
    })
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|i| b.binary_search(i).is_ok())
}

fn criterion_4() -> Check {
    let s = sir_study();
    let base = &s.standard;
    let mut lines = vec![format!(
        "standard mean {:.4} sd {:.4} ESS {:.1}",
        base.mean, base.sd, base.ess
    )];
    let mut ok = true;
    for (name, arm, est) in [
        ("standard-tuned", &s.tuned, s.estimated[0]),
        ("conservative-tuned", &s.conservative, s.estimated[1]),
    ] {
        let rel = arm.efficiency() / base.efficiency();
        let close = (arm.mean - base.mean).abs() <= 0.02 && (arm.sd - base.sd).abs() <= 0.01;
        ok &= close && rel >= 2.0;
        lines.push(format!(
            "{name} mean {:.4} sd {:.4} ESS {:.1} max weight {:.2} rel eff {rel:.2} (estimated {est:.2})",
            arm.mean,
            arm.sd,
            arm.ess,
            arm.set.weights().iter().cloned().fold(0.0, f64::max)
        ));
    }
    let acc_std = accepted_indices(&base.set);
    let acc_con = accepted_indices(&s.conservative.set);
    let subset =
        is_subset(&acc_con, &acc_std) && is_subset(&accepted_indices(&s.tuned.set), &acc_std);
    ok &= subset;
    lines.push(format!(
        "conservative accepts {} of the standard {} (subset: {subset}); ad-hoc rel eff {:.2}",
        acc_con.len(),
        acc_std.len(),
        s.ad_hoc.efficiency() / base.efficiency()
    ));
    ensure(ok, lines.join("; "))
}

fn criterion_5() -> Check {
    let s = sir_study();
    let z = evidence_estimate(&s.standard.set);
    let mut worst: f64 = 0.0;
    for arm in [&s.ad_hoc, &s.tuned, &s.conservative] {
        worst = worst.max((evidence_estimate(&arm.set) / z - 1.0).abs());
    }
    ensure(
        worst <= 0.05,
        format!("max |mean weight ratio - 1| = {worst:.4}"),
    )
}

// 6. Spatial extremes at desk scale.

fn criterion_6() -> Check {
    let n = 10_000;
    let n_pilot = 1000;
    let seed = 77;
    let model = extremes_model(10, 50, 1.0, 1.0, 2024, false);
    let prior = extremes_prior();
    let o = opts(None);
    let all = run_abc_is(&prior, n, &model, f64::INFINITY, seed, &o).map_err(|e| e.to_string())?;
    let standard = posthoc_accept_count(&all, 200).map_err(|e| e.to_string())?;
    let eps = standard.epsilon;
    let (_, record) = run_pilot(&prior, &model, n_pilot, eps, seed, &PilotOptions::default())
        .map_err(|e| e.to_string())?;
    let kernel = KernelOptions::default();
    let mut lines = Vec::new();
    let mut ok = true;
    let methods = [
        (
            "standard",
            GammaMethod::Standard {
                path: StandardPath::BoxCox {
                    options: Default::default(),
                    log_u: false,
                },
            },
            Provenance::Standard,
        ),
        (
            "conservative",
            GammaMethod::Conservative {
                epsilon1: None,
                min_acceptances: 100,
            },
            Provenance::Conservative,
        ),
    ];
    let base_eff = efficiency(&standard);
    for (name, method, prov) in methods {
        let report = backwards_select_subset(
            &model,
            &record,
            eps,
            &method,
            &kernel,
            DEFAULT_ALPHA_FLOOR,
            prov,
            None,
        )
        .map_err(|e| e.to_string())?;
        let tuned_model = model.with_subset(report.subset.clone());
        let lazy = run_lazy_abc(&prior, n, &tuned_model, eps, &report.policy, seed, &o)
            .map_err(|e| e.to_string())?;
        // The pilot is the first iterations of the shared-seed sequence,
        // completed in full; the lazy run supplies the rest.
        let mut merged = lazy.clone();
        merged.samples[..n_pilot].clone_from_slice(&standard.samples[..n_pilot]);
        merged.total_cost = merged.samples.iter().map(|s| s.total_cost()).sum();
        let rel = efficiency(&merged) / base_eff;
        let weights = merged.weights();
        let mut nonzero: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
        nonzero.sort_by(f64::total_cmp);
        let max = nonzero.last().copied().unwrap_or(0.0);
        let median = nonzero.get(nonzero.len() / 2).copied().unwrap_or(0.0);
        lines.push(format!(
            "{name}: |L| = {}, rel eff {rel:.2} (estimated {:.2}), accepted {}, max weight {max:.2}, median {median:.2}",
            report.subset.as_ref().map_or(10, Vec::len),
            report.relative_efficiency,
            nonzero.len()
        ));
        if name == "standard" {
            ok &= rel >= 1.5;
        } else {
            ok &= max <= 1.0 / DEFAULT_ALPHA_FLOOR && max <= 5.0 * median;
        }
    }
    ensure(ok, format!("eps {eps:.4}; {}", lines.join("; ")))
}

// 7. Multi-stop tuning on a fallback-style record.

fn fallback_record(n: usize, fallback_shift: f64, seed: u64) -> PilotRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = PilotRecord {
        theta: Vec::new(),
        u: Vec::new(),
        phis: Vec::new(),
        stage_costs: Vec::new(),
        distance: Vec::new(),
        aux: Vec::new(),
        decision_names: vec![vec!["fallback".into()], vec!["dhat".into()]],
        aux_names: Vec::new(),
        epsilon: 1.0,
        rejection: true,
    };
    for _ in 0..n {
        let fallback = rng.random::<f64>() < 0.2;
        let dhat = rng.random::<f64>() * 4.0 + if fallback { fallback_shift } else { 0.0 };
        let d = dhat + 0.3 * rng.random::<f64>();
        let sim = 1.775;
        let seg1 = if fallback {
            150.0 * sim + 0.155
        } else {
            sim + 0.155
        };
        rec.theta.push(vec![0.0]);
        rec.u.push(1.0);
        rec.phis
            .push(vec![vec![f64::from(u8::from(fallback))], vec![dhat]]);
        rec.stage_costs.push(vec![0.01, seg1, 3.885]);
        rec.distance.push(d);
        rec.aux.push(Vec::new());
    }
    rec
}

fn criterion_7() -> Check {
    let kernel = KernelOptions::default();
    let cont = PhiKey::new(1, 0);
    let flag = PhiKey::new(0, 0);
    let mut lines = Vec::new();
    let mut ok = true;
    for (shift, need) in [(0.0, 1.0), (2.0, 1.01)] {
        let rec = fallback_record(1000, shift, 9);
        let gamma = gamma_conservative(&rec, cont, Some(1.0), 30, &kernel)
            .map_err(|e| e.to_string())?
            .smoother;
        let t2 = t2_smoother(
            &rec.phi(cont).unwrap(),
            &rec.t2(1),
            T2Mode::Constant,
            &kernel,
        )
        .map_err(|e| e.to_string())?;
        let fit = tune_one_continuous_multistop(
            &rec,
            cont,
            &[flag],
            &gamma,
            false,
            &t2,
            DEFAULT_ALPHA_FLOOR,
            DEFAULT_LEVEL_CAP,
            Provenance::Standard,
            &kernel,
        )
        .map_err(|e| e.to_string())?;
        let g_rows: Vec<f64> = rec
            .phi(cont)
            .unwrap()
            .iter()
            .map(|&x| gamma.eval(x))
            .collect();
        let flags = rec.phi(flag).unwrap();
        let mean_g = |f: f64| {
            let v: Vec<f64> = (0..rec.len())
                .filter(|&i| flags[i] == f)
                .map(|i| g_rows[i])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (g_ok, g_fb) = (mean_g(0.0), mean_g(1.0));
        let ratio = fit.efficiency.score / fit.single_stop_best.score;
        let this_ok = ratio >= need && (need == 1.0 || g_fb < 0.5 * g_ok);
        ok &= this_ok;
        lines.push(format!(
            "fallback gamma {g_fb:.3} vs {g_ok:.3}: multistop / best single ({}) = {ratio:.3}, {} rounds",
            fit.single_stop_label, fit.rounds
        ));
    }
    ensure(ok, lines.join("; "))
}

// 8. Numerics.

fn criterion_8() -> Check {
    let mut worst_matern: f64 = 0.0;
    for x in [0.1, 1.0, 10.0] {
        let half = whittle_matern(x, 1.0, 0.5).map_err(|e| e.to_string())?;
        let three_halves = whittle_matern(x, 1.0, 1.5).map_err(|e| e.to_string())?;
        worst_matern = worst_matern
            .max((half - (-x).exp()).abs())
            .max((three_halves - (1.0 + x) * (-x).exp()).abs());
    }
    let settings = SchlatherSettings::default();
    let locs = [[0.0, 0.0], [100.0, 0.0]];
    let factor = factorize(&locs, 0.01, 0.5, 0.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = simulate_years(&factor, 10_000, &settings, &mut rng).map_err(|e| e.to_string())?;
    let p1 = data.iter().filter(|r| r[0] <= 1.0).count() as f64 / data.len() as f64;
    let a: Vec<f64> = data.iter().map(|r| r[0]).collect();
    let b: Vec<f64> = data.iter().map(|r| r[1]).collect();
    let theta = extremal_coeff(&a, &a, &b).map_err(|e| e.to_string())?;
    let target = 1.0 + 0.5f64.sqrt();
    ensure(
        worst_matern <= 1e-10 && (p1 - (-1.0f64).exp()).abs() <= 0.02 && (theta - target).abs() <= 0.05,
        format!(
            "Matérn error {worst_matern:.1e}; P(Y <= 1) = {p1:.4} vs {:.4}; pairwise coefficient {theta:.4} vs {target:.4}",
            (-1.0f64).exp()
        ),
    )
}

// 9. Property suites.

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, test)
        .map(|_| name.to_string())
        .map_err(|e| format!("{name}: {e}"))
}

fn criterion_9() -> Check {
    let mut passed = Vec::new();
    passed.push(run_property(
        "ESS bounds",
        prop::collection::vec(0.0f64..10.0, 1..60),
        |mut w| {
            w[0] += 0.5;
            let e = ess_of_weights(&w).unwrap();
            prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
            Ok(())
        },
    )?);
    passed.push(run_property(
        "post-hoc epsilon monotonicity",
        (
            prop::collection::vec(0.0f64..10.0, 1..60),
            0.0f64..10.0,
            0.0f64..1.0,
        ),
        |(d, e1, frac)| {
            let w: Vec<f64> = d.iter().map(|x| if *x <= e1 { 1.0 } else { 0.0 }).collect();
            let dist: Vec<Option<f64>> = d.iter().copied().map(Some).collect();
            let set = sample_set(&w, &dist, e1);
            let lower = posthoc_epsilon(&set, e1 * frac).unwrap();
            let (a, b) = (accepted_indices(&set), accepted_indices(&lower));
            prop_assert!(is_subset(&b, &a));
            if !b.is_empty() {
                prop_assert!(ess(&lower).unwrap() <= ess(&set).unwrap() + 1e-9);
            }
            Ok(())
        },
    )?);
    passed.push(run_property(
        "alpha range",
        (
            -8.0f64..8.0,
            1e-3f64..100.0,
            0.0f64..1.0,
            0.0f64..50.0,
            -1e3f64..1e3,
        ),
        |(log_l, u, g, t, phi)| {
            let rule = AlphaRule::Optimal {
                component: 0,
                lambda: 10f64.powf(log_l),
                gamma: Smoother::constant(SmootherKind::Logistic, g, 0.0, 1.0),
                t2: Smoother::constant(SmootherKind::Interpolant, t, 0.0, 1.0),
                gamma_log_u: false,
                zeta: None,
            };
            let p = AlphaPolicy::single(0, rule, DEFAULT_ALPHA_FLOOR, Provenance::Standard);
            let a = p.eval(0, u, &[phi]);
            prop_assert!((DEFAULT_ALPHA_FLOOR..=1.0).contains(&a));
            Ok(())
        },
    )?);
    let kernel = KernelOptions {
        grid_size: 6,
        knots: 32,
        ..KernelOptions::default()
    };
    passed.push(run_property(
        "gamma in [0, 1]",
        (
            prop::collection::vec((0.0f64..100.0, 0.0f64..1.0), 20..50),
            -50.0f64..150.0,
        ),
        |(rows, probe)| {
            let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let z: Vec<f64> = rows
                .iter()
                .map(|r| f64::from(u8::from(r.1 < 0.3)))
                .collect();
            let s = fit_kernel_logistic(&x, &z, &kernel).unwrap();
            let v = s.eval(probe);
            prop_assert!((0.0..=1.0).contains(&v));
            Ok(())
        },
    )?);
    passed.push(run_property(
        "smoother range and extrapolation flag",
        (
            prop::collection::vec((0.0f64..10.0, 0.1f64..20.0), 20..50),
            -5.0f64..15.0,
        ),
        |(rows, probe)| {
            let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let s = fit_positive_mean(&x, &y, &kernel).unwrap();
            let e = s.evaluate(probe);
            prop_assert!(e.value > 0.0 && e.value.is_finite());
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(e.extrapolated, !(probe >= lo && probe <= hi));
            let mut knots = x.clone();
            knots.sort_by(f64::total_cmp);
            knots.dedup();
            if knots.len() >= 2 {
                let vals: Vec<f64> = knots.iter().map(|k| k.sin()).collect();
                let m = Smoother::monotone_interpolate(&knots, &vals).unwrap();
                let v = m.eval(probe);
                prop_assert!(v >= -1.0 - 1e-12 && v <= 1.0 + 1e-12);
            }
            Ok(())
        },
    )?);
    Ok(format!("{} suites x 1000 cases", passed.len()))
}

// 10. Determinism across worker counts.

fn criterion_10() -> Check {
    let sir = sir_model(73);
    let ext = extremes_model(6, 20, 1.0, 1.0, 3, true);
    let ad_hoc = AlphaPolicy::ad_hoc_threshold(1000.0, 0.1, DEFAULT_ALPHA_FLOOR);
    let half = ConstantPolicy(0.5);
    let run_both = |w: usize| -> Result<Vec<SampleSet>, String> {
        let o = opts(Some(w));
        Ok(vec![
            run_abc_is(&sir_prior(), 300, &sir, 1.0, 10, &o).map_err(|e| e.to_string())?,
            run_lazy_abc(&sir_prior(), 300, &sir, 1.0, &ad_hoc, 10, &o)
                .map_err(|e| e.to_string())?,
            run_abc_is(&extremes_prior(), 100, &ext, 0.5, 10, &o).map_err(|e| e.to_string())?,
            run_lazy_abc(&extremes_prior(), 100, &ext, 0.5, &half, 10, &o)
                .map_err(|e| e.to_string())?,
        ])
    };
    let one = run_both(1)?;
    let four = run_both(4)?;
    ensure(
        one == four,
        "SIR and extremes outputs identical for 1 and 4 workers".into(),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("LAZYABC_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let criteria: [(u32, &str, u64, fn() -> Check); 10] = [
        (1, "unbiasedness by enumeration", 1, criterion_1),
        (2, "policy one equals ABC-IS", 60, criterion_2),
        (3, "closed-form optimality", 60, criterion_3),
        (4, "SIR study", 600, criterion_4),
        (5, "SIR evidence agreement", 600, criterion_5),
        (6, "spatial extremes study", 1800, criterion_6),
        (7, "multi-stop tuning", 300, criterion_7),
        (8, "numerics", 120, criterion_8),
        (9, "property suites", 120, criterion_9),
        (10, "determinism across workers", 300, criterion_10),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, limit, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let slow = elapsed > Duration::from_secs(limit);
        let (status, detail) = match (&result, slow) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; exceeded {limit} s")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {status} [{:.1} s] {name}: {detail}",
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    let strict = std::env::var("LAZYABC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
