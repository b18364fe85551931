use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use lsmcoc::basis::{bases_for, BasisSet};
use lsmcoc::engine::{lsm_backward, RunConfig};
use lsmcoc::models::{ArGarch, ArGarchParams, Cohort, LifeModel, LifeModelParams, MarkovModel, Model, ModelState, MortalityLaw};
use lsmcoc::ols::{ols_fit, DesignMatrix};
use lsmcoc::risk::{coc_pair_in_place, empirical_quantile, CocParams, InnerSample};
use lsmcoc::rng::{stream, Domain, SimRng};
use lsmcoc::validation::{validate, ValidationConfig};

/// The single AR-GARCH model with every cash flow shifted by `shift`.
struct Shifted {
    inner: ArGarch,
    shift: f64,
}

impl MarkovModel for Shifted {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn initial_state(&self) -> ModelState {
        self.inner.initial_state()
    }
    fn step_into(&self, t: usize, from: &[f64], rng: &mut SimRng, to: &mut [f64]) {
        self.inner.step_into(t, from, rng, to)
    }
    fn cashflow(&self, t: usize, state: &[f64]) -> f64 {
        self.inner.cashflow(t, state) + self.shift
    }
}

fn small_run(horizon: usize, seed: u64) -> RunConfig {
    RunConfig {
        outer: 200,
        inner: 1000,
        horizon,
        coc: CocParams::default(),
        seed,
        threads: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Adding c to every cash flow adds c (T - t) to every value.
    #[test]
    fn cash_translation_moves_v0(shift in -20.0f64..20.0, seed in 1u64..1000) {
        let horizon = 3;
        let base = ArGarch::new(ArGarchParams::paper(), horizon).unwrap();
        let bases = bases_for(&Model::ArGarch(base.clone()), &[]).unwrap();
        let cfg = small_run(horizon, seed);
        let a = lsm_backward(&Shifted { inner: base.clone(), shift: 0.0 }, &bases, &cfg).unwrap().table;
        let b = lsm_backward(&Shifted { inner: base, shift }, &bases, &cfg).unwrap().table;
        prop_assert!((b.v0 - a.v0 - shift * horizon as f64).abs() < 1e-8 * (1.0 + shift.abs()));
        prop_assert!((b.e0 - a.e0).abs() < 1e-8 * (1.0 + shift.abs()));
        for (sa, sb) in a.steps.iter().zip(&b.steps) {
            let expected = shift * (horizon - sa.t) as f64;
            prop_assert!((sb.beta_v.values()[0] - sa.beta_v.values()[0] - expected).abs() < 1e-7 * (1.0 + shift.abs()));
        }
    }

    #[test]
    fn ols_ignores_row_order(seed in 0u64..10_000) {
        let mut rng = stream(seed, Domain::Test, 0, 0);
        let rows = 40;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..rows {
            let x: f64 = rng.sample(StandardNormal);
            data.extend([1.0, x, x * x]);
            y.push(1.0 + x + rng.sample::<f64, _>(StandardNormal));
        }
        let labels: Vec<String> = ["1", "x", "x^2"].iter().map(|s| s.to_string()).collect();
        let fit = ols_fit(&DesignMatrix::from_rows(rows, 3, data.clone(), labels.clone()).unwrap(), &y).unwrap();
        let order: Vec<usize> = (0..rows).rev().collect();
        let pdata: Vec<f64> = order.iter().flat_map(|&i| data[3 * i..3 * i + 3].to_vec()).collect();
        let py: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let pfit = ols_fit(&DesignMatrix::from_rows(rows, 3, pdata, labels).unwrap(), &py).unwrap();
        for (a, b) in fit.values().iter().zip(pfit.values()) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn cohorts_never_grow(q in 0.0f64..0.5, size in 0u64..5000, seed in 0u64..1000) {
        let params = LifeModelParams {
            cohorts: vec![Cohort { size, age: 60 }, Cohort { size: size / 2, age: 75 }],
            mortality: MortalityLaw::Fixed { q },
            ..LifeModelParams::small()
        };
        let model = LifeModel::new(params, 6).unwrap();
        let mut rng = stream(seed, Domain::Test, 0, 0);
        let mut from = model.initial_state().0;
        let mut to = vec![0.0; model.dim()];
        for t in 0..6 {
            model.step_into(t, &from, &mut rng, &mut to);
            for c in 0..2 {
                prop_assert!(to[2 + c] <= from[2 + c]);
                prop_assert!(to[2 + c] >= 0.0);
                prop_assert_eq!(to[4 + c], from[2 + c]);
            }
            prop_assert!(model.cashflow(t + 1, &to).is_finite());
            std::mem::swap(&mut from, &mut to);
        }
    }

    #[test]
    fn value_is_monotone_in_the_sample(seed in 0u64..10_000, eta in 0.0f64..1.0) {
        let mut rng = stream(seed, Domain::Test, 1, 0);
        let coc = CocParams::new(0.99, eta).unwrap();
        let mut ys: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let mut zs: Vec<f64> = ys.iter().map(|y| y + rng.random::<f64>()).collect();
        let low = coc_pair_in_place(&mut ys, &coc);
        let high = coc_pair_in_place(&mut zs, &coc);
        prop_assert!(high.r >= low.r);
        prop_assert!(high.v >= low.v - 1e-12);
        prop_assert!(low.e >= 0.0);
    }
}

// VaR_{a}(X + Z) <= VaR_{a + d}(X) + VaR_{1 - d}(Z) for the loss quantiles
// of independent normals, checked on large samples.
#[test]
fn quantile_shift_inequality() {
    let n = 1_000_000;
    let mut rng = stream(7, Domain::Test, 2, 0);
    let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let zs: Vec<f64> = (0..n).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let sum: Vec<f64> = xs.iter().zip(&zs).map(|(x, z)| x + z).collect();
    for (alpha, delta) in [(0.99, 0.005), (0.95, 0.01), (0.9, 0.05)] {
        let q = |v: &[f64], a: f64| empirical_quantile(&InnerSample::new(v.to_vec()).unwrap(), a).unwrap();
        let lhs = q(&sum, alpha);
        let rhs = q(&xs, alpha + delta) + q(&zs, 1.0 - delta);
        // Quantile SE at these levels is below 0.01 for n = 1e6.
        assert!(lhs <= rhs + 0.03, "alpha {alpha}: {lhs} > {rhs}");
    }
}

/// `floor(x_t) = t` with a random fractional part that the cash flows
/// ignore, so every inner sample is constant and the targets are exactly
/// affine in the basis `{1, x}`.
struct Counter {
    horizon: usize,
}

impl MarkovModel for Counter {
    fn dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn initial_state(&self) -> ModelState {
        ModelState(vec![0.0])
    }
    fn step_into(&self, _t: usize, from: &[f64], rng: &mut SimRng, to: &mut [f64]) {
        let u: f64 = rng.random();
        to[0] = from[0].floor() + 1.0 + 0.5 * u;
    }
    fn cashflow(&self, _t: usize, state: &[f64]) -> f64 {
        2.0 * state[0].floor()
    }
}

#[test]
fn perfect_fit_gives_zero_error() {
    let horizon = 4;
    let model = Counter { horizon };
    let bases: Vec<BasisSet> = (0..horizon)
        .map(|t| BasisSet::custom(t, vec!["x".to_string()], |s, out| out[1] = s[0]))
        .collect();
    let cfg = RunConfig {
        outer: 100,
        inner: 200,
        horizon,
        coc: CocParams::default(),
        seed: 1,
        threads: 1,
    };
    let table = lsm_backward(&model, &bases, &cfg).unwrap().table;
    let vcfg = ValidationConfig {
        outer: 50,
        inner: 200,
        seed: 2,
        bins: 5,
        threads: 1,
        ..ValidationConfig::default()
    };
    let report = validate(&model, &bases, &table, &cfg.coc, &vcfg).unwrap();
    for r in &report.per_time {
        assert!(r.rmse.r < 1e-9 && r.rmse.e < 1e-9 && r.rmse.v < 1e-9, "{:?}", r.rmse);
    }
    // Remaining cash flows 2 (t+1) + .. + 2 T from S_0 = 0.
    let expected: f64 = (1..=horizon).map(|s| 2.0 * s as f64).sum();
    assert!((table.v0 - expected).abs() < 1e-9, "{}", table.v0);
}
