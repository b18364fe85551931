use rand::Rng;
use rand_distr::StandardNormal;

use lsmcoc::basis::bases_for;
use lsmcoc::engine::{lsm_backward, RunConfig};
use lsmcoc::models::{ArGarch, ArGarchParams, MarkovModel, Model};
use lsmcoc::oracle::{closed_form_normal_phi, closed_form_terminal_ar_garch, nested_value_t2, NestedConfig};
use lsmcoc::risk::{coc_pair_in_place, CocParams};
use lsmcoc::rng::{stream, Domain};
use lsmcoc::Error;

// Batch means of the empirical functional on standard normal samples.
fn simulated_phi(coc: &CocParams, batches: usize, n: usize) -> (f64, f64) {
    let values: Vec<f64> = (0..batches)
        .map(|b| {
            let mut rng = stream(21, Domain::Test, 0, b as u64);
            let mut ys: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            coc_pair_in_place(&mut ys, coc).v
        })
        .collect();
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[test]
fn normal_closed_form_matches_simulation() {
    for (alpha, eta) in [(0.5, 0.0), (0.9, 0.1), (0.995, 0.06)] {
        let coc = CocParams::new(alpha, eta).unwrap();
        let (mean, se) = simulated_phi(&coc, 40, 100_000);
        let exact = closed_form_normal_phi(&coc);
        assert!((mean - exact).abs() < 4.0 * se + 1e-4, "alpha {alpha}: {mean} +- {se} vs {exact}");
    }
    let median = closed_form_normal_phi(&CocParams::new(0.5, 0.0).unwrap());
    assert!((median + 0.39894).abs() < 1e-5);
}

#[test]
fn one_period_engine_value_is_the_closed_form() {
    let params = ArGarchParams::paper();
    let model = Model::ArGarch(ArGarch::new(params, 1).unwrap());
    let bases = bases_for(&model, &[]).unwrap();
    let cfg = RunConfig {
        outer: 200,
        inner: 50_000,
        horizon: 1,
        coc: CocParams::default(),
        seed: 4,
        threads: 0,
    };
    let v0 = lsm_backward(&model, &bases, &cfg).unwrap().table.v0;
    let exact = closed_form_terminal_ar_garch(&params, params.l0, params.sigma1, &cfg.coc);
    assert!((v0 - exact).abs() < 0.01, "{v0} vs {exact}");
}

#[test]
fn terminal_surface_matches_closed_form_at_desk_scale() {
    let params = ArGarchParams::paper();
    let model = Model::ArGarch(ArGarch::new(params, 2).unwrap());
    let bases = bases_for(&model, &[]).unwrap();
    let cfg = RunConfig {
        outer: 1000,
        inner: 20_000,
        horizon: 2,
        coc: CocParams::default(),
        seed: 5,
        threads: 0,
    };
    let table = lsm_backward(&model, &bases, &cfg).unwrap().table;
    let beta = table.value_coefficients(1).unwrap();
    let mut state = vec![0.0; model.dim()];
    let mut worst: f64 = 0.0;
    for i in 0..500 {
        let mut rng = stream(6, Domain::Test, 1, i);
        let init = model.initial_state();
        model.step_into(0, init.values(), &mut rng, &mut state);
        let exact = closed_form_terminal_ar_garch(&params, state[0], state[1], &cfg.coc);
        let fitted = beta.dot(&bases[1].eval(&state));
        worst = worst.max(((fitted - exact) / exact.abs().max(1.0)).abs());
    }
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn nested_oracle_agrees_with_engine_at_small_scale() {
    let model = Model::ArGarch(ArGarch::new(ArGarchParams::paper(), 2).unwrap());
    let bases = bases_for(&model, &[]).unwrap();
    let coc = CocParams::default();
    let oracle = nested_value_t2(
        &model,
        &NestedConfig {
            outer: 1000,
            inner: 5000,
            batches: 20,
            seed: 8,
            threads: 0,
        },
        &coc,
    )
    .unwrap();
    let cfg = RunConfig {
        outer: 1000,
        inner: 5000,
        horizon: 2,
        coc,
        seed: 9,
        threads: 0,
    };
    let v0 = lsm_backward(&model, &bases, &cfg).unwrap().table.v0;
    // Both estimators carry order-statistic bias of a few hundredths here.
    assert!((v0 - oracle.value).abs() < 4.0 * oracle.standard_error + 0.05, "{v0} vs {oracle:?}");
}

#[test]
fn nested_oracle_rejects_longer_horizons() {
    let model = Model::ArGarch(ArGarch::new(ArGarchParams::paper(), 3).unwrap());
    let err = nested_value_t2(&model, &NestedConfig::default(), &CocParams::default()).unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)));
}
