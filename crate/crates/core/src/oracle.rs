//! Reference values that bypass the regression: brute-force nested
//! simulation for two-period models and closed forms for the terminal
//! AR-GARCH step.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::models::{ArGarchParams, MarkovModel};
use crate::parallel::Workers;
use crate::risk::{coc_pair_in_place, CocParams};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    NestedBruteForce,
    ClosedForm,
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMethod::NestedBruteForce => "nested-brute-force",
            OracleMethod::ClosedForm => "closed-form",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub method: OracleMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedConfig {
    /// First-level draws per batch.
    pub outer: usize,
    /// Second-level draws per first-level node.
    pub inner: usize,
    /// Independent replicates used for the standard error.
    pub batches: usize,
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            outer: 2000,
            inner: 100_000,
            batches: 20,
            seed: 3,
            threads: 0,
        }
    }
}

/// Brute-force `V_0` for a model with horizon 2.
///
/// Each batch estimates `V_1` at `outer` first-level nodes from `inner`
/// successors and applies the cost-of-capital functional to
/// `L_1 + V_1(S_1)` across nodes. The estimate is the batch mean and the
/// standard error the batch standard deviation over `sqrt(batches)`.
pub fn nested_value_t2<M: MarkovModel + ?Sized>(model: &M, config: &NestedConfig, coc: &CocParams) -> Result<OracleEstimate> {
    if model.horizon() != 2 {
        return Err(Error::Unsupported(format!(
            "nested oracle requires horizon 2, model has {}",
            model.horizon()
        )));
    }
    coc.validate()?;
    if config.batches < 2 || config.outer == 0 || config.inner == 0 {
        return Err(Error::Config("nested oracle needs >= 2 batches and positive sample sizes".into()));
    }
    let dim = model.dim();
    let s0 = model.initial_state();
    let workers = Workers::new(config.threads);
    let nodes = workers.map(config.batches * config.outer, |idx| {
        let (batch, i) = (idx / config.outer, idx % config.outer);
        let mut rng = stream(config.seed, Domain::Oracle, batch, i as u64);
        let mut s1 = vec![0.0; dim];
        model.step_into(0, s0.values(), &mut rng, &mut s1);
        let mut s2 = vec![0.0; dim];
        let mut ys = Vec::with_capacity(config.inner);
        for _ in 0..config.inner {
            model.step_into(1, &s1, &mut rng, &mut s2);
            ys.push(model.cashflow(2, &s2));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite {
                t: 1,
                index: idx,
                what: "oracle second-level value",
            });
        }
        let v1 = coc_pair_in_place(&mut ys, coc).v;
        Ok(model.cashflow(1, &s1) + v1)
    });
    let nodes: Vec<f64> = nodes.into_iter().collect::<Result<_>>()?;
    let batch_values: Vec<f64> = nodes
        .chunks(config.outer)
        .map(|chunk| {
            let mut ys = chunk.to_vec();
            coc_pair_in_place(&mut ys, coc).v
        })
        .collect();
    let b = batch_values.len() as f64;
    let mean = batch_values.iter().sum::<f64>() / b;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(OracleEstimate {
        value: mean,
        standard_error: (var / b).sqrt(),
        method: OracleMethod::NestedBruteForce,
    })
}

/// Cost-of-capital value of a standard normal:
/// `q - (q Phi(q) + phi(q)) / (1 + eta)` with `q = Phi^{-1}(alpha)`.
pub fn closed_form_normal_phi(coc: &CocParams) -> f64 {
    let normal = Normal::standard();
    let q = normal.inverse_cdf(coc.alpha);
    q - (q * normal.cdf(q) + normal.pdf(q)) / (1.0 + coc.eta)
}

/// Value at `T-1` of the single AR-GARCH model in state `(L, sigma)`:
/// `alpha0 + alpha1 L + sigma * closed_form_normal_phi`.
pub fn closed_form_terminal_ar_garch(params: &ArGarchParams, level: f64, sigma: f64, coc: &CocParams) -> f64 {
    params.alpha0 + params.alpha1 * level + sigma * closed_form_normal_phi(coc)
}

pub fn closed_form_estimate(params: &ArGarchParams, level: f64, sigma: f64, coc: &CocParams) -> OracleEstimate {
    OracleEstimate {
        value: closed_form_terminal_ar_garch(params, level, sigma, coc),
        standard_error: 0.0,
        method: OracleMethod::ClosedForm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArGarch, ModelState};
    use crate::rng::SimRng;

    // Trapezoid rule for E[(q - Z)_+] over [-12, q]; independent of the
    // closed-form partial expectation.
    fn quadrature_shortfall(q: f64) -> f64 {
        let n = 200_000;
        let a = -12.0;
        let h = (q - a) / n as f64;
        let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let f = |z: f64| (q - z) * density(z);
        let mut s = 0.5 * (f(a) + f(q));
        for k in 1..n {
            s += f(a + k as f64 * h);
        }
        s * h
    }

    #[test]
    fn median_without_capital_cost() {
        let v = closed_form_normal_phi(&CocParams::new(0.5, 0.0).unwrap());
        assert!((v + 0.398_942_280_401_432_7).abs() < 1e-12, "{v}");
    }

    #[test]
    fn solvency_level_value() {
        let coc = CocParams::new(0.995, 0.06).unwrap();
        let q = 2.575_829_303_548_901;
        let expected = q - quadrature_shortfall(q) / 1.06;
        let v = closed_form_normal_phi(&coc);
        assert!((v - expected).abs() < 1e-8, "{v} vs {expected}");
        assert!((v - 0.1444).abs() < 5e-4);
    }

    #[test]
    fn infinite_capital_cost_limit() {
        let q = 2.575_829_303_548_901;
        let v = closed_form_normal_phi(&CocParams::new(0.995, 1e12).unwrap());
        assert!((v - q).abs() < 1e-9);
    }

    #[test]
    fn terminal_value_is_affine() {
        let p = ArGarchParams::paper();
        let coc = CocParams::default();
        assert_eq!(closed_form_terminal_ar_garch(&p, 0.0, 0.0, &coc), p.alpha0);
        let a = closed_form_terminal_ar_garch(&p, 1.0, 0.7, &coc);
        let b = closed_form_terminal_ar_garch(&p, 3.0, 0.7, &coc);
        assert!(((b - a) / 2.0 - p.alpha1).abs() < 1e-12);
    }

    struct Walk {
        scale: f64,
    }

    impl MarkovModel for Walk {
        fn dim(&self) -> usize {
            1
        }
        fn horizon(&self) -> usize {
            2
        }
        fn initial_state(&self) -> ModelState {
            ModelState(vec![1.0])
        }
        fn step_into(&self, _t: usize, from: &[f64], _rng: &mut SimRng, to: &mut [f64]) {
            to[0] = from[0] + 2.0;
        }
        fn cashflow(&self, _t: usize, s: &[f64]) -> f64 {
            self.scale * s[0]
        }
    }

    fn small() -> NestedConfig {
        NestedConfig {
            outer: 50,
            inner: 300,
            batches: 4,
            seed: 1,
            threads: 1,
        }
    }

    #[test]
    fn zero_cashflow_is_zero() {
        let est = nested_value_t2(&Walk { scale: 0.0 }, &small(), &CocParams::default()).unwrap();
        assert_eq!((est.value, est.standard_error), (0.0, 0.0));
    }

    #[test]
    fn deterministic_model_composes() {
        // g_1(s_1) + g_2(s_2) = 3 + 5
        let est = nested_value_t2(&Walk { scale: 1.0 }, &small(), &CocParams::default()).unwrap();
        assert_eq!(est.value, 8.0);
        assert_eq!(est.method, OracleMethod::NestedBruteForce);
    }

    #[test]
    fn rejects_other_horizons() {
        let m = ArGarch::new(ArGarchParams::paper(), 3).unwrap();
        let err = nested_value_t2(&m, &small(), &CocParams::default()).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }
}
