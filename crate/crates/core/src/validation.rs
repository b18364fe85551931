//! Out-of-sample validation of a fitted coefficient table.
//!
//! Fresh outer states are drawn with an independent seed; their targets are
//! recomputed against the frozen continuation coefficients and compared to
//! the regression predictions.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::engine::{with_inner_sample, CoefficientTable, Continuation};
use crate::error::{Error, Result};
use crate::models::{sample_marginal_into, MarkovModel};
use crate::parallel::Workers;
use crate::risk::{coc_pair_in_place, quantile_rank, CocParams};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
    pub quantile_band: (f64, f64),
    pub bins: usize,
    pub threads: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            outer: 10_000,
            inner: 100_000,
            seed: 2,
            quantile_band: (0.025, 0.975),
            bins: 40,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triple {
    pub r: f64,
    pub e: f64,
    pub v: f64,
}

/// Per-outer-point validation quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationPoint {
    pub target: Triple,
    pub predicted: Triple,
    pub andp: f64,
    pub aroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeReport {
    pub t: usize,
    pub rmse: Triple,
    pub nrmse: Triple,
    pub andp_band: (f64, f64),
    /// Band of `1 - ANDP`, the realized default probability.
    pub default_band: (f64, f64),
    pub aroc_band: (f64, f64),
    pub andp_mean: f64,
    pub aroc_median: f64,
    /// Points whose predicted shortfall was not positive.
    pub aroc_invalid: usize,
    pub andp_histogram: Vec<(f64, usize)>,
    pub aroc_histogram: Vec<(f64, usize)>,
    pub points: Vec<ValidationPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub per_time: Vec<TimeReport>,
}

pub fn rmse(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptySample);
    }
    let ss: f64 = targets.iter().zip(predictions).map(|(z, p)| (z - p) * (z - p)).sum();
    Ok((ss / targets.len() as f64).sqrt())
}

/// RMSE divided by the root mean square of the targets.
pub fn nrmse(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    let err = rmse(targets, predictions)?;
    let scale = (targets.iter().map(|z| z * z).sum::<f64>() / targets.len() as f64).sqrt();
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::DivisionGuard("NRMSE of all-zero targets"));
    }
    Ok(err / scale)
}

/// Fraction of the inner sample at or below the predicted capital.
pub fn andp(inner: &[f64], predicted_r: f64) -> Result<f64> {
    crate::risk::empirical_cdf(inner, predicted_r)
}

/// `(1 + eta) e / predicted_e`; a nonpositive prediction is rejected.
pub fn aroc(e: f64, predicted_e: f64, eta: f64) -> Result<f64> {
    if predicted_e.is_nan() || predicted_e <= 0.0 {
        return Err(Error::DivisionGuard("nonpositive predicted shortfall"));
    }
    Ok((1.0 + eta) * e / predicted_e)
}

/// Equal-width bins over `[min, max]` as `(lower edge, count)`.
pub fn histogram(samples: &[f64], bins: usize) -> Result<Vec<(f64, usize)>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let idx = if width > 0.0 {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + k as f64 * width, c))
        .collect())
}

fn band(samples: &[f64], (lo, hi): (f64, f64)) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    (xs[quantile_rank(n, lo) - 1], xs[quantile_rank(n, hi) - 1])
}

/// Validates `table` on fresh draws for every `t = 1..T-1`.
pub fn validate<M: MarkovModel + ?Sized>(
    model: &M,
    bases: &[BasisSet],
    table: &CoefficientTable,
    coc: &CocParams,
    config: &ValidationConfig,
) -> Result<ValidationReport> {
    if config.seed == table.seed {
        return Err(Error::Config(format!(
            "validation seed {} collides with the training seed",
            config.seed
        )));
    }
    let horizon = model.horizon();
    if table.horizon != horizon || table.steps.len() + 1 != horizon.max(1) {
        return Err(Error::Mismatch("coefficient table does not match the model horizon".into()));
    }
    if (table.eta - coc.eta).abs() > 0.0 {
        return Err(Error::Mismatch("coefficient table was fitted with a different eta".into()));
    }
    if config.outer == 0 || config.inner == 0 {
        return Err(Error::Config("validation sample sizes must be positive".into()));
    }
    if bases.len() < horizon {
        return Err(Error::Config("bases do not cover the horizon".into()));
    }
    for (t, basis) in bases.iter().enumerate().take(horizon).skip(1) {
        let step = table.step(t).expect("table covers 1..T-1");
        if step.labels != basis.labels() {
            return Err(Error::Mismatch(format!("basis labels differ at t = {t}")));
        }
    }

    let workers = Workers::new(config.threads);
    let dim = model.dim();
    let mut per_time = Vec::with_capacity(horizon.saturating_sub(1));
    for t in 1..horizon {
        let step = table.step(t).expect("checked above");
        let continuation = table.value_coefficients(t + 1).map(|beta_v| Continuation {
            basis: &bases[t + 1],
            beta_v,
        });
        let basis = &bases[t];
        let points: Vec<ValidationPoint> = workers
            .map(config.outer, |i| {
                let mut rng = stream(config.seed, Domain::Validation, t, i as u64);
                let mut state = vec![0.0; dim];
                sample_marginal_into(model, t, &mut rng, &mut state);
                let phi = basis.eval(&state);
                let predicted = Triple {
                    r: step.beta_r.dot(&phi),
                    e: step.beta_e.dot(&phi),
                    v: step.beta_v.dot(&phi),
                };
                let (target, hits) = with_inner_sample(model, t, &state, continuation, config.inner, &mut rng, i, |ys| {
                    let c = coc_pair_in_place(ys, coc);
                    let hits = ys.iter().filter(|&&y| y <= predicted.r).count();
                    (Triple { r: c.r, e: c.e, v: c.v }, hits)
                })?;
                Ok(ValidationPoint {
                    target,
                    predicted,
                    andp: hits as f64 / config.inner as f64,
                    aroc: aroc(target.e, predicted.e, coc.eta).ok(),
                })
            })
            .into_iter()
            .collect::<Result<_>>()?;
        per_time.push(summarize(t, points, config)?);
    }
    Ok(ValidationReport { per_time })
}

fn summarize(t: usize, points: Vec<ValidationPoint>, config: &ValidationConfig) -> Result<TimeReport> {
    let col = |f: fn(&ValidationPoint) -> f64| points.iter().map(f).collect::<Vec<f64>>();
    let (zr, ze, zv) = (col(|p| p.target.r), col(|p| p.target.e), col(|p| p.target.v));
    let (pr, pe, pv) = (col(|p| p.predicted.r), col(|p| p.predicted.e), col(|p| p.predicted.v));
    let rmse_all = Triple {
        r: rmse(&zr, &pr)?,
        e: rmse(&ze, &pe)?,
        v: rmse(&zv, &pv)?,
    };
    // A component that is identically zero (no shortfall anywhere) has no scale.
    let scaled = |z: &[f64], p: &[f64]| match nrmse(z, p) {
        Err(Error::DivisionGuard(_)) => Ok(f64::NAN),
        other => other,
    };
    let nrmse_all = Triple {
        r: scaled(&zr, &pr)?,
        e: scaled(&ze, &pe)?,
        v: scaled(&zv, &pv)?,
    };
    let andps = col(|p| p.andp);
    let defaults: Vec<f64> = andps.iter().map(|a| 1.0 - a).collect();
    let arocs: Vec<f64> = points.iter().filter_map(|p| p.aroc).collect();
    let aroc_invalid = points.len() - arocs.len();
    let (aroc_band, aroc_median, aroc_histogram) = if arocs.is_empty() {
        ((f64::NAN, f64::NAN), f64::NAN, Vec::new())
    } else {
        (
            band(&arocs, config.quantile_band),
            band(&arocs, (0.5, 0.5)).0,
            histogram(&arocs, config.bins)?,
        )
    };
    Ok(TimeReport {
        t,
        rmse: rmse_all,
        nrmse: nrmse_all,
        andp_band: band(&andps, config.quantile_band),
        default_band: band(&defaults, config.quantile_band),
        aroc_band,
        andp_mean: andps.iter().sum::<f64>() / andps.len() as f64,
        aroc_median,
        aroc_invalid,
        andp_histogram: histogram(&andps, config.bins)?,
        aroc_histogram,
        points,
    })
}
