//! Regression basis functions for each model family.
//!
//! Every basis starts with the constant function. Evaluation writes into a
//! caller buffer because it sits on the innermost simulation loop.

use std::fmt;
use std::sync::Arc;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::models::{ArGarchSum, LifeModel, LifeModelParams, MarkovModel, Model};

/// Strikes used for `(F - K)_+` regressors when no selection is run.
pub const DEFAULT_STRIKES: [f64; 4] = [200.0, 162.0, 124.0, 103.0];

/// A strike is kept only if `F_t` exceeds it with at least this probability
/// at every regression time.
pub const MIN_STRIKE_EXCEEDANCE: f64 = 0.01;

/// ... and with at least this many expected exceedances among the outer
/// draws.
pub const MIN_STRIKE_HITS: f64 = 20.0;

type CustomFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum Kind {
    ArGarch { with_sigma_sq: bool },
    ArGarchSum { components: usize },
    Life(LifeBasis),
    Custom(Arc<CustomFn>),
}

#[derive(Debug, Clone)]
struct LifeBasis {
    cohorts: usize,
    death_probs: Vec<f64>,
    strikes: Vec<f64>,
    // C(F, S*, T, t) and C(F, D*, t+1, t) share the F dynamics.
    mu_f: f64,
    sigma_f: f64,
    survival_benefit: f64,
    death_benefit: f64,
    to_horizon: f64,
}

/// The ordered family `{1, Phi_1, .., Phi_N}` used at time `t`.
#[derive(Clone)]
pub struct BasisSet {
    t: usize,
    labels: Vec<String>,
    kind: Kind,
}

impl fmt::Debug for BasisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisSet")
            .field("t", &self.t)
            .field("labels", &self.labels)
            .finish()
    }
}

impl BasisSet {
    pub fn t(&self) -> usize {
        self.t
    }

    /// Number of functions including the constant.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// A basis from an arbitrary map. `f` fills entries `1..` of its output;
    /// entry 0 is always the constant 1. `labels` names the non-constant
    /// functions.
    pub fn custom<F>(t: usize, labels: Vec<String>, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        let mut all = vec!["1".to_string()];
        all.extend(labels);
        Self {
            t,
            labels: all,
            kind: Kind::Custom(Arc::new(f)),
        }
    }

    pub fn eval(&self, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(state, &mut out);
        out
    }

    /// Writes `(1, Phi_1(state), ..)` into `out[..len]`.
    #[inline]
    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        match &self.kind {
            Kind::ArGarch { with_sigma_sq } => {
                let (l, s) = (state[0], state[1]);
                out[1] = l;
                out[2] = s;
                out[3] = l * l;
                out[4] = l * s;
                if *with_sigma_sq {
                    out[5] = s * s;
                }
            }
            Kind::ArGarchSum { components: k } => {
                let k = *k;
                let levels = &state[..k];
                let sigmas = &state[k..2 * k];
                out[1..=k].copy_from_slice(levels);
                out[k + 1..=2 * k].copy_from_slice(sigmas);
                let l: f64 = levels.iter().sum();
                let var: f64 = sigmas.iter().map(|s| s * s).sum();
                let s = var.sqrt();
                out[2 * k + 1] = s;
                out[2 * k + 2] = l * l;
                out[2 * k + 3] = l * s;
                out[2 * k + 4] = var;
            }
            Kind::Life(b) => b.eval_into(state, out),
            Kind::Custom(f) => f(state, out),
        }
    }
}

/// `{1, L, sigma, L^2, L sigma, sigma^2}` for state `(L_t, sigma_{t+1})`.
///
/// At `t = 1` the starting volatility is fixed, so `sigma_2^2` is an affine
/// function of `L_1^2` and is left out.
pub fn build_basis_ar_garch(t: usize) -> BasisSet {
    let with_sigma_sq = t != 1;
    let all = ["1", "L", "sigma", "L^2", "L*sigma", "sigma^2"];
    let used = if with_sigma_sq { &all[..] } else { &all[..5] };
    BasisSet {
        t,
        labels: used.iter().map(|s| s.to_string()).collect(),
        kind: Kind::ArGarch { with_sigma_sq },
    }
}

/// Components `L_i`, `sigma_i` plus aggregate `sigma`, `L^2`, `L sigma`,
/// `sigma^2`, where `L = sum L_i` and `sigma^2 = sum sigma_i^2`. The
/// aggregate `L` is left out since it equals the sum of the components.
pub fn build_basis_ar_garch_sum(t: usize, components: usize) -> BasisSet {
    let mut labels = vec!["1".to_string()];
    labels.extend((1..=components).map(|i| format!("L{i}")));
    labels.extend((1..=components).map(|i| format!("sigma{i}")));
    labels.extend(["sigma", "L^2", "L*sigma", "sigma^2"].iter().map(|s| s.to_string()));
    BasisSet {
        t,
        labels,
        kind: Kind::ArGarchSum { components },
    }
}

#[inline]
fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn call_value_raw(f: f64, k: f64, tau: f64, mu: f64, sigma: f64) -> f64 {
    let forward = f * (mu * tau).exp();
    if k <= 0.0 {
        return forward - k;
    }
    let vol = sigma * tau.sqrt();
    if vol <= 0.0 {
        return (forward - k).max(0.0);
    }
    let d1 = ((forward / k).ln() + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    forward * std_normal_cdf(d1) - k * std_normal_cdf(d2)
}

/// `E[(F_maturity - K)_+ | F_now = f]` under the log-normal dynamics of `F`
/// with drift `mu_F` and no discounting.
pub fn call_value(f: f64, k: f64, maturity: usize, now: usize, params: &LifeModelParams) -> Result<f64> {
    if f.is_nan() || f <= 0.0 || k < 0.0 || maturity < now {
        return Err(Error::InvalidParameter(
            "call value needs F > 0, K >= 0 and maturity >= now".into(),
        ));
    }
    Ok(call_value_raw(f, k, (maturity - now) as f64, params.mu_f, params.sigma_f))
}

impl LifeBasis {
    fn financial_len(&self) -> usize {
        7 + 2 * self.strikes.len() + 4
    }

    fn eval_into(&self, state: &[f64], out: &mut [f64]) {
        let (y, f) = (state[0], state[1]);
        let k = self.cohorts;
        let counts = &state[2..2 + k];
        out[1] = y;
        out[2] = f;
        out[3..3 + k].copy_from_slice(counts);

        let mut mean = 0.0;
        let mut var = 0.0;
        let mut alive = 0.0;
        for (n, q) in counts.iter().zip(&self.death_probs) {
            mean += n * q;
            var += n * q * (1.0 - q);
            alive += n;
        }
        let factors = [mean, var.sqrt(), alive];

        let c_s = call_value_raw(f, self.survival_benefit, self.to_horizon, self.mu_f, self.sigma_f);
        let c_d = call_value_raw(f, self.death_benefit, 1.0, self.mu_f, self.sigma_f);
        let width = self.financial_len();
        let mut fin = [0.0f64; 64];
        let fin = &mut fin[..width];
        fin[0] = y;
        fin[1] = f;
        fin[2] = y * y;
        fin[3] = f * f;
        fin[4] = f * f * f;
        fin[5] = y * f;
        fin[6] = y * f * f;
        let j = self.strikes.len();
        for (s, strike) in self.strikes.iter().enumerate() {
            let payoff = (f - strike).max(0.0);
            fin[7 + s] = payoff;
            fin[7 + j + s] = payoff * y;
        }
        let base = 7 + 2 * j;
        fin[base] = c_s;
        fin[base + 1] = c_d;
        fin[base + 2] = c_s * y;
        fin[base + 3] = c_d * y;

        let mut pos = 3 + k;
        for a in factors {
            for b in fin.iter() {
                out[pos] = a * b;
                pos += 1;
            }
        }
    }
}

/// State coordinates `Y, F, N^1..N^k` plus products of
/// `{mean deaths, sd deaths, alive}` over `(t, t+1)` with a set of financial
/// regressors built from `Y`, `F`, call payoffs at `strikes` and the
/// expected survival and death benefit options.
pub fn build_basis_life(t: usize, model: &LifeModel, strikes: &[f64]) -> Result<BasisSet> {
    let params = &model.params;
    let horizon = model.horizon();
    if t >= horizon {
        return Err(Error::InvalidParameter(format!(
            "life basis is defined for t < T = {horizon}, got {t}"
        )));
    }
    if strikes.len() > 12 {
        return Err(Error::InvalidParameter("at most 12 strikes are supported".into()));
    }
    let k = params.cohorts.len();
    let basis = LifeBasis {
        cohorts: k,
        death_probs: (0..k).map(|i| params.death_prob(i, t)).collect(),
        strikes: strikes.to_vec(),
        mu_f: params.mu_f,
        sigma_f: params.sigma_f,
        survival_benefit: params.survival_benefit,
        death_benefit: params.death_benefit,
        to_horizon: (horizon - t) as f64,
    };

    let mut fin_labels: Vec<String> = ["Y", "F", "Y^2", "F^2", "F^3", "Y*F", "Y*F^2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    fin_labels.extend(strikes.iter().map(|s| format!("(F-{s})+")));
    fin_labels.extend(strikes.iter().map(|s| format!("(F-{s})+*Y")));
    fin_labels.extend(
        ["C(F,S*,T)", "C(F,D*,t+1)", "C(F,S*,T)*Y", "C(F,D*,t+1)*Y"]
            .iter()
            .map(|s| s.to_string()),
    );

    let mut labels = vec!["1".to_string(), "Y".to_string(), "F".to_string()];
    labels.extend((1..=k).map(|i| format!("N{i}")));
    for a in ["mu", "sd", "N"] {
        labels.extend(fin_labels.iter().map(|b| format!("{a}*{b}")));
    }
    debug_assert_eq!(labels.len(), 3 + k + 3 * basis.financial_len());
    Ok(BasisSet {
        t,
        labels,
        kind: Kind::Life(basis),
    })
}

/// `P(F_t > K)` under the log-normal law of `F_t` given `F_0`.
pub fn exceedance_probability(params: &LifeModelParams, strike: f64, t: usize) -> f64 {
    if strike <= 0.0 {
        return 1.0;
    }
    let tf = t as f64;
    let mean = params.f0.ln() + (params.mu_f - 0.5 * params.sigma_f * params.sigma_f) * tf;
    let sd = params.sigma_f * tf.sqrt();
    if sd <= 0.0 {
        return if mean.exp() > strike { 1.0 } else { 0.0 };
    }
    1.0 - std_normal_cdf((strike.ln() - mean) / sd)
}

/// Strikes whose payoff column is nondegenerate at every regression time
/// `1..T-1` for a sample of `outer` draws.
pub fn feasible_strikes(model: &LifeModel, strikes: &[f64], outer: usize) -> Vec<f64> {
    let horizon = model.horizon();
    strikes
        .iter()
        .copied()
        .filter(|&k| {
            (1..horizon).all(|t| {
                let p = exceedance_probability(&model.params, k, t);
                p >= MIN_STRIKE_EXCEEDANCE && p * outer as f64 >= MIN_STRIKE_HITS
            })
        })
        .collect()
}

/// Ranks candidate strikes by the R^2 of regressing `residuals` on
/// `(1, (F - K)_+)` and returns the best `count` of them.
///
/// Returns the candidates unranked if the residuals have no variance.
pub fn select_strikes_by_r2(candidates: &[f64], f_values: &[f64], residuals: &[f64], count: usize) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate strikes".into()));
    }
    if f_values.len() != residuals.len() {
        return Err(Error::LengthMismatch {
            expected: f_values.len(),
            got: residuals.len(),
        });
    }
    let count = count.clamp(1, candidates.len());
    if candidates.len() == 1 {
        return Ok(candidates.to_vec());
    }
    let n = residuals.len() as f64;
    let mean_r = residuals.iter().sum::<f64>() / n;
    let ss_r: f64 = residuals.iter().map(|r| (r - mean_r).powi(2)).sum();
    if ss_r.is_nan() || ss_r <= 0.0 {
        log::warn!("residuals have zero variance; strikes left unranked");
        return Ok(candidates[..count].to_vec());
    }
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            let xs: Vec<f64> = f_values.iter().map(|f| (f - k).max(0.0)).collect();
            let mean_x = xs.iter().sum::<f64>() / n;
            let ss_x: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
            let cross: f64 = xs
                .iter()
                .zip(residuals)
                .map(|(x, r)| (x - mean_x) * (r - mean_r))
                .sum();
            let r2 = if ss_x > 0.0 { cross * cross / (ss_x * ss_r) } else { 0.0 };
            (r2, idx)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored[..count].iter().map(|&(_, i)| candidates[i]).collect())
}

/// Bases for `t = 0..T-1` (index `t`), as used by the engine.
pub fn bases_for(model: &Model, strikes: &[f64]) -> Result<Vec<BasisSet>> {
    let horizon = model.horizon();
    match model {
        Model::ArGarch(_) => Ok((0..horizon).map(build_basis_ar_garch).collect()),
        Model::ArGarchSum(m) => Ok(sum_bases(m)),
        Model::Life(m) => (0..horizon).map(|t| build_basis_life(t, m, strikes)).collect(),
    }
}

fn sum_bases(m: &ArGarchSum) -> Vec<BasisSet> {
    (0..m.horizon())
        .map(|t| build_basis_ar_garch_sum(t, m.components()))
        .collect()
}
