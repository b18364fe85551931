use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{MarkovModel, ModelState, MortalityLaw};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cohort {
    pub size: u64,
    pub age: u32,
}

/// Unit-linked life portfolio with a risky asset `Y` held by the insurer and
/// an index `F` driving the benefits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifeModelParams {
    pub mu_y: f64,
    pub mu_f: f64,
    pub sigma_y: f64,
    pub sigma_f: f64,
    pub rho: f64,
    pub y0: f64,
    pub f0: f64,
    /// Guaranteed death benefit `D*`.
    pub death_benefit: f64,
    /// Guaranteed survival benefit `S*`.
    pub survival_benefit: f64,
    /// Units of `Y` held per insured.
    pub asset_units: f64,
    pub cohorts: Vec<Cohort>,
    pub mortality: MortalityLaw,
}

/// Default initial size of every cohort in the preset portfolios.
pub const DEFAULT_COHORT_SIZE: u64 = 1000;

impl LifeModelParams {
    fn paper_with_ages(ages: impl Iterator<Item = u32>) -> Self {
        Self {
            mu_y: 0.03,
            mu_f: 0.03,
            sigma_y: 0.1,
            sigma_f: 0.1,
            rho: 0.4,
            y0: 100.0,
            f0: 100.0,
            death_benefit: 100.0,
            survival_benefit: 110.0,
            asset_units: 1.0,
            cohorts: ages
                .map(|age| Cohort {
                    size: DEFAULT_COHORT_SIZE,
                    age,
                })
                .collect(),
            mortality: MortalityLaw::default(),
        }
    }

    /// Four male cohorts aged 50, 60, 70, 80.
    pub fn small() -> Self {
        Self::paper_with_ages((50..=80).step_by(10))
    }

    /// Ten male cohorts aged 40, 45, .., 85.
    pub fn large() -> Self {
        Self::paper_with_ages((40..=85).step_by(5))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mu_y,
            self.mu_f,
            self.sigma_y,
            self.sigma_f,
            self.rho,
            self.y0,
            self.f0,
            self.death_benefit,
            self.survival_benefit,
            self.asset_units,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("life model parameters must be finite".into()));
        }
        if self.sigma_y < 0.0 || self.sigma_f < 0.0 {
            return Err(Error::InvalidParameter("asset volatilities must be nonnegative".into()));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::InvalidParameter("correlation must lie in [-1, 1]".into()));
        }
        if self.y0 <= 0.0 || self.f0 <= 0.0 {
            return Err(Error::InvalidParameter("initial asset values must be positive".into()));
        }
        if self.death_benefit < 0.0 || self.survival_benefit < 0.0 || self.asset_units < 0.0 {
            return Err(Error::InvalidParameter(
                "benefit guarantees and asset holding must be nonnegative".into(),
            ));
        }
        if self.cohorts.is_empty() {
            return Err(Error::InvalidParameter("at least one cohort is required".into()));
        }
        if self.cohorts.iter().any(|c| c.size as f64 > 2f64.powi(52)) {
            return Err(Error::InvalidParameter("cohort size too large to store exactly".into()));
        }
        self.mortality.validate()
    }

    /// Death probability during `(t, t+1)` for cohort `i`.
    pub fn death_prob(&self, cohort: usize, t: usize) -> f64 {
        self.mortality.death_prob(self.cohorts[cohort].age + t as u32)
    }
}

/// Cash flow at time `t` from the current asset values, cohort counts and
/// deaths during `(t-1, t]`.
pub fn life_cashflow(
    params: &LifeModelParams,
    t: usize,
    horizon: usize,
    y: f64,
    f: f64,
    counts: &[f64],
    deaths: &[f64],
) -> Result<f64> {
    if deaths.iter().any(|&d| d < 0.0) {
        return Err(Error::InvalidParameter("death counts must be nonnegative".into()));
    }
    Ok(cashflow_unchecked(params, t, horizon, y, f, counts, deaths.iter().sum()))
}

#[inline]
fn cashflow_unchecked(
    p: &LifeModelParams,
    t: usize,
    horizon: usize,
    y: f64,
    f: f64,
    counts: &[f64],
    total_deaths: f64,
) -> f64 {
    let held = p.asset_units * y;
    let mut l = (p.death_benefit.max(f) - held) * total_deaths;
    if t == horizon {
        l += (p.survival_benefit.max(f) - held) * counts.iter().sum::<f64>();
    }
    l
}

/// Life model with state `(Y, F, N^1..N^k, N^1_prev..N^k_prev)`.
///
/// Carrying the previous counts makes the cash flow a function of the state.
#[derive(Debug, Clone)]
pub struct LifeModel {
    pub params: LifeModelParams,
    horizon: usize,
}

impl LifeModel {
    pub fn new(params: LifeModelParams, horizon: usize) -> Result<Self> {
        params.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        Ok(Self { params, horizon })
    }

    pub fn cohorts(&self) -> usize {
        self.params.cohorts.len()
    }

    fn advance_assets(&self, y: f64, f: f64, w1: f64, w2: f64) -> (f64, f64) {
        let p = &self.params;
        let y_next = y * ((p.mu_y - 0.5 * p.sigma_y * p.sigma_y) + p.sigma_y * w1).exp();
        let wf = p.rho * w1 + (1.0 - p.rho * p.rho).sqrt() * w2;
        let f_next = f * ((p.mu_f - 0.5 * p.sigma_f * p.sigma_f) + p.sigma_f * wf).exp();
        (y_next, f_next)
    }
}

impl MarkovModel for LifeModel {
    fn dim(&self) -> usize {
        2 + 2 * self.cohorts()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> ModelState {
        let p = &self.params;
        let mut v = vec![p.y0, p.f0];
        v.extend(p.cohorts.iter().map(|c| c.size as f64));
        v.extend(p.cohorts.iter().map(|c| c.size as f64));
        ModelState(v)
    }

    fn step_into(&self, t: usize, from: &[f64], rng: &mut SimRng, to: &mut [f64]) {
        let k = self.cohorts();
        let w1: f64 = rng.sample(StandardNormal);
        let w2: f64 = rng.sample(StandardNormal);
        let (y, f) = self.advance_assets(from[0], from[1], w1, w2);
        to[0] = y;
        to[1] = f;
        for i in 0..k {
            let alive = from[2 + i];
            let survive = 1.0 - self.params.death_prob(i, t);
            let next = if alive <= 0.0 || survive <= 0.0 {
                0.0
            } else if survive >= 1.0 {
                alive
            } else {
                Binomial::new(alive as u64, survive)
                    .expect("survival probability in (0, 1)")
                    .sample(rng) as f64
            };
            to[2 + i] = next;
            to[2 + k + i] = alive;
        }
    }

    fn cashflow(&self, t: usize, state: &[f64]) -> f64 {
        let k = self.cohorts();
        let counts = &state[2..2 + k];
        let prev = &state[2 + k..2 + 2 * k];
        let deaths: f64 = prev.iter().zip(counts).map(|(p, c)| p - c).sum();
        cashflow_unchecked(&self.params, t, self.horizon, state[0], state[1], counts, deaths)
    }
}
