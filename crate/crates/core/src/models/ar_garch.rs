use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{MarkovModel, ModelState};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// AR(1) drift/persistence and GARCH(1,1) variance coefficients.
///
/// `L_{t+1} = a0 + a1 L_t + sigma_{t+1} eps_{t+1}` and
/// `sigma_{t+2}^2 = a2 + a3 sigma_{t+1}^2 + a4 L_{t+1}^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArGarchParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    #[serde(rename = "l0")]
    pub l0: f64,
    pub sigma1: f64,
}

impl ArGarchParams {
    /// The parameter set of the published numerical study.
    pub fn paper() -> Self {
        Self {
            alpha0: 1.0,
            alpha1: 1.0,
            alpha2: 0.1,
            alpha3: 0.1,
            alpha4: 0.1,
            l0: 0.0,
            sigma1: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha0,
            self.alpha1,
            self.alpha2,
            self.alpha3,
            self.alpha4,
            self.l0,
            self.sigma1,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("AR-GARCH parameters must be finite".into()));
        }
        if self.alpha2 < 0.0 || self.alpha3 < 0.0 || self.alpha4 < 0.0 {
            return Err(Error::InvalidParameter(
                "GARCH coefficients alpha2..alpha4 must be nonnegative".into(),
            ));
        }
        if self.sigma1 <= 0.0 {
            return Err(Error::InvalidParameter("sigma1 must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ArGarchParams {
    fn default() -> Self {
        Self::paper()
    }
}

/// One transition of `(L_t, sigma_{t+1})` driven by the standard normal `z`.
#[inline]
pub fn ar_garch_step(p: &ArGarchParams, level: f64, sigma_next: f64, z: f64) -> (f64, f64) {
    let l = p.alpha0 + p.alpha1 * level + sigma_next * z;
    let var = p.alpha2 + p.alpha3 * sigma_next * sigma_next + p.alpha4 * l * l;
    (l, var.max(0.0).sqrt())
}

/// Single AR(1)-GARCH(1,1) cash flow with state `(L_t, sigma_{t+1})`.
#[derive(Debug, Clone)]
pub struct ArGarch {
    pub params: ArGarchParams,
    horizon: usize,
}

impl ArGarch {
    pub fn new(params: ArGarchParams, horizon: usize) -> Result<Self> {
        params.validate()?;
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        Ok(Self { params, horizon })
    }
}

impl MarkovModel for ArGarch {
    fn dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> ModelState {
        ModelState(vec![self.params.l0, self.params.sigma1])
    }

    #[inline]
    fn step_into(&self, _t: usize, from: &[f64], rng: &mut SimRng, to: &mut [f64]) {
        let z: f64 = rng.sample(StandardNormal);
        let (l, s) = ar_garch_step(&self.params, from[0], from[1], z);
        to[0] = l;
        to[1] = s;
    }

    #[inline]
    fn cashflow(&self, _t: usize, state: &[f64]) -> f64 {
        state[0]
    }
}

/// Sum of independent AR(1)-GARCH(1,1) processes.
///
/// State layout: `[L_1, .., L_k, sigma_1, .., sigma_k]` where `sigma_i` is the
/// next-period volatility of component `i`.
#[derive(Debug, Clone)]
pub struct ArGarchSum {
    pub components: Vec<ArGarchParams>,
    horizon: usize,
}

impl ArGarchSum {
    pub fn new(components: Vec<ArGarchParams>, horizon: usize) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("sum model needs at least one component".into()));
        }
        for c in &components {
            c.validate()?;
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        Ok(Self { components, horizon })
    }

    /// `count` i.i.d. copies of the same process.
    pub fn iid(params: ArGarchParams, count: usize, horizon: usize) -> Result<Self> {
        Self::new(vec![params; count], horizon)
    }

    pub fn components(&self) -> usize {
        self.components.len()
    }
}

impl MarkovModel for ArGarchSum {
    fn dim(&self) -> usize {
        2 * self.components.len()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self) -> ModelState {
        let mut v: Vec<f64> = self.components.iter().map(|p| p.l0).collect();
        v.extend(self.components.iter().map(|p| p.sigma1));
        ModelState(v)
    }

    fn step_into(&self, _t: usize, from: &[f64], rng: &mut SimRng, to: &mut [f64]) {
        let k = self.components.len();
        for (i, p) in self.components.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let (l, s) = ar_garch_step(p, from[i], from[k + i], z);
            to[i] = l;
            to[k + i] = s;
        }
    }

    fn cashflow(&self, _t: usize, state: &[f64]) -> f64 {
        state[..self.components.len()].iter().sum()
    }
}
