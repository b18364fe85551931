//! Markov models of the liability cash flow.
//!
//! A model exposes its state dimension, horizon, constant initial state, a
//! one-step transition sampler and the cash-flow map `L_t = g_t(S_t)`.

mod ar_garch;
mod life;
mod mortality;

pub use ar_garch::{ar_garch_step, ArGarch, ArGarchParams, ArGarchSum};
pub use life::{life_cashflow, Cohort, LifeModel, LifeModelParams, DEFAULT_COHORT_SIZE};
pub use mortality::{MortalityLaw, Sex};

use crate::rng::SimRng;

/// A point of the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState(pub Vec<f64>);

impl ModelState {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for ModelState {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub trait MarkovModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Terminal time `T`.
    fn horizon(&self) -> usize;

    fn initial_state(&self) -> ModelState;

    /// Writes a draw of `S_{t+1}` given `S_t = from` into `to`, consuming
    /// randomness only from `rng`.
    fn step_into(&self, t: usize, from: &[f64], rng: &mut SimRng, to: &mut [f64]);

    /// `g_t(S_t)`.
    fn cashflow(&self, t: usize, state: &[f64]) -> f64;

    fn step_sample(&self, state: &ModelState, t: usize, rng: &mut SimRng) -> ModelState {
        let mut next = vec![0.0; self.dim()];
        self.step_into(t, state.values(), rng, &mut next);
        ModelState(next)
    }
}

/// Draws `S_t` from its unconditional law by iterating the transition from
/// `S_0`. `out` must have length `dim`.
pub fn sample_marginal_into<M: MarkovModel + ?Sized>(
    model: &M,
    t: usize,
    rng: &mut SimRng,
    out: &mut [f64],
) {
    let init = model.initial_state();
    out.copy_from_slice(init.values());
    let mut scratch = vec![0.0; model.dim()];
    for s in 0..t {
        model.step_into(s, out, rng, &mut scratch);
        out.copy_from_slice(&scratch);
    }
}

/// `count` independent draws from the law of `S_t`, all from one stream.
pub fn simulate_marginal<M: MarkovModel + ?Sized>(
    model: &M,
    t: usize,
    count: usize,
    rng: &mut SimRng,
) -> Vec<ModelState> {
    (0..count)
        .map(|_| {
            let mut s = vec![0.0; model.dim()];
            sample_marginal_into(model, t, rng, &mut s);
            ModelState(s)
        })
        .collect()
}

/// The model families that ship with the crate.
#[derive(Debug, Clone)]
pub enum Model {
    ArGarch(ArGarch),
    ArGarchSum(ArGarchSum),
    Life(LifeModel),
}

impl MarkovModel for Model {
    fn dim(&self) -> usize {
        match self {
            Model::ArGarch(m) => m.dim(),
            Model::ArGarchSum(m) => m.dim(),
            Model::Life(m) => m.dim(),
        }
    }

    fn horizon(&self) -> usize {
        match self {
            Model::ArGarch(m) => m.horizon(),
            Model::ArGarchSum(m) => m.horizon(),
            Model::Life(m) => m.horizon(),
        }
    }

    fn initial_state(&self) -> ModelState {
        match self {
            Model::ArGarch(m) => m.initial_state(),
            Model::ArGarchSum(m) => m.initial_state(),
            Model::Life(m) => m.initial_state(),
        }
    }

    #[inline]
    fn step_into(&self, t: usize, from: &[f64], rng: &mut SimRng, to: &mut [f64]) {
        match self {
            Model::ArGarch(m) => m.step_into(t, from, rng, to),
            Model::ArGarchSum(m) => m.step_into(t, from, rng, to),
            Model::Life(m) => m.step_into(t, from, rng, to),
        }
    }

    #[inline]
    fn cashflow(&self, t: usize, state: &[f64]) -> f64 {
        match self {
            Model::ArGarch(m) => m.cashflow(t, state),
            Model::ArGarchSum(m) => m.cashflow(t, state),
            Model::Life(m) => m.cashflow(t, state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn paper_ar_garch() -> ArGarch {
        ArGarch::new(ArGarchParams::paper(), 6).unwrap()
    }

    #[test]
    fn marginal_at_zero_is_initial_state() {
        let m = paper_ar_garch();
        let mut rng = stream(1, Domain::Test, 0, 0);
        let draws = simulate_marginal(&m, 0, 5, &mut rng);
        assert!(draws.iter().all(|s| *s == m.initial_state()));
    }

    #[test]
    fn marginal_is_deterministic() {
        let m = paper_ar_garch();
        let a = simulate_marginal(&m, 3, 50, &mut stream(9, Domain::Test, 0, 0));
        let b = simulate_marginal(&m, 3, 50, &mut stream(9, Domain::Test, 0, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_mean_of_first_step() {
        // E L_1 = alpha_0 + alpha_1 * L_0 = 1, Var L_1 = sigma_1^2 = 1.
        let m = paper_ar_garch();
        let n = 100_000;
        let draws = simulate_marginal(&m, 1, n, &mut stream(2, Domain::Test, 0, 0));
        let mean = draws.iter().map(|s| s.0[0]).sum::<f64>() / n as f64;
        let se = 1.0 / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }
}
