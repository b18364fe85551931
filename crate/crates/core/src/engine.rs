//! Backward least-squares Monte Carlo recursion.
//!
//! For `t = T-1, .., 1` the engine draws `M` outer states from the law of
//! `S_t`, runs `n` conditional successors from each, evaluates the empirical
//! capital `R` and shortfall `E` of `Y = L_{t+1} + V_{t+1}(S_{t+1})`, and
//! regresses both on the basis at `t`. The value coefficients are
//! `beta_V = beta_R - beta_E / (1 + eta)`. At `t = 0` the state is constant,
//! so the regression reduces to averaging the `M` outer targets.
//!
//! Outer point `i` at time `t` draws from its own stream `(seed, t, i)`, which
//! makes the output independent of the thread count.

use std::cell::RefCell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::{build_basis_life, feasible_strikes, select_strikes_by_r2, BasisSet};
use crate::error::{Error, Result};
use crate::models::{sample_marginal_into, LifeModel, MarkovModel};
use crate::ols::{ols_fit, Coefficients, DesignMatrix};
use crate::parallel::Workers;
use crate::risk::{coc_pair_in_place, CocParams, CocValue};
use crate::rng::{stream, Domain, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Outer sample size `M`.
    pub outer: usize,
    /// Inner sample size `n`.
    pub inner: usize,
    /// Horizon `T`; must equal the model's.
    pub horizon: usize,
    pub coc: CocParams,
    pub seed: u64,
    /// Worker threads, 0 for all cores.
    pub threads: usize,
}

impl RunConfig {
    pub fn validate(&self, bases: &[BasisSet]) -> Result<()> {
        self.coc.validate()?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon T must be at least 1".into()));
        }
        let min_inner = (1.0 / (1.0 - self.coc.alpha)).ceil() as usize;
        if self.inner < min_inner {
            return Err(Error::Config(format!(
                "inner sample size n = {} leaves no tail point at alpha = {} (need n >= {min_inner})",
                self.inner, self.coc.alpha
            )));
        }
        if self.outer == 0 {
            return Err(Error::Config("outer sample size M must be positive".into()));
        }
        if bases.len() < self.horizon {
            return Err(Error::Config(format!(
                "bases cover t < {}, horizon is {}",
                bases.len(),
                self.horizon
            )));
        }
        for b in &bases[1..self.horizon] {
            if self.outer < b.len() {
                return Err(Error::Config(format!(
                    "M = {} is smaller than the {} basis functions at t = {}",
                    self.outer,
                    b.len(),
                    b.t()
                )));
            }
        }
        Ok(())
    }

    pub fn workers(&self) -> Workers {
        Workers::new(self.threads)
    }
}

/// Fitted coefficients at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCoefficients {
    pub t: usize,
    pub labels: Vec<String>,
    pub beta_r: Coefficients,
    pub beta_e: Coefficients,
    pub beta_v: Coefficients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub horizon: usize,
    pub eta: f64,
    /// Master seed of the training run.
    pub seed: u64,
    /// Entries for `t = 1..T-1`, in increasing `t`.
    pub steps: Vec<StepCoefficients>,
    pub r0: f64,
    pub e0: f64,
    pub v0: f64,
}

impl CoefficientTable {
    pub fn step(&self, t: usize) -> Option<&StepCoefficients> {
        if t == 0 || t >= self.horizon {
            return None;
        }
        self.steps.get(t - 1)
    }

    /// `beta_V` at `t`; `None` at the horizon, where the value is zero.
    pub fn value_coefficients(&self, t: usize) -> Option<&Coefficients> {
        self.step(t).map(|s| &s.beta_v)
    }
}

pub fn value_at_zero(table: &CoefficientTable) -> f64 {
    table.v0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTiming {
    pub t: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: CoefficientTable,
    pub timings: Vec<StepTiming>,
}

/// Continuation value used when forming inner realizations.
#[derive(Clone, Copy)]
pub struct Continuation<'a> {
    pub basis: &'a BasisSet,
    pub beta_v: &'a Coefficients,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

#[derive(Default)]
struct Scratch {
    ys: Vec<f64>,
    next: Vec<f64>,
    phi: Vec<f64>,
}

/// Fills `ys` with `n` realizations of `g_{t+1}(S_{t+1}) + V_{t+1}(S_{t+1})`
/// for successors of `state`.
#[allow(clippy::too_many_arguments)]
fn fill_inner<M: MarkovModel + ?Sized>(
    model: &M,
    t: usize,
    state: &[f64],
    continuation: Option<Continuation<'_>>,
    n: usize,
    rng: &mut SimRng,
    next: &mut Vec<f64>,
    phi: &mut Vec<f64>,
    ys: &mut Vec<f64>,
) {
    next.resize(model.dim(), 0.0);
    ys.clear();
    ys.reserve(n);
    match continuation {
        Some(c) => {
            phi.resize(c.basis.len(), 0.0);
            for _ in 0..n {
                model.step_into(t, state, rng, next);
                c.basis.eval_into(next, phi);
                ys.push(model.cashflow(t + 1, next) + c.beta_v.dot(phi));
            }
        }
        None => {
            for _ in 0..n {
                model.step_into(t, state, rng, next);
                ys.push(model.cashflow(t + 1, next));
            }
        }
    }
}

/// Runs `f` on the inner realizations from `state`, after checking they are
/// finite. The slice handed to `f` may be reordered by it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn with_inner_sample<M, F, T>(
    model: &M,
    t: usize,
    state: &[f64],
    continuation: Option<Continuation<'_>>,
    n: usize,
    rng: &mut SimRng,
    index: usize,
    f: F,
) -> Result<T>
where
    M: MarkovModel + ?Sized,
    F: FnOnce(&mut [f64]) -> T,
{
    SCRATCH.with(|cell| {
        let mut scratch = cell.borrow_mut();
        let Scratch { ys, next, phi } = &mut *scratch;
        fill_inner(model, t, state, continuation, n, rng, next, phi, ys);
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite {
                t,
                index,
                what: "inner realization",
            });
        }
        Ok(f(ys))
    })
}

/// `(R, E)` at one outer state from `n` conditional successors.
pub fn inner_targets<M: MarkovModel + ?Sized>(
    model: &M,
    t: usize,
    continuation: Option<Continuation<'_>>,
    outer_state: &[f64],
    n: usize,
    coc: &CocParams,
    rng: &mut SimRng,
) -> Result<CocValue> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if let Some(c) = continuation {
        if c.beta_v.len() != c.basis.len() {
            return Err(Error::LengthMismatch {
                expected: c.basis.len(),
                got: c.beta_v.len(),
            });
        }
    }
    with_inner_sample(model, t, outer_state, continuation, n, rng, 0, |ys| {
        coc_pair_in_place(ys, coc)
    })
}

pub(crate) struct OuterPoint {
    pub state: Vec<f64>,
    pub target: CocValue,
}

/// Draws the outer states at `t` and their targets.
#[allow(clippy::too_many_arguments)]
pub(crate) fn outer_targets<M: MarkovModel + ?Sized>(
    model: &M,
    t: usize,
    continuation: Option<Continuation<'_>>,
    outer: usize,
    inner: usize,
    coc: &CocParams,
    seed: u64,
    domain: Domain,
    workers: &Workers,
) -> Result<Vec<OuterPoint>> {
    let dim = model.dim();
    workers
        .map(outer, |i| {
            let mut rng = stream(seed, domain, t, i as u64);
            let mut state = vec![0.0; dim];
            sample_marginal_into(model, t, &mut rng, &mut state);
            let target = with_inner_sample(model, t, &state, continuation, inner, &mut rng, i, |ys| {
                coc_pair_in_place(ys, coc)
            })?;
            Ok(OuterPoint { state, target })
        })
        .into_iter()
        .collect()
}

/// Backward recursion producing the coefficient table and `V_0`.
pub fn lsm_backward<M: MarkovModel + ?Sized>(model: &M, bases: &[BasisSet], config: &RunConfig) -> Result<RunOutput> {
    let horizon = model.horizon();
    if config.horizon != horizon {
        return Err(Error::Config(format!(
            "run horizon {} does not match the model horizon {horizon}",
            config.horizon
        )));
    }
    config.validate(bases)?;
    let workers = config.workers();
    let coc = config.coc;
    let dim = model.dim();

    let mut steps: Vec<StepCoefficients> = Vec::with_capacity(horizon.saturating_sub(1));
    let mut timings = Vec::with_capacity(horizon);

    for t in (1..horizon).rev() {
        let started = Instant::now();
        let continuation = steps.last().map(|s: &StepCoefficients| Continuation {
            basis: &bases[t + 1],
            beta_v: &s.beta_v,
        });
        let points = outer_targets(
            model,
            t,
            continuation,
            config.outer,
            config.inner,
            &coc,
            config.seed,
            Domain::Training,
            &workers,
        )?;

        let states: Vec<f64> = points.iter().flat_map(|p| p.state.iter().copied()).collect();
        let rs: Vec<f64> = points.iter().map(|p| p.target.r).collect();
        let es: Vec<f64> = points.iter().map(|p| p.target.e).collect();
        let design = DesignMatrix::build(&bases[t], &states, dim, &workers);
        let beta_r = ols_fit(&design, &rs)?;
        let beta_e = ols_fit(&design, &es)?;
        let beta_v = beta_r.coc_combine(&beta_e, coc.eta);
        log::info!("t = {t}: fitted {} coefficients", beta_v.len());
        steps.push(StepCoefficients {
            t,
            labels: bases[t].labels().to_vec(),
            beta_r,
            beta_e,
            beta_v,
        });
        timings.push(StepTiming {
            t,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    let started = Instant::now();
    let continuation = steps.last().map(|s| Continuation {
        basis: &bases[1],
        beta_v: &s.beta_v,
    });
    let points = outer_targets(
        model,
        0,
        continuation,
        config.outer,
        config.inner,
        &coc,
        config.seed,
        Domain::Training,
        &workers,
    )?;
    let m = points.len() as f64;
    let r0 = points.iter().map(|p| p.target.r).sum::<f64>() / m;
    let e0 = points.iter().map(|p| p.target.e).sum::<f64>() / m;
    let v0 = coc.value(r0, e0);
    timings.push(StepTiming {
        t: 0,
        seconds: started.elapsed().as_secs_f64(),
    });

    steps.reverse();
    Ok(RunOutput {
        table: CoefficientTable {
            horizon,
            eta: coc.eta,
            seed: config.seed,
            steps,
            r0,
            e0,
            v0,
        },
        timings,
    })
}

/// Picks the `count` strikes whose call payoffs best explain the residuals
/// of the value targets at `T-1` after fitting the strike-free life basis.
/// Candidates that are degenerate at some regression time are dropped first.
pub fn select_life_strikes(model: &LifeModel, candidates: &[f64], count: usize, config: &RunConfig) -> Result<Vec<f64>> {
    let candidates = feasible_strikes(model, candidates, config.outer);
    if candidates.is_empty() {
        return Ok(candidates);
    }
    let horizon = model.horizon();
    if horizon < 2 {
        return Ok(candidates);
    }
    let t = horizon - 1;
    let workers = config.workers();
    let points = outer_targets(
        model,
        t,
        None,
        config.outer,
        config.inner,
        &config.coc,
        config.seed,
        Domain::StrikeSelection,
        &workers,
    )?;
    let basis = build_basis_life(t, model, &[])?;
    let states: Vec<f64> = points.iter().flat_map(|p| p.state.iter().copied()).collect();
    let vs: Vec<f64> = points.iter().map(|p| p.target.v).collect();
    let design = DesignMatrix::build(&basis, &states, model.dim(), &workers);
    let beta = ols_fit(&design, &vs)?;
    let residuals: Vec<f64> = design.fitted(&beta).iter().zip(&vs).map(|(f, v)| v - f).collect();
    let f_values: Vec<f64> = points.iter().map(|p| p.state[1]).collect();
    select_strikes_by_r2(&candidates, &f_values, &residuals, count)
}
