//! Empirical one-step risk functionals on inner samples.
//!
//! The capital requirement `R` is the left-continuous empirical quantile
//! `min{y : F(y) >= alpha}` (no interpolation), `E` is the mean shortfall
//! below it, and the cost-of-capital value is `V = R - E / (1 + eta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocParams {
    /// Quantile level of the capital requirement.
    pub alpha: f64,
    /// Cost-of-capital rate.
    pub eta: f64,
}

impl CocParams {
    pub fn new(alpha: f64, eta: f64) -> Result<Self> {
        let p = Self { alpha, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be nonnegative, got {}", self.eta)));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, r: f64, e: f64) -> f64 {
        r - e / (1.0 + self.eta)
    }
}

impl Default for CocParams {
    fn default() -> Self {
        Self {
            alpha: 0.995,
            eta: 0.06,
        }
    }
}

/// Realizations of the next-period quantity at one outer point.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSample(Vec<f64>);

impl InnerSample {
    pub fn new(ys: Vec<f64>) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::EmptySample);
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidParameter("inner sample contains non-finite values".into()));
        }
        Ok(Self(ys))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// One-based rank `k` of the order statistic equal to the empirical
/// `alpha`-quantile: the smallest `k` with `k / n >= alpha`.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let nf = n as f64;
    let mut k = ((alpha * nf).ceil() as usize).clamp(1, n);
    while k > 1 && ((k - 1) as f64) / nf >= alpha {
        k -= 1;
    }
    while k < n && (k as f64) / nf < alpha {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocValue {
    pub r: f64,
    pub e: f64,
    pub v: f64,
}

/// `(R, E, V)` computed by partially reordering `ys`.
///
/// `ys` must be nonempty with finite entries. The result depends only on the
/// multiset of values and their input order, never on scheduling.
pub fn coc_pair_in_place(ys: &mut [f64], coc: &CocParams) -> CocValue {
    let n = ys.len();
    let k = quantile_rank(n, coc.alpha);
    let (below, kth, _) = ys.select_nth_unstable_by(k - 1, f64::total_cmp);
    let r = *kth;
    let shortfall: f64 = below.iter().map(|&y| r - y).sum();
    let e = shortfall / n as f64;
    CocValue {
        r,
        e,
        v: coc.value(r, e),
    }
}

pub fn empirical_quantile(sample: &InnerSample, alpha: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut ys = sample.0.clone();
    let k = quantile_rank(ys.len(), alpha);
    let (_, kth, _) = ys.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// `(1/n) sum_j max(r - y_j, 0)`.
pub fn shortfall_term(sample: &InnerSample, r: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let s: f64 = sample.0.iter().map(|&y| (r - y).max(0.0)).sum();
    Ok(s / sample.len() as f64)
}

pub fn coc_pair(sample: &InnerSample, coc: &CocParams) -> Result<CocValue> {
    coc.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut ys = sample.0.clone();
    Ok(coc_pair_in_place(&mut ys, coc))
}

/// Empirical cdf `(1/n) #{y_j <= x}`.
pub fn empirical_cdf(ys: &[f64], x: f64) -> Result<f64> {
    if ys.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(ys.iter().filter(|&&y| y <= x).count() as f64 / ys.len() as f64)
}

/// Nonincreasing density on `(0, 1)` weighting quantiles.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralDensity {
    /// `m(u) = 1/gamma` on `[0, gamma]`, zero above.
    ExpectedShortfall { gamma: f64 },
    /// Piecewise constant on the equal-width cells `[i/G, (i+1)/G)`.
    Grid(Vec<f64>),
}

impl SpectralDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralDensity::ExpectedShortfall { gamma } => {
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(Error::InvalidParameter("expected-shortfall level must lie in (0, 1]".into()));
                }
            }
            SpectralDensity::Grid(m) => {
                if m.is_empty() || m.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidParameter("grid density must be nonnegative and finite".into()));
                }
                if m.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidParameter("spectral density must be nonincreasing".into()));
                }
                let mass = m.iter().sum::<f64>() / m.len() as f64;
                if (mass - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "spectral density integrates to {mass}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `int_0^u m(x) dx`.
    fn cumulative(&self, u: f64) -> f64 {
        match self {
            SpectralDensity::ExpectedShortfall { gamma } => u.min(*gamma) / gamma,
            SpectralDensity::Grid(m) => {
                let g = m.len();
                let pos = u * g as f64;
                let full = (pos.floor() as usize).min(g);
                let mut acc: f64 = m[..full].iter().sum();
                if full < g {
                    acc += m[full] * (pos - full as f64);
                }
                acc / g as f64
            }
        }
    }
}

/// `-sum_j y_(j) w_j` with `w_j = int_{(j-1)/n}^{j/n} m(u) du`.
pub fn empirical_spectral(sample: &InnerSample, m: &SpectralDensity) -> Result<f64> {
    m.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut ys = sample.0.clone();
    ys.sort_by(f64::total_cmp);
    let n = ys.len() as f64;
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (j, y) in ys.iter().enumerate() {
        let next = m.cumulative((j + 1) as f64 / n);
        acc += y * (next - prev);
        prev = next;
    }
    Ok(-acc)
}
