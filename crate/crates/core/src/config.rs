//! TOML run configuration.
//!
//! ```toml
//! [model]
//! type = "ar-garch"        # ar-garch | ar-garch-sum | life-small | life-large
//!
//! [run]
//! M = 10000
//! n = 100000
//! T = 6
//! alpha = 0.995
//! eta = 0.06
//! seed = 1
//!
//! [validation]
//! Mval = 10000
//! nval = 100000
//! seed = 2
//! bins = 40
//! ```
//!
//! Every omitted value falls back to the defaults shown above or to the
//! preset of the chosen model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::basis::DEFAULT_STRIKES;
use crate::engine::RunConfig;
use crate::error::{Error, Result};
use crate::models::{ArGarch, ArGarchParams, ArGarchSum, Cohort, LifeModel, LifeModelParams, Model, MortalityLaw};
use crate::oracle::NestedConfig;
use crate::risk::CocParams;
use crate::validation::ValidationConfig;

pub const THREADS_ENV: &str = "LSMCOC_THREADS";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    validation: RawValidation,
    #[serde(default)]
    basis: RawBasis,
    #[serde(default)]
    oracle: RawOracle,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(rename = "type")]
    kind: String,
    alpha0: Option<f64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    alpha3: Option<f64>,
    alpha4: Option<f64>,
    l0: Option<f64>,
    sigma1: Option<f64>,
    components: Option<usize>,
    mu_y: Option<f64>,
    mu_f: Option<f64>,
    sigma_y: Option<f64>,
    sigma_f: Option<f64>,
    rho: Option<f64>,
    y0: Option<f64>,
    f0: Option<f64>,
    death_benefit: Option<f64>,
    survival_benefit: Option<f64>,
    asset_units: Option<f64>,
    ages: Option<Vec<u32>>,
    cohort_size: Option<u64>,
    mortality: Option<MortalityLaw>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(rename = "M")]
    outer: Option<usize>,
    n: Option<usize>,
    #[serde(rename = "T")]
    horizon: Option<usize>,
    alpha: Option<f64>,
    eta: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidation {
    #[serde(rename = "Mval")]
    outer: Option<usize>,
    nval: Option<usize>,
    seed: Option<u64>,
    bins: Option<usize>,
    band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    strikes: Option<Vec<f64>>,
    select_strikes: Option<bool>,
    strike_count: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    method: Option<OracleKind>,
    outer: Option<usize>,
    inner: Option<usize>,
    batches: Option<usize>,
    seed: Option<u64>,
    level: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Nested,
    ClosedForm,
}

/// Model choice with every parameter filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelSpec {
    ArGarch(ArGarchParams),
    ArGarchSum { components: usize, params: ArGarchParams },
    LifeSmall(LifeModelParams),
    LifeLarge(LifeModelParams),
}

impl ModelSpec {
    pub fn build(&self, horizon: usize) -> Result<Model> {
        Ok(match self {
            ModelSpec::ArGarch(p) => Model::ArGarch(ArGarch::new(*p, horizon)?),
            ModelSpec::ArGarchSum { components, params } => {
                Model::ArGarchSum(ArGarchSum::iid(*params, *components, horizon)?)
            }
            ModelSpec::LifeSmall(p) | ModelSpec::LifeLarge(p) => Model::Life(LifeModel::new(p.clone(), horizon)?),
        })
    }

    pub fn is_life(&self) -> bool {
        matches!(self, ModelSpec::LifeSmall(_) | ModelSpec::LifeLarge(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSection {
    #[serde(rename = "M")]
    pub outer: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    /// Not part of the echoed configuration: results do not depend on it.
    #[serde(skip)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSection {
    #[serde(rename = "Mval")]
    pub outer: usize,
    pub nval: usize,
    pub seed: u64,
    pub bins: usize,
    pub band: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisSection {
    pub strikes: Vec<f64>,
    pub select_strikes: bool,
    pub strike_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSection {
    pub method: OracleKind,
    pub outer: usize,
    pub inner: usize,
    pub batches: usize,
    pub seed: u64,
    /// State `(L, sigma)` at `T-1` for the closed form.
    pub level: f64,
    pub sigma: f64,
}

/// Configuration after defaults are applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub model: ModelSpec,
    pub run: RunSection,
    pub validation: ValidationSection,
    pub basis: BasisSection,
    pub oracle: OracleSection,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

fn unused(kind: &str, fields: &[(&str, bool)]) -> Result<()> {
    match fields.iter().find(|(_, present)| *present) {
        Some((name, _)) => Err(Error::Config(format!(
            "parameter `model.{name}` does not apply to model type `{kind}`"
        ))),
        None => Ok(()),
    }
}

impl RawModel {
    fn ar_params(&self) -> ArGarchParams {
        let d = ArGarchParams::paper();
        ArGarchParams {
            alpha0: self.alpha0.unwrap_or(d.alpha0),
            alpha1: self.alpha1.unwrap_or(d.alpha1),
            alpha2: self.alpha2.unwrap_or(d.alpha2),
            alpha3: self.alpha3.unwrap_or(d.alpha3),
            alpha4: self.alpha4.unwrap_or(d.alpha4),
            l0: self.l0.unwrap_or(d.l0),
            sigma1: self.sigma1.unwrap_or(d.sigma1),
        }
    }

    fn life_params(&self, preset: LifeModelParams) -> LifeModelParams {
        let size = self.cohort_size;
        let cohorts = match &self.ages {
            Some(ages) => ages
                .iter()
                .map(|&age| Cohort {
                    size: size.unwrap_or(crate::models::DEFAULT_COHORT_SIZE),
                    age,
                })
                .collect(),
            None => preset
                .cohorts
                .iter()
                .map(|c| Cohort {
                    size: size.unwrap_or(c.size),
                    age: c.age,
                })
                .collect(),
        };
        LifeModelParams {
            mu_y: self.mu_y.unwrap_or(preset.mu_y),
            mu_f: self.mu_f.unwrap_or(preset.mu_f),
            sigma_y: self.sigma_y.unwrap_or(preset.sigma_y),
            sigma_f: self.sigma_f.unwrap_or(preset.sigma_f),
            rho: self.rho.unwrap_or(preset.rho),
            y0: self.y0.unwrap_or(preset.y0),
            f0: self.f0.unwrap_or(preset.f0),
            death_benefit: self.death_benefit.unwrap_or(preset.death_benefit),
            survival_benefit: self.survival_benefit.unwrap_or(preset.survival_benefit),
            asset_units: self.asset_units.unwrap_or(preset.asset_units),
            cohorts,
            mortality: self.mortality.clone().unwrap_or(preset.mortality),
        }
    }

    fn life_fields(&self) -> [(&'static str, bool); 13] {
        [
            ("mu_y", self.mu_y.is_some()),
            ("mu_f", self.mu_f.is_some()),
            ("sigma_y", self.sigma_y.is_some()),
            ("sigma_f", self.sigma_f.is_some()),
            ("rho", self.rho.is_some()),
            ("y0", self.y0.is_some()),
            ("f0", self.f0.is_some()),
            ("death_benefit", self.death_benefit.is_some()),
            ("survival_benefit", self.survival_benefit.is_some()),
            ("asset_units", self.asset_units.is_some()),
            ("ages", self.ages.is_some()),
            ("cohort_size", self.cohort_size.is_some()),
            ("mortality", self.mortality.is_some()),
        ]
    }

    fn ar_fields(&self) -> [(&'static str, bool); 7] {
        [
            ("alpha0", self.alpha0.is_some()),
            ("alpha1", self.alpha1.is_some()),
            ("alpha2", self.alpha2.is_some()),
            ("alpha3", self.alpha3.is_some()),
            ("alpha4", self.alpha4.is_some()),
            ("l0", self.l0.is_some()),
            ("sigma1", self.sigma1.is_some()),
        ]
    }

    fn resolve(&self) -> Result<ModelSpec> {
        let kind = self.kind.as_str();
        let spec = match kind {
            "ar-garch" => {
                unused(kind, &self.life_fields())?;
                unused(kind, &[("components", self.components.is_some())])?;
                ModelSpec::ArGarch(self.ar_params())
            }
            "ar-garch-sum" => {
                unused(kind, &self.life_fields())?;
                ModelSpec::ArGarchSum {
                    components: self.components.unwrap_or(10),
                    params: self.ar_params(),
                }
            }
            "life-small" | "life-large" => {
                unused(kind, &self.ar_fields())?;
                unused(kind, &[("components", self.components.is_some())])?;
                if kind == "life-small" {
                    ModelSpec::LifeSmall(self.life_params(LifeModelParams::small()))
                } else {
                    ModelSpec::LifeLarge(self.life_params(LifeModelParams::large()))
                }
            }
            "custom" => {
                return Err(Error::Config(
                    "model type `custom` is only available through the library interface".into(),
                ))
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown model type `{other}` (expected ar-garch, ar-garch-sum, life-small or life-large)"
                )))
            }
        };
        Ok(spec)
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        let model = raw
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("missing [model] section".into()))?
            .resolve()?;
        let coc = CocParams::default();
        let run = RunSection {
            outer: raw.run.outer.unwrap_or(10_000),
            n: raw.run.n.unwrap_or(100_000),
            horizon: raw.run.horizon.unwrap_or(6),
            alpha: raw.run.alpha.unwrap_or(coc.alpha),
            eta: raw.run.eta.unwrap_or(coc.eta),
            seed: raw.run.seed.unwrap_or(1),
            threads: raw
                .run
                .threads
                .or_else(threads_from_env)
                .unwrap_or(0),
        };
        let vd = ValidationConfig::default();
        let validation = ValidationSection {
            outer: raw.validation.outer.unwrap_or(vd.outer),
            nval: raw.validation.nval.unwrap_or(vd.inner),
            seed: raw.validation.seed.unwrap_or(vd.seed),
            bins: raw.validation.bins.unwrap_or(vd.bins),
            band: raw.validation.band.unwrap_or(vd.quantile_band),
        };
        let basis_given = raw.basis.strikes.is_some() || raw.basis.select_strikes.is_some() || raw.basis.strike_count.is_some();
        if basis_given && !model.is_life() {
            return Err(Error::Config("[basis] strike settings apply only to life models".into()));
        }
        let basis = BasisSection {
            strikes: raw.basis.strikes.unwrap_or_else(|| DEFAULT_STRIKES.to_vec()),
            select_strikes: raw.basis.select_strikes.unwrap_or(false),
            strike_count: raw.basis.strike_count.unwrap_or(DEFAULT_STRIKES.len()),
        };
        let od = NestedConfig::default();
        let oracle = OracleSection {
            method: raw.oracle.method.unwrap_or(OracleKind::Nested),
            outer: raw.oracle.outer.unwrap_or(od.outer),
            inner: raw.oracle.inner.unwrap_or(od.inner),
            batches: raw.oracle.batches.unwrap_or(od.batches),
            seed: raw.oracle.seed.unwrap_or(od.seed),
            level: raw.oracle.level.unwrap_or(0.0),
            sigma: raw.oracle.sigma.unwrap_or(1.0),
        };
        let config = Config {
            model,
            run,
            validation,
            basis,
            oracle,
            output_dir: raw.output.directory.unwrap_or_else(|| PathBuf::from("out")),
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = self.validation.band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config("validation band must satisfy 0 < lo < hi < 1".into()));
        }
        if self.validation.bins == 0 {
            return Err(Error::Config("validation bins must be positive".into()));
        }
        if self.run.horizon == 0 {
            return Err(Error::Config("run.T must be at least 1".into()));
        }
        if self.basis.strike_count > self.basis.strikes.len() {
            return Err(Error::Config("basis.strike_count exceeds the number of candidate strikes".into()));
        }
        self.coc().map_err(|e| Error::Config(e.to_string()))?;
        self.build_model().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn coc(&self) -> Result<CocParams> {
        CocParams::new(self.run.alpha, self.run.eta)
    }

    pub fn build_model(&self) -> Result<Model> {
        self.model.build(self.run.horizon)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            outer: self.run.outer,
            inner: self.run.n,
            horizon: self.run.horizon,
            coc: self.coc()?,
            seed: self.run.seed,
            threads: self.run.threads,
        })
    }

    pub fn validation_config(&self) -> ValidationConfig {
        ValidationConfig {
            outer: self.validation.outer,
            inner: self.validation.nval,
            seed: self.validation.seed,
            quantile_band: self.validation.band,
            bins: self.validation.bins,
            threads: self.run.threads,
        }
    }

    pub fn nested_config(&self) -> NestedConfig {
        NestedConfig {
            outer: self.oracle.outer,
            inner: self.oracle.inner,
            batches: self.oracle.batches,
            seed: self.oracle.seed,
            threads: self.run.threads,
        }
    }
}

/// Thread count from `LSMCOC_THREADS`, ignoring unparsable values.
pub fn threads_from_env() -> Option<usize> {
    let value = std::env::var(THREADS_ENV).ok()?;
    match value.trim().parse() {
        Ok(n) => Some(n),
        Err(_) => {
            log::warn!("ignoring {THREADS_ENV}={value:?}");
            None
        }
    }
}
