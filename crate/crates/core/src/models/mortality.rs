use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    #[default]
    Male,
    Female,
}

/// Yearly death probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MortalityLaw {
    /// Hazard `mu_x = a + b exp(c x)`; the female table is the male one
    /// shifted six years younger.
    Makeham {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        sex: Sex,
    },
    /// The same death probability at every age.
    Fixed { q: f64 },
}

/// Years subtracted from the age when evaluating the female table.
pub const FEMALE_AGE_SHIFT: f64 = 6.0;

impl MortalityLaw {
    /// Makeham fit of the Swedish M90 male table.
    pub fn m90(sex: Sex) -> Self {
        MortalityLaw::Makeham {
            a: 0.001,
            b: 0.000012,
            c: 0.101314,
            sex,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MortalityLaw::Makeham { a, b, c, .. } => {
                if !(a >= 0.0 && b >= 0.0 && c.is_finite() && c != 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "Makeham law needs a, b >= 0 and finite nonzero c".into(),
                    ));
                }
            }
            MortalityLaw::Fixed { q } => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidParameter("death probability must be in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    /// Probability that an individual aged `age` dies before `age + 1`:
    /// `q = 1 - exp(-int_age^{age+1} mu_x dx)`, integrated in closed form.
    pub fn death_prob(&self, age: u32) -> f64 {
        match *self {
            MortalityLaw::Makeham { a, b, c, sex } => {
                let x = match sex {
                    Sex::Male => age as f64,
                    Sex::Female => age as f64 - FEMALE_AGE_SHIFT,
                };
                let integral = a + (b / c) * (c * x).exp() * c.exp_m1();
                -(-integral).exp_m1()
            }
            MortalityLaw::Fixed { q } => q,
        }
    }
}

impl Default for MortalityLaw {
    fn default() -> Self {
        Self::m90(Sex::Male)
    }
}
