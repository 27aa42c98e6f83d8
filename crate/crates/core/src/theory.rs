//! Regret-rate calculators.
//!
//! Each rate has the shape `T^a * V_T^b * (ln T)^c` and is reported with a
//! unit constant. The admissibility flag says whether `V_T` lies in the
//! range where the corresponding bound is stated.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::KernelFamily;

/// Absolute constants of the SE lower bound's side condition `V_T <= C T^c`.
pub const SE_ADMISSIBILITY_SCALE: f64 = 1.0;
pub const SE_ADMISSIBILITY_EXPONENT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    LowerBound,
    RperpUpper,
    UcbUpper,
    OpkbUpper,
    MigGrowth,
}

impl RateKind {
    pub const ALL: [RateKind; 5] = [
        RateKind::LowerBound,
        RateKind::RperpUpper,
        RateKind::UcbUpper,
        RateKind::OpkbUpper,
        RateKind::MigGrowth,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RateKind::LowerBound => "lower_bound",
            RateKind::RperpUpper => "rperp_upper",
            RateKind::UcbUpper => "ucb_upper",
            RateKind::OpkbUpper => "opkb_upper",
            RateKind::MigGrowth => "mig_growth",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateQuery {
    pub family: KernelFamily,
    /// Horizon; real-valued so that e.g. `T = e^k` can be queried exactly.
    pub horizon: f64,
    pub total_variation: f64,
    pub dim: usize,
    /// Matérn smoothness; ignored for SE.
    pub nu: f64,
    pub kind: RateKind,
}

/// Exponents of `T`, `V_T` and `ln T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateExponents {
    pub horizon: f64,
    pub variation: f64,
    pub log: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateValue {
    pub value: f64,
    pub exponents: RateExponents,
    pub admissible: bool,
}

impl RateQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 1.0) {
            return Err(Error::config("T", format!("horizon must exceed 1; got {}", self.horizon)));
        }
        if !(self.total_variation.is_finite() && self.total_variation > 0.0) {
            return Err(Error::config("vt", format!("V_T must be > 0; got {}", self.total_variation)));
        }
        if self.dim == 0 {
            return Err(Error::config("d", "dimension must be >= 1"));
        }
        if self.family == KernelFamily::Matern && !(self.nu.is_finite() && self.nu > 0.5) {
            return Err(Error::config("nu", format!("Matérn rates need nu > 1/2; got {}", self.nu)));
        }
        Ok(())
    }

    pub fn exponents(&self) -> RateExponents {
        let d = self.dim as f64;
        let nu = self.nu;
        let e = |horizon, variation, log| RateExponents { horizon, variation, log };
        match (self.family, self.kind) {
            (KernelFamily::Se, RateKind::LowerBound) => e(2.0 / 3.0, 1.0 / 3.0, d / 6.0),
            (KernelFamily::Se, RateKind::RperpUpper | RateKind::OpkbUpper) => e(2.0 / 3.0, 1.0 / 3.0, 0.0),
            (KernelFamily::Se, RateKind::UcbUpper) => e(0.75, 0.25, 0.0),
            (KernelFamily::Se, RateKind::MigGrowth) => e(0.0, 0.0, d + 1.0),
            (KernelFamily::Matern, RateKind::LowerBound | RateKind::RperpUpper) => {
                e((2.0 * nu + d) / (3.0 * nu + d), nu / (3.0 * nu + d), 0.0)
            }
            (KernelFamily::Matern, RateKind::UcbUpper) => {
                e((12.0 * nu + 13.0 * d) / (16.0 * nu + 8.0 * d), 0.25, 0.0)
            }
            (KernelFamily::Matern, RateKind::OpkbUpper) => {
                e((4.0 * nu + 3.0 * d) / (6.0 * nu + 3.0 * d), 1.0 / 3.0, 0.0)
            }
            (KernelFamily::Matern, RateKind::MigGrowth) => {
                e(d / (2.0 * nu + d), 0.0, 2.0 * nu / (2.0 * nu + d))
            }
        }
    }

    fn admissible(&self) -> bool {
        let t = self.horizon;
        let v = self.total_variation;
        let d = self.dim as f64;
        let nu = self.nu;
        let ln_t = t.ln();
        match (self.family, self.kind) {
            (KernelFamily::Se, RateKind::LowerBound) => {
                let scale = ln_t.powf(d / 4.0);
                t.powf(-0.5) * scale <= v
                    && v < t * scale
                    && v <= SE_ADMISSIBILITY_SCALE * t.powf(SE_ADMISSIBILITY_EXPONENT)
            }
            (KernelFamily::Matern, RateKind::LowerBound) => {
                let r = 2.0 * nu + d;
                t.powf(-nu / r) <= v && v <= 2f64.powf((3.0 * nu + d) / r) * t
            }
            (KernelFamily::Se, RateKind::RperpUpper) => v >= t.powf(-0.5) * ln_t.powf((d + 2.0) / 3.0),
            (KernelFamily::Matern, RateKind::RperpUpper) => {
                let r = 2.0 * nu + d;
                v >= t.powf(-nu / r) * ln_t.powf((nu + d) / r)
            }
            _ => true,
        }
    }
}

pub fn rate_value(query: &RateQuery) -> Result<RateValue> {
    query.validate()?;
    let ex = query.exponents();
    let value = query.horizon.powf(ex.horizon)
        * query.total_variation.powf(ex.variation)
        * query.horizon.ln().powf(ex.log);
    Ok(RateValue {
        value,
        exponents: ex,
        admissible: query.admissible(),
    })
}
