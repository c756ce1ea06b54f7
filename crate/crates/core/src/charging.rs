//! Constant-current / constant-voltage battery model.
//!
//! Below the CC→CV transition SOC the charger delivers its rated power. Above it
//! the delivered power decays as `P(t) = P·exp(-t/τ)`, so the energy delivered
//! after `t` minutes of CV charging is `P·(τ/60)·(1 − exp(-t/τ))` kWh and the CV
//! phase can never deliver more than `P·τ/60` kWh.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SOC_MIN: f64 = 0.15;
pub const DEFAULT_SOC_CV: f64 = 0.80;
pub const DEFAULT_CV_TAU_MIN: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChargingError {
    #[error("invalid EV model `{name}`: {reason}")]
    InvalidModel { name: String, reason: String },
    #[error("invalid SOC interval {from} -> {to}")]
    InvalidSoc { from: f64, to: f64 },
    #[error("charger power must be positive, got {0} kW")]
    InvalidPower(f64),
    #[error("target SOC {target} unreachable: CV phase needs {needed_kwh:.3} kWh but delivers at most {limit_kwh:.3} kWh")]
    UnreachableSoc { target: f64, needed_kwh: f64, limit_kwh: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvModel {
    pub name: String,
    /// Usable capacity; SOC fractions apply to it directly.
    pub battery_kwh: f64,
    pub rated_range_mi: f64,
    #[serde(default = "default_soc_min")]
    pub soc_min: f64,
    #[serde(default = "default_soc_cv")]
    pub soc_cv: f64,
    #[serde(default = "default_tau")]
    pub cv_tau_min: f64,
}

fn default_soc_min() -> f64 {
    DEFAULT_SOC_MIN
}
fn default_soc_cv() -> f64 {
    DEFAULT_SOC_CV
}
fn default_tau() -> f64 {
    DEFAULT_CV_TAU_MIN
}

impl EvModel {
    /// Model with the default 15–80 % window and 20-minute CV time constant.
    pub fn new(name: impl Into<String>, battery_kwh: f64, rated_range_mi: f64) -> Result<Self, ChargingError> {
        EvModel {
            name: name.into(),
            battery_kwh,
            rated_range_mi,
            soc_min: DEFAULT_SOC_MIN,
            soc_cv: DEFAULT_SOC_CV,
            cv_tau_min: DEFAULT_CV_TAU_MIN,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, ChargingError> {
        let reason = if !(self.battery_kwh > 0.0 && self.battery_kwh.is_finite()) {
            Some("battery_kwh must be positive")
        } else if !(self.rated_range_mi > 0.0 && self.rated_range_mi.is_finite()) {
            Some("rated_range_mi must be positive")
        } else if !(0.0 <= self.soc_min && self.soc_min < self.soc_cv && self.soc_cv <= 1.0) {
            Some("need 0 <= soc_min < soc_cv <= 1")
        } else if !(self.cv_tau_min > 0.0 && self.cv_tau_min.is_finite()) {
            Some("cv_tau_min must be positive")
        } else {
            None
        };
        match reason {
            Some(r) => Err(ChargingError::InvalidModel {
                name: self.name,
                reason: r.into(),
            }),
            None => Ok(self),
        }
    }

    /// SOC consumed per mile driven.
    pub fn soc_per_mile(&self) -> f64 {
        1.0 / self.rated_range_mi
    }
}

/// Distance drivable inside the efficient SOC window, i.e. the per-leg cap λ.
///
/// Evaluates `(soc_cv − soc_min) × rated_range_mi` without assuming the window is
/// nonempty.
pub fn cc_range_miles(model: &EvModel) -> f64 {
    ((model.soc_cv - model.soc_min) * model.rated_range_mi).max(0.0)
}

/// Distance drivable from `soc` down to the model's reserve.
pub fn range_from_soc(model: &EvModel, soc: f64) -> f64 {
    ((soc - model.soc_min) * model.rated_range_mi).max(0.0)
}

/// Largest energy the CV phase can deliver at `power_kw`.
pub fn cv_energy_limit_kwh(model: &EvModel, power_kw: f64) -> f64 {
    power_kw * model.cv_tau_min / 60.0
}

/// Minutes of CV charging needed to deliver `energy_kwh`, if finite.
fn cv_minutes(model: &EvModel, power_kw: f64, energy_kwh: f64) -> Option<f64> {
    let limit = cv_energy_limit_kwh(model, power_kw);
    if energy_kwh >= limit {
        return None;
    }
    Some(-model.cv_tau_min * (1.0 - energy_kwh / limit).ln())
}

pub fn charge_time_minutes(
    model: &EvModel,
    power_kw: f64,
    soc_from: f64,
    soc_to: f64,
) -> Result<f64, ChargingError> {
    if !(power_kw > 0.0 && power_kw.is_finite()) {
        return Err(ChargingError::InvalidPower(power_kw));
    }
    if !(0.0 <= soc_from && soc_from <= soc_to && soc_to <= 1.0) {
        return Err(ChargingError::InvalidSoc { from: soc_from, to: soc_to });
    }
    let cap = model.battery_kwh;
    let cv = model.soc_cv;

    let cc_energy = (soc_to.min(cv) - soc_from).max(0.0) * cap;
    let cc_minutes = cc_energy / power_kw * 60.0;

    let cv_minutes_total = if soc_to > cv {
        let needed = (soc_to - cv) * cap;
        let already = (soc_from - cv).max(0.0) * cap;
        let unreachable = || ChargingError::UnreachableSoc {
            target: soc_to,
            needed_kwh: needed,
            limit_kwh: cv_energy_limit_kwh(model, power_kw),
        };
        let end = cv_minutes(model, power_kw, needed).ok_or_else(unreachable)?;
        let start = cv_minutes(model, power_kw, already).unwrap_or(0.0);
        end - start
    } else {
        0.0
    };
    Ok(cc_minutes + cv_minutes_total)
}

pub fn read_ev_models<R: Read>(reader: R) -> Result<Vec<EvModel>, EvCatalogError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut models = Vec::new();
    for row in csv.deserialize::<EvModel>() {
        models.push(row?.validated()?);
    }
    Ok(models)
}

pub fn load_ev_models(path: impl AsRef<Path>) -> Result<Vec<EvModel>, EvCatalogError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|source| EvCatalogError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    read_ev_models(file)
}

#[derive(Debug, Error)]
pub enum EvCatalogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ev model catalog: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ChargingError),
}

/// Built-in catalog spanning the long-distance range band of 2023 models.
pub fn builtin_models() -> Vec<EvModel> {
    [("compact-209", 62.0, 209.0), ("midsize-281", 75.0, 281.0), ("longrange-353", 100.0, 353.0)]
        .into_iter()
        .map(|(n, kwh, mi)| EvModel::new(n, kwh, mi).expect("valid builtin"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(kwh: f64, range: f64) -> EvModel {
        EvModel::new("t", kwh, range).unwrap()
    }

    #[test]
    fn cc_range_examples() {
        assert_relative_eq!(cc_range_miles(&model(60.0, 209.0)), 135.85, epsilon = 1e-9);
        assert_relative_eq!(cc_range_miles(&model(60.0, 281.0)), 182.65, epsilon = 1e-9);
        let mut m = model(60.0, 281.0);
        m.soc_min = 0.8;
        assert_eq!(cc_range_miles(&m), 0.0);
    }

    #[test]
    fn invalid_model() {
        assert!(EvModel::new("x", 0.0, 100.0).is_err());
        let mut m = model(60.0, 100.0);
        m.soc_cv = 0.1;
        assert!(m.validated().is_err());
    }

    #[test]
    fn zero_interval() {
        assert_eq!(charge_time_minutes(&model(60.0, 281.0), 120.0, 0.4, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn cc_only() {
        let t = charge_time_minutes(&model(60.0, 281.0), 120.0, 0.15, 0.80).unwrap();
        assert_relative_eq!(t, 19.5, epsilon = 1e-12);
    }

    #[test]
    fn cv_segment() {
        let t = charge_time_minutes(&model(60.0, 281.0), 120.0, 0.80, 0.95).unwrap();
        assert_relative_eq!(t, -20.0 * (1.0f64 - 9.0 / 40.0).ln(), epsilon = 1e-12);
        assert_relative_eq!(t, 5.0978, epsilon = 1e-4);
    }

    #[test]
    fn cv_beyond_asymptote() {
        let err = charge_time_minutes(&model(60.0, 281.0), 10.0, 0.80, 1.0).unwrap_err();
        assert!(matches!(err, ChargingError::UnreachableSoc { .. }));
    }

    #[test]
    fn starting_inside_cv_phase() {
        let m = model(60.0, 281.0);
        let whole = charge_time_minutes(&m, 120.0, 0.80, 0.95).unwrap();
        let first = charge_time_minutes(&m, 120.0, 0.80, 0.90).unwrap();
        let rest = charge_time_minutes(&m, 120.0, 0.90, 0.95).unwrap();
        assert_relative_eq!(first + rest, whole, epsilon = 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let m = model(60.0, 281.0);
        assert!(matches!(charge_time_minutes(&m, 0.0, 0.2, 0.3), Err(ChargingError::InvalidPower(_))));
        assert!(matches!(charge_time_minutes(&m, 50.0, 0.5, 0.3), Err(ChargingError::InvalidSoc { .. })));
    }

    #[test]
    fn catalog_csv() {
        let data = "name,battery_kwh,rated_range_mi,soc_min,soc_cv,cv_tau_min\n\
                    a,60,281,0.15,0.8,20\nb,75,300,0.1,0.85,15\n";
        let models = read_ev_models(data.as_bytes()).unwrap();
        assert_eq!(models.len(), 2);
        assert_eq!(models[1].soc_cv, 0.85);
        let bad = "name,battery_kwh,rated_range_mi,soc_min,soc_cv,cv_tau_min\nz,60,281,0.9,0.8,20\n";
        assert!(read_ev_models(bad.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_target(
            kwh in 20.0f64..120.0, p in 20.0f64..350.0, from in 0.0f64..0.9, a in 0.0f64..1.0, b in 0.0f64..1.0
        ) {
            let m = model(kwh, 250.0);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let low = charge_time_minutes(&m, p, from, from + lo * (1.0 - from));
            let high = charge_time_minutes(&m, p, from, from + hi * (1.0 - from));
            match (low, high) {
                (Ok(x), Ok(y)) => prop_assert!(x <= y + 1e-9),
                (Err(_), Ok(_)) => prop_assert!(false, "lower target unreachable but higher reachable"),
                _ => {}
            }
        }

        #[test]
        fn antitone_in_power(kwh in 20.0f64..120.0, p in 20.0f64..350.0, extra in 0.0f64..100.0,
                             from in 0.0f64..0.9, to in 0.0f64..1.0) {
            let m = model(kwh, 250.0);
            let to = from + to * (1.0 - from);
            if let Ok(slow) = charge_time_minutes(&m, p, from, to) {
                let fast = charge_time_minutes(&m, p + extra, from, to).unwrap();
                prop_assert!(fast <= slow + 1e-9);
            }
        }

        #[test]
        fn linear_below_cv(kwh in 20.0f64..120.0, p in 20.0f64..350.0, from in 0.0f64..0.8, frac in 0.0f64..1.0) {
            let m = model(kwh, 250.0);
            let to = from + frac * (0.8 - from);
            let t = charge_time_minutes(&m, p, from, to).unwrap();
            prop_assert!((t - (to - from) * kwh / p * 60.0).abs() < 1e-9);
        }
    }
}
