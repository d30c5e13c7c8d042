use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub tx_power_mw: f64,
    pub sensitivity_dbm: f64,
    pub carrier_frequency_hz: f64,
    /// Fixed range in metres, used instead of the path-loss derivation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range_override_m: Option<f64>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power_mw: 1.0,
            sensitivity_dbm: -89.0,
            carrier_frequency_hz: 5.89e9,
            range_override_m: None,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(r) = self.range_override_m {
            if !(r > 0.0) || !r.is_finite() {
                return Err(ConfigError::domain("radio.range_override_m", r, "> 0"));
            }
            return Ok(());
        }
        if !(self.tx_power_mw > 0.0) {
            return Err(ConfigError::domain("radio.tx_power_mw", self.tx_power_mw, "> 0"));
        }
        if !(self.carrier_frequency_hz > 0.0) {
            return Err(ConfigError::domain(
                "radio.carrier_frequency_hz",
                self.carrier_frequency_hz,
                "> 0",
            ));
        }
        let budget = 10.0 * self.tx_power_mw.log10() - self.sensitivity_dbm;
        if !(budget > 0.0) {
            return Err(ConfigError::domain(
                "radio.sensitivity_dbm",
                self.sensitivity_dbm,
                "below the transmit power in dBm",
            ));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.range_override_m.unwrap_or_else(|| {
            derive_range(self.tx_power_mw, self.sensitivity_dbm, self.carrier_frequency_hz)
        })
    }
}

/// Free-space distance at which the received power drops to the receiver
/// sensitivity.
pub fn derive_range(tx_power_mw: f64, sensitivity_dbm: f64, frequency_hz: f64) -> f64 {
    let budget_db = 10.0 * tx_power_mw.log10() - sensitivity_dbm;
    let fixed_db = 20.0 * frequency_hz.log10()
        + 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10();
    10f64.powf((budget_db - fixed_db) / 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Friis: received power equals sensitivity at distance d where
    /// (lambda / (4 pi d))^2 = P_min / P_tx.
    fn friis_oracle(tx_mw: f64, sens_dbm: f64, f: f64) -> f64 {
        let lambda = SPEED_OF_LIGHT / f;
        let p_min_mw = 10f64.powf(sens_dbm / 10.0);
        lambda / (4.0 * std::f64::consts::PI) * (tx_mw / p_min_mw).sqrt()
    }

    #[test]
    fn default_range_is_about_114_m() {
        let oracle = friis_oracle(1.0, -89.0, 5.89e9);
        let r = RadioConfig::default().range();
        assert!((oracle - 114.0).abs() < 1.0, "oracle {oracle}");
        assert!((r - oracle).abs() < 1e-9);
    }

    #[test]
    fn six_db_more_budget_doubles_range() {
        let base = derive_range(1.0, -89.0, 5.89e9);
        let more = derive_range(1.0, -95.0, 5.89e9);
        assert!((more / base - 10f64.powf(6.0 / 20.0)).abs() < 1e-12);
        assert!((more / base - 2.0).abs() < 0.01);
    }

    #[test]
    fn override_is_returned_unchanged() {
        let cfg = RadioConfig {
            range_override_m: Some(300.0),
            ..Default::default()
        };
        assert_eq!(cfg.range(), 300.0);
    }

    #[test]
    fn non_positive_budget_is_rejected() {
        let cfg = RadioConfig {
            sensitivity_dbm: 5.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RadioConfig {
            tx_power_mw: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
