use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::seed::derive_seed;
use crate::scenario::{MziParams, PhaseNoiseParams, PS_PER_HOUR};

/// Analyzer phase error: a setting offset redrawn at every calibration plus
/// a pump-frequency drift that accumulates until the next calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseModel {
    pub temperature_sigma_c: f64,
    pub period_per_2pi_c: f64,
    pub pump_drift_rad_per_hour: f64,
    pub calibration_interval_hours: f64,
}

impl Default for PhaseNoiseModel {
    fn default() -> Self {
        Self {
            temperature_sigma_c: 0.01,
            period_per_2pi_c: 0.74,
            pump_drift_rad_per_hour: 3.6e-3,
            calibration_interval_hours: 8.0,
        }
    }
}

impl PhaseNoiseModel {
    pub fn for_analyzer(mzi: &MziParams, noise: &PhaseNoiseParams) -> Self {
        Self {
            temperature_sigma_c: mzi.temperature_sigma_c,
            period_per_2pi_c: mzi.period_per_2pi_c,
            pump_drift_rad_per_hour: noise.pump_drift_rad_per_hour,
            calibration_interval_hours: noise.calibration_interval_hours,
        }
    }

    pub fn quiet() -> Self {
        Self {
            temperature_sigma_c: 0.0,
            pump_drift_rad_per_hour: 0.0,
            ..Self::default()
        }
    }

    /// One-sigma setting error in radians.
    pub fn setting_sigma(&self) -> f64 {
        TAU * self.temperature_sigma_c / self.period_per_2pi_c
    }

    pub fn without_pump_drift(&self) -> Self {
        Self {
            pump_drift_rad_per_hour: 0.0,
            ..self.clone()
        }
    }

    /// Index of the calibration block containing `t_ps`.
    pub fn calibration_block(&self, t_ps: f64) -> u64 {
        let hours = t_ps.max(0.0) / PS_PER_HOUR;
        (hours / self.calibration_interval_hours).floor() as u64
    }
}

/// Actual analyzer phase at time `t_ps` for a nominal setting. The setting
/// error depends only on `seed` and the calibration block, so every run
/// inside one block sees the same offset.
pub fn perturb_phase(model: &PhaseNoiseModel, theta_nominal: f64, t_ps: f64, seed: u64) -> f64 {
    let hours = t_ps.max(0.0) / PS_PER_HOUR;
    let since_calibration = hours % model.calibration_interval_hours;
    let sigma = model.setting_sigma();
    let setting_error = if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, model.calibration_block(t_ps)));
        Normal::new(0.0, sigma)
            .expect("finite sigma")
            .sample(&mut rng)
    } else {
        0.0
    };
    theta_nominal + setting_error + model.pump_drift_rad_per_hour * since_calibration
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quiet_model_is_identity() {
        let m = PhaseNoiseModel::quiet();
        assert_eq!(perturb_phase(&m, 1.25, 3.0 * PS_PER_HOUR, 9), 1.25);
    }

    #[test]
    fn setting_sigma_from_temperature() {
        let m = PhaseNoiseModel::default();
        assert!((m.setting_sigma() * 1e3 - 84.9).abs() < 0.05);
    }

    #[test]
    fn pump_drift_bounded_within_window() {
        let m = PhaseNoiseModel {
            temperature_sigma_c: 0.0,
            ..PhaseNoiseModel::default()
        };
        let added = perturb_phase(&m, 0.0, PS_PER_HOUR, 1);
        assert!(added > 0.0 && added <= 3.6e-3 + 1e-15);
        // resets at the next calibration
        let after = perturb_phase(&m, 0.0, 8.0 * PS_PER_HOUR, 1);
        assert!(after.abs() < 1e-15);
    }

    #[test]
    fn offset_shared_within_block_and_redrawn_across() {
        let m = PhaseNoiseModel::default().without_pump_drift();
        let a = perturb_phase(&m, 0.0, 0.5 * PS_PER_HOUR, 3);
        let b = perturb_phase(&m, 0.0, 7.5 * PS_PER_HOUR, 3);
        let c = perturb_phase(&m, 0.0, 8.5 * PS_PER_HOUR, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn setting_error_distribution() {
        let m = PhaseNoiseModel::default().without_pump_drift();
        let n = 4000;
        let draws: Vec<f64> = (0..n).map(|s| perturb_phase(&m, 0.0, 0.0, s)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 4.0 * m.setting_sigma() / (n as f64).sqrt());
        assert!((sd / m.setting_sigma() - 1.0).abs() < 0.05, "{sd}");
    }
}
