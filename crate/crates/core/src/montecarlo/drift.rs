use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scenario::{PS_PER_HOUR, PS_PER_SECOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    None,
    Linear,
    RandomWalk,
}

/// Slow change of the idler arrival time relative to the signal, from
/// fiber-length fluctuations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftModel {
    pub kind: DriftKind,
    /// Slope for `linear`, RMS excursion per hour for `random_walk`.
    pub magnitude_ps_per_hour: f64,
    pub seed: u64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            kind: DriftKind::None,
            magnitude_ps_per_hour: 250.0,
            seed: 0,
        }
    }
}

impl DriftModel {
    pub fn linear(ps_per_hour: f64) -> Self {
        Self {
            kind: DriftKind::Linear,
            magnitude_ps_per_hour: ps_per_hour,
            seed: 0,
        }
    }

    pub fn random_walk(ps_per_hour: f64, seed: u64) -> Self {
        Self {
            kind: DriftKind::RandomWalk,
            magnitude_ps_per_hour: ps_per_hour,
            seed,
        }
    }
}

/// Random-walk step.
const WALK_STEP_PS: f64 = PS_PER_SECOND;

/// Drift offset evaluated over a run. Random walks are tabulated once on a
/// one-second grid and interpolated linearly.
#[derive(Debug, Clone)]
pub struct DriftProfile {
    kind: DriftKind,
    slope_ps_per_ps: f64,
    walk: Vec<f64>,
}

impl DriftProfile {
    /// Profile valid for `0 ≤ t ≤ horizon_ps`; later times hold the last value.
    pub fn new(model: &DriftModel, horizon_ps: f64) -> Self {
        let walk = match model.kind {
            DriftKind::RandomWalk => {
                let steps = (horizon_ps.max(0.0) / WALK_STEP_PS).ceil() as usize + 1;
                let sigma = model.magnitude_ps_per_hour * (WALK_STEP_PS / PS_PER_HOUR).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
                let mut walk = Vec::with_capacity(steps + 1);
                walk.push(0.0);
                let mut x = 0.0;
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("finite sigma");
                    for _ in 0..steps {
                        x += normal.sample(&mut rng);
                        walk.push(x);
                    }
                } else {
                    walk.resize(steps + 1, 0.0);
                }
                walk
            }
            _ => Vec::new(),
        };
        Self {
            kind: model.kind,
            slope_ps_per_ps: model.magnitude_ps_per_hour / PS_PER_HOUR,
            walk,
        }
    }

    pub fn offset(&self, t_ps: f64) -> f64 {
        match self.kind {
            DriftKind::None => 0.0,
            DriftKind::Linear => self.slope_ps_per_ps * t_ps,
            DriftKind::RandomWalk => {
                let x = (t_ps / WALK_STEP_PS).max(0.0);
                let k = x.floor() as usize;
                if k + 1 >= self.walk.len() {
                    return *self.walk.last().unwrap_or(&0.0);
                }
                let frac = x - k as f64;
                self.walk[k] + frac * (self.walk[k + 1] - self.walk[k])
            }
        }
    }
}

/// Idler delay offset (ps) at time `t_ps` after the start of the experiment.
pub fn drift_offset(model: &DriftModel, t_ps: f64) -> f64 {
    DriftProfile::new(model, t_ps).offset(t_ps)
}
