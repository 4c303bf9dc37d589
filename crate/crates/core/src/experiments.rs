//! End-to-end protocols: temperature sweeps, the sixteen-setting CHSH
//! campaign and CAR-versus-μ sweeps, each either sampled or evaluated from
//! the closed-form model.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    count_sigma, fit_fringe, ChshResult, ChshSettings, Count, FitOptions, FringeFit,
};
use crate::error::{Error, Result};
use crate::montecarlo::seed::stream::NOISE as NOISE_STREAM;
use crate::montecarlo::{derive_seed, generate_run, DriftKind, RunConfig, StreamPair};
use crate::quantum::{coincidence_rate, expected_visibility, RateModel};
use crate::scenario::{temperature_to_phase, ExperimentScenario, ValidatedScenario};
use crate::tia::{correlate, slot_coincidences, track_peak, windowed_count};

/// How windowed coincidences are extracted from a pair of streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counting {
    pub window_ps: f64,
    /// Follow the coincidence peak chunk by chunk instead of a fixed window
    /// at zero delay.
    pub track: bool,
}

impl Counting {
    pub fn for_scenario(s: &ValidatedScenario) -> Self {
        Self {
            window_ps: s.tia.window_ps,
            track: s.drift.kind != DriftKind::None,
        }
    }

    pub fn count(&self, s: &ValidatedScenario, streams: &StreamPair) -> Result<u64> {
        let mut tia = s.tia.clone();
        tia.window_ps = self.window_ps;
        if self.track {
            Ok(track_peak(&streams.signal, &streams.idler, &tia)?.total)
        } else {
            let h = correlate(&streams.signal, &streams.idler, &tia)?;
            windowed_count(&h, 0.0, self.window_ps)
        }
    }
}

/// Model with the coincidence window replaced.
fn model_with_window(s: &ValidatedScenario, window_ps: f64) -> RateModel {
    RateModel {
        window_ps,
        ..RateModel::from_scenario(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSweep {
    pub start_c: f64,
    pub stop_c: f64,
    pub step_c: f64,
    pub hours_per_point: f64,
    pub seed: u64,
    pub analytic: bool,
}

impl FringeSweep {
    pub fn temperatures(&self) -> Result<Vec<f64>> {
        if !(self.step_c > 0.0) || !(self.stop_c >= self.start_c) {
            return Err(Error::InvalidArgument(format!(
                "sweep {}..{} step {} must have a positive step and stop >= start",
                self.start_c, self.stop_c, self.step_c
            )));
        }
        let n = ((self.stop_c - self.start_c) / self.step_c + 1e-9).floor() as usize + 1;
        Ok((0..n)
            .map(|k| self.start_c + k as f64 * self.step_c)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub temperature_c: f64,
    /// Idler analyzer phase.
    pub phase_rad: f64,
    pub window_counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeRun {
    pub points: Vec<FringePoint>,
    pub fit: FringeFit,
    /// Closed-form visibility at the scenario's μ and window.
    pub expected_visibility: f64,
    pub signal_phase_rad: f64,
}

/// Sweeps the idler analyzer temperature with the signal analyzer fixed.
/// `on_point` sees every point as soon as it is counted.
pub fn run_fringe(
    s: &ValidatedScenario,
    sweep: &FringeSweep,
    counting: Counting,
    mut on_point: impl FnMut(&FringePoint),
) -> Result<FringeRun> {
    let temps = sweep.temperatures()?;
    let theta_s = s.mzi_s.phase();
    let duration_s = sweep.hours_per_point * 3600.0;
    let model = model_with_window(s, counting.window_ps);
    let noise_seed = derive_seed(sweep.seed, NOISE_STREAM);
    let mut points = Vec::with_capacity(temps.len());
    for (k, &t) in temps.iter().enumerate() {
        let theta_i = temperature_to_phase(t, &s.mzi_i);
        let counts = if sweep.analytic {
            coincidence_rate(theta_s, theta_i, &model) * duration_s
        } else {
            let cfg = RunConfig {
                start_s: k as f64 * duration_s,
                noise_seed,
                ..RunConfig::new(
                    theta_s,
                    theta_i,
                    duration_s,
                    derive_seed(sweep.seed, k as u64),
                )
            };
            counting.count(s, &generate_run(s, &cfg)?)? as f64
        };
        let p = FringePoint {
            temperature_c: t,
            phase_rad: theta_i,
            window_counts: counts,
        };
        on_point(&p);
        points.push(p);
    }
    let phases: Vec<f64> = points.iter().map(|p| p.phase_rad).collect();
    let counts: Vec<f64> = points.iter().map(|p| p.window_counts).collect();
    let fit = fit_fringe(&phases, &counts, FitOptions::default())?;
    Ok(FringeRun {
        points,
        fit,
        expected_visibility: expected_visibility(&model, counting.window_ps),
        signal_phase_rad: theta_s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshCampaign {
    pub settings: ChshSettings,
    pub hours_per_setting: f64,
    pub seed: u64,
    pub analytic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshRun {
    pub settings: ChshSettings,
    pub result: ChshResult,
    /// Phases applied at each of the sixteen settings, table layout.
    pub applied: [[(f64, f64); 4]; 4],
    /// Fringe fitted to the sixteen counts against the phase sum; supplies
    /// the slopes used in the count errors.
    pub fringe: Option<FringeFit>,
    pub sigma_theta_s: f64,
    pub sigma_theta_i: f64,
}

/// Measures the sixteen settings one after another, each for
/// `hours_per_setting`, under one analyzer-noise history.
pub fn run_chsh(s: &ValidatedScenario, c: &ChshCampaign, counting: Counting) -> Result<ChshRun> {
    let duration_s = c.hours_per_setting * 3600.0;
    let model = model_with_window(s, counting.window_ps);
    let noise_seed = derive_seed(c.seed, NOISE_STREAM);
    let grid = c.settings.grid();
    let applied = grid.map(|row| row.map(|(a, b)| c.settings.applied_phases(a, b)));

    let mut raw = [[0.0f64; 4]; 4];
    for j in 0..16 {
        let (theta_s, theta_i) = applied[j / 4][j % 4];
        raw[j / 4][j % 4] = if c.analytic {
            coincidence_rate(theta_s, theta_i, &model) * duration_s
        } else {
            let cfg = RunConfig {
                start_s: j as f64 * duration_s,
                noise_seed,
                ..RunConfig::new(theta_s, theta_i, duration_s, derive_seed(c.seed, j as u64))
            };
            counting.count(s, &generate_run(s, &cfg)?)? as f64
        };
    }

    let sums: Vec<f64> = applied.iter().flatten().map(|(a, b)| a + b).collect();
    let values: Vec<f64> = raw.iter().flatten().copied().collect();
    let fringe = fit_fringe(&sums, &values, FitOptions::default()).ok();
    let (sigma_theta_s, sigma_theta_i) = if c.analytic {
        (0.0, 0.0)
    } else {
        (s.mzi_s.phase_sigma(), s.mzi_i.phase_sigma())
    };
    let mut table = [[Count::new(0.0, 0.0); 4]; 4];
    for j in 0..16 {
        let r = raw[j / 4][j % 4];
        let slope = fringe.as_ref().map_or(0.0, |f| f.slope_at(sums[j]));
        table[j / 4][j % 4] = Count::new(r, count_sigma(r, slope, sigma_theta_s, sigma_theta_i));
    }
    Ok(ChshRun {
        settings: c.settings,
        result: ChshResult::from_counts(table)?,
        applied,
        fringe,
        sigma_theta_s,
        sigma_theta_i,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarMode {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarPoint {
    pub mu: f64,
    pub car_analytic: f64,
    pub car_montecarlo: Option<f64>,
    pub matched: Option<u64>,
    pub unmatched: Option<u64>,
    pub unmatched_slots: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarSweep {
    pub mu_grid: Vec<f64>,
    pub mode: CarMode,
    pub hours: f64,
    pub seed: u64,
    /// Unmatched slots counted on each side of the matched one.
    pub side_slots: usize,
}

pub fn run_car_sweep(s: &ExperimentScenario, sweep: &CarSweep) -> Result<Vec<CarPoint>> {
    if let Some(bad) = sweep.mu_grid.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "mu grid values must be positive, got {bad}"
        )));
    }
    let duration_s = sweep.hours * 3600.0;
    sweep
        .mu_grid
        .iter()
        .enumerate()
        .map(|(k, &mu)| {
            let mut sc = s.clone();
            sc.source.mu = mu;
            let v = sc.validate()?;
            let car_analytic = RateModel::from_scenario(&v).peak_car()?;
            let mut p = CarPoint {
                mu,
                car_analytic,
                car_montecarlo: None,
                matched: None,
                unmatched: None,
                unmatched_slots: None,
            };
            if sweep.mode == CarMode::MonteCarlo {
                let cfg = RunConfig::new(0.0, 0.0, duration_s, derive_seed(sweep.seed, k as u64));
                let streams = generate_run(&v, &cfg)?;
                let slots = slot_coincidences(
                    &streams.signal,
                    &streams.idler,
                    v.source.pulse_interval_ps,
                    sweep.side_slots,
                    v.tia.window_ps,
                )?;
                p.car_montecarlo = slots.car();
                p.matched = Some(slots.matched());
                p.unmatched = Some(slots.unmatched_total());
                p.unmatched_slots = Some(slots.unmatched_slots());
            }
            Ok(p)
        })
        .collect()
}

/// Expected windowed counts per hour at constructive phase.
pub fn constructive_counts_per_hour(s: &ValidatedScenario) -> f64 {
    coincidence_rate(0.0, 0.0, &RateModel::from_scenario(s)) * 3600.0
}
