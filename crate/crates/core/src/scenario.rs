//! Scenario parameters, validation and the unit conversions every other
//! module shares.
//!
//! Conventions: times are picoseconds unless a field name says otherwise,
//! rates are Hz, losses are dB at the interface and linear transmittance
//! internally. Field names carry their unit so that scenario files read
//! unambiguously.

use std::f64::consts::{PI, TAU};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, ValidationError, Violation};
use crate::montecarlo::DriftModel;

pub const PS_PER_SECOND: f64 = 1.0e12;
pub const PS_PER_HOUR: f64 = 3600.0 * PS_PER_SECOND;

/// Gaussian sigma of a response whose full width at half maximum is one.
pub const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5;

/// Relative tolerance on `1/λp = 1/λs + 1/λi`.
pub const ENERGY_CONSERVATION_TOLERANCE: f64 = 1.0e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceParams {
    /// Mean generated pairs per pump pulse.
    pub mu: f64,
    pub pulse_interval_ps: f64,
    pub pulse_width_ps: f64,
    pub coherence_time_ps: f64,
    pub pump_wavelength_nm: f64,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub intrinsic_visibility: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            mu: 0.1,
            pulse_interval_ps: 500.0,
            pulse_width_ps: 72.0,
            coherence_time_ps: 1.0e7,
            pump_wavelength_nm: 775.5,
            signal_wavelength_nm: 1547.0,
            idler_wavelength_nm: 1555.0,
            intrinsic_visibility: 1.0,
        }
    }
}

impl SourceParams {
    pub fn rep_rate_hz(&self) -> f64 {
        PS_PER_SECOND / self.pulse_interval_ps
    }

    /// Number of mutually coherent pump slots.
    pub fn dimension(&self) -> usize {
        estimate_dimension(self.coherence_time_ps, self.pulse_interval_ps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcessLoss {
    pub label: String,
    pub loss_db: f64,
}

impl ExcessLoss {
    pub fn new(label: &str, loss_db: f64) -> Self {
        Self {
            label: label.to_string(),
            loss_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub fiber_length_km: f64,
    pub loss_per_km_db: f64,
    /// Filters, demultiplexers, connectors: everything between the source
    /// and the analyzer that is not fiber.
    pub excess_losses: Vec<ExcessLoss>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            fiber_length_km: 150.0,
            loss_per_km_db: 0.215,
            excess_losses: Vec::new(),
        }
    }
}

impl ChannelParams {
    pub fn fiber_loss_db(&self) -> f64 {
        self.fiber_length_km * self.loss_per_km_db
    }

    pub fn excess_loss_db(&self) -> f64 {
        self.excess_losses.iter().map(|l| l.loss_db).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MziParams {
    pub delay_bits: usize,
    pub delay_time_ps: f64,
    pub temperature_c: f64,
    pub reference_temperature_c: f64,
    /// Temperature change that advances the phase by 2π.
    pub period_per_2pi_c: f64,
    /// Setting accuracy of the temperature controller.
    pub temperature_sigma_c: f64,
    pub insertion_loss_db: f64,
}

impl Default for MziParams {
    fn default() -> Self {
        Self {
            delay_bits: 2,
            delay_time_ps: 1000.0,
            temperature_c: 15.35,
            reference_temperature_c: 15.35,
            period_per_2pi_c: 0.74,
            temperature_sigma_c: 0.01,
            insertion_loss_db: 1.5,
        }
    }
}

impl MziParams {
    pub fn phase(&self) -> f64 {
        temperature_to_phase(self.temperature_c, self)
    }

    /// Phase error (rad, one sigma) caused by the temperature setting accuracy.
    pub fn phase_sigma(&self) -> f64 {
        TAU * self.temperature_sigma_c / self.period_per_2pi_c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub jitter_sigma_ps: f64,
    pub dead_time_ps: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.15,
            dark_rate_hz: 10.0,
            jitter_sigma_ps: 50.0 * FWHM_TO_SIGMA,
            dead_time_ps: 50_000.0,
        }
    }
}

impl DetectorParams {
    /// Dark-count probability inside one coincidence window.
    pub fn dark_probability(&self, window_ps: f64) -> f64 {
        dark_probability(self.dark_rate_hz, window_ps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TiaParams {
    pub resolution_ps: f64,
    pub window_ps: f64,
    /// Full span of the start-stop histogram, centered on zero delay.
    pub histogram_range_ps: f64,
    /// Chunk length used by peak tracking.
    pub chunk_duration_s: f64,
    /// Half-width of the region searched for the peak around the previous
    /// chunk's center.
    pub track_search_ps: f64,
}

impl Default for TiaParams {
    fn default() -> Self {
        Self {
            resolution_ps: 9.8,
            window_ps: 300.0,
            histogram_range_ps: 4000.0,
            chunk_duration_s: 60.0,
            track_search_ps: 250.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseNoiseParams {
    pub pump_drift_rad_per_hour: f64,
    pub calibration_interval_hours: f64,
}

impl Default for PhaseNoiseParams {
    fn default() -> Self {
        Self {
            pump_drift_rad_per_hour: 3.6e-3,
            calibration_interval_hours: 8.0,
        }
    }
}

/// Complete parameter set for one simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentScenario {
    #[serde(default)]
    pub name: String,
    pub duration_s: f64,
    pub seed: u64,
    /// Removes the analyzers from the optical path (source characterization
    /// without interferometers).
    #[serde(default)]
    pub bypass_interferometers: bool,
    pub source: SourceParams,
    pub channel_s: ChannelParams,
    pub channel_i: ChannelParams,
    pub mzi_s: MziParams,
    pub mzi_i: MziParams,
    pub detector_s: DetectorParams,
    pub detector_i: DetectorParams,
    pub tia: TiaParams,
    #[serde(default)]
    pub drift: DriftModel,
    #[serde(default)]
    pub phase_noise: PhaseNoiseParams,
}

impl ExperimentScenario {
    /// 150 km of dispersion-shifted fiber per arm, μ = 0.1, 2 GHz pump.
    ///
    /// Component losses are reconstructed: the waveguide, filter and
    /// demultiplexer figures are measured values, while the connector and
    /// interferometer insertion losses are chosen so that the constructive
    /// coincidence rate lands near 100 per hour.
    pub fn paper_300km() -> Self {
        let components = |wdm_db: f64| {
            vec![
                ExcessLoss::new("ppln_waveguide", 3.0),
                ExcessLoss::new("pump_rejection_filter", 0.19),
                ExcessLoss::new("wavelength_demux", wdm_db),
                ExcessLoss::new("connectors_and_pc", 1.25),
            ]
        };
        Self {
            name: "paper-300km".to_string(),
            duration_s: 3600.0,
            seed: 1,
            bypass_interferometers: false,
            source: SourceParams::default(),
            channel_s: ChannelParams {
                excess_losses: components(0.69),
                ..ChannelParams::default()
            },
            channel_i: ChannelParams {
                excess_losses: components(0.61),
                ..ChannelParams::default()
            },
            mzi_s: MziParams::default(),
            mzi_i: MziParams::default(),
            detector_s: DetectorParams::default(),
            detector_i: DetectorParams {
                efficiency: 0.20,
                dark_rate_hz: 15.0,
                ..DetectorParams::default()
            },
            tia: TiaParams::default(),
            drift: DriftModel::default(),
            phase_noise: PhaseNoiseParams::default(),
        }
    }

    /// Back-to-back source characterization: no fiber, no interferometers,
    /// 1 GHz pump, 600 ps coincidence window, μ = 3×10⁻⁷.
    pub fn paper_car() -> Self {
        let mut s = Self::paper_300km();
        s.name = "paper-car".to_string();
        s.duration_s = 5400.0;
        s.bypass_interferometers = true;
        s.source.mu = 3.0e-7;
        s.source.pulse_interval_ps = 1000.0;
        for ch in [&mut s.channel_s, &mut s.channel_i] {
            ch.fiber_length_km = 0.0;
        }
        for mzi in [&mut s.mzi_s, &mut s.mzi_i] {
            mzi.delay_bits = 1;
            mzi.delay_time_ps = 1000.0;
        }
        s.tia.window_ps = 600.0;
        s
    }

    /// Built-in scenarios by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "paper-300km" => Some(Self::paper_300km()),
            "paper-car" => Some(Self::paper_car()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "scenario".to_string(),
            reason: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }

    /// Loads a scenario file, or a built-in scenario when `spec` names one.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(s) = Self::builtin(spec) {
            return Ok(s);
        }
        let text = std::fs::read_to_string(Path::new(spec))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 over every field except the display name.
    pub fn content_hash(&self) -> String {
        let mut unnamed = self.clone();
        unnamed.name.clear();
        let bytes = serde_json::to_vec(&unnamed).expect("scenario serializes to JSON");
        sha256_hex(&bytes)
    }

    pub fn total_fiber_km(&self) -> f64 {
        self.channel_s.fiber_length_km + self.channel_i.fiber_length_km
    }

    /// Sets each arm to half of `total_km`.
    pub fn with_total_fiber_km(mut self, total_km: f64) -> Self {
        self.channel_s.fiber_length_km = total_km / 2.0;
        self.channel_i.fiber_length_km = total_km / 2.0;
        self
    }

    pub fn validate(self) -> Result<ValidatedScenario, ValidationError> {
        validate_scenario(self)
    }
}

/// A scenario whose invariants have all been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario(ExperimentScenario);

impl ValidatedScenario {
    pub fn into_inner(self) -> ExperimentScenario {
        self.0
    }
}

impl Deref for ValidatedScenario {
    type Target = ExperimentScenario;

    fn deref(&self) -> &ExperimentScenario {
        &self.0
    }
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn check(&mut self, ok: bool, field: impl Into<String>, reason: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                field: field.into(),
                reason: reason.into(),
            });
        }
    }

    fn positive(&mut self, value: f64, field: &str) {
        self.check(
            value > 0.0 && value.is_finite(),
            field,
            format!("must be positive, got {value}"),
        );
    }

    fn non_negative(&mut self, value: f64, field: &str) {
        self.check(
            value >= 0.0 && value.is_finite(),
            field,
            format!("must be non-negative, got {value}"),
        );
    }

    fn unit_interval(&mut self, value: f64, field: &str) {
        self.check(
            (0.0..=1.0).contains(&value),
            field,
            format!("must lie in [0, 1], got {value}"),
        );
    }
}

/// Returns the scenario iff every invariant holds; otherwise lists each
/// violation with its field path.
pub fn validate_scenario(s: ExperimentScenario) -> Result<ValidatedScenario, ValidationError> {
    let mut c = Checker {
        violations: Vec::new(),
    };
    c.positive(s.duration_s, "duration_s");

    let src = &s.source;
    c.non_negative(src.mu, "source.mu");
    c.positive(src.pulse_width_ps, "source.pulse_width_ps");
    c.check(
        src.pulse_interval_ps > src.pulse_width_ps && src.pulse_interval_ps.is_finite(),
        "source.pulse_interval_ps",
        format!(
            "must exceed pulse_width_ps ({}), got {}",
            src.pulse_width_ps, src.pulse_interval_ps
        ),
    );
    c.positive(src.coherence_time_ps, "source.coherence_time_ps");
    c.positive(src.pump_wavelength_nm, "source.pump_wavelength_nm");
    c.positive(src.signal_wavelength_nm, "source.signal_wavelength_nm");
    c.positive(src.idler_wavelength_nm, "source.idler_wavelength_nm");
    c.unit_interval(src.intrinsic_visibility, "source.intrinsic_visibility");
    let mismatch = energy_mismatch(
        src.pump_wavelength_nm,
        src.signal_wavelength_nm,
        src.idler_wavelength_nm,
    );
    c.check(
        mismatch < ENERGY_CONSERVATION_TOLERANCE,
        "source.idler_wavelength_nm",
        format!(
            "energy conservation violated: relative mismatch {mismatch:.3e} between 1/pump and 1/signal + 1/idler"
        ),
    );

    for (name, ch) in [("channel_s", &s.channel_s), ("channel_i", &s.channel_i)] {
        c.non_negative(ch.fiber_length_km, &format!("{name}.fiber_length_km"));
        c.non_negative(ch.loss_per_km_db, &format!("{name}.loss_per_km_db"));
        for (k, loss) in ch.excess_losses.iter().enumerate() {
            c.non_negative(loss.loss_db, &format!("{name}.excess_losses[{k}].loss_db"));
        }
    }

    for (name, mzi) in [("mzi_s", &s.mzi_s), ("mzi_i", &s.mzi_i)] {
        c.check(
            mzi.delay_bits >= 1,
            format!("{name}.delay_bits"),
            "must be at least 1",
        );
        let expected = mzi.delay_bits as f64 * src.pulse_interval_ps;
        c.check(
            (mzi.delay_time_ps - expected).abs() <= 1e-6 * expected.max(1.0),
            format!("{name}.delay_time_ps"),
            format!(
                "must equal delay_bits × pulse_interval_ps = {expected}, got {}",
                mzi.delay_time_ps
            ),
        );
        c.positive(mzi.period_per_2pi_c, &format!("{name}.period_per_2pi_c"));
        c.non_negative(
            mzi.temperature_sigma_c,
            &format!("{name}.temperature_sigma_c"),
        );
        c.non_negative(mzi.insertion_loss_db, &format!("{name}.insertion_loss_db"));
        c.check(
            mzi.temperature_c.is_finite() && mzi.reference_temperature_c.is_finite(),
            format!("{name}.temperature_c"),
            "temperatures must be finite",
        );
    }
    if !s.bypass_interferometers {
        c.check(
            s.mzi_s.delay_bits == s.mzi_i.delay_bits,
            "mzi_i.delay_bits",
            "both analyzers must share one delay for two-photon interference",
        );
    }

    for (name, det) in [("detector_s", &s.detector_s), ("detector_i", &s.detector_i)] {
        c.unit_interval(det.efficiency, &format!("{name}.efficiency"));
        c.non_negative(det.dark_rate_hz, &format!("{name}.dark_rate_hz"));
        c.non_negative(det.jitter_sigma_ps, &format!("{name}.jitter_sigma_ps"));
        c.non_negative(det.dead_time_ps, &format!("{name}.dead_time_ps"));
    }

    let tia = &s.tia;
    c.positive(tia.resolution_ps, "tia.resolution_ps");
    c.check(
        tia.window_ps >= tia.resolution_ps && tia.window_ps.is_finite(),
        "tia.window_ps",
        format!(
            "must be at least resolution_ps ({}), got {}",
            tia.resolution_ps, tia.window_ps
        ),
    );
    c.check(
        tia.histogram_range_ps >= 4.0 * src.pulse_interval_ps && tia.histogram_range_ps.is_finite(),
        "tia.histogram_range_ps",
        format!(
            "must span at least four pulse intervals ({} ps), got {}",
            4.0 * src.pulse_interval_ps,
            tia.histogram_range_ps
        ),
    );
    c.positive(tia.chunk_duration_s, "tia.chunk_duration_s");
    c.check(
        tia.track_search_ps >= tia.resolution_ps && tia.track_search_ps.is_finite(),
        "tia.track_search_ps",
        "must be at least one resolution bin",
    );

    c.non_negative(s.drift.magnitude_ps_per_hour, "drift.magnitude_ps_per_hour");
    c.non_negative(
        s.phase_noise.pump_drift_rad_per_hour,
        "phase_noise.pump_drift_rad_per_hour",
    );
    c.positive(
        s.phase_noise.calibration_interval_hours,
        "phase_noise.calibration_interval_hours",
    );
    if c.violations.is_empty() {
        Ok(ValidatedScenario(s))
    } else {
        Err(ValidationError {
            violations: c.violations,
        })
    }
}

fn energy_mismatch(pump_nm: f64, signal_nm: f64, idler_nm: f64) -> f64 {
    let pump = 1.0 / pump_nm;
    ((pump - (1.0 / signal_nm + 1.0 / idler_nm)) / pump).abs()
}

/// Linear transmittance of a loss given in dB.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::NegativeLoss(loss_db));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Loss in dB equivalent to a linear transmittance in (0, 1].
pub fn transmittance_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

/// Analyzer phase at temperature `t_c`. Not reduced modulo 2π.
pub fn temperature_to_phase(t_c: f64, mzi: &MziParams) -> f64 {
    TAU * (t_c - mzi.reference_temperature_c) / mzi.period_per_2pi_c
}

/// Lower-case hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Inverse of [`temperature_to_phase`].
pub fn phase_to_temperature(phase: f64, mzi: &MziParams) -> f64 {
    mzi.reference_temperature_c + phase * mzi.period_per_2pi_c / TAU
}

/// Number of pump slots within the coherence time, at least one.
pub fn estimate_dimension(coherence_time_ps: f64, pulse_interval_ps: f64) -> usize {
    let ratio = (coherence_time_ps / pulse_interval_ps).floor();
    if ratio.is_finite() && ratio >= 1.0 {
        ratio as usize
    } else {
        1
    }
}

/// Probability of a dark count inside a window of `window_ps`.
pub fn dark_probability(dark_rate_hz: f64, window_ps: f64) -> f64 {
    dark_rate_hz * window_ps / PS_PER_SECOND
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}
