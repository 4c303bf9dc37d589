#![allow(dead_code)]

use std::collections::HashMap;

use num_complex::Complex64;
use timebin::montecarlo::{generate_run, Origin, RunConfig};
use timebin::quantum::{Peak, RateModel};
use timebin::{ExperimentScenario, ValidatedScenario};

/// Brute-force coincidence probabilities over slots `1..=N+n` for both
/// photons, built directly from the per-emission amplitudes. Each analyzer
/// sends slot `k` to `k` (amplitude 1/2) and to `k+n` (amplitude e^{iθ}/2);
/// the emission slot carries amplitude `1/√N`.
pub fn brute_force_probabilities(
    n_slots: usize,
    delay: usize,
    theta_s: f64,
    theta_i: f64,
) -> Vec<Vec<f64>> {
    let m = n_slots + delay;
    let mut amp = vec![vec![Complex64::new(0.0, 0.0); m + 1]; m + 1];
    let norm = 1.0 / (n_slots as f64).sqrt();
    let paths = |theta: f64| {
        [
            (0usize, Complex64::new(0.5, 0.0)),
            (delay, Complex64::from_polar(0.5, theta)),
        ]
    };
    for k in 1..=n_slots {
        for (ds, a_s) in paths(theta_s) {
            for (di, a_i) in paths(theta_i) {
                amp[k + ds][k + di] += a_s * a_i * norm;
            }
        }
    }
    amp.iter()
        .map(|row| row.iter().map(|a| a.norm_sqr()).collect())
        .collect()
}

/// Measured CHSH table: sixteen counts with their quoted errors, then `(E, σ_E)` per row.
pub const MEASURED_COUNTS: [[(f64, f64); 4]; 4] = [
    [(158.0, 14.5), (44.0, 9.8), (27.0, 8.9), (163.0, 14.7)],
    [(164.0, 14.7), (46.0, 9.9), (36.0, 9.4), (158.0, 14.5)],
    [(140.0, 13.9), (44.0, 9.8), (44.0, 9.8), (169.0, 14.9)],
    [(37.0, 9.5), (167.0, 14.8), (168.0, 14.8), (41.0, 9.7)],
];
pub const MEASURED_E: [(f64, f64); 4] =
    [(0.64, 0.074), (0.59, 0.071), (0.56, 0.070), (-0.62, 0.071)];

pub fn round_to(x: f64, dp: i32) -> f64 {
    let f = 10f64.powi(dp);
    (x * f).round() / f
}

/// Observed count, expected count and z-score for one event class.
#[derive(Debug, Clone)]
pub struct ClassCheck {
    pub label: String,
    pub observed: f64,
    pub expected: f64,
}

impl ClassCheck {
    pub fn z(&self) -> f64 {
        (self.observed - self.expected) / self.expected.sqrt()
    }
}

/// Back-to-back scenario with raised dark rates and no dead time, so every
/// generated click survives and each class can be counted from its tags.
pub fn class_test_scenario() -> ValidatedScenario {
    let mut s = ExperimentScenario::paper_300km();
    s.source.mu = 1e-3;
    for ch in [&mut s.channel_s, &mut s.channel_i] {
        ch.fiber_length_km = 0.0;
    }
    for d in [&mut s.detector_s, &mut s.detector_i] {
        d.dead_time_ps = 0.0;
    }
    s.detector_s.dark_rate_hz = 2e4;
    s.detector_i.dark_rate_hz = 3e4;
    s.validate().unwrap()
}

/// Counts every tagged class in both streams against the model's rates.
pub fn class_checks(
    s: &ValidatedScenario,
    theta_s: f64,
    theta_i: f64,
    seconds: f64,
    seed: u64,
) -> Vec<ClassCheck> {
    let mut cfg = RunConfig::new(theta_s, theta_i, seconds, seed);
    cfg.keep_tags = true;
    cfg.phase_noise = false;
    let p = generate_run(s, &cfg).unwrap();
    let m = RateModel::from_scenario(s);
    let mut checks = Vec::new();
    for (name, stream, single_p, dark_hz) in [
        ("signal", &p.signal, m.singles_probability_s(), m.dark_s_hz),
        ("idler", &p.idler, m.singles_probability_i(), m.dark_i_hz),
    ] {
        let mut counts: HashMap<String, f64> = HashMap::new();
        for o in stream.tags().unwrap() {
            let key = match o {
                Origin::Pair { peak, .. } => format!("pair {peak:?}"),
                Origin::Single => "single".to_string(),
                Origin::Dark => "dark".to_string(),
            };
            *counts.entry(key).or_default() += 1.0;
        }
        let mut push = |label: String, expected: f64| {
            checks.push(ClassCheck {
                observed: counts.get(&label).copied().unwrap_or(0.0),
                label: format!("{name} {label}"),
                expected,
            })
        };
        for peak in Peak::ALL {
            push(
                format!("pair {peak:?}"),
                m.peak_rate(peak, theta_s + theta_i) * seconds,
            );
        }
        push("single".to_string(), single_p * m.rep_rate_hz * seconds);
        push("dark".to_string(), dark_hz * seconds);
    }
    checks
}

/// True central-peak coincidences from tags, and how many fall inside the
/// tracked and the static windows.
pub struct DriftRecovery {
    pub truth: usize,
    pub tracked: usize,
    pub fixed: usize,
}

pub fn drift_recovery(ps_per_hour: f64, hours: f64, seed: u64) -> DriftRecovery {
    use timebin::montecarlo::DriftModel;
    let mut s = ExperimentScenario::paper_300km();
    s.drift = DriftModel::linear(ps_per_hour);
    let s = s.validate().unwrap();
    let mut cfg = RunConfig::new(0.0, 0.0, hours * 3600.0, seed);
    cfg.keep_tags = true;
    let p = generate_run(&s, &cfg).unwrap();
    let mut signal_times = HashMap::new();
    for (t, o) in p.signal.timestamps().iter().zip(p.signal.tags().unwrap()) {
        if let Origin::Pair {
            id,
            peak: Peak::Central,
        } = o
        {
            signal_times.insert(*id, *t);
        }
    }
    let mut pairs = Vec::new();
    for (t, o) in p.idler.timestamps().iter().zip(p.idler.tags().unwrap()) {
        if let Origin::Pair { id, .. } = o {
            if let Some(ts) = signal_times.get(id) {
                pairs.push((*ts, *t));
            }
        }
    }
    let tr = timebin::tia::track_peak(&p.signal, &p.idler, &s.tia).unwrap();
    let half = s.tia.window_ps / 2.0;
    let tracked = pairs
        .iter()
        .filter(|(a, b)| {
            tr.track
                .center_at(*a)
                .is_some_and(|c| ((b - a) as f64 - c).abs() <= half)
        })
        .count();
    let fixed = pairs
        .iter()
        .filter(|(a, b)| ((b - a) as f64).abs() <= half)
        .count();
    DriftRecovery {
        truth: pairs.len(),
        tracked,
        fixed,
    }
}
