//! Two-photon amplitude bookkeeping for a pair of unbalanced interferometers
//! and the closed-form rate, visibility and CAR models built on it.
//!
//! The pair state is a sum over `N` mutually coherent pump slots. Each
//! analyzer maps slot `k` to `k` (short arm) plus `e^{iθ}·(k+n)` (long arm).
//! Only the monitored output of each analyzer is kept, so the coincidence
//! weights are unnormalized; [`JointSlotDistribution::probability`] applies
//! the `1/(16N)` factor of two balanced couplers per analyzer.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scenario::{dark_probability, db_to_transmittance, ValidatedScenario};

/// Relative position of the idler detection against the signal detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Peak {
    /// Signal took the long arm, idler the short one (delay −n slots).
    Early,
    /// Both short or both long: the interfering peak.
    Central,
    /// Signal short, idler long (delay +n slots).
    Late,
}

impl Peak {
    pub const ALL: [Peak; 3] = [Peak::Early, Peak::Central, Peak::Late];

    /// Idler-minus-signal offset in slots.
    pub fn slot_offset(self, delay_bits: usize) -> i64 {
        match self {
            Peak::Early => -(delay_bits as i64),
            Peak::Central => 0,
            Peak::Late => delay_bits as i64,
        }
    }
}

/// Coincidence weights over (signal slot, idler slot), slots numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSlotDistribution {
    n_slots: usize,
    delay_bits: usize,
    theta_sum: f64,
    /// Same-slot weights for slots `1..=N+n`.
    central: Vec<f64>,
}

impl JointSlotDistribution {
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn delay_bits(&self) -> usize {
        self.delay_bits
    }

    pub fn theta_sum(&self) -> f64 {
        self.theta_sum
    }

    /// Weight of detecting the signal in `signal_slot` and the idler in
    /// `idler_slot`.
    pub fn weight(&self, signal_slot: usize, idler_slot: usize) -> f64 {
        let (n, big_n) = (self.delay_bits, self.n_slots);
        if signal_slot == 0 || idler_slot == 0 {
            return 0.0;
        }
        if signal_slot == idler_slot {
            return self.central.get(signal_slot - 1).copied().unwrap_or(0.0);
        }
        // one photon took the long arm: |e^{iθ}|² = 1 for each emission slot
        let (lo, hi) = (signal_slot.min(idler_slot), signal_slot.max(idler_slot));
        if hi - lo == n && lo <= big_n {
            1.0
        } else {
            0.0
        }
    }

    /// All non-zero-support entries as `((signal_slot, idler_slot), weight)`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        let n = self.delay_bits;
        let central = self
            .central
            .iter()
            .enumerate()
            .map(|(k, &w)| ((k + 1, k + 1), w));
        let early = (1..=self.n_slots).map(move |k| ((k + n, k), 1.0));
        let late = (1..=self.n_slots).map(move |k| ((k, k + n), 1.0));
        central.chain(early).chain(late)
    }

    /// Summed weight of one Franson peak.
    pub fn peak_weight(&self, peak: Peak) -> f64 {
        match peak {
            Peak::Central => self.central.iter().sum(),
            Peak::Early | Peak::Late => self.n_slots as f64,
        }
    }

    pub fn total_weight(&self) -> f64 {
        Peak::ALL.iter().map(|&p| self.peak_weight(p)).sum()
    }

    /// Detection probability per emitted pair for the monitored outputs.
    pub fn probability(&self, signal_slot: usize, idler_slot: usize) -> f64 {
        self.weight(signal_slot, idler_slot) / self.normalization()
    }

    /// Total weight of all outputs of both analyzers for `N` pairs.
    pub fn normalization(&self) -> f64 {
        16.0 * self.n_slots as f64
    }

    /// Central-peak fringe contrast limited by the non-interfering boundary
    /// slots: `(N − n)/N`.
    pub fn interference_visibility(&self) -> f64 {
        let at = |theta| {
            joint_slot_distribution(self.n_slots, self.delay_bits, theta, 0.0)
                .map(|d| d.peak_weight(Peak::Central))
                .unwrap_or(0.0)
        };
        let (max, min) = (at(0.0), at(PI));
        (max - min) / (max + min)
    }

    /// Per-slot signal detection weight summed over every idler slot and
    /// both idler outputs. The second output is the first one with the
    /// idler phase advanced by π.
    pub fn signal_marginal(&self) -> Vec<f64> {
        self.marginal(true)
    }

    /// Per-slot idler detection weight, summed over the signal's slots and
    /// both signal outputs.
    pub fn idler_marginal(&self) -> Vec<f64> {
        self.marginal(false)
    }

    fn marginal(&self, keep_signal: bool) -> Vec<f64> {
        let len = self.n_slots + self.delay_bits;
        let mut out = vec![0.0; len];
        let other =
            joint_slot_distribution(self.n_slots, self.delay_bits, self.theta_sum + PI, 0.0)
                .expect("same shape as self");
        for dist in [self, &other] {
            for ((s, i), w) in dist.iter() {
                let slot = if keep_signal { s } else { i };
                out[slot - 1] += w;
            }
        }
        out
    }
}

/// Coincidence weights after both analyzers, for a pair state coherent over
/// `n_slots` pump slots and analyzers delaying by `delay_bits` slots.
///
/// Same-slot weights are 1 for `k ∈ [1, n]` and `k ∈ [N+1, N+n]` and
/// `|1 + e^{i(θs+θi)}|²` for `k ∈ [n+1, N]`; each side peak carries weight 1
/// per emission slot.
pub fn joint_slot_distribution(
    n_slots: usize,
    delay_bits: usize,
    theta_s: f64,
    theta_i: f64,
) -> Result<JointSlotDistribution> {
    if delay_bits == 0 || delay_bits >= n_slots {
        return Err(Error::DelayOutOfRange {
            delay_bits,
            slots: n_slots,
        });
    }
    let theta_sum = theta_s + theta_i;
    // |1 + e^{iΔ}|² = 2 + 2cosΔ
    let interfering = 2.0 + 2.0 * theta_sum.cos();
    let central = (1..=n_slots + delay_bits)
        .map(|k| {
            if k <= delay_bits || k > n_slots {
                1.0
            } else {
                interfering
            }
        })
        .collect();
    Ok(JointSlotDistribution {
        n_slots,
        delay_bits,
        theta_sum,
        central,
    })
}

/// Inputs of the closed-form coincidence model.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    pub rep_rate_hz: f64,
    pub mu: f64,
    /// End-to-end transmittance times detection efficiency, signal arm.
    pub eta_s: f64,
    pub eta_i: f64,
    pub dark_s_hz: f64,
    pub dark_i_hz: f64,
    /// Intrinsic two-photon visibility.
    pub v0: f64,
    /// Coincidence window used for the accidental term.
    pub window_ps: f64,
    /// `false` when the analyzers are bypassed.
    pub interferometers: bool,
}

impl RateModel {
    /// Model of a validated scenario. The intrinsic visibility is scaled by
    /// the finite-coherence contrast `(N − n)/N`.
    pub fn from_scenario(s: &ValidatedScenario) -> Self {
        let arm_eta = |ch: &crate::scenario::ChannelParams,
                       mzi: &crate::scenario::MziParams,
                       det: &crate::scenario::DetectorParams| {
            let mut loss = ch.fiber_loss_db() + ch.excess_loss_db();
            if !s.bypass_interferometers {
                loss += mzi.insertion_loss_db;
            }
            db_to_transmittance(loss).expect("validated losses are non-negative") * det.efficiency
        };
        let n_slots = s.source.dimension();
        let delay = s.mzi_s.delay_bits;
        let coherence = if n_slots > delay {
            (n_slots - delay) as f64 / n_slots as f64
        } else {
            0.0
        };
        Self {
            rep_rate_hz: s.source.rep_rate_hz(),
            mu: s.source.mu,
            eta_s: arm_eta(&s.channel_s, &s.mzi_s, &s.detector_s),
            eta_i: arm_eta(&s.channel_i, &s.mzi_i, &s.detector_i),
            dark_s_hz: s.detector_s.dark_rate_hz,
            dark_i_hz: s.detector_i.dark_rate_hz,
            v0: s.source.intrinsic_visibility * coherence,
            window_ps: s.tia.window_ps,
            interferometers: !s.bypass_interferometers,
        }
    }

    /// Fraction of each photon's flux reaching the monitored analyzer output.
    pub fn analyzer_factor(&self) -> f64 {
        if self.interferometers {
            0.5
        } else {
            1.0
        }
    }

    /// Per-slot detection probability of one arm from pair photons.
    pub fn singles_probability_s(&self) -> f64 {
        self.mu * self.eta_s * self.analyzer_factor()
    }

    pub fn singles_probability_i(&self) -> f64 {
        self.mu * self.eta_i * self.analyzer_factor()
    }

    /// Per-pair detection probability of each Franson peak.
    pub fn peak_fraction(&self, peak: Peak, theta_sum: f64) -> f64 {
        if !self.interferometers {
            return if peak == Peak::Central { 1.0 } else { 0.0 };
        }
        match peak {
            Peak::Central => (1.0 + self.v0 * theta_sum.cos()) / 8.0,
            Peak::Early | Peak::Late => 1.0 / 16.0,
        }
    }

    /// True-coincidence rate (Hz) into one peak.
    pub fn peak_rate(&self, peak: Peak, theta_sum: f64) -> f64 {
        self.rep_rate_hz * self.mu * self.eta_s * self.eta_i * self.peak_fraction(peak, theta_sum)
    }

    /// Constructive-phase true-coincidence rate with unit intrinsic visibility.
    pub fn true_coincidence_ceiling(&self) -> f64 {
        self.rep_rate_hz * self.mu * self.eta_s * self.eta_i * self.analyzer_factor().powi(2)
    }

    /// Matched-window coincidence-to-accidental ratio at constructive phase.
    pub fn peak_car(&self) -> Result<f64> {
        let f = self.analyzer_factor();
        car(
            self.mu,
            self.eta_s * f,
            self.eta_i * f,
            dark_probability(self.dark_s_hz, self.window_ps),
            dark_probability(self.dark_i_hz, self.window_ps),
        )
    }

    /// Signal dark-count probability per coincidence window.
    pub fn dark_probability_s(&self) -> f64 {
        dark_probability(self.dark_s_hz, self.window_ps)
    }

    pub fn dark_probability_i(&self) -> f64 {
        dark_probability(self.dark_i_hz, self.window_ps)
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..self.clone() }
    }
}

/// Central-window coincidence rate (Hz), true plus accidental.
pub fn coincidence_rate(theta_s: f64, theta_i: f64, m: &RateModel) -> f64 {
    m.peak_rate(Peak::Central, theta_s + theta_i) + expected_accidentals(m, m.window_ps)
}

/// Accidental rate (Hz) in one matched window: the product of the per-slot
/// singles probabilities of both arms, darks converted per window.
pub fn expected_accidentals(m: &RateModel, window_ps: f64) -> f64 {
    let p_s = m.singles_probability_s() + dark_probability(m.dark_s_hz, window_ps);
    let p_i = m.singles_probability_i() + dark_probability(m.dark_i_hz, window_ps);
    m.rep_rate_hz * p_s * p_i
}

/// Fringe visibility of the windowed central-peak rate.
pub fn expected_visibility(m: &RateModel, window_ps: f64) -> f64 {
    let interfering = m.mu * m.eta_s * m.eta_i / 4.0;
    let accidental = expected_accidentals(m, window_ps) / m.rep_rate_hz;
    let denom = interfering + 2.0 * accidental;
    if denom <= 0.0 {
        // no light and no darks: the pure single-pair limit
        return m.v0;
    }
    m.v0 * interfering / denom
}

/// Coincidence-to-accidental ratio for mean pair number `mu`, per-arm
/// transmittances `alpha_*` and per-window dark probabilities `d_*`.
pub fn car(mu: f64, alpha_s: f64, alpha_i: f64, d_s: f64, d_i: f64) -> Result<f64> {
    for (name, v) in [
        ("mu", mu),
        ("alpha_s", alpha_s),
        ("alpha_i", alpha_i),
        ("d_s", d_s),
        ("d_i", d_i),
    ] {
        if !(v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be non-negative, got {v}"
            )));
        }
    }
    let accidental = (mu * alpha_s + d_s) * (mu * alpha_i + d_i);
    if accidental <= 0.0 {
        return Err(Error::UndefinedCar);
    }
    Ok((mu * alpha_s * alpha_i + accidental) / accidental)
}

/// Mean pair number maximizing [`car`]: `sqrt(d_s·d_i / (α_s·α_i))`.
pub fn optimal_mu(alpha_s: f64, alpha_i: f64, d_s: f64, d_i: f64) -> Result<f64> {
    if !(alpha_s > 0.0 && alpha_i > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "transmittances must be positive, got {alpha_s} and {alpha_i}"
        )));
    }
    if !(d_s >= 0.0 && d_i >= 0.0) {
        return Err(Error::InvalidArgument(
            "dark probabilities must be non-negative".into(),
        ));
    }
    Ok((d_s * d_i / (alpha_s * alpha_i)).sqrt())
}
