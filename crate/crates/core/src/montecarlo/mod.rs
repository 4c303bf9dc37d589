//! Seeded generation of detector click streams.
//!
//! Every event class is a Poisson process sampled by exponential
//! inter-arrival draws at its aggregate rate; nothing iterates over
//! individual pump slots. Pair photons and pair-derived singles are placed
//! on the pump slot grid, darks are uniform in time. Jitter, fiber drift and
//! dead time are applied afterwards.
//!
//! Runs are cut into fixed one-minute chunks on an absolute time grid. Each
//! chunk draws from its own RNG seeded by [`derive_seed`]`(seed, chunk)`, so
//! any time range can be produced chunk by chunk. Dead time is applied once,
//! after all raw chunk events are merged: concatenating
//! [`generate_chunk`] outputs and calling [`merge_chunks`] is identical to a
//! single [`generate_run`] over the same range.

mod drift;
mod export;
mod phase;
pub(crate) mod seed;

pub use drift::{drift_offset, DriftKind, DriftModel, DriftProfile};
pub use export::{read_stream_text, write_stream_text, StreamHeader};
pub use phase::{perturb_phase, PhaseNoiseModel};
pub use seed::{derive_seed, splitmix64};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::quantum::{Peak, RateModel};
use crate::scenario::{ValidatedScenario, FWHM_TO_SIGMA, PS_PER_SECOND};

/// Length of one generation chunk.
pub const CHUNK_PS: i64 = 60_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Signal,
    Idler,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Signal => "signal",
            Channel::Idler => "idler",
        }
    }
}

/// Ground-truth provenance of one click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    /// Photon of a detected pair; `id` is shared with the partner click.
    Pair {
        id: u64,
        peak: Peak,
    },
    /// Pair photon whose partner was not detected.
    Single,
    Dark,
}

/// Time-ordered clicks of one detector, in ps since the experiment start.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    channel: Channel,
    timestamps: Vec<i64>,
    tags: Option<Vec<Origin>>,
}

impl EventStream {
    /// Wraps timestamps that must be strictly increasing.
    pub fn from_timestamps(channel: Channel, timestamps: Vec<i64>) -> Result<Self> {
        let s = Self {
            channel,
            timestamps,
            tags: None,
        };
        s.check_sorted()?;
        Ok(s)
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// Provenance per click, present only when requested at generation.
    pub fn tags(&self) -> Option<&[Origin]> {
        self.tags.as_deref()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn check_sorted(&self) -> Result<()> {
        match self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            Some(k) => Err(Error::UnsortedStream(k + 1)),
            None => Ok(()),
        }
    }

    /// Smallest gap between consecutive clicks.
    pub fn min_gap(&self) -> Option<i64> {
        self.timestamps.windows(2).map(|w| w[1] - w[0]).min()
    }

    /// Clicks with `lo ≤ t < hi`.
    pub fn slice_time(&self, lo: i64, hi: i64) -> &[i64] {
        let a = self.timestamps.partition_point(|&t| t < lo);
        let b = self.timestamps.partition_point(|&t| t < hi);
        &self.timestamps[a..b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamPair {
    pub signal: EventStream,
    pub idler: EventStream,
}

/// Everything that selects one generated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Nominal analyzer phases (rad).
    pub theta_s: f64,
    pub theta_i: f64,
    pub start_s: f64,
    pub duration_s: f64,
    /// Seeds event sampling.
    pub seed: u64,
    /// Seeds analyzer setting errors. Runs sharing it see the same
    /// per-calibration offsets.
    pub noise_seed: u64,
    pub keep_tags: bool,
    /// Applies analyzer setting errors and pump drift.
    pub phase_noise: bool,
}

impl RunConfig {
    pub fn new(theta_s: f64, theta_i: f64, duration_s: f64, seed: u64) -> Self {
        Self {
            theta_s,
            theta_i,
            start_s: 0.0,
            duration_s,
            seed,
            noise_seed: derive_seed(seed, seed::stream::NOISE),
            keep_tags: false,
            phase_noise: true,
        }
    }

    pub fn span_ps(&self) -> (i64, i64) {
        let start = (self.start_s * PS_PER_SECOND).round() as i64;
        let end = ((self.start_s + self.duration_s) * PS_PER_SECOND).round() as i64;
        (start, end)
    }

    /// Absolute chunk indices overlapping the run.
    pub fn chunks(&self) -> std::ops::Range<i64> {
        let (start, end) = self.span_ps();
        if end <= start {
            return 0..0;
        }
        start.div_euclid(CHUNK_PS)..(end - 1).div_euclid(CHUNK_PS) + 1
    }
}

/// Raw clicks of one chunk, before sorting and dead time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawChunk {
    pub index: i64,
    signal: Vec<(i64, Origin)>,
    idler: Vec<(i64, Origin)>,
}

impl RawChunk {
    pub fn signal_len(&self) -> usize {
        self.signal.len()
    }

    pub fn idler_len(&self) -> usize {
        self.idler.len()
    }
}

/// Per-run quantities shared by all chunks.
struct Plan {
    model: RateModel,
    slot_ps: i64,
    delay_slots: i64,
    pulse_sigma: f64,
    jitter_s: f64,
    jitter_i: f64,
    noise_s: PhaseNoiseModel,
    noise_i: PhaseNoiseModel,
    drift: DriftProfile,
}

impl Plan {
    fn new(s: &ValidatedScenario, cfg: &RunConfig) -> Result<Self> {
        let model = RateModel::from_scenario(s);
        for (channel, p) in [
            ("signal", model.singles_probability_s()),
            ("idler", model.singles_probability_i()),
        ] {
            if p > 1.0 {
                return Err(Error::RateOutOfRange {
                    channel,
                    per_slot: p,
                });
            }
        }
        let slot_ps = s.source.pulse_interval_ps.round() as i64;
        let (_, end) = cfg.span_ps();
        let noise_s = PhaseNoiseModel::for_analyzer(&s.mzi_s, &s.phase_noise);
        // the pump drift is a two-photon phase; carry it on one analyzer only
        let noise_i = PhaseNoiseModel::for_analyzer(&s.mzi_i, &s.phase_noise).without_pump_drift();
        Ok(Self {
            model,
            slot_ps,
            delay_slots: s.mzi_s.delay_bits as i64,
            pulse_sigma: s.source.pulse_width_ps * FWHM_TO_SIGMA,
            jitter_s: s.detector_s.jitter_sigma_ps,
            jitter_i: s.detector_i.jitter_sigma_ps,
            noise_s,
            noise_i,
            drift: DriftProfile::new(&s.drift, end as f64 + CHUNK_PS as f64),
        })
    }

    fn phases_at(&self, cfg: &RunConfig, t_ps: f64) -> (f64, f64) {
        if !cfg.phase_noise {
            return (cfg.theta_s, cfg.theta_i);
        }
        let seed_s = derive_seed(cfg.noise_seed, seed::stream::PHASE_SIGNAL);
        let seed_i = derive_seed(cfg.noise_seed, seed::stream::PHASE_IDLER);
        (
            perturb_phase(&self.noise_s, cfg.theta_s, t_ps, seed_s),
            perturb_phase(&self.noise_i, cfg.theta_i, t_ps, seed_i),
        )
    }
}

/// Gaussian sample, or zero when `sigma` is zero.
fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        z * sigma
    } else {
        0.0
    }
}

/// Calls `emit(position)` for each arrival of a unit-rate-scaled Poisson
/// process on `[0, span)` with `rate` events per unit.
fn poisson_arrivals(
    rng: &mut ChaCha8Rng,
    rate: f64,
    span: f64,
    mut emit: impl FnMut(&mut ChaCha8Rng, f64),
) {
    if !(rate > 0.0) || !(span > 0.0) {
        return;
    }
    let exp = Exp::new(rate).expect("positive rate");
    let mut x = exp.sample(rng);
    while x < span {
        emit(rng, x);
        x += exp.sample(rng);
    }
}

/// Raw events of chunk `index` (clipped to the run span).
pub fn generate_chunk(s: &ValidatedScenario, cfg: &RunConfig, index: i64) -> Result<RawChunk> {
    let plan = Plan::new(s, cfg)?;
    Ok(chunk_events(&plan, cfg, index))
}

fn chunk_events(plan: &Plan, cfg: &RunConfig, index: i64) -> RawChunk {
    let (run_start, run_end) = cfg.span_ps();
    let lo = run_start.max(index * CHUNK_PS);
    let hi = run_end.min((index + 1) * CHUNK_PS);
    let mut out = RawChunk {
        index,
        ..RawChunk::default()
    };
    if hi <= lo {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let m = &plan.model;
    let (theta_s, theta_i) = plan.phases_at(cfg, 0.5 * (lo + hi) as f64);
    let theta_sum = theta_s + theta_i;

    let slot = plan.slot_ps;
    // slots whose nominal emission time lies in [lo, hi)
    let first_slot = lo.div_euclid(slot) + i64::from(lo.rem_euclid(slot) != 0);
    let end_slot = hi.div_euclid(slot) + i64::from(hi.rem_euclid(slot) != 0);
    let n_slots = (end_slot - first_slot) as f64;
    let pulses_per_hz = slot as f64 / PS_PER_SECOND;
    let drift = &plan.drift;
    let idler_time = |t: f64| (t + drift.offset(t)).round() as i64;

    // (a) pairs in each Franson peak
    for peak in Peak::ALL {
        let per_slot = m.peak_rate(peak, theta_sum) * pulses_per_hz;
        let (ds, di) = match peak {
            Peak::Early => (plan.delay_slots, 0),
            Peak::Central => (0, 0),
            Peak::Late => (0, plan.delay_slots),
        };
        poisson_arrivals(&mut rng, per_slot, n_slots, |rng, x| {
            let k = first_slot + x as i64;
            let emission = (k * slot) as f64 + gauss(rng, plan.pulse_sigma);
            let ts = emission + (ds * slot) as f64 + gauss(rng, plan.jitter_s);
            let ti = emission + (di * slot) as f64 + gauss(rng, plan.jitter_i);
            let id = rng.random::<u64>();
            out.signal
                .push((ts.round() as i64, Origin::Pair { id, peak }));
            out.idler.push((idler_time(ti), Origin::Pair { id, peak }));
        });
    }

    // (b) singles, taking either analyzer arm at random
    let delay_choices = if m.interferometers {
        plan.delay_slots
    } else {
        0
    };
    for channel in [Channel::Signal, Channel::Idler] {
        let (per_slot, jitter) = match channel {
            Channel::Signal => (m.singles_probability_s(), plan.jitter_s),
            Channel::Idler => (m.singles_probability_i(), plan.jitter_i),
        };
        // pulse width and detector jitter combined into one draw
        let spread = plan.pulse_sigma.hypot(jitter);
        poisson_arrivals(&mut rng, per_slot, n_slots, |rng, x| {
            let k = first_slot + x as i64;
            let arm = if delay_choices > 0 && rng.random::<bool>() {
                delay_choices
            } else {
                0
            };
            let t = ((k + arm) * slot) as f64 + gauss(rng, spread);
            match channel {
                Channel::Signal => out.signal.push((t.round() as i64, Origin::Single)),
                Channel::Idler => out.idler.push((idler_time(t), Origin::Single)),
            }
        });
    }

    // (c) darks, uniform in time
    let span = (hi - lo) as f64;
    for (rate_hz, sink) in [
        (m.dark_s_hz, &mut out.signal),
        (m.dark_i_hz, &mut out.idler),
    ] {
        poisson_arrivals(&mut rng, rate_hz / PS_PER_SECOND, span, |_, x| {
            sink.push((lo + x as i64, Origin::Dark));
        });
    }
    // presorted chunks leave only short boundary overlaps for the final sort
    out.signal.sort_by_key(|e| e.0);
    out.idler.sort_by_key(|e| e.0);
    out
}

/// Sorts the merged raw events and applies each detector's dead time with a
/// greedy earliest-first pass.
pub fn merge_chunks(s: &ValidatedScenario, chunks: Vec<RawChunk>, keep_tags: bool) -> StreamPair {
    let mut signal = Vec::new();
    let mut idler = Vec::new();
    for c in chunks {
        signal.extend(c.signal);
        idler.extend(c.idler);
    }
    StreamPair {
        signal: finish(
            Channel::Signal,
            signal,
            s.detector_s.dead_time_ps,
            keep_tags,
        ),
        idler: finish(Channel::Idler, idler, s.detector_i.dead_time_ps, keep_tags),
    }
}

fn finish(
    channel: Channel,
    mut events: Vec<(i64, Origin)>,
    dead_time_ps: f64,
    keep_tags: bool,
) -> EventStream {
    // stable: equal timestamps keep generation order
    events.sort_by_key(|e| e.0);
    let mut timestamps = Vec::with_capacity(events.len());
    let mut tags = Vec::with_capacity(if keep_tags { events.len() } else { 0 });
    let mut last: Option<i64> = None;
    for (t, origin) in events {
        if let Some(prev) = last {
            if t <= prev || ((t - prev) as f64) < dead_time_ps {
                continue;
            }
        }
        last = Some(t);
        timestamps.push(t);
        if keep_tags {
            tags.push(origin);
        }
    }
    EventStream {
        channel,
        timestamps,
        tags: keep_tags.then_some(tags),
    }
}

/// Generates both click streams for one run.
pub fn generate_run(s: &ValidatedScenario, cfg: &RunConfig) -> Result<StreamPair> {
    if !(cfg.duration_s >= 0.0) || !(cfg.start_s >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "run span must be non-negative, got start {} s, duration {} s",
            cfg.start_s, cfg.duration_s
        )));
    }
    let plan = Plan::new(s, cfg)?;
    let chunks = cfg.chunks().map(|k| chunk_events(&plan, cfg, k)).collect();
    Ok(merge_chunks(s, chunks, cfg.keep_tags))
}

/// Streams for nominal phases over `[0, duration_s)`.
pub fn generate_streams(
    s: &ValidatedScenario,
    theta_s: f64,
    theta_i: f64,
    duration_s: f64,
    seed: u64,
) -> Result<StreamPair> {
    generate_run(s, &RunConfig::new(theta_s, theta_i, duration_s, seed))
}
