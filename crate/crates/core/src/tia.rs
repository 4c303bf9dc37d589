//! Time-interval-analyzer emulation: start-stop delay histograms, windowed
//! coincidence counts, per-slot counts and coincidence-peak tracking.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::montecarlo::EventStream;
use crate::scenario::{TiaParams, PS_PER_SECOND};

/// Bins of the boxcar used before locating a peak, on each side.
pub const SMOOTHING_HALF_WIDTH: usize = 3;

/// Start-stop delay counts. Bin `k` covers
/// `[origin + k·bin_width, origin + (k+1)·bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub bin_width: f64,
    pub origin: f64,
    pub range: f64,
    pub counts: Vec<u64>,
    pub total_starts: u64,
    pub total_stops: u64,
}

impl CoincidenceHistogram {
    pub fn empty(bin_width: f64, origin: f64, range: f64) -> Self {
        let n = (range / bin_width).ceil().max(1.0) as usize;
        Self {
            bin_width,
            origin,
            range,
            counts: vec![0; n],
            total_starts: 0,
            total_stops: 0,
        }
    }

    /// Histogram spanning `[-range/2, range/2)` at the TIA resolution.
    pub fn for_tia(tia: &TiaParams) -> Self {
        Self::empty(
            tia.resolution_ps,
            -tia.histogram_range_ps / 2.0,
            tia.histogram_range_ps,
        )
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.origin + (k as f64 + 0.5) * self.bin_width
    }

    pub fn bin_of(&self, delay: f64) -> Option<usize> {
        if delay < self.origin || delay >= self.origin + self.range {
            return None;
        }
        let k = ((delay - self.origin) / self.bin_width).floor() as usize;
        (k < self.counts.len()).then_some(k)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another histogram with the same binning.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.bin_width != other.bin_width
            || self.origin != other.origin
            || self.counts.len() != other.counts.len()
        {
            return Err(Error::InvalidArgument("histogram binning differs".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_starts += other.total_starts;
        self.total_stops += other.total_stops;
        Ok(())
    }

    /// Boxcar sum over `±SMOOTHING_HALF_WIDTH` bins around `k`.
    pub fn smoothed(&self, k: usize) -> u64 {
        let lo = k.saturating_sub(SMOOTHING_HALF_WIDTH);
        let hi = (k + SMOOTHING_HALF_WIDTH + 1).min(self.counts.len());
        self.counts[lo..hi].iter().sum()
    }

    /// CSV with columns `delay_ps,counts`; delays are bin centers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay_ps,counts\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{:.3},{}", self.bin_center(k), c);
        }
        out
    }

    fn add_pairs(&mut self, starts: &[i64], stops: &[i64]) {
        let lo_off = self.origin;
        let hi_off = self.origin + self.range;
        let mut j = 0usize;
        for &t in starts {
            let lo = t as f64 + lo_off;
            while j < stops.len() && (stops[j] as f64) < lo {
                j += 1;
            }
            let mut k = j;
            while k < stops.len() && (stops[k] as f64) < t as f64 + hi_off {
                if let Some(bin) = self.bin_of((stops[k] - t) as f64) {
                    self.counts[bin] += 1;
                }
                k += 1;
            }
        }
        self.total_starts += starts.len() as u64;
        self.total_stops += stops.len() as u64;
    }
}

/// Histograms `stop − start` for every start against every stop in range.
/// Multiple stops per start are all counted.
pub fn correlate(
    starts: &EventStream,
    stops: &EventStream,
    tia: &TiaParams,
) -> Result<CoincidenceHistogram> {
    starts.check_sorted()?;
    stops.check_sorted()?;
    let mut h = CoincidenceHistogram::for_tia(tia);
    h.add_pairs(starts.timestamps(), stops.timestamps());
    Ok(h)
}

/// [`correlate`] over raw sorted slices with explicit binning.
pub fn correlate_slices(
    starts: &[i64],
    stops: &[i64],
    bin_width: f64,
    origin: f64,
    range: f64,
) -> Result<CoincidenceHistogram> {
    for s in [starts, stops] {
        if let Some(k) = s.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::UnsortedStream(k + 1));
        }
    }
    let mut h = CoincidenceHistogram::empty(bin_width, origin, range);
    h.add_pairs(starts, stops);
    Ok(h)
}

/// Sum of bins whose center lies in `[center − window/2, center + window/2]`.
pub fn windowed_count(h: &CoincidenceHistogram, center: f64, window: f64) -> Result<u64> {
    if !(window >= h.bin_width) {
        return Err(Error::InvalidArgument(format!(
            "window {window} ps narrower than one bin ({} ps)",
            h.bin_width
        )));
    }
    let lo = center - window / 2.0;
    let hi = center + window / 2.0;
    if lo < h.origin || hi > h.origin + h.range {
        return Err(Error::WindowOutOfRange {
            lo,
            hi,
            range_lo: h.origin,
            range_hi: h.origin + h.range,
        });
    }
    Ok(h.counts
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let c = h.bin_center(*k);
            c >= lo && c <= hi
        })
        .map(|(_, &n)| n)
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEntry {
    pub chunk_start_ps: i64,
    pub peak_delay_ps: f64,
    pub window_counts: u64,
}

/// Window center chosen for every chunk; entries only for chunks that had
/// at least one candidate event.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakTrack {
    pub window_ps: f64,
    pub chunk_ps: i64,
    pub entries: Vec<TrackEntry>,
    /// `(chunk_start_ps, center)` for every chunk, inherited centers included.
    pub centers: Vec<(i64, f64)>,
}

impl PeakTrack {
    /// Window center in force for a start click at `t_ps`.
    pub fn center_at(&self, t_ps: i64) -> Option<f64> {
        let chunk_start = t_ps.div_euclid(self.chunk_ps) * self.chunk_ps;
        self.centers
            .binary_search_by_key(&chunk_start, |c| c.0)
            .ok()
            .map(|k| self.centers[k].1)
    }

    /// CSV with columns `chunk_start_s,peak_delay_ps,window_counts`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("chunk_start_s,peak_delay_ps,window_counts\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:.3},{:.3},{}",
                e.chunk_start_ps as f64 / PS_PER_SECOND,
                e.peak_delay_ps,
                e.window_counts
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub track: PeakTrack,
    /// Sum of the per-chunk windowed counts.
    pub total: u64,
}

/// Smoothed-argmax bin among those centered within `search` of `prev`,
/// ties going to the bin closest to `prev`. `None` if no candidate events.
fn locate_peak(h: &CoincidenceHistogram, prev: f64, search: f64, window: f64) -> Option<f64> {
    let mut best: Option<(u64, f64, f64)> = None;
    let mut candidates = 0u64;
    for k in 0..h.counts.len() {
        let c = h.bin_center(k);
        if (c - prev).abs() > search {
            continue;
        }
        candidates += h.counts[k];
        let score = h.smoothed(k);
        let dist = (c - prev).abs();
        let better = match best {
            None => true,
            Some((s, d, _)) => score > s || (score == s && dist < d),
        };
        if better {
            best = Some((score, dist, c));
        }
    }
    if candidates == 0 {
        return None;
    }
    best.map(|(_, _, c)| clamp_center(h, c, window))
}

fn clamp_center(h: &CoincidenceHistogram, center: f64, window: f64) -> f64 {
    let lo = h.origin + window / 2.0;
    let hi = h.origin + h.range - window / 2.0;
    center.clamp(lo, hi)
}

/// Follows the coincidence peak chunk by chunk, re-centering the window on
/// each chunk's smoothed maximum within `tia.track_search_ps` of the
/// previous center. The first center is the global peak near zero delay.
pub fn track_peak(
    starts: &EventStream,
    stops: &EventStream,
    tia: &TiaParams,
) -> Result<TrackResult> {
    starts.check_sorted()?;
    stops.check_sorted()?;
    if !(tia.chunk_duration_s > 0.0) {
        return Err(Error::InvalidArgument(
            "chunk duration must be positive".into(),
        ));
    }
    let chunk_ps = (tia.chunk_duration_s * PS_PER_SECOND).round() as i64;
    let window = tia.window_ps;
    let mut track = PeakTrack {
        window_ps: window,
        chunk_ps,
        entries: Vec::new(),
        centers: Vec::new(),
    };
    let ts = starts.timestamps();
    let (Some(&first), Some(&last)) = (ts.first(), ts.last()) else {
        return Ok(TrackResult { track, total: 0 });
    };

    let global = correlate(starts, stops, tia)?;
    let mut center = locate_peak(&global, 0.0, tia.track_search_ps, window)
        .unwrap_or_else(|| clamp_center(&global, 0.0, window));

    let mut total = 0;
    for k in first.div_euclid(chunk_ps)..=last.div_euclid(chunk_ps) {
        let chunk_start = k * chunk_ps;
        let chunk = starts.slice_time(chunk_start, chunk_start + chunk_ps);
        let h = correlate_slices(
            chunk,
            stops.timestamps(),
            global.bin_width,
            global.origin,
            global.range,
        )?;
        let found = locate_peak(&h, center, tia.track_search_ps, window);
        if let Some(c) = found {
            center = c;
        }
        let counts = windowed_count(&h, center, window)?;
        total += counts;
        if found.is_some() {
            track.entries.push(TrackEntry {
                chunk_start_ps: chunk_start,
                peak_delay_ps: center,
                window_counts: counts,
            });
        }
        track.centers.push((chunk_start, center));
    }
    Ok(TrackResult { track, total })
}

/// Coincidences binned by pump-slot offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotCounts {
    pub slot_ps: f64,
    pub window_ps: f64,
    /// Largest offset counted on each side.
    pub side_slots: usize,
    /// `counts[side_slots + k]` holds offset `k`.
    pub counts: Vec<u64>,
}

impl SlotCounts {
    pub fn at(&self, offset: i64) -> u64 {
        let k = offset + self.side_slots as i64;
        if k < 0 {
            return 0;
        }
        self.counts.get(k as usize).copied().unwrap_or(0)
    }

    pub fn matched(&self) -> u64 {
        self.at(0)
    }

    pub fn unmatched_total(&self) -> u64 {
        self.counts.iter().sum::<u64>() - self.matched()
    }

    pub fn unmatched_slots(&self) -> usize {
        2 * self.side_slots
    }

    /// Matched count over mean unmatched count; `None` without accidentals.
    pub fn car(&self) -> Option<f64> {
        let acc = self.unmatched_total();
        (acc > 0).then(|| self.matched() as f64 * self.unmatched_slots() as f64 / acc as f64)
    }
}

/// Counts start-stop pairs within `window_ps/2` of each slot offset
/// `k·slot_ps`, `|k| ≤ side_slots`.
pub fn slot_coincidences(
    starts: &EventStream,
    stops: &EventStream,
    slot_ps: f64,
    side_slots: usize,
    window_ps: f64,
) -> Result<SlotCounts> {
    starts.check_sorted()?;
    stops.check_sorted()?;
    if !(window_ps > 0.0 && window_ps <= slot_ps) {
        return Err(Error::InvalidArgument(format!(
            "window {window_ps} ps must be positive and at most one slot ({slot_ps} ps)"
        )));
    }
    let mut counts = vec![0u64; 2 * side_slots + 1];
    let reach = side_slots as f64 * slot_ps + window_ps / 2.0;
    let stops = stops.timestamps();
    let mut j = 0usize;
    for &t in starts.timestamps() {
        while j < stops.len() && ((stops[j] - t) as f64) < -reach {
            j += 1;
        }
        let mut k = j;
        while k < stops.len() && ((stops[k] - t) as f64) <= reach {
            let d = (stops[k] - t) as f64;
            let offset = (d / slot_ps).round();
            if (d - offset * slot_ps).abs() <= window_ps / 2.0 {
                counts[(offset as i64 + side_slots as i64) as usize] += 1;
            }
            k += 1;
        }
    }
    Ok(SlotCounts {
        slot_ps,
        window_ps,
        side_slots,
        counts,
    })
}
