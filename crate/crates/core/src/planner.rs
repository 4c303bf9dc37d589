//! Link budgets, rate-versus-distance scaling, CHSH campaign length and the
//! dark-count-limited reach.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{car, coincidence_rate, optimal_mu, RateModel};
use crate::scenario::{
    db_to_transmittance, transmittance_to_db, ChannelParams, DetectorParams, ExperimentScenario,
    MziParams, ValidatedScenario, PS_PER_HOUR, PS_PER_SECOND,
};

pub const DEFAULT_COUNTS_PER_SETTING: f64 = 100.0;
pub const DEFAULT_N_SETTINGS: usize = 16;

/// Longest total fiber length searched before a criterion is declared
/// unbounded.
const SEARCH_LIMIT_KM: f64 = 1.0e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Fiber,
    Component,
    Analyzer,
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossItem {
    pub label: String,
    pub kind: LossKind,
    pub loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmBudget {
    pub items: Vec<LossItem>,
    /// Product of the linear transmittances of all items.
    pub eta: f64,
}

impl ArmBudget {
    pub fn total_db(&self) -> f64 {
        self.items.iter().map(|i| i.loss_db).sum()
    }

    pub fn fiber_db(&self) -> f64 {
        self.kind_db(LossKind::Fiber)
    }

    /// Everything except fiber and detector.
    pub fn component_db(&self) -> f64 {
        self.kind_db(LossKind::Component) + self.kind_db(LossKind::Analyzer)
    }

    pub fn kind_db(&self, kind: LossKind) -> f64 {
        self.items
            .iter()
            .filter(|i| i.kind == kind)
            .map(|i| i.loss_db)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub signal: ArmBudget,
    pub idler: ArmBudget,
}

impl LinkBudget {
    pub fn eta_s(&self) -> f64 {
        self.signal.eta
    }

    pub fn eta_i(&self) -> f64 {
        self.idler.eta
    }

    /// Fiber loss of both arms together.
    pub fn quantum_channel_db(&self) -> f64 {
        self.signal.fiber_db() + self.idler.fiber_db()
    }

    /// Every item of both arms, detectors included.
    pub fn full_total_db(&self) -> f64 {
        self.signal.total_db() + self.idler.total_db()
    }
}

fn arm_budget(ch: &ChannelParams, mzi: Option<&MziParams>, det: &DetectorParams) -> ArmBudget {
    let mut items = vec![LossItem {
        label: "fiber".to_string(),
        kind: LossKind::Fiber,
        loss_db: ch.fiber_loss_db(),
    }];
    items.extend(ch.excess_losses.iter().map(|l| LossItem {
        label: l.label.clone(),
        kind: LossKind::Component,
        loss_db: l.loss_db,
    }));
    if let Some(m) = mzi {
        items.push(LossItem {
            label: "analyzer".to_string(),
            kind: LossKind::Analyzer,
            loss_db: m.insertion_loss_db,
        });
    }
    items.push(LossItem {
        label: "detector".to_string(),
        kind: LossKind::Detector,
        loss_db: transmittance_to_db(det.efficiency),
    });
    let eta = items
        .iter()
        .map(|i| db_to_transmittance(i.loss_db).unwrap_or(0.0))
        .product();
    ArmBudget { items, eta }
}

pub fn build_link_budget(s: &ValidatedScenario) -> LinkBudget {
    let bypass = s.bypass_interferometers;
    LinkBudget {
        signal: arm_budget(&s.channel_s, (!bypass).then_some(&s.mzi_s), &s.detector_s),
        idler: arm_budget(&s.channel_i, (!bypass).then_some(&s.mzi_i), &s.detector_i),
    }
}

/// A CHSH campaign at a known constructive-phase coincidence rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignPlan {
    /// Coincidences per hour at constructive phases.
    pub rate_max_per_hour: f64,
    /// Total two-arm fiber length the rate refers to.
    pub distance_km: f64,
    pub loss_per_km_db: f64,
    pub counts_per_setting: f64,
    pub n_settings: usize,
    pub calibration_overhead_hours: f64,
    pub duration_hours: f64,
}

impl CampaignPlan {
    pub fn new(rate_max_per_hour: f64, distance_km: f64, loss_per_km_db: f64) -> Self {
        let mut p = Self {
            rate_max_per_hour,
            distance_km,
            loss_per_km_db,
            counts_per_setting: DEFAULT_COUNTS_PER_SETTING,
            n_settings: DEFAULT_N_SETTINGS,
            calibration_overhead_hours: 0.0,
            duration_hours: 0.0,
        };
        p.update_duration();
        p
    }

    /// Baseline at the scenario's own fiber length, from the closed-form rate.
    pub fn from_scenario(s: &ValidatedScenario) -> Self {
        let m = RateModel::from_scenario(s);
        let per_hour = coincidence_rate(0.0, 0.0, &m) * PS_PER_HOUR / PS_PER_SECOND;
        Self::new(per_hour, s.total_fiber_km(), s.channel_s.loss_per_km_db)
    }

    pub fn with_counts(mut self, counts_per_setting: f64, n_settings: usize) -> Self {
        self.counts_per_setting = counts_per_setting;
        self.n_settings = n_settings;
        self.update_duration();
        self
    }

    pub fn with_overhead(mut self, hours: f64) -> Self {
        self.calibration_overhead_hours = hours;
        self.update_duration();
        self
    }

    /// Same campaign at another total distance.
    pub fn at_distance(&self, distance_km: f64) -> Self {
        let mut p = Self {
            rate_max_per_hour: rate_at_distance(self, distance_km),
            distance_km,
            ..self.clone()
        };
        p.update_duration();
        p
    }

    fn update_duration(&mut self) {
        self.duration_hours = chsh_duration(
            self.rate_max_per_hour,
            self.counts_per_setting,
            self.n_settings,
        ) + self.calibration_overhead_hours;
    }
}

/// Coincidences per hour after changing the total fiber length to
/// `distance_km`.
pub fn rate_at_distance(base: &CampaignPlan, distance_km: f64) -> f64 {
    base.rate_max_per_hour
        * 10f64.powf(-base.loss_per_km_db * (distance_km - base.distance_km) / 10.0)
}

/// Hours needed to collect `counts_per_setting` at each of `n_settings`;
/// infinite when the rate is not positive.
pub fn chsh_duration(rate_per_hour: f64, counts_per_setting: f64, n_settings: usize) -> f64 {
    if !(rate_per_hour > 0.0) {
        return f64::INFINITY;
    }
    n_settings as f64 * counts_per_setting / rate_per_hour
}

/// Quality threshold for [`max_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "threshold")]
pub enum Criterion {
    MinCar(f64),
    MinVisibility(f64),
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Criterion::MinCar(x) => write!(f, "CAR >= {x}"),
            Criterion::MinVisibility(x) => write!(f, "V >= {x}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxDistance {
    /// Largest total two-arm fiber length meeting the criterion.
    Bounded(f64),
    /// The criterion holds at every distance.
    Unbounded,
}

/// Best coincidence-to-accidental ratio over μ for the given per-window
/// transmittances and dark probabilities.
pub fn best_car(alpha_s: f64, alpha_i: f64, d_s: f64, d_i: f64) -> Result<f64> {
    match (d_s > 0.0, d_i > 0.0) {
        (false, false) => Ok(f64::INFINITY),
        // supremum at μ → 0
        (false, true) => Ok(1.0 + alpha_s / d_i),
        (true, false) => Ok(1.0 + alpha_i / d_s),
        (true, true) => car(
            optimal_mu(alpha_s, alpha_i, d_s, d_i)?,
            alpha_s,
            alpha_i,
            d_s,
            d_i,
        ),
    }
}

/// Best value of the criterion's metric at total fiber length `distance_km`,
/// with μ chosen to maximize it.
pub fn best_metric(s: &ExperimentScenario, criterion: Criterion, distance_km: f64) -> Result<f64> {
    let scaled = s.clone().with_total_fiber_km(distance_km).validate()?;
    let m = RateModel::from_scenario(&scaled);
    let f = m.analyzer_factor();
    let d_s = m.dark_probability_s();
    let d_i = m.dark_probability_i();
    let c = best_car(m.eta_s * f, m.eta_i * f, d_s, d_i)?;
    Ok(match criterion {
        Criterion::MinCar(_) => c,
        // V = v0·(CAR − 1)/(CAR + 1), maximal where CAR is
        Criterion::MinVisibility(_) if c.is_infinite() => m.v0,
        Criterion::MinVisibility(_) => m.v0 * (c - 1.0) / (c + 1.0),
    })
}

/// Largest total fiber length at which the criterion can still be met.
pub fn max_distance(s: &ValidatedScenario, criterion: Criterion) -> Result<MaxDistance> {
    let threshold = match criterion {
        Criterion::MinCar(x) | Criterion::MinVisibility(x) => x,
    };
    let meets = |l: f64| -> Result<bool> { Ok(best_metric(s, criterion, l)? >= threshold) };
    let at_zero = best_metric(s, criterion, 0.0)?;
    if at_zero < threshold {
        return Err(Error::CriterionUnreachable {
            criterion: criterion.to_string(),
            best: at_zero,
        });
    }
    let mut lo = 0.0;
    let mut hi = 100.0;
    while meets(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > SEARCH_LIMIT_KM {
            return Ok(MaxDistance::Unbounded);
        }
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if meets(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MaxDistance::Bounded(lo))
}

/// Copy of the scenario with both detectors replaced by units of the given
/// efficiency.
pub fn with_detector_efficiency(s: &ExperimentScenario, efficiency: f64) -> ExperimentScenario {
    let mut out = s.clone();
    out.detector_s.efficiency = efficiency;
    out.detector_i.efficiency = efficiency;
    out
}

/// User-supplied secret-key-rate model evaluated on the closed-form rates.
pub trait KeyRateFunction {
    /// Secret bits per second.
    fn bits_per_second(&self, model: &RateModel, budget: &LinkBudget) -> f64;
}

impl<F: Fn(&RateModel, &LinkBudget) -> f64> KeyRateFunction for F {
    fn bits_per_second(&self, model: &RateModel, budget: &LinkBudget) -> f64 {
        self(model, budget)
    }
}

/// `(distance_km, bits/s)` for each total fiber length.
pub fn key_rate_table(
    s: &ExperimentScenario,
    distances_km: &[f64],
    f: &dyn KeyRateFunction,
) -> Result<Vec<(f64, f64)>> {
    distances_km
        .iter()
        .map(|&l| {
            let v = s.clone().with_total_fiber_km(l).validate()?;
            let rate = f.bits_per_second(&RateModel::from_scenario(&v), &build_link_budget(&v));
            Ok((l, rate))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub distance_km: f64,
    /// Two-arm fiber loss.
    pub loss_db: f64,
    pub rate_per_hour: f64,
    pub duration_hours: f64,
}

impl PlanRow {
    pub fn duration_days(&self) -> f64 {
        self.duration_hours / 24.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub baseline: CampaignPlan,
    pub rows: Vec<PlanRow>,
    pub criterion: Criterion,
    pub max_distance: Option<MaxDistance>,
    /// Why `max_distance` is absent, if it is.
    pub max_distance_error: Option<String>,
}

pub fn plan(
    s: &ValidatedScenario,
    distances_km: &[f64],
    criterion: Criterion,
    counts_per_setting: f64,
    n_settings: usize,
) -> PlanReport {
    let baseline = CampaignPlan::from_scenario(s).with_counts(counts_per_setting, n_settings);
    let rows = distances_km
        .iter()
        .map(|&l| {
            let p = baseline.at_distance(l);
            PlanRow {
                distance_km: l,
                loss_db: l * baseline.loss_per_km_db,
                rate_per_hour: p.rate_max_per_hour,
                duration_hours: p.duration_hours,
            }
        })
        .collect();
    let (max_distance, max_distance_error) = match max_distance(s, criterion) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    PlanReport {
        baseline,
        rows,
        criterion,
        max_distance,
        max_distance_error,
    }
}
