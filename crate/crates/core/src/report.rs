//! CSV and human-readable renderings of experiment results. Number formats
//! are fixed so identical results give identical bytes.

use std::fmt::Write as _;

use crate::experiments::{CarPoint, ChshRun, FringeRun};
use crate::planner::{MaxDistance, PlanReport};

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columns `temperature_C,phase_rad,window_counts,fit_value`.
pub fn fringe_csv(run: &FringeRun) -> String {
    let mut out = String::from(FRINGE_HEADER);
    for p in &run.points {
        let _ = writeln!(
            out,
            "{:.4},{:.6},{},{:.6}",
            p.temperature_c,
            p.phase_rad,
            fmt_count(p.window_counts),
            run.fit.value_at(p.phase_rad)
        );
    }
    out
}

pub const FRINGE_HEADER: &str = "temperature_C,phase_rad,window_counts,fit_value\n";

/// Counts print as integers when they are whole, otherwise with six decimals.
pub fn fmt_count(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.6}")
    }
}

const ROW_LABELS: [&str; 4] = ["d_s/d_i", "d_s/d'_i", "d'_s/d_i", "d'_s/d'_i"];

/// One row per setting pair: the four counts with errors, then `E`.
pub fn chsh_counts_csv(run: &ChshRun) -> String {
    let mut out = String::from(
        "setting,theta_s_rad,theta_i_rad,R,sigma_R,R_i_pi,sigma_R_i_pi,R_s_pi,sigma_R_s_pi,R_s_pi_i_pi,sigma_R_s_pi_i_pi,E,sigma_E\n",
    );
    let counts = run.result.counts.as_ref();
    let nominal = run.settings.rows();
    for (k, label) in ROW_LABELS.iter().enumerate() {
        let (ts, ti) = nominal[k];
        let _ = write!(out, "{label},{ts:.6},{ti:.6}");
        if let Some(c) = counts {
            for cell in &c[k] {
                let _ = write!(out, ",{},{:.4}", fmt_count(cell.value), cell.sigma);
            }
        } else {
            out.push_str(",,,,,,,,");
        }
        let e = run.result.e_values[k];
        let _ = writeln!(out, ",{:.6},{:.6}", e.e, e.sigma);
    }
    out
}

pub fn chsh_summary(run: &ChshRun) -> String {
    let r = &run.result;
    let mut out = String::new();
    for (k, label) in ROW_LABELS.iter().enumerate() {
        let e = r.e_values[k];
        let _ = writeln!(out, "E({label}) = {:+.4} ± {:.4}", e.e, e.sigma);
    }
    let _ = writeln!(out, "S = {:.4} ± {:.4}", r.s, r.sigma_s);
    let _ = writeln!(
        out,
        "violation = {:.2} standard deviations",
        r.significance()
    );
    out
}

pub fn car_csv(points: &[CarPoint]) -> String {
    let mut out =
        String::from("mu,car_analytic,car_montecarlo,matched,unmatched,unmatched_slots\n");
    for p in points {
        let _ = writeln!(
            out,
            "{:e},{:.6e},{},{},{},{}",
            p.mu,
            p.car_analytic,
            opt(p.car_montecarlo.map(|c| format!("{c:.6e}"))),
            opt(p.matched),
            opt(p.unmatched),
            opt(p.unmatched_slots)
        );
    }
    out
}

pub fn plan_csv(r: &PlanReport) -> String {
    let mut out = String::from("distance_km,loss_db,rate_per_hour,duration_hours,duration_days\n");
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{:.3},{:.3},{:.6e},{:.6},{:.6}",
            row.distance_km,
            row.loss_db,
            row.rate_per_hour,
            row.duration_hours,
            row.duration_days()
        );
    }
    out
}

pub fn max_distance_text(r: &PlanReport) -> String {
    match (&r.max_distance, &r.max_distance_error) {
        (Some(MaxDistance::Bounded(l)), _) => format!("{l:.1} km"),
        (Some(MaxDistance::Unbounded), _) => "unbounded".to_string(),
        (None, Some(e)) => format!("unavailable ({e})"),
        (None, None) => "unavailable".to_string(),
    }
}

pub fn plan_table(r: &PlanReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "baseline: {:.2} coincidences/h at {:.1} km, {} counts x {} settings",
        r.baseline.rate_max_per_hour,
        r.baseline.distance_km,
        r.baseline.counts_per_setting,
        r.baseline.n_settings
    );
    let _ = writeln!(
        out,
        "{:>12} {:>10} {:>14} {:>14}",
        "distance_km", "loss_dB", "rate_per_h", "campaign_days"
    );
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{:>12.1} {:>10.2} {:>14.4e} {:>14.3}",
            row.distance_km,
            row.loss_db,
            row.rate_per_hour,
            row.duration_days()
        );
    }
    let _ = writeln!(
        out,
        "max distance ({}): {}",
        r.criterion,
        max_distance_text(r)
    );
    out
}
