//! Least-squares fit of `r0·(1 + v·cos(θ + φ0))`.
//!
//! The model is linear in `a + b·cos θ + c·sin θ`, so the fit is a 3×3
//! normal-equation solve followed by a change of variables.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{temperature_to_phase, wrap_phase, MziParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Weight each point by `1/max(count, 1)`. Off by default.
    pub weighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub r0: f64,
    /// Visibility clamped to `[0, 1]`.
    pub v: f64,
    pub v_unclamped: f64,
    pub phi0: f64,
    pub sigma_r0: f64,
    pub sigma_v: f64,
    pub sigma_phi0: f64,
    pub residual_rms: f64,
    pub n_points: usize,
}

impl FringeFit {
    /// Fitted counts at phase `theta`.
    pub fn value_at(&self, theta: f64) -> f64 {
        self.r0 * (1.0 + self.v_unclamped * (theta + self.phi0).cos())
    }

    /// `dR/dθ` of the fitted curve.
    pub fn slope_at(&self, theta: f64) -> f64 {
        -self.r0 * self.v_unclamped * (theta + self.phi0).sin()
    }
}

/// Largest arc of the circle not covered by the settings, radians.
fn largest_gap(phases: &[f64]) -> f64 {
    let mut p: Vec<f64> = phases.iter().map(|x| x.rem_euclid(TAU)).collect();
    p.sort_by(f64::total_cmp);
    let mut gap = TAU - (p[p.len() - 1] - p[0]);
    for w in p.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap
}

fn distinct_count(phases: &[f64]) -> usize {
    let mut p: Vec<f64> = phases.iter().map(|x| x.rem_euclid(TAU)).collect();
    p.sort_by(f64::total_cmp);
    p.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    p.len()
}

pub fn fit_fringe(phases: &[f64], counts: &[f64], opts: FitOptions) -> Result<FringeFit> {
    if phases.len() != counts.len() {
        return Err(Error::Fringe(format!(
            "{} settings but {} counts",
            phases.len(),
            counts.len()
        )));
    }
    if let Some(bad) = phases.iter().chain(counts).find(|x| !x.is_finite()) {
        return Err(Error::Fringe(format!("non-finite input {bad}")));
    }
    let distinct = if phases.is_empty() {
        0
    } else {
        distinct_count(phases)
    };
    if distinct < 4 {
        return Err(Error::Fringe(format!(
            "need at least 4 distinct settings, got {distinct}"
        )));
    }
    let span = TAU - largest_gap(phases);
    if span <= PI {
        return Err(Error::Fringe(format!(
            "settings span {span:.4} rad, need more than pi"
        )));
    }

    let weight = |y: f64| if opts.weighted { 1.0 / y.max(1.0) } else { 1.0 };
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for (&th, &y) in phases.iter().zip(counts) {
        let x = Vector3::new(1.0, th.cos(), th.sin());
        let w = weight(y);
        xtx += w * x * x.transpose();
        xty += w * y * x;
    }
    let inv = xtx.try_inverse().ok_or_else(|| {
        Error::Fringe(format!(
            "singular normal matrix, det = {:e}",
            xtx.determinant()
        ))
    })?;
    let beta = inv * xty;
    let (a, b, c) = (beta[0], beta[1], beta[2]);

    let mut rss = 0.0;
    let mut plain_rss = 0.0;
    for (&th, &y) in phases.iter().zip(counts) {
        let r = y - (a + b * th.cos() + c * th.sin());
        rss += weight(y) * r * r;
        plain_rss += r * r;
    }
    let n = phases.len();
    let dof = (n - 3) as f64;
    let cov = inv * (rss / dof);

    let amp = b.hypot(c);
    let v_unclamped = if a != 0.0 { amp / a } else { f64::NAN };
    if !v_unclamped.is_finite() {
        return Err(Error::Fringe(format!(
            "mean level {a} leaves visibility undefined"
        )));
    }
    let phi0 = wrap_phase((-c).atan2(b));

    let propagate = |g: Vector3<f64>| (g.transpose() * cov * g)[0].max(0.0).sqrt();
    let sigma_r0 = propagate(Vector3::new(1.0, 0.0, 0.0));
    let (sigma_v, sigma_phi0) = if amp > 0.0 {
        let gv = Vector3::new(-amp / (a * a), b / (amp * a), c / (amp * a));
        let gp = Vector3::new(0.0, c / (amp * amp), -b / (amp * amp));
        (propagate(gv), propagate(gp))
    } else {
        // phase is undefined for a flat fringe
        ((cov[(1, 1)] + cov[(2, 2)]).max(0.0).sqrt() / a.abs(), PI)
    };

    Ok(FringeFit {
        r0: a,
        v: v_unclamped.clamp(0.0, 1.0),
        v_unclamped,
        phi0,
        sigma_r0,
        sigma_v,
        sigma_phi0,
        residual_rms: (plain_rss / n as f64).sqrt(),
        n_points: n,
    })
}

/// Fit against analyzer temperatures, converted to phases through `mzi`.
pub fn fit_fringe_temperatures(
    temperatures_c: &[f64],
    counts: &[f64],
    mzi: &MziParams,
    opts: FitOptions,
) -> Result<FringeFit> {
    let phases: Vec<f64> = temperatures_c
        .iter()
        .map(|&t| temperature_to_phase(t, mzi))
        .collect();
    fit_fringe(&phases, counts, opts)
}
