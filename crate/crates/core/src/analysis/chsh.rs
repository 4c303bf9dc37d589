//! CHSH correlation estimators and count-error propagation.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A count (or rate) with its one-sigma error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Count {
    pub value: f64,
    pub sigma: f64,
}

impl Count {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    /// Pure counting error, `√R`.
    pub fn poisson(value: f64) -> Self {
        Self::new(value, value.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub e: f64,
    pub sigma: f64,
}

impl Correlation {
    pub fn new(e: f64, sigma: f64) -> Self {
        Self { e, sigma }
    }
}

/// `σ_R = √(R + (dR/dθ · σ_θ)²)` with the two analyzers' setting errors
/// added in quadrature.
pub fn count_sigma(r: f64, slope: f64, sigma_theta_s: f64, sigma_theta_i: f64) -> f64 {
    let sigma_theta = sigma_theta_s.hypot(sigma_theta_i);
    (r.max(0.0) + (slope * sigma_theta).powi(2)).sqrt()
}

/// `E = (R₁ − R₂ − R₃ + R₄) / ΣR` for counts in the order
/// `(θs, θi)`, `(θs, θi+π)`, `(θs+π, θi)`, `(θs+π, θi+π)`.
pub fn chsh_e(r: [Count; 4]) -> Result<Correlation> {
    if let Some(bad) = r.iter().find(|c| !(c.value >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "counts must be non-negative, got {}",
            bad.value
        )));
    }
    let total: f64 = r.iter().map(|c| c.value).sum();
    if total <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    let num = r[0].value - r[1].value - r[2].value + r[3].value;
    let e = num / total;
    // dE/dR_k = (sign_k − E) / ΣR
    let signs = [1.0, -1.0, -1.0, 1.0];
    let var: f64 = r
        .iter()
        .zip(signs)
        .map(|(c, s)| ((s - e) / total * c.sigma).powi(2))
        .sum();
    Ok(Correlation::new(e, var.sqrt()))
}

/// Analyzer reference phases and the four CHSH settings derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub theta_s0: f64,
    pub theta_i0: f64,
}

impl ChshSettings {
    pub fn new(theta_s0: f64, theta_i0: f64) -> Self {
        Self { theta_s0, theta_i0 }
    }

    pub fn d_s(&self) -> f64 {
        self.theta_s0
    }

    pub fn d_s_prime(&self) -> f64 {
        self.theta_s0 + FRAC_PI_2
    }

    pub fn d_i(&self) -> f64 {
        self.theta_i0 + FRAC_PI_4
    }

    pub fn d_i_prime(&self) -> f64 {
        self.theta_i0 - FRAC_PI_4
    }

    /// Nominal `(θs, θi)` in the order `(d_s,d_i)`, `(d_s,d'_i)`,
    /// `(d'_s,d_i)`, `(d'_s,d'_i)`.
    pub fn rows(&self) -> [(f64, f64); 4] {
        [
            (self.d_s(), self.d_i()),
            (self.d_s(), self.d_i_prime()),
            (self.d_s_prime(), self.d_i()),
            (self.d_s_prime(), self.d_i_prime()),
        ]
    }

    /// All sixteen nominal settings; row `k` holds [`Self::rows`]`[k]` with
    /// the `+π` shifts in [`chsh_e`] order.
    pub fn grid(&self) -> [[(f64, f64); 4]; 4] {
        self.rows()
            .map(|(s, i)| [(s, i), (s, i + PI), (s + PI, i), (s + PI, i + PI)])
    }

    /// Analyzer phases actually applied for a nominal setting. The idler
    /// offset from `θi0` is applied with reversed sign: the rate depends on
    /// `θs + θi`, and only this orientation gives the table's sign pattern
    /// `(+, +, +, −)`.
    pub fn applied_phases(&self, theta_s: f64, theta_i: f64) -> (f64, f64) {
        (theta_s, 2.0 * self.theta_i0 - theta_i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub e_values: [Correlation; 4],
    pub s: f64,
    pub sigma_s: f64,
    pub counts: Option<[[Count; 4]; 4]>,
}

impl ChshResult {
    /// Standard deviations by which `|S|` exceeds the local bound 2.
    pub fn significance(&self) -> f64 {
        (self.s.abs() - 2.0) / self.sigma_s
    }

    pub fn from_counts(table: [[Count; 4]; 4]) -> Result<Self> {
        let mut e = [Correlation::new(0.0, 0.0); 4];
        for (k, row) in table.iter().enumerate() {
            e[k] = chsh_e(*row)?;
        }
        let mut r = chsh_s(e);
        r.counts = Some(table);
        Ok(r)
    }
}

/// `S = E₁ + E₂ + E₃ − E₄`, `σ_S² = Σ σ_E²`.
pub fn chsh_s(e: [Correlation; 4]) -> ChshResult {
    let s = e[0].e + e[1].e + e[2].e - e[3].e;
    let sigma_s = e.iter().map(|c| c.sigma * c.sigma).sum::<f64>().sqrt();
    ChshResult {
        e_values: e,
        s,
        sigma_s,
        counts: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(v: [f64; 4]) -> [Count; 4] {
        v.map(Count::poisson)
    }

    #[test]
    fn table_rows() {
        let e1 = chsh_e(plain([158.0, 44.0, 27.0, 163.0])).unwrap();
        assert!((e1.e - 0.6378).abs() < 1e-4);
        let e4 = chsh_e(plain([37.0, 167.0, 168.0, 41.0])).unwrap();
        assert!((e4.e + 0.6223).abs() < 1e-4);
        assert_eq!(chsh_e(plain([5.0; 4])).unwrap().e, 0.0);
        assert!(matches!(
            chsh_e(plain([0.0; 4])),
            Err(Error::UndefinedCorrelation)
        ));
        assert!(chsh_e(plain([-1.0, 1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn count_sigma_limits() {
        assert!((count_sigma(158.0, 0.0, 0.0, 0.0) - 12.5698).abs() < 1e-4);
        assert_eq!(count_sigma(0.0, 100.0, 0.3, 0.4), 50.0);
    }

    #[test]
    fn settings_offsets() {
        let c = ChshSettings::new(0.2, -0.1);
        assert_eq!(c.d_s(), 0.2);
        assert_eq!(c.d_s_prime(), 0.2 + FRAC_PI_2);
        assert_eq!(c.d_i(), -0.1 + FRAC_PI_4);
        assert_eq!(c.d_i_prime(), -0.1 - FRAC_PI_4);
    }

    fn analytic_s(v: f64, settings: ChshSettings) -> f64 {
        let grid = settings.grid();
        let table = grid.map(|row| {
            row.map(|(s, i)| {
                let (a, b) = settings.applied_phases(s, i);
                Count::poisson(50.0 * (1.0 + v * (a + b).cos()))
            })
        });
        ChshResult::from_counts(table).unwrap().s
    }

    #[test]
    fn analytic_fringe_gives_quantum_value() {
        let root8 = 8f64.sqrt();
        assert!((analytic_s(1.0, ChshSettings::new(0.0, 0.0)) - root8).abs() < 1e-9);
        assert!((analytic_s(0.84, ChshSettings::new(1.1, -1.1)) - 2.376).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn e_bounded(r in prop::array::uniform4(0.0f64..1e6)) {
            prop_assume!(r.iter().sum::<f64>() > 0.0);
            let e = chsh_e(plain(r)).unwrap().e;
            prop_assert!((-1.0..=1.0).contains(&e));
        }

        #[test]
        fn e_scale_invariant(r in prop::array::uniform4(0.0f64..1e6), lambda in 1e-3f64..1e3) {
            prop_assume!(r.iter().sum::<f64>() > 0.0);
            let a = chsh_e(plain(r)).unwrap().e;
            let b = chsh_e(plain(r.map(|x| x * lambda))).unwrap().e;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn s_is_root8_v(v in 0.0f64..=1.0, s0 in -3.0f64..3.0) {
            // analyzers at a constructive reference: θs0 + θi0 = 0
            let s = analytic_s(v, ChshSettings::new(s0, -s0));
            prop_assert!((s - 8f64.sqrt() * v).abs() < 1e-9);
        }
    }
}
