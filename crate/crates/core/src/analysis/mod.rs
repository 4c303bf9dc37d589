//! Fringe fitting and CHSH estimators.

mod chsh;
mod fringe;

pub use chsh::{chsh_e, chsh_s, count_sigma, ChshResult, ChshSettings, Correlation, Count};
pub use fringe::{fit_fringe, fit_fringe_temperatures, FitOptions, FringeFit};
