use serde::Serialize;

use super::SimError;

/// Cumulative unmet share of final-buyer demand, `δ(t)` for `t = 1..`.
/// `final_shipped[t-1]` is the amount delivered on day `t` against a daily
/// demand of `demand`.
pub fn deficit(final_shipped: &[f64], demand: f64) -> Result<Vec<f64>, SimError> {
    if !(demand > 0.0) {
        return Err(SimError::ZeroDemand);
    }
    let mut missing = 0.0;
    Ok(final_shipped
        .iter()
        .enumerate()
        .map(|(n, &w)| {
            missing += demand - w;
            (missing / ((n + 1) as f64 * demand)).clamp(0.0, 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathUsage {
    pub gamma: f64,
    /// The fully flexible run moves exactly as the rigid one.
    pub degenerate: bool,
}

/// `Γ = Σ|W(φ) − W(0)| / Σ|W(1) − W(0)|` over cumulative ship-out per
/// sub-stock, or 0 with a flag when the denominator vanishes.
pub fn path_usage(phi: &[f64], zero: &[f64], one: &[f64]) -> PathUsage {
    let diff = |a: &[f64]| -> f64 { a.iter().zip(zero).map(|(x, y)| (x - y).abs()).sum() };
    let den = diff(one);
    if den == 0.0 {
        return PathUsage {
            gamma: 0.0,
            degenerate: true,
        };
    }
    PathUsage {
        gamma: diff(phi) / den,
        degenerate: false,
    }
}

/// Days available before the deficit exceeds an acceptable level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Window {
    Days(usize),
    /// Never exceeded within the simulated horizon.
    BeyondHorizon,
}

impl Window {
    /// Days, with the horizon standing in for the sentinel.
    pub fn days_or(self, horizon: usize) -> usize {
        match self {
            Window::Days(d) => d,
            Window::BeyondHorizon => horizon,
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Window::Days(d) => write!(f, "{d}"),
            Window::BeyondHorizon => f.write_str("beyond_horizon"),
        }
    }
}

/// Last day before `δ` first exceeds `asd`; 0 if the first day already does.
pub fn resupply_window(delta: &[f64], asd: f64) -> Result<Window, SimError> {
    if !(asd > 0.0 && asd < 1.0) {
        return Err(SimError::Config(format!("ASD {asd} must lie in (0, 1)")));
    }
    match delta.iter().position(|&d| d > asd) {
        Some(n) => Ok(Window::Days(n)),
        None => Ok(Window::BeyondHorizon),
    }
}
