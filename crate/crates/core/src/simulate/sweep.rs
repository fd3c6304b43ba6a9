use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{Audit, Routing, SimState};
use super::metrics::{deficit, path_usage, resupply_window, Window};
use super::{ShockSpec, SimConfig, SimError, SimSystem};
use crate::tensors::Flexibility;

fn default_grid() -> Vec<f64> {
    (0..=10).map(|n| n as f64 / 10.0).collect()
}
fn default_times() -> Vec<usize> {
    vec![40, 50, 60]
}
fn default_asd() -> Vec<f64> {
    vec![0.02, 0.05, 0.10]
}

/// Which flexibilities to run and where to report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    #[serde(default = "default_times")]
    pub times: Vec<usize>,
    #[serde(default = "default_asd")]
    pub asd: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: default_grid(),
            times: default_times(),
            asd: default_asd(),
        }
    }
}

/// Daily series of one uniform-flexibility run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub phi: f64,
    pub deficit: Vec<f64>,
    pub gamma: Vec<f64>,
    pub final_shipped: Vec<f64>,
    pub shipped_total: Vec<f64>,
    pub audit: Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: usize,
    pub phi: f64,
    pub deficit: f64,
    pub gamma: f64,
    pub delta_reduction: f64,
    /// No smaller flexibility reaches at least the same reduction.
    pub efficient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowRow {
    pub asd: f64,
    pub phi: f64,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub horizon: usize,
    /// One entry per grid value, ascending.
    pub series: Vec<RunSeries>,
    /// The fully flexible run never moved differently from the rigid one.
    pub gamma_degenerate: bool,
    pub rows: Vec<SweepRow>,
    pub windows: Vec<WindowRow>,
}

impl SweepResult {
    pub fn series_at(&self, phi: f64) -> Option<&RunSeries> {
        self.series.iter().find(|s| s.phi == phi)
    }

    /// Flexibility with the lowest deficit at day `t`, smallest on ties.
    pub fn phi_star(&self, t: usize) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for s in &self.series {
            let d = s.deficit[t - 1];
            if d < best.0 {
                best = (d, s.phi);
            }
        }
        best.1
    }

    /// `δ(0, t) − δ(φ, t)`.
    pub fn delta_reduction(&self, phi: f64, t: usize) -> Option<f64> {
        let base = self.series_at(0.0)?;
        Some(base.deficit[t - 1] - self.series_at(phi)?.deficit[t - 1])
    }

    pub fn audits_ok(&self) -> bool {
        self.series.iter().all(|s| s.audit.ok())
    }
}

/// Runs every flexibility in `sweep.grid` side by side so that path usage
/// can be measured every day against the rigid and fully flexible runs.
pub fn sweep_phi(
    system: &SimSystem,
    config: &SimConfig,
    shock: &ShockSpec,
    sweep: &SweepConfig,
) -> Result<SweepResult, SimError> {
    config.validate()?;
    shock.validate()?;
    let horizon = config.horizon;
    if sweep.grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(SimError::Config("flexibility grid must lie in [0, 1]".into()));
    }
    if sweep.times.iter().any(|&t| t == 0 || t > horizon) {
        return Err(SimError::Config(format!("report times must lie in [1, {horizon}]")));
    }
    let mut phis: Vec<f64> = sweep.grid.iter().copied().chain([0.0, 1.0]).collect();
    phis.sort_by(|a, b| a.total_cmp(b));
    phis.dedup();
    let zero = 0;
    let one = phis.len() - 1;

    let routings: Vec<Routing> = phis
        .par_iter()
        .map(|&p| Routing::new(system, &Flexibility::uniform(p)?))
        .collect::<Result<_, _>>()?;
    let mut states: Vec<SimState> = routings
        .par_iter()
        .map(|r| SimState::steady(system, r))
        .collect::<Result<_, _>>()?;

    let mut final_shipped = vec![Vec::with_capacity(horizon); phis.len()];
    let mut shipped_total = vec![Vec::with_capacity(horizon); phis.len()];
    let mut gamma = vec![Vec::with_capacity(horizon); phis.len()];
    let mut degenerate = true;
    for t in 1..=horizon {
        let records: Vec<_> = states
            .par_iter_mut()
            .zip(&routings)
            .map(|(st, r)| {
                if t == shock.t_star.max(1) {
                    st.apply_shock(system, shock);
                }
                st.step(system, r, config)
            })
            .collect();
        let (z, o) = (&states[zero].cum_out, &states[one].cum_out);
        for (n, rec) in records.into_iter().enumerate() {
            final_shipped[n].push(rec.final_shipped);
            shipped_total[n].push(rec.shipped_total);
            let u = path_usage(&states[n].cum_out, z, o);
            degenerate &= u.degenerate;
            gamma[n].push(u.gamma);
        }
    }

    let demand = system.total_demand();
    let base = deficit(&final_shipped[zero], demand)?;
    let mut series = Vec::new();
    for (n, &phi) in phis.iter().enumerate() {
        if !sweep.grid.contains(&phi) {
            continue;
        }
        series.push(RunSeries {
            phi,
            deficit: deficit(&final_shipped[n], demand)?,
            gamma: std::mem::take(&mut gamma[n]),
            final_shipped: std::mem::take(&mut final_shipped[n]),
            shipped_total: std::mem::take(&mut shipped_total[n]),
            audit: states[n].audit,
        });
    }

    let mut rows = Vec::new();
    for &t in &sweep.times {
        let reductions: Vec<f64> = series.iter().map(|s| base[t - 1] - s.deficit[t - 1]).collect();
        for (n, s) in series.iter().enumerate() {
            let efficient = !reductions[..n].iter().any(|&r| r >= reductions[n]);
            rows.push(SweepRow {
                t,
                phi: s.phi,
                deficit: s.deficit[t - 1],
                gamma: s.gamma[t - 1],
                delta_reduction: reductions[n],
                efficient,
            });
        }
    }

    let mut windows = Vec::new();
    for &asd in &sweep.asd {
        for s in &series {
            windows.push(WindowRow {
                asd,
                phi: s.phi,
                window: resupply_window(&s.deficit, asd)?,
            });
        }
    }

    Ok(SweepResult {
        horizon,
        series,
        gamma_degenerate: degenerate,
        rows,
        windows,
    })
}

/// Daily series: `t,phi,deficit,gamma,delta_reduction,shipped_total`.
pub fn write_run_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "phi", "deficit", "gamma", "delta_reduction", "shipped_total"])?;
    let base = result.series_at(0.0).map(|s| s.deficit.clone());
    for s in &result.series {
        for t in 0..s.deficit.len() {
            let reduction = base.as_ref().map(|b| b[t] - s.deficit[t]).unwrap_or(f64::NAN);
            w.write_record([
                (t + 1).to_string(),
                s.phi.to_string(),
                s.deficit[t].to_string(),
                s.gamma[t].to_string(),
                reduction.to_string(),
                s.shipped_total[t].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reduction against path usage at the report times:
/// `t,phi,deficit,gamma,delta_reduction,efficient,phi_star`.
pub fn write_frontier_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "phi", "deficit", "gamma", "delta_reduction", "efficient", "phi_star"])?;
    for r in &result.rows {
        w.write_record([
            r.t.to_string(),
            r.phi.to_string(),
            r.deficit.to_string(),
            r.gamma.to_string(),
            r.delta_reduction.to_string(),
            r.efficient.to_string(),
            result.phi_star(r.t).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `asd,phi,window_days`; the window is `beyond_horizon` when the deficit
/// never exceeds the ASD.
pub fn write_windows_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["asd", "phi", "window_days"])?;
    for r in &result.windows {
        w.write_record([r.asd.to_string(), r.phi.to_string(), r.window.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
