//! Convergence studies against the spectral propagator.
//!
//! Each study halves its step `levels − 1` times and fits the log–log
//! slope of the error. The spectral solution is always the reference.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::constrained::{constraint_violation, make_onshell, step_rk4};
use crate::correspondence::current_residual;
use crate::error::{Error, Result};
use crate::field::{propagate_spectral_field, spectral_field_trajectory, step_leapfrog};
use crate::lattice::Boundary;
use crate::schrodinger::{propagate_spectral, schrodinger_residual, spectral_trajectory, CrankNicolson};
use crate::trajectory::{fitted_order, TimeStencil};

use super::config::{InitialSpec, PotentialSpec, ScenarioConfig};
use super::output::{DriftTracker, RunDir, RunManifest, Table};
use super::runs::Scenario;

/// Errors below this are rounding noise and carry no order information.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Serialize)]
pub struct Study {
    pub name: String,
    /// Step (`dt`, or `dx` for paired refinement) per level.
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when the errors sit at rounding level.
    pub order: Option<f64>,
    pub expected: Option<(f64, f64)>,
}

impl Study {
    fn new(name: &str, h: Vec<f64>, errors: Vec<f64>, expected: Option<(f64, f64)>) -> Self {
        let order = errors
            .iter()
            .all(|e| *e > ROUNDOFF_FLOOR)
            .then(|| fitted_order(&h, &errors));
        Self {
            name: name.to_string(),
            h,
            errors,
            order,
            expected,
        }
    }

    /// Whether the fitted order lies in the expected bracket.
    pub fn in_range(&self) -> Option<bool> {
        let (lo, hi) = self.expected?;
        Some(self.order.is_some_and(|p| p >= lo && p <= hi))
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if levels < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            found: levels,
        });
    }
    Ok(())
}

fn steps_for(t_final: f64, dt: f64) -> usize {
    (t_final / dt).round() as usize
}

fn dts(dt0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| dt0 / f64::from(1u32 << k)).collect()
}

pub fn crank_nicolson_study(sc: &Scenario, dt0: f64, levels: usize, t_final: f64) -> Result<Study> {
    check_levels(levels)?;
    let reference = propagate_spectral(&sc.spectrum, &sc.psi0, t_final)?;
    let h = dts(dt0, levels);
    let errors = h
        .iter()
        .map(|&dt| {
            let cn = CrankNicolson::new(&sc.op, dt)?;
            let mut psi = sc.psi0.clone();
            for _ in 0..steps_for(t_final, dt) {
                psi = cn.step(&psi)?;
            }
            Ok(psi.max_diff(&reference))
        })
        .collect::<Result<_>>()?;
    Ok(Study::new("crank_nicolson", h, errors, Some((1.7, 2.3))))
}

pub fn leapfrog_study(sc: &Scenario, dt0: f64, levels: usize, t_final: f64) -> Result<Study> {
    check_levels(levels)?;
    let s0 = sc.field0()?;
    let reference = propagate_spectral_field(&sc.spectrum, &s0, t_final)?;
    let h = dts(dt0, levels);
    let errors = h
        .iter()
        .map(|&dt| {
            let mut s = s0.clone();
            for _ in 0..steps_for(t_final, dt) {
                s = step_leapfrog(&sc.op, &s, dt)?;
            }
            Ok(s.max_diff(&reference))
        })
        .collect::<Result<_>>()?;
    Ok(Study::new("leapfrog", h, errors, Some((1.7, 2.3))))
}

/// RK4 on the four-field system; `ϕ` is compared against `−Kφ` of the
/// spectral field solution.
pub fn rk4_study(sc: &Scenario, dt0: f64, levels: usize, t_final: f64) -> Result<Study> {
    check_levels(levels)?;
    let f0 = sc.field0()?;
    let f = propagate_spectral_field(&sc.spectrum, &f0, t_final)?;
    let reference = make_onshell(&sc.op, &f.phi, &f.p, t_final)?;
    let h = dts(dt0, levels);
    let errors = h
        .iter()
        .map(|&dt| {
            let mut s = make_onshell(&sc.op, &f0.phi, &f0.p, 0.0)?;
            for _ in 0..steps_for(t_final, dt) {
                s = step_rk4(&sc.op, &s, dt)?;
            }
            Ok((&s.phi - &reference.phi)
                .amax()
                .max((&s.p - &reference.p).amax())
                .max((&s.varphi - &reference.varphi).amax()))
        })
        .collect::<Result<_>>()?;
    Ok(Study::new("rk4", h, errors, Some((3.6, 4.4))))
}

/// Worst constraint violation along an RK4 run. The constraints are
/// linear and RK4 preserves linear invariants, so this sits at rounding
/// level and normally has no fitted order.
pub fn constraint_drift_study(sc: &Scenario, dt0: f64, levels: usize, t_final: f64) -> Result<Study> {
    check_levels(levels)?;
    let f0 = sc.field0()?;
    let h = dts(dt0, levels);
    let errors = h
        .iter()
        .map(|&dt| {
            let mut s = make_onshell(&sc.op, &f0.phi, &f0.p, 0.0)?;
            let mut worst = 0.0_f64;
            for _ in 0..steps_for(t_final, dt) {
                s = step_rk4(&sc.op, &s, dt)?;
                worst = worst.max(constraint_violation(&sc.op, &s)?);
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(Study::new("constraint_drift", h, errors, None))
}

/// Central-difference Schrödinger residual of exact spectral samples
/// around `t_final`.
pub fn schrodinger_residual_study(sc: &Scenario, dt0: f64, levels: usize, t_final: f64) -> Result<Study> {
    check_levels(levels)?;
    let h = dts(dt0, levels);
    let errors = h
        .iter()
        .map(|&dt| {
            let start = propagate_spectral(&sc.spectrum, &sc.psi0, t_final - dt)?;
            let traj = spectral_trajectory(&sc.spectrum, &start, dt, 2)?;
            let res = schrodinger_residual(&sc.op, &traj, TimeStencil::Second)?;
            Ok(res.iter().map(|r| r.1).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(Study::new("schrodinger_residual", h, errors, Some((1.7, 2.3))))
}

/// Configuration on a grid refined `level` times, nodes nested.
pub fn refined_config(cfg: &ScenarioConfig, level: u32) -> Result<ScenarioConfig> {
    if matches!(cfg.potential, PotentialSpec::Inline { .. }) || matches!(cfg.initial, InitialSpec::Inline { .. }) {
        return Err(Error::Config("inline potentials or states cannot be refined".into()));
    }
    let mut out = cfg.clone();
    let f = 1usize << level;
    out.grid.n = match cfg.grid.boundary {
        Boundary::Dirichlet => (cfg.grid.n + 1) * f - 1,
        Boundary::Periodic => cfg.grid.n * f,
    };
    out.dt = cfg.dt / f as f64;
    Ok(out)
}

/// Field current-equation residual under paired `(dx, dt)` halving,
/// sampled at `t_final`. `h` records `dx`.
pub fn current_residual_study(cfg: &ScenarioConfig, levels: usize) -> Result<Study> {
    check_levels(levels)?;
    let mut h = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    for level in 0..levels as u32 {
        let c = refined_config(cfg, level)?;
        let sc = Scenario::build(&c)?;
        let s0 = sc.field0()?;
        let start = propagate_spectral_field(&sc.spectrum, &s0, cfg.t_final - c.dt)?;
        let traj = spectral_field_trajectory(&sc.spectrum, &start, c.dt, 2)?;
        h.push(sc.op.grid().dx());
        errors.push(current_residual(&sc.op, &traj)?.max_abs());
    }
    Ok(Study::new("current_residual", h, errors, Some((1.7, f64::INFINITY))))
}

/// All studies for one scenario, starting from its `dt`.
pub fn convergence_studies(cfg: &ScenarioConfig, levels: usize) -> Result<Vec<Study>> {
    let sc = Scenario::build(cfg)?;
    let (dt, t) = (cfg.dt, cfg.t_final);
    Ok(vec![
        crank_nicolson_study(&sc, dt, levels, t)?,
        leapfrog_study(&sc, dt, levels, t)?,
        rk4_study(&sc, dt, levels, t)?,
        schrodinger_residual_study(&sc, dt, levels, t)?,
        current_residual_study(cfg, levels)?,
        constraint_drift_study(&sc, dt, levels, t)?,
    ])
}

/// Writes `convergence.csv` (study, h, error) and `orders.json`.
pub fn run_convergence(cfg: &ScenarioConfig, levels: usize, out: &Path) -> Result<(Vec<Study>, RunManifest)> {
    let started = Instant::now();
    let studies = convergence_studies(cfg, levels)?;
    let mut run = RunDir::create(out)?;
    let mut table = Table::new(["study", "h", "error"]);
    for s in &studies {
        for (h, e) in s.h.iter().zip(&s.errors) {
            table.push_labeled(&s.name, &[*h, *e]);
        }
    }
    run.write_table("convergence.csv", &table)?;
    run.write_json("orders.json", &studies)?;
    let mut manifest = RunManifest::new("convergence", cfg.clone());
    manifest.drift = DriftTracker::default().into_summary();
    manifest.files = run.files().to_vec();
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    run.finish(&manifest)?;
    Ok((studies, manifest))
}
