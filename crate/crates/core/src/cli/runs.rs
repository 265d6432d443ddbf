//! Run orchestration: one directory per run with `timeseries.csv`,
//! optional `snapshots/`, and `manifest.json`.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::constrained::{
    constrained_hamiltonian, constraint_residuals, make_onshell, step_rk4, ConstrainedState,
};
use crate::correspondence::{
    dequantize, integration_constant, kernel_basis, probability_and_phase, quantize, unwrap_phase,
};
use crate::error::{Error, Result};
use crate::field::{
    energy_densities, field_hamiltonian, propagate_spectral_field, step_leapfrog, FieldState,
};
use crate::lattice::{eigendecompose, GridFn, Operator, Spectrum};
use crate::schrodinger::{hamiltonian_h, norm_hprime, propagate_spectral, CrankNicolson, WaveFunction};

use super::config::{check_stability, Integrator, Observable, ScenarioConfig};
use super::output::{DriftTracker, RunDir, RunManifest, Table};
use super::presets::initial_state;

/// Largest relative kernel content of `re Ψ₀` accepted when solving for
/// the integration constant.
pub const DEQUANTIZE_TOL: f64 = 1e-8;
/// Runs abort when the monitored energy exceeds this multiple of its
/// initial value.
pub const BLOWUP_FACTOR: f64 = 10.0;

pub const SNAPSHOT_INDEX: &str = "snapshots.csv";

/// Operator, spectrum and initial wave function of a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub op: Operator,
    pub spectrum: Spectrum,
    pub psi0: WaveFunction,
}

impl Scenario {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        let op = cfg.operator()?;
        let spectrum = eigendecompose(&op)?;
        let psi0 = initial_state(&cfg.initial, &op, &spectrum)?;
        Ok(Self { op, spectrum, psi0 })
    }

    /// Field state at `t = 0` whose image is `psi0`.
    pub fn field0(&self) -> Result<FieldState> {
        dequantize(&self.spectrum, &self.op, &self.psi0, 0.0, DEQUANTIZE_TOL)
    }
}

fn resolve(cfg: &ScenarioConfig, command: &str, allowed: &[Integrator]) -> Result<(ScenarioConfig, Integrator)> {
    let integrator = cfg.integrator_or(allowed[0]);
    if !allowed.contains(&integrator) {
        return Err(Error::Config(format!(
            "integrator `{}` cannot drive {command}",
            integrator.name()
        )));
    }
    let mut resolved = cfg.clone();
    resolved.integrator = Some(integrator);
    Ok((resolved, integrator))
}

struct Snapshots {
    stride: usize,
    steps: usize,
    index: Table,
}

impl Snapshots {
    fn new(stride: usize, steps: usize) -> Self {
        Self {
            stride,
            steps,
            index: Table::new(["step", "t"]),
        }
    }

    fn due(&self, k: usize) -> bool {
        self.stride > 0 && (k.is_multiple_of(self.stride) || k == self.steps)
    }

    fn write(&mut self, run: &mut RunDir, k: usize, t: f64, table: &Table) -> Result<()> {
        run.write_table(&snapshot_path(k), table)?;
        self.index.push(&[k as f64, t]);
        Ok(())
    }

    fn finish(self, run: &mut RunDir) -> Result<()> {
        if self.stride > 0 {
            run.write_table(SNAPSHOT_INDEX, &self.index)?;
        }
        Ok(())
    }
}

pub fn snapshot_path(step: usize) -> String {
    format!("snapshots/snapshot_{step:06}.csv")
}

fn columns_table(names: &[&str], cols: &[&GridFn]) -> Table {
    let mut t = Table::new(names.iter().copied());
    let n = cols[0].len();
    let mut row = vec![0.0; cols.len()];
    for j in 0..n {
        for (r, c) in row.iter_mut().zip(cols) {
            *r = c[j];
        }
        t.push(&row);
    }
    t
}

struct Series {
    table: Table,
    wanted: Vec<Observable>,
}

impl Series {
    fn new(cfg: &ScenarioConfig, available: &[Observable]) -> Self {
        let wanted: Vec<Observable> = available.iter().copied().filter(|o| cfg.output.wants(*o)).collect();
        let mut headers = vec!["t"];
        for o in &wanted {
            match o {
                Observable::NormHprime => headers.push("norm_hprime"),
                Observable::Hamiltonian => headers.push("hamiltonian"),
                Observable::TotalProbability => headers.push("total_probability"),
                Observable::ConstraintResiduals => headers.extend(["constraint_c1", "constraint_c2"]),
            }
        }
        Self {
            table: Table::new(headers),
            wanted,
        }
    }

    fn push(&mut self, t: f64, values: &Observed) {
        let mut row = vec![t];
        for o in &self.wanted {
            match o {
                Observable::NormHprime => row.push(values.norm_hprime),
                Observable::Hamiltonian => row.push(values.hamiltonian),
                Observable::TotalProbability => row.push(values.total_probability),
                Observable::ConstraintResiduals => row.extend(values.constraints),
            }
        }
        self.table.push(&row);
    }
}

#[derive(Debug, Default)]
struct Observed {
    norm_hprime: f64,
    hamiltonian: f64,
    total_probability: f64,
    constraints: [f64; 2],
}

impl Observed {
    fn track(&self, drift: &mut DriftTracker, constrained: bool) {
        drift.observe("norm_hprime", self.norm_hprime);
        drift.observe("hamiltonian", self.hamiltonian);
        drift.observe("total_probability", self.total_probability);
        if constrained {
            // residuals start at zero, so their drift is their maximum
            drift.observe("constraint_c1", self.constraints[0]);
            drift.observe("constraint_c2", self.constraints[1]);
        }
    }
}

fn check_blowup(t: f64, energy: f64, initial: f64) -> Result<()> {
    if initial > 0.0 && energy > BLOWUP_FACTOR * initial || !energy.is_finite() {
        return Err(Error::Blowup {
            time: t,
            energy,
            initial,
        });
    }
    Ok(())
}

fn phase_of(re: &GridFn, im: &GridFn, hbar: f64) -> GridFn {
    unwrap_phase(&im.zip_map(re, |i, r| hbar * i.atan2(r)), hbar)
}

fn finish(run: RunDir, mut manifest: RunManifest, drift: DriftTracker, started: Instant) -> Result<RunManifest> {
    manifest.drift = drift.into_summary();
    manifest.files = run.files().to_vec();
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    run.finish(&manifest)?;
    Ok(manifest)
}

/// Real two-field Schrödinger system, Crank–Nicolson or spectral.
pub fn run_schrodinger(cfg: &ScenarioConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let (resolved, integrator) = resolve(cfg, "run-schrodinger", &[Integrator::CrankNicolson, Integrator::Spectral])?;
    let sc = Scenario::build(cfg)?;
    let op = &sc.op;
    let (dt, steps) = (cfg.dt, cfg.steps()?);
    let cn = match integrator {
        Integrator::CrankNicolson => Some(CrankNicolson::new(op, dt)?),
        _ => None,
    };
    let mut run = RunDir::create(out)?;
    let mut series = Series::new(cfg, &[Observable::NormHprime, Observable::Hamiltonian, Observable::TotalProbability]);
    let mut snaps = Snapshots::new(cfg.output.snapshot_stride, steps);
    let mut drift = DriftTracker::default();
    let grid = op.grid();
    let x = grid.points();
    let hbar = op.hbar();
    let mut psi = sc.psi0.clone();
    let initial = norm_hprime(op, &psi)?;
    for k in 0..=steps {
        let t = k as f64 * dt;
        if k > 0 {
            psi = match &cn {
                Some(cn) => cn.step(&psi)?,
                None => propagate_spectral(&sc.spectrum, &sc.psi0, t)?,
            };
        }
        let nh = norm_hprime(op, &psi)?;
        check_blowup(t, nh, initial)?;
        let obs = Observed {
            norm_hprime: nh,
            hamiltonian: hamiltonian_h(&psi, op)?,
            total_probability: grid.dx() * psi.density().sum(),
            constraints: [0.0; 2],
        };
        obs.track(&mut drift, false);
        series.push(t, &obs);
        if snaps.due(k) {
            let prob = psi.density();
            let phase = phase_of(&psi.re, &psi.im, hbar);
            let table = columns_table(&["x", "re", "im", "P", "S"], &[&x, &psi.re, &psi.im, &prob, &phase]);
            snaps.write(&mut run, k, t, &table)?;
        }
    }
    run.write_table("timeseries.csv", &series.table)?;
    snaps.finish(&mut run)?;
    finish(run, RunManifest::new("run-schrodinger", resolved), drift, started)
}

/// Schrödinger field started from the dequantized initial wave function.
pub fn run_field(cfg: &ScenarioConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let (resolved, integrator) = resolve(cfg, "run-field", &[Integrator::Leapfrog, Integrator::Spectral])?;
    let sc = Scenario::build(cfg)?;
    let op = &sc.op;
    let (dt, steps) = (cfg.dt, cfg.steps()?);
    check_stability(integrator, op, dt)?;
    let mut run = RunDir::create(out)?;
    let mut series = Series::new(cfg, &[Observable::NormHprime, Observable::Hamiltonian, Observable::TotalProbability]);
    let mut snaps = Snapshots::new(cfg.output.snapshot_stride, steps);
    let mut drift = DriftTracker::default();
    let x = op.grid().points();
    let hbar = op.hbar();
    let s0 = sc.field0()?;
    let initial = field_hamiltonian(op, &s0)?;
    let mut s = s0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        if k > 0 {
            s = match integrator {
                Integrator::Leapfrog => step_leapfrog(op, &s, dt)?,
                _ => propagate_spectral_field(&sc.spectrum, &s0, t)?,
            };
        }
        let energy = field_hamiltonian(op, &s)?;
        check_blowup(t, energy, initial)?;
        let psi = quantize(op, &s)?;
        let obs = Observed {
            norm_hprime: norm_hprime(op, &psi)?,
            hamiltonian: energy,
            total_probability: op.grid().dx() * psi.density().sum(),
            constraints: [0.0; 2],
        };
        obs.track(&mut drift, false);
        series.push(t, &obs);
        if snaps.due(k) {
            let (prob, phase) = probability_and_phase(op, &s)?;
            let phase = unwrap_phase(&phase, hbar);
            let e = energy_densities(op, &s)?;
            let table = columns_table(
                &["x", "phi", "p", "P", "S", "E_kinetic", "E_potential", "E"],
                &[&x, &s.phi, &s.p, &prob, &phase, &e.kinetic, &e.potential, &e.total],
            );
            snaps.write(&mut run, k, t, &table)?;
        }
    }
    run.write_table("timeseries.csv", &series.table)?;
    snaps.finish(&mut run)?;
    finish(run, RunManifest::new("run-field", resolved), drift, started)
}

/// Four-field constrained system from on-shell data.
pub fn run_constrained(cfg: &ScenarioConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let (resolved, integrator) = resolve(cfg, "run-constrained", &[Integrator::Rk4, Integrator::Spectral])?;
    let sc = Scenario::build(cfg)?;
    let op = &sc.op;
    let (dt, steps) = (cfg.dt, cfg.steps()?);
    check_stability(integrator, op, dt)?;
    let mut run = RunDir::create(out)?;
    let mut series = Series::new(
        cfg,
        &[
            Observable::NormHprime,
            Observable::Hamiltonian,
            Observable::TotalProbability,
            Observable::ConstraintResiduals,
        ],
    );
    let mut snaps = Snapshots::new(cfg.output.snapshot_stride, steps);
    let mut drift = DriftTracker::default();
    let x = op.grid().points();
    let hbar = op.hbar();
    let f0 = sc.field0()?;
    let mut s = make_onshell(op, &f0.phi, &f0.p, 0.0)?;
    let initial = constrained_hamiltonian(op, &s)?;
    for k in 0..=steps {
        let t = k as f64 * dt;
        if k > 0 {
            s = match integrator {
                Integrator::Rk4 => step_rk4(op, &s, dt)?,
                _ => {
                    let f = propagate_spectral_field(&sc.spectrum, &f0, t)?;
                    make_onshell(op, &f.phi, &f.p, t)?
                }
            };
        }
        let energy = constrained_hamiltonian(op, &s)?;
        check_blowup(t, energy, initial)?;
        let (c1, c2) = constraint_residuals(op, &s)?;
        let prob = s.varphi.component_mul(&s.varphi) + s.p.component_mul(&s.p);
        let total = op.grid().dx() * prob.sum();
        let obs = Observed {
            norm_hprime: total / (2.0 * hbar),
            hamiltonian: energy,
            total_probability: total,
            constraints: [c1.amax(), c2.amax()],
        };
        obs.track(&mut drift, true);
        series.push(t, &obs);
        if snaps.due(k) {
            snaps.write(&mut run, k, t, &constrained_snapshot(&x, &s, hbar, &prob))?;
        }
    }
    run.write_table("timeseries.csv", &series.table)?;
    snaps.finish(&mut run)?;
    finish(run, RunManifest::new("run-constrained", resolved), drift, started)
}

fn constrained_snapshot(x: &GridFn, s: &ConstrainedState, hbar: f64, prob: &GridFn) -> Table {
    let phase = phase_of(&s.varphi, &s.p, hbar);
    let e = prob / (2.0 * hbar);
    columns_table(
        &["x", "phi", "p", "varphi", "pi", "P", "S", "E"],
        &[x, &s.phi, &s.p, &s.varphi, &s.pi, prob, &phase, &e],
    )
}

#[derive(Debug, Serialize)]
struct KernelReport {
    zero_modes: usize,
    kappa_tolerance: f64,
    /// `‖P_ker re Ψ₀‖`, which must vanish for a solution to exist.
    real_part_kernel_content: f64,
    /// `‖P_ker im Ψ₀‖`, the size of the linear drift of `φ`.
    imaginary_part_kernel_content: f64,
}

/// Reconstructs `φ` from the spectral evolution of the initial wave
/// function and records the round-trip error at each output time.
pub fn run_dequantize(cfg: &ScenarioConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let sc = Scenario::build(cfg)?;
    let op = &sc.op;
    let (dt, steps) = (cfg.dt, cfg.steps()?);
    let mut run = RunDir::create(out)?;
    let x = op.grid().points();

    let c = integration_constant(&sc.spectrum, &sc.psi0, DEQUANTIZE_TOL)?;
    run.write_table("constant.csv", &columns_table(&["x", "C"], &[&x, &c]))?;
    let kernel = kernel_basis(&sc.spectrum);
    let g = op.grid();
    let content = |f: &GridFn| g.norm(&(f - kernel.project_out(f))).unwrap_or(f64::NAN);
    run.write_json(
        "kernel.json",
        &KernelReport {
            zero_modes: kernel.len(),
            kappa_tolerance: kernel.tolerance,
            real_part_kernel_content: content(&sc.psi0.re),
            imaginary_part_kernel_content: content(&sc.psi0.im),
        },
    )?;

    let stride = cfg.output.snapshot_stride;
    let mut roundtrip = Table::new(["t", "roundtrip_error"]);
    let mut snaps = Snapshots::new(stride, steps);
    let mut drift = DriftTracker::default();
    for k in 0..=steps {
        if !(k == 0 || k == steps || (stride > 0 && k % stride == 0)) {
            continue;
        }
        let t = k as f64 * dt;
        let psi = propagate_spectral(&sc.spectrum, &sc.psi0, t)?;
        let s = dequantize(&sc.spectrum, op, &sc.psi0, t, DEQUANTIZE_TOL)?;
        let back = quantize(op, &s)?;
        let err = back.max_diff(&psi);
        roundtrip.push(&[t, err]);
        drift.observe("roundtrip_error", err);
        if snaps.due(k) {
            let prob = psi.density();
            let table = columns_table(
                &["x", "phi", "p", "re", "im", "P"],
                &[&x, &s.phi, &s.p, &psi.re, &psi.im, &prob],
            );
            snaps.write(&mut run, k, t, &table)?;
        }
    }
    run.write_table("roundtrip.csv", &roundtrip)?;
    snaps.finish(&mut run)?;
    finish(run, RunManifest::new("dequantize", cfg.clone()), drift, started)
}

/// Eigenvalues (ground state first) and the lowest `modes` eigenvectors.
pub fn run_spectrum(cfg: &ScenarioConfig, out: &Path, modes: usize) -> Result<RunManifest> {
    let started = Instant::now();
    let op = cfg.operator()?;
    let spec = eigendecompose(&op)?;
    let mut run = RunDir::create(out)?;
    let mut values = Table::new(["index", "kappa", "energy"]);
    for k in 0..spec.len() {
        let kappa = spec.eigenvalue(spec.energy_index(k));
        values.push(&[k as f64, kappa, -kappa]);
    }
    run.write_table("eigenvalues.csv", &values)?;
    let modes = modes.min(spec.len());
    let x = op.grid().points();
    let vecs: Vec<GridFn> = (0..modes)
        .map(|k| spec.mode(spec.energy_index(k)).clone_owned())
        .collect();
    let mut names = vec!["x".to_string()];
    names.extend((0..modes).map(|k| format!("mode_{k}")));
    let mut cols = vec![&x];
    cols.extend(vecs.iter());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    run.write_table("eigenvectors.csv", &columns_table(&refs, &cols))?;
    finish(run, RunManifest::new("spectrum", cfg.clone()), DriftTracker::default(), started)
}
