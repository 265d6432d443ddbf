//! One JSON verification document per scenario: bracket identities,
//! Hamiltonian forms, and the correspondence identities on the scenario's
//! own initial state.

use std::path::Path;

use serde::Serialize;

use crate::brackets::{
    check_dirac_relations, dirac_flow_check_with, dirac_structure, generalized_hamiltonian_check,
    sector_min_singular_values, Block, BracketMatrix, PhaseLayout, Report,
};
use crate::correspondence::{
    current_residual, dequantize, map_a, map_b, probability_and_phase, quantize,
};
use crate::error::Result;
use crate::field::{energy_densities, propagate_spectral_field, spectral_field_trajectory};
use crate::schrodinger::propagate_spectral;

use super::config::{Fault, ScenarioConfig};
use super::output::RunDir;
use super::runs::{Scenario, DEQUANTIZE_TOL};

/// Relative tolerance for `P = 2ħE`, which holds up to rounding.
pub const PROBABILITY_IDENTITY_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub name: String,
    #[serde(flatten)]
    pub report: Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct Nondegeneracy {
    pub phi_p_min_singular_value: f64,
    pub varphi_p_min_singular_value: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub seed: u64,
    pub sections: Vec<Section>,
    pub nondegeneracy: Nondegeneracy,
    /// Discretization-limited quantities, reported without a verdict.
    pub measurements: Vec<(String, f64)>,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<String> {
        self.sections
            .iter()
            .flat_map(|s| s.report.failed().into_iter().map(move |c| format!("{}.{c}", s.name)))
            .collect()
    }
}

fn inject(jd: &mut BracketMatrix, layout: &PhaseLayout, fault: Fault) {
    match fault {
        Fault::DiracSign => {
            let n = layout.n();
            let (v, p) = (layout.offset(Block::Varphi), layout.offset(Block::P));
            for (r, c) in [(v, p), (p, v)] {
                let mut block = jd.j.view_mut((r, c), (n, n));
                block.neg_mut();
            }
        }
    }
}

/// Runs every check; `seed` drives the randomized batches.
pub fn run_verify(cfg: &ScenarioConfig, seed: u64) -> Result<VerifyReport> {
    let sc = Scenario::build(cfg)?;
    let op = &sc.op;
    let layout = PhaseLayout::for_operator(op);
    let tol = cfg.verify.tol;
    let samples = cfg.verify.samples;

    let mut jd = dirac_structure(op, &layout)?;
    if let Some(fault) = cfg.verify.inject_fault {
        inject(&mut jd, &layout, fault);
    }
    let mut sections = vec![
        Section {
            name: "dirac_relations".into(),
            report: check_dirac_relations(&jd, op, &layout, tol)?,
        },
        Section {
            name: "generalized_hamiltonian".into(),
            report: generalized_hamiltonian_check(op, &layout, tol, samples, seed)?,
        },
        Section {
            name: "dirac_flow".into(),
            report: dirac_flow_check_with(&jd, op, &layout, tol, samples, seed.wrapping_add(1))?,
        },
    ];

    let (s_phi, s_varphi) = sector_min_singular_values(&jd, &layout);
    let status = if sc.spectrum.zero_modes().is_empty() {
        "positive"
    } else {
        "measured, zero mode present"
    };

    let mut corr = Report::default();
    let hbar = op.hbar();
    let t = cfg.t_final;
    let s0 = sc.field0()?;
    let st = propagate_spectral_field(&sc.spectrum, &s0, t)?;
    let mut worst = 0.0_f64;
    for s in [&s0, &st] {
        let (prob, _) = probability_and_phase(op, s)?;
        let e = energy_densities(op, s)?.total;
        worst = worst.max((&prob - e * (2.0 * hbar)).amax() / prob.amax().max(f64::MIN_POSITIVE));
    }
    corr.record("probability_equals_2hbar_energy", worst, PROBABILITY_IDENTITY_TOL, 1.0);

    let psi_t = propagate_spectral(&sc.spectrum, &sc.psi0, t)?;
    let image = map_b(op, &map_a(op, &psi_t)?)?;
    let k = op.matrix();
    let want_re = -(&k * &psi_t.re);
    let want_im = -(&k * &psi_t.im);
    let err = (&image.re - &want_re).amax().max((&image.im - &want_im).amax());
    corr.record("map_b_after_map_a_is_minus_k", err, tol, want_re.amax().max(want_im.amax()));

    let q = quantize(op, &st)?;
    corr.record("quantize_commutes_with_evolution", q.max_diff(&psi_t), tol, psi_t.max_modulus());

    let back = quantize(op, &dequantize(&sc.spectrum, op, &sc.psi0, t, DEQUANTIZE_TOL)?)?;
    corr.record("dequantize_round_trip", back.max_diff(&psi_t), tol, psi_t.max_modulus());
    sections.push(Section {
        name: "correspondence".into(),
        report: corr,
    });

    let traj = spectral_field_trajectory(&sc.spectrum, &s0, cfg.dt, 2)?;
    let measurements = vec![("current_residual_max".to_string(), current_residual(op, &traj)?.max_abs())];

    let passed = sections.iter().all(|s| s.report.all_passed());
    Ok(VerifyReport {
        passed,
        seed,
        sections,
        nondegeneracy: Nondegeneracy {
            phi_p_min_singular_value: s_phi,
            varphi_p_min_singular_value: s_varphi,
            status: status.to_string(),
        },
        measurements,
    })
}

/// Writes `report.json` into `out`.
pub fn write_report(report: &VerifyReport, out: &Path) -> Result<()> {
    let mut run = RunDir::create(out)?;
    run.write_json("report.json", report)
}
