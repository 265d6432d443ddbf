//! Scenario files: JSON, unknown keys rejected, defaults filled in.

use std::path::Path;

use serde::de::{Deserializer, Error as _};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::constrained::rk4_bound;
use crate::error::{Error, Result};
use crate::field::leapfrog_bound;
use crate::lattice::{Boundary, Grid, Operator};

use super::presets;

fn one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_final() -> f64 {
    1.0
}

fn default_stride() -> usize {
    100
}

fn default_samples() -> usize {
    16
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default = "dirichlet")]
    pub boundary: Boundary,
}

fn dirichlet() -> Boundary {
    Boundary::Dirichlet
}

/// `"harmonic"` is shorthand for `{"preset": "harmonic"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Free,
    /// `½mω²x²`
    Harmonic {
        #[serde(default = "one")]
        omega: f64,
    },
    /// `−depth` on `|x − center| < width/2`, zero elsewhere.
    SquareWell {
        depth: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// `height·exp(−(x − center)²/2width²)`
    GaussianBarrier {
        height: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    Inline {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCoefficient {
    /// Energy ordering, 0 is the ground state.
    pub index: usize,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Initial wave function. `"eigenstate:3"` is shorthand for
/// `{"kind": "eigenstate", "index": 3}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Eigenstate {
        index: usize,
    },
    /// `exp(−(x−center)²/4width² + i·momentum·x/ħ)`, normalized.
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default)]
        momentum: f64,
    },
    Modes {
        modes: Vec<ModeCoefficient>,
    },
    Inline {
        re: Vec<f64>,
        im: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    CrankNicolson,
    Leapfrog,
    Rk4,
    Spectral,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::CrankNicolson => "crank_nicolson",
            Integrator::Leapfrog => "leapfrog",
            Integrator::Rk4 => "rk4",
            Integrator::Spectral => "spectral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    NormHprime,
    Hamiltonian,
    TotalProbability,
    ConstraintResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Time-series columns to write; all of them when absent.
    #[serde(default)]
    pub observables: Option<Vec<Observable>>,
    /// Steps between snapshots; 0 disables them.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            observables: None,
            snapshot_stride: default_stride(),
        }
    }
}

impl OutputSpec {
    pub fn wants(&self, o: Observable) -> bool {
        self.observables.as_ref().is_none_or(|list| list.contains(&o))
    }
}

/// Deliberate corruption of the Dirac structure, for exercising the
/// verification report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Flip the sign of the `{ϕ, p}` and `{p, ϕ}` blocks.
    DiracSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub inject_fault: Option<Fault>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 0,
            tol: default_tol(),
            inject_fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    #[serde(deserialize_with = "potential_shorthand")]
    pub potential: PotentialSpec,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(deserialize_with = "initial_shorthand")]
    pub initial: InitialSpec,
    /// Each run kind has its own default when absent.
    #[serde(default)]
    pub integrator: Option<Integrator>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn potential_shorthand<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PotentialSpec, D::Error> {
    let v = match Value::deserialize(d)? {
        Value::String(name) => json!({ "preset": name }),
        other => other,
    };
    PotentialSpec::deserialize(v).map_err(D::Error::custom)
}

fn initial_shorthand<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<InitialSpec, D::Error> {
    let v = match Value::deserialize(d)? {
        Value::String(s) => {
            let index = s
                .strip_prefix("eigenstate:")
                .and_then(|i| i.parse::<usize>().ok())
                .ok_or_else(|| D::Error::custom(format!("unknown initial state `{s}`")))?;
            json!({ "kind": "eigenstate", "index": index })
        }
        other => other,
    };
    InitialSpec::deserialize(v).map_err(D::Error::custom)
}

/// Reads, parses and validates a scenario file.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg = parse_config_str(&text).map_err(|e| match e {
        Error::Json(e) => Error::Config(format!("{}: {e}", path.display())),
        other => other,
    })?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<Grid> {
        let g = &self.grid;
        Grid::new(g.n, g.x_min, g.x_max, g.boundary)
    }

    pub fn operator(&self) -> Result<Operator> {
        let grid = self.grid()?;
        let potential = presets::potential(&self.potential, &grid, self.mass)?;
        Operator::new(grid, potential, self.hbar, self.mass)
    }

    /// Integrator for a run kind, falling back to that kind's default.
    pub fn integrator_or(&self, default: Integrator) -> Integrator {
        self.integrator.unwrap_or(default)
    }

    /// Number of steps of size `dt` that reach `t_final`.
    pub fn steps(&self) -> Result<usize> {
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::Config(format!(
                "t_final {} is not a multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("hbar", self.hbar), ("mass", self.mass), ("dt", self.dt), ("t_final", self.t_final)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.verify.tol > 0.0) {
            return Err(Error::Config("verify.tol must be positive".into()));
        }
        self.steps()?;
        let op = self.operator()?;
        presets::check_initial(&self.initial, op.len())?;
        if let Some(i) = self.integrator {
            check_stability(i, &op, self.dt)?;
        }
        Ok(())
    }
}

/// Crank–Nicolson and spectral propagation accept any step.
pub fn check_stability(integrator: Integrator, op: &Operator, dt: f64) -> Result<()> {
    let bound = match integrator {
        Integrator::Leapfrog => leapfrog_bound(op),
        Integrator::Rk4 => rk4_bound(op),
        Integrator::CrankNicolson | Integrator::Spectral => return Ok(()),
    };
    if dt >= bound {
        return Err(Error::Unstable { dt, bound });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"n": 50, "x_min": -5, "x_max": 5},
        "potential": "harmonic",
        "initial": "eigenstate:0"
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.hbar, 1.0);
        assert_eq!(cfg.mass, 1.0);
        assert_eq!(cfg.grid.boundary, Boundary::Dirichlet);
        assert_eq!(cfg.potential, PotentialSpec::Harmonic { omega: 1.0 });
        assert_eq!(cfg.initial, InitialSpec::Eigenstate { index: 0 });
        assert_eq!(cfg.integrator, None);
        assert_eq!(cfg.output.snapshot_stride, 100);
        assert_eq!(cfg.steps().unwrap(), 1000);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"initial\"", "\"hbaar\": 2, \"initial\"");
        assert!(matches!(parse_config_str(&bad), Err(Error::Json(_))));
        let bad = MINIMAL.replace("\"harmonic\"", "{\"preset\": \"harmonic\", \"omgea\": 2}");
        assert!(parse_config_str(&bad).is_err());
        let bad = MINIMAL.replace("\"harmonic\"", "\"anharmonic\"");
        let msg = parse_config_str(&bad).unwrap_err().to_string();
        assert!(msg.contains("anharmonic"), "{msg}");
    }

    #[test]
    fn stability_rules() {
        let cn = MINIMAL.replace("\"initial\"", "\"integrator\": \"crank_nicolson\", \"dt\": 0.5, \"t_final\": 1, \"initial\"");
        assert!(parse_config_str(&cn).is_ok());
        let lf = MINIMAL.replace("\"initial\"", "\"integrator\": \"leapfrog\", \"dt\": 0.5, \"t_final\": 1, \"initial\"");
        match parse_config_str(&lf) {
            Err(Error::Unstable { dt, bound }) => {
                assert_eq!(dt, 0.5);
                assert!(bound > 0.0 && bound < 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let msg = parse_config_str("{\n  \"grid\": {\"n\": 5,,}\n}").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("column"), "{msg}");
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_config_str(&text).unwrap(), cfg);
    }
}
