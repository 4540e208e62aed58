//! Scenario files.
//!
//! A scenario is a small TOML document with three sections:
//!
//! ```toml
//! [scenario]
//! n = 1
//! p = 3.0
//! V_expr = "0.3*(x1^2-1)^2*exp(-x1^2/4)"
//! K_expr = "1"
//!
//! [box]
//! half_width = 2.0      # computational box [-R, R]^n in rescaled units
//! samples = 201         # hypothesis sampling points per axis
//!
//! [run]
//! mode = "experiment"   # profile | landscape | reduce | solve | experiment
//! epsilon_schedule = [0.05]
//! output_dir = "out/double-well"
//! ```
//!
//! See the README for the optional keys.

use std::fmt;
use std::path::{Path, PathBuf};

use nlsred_core::ansatz::Resolution;
use nlsred_core::landscape::{Region, Topology};
use nlsred_core::profile::check_exponent;
use nlsred_core::scenario::{HypothesisReport, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Profile,
    Landscape,
    Reduce,
    Solve,
    Experiment,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Profile => "profile",
            Mode::Landscape => "landscape",
            Mode::Reduce => "reduce",
            Mode::Solve => "solve",
            Mode::Experiment => "experiment",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub name: Option<String>,
    pub n: usize,
    pub p: f64,
    #[serde(rename = "V_expr")]
    pub v_expr: String,
    #[serde(rename = "K_expr")]
    pub k_expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub half_width: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Grid spacing of the reduction windows; defaults depend on n.
    #[serde(default)]
    pub h: Option<f64>,
    /// Stencil order of the reduction windows.
    #[serde(default)]
    pub order: Option<usize>,
}

fn default_samples() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub epsilon_schedule: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub topology_tag: Option<String>,
    /// Half-width of the neighbourhood in the sublevel sandwich check.
    #[serde(default)]
    pub delta: Option<f64>,
    /// The critical set X of the sandwich check, in rescaled coordinates.
    #[serde(default)]
    pub sandwich_set: Option<Vec<Vec<f64>>>,
    /// X is a set of maxima of A rather than minima.
    #[serde(default)]
    pub sandwich_maximum: bool,
    /// Rescaled sample points for `reduce`, or seeds for `solve`.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    /// When present the experiment must find exactly this many solutions.
    #[serde(default)]
    pub expected_solutions: Option<usize>,
    /// Seeds per axis of the critical-point search of A.
    #[serde(default)]
    pub seed_mesh: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    #[serde(rename = "box")]
    pub domain: BoxSection,
    pub run: RunSection,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form of everything that affects results.
    /// The output directory is left out, so a run can be relocated.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Parses the expressions, checks the exponent and samples the hypotheses
    /// on the box. Nothing runs before this succeeds.
    pub fn validate(&self) -> Result<Validated, RunError> {
        let sc = &self.scenario;
        let bad = |m: String| Err(RunError::Config(m));
        if !(1..=3).contains(&sc.n) {
            return bad(format!("n = {} must be 1, 2 or 3", sc.n));
        }
        check_exponent(sc.n, sc.p).map_err(|e| RunError::Config(e.to_string()))?;
        let v = nlsred_core::ScalarFieldExpr::parse(&sc.v_expr, sc.n)
            .map_err(|e| RunError::Config(format!("V_expr: {e}")))?;
        let k = nlsred_core::ScalarFieldExpr::parse(&sc.k_expr, sc.n)
            .map_err(|e| RunError::Config(format!("K_expr: {e}")))?;
        let profile = nlsred_core::RadialProfile::ground_state(sc.n, sc.p).map_err(|e| RunError::Numerical(e.to_string()))?;
        let scenario = Scenario::with_profile(v, k, profile).map_err(|e| RunError::Config(e.to_string()))?;

        let b = &self.domain;
        if !(b.half_width > 0.0 && b.half_width.is_finite()) {
            return bad(format!("box half_width = {} must be positive", b.half_width));
        }
        if b.samples < 2 {
            return bad(format!("box samples = {} must be at least 2", b.samples));
        }
        let hypotheses = scenario
            .check_hypotheses(b.half_width, b.samples)
            .map_err(|e| RunError::Config(e.to_string()))?;
        let mut resolution = Resolution::default_for(sc.n);
        if let Some(h) = b.h {
            if !(h > 0.0) {
                return bad(format!("box h = {h} must be positive"));
            }
            resolution.h = h;
        }
        if let Some(order) = b.order {
            if ![2, 4, 6, 8].contains(&order) {
                return bad(format!("box order = {order} must be 2, 4, 6 or 8"));
            }
            resolution.order = order;
        }
        let region = Region::cube(sc.n, b.half_width).map_err(|e| RunError::Config(e.to_string()))?;

        let r = &self.run;
        if r.epsilon_schedule.is_empty() {
            return bad("epsilon_schedule is empty".into());
        }
        if r.epsilon_schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad(format!("epsilon_schedule {:?} must lie in (0, 1)", r.epsilon_schedule));
        }
        if r.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("epsilon_schedule {:?} must be strictly decreasing", r.epsilon_schedule));
        }
        let topology = match &r.topology_tag {
            Some(tag) => Some(Topology::parse(tag).map_err(|e| RunError::Config(e.to_string()))?),
            None => None,
        };
        if let Some(delta) = r.delta {
            if !(delta > 0.0) {
                return bad(format!("delta = {delta} must be positive"));
            }
        }
        if r.sandwich_set.is_some() && r.delta.is_none() {
            return bad("sandwich_set needs delta".into());
        }
        let in_box = |pts: &Option<Vec<Vec<f64>>>, key: &str| -> Result<(), RunError> {
            for x in pts.iter().flatten() {
                if x.len() != sc.n || x.iter().any(|c| !(c.abs() <= b.half_width)) {
                    return Err(RunError::Config(format!("{key}: point {x:?} is not in the box of ℝ^{}", sc.n)));
                }
            }
            Ok(())
        };
        in_box(&r.sandwich_set, "sandwich_set")?;
        in_box(&r.points, "points")?;
        if r.points.as_ref().is_some_and(|p| p.is_empty()) {
            return bad("points is empty".into());
        }
        if r.seed_mesh == Some(0) {
            return bad("seed_mesh must be positive".into());
        }
        Ok(Validated {
            scenario,
            region,
            resolution,
            topology,
            hypotheses,
        })
    }
}

/// A config that passed validation, with its numerical objects built.
pub struct Validated {
    pub scenario: Scenario,
    pub region: Region,
    pub resolution: Resolution,
    pub topology: Option<Topology>,
    pub hypotheses: HypothesisReport,
}
