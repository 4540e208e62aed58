//! The JSON run report, its text summary and the quick-look plots.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::artifacts::{self, num, Artifacts, Table, REPORT_FILE};
use crate::config::{Mode, ScenarioConfig};
use crate::svg::{Plot, Series};
use crate::RunError;

pub const SCHEMA: &str = "nlsred-run-report/1";

/// A float that survives JSON: non-finite values are written as the strings
/// `"NaN"`, `"inf"` and `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(x) => Ok(Num(x)),
            Raw::S(s) => match s.as_str() {
                "NaN" => Ok(Num(f64::NAN)),
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&num(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equal,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Below => "<",
            Relation::AtMost => "<=",
            Relation::Above => ">",
            Relation::AtLeast => ">=",
            Relation::Equal => "==",
        })
    }
}

/// One acceptance check. The margin is positive when the check passes with
/// room to spare and negative by the amount it misses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: Num,
    pub relation: Relation,
    pub threshold: Num,
    pub margin: Num,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, relation: Relation, threshold: f64) -> Self {
        let (m, t) = (measured, threshold);
        let (pass, margin) = match relation {
            Relation::Below => (m < t, t - m),
            Relation::AtMost => (m <= t, t - m),
            Relation::Above => (m > t, m - t),
            Relation::AtLeast => (m >= t, m - t),
            Relation::Equal => (m == t, -(m - t).abs()),
        };
        Self {
            name: name.into(),
            pass,
            measured: Num(m),
            relation,
            threshold: Num(t),
            margin: Num(margin),
        }
    }

    pub fn below(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, Relation::Below, threshold)
    }

    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, Relation::AtMost, threshold)
    }

    pub fn above(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, Relation::Above, threshold)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, Relation::AtLeast, threshold)
    }

    pub fn equal(name: impl Into<String>, measured: f64, expected: f64) -> Self {
        Self::new(name, measured, Relation::Equal, expected)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} {} {} (margin {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.relation,
            self.threshold,
            self.margin
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub ok: bool,
    pub message: String,
}

/// Contents of `report.json`. Wall-times are not part of it; they go to
/// `timings.log`, which keeps the report byte-identical between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config_hash: String,
    /// The config as parsed, without its output directory.
    pub config: ScenarioConfig,
    pub mode: Mode,
    pub pass: bool,
    pub stages: Vec<StageStatus>,
    pub checks: Vec<Check>,
    pub values: BTreeMap<String, Num>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(config: &ScenarioConfig, hash: &str) -> Self {
        let mut echo = config.clone();
        echo.run.output_dir = None;
        Self {
            schema: SCHEMA.to_string(),
            config_hash: hash.to_string(),
            mode: config.run.mode,
            config: echo,
            pass: false,
            stages: Vec::new(),
            checks: Vec::new(),
            values: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn value(&mut self, key: impl Into<String>, x: f64) {
        self.values.insert(key.into(), Num(x));
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn stage(&mut self, name: &str, ok: bool, message: impl Into<String>) {
        self.stages.push(StageStatus {
            name: name.to_string(),
            ok,
            message: message.into(),
        });
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).map(|n| n.0)
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Every stage ran and every check passed.
    pub fn finish(&mut self) {
        self.pass = self.stages.iter().all(|s| s.ok) && self.checks.iter().all(|c| c.pass);
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let name = self.config.scenario.name.as_deref().unwrap_or("(unnamed)");
        let _ = writeln!(s, "nlsred run: {name}");
        let _ = writeln!(s, "config hash: {}", self.config_hash);
        let sc = &self.config.scenario;
        let _ = writeln!(s, "n = {}, p = {}, V = {}, K = {}", sc.n, sc.p, sc.v_expr, sc.k_expr);
        let _ = writeln!(
            s,
            "mode: {}, epsilon schedule: {:?}",
            self.mode, self.config.run.epsilon_schedule
        );
        let _ = writeln!(s, "result: {}", if self.pass { "PASS" } else { "FAIL" });
        let _ = writeln!(s, "\nstages:");
        for st in &self.stages {
            let _ = writeln!(s, "  [{}] {}: {}", if st.ok { "ok" } else { "FAILED" }, st.name, st.message);
        }
        let _ = writeln!(s, "\nchecks:");
        for c in &self.checks {
            let _ = writeln!(s, "  {c}");
        }
        let _ = writeln!(s, "\nvalues:");
        for (k, v) in &self.values {
            let _ = writeln!(s, "  {k} = {v}");
        }
        let _ = writeln!(s, "\nartifacts: {}", self.artifacts.join(", "));
        s
    }
}

/// Reads `report.json` from a run directory.
pub fn load(run_dir: &Path) -> Result<RunReport, RunError> {
    let path = run_dir.join(REPORT_FILE);
    if !path.exists() {
        return Err(RunError::Config(format!(
            "{} has no run artifacts; expected {REPORT_FILE} and the CSV files it lists",
            run_dir.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

/// The `report` command: checks the artifacts of a run, then writes
/// `summary.txt` and the SVG quick-look plots. Running it twice gives
/// identical files.
pub fn render(run_dir: &Path) -> Result<RunReport, RunError> {
    let report = load(run_dir)?;
    let missing: Vec<&str> = report
        .artifacts
        .iter()
        .filter(|a| !run_dir.join(a).exists())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(RunError::Config(format!("missing artifacts: {}", missing.join(", "))));
    }
    artifacts::check_consistent(run_dir, &report.config_hash)?;
    let mut out = Artifacts::open(run_dir, &report.config_hash)?;
    let has = |name: &str| report.artifacts.iter().any(|a| a == name);

    if has("profile.csv") {
        let t = Table::read(&run_dir.join("profile.csv"))?;
        let pts = zip(t.column("r")?, t.column("U")?);
        let plot = Plot {
            title: "Ground state".into(),
            x_label: "r".into(),
            y_label: "U(r)".into(),
            series: vec![line("U", pts)],
        };
        out.write_text("profile.svg", &plot.render("profile.csv: r, U", &report.config_hash))?;
    }
    if has("aux_slice.csv") {
        let t = Table::read(&run_dir.join("aux_slice.csv"))?;
        let plot = Plot {
            title: "Auxiliary function A along x1".into(),
            x_label: "x1".into(),
            y_label: "A".into(),
            series: vec![line("A", zip(t.column("x1")?, t.column("A")?))],
        };
        out.write_text("aux_slice.svg", &plot.render("aux_slice.csv: x1, A", &report.config_hash))?;
    }
    if has("reduce.csv") && has("aux_slice.csv") {
        let slice = Table::read(&run_dir.join("aux_slice.csv"))?;
        let samples = Table::read(&run_dir.join("reduce.csv"))?;
        let mut series = vec![line("C1 A(x)", zip(slice.column("x1")?, slice.column("C1_A")?))];
        let eps = samples.column("epsilon")?;
        let x1 = samples.column("x1")?;
        let phi = samples.column("phi")?;
        let off_axis: Vec<f64> = (2..=report.config.scenario.n)
            .map(|i| samples.column(&format!("x{i}")))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(vec![0.0; eps.len()], |acc, col| acc.iter().zip(col).map(|(a, c)| a.max(c.abs())).collect());
        for e in &report.config.run.epsilon_schedule {
            let pts: Vec<(f64, f64)> = (0..eps.len())
                .filter(|&k| eps[k] == *e && off_axis[k] == 0.0)
                .map(|k| (x1[k], phi[k]))
                .collect();
            if !pts.is_empty() {
                series.push(Series {
                    label: format!("Phi, eps = {e}"),
                    points: pts,
                    markers: true,
                });
            }
        }
        let plot = Plot {
            title: "Reduced functional against its leading term".into(),
            x_label: "x1 = eps xi1".into(),
            y_label: "Phi".into(),
            series,
        };
        out.write_text(
            "phi_overlay.svg",
            &plot.render("reduce.csv: x1, phi; aux_slice.csv: x1, C1_A", &report.config_hash),
        )?;
    }
    if has("solution_profiles.csv") {
        let t = Table::read(&run_dir.join("solution_profiles.csv"))?;
        let id = t.column("solution")?;
        let x = t.column("x1")?;
        let u = t.column("u")?;
        let mut ids: Vec<f64> = id.clone();
        ids.dedup();
        let series = ids
            .iter()
            .map(|s| {
                let pts = (0..id.len()).filter(|&k| id[k] == *s).map(|k| (x[k], u[k])).collect();
                line(&format!("solution {s}"), pts)
            })
            .collect();
        let plot = Plot {
            title: "Solutions along x1 through the peak".into(),
            x_label: "x1 (rescaled)".into(),
            y_label: "u".into(),
            series,
        };
        out.write_text(
            "solutions.svg",
            &plot.render("solution_profiles.csv: solution, x1, u", &report.config_hash),
        )?;
    }
    out.write_text("summary.txt", &report.summary())?;
    Ok(report)
}

fn zip(a: Vec<f64>, b: Vec<f64>) -> Vec<(f64, f64)> {
    a.into_iter().zip(b).collect()
}

fn line(label: &str, points: Vec<(f64, f64)>) -> Series {
    Series {
        label: label.to_string(),
        points,
        markers: false,
    }
}
