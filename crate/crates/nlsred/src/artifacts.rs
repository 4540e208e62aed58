//! Writing and checking run artifacts.
//!
//! Every CSV file starts with a comment line `# config_hash: <hex>` followed
//! by a header row. JSON files carry a `config_hash` field and SVG files an
//! XML comment. A directory never holds artifacts of two configs.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::RunError;

pub const HASH_PREFIX: &str = "# config_hash: ";
pub const REPORT_FILE: &str = "report.json";
/// Wall-clock timings. Kept apart from the report so that reports are
/// byte-identical between runs.
pub const TIMINGS_FILE: &str = "timings.log";

/// Formats a float the same way on every run and platform: plain decimal
/// for moderate magnitudes and scientific notation otherwise, both with the
/// shortest representation that reads back exactly.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if (1e-4..1e6).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Reads the config hash recorded in an artifact, if any.
pub fn recorded_hash(path: &Path) -> Result<Option<String>, RunError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "csv" => {
            let file = fs::File::open(path)?;
            let mut first = String::new();
            BufReader::new(file).read_line(&mut first)?;
            Ok(first.trim_end().strip_prefix(HASH_PREFIX).map(str::to_string))
        }
        "json" => {
            let text = fs::read_to_string(path)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            Ok(value.get("config_hash").and_then(|h| h.as_str()).map(str::to_string))
        }
        "svg" => {
            let text = fs::read_to_string(path)?;
            Ok(text
                .lines()
                .find_map(|l| l.trim().strip_prefix("<!-- config_hash: "))
                .and_then(|l| l.strip_suffix(" -->"))
                .map(str::to_string))
        }
        _ => Ok(None),
    }
}

/// Every artifact in `dir` with the hash it records.
pub fn scan(dir: &Path) -> Result<Vec<(PathBuf, Option<String>)>, RunError> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for path in entries {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && matches!(ext, "csv" | "json" | "svg") {
            let hash = recorded_hash(&path)?;
            out.push((path, hash));
        }
    }
    Ok(out)
}

/// Refuses a directory that already holds artifacts of a different config.
pub fn check_consistent(dir: &Path, hash: &str) -> Result<(), RunError> {
    for (path, recorded) in scan(dir)? {
        match recorded {
            Some(h) if h == hash => {}
            Some(h) => {
                return Err(RunError::Config(format!(
                    "{} was written by config {h}, not {hash}; refusing to mix artifacts",
                    path.display()
                )))
            }
            None => {
                return Err(RunError::Config(format!(
                    "{} carries no config hash; refusing to mix artifacts",
                    path.display()
                )))
            }
        }
    }
    Ok(())
}

/// The output directory of one run.
pub struct Artifacts {
    pub dir: PathBuf,
    pub hash: String,
    written: Vec<String>,
}

impl Artifacts {
    /// Creates the directory, after checking it holds nothing from another
    /// config. Artifacts of the same config are overwritten.
    pub fn open(dir: &Path, hash: &str) -> Result<Self, RunError> {
        check_consistent(dir, hash)?;
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        let mut file = fs::File::create(self.path(name))?;
        writeln!(file, "{HASH_PREFIX}{}", self.hash)?;
        let mut w = csv::Writer::from_writer(file);
        let io = |e: csv::Error| RunError::Io(format!("{name}: {e}"));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush()?;
        self.note(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::Io(format!("{name}: {e}")))?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        self.note(name);
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        fs::write(self.path(name), text)?;
        self.note(name);
        Ok(())
    }

    fn note(&mut self, name: &str) {
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
    }
}

/// A CSV artifact read back for plotting.
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, RunError> {
        let bad = |e: String| RunError::Config(format!("{}: {e}", path.display()));
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| bad(e.to_string()))?;
        let header = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect());
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, RunError> {
        let bad = |e: String| RunError::Config(format!("{}: {e}", self.path.display()));
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("no column `{name}`")))?;
        self.rows
            .iter()
            .map(|row| row[j].parse::<f64>().map_err(|e| bad(format!("`{}`: {e}", row[j]))))
            .collect()
    }
}
