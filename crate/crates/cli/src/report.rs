//! Report assembly and output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::model_io::LoadedModel;
use crate::{Args, CliError, EXIT_OK, EXIT_REJECTED};

pub const SCHEMA: &str = "gaplab-report/1";

/// Measured quantity with its tolerance. Non-finite values become strings.
pub fn num(value: f64, tol: f64) -> Value {
    json!({ "value": float(value), "tol": tol })
}

/// Exact count; tolerance zero.
pub fn exact(value: usize) -> Value {
    json!({ "value": value, "tol": 0 })
}

pub fn float(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

#[derive(Default)]
pub struct Timings(BTreeMap<String, f64>);

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.0.entry(stage.to_string()).or_insert(0.0) += t0.elapsed().as_secs_f64();
        out
    }
}

pub struct Outcome {
    pub command: &'static str,
    pub model: Value,
    pub parameters: Value,
    pub stages: Map<String, Value>,
    pub reasons: Vec<String>,
    pub rejected: bool,
    pub timings: Timings,
    /// Extra files for the output directory, by name.
    pub files: Vec<(String, String)>,
    /// Directory used when `--out` is absent and files must be written.
    pub default_dir: Option<&'static str>,
}

impl Outcome {
    pub fn new(command: &'static str, model: &LoadedModel, parameters: Value) -> Self {
        let t = &model.tuple;
        let info = json!({
            "source": model.source,
            "fingerprint": model.fingerprint,
            "n": t.n(),
            "n0": t.n0,
            "kR": t.tetrad.k_r(),
            "kL": t.tetrad.k_l(),
            "bond_dim": t.k(),
        });
        Outcome {
            command,
            model: info,
            parameters,
            stages: Map::new(),
            reasons: vec![],
            rejected: false,
            timings: Timings::default(),
            files: vec![],
            default_dir: None,
        }
    }

    pub fn reject(&mut self, reason: impl Into<String>) {
        self.rejected = true;
        self.reasons.push(reason.into());
    }

    pub fn exit_code(&self) -> u8 {
        if self.rejected {
            EXIT_REJECTED
        } else {
            EXIT_OK
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": SCHEMA,
            "command": self.command,
            "model": self.model,
            "parameters": self.parameters,
            "stages": Value::Object(self.stages.clone()),
            "status": {
                "exit_code": self.exit_code(),
                "outcome": if self.rejected { "rejected" } else { "ok" },
                "reasons": self.reasons,
            },
            "wall_times": self.timings.0,
        })
    }

    /// Prints the report, writes the output directory, and returns the exit code.
    pub fn emit(self, args: &Args) -> Result<u8, CliError> {
        let text = serde_json::to_string_pretty(&self.to_json()).expect("report serialises") + "\n";
        let dir: Option<PathBuf> = args.out.clone().or_else(|| self.default_dir.map(PathBuf::from));
        if let Some(dir) = dir {
            write_file(&dir, "report.json", &text)?;
            for (name, body) in &self.files {
                write_file(&dir, name, body)?;
            }
        }
        print!("{text}");
        if self.rejected {
            eprintln!("gaplab: rejected: {}", self.reasons.join("; "));
        }
        Ok(self.exit_code())
    }
}

pub fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// `index,value` CSV.
pub fn csv<I: IntoIterator<Item = (usize, f64)>>(rows: I) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in rows {
        s.push_str(&format!("{i},{v:.17e}\n"));
    }
    s
}
