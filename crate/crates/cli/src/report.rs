use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use aciq_core::Error;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::Format;

/// One numerical check with its measured residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckResult {
    /// Passes when `measured <= threshold`; a NaN never passes.
    pub fn below(name: &str, measured: f64, threshold: f64) -> Self {
        CheckResult { name: name.into(), passed: measured <= threshold, measured, threshold, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Config,
    Convergence,
}

/// A run that could not produce a report; exit status 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { kind: FailureKind::Config, check: None, message: message.into(), residual: None }
    }

    pub fn in_check(mut self, name: &str) -> Self {
        self.check.get_or_insert_with(|| name.to_string());
        self
    }

    pub fn to_json(&self) -> String {
        let status = match self.kind {
            FailureKind::Config => "config_error",
            FailureKind::Convergence => "convergence_error",
        };
        let mut v = serde_json::to_value(self).expect("failure serializes");
        v.as_object_mut().expect("object").insert("status".into(), status.into());
        v.to_string()
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let residual = match &e {
            Error::NonConvergent { abs_err, .. } => Some(*abs_err),
            Error::GaugeCondition { residual, .. } => Some(*residual),
            _ => None,
        };
        let kind = if e.is_convergence() { FailureKind::Convergence } else { FailureKind::Config };
        Failure { kind, check: None, message: e.to_string(), residual }
    }
}

/// What a pipeline hands back for output.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<CheckResult>,
    /// Command-specific payload, in insertion order.
    pub data: Map<String, Value>,
    /// Gridded output, used for `--format csv` when present.
    pub grid_csv: Option<String>,
}

impl Outcome {
    pub fn put<T: Serialize>(&mut self, key: &str, value: T) {
        self.data.insert(key.into(), serde_json::to_value(value).expect("report values serialize"));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn document(&self, command: &str) -> Value {
        let mut m = Map::new();
        m.insert("command".into(), command.into());
        m.insert("passed".into(), self.passed().into());
        m.insert("checks".into(), serde_json::to_value(&self.checks).expect("checks serialize"));
        for (k, v) in &self.data {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }

    /// Structured diagnostic for a run whose checks did not all pass.
    pub fn diagnostic(&self) -> String {
        let failed: Vec<Value> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| json!({"check": c.name, "measured": c.measured, "threshold": c.threshold}))
            .collect();
        json!({"status": "check_failed", "failed": failed}).to_string()
    }

    pub fn render(&self, command: &str, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.document(command)).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Csv => match &self.grid_csv {
                Some(csv) => csv.clone(),
                None => flatten_csv(&self.document(command)),
            },
        }
    }
}

fn leaf(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn walk(path: &str, v: &Value, out: &mut String) {
    let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, x)| walk(&join(k), x, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| walk(&join(&i.to_string()), x, out)),
        _ => {
            let _ = writeln!(out, "{},{}", leaf(&Value::String(path.into())), leaf(v));
        }
    }
}

/// `key,value` rows, one per JSON leaf, keys as dotted paths.
pub fn flatten_csv(v: &Value) -> String {
    let mut out = String::from("key,value\n");
    walk("", v, &mut out);
    out
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).and_then(|_| so.flush()).map_err(|e| Failure::config(format!("cannot write stdout: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_names_every_leaf() {
        let v = json!({"a": 1.5, "b": {"c": [1, 2]}, "d": "x,y", "e": null});
        assert_eq!(flatten_csv(&v), "key,value\na,1.5\nb.c.0,1\nb.c.1,2\nd,\"x,y\"\ne,\n");
    }

    #[test]
    fn nan_never_passes() {
        assert!(!CheckResult::below("x", f64::NAN, 1.0).passed);
        assert!(CheckResult::below("x", 1.0, 1.0).passed);
    }

    #[test]
    fn errors_map_to_kinds() {
        let f = Failure::from(Error::NonConvergent { what: "x".into(), estimate_re: 0.0, estimate_im: 0.0, abs_err: 0.5, evals: 10 });
        assert_eq!((f.kind, f.residual), (FailureKind::Convergence, Some(0.5)));
        let f = Failure::from(Error::Config("bad".into())).in_check("flux");
        assert_eq!(f.kind, FailureKind::Config);
        let v: Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(v["check"], "flux");
        assert_eq!(v["status"], "config_error");
    }

    #[test]
    fn document_orders_fields() {
        let mut o = Outcome::default();
        o.checks.push(CheckResult::below("b", 2.0, 1.0));
        o.put("z", 1);
        o.put("a", 2);
        let s = o.render("verify", Format::Json);
        let keys: Vec<usize> = ["\"command\"", "\"passed\"", "\"checks\"", "\"z\"", "\"a\""].iter().map(|k| s.find(k).unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(!o.passed());
        assert!(o.diagnostic().contains("\"check\":\"b\""));
    }
}
