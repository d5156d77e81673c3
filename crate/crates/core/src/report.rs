//! Machine-readable report envelope shared by all commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, UneError};

pub const TOOL: &str = "une";

/// Every report carries the command, its full configuration, the seed and the
/// SHA-256 of each input file, next to the command-specific `result`.
/// Keys serialize in sorted order and no wall-clock data is included, so equal
/// inputs give byte-identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    /// input path -> hex SHA-256
    pub inputs: BTreeMap<String, String>,
    pub result: Value,
}

impl ReportEnvelope {
    pub fn new(command: &str, config: impl Serialize, seed: Option<u64>, result: impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: BTreeMap::new(),
            result: serde_json::to_value(result)?,
        })
    }

    pub fn with_input(mut self, label: impl Into<String>, sha256: impl Into<String>) -> Self {
        self.inputs.insert(label.into(), sha256.into());
        self
    }

    /// Pretty JSON with recursively sorted keys and a trailing newline.
    pub fn to_canonical_json(&self) -> Result<String> {
        // serde_json::Value maps are BTreeMaps, which sorts keys at every level.
        let v = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_canonical_json()?).map_err(|e| UneError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| UneError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Model label for tabular output: `config.model`, else `config.src -> config.dst`, else `-`.
    pub fn model_label(&self) -> String {
        let get = |k: &str| self.config.get(k).and_then(Value::as_str).map(str::to_string);
        if let Some(m) = get("model") {
            return m;
        }
        match (get("src_model"), get("dst_model")) {
            (Some(s), Some(d)) => format!("{s}->{d}"),
            _ => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub table: String,
    pub model: String,
    pub metric: String,
    pub value: f64,
}

/// Flattens every numeric leaf of `result` into a long-format row; the metric
/// name is the dotted JSON path, with array positions as indices unless the
/// element has a `name` or `k` field.
pub fn metric_rows(report: &ReportEnvelope) -> Vec<MetricRow> {
    let mut out = Vec::new();
    let model = report.model_label();
    flatten(&report.result, String::new(), &mut |metric, value| {
        out.push(MetricRow {
            table: report.command.clone(),
            model: model.clone(),
            metric,
            value,
        })
    });
    out
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn flatten(v: &Value, prefix: String, emit: &mut dyn FnMut(String, f64)) {
    match v {
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                emit(prefix, f);
            }
        }
        Value::Bool(b) => emit(prefix, *b as u8 as f64),
        Value::Object(map) => {
            for (k, child) in map {
                flatten(child, join(&prefix, k), emit);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                let label = child
                    .get("name")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .or_else(|| child.get("k").and_then(Value::as_u64).map(|k| format!("k{k}")))
                    .unwrap_or_else(|| i.to_string());
                flatten(child, join(&prefix, &label), emit);
            }
        }
        Value::Null | Value::String(_) => {}
    }
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("table,model,metric,value\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&r.table),
            csv_field(&r.model),
            csv_field(&r.metric),
            r.value
        ));
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
