use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const CSV_HEADER_COMMENT: &str = "# pfsgd-bench runs schema v1";
pub const JSONL_SCHEMA: &str = "pfsgd-bench-diagnostics";
pub const SCHEMA_VERSION: u32 = 1;

pub const RUNS_FILE: &str = "runs.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// One CSV row. Fields are empty when the run aborted.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub run_id: u64,
    pub seed: u64,
    pub k_final: Option<u64>,
    #[serde(rename = "T")]
    pub steps: Option<u64>,
    pub eta_o_exponent: Option<u64>,
    pub total_queries: Option<u64>,
    pub gap: Option<f64>,
    pub dist_to_opt: Option<f64>,
    pub case: String,
    pub wall_ms: u64,
    pub budget: u64,
}

/// Everything a command produces; nothing touches the disk until `write`.
#[derive(Debug, Default)]
pub struct Outputs {
    pub rows: Option<Vec<RunRow>>,
    pub diagnostics: Vec<Value>,
    pub summary: Value,
}

impl Outputs {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        if let Some(rows) = &self.rows {
            let path = dir.join(RUNS_FILE);
            std::fs::write(&path, csv_bytes(rows)?)
                .with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        let path = dir.join(DIAGNOSTICS_FILE);
        let header = serde_json::json!({ "schema": JSONL_SCHEMA, "version": SCHEMA_VERSION });
        let mut text = serde_json::to_string(&header)?;
        text.push('\n');
        for d in &self.diagnostics {
            text.push_str(&serde_json::to_string(d)?);
            text.push('\n');
        }
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        let path = dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(&self.summary)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(written)
    }
}

pub fn csv_bytes(rows: &[RunRow]) -> Result<Vec<u8>> {
    let mut buf = format!("{CSV_HEADER_COMMENT}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let row = RunRow {
            run_id: 0,
            seed: 7,
            k_final: Some(2),
            steps: Some(16),
            eta_o_exponent: Some(2),
            total_queries: Some(64),
            gap: Some(0.15625),
            dist_to_opt: Some(0.15625),
            case: "Normal".into(),
            wall_ms: 0,
            budget: 64,
        };
        let mut failed = row.clone();
        failed.k_final = None;
        failed.gap = None;
        failed.case = "error".into();
        let text = String::from_utf8(csv_bytes(&[row, failed]).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER_COMMENT);
        assert_eq!(
            lines[1],
            "run_id,seed,k_final,T,eta_o_exponent,total_queries,gap,dist_to_opt,case,wall_ms,budget"
        );
        assert_eq!(lines[2], "0,7,2,16,2,64,0.15625,0.15625,Normal,0,64");
        assert_eq!(lines[3], "0,7,,16,2,64,,0.15625,error,0,64");
    }
}
