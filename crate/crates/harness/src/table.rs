//! Numeric result tables: `# key = value` metadata lines, a comma-separated
//! header row, then one row per record.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{HarnessError, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance stamped on every table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunContext {
    pub spec_hash: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunContext {
    /// Timestamp from `SOURCE_DATE_EPOCH` when set (reproducible builds),
    /// otherwise the current time.
    pub fn now(spec_hash: impl Into<String>, seed: Option<u64>) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs())
            });
        Self {
            spec_hash: spec_hash.into(),
            seed,
            timestamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(ctx: &RunContext, columns: &[&str]) -> Self {
        let seed = ctx
            .seed
            .map_or_else(|| "none".to_owned(), |s| s.to_string());
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: vec![
                ("spec_sha256".into(), ctx.spec_hash.clone()),
                ("seed".into(), seed),
                ("artifact_version".into(), ARTIFACT_VERSION.into()),
                ("timestamp".into(), ctx.timestamp.to_string()),
            ],
        }
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}").expect("string write");
        }
        writeln!(out, "{}", self.columns.join(",")).expect("string write");
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(",")).expect("string write");
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let io = |source| HarnessError::Write {
            path: path.to_owned(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.render().as_bytes()).map_err(io)
    }
}

impl FromStr for ResultTable {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let err = |line: usize, message: String| HarnessError::Parse {
            path: "<table>".into(),
            line,
            column: 1,
            message,
        };
        let mut metadata = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, line) in s.lines().enumerate() {
            let n = i + 1;
            if let Some(m) = line.strip_prefix('#') {
                let (k, v) = m
                    .split_once('=')
                    .ok_or_else(|| err(n, "metadata needs `key = value`".into()))?;
                metadata.push((k.trim().to_owned(), v.trim().to_owned()));
            } else if line.trim().is_empty() {
                continue;
            } else if let Some(cols) = &columns {
                let row = line
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map_err(|e| err(n, format!("`{c}`: {e}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if row.len() != cols.len() {
                    return Err(err(
                        n,
                        format!("{} cells, header has {}", row.len(), cols.len()),
                    ));
                }
                rows.push(row);
            } else {
                columns = Some(line.split(',').map(|c| c.trim().to_owned()).collect());
            }
        }
        Ok(Self {
            columns: columns.ok_or_else(|| err(1, "missing header row".into()))?,
            rows,
            metadata,
        })
    }
}
