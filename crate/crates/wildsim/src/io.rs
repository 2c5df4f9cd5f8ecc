//! Output formats: CSV tables and JSON documents.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use wildsim_core::trees::OrderedTree;

use crate::error::{CliError, CliResult};

/// A table with one header row. Cells are rendered by the caller; floats
/// should go through [`num`] so they round-trip.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Writes CSV, optionally preceded by a `# generated ...` comment line.
    pub fn write_to<W: Write>(&self, out: W, stamp: bool) -> io::Result<()> {
        let mut out = out;
        if stamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            writeln!(out, "# generated at unix time {secs}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf, false).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Destination of a command's main output: a file or stdout.
#[derive(Debug, Clone)]
pub struct Sink {
    pub path: Option<PathBuf>,
    pub stamp: bool,
}

impl Sink {
    pub fn table(&self, table: &Table) -> CliResult<()> {
        match &self.path {
            Some(p) => {
                let f = File::create(p).map_err(io_err(p))?;
                table.write_to(BufWriter::new(f), self.stamp).map_err(io_err(p))
            }
            None => table.write_to(io::stdout().lock(), false).map_err(io_err(Path::new("<stdout>"))),
        }
    }

    pub fn json<T: Serialize>(&self, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable output");
        match &self.path {
            Some(p) => std::fs::write(p, text + "\n").map_err(io_err(p)),
            None => writeln!(io::stdout().lock(), "{text}").map_err(io_err(Path::new("<stdout>"))),
        }
    }
}

/// `{"m": M, "history": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeJson {
    pub m: usize,
    pub history: Vec<u32>,
}

impl From<&OrderedTree> for TreeJson {
    fn from(t: &OrderedTree) -> Self {
        TreeJson { m: t.arity(), history: t.history().to_vec() }
    }
}

impl TryFrom<TreeJson> for OrderedTree {
    type Error = wildsim_core::Error;

    fn try_from(t: TreeJson) -> Result<Self, Self::Error> {
        OrderedTree::from_history(t.m, t.history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, -0.0, 5e-324] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_has_single_header() {
        let mut t = Table::new(&["n", "probability"]);
        t.push(vec!["0".into(), num(0.5)]);
        assert_eq!(t.to_csv_string(), "n,probability\n0,0.5\n");
    }

    #[test]
    fn tree_json_round_trip() {
        let tree = OrderedTree::from_history(3, vec![0, 2, 1]).unwrap();
        let text = serde_json::to_string(&TreeJson::from(&tree)).unwrap();
        assert_eq!(text, r#"{"m":3,"history":[0,2,1]}"#);
        let back: TreeJson = serde_json::from_str(&text).unwrap();
        assert_eq!(OrderedTree::try_from(back).unwrap(), tree);
    }
}
