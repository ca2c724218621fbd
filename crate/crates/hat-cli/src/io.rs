//! File formats of the command-line tool: tree loading, p-value and
//! observation CSVs, partition JSON, and the run manifest emitted next to
//! every file output.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hat_core::metrics::Partition;
use hat_core::tree::{Tree, TreeFormat};

use crate::CliError;

/// Floats are printed with 17 significant digits so CSV output
/// round-trips losslessly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

/// Tree format from the file extension unless forced: `.json` is JSON,
/// anything else is Newick.
pub fn load_tree(path: &Path, forced: Option<TreeFormat>) -> Result<Tree, CliError> {
    let text = read_to_string(path)?;
    let format = forced.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => TreeFormat::Json,
            _ => TreeFormat::Newick,
        }
    });
    Tree::parse(&text, format).map_err(CliError::from)
}

/// `node,pvalue` CSV covering every internal node (the root included).
pub fn load_pvalues(path: &Path, tree: &Tree) -> Result<HashMap<usize, f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    check_headers(&mut reader, &["node", "pvalue"], path)?;
    let mut map = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let line = i + 2;
        let label = record
            .get(0)
            .ok_or_else(|| CliError::validation(format!("{}:{line}: missing node", path.display())))?;
        let node = tree.node_by_label(label).ok_or_else(|| {
            CliError::validation(format!("{}:{line}: unknown node {label:?}", path.display()))
        })?;
        let value: f64 = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| {
                CliError::validation(format!("{}:{line}: bad p-value", path.display()))
            })?;
        if map.insert(node, value).is_some() {
            return Err(CliError::validation(format!(
                "{}:{line}: duplicate row for node {label:?}",
                path.display()
            )));
        }
    }
    Ok(map)
}

/// `leaf,value` CSV covering every leaf exactly once; returned in leaf
/// order.
pub fn load_observations(path: &Path, tree: &Tree) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    check_headers(&mut reader, &["leaf", "value"], path)?;
    let mut seen: Vec<Option<f64>> = vec![None; tree.p()];
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let line = i + 2;
        let label = record.get(0).unwrap_or_default();
        let node = tree.node_by_label(label).ok_or_else(|| {
            CliError::validation(format!("{}:{line}: unknown leaf {label:?}", path.display()))
        })?;
        let pos = tree.leaf_position(node).ok_or_else(|| {
            CliError::validation(format!("{}:{line}: {label:?} is not a leaf", path.display()))
        })?;
        let value: f64 = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::validation(format!("{}:{line}: bad value", path.display())))?;
        if seen[pos].replace(value).is_some() {
            return Err(CliError::validation(format!(
                "{}:{line}: duplicate leaf {label:?}",
                path.display()
            )));
        }
    }
    seen.into_iter()
        .enumerate()
        .map(|(pos, v)| {
            v.ok_or_else(|| {
                let label = tree.label(tree.leaf_order()[pos]).to_string();
                CliError::validation(format!("{}: missing leaf {label:?}", path.display()))
            })
        })
        .collect()
}

fn check_headers(
    reader: &mut csv::Reader<fs::File>,
    expect: &[&str],
    path: &Path,
) -> Result<(), CliError> {
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expect {
        return Err(CliError::validation(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            expect.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Partition JSON: `{"groups": [[leaf labels], ...]}` with groups listed
/// left to right.
#[derive(Serialize, Deserialize)]
pub struct PartitionFile {
    pub groups: Vec<Vec<String>>,
}

pub fn partition_to_json(tree: &Tree, partition: &Partition) -> String {
    let leaves = tree.leaf_order();
    let groups = partition
        .ranges()
        .iter()
        .map(|&(start, len)| {
            leaves[start..start + len]
                .iter()
                .map(|&u| tree.label(u).to_string())
                .collect()
        })
        .collect();
    let mut out =
        serde_json::to_string(&PartitionFile { groups }).expect("partition serialization");
    out.push('\n');
    out
}

pub fn load_partition_file(path: &Path) -> Result<PartitionFile, CliError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Provenance record written as `<output>.manifest.json` beside every file
/// output. Identical parameters and inputs imply identical outputs; the
/// timestamp documents the run and is the only non-reproducible field.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: serde_json::Value, seeds: Vec<u64>) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            parameters,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs
            .push((path.display().to_string(), format!("sha256:{hex}")));
        Ok(())
    }

    /// Write `contents` to `path` and register it in the manifest.
    pub fn write_output(&mut self, path: &Path, contents: &[u8]) -> Result<(), CliError> {
        fs::write(path, contents)
            .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    /// Emit the manifest next to the first registered output; no file
    /// outputs, no manifest.
    pub fn finish(&self) -> Result<(), CliError> {
        let Some(first) = self.outputs.first() else {
            return Ok(());
        };
        let path = format!("{first}.manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serialization");
        fs::write(&path, body)
            .map_err(|e| CliError::validation(format!("cannot write {path}: {e}")))?;
        Ok(())
    }
}
