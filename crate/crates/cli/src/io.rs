//! Dataset CSV, model files and the per-run artifact writer.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use osp_core::net::{deserialize, serialize, SelectiveModel};
use osp_core::{LabeledDataset, LabeledExample};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn parse_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads `f0,...,f{d-1},label`; the class count is the largest label plus one.
pub fn ingest_csv(path: &Path) -> CliResult<LabeledDataset> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::io(path, e))?;
    parse_csv(&text, path)
}

/// [`ingest_csv`] on text already in memory; `origin` only labels error messages.
pub fn parse_csv(text: &str, origin: &Path) -> CliResult<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(origin, format!("line 1: {e}")))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::config(format!("{}: empty file", origin.display())));
    }
    if &header[header.len() - 1] != "label" {
        return Err(parse_err(origin, "line 1: last column must be `label`"));
    }
    let dim = header.len() - 1;
    let mut examples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(origin, format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut features = Vec::with_capacity(dim);
        for (i, field) in record.iter().take(dim).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(origin, format!("line {line}: feature f{i} `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(origin, format!("line {line}: feature f{i} is not finite")));
            }
            features.push(v);
        }
        let raw = &record[dim];
        let label: i64 = raw
            .parse()
            .map_err(|_| parse_err(origin, format!("line {line}: label `{raw}` is not an integer")))?;
        if label < 0 {
            return Err(parse_err(origin, format!("line {line}: negative label {label}")));
        }
        examples.push(LabeledExample::new(features, label as usize));
    }
    if examples.is_empty() {
        return Err(CliError::config(format!("{}: no data rows", origin.display())));
    }
    let k = examples.iter().map(|e| e.label).max().unwrap_or(0) + 1;
    Ok(LabeledDataset::with_dim(examples, k, dim)?)
}

/// Inverse of [`parse_csv`]; floats use the shortest representation that reads back exactly.
pub fn dataset_to_csv(data: &LabeledDataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..data.dim()).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header).expect("writing to memory");
    for e in data {
        let mut row: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
        row.push(e.label.to_string());
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

/// A model payload stamped with the run it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub config_hash: String,
    pub seed: u64,
    /// `μ` for one-sided models, the payoff for abstention models, 0 otherwise.
    pub param: f64,
    pub model: serde_json::Value,
}

impl ModelFile {
    pub fn new(config_hash: &str, seed: u64, param: f64, model: &SelectiveModel) -> Self {
        let model = serde_json::from_slice(&serialize(model)).expect("model payload is json");
        Self {
            config_hash: config_hash.to_string(),
            seed,
            param,
            model,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = serde_json::to_vec_pretty(self).expect("model file serializes");
        b.push(b'\n');
        b
    }

    pub fn decode(&self) -> CliResult<SelectiveModel> {
        let bytes = serde_json::to_vec(&self.model).expect("json value serializes");
        Ok(deserialize(&bytes)?)
    }
}

/// Loads a stamped model file, or a bare model payload (param 0).
pub fn load_model(path: &Path) -> CliResult<(f64, SelectiveModel)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if let Ok(file) = serde_json::from_slice::<ModelFile>(&bytes) {
        return Ok((file.param, file.decode()?));
    }
    let model = deserialize(&bytes).map_err(|e| parse_err(path, e.to_string()))?;
    Ok((0.0, model))
}

/// Builds a CSV document row by row; every row is preceded by the run stamp.
pub struct Table {
    stamp: Vec<String>,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(config_hash: &str, seed: u64, columns: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["config_hash", "seed"];
        header.extend_from_slice(columns);
        writer.write_record(&header).expect("writing to memory");
        Self {
            stamp: vec![config_hash.to_string(), seed.to_string()],
            writer,
        }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let mut rec = self.stamp.clone();
        rec.extend(fields.into_iter().map(|f| f.to_string()));
        self.writer.write_record(&rec).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("writing to memory")
    }
}

/// The single writer for one run directory; remembers what it wrote.
#[derive(Debug)]
pub struct RunWriter {
    root: PathBuf,
    written: Vec<String>,
}

impl RunWriter {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut b = serde_json::to_vec_pretty(value).expect("report serializes");
        b.push(b'\n');
        self.write(rel, &b)
    }

    /// Relative paths written so far, in order.
    pub fn artifacts(&self) -> &[String] {
        &self.written
    }
}
