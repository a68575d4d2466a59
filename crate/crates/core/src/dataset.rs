//! Core data model for discrete multivariate time series and its CSV I/O.
//!
//! External layout is one row per time step and one column per component,
//! which matches typical sensor exports. Internally values are transposed to
//! component-major storage and held as dense codes `0..s-1` with a
//! code-to-symbol table, so downstream contingency and CPT indexing stays
//! cheap. Missing values are not supported.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The shared finite domain of every component: an ordered set of distinct
/// small integers. Codes are indices into `symbols`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    symbols: Vec<i64>,
}

impl Domain {
    /// Builds a domain from raw symbols. Symbols must be strictly increasing
    /// with at least two entries.
    pub fn new(symbols: Vec<i64>) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::InvalidDomain(format!(
                "domain must contain at least 2 symbols, got {}",
                symbols.len()
            )));
        }
        if symbols.len() > 256 {
            return Err(Error::InvalidDomain(format!(
                "domain of {} symbols exceeds the supported maximum of 256",
                symbols.len()
            )));
        }
        if !symbols.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidDomain(
                "symbols must be strictly increasing without duplicates".into(),
            ));
        }
        Ok(Domain { symbols })
    }

    /// The canonical binary domain `{0, 1}`.
    pub fn binary() -> Self {
        Domain { symbols: vec![0, 1] }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[i64] {
        &self.symbols
    }

    /// Code of a symbol, if it belongs to the domain.
    pub fn code_of(&self, symbol: i64) -> Option<u8> {
        self.symbols.binary_search(&symbol).ok().map(|i| i as u8)
    }

    /// Symbol for a code. Panics on out-of-range codes, which cannot be
    /// produced by a validated `Dataset`.
    pub fn symbol(&self, code: u8) -> i64 {
        self.symbols[code as usize]
    }
}

/// An immutable n-component discrete time series of length T.
///
/// Safe to share across parallel workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    domain: Domain,
    component_names: Vec<String>,
    time_labels: Option<Vec<String>>,
    /// Component-major codes: `values[j][t]`.
    values: Vec<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        domain: Domain,
        component_names: Vec<String>,
        time_labels: Option<Vec<String>>,
        values: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParam("dataset needs at least one component".into()));
        }
        let t_len = values[0].len();
        if t_len < 2 {
            return Err(Error::InvalidParam(format!(
                "dataset needs at least 2 time steps, got {t_len}"
            )));
        }
        if values.iter().any(|row| row.len() != t_len) {
            return Err(Error::InvalidParam("component series have unequal lengths".into()));
        }
        if component_names.len() != values.len() {
            return Err(Error::InvalidParam(format!(
                "{} component names for {} components",
                component_names.len(),
                values.len()
            )));
        }
        if let Some(labels) = &time_labels {
            if labels.len() != t_len {
                return Err(Error::InvalidParam(format!(
                    "{} time labels for {} time steps",
                    labels.len(),
                    t_len
                )));
            }
        }
        let s = domain.size() as u16;
        for row in &values {
            if let Some(&bad) = row.iter().find(|&&c| (c as u16) >= s) {
                return Err(Error::InvalidParam(format!(
                    "code {bad} outside domain of size {s}"
                )));
            }
        }
        Ok(Dataset { domain, component_names, time_labels, values })
    }

    /// Number of components (n).
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Number of time steps (T).
    pub fn t_len(&self) -> usize {
        self.values[0].len()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn component_names(&self) -> &[String] {
        &self.component_names
    }

    pub fn time_labels(&self) -> Option<&[String]> {
        self.time_labels.as_deref()
    }

    /// Full code series of component `j`.
    pub fn series(&self, j: usize) -> &[u8] {
        &self.values[j]
    }

    /// Code of component `j` at time `t`.
    #[inline]
    pub fn code(&self, j: usize, t: usize) -> u8 {
        self.values[j][t]
    }
}

/// How to interpret the columns of an input CSV.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColumnSchema {
    /// First row holds component names.
    pub has_header: bool,
    /// First column holds time labels rather than data.
    pub time_label_column: bool,
    /// Declared domain; when absent the domain is inferred as the sorted set
    /// of distinct values in the file.
    pub domain: Option<Vec<i64>>,
    /// Component names overriding (or replacing) the header.
    pub component_names: Option<Vec<String>>,
}

/// JSON sidecar declaring the domain and component names of a CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarMeta {
    pub domain: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<String>>,
}

pub fn load_sidecar(path: &Path) -> Result<SidecarMeta> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_sidecar(meta: &SidecarMeta, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a dataset from CSV. Rows are time steps, columns are components.
///
/// Every cell must parse as an integer and all values must share one finite
/// domain of at least two symbols. Errors carry 1-based file coordinates.
pub fn load_csv(path: &Path, schema: &ColumnSchema) -> Result<Dataset> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        rows.push(record?);
    }
    parse_rows(&rows, schema)
}

fn parse_rows(rows: &[csv::StringRecord], schema: &ColumnSchema) -> Result<Dataset> {
    let mut iter = rows.iter().enumerate();
    let mut header: Option<Vec<String>> = None;
    if schema.has_header {
        match iter.next() {
            Some((_, rec)) => {
                header = Some(rec.iter().map(|s| s.trim().to_string()).collect());
            }
            None => return Err(Error::InvalidParam("CSV is empty".into())),
        }
    }

    let data_rows: Vec<(usize, &csv::StringRecord)> = iter.collect();
    if data_rows.is_empty() {
        return Err(Error::InvalidParam("CSV holds no data rows".into()));
    }

    let width = data_rows[0].1.len();
    let skip = usize::from(schema.time_label_column);
    if width <= skip {
        return Err(Error::InvalidParam("CSV has no data columns".into()));
    }
    let n = width - skip;

    let mut time_labels = schema.time_label_column.then(Vec::new);
    let mut raw: Vec<Vec<i64>> = vec![Vec::with_capacity(data_rows.len()); n];
    for &(row_idx, rec) in &data_rows {
        let file_row = row_idx + 1;
        if rec.len() != width {
            return Err(Error::RaggedRow { row: file_row, expected: width, found: rec.len() });
        }
        if let Some(labels) = time_labels.as_mut() {
            labels.push(rec.get(0).unwrap_or("").trim().to_string());
        }
        for (k, cell) in rec.iter().skip(skip).enumerate() {
            let value: i64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: file_row,
                col: skip + k + 1,
                detail: format!("{cell:?} is not an integer"),
            })?;
            raw[k].push(value);
        }
    }

    let domain = match &schema.domain {
        Some(symbols) => Domain::new(symbols.clone())?,
        None => {
            let distinct: BTreeSet<i64> = raw.iter().flatten().copied().collect();
            Domain::new(distinct.into_iter().collect())?
        }
    };

    let mut values: Vec<Vec<u8>> = Vec::with_capacity(n);
    for (k, column) in raw.iter().enumerate() {
        let mut codes = Vec::with_capacity(column.len());
        for (t, &value) in column.iter().enumerate() {
            let code = domain.code_of(value).ok_or(Error::DomainViolation {
                row: data_rows[t].0 + 1,
                col: skip + k + 1,
                value,
            })?;
            codes.push(code);
        }
        values.push(codes);
    }

    let component_names = schema
        .component_names
        .clone()
        .or_else(|| {
            header.map(|h| h.into_iter().skip(skip).collect::<Vec<_>>())
        })
        .unwrap_or_else(|| (1..=n).map(|j| format!("X{j}")).collect());
    if component_names.len() != n {
        return Err(Error::InvalidParam(format!(
            "{} component names for {} data columns",
            component_names.len(),
            n
        )));
    }

    Dataset::new(domain, component_names, time_labels, values)
}

/// Writes a dataset as CSV with a header row; time labels, when present, are
/// emitted as the first column. Round-trips bit-exactly through `load_csv`
/// given the matching schema.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut writer = csv::Writer::from_writer(file);

    let mut header: Vec<String> = Vec::new();
    if ds.time_labels().is_some() {
        header.push("t".to_string());
    }
    header.extend(ds.component_names().iter().cloned());
    writer.write_record(&header)?;

    for t in 0..ds.t_len() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if let Some(labels) = ds.time_labels() {
            record.push(labels[t].clone());
        }
        for j in 0..ds.n() {
            record.push(ds.domain().symbol(ds.code(j, t)).to_string());
        }
        writer.write_record(&record)?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// The schema that reads back a file produced by [`save_csv`].
pub fn roundtrip_schema(ds: &Dataset) -> ColumnSchema {
    ColumnSchema {
        has_header: true,
        time_label_column: ds.time_labels().is_some(),
        domain: Some(ds.domain().symbols().to_vec()),
        component_names: None,
    }
}
