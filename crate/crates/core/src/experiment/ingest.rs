//! CSV ingestion: drop columns, integer-encode categoricals, min-max scale.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use super::config::KeyValues;
use crate::privacy::{Dataset, FeatureBounds};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaConfig {
    pub output_column: String,
    pub drop_columns: Vec<String>,
    pub categorical_columns: Vec<String>,
    pub scale_to_unit: bool,
}

impl SchemaConfig {
    pub fn new(output_column: impl Into<String>) -> Self {
        Self {
            output_column: output_column.into(),
            drop_columns: Vec::new(),
            categorical_columns: Vec::new(),
            scale_to_unit: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_column.is_empty() {
            return Err(Error::Schema("output_column is required".into()));
        }
        if self.drop_columns.contains(&self.output_column) {
            return Err(Error::Schema(format!("output column {:?} is also dropped", self.output_column)));
        }
        Ok(())
    }

    /// Read schema keys out of `kv`, leaving any others in place.
    pub fn from_key_values(kv: &mut KeyValues) -> Result<Self> {
        let output_column = kv
            .take_str("output_column")
            .ok_or_else(|| Error::Schema("output_column is required".into()))?;
        let schema = Self {
            output_column,
            drop_columns: kv.take_list("drop_columns").unwrap_or_default(),
            categorical_columns: kv.take_list("categorical_columns").unwrap_or_default(),
            scale_to_unit: kv.take_bool("scale_to_unit")?.unwrap_or(true),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut kv = KeyValues::load(path)?;
        let schema = Self::from_key_values(&mut kv)?;
        kv.finish()?;
        Ok(schema)
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
    pub dropped_rows: usize,
}

fn is_missing(v: &str) -> bool {
    matches!(v, "" | "?" | "NA" | "NaN" | "nan" | "null")
}

/// Load a headered comma-separated file into a clean [`Dataset`].
pub fn ingest_csv(path: &Path, schema: &SchemaConfig) -> Result<Ingested> {
    let reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    ingest_reader(reader, schema)
}

pub fn ingest_reader<R: std::io::Read>(mut reader: csv::Reader<R>, schema: &SchemaConfig) -> Result<Ingested> {
    schema.validate()?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let output_idx = column(&schema.output_column)
        .ok_or_else(|| Error::Schema(format!("output column {:?} not found", schema.output_column)))?;
    for name in schema.drop_columns.iter().chain(&schema.categorical_columns) {
        if column(name).is_none() {
            return Err(Error::Schema(format!("column {name:?} not found")));
        }
    }
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != output_idx && !schema.drop_columns.contains(&headers[i]))
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::Schema("no feature columns remain".into()));
    }
    let used: Vec<usize> = feature_idx.iter().copied().chain(std::iter::once(output_idx)).collect();
    let categorical: Vec<bool> = used.iter().map(|&i| schema.categorical_columns.contains(&headers[i])).collect();

    let mut kept: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        let cells: Option<Vec<String>> = used
            .iter()
            .zip(&categorical)
            .map(|(&i, &cat)| {
                let v = record.get(i)?;
                if is_missing(v) {
                    return None;
                }
                if !cat && !v.parse::<f64>().map(f64::is_finite).unwrap_or(false) {
                    return None;
                }
                Some(v.to_string())
            })
            .collect();
        match cells {
            Some(c) => kept.push(c),
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing or unparseable values");
    }
    if kept.is_empty() {
        return Err(Error::EmptyData);
    }

    let n = kept.len();
    let width = used.len();
    let mut values = DMatrix::zeros(n, width);
    for (c, &cat) in categorical.iter().enumerate() {
        if cat {
            let mut codes: HashMap<&str, usize> = HashMap::new();
            for (r, row) in kept.iter().enumerate() {
                let next = codes.len();
                let code = *codes.entry(row[c].as_str()).or_insert(next);
                values[(r, c)] = code as f64;
            }
        } else {
            for (r, row) in kept.iter().enumerate() {
                values[(r, c)] = row[c].parse::<f64>().expect("validated above");
            }
        }
    }

    if schema.scale_to_unit {
        for c in 0..width {
            let col = values.column(c);
            let (lo, hi) = (col.min(), col.max());
            let range = hi - lo;
            for r in 0..n {
                values[(r, c)] = if range > 0.0 { (values[(r, c)] - lo) / range } else { 0.0 };
            }
        }
    }

    let p_x = feature_idx.len();
    let features = values.columns(0, p_x).into_owned();
    let outputs = values.columns(p_x, 1).into_owned();
    let bounds = if schema.scale_to_unit {
        FeatureBounds::unit()
    } else {
        let (lo, hi) = (features.min(), features.max());
        FeatureBounds::new(lo, if hi > lo { hi } else { lo + 1.0 })?
    };
    Ok(Ingested {
        dataset: Dataset::new(features, outputs, bounds)?,
        feature_names: feature_idx.iter().map(|&i| headers[i].clone()).collect(),
        dropped_rows: dropped,
    })
}
