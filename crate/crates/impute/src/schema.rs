//! JSON column schemas and CSV ingestion.

use std::io::Read;
use std::path::Path;

use igrm_core::data::{Column, ColumnKind, TabularDataset};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let schema: Schema = serde_json::from_str(&text).map_err(Error::json(path))?;
        schema.columns()?;
        Ok(schema)
    }

    pub fn from_columns(columns: &[Column]) -> Self {
        let columns = columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Continuous => ColumnSpec { name: c.name.clone(), kind: Kind::Continuous, categories: Vec::new() },
                ColumnKind::Discrete { categories } => ColumnSpec { name: c.name.clone(), kind: Kind::Discrete, categories: categories.clone() },
            })
            .collect();
        Self { columns }
    }

    pub fn columns(&self) -> Result<Vec<Column>> {
        if self.columns.is_empty() {
            return Err(Error::Schema("no columns".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        self.columns
            .iter()
            .map(|c| {
                if !seen.insert(c.name.as_str()) {
                    return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
                }
                match c.kind {
                    Kind::Continuous if c.categories.is_empty() => Ok(Column::continuous(&c.name)),
                    Kind::Continuous => Err(Error::Schema(format!("continuous column `{}` lists categories", c.name))),
                    Kind::Discrete if c.categories.is_empty() => Err(Error::Schema(format!("discrete column `{}` has no categories", c.name))),
                    Kind::Discrete => Ok(Column::discrete(&c.name, &c.categories)),
                }
            })
            .collect()
    }
}

/// Reads a CSV whose header names the schema's columns in order. Empty cells
/// are missing values.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<TabularDataset> {
    let file = std::fs::File::open(path).map_err(Error::io(path))?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv { path: path.into(), source },
        other => other,
    })
}

pub fn read_csv(reader: impl Read, schema: &Schema) -> Result<TabularDataset> {
    let columns = schema.columns()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(Error::csv(""))?.iter().map(|h| h.trim().to_string()).collect();
    let expected: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    if header != expected {
        return Err(igrm_core::Error::HeaderMismatch { expected, found: header }.into());
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(Error::csv(""))?;
        rows.push(record.iter().map(|s| Some(s.to_string())).collect::<Vec<_>>());
    }
    Ok(TabularDataset::from_text_rows(columns, &rows)?)
}
