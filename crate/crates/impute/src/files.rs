//! Output files. Everything goes through [`write_atomic`].

use std::io::Write;
use std::path::Path;

use igrm_core::data::{MinMaxScaler, TabularDataset};
use igrm_core::model::{checkpoint, Trainer};
use igrm_core::numerics::Tensor;

use crate::error::{Error, Result};

/// Writes to a temporary file in the same directory and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(Error::io(dir))?;
    tmp.write_all(bytes).map_err(Error::io(tmp.path()))?;
    tmp.as_file().sync_all().map_err(Error::io(tmp.path()))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.into(), source: e.error })?;
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// The table in its original units: observed cells as given, missing cells
/// from `imputed` (scaled space) mapped back through `scaler`.
pub fn imputed_csv(original: &TabularDataset, scaler: &MinMaxScaler, imputed: &[f64]) -> Vec<u8> {
    let m = original.n_features();
    let header: Vec<String> = original.columns().iter().map(|c| c.name.clone()).collect();
    let rows = (0..original.n_samples()).map(|i| {
        original
            .columns()
            .iter()
            .enumerate()
            .map(|(j, col)| {
                let v = if original.is_observed(i, j) { original.value(i, j) } else { scaler.inverse_value(j, imputed[i * m + j]) };
                col.format_value(v)
            })
            .collect()
    });
    csv_bytes(&header, rows)
}

/// 1 for observed cells, 0 for missing ones.
pub fn mask_csv(ds: &TabularDataset) -> Vec<u8> {
    let header: Vec<String> = ds.columns().iter().map(|c| c.name.clone()).collect();
    let rows = (0..ds.n_samples()).map(|i| ds.row_mask(i).iter().map(|&o| if o { "1" } else { "0" }.to_string()).collect());
    csv_bytes(&header, rows)
}

/// Undirected edge list with optional weights.
pub fn edges_csv(edges: &[(usize, usize)], weights: Option<&[f64]>) -> Vec<u8> {
    let mut header = vec!["source".to_string(), "target".to_string()];
    if weights.is_some() {
        header.push("weight".into());
    }
    let rows = edges.iter().enumerate().map(|(k, &(a, b))| {
        let mut row = vec![a.to_string(), b.to_string()];
        if let Some(w) = weights {
            row.push(w[k].to_string());
        }
        row
    });
    csv_bytes(&header, rows)
}

/// One row per sample, tab separated, no header.
pub fn embeddings_tsv(emb: &Tensor) -> Vec<u8> {
    let mut out = String::new();
    for r in 0..emb.rows() {
        let line: Vec<String> = emb.row(r).iter().map(|x| x.to_string()).collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("serializable");
        out.push(b'\n');
    }
    out
}

pub fn save_checkpoint(path: &Path, trainer: &Trainer) -> Result<()> {
    write_atomic(path, &checkpoint::encode(&trainer.state()))
}

pub fn load_checkpoint(path: &Path, trainer: &mut Trainer) -> Result<()> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    trainer.restore(&checkpoint::decode(&bytes)?)?;
    Ok(())
}
