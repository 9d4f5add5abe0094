//! Store export to CSV (RFC 4180) and JSON Lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use base64::Engine;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::report::round_sig9;
use crate::store::StoreReader;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    JsonLines,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json-lines" | "jsonl" => Ok(Self::JsonLines),
            other => Err(Error::Usage(format!("unknown table format {other:?} (expected csv or json-lines)"))),
        }
    }
}

/// Columns to export besides the record index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fields {
    pub latent: bool,
    pub embedding: bool,
    pub image_ref: bool,
}

impl Default for Fields {
    fn default() -> Self {
        Self { latent: true, embedding: true, image_ref: true }
    }
}

impl FromStr for Fields {
    type Err = Error;

    /// Comma-separated subset of `latent,embedding,image_ref`.
    fn from_str(s: &str) -> Result<Self> {
        let mut f = Fields { latent: false, embedding: false, image_ref: false };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "latent" => f.latent = true,
                "embedding" => f.embedding = true,
                "image_ref" => f.image_ref = true,
                other => return Err(Error::Usage(format!("unknown field {other:?}"))),
            }
        }
        Ok(f)
    }
}

/// 9 significant digits, plain notation where Rust's shortest form allows.
pub fn format_float(x: f64) -> String {
    round_sig9(x).to_string()
}

fn render_ref(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_owned(),
        Err(_) => format!("base64:{}", base64::engine::general_purpose::STANDARD.encode(bytes)),
    }
}

/// Writes one row per record of the store at `store`; returns the row count.
pub fn export_table(store: impl AsRef<Path>, out: impl AsRef<Path>, format: TableFormat, fields: Fields) -> Result<u64> {
    let out = out.as_ref();
    let mut reader = StoreReader::open(store)?;
    let header = *reader.header();
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut rows = 0u64;
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            let mut names = vec!["index".to_owned()];
            if fields.latent {
                names.extend((0..header.latent_dim()).map(|i| format!("z{i}")));
            }
            if fields.embedding {
                names.extend((0..header.embed_dim()).map(|i| format!("e{i}")));
            }
            if fields.image_ref {
                names.push("image_ref".into());
            }
            w.write_record(&names).map_err(|e| Error::format("csv", e))?;
            while let Some(rec) = reader.next_raw()? {
                let mut row = vec![rows.to_string()];
                if fields.latent {
                    row.extend(rec.latent.iter().map(|&x| format_float(x)));
                }
                if fields.embedding {
                    row.extend(rec.embedding.iter().map(|&x| format_float(x)));
                }
                if fields.image_ref {
                    row.push(rec.image_ref.as_deref().map(render_ref).unwrap_or_default());
                }
                w.write_record(&row).map_err(|e| Error::format("csv", e))?;
                rows += 1;
            }
            w.flush().map_err(|e| Error::io(out, e))?;
        }
        TableFormat::JsonLines => {
            let mut w = BufWriter::new(file);
            let floats = |v: &[f64]| Value::Array(v.iter().map(|&x| json!(round_sig9(x))).collect());
            while let Some(rec) = reader.next_raw()? {
                let mut obj = Map::new();
                obj.insert("index".into(), json!(rows));
                if fields.latent {
                    obj.insert("latent".into(), floats(&rec.latent));
                }
                if fields.embedding {
                    obj.insert("embedding".into(), floats(&rec.embedding));
                }
                if fields.image_ref {
                    obj.insert("image_ref".into(), rec.image_ref.as_deref().map(render_ref).map_or(Value::Null, Value::String));
                }
                serde_json::to_writer(&mut w, &obj).map_err(|e| Error::format("json", e))?;
                w.write_all(b"\n").map_err(|e| Error::io(out, e))?;
                rows += 1;
            }
            w.flush().map_err(|e| Error::io(out, e))?;
        }
    }
    Ok(rows)
}
