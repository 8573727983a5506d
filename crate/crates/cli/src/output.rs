use std::io::Write;
use std::path::{Path, PathBuf};

use cubeshap::{Attributions, MetricKind, Order};
use serde_json::json;

use crate::{Failure, OutFormat};

pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: OutFormat,
}

impl OutputSpec {
    pub fn resolve(path: Option<&Path>, format: Option<OutFormat>) -> Result<Self, Failure> {
        let by_extension = path
            .and_then(|p| p.extension())
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        let format = match (format, by_extension.as_deref()) {
            (Some(f), _) => f,
            (None, Some("json")) => OutFormat::Json,
            (None, Some("csv") | None) => OutFormat::Csv,
            (None, Some(other)) => {
                return Err(Failure::Config(format!(
                    "cannot infer the output format from `.{other}`; pass --out-format"
                )))
            }
        };
        Ok(OutputSpec {
            path: path.map(Path::to_path_buf),
            format,
        })
    }
}

/// Pairs `(i, j, value)` with `i < j`, skipping exact zeros.
fn nonzero_pairs(result: &Attributions, row: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let h = result.num_features();
    (0..h)
        .flat_map(move |i| (i + 1..h).map(move |j| (i, j)))
        .map(move |(i, j)| (i, j, result.pair(row, i, j)))
        .filter(|&(_, _, v)| v != 0.0)
}

fn to_csv(result: &Attributions, features: &[String]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match result.order() {
        Order::Singles => {
            w.write_record(std::iter::once("row_id").chain(features.iter().map(String::as_str)))?;
            for r in 0..result.rows() {
                let mut rec = vec![r.to_string()];
                rec.extend(result.values(r).iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        Order::Pairs => {
            w.write_record(["row_id", "feature_i", "feature_j", "value"])?;
            for r in 0..result.rows() {
                for (i, j, v) in nonzero_pairs(result, r) {
                    w.write_record([r.to_string(), features[i].clone(), features[j].clone(), v.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(w.into_inner().expect("flushed"))
}

fn to_json(result: &Attributions, features: &[String], kind: MetricKind, mode: &str) -> Vec<u8> {
    let rows: Vec<_> = (0..result.rows())
        .map(|r| match result.order() {
            Order::Singles => json!({ "row_id": r, "values": result.values(r) }),
            Order::Pairs => {
                let pairs: Vec<_> = nonzero_pairs(result, r)
                    .map(|(i, j, v)| json!({ "feature_i": features[i], "feature_j": features[j], "value": v }))
                    .collect();
                json!({ "row_id": r, "pairs": pairs })
            }
        })
        .collect();
    let doc = json!({
        "metric": kind.name(),
        "mode": mode,
        "features": features,
        "rows": rows,
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("plain values serialize");
    out.push(b'\n');
    out
}

pub fn write_attributions(
    spec: &OutputSpec,
    result: &Attributions,
    features: &[String],
    kind: MetricKind,
    mode: &str,
) -> Result<(), Failure> {
    let bytes = match spec.format {
        OutFormat::Csv => to_csv(result, features).map_err(|e| Failure::Io(format!("writing CSV: {e}")))?,
        OutFormat::Json => to_json(result, features, kind, mode),
    };
    match &spec.path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}
