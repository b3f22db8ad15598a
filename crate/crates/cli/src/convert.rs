//! `convert-dataset`: IDX or CSV into the binary dataset format.

use crate::error::{CliError, CliResult};
use crate::problem::{create, open, read_dataset};
use plrates::io::{read_idx, write_binary_dataset, Dataset};
use std::io::{BufReader, Write};
use std::path::Path;

pub struct ConvertSpec<'a> {
    pub input: &'a Path,
    pub format: &'a str,
    pub labels: Option<&'a Path>,
    pub positive_class: Option<f64>,
    pub limit: Option<usize>,
    pub output: &'a Path,
}

/// Targets are label values, or 1/0 against `positive_class`.
fn relabel(y: f64, positive: Option<f64>) -> f64 {
    match positive {
        Some(c) => f64::from(u8::from(y == c)),
        None => y,
    }
}

pub fn convert(spec: &ConvertSpec) -> CliResult<Dataset> {
    let mut ds = match spec.format {
        "idx" => {
            let labels = spec.labels.ok_or_else(|| CliError::usage("idx input needs --labels"))?;
            let (dims, pixels) = read_idx(BufReader::new(open(spec.input)?))?;
            let (ldims, ys) = read_idx(BufReader::new(open(labels)?))?;
            let n = *dims.first().ok_or_else(|| CliError::data("IDX image file has no dimensions"))?;
            if ldims.len() != 1 || ldims[0] != n {
                return Err(CliError::data(format!("{n} images but labels have shape {ldims:?}")));
            }
            let width = pixels.len().checked_div(n).unwrap_or(0);
            let inputs: Vec<Vec<f64>> = pixels.chunks(width.max(1)).take(n).map(<[f64]>::to_vec).collect();
            Dataset { inputs, targets: ys }
        }
        "csv" | "bin" => read_dataset(spec.input, Some(spec.format))?,
        other => return Err(CliError::usage(format!("unknown input format {other:?}; expected idx, csv or bin"))),
    };
    if let Some(limit) = spec.limit {
        ds.inputs.truncate(limit);
        ds.targets.truncate(limit);
    }
    for y in &mut ds.targets {
        *y = relabel(*y, spec.positive_class);
    }
    if ds.inputs.is_empty() {
        return Err(CliError::data("dataset is empty"));
    }
    let mut w = create(spec.output)?;
    write_binary_dataset(&mut w, &ds)?;
    w.flush()?;
    Ok(ds)
}
