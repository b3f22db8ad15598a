//! Text and binary file formats.
//!
//! * Measure: header `atoms=<K> zeta=<ζ|na> nu=<ν|na>`, then `λ c²` per line, λ decreasing.
//! * Band operator: header `bidiagonal=<N> zeta=<ζ|na> nu=<ν|na>`, then `diag sub target` per
//!   row, where `sub` on row `i` is `J[i+1][i]` (zero on the last row).
//! * Trajectory CSV: header `step,loss,alpha,beta[,p_at_<λ>...]`; a run that stopped early ends
//!   with `#diverged step=N` or `#converged step=N`.
//! * Dataset binary: magic `PLDSET01`, u64 rows, u64 cols, row-major little-endian f64; the
//!   last column is the target.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips exactly.

use crate::engine::{RunStatus, StepRecord};
use crate::error::{Error, Result};
use crate::spectrum::{DiscreteMeasure, MeasureMeta, Operator, OperatorProblem};
use std::io::{BufRead, Read, Write};

pub const DATASET_MAGIC: &[u8; 8] = b"PLDSET01";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "na".into())
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| fmt_err(format!("line {line}: cannot parse number {tok:?}")))
}

/// Parse `key=value` header tokens in the given order.
fn header_fields<'a>(line: &'a str, keys: &[&str]) -> Result<Vec<&'a str>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != keys.len() {
        return Err(fmt_err(format!("header {line:?}: expected fields {keys:?}")));
    }
    toks.iter()
        .zip(keys)
        .map(|(t, k)| {
            t.strip_prefix(k)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| fmt_err(format!("header {line:?}: expected {k}=...")))
        })
        .collect()
}

fn parse_opt(v: &str) -> Result<Option<f64>> {
    if v == "na" {
        Ok(None)
    } else {
        parse_f64(v, 1).map(Some)
    }
}

pub fn write_measure<W: Write>(mut w: W, m: &DiscreteMeasure) -> Result<()> {
    let meta = m.meta();
    writeln!(w, "atoms={} zeta={} nu={}", m.len(), fmt_opt(meta.zeta), fmt_opt(meta.nu))?;
    for (l, c) in m.atoms().iter().zip(m.masses()) {
        writeln!(w, "{l:.16e} {c:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measure<R: BufRead>(r: R) -> Result<DiscreteMeasure> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| fmt_err("empty measure file"))??;
    let f = header_fields(&head, &["atoms", "zeta", "nu"])?;
    let k: usize = f[0].parse().map_err(|_| fmt_err(format!("bad atom count {:?}", f[0])))?;
    let (zeta, nu) = (parse_opt(f[1])?, parse_opt(f[2])?);
    let mut atoms = Vec::with_capacity(k);
    let mut masses = Vec::with_capacity(k);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(fmt_err(format!("line {}: expected `λ c²`", i + 2)));
        };
        atoms.push(parse_f64(a, i + 2)?);
        masses.push(parse_f64(b, i + 2)?);
    }
    if atoms.len() != k {
        return Err(fmt_err(format!("header announces {k} atoms, file has {}", atoms.len())));
    }
    DiscreteMeasure::new(atoms, masses)?.with_meta(MeasureMeta { zeta, nu, ..Default::default() })
}

pub fn write_operator<W: Write>(mut w: W, p: &OperatorProblem, zeta: Option<f64>, nu: Option<f64>) -> Result<()> {
    let Operator::LowerBidiagonal { diag, sub } = &p.operator else {
        return Err(fmt_err("only bidiagonal operators have a band file format"));
    };
    writeln!(w, "bidiagonal={} zeta={} nu={}", diag.len(), fmt_opt(zeta), fmt_opt(nu))?;
    for (i, (d, t)) in diag.iter().zip(&p.target).enumerate() {
        let s = sub.get(i).copied().unwrap_or(0.0);
        writeln!(w, "{d:.16e} {s:.16e} {t:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Band operator with its `(ζ, ν)` header values.
pub fn read_operator<R: BufRead>(r: R) -> Result<(OperatorProblem, Option<f64>, Option<f64>)> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| fmt_err("empty operator file"))??;
    let f = header_fields(&head, &["bidiagonal", "zeta", "nu"])?;
    let n: usize = f[0].parse().map_err(|_| fmt_err(format!("bad dimension {:?}", f[0])))?;
    let (zeta, nu) = (parse_opt(f[1])?, parse_opt(f[2])?);
    let (mut diag, mut sub, mut target) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<&str> = line.split_whitespace().collect();
        if v.len() != 3 {
            return Err(fmt_err(format!("line {}: expected `diag sub target`", i + 2)));
        }
        diag.push(parse_f64(v[0], i + 2)?);
        sub.push(parse_f64(v[1], i + 2)?);
        target.push(parse_f64(v[2], i + 2)?);
    }
    if diag.len() != n || n == 0 {
        return Err(fmt_err(format!("header announces {n} rows, file has {}", diag.len())));
    }
    sub.pop();
    Ok((OperatorProblem::new(Operator::LowerBidiagonal { diag, sub }, target)?, zeta, nu))
}

/// Trajectory content carried by the CSV format.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrajectory {
    pub probe_grid: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub status: RunStatus,
}

pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    probe_grid: &[f64],
    records: &[StepRecord],
    status: RunStatus,
) -> Result<()> {
    let mut head = String::from("step,loss,alpha,beta");
    for p in probe_grid {
        head.push_str(&format!(",p_at_{p}"));
    }
    writeln!(w, "{head}")?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&format!("{},{:.16e},{:.16e},{:.16e}", r.step, r.loss, r.alpha, r.beta));
        for v in &r.probes {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    match status {
        RunStatus::Completed => {}
        RunStatus::Diverged { step } => writeln!(w, "#diverged step={step}")?,
        RunStatus::Converged { step } => writeln!(w, "#converged step={step}")?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<CsvTrajectory> {
    let mut lines = r.lines();
    let head = lines.next().ok_or_else(|| fmt_err("empty trajectory file"))??;
    let cols: Vec<&str> = head.trim().split(',').collect();
    if cols.len() < 4 || cols[..4] != ["step", "loss", "alpha", "beta"] {
        return Err(fmt_err(format!("trajectory header must start with step,loss,alpha,beta; got {head:?}")));
    }
    let probe_grid = cols[4..]
        .iter()
        .map(|c| {
            c.strip_prefix("p_at_")
                .ok_or_else(|| fmt_err(format!("unexpected column {c:?}")))
                .and_then(|v| parse_f64(v, 1))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut records = Vec::new();
    let mut status = RunStatus::Completed;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let ln = i + 2;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            let step = |s: &str| -> Result<usize> {
                s.strip_prefix("step=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| fmt_err(format!("line {ln}: bad marker {t:?}")))
            };
            status = match rest.split_once(' ') {
                Some(("diverged", s)) => RunStatus::Diverged { step: step(s)? },
                Some(("converged", s)) => RunStatus::Converged { step: step(s)? },
                _ => return Err(fmt_err(format!("line {ln}: unknown marker {t:?}"))),
            };
            continue;
        }
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != cols.len() {
            return Err(fmt_err(format!("line {ln}: expected {} fields, got {}", cols.len(), f.len())));
        }
        let step = f[0].parse().map_err(|_| fmt_err(format!("line {ln}: bad step {:?}", f[0])))?;
        records.push(StepRecord {
            step,
            loss: parse_f64(f[1], ln)?,
            alpha: parse_f64(f[2], ln)?,
            beta: parse_f64(f[3], ln)?,
            probes: f[4..].iter().map(|v| parse_f64(v, ln)).collect::<Result<_>>()?,
        });
    }
    Ok(CsvTrajectory { probe_grid, records, status })
}

/// Samples with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if cols < 2 {
            return Err(Error::Data("dataset needs at least one feature and a target column".into()));
        }
        let mut inputs = Vec::with_capacity(rows.len());
        let mut targets = Vec::with_capacity(rows.len());
        for (i, mut r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Data(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            targets.push(r.pop().unwrap());
            inputs.push(r);
        }
        Ok(Self { inputs, targets })
    }
}

/// CSV without header; each row is `x_1,...,x_d,target`. Lines starting with `#` are skipped.
pub fn read_csv_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        rows.push(t.split(',').map(|v| parse_f64(v, i + 1)).collect::<Result<Vec<f64>>>()?);
    }
    Dataset::from_rows(rows)
}

pub fn write_binary_dataset<W: Write>(mut w: W, d: &Dataset) -> Result<()> {
    let cols = d.inputs.first().map(|r| r.len()).unwrap_or(0) + 1;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&(d.inputs.len() as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    for (x, y) in d.inputs.iter().zip(&d.targets) {
        for v in x.iter().chain(std::iter::once(y)) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head).map_err(|_| fmt_err("dataset file shorter than its header"))?;
    if &head[..8] != DATASET_MAGIC {
        return Err(fmt_err("bad dataset magic"));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if Some(buf.len()) != rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) {
        return Err(fmt_err(format!("payload of {} bytes does not match {rows}x{cols}", buf.len())));
    }
    let vals: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Dataset::from_rows(vals.chunks(cols.max(1)).map(|c| c.to_vec()).collect())
}

/// IDX tensor (big-endian header and payload) as dimensions and values.
pub fn read_idx<R: Read>(mut r: R) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| fmt_err("IDX file too short"))?;
    if magic[0] != 0 || magic[1] != 0 {
        return Err(fmt_err("bad IDX magic"));
    }
    let mut dims = Vec::new();
    for _ in 0..magic[3] {
        let mut d = [0u8; 4];
        r.read_exact(&mut d).map_err(|_| fmt_err("IDX header truncated"))?;
        dims.push(u32::from_be_bytes(d) as usize);
    }
    let count: usize = dims.iter().product();
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let width = match magic[2] {
        0x08 | 0x09 => 1,
        0x0B => 2,
        0x0C | 0x0D => 4,
        0x0E => 8,
        t => return Err(fmt_err(format!("unknown IDX element type 0x{t:02x}"))),
    };
    if buf.len() != count * width {
        return Err(fmt_err(format!("IDX payload has {} bytes, expected {}", buf.len(), count * width)));
    }
    let vals = buf
        .chunks_exact(width)
        .map(|c| match magic[2] {
            0x08 => c[0] as f64,
            0x09 => c[0] as i8 as f64,
            0x0B => i16::from_be_bytes([c[0], c[1]]) as f64,
            0x0C => i32::from_be_bytes(c.try_into().unwrap()) as f64,
            0x0D => f32::from_be_bytes(c.try_into().unwrap()) as f64,
            _ => f64::from_be_bytes(c.try_into().unwrap()),
        })
        .collect();
    Ok((dims, vals))
}
