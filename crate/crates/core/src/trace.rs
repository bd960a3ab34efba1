//! CSV trace format.
//!
//! One row per step. Columns, for state dimension `n`, input dimension `m`
//! and `M` sensors:
//!
//! ```text
//! schema_version, step, x_true_0..x_true_{n-1}, u_0..u_{m-1},
//! est_available, est_0..est_{n-1}, recv_0..recv_{M-1},
//! origin_0..origin_{M-1}, applied_origin, delta_dev, cost
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! value. Unavailable estimates, origins and deviations are empty cells;
//! flags are `0`/`1`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::ncs::TraceRecord;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

pub fn header(n: usize, m: usize, sensors: usize) -> Vec<String> {
    let mut h = vec!["schema_version".to_string(), "step".to_string()];
    h.extend((0..n).map(|j| format!("x_true_{j}")));
    h.extend((0..m).map(|j| format!("u_{j}")));
    h.push("est_available".into());
    h.extend((0..n).map(|j| format!("est_{j}")));
    h.extend((0..sensors).map(|i| format!("recv_{i}")));
    h.extend((0..sensors).map(|i| format!("origin_{i}")));
    h.extend(["applied_origin", "delta_dev", "cost"].map(String::from));
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = records.first() else {
        w.flush()?;
        return Ok(());
    };
    let n = first.x_true.len();
    let m = first.u_applied.len();
    let sensors = first.received.len();
    w.write_record(header(n, m, sensors))?;
    for r in records {
        if r.x_true.len() != n || r.u_applied.len() != m || r.received.len() != sensors || r.origin.len() != sensors {
            return Err(Error::dim(
                format!("trace record {}", r.step),
                "consistent widths",
                "mixed widths",
            ));
        }
        let mut row = vec![TRACE_SCHEMA_VERSION.to_string(), r.step.to_string()];
        row.extend(r.x_true.iter().map(f64::to_string));
        row.extend(r.u_applied.iter().map(f64::to_string));
        row.push(u8::from(r.estimate.is_some()).to_string());
        match &r.estimate {
            Some(e) => row.extend(e.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        row.extend(r.received.iter().map(|&b| u8::from(b).to_string()));
        row.extend(r.origin.iter().map(|o| opt(*o)));
        row.push(opt(r.applied_origin));
        row.push(opt(r.delta_dev));
        row.push(r.running_cost.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_string(records: &[TraceRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_trace(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::config("trace", msg)
}

fn parse<T: std::str::FromStr>(cell: &str, col: &str) -> Result<T> {
    cell.parse()
        .map_err(|_| bad(format!("column {col}: cannot parse {cell:?}")))
}

fn parse_opt<T: std::str::FromStr>(cell: &str, col: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse(cell, col).map(Some)
    }
}

/// Parses a trace written by [`write_trace`].
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let head = rd.headers()?.clone();
    let count = |prefix: &str| head.iter().filter(|h| h.starts_with(prefix)).count();
    let n = count("x_true_");
    let m = count("u_");
    let sensors = count("recv_");
    if head.iter().collect::<Vec<_>>() != header(n, m, sensors) {
        return Err(bad("header does not match the schema"));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let cells: Vec<&str> = row.iter().collect();
        let version: u32 = parse(cells[0], "schema_version")?;
        if version != TRACE_SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema version {version}")));
        }
        let mut at = 1;
        let mut take = |len: usize| {
            let s = &cells[at..at + len];
            at += len;
            s
        };
        let step = parse(take(1)[0], "step")?;
        let floats = |s: &[&str], col: &str| -> Result<Vector> {
            Ok(Vector::from_vec(
                s.iter().map(|c| parse(c, col)).collect::<Result<_>>()?,
            ))
        };
        let x_true = floats(take(n), "x_true")?;
        let u_applied = floats(take(m), "u")?;
        let available = parse::<u8>(take(1)[0], "est_available")? == 1;
        let est = take(n);
        let estimate = if available { Some(floats(est, "est")?) } else { None };
        let received = take(sensors)
            .iter()
            .map(|c| parse::<u8>(c, "recv").map(|b| b == 1))
            .collect::<Result<_>>()?;
        let origin = take(sensors)
            .iter()
            .map(|c| parse_opt(c, "origin"))
            .collect::<Result<_>>()?;
        let applied_origin = parse_opt(take(1)[0], "applied_origin")?;
        let delta_dev = parse_opt(take(1)[0], "delta_dev")?;
        let running_cost = parse(take(1)[0], "cost")?;
        out.push(TraceRecord {
            step,
            x_true,
            u_applied,
            estimate,
            received,
            origin,
            applied_origin,
            delta_dev,
            running_cost,
        });
    }
    Ok(out)
}
