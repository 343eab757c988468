//! Trace and comparison CSV writers.
//!
//! Floats use Rust's shortest round-trip formatting, so every value reloads
//! to the same bits.

use std::collections::BTreeMap;
use std::io::{self, Write};

use shufflevr::optim::Trace;

pub const TRACE_HEADER: &str =
    "epoch,grad_evals,grad_evals_over_n,dist_sq,dist_sq_normalized,func_gap,grad_norm_sq,ergodic_gap,bound";

/// Writes the header, one row per record, and a terminal `diverged` row with
/// the diagnostic in the last column if the run blew up.
pub fn write_trace<W: Write>(mut w: W, trace: &Trace, n: usize, diverged: Option<&str>) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    let d0 = trace.initial_dist_sq();
    for r in &trace.records {
        let normalized = if d0 > 0.0 { (r.dist_sq / d0).to_string() } else { String::new() };
        let bound = r.bound.map(|b| b.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.grad_evals,
            r.grad_evals as f64 / n as f64,
            r.dist_sq,
            normalized,
            r.func_gap,
            r.grad_norm_sq,
            r.ergodic_gap,
            bound
        )?;
    }
    if let Some(message) = diverged {
        writeln!(w, "diverged,,,,,,,,\"{}\"", message.replace('"', "'"))?;
    }
    Ok(())
}

pub fn trace_to_string(trace: &Trace, n: usize, diverged: Option<&str>) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace, n, diverged).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Joins traces on their gradient-evaluation count. Rows are keyed by
/// `grad_evals/n`; a trace with no record at a key gets a blank cell.
pub fn write_aligned<W: Write>(mut w: W, columns: &[(String, &Trace)], n: usize) -> io::Result<()> {
    let mut rows: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for (k, (_, trace)) in columns.iter().enumerate() {
        let d0 = trace.initial_dist_sq();
        for r in &trace.records {
            let cells = rows.entry(r.grad_evals).or_insert_with(|| vec![None; columns.len()]);
            cells[k] = Some(if d0 > 0.0 { r.dist_sq / d0 } else { r.dist_sq });
        }
    }
    write!(w, "grad_evals_over_n")?;
    for (label, _) in columns {
        write!(w, ",{label}")?;
    }
    writeln!(w)?;
    for (evals, cells) in rows {
        write!(w, "{}", evals as f64 / n as f64)?;
        for c in cells {
            match c {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
