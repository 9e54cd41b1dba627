//! Cartesian parameter sweeps. Points run concurrently and are collected in
//! enumeration order (first axis outermost), so output never depends on the
//! worker count.

use rayon::prelude::*;
use toml::Value;

use crate::commands;
use crate::config::{Params, SweepSpec};
use crate::report::{Out, Report, Table};

fn cell(v: &Value) -> Out {
    match v {
        Value::Float(x) => Out::Num(*x),
        Value::Integer(i) => Out::Int(*i),
        Value::String(s) => Out::Str(s.clone()),
        Value::Boolean(b) => Out::Bool(*b),
        other => Out::Str(other.to_string()),
    }
}

/// Index tuples of the grid, last axis fastest.
fn enumerate(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut points = vec![Vec::new()];
    for &k in sizes {
        points = points.into_iter().flat_map(|p| (0..k).map(move |i| [p.clone(), vec![i]].concat())).collect();
    }
    points
}

/// Rows of one point's report as `(key, value)` lists.
fn rows_of(r: &Report) -> Vec<Vec<(String, Out)>> {
    match &r.table {
        Some(t) => t.rows.iter().map(|row| t.header.iter().cloned().zip(row.iter().cloned()).collect()).collect(),
        None => vec![r.scalars.clone()],
    }
}

pub fn run(spec: &SweepSpec, base: &Params) -> Report {
    let sizes: Vec<usize> = spec.axes.iter().map(|a| a.values.len()).collect();
    let points = enumerate(&sizes);
    let results: Vec<_> = points
        .par_iter()
        .map(|idx| {
            let mut p = base.clone();
            for (axis, &i) in spec.axes.iter().zip(idx) {
                // Values were checked when the config was loaded.
                p.set(&axis.name, &axis.values[i]).expect("validated sweep value");
            }
            let out = commands::run(&spec.command, &p);
            if let Err(e) = &out {
                log::warn!("sweep point {idx:?} failed: {e}");
            }
            out
        })
        .collect();

    // Report keys that repeat an axis name would duplicate its column.
    let mut keys: Vec<String> = Vec::new();
    for r in results.iter().flatten() {
        for row in rows_of(r) {
            for (k, _) in row {
                if !keys.contains(&k) && !spec.axes.iter().any(|a| a.name == k) {
                    keys.push(k);
                }
            }
        }
    }
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.name.clone()).collect();
    header.push("status".into());
    header.extend(keys.iter().cloned());
    header.push("message".into());
    let mut table = Table { header, rows: Vec::new() };
    for (idx, res) in points.iter().zip(&results) {
        let lead: Vec<Out> = spec.axes.iter().zip(idx).map(|(a, &i)| cell(&a.values[i])).collect();
        match res {
            Ok(r) => {
                for row in rows_of(r) {
                    let mut line = lead.clone();
                    line.push("ok".into());
                    line.extend(keys.iter().map(|k| row.iter().find(|(rk, _)| rk == k).map_or(Out::Null, |(_, v)| v.clone())));
                    line.push(Out::Null);
                    table.rows.push(line);
                }
            }
            Err(e) => {
                let mut line = lead.clone();
                line.push(if e.exit_code() == 2 { "invalid".into() } else { "failed".into() });
                line.extend(keys.iter().map(|_| Out::Null));
                line.push(e.to_string().into());
                table.rows.push(line);
            }
        }
    }
    Report::default().with_table(table)
}
