//! Point-temperature CSV files with the header `time_s,node_id,temperature_C`.
//!
//! Rows are written sorted by `(time, node)` using the shortest decimal form
//! that reads back to the same `f64`. A full reference solution is stored in
//! the same schema with one row per node and stored time.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::{MeasurementSeries, TransientSolution};

pub const MEASUREMENT_HEADER: [&str; 3] = ["time_s", "node_id", "temperature_C"];

fn csv_error(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn write_rows(path: &Path, rows: impl Iterator<Item = (f64, usize, f64)>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let emit = || -> std::io::Result<()> {
        writeln!(w, "{}", MEASUREMENT_HEADER.join(","))?;
        for (t, node, v) in rows {
            writeln!(w, "{t:?},{node},{v:?}")?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Writes a series; `values` must be finite.
pub fn write_measurements(path: impl AsRef<Path>, series: &MeasurementSeries) -> Result<()> {
    let path = path.as_ref();
    if series.values.len() != series.times.len() || series.values.iter().any(|v| v.len() != series.node_ids.len()) {
        return Err(Error::InvalidArgument("measurement series is ragged".into()));
    }
    let mut order: Vec<usize> = (0..series.node_ids.len()).collect();
    order.sort_by_key(|&m| series.node_ids[m]);
    let mut steps: Vec<usize> = (0..series.times.len()).collect();
    steps.sort_by(|&a, &b| series.times[a].total_cmp(&series.times[b]));
    let rows = steps.into_iter().flat_map(|s| {
        order
            .iter()
            .map(move |&m| (series.times[s], series.node_ids[m], series.values[s][m]))
    });
    write_rows(path, rows)
}

/// Reads a series. Rows may come in any order; every time must carry the same
/// node set and no `(time, node)` pair may repeat. Row numbers in errors count
/// the header as row 1.
pub fn read_measurements(path: impl AsRef<Path>) -> Result<MeasurementSeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => csv_error(path, 1, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| csv_error(path, 1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MEASUREMENT_HEADER {
        return Err(csv_error(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                MEASUREMENT_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut rows: Vec<(f64, usize, f64, usize)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_error(path, row, e.to_string()))?;
        if rec.len() != 3 {
            return Err(csv_error(path, row, format!("expected 3 fields, found {}", rec.len())));
        }
        let t: f64 = rec[0]
            .parse()
            .map_err(|_| csv_error(path, row, format!("bad time `{}`", &rec[0])))?;
        let node: usize = rec[1]
            .parse()
            .map_err(|_| csv_error(path, row, format!("bad node id `{}`", &rec[1])))?;
        let v: f64 = rec[2]
            .parse()
            .map_err(|_| csv_error(path, row, format!("bad temperature `{}`", &rec[2])))?;
        if !t.is_finite() || !v.is_finite() {
            return Err(csv_error(path, row, "values must be finite"));
        }
        rows.push((t, node, v, row));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
        return Err(csv_error(
            path,
            w[0].3.max(w[1].3),
            format!("duplicate reading for node {} at t = {} s", w[1].1, w[1].0),
        ));
    }

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut node_ids: Option<Vec<usize>> = None;
    let mut start = 0;
    while start < rows.len() {
        let t = rows[start].0;
        let end = start + rows[start..].iter().take_while(|r| r.0 == t).count();
        let nodes: Vec<usize> = rows[start..end].iter().map(|r| r.1).collect();
        match &node_ids {
            None => node_ids = Some(nodes),
            Some(expected) if *expected != nodes => {
                let a: BTreeSet<_> = expected.iter().collect();
                let b: BTreeSet<_> = nodes.iter().collect();
                let odd = a.symmetric_difference(&b).next().map_or(0, |n| **n);
                let row = rows[start..end].iter().map(|r| r.3).min().unwrap_or(0);
                return Err(csv_error(
                    path,
                    row,
                    format!("node set at t = {t} s differs from earlier times (node {odd})"),
                ));
            }
            Some(_) => {}
        }
        times.push(t);
        values.push(rows[start..end].iter().map(|r| r.2).collect());
        start = end;
    }
    Ok(MeasurementSeries {
        node_ids: node_ids.unwrap_or_default(),
        times,
        values,
        noise_stddev: None,
    })
}

/// Writes every `stride`-th stored field (always including the first) for all nodes.
pub fn write_reference(path: impl AsRef<Path>, solution: &TransientSolution, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::InvalidArgument("reference stride must be at least 1".into()));
    }
    let rows = (0..solution.len()).step_by(stride).flat_map(|s| {
        solution.fields[s]
            .iter()
            .enumerate()
            .map(move |(i, &v)| (solution.times[s], i, v))
    });
    write_rows(path.as_ref(), rows)
}

/// Reads a reference written by [`write_reference`]; it must hold every node
/// `0..n_nodes` at each time.
pub fn read_reference(path: impl AsRef<Path>, n_nodes: usize) -> Result<TransientSolution> {
    let path = path.as_ref();
    let series = read_measurements(path)?;
    if series.node_ids.len() != n_nodes || series.node_ids.iter().enumerate().any(|(i, &n)| i != n) {
        return Err(csv_error(
            path,
            1,
            format!(
                "a reference must list all {n_nodes} mesh nodes, found {}",
                series.node_ids.len()
            ),
        ));
    }
    Ok(TransientSolution {
        times: series.times,
        fields: series.values,
        recovered_fq: None,
    })
}
