//! Result rows and their CSV form.

use std::io;
use std::path::Path;

use serde::Serialize;

use super::scheme::Scheme;
use super::sim::EpisodeResult;
use crate::error::Result;
use crate::metrics::{Counters, MetricsSnapshot};

/// Window index used for the whole-episode row.
pub const CUMULATIVE: i64 = -1;

pub const RESULT_HEADER: [&str; 9] = [
    "scheme",
    "seed",
    "cache_size_bytes",
    "window_index",
    "avg_hops",
    "hit_ratio",
    "reduced_load_ratio",
    "unsatisfied_ratio",
    "total_requests",
];

/// Marker written in place of metrics for a window without requests.
pub const EMPTY: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub seed: u64,
    pub cache_size_bytes: u64,
    pub window_index: i64,
    pub counters: Counters,
    pub snapshot: Option<MetricsSnapshot>,
}

impl ResultRow {
    fn sort_key(&self) -> (&'static str, u64, u64, i64) {
        (self.scheme.name(), self.cache_size_bytes, self.seed, self.window_index)
    }
}

/// The cumulative row followed by one row per window.
pub fn rows_for(result: &EpisodeResult) -> Vec<ResultRow> {
    let mut rows = vec![ResultRow {
        scheme: result.scheme,
        seed: result.seed,
        cache_size_bytes: result.cache_size_bytes,
        window_index: CUMULATIVE,
        counters: result.counters,
        snapshot: result.snapshot,
    }];
    rows.extend(result.windows.iter().map(|w| ResultRow {
        scheme: result.scheme,
        seed: result.seed,
        cache_size_bytes: result.cache_size_bytes,
        window_index: i64::from(w.window_index),
        counters: w.counters,
        snapshot: w.snapshot,
    }));
    rows
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

fn metric_fields(s: Option<&MetricsSnapshot>) -> [String; 4] {
    match s {
        Some(s) => [
            s.avg_hops.to_string(),
            s.hit_ratio.to_string(),
            s.reduced_load_ratio.to_string(),
            s.unsatisfied_ratio.to_string(),
        ],
        None => std::array::from_fn(|_| EMPTY.to_string()),
    }
}

/// Writes rows in canonical order regardless of input order.
pub fn write_csv<W: io::Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(RESULT_HEADER)?;
    for r in &sorted {
        let [hops, hit, load, uns] = metric_fields(r.snapshot.as_ref());
        w.write_record([
            r.scheme.name().to_string(),
            r.seed.to_string(),
            r.cache_size_bytes.to_string(),
            r.window_index.to_string(),
            hops,
            hit,
            load,
            uns,
            r.counters.requests.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, io::BufWriter::new(file))
}

/// Mean and sample standard deviation of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// `None` for an empty sample; a single value has zero spread.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanStd { mean, std })
    }
}
