//! Scheme × cache size × seed sweeps.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::results::{emit_csv, rows_for, sort_rows, MeanStd, ResultRow, CUMULATIVE, EMPTY};
use super::scheme::Scheme;
use super::sim::{run_episode, AgentMode, EpisodeResult};
use super::train::{train, TrainingReport};
use crate::drl::QNetwork;
use crate::error::Result;

/// Per-cell statistics over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub scheme: Scheme,
    pub cache_size_bytes: u64,
    pub window_index: i64,
    /// Seeds with at least one request in the cell.
    pub samples: usize,
    pub avg_hops: Option<MeanStd>,
    pub hit_ratio: Option<MeanStd>,
    pub reduced_load_ratio: Option<MeanStd>,
    pub unsatisfied_ratio: Option<MeanStd>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub episodes: Vec<EpisodeResult>,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
    pub training: Vec<TrainingReport>,
}

/// Averages rows that share (scheme, cache size, window) across seeds.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut cells: BTreeMap<(&'static str, u64, i64), (Scheme, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.scheme.name(), r.cache_size_bytes, r.window_index))
            .or_insert_with(|| (r.scheme, Vec::new()))
            .1
            .push(r);
    }
    cells
        .into_iter()
        .map(|((_, size, window), (scheme, rs))| {
            let snaps: Vec<_> = rs.iter().filter_map(|r| r.snapshot).collect();
            let stat = |f: fn(&crate::metrics::MetricsSnapshot) -> f64| {
                MeanStd::of(&snaps.iter().map(f).collect::<Vec<_>>())
            };
            Aggregate {
                scheme,
                cache_size_bytes: size,
                window_index: window,
                samples: snaps.len(),
                avg_hops: stat(|s| s.avg_hops),
                hit_ratio: stat(|s| s.hit_ratio),
                reduced_load_ratio: stat(|s| s.reduced_load_ratio),
                unsatisfied_ratio: stat(|s| s.unsatisfied_ratio),
            }
        })
        .collect()
}

/// Evaluates every (scheme, cache size, seed) cell. Learned schemes use the
/// given frozen networks; a learned scheme without one is an error.
pub fn evaluate_grid(
    config: &ExperimentConfig,
    agents: &BTreeMap<Scheme, QNetwork>,
) -> Result<Vec<EpisodeResult>> {
    let mut cells = Vec::new();
    for &scheme in &config.schemes {
        for &size in &config.cache_sizes_bytes {
            for &seed in &config.seeds {
                cells.push((scheme, size, seed));
            }
        }
    }
    let mut out = cells
        .par_iter()
        .map(|&(scheme, size, seed)| {
            let mode = match agents.get(&scheme) {
                Some(net) => AgentMode::Frozen(net),
                None if scheme.is_learned() => {
                    return Err(crate::error::Error::Config(format!("no trained agent for {scheme}")))
                }
                None => AgentMode::None,
            };
            run_episode(config, scheme, seed, size, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|r| (r.scheme.name(), r.cache_size_bytes, r.seed));
    Ok(out)
}

pub fn assemble(episodes: Vec<EpisodeResult>, training: Vec<TrainingReport>) -> SweepResult {
    let mut rows: Vec<ResultRow> = episodes.iter().flat_map(rows_for).collect();
    sort_rows(&mut rows);
    let aggregates = aggregate(&rows);
    SweepResult {
        episodes,
        rows,
        aggregates,
        training,
    }
}

/// Trains each learned scheme once at the training cache size, then
/// evaluates all cells with frozen agents.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let learned: Vec<Scheme> = config.schemes.iter().copied().filter(|s| s.is_learned()).collect();
    let trained = learned
        .par_iter()
        .map(|&s| train(config, s))
        .collect::<Result<Vec<_>>>()?;
    let agents: BTreeMap<Scheme, QNetwork> = trained.iter().map(|t| (t.scheme, t.network.clone())).collect();
    let episodes = evaluate_grid(config, &agents)?;
    Ok(assemble(episodes, trained.into_iter().map(|t| t.report).collect()))
}

/// Header `scheme,cache_size_bytes,window_index,samples,` followed by mean
/// and standard deviation columns for each metric.
pub fn write_aggregate_csv<W: io::Write>(aggs: &[Aggregate], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record([
        "scheme",
        "cache_size_bytes",
        "window_index",
        "samples",
        "avg_hops_mean",
        "avg_hops_std",
        "hit_ratio_mean",
        "hit_ratio_std",
        "reduced_load_ratio_mean",
        "reduced_load_ratio_std",
        "unsatisfied_ratio_mean",
        "unsatisfied_ratio_std",
    ])?;
    for a in aggs {
        let mut rec = vec![
            a.scheme.name().to_string(),
            a.cache_size_bytes.to_string(),
            a.window_index.to_string(),
            a.samples.to_string(),
        ];
        for m in [a.avg_hops, a.hit_ratio, a.reduced_load_ratio, a.unsatisfied_ratio] {
            match m {
                Some(m) => rec.extend([m.mean.to_string(), m.std.to_string()]),
                None => rec.extend([EMPTY.to_string(), EMPTY.to_string()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv` and `aggregate.csv` into `dir`.
pub fn write_outputs(result: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    emit_csv(&result.rows, &dir.join("results.csv"))?;
    let file = std::fs::File::create(dir.join("aggregate.csv"))?;
    write_aggregate_csv(&result.aggregates, io::BufWriter::new(file))
}

/// Cumulative rows only.
pub fn cumulative(rows: &[ResultRow]) -> impl Iterator<Item = &ResultRow> {
    rows.iter().filter(|r| r.window_index == CUMULATIVE)
}
