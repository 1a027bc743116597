//! Maximum-probability temporal paths through one day's four period
//! matrices, and the daily coherence statistics derived from them.
//!
//! A path from `i` to `j` moves along exactly one edge in each period of a
//! contiguous window of periods (morning..evening), starting at `i` and
//! ending at `j`. Its probability is the product of the traversed flow
//! entries; only moves inside the window count. Probabilities are
//! accumulated as sums of natural logs, left to right from the origin.
//! Among equally likely paths the one with fewer moves wins, then the
//! lexicographically smallest node sequence, then the earlier start.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{FlowMatrix, PeriodFlows};
use crate::period::{Period, DAYS_PER_WEEK, PERIODS_PER_DAY};

/// Largest registry the exhaustive enumeration accepts.
pub const BRUTE_FORCE_MAX_LOCATIONS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalPath {
    pub day: usize,
    /// Period of the first move.
    pub start: Period,
    /// Visited locations, origin first; one move per consecutive pair.
    pub nodes: Vec<usize>,
    pub log_probability: f64,
}

impl TemporalPath {
    pub fn probability(&self) -> f64 {
        self.log_probability.exp()
    }

    pub fn moves(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn render(&self) -> String {
        self.nodes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }

    /// `Less` means `self` is the preferred path.
    fn preference(&self, other: &TemporalPath) -> Ordering {
        other
            .log_probability
            .partial_cmp(&self.log_probability)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.nodes.len().cmp(&other.nodes.len()))
            .then_with(|| self.nodes.cmp(&other.nodes))
            .then_with(|| self.start.cmp(&other.start))
    }
}

fn keep_better(slot: &mut Option<TemporalPath>, candidate: TemporalPath) {
    match slot {
        Some(current) if current.preference(&candidate) != Ordering::Greater => {}
        _ => *slot = Some(candidate),
    }
}

fn check_day(periods: &[&FlowMatrix; PERIODS_PER_DAY]) -> Result<usize> {
    let n = periods[0].dim();
    for m in periods.iter() {
        if m.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: m.dim(),
            });
        }
    }
    Ok(n)
}

/// Best path from `source` to every location (`None` at `source` itself
/// and for unreachable targets).
pub fn best_paths_from(
    source: usize,
    day: usize,
    periods: &[&FlowMatrix; PERIODS_PER_DAY],
) -> Vec<Option<TemporalPath>> {
    let n = periods[0].dim();
    let mut best: Vec<Option<TemporalPath>> = vec![None; n];
    for start in 0..PERIODS_PER_DAY {
        // Per node, the preferred walk of the current length from `source`.
        let mut frontier: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
        frontier[source] = Some((0.0, vec![source]));
        for matrix in periods.iter().skip(start) {
            let mut next: Vec<Option<(f64, Vec<usize>)>> = vec![None; n];
            for (u, entry) in frontier.iter().enumerate() {
                let Some((logp, nodes)) = entry else { continue };
                for (v, &f) in matrix.row(u).iter().enumerate() {
                    if f <= 0.0 {
                        continue;
                    }
                    let cand = logp + f.ln();
                    let replace = match &next[v] {
                        None => true,
                        Some((best_logp, best_nodes)) => {
                            cand > *best_logp || (cand == *best_logp && nodes < best_nodes)
                        }
                    };
                    if replace {
                        let mut walk = nodes.clone();
                        walk.push(v);
                        next[v] = Some((cand, walk));
                    }
                }
            }
            for (v, entry) in next.iter().enumerate() {
                if v == source {
                    continue;
                }
                if let Some((logp, nodes)) = entry {
                    keep_better(
                        &mut best[v],
                        TemporalPath {
                            day,
                            start: Period::ALL[start],
                            nodes: nodes.clone(),
                            log_probability: *logp,
                        },
                    );
                }
            }
            frontier = next;
        }
    }
    best
}

/// Most probable path from `i` to `j` on `day`, or `None` if unreachable.
pub fn best_path(
    i: usize,
    j: usize,
    day: usize,
    periods: &[&FlowMatrix; PERIODS_PER_DAY],
) -> Result<Option<TemporalPath>> {
    let n = check_day(periods)?;
    if i >= n || j >= n {
        return Err(Error::Dimension {
            expected: n,
            got: i.max(j) + 1,
        });
    }
    if i == j {
        return Err(Error::Config("temporal path endpoints must differ".into()));
    }
    Ok(best_paths_from(i, day, periods).swap_remove(j))
}

/// Exhaustive enumeration of every window and node sequence; the reference
/// for [`best_path`] on small instances.
pub fn brute_force_paths(
    i: usize,
    j: usize,
    day: usize,
    periods: &[&FlowMatrix; PERIODS_PER_DAY],
) -> Result<Option<TemporalPath>> {
    let n = check_day(periods)?;
    if n > BRUTE_FORCE_MAX_LOCATIONS {
        return Err(Error::TooManyLocations {
            max: BRUTE_FORCE_MAX_LOCATIONS,
            got: n,
        });
    }
    if i == j || i >= n || j >= n {
        return Err(Error::Config(format!("invalid endpoints ({i}, {j})")));
    }
    let mut best = None;
    for start in 0..PERIODS_PER_DAY {
        for moves in 1..=(PERIODS_PER_DAY - start) {
            let inner = moves - 1;
            let combos = n.pow(inner as u32);
            'walk: for code in 0..combos {
                let mut nodes = Vec::with_capacity(moves + 1);
                nodes.push(i);
                let mut c = code;
                let mut digits = vec![0; inner];
                for d in digits.iter_mut().rev() {
                    *d = c % n;
                    c /= n;
                }
                nodes.extend(digits);
                nodes.push(j);
                let mut logp = 0.0;
                for (step, pair) in nodes.windows(2).enumerate() {
                    let f = periods[start + step].get(pair[0], pair[1]);
                    if f <= 0.0 {
                        continue 'walk;
                    }
                    logp += f.ln();
                }
                keep_better(
                    &mut best,
                    TemporalPath {
                        day,
                        start: Period::ALL[start],
                        nodes,
                        log_probability: logp,
                    },
                );
            }
        }
    }
    Ok(best)
}

/// All ordered pairs for one day: `paths[i][j]`.
pub fn daily_paths(
    day: usize,
    periods: &[&FlowMatrix; PERIODS_PER_DAY],
) -> Result<Vec<Vec<Option<TemporalPath>>>> {
    let n = check_day(periods)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| best_paths_from(i, day, periods))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceRow {
    pub day: usize,
    /// `C_d`: minimum best-path probability over ordered pairs.
    pub coherence: f64,
    /// `delta_d`: mean best-path probability over ordered pairs.
    pub avg_distance: f64,
    /// First ordered pair (row-major) attaining the minimum.
    pub argmin: Option<(usize, usize)>,
    pub unreachable_pairs: usize,
}

/// Coherence and average distance from a day's all-pairs paths;
/// unreachable pairs count as probability 0.
pub fn coherence_from_paths(day: usize, paths: &[Vec<Option<TemporalPath>>]) -> CoherenceRow {
    let n = paths.len();
    let mut row = CoherenceRow {
        day,
        coherence: 0.0,
        avg_distance: 0.0,
        argmin: None,
        unreachable_pairs: 0,
    };
    if n < 2 {
        return row;
    }
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for (i, targets) in paths.iter().enumerate() {
        for (j, p) in targets.iter().enumerate() {
            if i == j {
                continue;
            }
            let prob = p.as_ref().map_or(0.0, TemporalPath::probability);
            if p.is_none() {
                row.unreachable_pairs += 1;
            }
            if prob < min {
                min = prob;
                row.argmin = Some((i, j));
            }
            sum += prob;
        }
    }
    row.coherence = min;
    row.avg_distance = sum / (n * (n - 1)) as f64;
    row
}

pub fn daily_coherence(day: usize, periods: &[&FlowMatrix; PERIODS_PER_DAY]) -> Result<CoherenceRow> {
    let paths = daily_paths(day, periods)?;
    Ok(coherence_from_paths(day, &paths))
}

/// One coherence row per day of the week.
pub fn weekly_coherence(flows: &PeriodFlows) -> Result<Vec<CoherenceRow>> {
    (0..DAYS_PER_WEEK)
        .map(|d| daily_coherence(d, &flows.day(d)))
        .collect()
}
