//! Batches of independent introduction scenarios and the per-location risk
//! aggregates built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{gamma_threshold, phi_curve, ArrivalTable};
use super::simulate::{simulate_with, Scenario, SimOptions};
use super::{DiseaseParams, FlowSchedule};
use crate::error::{Error, Result};
use crate::flow::FlowMatrix;
use crate::period::PeriodIndex;

/// The threshold behind the per-location outward-risk summary.
pub const GAMMA10: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub locations: Vec<usize>,
    pub i0: Vec<f64>,
    pub params: Vec<DiseaseParams>,
    pub periods: Vec<PeriodIndex>,
    pub thresholds: Vec<f64>,
    pub horizon_days: usize,
}

impl ScenarioGrid {
    /// Every location and weekly period, `I0 in {1, 100, 10000}`, the low
    /// and high transmission rates, `T in {5%, 10%, 25%, 50%}`, 200 days.
    pub fn full(locations: usize) -> Self {
        ScenarioGrid {
            locations: (0..locations).collect(),
            i0: vec![1.0, 100.0, 10_000.0],
            params: vec![DiseaseParams::low(), DiseaseParams::high()],
            periods: PeriodIndex::all().collect(),
            thresholds: vec![0.05, 0.10, 0.25, 0.50],
            horizon_days: 200,
        }
    }

    pub fn cohorts(&self) -> usize {
        self.params.len() * self.i0.len()
    }

    pub fn len(&self) -> usize {
        self.cohorts() * self.locations.len() * self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scenarios in id order: parameter set, then `I0`, then seed location,
    /// then seed period. Returns `(cohort, scenario)` pairs.
    pub fn scenarios(&self) -> Vec<(usize, Scenario)> {
        let mut out = Vec::with_capacity(self.len());
        for (pi, params) in self.params.iter().enumerate() {
            for (ii, &i0) in self.i0.iter().enumerate() {
                let cohort = pi * self.i0.len() + ii;
                for &seed_location in &self.locations {
                    for &seed_time in &self.periods {
                        out.push((
                            cohort,
                            Scenario {
                                seed_location,
                                seed_time,
                                i0,
                                params: *params,
                                horizon_days: self.horizon_days,
                            },
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Config(format!("threshold {t} outside (0, 1]")));
        }
        if self.horizon_days == 0 {
            return Err(Error::Config("horizon must be at least one day".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioMetrics {
    /// `Gamma_T` for each grid threshold, in grid order.
    pub gammas: Vec<Option<usize>>,
    pub gamma10: Option<usize>,
    pub arrivals: ArrivalTable,
    pub peak_day: usize,
    pub final_size: f64,
    pub hours_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub id: usize,
    pub cohort: usize,
    pub scenario: Scenario,
    pub result: std::result::Result<ScenarioMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationSummary {
    pub location: usize,
    /// Mean `Gamma_10%` over runs seeded here that reached 10%.
    pub mean_gamma10: Option<f64>,
    pub gamma10_unreached: usize,
    /// Mean days to first infection over runs seeded elsewhere that reached it.
    pub mean_chi: Option<f64>,
    pub unreached_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub cohort: usize,
    pub params: DiseaseParams,
    pub i0: f64,
    pub rows: Vec<LocationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub grid: ScenarioGrid,
    pub locations: usize,
    pub outcomes: Vec<ScenarioOutcome>,
    /// Aggregates pooled over every scenario of the grid.
    pub summary: Vec<LocationSummary>,
    pub cohorts: Vec<CohortSummary>,
}

impl SweepResult {
    pub fn failed(&self) -> impl Iterator<Item = (usize, &str)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.id, e.as_str())))
    }
}

/// Runs every scenario of `grid` on the current rayon pool. Results are
/// ordered by scenario id regardless of scheduling. A failing scenario is
/// recorded, not fatal.
pub fn sweep(grid: &ScenarioGrid, hourly: &[FlowMatrix], populations: &[f64]) -> Result<SweepResult> {
    grid.validate()?;
    let schedule = FlowSchedule::new(hourly)?;
    let n = schedule.locations();
    if let Some(&l) = grid.locations.iter().find(|&&l| l >= n) {
        return Err(Error::Config(format!("sweep location {l} outside {n} locations")));
    }
    let options = SimOptions::default();

    let outcomes: Vec<ScenarioOutcome> = grid
        .scenarios()
        .into_par_iter()
        .enumerate()
        .map(|(id, (cohort, scenario))| {
            let result = simulate_with(&schedule, &scenario, populations, &options, |_| {})
                .map(|out| ScenarioMetrics {
                    gammas: grid
                        .thresholds
                        .iter()
                        .map(|&t| gamma_threshold(&out.arrivals, t))
                        .collect(),
                    gamma10: gamma_threshold(&out.arrivals, GAMMA10),
                    peak_day: out.peak_day,
                    final_size: out.final_size,
                    hours_run: out.hours_run,
                    arrivals: out.arrivals,
                })
                .map_err(|e| e.to_string());
            ScenarioOutcome {
                id,
                cohort,
                scenario,
                result,
            }
        })
        .collect();

    let summary = summarize(n, outcomes.iter());
    let mut cohorts = Vec::with_capacity(grid.cohorts());
    for (pi, params) in grid.params.iter().enumerate() {
        for (ii, &i0) in grid.i0.iter().enumerate() {
            let cohort = pi * grid.i0.len() + ii;
            cohorts.push(CohortSummary {
                cohort,
                params: *params,
                i0,
                rows: summarize(n, outcomes.iter().filter(|o| o.cohort == cohort)),
            });
        }
    }
    Ok(SweepResult {
        grid: grid.clone(),
        locations: n,
        outcomes,
        summary,
        cohorts,
    })
}

fn summarize<'a>(n: usize, outcomes: impl Iterator<Item = &'a ScenarioOutcome>) -> Vec<LocationSummary> {
    let mut gamma_sum = vec![0.0; n];
    let mut gamma_runs = vec![0usize; n];
    let mut gamma_missing = vec![0usize; n];
    let mut chi_sum = vec![0.0; n];
    let mut chi_runs = vec![0usize; n];
    let mut chi_missing = vec![0usize; n];
    for o in outcomes {
        let Ok(m) = &o.result else { continue };
        let seed = o.scenario.seed_location;
        match m.gamma10 {
            Some(g) => {
                gamma_sum[seed] += g as f64;
                gamma_runs[seed] += 1;
            }
            None => gamma_missing[seed] += 1,
        }
        for loc in (0..n).filter(|&l| l != seed) {
            match m.arrivals.day_of(loc) {
                Some(d) => {
                    chi_sum[loc] += d as f64;
                    chi_runs[loc] += 1;
                }
                None => chi_missing[loc] += 1,
            }
        }
    }
    (0..n)
        .map(|loc| LocationSummary {
            location: loc,
            mean_gamma10: (gamma_runs[loc] > 0).then(|| gamma_sum[loc] / gamma_runs[loc] as f64),
            gamma10_unreached: gamma_missing[loc],
            mean_chi: (chi_runs[loc] > 0).then(|| chi_sum[loc] / chi_runs[loc] as f64),
            unreached_count: chi_missing[loc],
        })
        .collect()
}

/// Mean and range of `Phi(d)` across seed locations for one cohort and
/// seed period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthPoint {
    pub cohort: usize,
    pub seed_time: PeriodIndex,
    pub day: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub runs: usize,
}

pub fn growth_curves(result: &SweepResult) -> Vec<GrowthPoint> {
    let mut out = Vec::new();
    for cohort in 0..result.grid.cohorts() {
        for &seed_time in &result.grid.periods {
            let curves: Vec<Vec<f64>> = result
                .outcomes
                .iter()
                .filter(|o| o.cohort == cohort && o.scenario.seed_time == seed_time)
                .filter_map(|o| o.result.as_ref().ok())
                .map(|m| phi_curve(&m.arrivals))
                .collect();
            if curves.is_empty() {
                continue;
            }
            for day in 0..result.grid.horizon_days {
                let values = curves.iter().map(|c| c[day]);
                let (mut sum, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
                for v in values {
                    sum += v;
                    min = min.min(v);
                    max = max.max(v);
                }
                out.push(GrowthPoint {
                    cohort,
                    seed_time,
                    day,
                    mean: sum / curves.len() as f64,
                    min,
                    max,
                    runs: curves.len(),
                });
            }
        }
    }
    out
}
