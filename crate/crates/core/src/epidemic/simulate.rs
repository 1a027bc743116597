use serde::{Deserialize, Serialize};

use super::metrics::ArrivalTable;
use super::{advance, DiseaseParams, EpidemicState, FlowSchedule, Scratch};
use crate::error::{Error, Result};
use crate::flow::FlowMatrix;
use crate::period::{PeriodIndex, HOURS_PER_DAY};

/// One introduction: `i0` infected persons placed at `seed_location` at
/// the first hour of `seed_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed_location: usize,
    pub seed_time: PeriodIndex,
    pub i0: f64,
    pub params: DiseaseParams,
    pub horizon_days: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// A location counts as infected once its `I` reaches this many persons.
    pub arrival_threshold: f64,
    /// The run stops early once total `I` falls below this.
    pub extinction_threshold: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            arrival_threshold: 1.0,
            extinction_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DailyTotals {
    pub day: usize,
    pub hour: usize,
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOutput {
    pub arrivals: ArrivalTable,
    /// City-wide totals at the start of each day, plus the final state.
    pub daily: Vec<DailyTotals>,
    pub peak_day: usize,
    pub peak_infected: f64,
    /// Persons ever infected: total population minus final `S`.
    pub final_size: f64,
    pub hours_run: usize,
    pub final_state: EpidemicState,
}

pub fn simulate(
    scenario: &Scenario,
    hourly: &[FlowMatrix],
    populations: &[f64],
) -> Result<SimulationOutput> {
    let schedule = FlowSchedule::new(hourly)?;
    simulate_with(&schedule, scenario, populations, &SimOptions::default(), |_| {})
}

/// Runs one scenario, calling `observe` with the initial state and after
/// every hourly step.
pub fn simulate_with<F>(
    schedule: &FlowSchedule<'_>,
    scenario: &Scenario,
    populations: &[f64],
    options: &SimOptions,
    mut observe: F,
) -> Result<SimulationOutput>
where
    F: FnMut(&EpidemicState),
{
    let n = schedule.locations();
    if populations.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: populations.len(),
        });
    }
    if let Some(k) = populations.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::Config(format!("location {k} population must be positive")));
    }
    scenario.params.check()?;
    let seed = scenario.seed_location;
    if seed >= n {
        return Err(Error::Scenario(format!(
            "seed location {seed} outside {n} locations"
        )));
    }
    if !(scenario.i0 >= 1.0 && scenario.i0 <= populations[seed]) {
        return Err(Error::Scenario(format!(
            "i0 = {} must lie in [1, {}] (population of location {seed})",
            scenario.i0, populations[seed]
        )));
    }
    if scenario.horizon_days == 0 {
        return Err(Error::Scenario("horizon must be at least one day".into()));
    }

    let start = scenario.seed_time.first_hour_of_week();
    let horizon_hours = scenario.horizon_days * HOURS_PER_DAY;
    let total_population: f64 = populations.iter().sum();

    let mut state = EpidemicState::susceptible(populations);
    state.s[seed] -= scenario.i0;
    state.i[seed] += scenario.i0;

    let mut arrivals = ArrivalTable::new(start, scenario.horizon_days, n);
    arrivals.record(seed, 0);

    let totals = |state: &EpidemicState| DailyTotals {
        day: state.hour / HOURS_PER_DAY,
        hour: state.hour,
        s: state.total_s(),
        i: state.total_i(),
        r: state.total_r(),
    };
    let mut daily = vec![totals(&state)];
    let (mut peak_hour, mut peak_infected) = (0, state.total_i());
    let mut scratch = Scratch::default();
    observe(&state);

    for k in 0..horizon_hours {
        advance(
            &mut state,
            schedule.at(start + k),
            &scenario.params,
            populations,
            &mut scratch,
        )?;
        observe(&state);
        for (loc, &inf) in state.i.iter().enumerate() {
            if inf >= options.arrival_threshold {
                arrivals.record(loc, k as u32);
            }
        }
        let infected = state.total_i();
        if infected > peak_infected {
            peak_infected = infected;
            peak_hour = state.hour;
        }
        if state.hour % HOURS_PER_DAY == 0 {
            daily.push(totals(&state));
        }
        if infected < options.extinction_threshold {
            break;
        }
    }
    if state.hour % HOURS_PER_DAY != 0 {
        daily.push(totals(&state));
    }

    Ok(SimulationOutput {
        arrivals,
        daily,
        peak_day: peak_hour / HOURS_PER_DAY,
        peak_infected,
        final_size: total_population - state.total_s(),
        hours_run: state.hour,
        final_state: state,
    })
}
