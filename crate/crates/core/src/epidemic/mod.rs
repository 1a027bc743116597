//! Deterministic metapopulation SIR dynamics on hourly flow matrices.
//!
//! Each hour applies, from the start-of-hour state, local transmission
//! `beta * S_i * I_i / N_i` with the static location population `N_i`,
//! recovery `gamma * I_i`, and transport: every compartment `X` at `i`
//! loses `sum_j F_ij X_i` and gains `sum_j F_ji X_j`.

mod metrics;
mod simulate;
mod sweep;

pub use metrics::{gamma_threshold, phi_curve, Arrival, ArrivalTable};
pub use simulate::{simulate, simulate_with, DailyTotals, Scenario, SimOptions, SimulationOutput};
pub use sweep::{
    growth_curves, sweep, CohortSummary, GrowthPoint, LocationSummary, ScenarioGrid,
    ScenarioMetrics, ScenarioOutcome, SweepResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowMatrix;
use crate::period::{Period, HOURS_PER_DAY, HOURS_PER_WEEK};

/// Hourly recovery rate used throughout the reference study.
pub const GAMMA_HOURLY: f64 = 0.33 / 24.0;
/// Hourly transmission rate of the low-R0 (influenza-like) scenario.
pub const BETA_LOW_HOURLY: f64 = 0.5 / 24.0;
/// Hourly transmission rate of the high-R0 scenario.
pub const BETA_HIGH_HOURLY: f64 = 2.33 / 24.0;

/// Largest admissible hourly row sum.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Negative compartment values within this (times the location
/// population, at least 1) are rounding noise and floored to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiseaseParams {
    /// Transmission rate per hour.
    pub beta: f64,
    /// Recovery rate per hour.
    pub gamma: f64,
}

impl DiseaseParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0 && gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Params(format!(
                "beta and gamma must be positive, got beta={beta}, gamma={gamma}"
            )));
        }
        Ok(DiseaseParams { beta, gamma })
    }

    /// `beta = r0 * gamma`.
    pub fn from_r0(r0: f64, gamma: f64) -> Result<Self> {
        Self::new(r0 * gamma, gamma)
    }

    pub fn low() -> Self {
        DiseaseParams {
            beta: BETA_LOW_HOURLY,
            gamma: GAMMA_HOURLY,
        }
    }

    pub fn high() -> Self {
        DiseaseParams {
            beta: BETA_HIGH_HOURLY,
            gamma: GAMMA_HOURLY,
        }
    }

    pub fn r0(&self) -> f64 {
        self.beta / self.gamma
    }

    fn check(&self) -> Result<()> {
        // Zero rates are allowed internally (identity checks, no-transmission runs).
        if !(self.beta >= 0.0 && self.gamma >= 0.0 && self.beta.is_finite() && self.gamma.is_finite())
        {
            return Err(Error::Params(format!(
                "rates must be finite and non-negative, got beta={}, gamma={}",
                self.beta, self.gamma
            )));
        }
        Ok(())
    }
}

/// Per-location compartments at `hour` hours after introduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicState {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub hour: usize,
}

impl EpidemicState {
    /// Everyone susceptible.
    pub fn susceptible(populations: &[f64]) -> Self {
        let n = populations.len();
        EpidemicState {
            s: populations.to_vec(),
            i: vec![0.0; n],
            r: vec![0.0; n],
            hour: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn total_s(&self) -> f64 {
        self.s.iter().sum()
    }

    pub fn total_i(&self) -> f64 {
        self.i.iter().sum()
    }

    pub fn total_r(&self) -> f64 {
        self.r.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.total_s() + self.total_i() + self.total_r()
    }
}

/// An hourly matrix with its precomputed row sums.
#[derive(Debug, Clone)]
pub(crate) struct HourFlow<'a> {
    matrix: &'a FlowMatrix,
    row_sums: Vec<f64>,
}

impl<'a> HourFlow<'a> {
    pub(crate) fn new(matrix: &'a FlowMatrix) -> Result<Self> {
        let row_sums = matrix.row_sums();
        if let Some((row, &sum)) = row_sums
            .iter()
            .enumerate()
            .find(|(_, s)| **s > 1.0 + ROW_SUM_TOLERANCE || s.is_nan())
        {
            return Err(Error::RowSumExceeded { row, sum });
        }
        Ok(HourFlow { matrix, row_sums })
    }
}

/// The weekly cycle of hourly matrices as the simulator sees it:
/// overnight hours and all-zero matrices carry no transport.
#[derive(Debug, Clone)]
pub struct FlowSchedule<'a> {
    hours: Vec<Option<HourFlow<'a>>>,
    locations: usize,
}

impl<'a> FlowSchedule<'a> {
    pub fn new(hourly: &'a [FlowMatrix]) -> Result<Self> {
        if hourly.len() != HOURS_PER_WEEK {
            return Err(Error::MatrixCount {
                expected: HOURS_PER_WEEK,
                got: hourly.len(),
            });
        }
        let locations = hourly[0].dim();
        let hours = hourly
            .iter()
            .enumerate()
            .map(|(h, m)| {
                if m.dim() != locations {
                    return Err(Error::Dimension {
                        expected: locations,
                        got: m.dim(),
                    });
                }
                if Period::of_hour(h % HOURS_PER_DAY).is_none() || m.is_zero() {
                    Ok(None)
                } else {
                    HourFlow::new(m).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowSchedule { hours, locations })
    }

    pub fn locations(&self) -> usize {
        self.locations
    }

    pub(crate) fn at(&self, hour_of_week: usize) -> Option<&HourFlow<'a>> {
        self.hours[hour_of_week % HOURS_PER_WEEK].as_ref()
    }
}

#[derive(Debug, Default)]
pub(crate) struct Scratch {
    inflow_s: Vec<f64>,
    inflow_i: Vec<f64>,
    inflow_r: Vec<f64>,
}

/// Advances `state` by one hour in place.
pub(crate) fn advance(
    state: &mut EpidemicState,
    flow: Option<&HourFlow<'_>>,
    params: &DiseaseParams,
    populations: &[f64],
    scratch: &mut Scratch,
) -> Result<()> {
    let n = state.len();
    let (beta, gamma) = (params.beta, params.gamma);

    if let Some(flow) = flow {
        for buf in [&mut scratch.inflow_s, &mut scratch.inflow_i, &mut scratch.inflow_r] {
            buf.clear();
            buf.resize(n, 0.0);
        }
        for j in 0..n {
            let (sj, ij, rj) = (state.s[j], state.i[j], state.r[j]);
            for (k, &f) in flow.matrix.row(j).iter().enumerate() {
                if f != 0.0 {
                    scratch.inflow_s[k] += f * sj;
                    scratch.inflow_i[k] += f * ij;
                    scratch.inflow_r[k] += f * rj;
                }
            }
        }
        for k in 0..n {
            let (s, i, r) = (state.s[k], state.i[k], state.r[k]);
            let infections = beta * s * i / populations[k];
            let recoveries = gamma * i;
            let out = flow.row_sums[k];
            state.s[k] = s - infections + scratch.inflow_s[k] - out * s;
            state.i[k] = i + infections - recoveries + scratch.inflow_i[k] - out * i;
            state.r[k] = r + recoveries + scratch.inflow_r[k] - out * r;
        }
    } else {
        for k in 0..n {
            let (s, i, r) = (state.s[k], state.i[k], state.r[k]);
            let infections = beta * s * i / populations[k];
            let recoveries = gamma * i;
            state.s[k] = s - infections;
            state.i[k] = i + infections - recoveries;
            state.r[k] = r + recoveries;
        }
    }

    for k in 0..n {
        let tol = NEGATIVE_TOLERANCE * populations[k].max(1.0);
        for (name, x) in [
            ("S", &mut state.s[k]),
            ("I", &mut state.i[k]),
            ("R", &mut state.r[k]),
        ] {
            if *x < 0.0 {
                if *x >= -tol {
                    *x = 0.0;
                } else {
                    return Err(Error::Instability {
                        location: k,
                        compartment: name,
                        value: *x,
                        hour: state.hour,
                    });
                }
            } else if !x.is_finite() {
                return Err(Error::Instability {
                    location: k,
                    compartment: name,
                    value: *x,
                    hour: state.hour,
                });
            }
        }
    }
    state.hour += 1;
    Ok(())
}

/// One hour of dynamics on `flow`.
pub fn step_hour(
    state: &EpidemicState,
    flow: &FlowMatrix,
    params: &DiseaseParams,
    populations: &[f64],
) -> Result<EpidemicState> {
    params.check()?;
    let n = state.len();
    for len in [flow.dim(), populations.len(), state.i.len(), state.r.len()] {
        if len != n {
            return Err(Error::Dimension {
                expected: n,
                got: len,
            });
        }
    }
    let hour_flow = HourFlow::new(flow)?;
    let mut next = state.clone();
    let active = (!flow.is_zero()).then_some(&hour_flow);
    advance(&mut next, active, params, populations, &mut Scratch::default())?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_rates() {
        assert!((DiseaseParams::low().r0() - 0.5 / 0.33).abs() < 1e-15);
        assert!((DiseaseParams::high().r0() - 2.33 / 0.33).abs() < 1e-15);
        assert!(DiseaseParams::new(0.0, 0.1).is_err());
        assert!(DiseaseParams::new(0.1, -1.0).is_err());
        let p = DiseaseParams::from_r0(1.5, GAMMA_HOURLY).unwrap();
        assert!((p.r0() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_location_matches_scalar_formula() {
        let beta = 0.5 / 24.0;
        let gamma = GAMMA_HOURLY;
        let params = DiseaseParams { beta, gamma };
        let state = EpidemicState {
            s: vec![999.0],
            i: vec![1.0],
            r: vec![0.0],
            hour: 0,
        };
        let next = step_hour(&state, &FlowMatrix::zeros(1), &params, &[1000.0]).unwrap();
        let new_inf = beta * 999.0 * 1.0 / 1000.0;
        assert!((next.s[0] - (999.0 - new_inf)).abs() < 1e-12);
        assert!((next.i[0] - (1.0 + new_inf - gamma)).abs() < 1e-12);
        assert!((next.r[0] - gamma).abs() < 1e-12);
        assert_eq!(next.hour, 1);
    }

    #[test]
    fn zero_rates_and_flows_are_identity() {
        let params = DiseaseParams {
            beta: 0.0,
            gamma: 0.0,
        };
        let state = EpidemicState {
            s: vec![10.0, 20.0],
            i: vec![1.0, 0.5],
            r: vec![2.0, 0.0],
            hour: 3,
        };
        let next = step_hour(&state, &FlowMatrix::zeros(2), &params, &[13.0, 20.5]).unwrap();
        assert_eq!(next.s, state.s);
        assert_eq!(next.i, state.i);
        assert_eq!(next.r, state.r);
    }

    #[test]
    fn pure_transport_moves_ten_percent() {
        let params = DiseaseParams {
            beta: 0.0,
            gamma: 0.0,
        };
        let flow = FlowMatrix::from_rows(&[vec![0.0, 0.1], vec![0.0, 0.0]]).unwrap();
        let state = EpidemicState::susceptible(&[1000.0, 500.0]);
        let next = step_hour(&state, &flow, &params, &[1000.0, 500.0]).unwrap();
        assert!((next.s[0] - 900.0).abs() < 1e-12);
        assert!((next.s[1] - 600.0).abs() < 1e-12);
        assert!((next.total() - 1500.0).abs() < 1e-9);
    }

    #[test]
    fn unclamped_row_is_rejected() {
        let flow = FlowMatrix::from_rows(&[vec![0.0, 1.5], vec![0.0, 0.0]]).unwrap();
        let state = EpidemicState::susceptible(&[10.0, 10.0]);
        let r = step_hour(&state, &flow, &DiseaseParams::low(), &[10.0, 10.0]);
        assert!(matches!(r, Err(Error::RowSumExceeded { row: 0, .. })));
    }

    #[test]
    fn runaway_transmission_is_an_instability() {
        // I far above N drives S negative in one step.
        let params = DiseaseParams {
            beta: 0.5,
            gamma: 0.0,
        };
        let state = EpidemicState {
            s: vec![10.0],
            i: vec![100.0],
            r: vec![0.0],
            hour: 0,
        };
        let r = step_hour(&state, &FlowMatrix::zeros(1), &params, &[10.0]);
        assert!(matches!(r, Err(Error::Instability { compartment: "S", .. })));
    }
}
