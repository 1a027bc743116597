//! Hourly, period and week-averaged per-capita flow matrices.

use std::ops::{Index, IndexMut};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PopulationVector, TripRecord};
use crate::period::{hour_of_week, PeriodIndex, WeekRange, HOURS_PER_WEEK, PERIODS_PER_WEEK};

/// Dense `L x L` row-major matrix of non-negative flow rates.
/// Entry `(i, j)` is the per-capita rate of movement from `i` to `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMatrix {
    n: usize,
    data: Vec<f64>,
}

impl FlowMatrix {
    pub fn zeros(n: usize) -> Self {
        FlowMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(FlowMatrix { n, data })
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(FlowMatrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Flattened row-major entries; the flow vector of the matrix.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row_sum(i)).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            for (acc, v) in out.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn add_assign(&mut self, other: &FlowMatrix) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scaled(&self, factor: f64) -> FlowMatrix {
        FlowMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn transpose(&self) -> FlowMatrix {
        let mut out = FlowMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// Non-zero entries as `(from, to, rate)` in row-major order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(k, v)| (k / self.n, k % self.n, *v))
    }

    /// Relabels locations: entry `(i, j)` moves to `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> FlowMatrix {
        let mut out = FlowMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(perm[i], perm[j], self.get(i, j));
            }
        }
        out
    }
}

impl Index<(usize, usize)> for FlowMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for FlowMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// A row whose hourly outflow exceeded 1 and was rescaled to sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampWarning {
    pub hour: usize,
    pub location: usize,
    pub row_sum: f64,
}

/// The 168 hour-of-week matrices `H^t`, Monday 00:00 first.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyFlows {
    pub matrices: Vec<FlowMatrix>,
    pub clamp_warnings: Vec<ClampWarning>,
    /// Trips checked in during `[05:00, 05:30)`, which have no hour bin.
    pub skipped_pre_service: usize,
    pub self_trips: usize,
}

impl HourlyFlows {
    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, FlowMatrix::dim)
    }
}

/// The 28 period matrices `F^p`, indexed by [`PeriodIndex::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodFlows {
    pub matrices: Vec<FlowMatrix>,
}

impl PeriodFlows {
    pub fn get(&self, p: PeriodIndex) -> &FlowMatrix {
        &self.matrices[p.index()]
    }

    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, FlowMatrix::dim)
    }

    /// Morning, noon, afternoon and evening matrices of `day`.
    pub fn day(&self, day: usize) -> [&FlowMatrix; 4] {
        let base = day * 4;
        [
            &self.matrices[base],
            &self.matrices[base + 1],
            &self.matrices[base + 2],
            &self.matrices[base + 3],
        ]
    }
}

/// Counts trips per hour of week by check-in time and divides each row by
/// the origin population. Self-trips are dropped; rows summing above 1 are
/// rescaled to 1 and reported.
pub fn build_hourly(
    trips: &[TripRecord],
    populations: &PopulationVector,
    week: &WeekRange,
) -> Result<HourlyFlows> {
    let n = populations.len();
    if let Some(t) = trips.iter().find(|t| !week.contains(t.checkin_time.date())) {
        return Err(Error::TripOutsideWeek {
            card: t.card_id.clone(),
            date: t.checkin_time.date(),
        });
    }
    if let Some(i) = populations.0.iter().position(|&p| p == 0) {
        return Err(Error::Config(format!("location {i} has zero population")));
    }
    if let Some(t) = trips
        .iter()
        .find(|t| t.checkin_station.index() >= n || t.checkout_station.index() >= n)
    {
        return Err(Error::Dimension {
            expected: n,
            got: t.checkin_station.index().max(t.checkout_station.index()) + 1,
        });
    }

    enum Bin {
        Key(usize),
        SelfTrip,
        PreService,
    }
    // Sparse (hour, from, to) keys; sorting makes the count order-independent.
    let bins: Vec<Bin> = trips
        .par_iter()
        .map(|trip| {
            let (i, j) = (trip.checkin_station.index(), trip.checkout_station.index());
            if i == j {
                return Bin::SelfTrip;
            }
            hour_of_week(trip.checkin_time).map_or(Bin::PreService, |h| Bin::Key((h * n + i) * n + j))
        })
        .collect();
    let self_trips = bins.iter().filter(|b| matches!(b, Bin::SelfTrip)).count();
    let skipped_pre_service = bins.iter().filter(|b| matches!(b, Bin::PreService)).count();
    let mut keys: Vec<usize> = bins
        .into_iter()
        .filter_map(|b| match b {
            Bin::Key(k) => Some(k),
            _ => None,
        })
        .collect();
    keys.par_sort_unstable();

    let pops = populations.as_f64();
    let mut matrices = vec![FlowMatrix::zeros(n); HOURS_PER_WEEK];
    for run in keys.chunk_by(|a, b| a == b) {
        let key = run[0];
        let (h, i, j) = (key / (n * n), (key / n) % n, key % n);
        matrices[h].set(i, j, run.len() as f64 / pops[i]);
    }
    let mut clamp_warnings = Vec::new();
    for (h, m) in matrices.iter_mut().enumerate() {
        for i in 0..n {
            let sum = m.row_sum(i);
            if sum > 1.0 {
                log::warn!("hour {h} location {i}: outflow {sum} > 1, rescaling row");
                clamp_warnings.push(ClampWarning {
                    hour: h,
                    location: i,
                    row_sum: sum,
                });
                for j in 0..n {
                    let v = m.get(i, j) / sum;
                    m.set(i, j, v);
                }
            }
        }
    }
    Ok(HourlyFlows {
        matrices,
        clamp_warnings,
        skipped_pre_service,
        self_trips,
    })
}

/// `F^p = sum of H^t over the hours of p`. Hours 0-4 belong to no period.
pub fn aggregate_periods(hourly: &[FlowMatrix]) -> Result<PeriodFlows> {
    if hourly.len() != HOURS_PER_WEEK {
        return Err(Error::MatrixCount {
            expected: HOURS_PER_WEEK,
            got: hourly.len(),
        });
    }
    let n = hourly[0].dim();
    let matrices = PeriodIndex::all()
        .map(|p| {
            let mut acc = FlowMatrix::zeros(n);
            for h in p.hours_of_week() {
                acc.add_assign(&hourly[h]);
            }
            acc
        })
        .collect();
    Ok(PeriodFlows { matrices })
}

/// `F_hat = (1/7) * sum over all 28 periods`, a daily average.
pub fn weekly_average(periods: &[FlowMatrix]) -> Result<FlowMatrix> {
    if periods.len() != PERIODS_PER_WEEK {
        return Err(Error::MatrixCount {
            expected: PERIODS_PER_WEEK,
            got: periods.len(),
        });
    }
    let mut acc = FlowMatrix::zeros(periods[0].dim());
    for p in periods {
        acc.add_assign(p);
    }
    Ok(acc.scaled(1.0 / 7.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_timestamp, StationId};
    use chrono::NaiveDate;

    fn week() -> WeekRange {
        WeekRange::starting(NaiveDate::from_ymd_opt(2015, 4, 13).unwrap())
    }

    fn trip(from: u32, to: u32, at: &str) -> TripRecord {
        let t = parse_timestamp(at).unwrap();
        TripRecord {
            card_id: "c".into(),
            checkin_time: t,
            checkin_station: StationId(from),
            checkout_time: t + chrono::Duration::minutes(10),
            checkout_station: StationId(to),
            fare: 3.0,
        }
    }

    #[test]
    fn fifty_trips_over_hundred_thousand() {
        let trips: Vec<_> = (0..50).map(|_| trip(0, 1, "2015-04-13T08:15")).collect();
        let pops = PopulationVector(vec![100_000, 100_000]);
        let h = build_hourly(&trips, &pops, &week()).unwrap();
        assert_eq!(h.matrices.len(), 168);
        assert!((h.matrices[8].get(0, 1) - 5e-4).abs() < 1e-18);
        assert_eq!(h.matrices[8].get(1, 0), 0.0);
    }

    #[test]
    fn no_trips_gives_zero_matrices() {
        let h = build_hourly(&[], &PopulationVector(vec![5, 5, 5]), &week()).unwrap();
        assert!(h.matrices.iter().all(FlowMatrix::is_zero));
    }

    #[test]
    fn hand_counted_three_stations() {
        // Tuesday 07:xx is hour 24 + 7 = 31; Tuesday 17:xx is hour 41.
        let trips = vec![
            trip(0, 1, "2015-04-14T07:05"),
            trip(0, 1, "2015-04-14T07:35"),
            trip(0, 2, "2015-04-14T07:50"),
            trip(1, 2, "2015-04-14T07:10"),
            trip(2, 0, "2015-04-14T17:20"),
            trip(2, 2, "2015-04-14T07:20"),
        ];
        let pops = PopulationVector(vec![10, 20, 40]);
        let h = build_hourly(&trips, &pops, &week()).unwrap();
        let m = &h.matrices[31];
        let expected = [[0.0, 0.2, 0.1], [0.0, 0.0, 0.05], [0.0, 0.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.get(i, j) - expected[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
        assert!((h.matrices[41].get(2, 0) - 0.025).abs() < 1e-15);
        assert_eq!(h.self_trips, 1);
        let nonzero_hours = h.matrices.iter().filter(|m| !m.is_zero()).count();
        assert_eq!(nonzero_hours, 2);
    }

    #[test]
    fn outside_week_is_an_error() {
        let trips = vec![trip(0, 1, "2015-04-20T08:00")];
        let r = build_hourly(&trips, &PopulationVector(vec![10, 10]), &week());
        assert!(matches!(r, Err(Error::TripOutsideWeek { .. })));
    }

    #[test]
    fn overfull_row_is_clamped() {
        let trips: Vec<_> = (0..3)
            .map(|_| trip(0, 1, "2015-04-13T08:15"))
            .chain((0..1).map(|_| trip(0, 2, "2015-04-13T08:20")))
            .collect();
        let h = build_hourly(&trips, &PopulationVector(vec![2, 5, 5]), &week()).unwrap();
        assert_eq!(h.clamp_warnings.len(), 1);
        assert_eq!(h.clamp_warnings[0].row_sum, 2.0);
        assert!((h.matrices[8].row_sum(0) - 1.0).abs() < 1e-15);
        assert!((h.matrices[8].get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pre_service_checkins_are_skipped() {
        let trips = vec![trip(0, 1, "2015-04-13T05:10"), trip(0, 1, "2015-04-13T05:40")];
        let h = build_hourly(&trips, &PopulationVector(vec![10, 10]), &week()).unwrap();
        assert_eq!(h.skipped_pre_service, 1);
        assert!((h.matrices[5].get(0, 1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn morning_sums_hours_five_to_nine() {
        let mut hourly = vec![FlowMatrix::zeros(2); 168];
        for h in 0..24 {
            hourly[h].set(0, 1, 1.0);
        }
        let p = aggregate_periods(&hourly).unwrap();
        assert_eq!(p.matrices[0].get(0, 1), 5.0); // 05:30 slot + 06..09
        assert_eq!(p.matrices[1].get(0, 1), 6.0);
        assert_eq!(p.matrices[2].get(0, 1), 5.0);
        assert_eq!(p.matrices[3].get(0, 1), 3.0);
        assert_eq!(p.matrices[4].get(0, 1), 0.0);
    }

    #[test]
    fn single_noon_entry() {
        let mut hourly = vec![FlowMatrix::zeros(3); 168];
        hourly[11].set(1, 2, 0.1);
        let p = aggregate_periods(&hourly).unwrap();
        for (k, m) in p.matrices.iter().enumerate() {
            if k == 1 {
                assert_eq!(m.get(1, 2), 0.1);
                assert_eq!(m.nonzero().count(), 1);
            } else {
                assert!(m.is_zero());
            }
        }
    }

    #[test]
    fn weekly_average_examples() {
        let x = FlowMatrix::from_rows(&[vec![0.0, 0.25], vec![0.5, 0.0]]).unwrap();
        let avg = weekly_average(&vec![x.clone(); 28]).unwrap();
        for (a, b) in avg.as_slice().iter().zip(x.as_slice()) {
            assert!((a - 4.0 * b).abs() < 1e-15);
        }

        let mut periods = vec![FlowMatrix::zeros(2); 28];
        periods[13].set(1, 0, 0.7);
        let avg = weekly_average(&periods).unwrap();
        assert!((avg.get(1, 0) - 0.1).abs() < 1e-15);
        assert_eq!(avg.get(0, 1), 0.0);

        assert!(weekly_average(&vec![FlowMatrix::zeros(2); 28]).unwrap().is_zero());
        assert!(weekly_average(&vec![FlowMatrix::zeros(2); 27]).is_err());
    }
}
