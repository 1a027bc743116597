//! Daily itineraries of individual cards, their home/work/non-work motif,
//! and the share of workers who make non-work stops.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::{FlowMatrix, PeriodFlows};
use crate::ingest::{StationId, TripRecord};
use crate::period::{Period, PeriodIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityThresholds {
    /// A worker's first check-in is strictly before this minute of day.
    pub first_departure_before: u32,
    /// A worker has at least one check-in at or after this minute.
    pub late_trip_from: u32,
    /// Stops extending past this minute may be non-work stops.
    pub non_work_after: u32,
    /// Minimum share of pre-`non_work_after` dwell for each of two work
    /// stations.
    pub second_work_share: f64,
}

impl Default for ActivityThresholds {
    fn default() -> Self {
        ActivityThresholds {
            first_departure_before: 10 * 60,
            late_trip_from: 17 * 60,
            non_work_after: 16 * 60,
            second_work_share: 0.25,
        }
    }
}

/// Time spent at a station between a checkout and the next check-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Visit {
    pub station: StationId,
    pub arrival: NaiveDateTime,
    pub departure: NaiveDateTime,
}

impl Visit {
    pub fn dwell_minutes(&self) -> i64 {
        (self.departure - self.arrival).num_minutes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailySchedule {
    pub card_id: String,
    pub date: NaiveDate,
    pub trips: Vec<TripRecord>,
    pub visits: Vec<Visit>,
    /// False when a checkout station differs from the next check-in
    /// station or trips overlap in time.
    pub consistent: bool,
}

/// Groups trips by card and check-in date. Output is sorted by date, then
/// card; trips within a day are sorted by time, so input order is irrelevant.
pub fn build_schedules(trips: &[TripRecord]) -> Vec<DailySchedule> {
    let mut groups: BTreeMap<(NaiveDate, &str), Vec<&TripRecord>> = BTreeMap::new();
    for t in trips {
        groups
            .entry((t.checkin_time.date(), t.card_id.as_str()))
            .or_default()
            .push(t);
    }
    groups
        .into_iter()
        .map(|((date, card), mut day)| {
            day.sort_by(|a, b| {
                (a.checkin_time, a.checkout_time, a.checkin_station, a.checkout_station)
                    .cmp(&(b.checkin_time, b.checkout_time, b.checkin_station, b.checkout_station))
            });
            let mut consistent = true;
            let mut visits = Vec::new();
            for pair in day.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if a.checkout_station != b.checkin_station || b.checkin_time < a.checkout_time {
                    consistent = false;
                    continue;
                }
                visits.push(Visit {
                    station: a.checkout_station,
                    arrival: a.checkout_time,
                    departure: b.checkin_time,
                });
            }
            DailySchedule {
                card_id: card.to_string(),
                date,
                trips: day.into_iter().cloned().collect(),
                visits,
                consistent,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Motif {
    HWH,
    HWEH,
    HW1W2H,
    HWE1E2H,
    HW1W2EH,
    HWEWH,
    NonWorker,
    Unclassified,
}

impl Motif {
    pub const ALL: [Motif; 8] = [
        Motif::HWH,
        Motif::HWEH,
        Motif::HW1W2H,
        Motif::HWE1E2H,
        Motif::HW1W2EH,
        Motif::HWEWH,
        Motif::NonWorker,
        Motif::Unclassified,
    ];

    pub fn is_worker(self) -> bool {
        !matches!(self, Motif::NonWorker | Motif::Unclassified)
    }

    pub fn has_non_work_stop(self) -> bool {
        matches!(
            self,
            Motif::HWEH | Motif::HWE1E2H | Motif::HW1W2EH | Motif::HWEWH
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Motif::HWH => "HWH",
            Motif::HWEH => "HWEH",
            Motif::HW1W2H => "HW1W2H",
            Motif::HWE1E2H => "HWE1E2H",
            Motif::HW1W2EH => "HW1W2EH",
            Motif::HWEWH => "HWEWH",
            Motif::NonWorker => "NonWorker",
            Motif::Unclassified => "Unclassified",
        }
    }
}

impl fmt::Display for Motif {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    Home,
    Work,
    NonWork,
    /// A daytime stop at neither home nor work.
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub motif: Motif,
    /// One role per visit; empty unless the card is a worker with a home.
    pub roles: Vec<Role>,
}

impl Classification {
    fn bare(motif: Motif) -> Self {
        Classification {
            motif,
            roles: Vec::new(),
        }
    }
}

fn minute_of_day(t: NaiveDateTime) -> u32 {
    t.hour() * 60 + t.minute()
}

/// Minutes of `visit` before `cutoff` minutes of the visit's date.
fn dwell_before(visit: &Visit, cutoff: u32) -> i64 {
    let start = minute_of_day(visit.arrival) as i64;
    let end = start + visit.dwell_minutes();
    (end.min(cutoff as i64) - start).max(0)
}

pub fn classify(schedule: &DailySchedule, th: &ActivityThresholds) -> Classification {
    if !schedule.consistent {
        return Classification::bare(Motif::Unclassified);
    }
    let trips = &schedule.trips;
    let (Some(first), Some(last)) = (trips.first(), trips.last()) else {
        return Classification::bare(Motif::Unclassified);
    };
    let early = minute_of_day(first.checkin_time) < th.first_departure_before;
    let late = trips
        .iter()
        .any(|t| minute_of_day(t.checkin_time) >= th.late_trip_from);
    if !early || !late {
        return Classification::bare(Motif::NonWorker);
    }
    let home = first.checkin_station;
    if last.checkout_station != home {
        return Classification::bare(Motif::NonWorker);
    }

    // Total dwell and first arrival per non-home station.
    let mut dwell: BTreeMap<StationId, (i64, NaiveDateTime, i64)> = BTreeMap::new();
    for v in schedule.visits.iter().filter(|v| v.station != home) {
        let e = dwell.entry(v.station).or_insert((0, v.arrival, 0));
        e.0 += v.dwell_minutes();
        e.1 = e.1.min(v.arrival);
        e.2 += dwell_before(v, th.non_work_after);
    }
    let Some((&work, _)) = dwell
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
    else {
        return Classification::bare(Motif::Unclassified);
    };
    let day_total: i64 = dwell.values().map(|d| d.2).sum();
    let share = |s: &StationId| {
        if day_total > 0 {
            dwell[s].2 as f64 / day_total as f64
        } else {
            0.0
        }
    };
    let second_work = dwell
        .iter()
        .filter(|(s, _)| **s != work)
        .max_by(|a, b| a.1 .2.cmp(&b.1 .2).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(s, _)| *s)
        .filter(|s| share(&work) >= th.second_work_share && share(s) >= th.second_work_share);

    let roles: Vec<Role> = schedule
        .visits
        .iter()
        .map(|v| {
            if v.station == home {
                Role::Home
            } else if v.station == work || Some(v.station) == second_work {
                Role::Work
            } else if minute_of_day(v.arrival) as i64 + v.dwell_minutes() > th.non_work_after as i64 {
                Role::NonWork
            } else {
                Role::Other
            }
        })
        .collect();

    // Consecutive stops at one station collapse into one.
    let mut tokens: Vec<(Role, StationId)> = Vec::new();
    for (v, &r) in schedule.visits.iter().zip(&roles) {
        if tokens.last() != Some(&(r, v.station)) {
            tokens.push((r, v.station));
        }
    }
    use Role::{NonWork as E, Work as W};
    let motif = match tokens.as_slice() {
        [(W, _)] => Motif::HWH,
        [(W, _), (E, _)] => Motif::HWEH,
        [(W, a), (W, b)] if a != b => Motif::HW1W2H,
        [(W, _), (E, x), (E, y)] if x != y => Motif::HWE1E2H,
        [(W, a), (W, b), (E, _)] if a != b => Motif::HW1W2EH,
        [(W, a), (E, _), (W, b)] if a == b => Motif::HWEWH,
        _ => Motif::Unclassified,
    };
    Classification { motif, roles }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledDay {
    pub card_id: String,
    pub date: NaiveDate,
    pub motif: Motif,
}

pub fn classify_all(schedules: &[DailySchedule], th: &ActivityThresholds) -> Vec<LabeledDay> {
    schedules
        .par_iter()
        .map(|s| LabeledDay {
            card_id: s.card_id.clone(),
            date: s.date,
            motif: classify(s, th).motif,
        })
        .collect()
}

/// Count of every motif per date, all eight motifs listed for each date.
pub fn motif_counts(labels: &[LabeledDay]) -> Vec<(NaiveDate, Motif, usize)> {
    let mut counts: BTreeMap<NaiveDate, BTreeMap<Motif, usize>> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.date).or_default().entry(l.motif).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .flat_map(|(date, m)| {
            Motif::ALL
                .into_iter()
                .map(move |motif| (date, motif, m.get(&motif).copied().unwrap_or(0)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecreationRow {
    pub date: NaiveDate,
    pub n_w: usize,
    pub n_e: usize,
    /// `N_E / N_W`; `None` without workers.
    pub rho: Option<f64>,
}

pub fn recreational_fraction<'a>(labels: impl IntoIterator<Item = &'a Motif>) -> (usize, usize, Option<f64>) {
    let (mut n_w, mut n_e) = (0, 0);
    for m in labels {
        if m.is_worker() {
            n_w += 1;
            if m.has_non_work_stop() {
                n_e += 1;
            }
        }
    }
    (n_w, n_e, (n_w > 0).then(|| n_e as f64 / n_w as f64))
}

pub fn recreation_by_date(labels: &[LabeledDay]) -> Vec<RecreationRow> {
    let mut by_date: BTreeMap<NaiveDate, Vec<Motif>> = BTreeMap::new();
    for l in labels {
        by_date.entry(l.date).or_default().push(l.motif);
    }
    by_date
        .into_iter()
        .map(|(date, motifs)| {
            let (n_w, n_e, rho) = recreational_fraction(&motifs);
            RecreationRow { date, n_w, n_e, rho }
        })
        .collect()
}

/// Locations ranked by influx (column sum), largest first, ties by id.
pub fn top_destinations(flows: &FlowMatrix, k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = flows.col_sums().into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// `(day, rank, station, influx)` from each day's afternoon matrix; rank
/// starts at 1.
pub fn afternoon_top_destinations(periods: &PeriodFlows, k: usize) -> Vec<(usize, usize, usize, f64)> {
    (0..crate::period::DAYS_PER_WEEK)
        .flat_map(|day| {
            let pi = PeriodIndex::new(day, Period::Afternoon).expect("day in week");
            top_destinations(periods.get(pi), k)
                .into_iter()
                .enumerate()
                .map(move |(r, (station, influx))| (day, r + 1, station, influx))
        })
        .collect()
}
