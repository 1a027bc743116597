use serde::Serialize;

use crate::period::{Period, HOURS_PER_DAY, HOURS_PER_WEEK, PERIODS_PER_DAY};

/// When a location first reached the infection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Arrival {
    /// Hours since introduction.
    pub hour: u32,
    /// Whole days since introduction.
    pub day: usize,
    /// Clock period of the arrival hour; overnight hours count toward the
    /// preceding evening.
    pub period: Period,
}

/// First-infection times of every location in one simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalTable {
    /// Hour of week at which the simulation started.
    pub start_hour_of_week: usize,
    /// Days covered by the simulation horizon.
    pub days: usize,
    /// Per location, hours since introduction of the first infection.
    pub hours: Vec<Option<u32>>,
}

impl ArrivalTable {
    pub fn new(start_hour_of_week: usize, days: usize, locations: usize) -> Self {
        ArrivalTable {
            start_hour_of_week,
            days,
            hours: vec![None; locations],
        }
    }

    pub fn locations(&self) -> usize {
        self.hours.len()
    }

    pub fn record(&mut self, location: usize, hour: u32) {
        let slot = &mut self.hours[location];
        if slot.is_none() {
            *slot = Some(hour);
        }
    }

    pub fn arrival(&self, location: usize) -> Option<Arrival> {
        let hour = self.hours[location]?;
        let clock = (self.start_hour_of_week + hour as usize) % HOURS_PER_WEEK % HOURS_PER_DAY;
        Some(Arrival {
            hour,
            day: hour as usize / HOURS_PER_DAY,
            period: Period::of_hour(clock).unwrap_or(Period::Evening),
        })
    }

    /// Whole days until `location` was first infected (`chi` for one run).
    pub fn day_of(&self, location: usize) -> Option<usize> {
        self.hours[location].map(|h| h as usize / HOURS_PER_DAY)
    }

    pub fn infected_count(&self) -> usize {
        self.hours.iter().filter(|h| h.is_some()).count()
    }

    /// `A(d, p)`: locations first infected in period `p` of day `d`.
    pub fn counts(&self) -> Vec<[usize; PERIODS_PER_DAY]> {
        let mut out = vec![[0; PERIODS_PER_DAY]; self.days];
        for loc in 0..self.locations() {
            if let Some(a) = self.arrival(loc) {
                if a.day < self.days {
                    out[a.day][a.period.index()] += 1;
                }
            }
        }
        out
    }

    /// `(day, period, new locations)` in chronological order, non-empty
    /// groups only. Within one elapsed day each period is a contiguous
    /// stretch of hours, so ordering groups by first arrival hour is
    /// chronological.
    pub fn groups(&self) -> Vec<(usize, Period, usize)> {
        let mut first: Vec<(u32, usize, Period)> = Vec::new();
        let mut counts = std::collections::BTreeMap::new();
        for loc in 0..self.locations() {
            if let Some(a) = self.arrival(loc) {
                let entry = counts.entry((a.day, a.period)).or_insert((u32::MAX, 0usize));
                entry.0 = entry.0.min(a.hour);
                entry.1 += 1;
            }
        }
        for ((day, period), (hour, _)) in &counts {
            first.push((*hour, *day, *period));
        }
        first.sort();
        first
            .into_iter()
            .map(|(_, day, period)| (day, period, counts[&(day, period)].1))
            .collect()
    }
}

/// `Phi(d)`: cumulative fraction of locations infected by the end of day `d`.
pub fn phi_curve(arrivals: &ArrivalTable) -> Vec<f64> {
    let l = arrivals.locations() as f64;
    let mut cumulative = 0usize;
    arrivals
        .counts()
        .iter()
        .map(|day| {
            cumulative += day.iter().sum::<usize>();
            cumulative as f64 / l
        })
        .collect()
}

/// `Gamma_T`: first day on which at least a fraction `threshold` of
/// locations has been infected, or `None` within the horizon.
pub fn gamma_threshold(arrivals: &ArrivalTable, threshold: f64) -> Option<usize> {
    let needed = threshold * arrivals.locations() as f64;
    let mut cumulative = 0usize;
    for (day, counts) in arrivals.counts().iter().enumerate() {
        cumulative += counts.iter().sum::<usize>();
        // Tolerance so that T = k/L is met by exactly k locations.
        if cumulative as f64 >= needed - 1e-9 {
            return Some(day);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cumulative_phi() {
        // Start Monday 05:00 so hours 0, 24 and 48 are mornings.
        let mut t = ArrivalTable::new(5, 3, 4);
        t.record(0, 0);
        t.record(1, 24);
        t.record(2, 30);
        t.record(3, 50);
        assert_eq!(phi_curve(&t), vec![0.25, 0.75, 1.0]);
        assert_eq!(gamma_threshold(&t, 0.25), Some(0));
        assert_eq!(gamma_threshold(&t, 0.5), Some(1));
        assert_eq!(gamma_threshold(&t, 1.0), Some(2));
    }

    #[test]
    fn seed_only() {
        let mut t = ArrivalTable::new(5, 5, 4);
        t.record(2, 0);
        assert!(phi_curve(&t).iter().all(|&p| p == 0.25));
        assert_eq!(gamma_threshold(&t, 0.5), None);
    }

    #[test]
    fn all_on_day_zero() {
        let mut t = ArrivalTable::new(5, 2, 3);
        for l in 0..3 {
            t.record(l, l as u32);
        }
        assert_eq!(phi_curve(&t)[0], 1.0);
    }

    #[test]
    fn overnight_counts_as_evening() {
        // Start Monday 21:00; hour 5 is Tuesday 02:00, hour 9 Tuesday 06:00.
        let mut t = ArrivalTable::new(21, 2, 3);
        t.record(0, 0);
        t.record(1, 5);
        t.record(2, 9);
        assert_eq!(t.arrival(1).unwrap().period, Period::Evening);
        assert_eq!(t.arrival(2).unwrap().period, Period::Morning);
        assert_eq!(
            t.groups(),
            vec![(0, Period::Evening, 2), (0, Period::Morning, 1)]
        );
    }

    #[test]
    fn first_record_wins() {
        let mut t = ArrivalTable::new(0, 2, 1);
        t.record(0, 7);
        t.record(0, 3);
        assert_eq!(t.hours[0], Some(7));
    }
}
