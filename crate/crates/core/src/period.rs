//! Daily periods, hour-of-week bins and the analysis week.
//!
//! The service day runs 05:30 to 24:00 and is split into four periods:
//! morning `[05:30, 10:00)`, noon `[10:00, 16:00)`, afternoon
//! `[16:00, 21:00)` and evening `[21:00, 24:00)`. Hour bins are clock
//! aligned, except that bin 5 only holds the 05:30-06:00 slot.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAYS_PER_WEEK: usize = 7;
pub const PERIODS_PER_DAY: usize = 4;
pub const PERIODS_PER_WEEK: usize = DAYS_PER_WEEK * PERIODS_PER_DAY;
pub const HOURS_PER_DAY: usize = 24;
pub const HOURS_PER_WEEK: usize = DAYS_PER_WEEK * HOURS_PER_DAY;

/// Minutes after midnight at which service (and the morning period) starts.
pub const SERVICE_START_MINUTE: u32 = 5 * 60 + 30;

pub const DAY_NAMES: [&str; DAYS_PER_WEEK] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Morning,
    Noon,
    Afternoon,
    Evening,
}

impl Period {
    pub const ALL: [Period; PERIODS_PER_DAY] =
        [Period::Morning, Period::Noon, Period::Afternoon, Period::Evening];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Period> {
        Self::ALL.get(index).copied()
    }

    /// Clock hours whose bins belong to this period.
    pub fn hours(self) -> std::ops::Range<usize> {
        match self {
            Period::Morning => 5..10,
            Period::Noon => 10..16,
            Period::Afternoon => 16..21,
            Period::Evening => 21..24,
        }
    }

    pub fn first_hour(self) -> usize {
        self.hours().start
    }

    pub fn name(self) -> &'static str {
        match self {
            Period::Morning => "morning",
            Period::Noon => "noon",
            Period::Afternoon => "afternoon",
            Period::Evening => "evening",
        }
    }

    /// Period of a clock-hour bin; hours 0-4 are outside service.
    pub fn of_hour(hour: usize) -> Option<Period> {
        match hour {
            5..=9 => Some(Period::Morning),
            10..=15 => Some(Period::Noon),
            16..=20 => Some(Period::Afternoon),
            21..=23 => Some(Period::Evening),
            _ => None,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "morning" | "morn" => Ok(Period::Morning),
            "noon" => Ok(Period::Noon),
            "afternoon" | "aftn" => Ok(Period::Afternoon),
            "evening" | "eve" => Ok(Period::Evening),
            other => Err(Error::Config(format!("unknown period {other:?}"))),
        }
    }
}

/// One of the 28 weekly periods. `day` is 0 for Monday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PeriodIndex {
    pub day: u8,
    pub period: Period,
}

impl PeriodIndex {
    pub fn new(day: usize, period: Period) -> Option<Self> {
        (day < DAYS_PER_WEEK).then_some(PeriodIndex {
            day: day as u8,
            period,
        })
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index >= PERIODS_PER_WEEK {
            return None;
        }
        Self::new(
            index / PERIODS_PER_DAY,
            Period::from_index(index % PERIODS_PER_DAY)?,
        )
    }

    /// Position in `0..28`, Monday morning first.
    pub fn index(self) -> usize {
        self.day as usize * PERIODS_PER_DAY + self.period.index()
    }

    pub fn all() -> impl Iterator<Item = PeriodIndex> {
        (0..PERIODS_PER_WEEK).filter_map(PeriodIndex::from_index)
    }

    /// Hour-of-week bins that make up this period.
    pub fn hours_of_week(self) -> impl Iterator<Item = usize> {
        let base = self.day as usize * HOURS_PER_DAY;
        self.period.hours().map(move |h| base + h)
    }

    pub fn first_hour_of_week(self) -> usize {
        self.day as usize * HOURS_PER_DAY + self.period.first_hour()
    }

    pub fn day_name(self) -> &'static str {
        DAY_NAMES[self.day as usize]
    }
}

impl fmt::Display for PeriodIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.day_name(), self.period)
    }
}

pub fn weekday_index(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// Period containing `t`, or `None` for `[00:00, 05:30)`.
pub fn assign_period(t: NaiveDateTime) -> Option<PeriodIndex> {
    let minute = t.hour() * 60 + t.minute();
    let period = match minute {
        m if m < SERVICE_START_MINUTE => return None,
        m if m < 10 * 60 => Period::Morning,
        m if m < 16 * 60 => Period::Noon,
        m if m < 21 * 60 => Period::Afternoon,
        _ => Period::Evening,
    };
    PeriodIndex::new(weekday_index(t.date()), period)
}

/// Hour-of-week bin for a check-in time. Check-ins in `[05:00, 05:30)`
/// fall before service and have no bin.
pub fn hour_of_week(t: NaiveDateTime) -> Option<usize> {
    if t.hour() == 5 && t.minute() < 30 {
        return None;
    }
    Some(weekday_index(t.date()) * HOURS_PER_DAY + t.hour() as usize)
}

/// Inclusive calendar range selecting the analysis week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl WeekRange {
    /// A range of exactly seven consecutive days.
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let days = (end - start).num_days() + 1;
        if days != DAYS_PER_WEEK as i64 {
            return Err(Error::WeekRange(format!(
                "{start}..={end} spans {days} days, expected 7"
            )));
        }
        Ok(WeekRange { start, end })
    }

    pub fn starting(start: NaiveDate) -> Self {
        WeekRange {
            start,
            end: start + chrono::Duration::days(DAYS_PER_WEEK as i64 - 1),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> {
        self.start.iter_days().take_while({
            let end = self.end;
            move |d| *d <= end
        })
    }
}

pub fn time_of_day(hour: u32, minute: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(hour, minute, 0).expect("valid clock time")
}
