//! Trip records, the station registry and district populations.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::period::{assign_period, WeekRange};

pub const TRIPS_HEADER: [&str; 6] = [
    "card_id",
    "checkin_time",
    "checkin_station",
    "checkout_time",
    "checkout_station",
    "fare",
];
pub const STATIONS_HEADER: [&str; 5] = ["station_id", "name", "district_id", "lat", "lon"];
pub const DISTRICTS_HEADER: [&str; 2] = ["district_id", "population"];

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub u32);

impl StationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistrictId(pub u32);

impl fmt::Display for DistrictId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One smart-card journey.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub card_id: String,
    pub checkin_time: NaiveDateTime,
    pub checkin_station: StationId,
    pub checkout_time: NaiveDateTime,
    pub checkout_station: StationId,
    pub fare: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub name: String,
    pub district: DistrictId,
    pub lat: f64,
    pub lon: f64,
}

/// Stations with dense ids `0..L`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationRegistry {
    stations: Vec<Station>,
}

impl StationRegistry {
    pub fn new(mut stations: Vec<Station>) -> Result<Self> {
        stations.sort_by_key(|s| s.id);
        for (k, s) in stations.iter().enumerate() {
            if s.id.index() != k {
                return Err(Error::Registry(format!(
                    "station ids must be dense and unique from 0; found {} at position {k}",
                    s.id
                )));
            }
            if !(-90.0..=90.0).contains(&s.lat) || !(-180.0..=180.0).contains(&s.lon) {
                return Err(Error::Registry(format!(
                    "station {} has invalid coordinates ({}, {})",
                    s.id, s.lat, s.lon
                )));
            }
        }
        if stations.is_empty() {
            return Err(Error::Registry("registry has no stations".into()));
        }
        Ok(StationRegistry { stations })
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        check_header(rdr.headers()?, &STATIONS_HEADER, "stations")?;
        let mut stations = Vec::new();
        for row in rdr.deserialize() {
            let (id, name, district, lat, lon): (u32, String, u32, f64, f64) = row?;
            stations.push(Station {
                id: StationId(id),
                name,
                district: DistrictId(district),
                lat,
                lon,
            });
        }
        Self::new(stations)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(STATIONS_HEADER)?;
        for s in &self.stations {
            w.write_record([
                s.id.to_string(),
                s.name.clone(),
                s.district.to_string(),
                s.lat.to_string(),
                s.lon.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn get(&self, id: StationId) -> Option<&Station> {
        self.stations.get(id.index())
    }

    pub fn contains(&self, id: StationId) -> bool {
        id.index() < self.stations.len()
    }

    /// Station ids grouped by district, ascending.
    pub fn districts(&self) -> BTreeMap<DistrictId, Vec<StationId>> {
        let mut out: BTreeMap<DistrictId, Vec<StationId>> = BTreeMap::new();
        for s in &self.stations {
            out.entry(s.district).or_default().push(s.id);
        }
        out
    }
}

pub type DistrictTable = BTreeMap<DistrictId, u64>;

pub fn read_districts<R: Read>(reader: R) -> Result<DistrictTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(rdr.headers()?, &DISTRICTS_HEADER, "districts")?;
    let mut table = DistrictTable::new();
    for row in rdr.deserialize() {
        let (id, pop): (u32, u64) = row?;
        if table.insert(DistrictId(id), pop).is_some() {
            return Err(Error::Registry(format!("district {id} listed twice")));
        }
    }
    Ok(table)
}

pub fn write_districts<W: Write>(table: &DistrictTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DISTRICTS_HEADER)?;
    for (id, pop) in table {
        w.write_record([id.to_string(), pop.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn check_header(found: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    if found.iter().map(str::trim).eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} csv header must be `{}`, found `{}`",
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    FieldCount { found: usize },
    UnknownStation { field: &'static str, value: String },
    BadTimestamp { field: &'static str, value: String },
    CheckoutBeforeCheckin,
    BadFare { value: String },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::FieldCount { found } => write!(f, "expected 6 fields, found {found}"),
            RejectReason::UnknownStation { field, value } => {
                write!(f, "unknown station {value:?} in {field}")
            }
            RejectReason::BadTimestamp { field, value } => {
                write!(f, "unparseable timestamp {value:?} in {field}")
            }
            RejectReason::CheckoutBeforeCheckin => f.write_str("checkout before checkin"),
            RejectReason::BadFare { value } => write!(f, "invalid fare {value:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RejectionReport {
    pub rows_read: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

impl RejectionReport {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn parse_row(
    record: &csv::StringRecord,
    registry: &StationRegistry,
) -> std::result::Result<TripRecord, RejectReason> {
    if record.len() != TRIPS_HEADER.len() {
        return Err(RejectReason::FieldCount {
            found: record.len(),
        });
    }
    let time = |k: usize| {
        parse_timestamp(&record[k]).ok_or_else(|| RejectReason::BadTimestamp {
            field: TRIPS_HEADER[k],
            value: record[k].to_string(),
        })
    };
    let station = |k: usize| {
        record[k]
            .trim()
            .parse::<u32>()
            .ok()
            .map(StationId)
            .filter(|id| registry.contains(*id))
            .ok_or_else(|| RejectReason::UnknownStation {
                field: TRIPS_HEADER[k],
                value: record[k].to_string(),
            })
    };
    let checkin_time = time(1)?;
    let checkin_station = station(2)?;
    let checkout_time = time(3)?;
    let checkout_station = station(4)?;
    if checkout_time < checkin_time {
        return Err(RejectReason::CheckoutBeforeCheckin);
    }
    let fare = record[5]
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|f| f.is_finite() && *f >= 0.0)
        .ok_or_else(|| RejectReason::BadFare {
            value: record[5].to_string(),
        })?;
    Ok(TripRecord {
        card_id: record[0].trim().to_string(),
        checkin_time,
        checkin_station,
        checkout_time,
        checkout_station,
        fare,
    })
}

/// Reads the trips CSV. Malformed rows are tallied in the report; only
/// I/O failures and a wrong header abort.
pub fn parse_trips<R: Read>(
    reader: R,
    registry: &StationRegistry,
) -> Result<(Vec<TripRecord>, RejectionReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut report = RejectionReport::default();
    let mut trips = Vec::new();

    match records.next() {
        None => return Ok((trips, report)),
        Some(header) => check_header(&header?, &TRIPS_HEADER, "trips")?,
    }
    for (k, record) in records.enumerate() {
        let record = record?;
        report.rows_read += 1;
        match parse_row(&record, registry) {
            Ok(trip) => trips.push(trip),
            Err(reason) => report.rejected.push(Rejection { row: k + 1, reason }),
        }
    }
    report.accepted = trips.len();
    Ok((trips, report))
}

pub fn write_trips<W: Write>(trips: &[TripRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRIPS_HEADER)?;
    for t in trips {
        w.write_record([
            t.card_id.clone(),
            format_timestamp(t.checkin_time),
            t.checkin_station.to_string(),
            format_timestamp(t.checkout_time),
            t.checkout_station.to_string(),
            t.fare.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps trips that start and end within one period of one calendar day.
pub fn filter_same_period(trips: &[TripRecord]) -> Vec<TripRecord> {
    trips
        .iter()
        .filter(|t| {
            t.checkin_time.date() == t.checkout_time.date()
                && assign_period(t.checkin_time).is_some()
                && assign_period(t.checkin_time) == assign_period(t.checkout_time)
        })
        .cloned()
        .collect()
}

/// Keeps trips whose check-in date lies in `week`.
pub fn select_week(trips: &[TripRecord], week: &WeekRange) -> Vec<TripRecord> {
    trips
        .iter()
        .filter(|t| week.contains(t.checkin_time.date()))
        .cloned()
        .collect()
}

/// Persons per location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PopulationVector(pub Vec<u64>);

impl PopulationVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&n| n as f64).collect()
    }
}

/// Splits each district population evenly over its stations using
/// largest-remainder apportionment. Every station's share has the same
/// fractional part, so the remainder goes one person each to the lowest
/// station ids.
pub fn allocate_population(
    districts: &DistrictTable,
    registry: &StationRegistry,
) -> Result<PopulationVector> {
    let mut pops = vec![0u64; registry.len()];
    for (district, stations) in registry.districts() {
        let total = *districts
            .get(&district)
            .ok_or(Error::MissingDistrictPopulation(district.0))?;
        let count = stations.len() as u64;
        if total < count {
            return Err(Error::DistrictTooSmall {
                district: district.0,
                population: total,
                stations: stations.len(),
            });
        }
        let (base, remainder) = (total / count, total % count);
        for (k, id) in stations.iter().enumerate() {
            pops[id.index()] = base + u64::from((k as u64) < remainder);
        }
    }
    Ok(PopulationVector(pops))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry(n: u32) -> StationRegistry {
        StationRegistry::new(
            (0..n)
                .map(|i| Station {
                    id: StationId(i),
                    name: format!("s{i}"),
                    district: DistrictId(i % 3),
                    lat: 31.2,
                    lon: 121.4,
                })
                .collect(),
        )
        .unwrap()
    }

    fn parse(body: &str, n: u32) -> (Vec<TripRecord>, RejectionReport) {
        let text = format!("{}\n{body}", TRIPS_HEADER.join(","));
        parse_trips(text.as_bytes(), &registry(n)).unwrap()
    }

    #[test]
    fn parses_well_formed_row() {
        let (trips, report) = parse("c1,2015-04-13T08:10,5,2015-04-13T08:40,9,4.0\n", 313);
        assert_eq!(report.rejected_count(), 0);
        let t = &trips[0];
        assert_eq!(t.card_id, "c1");
        assert_eq!(t.checkin_station, StationId(5));
        assert_eq!(t.checkout_station, StationId(9));
        assert_eq!(t.fare, 4.0);
        assert_eq!(
            assign_period(t.checkin_time),
            crate::period::PeriodIndex::new(0, crate::period::Period::Morning)
        );
    }

    #[test]
    fn rejects_unknown_station() {
        let (trips, report) = parse("c1,2015-04-13T08:10,999,2015-04-13T08:40,9,4.0\n", 313);
        assert!(trips.is_empty());
        assert_eq!(report.rejected.len(), 1);
        assert!(report.rejected[0].reason.to_string().contains("unknown station"));
    }

    #[test]
    fn empty_stream_is_empty() {
        let (trips, report) = parse_trips(&b""[..], &registry(3)).unwrap();
        assert!(trips.is_empty());
        assert_eq!(report.rows_read, 0);
        assert_eq!(report.rejected_count(), 0);
    }

    #[test]
    fn every_row_is_accounted_for() {
        let body = "\
a,2015-04-13T08:10,0,2015-04-13T08:40,1,2
b,not-a-time,0,2015-04-13T08:40,1,2
c,2015-04-13T08:10,0,2015-04-13T08:00,1,2
d,2015-04-13T08:10,0
e,2015-04-13T08:10,0,2015-04-13T08:40,1,-3
f,2015-04-13 08:10:00,2,2015-04-13T08:40,1,0
";
        let (trips, report) = parse(body, 3);
        assert_eq!(report.rows_read, 6);
        assert_eq!(trips.len() + report.rejected_count(), 6);
        assert_eq!(trips.len(), 2);
        let rows: Vec<usize> = report.rejected.iter().map(|r| r.row).collect();
        assert_eq!(rows, vec![2, 3, 4, 5]);
        assert_eq!(report.rejected[1].reason, RejectReason::CheckoutBeforeCheckin);
    }

    #[test]
    fn wrong_header_is_an_error() {
        let r = parse_trips(&b"a,b,c\n"[..], &registry(3));
        assert!(r.is_err());
    }

    fn trip(start: &str, end: &str) -> TripRecord {
        TripRecord {
            card_id: "x".into(),
            checkin_time: parse_timestamp(start).unwrap(),
            checkin_station: StationId(0),
            checkout_time: parse_timestamp(end).unwrap(),
            checkout_station: StationId(1),
            fare: 0.0,
        }
    }

    #[test]
    fn same_period_filter() {
        let kept = trip("2015-04-13T08:00", "2015-04-13T08:30");
        let boundary = trip("2015-04-13T09:50", "2015-04-13T10:20");
        let midnight = trip("2015-04-13T23:50", "2015-04-14T00:10");
        let night = trip("2015-04-13T04:50", "2015-04-13T05:10");
        let out = filter_same_period(&[kept.clone(), boundary, midnight, night]);
        assert_eq!(out, vec![kept]);
    }

    #[test]
    fn allocation_examples() {
        let one = |pop: u64, n: u32| {
            let reg = StationRegistry::new(
                (0..n)
                    .map(|i| Station {
                        id: StationId(i),
                        name: String::new(),
                        district: DistrictId(7),
                        lat: 0.0,
                        lon: 0.0,
                    })
                    .collect(),
            )
            .unwrap();
            allocate_population(&DistrictTable::from([(DistrictId(7), pop)]), &reg).unwrap()
        };
        assert_eq!(one(1_000_000, 10).0, vec![100_000; 10]);
        assert_eq!(one(42, 1).0, vec![42]);
        assert_eq!(one(10, 3).0, vec![4, 3, 3]);
    }

    #[test]
    fn missing_district_is_an_error() {
        let reg = registry(3);
        let table = DistrictTable::from([(DistrictId(0), 10), (DistrictId(1), 10)]);
        assert!(matches!(
            allocate_population(&table, &reg),
            Err(Error::MissingDistrictPopulation(2))
        ));
    }

    #[test]
    fn registry_rejects_gaps() {
        let stations = vec![Station {
            id: StationId(1),
            name: "a".into(),
            district: DistrictId(0),
            lat: 0.0,
            lon: 0.0,
        }];
        assert!(StationRegistry::new(stations).is_err());
    }

    #[test]
    fn csv_roundtrip_of_registry_and_districts() {
        let reg = registry(4);
        let mut buf = Vec::new();
        reg.write_csv(&mut buf).unwrap();
        assert_eq!(StationRegistry::from_csv(&buf[..]).unwrap(), reg);

        let table = DistrictTable::from([(DistrictId(0), 5), (DistrictId(2), 9)]);
        let mut buf = Vec::new();
        write_districts(&table, &mut buf).unwrap();
        assert_eq!(read_districts(&buf[..]).unwrap(), table);
    }
}
