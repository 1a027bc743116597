//! Synthetic cities: station layouts, populations and a week of trips
//! drawn from a gravity model.
//!
//! Randomness comes from a single ChaCha8 stream seeded with
//! [`SynthConfig::seed`]; trip counts are Poisson draws (`rand_distr`).
//! Generation is single-threaded, so equal configs give equal output.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::centrality::{haversine_km, GeoPoint};
use crate::error::{Error, Result};
use crate::ingest::{DistrictId, DistrictTable, Station, StationId, StationRegistry, TripRecord};
use crate::period::{Period, WeekRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Grid,
    Ring,
    TwoCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationProfile {
    Uniform,
    /// Larger populations near the layout centre.
    CentreHeavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub locations: usize,
    pub seed: u64,
    pub layout: Layout,
    pub populations: PopulationProfile,
    /// Population of an outlying location; the centre gets up to
    /// `1 + centre_boost` times this.
    pub base_population: u64,
    pub centre_boost: f64,
    pub gravity_exponent: f64,
    /// Softening added to distances in the gravity kernel, km.
    pub gravity_offset_km: f64,
    /// Expected weekday trips over the whole city.
    pub daily_trips: f64,
    pub weekend_factor: f64,
    /// Baseline multiplier on trips between the two clusters.
    pub inter_cluster_weight: f64,
    /// Extra multiplier on inter-cluster trips during Friday afternoon and
    /// evening.
    pub friday_bridge: f64,
    /// Share of weekday trips made by commuters with a fixed home and work.
    pub commuter_fraction: f64,
    /// Chance that a commuter stops somewhere on the way home.
    pub evening_stop_probability: f64,
    pub spacing_km: f64,
    /// Distance between the two cluster centres, km.
    pub cluster_gap_km: f64,
    pub center: GeoPoint,
    /// Must be a Monday.
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            locations: 20,
            seed: 1,
            layout: Layout::Grid,
            populations: PopulationProfile::CentreHeavy,
            base_population: 20_000,
            centre_boost: 4.0,
            gravity_exponent: 2.0,
            gravity_offset_km: 1.0,
            daily_trips: 100_000.0,
            weekend_factor: 0.7,
            inter_cluster_weight: 1.0,
            friday_bridge: 1.0,
            commuter_fraction: 0.2,
            evening_stop_probability: 0.3,
            spacing_km: 1.5,
            cluster_gap_km: 12.0,
            center: GeoPoint::JINGAN_TEMPLE,
            start: NaiveDate::from_ymd_opt(2015, 4, 13).expect("valid date"),
        }
    }
}

/// Share of a weekday's (or weekend day's) trips in each period.
const WEEKDAY_WEIGHTS: [f64; 4] = [0.35, 0.20, 0.35, 0.10];
const WEEKEND_WEIGHTS: [f64; 4] = [0.20, 0.35, 0.30, 0.15];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synth: {msg}")));
        if self.locations < 2 {
            return bad("need at least two locations");
        }
        if self.base_population == 0 {
            return bad("base population must be positive");
        }
        let nonneg = [
            self.centre_boost,
            self.gravity_exponent,
            self.gravity_offset_km,
            self.daily_trips,
            self.weekend_factor,
            self.inter_cluster_weight,
            self.friday_bridge,
            self.spacing_km,
            self.cluster_gap_km,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("rates, distances and volumes must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.commuter_fraction)
            || !(0.0..=1.0).contains(&self.evening_stop_probability)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if self.spacing_km <= 0.0 {
            return bad("spacing must be positive");
        }
        if crate::period::weekday_index(self.start) != 0 {
            return bad("start date must be a Monday");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCity {
    pub registry: StationRegistry,
    pub districts: DistrictTable,
    pub populations: Vec<u64>,
    /// Cluster of each station; all zero unless the layout is two-cluster.
    pub clusters: Vec<usize>,
    pub week: WeekRange,
    pub trips: Vec<TripRecord>,
}

/// Planar offsets in km around the origin.
fn place(config: &SynthConfig) -> (Vec<(f64, f64)>, Vec<usize>) {
    let n = config.locations;
    let s = config.spacing_km;
    let grid = |count: usize| -> Vec<(f64, f64)> {
        let cols = (count as f64).sqrt().ceil() as usize;
        let rows = count.div_ceil(cols);
        (0..count)
            .map(|k| {
                let (r, c) = (k / cols, k % cols);
                (
                    (c as f64 - (cols - 1) as f64 / 2.0) * s,
                    (r as f64 - (rows - 1) as f64 / 2.0) * s,
                )
            })
            .collect()
    };
    match config.layout {
        Layout::Grid => (grid(n), vec![0; n]),
        Layout::Ring => {
            let radius = (n as f64 * s / std::f64::consts::TAU).max(s);
            let pts = (0..n)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / n as f64;
                    (radius * a.cos(), radius * a.sin())
                })
                .collect();
            (pts, vec![0; n])
        }
        Layout::TwoCluster => {
            let first = n.div_ceil(2);
            let half = config.cluster_gap_km / 2.0;
            let mut pts: Vec<(f64, f64)> = grid(first).into_iter().map(|(x, y)| (x - half, y)).collect();
            pts.extend(grid(n - first).into_iter().map(|(x, y)| (x + half, y)));
            let clusters = (0..n).map(|k| usize::from(k >= first)).collect();
            (pts, clusters)
        }
    }
}

fn to_geo(center: GeoPoint, (x, y): (f64, f64)) -> GeoPoint {
    let km_per_deg = 111.194_926_644_558_74;
    GeoPoint {
        lat: center.lat + y / km_per_deg,
        lon: center.lon + x / (km_per_deg * center.lat.to_radians().cos()),
    }
}

fn populations(config: &SynthConfig, pts: &[(f64, f64)], clusters: &[usize]) -> Vec<u64> {
    match config.populations {
        PopulationProfile::Uniform => vec![config.base_population; pts.len()],
        PopulationProfile::CentreHeavy => {
            // Distance to the centre of the station's own cluster.
            let centres: Vec<(f64, f64)> = (0..=1)
                .map(|c| {
                    let members: Vec<_> = pts.iter().zip(clusters).filter(|(_, &k)| k == c).collect();
                    let m = members.len().max(1) as f64;
                    (
                        members.iter().map(|(p, _)| p.0).sum::<f64>() / m,
                        members.iter().map(|(p, _)| p.1).sum::<f64>() / m,
                    )
                })
                .collect();
            let radius = pts
                .iter()
                .zip(clusters)
                .map(|(p, &c)| (p.0 - centres[c].0).hypot(p.1 - centres[c].1))
                .fold(0.0, f64::max)
                .max(config.spacing_km);
            pts.iter()
                .zip(clusters)
                .map(|(p, &c)| {
                    let r = (p.0 - centres[c].0).hypot(p.1 - centres[c].1) / radius;
                    let factor = 1.0 + config.centre_boost * (-2.0 * r * r).exp();
                    (config.base_population as f64 * factor).round() as u64
                })
                .collect()
        }
    }
}

/// Hours of a period with their share of the period's trips; the first
/// morning hour is half a service hour.
fn hour_shares(period: Period) -> Vec<(u32, f64)> {
    let hours: Vec<usize> = period.hours().collect();
    let weight = |h: usize| if h == 5 { 0.5 } else { 1.0 };
    let total: f64 = hours.iter().map(|&h| weight(h)).sum();
    hours.iter().map(|&h| (h as u32, weight(h) / total)).collect()
}

fn at(date: NaiveDate, minute_of_day: u32) -> NaiveDateTime {
    date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(minute_of_day as i64)
}

fn travel_minutes(km: f64) -> u32 {
    5 + (2.0 * km).round() as u32
}

fn fare(km: f64) -> f64 {
    3.0 + (km / 6.0).floor()
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).map_or(0, |d| d.sample(&mut self.rng) as u64)
    }

    /// Index drawn with probability proportional to `weights`.
    fn pick(&mut self, weights: &[f64]) -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = self.rng.random::<f64>() * total;
        for (k, &w) in weights.iter().enumerate() {
            if u < w {
                return Some(k);
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0)
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCity> {
    config.validate()?;
    let n = config.locations;
    let (pts, clusters) = place(config);
    let pops = populations(config, &pts, &clusters);
    let geo: Vec<GeoPoint> = pts.iter().map(|&p| to_geo(config.center, p)).collect();

    let stations: Vec<Station> = geo
        .iter()
        .enumerate()
        .map(|(k, g)| Station {
            id: StationId(k as u32),
            name: format!("S{k:03}"),
            district: DistrictId(k as u32),
            lat: g.lat,
            lon: g.lon,
        })
        .collect();
    let registry = StationRegistry::new(stations)?;
    let districts: DistrictTable = pops
        .iter()
        .enumerate()
        .map(|(k, &p)| (DistrictId(k as u32), p))
        .collect();

    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| haversine_km(geo[i], geo[j])).collect())
        .collect();
    let gravity: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let g = pops[i] as f64 * pops[j] as f64
                        / (dist[i][j] + config.gravity_offset_km).powf(config.gravity_exponent);
                    if clusters[i] != clusters[j] {
                        g * config.inter_cluster_weight
                    } else {
                        g
                    }
                })
                .collect()
        })
        .collect();
    let gravity_total: f64 = gravity.iter().flatten().sum();

    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    let week = WeekRange::starting(config.start);
    let mut trips = Vec::new();
    let mut counter = 0u64;
    let trip = |card: String, from: usize, to: usize, depart: NaiveDateTime| TripRecord {
        card_id: card,
        checkin_time: depart,
        checkin_station: StationId(from as u32),
        checkout_time: depart + Duration::minutes(travel_minutes(dist[from][to]) as i64),
        checkout_station: StationId(to as u32),
        fare: fare(dist[from][to]),
    };

    // Background trips.
    for (day, date) in week.dates().enumerate() {
        let weekend = day >= 5;
        let (volume, weights) = if weekend {
            (config.daily_trips * config.weekend_factor, WEEKEND_WEIGHTS)
        } else {
            (config.daily_trips * (1.0 - config.commuter_fraction), WEEKDAY_WEIGHTS)
        };
        for period in Period::ALL {
            let bridged = day == 4 && matches!(period, Period::Afternoon | Period::Evening);
            for (hour, share) in hour_shares(period) {
                let scale = volume * weights[period.index()] * share / gravity_total;
                let first_minute = if hour == 5 { 30 } else { 0 };
                for i in 0..n {
                    for j in 0..n {
                        let mut lambda = scale * gravity[i][j];
                        if bridged && clusters[i] != clusters[j] {
                            lambda *= config.friday_bridge;
                        }
                        for _ in 0..s.poisson(lambda) {
                            let minute = hour * 60 + s.rng.random_range(first_minute..60);
                            counter += 1;
                            trips.push(trip(format!("r{counter:09}"), i, j, at(date, minute)));
                        }
                    }
                }
            }
        }
    }

    // Commuters on weekdays.
    let commuters = (config.commuter_fraction * config.daily_trips / 2.0).round() as usize;
    let home_weights: Vec<f64> = pops.iter().map(|&p| p as f64).collect();
    for c in 0..commuters {
        let card = format!("c{c:07}");
        let Some(home) = s.pick(&home_weights) else { break };
        let Some(work) = s.pick(&gravity[home]) else { continue };
        for date in week.dates().take(5) {
            let leave = 7 * 60 + s.rng.random_range(0..150);
            trips.push(trip(card.clone(), home, work, at(date, leave)));
            let back = 17 * 60 + s.rng.random_range(0..120);
            let stop = s.rng.random::<f64>() < config.evening_stop_probability;
            let mut weights = gravity[work].clone();
            weights[home] = 0.0;
            let extra = if stop { s.pick(&weights) } else { None };
            match extra {
                Some(e) => {
                    let arrive = back + travel_minutes(dist[work][e]);
                    let depart = arrive + 60 + s.rng.random_range(0..90);
                    trips.push(trip(card.clone(), work, e, at(date, back)));
                    trips.push(trip(card.clone(), e, home, at(date, depart)));
                }
                None => trips.push(trip(card.clone(), work, home, at(date, back))),
            }
        }
    }
    log::debug!("synthetic city: {n} locations, {} trips", trips.len());

    Ok(SynthCity {
        registry,
        districts,
        populations: pops,
        clusters,
        week,
        trips,
    })
}
