//! Run configuration, read from JSON. Every field has a default, so `{}`
//! is a valid config that runs the whole pipeline on a synthetic city.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use metroepi::activity::ActivityThresholds;
use metroepi::centrality::GeoPoint;
use metroepi::epidemic::{BETA_HIGH_HOURLY, BETA_LOW_HOURLY, GAMMA_HOURLY};
use metroepi::period::PERIODS_PER_WEEK;
use metroepi::{DiseaseParams, PeriodIndex, ScenarioGrid, SynthConfig};

/// Transmission and recovery rates, given directly or through `R0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Rates { beta: f64, gamma: f64 },
    R0 { r0: f64, gamma: Option<f64> },
}

impl RateSpec {
    pub fn params(&self) -> Result<DiseaseParams> {
        let p = match *self {
            RateSpec::Rates { beta, gamma } => DiseaseParams::new(beta, gamma)?,
            RateSpec::R0 { r0, gamma } => DiseaseParams::from_r0(r0, gamma.unwrap_or(GAMMA_HOURLY))?,
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Seed locations; `None` means all.
    pub locations: Option<Vec<usize>>,
    pub i0: Vec<f64>,
    pub rates: Vec<RateSpec>,
    /// Seed periods as week indices `0..28`; `None` means all.
    pub periods: Option<Vec<usize>>,
    pub thresholds: Vec<f64>,
    pub horizon_days: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            locations: None,
            i0: vec![1.0, 100.0, 10_000.0],
            rates: vec![
                RateSpec::Rates {
                    beta: BETA_LOW_HOURLY,
                    gamma: GAMMA_HOURLY,
                },
                RateSpec::Rates {
                    beta: BETA_HIGH_HOURLY,
                    gamma: GAMMA_HOURLY,
                },
            ],
            periods: None,
            thresholds: vec![0.05, 0.10, 0.25, 0.50],
            horizon_days: 200,
        }
    }
}

impl SweepConfig {
    pub fn grid(&self, locations: usize) -> Result<ScenarioGrid> {
        let periods = match &self.periods {
            None => PeriodIndex::all().collect(),
            Some(list) => list
                .iter()
                .map(|&p| {
                    PeriodIndex::from_index(p)
                        .with_context(|| format!("sweep period {p} outside 0..{PERIODS_PER_WEEK}"))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let grid = ScenarioGrid {
            locations: self.locations.clone().unwrap_or_else(|| (0..locations).collect()),
            i0: self.i0.clone(),
            params: self.rates.iter().map(RateSpec::params).collect::<Result<_>>()?,
            periods,
            thresholds: self.thresholds.clone(),
            horizon_days: self.horizon_days,
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// A single run for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed_location: usize,
    pub seed_period: usize,
    pub i0: f64,
    pub rate: RateSpec,
    pub horizon_days: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            seed_location: 0,
            seed_period: 0,
            i0: 1.0,
            rate: RateSpec::Rates {
                beta: BETA_LOW_HOURLY,
                gamma: GAMMA_HOURLY,
            },
            horizon_days: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analyses {
    pub sweep: bool,
    pub network: bool,
    pub communities: bool,
    pub activity: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            sweep: true,
            network: true,
            communities: true,
            activity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Raw inputs. When all three are absent, `ingest` reads the output
    /// of `synth`.
    pub stations: Option<PathBuf>,
    pub districts: Option<PathBuf>,
    pub trips: Option<PathBuf>,
    /// Monday opening the analysis week; defaults to the Monday on or
    /// before the earliest accepted check-in.
    pub week_start: Option<NaiveDate>,
    pub seed: u64,
    pub synth: SynthConfig,
    pub sweep: SweepConfig,
    pub simulate: SimulateConfig,
    pub analyses: Analyses,
    pub louvain_resolution: f64,
    pub activity: ActivityThresholds,
    pub center: GeoPoint,
    pub top_destinations: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            stations: None,
            districts: None,
            trips: None,
            week_start: None,
            seed: 1,
            synth: SynthConfig::default(),
            sweep: SweepConfig::default(),
            simulate: SimulateConfig::default(),
            analyses: Analyses::default(),
            louvain_resolution: 1.0,
            activity: ActivityThresholds::default(),
            center: GeoPoint::JINGAN_TEMPLE,
            top_destinations: 10,
        }
    }
}

impl RunConfig {
    /// Reads `path`, resolving relative input paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.stations, &mut config.districts, &mut config.trips]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// The single seed drives both the synthetic city and Louvain.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.synth.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let given = [&self.stations, &self.districts, &self.trips]
            .iter()
            .filter(|p| p.is_some())
            .count();
        if given != 0 && given != 3 {
            bail!("config must name all of stations, districts and trips, or none of them");
        }
        for p in [&self.stations, &self.districts, &self.trips].into_iter().flatten() {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if !(self.louvain_resolution > 0.0 && self.louvain_resolution.is_finite()) {
            bail!("louvain_resolution must be positive");
        }
        if self.analyses.sweep {
            if self.sweep.i0.is_empty() || self.sweep.rates.is_empty() {
                bail!("sweep grid is empty");
            }
            if matches!(&self.sweep.locations, Some(l) if l.is_empty())
                || matches!(&self.sweep.periods, Some(p) if p.is_empty())
            {
                bail!("sweep grid is empty");
            }
        }
        self.synth.validate()?;
        Ok(())
    }

    pub fn has_raw_inputs(&self) -> bool {
        self.stations.is_some()
    }
}
