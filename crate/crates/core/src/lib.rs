//! Urban epidemic risk on time-varying transit mobility networks.
//!
//! The pipeline turns smart-card trip records into hourly and per-period
//! flow matrices, runs deterministic metapopulation SIR dynamics over
//! them for grids of introduction scenarios, and computes structural
//! statistics of the mobility network: temporal path coherence,
//! centralities, communities and daily activity motifs.

pub mod activity;
pub mod centrality;
pub mod community;
pub mod correlation;
pub mod epidemic;
pub mod error;
pub mod flow;
pub mod ingest;
pub mod matrix_io;
pub mod paths;
pub mod period;
pub mod synth;

pub use activity::Motif;
pub use community::CommunityPartition;
pub use epidemic::{DiseaseParams, ScenarioGrid, SweepResult};
pub use error::{Error, Result};
pub use flow::{FlowMatrix, HourlyFlows, PeriodFlows};
pub use ingest::{PopulationVector, StationId, StationRegistry, TripRecord};
pub use period::{Period, PeriodIndex, WeekRange};
pub use synth::SynthConfig;
