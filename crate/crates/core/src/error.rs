use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid station registry: {0}")]
    Registry(String),

    #[error("district {0} has stations but no population row")]
    MissingDistrictPopulation(u32),

    #[error("district {district} population {population} cannot give {stations} stations a positive share")]
    DistrictTooSmall {
        district: u32,
        population: u64,
        stations: usize,
    },

    #[error("invalid week range: {0}")]
    WeekRange(String),

    #[error("trip by card {card} checks in on {date}, outside the configured week")]
    TripOutsideWeek { card: String, date: chrono::NaiveDate },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("expected {expected} matrices, got {got}")]
    MatrixCount { expected: usize, got: usize },

    #[error("flow row {row} sums to {sum} (> 1); clamp the hourly matrices first")]
    RowSumExceeded { row: usize, sum: f64 },

    #[error("location {location} compartment {compartment} went negative ({value}) at hour {hour}")]
    Instability {
        location: usize,
        compartment: &'static str,
        value: f64,
        hour: usize,
    },

    #[error("invalid disease parameters: {0}")]
    Params(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("correlation matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),

    #[error("brute-force enumeration supports at most {max} locations, got {got}")]
    TooManyLocations { max: usize, got: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed matrix file {path}: {reason}")]
    MatrixFile { path: String, reason: String },
}
