//! One function per subcommand. Each reads its inputs from the config or
//! from upstream stage directories under `out`, and writes one stage
//! directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::json;

use metroepi::activity::{afternoon_top_destinations, build_schedules, classify_all, motif_counts, recreation_by_date};
use metroepi::centrality::{centrality_table, risk_correlations, CentralityRow, CentralityTable, RISK_LABELS};
use metroepi::community::{largest_community_share, period_communities, weekly_transitions, LouvainOptions};
use metroepi::correlation::{hierarchical_cluster, period_correlations, CorrelationMatrix};
use metroepi::epidemic::{
    gamma_threshold, growth_curves, phi_curve, simulate_with, sweep, FlowSchedule, LocationSummary, Scenario,
    SimOptions,
};
use metroepi::flow::{aggregate_periods, build_hourly, weekly_average};
use metroepi::ingest::{allocate_population, parse_trips, read_districts, select_week, write_districts, write_trips};
use metroepi::matrix_io::{read_matrix_dir, write_matrix_dir, MatrixSet};
use metroepi::paths::weekly_coherence;
use metroepi::period::{weekday_index, DAYS_PER_WEEK, DAY_NAMES, PERIODS_PER_DAY};
use metroepi::synth::generate;
use metroepi::{PeriodIndex, PopulationVector, StationRegistry, TripRecord, WeekRange};

use crate::config::RunConfig;
use crate::stage::{opt, require, Stage};

pub const SYNTH: &str = "synth";
pub const INGEST: &str = "ingest";
pub const MATRICES: &str = "matrices";
pub const SIMULATE: &str = "simulate";
pub const SWEEP: &str = "sweep";
pub const NETWORK: &str = "network";
pub const COMMUNITIES: &str = "communities";
pub const ACTIVITY: &str = "activity";
pub const REPORT: &str = "report";

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn synth(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let city = generate(&config.synth)?;
    let stage = Stage::begin(out, SYNTH)?;
    city.registry.write_csv(File::create(stage.path("stations.csv"))?)?;
    write_districts(&city.districts, File::create(stage.path("districts.csv"))?)?;
    write_trips(&city.trips, std::io::BufWriter::new(File::create(stage.path("trips.csv"))?))?;
    let mut w = stage.csv("clusters.csv")?;
    w.write_record(["location", "cluster"])?;
    for (i, c) in city.clusters.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()])?;
    }
    w.flush()?;
    let details = json!({
        "locations": city.registry.len(),
        "trips": city.trips.len(),
        "population": city.populations.iter().sum::<u64>(),
        "week": city.week,
    });
    stage.finish(config, details)
}

/// Stations, districts and trips: from the config, or else from `synth`.
fn raw_inputs(config: &RunConfig, out: &Path) -> Result<[PathBuf; 3]> {
    match (&config.stations, &config.districts, &config.trips) {
        (Some(s), Some(d), Some(t)) => Ok([s.clone(), d.clone(), t.clone()]),
        _ => {
            let dir = require(out, SYNTH)?;
            Ok([dir.join("stations.csv"), dir.join("districts.csv"), dir.join("trips.csv")])
        }
    }
}

fn monday_on_or_before(date: NaiveDate) -> NaiveDate {
    date - Days::new(weekday_index(date) as u64)
}

pub fn ingest(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let [stations_path, districts_path, trips_path] = raw_inputs(config, out)?;
    let mut stage = Stage::begin(out, INGEST)?;
    for p in [&stations_path, &districts_path, &trips_path] {
        stage.input(p)?;
    }
    let registry = StationRegistry::from_csv(open(&stations_path)?)?;
    let districts = read_districts(open(&districts_path)?)?;
    let populations = allocate_population(&districts, &registry)?;
    let (trips, report) = parse_trips(open(&trips_path)?, &registry)?;
    if report.rejected_count() > 0 {
        log::warn!("{} of {} trip rows rejected", report.rejected_count(), report.rows_read);
    }
    let start = match config.week_start {
        Some(d) => d,
        None => match trips.iter().map(|t| t.checkin_time.date()).min() {
            Some(first) => monday_on_or_before(first),
            None => bail!("{} has no valid trips", trips_path.display()),
        },
    };
    let week = WeekRange::starting(start);
    let selected = select_week(&trips, &week);
    if selected.is_empty() {
        bail!("no trips in the week starting {start}");
    }

    registry.write_csv(File::create(stage.path("stations.csv"))?)?;
    write_districts(&districts, File::create(stage.path("districts.csv"))?)?;
    write_trips(&selected, std::io::BufWriter::new(File::create(stage.path("trips.csv"))?))?;
    let mut w = stage.csv("populations.csv")?;
    w.write_record(["location", "population"])?;
    for (i, p) in populations.0.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()])?;
    }
    w.flush()?;
    let mut w = stage.csv("rejections.csv")?;
    w.write_record(["row", "reason"])?;
    for r in &report.rejected {
        w.write_record([r.row.to_string(), r.reason.to_string()])?;
    }
    w.flush()?;
    stage.json("week.json", &week)?;
    let details = json!({
        "rows_read": report.rows_read,
        "accepted": report.accepted,
        "rejected": report.rejected_count(),
        "in_week": selected.len(),
        "locations": registry.len(),
        "population": populations.total(),
        "week": week,
    });
    stage.finish(config, details)
}

struct Ingested {
    registry: StationRegistry,
    populations: PopulationVector,
    trips: Vec<TripRecord>,
    week: WeekRange,
}

fn load_ingest(stage: &mut Stage, out: &Path, with_trips: bool) -> Result<Ingested> {
    let dir = require(out, INGEST)?;
    let stations = dir.join("stations.csv");
    let pops = dir.join("populations.csv");
    let week_path = dir.join("week.json");
    stage.input(&stations)?;
    stage.input(&pops)?;
    stage.input(&week_path)?;
    let registry = StationRegistry::from_csv(open(&stations)?)?;
    let mut rdr = csv::Reader::from_reader(open(&pops)?);
    let mut populations = Vec::new();
    for row in rdr.deserialize() {
        let (_, p): (usize, u64) = row?;
        populations.push(p);
    }
    let week: WeekRange = serde_json::from_reader(open(&week_path)?)?;
    let trips = if with_trips {
        let path = dir.join("trips.csv");
        stage.input(&path)?;
        let (trips, report) = parse_trips(open(&path)?, &registry)?;
        if report.rejected_count() > 0 {
            bail!("{} was modified: {} rows no longer parse", path.display(), report.rejected_count());
        }
        trips
    } else {
        Vec::new()
    };
    Ok(Ingested {
        registry,
        populations: PopulationVector(populations),
        trips,
        week,
    })
}

fn load_matrices(stage: &mut Stage, out: &Path) -> Result<MatrixSet> {
    let dir = require(out, MATRICES)?;
    for rel in crate::stage::list_files(&dir)? {
        if rel != crate::stage::MANIFEST {
            stage.input(&dir.join(rel))?;
        }
    }
    Ok(read_matrix_dir(&dir)?)
}

pub fn matrices(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut stage = Stage::begin(out, MATRICES)?;
    let data = load_ingest(&mut stage, out, true)?;
    let hourly = build_hourly(&data.trips, &data.populations, &data.week)?;
    let periods = aggregate_periods(&hourly.matrices)?;
    let weekly = weekly_average(&periods.matrices)?;
    let m = write_matrix_dir(stage.dir(), data.week, &hourly, &periods, &weekly)?;
    let details = json!({
        "locations": m.locations,
        "clamp_warnings": m.clamp_warnings.len(),
        "skipped_pre_service": m.skipped_pre_service,
        "self_trips": m.self_trips,
    });
    stage.finish(config, details)
}

pub fn simulate(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut stage = Stage::begin(out, SIMULATE)?;
    let data = load_ingest(&mut stage, out, false)?;
    let set = load_matrices(&mut stage, out)?;
    let sc = &config.simulate;
    let scenario = Scenario {
        seed_location: sc.seed_location,
        seed_time: PeriodIndex::from_index(sc.seed_period)
            .with_context(|| format!("seed period {} outside 0..28", sc.seed_period))?,
        i0: sc.i0,
        params: sc.rate.params()?,
        horizon_days: sc.horizon_days,
    };
    let pops = data.populations.as_f64();
    let schedule = FlowSchedule::new(&set.hourly.matrices)?;
    let result = simulate_with(&schedule, &scenario, &pops, &SimOptions::default(), |_| {})?;

    let mut w = stage.csv("daily.csv")?;
    w.write_record(["day", "hour", "s", "i", "r"])?;
    for d in &result.daily {
        w.write_record([d.day.to_string(), d.hour.to_string(), d.s.to_string(), d.i.to_string(), d.r.to_string()])?;
    }
    w.flush()?;
    let mut w = stage.csv("arrivals.csv")?;
    w.write_record(["location", "hour", "day", "period"])?;
    for loc in 0..pops.len() {
        match result.arrivals.arrival(loc) {
            Some(a) => w.write_record([loc.to_string(), a.hour.to_string(), a.day.to_string(), a.period.to_string()])?,
            None => w.write_record([loc.to_string(), String::new(), String::new(), String::new()])?,
        }
    }
    w.flush()?;
    let mut w = stage.csv("phi.csv")?;
    w.write_record(["day", "phi"])?;
    for (day, phi) in phi_curve(&result.arrivals).iter().enumerate() {
        w.write_record([day.to_string(), phi.to_string()])?;
    }
    w.flush()?;
    let mut w = stage.csv("final_state.csv")?;
    w.write_record(["location", "s", "i", "r"])?;
    let st = &result.final_state;
    for k in 0..st.len() {
        w.write_record([k.to_string(), st.s[k].to_string(), st.i[k].to_string(), st.r[k].to_string()])?;
    }
    w.flush()?;
    let gammas: Vec<_> = config
        .sweep
        .thresholds
        .iter()
        .map(|&t| json!({"threshold": t, "day": gamma_threshold(&result.arrivals, t)}))
        .collect();
    let details = json!({
        "scenario": scenario,
        "peak_day": result.peak_day,
        "peak_infected": result.peak_infected,
        "final_size": result.final_size,
        "hours_run": result.hours_run,
        "infected_locations": result.arrivals.infected_count(),
        "gammas": gammas,
    });
    stage.finish(config, details)
}

pub fn run_sweep(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut stage = Stage::begin(out, SWEEP)?;
    let data = load_ingest(&mut stage, out, false)?;
    let set = load_matrices(&mut stage, out)?;
    let grid = config.sweep.grid(set.hourly.dim())?;
    log::info!("running {} scenarios", grid.len());
    let result = sweep(&grid, &set.hourly.matrices, &data.populations.as_f64())?;
    let n = result.locations;

    let mut w = stage.csv("scenarios.csv")?;
    let mut header: Vec<String> = [
        "scenario_id", "cohort", "seed", "seed_period", "i0", "beta", "gamma", "status", "peak_day", "final_size",
        "hours_run", "infected_locations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(grid.thresholds.iter().map(|t| format!("gamma_{t}")));
    w.write_record(&header)?;
    for o in &result.outcomes {
        let s = &o.scenario;
        let mut row = vec![
            o.id.to_string(),
            o.cohort.to_string(),
            s.seed_location.to_string(),
            s.seed_time.index().to_string(),
            s.i0.to_string(),
            s.params.beta.to_string(),
            s.params.gamma.to_string(),
        ];
        match &o.result {
            Ok(m) => {
                row.extend([
                    "ok".to_string(),
                    m.peak_day.to_string(),
                    m.final_size.to_string(),
                    m.hours_run.to_string(),
                    m.arrivals.infected_count().to_string(),
                ]);
                row.extend(m.gammas.iter().map(|g| opt(*g)));
            }
            Err(_) => {
                row.push("failed".to_string());
                row.extend(std::iter::repeat_n(String::new(), 4 + grid.thresholds.len()));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = stage.csv("phi.csv")?;
    w.write_record(["scenario_id", "seed", "day", "period", "phi", "new_locations"])?;
    for o in &result.outcomes {
        let Ok(m) = &o.result else { continue };
        let mut reached = 0;
        for (day, period, count) in m.arrivals.groups() {
            reached += count;
            w.write_record([
                o.id.to_string(),
                o.scenario.seed_location.to_string(),
                day.to_string(),
                period.to_string(),
                (reached as f64 / n as f64).to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = stage.csv("summary.csv")?;
    w.write_record(["location", "mean_gamma10", "mean_chi", "unreached_count"])?;
    for s in &result.summary {
        w.write_record([s.location.to_string(), opt(s.mean_gamma10), opt(s.mean_chi), s.unreached_count.to_string()])?;
    }
    w.flush()?;

    let mut w = stage.csv("cohort_summary.csv")?;
    w.write_record([
        "cohort", "beta", "gamma", "r0", "i0", "location", "mean_gamma10", "gamma10_unreached", "mean_chi",
        "unreached_count",
    ])?;
    for c in &result.cohorts {
        for s in &c.rows {
            w.write_record([
                c.cohort.to_string(),
                c.params.beta.to_string(),
                c.params.gamma.to_string(),
                c.params.r0().to_string(),
                c.i0.to_string(),
                s.location.to_string(),
                opt(s.mean_gamma10),
                s.gamma10_unreached.to_string(),
                opt(s.mean_chi),
                s.unreached_count.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = stage.csv("growth.csv")?;
    w.write_record(["cohort", "r0", "i0", "seed_period", "day", "mean", "min", "max", "runs"])?;
    for g in growth_curves(&result) {
        let c = &result.cohorts[g.cohort];
        w.write_record([
            g.cohort.to_string(),
            c.params.r0().to_string(),
            c.i0.to_string(),
            g.seed_time.to_string(),
            g.day.to_string(),
            g.mean.to_string(),
            g.min.to_string(),
            g.max.to_string(),
            g.runs.to_string(),
        ])?;
    }
    w.flush()?;

    let failures: Vec<_> = result.failed().map(|(id, e)| json!({"scenario_id": id, "error": e})).collect();
    if !failures.is_empty() {
        log::warn!("{} of {} scenarios failed; see manifest", failures.len(), grid.len());
    }
    let details = json!({
        "scenarios": grid.len(),
        "succeeded": grid.len() - failures.len(),
        "failed": failures,
    });
    stage.finish(config, details)
}

pub fn network(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut stage = Stage::begin(out, NETWORK)?;
    let data = load_ingest(&mut stage, out, false)?;
    let set = load_matrices(&mut stage, out)?;

    let table = centrality_table(&set.weekly, &data.registry, config.center)?;
    let mut w = stage.csv("centrality.csv")?;
    w.write_record(["location", "k_in", "k_out", "c_in", "c_out", "d_center_km"])?;
    for r in &table.rows {
        w.write_record([
            r.location.to_string(),
            r.k_in.to_string(),
            r.k_out.to_string(),
            opt(r.c_in),
            opt(r.c_out),
            r.d_center_km.to_string(),
        ])?;
    }
    w.flush()?;

    let coherence = weekly_coherence(&set.periods)?;
    let mut w = stage.csv("coherence.csv")?;
    w.write_record(["day", "coherence", "avg_distance", "argmin_from", "argmin_to", "unreachable_pairs"])?;
    for c in &coherence {
        w.write_record([
            DAY_NAMES[c.day].to_string(),
            c.coherence.to_string(),
            c.avg_distance.to_string(),
            opt(c.argmin.map(|a| a.0)),
            opt(c.argmin.map(|a| a.1)),
            c.unreachable_pairs.to_string(),
        ])?;
    }
    w.flush()?;

    let corr = period_correlations(&set.periods.matrices);
    write_square(&stage, "period_correlations.csv", "period", &corr, |c| c.r)?;
    let dendrogram = hierarchical_cluster(&corr.r_values(0.0))?;
    let mut w = stage.csv("dendrogram.csv")?;
    w.write_record(["step", "left", "right", "height", "size"])?;
    for (k, m) in dendrogram.merges.iter().enumerate() {
        w.write_record([k.to_string(), m.left.to_string(), m.right.to_string(), m.height.to_string(), m.size.to_string()])?;
    }
    w.flush()?;
    let order: Vec<String> = dendrogram.leaf_order().iter().map(|&i| corr.labels[i].clone()).collect();
    let details = json!({
        "clamped_path_weights": table.clamped_entries,
        "leaf_order": order,
    });
    stage.finish(config, details)
}

fn write_square(
    stage: &Stage,
    file: &str,
    corner: &str,
    m: &CorrelationMatrix,
    value: impl Fn(&metroepi::correlation::Correlation) -> f64,
) -> Result<()> {
    let mut w = stage.csv(file)?;
    let mut header = vec![corner.to_string()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header)?;
    for (a, label) in m.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(m.entries[a].iter().map(|e| opt(e.as_ref().map(&value))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn communities(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut stage = Stage::begin(out, COMMUNITIES)?;
    let data = load_ingest(&mut stage, out, false)?;
    let set = load_matrices(&mut stage, out)?;
    let options = LouvainOptions {
        resolution: config.louvain_resolution,
        seed: config.seed,
    };
    let partitions = period_communities(&set.periods, &options);
    let pops = data.populations.as_f64();

    let mut w = stage.csv("partitions.csv")?;
    w.write_record(["period", "location", "community"])?;
    for (p, part) in partitions.iter().enumerate() {
        for (loc, c) in part.assignment.iter().enumerate() {
            w.write_record([p.to_string(), loc.to_string(), c.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = stage.csv("summary.csv")?;
    w.write_record(["period", "label", "communities", "modularity", "largest_community", "largest_share"])?;
    for (p, part) in partitions.iter().enumerate() {
        let (largest, share) = largest_community_share(&part.assignment, &pops)?;
        w.write_record([
            p.to_string(),
            PeriodIndex::from_index(p).expect("28 periods").to_string(),
            part.communities().to_string(),
            part.modularity.to_string(),
            largest.to_string(),
            share.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = stage.csv("transitions.csv")?;
    w.write_record(["slot", "day_from", "day_to", "community_from", "community_to", "count"])?;
    for t in weekly_transitions(&partitions)? {
        for &(from, to, count) in &t.matrix.counts {
            w.write_record([
                t.slot.to_string(),
                DAY_NAMES[t.day_from].to_string(),
                DAY_NAMES[t.day_to].to_string(),
                from.to_string(),
                to.to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    stage.finish(config, json!({ "resolution": options.resolution, "seed": options.seed }))
}

pub fn activity(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut stage = Stage::begin(out, ACTIVITY)?;
    let data = load_ingest(&mut stage, out, true)?;
    let set = load_matrices(&mut stage, out)?;
    let schedules = build_schedules(&data.trips);
    let labels = classify_all(&schedules, &config.activity);

    let mut w = stage.csv("motifs.csv")?;
    w.write_record(["date", "motif", "count"])?;
    for (date, motif, count) in motif_counts(&labels) {
        w.write_record([date.to_string(), motif.to_string(), count.to_string()])?;
    }
    w.flush()?;

    let mut w = stage.csv("recreation.csv")?;
    w.write_record(["date", "n_w", "n_e", "rho"])?;
    for r in recreation_by_date(&labels) {
        w.write_record([r.date.to_string(), r.n_w.to_string(), r.n_e.to_string(), opt(r.rho)])?;
    }
    w.flush()?;

    let mut w = stage.csv("top_destinations.csv")?;
    w.write_record(["day", "rank", "station", "influx"])?;
    for (day, rank, station, influx) in afternoon_top_destinations(&set.periods, config.top_destinations) {
        w.write_record([DAY_NAMES[day].to_string(), rank.to_string(), station.to_string(), influx.to_string()])?;
    }
    w.flush()?;
    let inconsistent = schedules.iter().filter(|s| !s.consistent).count();
    stage.finish(config, json!({ "card_days": schedules.len(), "inconsistent": inconsistent }))
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    location: usize,
    mean_gamma10: Option<f64>,
    mean_chi: Option<f64>,
    unreached_count: usize,
}

#[derive(Debug, Deserialize)]
struct CohortRow {
    cohort: usize,
    r0: f64,
    i0: f64,
    location: usize,
    mean_gamma10: Option<f64>,
    gamma10_unreached: usize,
    mean_chi: Option<f64>,
    unreached_count: usize,
}

#[derive(Debug, Deserialize, Serialize)]
struct CentralityCsv {
    location: usize,
    k_in: f64,
    k_out: f64,
    c_in: Option<f64>,
    c_out: Option<f64>,
    d_center_km: f64,
}

#[derive(Debug, Deserialize)]
struct CoherenceCsv {
    day: String,
    coherence: f64,
    avg_distance: f64,
}

#[derive(Debug, Deserialize)]
struct RecreationCsv {
    date: NaiveDate,
    n_w: usize,
    n_e: usize,
}

#[derive(Debug, Deserialize)]
struct CommunityCsv {
    period: usize,
    communities: usize,
    largest_share: f64,
}

fn read_rows<T: serde::de::DeserializeOwned>(stage: &mut Stage, path: &Path) -> Result<Vec<T>> {
    stage.input(path)?;
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize()
        .map(|r| r.with_context(|| format!("reading {}", path.display())))
        .collect()
}

/// Collates growth curves, the weekly network table and the centrality/risk
/// correlations from finished stages.
pub fn report(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let mut stage = Stage::begin(out, REPORT)?;
    let sweep_dir = require(out, SWEEP)?;
    let network_dir = require(out, NETWORK)?;

    let growth = sweep_dir.join("growth.csv");
    stage.input(&growth)?;
    fs::copy(&growth, stage.path("growth_curves.csv"))?;

    let summary: Vec<SummaryRow> = read_rows(&mut stage, &sweep_dir.join("summary.csv"))?;
    let cohort_rows: Vec<CohortRow> = read_rows(&mut stage, &sweep_dir.join("cohort_summary.csv"))?;
    let cent: Vec<CentralityCsv> = read_rows(&mut stage, &network_dir.join("centrality.csv"))?;
    if summary.len() != cent.len() {
        bail!("sweep has {} locations but network has {}; rerun both", summary.len(), cent.len());
    }
    let table = CentralityTable {
        rows: cent
            .iter()
            .map(|c| CentralityRow {
                location: c.location,
                k_in: c.k_in,
                k_out: c.k_out,
                c_in: c.c_in,
                c_out: c.c_out,
                reach_in: 0,
                reach_out: 0,
                d_center_km: c.d_center_km,
            })
            .collect(),
        clamped_entries: 0,
    };

    let mut w = stage.csv("risk_summary.csv")?;
    w.write_record([
        "location", "mean_gamma10", "mean_chi", "unreached_count", "k_in", "k_out", "c_in", "c_out", "d_center_km",
    ])?;
    for (s, c) in summary.iter().zip(&cent) {
        w.write_record([
            s.location.to_string(),
            opt(s.mean_gamma10),
            opt(s.mean_chi),
            s.unreached_count.to_string(),
            c.k_in.to_string(),
            c.k_out.to_string(),
            opt(c.c_in),
            opt(c.c_out),
            c.d_center_km.to_string(),
        ])?;
    }
    w.flush()?;

    let pooled: Vec<LocationSummary> = summary
        .iter()
        .map(|s| LocationSummary {
            location: s.location,
            mean_gamma10: s.mean_gamma10,
            gamma10_unreached: 0,
            mean_chi: s.mean_chi,
            unreached_count: s.unreached_count,
        })
        .collect();
    let mut tables = vec![(
        "all".to_string(),
        String::new(),
        String::new(),
        risk_correlations(&pooled, &table)?,
        pooled,
    )];
    let mut by_cohort: BTreeMap<usize, (f64, f64, Vec<LocationSummary>)> = BTreeMap::new();
    for r in cohort_rows {
        let entry = by_cohort.entry(r.cohort).or_insert((r.r0, r.i0, Vec::new()));
        entry.2.push(LocationSummary {
            location: r.location,
            mean_gamma10: r.mean_gamma10,
            gamma10_unreached: r.gamma10_unreached,
            mean_chi: r.mean_chi,
            unreached_count: r.unreached_count,
        });
    }
    for (cohort, (r0, i0, rows)) in by_cohort {
        let m = risk_correlations(&rows, &table)?;
        tables.push((cohort.to_string(), r0.to_string(), i0.to_string(), m, rows));
    }

    let mut w = stage.csv("risk_correlations.csv")?;
    w.write_record(["cohort", "r0", "i0", "row", "column", "r", "p_value", "n"])?;
    for (cohort, r0, i0, m, rows) in &tables {
        for a in 0..m.len() {
            for b in 0..m.len() {
                let e = m.entries[a][b];
                w.write_record([
                    cohort.clone(),
                    r0.clone(),
                    i0.clone(),
                    RISK_LABELS[a].to_string(),
                    RISK_LABELS[b].to_string(),
                    opt(e.map(|c| c.r)),
                    opt(e.and_then(|c| c.p_value)),
                    opt(e.map(|_| pair_count(rows, &table, a, b))),
                ])?;
            }
        }
    }
    w.flush()?;
    write_square(&stage, "risk_correlations_r.csv", "measure", &tables[0].3, |c| c.r)?;
    write_square(&stage, "risk_correlations_p.csv", "measure", &tables[0].3, |c| {
        c.p_value.unwrap_or(f64::NAN)
    })?;

    let weekly = weekly_network_table(config, out, &mut stage)?;
    let mut w = stage.csv("weekly_network.csv")?;
    w.write_record(["day", "coherence", "avg_distance", "rho", "communities", "largest_share"])?;
    for r in &weekly {
        w.write_record([
            r.day.to_string(),
            r.coherence.to_string(),
            r.avg_distance.to_string(),
            opt(r.rho),
            opt(r.communities),
            opt(r.largest_share),
        ])?;
    }
    w.flush()?;

    stage.finish(config, json!({ "locations": summary.len() }))
}

/// Locations with both values defined.
fn pair_count(summary: &[LocationSummary], table: &CentralityTable, a: usize, b: usize) -> usize {
    let value = |k: usize, i: usize| -> Option<f64> {
        let r = &table.rows[i];
        match k {
            0 => summary[i].mean_chi,
            1 => summary[i].mean_gamma10,
            2 => Some(r.d_center_km),
            3 => Some(r.k_in),
            4 => Some(r.k_out),
            5 => r.c_in,
            _ => r.c_out,
        }
    };
    (0..summary.len()).filter(|&i| value(a, i).is_some() && value(b, i).is_some()).count()
}

struct WeeklyRow {
    day: &'static str,
    coherence: f64,
    avg_distance: f64,
    rho: Option<f64>,
    communities: Option<f64>,
    largest_share: Option<f64>,
}

fn weekly_network_table(config: &RunConfig, out: &Path, stage: &mut Stage) -> Result<Vec<WeeklyRow>> {
    let coherence: Vec<CoherenceCsv> = read_rows(stage, &require(out, NETWORK)?.join("coherence.csv"))?;
    let mut rows: Vec<WeeklyRow> = coherence
        .into_iter()
        .enumerate()
        .map(|(d, c)| {
            debug_assert_eq!(c.day, DAY_NAMES[d]);
            WeeklyRow {
                day: DAY_NAMES[d],
                coherence: c.coherence,
                avg_distance: c.avg_distance,
                rho: None,
                communities: None,
                largest_share: None,
            }
        })
        .collect();
    if rows.len() != DAYS_PER_WEEK {
        bail!("coherence table has {} days", rows.len());
    }
    if config.analyses.activity {
        let rec: Vec<RecreationCsv> = read_rows(stage, &require(out, ACTIVITY)?.join("recreation.csv"))?;
        let mut tally = [(0usize, 0usize); DAYS_PER_WEEK];
        for r in rec {
            let t = &mut tally[weekday_index(r.date)];
            t.0 += r.n_w;
            t.1 += r.n_e;
        }
        for (row, (n_w, n_e)) in rows.iter_mut().zip(tally) {
            row.rho = (n_w > 0).then(|| n_e as f64 / n_w as f64);
        }
    }
    if config.analyses.communities {
        let comm: Vec<CommunityCsv> = read_rows(stage, &require(out, COMMUNITIES)?.join("summary.csv"))?;
        let mut acc = [(0.0, 0.0); DAYS_PER_WEEK];
        for c in comm {
            let a = &mut acc[c.period / PERIODS_PER_DAY];
            a.0 += c.communities as f64;
            a.1 += c.largest_share;
        }
        for (row, (count, share)) in rows.iter_mut().zip(acc) {
            row.communities = Some(count / PERIODS_PER_DAY as f64);
            row.largest_share = Some(share / PERIODS_PER_DAY as f64);
        }
    }
    Ok(rows)
}

/// Every stage in dependency order; `synth` only when the config names no
/// raw inputs.
pub fn pipeline(config: &RunConfig, out: &Path) -> Result<()> {
    if !config.has_raw_inputs() {
        synth(config, out)?;
    }
    ingest(config, out)?;
    matrices(config, out)?;
    if config.analyses.sweep {
        run_sweep(config, out)?;
    }
    if config.analyses.network {
        network(config, out)?;
    }
    if config.analyses.communities {
        communities(config, out)?;
    }
    if config.analyses.activity {
        activity(config, out)?;
    }
    if config.analyses.sweep && config.analyses.network {
        report(config, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monday_rounding() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        assert_eq!(monday_on_or_before(d("2015-04-13")), d("2015-04-13"));
        assert_eq!(monday_on_or_before(d("2015-04-19")), d("2015-04-13"));
        assert_eq!(monday_on_or_before(d("2015-04-20")), d("2015-04-20"));
    }
}
