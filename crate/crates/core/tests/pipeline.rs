use metroepi::flow::{aggregate_periods, build_hourly, weekly_average};
use metroepi::ingest::{allocate_population, parse_trips, write_trips, DistrictId, DistrictTable, Station, StationId, StationRegistry};
use metroepi::matrix_io::{read_matrix_dir, write_matrix_dir};
use metroepi::synth::{generate, Layout, SynthConfig};
use proptest::prelude::*;

#[test]
fn synthetic_week_round_trips_through_ingest_and_matrices() {
    let cfg = SynthConfig {
        locations: 9,
        layout: Layout::Ring,
        daily_trips: 5_000.0,
        ..SynthConfig::default()
    };
    let city = generate(&cfg).unwrap();
    let mut csv = Vec::new();
    write_trips(&city.trips, &mut csv).unwrap();
    let (trips, report) = parse_trips(csv.as_slice(), &city.registry).unwrap();
    assert_eq!(report.rejected_count(), 0);

    let pops = allocate_population(&city.districts, &city.registry).unwrap();
    assert_eq!(pops.0, city.populations);
    let hourly = build_hourly(&trips, &pops, &city.week).unwrap();
    let periods = aggregate_periods(&hourly.matrices).unwrap();
    let weekly = weekly_average(&periods.matrices).unwrap();
    assert!(weekly.as_slice().iter().all(|&v| v >= 0.0));

    let dir = std::env::temp_dir().join(format!("metroepi-pipeline-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    write_matrix_dir(&dir, city.week, &hourly, &periods, &weekly).unwrap();
    let back = read_matrix_dir(&dir).unwrap();
    assert_eq!(back.hourly.matrices, hourly.matrices);
    assert_eq!(back.periods.matrices, periods.matrices);
    assert_eq!(back.weekly, weekly);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn registry(districts: &[u32]) -> StationRegistry {
    StationRegistry::new(
        districts
            .iter()
            .enumerate()
            .map(|(k, &d)| Station {
                id: StationId(k as u32),
                name: format!("s{k}"),
                district: DistrictId(d),
                lat: 31.0,
                lon: 121.0,
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn allocation_preserves_district_totals(
        districts in proptest::collection::vec(0u32..5, 1..30),
        extra in proptest::collection::vec(0u64..1_000_000, 5),
    ) {
        let reg = registry(&districts);
        let table: DistrictTable = (0..5u32)
            .map(|d| {
                let stations = districts.iter().filter(|&&x| x == d).count() as u64;
                (DistrictId(d), stations + extra[d as usize])
            })
            .collect();
        let pops = allocate_population(&table, &reg).unwrap();
        for d in 0..5u32 {
            let shares: Vec<u64> = districts
                .iter()
                .zip(&pops.0)
                .filter(|(&x, _)| x == d)
                .map(|(_, &p)| p)
                .collect();
            if shares.is_empty() {
                continue;
            }
            prop_assert_eq!(shares.iter().sum::<u64>(), table[&DistrictId(d)]);
            let (lo, hi) = (*shares.iter().min().unwrap(), *shares.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert!(lo >= 1);
        }
    }
}
