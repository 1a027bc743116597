use metroepi::epidemic::{
    simulate, simulate_with, step_hour, sweep, DiseaseParams, EpidemicState, FlowSchedule, Scenario,
    ScenarioGrid, SimOptions,
};
use metroepi::period::{Period, PeriodIndex, HOURS_PER_DAY, HOURS_PER_WEEK};
use metroepi::FlowMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn in_service(hour_of_week: usize) -> bool {
    Period::of_hour(hour_of_week % HOURS_PER_DAY).is_some()
}

/// The same matrix in every service hour, zeros overnight.
fn constant_week(m: &FlowMatrix) -> Vec<FlowMatrix> {
    (0..HOURS_PER_WEEK)
        .map(|h| if in_service(h) { m.clone() } else { FlowMatrix::zeros(m.dim()) })
        .collect()
}

fn random_week(n: usize, rng: &mut ChaCha8Rng, density: f64, scale: f64) -> Vec<FlowMatrix> {
    (0..HOURS_PER_WEEK)
        .map(|h| {
            let mut m = FlowMatrix::zeros(n);
            if in_service(h) {
                for i in 0..n {
                    for j in 0..n {
                        if i != j && rng.random::<f64>() < density {
                            m.set(i, j, rng.random::<f64>() * scale / n as f64);
                        }
                    }
                }
            }
            m
        })
        .collect()
}

fn scenario(seed_location: usize, seed_time: usize, i0: f64, params: DiseaseParams, days: usize) -> Scenario {
    Scenario {
        seed_location,
        seed_time: PeriodIndex::from_index(seed_time).unwrap(),
        i0,
        params,
        horizon_days: days,
    }
}

#[test]
fn single_patch_matches_scalar_sir() {
    let n = 100_000.0;
    let params = DiseaseParams::low();
    let hourly = vec![FlowMatrix::zeros(1); HOURS_PER_WEEK];
    let schedule = FlowSchedule::new(&hourly).unwrap();
    let mut seen = Vec::new();
    let opts = SimOptions {
        extinction_threshold: 0.0,
        ..SimOptions::default()
    };
    simulate_with(&schedule, &scenario(0, 0, 1.0, params, 200), &[n], &opts, |st| {
        seen.push((st.s[0], st.i[0], st.r[0]))
    })
    .unwrap();
    assert_eq!(seen.len(), 200 * 24 + 1);

    let (beta, gamma) = (0.5 / 24.0, 0.33 / 24.0);
    let (mut s, mut i, mut r) = (n - 1.0, 1.0, 0.0);
    let mut worst: f64 = 0.0;
    for (k, &(ss, ii, rr)) in seen.iter().enumerate() {
        for (got, want) in [(ss, s), (ii, i), (rr, r)] {
            if want != 0.0 {
                worst = worst.max(((got - want) / want).abs());
            } else {
                assert_eq!(got, 0.0, "hour {k}");
            }
        }
        let inf = beta * s * i / n;
        let rec = gamma * i;
        (s, i, r) = (s - inf, i + inf - rec, r + rec);
    }
    assert!(worst < 1e-9, "max relative error {worst}");
}

/// Two locations, 48 hours, transport written out term by term.
#[test]
fn two_locations_hand_iteration() {
    let f = FlowMatrix::from_rows(&[vec![0.0, 0.02], vec![0.01, 0.0]]).unwrap();
    let hourly = constant_week(&f);
    let pops = [5_000.0, 8_000.0];
    let params = DiseaseParams::high();
    // Monday evening starts at hour 21.
    let sc = scenario(0, 3, 10.0, params, 2);
    let out = simulate(&sc, &hourly, &pops).unwrap();

    let (b, g) = (params.beta, params.gamma);
    let mut x = [[4_990.0, 10.0, 0.0], [8_000.0, 0.0, 0.0]];
    let mut first = [Some(0u32), None];
    for k in 0..48 {
        let h = 21 + k;
        let prev = x;
        let (out0, out1) = if in_service(h) { (0.02, 0.01) } else { (0.0, 0.0) };
        for loc in 0..2 {
            let other = 1 - loc;
            let (out_rate, in_rate) = if loc == 0 { (out0, out1) } else { (out1, out0) };
            let [s, i, r] = prev[loc];
            let inf = b * s * i / pops[loc];
            let rec = g * i;
            x[loc] = [
                s - inf + in_rate * prev[other][0] - out_rate * s,
                i + inf - rec + in_rate * prev[other][1] - out_rate * i,
                r + rec + in_rate * prev[other][2] - out_rate * r,
            ];
        }
        if first[1].is_none() && x[1][1] >= 1.0 {
            first[1] = Some(k as u32);
        }
    }
    let fs = &out.final_state;
    for loc in 0..2 {
        for (got, want) in [(fs.s[loc], x[loc][0]), (fs.i[loc], x[loc][1]), (fs.r[loc], x[loc][2])] {
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "loc {loc}: {got} vs {want}");
        }
    }
    assert_eq!(out.arrivals.hours, first.to_vec());
}

#[test]
fn middle_of_a_line_is_reached_first() {
    let f = FlowMatrix::from_rows(&[
        vec![0.0, 0.0005, 0.0],
        vec![0.0005, 0.0, 0.0005],
        vec![0.0, 0.0005, 0.0],
    ])
    .unwrap();
    let hourly = constant_week(&f);
    let grid = ScenarioGrid {
        locations: vec![0, 1, 2],
        i0: vec![1.0],
        params: vec![DiseaseParams::low()],
        periods: PeriodIndex::all().collect(),
        thresholds: vec![0.5],
        horizon_days: 120,
    };
    let res = sweep(&grid, &hourly, &[10_000.0; 3]).unwrap();
    let chi: Vec<f64> = res.summary.iter().map(|s| s.mean_chi.unwrap()).collect();
    assert!(chi[1] < chi[0] && chi[1] < chi[2], "{chi:?}");
}

#[test]
fn relabeling_locations_relabels_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 6;
    let hourly = random_week(n, &mut rng, 0.5, 0.05);
    let pops: Vec<f64> = (0..n).map(|_| rng.random_range(2_000.0..20_000.0)).collect();
    let perm = [3, 0, 5, 1, 4, 2];
    let hourly_p: Vec<FlowMatrix> = hourly.iter().map(|m| m.permuted(&perm)).collect();
    let mut pops_p = vec![0.0; n];
    for i in 0..n {
        pops_p[perm[i]] = pops[i];
    }
    for seed in 0..n {
        let a = simulate(&scenario(seed, 9, 5.0, DiseaseParams::high(), 20), &hourly, &pops).unwrap();
        let b = simulate(&scenario(perm[seed], 9, 5.0, DiseaseParams::high(), 20), &hourly_p, &pops_p).unwrap();
        for i in 0..n {
            assert_eq!(a.arrivals.hours[i], b.arrivals.hours[perm[i]]);
            let (x, y) = (a.final_state.i[i], b.final_state.i[perm[i]]);
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}

#[test]
fn symmetric_city_has_equal_inward_risk() {
    // Ring of 6 with identical neighbour flows and populations.
    let n = 6;
    let mut f = FlowMatrix::zeros(n);
    for i in 0..n {
        f.set(i, (i + 1) % n, 0.004);
        f.set(i, (i + n - 1) % n, 0.004);
    }
    let hourly = constant_week(&f);
    let grid = ScenarioGrid {
        locations: (0..n).collect(),
        i0: vec![1.0],
        params: vec![DiseaseParams::high()],
        periods: PeriodIndex::all().collect(),
        thresholds: vec![0.5],
        horizon_days: 40,
    };
    let res = sweep(&grid, &hourly, &vec![20_000.0; n]).unwrap();
    let chi: Vec<f64> = res.summary.iter().map(|s| s.mean_chi.unwrap()).collect();
    for c in &chi {
        assert!((c - chi[0]).abs() < 1e-9, "{chi:?}");
    }
}

#[test]
fn zero_flow_keeps_other_locations_clean() {
    let hourly = vec![FlowMatrix::zeros(3); HOURS_PER_WEEK];
    let out = simulate(&scenario(1, 0, 10.0, DiseaseParams::high(), 30), &hourly, &[1e4; 3]).unwrap();
    assert_eq!(out.arrivals.hours, vec![None, Some(0), None]);
    assert_eq!(out.final_state.i[0], 0.0);
}

#[test]
fn seed_larger_than_population_is_rejected() {
    let hourly = vec![FlowMatrix::zeros(2); HOURS_PER_WEEK];
    assert!(simulate(&scenario(0, 0, 500.0, DiseaseParams::low(), 5), &hourly, &[100.0, 100.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steps_conserve_population(
        seed in any::<u64>(),
        n in 2usize..7,
        steps in 1usize..60,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pops: Vec<f64> = (0..n).map(|_| rng.random_range(10_000.0..50_000.0)).collect();
        let mut state = EpidemicState::susceptible(&pops);
        state.s[0] -= 1.0;
        state.i[0] += 1.0;
        let total = state.total();
        for _ in 0..steps {
            let mut m = FlowMatrix::zeros(n);
            for i in 0..n {
                let budget = rng.random::<f64>() * 0.1;
                for j in 0..n {
                    if i != j {
                        m.set(i, j, budget * rng.random::<f64>() / n as f64);
                    }
                }
            }
            state = step_hour(&state, &m, &DiseaseParams::high(), &pops).unwrap();
            prop_assert!(((state.total() - total) / total).abs() < 1e-12);
            prop_assert!(state.s.iter().chain(&state.i).chain(&state.r).all(|&x| x >= 0.0));
        }
    }
}
