//! Location centralities on the week-averaged flow network and their
//! correlation with epidemic risk.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;
use crate::epidemic::LocationSummary;
use crate::error::{Error, Result};
use crate::flow::FlowMatrix;
use crate::ingest::StationRegistry;

pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Edge weights are capped here so that `-ln w` stays positive.
pub const MAX_PATH_WEIGHT: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Jing'an Temple, Shanghai.
    pub const JINGAN_TEMPLE: GeoPoint = GeoPoint {
        lat: 31.2233,
        lon: 121.4454,
    };
}

/// Great-circle distance in km (haversine).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn center_distance(registry: &StationRegistry, center: GeoPoint) -> Vec<f64> {
    registry
        .stations()
        .iter()
        .map(|s| haversine_km(GeoPoint { lat: s.lat, lon: s.lon }, center))
        .collect()
}

/// `(k_in, k_out)`: column and row sums.
pub fn degrees(weekly: &FlowMatrix) -> (Vec<f64>, Vec<f64>) {
    (weekly.col_sums(), weekly.row_sums())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest `-ln` distances from `source` over positive edges.
fn dijkstra(weights: &[Vec<(usize, f64)>], source: usize) -> Vec<Option<f64>> {
    let mut dist: Vec<Option<f64>> = vec![None; weights.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = Some(0.0);
    heap.push(Entry {
        dist: 0.0,
        node: source,
    });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if dist[node].is_some_and(|best| d > best) {
            continue;
        }
        for &(next, w) in &weights[node] {
            let nd = d + w;
            if dist[next].map_or(true, |cur| nd < cur) {
                dist[next] = Some(nd);
                heap.push(Entry { dist: nd, node: next });
            }
        }
    }
    dist
}

/// Static max-product path probabilities `P_hat[i][j]` on the weekly
/// network, any number of hops; `None` if unreachable. Entries above
/// [`MAX_PATH_WEIGHT`] are capped; the count of capped entries is returned.
pub fn static_path_probabilities(weekly: &FlowMatrix) -> (Vec<Vec<Option<f64>>>, usize) {
    let n = weekly.dim();
    let mut clamped = 0;
    let weights: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            weekly
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, &f)| j != i && f > 0.0)
                .map(|(j, &f)| {
                    if f > MAX_PATH_WEIGHT {
                        clamped += 1;
                    }
                    (j, -f.min(MAX_PATH_WEIGHT).ln())
                })
                .collect()
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} weekly flow entries exceed 1 and were capped for path search");
    }
    let probs = (0..n)
        .map(|i| {
            dijkstra(&weights, i)
                .into_iter()
                .map(|d| d.map(|d| (-d).exp()))
                .collect()
        })
        .collect();
    (probs, clamped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Closeness {
    pub c_in: Vec<Option<f64>>,
    pub c_out: Vec<Option<f64>>,
    /// Locations that can reach `i`.
    pub reach_in: Vec<usize>,
    /// Locations `i` can reach.
    pub reach_out: Vec<usize>,
    pub clamped_entries: usize,
}

/// `c_in(i) = -1 / sum_j ln P_hat[j][i]` and `c_out(i) = -1 / sum_j ln
/// P_hat[i][j]`, over reachable `j != i`. Undefined when nothing is reachable.
pub fn closeness(weekly: &FlowMatrix) -> Closeness {
    let n = weekly.dim();
    let (probs, clamped_entries) = static_path_probabilities(weekly);
    let mut sum_in = vec![0.0; n];
    let mut sum_out = vec![0.0; n];
    let mut reach_in = vec![0; n];
    let mut reach_out = vec![0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let Some(p) = probs[i][j] {
                let l = p.ln();
                sum_out[i] += l;
                reach_out[i] += 1;
                sum_in[j] += l;
                reach_in[j] += 1;
            }
        }
    }
    let inv = |sum: f64, reach: usize| (reach > 0).then(|| -1.0 / sum);
    Closeness {
        c_in: (0..n).map(|i| inv(sum_in[i], reach_in[i])).collect(),
        c_out: (0..n).map(|i| inv(sum_out[i], reach_out[i])).collect(),
        reach_in,
        reach_out,
        clamped_entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralityRow {
    pub location: usize,
    pub k_in: f64,
    pub k_out: f64,
    pub c_in: Option<f64>,
    pub c_out: Option<f64>,
    pub reach_in: usize,
    pub reach_out: usize,
    pub d_center_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralityTable {
    pub rows: Vec<CentralityRow>,
    pub clamped_entries: usize,
}

pub fn centrality_table(
    weekly: &FlowMatrix,
    registry: &StationRegistry,
    center: GeoPoint,
) -> Result<CentralityTable> {
    if registry.len() != weekly.dim() {
        return Err(Error::Dimension {
            expected: registry.len(),
            got: weekly.dim(),
        });
    }
    let (k_in, k_out) = degrees(weekly);
    let c = closeness(weekly);
    let d = center_distance(registry, center);
    let rows = (0..weekly.dim())
        .map(|i| CentralityRow {
            location: i,
            k_in: k_in[i],
            k_out: k_out[i],
            c_in: c.c_in[i],
            c_out: c.c_out[i],
            reach_in: c.reach_in[i],
            reach_out: c.reach_out[i],
            d_center_km: d[i],
        })
        .collect();
    Ok(CentralityTable {
        rows,
        clamped_entries: c.clamped_entries,
    })
}

pub const RISK_LABELS: [&str; 7] = ["chi", "gamma10", "d_c", "k_in", "k_out", "c_in", "c_out"];

/// Pairwise Pearson correlations among `chi`, `Gamma_10%`, `D_c`, in/out
/// degree and in/out closeness. Locations with an undefined value are
/// dropped pairwise.
pub fn risk_correlations(
    summary: &[LocationSummary],
    centralities: &CentralityTable,
) -> Result<CorrelationMatrix> {
    if summary.len() != centralities.rows.len() {
        return Err(Error::Dimension {
            expected: centralities.rows.len(),
            got: summary.len(),
        });
    }
    let rows = &centralities.rows;
    let columns: Vec<Vec<Option<f64>>> = vec![
        summary.iter().map(|s| s.mean_chi).collect(),
        summary.iter().map(|s| s.mean_gamma10).collect(),
        rows.iter().map(|r| Some(r.d_center_km)).collect(),
        rows.iter().map(|r| Some(r.k_in)).collect(),
        rows.iter().map(|r| Some(r.k_out)).collect(),
        rows.iter().map(|r| r.c_in).collect(),
        rows.iter().map(|r| r.c_out).collect(),
    ];
    Ok(CorrelationMatrix::from_partial_columns(
        RISK_LABELS.iter().map(|s| s.to_string()).collect(),
        &columns,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_hub_in_degree() {
        let mut m = FlowMatrix::zeros(5);
        for leaf in 1..5 {
            m.set(leaf, 0, 0.1);
        }
        let (k_in, k_out) = degrees(&m);
        assert!((k_in[0] - 0.4).abs() < 1e-15);
        assert_eq!(k_out[0], 0.0);
        assert!((k_out[3] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_degrees() {
        let (k_in, k_out) = degrees(&FlowMatrix::zeros(3));
        assert!(k_in.iter().chain(&k_out).all(|&k| k == 0.0));
    }

    #[test]
    fn hand_summed_degrees() {
        let m = FlowMatrix::from_rows(&[
            vec![0.0, 0.1, 0.2, 0.3],
            vec![0.4, 0.0, 0.5, 0.0],
            vec![0.0, 0.6, 0.0, 0.7],
            vec![0.8, 0.0, 0.9, 0.0],
        ])
        .unwrap();
        let (k_in, k_out) = degrees(&m);
        let want_in = [1.2, 0.7, 1.6, 1.0];
        let want_out = [0.6, 0.9, 1.3, 1.7];
        for i in 0..4 {
            assert!((k_in[i] - want_in[i]).abs() < 1e-12);
            assert!((k_out[i] - want_out[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_location_closeness() {
        let m = FlowMatrix::from_rows(&[vec![0.0, 0.1], vec![0.1, 0.0]]).unwrap();
        let c = closeness(&m);
        let want = -1.0 / 0.1f64.ln();
        assert!((want - 0.4343).abs() < 1e-4);
        for k in 0..2 {
            assert!((c.c_in[k].unwrap() - want).abs() < 1e-12);
            assert!((c.c_out[k].unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_location_has_no_in_closeness() {
        let mut m = FlowMatrix::zeros(3);
        m.set(0, 1, 0.5);
        m.set(1, 0, 0.5);
        m.set(2, 0, 0.5);
        let c = closeness(&m);
        assert_eq!(c.c_in[2], None);
        assert_eq!(c.reach_in[2], 0);
        assert!(c.c_out[2].is_some());
    }

    #[test]
    fn weights_above_one_are_capped() {
        let m = FlowMatrix::from_rows(&[vec![0.0, 1.5], vec![0.5, 0.0]]).unwrap();
        let c = closeness(&m);
        assert_eq!(c.clamped_entries, 1);
        assert!(c.c_out[0].unwrap() > 1e9);
    }

    #[test]
    fn haversine_reference_distances() {
        let a = GeoPoint { lat: 10.0, lon: 20.0 };
        assert_eq!(haversine_km(a, a), 0.0);
        let b = GeoPoint { lat: 11.0, lon: 20.0 };
        let one_degree = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        assert!((haversine_km(a, b) - one_degree).abs() < 1e-9);
        assert!((haversine_km(a, b) - 111.19).abs() < 0.01);
        let antipode = GeoPoint { lat: -10.0, lon: -160.0 };
        assert!((haversine_km(a, antipode) - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-3);
    }
}
