//! Pearson correlation with t-test p-values, and average-linkage
//! agglomerative clustering of the resulting correlation matrix.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::flow::FlowMatrix;

/// Pearson's r, or `None` when either input is constant or too short.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson inputs differ in length");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `r` under the null of zero correlation, using the
/// t statistic with `n - 2` degrees of freedom.
pub fn pearson_p_value(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p_value: Option<f64>,
}

pub fn correlate(x: &[f64], y: &[f64]) -> Option<Correlation> {
    let r = pearson(x, y)?;
    Some(Correlation {
        r,
        p_value: pearson_p_value(r, x.len()),
    })
}

/// Symmetric table of pairwise correlations; `None` marks an undefined r.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub entries: Vec<Vec<Option<Correlation>>>,
}

impl CorrelationMatrix {
    pub fn from_columns(labels: Vec<String>, columns: &[Vec<f64>]) -> Self {
        let k = columns.len();
        let mut entries = vec![vec![None; k]; k];
        for a in 0..k {
            for b in a..k {
                let c = correlate(&columns[a], &columns[b]);
                entries[a][b] = c;
                entries[b][a] = c;
            }
        }
        CorrelationMatrix { labels, entries }
    }

    /// Like [`from_columns`](Self::from_columns) but each pair only uses
    /// the rows where both values are defined.
    pub fn from_partial_columns(labels: Vec<String>, columns: &[Vec<Option<f64>>]) -> Self {
        let k = columns.len();
        let mut entries = vec![vec![None; k]; k];
        for a in 0..k {
            for b in a..k {
                let (x, y): (Vec<f64>, Vec<f64>) = columns[a]
                    .iter()
                    .zip(&columns[b])
                    .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                    .unzip();
                let c = correlate(&x, &y);
                entries[a][b] = c;
                entries[b][a] = c;
            }
        }
        CorrelationMatrix { labels, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn r(&self, a: usize, b: usize) -> Option<f64> {
        self.entries[a][b].map(|c| c.r)
    }

    /// r values with undefined entries replaced by `fill` (diagonal kept at 1).
    pub fn r_values(&self, fill: f64) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|a| {
                (0..self.len())
                    .map(|b| if a == b { 1.0 } else { self.r(a, b).unwrap_or(fill) })
                    .collect()
            })
            .collect()
    }
}

/// Correlations between the flattened `L^2` flow vectors of every pair of
/// period matrices.
pub fn period_correlations(periods: &[FlowMatrix]) -> CorrelationMatrix {
    let labels = (0..periods.len())
        .map(|p| match crate::period::PeriodIndex::from_index(p) {
            Some(pi) => pi.to_string(),
            None => p.to_string(),
        })
        .collect();
    let columns: Vec<Vec<f64>> = periods.iter().map(|m| m.as_slice().to_vec()).collect();
    CorrelationMatrix::from_columns(labels, &columns)
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed at step
/// `k` gets id `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaf order from a left-to-right traversal of the final tree.
    pub fn leaf_order(&self) -> Vec<usize> {
        if self.leaves == 0 {
            return Vec::new();
        }
        let Some(_) = self.merges.last() else {
            return vec![0];
        };
        let mut out = Vec::with_capacity(self.leaves);
        let mut stack = vec![self.leaves + self.merges.len() - 1];
        while let Some(node) = stack.pop() {
            if node < self.leaves {
                out.push(node);
            } else {
                let m = &self.merges[node - self.leaves];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    }
}

/// Average-linkage agglomerative clustering on `d = 1 - r`. Ties pick the
/// pair of active clusters with the smallest ids.
pub fn hierarchical_cluster(corr: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = corr.len();
    for (a, row) in corr.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: row.len(),
            });
        }
        for b in 0..a {
            if (corr[a][b] - corr[b][a]).abs() > 1e-12 {
                return Err(Error::NotSymmetric(a, b));
            }
        }
    }
    let dist = corr
        .iter()
        .map(|row| row.iter().map(|r| 1.0 - r).collect())
        .collect();
    Ok(average_linkage(dist))
}

/// Average linkage over an explicit distance matrix.
pub fn average_linkage(mut dist: Vec<Vec<f64>>) -> Dendrogram {
    let n = dist.len();
    // Active slots hold (cluster id, size); merged clusters reuse the lower slot.
    let mut active: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            let Some((ida, _)) = active[a] else { continue };
            for b in (a + 1)..n {
                let Some((idb, _)) = active[b] else { continue };
                let d = dist[a][b];
                let key = (ida.min(idb), ida.max(idb));
                let better = match best {
                    None => true,
                    Some((bd, ba, bb)) => {
                        let bkey = {
                            let (x, y) = (active[ba].unwrap().0, active[bb].unwrap().0);
                            (x.min(y), x.max(y))
                        };
                        d < bd || (d == bd && key < bkey)
                    }
                };
                if better {
                    best = Some((d, a, b));
                }
            }
        }
        let (height, a, b) = best.expect("at least two active clusters");
        let (ida, sa) = active[a].unwrap();
        let (idb, sb) = active[b].unwrap();
        for c in 0..n {
            if c == a || c == b || active[c].is_none() {
                continue;
            }
            let d = (dist[a][c] * sa as f64 + dist[b][c] * sb as f64) / (sa + sb) as f64;
            dist[a][c] = d;
            dist[c][a] = d;
        }
        active[a] = Some((n + step, sa + sb));
        active[b] = None;
        merges.push(Merge {
            left: ida.min(idb),
            right: ida.max(idb),
            height,
            size: sa + sb,
        });
    }
    Dendrogram { leaves: n, merges }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let x = [0.0, 0.1, 0.3, 0.0, 0.7];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_vector_is_undefined() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(pearson(&[1.0], &[2.0]), None);
    }

    #[test]
    fn hand_pearson() {
        // dx = (-1.5,-0.5,0.5,1.5), dy = (-3,-1,0,4):
        // r = 11 / sqrt(5 * 26)
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 9.0]).unwrap();
        assert!((r - 11.0 / 130f64.sqrt()).abs() < 1e-14);
        assert!((r - 0.9648).abs() < 1e-4);
    }

    #[test]
    fn p_value_reference() {
        // r = 0.5, n = 12: t = 0.5 * sqrt(10 / 0.75) = 1.8257, two-sided p = 0.097855
        let p = pearson_p_value(0.5, 12).unwrap();
        assert!((p - 0.0978546).abs() < 1e-6, "{p}");
        assert_eq!(pearson_p_value(1.0, 10), Some(0.0));
        assert!((pearson_p_value(0.0, 10).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_items_merge_first_at_zero() {
        let corr = vec![
            vec![1.0, 1.0, 0.2],
            vec![1.0, 1.0, 0.2],
            vec![0.2, 0.2, 1.0],
        ];
        let d = hierarchical_cluster(&corr).unwrap();
        assert_eq!(d.merges[0].left, 0);
        assert_eq!(d.merges[0].right, 1);
        assert_eq!(d.merges[0].height, 0.0);
    }

    #[test]
    fn blocks_join_last() {
        let block = |a: usize, b: usize| if (a < 3) == (b < 3) { 1.0 } else { 0.1 };
        let corr: Vec<Vec<f64>> = (0..6).map(|a| (0..6).map(|b| block(a, b)).collect()).collect();
        let d = hierarchical_cluster(&corr).unwrap();
        let last = d.merges.last().unwrap();
        assert_eq!(last.size, 6);
        assert!((last.height - 0.9).abs() < 1e-12);
        for m in &d.merges[..4] {
            assert_eq!(m.height, 0.0);
        }
    }

    #[test]
    fn hand_average_linkage() {
        // d(0,1)=1, d(0,2)=4, d(0,3)=6, d(1,2)=3, d(1,3)=5, d(2,3)=2.
        // step 1: {0,1} at 1 -> id 4; d(4,2) = 3.5, d(4,3) = 5.5
        // step 2: {2,3} at 2 -> id 5
        // step 3: {4,5} at mean(4,6,3,5) = 4.5
        let dist = vec![
            vec![0.0, 1.0, 4.0, 6.0],
            vec![1.0, 0.0, 3.0, 5.0],
            vec![4.0, 3.0, 0.0, 2.0],
            vec![6.0, 5.0, 2.0, 0.0],
        ];
        let d = average_linkage(dist);
        let got: Vec<(usize, usize, f64, usize)> = d
            .merges
            .iter()
            .map(|m| (m.left, m.right, m.height, m.size))
            .collect();
        assert_eq!(got, vec![(0, 1, 1.0, 2), (2, 3, 2.0, 2), (4, 5, 4.5, 4)]);
        assert_eq!(d.leaf_order(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let corr = vec![vec![1.0, 0.5], vec![0.4, 1.0]];
        assert!(matches!(
            hierarchical_cluster(&corr),
            Err(Error::NotSymmetric(1, 0))
        ));
    }
}
