//! Louvain communities of period networks and the transitions between
//! partitions on consecutive days.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowMatrix, PeriodFlows};
use crate::period::{Period, PeriodIndex, DAYS_PER_WEEK, PERIODS_PER_DAY, PERIODS_PER_WEEK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LouvainOptions {
    pub resolution: f64,
    pub seed: u64,
}

impl Default for LouvainOptions {
    fn default() -> Self {
        LouvainOptions {
            resolution: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityPartition {
    pub period: Option<PeriodIndex>,
    /// Community of each location. Labels are `0..k`, numbered by the
    /// smallest member.
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl CommunityPartition {
    pub fn communities(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.communities()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

type Adjacency = Vec<Vec<(usize, f64)>>;

/// `W = F + F^T` as adjacency lists (self-loops kept).
fn symmetrize(flows: &FlowMatrix) -> Adjacency {
    let n = flows.dim();
    (0..n)
        .map(|i| {
            (0..n)
                .filter_map(|j| {
                    let w = flows[(i, j)] + flows[(j, i)];
                    (w > 0.0).then_some((j, w))
                })
                .collect()
        })
        .collect()
}

fn strengths(adj: &Adjacency) -> Vec<f64> {
    adj.iter().map(|row| row.iter().map(|&(_, w)| w).sum()).collect()
}

fn relabel(raw: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    raw.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

fn adjacency_modularity(adj: &Adjacency, assignment: &[usize], resolution: f64) -> f64 {
    let k = strengths(adj);
    let m2: f64 = k.iter().sum();
    if m2 <= 0.0 {
        return 0.0;
    }
    let communities = assignment.iter().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; communities];
    let mut total = vec![0.0; communities];
    for (i, row) in adj.iter().enumerate() {
        total[assignment[i]] += k[i];
        for &(j, w) in row {
            if assignment[i] == assignment[j] {
                internal[assignment[i]] += w;
            }
        }
    }
    internal
        .iter()
        .zip(&total)
        .map(|(&inside, &tot)| inside / m2 - resolution * (tot / m2).powi(2))
        .sum()
}

/// Modularity of `assignment` on the symmetrized graph of `flows`; 0 for
/// a graph without edges.
pub fn modularity(flows: &FlowMatrix, assignment: &[usize], resolution: f64) -> Result<f64> {
    if assignment.len() != flows.dim() {
        return Err(Error::Dimension {
            expected: flows.dim(),
            got: assignment.len(),
        });
    }
    Ok(adjacency_modularity(&symmetrize(flows), &relabel(assignment), resolution))
}

/// One round of local moves. Returns the community of each node and
/// whether anything moved.
fn local_moves(adj: &Adjacency, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = adj.len();
    let k = strengths(adj);
    let m2: f64 = k.iter().sum();
    let mut community: Vec<usize> = (0..n).collect();
    let mut total = k.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let eps = 1e-12 * m2;
    let mut moved_any = false;
    let mut links: BTreeMap<usize, f64> = BTreeMap::new();
    loop {
        let mut moved = false;
        for &i in &order {
            let own = community[i];
            links.clear();
            links.insert(own, 0.0);
            for &(j, w) in &adj[i] {
                if j != i {
                    *links.entry(community[j]).or_insert(0.0) += w;
                }
            }
            total[own] -= k[i];
            let gain = |c: usize, w: f64| w - resolution * total[c] * k[i] / m2;
            let stay = gain(own, links[&own]);
            let mut best = (own, stay);
            for (&c, &w) in &links {
                let g = gain(c, w);
                if g > best.1 + eps {
                    best = (c, g);
                }
            }
            total[best.0] += k[i];
            if best.0 != own {
                community[i] = best.0;
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (relabel(&community), moved_any)
}

fn aggregate(adj: &Adjacency, community: &[usize]) -> Adjacency {
    let c = community.iter().max().map_or(0, |m| m + 1);
    let mut merged: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); c];
    for (i, row) in adj.iter().enumerate() {
        for &(j, w) in row {
            *merged[community[i]].entry(community[j]).or_insert(0.0) += w;
        }
    }
    merged.into_iter().map(|m| m.into_iter().collect()).collect()
}

/// Two-phase Louvain on `W = F + F^T`. Node visiting order is a seeded
/// shuffle, so equal seeds give equal partitions.
pub fn louvain(flows: &FlowMatrix, options: &LouvainOptions) -> CommunityPartition {
    let n = flows.dim();
    let mut adj = symmetrize(flows);
    let original = adj.clone();
    let mut assignment: Vec<usize> = (0..n).collect();
    if strengths(&adj).iter().sum::<f64>() <= 0.0 {
        return CommunityPartition {
            period: None,
            assignment,
            modularity: 0.0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    loop {
        let (community, moved) = local_moves(&adj, options.resolution, &mut rng);
        if !moved {
            break;
        }
        for a in assignment.iter_mut() {
            *a = community[*a];
        }
        adj = aggregate(&adj, &community);
    }
    let assignment = relabel(&assignment);
    let modularity = adjacency_modularity(&original, &assignment, options.resolution);
    CommunityPartition {
        period: None,
        assignment,
        modularity,
    }
}

/// Louvain on each of the 28 period matrices; period `p` uses seed
/// `seed + p`.
pub fn period_communities(periods: &PeriodFlows, options: &LouvainOptions) -> Vec<CommunityPartition> {
    PeriodIndex::all()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|pi| {
            let opts = LouvainOptions {
                seed: options.seed.wrapping_add(pi.index() as u64),
                ..*options
            };
            CommunityPartition {
                period: Some(pi),
                ..louvain(periods.get(pi), &opts)
            }
        })
        .collect()
}

/// Cross-tabulation of two partitions of the same locations. Labels of
/// the second partition are renamed to the first partition's labels by
/// greedy maximum overlap; unmatched communities get fresh labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    /// `(from, to, count)` with nonzero counts, sorted.
    pub counts: Vec<(usize, usize, usize)>,
    pub from_sizes: Vec<usize>,
    /// The second partition after renaming.
    pub aligned: Vec<usize>,
}

impl TransitionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|c| c.2).sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.from_sizes.len()];
        for &(a, _, c) in &self.counts {
            sums[a] += c;
        }
        sums
    }
}

pub fn transitions(from: &[usize], to: &[usize]) -> Result<TransitionMatrix> {
    if from.len() != to.len() {
        return Err(Error::Dimension {
            expected: from.len(),
            got: to.len(),
        });
    }
    let mut overlap: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&a, &b) in from.iter().zip(to) {
        *overlap.entry((a, b)).or_insert(0) += 1;
    }
    let mut pairs: Vec<((usize, usize), usize)> = overlap.iter().map(|(&k, &v)| (k, v)).collect();
    pairs.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut rename: BTreeMap<usize, usize> = BTreeMap::new();
    let mut taken: std::collections::BTreeSet<usize> = std::collections::BTreeSet::new();
    for ((a, b), _) in pairs {
        if !rename.contains_key(&b) && !taken.contains(&a) {
            rename.insert(b, a);
            taken.insert(a);
        }
    }
    let mut next = from.iter().chain(to).max().map_or(0, |m| m + 1);
    let aligned: Vec<usize> = to
        .iter()
        .map(|&b| {
            *rename.entry(b).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();

    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&a, &b) in from.iter().zip(&aligned) {
        *counts.entry((a, b)).or_insert(0) += 1;
    }
    let mut from_sizes = vec![0; from.iter().max().map_or(0, |m| m + 1)];
    for &a in from {
        from_sizes[a] += 1;
    }
    Ok(TransitionMatrix {
        counts: counts.into_iter().map(|((a, b), c)| (a, b, c)).collect(),
        from_sizes,
        aligned,
    })
}

/// Location count and population share of the largest community (ties
/// go to the larger population, then the lower label).
pub fn largest_community_share(assignment: &[usize], populations: &[f64]) -> Result<(usize, f64)> {
    if assignment.len() != populations.len() {
        return Err(Error::Dimension {
            expected: assignment.len(),
            got: populations.len(),
        });
    }
    let mut groups: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for (&c, &p) in assignment.iter().zip(populations) {
        let g = groups.entry(c).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += p;
    }
    let total: f64 = populations.iter().sum();
    let best = groups
        .values()
        .fold(None::<(usize, f64)>, |best, &g| match best {
            Some(b) if b.0 > g.0 || (b.0 == g.0 && b.1 >= g.1) => Some(b),
            _ => Some(g),
        });
    Ok(match best {
        Some((count, pop)) if total > 0.0 => (count, pop / total),
        Some((count, _)) => (count, 0.0),
        None => (0, 0.0),
    })
}

/// Transitions between the same daily slot on consecutive days.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotTransition {
    pub slot: Period,
    pub day_from: usize,
    pub day_to: usize,
    pub matrix: TransitionMatrix,
}

/// For each slot, aligns Tuesday to Monday, Wednesday to the aligned
/// Tuesday, and so on, so labels stay stable along the week.
pub fn weekly_transitions(partitions: &[CommunityPartition]) -> Result<Vec<SlotTransition>> {
    if partitions.len() != PERIODS_PER_WEEK {
        return Err(Error::MatrixCount {
            expected: PERIODS_PER_WEEK,
            got: partitions.len(),
        });
    }
    let mut out = Vec::new();
    for slot in Period::ALL {
        let mut current = partitions[slot.index()].assignment.clone();
        for day in 1..DAYS_PER_WEEK {
            let next = &partitions[day * PERIODS_PER_DAY + slot.index()].assignment;
            let matrix = transitions(&current, next)?;
            current = matrix.aligned.clone();
            out.push(SlotTransition {
                slot,
                day_from: day - 1,
                day_to: day,
                matrix,
            });
        }
    }
    Ok(out)
}
