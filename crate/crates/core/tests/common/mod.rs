//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use lesionwise::phantoms::{build_phantom, random_phantom};
use lesionwise::{label_components, BinaryMask, ComponentLabeling, LogitVolume, Shape, Spacing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(shape: Shape, density: f64, seed: u64) -> BinaryMask {
    let mut r = rng(seed);
    let data = (0..shape.len()).map(|_| r.gen_bool(density)).collect();
    BinaryMask::new(shape, Spacing::unit(), data).unwrap()
}

/// Seeded separated phantom with `n` components.
pub fn random_components(
    shape: Shape,
    spacing: Spacing,
    n: usize,
    max_size: usize,
    seed: u64,
) -> (BinaryMask, ComponentLabeling) {
    let spec = random_phantom(shape, spacing, n, max_size, seed).unwrap();
    build_phantom(&spec).unwrap()
}

pub fn random_logits(shape: Shape, spacing: Spacing, scale: f64, seed: u64) -> LogitVolume {
    let mut r = rng(seed);
    let data = (0..shape.len())
        .map(|_| r.gen_range(-scale..scale))
        .collect();
    LogitVolume::from_vec(shape, spacing, data).unwrap()
}

/// Breadth-first flood fill under 26-connectivity, seeding in raster order.
pub fn bfs_labels(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let shape = mask.shape();
    let [nx, ny, nz] = shape.dims().map(|d| d as i64);
    let mut labels = vec![0u32; shape.len()];
    let mut next = 0u32;
    for start in 0..shape.len() {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let [x, y, z] = shape.coords(i).map(|c| c as i64);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (qx, qy, qz) = (x + dx, y + dy, z + dz);
                        if qx < 0 || qy < 0 || qz < 0 || qx >= nx || qy >= ny || qz >= nz {
                            continue;
                        }
                        let j = shape.index(qx as usize, qy as usize, qz as usize);
                        if mask.data()[j] && labels[j] == 0 {
                            labels[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Exhaustive maximum matching size by recursion over GT rows.
pub fn brute_max_matching(adj: &[Vec<u32>], n_right: usize) -> usize {
    fn go(row: usize, adj: &[Vec<u32>], used: &mut Vec<bool>) -> usize {
        if row == adj.len() {
            return 0;
        }
        let mut best = go(row + 1, adj, used);
        for &c in &adj[row] {
            let c = c as usize - 1;
            if !used[c] {
                used[c] = true;
                best = best.max(1 + go(row + 1, adj, used));
                used[c] = false;
            }
        }
        best
    }
    go(0, adj, &mut vec![false; n_right])
}

pub struct FdReport {
    pub max_rel: f64,
    pub max_abs_small: f64,
    pub failures: usize,
}

/// Central finite differences against the analytic gradient of `f`.
pub fn finite_difference_check(
    l: &LogitVolume,
    h: f64,
    f: impl Fn(&LogitVolume) -> lesionwise::losses::LossValue,
) -> FdReport {
    let base = f(l);
    let mut report = FdReport {
        max_rel: 0.0,
        max_abs_small: 0.0,
        failures: 0,
    };
    let mut data = l.data().to_vec();
    for i in 0..data.len() {
        let orig = data[i];
        data[i] = orig + h;
        let plus = f(&LogitVolume::from_vec(l.shape(), l.spacing(), data.clone()).unwrap()).value;
        data[i] = orig - h;
        let minus = f(&LogitVolume::from_vec(l.shape(), l.spacing(), data.clone()).unwrap()).value;
        data[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = base.grad.data()[i];
        if analytic.abs() > 1e-8 {
            let rel = (analytic - numeric).abs() / analytic.abs();
            report.max_rel = report.max_rel.max(rel);
            if rel >= 1e-4 {
                report.failures += 1;
            }
        } else {
            let abs = (analytic - numeric).abs();
            report.max_abs_small = report.max_abs_small.max(abs);
            if abs >= 1e-7 {
                report.failures += 1;
            }
        }
    }
    report
}

/// Rename component ids of a labeling via `perm` (old id - 1 -> new id).
pub fn relabel(labels: &[u32], perm: &[u32]) -> Vec<u32> {
    labels
        .iter()
        .map(|&l| if l == 0 { 0 } else { perm[l as usize - 1] })
        .collect()
}

/// Canonical form of a labeling: ids renumbered by first appearance.
pub fn canonical(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == 0 {
                0
            } else {
                let n = map.len() as u32 + 1;
                *map.entry(l).or_insert(n)
            }
        })
        .collect()
}

pub fn labels_of(mask: &BinaryMask) -> Vec<u32> {
    label_components(mask).labels().data().to_vec()
}

/// For every voxel, the ids of all components at minimal squared distance
/// (the tie set) and that distance. `spacing = None` means voxel-index units.
/// Distances within `1e-9` relative of the minimum count as tied, which only
/// matters for the floating-point metric.
pub fn voronoi_tie_sets(
    lab: &ComponentLabeling,
    spacing: Option<[f64; 3]>,
) -> Vec<(Vec<u32>, f64)> {
    let shape = lab.labels().shape();
    let s = spacing.unwrap_or([1.0; 3]);
    let sites: Vec<Vec<[f64; 3]>> = lab
        .ids()
        .map(|id| {
            lab.voxel_coords(id)
                .unwrap()
                .into_iter()
                .map(|c| [c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2]])
                .collect()
        })
        .collect();
    (0..shape.len())
        .map(|i| {
            let c = shape.coords(i);
            let p = [c[0] as f64 * s[0], c[1] as f64 * s[1], c[2] as f64 * s[2]];
            let per: Vec<f64> = sites
                .iter()
                .map(|vs| {
                    vs.iter()
                        .map(|v| (0..3).map(|k| (p[k] - v[k]) * (p[k] - v[k])).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let best = per.iter().copied().fold(f64::INFINITY, f64::min);
            let tol = if spacing.is_some() {
                1e-9 * best.max(1.0)
            } else {
                0.0
            };
            let ties = per
                .iter()
                .enumerate()
                .filter(|(_, &d)| d <= best + tol)
                .map(|(k, _)| k as u32 + 1)
                .collect();
            (ties, best)
        })
        .collect()
}

/// Checks a partition against the oracle. Returns (tie voxels, mismatches).
/// Outside tie sets the region must equal the unique minimiser; inside, it
/// must be one of the minimisers.
pub fn check_against_oracle(
    part: &lesionwise::VoronoiPartition,
    oracle: &[(Vec<u32>, f64)],
) -> (usize, usize) {
    let mut ties = 0;
    let mut bad = 0;
    for (i, (set, _)) in oracle.iter().enumerate() {
        let r = part.region_of().data()[i];
        if set.len() > 1 {
            ties += 1;
        }
        if !set.contains(&r) {
            bad += 1;
        }
    }
    (ties, bad)
}

/// Disjointness is structural (one id per voxel); checks ids are valid,
/// every component lies in its own region, and sizes sum to the lattice.
pub fn partition_invariants_hold(
    lab: &ComponentLabeling,
    part: &lesionwise::VoronoiPartition,
) -> bool {
    let n = lab.count() as u32;
    let regions = part.region_of().data();
    let valid = regions.iter().all(|&r| r >= 1 && r <= n);
    let own = lab
        .labels()
        .data()
        .iter()
        .zip(regions)
        .all(|(&l, &r)| l == 0 || l == r);
    let sizes: usize = part.region_sizes().iter().sum();
    let lists: usize = part.regions().iter().map(|r| r.len()).sum();
    valid && own && sizes == regions.len() && lists == regions.len()
}

/// Realise a bipartite graph as masks: GT row `i` at y = 2i, z = 0; predicted
/// column `j` at x = 2j, z = 1, with a bump at (2j, 2i, 0) for each edge.
pub fn realise(n_gt: usize, n_pred: usize, edges: &[(usize, usize)]) -> (BinaryMask, BinaryMask) {
    let shape = Shape::new(2 * n_pred.max(1) + 1, 2 * n_gt.max(1) + 1, 2).unwrap();
    let mut gt = BinaryMask::empty(shape, Spacing::unit());
    let mut pred = BinaryMask::empty(shape, Spacing::unit());
    for i in 0..n_gt {
        for x in 0..shape.nx() {
            gt.set(x, 2 * i, 0, true);
        }
    }
    for j in 0..n_pred {
        for y in 0..shape.ny() {
            pred.set(2 * j, y, 1, true);
        }
    }
    for &(i, j) in edges {
        pred.set(2 * j, 2 * i, 0, true);
    }
    (gt, pred)
}
