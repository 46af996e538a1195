//! Nearest-component partition of the full lattice.
//!
//! Every voxel is assigned the ground-truth component at the smallest
//! Euclidean distance. Ties go to the lowest component ID, so each voxel
//! really carries the lexicographic minimum of `(squared distance, id)` over
//! all component voxels.
//!
//! The fast path is a separable exact feature transform: one lower-envelope
//! pass per axis, where each pass minimises `(f(j) + w * (x - j)^2, id(j))`
//! along a line. Because adding the same constant to every candidate from a
//! given line preserves lexicographic order, the three 1D passes compose to
//! the exact 3D answer, ties included. The voxel-index metric runs in
//! integer arithmetic.

use serde::{Deserialize, Serialize};

use crate::components::ComponentLabeling;
use crate::error::{Error, Result};
use crate::volume::{Grid, Spacing};

pub const TIE_POLICY: &str = "lowest-component-id";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DistanceMetric {
    /// Euclidean distance between integer voxel coordinates.
    VoxelIndex,
    /// Euclidean distance in mm using the given spacing.
    Physical(Spacing),
}

impl DistanceMetric {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceMetric::VoxelIndex => "voxel",
            DistanceMetric::Physical(_) => "physical",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoronoiPartition {
    region_of: Grid<u32>,
    distances: Grid<f64>,
    count: usize,
}

impl VoronoiPartition {
    /// Component ID (1-based) owning each voxel.
    pub fn region_of(&self) -> &Grid<u32> {
        &self.region_of
    }

    /// Distance from each voxel to its owning component.
    pub fn distances(&self) -> &Grid<f64> {
        &self.distances
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count];
        for &r in self.region_of.data() {
            sizes[r as usize - 1] += 1;
        }
        sizes
    }

    /// Linear voxel indices of every region, ascending, indexed by `id - 1`.
    pub fn regions(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &r) in self.region_of.data().iter().enumerate() {
            out[r as usize - 1].push(i);
        }
        out
    }
}

/// Squared-distance arithmetic used by the envelope passes.
trait SqDist: Copy + PartialOrd + std::ops::Add<Output = Self> {
    const ZERO: Self;
    fn term(weight: Self, d: i64) -> Self;
    fn approx_crossing(fp: Self, p: i64, fq: Self, q: i64, weight: Self) -> f64;
    fn to_f64(self) -> f64;
}

impl SqDist for i64 {
    const ZERO: Self = 0;

    fn term(weight: i64, d: i64) -> i64 {
        weight * d * d
    }

    fn approx_crossing(fp: i64, p: i64, fq: i64, q: i64, weight: i64) -> f64 {
        let num = (fq + weight * q * q) - (fp + weight * p * p);
        num as f64 / (2 * weight * (q - p)) as f64
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl SqDist for f64 {
    const ZERO: Self = 0.0;

    fn term(weight: f64, d: i64) -> f64 {
        let d = d as f64;
        weight * (d * d)
    }

    fn approx_crossing(fp: f64, p: i64, fq: f64, q: i64, weight: f64) -> f64 {
        let (p, q) = (p as f64, q as f64);
        ((fq + weight * q * q) - (fp + weight * p * p)) / (2.0 * weight * (q - p))
    }

    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug)]
struct Site<T> {
    value: T,
    id: u32,
}

#[inline]
fn lex_less<T: PartialOrd>(a: (T, u32), b: (T, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// One lower-envelope pass along a line of length `n`.
///
/// `input[j]` is `None` where no site is present. On return `output[x]`
/// holds the lexicographic minimum of `(input[j].value + w (x-j)^2, id)`.
fn envelope_1d<T: SqDist>(
    input: &[Option<Site<T>>],
    weight: T,
    stack_pos: &mut Vec<i64>,
    stack_start: &mut Vec<i64>,
    output: &mut [Option<Site<T>>],
) {
    let n = input.len() as i64;
    stack_pos.clear();
    stack_start.clear();

    let at = |j: i64, x: i64| -> (T, u32) {
        let s = input[j as usize].expect("stack holds sites only");
        (s.value + T::term(weight, x - j), s.id)
    };

    for q in 0..n {
        let Some(site_q) = input[q as usize] else {
            continue;
        };
        loop {
            let Some(&p) = stack_pos.last() else {
                stack_pos.push(q);
                stack_start.push(0);
                break;
            };
            let start = *stack_start.last().unwrap();
            let beats = |x: i64| lex_less(at(q, x), at(p, x));
            if beats(start) {
                stack_pos.pop();
                stack_start.pop();
                continue;
            }
            // Smallest x > start at which q beats p; the set of such x is
            // upward closed because q > p.
            let guess =
                T::approx_crossing(input[p as usize].unwrap().value, p, site_q.value, q, weight);
            let mut t = if guess.is_finite() {
                (guess.floor() as i64).clamp(start + 1, n)
            } else {
                n
            };
            while t > start + 1 && beats(t - 1) {
                t -= 1;
            }
            while t < n && !beats(t) {
                t += 1;
            }
            if t < n {
                stack_pos.push(q);
                stack_start.push(t);
            }
            break;
        }
    }

    let mut k = 0usize;
    for x in 0..n {
        while k + 1 < stack_pos.len() && stack_start[k + 1] <= x {
            k += 1;
        }
        output[x as usize] = stack_pos.get(k).map(|&j| {
            let (value, id) = at(j, x);
            Site { value, id }
        });
    }
}

fn feature_transform<T: SqDist>(lab: &ComponentLabeling, weights: [T; 3]) -> Vec<(T, u32)> {
    let shape = lab.labels().shape();
    let dims = shape.dims();
    let mut field: Vec<Option<Site<T>>> = lab
        .labels()
        .data()
        .iter()
        .map(|&l| {
            (l != 0).then_some(Site {
                value: T::ZERO,
                id: l,
            })
        })
        .collect();

    let max_len = *dims.iter().max().unwrap();
    let mut line_in = vec![None; max_len];
    let mut line_out = vec![None; max_len];
    let mut stack_pos = Vec::with_capacity(max_len);
    let mut stack_start = Vec::with_capacity(max_len);
    let strides = [1, dims[0], dims[0] * dims[1]];

    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let (a1, a2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for u in 0..dims[a1] {
            for v in 0..dims[a2] {
                let base = u * strides[a1] + v * strides[a2];
                for i in 0..n {
                    line_in[i] = field[base + i * stride];
                }
                envelope_1d(
                    &line_in[..n],
                    weights[axis],
                    &mut stack_pos,
                    &mut stack_start,
                    &mut line_out[..n],
                );
                for i in 0..n {
                    field[base + i * stride] = line_out[i];
                }
            }
        }
    }

    field
        .into_iter()
        .map(|s| {
            let s = s.expect("at least one component reaches every voxel");
            (s.value, s.id)
        })
        .collect()
}

fn assemble(lab: &ComponentLabeling, best: Vec<(f64, u32)>) -> VoronoiPartition {
    let shape = lab.labels().shape();
    let spacing = lab.labels().spacing();
    let (dist, region): (Vec<f64>, Vec<u32>) =
        best.into_iter().map(|(d2, id)| (d2.sqrt(), id)).unzip();
    VoronoiPartition {
        region_of: Grid::new(shape, spacing, region).expect("shape"),
        distances: Grid::new(shape, spacing, dist).expect("shape"),
        count: lab.count(),
    }
}

/// Exact nearest-component partition, ties to the lowest component ID.
pub fn voronoi_partition(
    lab: &ComponentLabeling,
    metric: DistanceMetric,
) -> Result<VoronoiPartition> {
    if lab.count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let best = match metric {
        DistanceMetric::Physical(s) if !s.is_isotropic() => {
            let [sx, sy, sz] = s.as_array();
            feature_transform::<f64>(lab, [sx * sx, sy * sy, sz * sz])
        }
        DistanceMetric::Physical(s) => {
            // Uniform scaling keeps every comparison, so the exact integer
            // path decides the regions.
            let scale = s.sx() * s.sx();
            feature_transform::<i64>(lab, [1, 1, 1])
                .into_iter()
                .map(|(d2, id)| (d2 as f64 * scale, id))
                .collect()
        }
        DistanceMetric::VoxelIndex => feature_transform::<i64>(lab, [1, 1, 1])
            .into_iter()
            .map(|(d2, id)| (d2.to_f64(), id))
            .collect(),
    };
    Ok(assemble(lab, best))
}

/// Squared distance between two voxels under `metric`, accumulated x, y, z.
pub fn squared_distance(metric: DistanceMetric, a: [usize; 3], b: [usize; 3]) -> f64 {
    let d = [0, 1, 2].map(|k| a[k] as i64 - b[k] as i64);
    match metric {
        DistanceMetric::VoxelIndex => (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64,
        DistanceMetric::Physical(s) => {
            let w = s.as_array().map(|v| v * v);
            f64::term(w[0], d[0]) + f64::term(w[1], d[1]) + f64::term(w[2], d[2])
        }
    }
}

/// Direct evaluation of the nearest-component definition: for every voxel,
/// scan every component voxel. Quadratic; meant for tests.
pub fn voronoi_partition_bruteforce(
    lab: &ComponentLabeling,
    metric: DistanceMetric,
) -> Result<VoronoiPartition> {
    if lab.count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let shape = lab.labels().shape();
    let sites: Vec<([usize; 3], u32)> = lab
        .ids()
        .flat_map(|id| {
            lab.voxel_coords(id)
                .expect("valid id")
                .into_iter()
                .map(move |c| (c, id))
        })
        .collect();
    let best = (0..shape.len())
        .map(|i| {
            let t = shape.coords(i);
            let mut best = (f64::INFINITY, u32::MAX);
            for &(c, id) in &sites {
                let cand = (squared_distance(metric, t, c), id);
                if lex_less(cand, best) {
                    best = cand;
                }
            }
            best
        })
        .collect();
    Ok(assemble(lab, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::label_components;
    use crate::volume::{BinaryMask, Shape};

    fn mask_with(shape: Shape, points: &[[usize; 3]]) -> BinaryMask {
        let mut m = BinaryMask::empty(shape, Spacing::unit());
        for &[x, y, z] in points {
            m.set(x, y, z, true);
        }
        m
    }

    #[test]
    fn empty_ground_truth_is_error() {
        let lab = label_components(&BinaryMask::empty(
            Shape::new(3, 3, 3).unwrap(),
            Spacing::unit(),
        ));
        assert!(matches!(
            voronoi_partition(&lab, DistanceMetric::VoxelIndex),
            Err(Error::EmptyGroundTruth)
        ));
        assert!(voronoi_partition_bruteforce(&lab, DistanceMetric::VoxelIndex).is_err());
    }

    #[test]
    fn single_component_owns_everything() {
        let lab = label_components(&mask_with(Shape::new(4, 3, 2).unwrap(), &[[1, 1, 1]]));
        let part = voronoi_partition(&lab, DistanceMetric::VoxelIndex).unwrap();
        assert!(part.region_of().data().iter().all(|&r| r == 1));
        assert_eq!(*part.distances().get(3, 0, 0), (4.0f64 + 1.0 + 1.0).sqrt());
    }

    #[test]
    fn midpoint_tie_goes_to_lower_id() {
        let lab = label_components(&mask_with(
            Shape::new(5, 1, 1).unwrap(),
            &[[0, 0, 0], [4, 0, 0]],
        ));
        for part in [
            voronoi_partition(&lab, DistanceMetric::VoxelIndex).unwrap(),
            voronoi_partition_bruteforce(&lab, DistanceMetric::VoxelIndex).unwrap(),
        ] {
            assert_eq!(part.region_of().data(), &[1, 1, 1, 2, 2]);
        }
    }

    #[test]
    fn tie_prefers_lower_id_even_when_later_on_the_line() {
        // Component 1 is the column at x=4 (met first on row 0); component 2
        // sits at x=0 on row 1. On row 1, x=2 is equidistant.
        let lab = label_components(&mask_with(
            Shape::new(5, 2, 1).unwrap(),
            &[[4, 0, 0], [4, 1, 0], [0, 1, 0]],
        ));
        assert_eq!(*lab.labels().get(0, 1, 0), 2);
        let fast = voronoi_partition(&lab, DistanceMetric::VoxelIndex).unwrap();
        let slow = voronoi_partition_bruteforce(&lab, DistanceMetric::VoxelIndex).unwrap();
        assert_eq!(fast.region_of(), slow.region_of());
        assert_eq!(*fast.region_of().get(2, 1, 0), 1);
        assert_eq!(*fast.region_of().get(1, 1, 0), 2);
    }

    #[test]
    fn anisotropic_spacing_moves_the_boundary() {
        // Stretching y moves the boundary between the two sites.
        let lab = label_components(&mask_with(
            Shape::new(6, 5, 1).unwrap(),
            &[[0, 0, 0], [0, 4, 0]],
        ));
        let s = Spacing::new(1.0, 3.0, 1.0).unwrap();
        let fast = voronoi_partition(&lab, DistanceMetric::Physical(s)).unwrap();
        let slow = voronoi_partition_bruteforce(&lab, DistanceMetric::Physical(s)).unwrap();
        assert_eq!(fast.region_of(), slow.region_of());
        assert_eq!(fast.distances(), slow.distances());
    }

    #[test]
    fn region_sizes_cover_lattice() {
        let lab = label_components(&mask_with(
            Shape::new(7, 5, 3).unwrap(),
            &[[0, 0, 0], [6, 4, 2], [3, 0, 2]],
        ));
        let part = voronoi_partition(&lab, DistanceMetric::VoxelIndex).unwrap();
        assert_eq!(part.region_sizes().iter().sum::<usize>(), 7 * 5 * 3);
        assert_eq!(
            part.regions().iter().map(Vec::len).collect::<Vec<_>>(),
            part.region_sizes()
        );
    }
}
