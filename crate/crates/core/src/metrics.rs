//! Hard evaluation of binarized predictions: Dice, CC-Dice, one-to-one
//! instance matching, detection precision/recall/F1, and recall stratified by
//! lesion volume quartile.
//!
//! Undefined values (zero denominators) are `None` and are left out of
//! aggregation, with their count reported.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::components::{label_components, ComponentLabeling};
use crate::dataset_stats::{mean_std, percentile, StdKind};
use crate::error::{Error, Result};
use crate::volume::BinaryMask;
use crate::voronoi::{voronoi_partition, DistanceMetric, VoronoiPartition};

/// `2|P ∩ K| / (|P| + |K|)`; two empty masks score 1.
pub fn hard_dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        np += p as usize;
        ng += g as usize;
        inter += (p && g) as usize;
    }
    if np + ng == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (np + ng) as f64)
}

/// CC-Dice from a precomputed labeling and partition.
pub fn cc_dice_with(
    pred: &BinaryMask,
    gt_lab: &ComponentLabeling,
    part: &VoronoiPartition,
) -> Result<f64> {
    pred.check_same_shape(gt_lab.labels())?;
    let n = gt_lab.count();
    if n == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut pred_in_region = vec![0usize; n];
    let mut hits = vec![0usize; n];
    let labels = gt_lab.labels().data();
    for (i, (&p, &r)) in pred.data().iter().zip(part.region_of().data()).enumerate() {
        if p {
            let k = r as usize - 1;
            pred_in_region[k] += 1;
            if labels[i] == r {
                hits[k] += 1;
            }
        }
    }
    let total: f64 = (0..n)
        .map(|k| 2.0 * hits[k] as f64 / (pred_in_region[k] + gt_lab.voxel_lists()[k].len()) as f64)
        .sum();
    Ok(total / n as f64)
}

/// Mean over ground-truth components of the Dice between the prediction
/// inside the component's Voronoi region and the component. `None` when the
/// ground truth is empty.
pub fn cc_dice(pred: &BinaryMask, gt: &BinaryMask, metric: DistanceMetric) -> Result<Option<f64>> {
    pred.check_same_shape(gt)?;
    let lab = label_components(gt);
    if lab.count() == 0 {
        return Ok(None);
    }
    let part = voronoi_partition(&lab, metric)?;
    cc_dice_with(pred, &lab, &part).map(Some)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(gt_id, pred_id)` pairs, ascending by GT id.
    pub pairs: Vec<(u32, u32)>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

/// For every GT component (index `id - 1`), the ascending predicted IDs it
/// shares at least one voxel with.
pub fn overlap_graph(
    pred_lab: &ComponentLabeling,
    gt_lab: &ComponentLabeling,
) -> Result<Vec<Vec<u32>>> {
    gt_lab.labels().check_same_shape(pred_lab.labels())?;
    let mut adj = vec![Vec::new(); gt_lab.count()];
    for (&g, &p) in gt_lab.labels().data().iter().zip(pred_lab.labels().data()) {
        if g != 0 && p != 0 {
            adj[g as usize - 1].push(p);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    Ok(adj)
}

/// Maximum-cardinality matching (Hopcroft–Karp) on a bipartite graph with
/// left vertices `1..=adj.len()` and right vertices `1..=n_right`.
pub fn maximum_matching(adj: &[Vec<u32>], n_right: usize) -> MatchResult {
    const NIL: usize = usize::MAX;
    let n_left = adj.len();
    let mut match_left = vec![NIL; n_left];
    let mut match_right = vec![NIL; n_right];
    let mut dist = vec![0usize; n_left];

    let bfs = |match_left: &[usize], match_right: &[usize], dist: &mut [usize]| -> bool {
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if match_left[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                let w = match_right[v as usize - 1];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        found
    };

    fn dfs(
        u: usize,
        adj: &[Vec<u32>],
        match_left: &mut [usize],
        match_right: &mut [usize],
        dist: &mut [usize],
    ) -> bool {
        for &v in &adj[u] {
            let v = v as usize - 1;
            let w = match_right[v];
            if w == usize::MAX
                || (dist[w] == dist[u] + 1 && dfs(w, adj, match_left, match_right, dist))
            {
                match_left[u] = v;
                match_right[v] = u;
                return true;
            }
        }
        dist[u] = usize::MAX;
        false
    }

    while bfs(&match_left, &match_right, &mut dist) {
        for u in 0..n_left {
            if match_left[u] == NIL {
                dfs(u, adj, &mut match_left, &mut match_right, &mut dist);
            }
        }
    }

    let mut result = MatchResult::default();
    for (u, &v) in match_left.iter().enumerate() {
        if v == NIL {
            result.unmatched_gt.push(u as u32 + 1);
        } else {
            result.pairs.push((u as u32 + 1, v as u32 + 1));
        }
    }
    result.unmatched_pred = (0..n_right)
        .filter(|&v| match_right[v] == NIL)
        .map(|v| v as u32 + 1)
        .collect();
    result
}

/// One-to-one matching of predicted and GT components, where a pair needs
/// at least one shared voxel.
pub fn match_instances(
    pred_lab: &ComponentLabeling,
    gt_lab: &ComponentLabeling,
) -> Result<MatchResult> {
    let adj = overlap_graph(pred_lab, gt_lab)?;
    Ok(maximum_matching(&adj, pred_lab.count()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtComponent {
    pub id: u32,
    pub volume_mm3: f64,
    pub detected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub dice: f64,
    pub cc_dice: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub n_gt: usize,
    pub n_pred: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt_components: Vec<GtComponent>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn case_metrics(
    pred: &BinaryMask,
    gt: &BinaryMask,
    metric: DistanceMetric,
) -> Result<CaseMetrics> {
    pred.check_same_shape(gt)?;
    let gt_lab = label_components(gt);
    let pred_lab = label_components(pred);
    let matching = match_instances(&pred_lab, &gt_lab)?;
    let cc = if gt_lab.count() == 0 {
        None
    } else {
        let part = voronoi_partition(&gt_lab, metric)?;
        Some(cc_dice_with(pred, &gt_lab, &part)?)
    };
    let tp = matching.pairs.len();
    let fp = matching.unmatched_pred.len();
    let fn_ = matching.unmatched_gt.len();
    let mut detected = vec![false; gt_lab.count()];
    for &(g, _) in &matching.pairs {
        detected[g as usize - 1] = true;
    }
    let gt_components = gt_lab
        .ids()
        .map(|id| GtComponent {
            id,
            volume_mm3: gt_lab.volume_mm3(id).expect("valid id"),
            detected: detected[id as usize - 1],
        })
        .collect();
    Ok(CaseMetrics {
        dice: hard_dice(pred, gt)?,
        cc_dice: cc,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        n_gt: gt_lab.count(),
        n_pred: pred_lab.count(),
        tp,
        fp,
        fn_,
        gt_components,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuartileRecall {
    /// 25th, 50th and 75th percentile of pooled GT component volumes (mm³).
    pub boundaries: Option<[f64; 3]>,
    pub recall: [Option<f64>; 4],
    pub detected: [usize; 4],
    pub total: [usize; 4],
}

/// Quartile index of `v`: intervals `[b_k, b_k+1)`, the last one closed.
fn quartile_of(v: f64, b: &[f64; 3]) -> usize {
    b.iter().filter(|&&edge| v >= edge).count()
}

pub fn quartile_recall_with_boundaries(
    cases: &[CaseMetrics],
    boundaries: [f64; 3],
) -> QuartileRecall {
    let mut detected = [0usize; 4];
    let mut total = [0usize; 4];
    for c in cases.iter().flat_map(|c| &c.gt_components) {
        let q = quartile_of(c.volume_mm3, &boundaries);
        total[q] += 1;
        detected[q] += c.detected as usize;
    }
    QuartileRecall {
        boundaries: Some(boundaries),
        recall: [0, 1, 2, 3].map(|q| ratio(detected[q], total[q])),
        detected,
        total,
    }
}

/// Recall per volume quartile with boundaries taken from the GT component
/// volumes pooled over `cases`.
pub fn quartile_recall(cases: &[CaseMetrics]) -> QuartileRecall {
    let mut volumes: Vec<f64> = cases
        .iter()
        .flat_map(|c| c.gt_components.iter().map(|g| g.volume_mm3))
        .collect();
    if volumes.is_empty() {
        return QuartileRecall {
            boundaries: None,
            recall: [None; 4],
            detected: [0; 4],
            total: [0; 4],
        };
    }
    volumes.sort_by(f64::total_cmp);
    let b = [25.0, 50.0, 75.0].map(|q| percentile(&volumes, q).expect("non-empty"));
    quartile_recall_with_boundaries(cases, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
    pub n_undefined: usize,
}

impl MetricSummary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut defined = Vec::new();
        let mut undefined = 0;
        for v in values {
            match v {
                Some(v) => defined.push(v),
                None => undefined += 1,
            }
        }
        let ms = mean_std(&defined, StdKind::Population);
        MetricSummary {
            mean: ms.map(|m| m.0),
            std: ms.map(|m| m.1),
            n: defined.len(),
            n_undefined: undefined,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n_cases: usize,
    pub dice: MetricSummary,
    pub cc_dice: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
}

/// Mean ± population std of every metric over the cases, in case order.
pub fn aggregate(cases: &[CaseMetrics]) -> Result<AggregateMetrics> {
    if cases.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty set of cases"));
    }
    Ok(AggregateMetrics {
        n_cases: cases.len(),
        dice: MetricSummary::of(cases.iter().map(|c| Some(c.dice))),
        cc_dice: MetricSummary::of(cases.iter().map(|c| c.cc_dice)),
        precision: MetricSummary::of(cases.iter().map(|c| c.precision)),
        recall: MetricSummary::of(cases.iter().map(|c| c.recall)),
        f1: MetricSummary::of(cases.iter().map(|c| c.f1)),
    })
}
