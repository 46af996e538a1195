//! Soft Dice, cross-entropy and the instance-aware DiceCE objectives, each
//! returning a scalar together with its exact gradient with respect to the
//! logits.
//!
//! Logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]` before the sigmoid.
//! Soft Dice is the non-smooth form `1 - 2 sum(p g) / (sum(p) + sum(g))`.
//! Cross-entropy is a mean over the scored voxels.
//!
//! Instance terms average one DiceCE term per ground-truth component:
//!
//! * CC: the term for component `C` is scored only on its Voronoi region.
//! * Blob: the term for `C` is scored on the whole lattice with
//!   probabilities forced to zero on the voxels of every other component.

use serde::{Deserialize, Serialize};

use crate::components::{label_components, ComponentLabeling};
use crate::error::{Error, Result};
use crate::volume::{sigmoid_scalar, BinaryMask, Grid, LogitVolume, LOGIT_CLAMP};
use crate::voronoi::{voronoi_partition, DistanceMetric, VoronoiPartition};

/// Scalar loss and its per-voxel gradient with respect to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Grid<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_global: f64,
    pub w_instance: f64,
    pub w_dice: f64,
    pub w_ce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_global: 1.0,
            w_instance: 1.0,
            w_dice: 1.0,
            w_ce: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_global, self.w_instance, self.w_dice, self.w_ce];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!(
                "loss weights must be finite and >= 0, got {all:?}"
            )));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid("loss weights must not all be zero"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyGtMode {
    /// Without ground-truth components the instance term is left out.
    GlobalOnly,
    /// Without ground-truth components the instance term is 0 with zero gradient.
    Zero,
}

impl EmptyGtMode {
    pub fn name(&self) -> &'static str {
        match self {
            EmptyGtMode::GlobalOnly => "global-only",
            EmptyGtMode::Zero => "zero",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneratePolicy {
    pub empty_gt: EmptyGtMode,
    /// Soft Dice loss reported when `sum(p) + sum(g) == 0`.
    pub empty_denominator_dice: f64,
}

impl Default for DegeneratePolicy {
    fn default() -> Self {
        DegeneratePolicy {
            empty_gt: EmptyGtMode::GlobalOnly,
            empty_denominator_dice: 0.0,
        }
    }
}

impl DegeneratePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.empty_denominator_dice) {
            return Err(Error::invalid(format!(
                "empty_denominator_dice must lie in [0, 1], got {}",
                self.empty_denominator_dice
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "dicece")]
    DiceCE,
    #[serde(rename = "cc-dicece")]
    CCDiceCE,
    #[serde(rename = "blob-dicece")]
    BlobDiceCE,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::DiceCE => "dicece",
            LossKind::CCDiceCE => "cc-dicece",
            LossKind::BlobDiceCE => "blob-dicece",
        }
    }
}

/// Everything a combined loss evaluation needs besides the volumes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub policy: DegeneratePolicy,
    pub metric: DistanceMetric,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            policy: DegeneratePolicy::default(),
            metric: DistanceMetric::VoxelIndex,
        }
    }
}

/// Clamped logits with their sigmoid and sigmoid derivative.
struct SoftPrediction {
    logit: Vec<f64>,
    prob: Vec<f64>,
    dprob: Vec<f64>,
    /// 1 inside the clamp range, 0 where the clamp cuts the gradient.
    pass: Vec<f64>,
}

impl SoftPrediction {
    fn new(l: &LogitVolume) -> Self {
        let n = l.len();
        let mut out = SoftPrediction {
            logit: Vec::with_capacity(n),
            prob: Vec::with_capacity(n),
            dprob: Vec::with_capacity(n),
            pass: Vec::with_capacity(n),
        };
        for &v in l.data() {
            let c = v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
            let p = sigmoid_scalar(c);
            let pass = if v.abs() <= LOGIT_CLAMP { 1.0 } else { 0.0 };
            out.logit.push(c);
            out.prob.push(p);
            out.dprob.push(p * (1.0 - p) * pass);
            out.pass.push(pass);
        }
        out
    }
}

#[inline]
fn bce(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// Soft Dice over `voxels`, adding `scale * dL/dl` into `grad`.
fn dice_on<I, G>(
    pred: &SoftPrediction,
    target: G,
    voxels: I,
    empty: f64,
    scale: f64,
    grad: &mut [f64],
) -> f64
where
    I: Iterator<Item = usize> + Clone,
    G: Fn(usize) -> bool,
{
    let (mut inter, mut psum, mut gsum) = (0.0, 0.0, 0.0);
    for i in voxels.clone() {
        let p = pred.prob[i];
        psum += p;
        if target(i) {
            inter += p;
            gsum += 1.0;
        }
    }
    let denom = psum + gsum;
    if denom == 0.0 {
        return empty;
    }
    if scale != 0.0 {
        let d2 = denom * denom;
        for i in voxels {
            let g = if target(i) { 1.0 } else { 0.0 };
            let dl_dp = (2.0 * inter - 2.0 * g * denom) / d2;
            grad[i] += scale * dl_dp * pred.dprob[i];
        }
    }
    1.0 - 2.0 * inter / denom
}

/// Binary cross-entropy summed over `voxels` and divided by `count`.
fn ce_on<I, G>(
    pred: &SoftPrediction,
    target: G,
    voxels: I,
    count: usize,
    scale: f64,
    grad: &mut [f64],
) -> f64
where
    I: Iterator<Item = usize>,
    G: Fn(usize) -> bool,
{
    if count == 0 {
        return 0.0;
    }
    let inv = 1.0 / count as f64;
    let mut total = 0.0;
    for i in voxels {
        let g = if target(i) { 1.0 } else { 0.0 };
        total += bce(pred.logit[i], g);
        if scale != 0.0 {
            grad[i] += scale * (pred.prob[i] - g) * inv * pred.pass[i];
        }
    }
    total * inv
}

/// Dice/CE mixing weights plus the value used for an empty Dice denominator.
#[derive(Clone, Copy)]
struct Mix {
    w_dice: f64,
    w_ce: f64,
    empty: f64,
}

impl Mix {
    fn new(w_dice: f64, w_ce: f64) -> Self {
        Mix {
            w_dice,
            w_ce,
            empty: 0.0,
        }
    }
}

fn dicece_on<I, G>(
    pred: &SoftPrediction,
    target: G,
    voxels: I,
    ce_count: usize,
    mix: Mix,
    scale: f64,
    grad: &mut [f64],
) -> f64
where
    I: Iterator<Item = usize> + Clone,
    G: Fn(usize) -> bool + Copy,
{
    let mut total = 0.0;
    if mix.w_dice != 0.0 {
        total += mix.w_dice
            * dice_on(
                pred,
                target,
                voxels.clone(),
                mix.empty,
                scale * mix.w_dice,
                grad,
            );
    }
    if mix.w_ce != 0.0 {
        total += mix.w_ce * ce_on(pred, target, voxels, ce_count, scale * mix.w_ce, grad);
    }
    total
}

fn check_restrict(restrict: Option<&[usize]>, n: usize) -> Result<()> {
    if let Some(r) = restrict {
        if let Some(&last) = r.last() {
            if last >= n {
                return Err(Error::invalid(format!(
                    "restrict index {last} outside lattice of {n} voxels"
                )));
            }
        }
        if r.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "restrict must be strictly ascending voxel indices",
            ));
        }
    }
    Ok(())
}

fn zero_grad(l: &LogitVolume) -> Grid<f64> {
    Grid::filled(l.shape(), l.spacing(), 0.0)
}

fn restricted_dicece(
    l: &LogitVolume,
    g: &BinaryMask,
    restrict: Option<&[usize]>,
    w_dice: f64,
    w_ce: f64,
) -> Result<LossValue> {
    l.check_same_shape(g)?;
    check_restrict(restrict, l.len())?;
    let pred = SoftPrediction::new(l);
    let gt = g.data();
    let target = |i: usize| gt[i];
    let mut grad = zero_grad(l);
    let value = match restrict {
        None => dicece_on(
            &pred,
            target,
            0..l.len(),
            l.len(),
            Mix::new(w_dice, w_ce),
            1.0,
            grad.data_mut(),
        ),
        Some(r) => dicece_on(
            &pred,
            target,
            r.iter().copied(),
            r.len(),
            Mix::new(w_dice, w_ce),
            1.0,
            grad.data_mut(),
        ),
    };
    Ok(LossValue { value, grad })
}

/// Non-smooth soft Dice loss over `restrict` (default: every voxel).
///
/// A zero denominator (empty scored set) gives loss 0 with zero gradient.
pub fn soft_dice_loss(
    l: &LogitVolume,
    g: &BinaryMask,
    restrict: Option<&[usize]>,
) -> Result<LossValue> {
    restricted_dicece(l, g, restrict, 1.0, 0.0)
}

/// Mean binary cross-entropy over `restrict`, in the stable logit form.
pub fn cross_entropy_loss(
    l: &LogitVolume,
    g: &BinaryMask,
    restrict: Option<&[usize]>,
) -> Result<LossValue> {
    restricted_dicece(l, g, restrict, 0.0, 1.0)
}

pub fn dicece_loss(
    l: &LogitVolume,
    g: &BinaryMask,
    restrict: Option<&[usize]>,
    w_dice: f64,
    w_ce: f64,
) -> Result<LossValue> {
    restricted_dicece(l, g, restrict, w_dice, w_ce)
}

fn check_instance_inputs(l: &LogitVolume, gt: &BinaryMask, lab: &ComponentLabeling) -> Result<()> {
    l.check_same_shape(gt)?;
    l.check_same_shape(lab.labels())?;
    if lab.count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(())
}

fn cc_accumulate(
    pred: &SoftPrediction,
    lab: &ComponentLabeling,
    regions: &[Vec<usize>],
    mix: Mix,
    scale: f64,
    grad: &mut [f64],
) -> Vec<f64> {
    let labels = lab.labels().data();
    regions
        .iter()
        .enumerate()
        .map(|(k, region)| {
            let id = k as u32 + 1;
            let target = move |i: usize| labels[i] == id;
            dicece_on(
                pred,
                target,
                region.iter().copied(),
                region.len(),
                mix,
                scale,
                grad,
            )
        })
        .collect()
}

fn blob_accumulate(
    pred: &SoftPrediction,
    lab: &ComponentLabeling,
    mix: Mix,
    scale: f64,
    grad: &mut [f64],
) -> Vec<f64> {
    let labels = lab.labels().data();
    let n = labels.len();
    lab.ids()
        .map(|id| {
            let target = move |i: usize| labels[i] == id;
            let kept = (0..n).filter(move |&i| labels[i] == 0 || labels[i] == id);
            // Masked voxels have p = 0 and target 0: no Dice mass, zero CE,
            // but they still count in the CE mean.
            dicece_on(pred, target, kept, n, mix, scale, grad)
        })
        .collect()
}

fn check_partition(lab: &ComponentLabeling, part: &VoronoiPartition) -> Result<()> {
    if part.count() != lab.count() || part.region_of().shape() != lab.labels().shape() {
        return Err(Error::invalid(
            "Voronoi partition does not belong to this labeling",
        ));
    }
    Ok(())
}

/// CC instance term: the mean over components of DiceCE scored inside each
/// component's Voronoi region.
pub fn cc_instance_loss(
    l: &LogitVolume,
    gt: &BinaryMask,
    lab: &ComponentLabeling,
    part: &VoronoiPartition,
    w_dice: f64,
    w_ce: f64,
) -> Result<LossValue> {
    check_instance_inputs(l, gt, lab)?;
    check_partition(lab, part)?;
    let pred = SoftPrediction::new(l);
    let mut grad = zero_grad(l);
    let scale = 1.0 / lab.count() as f64;
    let terms = cc_accumulate(
        &pred,
        lab,
        &part.regions(),
        Mix::new(w_dice, w_ce),
        scale,
        grad.data_mut(),
    );
    Ok(LossValue {
        value: terms.iter().sum::<f64>() * scale,
        grad,
    })
}

/// Per-component CC terms, unweighted by `1/N`, each with its own gradient.
pub fn cc_instance_terms(
    l: &LogitVolume,
    gt: &BinaryMask,
    lab: &ComponentLabeling,
    part: &VoronoiPartition,
    w_dice: f64,
    w_ce: f64,
) -> Result<Vec<LossValue>> {
    check_instance_inputs(l, gt, lab)?;
    check_partition(lab, part)?;
    let pred = SoftPrediction::new(l);
    let regions = part.regions();
    Ok(regions
        .iter()
        .enumerate()
        .map(|(k, region)| {
            let mut grad = zero_grad(l);
            let labels = lab.labels().data();
            let id = k as u32 + 1;
            let value = dicece_on(
                &pred,
                |i: usize| labels[i] == id,
                region.iter().copied(),
                region.len(),
                Mix::new(w_dice, w_ce),
                1.0,
                grad.data_mut(),
            );
            LossValue { value, grad }
        })
        .collect())
}

/// Blob instance term: the mean over components of DiceCE on the whole
/// lattice, with the other components' voxels removed from the prediction.
pub fn blob_instance_loss(
    l: &LogitVolume,
    gt: &BinaryMask,
    lab: &ComponentLabeling,
    w_dice: f64,
    w_ce: f64,
) -> Result<LossValue> {
    check_instance_inputs(l, gt, lab)?;
    let pred = SoftPrediction::new(l);
    let mut grad = zero_grad(l);
    let scale = 1.0 / lab.count() as f64;
    let terms = blob_accumulate(&pred, lab, Mix::new(w_dice, w_ce), scale, grad.data_mut());
    Ok(LossValue {
        value: terms.iter().sum::<f64>() * scale,
        grad,
    })
}

/// Per-component blob terms, unweighted by `1/N`.
pub fn blob_instance_terms(
    l: &LogitVolume,
    gt: &BinaryMask,
    lab: &ComponentLabeling,
    w_dice: f64,
    w_ce: f64,
) -> Result<Vec<LossValue>> {
    check_instance_inputs(l, gt, lab)?;
    let pred = SoftPrediction::new(l);
    let labels = lab.labels().data();
    let n = labels.len();
    Ok(lab
        .ids()
        .map(|id| {
            let mut grad = zero_grad(l);
            let kept = (0..n).filter(|&i| labels[i] == 0 || labels[i] == id);
            let value = dicece_on(
                &pred,
                |i: usize| labels[i] == id,
                kept,
                n,
                Mix::new(w_dice, w_ce),
                1.0,
                grad.data_mut(),
            );
            LossValue { value, grad }
        })
        .collect())
}

/// Result of a combined objective, with its two parts reported separately.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedLoss {
    pub total: LossValue,
    /// Unweighted global DiceCE.
    pub global: f64,
    /// Unweighted instance term; `None` when it was not evaluated.
    pub instance: Option<f64>,
    pub n_components: usize,
}

/// `w_global * DiceCE + w_instance * instance term`, with the instance term
/// chosen by `kind` (`DiceCE` has none).
pub fn combined_loss(
    kind: LossKind,
    l: &LogitVolume,
    gt: &BinaryMask,
    cfg: &LossConfig,
) -> Result<CombinedLoss> {
    cfg.weights.validate()?;
    cfg.policy.validate()?;
    l.check_same_shape(gt)?;
    let LossWeights {
        w_global,
        w_instance,
        w_dice,
        w_ce,
    } = cfg.weights;
    let mix = Mix {
        w_dice,
        w_ce,
        empty: cfg.policy.empty_denominator_dice,
    };
    let pred = SoftPrediction::new(l);
    let mut grad = zero_grad(l);
    let n = l.len();
    let gt_data = gt.data();

    let global = dicece_on(
        &pred,
        |i: usize| gt_data[i],
        0..n,
        n,
        mix,
        w_global,
        grad.data_mut(),
    );
    let mut total = w_global * global;

    let lab = label_components(gt);
    let instance = match kind {
        LossKind::DiceCE => None,
        _ if lab.count() == 0 => match cfg.policy.empty_gt {
            EmptyGtMode::GlobalOnly => None,
            EmptyGtMode::Zero => Some(0.0),
        },
        LossKind::CCDiceCE => {
            let part = voronoi_partition(&lab, cfg.metric)?;
            let scale = 1.0 / lab.count() as f64;
            let terms = cc_accumulate(
                &pred,
                &lab,
                &part.regions(),
                mix,
                w_instance * scale,
                grad.data_mut(),
            );
            Some(terms.iter().sum::<f64>() * scale)
        }
        LossKind::BlobDiceCE => {
            let scale = 1.0 / lab.count() as f64;
            let terms = blob_accumulate(&pred, &lab, mix, w_instance * scale, grad.data_mut());
            Some(terms.iter().sum::<f64>() * scale)
        }
    };
    if let Some(v) = instance {
        total += w_instance * v;
    }
    Ok(CombinedLoss {
        total: LossValue { value: total, grad },
        global,
        instance,
        n_components: lab.count(),
    })
}

/// Raw gradient and a copy scaled so that the largest magnitude is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    pub raw: Grid<f64>,
    pub normalized: Grid<f64>,
}

pub fn normalize_gradient(grad: &Grid<f64>) -> Grid<f64> {
    let max = grad.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return grad.map(|_| 0.0);
    }
    grad.map(|&v| (v / max).clamp(-1.0, 1.0))
}

pub fn gradient_map(
    kind: LossKind,
    l: &LogitVolume,
    gt: &BinaryMask,
    cfg: &LossConfig,
) -> Result<GradientMap> {
    let raw = combined_loss(kind, l, gt, cfg)?.total.grad;
    let normalized = normalize_gradient(&raw);
    Ok(GradientMap { raw, normalized })
}
