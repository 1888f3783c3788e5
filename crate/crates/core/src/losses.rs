//! Training objectives.
//!
//! The data term is the two-sided Chamfer distance between the union of
//! patch samples and the target cloud. The deformation term pushes each
//! patch towards a fixed-scale conformal mapping through four penalties on
//! the metric tensor, each normalized by the patch area `A⁽ᵏ⁾`:
//!
//! ```text
//! L_E   = mean ((E − μ_E) / A)²      L_G  = mean ((G − μ_G) / A)²
//! L_sk  = mean (F / A)²              L_str = mean ((E − G) / A)²
//! L_def = α_E L_E + α_G L_G + α_sk L_sk + α_str L_str
//! L_ol  = max(0, Σ_k A⁽ᵏ⁾ − Â)²
//! L     = L_CHD + α_def L_def + α_ol L_ol
//! ```
//!
//! `μ_E` and `μ_G` are means over every sample of every patch.
//!
//! Each term is available as a plain function of values and, through
//! [`build_loss`], recorded on a [`Tape`] so its gradient with respect to
//! decoded positions and first UV derivatives can be accumulated.

use crate::geometry::{MetricTensor, DEGENERACY_EPS};
use crate::jets::{Tape, Var};
use crate::neighbors::{KdIndex, NeighborError};
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("patch {patch} has area {area:e}, at or below the degeneracy threshold")]
    DegeneratePatch { patch: usize, area: f64 },
    #[error("every patch must contribute the same number of samples")]
    UnequalPatchSizes,
    #[error("target area must be positive, got {0}")]
    InvalidTargetArea(f64),
    #[error("overlap loss is enabled but no target area was supplied")]
    MissingTargetArea,
    #[error("loss weights must be non-negative")]
    NegativeWeight,
}

impl From<NeighborError> for LossError {
    fn from(_: NeighborError) -> Self {
        LossError::Empty("point set")
    }
}

/// Hyper-parameters of the combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha_def: f64,
    pub alpha_ol: f64,
    pub alpha_e: f64,
    pub alpha_g: f64,
    pub alpha_sk: f64,
    pub alpha_str: f64,
}

/// Named configurations accepted by [`LossWeights::preset`].
pub const PRESET_NAMES: &[&str] = &[
    "basic",
    "ours",
    "ours-def",
    "ours-pcae",
    "ours-strict",
    "ablation:free",
    "ablation:no-collapse",
    "ablation:no-skew",
    "ablation:no-stretch",
    "ablation:full",
];

impl Default for LossWeights {
    fn default() -> Self {
        Self::preset("ours").expect("known preset")
    }
}

impl LossWeights {
    /// Chamfer only.
    pub const fn chamfer_only() -> Self {
        Self {
            alpha_def: 0.0,
            alpha_ol: 0.0,
            alpha_e: 1.0,
            alpha_g: 1.0,
            alpha_sk: 1.0,
            alpha_str: 1.0,
        }
    }

    /// Looks up a named configuration.
    ///
    /// * `basic`: no deformation or overlap term.
    /// * `ours`: `α_def = 1e-3`, `α_ol = 1e2`, unit sub-weights.
    /// * `ours-def`: `α_def = 1e-3`, `α_ol = 0`, unit sub-weights.
    /// * `ours-pcae`: like `ours` but stretching allowed (`α_str = 0`).
    /// * `ours-strict`: like `ours-pcae` with `α_str = 1`.
    /// * `ablation:*`: `α_def = 1e-3`, `α_ol = 1e2` and the sub-weights
    ///   `(α_E, α_G, α_sk, α_str)` of the free / no-collapse / no-skew /
    ///   no-stretch / full configurations.
    pub fn preset(name: &str) -> Option<Self> {
        let regularized = |e: f64, g: f64, sk: f64, st: f64| Self {
            alpha_def: 1e-3,
            alpha_ol: 1e2,
            alpha_e: e,
            alpha_g: g,
            alpha_sk: sk,
            alpha_str: st,
        };
        Some(match name {
            "basic" => Self {
                alpha_def: 0.0,
                alpha_ol: 0.0,
                ..regularized(1.0, 1.0, 1.0, 1.0)
            },
            "ours" | "ours-strict" | "ablation:full" => regularized(1.0, 1.0, 1.0, 1.0),
            "ours-def" => Self {
                alpha_ol: 0.0,
                ..regularized(1.0, 1.0, 1.0, 1.0)
            },
            "ours-pcae" | "ablation:no-skew" => regularized(1.0, 1.0, 1.0, 0.0),
            "ablation:free" => regularized(0.0, 0.0, 0.0, 0.0),
            "ablation:no-collapse" => regularized(1.0, 1.0, 0.0, 0.0),
            "ablation:no-stretch" => regularized(1.0, 1.0, 0.0, 1.0),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let all = [
            self.alpha_def,
            self.alpha_ol,
            self.alpha_e,
            self.alpha_g,
            self.alpha_sk,
            self.alpha_str,
        ];
        if all.iter().all(|a| *a >= 0.0 && a.is_finite()) {
            Ok(())
        } else {
            Err(LossError::NegativeWeight)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConformalTerms {
    pub l_e: f64,
    pub l_g: f64,
    pub l_sk: f64,
    pub l_str: f64,
}

/// Per-term values of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub chd: f64,
    pub l_e: f64,
    pub l_g: f64,
    pub l_sk: f64,
    pub l_str: f64,
    pub l_def: f64,
    pub l_ol: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.chd, self.l_e, self.l_g, self.l_sk, self.l_str, self.l_def, self.l_ol, self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub(crate) fn accumulate(&mut self, other: &LossReport) {
        self.chd += other.chd;
        self.l_e += other.l_e;
        self.l_g += other.l_g;
        self.l_sk += other.l_sk;
        self.l_str += other.l_str;
        self.l_def += other.l_def;
        self.l_ol += other.l_ol;
        self.total += other.total;
    }
}

/// Nearest-neighbour assignments of both Chamfer directions.
struct ChamferPairs {
    /// For each predicted point (patch-major), the nearest target index and distance².
    forward: Vec<(usize, f64)>,
    /// For each target point, the nearest predicted index and distance².
    backward: Vec<(usize, f64)>,
}

fn chamfer_pairs(
    pred: &[Vec3],
    gt: &[Vec3],
    gt_index: &KdIndex,
) -> Result<ChamferPairs, LossError> {
    let pred_index = KdIndex::build(pred)?;
    let forward = pred.iter().map(|&p| gt_index.nearest(p)).collect();
    let backward = gt.iter().map(|&q| pred_index.nearest(q)).collect();
    Ok(ChamferPairs { forward, backward })
}

fn flatten_patches(pred: &[Vec<Vec3>]) -> Result<Vec<Vec3>, LossError> {
    if pred.is_empty() || pred.iter().any(|p| p.is_empty()) {
        return Err(LossError::Empty("every patch needs at least one point"));
    }
    Ok(pred.concat())
}

/// Two-sided Chamfer distance between patch samples and a target cloud.
pub fn chamfer(pred: &[Vec<Vec3>], gt: &[Vec3]) -> Result<f64, LossError> {
    if gt.is_empty() {
        return Err(LossError::Empty("target cloud"));
    }
    chamfer_indexed(pred, gt, &KdIndex::build(gt)?)
}

/// [`chamfer`] with a prebuilt index over the target points.
pub fn chamfer_indexed(
    pred: &[Vec<Vec3>],
    gt: &[Vec3],
    gt_index: &KdIndex,
) -> Result<f64, LossError> {
    let flat = flatten_patches(pred)?;
    if gt.is_empty() {
        return Err(LossError::Empty("target cloud"));
    }
    let pairs = chamfer_pairs(&flat, gt, gt_index)?;
    let mut forward = 0.0;
    for &(_, d) in &pairs.forward {
        forward += d;
    }
    let mut backward = 0.0;
    for &(_, d) in &pairs.backward {
        backward += d;
    }
    Ok(forward / flat.len() as f64 + backward / gt.len() as f64)
}

fn check_areas(areas: &[f64]) -> Result<(), LossError> {
    match areas.iter().position(|&a| !(a > DEGENERACY_EPS)) {
        Some(patch) => Err(LossError::DegeneratePatch {
            patch,
            area: areas[patch],
        }),
        None => Ok(()),
    }
}

/// The four conformality penalties from per-sample metric tensors and
/// per-patch areas.
pub fn conformal_terms(
    metrics: &[Vec<MetricTensor>],
    areas: &[f64],
) -> Result<ConformalTerms, LossError> {
    if metrics.is_empty() || metrics[0].is_empty() {
        return Err(LossError::Empty("metric samples"));
    }
    if metrics.len() != areas.len() || metrics.iter().any(|m| m.len() != metrics[0].len()) {
        return Err(LossError::UnequalPatchSizes);
    }
    check_areas(areas)?;
    let n = (metrics.len() * metrics[0].len()) as f64;
    let mu_e = metrics.iter().flatten().map(|m| m.e).sum::<f64>() / n;
    let mu_g = metrics.iter().flatten().map(|m| m.g).sum::<f64>() / n;
    let mut t = ConformalTerms::default();
    for (patch, &a) in metrics.iter().zip(areas) {
        for m in patch {
            t.l_e += ((m.e - mu_e) / a).powi(2);
            t.l_g += ((m.g - mu_g) / a).powi(2);
            t.l_sk += (m.f / a).powi(2);
            t.l_str += ((m.e - m.g) / a).powi(2);
        }
    }
    Ok(ConformalTerms {
        l_e: t.l_e / n,
        l_g: t.l_g / n,
        l_sk: t.l_sk / n,
        l_str: t.l_str / n,
    })
}

/// Squared hinge on the summed patch area exceeding the target area.
pub fn overlap_loss(areas: &[f64], gt_area: f64) -> Result<f64, LossError> {
    if !(gt_area > 0.0) {
        return Err(LossError::InvalidTargetArea(gt_area));
    }
    let excess = areas.iter().sum::<f64>() - gt_area;
    Ok(excess.max(0.0).powi(2))
}

pub fn total_loss(chd: f64, terms: ConformalTerms, l_ol: f64, w: &LossWeights) -> LossReport {
    let l_def = w.alpha_e * terms.l_e
        + w.alpha_g * terms.l_g
        + w.alpha_sk * terms.l_sk
        + w.alpha_str * terms.l_str;
    LossReport {
        chd,
        l_e: terms.l_e,
        l_g: terms.l_g,
        l_sk: terms.l_sk,
        l_str: terms.l_str,
        l_def,
        l_ol,
        total: chd + w.alpha_def * l_def + w.alpha_ol * l_ol,
    }
}

/// Target cloud with its search index and optional surface area `Â`.
#[derive(Debug, Clone)]
pub struct LossTarget {
    points: Vec<Vec3>,
    index: KdIndex,
    area: Option<f64>,
}

impl LossTarget {
    pub fn new(points: Vec<Vec3>, area: Option<f64>) -> Result<Self, LossError> {
        if let Some(a) = area {
            if !(a > 0.0) {
                return Err(LossError::InvalidTargetArea(a));
            }
        }
        let index = KdIndex::build(&points).map_err(|_| LossError::Empty("target cloud"))?;
        Ok(Self {
            points,
            index,
            area,
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn index(&self) -> &KdIndex {
        &self.index
    }

    pub fn area(&self) -> Option<f64> {
        self.area
    }
}

/// Tape variables for one patch: positions and their UV derivatives.
#[derive(Debug, Clone, Default)]
pub struct PatchVars {
    pub points: Vec<[Var; 3]>,
    pub du: Vec<[Var; 3]>,
    pub dv: Vec<[Var; 3]>,
}

impl PatchVars {
    /// Registers every coordinate as a differentiable leaf.
    pub fn register(tape: &mut Tape, points: &[Vec3], du: &[Vec3], dv: &[Vec3]) -> Self {
        let mut reg = |xs: &[Vec3]| xs.iter().map(|x| x.map(|c| tape.param(c))).collect();
        Self {
            points: reg(points),
            du: reg(du),
            dv: reg(dv),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossOptions {
    /// Let gradients flow through the `A⁽ᵏ⁾` normalizers of the conformal
    /// terms. Off by default: the normalizer is then a per-step constant.
    pub area_normalizer_grad: bool,
}

/// Result of [`build_loss`].
#[derive(Debug, Clone)]
pub struct TapedLoss {
    pub total: Var,
    pub report: LossReport,
    /// Per-patch area estimates `A⁽ᵏ⁾`.
    pub areas: Vec<f64>,
}

/// Records the complete loss for one shape on `tape`.
pub fn build_loss(
    tape: &mut Tape,
    patches: &[PatchVars],
    target: &LossTarget,
    w: &LossWeights,
    opts: LossOptions,
) -> Result<TapedLoss, LossError> {
    w.validate()?;
    if patches.is_empty() || patches.iter().any(PatchVars::is_empty) {
        return Err(LossError::Empty("every patch needs at least one point"));
    }
    if patches.iter().any(|p| p.len() != patches[0].len()) {
        return Err(LossError::UnequalPatchSizes);
    }
    if w.alpha_ol > 0.0 && target.area.is_none() {
        return Err(LossError::MissingTargetArea);
    }

    // Chamfer, with the minimizing pairs frozen at their current assignment.
    let pred_vars: Vec<[Var; 3]> = patches
        .iter()
        .flat_map(|p| p.points.iter().copied())
        .collect();
    let pred_vals: Vec<Vec3> = pred_vars.iter().map(|v| v.map(|c| tape.value(c))).collect();
    let pairs = chamfer_pairs(&pred_vals, &target.points, &target.index)?;
    let fwd: Vec<Var> = pred_vars
        .iter()
        .zip(&pairs.forward)
        .map(|(p, &(j, _))| tape.sq_dist_to(p, target.points[j]))
        .collect();
    let bwd: Vec<Var> = target
        .points
        .iter()
        .zip(&pairs.backward)
        .map(|(&q, &(i, _))| tape.sq_dist_to(&pred_vars[i], q))
        .collect();
    let fwd = tape.scaled_sum(&fwd, 1.0 / fwd.len() as f64);
    let bwd = tape.scaled_sum(&bwd, 1.0 / bwd.len() as f64);
    let chd = tape.add(fwd, bwd);

    // Metric tensors and area elements.
    let n_total = pred_vars.len() as f64;
    let mut metric: Vec<Vec<[Var; 3]>> = Vec::with_capacity(patches.len());
    let mut area_vars = Vec::with_capacity(patches.len());
    for p in patches {
        let mut m = Vec::with_capacity(p.len());
        let mut elems = Vec::with_capacity(p.len());
        for (fu, fv) in p.du.iter().zip(&p.dv) {
            let e = tape.dot3(fu, fu);
            let f = tape.dot3(fu, fv);
            let g = tape.dot3(fv, fv);
            let eg = tape.mul(e, g);
            let ff = tape.square(f);
            let det = tape.sub(eg, ff);
            elems.push(tape.sqrt_floored(det, DEGENERACY_EPS));
            m.push([e, f, g]);
        }
        area_vars.push(tape.scaled_sum(&elems, 1.0 / p.len() as f64));
        metric.push(m);
    }
    let areas: Vec<f64> = area_vars.iter().map(|&a| tape.value(a)).collect();
    // with the deformation term off a collapsed patch is allowed; it then
    // drops out of the (unweighted) conformal terms
    if w.alpha_def > 0.0 {
        check_areas(&areas)?;
    }

    let es: Vec<Var> = metric.iter().flatten().map(|m| m[0]).collect();
    let gs: Vec<Var> = metric.iter().flatten().map(|m| m[2]).collect();
    let mu_e = tape.scaled_sum(&es, 1.0 / n_total);
    let mu_g = tape.scaled_sum(&gs, 1.0 / n_total);
    let mut terms: [Vec<Var>; 4] = Default::default();
    for (m, &a) in metric.iter().zip(&area_vars) {
        if !(tape.value(a) > DEGENERACY_EPS) {
            continue;
        }
        let inv_a = if opts.area_normalizer_grad {
            let one = tape.constant(1.0);
            tape.div(one, a).expect("area checked positive")
        } else {
            tape.constant(1.0 / tape.value(a))
        };
        for &[e, f, g] in m {
            let de = tape.sub(e, mu_e);
            let dg = tape.sub(g, mu_g);
            let st = tape.sub(e, g);
            for (slot, x) in [de, dg, f, st].into_iter().enumerate() {
                let r = tape.mul(x, inv_a);
                terms[slot].push(tape.square(r));
            }
        }
    }
    let [l_e, l_g, l_sk, l_str] = terms.map(|t| tape.scaled_sum(&t, 1.0 / n_total));
    let l_def = tape.linear_combination(&[
        (l_e, w.alpha_e),
        (l_g, w.alpha_g),
        (l_sk, w.alpha_sk),
        (l_str, w.alpha_str),
    ]);

    let l_ol = match target.area {
        Some(gt_area) => {
            let sum = tape.sum(&area_vars);
            let excess = tape.add_const(sum, -gt_area);
            let hinge = tape.relu(excess);
            tape.square(hinge)
        }
        None => tape.constant(0.0),
    };
    let total = tape.linear_combination(&[(chd, 1.0), (l_def, w.alpha_def), (l_ol, w.alpha_ol)]);

    let report = LossReport {
        chd: tape.value(chd),
        l_e: tape.value(l_e),
        l_g: tape.value(l_g),
        l_sk: tape.value(l_sk),
        l_str: tape.value(l_str),
        l_def: tape.value(l_def),
        l_ol: tape.value(l_ol),
        total: tape.value(total),
    };
    Ok(TapedLoss {
        total,
        report,
        areas,
    })
}
