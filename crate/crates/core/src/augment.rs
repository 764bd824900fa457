//! Grayscale transform kernels, augmentation policies over the restricted
//! op set, a seeded distribution-matching policy search, class balancing,
//! and edge-case augmentation.
//!
//! Geometric kernels inverse-map each output pixel and sample bilinearly
//! with constant white fill (glyphs are dark-on-white; edge replication
//! would smear strokes). Signed magnitude ranges put the identity at
//! magnitude 0.5 so the search space contains it continuously.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::contrastive::{embed_images, EncoderParams};
use crate::dataset::{Dataset, GrayImage, LabeledSample, Provenance};
use crate::math;
use crate::projection::Embedding;
use crate::rng::Rng;
use crate::{Error, Result};

/// Fixed magnitude ranges. Magnitude 0.5 maps to the neutral point of every
/// signed range; Gaussian noise is one-sided with sigma = magnitude * max.
pub const ROTATE_MAX_RADIANS: f64 = core::f64::consts::PI / 6.0; // +-30 degrees
pub const SHEAR_MAX_SLOPE: f64 = 0.3;
pub const TRANSLATE_MAX_FRACTION: f64 = 0.2; // of the image side
pub const ZOOM_MIN: f64 = 0.7;
pub const ZOOM_MAX: f64 = 1.3;
pub const NOISE_MAX_SIGMA: f64 = 0.15; // on the [0, 1] pixel scale

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AugKind {
    ShearX,
    TranslateX,
    TranslateY,
    Rotate,
    Zoom,
    Invert,
    GaussianNoise,
}

/// One transform with a normalized magnitude in [0, 1] (ignored by invert).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AugOp {
    pub kind: AugKind,
    pub magnitude: f64,
}

impl AugOp {
    pub fn new(kind: AugKind, magnitude: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&magnitude) {
            return Err(Error::invalid("magnitude must lie in [0, 1]"));
        }
        Ok(AugOp { kind, magnitude })
    }
}

/// Maps a normalized magnitude to [-1, 1] with 0.5 at zero.
#[inline]
fn signed(magnitude: f64) -> f64 {
    2.0 * (magnitude - 0.5)
}

fn tap(img: &GrayImage, x: i64, y: i64) -> f64 {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        f64::from(img.get(x as usize, y as usize))
    } else {
        255.0
    }
}

fn sample_bilinear(img: &GrayImage, sx: f64, sy: f64) -> f64 {
    let x0 = math::floor(sx);
    let y0 = math::floor(sy);
    let fx = sx - x0;
    let fy = sy - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    (1.0 - fx) * (1.0 - fy) * tap(img, xi, yi)
        + fx * (1.0 - fy) * tap(img, xi + 1, yi)
        + (1.0 - fx) * fy * tap(img, xi, yi + 1)
        + fx * fy * tap(img, xi + 1, yi + 1)
}

/// Warps via the inverse map `src(x, y)`, sampling bilinearly with white fill.
fn warp<F: Fn(f64, f64) -> (f64, f64)>(img: &GrayImage, inverse: F) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inverse(x as f64, y as f64);
            pixels.push(math::to_intensity(sample_bilinear(img, sx, sy)));
        }
    }
    GrayImage::new(w, h, pixels).expect("warp preserves dimensions")
}

/// Shift by (dx, dy) pixels; positive dx moves content rightward.
pub fn translate_kernel(img: &GrayImage, dx: f64, dy: f64) -> GrayImage {
    warp(img, |x, y| (x - dx, y - dy))
}

/// Rotation about the image center, counterclockwise for positive angles.
pub fn rotate_kernel(img: &GrayImage, radians: f64) -> GrayImage {
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    let (s, c) = (math::sin(radians), math::cos(radians));
    warp(img, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + c * dx + s * dy, cy - s * dx + c * dy)
    })
}

/// Horizontal shear: rows slide by `slope * (y - cy)` pixels.
pub fn shear_x_kernel(img: &GrayImage, slope: f64) -> GrayImage {
    let cy = (img.height() as f64 - 1.0) / 2.0;
    warp(img, |x, y| (x - slope * (y - cy), y))
}

/// Scale about the center; `scale` > 1 zooms in.
pub fn zoom_kernel(img: &GrayImage, scale: f64) -> GrayImage {
    assert!(scale > 0.0, "zoom scale must be positive");
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    warp(img, |x, y| (cx + (x - cx) / scale, cy + (y - cy) / scale))
}

/// v -> 255 - v.
pub fn invert_kernel(img: &GrayImage) -> GrayImage {
    let pixels: Vec<u8> = img.pixels().iter().map(|&v| 255 - v).collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Seeded additive Gaussian noise with std `sigma` on the [0, 1] scale.
pub fn gaussian_noise_kernel(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let mut rng = Rng::derive(seed, 0x6e6f_697365);
    let pixels: Vec<u8> = img
        .pixels()
        .iter()
        .map(|&v| math::to_intensity(f64::from(v) + 255.0 * sigma * rng.normal()))
        .collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Applies one op at its magnitude-mapped strength. Only Gaussian noise
/// consumes the seed.
pub fn apply_op(img: &GrayImage, op: &AugOp, seed: u64) -> GrayImage {
    let side = img.width().max(img.height()) as f64;
    match op.kind {
        AugKind::ShearX => shear_x_kernel(img, signed(op.magnitude) * SHEAR_MAX_SLOPE),
        AugKind::TranslateX => {
            translate_kernel(img, signed(op.magnitude) * TRANSLATE_MAX_FRACTION * side, 0.0)
        }
        AugKind::TranslateY => {
            translate_kernel(img, 0.0, signed(op.magnitude) * TRANSLATE_MAX_FRACTION * side)
        }
        AugKind::Rotate => rotate_kernel(img, signed(op.magnitude) * ROTATE_MAX_RADIANS),
        AugKind::Zoom => zoom_kernel(img, ZOOM_MIN + op.magnitude * (ZOOM_MAX - ZOOM_MIN)),
        AugKind::Invert => invert_kernel(img),
        AugKind::GaussianNoise => gaussian_noise_kernel(img, op.magnitude * NOISE_MAX_SIGMA, seed),
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyStage {
    pub op: AugOp,
    pub probability: f64,
}

/// Up to two (op, probability) stages applied in order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubPolicy {
    pub stages: Vec<PolicyStage>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Policy {
    pub sub_policies: Vec<SubPolicy>,
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        if self.sub_policies.is_empty() {
            return Err(Error::invalid("a policy needs at least one sub-policy"));
        }
        for sp in &self.sub_policies {
            if sp.stages.is_empty() || sp.stages.len() > 2 {
                return Err(Error::invalid("sub-policies carry 1 or 2 stages"));
            }
            for stage in &sp.stages {
                if !(0.0..=1.0).contains(&stage.probability) {
                    return Err(Error::invalid("stage probability must lie in [0, 1]"));
                }
                if !(0.0..=1.0).contains(&stage.op.magnitude) {
                    return Err(Error::invalid("stage magnitude must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Single-stage policy applying `op` unconditionally.
    pub fn single(op: AugOp) -> Policy {
        Policy {
            sub_policies: alloc::vec![SubPolicy {
                stages: alloc::vec![PolicyStage {
                    op,
                    probability: 1.0,
                }],
            }],
        }
    }
}

/// One uniformly chosen sub-policy; each stage fires with its probability.
/// Fully deterministic for a fixed seed.
pub fn apply_policy(img: &GrayImage, policy: &Policy, seed: u64) -> Result<GrayImage> {
    policy.validate()?;
    let mut rng = Rng::derive(seed, 0x706f_6c69_6379);
    let sp = &policy.sub_policies[rng.below(policy.sub_policies.len())];
    let mut out = img.clone();
    for stage in &sp.stages {
        let fire = rng.chance(stage.probability);
        let op_seed = rng.next_u64();
        if fire {
            out = apply_op(&out, &stage.op, op_seed);
        }
    }
    Ok(out)
}

/// Diagonal-covariance Frechet distance between two feature sets:
/// ||mu_a - mu_b||^2 + sum_k (sqrt(v_ak) - sqrt(v_bk))^2 with per-dimension
/// population variances.
pub fn frechet_diag(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("feature sets must be nonempty"));
    }
    if a.dim() != b.dim() {
        return Err(Error::InvalidParam(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let d = a.dim();
    let stats = |e: &Embedding| -> (Vec<f64>, Vec<f64>) {
        let n = e.len() as f64;
        let mut mean = alloc::vec![0.0; d];
        for row in e.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x / n;
            }
        }
        let mut var = alloc::vec![0.0; d];
        for row in e.rows() {
            for k in 0..d {
                let diff = row[k] - mean[k];
                var[k] += diff * diff / n;
            }
        }
        (mean, var)
    };
    let (mu_a, var_a) = stats(a);
    let (mu_b, var_b) = stats(b);
    let mut total = 0.0;
    for k in 0..d {
        let dm = mu_a[k] - mu_b[k];
        let dv = math::sqrt(var_a[k]) - math::sqrt(var_b[k]);
        total += dm * dm + dv * dv;
    }
    Ok(total)
}

/// The policy-search op set: the restricted grayscale space without zoom
/// (zoom stays available to pair and edge-case augmentation).
pub const SEARCH_OPS: [AugKind; 6] = [
    AugKind::ShearX,
    AugKind::Invert,
    AugKind::TranslateX,
    AugKind::TranslateY,
    AugKind::Rotate,
    AugKind::GaussianNoise,
];

/// Uniform random policy over [`SEARCH_OPS`]: `sub_policies` sub-policies
/// of 1-2 stages with uniform probabilities and magnitudes.
pub fn random_search_policy(rng: &mut Rng, sub_policies: usize) -> Policy {
    let sub = (0..sub_policies)
        .map(|_| {
            let stages = (0..1 + rng.below(2))
                .map(|_| PolicyStage {
                    op: AugOp {
                        kind: SEARCH_OPS[rng.below(SEARCH_OPS.len())],
                        magnitude: rng.next_f64(),
                    },
                    probability: rng.next_f64(),
                })
                .collect();
            SubPolicy { stages }
        })
        .collect();
    Policy { sub_policies: sub }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CandidateScore {
    /// Mean absolute pixel perturbation on the [0, 1] scale.
    pub delta: f64,
    /// Feature-space distance between originals and augmented probes.
    pub frechet: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicySearch {
    pub policy: Policy,
    pub chosen: usize,
    pub candidates: Vec<CandidateScore>,
    /// Set when no candidate met the diversity floor and the max-delta
    /// candidate was returned instead.
    pub fallback: bool,
}

pub const DEFAULT_SEARCH_SUB_POLICIES: usize = 5;
pub const DEFAULT_PROBE_SIZE: usize = 128;
pub const DEFAULT_DIVERSITY_FLOOR: f64 = 0.02;

/// Samples `budget` random policies over the restricted op set, scores each
/// by encoder-feature distance between a seeded probe subset and its
/// augmented copies, and returns the minimum-distance policy among those
/// whose mean pixel perturbation reaches `diversity_floor`. The floor keeps
/// the near-identity policy from winning the distance minimization.
pub fn search_policy(
    ds: &Dataset,
    encoder: &EncoderParams,
    budget: usize,
    diversity_floor: f64,
    seed: u64,
) -> Result<PolicySearch> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot search policies on an empty dataset"));
    }
    if budget < 1 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    let mut rng = Rng::derive(seed, 0x6661_61);
    let probe_count = DEFAULT_PROBE_SIZE.min(ds.len());
    let probe_idx = rng.sample_indices(ds.len(), probe_count);
    let probe: Vec<GrayImage> = probe_idx
        .iter()
        .map(|&i| ds.samples()[i].image.clone())
        .collect();
    let base_feats = embed_images(encoder, &probe)?;
    let pixel_count = (probe[0].width() * probe[0].height() * probe.len()) as f64;
    let mut candidates = Vec::with_capacity(budget);
    let mut policies = Vec::with_capacity(budget);
    for c in 0..budget {
        let policy = random_search_policy(&mut rng, DEFAULT_SEARCH_SUB_POLICIES);
        let mut augmented = Vec::with_capacity(probe.len());
        let mut abs_diff = 0.0;
        for (p, img) in probe.iter().enumerate() {
            let out = apply_policy(img, &policy, seed ^ ((c as u64) << 32 | p as u64))?;
            for (a, b) in img.pixels().iter().zip(out.pixels()) {
                abs_diff += math::abs(f64::from(*a) - f64::from(*b));
            }
            augmented.push(out);
        }
        let delta = abs_diff / (255.0 * pixel_count);
        let aug_feats = embed_images(encoder, &augmented)?;
        let frechet = frechet_diag(&base_feats, &aug_feats)?;
        candidates.push(CandidateScore { delta, frechet });
        policies.push(policy);
    }
    let chosen = candidates
        .iter()
        .enumerate()
        .filter(|(_, s)| s.delta >= diversity_floor)
        .min_by(|(_, a), (_, b)| a.frechet.partial_cmp(&b.frechet).expect("finite"))
        .map(|(i, _)| i);
    let (chosen, fallback) = match chosen {
        Some(i) => (i, false),
        None => {
            let i = candidates
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.delta.partial_cmp(&b.delta).expect("finite"))
                .map(|(i, _)| i)
                .expect("budget >= 1");
            (i, true)
        }
    };
    Ok(PolicySearch {
        policy: policies[chosen].clone(),
        chosen,
        candidates,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceResult {
    pub dataset: Dataset,
    /// (new id, source id) lineage pairs for every appended sample.
    pub added: Vec<(u64, u64)>,
    /// Per-class target count the fill aimed for.
    pub target: usize,
    /// Set when the budget cap stopped the fill early.
    pub capped: bool,
}

/// Fills class deficits with policy-augmented copies of seeded-cycled class
/// members up to target = min(max class count, budget_cap / K). Never
/// removes a sample; stops appending the moment N reaches `budget_cap`.
pub fn balance_classes(
    ds: &Dataset,
    policy: &Policy,
    budget_cap: usize,
    seed: u64,
) -> Result<BalanceResult> {
    if budget_cap < ds.len() {
        return Err(Error::InvalidParam(format!(
            "budget cap {} is below the current sample count {}",
            budget_cap,
            ds.len()
        )));
    }
    policy.validate()?;
    let k = ds.num_classes();
    let counts = crate::dataset::class_histogram(ds);
    let max_count = counts.iter().cloned().max().unwrap_or(0);
    let target = max_count.min(budget_cap / k);
    let mut samples = ds.samples().to_vec();
    let mut added = Vec::new();
    let mut next_id = ds.next_free_id();
    let mut capped = false;
    let mut rng = Rng::derive(seed, 0x6261_6c61_6e63);
    'classes: for class in 0..k {
        if counts[class] == 0 || counts[class] >= target {
            continue;
        }
        let mut members: Vec<usize> = ds
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut members);
        let deficit = target - counts[class];
        for n in 0..deficit {
            if samples.len() >= budget_cap {
                capped = true;
                break 'classes;
            }
            let source = &ds.samples()[members[n % members.len()]];
            let image = apply_policy(&source.image, policy, rng.next_u64())?;
            samples.push(LabeledSample {
                id: next_id,
                image,
                label: source.label,
                provenance: Provenance::Augmented,
                true_label: source.true_label,
            });
            added.push((next_id, source.id));
            next_id += 1;
        }
    }
    let dataset = Dataset::new(ds.classes().to_vec(), samples, ds.role())?;
    Ok(BalanceResult {
        dataset,
        added,
        target,
        capped,
    })
}

/// The concentrated edge-case op set.
pub const EDGE_OPS: [AugKind; 4] = [
    AugKind::Invert,
    AugKind::TranslateX, // stands for "shift"; the axis is re-drawn per copy
    AugKind::Zoom,
    AugKind::Rotate,
];

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeAugmentResult {
    pub dataset: Dataset,
    pub added: Vec<(u64, u64)>,
}

/// Appends exactly four augmented copies of every edge-case sample: one per
/// op in {invert, shift, zoom, rotate} with seeded magnitudes.
pub fn edge_augment(ds: &Dataset, edge_ids: &BTreeSet<u64>, seed: u64) -> Result<EdgeAugmentResult> {
    let known: BTreeSet<u64> = ds.samples().iter().map(|s| s.id).collect();
    if let Some(unknown) = edge_ids.iter().find(|id| !known.contains(id)) {
        return Err(Error::InvalidParam(format!(
            "edge id {unknown} is not in the dataset"
        )));
    }
    let mut samples = ds.samples().to_vec();
    let mut added = Vec::new();
    let mut next_id = ds.next_free_id();
    let mut rng = Rng::derive(seed, 0x6564_6765);
    for s in ds.samples() {
        if !edge_ids.contains(&s.id) {
            continue;
        }
        for kind in EDGE_OPS {
            let kind = match kind {
                AugKind::TranslateX if rng.chance(0.5) => AugKind::TranslateY,
                other => other,
            };
            let op = AugOp {
                kind,
                magnitude: rng.next_f64(),
            };
            let image = apply_op(&s.image, &op, rng.next_u64());
            samples.push(LabeledSample {
                id: next_id,
                image,
                label: s.label,
                provenance: Provenance::Augmented,
                true_label: s.true_label,
            });
            added.push((next_id, s.id));
            next_id += 1;
        }
    }
    let dataset = Dataset::new(ds.classes().to_vec(), samples, ds.role())?;
    Ok(EdgeAugmentResult { dataset, added })
}
