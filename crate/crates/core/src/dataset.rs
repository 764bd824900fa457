//! Labeled grayscale datasets: the single source of truth for sample
//! identity and provenance through the pipeline. Datasets are immutable
//! after construction; every operation here is a pure seeded function that
//! returns a fresh dataset.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;
use crate::{Error, Result};

/// Row-major 8-bit grayscale pixel grid.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidParam(format!(
                "pixel buffer length {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Constant-intensity image.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Pixels promoted to the [0, 1] real scale (black 0.0, white 1.0).
    pub fn to_reals(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| crate::pixel_to_real(v)).collect()
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|&v| f64::from(v)).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Lineage tag carried by every sample so pipeline edits stay auditable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Provenance {
    Original,
    Synthetic,
    Augmented,
    Relabeled,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Synthetic => "synthetic",
            Provenance::Augmented => "augmented",
            Provenance::Relabeled => "relabeled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Provenance::Original),
            "synthetic" => Ok(Provenance::Synthetic),
            "augmented" => Ok(Provenance::Augmented),
            "relabeled" => Ok(Provenance::Relabeled),
            other => Err(Error::InvalidParam(format!("unknown provenance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledSample {
    pub id: u64,
    pub image: GrayImage,
    pub label: usize,
    pub provenance: Provenance,
    /// Ground-truth class, present on synthetic data only; survives label
    /// noise and relabeling so recovery can be scored.
    pub true_label: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    classes: Vec<String>,
    samples: Vec<LabeledSample>,
    role: Role,
}

impl Dataset {
    /// Validates the full invariant set: K >= 2, nonempty samples, uniform
    /// image dimensions, in-range labels, unique ids.
    pub fn new(classes: Vec<String>, samples: Vec<LabeledSample>, role: Role) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::invalid("a dataset needs at least two classes"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("a dataset needs at least one sample"));
        }
        let k = classes.len();
        let (w, h) = (samples[0].image.width(), samples[0].image.height());
        let mut ids: Vec<u64> = Vec::with_capacity(samples.len());
        for s in &samples {
            if s.image.width() != w || s.image.height() != h {
                return Err(Error::InvalidParam(format!(
                    "sample {} has dimensions {}x{}, expected {}x{}",
                    s.id,
                    s.image.width(),
                    s.image.height(),
                    w,
                    h
                )));
            }
            if s.label >= k {
                return Err(Error::InvalidParam(format!(
                    "sample {} label {} out of range for {} classes",
                    s.id, s.label, k
                )));
            }
            if let Some(t) = s.true_label {
                if t >= k {
                    return Err(Error::InvalidParam(format!(
                        "sample {} true_label {} out of range for {} classes",
                        s.id, t, k
                    )));
                }
            }
            ids.push(s.id);
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("sample ids must be unique"));
        }
        Ok(Dataset {
            classes,
            samples,
            role,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Same data under a different role tag (roles are not persisted).
    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Uniform (width, height) shared by all samples.
    pub fn dims(&self) -> (usize, usize) {
        let img = &self.samples[0].image;
        (img.width(), img.height())
    }

    pub fn sample_ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn index_of_id(&self, id: u64) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    /// Smallest id strictly greater than every existing id.
    pub fn next_free_id(&self) -> u64 {
        self.samples.iter().map(|s| s.id).max().map_or(0, |m| m + 1)
    }

    /// Same data with every id shifted by `offset`; keeps id spaces of
    /// independently generated datasets disjoint.
    pub fn offset_ids(&self, offset: u64) -> Dataset {
        let samples = self
            .samples
            .iter()
            .map(|s| LabeledSample {
                id: s.id + offset,
                ..s.clone()
            })
            .collect();
        Dataset {
            classes: self.classes.clone(),
            samples,
            role: self.role,
        }
    }
}

/// Recipe for the synthetic stroke-count glyph corpus: class `c` renders as
/// `c + 1` dark vertical strokes on a white canvas with seeded jitter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub image_side: usize,
    /// Fraction in [0, 1] scaling positional, thickness, and rotation jitter.
    pub stroke_jitter: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        if self.per_class < 1 {
            return Err(Error::invalid("per_class must be at least 1"));
        }
        if self.image_side < 16 {
            return Err(Error::invalid("image_side must be at least 16"));
        }
        if !(0.0..=1.0).contains(&self.stroke_jitter) {
            return Err(Error::invalid("stroke_jitter must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Deterministically renders the synthetic glyph corpus described by `spec`.
///
/// Every sample carries `provenance = Synthetic` and `true_label == label`,
/// which is what makes downstream noise-recovery scoring possible.
pub fn synth_glyphs(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let side = spec.image_side;
    let classes: Vec<String> = (0..spec.num_classes).map(|c| format!("c{c}")).collect();
    let mut samples = Vec::with_capacity(spec.num_classes * spec.per_class);
    let mut id = 0u64;
    for class in 0..spec.num_classes {
        for rep in 0..spec.per_class {
            let mut rng = Rng::derive(spec.seed, (class as u64) << 32 | rep as u64);
            let image = render_glyph(side, class + 1, spec.stroke_jitter, &mut rng)?;
            samples.push(LabeledSample {
                id,
                image,
                label: class,
                provenance: Provenance::Synthetic,
                true_label: Some(class),
            });
            id += 1;
        }
    }
    Dataset::new(classes, samples, Role::Train)
}

/// One glyph: `strokes` near-vertical dark bars with jittered position,
/// thickness, and tilt, soft-edged so boundaries land on computed grays.
fn render_glyph(side: usize, strokes: usize, jitter: f64, rng: &mut Rng) -> Result<GrayImage> {
    let s = side as f64;
    let mut pixels = vec![255u8; side * side];
    let base_half_w = (s / 24.0).max(0.6);
    let y_top = 0.12 * s;
    let y_bot = 0.88 * s;
    let cy = 0.5 * (y_top + y_bot);
    let half_len = 0.5 * (y_bot - y_top);
    let slot = s / (strokes as f64 + 1.0);
    for k in 0..strokes {
        let cx = slot * (k as f64 + 1.0) + jitter * slot * 0.4 * (rng.next_f64() * 2.0 - 1.0);
        let half_w = base_half_w * (1.0 + jitter * 0.6 * (rng.next_f64() * 2.0 - 1.0));
        // Tilt up to ~10 degrees at full jitter.
        let angle = jitter * 0.17 * (rng.next_f64() * 2.0 - 1.0);
        let (sin_a, cos_a) = (math::sin(angle), math::cos(angle));
        for py in 0..side {
            for px in 0..side {
                let dx = px as f64 + 0.5 - cx;
                let dy = py as f64 + 0.5 - cy;
                // Distance along and across the stroke axis.
                let along = dx * sin_a + dy * cos_a;
                let across = dx * cos_a - dy * sin_a;
                if math::abs(along) > half_len {
                    continue;
                }
                // 1px soft edge: full dark inside, linear ramp outside.
                let overshoot = math::abs(across) - half_w;
                let coverage = if overshoot <= 0.0 {
                    1.0
                } else if overshoot >= 1.0 {
                    0.0
                } else {
                    1.0 - overshoot
                };
                if coverage > 0.0 {
                    let idx = py * side + px;
                    let dark = math::to_intensity(255.0 * (1.0 - coverage));
                    if dark < pixels[idx] {
                        pixels[idx] = dark;
                    }
                }
            }
        }
    }
    GrayImage::new(side, side, pixels)
}

/// Flips the labels of exactly `round(rho * N)` seeded samples to a
/// uniformly random different class. `true_label` is untouched.
pub fn inject_label_noise(ds: &Dataset, rho: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("rho must lie in [0, 1]"));
    }
    if ds.role() != Role::Train {
        return Err(Error::invalid("label noise is only injected into train splits"));
    }
    let n = ds.len();
    let k = ds.num_classes();
    let count = math::round_half_up(rho * n as f64) as usize;
    let mut rng = Rng::derive(seed, 0x6c61_62656c);
    let mut chosen = rng.sample_indices(n, count);
    chosen.sort_unstable();
    let mut samples = ds.samples().to_vec();
    for idx in chosen {
        let old = samples[idx].label;
        let draw = rng.below(k - 1);
        samples[idx].label = if draw >= old { draw + 1 } else { draw };
    }
    Dataset::new(ds.classes().to_vec(), samples, ds.role())
}

/// Adds seeded Gaussian pixel noise (std `sigma` on the [0, 1] scale) to
/// exactly `round(frac * N)` samples, clamping back to [0, 255].
pub fn inject_pixel_noise(ds: &Dataset, frac: f64, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::invalid("frac must lie in [0, 1]"));
    }
    if sigma < 0.0 {
        return Err(Error::invalid("sigma must be nonnegative"));
    }
    let n = ds.len();
    let count = math::round_half_up(frac * n as f64) as usize;
    let mut rng = Rng::derive(seed, 0x7069_78656c);
    let mut chosen = rng.sample_indices(n, count);
    chosen.sort_unstable();
    let mut samples = ds.samples().to_vec();
    for idx in chosen {
        let img = &samples[idx].image;
        let noisy: Vec<u8> = img
            .pixels()
            .iter()
            .map(|&v| math::to_intensity(f64::from(v) + 255.0 * sigma * rng.normal()))
            .collect();
        samples[idx].image = GrayImage::new(img.width(), img.height(), noisy)?;
    }
    Dataset::new(ds.classes().to_vec(), samples, ds.role())
}

/// Per-class sample counts; always sums to N.
pub fn class_histogram(ds: &Dataset) -> Vec<usize> {
    let mut counts = vec![0usize; ds.num_classes()];
    for s in ds.samples() {
        counts[s.label] += 1;
    }
    counts
}

/// Block-average pooling by an integer factor; values rounded nearest, ties
/// up, computed in exact integer arithmetic.
pub fn downscale(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 || img.width() % factor != 0 || img.height() % factor != 0 {
        return Err(Error::InvalidParam(format!(
            "factor {} does not divide {}x{}",
            factor,
            img.width(),
            img.height()
        )));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width() / factor, img.height() / factor);
    let block = (factor * factor) as u32;
    let mut pixels = Vec::with_capacity(w * h);
    for by in 0..h {
        for bx in 0..w {
            let mut sum = 0u32;
            for dy in 0..factor {
                for dx in 0..factor {
                    sum += u32::from(img.get(bx * factor + dx, by * factor + dy));
                }
            }
            // floor(sum/block + 1/2) with ties up, in integers.
            pixels.push(((2 * sum + block) / (2 * block)) as u8);
        }
    }
    GrayImage::new(w, h, pixels)
}

/// Applies [`downscale`] to every sample.
pub fn downscale_dataset(ds: &Dataset, factor: usize) -> Result<Dataset> {
    let samples = ds
        .samples()
        .iter()
        .map(|s| {
            Ok(LabeledSample {
                image: downscale(&s.image, factor)?,
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(ds.classes().to_vec(), samples, ds.role())
}

/// Smallest factor dividing both dimensions that brings them to at most
/// `max_side` pixels. Falls back to the full dimension (1x1 blocks are
/// always reachable since any side divides itself).
pub fn fit_factor(width: usize, height: usize, max_side: usize) -> usize {
    let mut factor = 1;
    while width / factor > max_side || height / factor > max_side {
        let mut next = factor + 1;
        while next <= width && (width % next != 0 || height % next != 0) {
            next += 1;
        }
        if next > width {
            return factor;
        }
        factor = next;
    }
    factor
}
