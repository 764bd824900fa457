//! Shared-weight (Siamese) encoder trained with a margin contrastive loss
//! on augmented pairs. The learned representation drives the cleansing
//! rules; pixel convention is black 0.0, white 1.0 throughout.

use alloc::vec;
use alloc::vec::Vec;

use crate::augment::{self, AugKind, AugOp};
use crate::dataset::{Dataset, GrayImage};
use crate::math;
use crate::mlp::{self, Dims};
use crate::projection::Embedding;
use crate::rng::Rng;
use crate::{Error, Result};

/// Encoder weights: the classifier layout with a linear output head mapping
/// hidden -> embed_dim (no softmax).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub theta: Vec<f64>,
}

impl EncoderParams {
    fn dims(&self) -> Dims {
        Dims {
            input: self.input_dim,
            hidden: self.hidden_dim,
            output: self.embed_dim,
        }
    }
}

/// A pair of independently augmented images and whether their source labels
/// agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub a: GrayImage,
    pub b: GrayImage,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiameseConfig {
    pub margin: f64,
    pub pairs_per_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for SiameseConfig {
    fn default() -> Self {
        SiameseConfig {
            margin: 1.0,
            pairs_per_epoch: 256,
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.1,
            hidden_dim: 48,
            embed_dim: 16,
            seed: 0,
        }
    }
}

impl SiameseConfig {
    fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::invalid("margin must be positive"));
        }
        if self.pairs_per_epoch < 1 || self.batch_size < 1 {
            return Err(Error::invalid("pairs_per_epoch and batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.embed_dim < 2 || self.hidden_dim < 1 {
            return Err(Error::invalid("embed_dim must be >= 2 and hidden_dim >= 1"));
        }
        Ok(())
    }
}

/// Fresh Glorot-initialized encoder (zero biases), deterministic per seed.
pub fn init_encoder(cfg: &SiameseConfig, input_dim: usize) -> EncoderParams {
    let dims = Dims {
        input: input_dim,
        hidden: cfg.hidden_dim,
        output: cfg.embed_dim,
    };
    EncoderParams {
        input_dim,
        hidden_dim: cfg.hidden_dim,
        embed_dim: cfg.embed_dim,
        theta: mlp::init(dims, cfg.seed),
    }
}

/// The pair-augmentation op set: shear, inversion, shift, rotation, zoom,
/// Gaussian noise. Shift resolves to a horizontal or vertical translation
/// with a seeded coin flip.
pub const PAIR_OPS: [AugKind; 6] = [
    AugKind::ShearX,
    AugKind::Invert,
    AugKind::TranslateX,
    AugKind::Rotate,
    AugKind::Zoom,
    AugKind::GaussianNoise,
];

fn pair_transform(img: &GrayImage, rng: &mut Rng) -> GrayImage {
    let mut kind = PAIR_OPS[rng.below(PAIR_OPS.len())];
    if kind == AugKind::TranslateX && rng.chance(0.5) {
        kind = AugKind::TranslateY;
    }
    let op = AugOp {
        kind,
        magnitude: rng.next_f64(),
    };
    augment::apply_op(img, &op, rng.next_u64())
}

/// Seeded pair stream plus the classes that could not contribute positive
/// pairs (fewer than two samples).
#[derive(Debug, Clone)]
pub struct PairGen {
    pub pairs: Vec<Pair>,
    pub skipped_classes: Vec<usize>,
}

/// Alternating positive/negative pairs (strict 50/50 for even counts), each
/// member independently transformed by one uniformly chosen pair op with a
/// seeded magnitude.
pub fn make_pairs(ds: &Dataset, cfg: &SiameseConfig, seed: u64) -> Result<PairGen> {
    cfg.validate()?;
    let k = ds.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, s) in ds.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }
    let positive_classes: Vec<usize> = (0..k).filter(|&c| by_class[c].len() >= 2).collect();
    let skipped_classes: Vec<usize> = (0..k)
        .filter(|&c| !by_class[c].is_empty() && by_class[c].len() < 2)
        .collect();
    let nonempty: Vec<usize> = (0..k).filter(|&c| !by_class[c].is_empty()).collect();
    if positive_classes.is_empty() {
        return Err(Error::invalid("no class has two samples; cannot form positive pairs"));
    }
    if nonempty.len() < 2 {
        return Err(Error::invalid("need two nonempty classes for negative pairs"));
    }
    let mut rng = Rng::derive(seed, 0x7061_6972);
    let mut pairs = Vec::with_capacity(cfg.pairs_per_epoch);
    for n in 0..cfg.pairs_per_epoch {
        let same = n % 2 == 0;
        let (ia, ib) = if same {
            let class = positive_classes[rng.below(positive_classes.len())];
            let members = &by_class[class];
            let a = rng.below(members.len());
            let mut b = rng.below(members.len() - 1);
            if b >= a {
                b += 1;
            }
            (members[a], members[b])
        } else {
            let pos_a = rng.below(nonempty.len());
            let mut pos_b = rng.below(nonempty.len() - 1);
            if pos_b >= pos_a {
                pos_b += 1;
            }
            let (ca, cb) = (nonempty[pos_a], nonempty[pos_b]);
            let a = by_class[ca][rng.below(by_class[ca].len())];
            let b = by_class[cb][rng.below(by_class[cb].len())];
            (a, b)
        };
        pairs.push(Pair {
            a: pair_transform(&ds.samples()[ia].image, &mut rng),
            b: pair_transform(&ds.samples()[ib].image, &mut rng),
            same,
        });
    }
    Ok(PairGen {
        pairs,
        skipped_classes,
    })
}

/// Margin contrastive loss: d^2 for same-class pairs,
/// max(margin - d, 0)^2 for different-class pairs.
pub fn contrastive_loss(distance: f64, same: bool, margin: f64) -> Result<f64> {
    if distance < 0.0 {
        return Err(Error::invalid("distance must be nonnegative"));
    }
    if !(margin > 0.0) {
        return Err(Error::invalid("margin must be positive"));
    }
    Ok(if same {
        distance * distance
    } else {
        let slack = margin - distance;
        if slack > 0.0 {
            slack * slack
        } else {
            0.0
        }
    })
}

fn encode_one(enc: &EncoderParams, x: &[f64]) -> mlp::Forward {
    mlp::forward(enc.dims(), &enc.theta, x)
}

/// SGD on the mean contrastive loss over Euclidean distances of encoded
/// pairs; deterministic per seed. Zero epochs returns the initialization.
pub fn train_siamese(ds: &Dataset, cfg: &SiameseConfig) -> Result<EncoderParams> {
    cfg.validate()?;
    let (w, h) = ds.dims();
    let mut enc = init_encoder(cfg, w * h);
    let dims = enc.dims();
    for epoch in 0..cfg.epochs {
        let gen = make_pairs(ds, cfg, cfg.seed ^ ((epoch as u64) << 20))?;
        for batch in gen.pairs.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; enc.theta.len()];
            for pair in batch {
                let xa = pair.a.to_reals();
                let xb = pair.b.to_reals();
                let fa = encode_one(&enc, &xa);
                let fb = encode_one(&enc, &xb);
                let diff: Vec<f64> =
                    fa.output.iter().zip(&fb.output).map(|(a, b)| a - b).collect();
                let d = math::norm2(&diff);
                let dl_dd = if pair.same {
                    2.0 * d
                } else if d < cfg.margin {
                    -2.0 * (cfg.margin - d)
                } else {
                    0.0
                };
                if dl_dd == 0.0 || d == 0.0 {
                    continue;
                }
                let coef = scale * dl_dd / d;
                let d_out_a: Vec<f64> = diff.iter().map(|v| coef * v).collect();
                let d_out_b: Vec<f64> = diff.iter().map(|v| -coef * v).collect();
                mlp::backward(dims, &enc.theta, &xa, &fa, &d_out_a, &mut grad);
                mlp::backward(dims, &enc.theta, &xb, &fb, &d_out_b, &mut grad);
            }
            for (t, g) in enc.theta.iter_mut().zip(&grad) {
                *t -= cfg.learning_rate * g;
            }
        }
    }
    Ok(enc)
}

/// Encoder output rows for raw images, ids assigned by position.
pub fn embed_images(enc: &EncoderParams, images: &[GrayImage]) -> Result<Embedding> {
    let mut data = Vec::with_capacity(images.len() * enc.embed_dim);
    for img in images {
        if img.width() * img.height() != enc.input_dim {
            return Err(Error::invalid("image pixel count does not match encoder input"));
        }
        let fwd = encode_one(enc, &img.to_reals());
        data.extend_from_slice(&fwd.output);
    }
    Embedding::new((0..images.len() as u64).collect(), enc.embed_dim, data)
}

/// One embedding row per dataset sample, aligned to dataset order.
pub fn embed(enc: &EncoderParams, ds: &Dataset) -> Result<Embedding> {
    let (w, h) = ds.dims();
    if w * h != enc.input_dim {
        return Err(Error::invalid("dataset pixel count does not match encoder input"));
    }
    let mut data = Vec::with_capacity(ds.len() * enc.embed_dim);
    for s in ds.samples() {
        let fwd = encode_one(enc, &s.image.to_reals());
        data.extend_from_slice(&fwd.output);
    }
    Embedding::new(ds.sample_ids(), enc.embed_dim, data)
}

/// Mean contrastive loss of an encoder over a fixed pair set.
pub fn mean_pair_loss(enc: &EncoderParams, pairs: &[Pair], margin: f64) -> Result<f64> {
    let mut total = 0.0;
    for pair in pairs {
        let fa = encode_one(enc, &pair.a.to_reals());
        let fb = encode_one(enc, &pair.b.to_reals());
        let diff: Vec<f64> = fa.output.iter().zip(&fb.output).map(|(a, b)| a - b).collect();
        total += contrastive_loss(math::norm2(&diff), pair.same, margin)?;
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_glyphs, LabeledSample, Provenance, Role, SynthSpec};
    use alloc::format;
    use alloc::string::String;

    fn glyph_ds(per_class: usize, jitter: f64, seed: u64) -> Dataset {
        synth_glyphs(&SynthSpec {
            num_classes: 2,
            per_class,
            image_side: 16,
            stroke_jitter: jitter,
            seed,
        })
        .unwrap()
    }

    fn small_cfg() -> SiameseConfig {
        SiameseConfig {
            pairs_per_epoch: 64,
            epochs: 10,
            batch_size: 16,
            hidden_dim: 24,
            embed_dim: 8,
            learning_rate: 0.1,
            seed: 3,
            ..SiameseConfig::default()
        }
    }

    #[test]
    fn loss_documented_values() {
        assert_eq!(contrastive_loss(0.0, true, 1.0).unwrap(), 0.0);
        assert_eq!(contrastive_loss(0.0, false, 1.0).unwrap(), 1.0);
        assert!(math::abs(contrastive_loss(0.4, false, 1.0).unwrap() - 0.36) < 1e-12);
        assert!(contrastive_loss(-0.1, true, 1.0).is_err());
    }

    #[test]
    fn loss_zero_iff_satisfied() {
        for d in [0.0, 0.3, 0.9999, 1.0, 1.5] {
            let same = contrastive_loss(d, true, 1.0).unwrap();
            assert_eq!(same == 0.0, d == 0.0);
            let diff = contrastive_loss(d, false, 1.0).unwrap();
            assert_eq!(diff == 0.0, d >= 1.0);
        }
    }

    #[test]
    fn pairs_alternate_fifty_fifty() {
        let ds = glyph_ds(6, 0.2, 1);
        let mut cfg = small_cfg();
        cfg.pairs_per_epoch = 100;
        let gen = make_pairs(&ds, &cfg, 7).unwrap();
        assert_eq!(gen.pairs.len(), 100);
        assert_eq!(gen.pairs.iter().filter(|p| p.same).count(), 50);
        assert!(gen.skipped_classes.is_empty());
    }

    #[test]
    fn pairs_deterministic() {
        let ds = glyph_ds(5, 0.2, 2);
        let cfg = small_cfg();
        let a = make_pairs(&ds, &cfg, 9).unwrap();
        let b = make_pairs(&ds, &cfg, 9).unwrap();
        assert_eq!(a.pairs, b.pairs);
    }

    #[test]
    fn singleton_class_is_skipped() {
        // Class 2 has a single member: it contributes no positive pairs and
        // is reported.
        let base = glyph_ds(4, 0.2, 3);
        let (w, h) = base.dims();
        let mut samples: Vec<LabeledSample> = base.samples().to_vec();
        let mut classes: Vec<String> = base.classes().to_vec();
        classes.push(format!("c{}", classes.len()));
        samples.push(LabeledSample {
            id: base.next_free_id(),
            image: GrayImage::filled(w, h, 9).unwrap(),
            label: 2,
            provenance: Provenance::Original,
            true_label: None,
        });
        let ds = Dataset::new(classes, samples, Role::Train).unwrap();
        let gen = make_pairs(&ds, &small_cfg(), 4).unwrap();
        assert_eq!(gen.skipped_classes, alloc::vec![2]);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = glyph_ds(4, 0.2, 5);
        let mut cfg = small_cfg();
        cfg.epochs = 0;
        let enc = train_siamese(&ds, &cfg).unwrap();
        assert_eq!(enc.theta, init_encoder(&cfg, 16 * 16).theta);
    }

    #[test]
    fn training_separates_far_classes() {
        let ds = glyph_ds(10, 0.15, 6);
        let mut cfg = small_cfg();
        cfg.epochs = 30;
        let enc = train_siamese(&ds, &cfg).unwrap();
        let emb = embed(&enc, &ds).unwrap();
        let labels = ds.labels();
        let mut intra = (0.0, 0usize);
        let mut inter = (0.0, 0usize);
        for i in 0..emb.len() {
            for j in (i + 1)..emb.len() {
                let d = math::sqrt(math::sq_dist(emb.row(i), emb.row(j)));
                if labels[i] == labels[j] {
                    intra = (intra.0 + d, intra.1 + 1);
                } else {
                    inter = (inter.0 + d, inter.1 + 1);
                }
            }
        }
        let mean_intra = intra.0 / intra.1 as f64;
        let mean_inter = inter.0 / inter.1 as f64;
        assert!(
            mean_intra < mean_inter,
            "intra {mean_intra} vs inter {mean_inter}"
        );
    }

    #[test]
    fn probe_loss_decreases() {
        let ds = glyph_ds(8, 0.15, 8);
        let mut cfg = small_cfg();
        cfg.epochs = 20;
        let probe = make_pairs(&ds, &cfg, 0xBEEF).unwrap().pairs;
        let initial = mean_pair_loss(&init_encoder(&cfg, 256), &probe, cfg.margin).unwrap();
        let trained = train_siamese(&ds, &cfg).unwrap();
        let fin = mean_pair_loss(&trained, &probe, cfg.margin).unwrap();
        assert!(fin < initial, "probe loss {initial} -> {fin}");
    }

    #[test]
    fn embed_rows_align_and_duplicates_match() {
        let ds = glyph_ds(3, 0.0, 9);
        let cfg = small_cfg();
        let enc = init_encoder(&cfg, 256);
        let emb = embed(&enc, &ds).unwrap();
        assert_eq!(emb.len(), ds.len());
        assert_eq!(emb.dim(), cfg.embed_dim);
        let imgs = alloc::vec![
            ds.samples()[0].image.clone(),
            ds.samples()[0].image.clone()
        ];
        let twice = embed_images(&enc, &imgs).unwrap();
        assert_eq!(twice.row(0), twice.row(1));
    }

    #[test]
    fn all_black_embeds_to_zero_with_fresh_encoder() {
        // Black maps to 0.0; with zero biases the whole forward path is
        // zero regardless of the weights.
        let cfg = small_cfg();
        let enc = init_encoder(&cfg, 64);
        let img = GrayImage::filled(8, 8, 0).unwrap();
        let emb = embed_images(&enc, &[img]).unwrap();
        assert!(emb.row(0).iter().all(|&v| v == 0.0));
    }
}
