use dataforge_core::cleanse::{build_plan, CleanseConfig};
use dataforge_core::contrastive::{embed, train_siamese, SiameseConfig};
use dataforge_core::dataset::{inject_label_noise, inject_pixel_noise, synth_glyphs, Dataset, Role, SynthSpec};
use dataforge_core::nnet::{accuracy, train_sgd, Arch, TrainConfig};
use dataforge_core::projection::knn;

fn imbalanced(seed: u64, jitter: f64) -> Dataset {
    let spec = SynthSpec { num_classes: 6, per_class: 200, image_side: 16, stroke_jitter: jitter, seed };
    let full = synth_glyphs(&spec).unwrap();
    let quota = [160usize, 130, 110, 80, 70, 50];
    let mut taken = vec![0usize; 6];
    let samples: Vec<_> = full.samples().iter().filter(|s| {
        if taken[s.label] < quota[s.label] { taken[s.label] += 1; true } else { false }
    }).cloned().collect();
    Dataset::new(full.classes().to_vec(), samples, Role::Train).unwrap()
}

fn main() {
    let seed = 42u64;
    for (jitter, sigma) in [(0.75f64, 0.5f64), (0.8, 0.5), (0.8, 0.6)] {
        let base = imbalanced(seed, jitter);
        let flipped = inject_label_noise(&base, 0.15, seed ^ 0xF1).unwrap();
        let noisy = inject_pixel_noise(&flipped, 0.10, sigma, seed ^ 0xF2).unwrap();
        let spec = SynthSpec { num_classes: 6, per_class: 60, image_side: 16, stroke_jitter: jitter, seed: seed ^ 0xF4 };
        let holdout = synth_glyphs(&spec).unwrap();
        // judge headroom (mean of 3 seeds)
        let arch = Arch::new(256, 96, 6).unwrap();
        let acc3 = |ds: &Dataset| -> f64 {
            (0..3).map(|r| {
                let tc = TrainConfig { epochs: 250, batch_size: 32, learning_rate: 0.03, seed: 0xE7A1 + r };
                let (p, _) = train_sgd(ds, &arch, &tc, None).unwrap();
                accuracy(&arch, &p, &holdout).unwrap()
            }).sum::<f64>() / 3.0
        };
        let (b_clean, b_noisy) = (acc3(&base), acc3(&noisy));
        // cleanse single-pass quality
        let flips: std::collections::BTreeSet<u64> = noisy.samples().iter().filter(|s| Some(s.label) != s.true_label).map(|s| s.id).collect();
        let pixel: std::collections::BTreeSet<u64> = flipped.samples().iter().zip(noisy.samples()).filter(|(a, b)| a.image != b.image).map(|(a, _)| a.id).collect();
        let clean_ids: std::collections::BTreeSet<u64> = noisy.samples().iter().map(|s| s.id).filter(|id| !flips.contains(id) && !pixel.contains(id)).collect();
        let sia = SiameseConfig { margin: 1.0, pairs_per_epoch: 512, epochs: 50, batch_size: 32, learning_rate: 0.05, hidden_dim: 64, embed_dim: 16, seed: 5 };
        let enc = train_siamese(&noisy, &sia).unwrap();
        let emb = embed(&enc, &noisy).unwrap();
        let graph = knn(&emb, 5).unwrap();
        let cfg = CleanseConfig { k: 5, drop_alpha: 2.5, foreign_majority: 0.6, edge_quantile: 0.9 };
        let plan = build_plan(&graph, &noisy.labels(), &cfg).unwrap();
        let mut fix = 0; let mut bad_clean = 0;
        for r in &plan.relabels {
            let s = &noisy.samples()[noisy.index_of_id(r.id).unwrap()];
            if s.true_label == Some(r.new_label) { fix += 1; }
            else if clean_ids.contains(&r.id) { bad_clean += 1; }
        }
        let d_flip = plan.drops.iter().filter(|id| flips.contains(id)).count();
        let d_pixel = plan.drops.iter().filter(|id| pixel.contains(id) && !flips.contains(id)).count();
        let d_clean = plan.drops.iter().filter(|id| clean_ids.contains(id)).count();
        println!(
            "jitter {jitter} sigma {sigma}: clean {b_clean:.3} noisy {b_noisy:.3} headroom {:.3} | recovery {:.2} pixel-drops {d_pixel}/60 false {:.3}",
            b_clean - b_noisy,
            (d_flip + fix) as f64 / flips.len() as f64,
            (d_clean + bad_clean) as f64 / clean_ids.len() as f64,
        );
    }
}
