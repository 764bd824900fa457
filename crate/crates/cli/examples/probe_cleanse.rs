use dataforge_core::cleanse::{build_plan, CleanseConfig};
use dataforge_core::contrastive::{embed, train_siamese, SiameseConfig};
use dataforge_core::dataset::{inject_label_noise, inject_pixel_noise, synth_glyphs, SynthSpec};
use dataforge_core::projection::knn;

fn main() {
    let seed = 42u64;
    let spec = SynthSpec { num_classes: 6, per_class: 100, image_side: 16, stroke_jitter: 0.7, seed };
    let clean = synth_glyphs(&spec).unwrap();
    let flipped_ds = inject_label_noise(&clean, 0.15, seed ^ 0xF1).unwrap();
    let noisy = inject_pixel_noise(&flipped_ds, 0.10, 0.25, seed ^ 0xF2).unwrap();
    let flips: std::collections::BTreeSet<u64> = noisy.samples().iter().filter(|s| Some(s.label) != s.true_label).map(|s| s.id).collect();
    let pixel: std::collections::BTreeSet<u64> = flipped_ds.samples().iter().zip(noisy.samples()).filter(|(a, b)| a.image != b.image).map(|(a, _)| a.id).collect();
    let truly_clean: std::collections::BTreeSet<u64> = noisy.samples().iter().map(|s| s.id).filter(|id| !flips.contains(id) && !pixel.contains(id)).collect();
    println!("flips {} pixel-noisy {} truly clean {}", flips.len(), pixel.len(), truly_clean.len());
    let sia = SiameseConfig { margin: 1.0, pairs_per_epoch: 512, epochs: 50, batch_size: 32, learning_rate: 0.05, hidden_dim: 64, embed_dim: 16, seed: 5 };
    let enc = train_siamese(&noisy, &sia).unwrap();
    let emb = embed(&enc, &noisy).unwrap();
    for (k, alpha, foreign) in [(5usize, 2.0f64, 0.5f64), (5, 2.5, 0.5), (5, 2.0, 0.6), (7, 2.0, 0.5), (7, 2.5, 0.6)] {
        let graph = knn(&emb, k).unwrap();
        let cfg = CleanseConfig { k, drop_alpha: alpha, foreign_majority: foreign, edge_quantile: 0.9 };
        let plan = build_plan(&graph, &noisy.labels(), &cfg).unwrap();
        let mut relabel_fix = 0; let mut relabel_noisy = 0; let mut relabel_cleanbad = 0;
        for r in &plan.relabels {
            let s = &noisy.samples()[noisy.index_of_id(r.id).unwrap()];
            if s.true_label == Some(r.new_label) { relabel_fix += 1; }
            else if pixel.contains(&r.id) { relabel_noisy += 1; }
            else { relabel_cleanbad += 1; }
        }
        let d_flip = plan.drops.iter().filter(|id| flips.contains(id)).count();
        let d_pixel = plan.drops.iter().filter(|id| pixel.contains(id) && !flips.contains(id)).count();
        let d_clean = plan.drops.iter().filter(|id| truly_clean.contains(id)).count();
        let recovery = (d_flip + relabel_fix) as f64 / flips.len() as f64;
        let false_edits = (d_clean + relabel_cleanbad) as f64 / truly_clean.len() as f64;
        println!(
            "k{k} a{alpha} f{foreign}: relabels {} (fix {relabel_fix}/noisy {relabel_noisy}/bad {relabel_cleanbad}), drops {} (flip {d_flip}/pixel {d_pixel}/clean {d_clean}) -> recovery {recovery:.3} false {false_edits:.3}",
            plan.relabels.len(), plan.drops.len()
        );
    }
}
