use dataforge_core::dataset::{inject_label_noise, inject_pixel_noise, synth_glyphs, Dataset, Role, SynthSpec};
use dataforge_core::nnet::TrainConfig;
use dataforge_core::rng::Rng;
use dataforge_core::valuation::*;

fn imbalanced(seed: u64) -> Dataset {
    let spec = SynthSpec { num_classes: 6, per_class: 200, image_side: 16, stroke_jitter: 0.7, seed };
    let full = synth_glyphs(&spec).unwrap();
    let quota = [160usize, 130, 110, 80, 70, 50];
    let mut taken = vec![0usize; 6];
    let samples: Vec<_> = full.samples().iter().filter(|s| {
        if taken[s.label] < quota[s.label] { taken[s.label] += 1; true } else { false }
    }).cloned().collect();
    Dataset::new(full.classes().to_vec(), samples, Role::Train).unwrap()
}

fn main() {
    for seed in [42u64, 7, 11, 23, 57, 99] {
        let base = imbalanced(seed);
        let flipped = inject_label_noise(&base, 0.15, seed ^ 0xF1).unwrap();
        let noisy = inject_pixel_noise(&flipped, 0.10, 0.6, seed ^ 0xF2).unwrap();
        let spec = SynthSpec { num_classes: 6, per_class: 9, image_side: 16, stroke_jitter: 0.7, seed: seed ^ 0xF3 };
        let val = synth_glyphs(&spec).unwrap().offset_ids(1_000_000).with_role(Role::Validation);
        let flips: std::collections::BTreeSet<u64> = noisy.samples().iter().filter(|s| Some(s.label) != s.true_label).map(|s| s.id).collect();
        let pixel: std::collections::BTreeSet<u64> = flipped.samples().iter().zip(noisy.samples()).filter(|(a, b)| a.image != b.image).map(|(a, _)| a.id).collect();
        let tc = TrainConfig { epochs: 40, batch_size: 32, learning_rate: 0.2, seed: Rng::derive(seed, 0x11).next_u64() };
        let (m, _) = hydra_influence(&noisy, &val, &tc, InfluenceMode::Fast).unwrap();
        print!("seed {seed:2}: ");
        for frac in [0.15f64, 0.2, 0.25, 0.3] {
            let votes = ((frac * val.len() as f64).ceil() as usize).max(1);
            let d = min_std_filter(&m, &noisy.labels(), &FilterOptions { require_negative: true, min_votes: votes }).unwrap();
            let hit = d.removed_ids.iter().filter(|id| flips.contains(id)).count();
            let garb = d.removed_ids.iter().filter(|id| pixel.contains(id) && !flips.contains(id)).count();
            let clean = d.removed_ids.len() - hit - garb;
            print!("f{frac}: {}={}f+{}g+{}c | ", d.removed_ids.len(), hit, garb, clean);
        }
        println!();
    }
}
