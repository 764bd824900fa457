use dataforge_core::dataset::{inject_label_noise, inject_pixel_noise, synth_glyphs, Role, SynthSpec};
use dataforge_core::nnet::TrainConfig;
use dataforge_core::rng::Rng;
use dataforge_core::valuation::*;

fn main() {
    for seed in [7u64, 9, 13, 21, 33] {
        let spec = SynthSpec { num_classes: 3, per_class: 20, image_side: 16, stroke_jitter: 0.3, seed };
        let clean = synth_glyphs(&spec).unwrap();
        let noisy = inject_label_noise(&clean, 0.15, seed ^ 1).unwrap();
        let noisy = inject_pixel_noise(&noisy, 0.1, 0.25, seed ^ 2).unwrap();
        let val = synth_glyphs(&SynthSpec { per_class: 4, seed: seed ^ 3, ..spec }).unwrap().offset_ids(100_000).with_role(Role::Validation);
        let flipped: std::collections::BTreeSet<u64> = noisy.samples().iter().filter(|s| Some(s.label) != s.true_label).map(|s| s.id).collect();
        let tc = TrainConfig { epochs: 40, batch_size: 32, learning_rate: 0.2, seed: Rng::derive(seed, 0x11).next_u64() };
        let (m, _) = hydra_influence(&noisy, &val, &tc, InfluenceMode::Fast).unwrap();
        let n = m.n_train();
        let nv = m.n_val();
        // per-column std for z-scores
        let mut stds = vec![0.0; nv];
        for j in 0..nv {
            let col = m.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            stds[j] = (col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt().max(1e-300);
        }
        // score B: breadth of negativity; score C: sum of z-scores
        let mut breadth: Vec<(usize, u64)> = Vec::new();
        let mut zsum: Vec<(f64, u64)> = Vec::new();
        for i in 0..n {
            let row = m.row(i);
            let neg = row.iter().filter(|&&v| v < 0.0).count();
            let z: f64 = row.iter().enumerate().map(|(j, v)| v / stds[j]).sum();
            breadth.push((neg, m.train_ids()[i]));
            zsum.push((z, m.train_ids()[i]));
        }
        breadth.sort_by(|a, b| b.0.cmp(&a.0));
        zsum.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let top = |v: &[u64], k: usize| v.iter().take(k).filter(|id| flipped.contains(id)).count();
        let b_ids: Vec<u64> = breadth.iter().map(|x| x.1).collect();
        let z_ids: Vec<u64> = zsum.iter().map(|x| x.1).collect();
        println!(
            "seed {seed}: breadth top6 {}/6 top9 {}/9 | zsum top6 {}/6 top9 {}/9 (flips {})",
            top(&b_ids, 6), top(&b_ids, 9), top(&z_ids, 6), top(&z_ids, 9), flipped.len()
        );
    }
}
