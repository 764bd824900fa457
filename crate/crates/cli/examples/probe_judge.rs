use dataforge_core::dataset::{inject_label_noise, inject_pixel_noise, synth_glyphs, Dataset, Role, SynthSpec};
use dataforge_core::nnet::{accuracy, train_sgd, Arch, TrainConfig};

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
    let jitter = 0.8;
    let base = imbalanced(seed, jitter);
    let flipped = inject_label_noise(&base, 0.15, seed ^ 0xF1).unwrap();
    let noisy = inject_pixel_noise(&flipped, 0.10, 0.6, seed ^ 0xF2).unwrap();
    let spec = SynthSpec { num_classes: 6, per_class: 60, image_side: 16, stroke_jitter: jitter, seed: seed ^ 0xF4 };
    let holdout = synth_glyphs(&spec).unwrap();
    for (ep, h, lr) in [(350usize, 128usize, 0.03f64), (250, 128, 0.05), (350, 96, 0.04), (300, 192, 0.03)] {
        let arch = Arch::new(256, h, 6).unwrap();
        let accs = |ds: &Dataset| -> Vec<f64> {
            (0..3).map(|r| {
                let tc = TrainConfig { epochs: ep, batch_size: 32, learning_rate: lr, seed: 0xE7A1 + r };
                let (p, _) = train_sgd(ds, &arch, &tc, None).unwrap();
                accuracy(&arch, &p, &holdout).unwrap()
            }).collect()
        };
        let (ac, an) = (accs(&base), accs(&noisy));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "ep{ep} h{h} lr{lr}: clean {:.3} {:?} | noisy {:.3} {:?} | headroom {:.3}",
            mean(&ac), ac.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>(),
            mean(&an), an.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>(),
            mean(&ac) - mean(&an)
        );
    }
}
