use dataforge::pipeline::*;
use dataforge_core::dataset::{class_histogram, inject_label_noise, inject_pixel_noise, synth_glyphs, Dataset, Role, SynthSpec};

fn imbalanced(seed: u64) -> Dataset {
    let spec = SynthSpec { num_classes: 6, per_class: 200, image_side: 16, stroke_jitter: 0.9, seed };
    let full = synth_glyphs(&spec).unwrap();
    let quota = [200usize, 150, 120, 70, 40, 20];
    let mut taken = vec![0usize; 6];
    let samples: Vec<_> = full.samples().iter().filter(|s| {
        if taken[s.label] < quota[s.label] { taken[s.label] += 1; true } else { false }
    }).cloned().collect();
    Dataset::new(full.classes().to_vec(), samples, Role::Train).unwrap()
}

fn main() {
    let seed = 42u64;
    let base = imbalanced(seed);
    let noisy = inject_label_noise(&base, 0.15, seed ^ 0xF1).unwrap();
    let noisy = inject_pixel_noise(&noisy, 0.10, 0.25, seed ^ 0xF2).unwrap();
    let spec = SynthSpec { num_classes: 6, per_class: 9, image_side: 16, stroke_jitter: 0.9, seed: seed ^ 0xF3 };
    let val = synth_glyphs(&spec).unwrap().offset_ids(1_000_000).with_role(Role::Validation);
    let holdout = synth_glyphs(&SynthSpec { per_class: 40, seed: seed ^ 0xF4, ..spec }).unwrap().offset_ids(2_000_000);
    println!("input hist {:?}", class_histogram(&noisy));
    let cfg = PipelineConfig { seed, budget_cap: 2000, ..PipelineConfig::default() };
    let (out, report) = run(&noisy, &val, &cfg, None).unwrap();
    for s in &report.stages { println!("  {}: {} -> {}", s.stage, s.n_in, s.n_out); }
    for (i, c) in report.cleanse_iterations.iter().enumerate() {
        println!("  cleanse {}: {:?}", i + 1, c);
    }
    println!("  final cleanse: {:?}", report.final_cleanse);
    println!("  edges {} truncated {}", report.edge_cases, report.edge_truncated);
    println!("out hist {:?}", class_histogram(&out));
    if let Some(r) = &report.noise_recovery { println!("recovery {:?}", r); }
    // per-class holdout accuracy of the judge
    let m = evaluate(&out, &holdout, &cfg.eval, Some(&noisy)).unwrap();
    println!("holdout {:.3}", m.holdout_accuracy);
    // compare against baseline judge per class
    use dataforge_core::nnet::{accuracy, predict, train_sgd, Arch, TrainConfig};
    let arch = Arch::new(256, cfg.eval.hidden_dim, 6).unwrap();
    let tc = TrainConfig { epochs: cfg.eval.epochs, batch_size: 32, learning_rate: cfg.eval.learning_rate, seed: cfg.eval.seed };
    for (name, ds) in [("baseline", &noisy), ("full", &out)] {
        let (p, _) = train_sgd(ds, &arch, &tc, None).unwrap();
        let preds = predict(&arch, &p, &holdout).unwrap();
        let mut per = vec![(0usize, 0usize); 6];
        for (pred, s) in preds.iter().zip(holdout.samples()) {
            per[s.label].1 += 1;
            if *pred == s.label { per[s.label].0 += 1; }
        }
        let accs: Vec<String> = per.iter().map(|(h, n)| format!("{:.2}", *h as f64 / *n as f64)).collect();
        println!("{name}: total {:.3} per-class {:?}", accuracy(&arch, &p, &holdout).unwrap(), accs);
    }
}
