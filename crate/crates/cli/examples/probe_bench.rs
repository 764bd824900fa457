// Calibration probe: imbalanced 600-sample benchmark, 15% flips, 10% pixel
// noise; sweeps the valuation vote fraction and reports preset ordering.
use dataforge::pipeline::*;
use dataforge_core::dataset::{
    inject_label_noise, inject_pixel_noise, synth_glyphs, Dataset, Role, SynthSpec,
};
use std::time::Instant;

fn imbalanced(seed: u64, side: usize, jitter: f64) -> Dataset {
    let spec = SynthSpec { num_classes: 6, per_class: 200, image_side: side, stroke_jitter: jitter, seed };
    let full = synth_glyphs(&spec).unwrap();
    let quota: [usize; 6] = match std::env::args().nth(3).as_deref() { Some("severe") => [180, 150, 120, 80, 45, 25], _ => [160, 130, 110, 80, 70, 50] };
    let mut taken = vec![0usize; 6];
    let samples: Vec<_> = full
        .samples()
        .iter()
        .filter(|s| {
            let c = s.label;
            if taken[c] < quota[c] {
                taken[c] += 1;
                true
            } else {
                false
            }
        })
        .cloned()
        .collect();
    Dataset::new(full.classes().to_vec(), samples, Role::Train).unwrap()
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let vote: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let (side, jitter) = (16usize, 0.7f64);
    let base = imbalanced(seed, side, jitter);
    let noisy = inject_label_noise(&base, 0.15, seed ^ 0xF1).unwrap();
    let noisy = inject_pixel_noise(&noisy, 0.10, 0.6, seed ^ 0xF2).unwrap();
    let spec = SynthSpec { num_classes: 6, per_class: 9, image_side: side, stroke_jitter: jitter, seed: seed ^ 0xF3 };
    let val = synth_glyphs(&spec).unwrap().offset_ids(1_000_000).with_role(Role::Validation);
    let holdout = synth_glyphs(&SynthSpec { per_class: 200, seed: seed ^ 0xF4, ..spec })
        .unwrap().offset_ids(2_000_000);
    println!("N {} val {} holdout {}", noisy.len(), val.len(), holdout.len());
    let mut cfg = PipelineConfig { seed, budget_cap: 2000, ..PipelineConfig::default() };
    cfg.valuation.vote_fraction = vote;
    for preset in [Preset::Baseline, Preset::Hydra, Preset::HydraFaa, Preset::Full] {
        let mut c = cfg.clone();
        c.preset = preset;
        let t0 = Instant::now();
        match run(&noisy, &val, &c, None) {
            Ok((out, report)) => {
                let mut ecfg = cfg.eval.clone(); ecfg.repeats = 3; let m = evaluate(&out, &holdout, &ecfg, Some(&noisy)).unwrap();
                let removed = report.valuation.as_ref().map(|v| v.removed).unwrap_or(0);
                let rec = report.noise_recovery.as_ref();
                println!(
                    "{:?}: holdout {:.3} n_out {} removed {removed} recovery {} [{} ms]",
                    preset, m.holdout_accuracy, out.len(),
                    rec.map(|r| format!("{:.3}", r.recovery_rate)).unwrap_or_default(),
                    t0.elapsed().as_millis(),
                );
            }
            Err(e) => println!("{preset:?}: ERR {e}"),
        }
    }
}
