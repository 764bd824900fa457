use dataforge::pipeline::*;
use dataforge_core::dataset::{class_histogram, inject_label_noise, inject_pixel_noise, synth_glyphs, Role, SynthSpec};

fn main() {
    let seed = 9u64;
    let spec = SynthSpec { num_classes: 3, per_class: 20, image_side: 16, stroke_jitter: 0.3, seed };
    let clean = synth_glyphs(&spec).unwrap();
    let noisy = inject_label_noise(&clean, 0.15, seed ^ 1).unwrap();
    let noisy = inject_pixel_noise(&noisy, 0.1, 0.25, seed ^ 2).unwrap();
    let val = synth_glyphs(&SynthSpec { per_class: 4, seed: seed ^ 3, ..spec }).unwrap().offset_ids(100_000).with_role(Role::Validation);
    for preset in [Preset::Hydra, Preset::HydraRandom, Preset::HydraFaa, Preset::HydraFaaInv, Preset::Full] {
        let cfg = PipelineConfig {
            seed, budget_cap: noisy.len() + 10, cleanse_iters: 1, preset,
            valuation: ValuationCfg { epochs: 10, ..ValuationCfg::default() },
            siamese: SiameseCfg { pairs_per_epoch: 64, epochs: 6, hidden_dim: 24, embed_dim: 8, ..SiameseCfg::default() },
            search: SearchCfg { budget: 4, ..SearchCfg::default() },
            eval: EvalCfg { epochs: 15, ..EvalCfg::default() },
            ..PipelineConfig::default()
        };
        match run(&noisy, &val, &cfg, None) {
            Ok((out, report)) => {
                println!("{preset:?}: ok {} out hist {:?}", out.len(), class_histogram(&out));
                for s in &report.stages { println!("    {}: {} -> {}", s.stage, s.n_in, s.n_out); }
            }
            Err(e) => println!("{preset:?}: ERR {e}"),
        }
    }
}
