//! Command-line surface. Every subcommand funnels its randomness through
//! the single master seed (flag or config file), so identical invocations
//! produce byte-identical output files. Exit codes: 0 success, 2 usage
//! error, 1 runtime error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use dataforge_core::augment::{balance_classes, search_policy, Policy};
use dataforge_core::cleanse::build_plan;
use dataforge_core::contrastive::{embed, train_siamese};
use dataforge_core::dataset::{
    class_histogram, inject_label_noise, inject_pixel_noise, synth_glyphs, Dataset, Role,
    SynthSpec,
};
use dataforge_core::nnet::TrainConfig;
use dataforge_core::projection::{knn, tsne, Mark, TsneConfig};
use dataforge_core::rng::Rng;
use dataforge_core::valuation::{
    hydra_influence_opts, influence_report, min_std_filter, FilterOptions, InfluenceMode,
    ValuationOptions,
};

use crate::pipeline::{self, PipelineConfig, Preset, RunReport};
use crate::{checkpoint, store, svg, Result};

#[derive(Parser)]
#[command(
    name = "dataforge",
    version,
    about = "Batch toolkit for refining noisy, imbalanced grayscale datasets"
)]
struct Cli {
    /// Pipeline configuration JSON; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fast,
    Exact,
}

impl From<ModeArg> for InfluenceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fast => InfluenceMode::Fast,
            ModeArg::Exact => InfluenceMode::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Baseline,
    Hydra,
    HydraRandom,
    HydraFaa,
    HydraFaaInv,
    Full,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Baseline => Preset::Baseline,
            PresetArg::Hydra => Preset::Hydra,
            PresetArg::HydraRandom => Preset::HydraRandom,
            PresetArg::HydraFaa => Preset::HydraFaa,
            PresetArg::HydraFaaInv => Preset::HydraFaaInv,
            PresetArg::Full => Preset::Full,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic stroke-count glyph dataset.
    Gen {
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, default_value_t = 0.3)]
        jitter: f64,
    },
    /// Inject label and/or pixel noise into a dataset directory.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        label_rho: f64,
        #[arg(long, default_value_t = 0.0)]
        pixel_frac: f64,
        #[arg(long, default_value_t = 0.3)]
        pixel_sigma: f64,
    },
    /// Influence valuation over a train/val pair plus the min+std filter.
    Value {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long, value_enum, default_value = "fast")]
        mode: ModeArg,
        /// Also write the filtered dataset under <out>/dataset.
        #[arg(long)]
        apply: bool,
    },
    /// One contrastive cleansing pass: train, embed, plan, apply.
    Cleanse {
        #[arg(long)]
        input: PathBuf,
        /// Emit the t-SNE scatter and coordinate CSV.
        #[arg(long)]
        diag: bool,
    },
    /// Search an augmentation policy and balance class counts.
    Augment {
        #[arg(long)]
        input: PathBuf,
        /// Reuse a previously saved policy instead of searching.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Sample budget; defaults to the config's budget_cap.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Train the Siamese encoder and project the dataset to 2-D.
    Embed {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a preset end to end and emit dataset, report, and diagnostics.
    Pipeline {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Summarize a run report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

/// Entry point behind `main`; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => checkpoint::read_json(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn require_out(cli: &Cli) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| dataforge_core::Error::invalid("--out is required for this command").into())
}

fn out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| crate::Error::io(path, e))
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.cmd {
        Cmd::Gen {
            classes,
            per_class,
            side,
            jitter,
        } => {
            let out = require_out(&cli)?;
            let ds = synth_glyphs(&SynthSpec {
                num_classes: *classes,
                per_class: *per_class,
                image_side: *side,
                stroke_jitter: *jitter,
                seed: cfg.seed,
            })?;
            store::save_pgm_dir(&ds, &out)?;
            println!("wrote {} samples in {} classes to {}", ds.len(), classes, out.display());
            Ok(())
        }
        Cmd::Noise {
            input,
            label_rho,
            pixel_frac,
            pixel_sigma,
        } => {
            let out = require_out(&cli)?;
            let ds = store::load_pgm_dir(input)?;
            let ds = inject_label_noise(&ds, *label_rho, Rng::derive(cfg.seed, 0xA1).next_u64())?;
            let ds = inject_pixel_noise(
                &ds,
                *pixel_frac,
                *pixel_sigma,
                Rng::derive(cfg.seed, 0xA2).next_u64(),
            )?;
            store::save_pgm_dir(&ds, &out)?;
            println!("wrote perturbed dataset ({} samples) to {}", ds.len(), out.display());
            Ok(())
        }
        Cmd::Value {
            train,
            val,
            mode,
            apply,
        } => {
            let out = require_out(&cli)?;
            out_dir(&out)?;
            let train_ds = store::load_pgm_dir(train)?;
            let val_ds = store::load_pgm_dir(val)?.with_role(Role::Validation);
            let tc = TrainConfig {
                epochs: cfg.valuation.epochs,
                batch_size: cfg.valuation.batch_size.min(train_ds.len()),
                learning_rate: cfg.valuation.learning_rate,
                seed: Rng::derive(cfg.seed, 0x11).next_u64(),
            };
            let vopts = ValuationOptions {
                hidden_dim: cfg.valuation.hidden_dim,
                max_side: cfg.valuation.max_side,
                ..ValuationOptions::default()
            };
            let (matrix, params) =
                hydra_influence_opts(&train_ds, &val_ds, &tc, (*mode).into(), &vopts)?;
            let labels = train_ds.labels();
            let decision = min_std_filter(
                &matrix,
                &labels,
                &FilterOptions {
                    require_negative: cfg.valuation.require_negative,
                    min_votes: cfg.valuation.min_votes(val_ds.len()),
                },
            )?;
            let report =
                influence_report(&matrix, &decision, &labels, train_ds.num_classes(), 10)?;
            checkpoint::save_influence(&out.join("influence.f64"), &matrix)?;
            checkpoint::write_json(&out.join("filter.json"), &decision)?;
            checkpoint::write_json(&out.join("report.json"), &report)?;
            let (w, h) = train_ds.dims();
            let factor = dataforge_core::dataset::fit_factor(w, h, vopts.max_side);
            let arch = dataforge_core::nnet::Arch::new(
                (w / factor) * (h / factor),
                vopts.hidden_dim,
                train_ds.num_classes(),
            )?;
            checkpoint::save_params(&out.join("model.f64"), &params, &arch, tc.seed)?;
            if *apply {
                let kept: Vec<_> = train_ds
                    .samples()
                    .iter()
                    .filter(|s| !decision.removed_ids.contains(&s.id))
                    .cloned()
                    .collect();
                let filtered = Dataset::new(train_ds.classes().to_vec(), kept, train_ds.role())?;
                store::save_pgm_dir(&filtered, &out.join("dataset"))?;
            }
            println!(
                "influence {}x{}; removed {} of {}",
                matrix.n_train(),
                matrix.n_val(),
                decision.removed_ids.len(),
                train_ds.len()
            );
            Ok(())
        }
        Cmd::Cleanse { input, diag } => {
            let out = require_out(&cli)?;
            out_dir(&out)?;
            let ds = store::load_pgm_dir(input)?;
            let siamese = cfg.siamese.with_seed(Rng::derive(cfg.seed, 0x55).next_u64());
            let enc = train_siamese(&ds, &siamese)?;
            let emb = embed(&enc, &ds)?;
            let graph = knn(&emb, cfg.cleanse.k)?;
            let plan = build_plan(&graph, &ds.labels(), &cfg.cleanse)?;
            checkpoint::write_json(&out.join("plan.json"), &plan)?;
            checkpoint::save_encoder(&out.join("encoder.f64"), &enc, siamese.margin)?;
            if *diag {
                let mut tsne_cfg =
                    TsneConfig::for_points(ds.len(), Rng::derive(cfg.seed, 0x88).next_u64());
                if tsne_cfg.perplexity <= 1.0 {
                    tsne_cfg.perplexity = 1.5;
                }
                let proj = tsne(&emb, &tsne_cfg)?;
                let relabeled: BTreeSet<u64> = plan.relabels.iter().map(|r| r.id).collect();
                let marks: Vec<Mark> = ds
                    .samples()
                    .iter()
                    .map(|s| {
                        if plan.drops.contains(&s.id) {
                            Mark::Cross
                        } else if relabeled.contains(&s.id) {
                            Mark::Ring
                        } else if plan.edge_cases.contains(&s.id) {
                            Mark::Star
                        } else {
                            Mark::Point
                        }
                    })
                    .collect();
                svg::scatter_svg(&out.join("scatter.svg"), &proj.coords, &ds.labels(), &marks)?;
                svg::write_coords_csv(
                    &out.join("coords.csv"),
                    &ds.sample_ids(),
                    &proj.coords,
                    &ds.labels(),
                    &marks,
                )?;
            }
            let mut applied = plan.clone();
            applied.edge_cases.clear();
            let cleaned = dataforge_core::cleanse::apply_plan(&ds, &applied)?;
            store::save_pgm_dir(&cleaned, &out.join("dataset"))?;
            println!(
                "relabeled {}, dropped {}, flagged {} edge cases; {} samples out",
                plan.stats.relabels,
                plan.drops.len(),
                plan.edge_cases.len(),
                cleaned.len()
            );
            Ok(())
        }
        Cmd::Augment { input, policy, cap } => {
            let out = require_out(&cli)?;
            out_dir(&out)?;
            let ds = store::load_pgm_dir(input)?;
            let cap = cap.unwrap_or(cfg.budget_cap);
            let policy: Policy = match policy {
                Some(path) => checkpoint::read_json(path)?,
                None => {
                    let siamese = cfg.siamese.with_seed(Rng::derive(cfg.seed, 0x22).next_u64());
                    let enc = train_siamese(&ds, &siamese)?;
                    let search = search_policy(
                        &ds,
                        &enc,
                        cfg.search.budget,
                        cfg.search.diversity_floor,
                        Rng::derive(cfg.seed, 0x33).next_u64(),
                    )?;
                    checkpoint::write_json(&out.join("search.json"), &search)?;
                    search.policy
                }
            };
            checkpoint::write_json(&out.join("policy.json"), &policy)?;
            let balanced =
                balance_classes(&ds, &policy, cap, Rng::derive(cfg.seed, 0x44).next_u64())?;
            store::save_pgm_dir(&balanced.dataset, &out.join("dataset"))?;
            println!(
                "balanced to {:?} (target {}, capped: {})",
                class_histogram(&balanced.dataset),
                balanced.target,
                balanced.capped
            );
            Ok(())
        }
        Cmd::Embed { input } => {
            let out = require_out(&cli)?;
            out_dir(&out)?;
            let ds = store::load_pgm_dir(input)?;
            let siamese = cfg.siamese.with_seed(Rng::derive(cfg.seed, 0x66).next_u64());
            let enc = train_siamese(&ds, &siamese)?;
            let emb = embed(&enc, &ds)?;
            checkpoint::save_encoder(&out.join("encoder.f64"), &enc, siamese.margin)?;
            let mut tsne_cfg =
                TsneConfig::for_points(ds.len(), Rng::derive(cfg.seed, 0x88).next_u64());
            if tsne_cfg.perplexity <= 1.0 {
                tsne_cfg.perplexity = 1.5;
            }
            let proj = tsne(&emb, &tsne_cfg)?;
            let marks = vec![Mark::Point; ds.len()];
            svg::scatter_svg(&out.join("scatter.svg"), &proj.coords, &ds.labels(), &marks)?;
            svg::write_coords_csv(
                &out.join("coords.csv"),
                &ds.sample_ids(),
                &proj.coords,
                &ds.labels(),
                &marks,
            )?;
            println!(
                "embedded {} samples; KL {:.4} -> {:.4}",
                ds.len(),
                proj.initial_kl,
                proj.final_kl
            );
            Ok(())
        }
        Cmd::Pipeline { train, val, preset } => {
            let out = require_out(&cli)?;
            out_dir(&out)?;
            let mut cfg = cfg;
            if let Some(p) = preset {
                cfg.preset = (*p).into();
            }
            let train_ds = store::load_pgm_dir(train)?;
            let val_ds = store::load_pgm_dir(val)?.with_role(Role::Validation);
            let diag = out.join("diag");
            let (ds_out, report) = pipeline::run(&train_ds, &val_ds, &cfg, Some(&diag))?;
            store::save_pgm_dir(&ds_out, &out.join("dataset"))?;
            checkpoint::write_json(&out.join("report.json"), &report)?;
            print_report(&report);
            for stage in &report.stages {
                eprintln!("  [{}] {} ms", stage.stage, stage.wall_ms);
            }
            Ok(())
        }
        Cmd::Report { input } => {
            let report: RunReport = checkpoint::read_json(input)?;
            print_report(&report);
            Ok(())
        }
    }
}

fn print_report(report: &RunReport) {
    println!("preset: {:?} (seed {})", report.preset, report.seed);
    for stage in &report.stages {
        println!("  {}: {} -> {} samples", stage.stage, stage.n_in, stage.n_out);
    }
    if let Some(v) = &report.valuation {
        println!("  valuation removed {} (guard retained {})", v.removed, v.guard_retained.len());
    }
    for (i, c) in report.cleanse_iterations.iter().enumerate() {
        println!(
            "  cleanse {}: {} relabels, {} drops ({} isolated / {} foreign)",
            i + 1,
            c.relabels,
            c.drops_isolated + c.drops_foreign,
            c.drops_isolated,
            c.drops_foreign
        );
    }
    if let Some(c) = &report.final_cleanse {
        println!(
            "  final cleanse: {} relabels, {} drops",
            c.relabels,
            c.drops_isolated + c.drops_foreign
        );
    }
    if report.edge_cases > 0 || report.edge_truncated > 0 {
        println!(
            "  edge cases augmented: {} (truncated {})",
            report.edge_cases, report.edge_truncated
        );
    }
    if let Some(n) = report.inversion_copies {
        println!("  inversion copies: {n}");
    }
    println!(
        "  final accuracy: train {:.4}, val {:.4}",
        report.final_train_accuracy, report.final_val_accuracy
    );
    if let Some(r) = &report.noise_recovery {
        println!(
            "  noise recovery: {:.3} ({} of {} flips fixed or dropped), false edits {:.3}",
            r.recovery_rate,
            r.flipped_dropped + r.flipped_fixed,
            r.flipped_total,
            r.false_edit_rate
        );
    }
}
