use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rlv::harness::{
    self, config_from_sources, emit_plot, final_success, median, read_metrics_csv, run_ablation,
    run_experiment, steps_to_threshold, GenDataConfig, PlotCurve,
};
use rlv::rlv::AblationMode;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "rlv",
    about = "Reinforcement learning with action-free observation data: dataset generation, training, ablations, and reports"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate observation datasets (low/medium/high quality), ground-truth
    /// sidecars, and the cross-domain paired set.
    GenData {
        /// Config file with flat dotted keys (key = value per line).
        #[arg(long)]
        config: Option<PathBuf>,
        /// key=value overrides applied on top of the config file.
        overrides: Vec<String>,
    },
    /// Run one training experiment per seed, writing metrics CSVs and a
    /// checkpoint bundle per run.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        overrides: Vec<String>,
    },
    /// Run the configured experiment under one ablation mode over all seeds.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// none | zero_actions | gt_actions | zero_rewards | gt_rewards |
        /// no_paired | no_domain_adapt
        #[arg(long)]
        mode: String,
        overrides: Vec<String>,
    },
    /// Summarize finished runs: steps-to-threshold table and a learning-curve
    /// plot, grouping CSVs that differ only in their seed suffix.
    Report {
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Where to write the SVG learning curves.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Metrics CSV files produced by train/ablate.
        csvs: Vec<PathBuf>,
    },
}

fn curve_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.rfind("_seed") {
        Some(i) if stem[i + 5..].chars().all(|c| c.is_ascii_digit()) => stem[..i].to_string(),
        _ => stem,
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::GenData { config, overrides } => {
            let mut map = match &config {
                Some(p) => harness::parse_kv_file(p).context("reading config")?,
                None => BTreeMap::new(),
            };
            harness::apply_overrides(&mut map, &overrides)?;
            let cfg = GenDataConfig::from_map(map)?;
            for out in rlv::harness::generate_datasets(&cfg)? {
                println!("{}: {} records -> {}", out.quality, out.records, out.path.display());
            }
        }
        Cmd::Train {
            config,
            seed,
            overrides,
        } => {
            let cfg = config_from_sources(config.as_deref(), &overrides)?;
            let seeds = match seed {
                Some(s) => vec![s],
                None => cfg.seeds.clone(),
            };
            for s in seeds {
                let out = run_experiment(&cfg, s)?;
                println!("seed {s}: {} -> {}", out.rows.len(), out.csv_path.display());
            }
        }
        Cmd::Ablate {
            config,
            mode,
            overrides,
        } => {
            let cfg = config_from_sources(config.as_deref(), &overrides)?;
            let mode: AblationMode = mode.parse()?;
            for (s, out) in run_ablation(&cfg, mode, &cfg.seeds.clone())? {
                println!(
                    "{} seed {s}: {} rows -> {}",
                    mode.name(),
                    out.rows.len(),
                    out.csv_path.display()
                );
            }
        }
        Cmd::Report {
            threshold,
            window,
            plot,
            csvs,
        } => {
            if csvs.is_empty() {
                bail!("report needs at least one CSV file");
            }
            let mut groups: BTreeMap<String, Vec<Vec<harness::MetricsRow>>> = BTreeMap::new();
            for path in &csvs {
                let (_, rows) =
                    read_metrics_csv(path).with_context(|| path.display().to_string())?;
                groups.entry(curve_label(path)).or_default().push(rows);
            }
            println!("{:<40} {:>6} {:>16} {:>14}", "curve", "seeds", "median steps", "final success");
            for (label, seeds) in &groups {
                let steps: Vec<f64> = seeds
                    .iter()
                    .map(|r| {
                        steps_to_threshold(r, threshold, window)
                            .map(|s| s as f64)
                            .unwrap_or(f64::INFINITY)
                    })
                    .collect();
                let med = median(&steps);
                let med_str = if med.is_finite() {
                    format!("{med:.0}")
                } else {
                    "not reached".to_string()
                };
                let finals: Vec<f64> = seeds.iter().map(|r| final_success(r, window)).collect();
                println!(
                    "{label:<40} {:>6} {med_str:>16} {:>14.3}",
                    seeds.len(),
                    median(&finals)
                );
            }
            if let Some(plot_path) = plot {
                let curves: Vec<PlotCurve> = groups
                    .into_iter()
                    .map(|(label, seeds)| PlotCurve { label, seeds })
                    .collect();
                emit_plot(&curves, &plot_path)?;
                println!("plot -> {}", plot_path.display());
            }
        }
    }
    Ok(())
}
