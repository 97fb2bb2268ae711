//! Command-line front end: dataset generation, training, evaluation,
//! analysis exports and expert-count sweeps.
//!
//! Exit codes: 0 success, 2 user or configuration error, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use exnet::analysis::{
    self, cluster_recovery, evaluate_split, per_cluster_metrics, permutation_importance,
    FeatureGroup,
};
use exnet::dataset::{Dataset, Split};
use exnet::error::Error;
use exnet::model::checkpoint::{self, LoadedModel};
use exnet::model::{
    embed_mlp_train, exnet_train, EmbedMlpConfig, ExNetConfig, Model,
};
use exnet::optim::OptimConfig;
use exnet::rng::SeededRng;
use exnet::synthdata::{self, GeneratorConfig};

#[derive(Parser)]
#[command(name = "exnet", version, about = "Experts networks: joint prediction and investor clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Exnet,
    EmbedMlp,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV + ground-truth metadata JSON).
    Gen {
        /// TOML run config; missing sections fall back to defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; overrides the config value.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for dataset.csv, meta.json and the resolved config.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train a model on a dataset CSV and write a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "exnet")]
        model: ModelKind,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Split to evaluate: train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Optional path for a metrics JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full analysis: metrics, attributions, embeddings, cluster recovery
    /// and permutation feature importance.
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Permutation-importance repeats.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train one experts network per sweep point and summarize.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// One sweep point: an expert count plus optional loss-weight overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepPoint {
    n_experts: usize,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    lambda_spec: Option<f64>,
    #[serde(default)]
    lambda_entropy: Option<f64>,
}

impl SweepPoint {
    fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("exnet-{}", self.n_experts))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SweepSpec {
    points: Vec<SweepPoint>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            points: [1usize, 3, 10, 100]
                .iter()
                .map(|&n| SweepPoint {
                    n_experts: n,
                    label: None,
                    lambda_spec: None,
                    lambda_entropy: None,
                })
                .collect(),
        }
    }
}

/// Full run configuration; every section has defaults so a config file only
/// needs the values it changes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    seed: u64,
    generator: GeneratorConfig,
    exnet: ExNetConfig,
    embed_mlp: EmbedMlpConfig,
    optim: OptimConfig,
    /// Optimizer for the embed-mlp baseline (much smaller learning rate).
    baseline_optim: OptimConfig,
    sweep: SweepSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            generator: GeneratorConfig::default(),
            exnet: ExNetConfig::default(),
            embed_mlp: EmbedMlpConfig::default(),
            optim: OptimConfig::default(),
            baseline_optim: OptimConfig {
                lr: 4.2e-5,
                ..Default::default()
            },
            sweep: SweepSpec::default(),
        }
    }
}

fn load_config(path: Option<&Path>, seed_flag: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_resolved_config(dir: &Path, cfg: &RunConfig) -> Result<(), Error> {
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| Error::InvalidConfig(format!("serializing config: {e}")))?;
    std::fs::write(dir.join("config.toml"), text)?;
    Ok(())
}

/// Remap a dataset's entity ids onto a checkpoint's entity-name order.
fn align_entities(data: &mut Dataset, names: &[String]) -> Result<(), Error> {
    let index: std::collections::HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut new_ids = Vec::with_capacity(data.entity_ids.len());
    for &id in &data.entity_ids {
        let name = &data.entity_names[id];
        match index.get(name.as_str()) {
            Some(&i) => new_ids.push(i),
            None => return Err(Error::UnknownEntity(name.clone())),
        }
    }
    data.entity_ids = new_ids;
    data.entity_names = names.to_vec();
    Ok(())
}

fn per_feature_groups(p: usize) -> Vec<FeatureGroup> {
    (0..p)
        .map(|c| FeatureGroup {
            name: format!("f{c}"),
            cols: vec![c],
        })
        .collect()
}

fn cmd_gen(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), Error> {
    let cfg = load_config(config, seed)?;
    std::fs::create_dir_all(out)?;
    let (dataset, meta) = synthdata::generate(&cfg.generator, cfg.seed)?;
    dataset.write_csv(&out.join("dataset.csv"))?;
    meta.write_json(&out.join("meta.json"))?;
    write_resolved_config(out, &cfg)?;
    let rate = dataset.labels.iter().sum::<usize>() as f64 / dataset.num_rows() as f64;
    println!(
        "generated {} rows, {} investors, {} features (positive rate {:.4}) -> {}",
        dataset.num_rows(),
        dataset.num_entities(),
        dataset.num_features(),
        rate,
        out.display()
    );
    let report = synthdata::perfect_model_metrics(&dataset)?;
    for (split, acc) in &report.accuracy {
        println!("  perfect-model accuracy [{split}]: {acc:.4}");
    }
    Ok(())
}

fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    kind: ModelKind,
    out: &Path,
) -> Result<(), Error> {
    let cfg = load_config(config, seed)?;
    std::fs::create_dir_all(out)?;
    let dataset = Dataset::read_csv(data)?;
    match kind {
        ModelKind::Exnet => {
            let (mut model, history) = exnet_train(&dataset, &cfg.exnet, &cfg.optim, cfg.seed)?;
            checkpoint::save_exnet(&out.join("model.ckpt"), &mut model, &dataset.entity_names)?;
            analysis::write_history_csv(&out.join("history.csv"), &history)?;
            write_resolved_config(out, &cfg)?;
            let m = evaluate_split(&model, &dataset, Split::Test)?;
            println!(
                "trained experts network (n = {}) for {} epochs (best {})",
                cfg.exnet.n_experts,
                history.epochs.len(),
                history.best_epoch
            );
            println!(
                "  test accuracy {:.4}, macro AP {:.4} -> {}",
                m.accuracy,
                m.macro_ap,
                out.display()
            );
        }
        ModelKind::EmbedMlp => {
            let (mut model, history) =
                embed_mlp_train(&dataset, &cfg.embed_mlp, &cfg.baseline_optim, cfg.seed)?;
            checkpoint::save_embed_mlp(&out.join("model.ckpt"), &mut model, &dataset.entity_names)?;
            analysis::write_history_csv(&out.join("history.csv"), &history)?;
            write_resolved_config(out, &cfg)?;
            let m = evaluate_split(&model, &dataset, Split::Test)?;
            println!(
                "trained embed-mlp baseline for {} epochs (best {})",
                history.epochs.len(),
                history.best_epoch
            );
            println!(
                "  test accuracy {:.4}, macro AP {:.4} -> {}",
                m.accuracy,
                m.macro_ap,
                out.display()
            );
        }
    }
    Ok(())
}

fn cmd_eval(data: &Path, model: &Path, split: &str, out: Option<&Path>) -> Result<(), Error> {
    let split = Split::parse(split)?;
    let mut dataset = Dataset::read_csv(data)?;
    let (loaded, names) = checkpoint::load(model)?;
    align_entities(&mut dataset, &names)?;
    let m = evaluate_split(loaded.as_model(), &dataset, split)?;
    println!(
        "[{}] n = {}, accuracy {:.4}, macro AP {:.4}",
        m.split, m.n, m.accuracy, m.macro_ap
    );
    if dataset.cluster.is_some() {
        for c in per_cluster_metrics(loaded.as_model(), &dataset, split)? {
            println!(
                "  cluster {:<8} n = {:<6} accuracy {:.4}, macro AP {:.4}",
                c.cluster, c.n, c.accuracy, c.macro_ap
            );
        }
    }
    if let Some(path) = out {
        analysis::write_metrics_json(path, &m)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    splits: Vec<analysis::SplitMetrics>,
    per_cluster: Vec<analysis::ClusterMetrics>,
    cluster_recovery: Option<analysis::ClusterRecovery>,
    importance: Vec<analysis::ImportanceRecord>,
}

fn cmd_analyze(
    data: &Path,
    model: &Path,
    seed: Option<u64>,
    repeats: usize,
    out: &Path,
) -> Result<(), Error> {
    std::fs::create_dir_all(out)?;
    let mut dataset = Dataset::read_csv(data)?;
    let (loaded, names) = checkpoint::load(model)?;
    align_entities(&mut dataset, &names)?;
    let m: &dyn Model = loaded.as_model();

    let mut splits = Vec::new();
    for s in Split::ALL {
        if !dataset.indices_of(s).is_empty() {
            splits.push(evaluate_split(m, &dataset, s)?);
        }
    }
    let per_cluster = if dataset.cluster.is_some() {
        per_cluster_metrics(m, &dataset, Split::Test)?
    } else {
        Vec::new()
    };

    let mut recovery = None;
    if let LoadedModel::ExNet(net) = &loaded {
        let report = net.extract_attributions()?;
        let clusters = dataset.entity_clusters();
        analysis::write_attributions_csv(
            &out.join("attributions.csv"),
            &report,
            &dataset.entity_names,
            clusters.as_deref(),
        )?;
        analysis::write_embeddings_csv(&out.join("embeddings.csv"), &report, &dataset.entity_names)?;
        if let Some(truth) = &clusters {
            let rec = cluster_recovery(&report, truth)?;
            println!(
                "cluster recovery: ARI {:.4}, strong fraction {:.4}, {} experts used",
                rec.ari, rec.strong_fraction, rec.experts_used
            );
            recovery = Some(rec);
        }
    }

    let groups = per_feature_groups(dataset.num_features());
    let importance =
        permutation_importance(m, &dataset, Split::Test, &groups, repeats, seed.unwrap_or(0))?;
    for rec in &importance {
        println!(
            "importance {:<6} drop {:+.4} (std {:.4})",
            rec.name, rec.mean_drop, rec.std_drop
        );
    }
    for s in &splits {
        println!(
            "[{}] n = {}, accuracy {:.4}, macro AP {:.4}",
            s.split, s.n, s.accuracy, s.macro_ap
        );
    }

    let report = AnalyzeReport {
        splits,
        per_cluster,
        cluster_recovery: recovery,
        importance,
    };
    analysis::write_metrics_json(&out.join("metrics.json"), &report)?;
    println!("reports written to {}", out.display());
    Ok(())
}

fn cmd_sweep(
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Error> {
    let cfg = load_config(config, seed)?;
    std::fs::create_dir_all(out)?;
    let dataset = Dataset::read_csv(data)?;
    write_resolved_config(out, &cfg)?;

    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record([
        "label",
        "n_experts",
        "lambda_spec",
        "lambda_entropy",
        "seed",
        "epochs",
        "best_epoch",
        "test_accuracy",
        "test_macro_ap",
        "ari",
        "strong_fraction",
    ])?;
    let root = SeededRng::new(cfg.seed);
    for (i, point) in cfg.sweep.points.iter().enumerate() {
        let mut net_cfg = cfg.exnet.clone();
        net_cfg.n_experts = point.n_experts;
        if point.n_experts == 1 {
            // no pairs to decorrelate and nothing to route
            net_cfg.lambda_spec = 0.0;
            net_cfg.lambda_entropy = 0.0;
        }
        if let Some(l) = point.lambda_spec {
            net_cfg.lambda_spec = l;
        }
        if let Some(l) = point.lambda_entropy {
            net_cfg.lambda_entropy = l;
        }
        if net_cfg.top_l > net_cfg.n_experts {
            net_cfg.top_l = net_cfg.n_experts;
        }
        let point_seed = root.stream(&format!("point{i}")).next_u64();
        let label = point.label();
        println!(
            "[{label}] training n = {} (lambda_spec {}, lambda_entropy {}, seed {point_seed})",
            net_cfg.n_experts, net_cfg.lambda_spec, net_cfg.lambda_entropy
        );
        let (mut model, history) = exnet_train(&dataset, &net_cfg, &cfg.optim, point_seed)?;
        let point_dir = out.join(&label);
        std::fs::create_dir_all(&point_dir)?;
        checkpoint::save_exnet(&point_dir.join("model.ckpt"), &mut model, &dataset.entity_names)?;
        analysis::write_history_csv(&point_dir.join("history.csv"), &history)?;
        let m = evaluate_split(&model, &dataset, Split::Test)?;
        let (ari, strong) = match dataset.entity_clusters() {
            Some(truth) if net_cfg.n_experts > 1 => {
                let rec = cluster_recovery(&model.extract_attributions()?, &truth)?;
                (rec.ari.to_string(), rec.strong_fraction.to_string())
            }
            _ => (String::new(), String::new()),
        };
        println!(
            "[{label}] test accuracy {:.4}, macro AP {:.4} ({} epochs)",
            m.accuracy,
            m.macro_ap,
            history.epochs.len()
        );
        w.write_record(&[
            label,
            net_cfg.n_experts.to_string(),
            net_cfg.lambda_spec.to_string(),
            net_cfg.lambda_entropy.to_string(),
            point_seed.to_string(),
            history.epochs.len().to_string(),
            history.best_epoch.to_string(),
            m.accuracy.to_string(),
            m.macro_ap.to_string(),
            ari,
            strong,
        ])?;
        w.flush()?;
    }
    println!("sweep summary written to {}", out.join("summary.csv").display());
    Ok(())
}

/// Errors caused by user input rather than internal failures.
fn is_user_error(err: &Error) -> bool {
    matches!(
        err,
        Error::InvalidConfig(_)
            | Error::InvalidArgument(_)
            | Error::Dataset(_)
            | Error::Checkpoint(_)
            | Error::UnknownEntity(_)
            | Error::Io(_)
            | Error::Csv(_)
    )
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen { config, seed, out } => cmd_gen(config.as_deref(), seed, &out),
        Command::Train {
            data,
            config,
            seed,
            model,
            out,
        } => cmd_train(&data, config.as_deref(), seed, model, &out),
        Command::Eval {
            data,
            model,
            split,
            out,
        } => cmd_eval(&data, &model, &split, out.as_deref()),
        Command::Analyze {
            data,
            model,
            seed,
            repeats,
            out,
        } => cmd_analyze(&data, &model, seed, repeats, &out),
        Command::Sweep {
            data,
            config,
            seed,
            out,
        } => cmd_sweep(&data, config.as_deref(), seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if is_user_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
