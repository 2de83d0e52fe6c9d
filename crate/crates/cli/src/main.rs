//! `rcad` — generate synthetic sequence data, preprocess tables, select
//! features, train recurrent classifiers and evaluate them.

mod config;
mod rundir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rcad_core::datagen::{self, import_csv};
use rcad_core::dataset::SequenceDataset;
use rcad_core::evaluate::{evaluate_checkpoint, render_report, EvalReport, ReportFormat};
use rcad_core::features::{flag_outliers, pearson_matrix, select_features};
use rcad_core::preprocess::{clean, standardize, DataTable, MissingPolicy};
use rcad_core::recurrent::{gradient_check, Checkpoint, GradCheckConfig, Variant};
use rcad_core::training::{run_pipeline, Optimizer, LABEL_COLUMN};

use config::RunConfig;
use rundir::RunDir;

#[derive(Parser, Debug)]
#[command(name = "rcad", version, about = "Recurrent sequence classification pipeline")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for run outputs (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace an existing run directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic sequence dataset.
    Generate(GenerateArgs),
    /// Clean and standardize a tabular CSV.
    Preprocess(PreprocessArgs),
    /// Correlation matrix, feature ranking and outlier flags.
    Features(FeaturesArgs),
    /// Train a model and write its checkpoint and history.
    Train(TrainArgs),
    /// Evaluate one or more checkpoints on a dataset.
    Evaluate(EvaluateArgs),
    /// Compare backprop gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Render saved evaluation reports.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    balance: Option<f64>,
    #[arg(long)]
    separability: Option<f64>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum MissingArg {
    DropRow,
    ImputeMean,
    ImputeConstant,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Tabular CSV with a header row; empty cells are missing values.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    missing: Option<MissingArg>,
    /// Fill value for `--missing impute-constant`.
    #[arg(long, default_value_t = 0.0)]
    fill_value: f64,
    /// Skip z-score standardization.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    /// Sequence dataset CSV; features are summarized by their time means.
    #[arg(long, conflicts_with = "table", required_unless_present = "table")]
    data: Option<PathBuf>,
    /// Plain tabular CSV (requires `--target`).
    #[arg(long, requires = "target")]
    table: Option<PathBuf>,
    /// Target column for `--table`.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    cap: Option<f64>,
    #[arg(long)]
    outlier_threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Sequence dataset CSV; without it a dataset is generated from the config.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Comma-separated hidden sizes, one per recurrent layer.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the k features most correlated with the label.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    no_standardize: bool,
    /// Also write an SVG plot of the curves.
    #[arg(long)]
    svg: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sequence dataset CSV in the raw (unscaled) feature space.
    #[arg(long)]
    data: PathBuf,
    /// Further checkpoints to evaluate side by side.
    #[arg(long, num_args = 1..)]
    compare: Vec<PathBuf>,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Check one variant only.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    /// Perturb the analytic gradient of this tensor (harness self-test).
    #[arg(long, hide = true)]
    corrupt: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report JSON files written by `evaluate`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(config, a, cli.force),
        Command::Preprocess(a) => cmd_preprocess(config, a, cli.force),
        Command::Features(a) => cmd_features(config, a, cli.force),
        Command::Train(a) => cmd_train(config, a, cli.force),
        Command::Evaluate(a) => cmd_evaluate(config, a, cli.force),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn cmd_generate(mut config: RunConfig, a: GenerateArgs, force: bool) -> Result<()> {
    if let Some(seed) = a.seed {
        config.set_seed(seed);
    }
    let d = &mut config.data;
    set(&mut d.n_samples, a.samples);
    set(&mut d.seq_len, a.seq_len);
    set(&mut d.n_features, a.features);
    set(&mut d.class_balance, a.balance);
    set(&mut d.separability, a.separability);
    config.validate()?;

    let data = datagen::generate(&config.data)?;
    let mut run = RunDir::create("generate", &config, &[], force)?;
    let mut csv = Vec::new();
    datagen::write_csv(&data, &mut csv)?;
    run.write("data.csv", &csv)?;
    let dir = run.finish()?;
    println!("generated {} sequences into {}", data.len(), dir.join("data.csv").display());
    Ok(())
}

fn cmd_preprocess(mut config: RunConfig, a: PreprocessArgs, force: bool) -> Result<()> {
    if let Some(m) = a.missing {
        config.preprocess.missing = match m {
            MissingArg::DropRow => MissingPolicy::DropRow,
            MissingArg::ImputeMean => MissingPolicy::ImputeMean,
            MissingArg::ImputeConstant => MissingPolicy::ImputeConstant { value: a.fill_value },
        };
    }
    if a.no_standardize {
        config.preprocess.standardize = false;
    }
    config.validate()?;

    let table = DataTable::read_csv_path(&a.input)?;
    let (cleaned, report) = clean(&table, config.preprocess.missing)?;
    let mut run = RunDir::create("preprocess", &config, &[&a.input], force)?;
    let output = if config.preprocess.standardize {
        let (scaled, scaler) = standardize(&cleaned)?;
        run.write("scaler.json", to_json(&scaler)?.as_bytes())?;
        let degenerate = scaler.degenerate_columns();
        if !degenerate.is_empty() {
            eprintln!("warning: constant columns zeroed: {}", degenerate.join(", "));
        }
        scaled
    } else {
        cleaned
    };
    run.write("cleaned.csv", output.to_csv_string()?.as_bytes())?;
    run.write("clean_report.json", to_json(&report)?.as_bytes())?;
    let dir = run.finish()?;
    println!(
        "{} rows in, {} rows out ({} duplicates removed, {} dropped, {} imputed) -> {}",
        report.input_rows,
        report.output_rows,
        report.duplicates_removed,
        report.rows_dropped,
        report.missing_imputed.iter().sum::<usize>(),
        dir.display()
    );
    Ok(())
}

fn cmd_features(mut config: RunConfig, a: FeaturesArgs, force: bool) -> Result<()> {
    if a.k.is_some() {
        config.features.k = a.k;
    }
    set(&mut config.features.redundancy_cap, a.cap);
    set(&mut config.features.outlier_threshold, a.outlier_threshold);
    config.validate()?;

    let (input, table, target) = match (&a.data, &a.table) {
        (Some(path), _) => {
            let data = load_dataset(path)?;
            (path, data.summary_table(LABEL_COLUMN)?, LABEL_COLUMN.to_string())
        }
        (None, Some(path)) => {
            let target = a.target.clone().expect("clap requires --target with --table");
            (path, DataTable::read_csv_path(path)?, target)
        }
        (None, None) => bail!("pass --data or --table"),
    };
    let corr = pearson_matrix(&table).context("correlation needs a complete table; run `rcad preprocess` first")?;
    let k = config.features.k.unwrap_or(corr.len().saturating_sub(1)).min(corr.len().saturating_sub(1));
    let selection = select_features(&corr, &target, k, config.features.redundancy_cap)?;
    let outliers = flag_outliers(&table, &corr, config.features.outlier_threshold)?;

    let mut run = RunDir::create("features", &config, &[input.as_path()], force)?;
    let mut csv = Vec::new();
    corr.write_csv(&mut csv)?;
    run.write("correlation.csv", &csv)?;
    run.write("selection.json", to_json(&selection)?.as_bytes())?;
    run.write("outliers.json", to_json(&outliers)?.as_bytes())?;
    let dir = run.finish()?;
    if selection.shortfall {
        eprintln!("warning: redundancy cap left only {} of {k} features", selection.features.len());
    }
    if outliers.warning {
        eprintln!("warning: no usable feature pair for outlier detection");
    }
    println!("selected: {}", selection.features.join(", "));
    println!("outlier rows: {:?}", outliers.rows);
    println!("-> {}", dir.display());
    Ok(())
}

fn cmd_train(mut config: RunConfig, a: TrainArgs, force: bool) -> Result<()> {
    if let Some(seed) = a.seed {
        config.set_seed(seed);
    }
    if let Some(v) = a.variant {
        if v != config.model.variant && a.hidden.is_none() {
            config.model.hidden_sizes = None;
        }
        config.model.variant = v;
    }
    if a.hidden.is_some() {
        config.model.hidden_sizes = a.hidden;
    }
    set(&mut config.model.dropout_rate, a.dropout);
    let t = &mut config.train;
    set(&mut t.epochs, a.epochs);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.learning_rate, a.lr);
    set(&mut t.optimizer, a.optimizer);
    set(&mut t.val_fraction, a.val_fraction);
    set(&mut t.early_stop_patience, a.patience);
    if a.k.is_some() {
        config.features.k = a.k;
    }
    if a.no_standardize {
        config.preprocess.standardize = false;
    }
    config.validate()?;

    let data = match &a.data {
        Some(path) => load_dataset(path)?,
        None => datagen::generate(&config.data)?,
    };
    let inputs: Vec<&Path> = a.data.iter().map(PathBuf::as_path).collect();
    let mut run = RunDir::create("train", &config, &inputs, force)?;
    let trained = run_pipeline(&config.model_spec(data.n_features()), &config.train, &config.pipeline(), &data)
        .context("training failed")?;

    run.write("checkpoint.json", trained.checkpoint().to_json().as_bytes())?;
    run.write("history.csv", trained.history.to_csv_string().as_bytes())?;
    if a.svg {
        run.write("history.svg", trained.history.to_svg().as_bytes())?;
    }
    let dir = run.finish()?;
    let last = trained.history.last().expect("at least one epoch");
    println!(
        "{} on {} train / {} val samples, {} epochs: train loss {:.4}, val loss {:.4}, train acc {:.3}, val acc {:.3}",
        config.model.variant,
        trained.train_size,
        trained.val_size,
        trained.history.len(),
        last.train_loss,
        last.val_loss,
        last.train_accuracy,
        last.val_accuracy
    );
    println!("-> {}", dir.display());
    Ok(())
}

fn cmd_evaluate(config: RunConfig, a: EvaluateArgs, force: bool) -> Result<()> {
    let data = load_dataset(&a.data)?;
    if data.is_empty() {
        bail!("{} contains no sequences", a.data.display());
    }
    let paths: Vec<&PathBuf> = std::iter::once(&a.checkpoint).chain(&a.compare).collect();
    let checkpoints = paths
        .iter()
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let names = report_names(&checkpoints);

    let mut inputs: Vec<&Path> = vec![a.data.as_path()];
    inputs.extend(paths.iter().map(|p| p.as_path()));
    let mut run = RunDir::create("evaluate", &config, &inputs, force)?;
    let mut reports = Vec::new();
    for (i, (ck, name)) in checkpoints.iter().zip(&names).enumerate() {
        let mut report = evaluate_checkpoint(ck, &data, name)
            .with_context(|| format!("evaluating {}", paths[i].display()))?;
        let suffix = if paths.len() > 1 { format!("_{}", i + 1) } else { String::new() };
        let curves = format!("roc{suffix}.csv");
        if !report.roc.is_empty() {
            run.write(&curves, report.roc_csv().as_bytes())?;
            report.curves_file = Some(curves);
        }
        run.write(&format!("report{suffix}.json"), report.to_json().as_bytes())?;
        reports.push(report);
    }
    let rendered = render_report(&reports, a.format)?;
    let ext = match a.format {
        ReportFormat::Table => "md",
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
    };
    run.write(&format!("summary.{ext}"), rendered.as_bytes())?;
    let dir = run.finish()?;
    print!("{rendered}");
    println!("-> {}", dir.display());
    Ok(())
}

/// Variant names, disambiguated by position when they repeat.
fn report_names(checkpoints: &[Checkpoint]) -> Vec<String> {
    let variants: Vec<String> = checkpoints.iter().map(|c| c.spec.variant.to_string()).collect();
    variants
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if variants.iter().filter(|w| *w == v).count() > 1 {
                format!("{v}-{}", i + 1)
            } else {
                v.clone()
            }
        })
        .collect()
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let variants: Vec<Variant> = a.variant.map_or_else(|| Variant::ALL.to_vec(), |v| vec![v]);
    let mut failures = Vec::new();
    println!("{:<8} {:<18} {:>8} {:>14}  result", "variant", "tensor", "elements", "max rel error");
    for v in variants {
        let mut cfg = GradCheckConfig::standard(v);
        set(&mut cfg.seed, a.seed);
        let report = gradient_check(&cfg, a.corrupt.as_deref())?;
        for t in report {
            println!(
                "{:<8} {:<18} {:>8} {:>14.3e}  {}",
                v.name(),
                t.name,
                t.elements,
                t.max_rel_error,
                if t.passed { "ok" } else { "FAIL" }
            );
            if !t.passed {
                failures.push(format!("{v}:{}", t.name));
            }
        }
    }
    if !failures.is_empty() {
        bail!("gradient check failed for {}", failures.join(", "));
    }
    println!("all tensors within tolerance {:e}", GradCheckConfig::standard(Variant::Gru).tolerance);
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &a.inputs {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        // accept single reports as well as the array form of `--format json`
        match serde_json::from_str::<Vec<EvalReport>>(&text) {
            Ok(many) => reports.extend(many),
            Err(_) => reports.push(EvalReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))?),
        }
    }
    print!("{}", render_report(&reports, a.format)?);
    Ok(())
}

fn load_dataset(path: &Path) -> Result<SequenceDataset> {
    import_csv(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
