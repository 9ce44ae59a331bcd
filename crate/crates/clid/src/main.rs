//! Command-line front end. All logic lives in the library; this file only
//! parses flags, merges them over an optional config file, and prints or
//! writes what the library returns.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use clid::data::{gen_synthetic, write_sidecar, SyntheticSpec};
use clid::experiment::{
    eval_predictions_path, render_probe_table, resolve_out_dir, run_experiment, sweep_rows,
    sweep_to_csv, DataSource, ExperimentSpec, Method, MetricStat, DEFAULT_RATIO_GRID,
    SIDECAR_FILE_NAME, SPLIT_FILE_NAMES, SPLIT_FRACTIONS,
};
use clid::loss::{compat_probe, DistillConfig, DistillKind};
use clid::metrics::MetricsReport;
use clid::train::{weight_ratio_sweep, Protocol};

#[derive(Parser)]
#[command(
    name = "clid",
    about = "Train and evaluate ranking models that distill privileged context features",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic contextual-click dataset as three query-disjoint split files.
    Gen(GenArgs),
    /// Train one method over several trials and write per-trial and aggregate metrics.
    Run(RunArgs),
    /// Probe distillation losses for calibration compatibility.
    Probe(ProbeArgs),
    /// Sweep the distillation weight ratio against one shared teacher.
    Sweep(SweepArgs),
    /// Compute metrics over an existing predictions file.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for the split files and the metadata sidecar.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generation parameters; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    docs_min: Option<usize>,
    #[arg(long)]
    docs_max: Option<usize>,
    #[arg(long)]
    feat_dim: Option<usize>,
    #[arg(long)]
    context_strength: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment spec; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// base | pridropout | pal | base+pointwise | base+listmle | base+listnet | clid
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Result directory; relative paths resolve under $CLID_OUT_ROOT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Read split files from this directory instead of generating data.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// teacher_first | simultaneous
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_lists: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Distillation weight ratio (1-alpha)/alpha; distilling methods only.
    #[arg(long)]
    ratio: Option<f64>,
    /// Temperature of the pointwise distillation loss.
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Comma-separated losses to probe; all four when omitted.
    #[arg(long)]
    losses: Option<String>,
    #[arg(long, default_value_t = 2)]
    n_min: usize,
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated weight-ratio grid.
    #[arg(long)]
    grid: Option<String>,
    /// Write the sweep CSV here; stdout when omitted and no out directory is set.
    #[arg(long)]
    out_file: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// CSV of qid,label,prediction or qid,user_id,label,prediction.
    #[arg(long)]
    predictions: PathBuf,
    /// Emit one CSV row instead of key=value lines.
    #[arg(long)]
    csv: bool,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Probe(args) => cmd_probe(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Eval(args) => cmd_eval(args),
    }
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<()> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SyntheticSpec>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(v) = args.queries {
        spec.num_queries = v;
    }
    if let Some(v) = args.docs_min {
        spec.docs_min = v;
    }
    if let Some(v) = args.docs_max {
        spec.docs_max = v;
    }
    if let Some(v) = args.feat_dim {
        spec.feat_dim = v;
    }
    if let Some(v) = args.context_strength {
        spec.context_strength = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    spec.validate()?;

    let data = gen_synthetic(&spec)?;
    let (train, valid, test) = data.dataset.split_three(SPLIT_FRACTIONS.0, SPLIT_FRACTIONS.1)?;
    let out = resolve_out_dir(&args.out);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for (ds, name) in [(&train, SPLIT_FILE_NAMES[0]), (&valid, SPLIT_FILE_NAMES[1]), (&test, SPLIT_FILE_NAMES[2])] {
        let path = out.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        ds.write_svmlight(&mut w)?;
        w.flush()?;
        println!("wrote {} ({} queries, {} samples)", path.display(), ds.num_queries(), ds.num_samples());
    }
    let sidecar = out.join(SIDECAR_FILE_NAME);
    let mut w = BufWriter::new(File::create(&sidecar)?);
    write_sidecar(&data, &mut w)?;
    w.flush()?;
    println!("wrote {}", sidecar.display());
    Ok(())
}

/// Build an experiment spec from an optional config file plus overrides.
fn build_spec(args: &RunArgs, default_method: Option<Method>) -> anyhow::Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::load(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => {
            let method = match (&args.method, default_method) {
                (Some(m), _) => m.parse::<Method>()?,
                (None, Some(m)) => m,
                (None, None) => bail!("either --config or --method is required"),
            };
            ExperimentSpec::new(method)
        }
    };
    if let Some(m) = &args.method {
        spec.method = m.parse::<Method>()?;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(out) = &args.out {
        spec.out_dir = Some(out.clone());
    }
    if let Some(dir) = &args.data_dir {
        spec.data = DataSource::Files {
            dir: Some(dir.clone()),
            train: None,
            valid: None,
            test: None,
            transform: true,
        };
    }
    if let Some(p) = &args.protocol {
        spec.train.protocol = p.parse::<Protocol>()?;
    }
    if let Some(v) = args.seed {
        spec.train.seed = v;
    }
    if let Some(v) = args.epochs {
        spec.train.epochs = v;
    }
    if let Some(v) = args.lr {
        spec.train.lr = v;
    }
    if let Some(v) = args.batch_lists {
        spec.train.batch_lists = v;
    }
    if let Some(v) = args.weight_decay {
        spec.train.weight_decay = v;
    }
    if args.ratio.is_some() || args.temperature.is_some() {
        let kind = spec
            .method
            .distill_kind()
            .ok_or_else(|| anyhow::anyhow!("--ratio/--temperature need a distilling method, not {}", spec.method))?;
        let current = spec
            .train
            .distill
            .clone()
            .or_else(|| spec.method.default_distill())
            .expect("distilling method has a default");
        let ratio = args.ratio.unwrap_or(current.weight_ratio());
        let temperature = args.temperature.unwrap_or(current.temperature);
        spec.train.distill = Some(DistillConfig::from_weight_ratio(kind, ratio, temperature)?);
    }
    Ok(spec)
}

fn print_stat(name: &str, stat: &MetricStat) {
    match stat.ci95 {
        Some(ci) => println!("{name} mean={} ci95={}", stat.mean, ci),
        None => println!("{name} mean={}", stat.mean),
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let spec = build_spec(&args, None)?;
    let summary = run_experiment(&spec)?;
    println!("method={} trials={}", summary.method, summary.aggregate.trials);
    print_stat("ndcg10", &summary.aggregate.ndcg10);
    print_stat("logloss", &summary.aggregate.logloss);
    print_stat("ece", &summary.aggregate.ece);
    if let Some(g) = &summary.aggregate.gauc {
        print_stat("gauc", g);
    }
    if let Some(dir) = &summary.out_dir {
        println!("results in {}", dir.display());
    }
    Ok(())
}

fn cmd_probe(args: ProbeArgs) -> anyhow::Result<()> {
    let kinds: Vec<DistillKind> = match &args.losses {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<DistillKind>())
            .collect::<Result<_, _>>()?,
        None => DistillKind::ALL.to_vec(),
    };
    let reports = kinds
        .iter()
        .map(|&k| compat_probe(k, args.n_min, args.n_max, args.trials, args.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let table = render_probe_table(&reports);
    match &args.out {
        Some(path) => {
            clid::experiment::write_atomic(path, &table)?;
            println!("wrote {}", path.display());
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let spec = build_spec(&args.run, Some(Method::Clid))?;
    let cfg = spec.resolved_train()?;
    let splits = spec.data.load()?;
    let grid: Vec<f64> = match &args.grid {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad ratio {s:?}")))
            .collect::<anyhow::Result<_>>()?,
        None => DEFAULT_RATIO_GRID.to_vec(),
    };
    let results = weight_ratio_sweep(&splits, &spec.model, &cfg, &grid)?;
    let csv = sweep_to_csv(&sweep_rows(&results));
    let target = args.out_file.clone().or_else(|| {
        spec.out_dir.as_deref().map(|d| resolve_out_dir(d).join("sweep.csv"))
    });
    match target {
        Some(path) => {
            clid::experiment::write_atomic(&path, &csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<()> {
    let report = eval_predictions_path(&args.predictions)?;
    if args.csv {
        println!("{}", MetricsReport::CSV_HEADER);
        println!("{}", report.to_csv_row());
    } else {
        print!("{}", report.to_kv_text());
    }
    Ok(())
}
