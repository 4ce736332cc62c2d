//! `infgrand`: train graph-convolutional teachers, distill them into plain
//! MLP students with influence-guided weighting, and run the experiment
//! suite around them.
//!
//! Experiment subcommands read a JSON manifest (`--config`), allow
//! `--set key=value` overrides of any manifest or training-config field,
//! and write `report.json`, `epochs.csv` and (for sweeps) `sweep.csv`
//! under `--out`. The exit code is nonzero when an experiment's
//! directional assertion fails, so runs can gate CI.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use infgrand::data::load_dataset;
use infgrand::experiments::{run_experiment, ExperimentKind, ExperimentManifest};
use infgrand::graph::normalize_adjacency;
use infgrand::influence::{compute_influence_cached, InfluenceMode};
use infgrand::nn::{load_gcn, load_mlp, save_gcn};
use infgrand::pipeline::{evaluate_gcn, evaluate_mlp, train_teacher};
use infgrand::propagation::{load_pooled_features, student_input_cached, PoolMode};
use infgrand::split::Split;
use infgrand::Error;

#[derive(Parser)]
#[command(
    name = "infgrand",
    version,
    about = "Influence-guided graph-to-MLP distillation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ManifestArgs {
    /// JSON experiment manifest
    #[arg(long)]
    config: PathBuf,
    /// Override any manifest key, e.g. --set learning_rate=0.005 or
    /// --set weights.lambda=0.1 or --set split.per_class=10
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides the manifest's out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list (overrides the manifest's seeds)
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the teacher GCN alone and write its checkpoint and report
    TrainTeacher(ManifestArgs),
    /// The main comparison: teacher, distilled student, supervised MLP
    Distill(ManifestArgs),
    /// Evaluate a saved checkpoint on a dataset split
    Eval(EvalArgs),
    /// Teacher trained on high- vs low-influence labeled subsets
    Q1(ManifestArgs),
    /// Full model vs influence-only and propagation-only variants
    Ablate(ManifestArgs),
    /// Shrinking labeled sets, influence-guided vs uniform weighting
    LabelScarce(ManifestArgs),
    /// Sweep one knob (lambda, gamma2, delta2, p, pool, k) over a grid
    Sweep(ManifestArgs),
    /// Median forward latency of the student vs 2- and 3-layer teachers
    Timing(ManifestArgs),
    /// Loss weights swapped between influence, degree and PageRank
    CentralitySwap(ManifestArgs),
    /// Compute (or reuse) the influence score cache for a dataset
    Influence(InfluenceArgs),
    /// Precompute (or reuse) the pooled multi-hop student input
    Propagate(PropagateArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// Parameter checkpoint (teacher or student)
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory
    #[arg(long)]
    dataset: PathBuf,
    /// Split JSON file; when omitted, all nodes are evaluated
    #[arg(long)]
    split: Option<PathBuf>,
    /// Which split set to evaluate: labeled, val or test
    #[arg(long, default_value = "test")]
    on: String,
    /// Pooled-feature cache for MLP checkpoints; raw features otherwise
    #[arg(long)]
    xtilde: Option<PathBuf>,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// dense or khop
    #[arg(long, default_value = "dense")]
    mode: String,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Cache file to write (reused when it matches the inputs)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PropagateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Number of propagation hops
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// mean, max or min
    #[arg(long, default_value = "mean")]
    pool: String,
    /// Cache file to write (reused when it matches the inputs)
    #[arg(long)]
    out: PathBuf,
}

fn apply_set(value: &mut serde_json::Value, key: &str, raw: &str) -> Result<(), Error> {
    // bare manifest keys stay top-level; loss weights route into
    // "config.weights"; everything else into "config"
    const MANIFEST_KEYS: [&str; 13] = [
        "kind",
        "dataset",
        "config",
        "seeds",
        "out_dir",
        "split",
        "split_seed",
        "q1_fraction",
        "scarce_per_class",
        "knob",
        "grid",
        "timing_reps",
        "timing_warmups",
    ];
    const WEIGHT_KEYS: [&str; 6] = ["lambda", "delta1", "delta2", "gamma1", "gamma2", "tau"];
    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(|s| s.to_string()).collect()
    } else if MANIFEST_KEYS.contains(&key) {
        vec![key.to_string()]
    } else if WEIGHT_KEYS.contains(&key) {
        vec!["config".into(), "weights".into(), key.to_string()]
    } else {
        vec!["config".into(), key.to_string()]
    };
    let mut cursor = value;
    for part in &path[..path.len() - 1] {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| Error::input(format!("--set {}: '{}' is not an object", key, part)))?;
        cursor = obj.entry(part.clone()).or_insert(serde_json::json!({}));
    }
    let obj = cursor
        .as_object_mut()
        .ok_or_else(|| Error::input(format!("--set {}: target is not an object", key)))?;
    let parsed = serde_json::from_str::<serde_json::Value>(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    obj.insert(path.last().unwrap().clone(), parsed);
    Ok(())
}

fn load_manifest(args: &ManifestArgs, kind: ExperimentKind) -> Result<ExperimentManifest, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    for set in &args.sets {
        let (k, v) = set
            .split_once('=')
            .ok_or_else(|| Error::input(format!("--set expects KEY=VALUE, got '{}'", set)))?;
        apply_set(&mut value, k, v)?;
    }
    let mut manifest: ExperimentManifest = serde_json::from_value(value)?;
    manifest.kind = kind;
    if let Some(out) = &args.out {
        manifest.out_dir = out.clone();
    }
    if !args.seeds.is_empty() {
        manifest.seeds = args.seeds.clone();
    }
    manifest.validate()?;
    Ok(manifest)
}

fn run_manifest_command(args: &ManifestArgs, kind: ExperimentKind) -> Result<bool, Error> {
    let manifest = load_manifest(args, kind)?;
    let report = run_experiment(&manifest)?;
    for arm in &report.arms {
        println!(
            "{:<28} mean {:.4}  std {:.4}  (n={})",
            arm.label,
            arm.mean,
            arm.std,
            arm.per_seed.len()
        );
    }
    let pass = report.directional_pass.unwrap_or(true);
    match report.directional_pass {
        Some(true) => println!("directional check: pass"),
        Some(false) => println!("directional check: FAIL"),
        None => {}
    }
    println!(
        "report written to {}",
        manifest.out_dir.join("report.json").display()
    );
    Ok(pass)
}

fn run_train_teacher(args: &ManifestArgs) -> Result<bool, Error> {
    use infgrand::data::generate_synthetic;
    use infgrand::experiments::DatasetSource;
    use infgrand::pipeline::{make_inductive_split, make_transductive_split, Setting};

    let manifest = load_manifest(args, ExperimentKind::Main)?;
    let data = match &manifest.dataset {
        DatasetSource::Path(p) => load_dataset(p)?,
        DatasetSource::Synthetic(spec) => generate_synthetic(spec)?,
    };
    let ss = manifest.split;
    let seed = manifest.split_seed.unwrap_or(manifest.seeds[0]);
    let mut cfg = manifest.config.clone();
    cfg.seed = manifest.seeds[0];
    let (params, report) = match cfg.setting {
        Setting::Transductive => {
            let split = make_transductive_split(
                &data.labels,
                data.num_classes,
                ss.per_class,
                ss.val_size,
                ss.test_size,
                seed,
            )?;
            train_teacher(&data, &split, &cfg)?
        }
        Setting::Inductive => {
            let ind = make_inductive_split(
                &data.graph,
                &data.labels,
                data.num_classes,
                ss.observed_fraction,
                ss.per_class,
                ss.val_size,
                ss.test_size,
                seed,
            )?;
            // train on the observed subgraph
            let remap = &ind.remap;
            let mut features = infgrand::FeatureMatrix::zeros(remap.len(), data.features.cols());
            for new in 0..remap.len() {
                features
                    .row_mut(new)
                    .copy_from_slice(data.features.row(remap.to_old(new)));
            }
            let labels: Vec<usize> = (0..remap.len())
                .map(|new| data.labels[remap.to_old(new)])
                .collect();
            let obs_data = infgrand::data::Dataset {
                graph: ind.observed_graph.clone(),
                features,
                labels,
                num_classes: data.num_classes,
                name: format!("{}-observed", data.name),
            };
            train_teacher(&obs_data, &ind.observed_split(), &cfg)?
        }
    };
    std::fs::create_dir_all(&manifest.out_dir)?;
    let ckpt = manifest.out_dir.join("teacher.ckpt");
    save_gcn(&ckpt, &params, cfg.seed, report.epochs.len() as u64)?;
    std::fs::write(
        manifest.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    let mut csv = String::from("epoch,train_loss,val_loss,train_acc,val_acc\n");
    for row in &report.epochs {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.train_loss, row.val_loss, row.train_acc, row.val_acc
        ));
    }
    std::fs::write(manifest.out_dir.join("epochs.csv"), csv)?;
    println!(
        "teacher trained: best epoch {}, val acc {:.4}, test acc {:.4}",
        report.best_epoch, report.epochs[report.best_epoch].val_acc, report.test_accuracy
    );
    println!("checkpoint written to {}", ckpt.display());
    Ok(true)
}

fn run_eval(args: &EvalArgs) -> Result<bool, Error> {
    let data = load_dataset(&args.dataset)?;
    let nodes: Vec<usize> = match &args.split {
        Some(path) => {
            let split = Split::load(path)?;
            split.validate(data.num_nodes())?;
            match args.on.as_str() {
                "labeled" => split.labeled,
                "val" => split.val,
                "test" => split.test,
                other => {
                    return Err(Error::input(format!(
                        "unknown split set '{}'; expected labeled, val or test",
                        other
                    )))
                }
            }
        }
        None => (0..data.num_nodes()).collect(),
    };
    let accuracy = match load_mlp(&args.checkpoint) {
        Ok((params, _, _)) => {
            let input = match &args.xtilde {
                Some(path) => {
                    let pooled = load_pooled_features(path)?;
                    let expect =
                        infgrand::hashing::graph_features_hash(&data.graph, &data.features);
                    if pooled.graph_hash != expect {
                        return Err(Error::input(format!(
                            "{} was computed for a different graph/feature pair",
                            path.display()
                        )));
                    }
                    pooled.matrix
                }
                None => data.features.clone(),
            };
            evaluate_mlp(&params, &input, &nodes, &data.labels)?
        }
        Err(_) => {
            let (params, _, _) = load_gcn(&args.checkpoint)?;
            let a = normalize_adjacency(&data.graph);
            evaluate_gcn(&params, &a, &data.features, &nodes, &data.labels)?
        }
    };
    println!(
        "{}",
        serde_json::json!({
            "accuracy": accuracy,
            "nodes": nodes.len(),
            "on": if args.split.is_some() { args.on.clone() } else { "all".into() },
        })
    );
    Ok(true)
}

fn run_influence(args: &InfluenceArgs) -> Result<bool, Error> {
    let data = load_dataset(&args.dataset)?;
    let mode = InfluenceMode::from_str(&args.mode)?;
    let (table, hit) =
        compute_influence_cached(&data.graph, &data.features, args.k, mode, &args.out)?;
    let max = table.gis.iter().cloned().fold(0.0f64, f64::max);
    let mean = table.gis.iter().sum::<f64>() / table.gis.len() as f64;
    println!(
        "{}",
        serde_json::json!({
            "nodes": table.gis.len(),
            "mode": format!("{}", table.mode),
            "k": table.k,
            "cache_hit": hit,
            "gis_mean": mean,
            "gis_max": max,
            "out": args.out.display().to_string(),
        })
    );
    Ok(true)
}

fn run_propagate(args: &PropagateArgs) -> Result<bool, Error> {
    let data = load_dataset(&args.dataset)?;
    let pool = PoolMode::from_str(&args.pool)?;
    let (pooled, hit) = student_input_cached(&data.graph, &data.features, args.p, pool, &args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "rows": pooled.matrix.rows(),
            "cols": pooled.matrix.cols(),
            "hops": pooled.hops,
            "pool": format!("{}", pooled.pool),
            "cache_hit": hit,
            "out": args.out.display().to_string(),
        })
    );
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::TrainTeacher(args) => run_train_teacher(args),
        Command::Distill(args) => run_manifest_command(args, ExperimentKind::Main),
        Command::Eval(args) => run_eval(args),
        Command::Q1(args) => run_manifest_command(args, ExperimentKind::Q1),
        Command::Ablate(args) => run_manifest_command(args, ExperimentKind::Ablation),
        Command::LabelScarce(args) => run_manifest_command(args, ExperimentKind::LabelScarce),
        Command::Sweep(args) => run_manifest_command(args, ExperimentKind::Sensitivity),
        Command::Timing(args) => run_manifest_command(args, ExperimentKind::Timing),
        Command::CentralitySwap(args) => run_manifest_command(args, ExperimentKind::CentralitySwap),
        Command::Influence(args) => run_influence(args),
        Command::Propagate(args) => run_propagate(args),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(threads) = std::env::var("INFGRAND_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("ignoring invalid INFGRAND_THREADS value '{}'", threads),
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(2)
        }
    }
}
