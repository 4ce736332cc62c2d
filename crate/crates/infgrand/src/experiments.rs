//! The experiment suite: the main distillation comparison, the
//! influence-subset teacher study, ablations, label-scarce runs,
//! hyperparameter sweeps, latency measurements and the centrality swap.
//! Every runner emits a machine-readable report that embeds its full
//! configuration so results are reproducible from the report alone.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{dataset_hash, generate_synthetic, load_dataset, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::graph::normalize_adjacency;
use crate::influence::{compute_influence, degree_centrality, pagerank};
use crate::losses::LossWeights;
use crate::matrix::FeatureMatrix;
use crate::nn::forward::{gcn_forward, mlp_forward};
use crate::nn::init::init_gcn;
use crate::nn::params::GcnParams;
use crate::pipeline::{
    evaluate_gcn, evaluate_logits, influence_subsets, label_scarce_subset, make_inductive_split,
    make_transductive_split, median_latency, train_student, train_teacher, InductiveSplit,
    RunReport, Setting, StudentTask, TrainConfig,
};
use crate::propagation::{student_input, PoolMode};
use crate::split::Split;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Main,
    Q1,
    Ablation,
    LabelScarce,
    Sensitivity,
    Timing,
    CentralitySwap,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Main => "main",
            ExperimentKind::Q1 => "q1",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::LabelScarce => "label-scarce",
            ExperimentKind::Sensitivity => "sensitivity",
            ExperimentKind::Timing => "timing",
            ExperimentKind::CentralitySwap => "centrality-swap",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

/// How labeled/val/test (and the observed set, inductively) are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub per_class: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub observed_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            per_class: 20,
            val_size: 500,
            test_size: 1000,
            observed_fraction: 0.53,
        }
    }
}

/// A complete experiment description; the JSON config file deserializes
/// into this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    #[serde(default)]
    pub kind: ExperimentKind,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub split: SplitSpec,
    /// Seed for the split; defaults to the first run seed so the split is
    /// identical across the runs of one experiment.
    #[serde(default)]
    pub split_seed: Option<u64>,
    #[serde(default = "default_q1_fraction")]
    pub q1_fraction: f64,
    #[serde(default = "default_scarce")]
    pub scarce_per_class: Vec<usize>,
    #[serde(default)]
    pub knob: Option<String>,
    #[serde(default)]
    pub grid: Vec<String>,
    #[serde(default = "default_timing_reps")]
    pub timing_reps: usize,
    #[serde(default = "default_timing_warmups")]
    pub timing_warmups: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_q1_fraction() -> f64 {
    0.25
}

fn default_scarce() -> Vec<usize> {
    vec![2, 4, 8]
}

fn default_timing_reps() -> usize {
    50
}

fn default_timing_warmups() -> usize {
    5
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: ExperimentManifest = serde_json::from_str(&text)?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::input("seed list must not be empty"));
        }
        self.config.validate()?;
        match self.kind {
            ExperimentKind::Sensitivity => {
                if self.knob.is_none() || self.grid.is_empty() {
                    return Err(Error::input(
                        "sensitivity experiments need a knob and a value grid",
                    ));
                }
            }
            ExperimentKind::Q1 | ExperimentKind::LabelScarce | ExperimentKind::CentralitySwap
                if self.config.setting != Setting::Transductive =>
            {
                return Err(Error::input(format!(
                    "{} runs in the transductive setting",
                    self.kind
                )));
            }
            _ => {}
        }
        if self.kind == ExperimentKind::Q1 && !(0.0 < self.q1_fraction && self.q1_fraction <= 0.5) {
            return Err(Error::input("q1 fraction must be in (0, 0.5]"));
        }
        if self.kind == ExperimentKind::LabelScarce && self.scarce_per_class.is_empty() {
            return Err(Error::input(
                "label-scarce runs need at least one per-class count",
            ));
        }
        Ok(())
    }

    fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seeds[0])
    }
}

/// Label, per-seed values and their aggregate statistics. `mean` is the
/// arithmetic mean of `per_seed`; `std` the sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub label: String,
    pub mean: f64,
    pub std: f64,
    pub per_seed: Vec<f64>,
}

impl ArmStats {
    pub fn new(label: impl Into<String>, per_seed: Vec<f64>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = if per_seed.len() > 1 {
            (per_seed
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        ArmStats {
            label: label.into(),
            mean,
            std,
            per_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub kind: ExperimentKind,
    pub tool_version: String,
    pub dataset_name: String,
    pub dataset_hash: String,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
    pub split: SplitSpec,
    pub split_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardware: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub knob: String,
    pub value: String,
    pub mean: f64,
    pub std: f64,
}

/// The effective loss weights and input kind of one experiment arm,
/// echoed verbatim so a report fully determines what ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub label: String,
    pub input: String,
    pub weights: LossWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    pub arms: Vec<ArmStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arm_configs: Vec<ArmConfig>,
    /// Outcome of the experiment's directional assertion, when it has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directional_pass: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn arm(&self, label: &str) -> Option<&ArmStats> {
        self.arms.iter().find(|a| a.label == label)
    }
}

/// Everything shared by the runs of one experiment: the full dataset, the
/// fixed split, and the training-side arrays (the observed subgraph in
/// the inductive setting, the full graph otherwise).
struct ExpContext {
    manifest: ExperimentManifest,
    data: Dataset,
    data_hash: String,
    split: Split,
    inductive: Option<InductiveSplit>,
    train_data: Dataset,
    train_split: Split,
}

impl ExpContext {
    fn prepare(manifest: &ExperimentManifest) -> Result<ExpContext> {
        manifest.validate()?;
        let data = match &manifest.dataset {
            DatasetSource::Path(p) => load_dataset(p)?,
            DatasetSource::Synthetic(spec) => generate_synthetic(spec)?,
        };
        let data_hash = dataset_hash(&data);
        let ss = manifest.split;
        let seed = manifest.split_seed();
        match manifest.config.setting {
            Setting::Transductive => {
                let split = make_transductive_split(
                    &data.labels,
                    data.num_classes,
                    ss.per_class,
                    ss.val_size,
                    ss.test_size,
                    seed,
                )?;
                let train_data = data.clone();
                let train_split = split.clone();
                Ok(ExpContext {
                    manifest: manifest.clone(),
                    data,
                    data_hash,
                    split,
                    inductive: None,
                    train_data,
                    train_split,
                })
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
                let remap = &ind.remap;
                let mut features = FeatureMatrix::zeros(remap.len(), data.features.cols());
                for new in 0..remap.len() {
                    features
                        .row_mut(new)
                        .copy_from_slice(data.features.row(remap.to_old(new)));
                }
                let labels: Vec<usize> = (0..remap.len())
                    .map(|new| data.labels[remap.to_old(new)])
                    .collect();
                let train_data = Dataset {
                    graph: ind.observed_graph.clone(),
                    features,
                    labels,
                    num_classes: data.num_classes,
                    name: format!("{}-observed", data.name),
                };
                let train_split = ind.observed_split();
                let split = ind.split.clone();
                Ok(ExpContext {
                    manifest: manifest.clone(),
                    data,
                    data_hash,
                    split,
                    inductive: Some(ind),
                    train_data,
                    train_split,
                })
            }
        }
    }

    fn meta(&self) -> ReportMeta {
        ReportMeta {
            kind: self.manifest.kind,
            tool_version: TOOL_VERSION.to_string(),
            dataset_name: self.data.name.clone(),
            dataset_hash: self.data_hash.clone(),
            config: self.manifest.config.clone(),
            seeds: self.manifest.seeds.clone(),
            split: self.manifest.split,
            split_seed: self.manifest.split_seed(),
            hardware: None,
        }
    }

    fn seeded(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.manifest.config.clone()
        }
    }

    /// The influence vector on the training graph, timed.
    fn influence_gis(&self, cfg: &TrainConfig) -> Result<(Vec<f64>, f64)> {
        let t = std::time::Instant::now();
        let table = compute_influence(
            &self.train_data.graph,
            &self.train_data.features,
            cfg.influence_k,
            cfg.influence_mode,
        )?;
        Ok((table.gis, t.elapsed().as_secs_f64()))
    }
}

struct TeacherRun {
    params: GcnParams,
    report: RunReport,
    logits: FeatureMatrix,
    test_acc: f64,
}

fn run_teacher_for_seed(ctx: &ExpContext, cfg: &TrainConfig) -> Result<TeacherRun> {
    run_teacher_with_split(ctx, cfg, &ctx.train_split)
}

fn run_teacher_with_split(
    ctx: &ExpContext,
    cfg: &TrainConfig,
    split: &Split,
) -> Result<TeacherRun> {
    let (params, mut report) = train_teacher(&ctx.train_data, split, cfg)?;
    let a_train = normalize_adjacency(&ctx.train_data.graph);
    let t = std::time::Instant::now();
    let logits = gcn_forward(&params, &a_train, &ctx.train_data.features)?;
    report.timings.teacher_inference_s = t.elapsed().as_secs_f64();
    let test_acc = if ctx.inductive.is_some() {
        let a_full = normalize_adjacency(&ctx.data.graph);
        let acc = evaluate_gcn(
            &params,
            &a_full,
            &ctx.data.features,
            &ctx.split.test,
            &ctx.data.labels,
        )?;
        report.test_accuracy = acc;
        acc
    } else {
        report.test_accuracy
    };
    Ok(TeacherRun {
        params,
        report,
        logits,
        test_acc,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum StudentInput {
    Raw,
    Pooled,
}

struct ArmSpec<'a> {
    input: StudentInput,
    weights: LossWeights,
    weight_vec: &'a [f64],
}

/// Trains one student arm and evaluates it on the test set (via the full
/// graph in the inductive setting).
fn run_student_arm(
    ctx: &ExpContext,
    cfg: &TrainConfig,
    teacher: &TeacherRun,
    arm: &ArmSpec,
) -> Result<(f64, RunReport)> {
    let (acc, report, _) = run_student_arm_with_params(ctx, cfg, teacher, arm)?;
    Ok((acc, report))
}

fn run_student_arm_with_params(
    ctx: &ExpContext,
    cfg: &TrainConfig,
    teacher: &TeacherRun,
    arm: &ArmSpec,
) -> Result<(f64, RunReport, crate::nn::params::MlpParams)> {
    let mut cfg = cfg.clone();
    cfg.weights = arm.weights;
    let t_prop = std::time::Instant::now();
    let train_input = match arm.input {
        StudentInput::Raw => ctx.train_data.features.clone(),
        StudentInput::Pooled => {
            student_input(
                &ctx.train_data.graph,
                &ctx.train_data.features,
                cfg.hops,
                cfg.pool,
            )?
            .matrix
        }
    };
    let propagation_s = t_prop.elapsed().as_secs_f64();
    let task = StudentTask {
        graph: &ctx.train_data.graph,
        input: &train_input,
        labels: &ctx.train_data.labels,
        split: &ctx.train_split,
        teacher_logits: &teacher.logits,
        weight_vec: arm.weight_vec,
    };
    let (params, mut report) = train_student(&task, &cfg)?;
    report.timings.propagation_s = propagation_s;
    let test_acc = if ctx.inductive.is_some() {
        let full_input = match arm.input {
            StudentInput::Raw => ctx.data.features.clone(),
            StudentInput::Pooled => {
                student_input(&ctx.data.graph, &ctx.data.features, cfg.hops, cfg.pool)?.matrix
            }
        };
        let t = std::time::Instant::now();
        let (_, logits) = mlp_forward(&params, &full_input)?;
        report.timings.student_inference_s = t.elapsed().as_secs_f64();
        let acc = evaluate_logits(&logits, &ctx.split.test, &ctx.data.labels)?;
        report.test_accuracy = acc;
        acc
    } else {
        let t = std::time::Instant::now();
        let _ = mlp_forward(&params, &train_input)?;
        report.timings.student_inference_s = t.elapsed().as_secs_f64();
        report.test_accuracy
    };
    Ok((test_acc, report, params))
}

fn arm_config(label: &str, input: StudentInput, weights: LossWeights) -> ArmConfig {
    ArmConfig {
        label: label.to_string(),
        input: match input {
            StudentInput::Raw => "raw".to_string(),
            StudentInput::Pooled => "pooled".to_string(),
        },
        weights,
    }
}

fn vanilla_weights(tau: f64) -> LossWeights {
    LossWeights {
        lambda: 1.0,
        delta1: 1.0,
        delta2: 0.0,
        gamma1: 0.0,
        gamma2: 0.0,
        tau,
    }
}

fn uniform_kd_weights(base: &LossWeights) -> LossWeights {
    LossWeights {
        gamma2: 0.0,
        delta2: 0.0,
        ..*base
    }
}

type EpochRowsByArm = Vec<(String, u64, RunReport)>;

fn write_report(out_dir: &Path, report: &ExperimentReport, runs: &EpochRowsByArm) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(out_dir.join("epochs.csv"))?);
    writeln!(csv, "arm,seed,epoch,train_loss,val_loss,train_acc,val_acc")?;
    for (arm, seed, run) in runs {
        for row in &run.epochs {
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                arm, seed, row.epoch, row.train_loss, row.val_loss, row.train_acc, row.val_acc
            )?;
        }
    }
    csv.flush()?;
    if !report.sweep.is_empty() {
        let mut sweep = std::io::BufWriter::new(std::fs::File::create(out_dir.join("sweep.csv"))?);
        writeln!(sweep, "knob,value,mean,std")?;
        for row in &report.sweep {
            writeln!(sweep, "{},{},{},{}", row.knob, row.value, row.mean, row.std)?;
        }
        sweep.flush()?;
    }
    Ok(())
}

/// Per seed: teacher, the influence-guided student, and the purely
/// supervised student on raw features. Aggregates mirror one row of the
/// main comparison table.
pub fn run_main(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    let ctx = ExpContext::prepare(manifest)?;
    let (gis, influence_s) = ctx.influence_gis(&manifest.config)?;
    let zeros = vec![0.0; ctx.train_data.num_nodes()];

    let outcomes: Vec<(f64, RunReport, f64, RunReport, f64, RunReport)> = manifest
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ctx.seeded(seed);
            let teacher = run_teacher_for_seed(&ctx, &cfg)?;
            let infgrand = run_student_arm(
                &ctx,
                &cfg,
                &teacher,
                &ArmSpec {
                    input: StudentInput::Pooled,
                    weights: cfg.weights,
                    weight_vec: &gis,
                },
            )?;
            let vanilla = run_student_arm(
                &ctx,
                &cfg,
                &teacher,
                &ArmSpec {
                    input: StudentInput::Raw,
                    weights: vanilla_weights(cfg.weights.tau),
                    weight_vec: &zeros,
                },
            )?;
            let mut infgrand_report = infgrand.1;
            infgrand_report.timings.influence_s = influence_s;
            Ok((
                teacher.test_acc,
                teacher.report,
                infgrand.0,
                infgrand_report,
                vanilla.0,
                vanilla.1,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs: EpochRowsByArm = Vec::new();
    let (mut t_acc, mut i_acc, mut v_acc) = (Vec::new(), Vec::new(), Vec::new());
    for (seed, (ta, tr, ia, ir, va, vr)) in manifest.seeds.iter().zip(outcomes) {
        t_acc.push(ta);
        i_acc.push(ia);
        v_acc.push(va);
        runs.push(("teacher".into(), *seed, tr));
        runs.push(("infgrand".into(), *seed, ir));
        runs.push(("supervised-mlp".into(), *seed, vr));
    }
    let arms = vec![
        ArmStats::new("teacher", t_acc),
        ArmStats::new("infgrand", i_acc),
        ArmStats::new("supervised-mlp", v_acc),
    ];
    let directional = arms[1].mean >= arms[2].mean;
    let base = manifest.config.weights;
    let report = ExperimentReport {
        meta: ctx.meta(),
        arms,
        arm_configs: vec![
            arm_config("infgrand", StudentInput::Pooled, base),
            arm_config(
                "supervised-mlp",
                StudentInput::Raw,
                vanilla_weights(base.tau),
            ),
        ],
        directional_pass: Some(directional),
        sweep: Vec::new(),
        notes: vec![format!("influence precompute: {:.3}s", influence_s)],
    };
    write_report(&manifest.out_dir, &report, &runs)?;
    Ok(report)
}

/// Trains the teacher on the high-influence vs the low-influence quarter
/// of the labeled set, against a fixed validation and test set.
pub fn run_q1(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    let ctx = ExpContext::prepare(manifest)?;
    let (gis, influence_s) = ctx.influence_gis(&manifest.config)?;
    let (high, low) = influence_subsets(
        &ctx.split.labeled,
        &ctx.data.labels,
        ctx.data.num_classes,
        &gis,
        manifest.q1_fraction,
    )?;
    let high_split = Split {
        labeled: high.clone(),
        ..ctx.split.clone()
    };
    let low_split = Split {
        labeled: low.clone(),
        ..ctx.split.clone()
    };

    let outcomes: Vec<((f64, RunReport), (f64, RunReport))> = manifest
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ctx.seeded(seed);
            let h = run_teacher_with_split(&ctx, &cfg, &high_split)?;
            let l = run_teacher_with_split(&ctx, &cfg, &low_split)?;
            Ok(((h.test_acc, h.report), (l.test_acc, l.report)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs: EpochRowsByArm = Vec::new();
    let (mut h_acc, mut l_acc) = (Vec::new(), Vec::new());
    for (seed, ((ha, hr), (la, lr))) in manifest.seeds.iter().zip(outcomes) {
        h_acc.push(ha);
        l_acc.push(la);
        runs.push(("high-influence".into(), *seed, hr));
        runs.push(("low-influence".into(), *seed, lr));
    }
    let arms = vec![
        ArmStats::new("high-influence", h_acc),
        ArmStats::new("low-influence", l_acc),
    ];
    let directional = arms[0].mean >= arms[1].mean;
    let report = ExperimentReport {
        meta: ctx.meta(),
        arms,
        arm_configs: Vec::new(),
        directional_pass: Some(directional),
        sweep: Vec::new(),
        notes: vec![
            format!("subset sizes: high {} / low {}", high.len(), low.len()),
            format!("influence precompute: {:.3}s", influence_s),
        ],
    };
    write_report(&manifest.out_dir, &report, &runs)?;
    Ok(report)
}

/// Full model vs the influence-only and propagation-only variants, with
/// the teacher shared across arms within each seed.
pub fn run_ablation(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    let ctx = ExpContext::prepare(manifest)?;
    let (gis, _) = ctx.influence_gis(&manifest.config)?;

    let outcomes: Vec<Vec<(f64, RunReport)>> = manifest
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ctx.seeded(seed);
            let teacher = run_teacher_for_seed(&ctx, &cfg)?;
            let arms = [
                ArmSpec {
                    input: StudentInput::Pooled,
                    weights: cfg.weights,
                    weight_vec: &gis,
                },
                ArmSpec {
                    input: StudentInput::Raw,
                    weights: cfg.weights,
                    weight_vec: &gis,
                },
                ArmSpec {
                    input: StudentInput::Pooled,
                    weights: uniform_kd_weights(&cfg.weights),
                    weight_vec: &gis,
                },
            ];
            arms.iter()
                .map(|arm| run_student_arm(&ctx, &cfg, &teacher, arm))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let labels = ["full", "w-influence", "w-propagation"];
    let mut runs: EpochRowsByArm = Vec::new();
    let mut accs: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for (seed, arm_outcomes) in manifest.seeds.iter().zip(outcomes) {
        for (k, (acc, rep)) in arm_outcomes.into_iter().enumerate() {
            accs[k].push(acc);
            runs.push((labels[k].into(), *seed, rep));
        }
    }
    let arms: Vec<ArmStats> = labels
        .iter()
        .zip(accs)
        .map(|(l, v)| ArmStats::new(*l, v))
        .collect();
    let directional = arms[0].mean >= arms[1].mean && arms[0].mean >= arms[2].mean;
    let base = manifest.config.weights;
    let report = ExperimentReport {
        meta: ctx.meta(),
        arms,
        arm_configs: vec![
            arm_config("full", StudentInput::Pooled, base),
            arm_config("w-influence", StudentInput::Raw, base),
            arm_config(
                "w-propagation",
                StudentInput::Pooled,
                uniform_kd_weights(&base),
            ),
        ],
        directional_pass: Some(directional),
        sweep: Vec::new(),
        notes: vec![
            "w-influence: raw input features, influence weights active".into(),
            "w-propagation: pooled input, gamma2 = delta2 = 0 (uniform weighting)".into(),
        ],
    };
    write_report(&manifest.out_dir, &report, &runs)?;
    Ok(report)
}

/// The influence-guided student against the uniform-weight reference
/// under shrinking labeled sets; validation and test stay fixed.
pub fn run_label_scarce(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    let ctx = ExpContext::prepare(manifest)?;
    let (gis, _) = ctx.influence_gis(&manifest.config)?;

    let mut runs: EpochRowsByArm = Vec::new();
    let mut arms = Vec::new();
    let mut inf_means = Vec::new();
    let mut uni_means = Vec::new();
    for &per_class in &manifest.scarce_per_class {
        let scarce_split = label_scarce_subset(
            &ctx.split,
            &ctx.data.labels,
            ctx.data.num_classes,
            per_class,
            manifest.split_seed(),
        )?;
        let mut scarce_ctx = ExpContext {
            manifest: ctx.manifest.clone(),
            data: ctx.data.clone(),
            data_hash: ctx.data_hash.clone(),
            split: scarce_split.clone(),
            inductive: None,
            train_data: ctx.train_data.clone(),
            train_split: scarce_split,
        };
        scarce_ctx.manifest.kind = ExperimentKind::LabelScarce;

        let outcomes: Vec<((f64, RunReport), (f64, RunReport))> = manifest
            .seeds
            .par_iter()
            .map(|&seed| {
                let cfg = scarce_ctx.seeded(seed);
                let teacher = run_teacher_for_seed(&scarce_ctx, &cfg)?;
                let inf = run_student_arm(
                    &scarce_ctx,
                    &cfg,
                    &teacher,
                    &ArmSpec {
                        input: StudentInput::Pooled,
                        weights: cfg.weights,
                        weight_vec: &gis,
                    },
                )?;
                let uni = run_student_arm(
                    &scarce_ctx,
                    &cfg,
                    &teacher,
                    &ArmSpec {
                        input: StudentInput::Raw,
                        weights: uniform_kd_weights(&cfg.weights),
                        weight_vec: &gis,
                    },
                )?;
                Ok((inf, uni))
            })
            .collect::<Result<Vec<_>>>()?;

        let (mut inf_acc, mut uni_acc) = (Vec::new(), Vec::new());
        for (seed, ((ia, ir), (ua, ur))) in manifest.seeds.iter().zip(outcomes) {
            inf_acc.push(ia);
            uni_acc.push(ua);
            runs.push((format!("infgrand@{}", per_class), *seed, ir));
            runs.push((format!("uniform-kd@{}", per_class), *seed, ur));
        }
        let inf_stats = ArmStats::new(format!("infgrand@{}", per_class), inf_acc);
        let uni_stats = ArmStats::new(format!("uniform-kd@{}", per_class), uni_acc);
        inf_means.push(inf_stats.mean);
        uni_means.push(uni_stats.mean);
        arms.push(inf_stats);
        arms.push(uni_stats);
    }
    let directional = inf_means.iter().sum::<f64>() >= uni_means.iter().sum::<f64>();
    let base = manifest.config.weights;
    let report = ExperimentReport {
        meta: ctx.meta(),
        arms,
        arm_configs: vec![
            arm_config("infgrand", StudentInput::Pooled, base),
            arm_config("uniform-kd", StudentInput::Raw, uniform_kd_weights(&base)),
        ],
        directional_pass: Some(directional),
        sweep: Vec::new(),
        notes: vec![format!(
            "labeled-per-class grid: {:?}",
            manifest.scarce_per_class
        )],
    };
    write_report(&manifest.out_dir, &report, &runs)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKnob {
    Lambda,
    Gamma2,
    Delta2,
    Hops,
    Pool,
    KHops,
}

impl std::str::FromStr for SweepKnob {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepKnob::Lambda),
            "gamma2" => Ok(SweepKnob::Gamma2),
            "delta2" => Ok(SweepKnob::Delta2),
            "p" | "hops" => Ok(SweepKnob::Hops),
            "pool" => Ok(SweepKnob::Pool),
            "k" => Ok(SweepKnob::KHops),
            other => Err(Error::input(format!(
                "unknown sweep knob '{}'; expected lambda, gamma2, delta2, p, pool or k",
                other
            ))),
        }
    }
}

fn apply_knob(cfg: &TrainConfig, knob: SweepKnob, value: &str) -> Result<TrainConfig> {
    let mut cfg = cfg.clone();
    match knob {
        SweepKnob::Lambda => {
            cfg.weights.lambda = value
                .parse()
                .map_err(|_| Error::input(format!("bad lambda value '{}'", value)))?;
        }
        SweepKnob::Gamma2 => {
            cfg.weights.gamma2 = value
                .parse()
                .map_err(|_| Error::input(format!("bad gamma2 value '{}'", value)))?;
        }
        SweepKnob::Delta2 => {
            cfg.weights.delta2 = value
                .parse()
                .map_err(|_| Error::input(format!("bad delta2 value '{}'", value)))?;
        }
        SweepKnob::Hops => {
            cfg.hops = value
                .parse()
                .map_err(|_| Error::input(format!("bad hop count '{}'", value)))?;
        }
        SweepKnob::Pool => {
            cfg.pool = value.parse::<PoolMode>()?;
        }
        SweepKnob::KHops => {
            cfg.influence_k = value
                .parse()
                .map_err(|_| Error::input(format!("bad k value '{}'", value)))?;
            if cfg.influence_k == 0 {
                return Err(Error::input("k must be at least 1"));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One full run per grid value per seed, with the teacher shared across
/// grid values within each seed.
pub fn run_sensitivity(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    let ctx = ExpContext::prepare(manifest)?;
    let knob_name = manifest.knob.clone().unwrap_or_default();
    let knob: SweepKnob = knob_name.parse()?;
    // validate the whole grid before any training
    let cfgs: Vec<(String, TrainConfig)> = manifest
        .grid
        .iter()
        .map(|v| Ok((v.clone(), apply_knob(&manifest.config, knob, v)?)))
        .collect::<Result<Vec<_>>>()?;

    let teachers: Vec<TeacherRun> = manifest
        .seeds
        .par_iter()
        .map(|&seed| run_teacher_for_seed(&ctx, &ctx.seeded(seed)))
        .collect::<Result<Vec<_>>>()?;

    // influence depends only on k; cache per distinct k
    let mut gis_by_k: HashMap<usize, Vec<f64>> = HashMap::new();
    for (_, cfg) in &cfgs {
        if let std::collections::hash_map::Entry::Vacant(slot) = gis_by_k.entry(cfg.influence_k) {
            let (gis, _) = ctx.influence_gis(cfg)?;
            slot.insert(gis);
        }
    }

    let mut runs: EpochRowsByArm = Vec::new();
    let mut arms = Vec::new();
    let mut sweep = Vec::new();
    for (value, cfg) in &cfgs {
        let gis = &gis_by_k[&cfg.influence_k];
        let outcomes: Vec<(f64, RunReport)> = manifest
            .seeds
            .par_iter()
            .zip(teachers.par_iter())
            .map(|(&seed, teacher)| {
                let cfg = TrainConfig {
                    seed,
                    ..cfg.clone()
                };
                run_student_arm(
                    &ctx,
                    &cfg,
                    teacher,
                    &ArmSpec {
                        input: StudentInput::Pooled,
                        weights: cfg.weights,
                        weight_vec: gis,
                    },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut accs = Vec::new();
        for (seed, (acc, rep)) in manifest.seeds.iter().zip(outcomes) {
            accs.push(acc);
            runs.push((format!("{}={}", knob_name, value), *seed, rep));
        }
        let stats = ArmStats::new(format!("{}={}", knob_name, value), accs);
        sweep.push(SweepRow {
            knob: knob_name.clone(),
            value: value.clone(),
            mean: stats.mean,
            std: stats.std,
        });
        arms.push(stats);
    }
    let report = ExperimentReport {
        meta: ctx.meta(),
        arms,
        arm_configs: cfgs
            .iter()
            .map(|(value, cfg)| {
                arm_config(
                    &format!("{}={}", knob_name, value),
                    StudentInput::Pooled,
                    cfg.weights,
                )
            })
            .collect(),
        directional_pass: None,
        sweep,
        notes: Vec::new(),
    };
    write_report(&manifest.out_dir, &report, &runs)?;
    Ok(report)
}

fn hardware_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".to_string());
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!(
        "{} ({} threads), {}-{}",
        cpu,
        threads,
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Median single-forward latency of the distilled student against two- and
/// three-layer teachers on the same graph, plus their test accuracies.
pub fn run_timing(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    let ctx = ExpContext::prepare(manifest)?;
    let cfg = ctx.seeded(manifest.seeds[0]);
    let (gis, _) = ctx.influence_gis(&cfg)?;
    let teacher2 = run_teacher_for_seed(&ctx, &cfg)?;
    let (student_acc, student_report, student_params) = run_student_arm_with_params(
        &ctx,
        &cfg,
        &teacher2,
        &ArmSpec {
            input: StudentInput::Pooled,
            weights: cfg.weights,
            weight_vec: &gis,
        },
    )?;
    // a three-layer teacher for the latency comparison
    let dims3 = [
        ctx.data.features.cols(),
        cfg.teacher_hidden,
        cfg.teacher_hidden,
        ctx.data.num_classes,
    ];
    let teacher3 = init_gcn(&dims3, cfg.seed)?;

    // deployment-time student input is precomputed, so only the MLP
    // forward is on the latency path
    let xtilde = student_input(&ctx.data.graph, &ctx.data.features, cfg.hops, cfg.pool)?;
    let a_full = normalize_adjacency(&ctx.data.graph);
    let reps = manifest.timing_reps;
    let warmups = manifest.timing_warmups;
    let mlp_s = median_latency(
        || {
            std::hint::black_box(mlp_forward(&student_params, &xtilde.matrix).unwrap());
        },
        reps,
        warmups,
    );
    let gcn2_s = median_latency(
        || {
            std::hint::black_box(
                gcn_forward(&teacher2.params, &a_full, &ctx.data.features).unwrap(),
            );
        },
        reps,
        warmups,
    );
    let gcn3_s = median_latency(
        || {
            std::hint::black_box(gcn_forward(&teacher3, &a_full, &ctx.data.features).unwrap());
        },
        reps,
        warmups,
    );

    let mut meta = ctx.meta();
    meta.hardware = Some(hardware_descriptor());
    let arms = vec![
        ArmStats::new("student-mlp-latency-s", vec![mlp_s]),
        ArmStats::new("gcn-2-layer-latency-s", vec![gcn2_s]),
        ArmStats::new("gcn-3-layer-latency-s", vec![gcn3_s]),
    ];
    let directional = mlp_s < gcn2_s;
    let report = ExperimentReport {
        meta,
        arms,
        arm_configs: vec![arm_config("student-mlp", StudentInput::Pooled, cfg.weights)],
        directional_pass: Some(directional),
        sweep: Vec::new(),
        notes: vec![
            format!("median of {} reps after {} warmups", reps, warmups),
            format!("teacher test accuracy: {:.4}", teacher2.test_acc),
            format!("student test accuracy: {:.4}", student_acc),
        ],
    };
    let runs: EpochRowsByArm = vec![
        ("teacher".into(), cfg.seed, teacher2.report),
        ("student-mlp".into(), cfg.seed, student_report),
    ];
    write_report(&manifest.out_dir, &report, &runs)?;
    Ok(report)
}

fn vec_summary(name: &str, v: &[f64]) -> String {
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    format!("{}: min {:.4} mean {:.4} max {:.4}", name, min, mean, max)
}

/// Distillation-only mode (raw input features) with the loss weight vector
/// swapped between influence, degree and PageRank. All three arms run the
/// identical code path; only the weight vector differs.
pub fn run_centrality_swap(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    let ctx = ExpContext::prepare(manifest)?;
    let (gis, _) = ctx.influence_gis(&manifest.config)?;
    let degree = degree_centrality(&ctx.train_data.graph).scores;
    let pr = pagerank(&ctx.train_data.graph, 0.85, 200, 1e-8)?.scores;

    let vectors: [(&str, &Vec<f64>); 3] =
        [("influence", &gis), ("degree", &degree), ("pagerank", &pr)];
    let outcomes: Vec<Vec<(f64, RunReport)>> = manifest
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ctx.seeded(seed);
            let teacher = run_teacher_for_seed(&ctx, &cfg)?;
            vectors
                .iter()
                .map(|(_, vec)| {
                    run_student_arm(
                        &ctx,
                        &cfg,
                        &teacher,
                        &ArmSpec {
                            input: StudentInput::Raw,
                            weights: cfg.weights,
                            weight_vec: vec,
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs: EpochRowsByArm = Vec::new();
    let mut accs: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for (seed, arm_outcomes) in manifest.seeds.iter().zip(outcomes) {
        for (k, (acc, rep)) in arm_outcomes.into_iter().enumerate() {
            accs[k].push(acc);
            runs.push((format!("kd-w-{}", vectors[k].0), *seed, rep));
        }
    }
    let arms: Vec<ArmStats> = vectors
        .iter()
        .zip(accs)
        .map(|((label, _), v)| ArmStats::new(format!("kd-w-{}", label), v))
        .collect();
    let directional = arms[0].mean >= arms[1].mean && arms[0].mean >= arms[2].mean;
    let base = manifest.config.weights;
    let report = ExperimentReport {
        meta: ctx.meta(),
        arms,
        arm_configs: vectors
            .iter()
            .map(|(name, _)| arm_config(&format!("kd-w-{}", name), StudentInput::Raw, base))
            .collect(),
        directional_pass: Some(directional),
        sweep: Vec::new(),
        notes: vectors
            .iter()
            .map(|(name, v)| vec_summary(name, v))
            .collect(),
    };
    write_report(&manifest.out_dir, &report, &runs)?;
    Ok(report)
}

/// Dispatch on the manifest's experiment kind.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<ExperimentReport> {
    match manifest.kind {
        ExperimentKind::Main => run_main(manifest),
        ExperimentKind::Q1 => run_q1(manifest),
        ExperimentKind::Ablation => run_ablation(manifest),
        ExperimentKind::LabelScarce => run_label_scarce(manifest),
        ExperimentKind::Sensitivity => run_sensitivity(manifest),
        ExperimentKind::Timing => run_timing(manifest),
        ExperimentKind::CentralitySwap => run_centrality_swap(manifest),
    }
}
