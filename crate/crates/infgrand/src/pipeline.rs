//! Teacher training, influence-guided student training, evaluation, and
//! the split machinery for transductive and inductive experiments.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, normalize_adjacency, Graph, NodeRemap, NormalizedAdjacency};
use crate::hashing::rng_for;
use crate::influence::InfluenceMode;
use crate::losses::LossWeights;
use crate::matrix::FeatureMatrix;
use crate::nn::backward::{backward_supervised, backward_total, gcn_loss_and_grads};
use crate::nn::forward::{gcn_forward, mlp_forward, sample_dropout_mask};
use crate::nn::init::{init_gcn, init_mlp};
use crate::nn::params::{GcnParams, MlpParams};
use crate::nn::softmax::log_softmax_rows;
use crate::nn::OptimizerState;
use crate::propagation::PoolMode;
use crate::split::Split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Transductive,
    Inductive,
}

/// Every knob of a training run. The JSON config file mirrors this struct
/// field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub hops: usize,
    pub pool: PoolMode,
    pub influence_k: usize,
    pub influence_mode: InfluenceMode,
    pub teacher_hidden: usize,
    pub student_hidden: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub setting: Setting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            weights: LossWeights::default(),
            hops: 2,
            pool: PoolMode::Mean,
            influence_k: 2,
            influence_mode: InfluenceMode::Dense,
            teacher_hidden: 64,
            student_hidden: 64,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            dropout: 0.5,
            max_epochs: 500,
            patience: 50,
            seed: 0,
            setting: Setting::Transductive,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.max_epochs < 1 {
            return Err(Error::input("max_epochs must be at least 1"));
        }
        if self.patience < 1 {
            return Err(Error::input("patience must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::input(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::input("learning rate must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::input("weight decay must be nonnegative"));
        }
        if self.teacher_hidden == 0 || self.student_hidden == 0 {
            return Err(Error::input("hidden widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timings {
    pub teacher_train_s: f64,
    pub influence_s: f64,
    pub propagation_s: f64,
    pub student_train_s: f64,
    pub student_inference_s: f64,
    pub teacher_inference_s: f64,
}

/// Everything one training run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub epochs: Vec<EpochRow>,
    pub best_epoch: usize,
    pub test_accuracy: f64,
    pub timings: Timings,
    pub config: TrainConfig,
    pub seed: u64,
}

/// Fraction of nodes whose argmax logit equals the label; ties break
/// toward the lowest class index.
pub fn evaluate_logits(logits: &FeatureMatrix, nodes: &[usize], labels: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::input("evaluation over an empty node set"));
    }
    let mut correct = 0usize;
    for &i in nodes {
        let row = logits.row(i);
        let mut best = 0usize;
        for (k, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = k;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

pub fn evaluate_mlp(
    p: &MlpParams,
    x: &FeatureMatrix,
    nodes: &[usize],
    labels: &[usize],
) -> Result<f64> {
    let (_, logits) = mlp_forward(p, x)?;
    evaluate_logits(&logits, nodes, labels)
}

pub fn evaluate_gcn(
    p: &GcnParams,
    a: &NormalizedAdjacency,
    x: &FeatureMatrix,
    nodes: &[usize],
    labels: &[usize],
) -> Result<f64> {
    let logits = gcn_forward(p, a, x)?;
    evaluate_logits(&logits, nodes, labels)
}

fn mean_ce(logits: &FeatureMatrix, nodes: &[usize], labels: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let logp = log_softmax_rows(logits);
    nodes.iter().map(|&i| -logp.get(i, labels[i])).sum::<f64>() / nodes.len() as f64
}

/// Trains the teacher GCN with cross-entropy on the labeled set, early
/// stopping on validation accuracy, and returns the best-validation
/// checkpoint. Test accuracy is filled when the split carries test nodes
/// on this graph; inductive callers evaluate on the full graph instead.
pub fn train_teacher(
    data: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(GcnParams, RunReport)> {
    cfg.validate()?;
    if split.labeled.is_empty() || split.val.is_empty() {
        return Err(Error::input(
            "teacher training needs labeled and validation nodes",
        ));
    }
    let start = std::time::Instant::now();
    let a = normalize_adjacency(&data.graph);
    let dims = [data.features.cols(), cfg.teacher_hidden, data.num_classes];
    let mut params = init_gcn(&dims, cfg.seed)?;
    let mut theta = params.to_flat();
    let mut opt = OptimizerState::new(theta.len(), cfg.learning_rate, cfg.weight_decay);
    let mut drop_rng = rng_for(cfg.seed, "teacher-dropout");

    let mut epochs = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    for epoch in 0..cfg.max_epochs {
        let masks = if cfg.dropout > 0.0 {
            Some(vec![sample_dropout_mask(
                data.num_nodes(),
                cfg.teacher_hidden,
                cfg.dropout,
                &mut drop_rng,
            )])
        } else {
            None
        };
        let (train_loss, grads) = gcn_loss_and_grads(
            &params,
            &a,
            &data.features,
            &data.labels,
            &split.labeled,
            masks.as_deref(),
        )?;
        opt.step(&mut theta, &grads.to_flat())?;
        params.assign_from_flat(&theta);

        let logits = gcn_forward(&params, &a, &data.features)?;
        let train_acc = evaluate_logits(&logits, &split.labeled, &data.labels)?;
        let val_acc = evaluate_logits(&logits, &split.val, &data.labels)?;
        let val_loss = mean_ce(&logits, &split.val, &data.labels);
        epochs.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_params = params.clone();
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let test_accuracy = if split.test.is_empty() {
        0.0
    } else {
        evaluate_gcn(&best_params, &a, &data.features, &split.test, &data.labels)?
    };
    let report = RunReport {
        epochs,
        best_epoch,
        test_accuracy,
        timings: Timings {
            teacher_train_s: start.elapsed().as_secs_f64(),
            ..Timings::default()
        },
        config: cfg.clone(),
        seed: cfg.seed,
    };
    Ok((best_params, report))
}

/// Raw pre-softmax logits for every node of the given graph, dropout
/// disabled. A thin, repeatable wrapper over the forward pass.
pub fn teacher_logits(
    p: &GcnParams,
    a: &NormalizedAdjacency,
    x: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    gcn_forward(p, a, x)
}

/// One student training task: the graph supplying distillation
/// neighborhoods, the (pooled or raw) input rows, the frozen teacher's
/// logits and the per-node weight vector used by the losses.
pub struct StudentTask<'a> {
    pub graph: &'a Graph,
    pub input: &'a FeatureMatrix,
    pub labels: &'a [usize],
    pub split: &'a Split,
    pub teacher_logits: &'a FeatureMatrix,
    pub weight_vec: &'a [f64],
}

/// Full-batch influence-guided distillation with early stopping on
/// validation accuracy. Returns the best checkpoint and its report; test
/// accuracy is filled when the split carries test nodes on this graph.
pub fn train_student(task: &StudentTask, cfg: &TrainConfig) -> Result<(MlpParams, RunReport)> {
    cfg.validate()?;
    if task.split.labeled.is_empty() || task.split.val.is_empty() {
        return Err(Error::input(
            "student training needs labeled and validation nodes",
        ));
    }
    let start = std::time::Instant::now();
    let mut params = init_mlp(
        task.input.cols(),
        cfg.student_hidden,
        task.teacher_logits.cols(),
        cfg.seed,
    )?;
    let mut theta = params.to_flat();
    let mut opt = OptimizerState::new(theta.len(), cfg.learning_rate, cfg.weight_decay);
    let mut drop_rng = rng_for(cfg.seed, "student-dropout");

    let mut epochs = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    for epoch in 0..cfg.max_epochs {
        let mask = if cfg.dropout > 0.0 {
            Some(sample_dropout_mask(
                task.input.rows(),
                cfg.student_hidden,
                cfg.dropout,
                &mut drop_rng,
            ))
        } else {
            None
        };
        let step = backward_total(
            &params,
            task.input,
            task.graph,
            task.labels,
            &task.split.labeled,
            task.teacher_logits,
            task.weight_vec,
            &cfg.weights,
            mask.as_ref(),
        )?;
        opt.step(&mut theta, &step.grads.to_flat())?;
        params.assign_from_flat(&theta);

        let (_, logits) = mlp_forward(&params, task.input)?;
        let train_acc = evaluate_logits(&logits, &task.split.labeled, task.labels)?;
        let val_acc = evaluate_logits(&logits, &task.split.val, task.labels)?;
        let val_loss = mean_ce(&logits, &task.split.val, task.labels);
        epochs.push(EpochRow {
            epoch,
            train_loss: step.loss_total,
            val_loss,
            train_acc,
            val_acc,
        });
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_params = params.clone();
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let test_accuracy = if task.split.test.is_empty() {
        0.0
    } else {
        evaluate_mlp(&best_params, task.input, &task.split.test, task.labels)?
    };
    let report = RunReport {
        epochs,
        best_epoch,
        test_accuracy,
        timings: Timings {
            student_train_s: start.elapsed().as_secs_f64(),
            ..Timings::default()
        },
        config: cfg.clone(),
        seed: cfg.seed,
    };
    Ok((best_params, report))
}

/// Standalone supervised MLP training on the influence-weighted
/// cross-entropy alone. A lambda = 1 distillation run must reproduce this
/// trajectory exactly.
pub fn train_supervised_mlp(
    input: &FeatureMatrix,
    labels: &[usize],
    num_classes: usize,
    split: &Split,
    weight_vec: &[f64],
    cfg: &TrainConfig,
) -> Result<(MlpParams, RunReport)> {
    cfg.validate()?;
    if split.labeled.is_empty() || split.val.is_empty() {
        return Err(Error::input(
            "supervised training needs labeled and validation nodes",
        ));
    }
    let start = std::time::Instant::now();
    let mut params = init_mlp(input.cols(), cfg.student_hidden, num_classes, cfg.seed)?;
    let mut theta = params.to_flat();
    let mut opt = OptimizerState::new(theta.len(), cfg.learning_rate, cfg.weight_decay);
    let mut drop_rng = rng_for(cfg.seed, "student-dropout");

    let mut epochs = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params = params.clone();
    for epoch in 0..cfg.max_epochs {
        let mask = if cfg.dropout > 0.0 {
            Some(sample_dropout_mask(
                input.rows(),
                cfg.student_hidden,
                cfg.dropout,
                &mut drop_rng,
            ))
        } else {
            None
        };
        let (train_loss, grads) = backward_supervised(
            &params,
            input,
            labels,
            &split.labeled,
            weight_vec,
            cfg.weights.delta1,
            cfg.weights.delta2,
            mask.as_ref(),
        )?;
        opt.step(&mut theta, &grads.to_flat())?;
        params.assign_from_flat(&theta);

        let (_, logits) = mlp_forward(&params, input)?;
        let train_acc = evaluate_logits(&logits, &split.labeled, labels)?;
        let val_acc = evaluate_logits(&logits, &split.val, labels)?;
        let val_loss = mean_ce(&logits, &split.val, labels);
        epochs.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_params = params.clone();
        }
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let test_accuracy = if split.test.is_empty() {
        0.0
    } else {
        evaluate_mlp(&best_params, input, &split.test, labels)?
    };
    let report = RunReport {
        epochs,
        best_epoch,
        test_accuracy,
        timings: Timings {
            student_train_s: start.elapsed().as_secs_f64(),
            ..Timings::default()
        },
        config: cfg.clone(),
        seed: cfg.seed,
    };
    Ok((best_params, report))
}

fn nodes_by_class(labels: &[usize], num_classes: usize, pool: &[usize]) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); num_classes];
    for &i in pool {
        by_class[labels[i]].push(i);
    }
    by_class
}

/// Class-balanced labeled set plus disjoint validation and test sets drawn
/// uniformly from the remainder.
pub fn make_transductive_split(
    labels: &[usize],
    num_classes: usize,
    per_class: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<Split> {
    let n = labels.len();
    let all: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, "transductive-split");
    let mut labeled = Vec::with_capacity(per_class * num_classes);
    for (class, mut members) in nodes_by_class(labels, num_classes, &all)
        .into_iter()
        .enumerate()
    {
        if members.len() < per_class {
            return Err(Error::input(format!(
                "class {} has {} nodes, cannot label {} per class",
                class,
                members.len(),
                per_class
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..per_class]);
    }
    let in_labeled: std::collections::HashSet<usize> = labeled.iter().copied().collect();
    let mut rest: Vec<usize> = (0..n).filter(|i| !in_labeled.contains(i)).collect();
    if rest.len() < val_size + test_size {
        return Err(Error::input(format!(
            "{} unlabeled nodes cannot provide val {} + test {}",
            rest.len(),
            val_size,
            test_size
        )));
    }
    rest.shuffle(&mut rng);
    let mut val: Vec<usize> = rest[..val_size].to_vec();
    let mut test: Vec<usize> = rest[val_size..val_size + test_size].to_vec();
    labeled.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    let split = Split {
        labeled,
        val,
        test,
        observed: None,
    };
    split.validate(n)?;
    Ok(split)
}

/// An inductive split: the original-id split (labeled and validation
/// inside the observed set, test outside it), the induced observed
/// subgraph used for training, and the id remap between the two.
#[derive(Debug, Clone)]
pub struct InductiveSplit {
    pub split: Split,
    pub observed_graph: Graph,
    pub remap: NodeRemap,
}

impl InductiveSplit {
    /// Labeled/val sets remapped into observed-subgraph ids; test is left
    /// empty because test nodes live outside the observed graph.
    pub fn observed_split(&self) -> Split {
        let remap = |set: &[usize]| -> Vec<usize> {
            set.iter().map(|&i| self.remap.to_new(i).unwrap()).collect()
        };
        Split {
            labeled: remap(&self.split.labeled),
            val: remap(&self.split.val),
            test: Vec::new(),
            observed: None,
        }
    }
}

/// Observed node set with its induced training subgraph; test nodes are
/// drawn from the unobserved remainder and never appear in the training
/// graph.
#[allow(clippy::too_many_arguments)]
pub fn make_inductive_split(
    graph: &Graph,
    labels: &[usize],
    num_classes: usize,
    observed_fraction: f64,
    per_class: usize,
    val_size: usize,
    test_size: usize,
    seed: u64,
) -> Result<InductiveSplit> {
    if !(0.0 < observed_fraction && observed_fraction <= 1.0) {
        return Err(Error::input(format!(
            "observed fraction must be in (0, 1], got {}",
            observed_fraction
        )));
    }
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, "inductive-split");
    order.shuffle(&mut rng);
    let n_obs = ((observed_fraction * n as f64).round() as usize).clamp(1, n);
    let mut observed: Vec<usize> = order[..n_obs].to_vec();
    let unobserved: Vec<usize> = order[n_obs..].to_vec();
    if unobserved.len() < test_size {
        return Err(Error::input(format!(
            "{} unobserved nodes cannot provide {} test nodes",
            unobserved.len(),
            test_size
        )));
    }
    let mut test: Vec<usize> = unobserved[..test_size].to_vec();
    observed.sort_unstable();
    test.sort_unstable();

    let mut labeled = Vec::with_capacity(per_class * num_classes);
    for (class, mut members) in nodes_by_class(labels, num_classes, &observed)
        .into_iter()
        .enumerate()
    {
        if members.len() < per_class {
            return Err(Error::input(format!(
                "class {} has {} observed nodes, cannot label {} per class",
                class,
                members.len(),
                per_class
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..per_class]);
    }
    let in_labeled: std::collections::HashSet<usize> = labeled.iter().copied().collect();
    let mut rest: Vec<usize> = observed
        .iter()
        .copied()
        .filter(|i| !in_labeled.contains(i))
        .collect();
    if rest.len() < val_size {
        return Err(Error::input(format!(
            "{} observed unlabeled nodes cannot provide {} validation nodes",
            rest.len(),
            val_size
        )));
    }
    rest.shuffle(&mut rng);
    let mut val: Vec<usize> = rest[..val_size].to_vec();
    labeled.sort_unstable();
    val.sort_unstable();

    let (observed_graph, remap) = induced_subgraph(graph, &observed)?;
    let split = Split {
        labeled,
        val,
        test,
        observed: Some(observed),
    };
    split.validate(n)?;
    Ok(InductiveSplit {
        split,
        observed_graph,
        remap,
    })
}

/// Splits the labeled pool per class into an equally sized high-influence
/// and low-influence subset. Within each class, nodes are ordered by
/// (score desc, index asc); the top fraction forms the high set, the
/// bottom fraction the low set.
pub fn influence_subsets(
    labeled: &[usize],
    labels: &[usize],
    num_classes: usize,
    gis: &[f64],
    fraction: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0 < fraction && fraction <= 0.5) {
        return Err(Error::input(format!(
            "subset fraction must be in (0, 0.5], got {}",
            fraction
        )));
    }
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (class, mut members) in nodes_by_class(labels, num_classes, labeled)
        .into_iter()
        .enumerate()
    {
        let k = (fraction * members.len() as f64).floor() as usize;
        if k == 0 {
            return Err(Error::input(format!(
                "class {} has only {} labeled nodes; fraction {} selects none",
                class,
                members.len(),
                fraction
            )));
        }
        members.sort_by(|&a, &b| gis[b].partial_cmp(&gis[a]).unwrap().then(a.cmp(&b)));
        high.extend_from_slice(&members[..k]);
        low.extend_from_slice(&members[members.len() - k..]);
    }
    high.sort_unstable();
    low.sort_unstable();
    Ok((high, low))
}

/// Class-balanced subsample of the labeled set; validation and test stay
/// untouched.
pub fn label_scarce_subset(
    split: &Split,
    labels: &[usize],
    num_classes: usize,
    per_class: usize,
    seed: u64,
) -> Result<Split> {
    let mut rng = rng_for(seed, "label-scarce");
    let mut labeled = Vec::with_capacity(per_class * num_classes);
    for (class, mut members) in nodes_by_class(labels, num_classes, &split.labeled)
        .into_iter()
        .enumerate()
    {
        if members.len() < per_class {
            return Err(Error::input(format!(
                "class {} has {} labeled nodes, cannot keep {} per class",
                class,
                members.len(),
                per_class
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..per_class]);
    }
    labeled.sort_unstable();
    Ok(Split {
        labeled,
        val: split.val.clone(),
        test: split.test.clone(),
        observed: split.observed.clone(),
    })
}

/// Median wall-clock seconds of `f` over `reps` runs after `warmups`
/// discarded runs.
pub fn median_latency(mut f: impl FnMut(), reps: usize, warmups: usize) -> f64 {
    for _ in 0..warmups {
        f();
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = std::time::Instant::now();
        f();
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if times.is_empty() {
        return 0.0;
    }
    let mid = times.len() / 2;
    if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    }
}
