//! Semi-supervised training with early stopping, evaluation, multi-seed
//! experiment runs, attention export, and an empirical complexity probe.

pub mod export;
pub mod metrics;
pub mod probe;

pub use export::{
    attention_pair_analysis, export_attention, pair_analysis_from_csv, PairAnalysis,
};
pub use metrics::{macro_f1, micro_f1};
pub use probe::{complexity_probe, ProbePoint, ProbeReport};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{complete_missing_features, split_dataset, Dataset, RefMissingPolicy};
use crate::error::{Error, Result};
use crate::model::{
    forward_full, ForwardOptions, ForwardOutput, GraphPrep, Mode, ModelConfig, ParameterSet,
};
use crate::numerics::{Adam, AdamConfig};

/// Flat run configuration: every model field plus the trainer and data
/// preparation fields. This is the JSON config the CLI reads; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    // Model.
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub fusion_hidden_dim: Option<usize>,
    pub cross_modal_unit: bool,
    pub adaptive_weights: bool,
    pub influenced_modality_in_lambda: bool,
    pub neighbor_in_lambda: bool,
    pub alignment_modulation: bool,
    pub attention_loss: bool,
    pub individual_modality_loss: bool,
    pub modalities_enabled: Option<Vec<String>>,
    pub node_type_dependent_params: bool,
    pub edge_type_dependent_params: bool,
    pub nonlinear_projections: bool,
    pub alignment_sign: crate::model::AlignmentSign,
    pub attention_scale: bool,
    pub normalize_attention_loss_by_pairs: bool,
    pub share_modality_classifier: bool,

    // Optimization.
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub patience: usize,

    // Data preparation.
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    /// Modality used to complete missing features; defaults to the first
    /// declared modality.
    pub reference_modality: Option<String>,
    /// Fill with zeros when the reference modality itself is missing for a
    /// node type, instead of rejecting the configuration.
    pub completion_zero_fill: bool,
    pub add_self_loops: bool,

    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            layers: m.layers,
            hidden_dim: m.hidden_dim,
            heads: m.heads,
            dropout: m.dropout,
            fusion_hidden_dim: m.fusion_hidden_dim,
            cross_modal_unit: m.cross_modal_unit,
            adaptive_weights: m.adaptive_weights,
            influenced_modality_in_lambda: m.influenced_modality_in_lambda,
            neighbor_in_lambda: m.neighbor_in_lambda,
            alignment_modulation: m.alignment_modulation,
            attention_loss: m.attention_loss,
            individual_modality_loss: m.individual_modality_loss,
            modalities_enabled: m.modalities_enabled,
            node_type_dependent_params: m.node_type_dependent_params,
            edge_type_dependent_params: m.edge_type_dependent_params,
            nonlinear_projections: m.nonlinear_projections,
            alignment_sign: m.alignment_sign,
            attention_scale: m.attention_scale,
            normalize_attention_loss_by_pairs: m.normalize_attention_loss_by_pairs,
            share_modality_classifier: m.share_modality_classifier,
            learning_rate: 1e-3,
            max_iterations: 300,
            patience: 50,
            train_ratio: 0.2,
            val_ratio: 0.1,
            test_ratio: 0.7,
            reference_modality: None,
            completion_zero_fill: false,
            add_self_loops: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            dropout: self.dropout,
            fusion_hidden_dim: self.fusion_hidden_dim,
            cross_modal_unit: self.cross_modal_unit,
            adaptive_weights: self.adaptive_weights,
            influenced_modality_in_lambda: self.influenced_modality_in_lambda,
            neighbor_in_lambda: self.neighbor_in_lambda,
            alignment_modulation: self.alignment_modulation,
            attention_loss: self.attention_loss,
            individual_modality_loss: self.individual_modality_loss,
            modalities_enabled: self.modalities_enabled.clone(),
            node_type_dependent_params: self.node_type_dependent_params,
            edge_type_dependent_params: self.edge_type_dependent_params,
            nonlinear_projections: self.nonlinear_projections,
            alignment_sign: self.alignment_sign,
            attention_scale: self.attention_scale,
            normalize_attention_loss_by_pairs: self.normalize_attention_loss_by_pairs,
            share_modality_classifier: self.share_modality_classifier,
        }
    }

    /// Copies this config with a model ablation variant applied.
    pub fn with_variant(&self, v: crate::model::Variant) -> Self {
        let mut out = self.clone();
        let mut model = self.model_config();
        v.apply(&mut model);
        out.cross_modal_unit = model.cross_modal_unit;
        out.adaptive_weights = model.adaptive_weights;
        out.influenced_modality_in_lambda = model.influenced_modality_in_lambda;
        out.neighbor_in_lambda = model.neighbor_in_lambda;
        out.alignment_modulation = model.alignment_modulation;
        out.attention_loss = model.attention_loss;
        out.individual_modality_loss = model.individual_modality_loss;
        out.modalities_enabled = model.modalities_enabled;
        out.node_type_dependent_params = model.node_type_dependent_params;
        out.edge_type_dependent_params = model.edge_type_dependent_params;
        out.nonlinear_projections = model.nonlinear_projections;
        out
    }
}

/// Completes missing features, optionally adds self loops, and generates a
/// stratified split when the dataset carries none.
pub fn prepare_dataset(dataset: &Dataset, run: &RunConfig) -> Result<Dataset> {
    let mut ds = dataset.clone();
    if run.add_self_loops {
        ds.graph = ds.graph.with_self_loops()?;
    }
    let reference = match &run.reference_modality {
        Some(name) => ds
            .schema
            .modality_id(name)
            .ok_or_else(|| Error::config(format!("unknown reference modality {name}")))?,
        None => 0,
    };
    let policy = if run.completion_zero_fill {
        RefMissingPolicy::ZeroFill
    } else {
        RefMissingPolicy::Error
    };
    ds.features =
        complete_missing_features(&ds.features, &ds.graph, &ds.schema, reference, policy)?;
    let no_split = ds.split.train_ids.is_empty()
        && ds.split.val_ids.is_empty()
        && ds.split.test_ids.is_empty();
    if no_split {
        ds.split = split_dataset(
            &ds.split.labels,
            (run.train_ratio, run.val_ratio, run.test_ratio),
            run.seed,
        )?;
    }
    ds.validate()?;
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Everything a training run reports. Wall-clock timings are kept out of the
/// serialized form so artifacts stay byte-identical across reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub dataset_hash: String,
    pub iterations: Vec<IterationRecord>,
    /// Iteration whose parameters were kept (best validation accuracy, ties
    /// broken by lower validation loss).
    pub best_iteration: usize,
    pub stopped_iteration: usize,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
    #[serde(skip_serializing, default)]
    pub seconds_per_iteration: Vec<f64>,
}

/// Full-graph Adam training with the literal early-stopping rule: a trigger
/// fires when the validation loss exceeds every previously recorded value
/// AND the validation accuracy is below the historical best; training stops
/// once triggers persist for more than `patience` consecutive iterations.
/// Returns the parameters of the best-validation iteration.
pub fn train(dataset: &Dataset, run: &RunConfig) -> Result<(ParameterSet, TrainReport)> {
    let cfg = run.model_config();
    cfg.validate()?;
    if dataset.split.train_ids.is_empty() {
        return Err(Error::data("training needs a non-empty train split"));
    }
    let prep = GraphPrep::new(dataset, &cfg)?;
    let mut params = ParameterSet::init(
        &dataset.schema,
        dataset.graph.node_type_names(),
        dataset.graph.edge_type_names(),
        &cfg,
        run.seed,
    )?;
    let mut adam = Adam::new(AdamConfig {
        learning_rate: run.learning_rate,
        ..Default::default()
    });
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(run.seed.wrapping_add(0x0dd0));

    let labels = &dataset.split.labels;
    let accuracy_over = |out: &ForwardOutput, ids: &[usize]| -> f64 {
        if ids.is_empty() {
            return 0.0;
        }
        let hits = ids
            .iter()
            .filter(|&&id| labels[id] == Some(out.predictions[id]))
            .count();
        hits as f64 / ids.len() as f64
    };

    let mut report = TrainReport {
        seed: run.seed,
        dataset_hash: dataset.content_hash(),
        iterations: Vec::new(),
        best_iteration: 0,
        stopped_iteration: 0,
        test_micro_f1: 0.0,
        test_macro_f1: 0.0,
        seconds_per_iteration: Vec::new(),
    };
    let mut best: Option<(f64, f64, usize, ParameterSet)> = None;
    let mut max_seen_val_loss = f64::NEG_INFINITY;
    let mut max_seen_val_acc = f64::NEG_INFINITY;
    let mut consecutive_triggers = 0usize;

    for iteration in 1..=run.max_iterations {
        let started = Instant::now();
        let fwd = forward_full(
            &prep,
            &dataset.features,
            &params,
            &cfg,
            ForwardOptions {
                mode: Mode::Train,
                rng: Some(&mut dropout_rng),
                loss_ids: &dataset.split.train_ids,
                labels,
                capture_attention: false,
            },
        )
        .map_err(|e| diverged(e, iteration))?;
        let grads = fwd.backward(&params).map_err(|e| diverged(e, iteration))?;
        adam.step(params.map_mut(), &grads)
            .map_err(|e| diverged(e, iteration))?;

        let mut record = IterationRecord {
            iteration,
            train_loss: fwd.loss,
            train_accuracy: accuracy_over(&fwd, &dataset.split.train_ids),
            val_loss: None,
            val_accuracy: None,
        };
        report.stopped_iteration = iteration;

        let mut stop = false;
        if !dataset.split.val_ids.is_empty() {
            let val = forward_full(
                &prep,
                &dataset.features,
                &params,
                &cfg,
                ForwardOptions {
                    mode: Mode::Eval,
                    rng: None,
                    loss_ids: &dataset.split.val_ids,
                    labels,
                    capture_attention: false,
                },
            )
            .map_err(|e| diverged(e, iteration))?;
            let val_loss = val.loss;
            let val_acc = accuracy_over(&val, &dataset.split.val_ids);
            record.val_loss = Some(val_loss);
            record.val_accuracy = Some(val_acc);

            let better = match &best {
                None => true,
                Some((acc, loss, _, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
            };
            if better {
                best = Some((val_acc, val_loss, iteration, params.clone()));
            }

            let trigger = max_seen_val_loss.is_finite()
                && val_loss > max_seen_val_loss
                && val_acc < max_seen_val_acc;
            if trigger {
                consecutive_triggers += 1;
            } else {
                consecutive_triggers = 0;
            }
            max_seen_val_loss = max_seen_val_loss.max(val_loss);
            max_seen_val_acc = max_seen_val_acc.max(val_acc);
            stop = consecutive_triggers > run.patience;
        } else {
            // Without a validation split the final iteration wins.
            best = Some((record.train_accuracy, record.train_loss, iteration, params.clone()));
        }

        report
            .seconds_per_iteration
            .push(started.elapsed().as_secs_f64());
        report.iterations.push(record);
        if stop {
            break;
        }
    }

    let (_, _, best_iteration, best_params) =
        best.ok_or_else(|| Error::data("no training iterations ran"))?;
    report.best_iteration = best_iteration;
    params = best_params;

    if !dataset.split.test_ids.is_empty() {
        let (micro, macro_) = evaluate(dataset, &params, &cfg, &dataset.split.test_ids)?;
        report.test_micro_f1 = micro;
        report.test_macro_f1 = macro_;
    }
    Ok((params, report))
}

fn diverged(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { iteration },
        other => other,
    }
}

/// Micro / macro F1 of a parameter set on the listed nodes.
pub fn evaluate(
    dataset: &Dataset,
    params: &ParameterSet,
    cfg: &ModelConfig,
    ids: &[usize],
) -> Result<(f64, f64)> {
    if ids.is_empty() {
        return Err(Error::data("evaluate over an empty split"));
    }
    let prep = GraphPrep::new(dataset, cfg)?;
    let out = forward_full(
        &prep,
        &dataset.features,
        params,
        cfg,
        ForwardOptions {
            mode: Mode::Eval,
            rng: None,
            loss_ids: &[],
            labels: &dataset.split.labels,
            capture_attention: false,
        },
    )?;
    let mut preds = Vec::with_capacity(ids.len());
    let mut golds = Vec::with_capacity(ids.len());
    for &id in ids {
        let gold = dataset.split.labels[id]
            .ok_or_else(|| Error::data(format!("node {id} has no label")))?;
        preds.push(out.predictions[id]);
        golds.push(gold);
    }
    Ok((
        micro_f1(&preds, &golds),
        macro_f1(&preds, &golds, dataset.schema.categories.len()),
    ))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seeds: Vec<u64>,
    pub mean_micro_f1: f64,
    pub std_micro_f1: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub reports: Vec<TrainReport>,
}

/// Trains once per seed and aggregates test metrics (mean and sample
/// standard deviation). Needs at least two seeds.
pub fn run_seeds(dataset: &Dataset, run: &RunConfig, seeds: &[u64]) -> Result<SeedSummary> {
    if seeds.len() < 2 {
        return Err(Error::config(
            "run_seeds needs at least 2 seeds to report a standard deviation",
        ));
    }
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = RunConfig {
            seed,
            ..run.clone()
        };
        let (_, report) = train(dataset, &cfg)?;
        reports.push(report);
    }
    let micro: Vec<f64> = reports.iter().map(|r| r.test_micro_f1).collect();
    let macro_: Vec<f64> = reports.iter().map(|r| r.test_macro_f1).collect();
    Ok(SeedSummary {
        seeds: seeds.to_vec(),
        mean_micro_f1: mean(&micro),
        std_micro_f1: sample_std(&micro),
        mean_macro_f1: mean(&macro_),
        std_macro_f1: sample_std(&macro_),
        reports,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic_mmhn, gradcheck_fixture, SyntheticSpec};

    fn quick_run() -> RunConfig {
        RunConfig {
            layers: 2,
            hidden_dim: 8,
            heads: 2,
            dropout: 0.0,
            max_iterations: 30,
            learning_rate: 5e-3,
            ..Default::default()
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let ds = gradcheck_fixture();
        let run = quick_run();
        let (p1, r1) = train(&ds, &run).unwrap();
        let (p2, r2) = train(&ds, &run).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.iterations, r2.iterations);
        // Serialized reports exclude timings, so the bytes match too.
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn best_iteration_never_exceeds_stop() {
        let ds = gradcheck_fixture();
        let run = quick_run();
        let (_, report) = train(&ds, &run).unwrap();
        assert!(report.best_iteration <= report.stopped_iteration);
        assert_eq!(report.iterations.len(), report.stopped_iteration);
    }

    #[test]
    fn patience_zero_stops_on_first_trigger() {
        let spec = SyntheticSpec::small();
        let ds = generate_synthetic_mmhn(&spec, 4).unwrap();
        let run = RunConfig {
            patience: 0,
            max_iterations: 120,
            learning_rate: 2e-2,
            ..quick_run()
        };
        let (_, report) = train(&ds, &run).unwrap();
        if report.stopped_iteration < run.max_iterations {
            // Verify the final iteration is the FIRST trigger: val loss
            // above every earlier value and accuracy below the best.
            let mut max_loss = f64::NEG_INFINITY;
            let mut max_acc = f64::NEG_INFINITY;
            for rec in &report.iterations[..report.iterations.len() - 1] {
                let vl = rec.val_loss.unwrap();
                let va = rec.val_accuracy.unwrap();
                let trigger = max_loss.is_finite() && vl > max_loss && va < max_acc;
                assert!(!trigger, "earlier trigger at {}", rec.iteration);
                max_loss = max_loss.max(vl);
                max_acc = max_acc.max(va);
            }
            let last = report.iterations.last().unwrap();
            assert!(last.val_loss.unwrap() > max_loss);
            assert!(last.val_accuracy.unwrap() < max_acc);
        }
    }

    #[test]
    fn run_seeds_requires_two() {
        let ds = gradcheck_fixture();
        assert!(run_seeds(&ds, &quick_run(), &[1]).is_err());
    }

    #[test]
    fn identical_seeds_zero_std() {
        let ds = gradcheck_fixture();
        let run = RunConfig {
            max_iterations: 5,
            ..quick_run()
        };
        let summary = run_seeds(&ds, &run, &[7, 7, 7]).unwrap();
        assert_eq!(summary.std_micro_f1, 0.0);
        assert_eq!(summary.std_macro_f1, 0.0);
    }

    #[test]
    fn prepare_generates_split_when_absent() {
        let spec = SyntheticSpec::small();
        let mut ds = generate_synthetic_mmhn(&spec, 2).unwrap();
        ds.split.train_ids.clear();
        ds.split.val_ids.clear();
        ds.split.test_ids.clear();
        let run = quick_run();
        let prepared = prepare_dataset(&ds, &run).unwrap();
        assert!(!prepared.split.train_ids.is_empty());
        assert!(!prepared.split.val_ids.is_empty());
        prepared.validate().unwrap();
    }

    #[test]
    fn evaluate_rejects_empty_split() {
        let ds = gradcheck_fixture();
        let cfg = quick_run().model_config();
        let params = ParameterSet::init(
            &ds.schema,
            ds.graph.node_type_names(),
            ds.graph.edge_type_names(),
            &cfg,
            0,
        )
        .unwrap();
        assert!(evaluate(&ds, &params, &cfg, &[]).is_err());
    }
}
