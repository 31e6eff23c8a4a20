//! Synthetic multi-modal heterogeneous networks with planted label signals.
//!
//! The `CrossModal` planting mode builds graphs where the label is only
//! recoverable by combining modalities: for a random half of the target
//! nodes the label-bearing Gaussian cluster sits in the text features while
//! vision is drawn from a label-independent mixture, and vice versa for the
//! other half. Same-label nodes are preferentially connected through
//! intermediary nodes, so correct classification also rewards 2-hop
//! propagation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    complete_missing_features, split_dataset, Dataset, DatasetSplit, Edge, FeatureStore,
    MmhnGraph, ModalitySchema, RefMissingPolicy,
};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PlantingMode {
    /// Label signal alternates between modalities per node; the other
    /// modality carries label-independent mixture noise.
    CrossModal,
    /// Label signal present in every modality (easy mode, for overfitting
    /// and smoke fixtures).
    BothModalities,
}

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub target_nodes: usize,
    /// Intermediary nodes of the auxiliary type, which natively lacks the
    /// vision modality.
    pub aux_nodes: usize,
    pub categories: usize,
    pub text_dim: usize,
    pub vision_dim: usize,
    /// Additional modalities (named m2, m3, ...) native to the target type
    /// only, carrying label-independent mixture noise; the complexity probe
    /// uses these to scale the modality count at fixed edge structure.
    pub extra_modalities: usize,
    pub planting: PlantingMode,
    /// Distance of cluster centers from the origin.
    pub cluster_separation: f64,
    pub noise_std: f64,
    /// Spread of the label-independent mixture draws. Kept wider than
    /// `noise_std` so classification errors on signal-free modalities stay
    /// decorrelated across nodes of one component.
    pub noise_modal_std: f64,
    /// Label-independent mixture components used for the non-signal modality.
    pub noise_components: usize,
    /// Probability that a non-signal modality is drawn around a scaled
    /// random-class direction instead of a neutral component. The component
    /// choice is independent of the node's label, but such draws are
    /// actively misleading for single-modality attention.
    pub confusion_mix: f64,
    /// Projection of confusion components onto the class axis (the rest of
    /// the energy goes to a neutral axis, keeping the center norm equal to
    /// `cluster_separation`).
    pub confusion_scale: f64,
    /// Target-aux edge probability for same/different latent labels.
    pub edge_prob_same: f64,
    pub edge_prob_diff: f64,
    /// Direct target-target edge probabilities.
    pub target_edge_prob_same: f64,
    pub target_edge_prob_diff: f64,
    pub split_ratios: (f64, f64, f64),
}

impl SyntheticSpec {
    /// The ~300 node planted benchmark used by the acceptance experiments.
    pub fn cross_modal_benchmark() -> Self {
        Self {
            target_nodes: 200,
            aux_nodes: 100,
            categories: 2,
            text_dim: 8,
            vision_dim: 8,
            extra_modalities: 0,
            planting: PlantingMode::CrossModal,
            cluster_separation: 6.0,
            noise_std: 0.5,
            noise_modal_std: 0.9,
            noise_components: 6,
            confusion_mix: 0.8,
            confusion_scale: 0.35,
            edge_prob_same: 0.07,
            edge_prob_diff: 0.04,
            target_edge_prob_same: 0.02,
            target_edge_prob_diff: 0.005,
            split_ratios: (0.2, 0.1, 0.7),
        }
    }

    /// Harder planted instance for training experiments: confusion
    /// components sit exactly on wrong-class centers with the signal's own
    /// spread, so a node whose two channels disagree cannot be resolved from
    /// its own features; only label-homophilous propagation disambiguates,
    /// and selecting those neighbors for a poisoned channel requires
    /// cross-modal attention.
    pub fn cross_modal_hard() -> Self {
        Self {
            confusion_mix: 1.0,
            confusion_scale: 1.0,
            noise_modal_std: 0.5,
            edge_prob_same: 0.05,
            edge_prob_diff: 0.02,
            target_edge_prob_same: 0.10,
            target_edge_prob_diff: 0.022,
            ..Self::cross_modal_benchmark()
        }
    }

    /// Small graph for quick smoke runs.
    pub fn small() -> Self {
        Self {
            target_nodes: 40,
            aux_nodes: 20,
            edge_prob_same: 0.2,
            edge_prob_diff: 0.06,
            ..Self::cross_modal_benchmark()
        }
    }

    /// Easy fixture with the signal in every modality; 20 train labels under
    /// the default 20/10/70 split.
    pub fn overfit() -> Self {
        Self {
            target_nodes: 100,
            aux_nodes: 40,
            planting: PlantingMode::BothModalities,
            edge_prob_same: 0.12,
            edge_prob_diff: 0.04,
            ..Self::cross_modal_benchmark()
        }
    }

    /// Scales edge density knobs so expected degree stays roughly constant
    /// while node counts vary; used by the complexity probe.
    pub fn sized(target_nodes: usize, aux_nodes: usize, degree: f64) -> Self {
        let base = Self::cross_modal_benchmark();
        let p = (degree / aux_nodes.max(1) as f64).min(1.0);
        Self {
            target_nodes,
            aux_nodes,
            edge_prob_same: p,
            edge_prob_diff: p / 2.0,
            target_edge_prob_same: 0.0,
            target_edge_prob_diff: 0.0,
            ..base
        }
    }

    fn validate(&self) -> Result<()> {
        if self.categories < 2 {
            return Err(Error::config("need >= 2 categories"));
        }
        if self.target_nodes == 0 || self.text_dim == 0 || self.vision_dim == 0 {
            return Err(Error::config(
                "degenerate spec: node count and feature dims must be positive",
            ));
        }
        let need = self.categories + self.noise_components;
        if self.text_dim < need || self.vision_dim < need {
            return Err(Error::config(format!(
                "feature dims must be >= categories + noise components ({need})"
            )));
        }
        for p in [
            self.edge_prob_same,
            self.edge_prob_diff,
            self.target_edge_prob_same,
            self.target_edge_prob_diff,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config("edge probabilities must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; fully determined by the rng stream.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Writes `sep * e_axis + N(0, std)` into `row`.
fn cluster_row(row: &mut [f64], axis: usize, sep: f64, std: f64, rng: &mut ChaCha8Rng) {
    for (c, slot) in row.iter_mut().enumerate() {
        let center = if c == axis { sep } else { 0.0 };
        *slot = center + std * normal(rng);
    }
}

/// A mixture component center for a signal-free modality: either a neutral
/// axis, or a scaled class axis blended with a neutral axis.
enum NoiseCenter {
    Neutral(usize),
    Confusion { class_axis: usize, neutral_axis: usize },
}

fn noise_row(
    row: &mut [f64],
    center: &NoiseCenter,
    sep: f64,
    scale: f64,
    std: f64,
    rng: &mut ChaCha8Rng,
) {
    let ortho = (1.0 - scale * scale).max(0.0).sqrt();
    for (c, slot) in row.iter_mut().enumerate() {
        let center_v = match center {
            NoiseCenter::Neutral(a) => {
                if c == *a {
                    sep
                } else {
                    0.0
                }
            }
            NoiseCenter::Confusion { class_axis, neutral_axis } => {
                if c == *class_axis {
                    sep * scale
                } else if c == *neutral_axis {
                    sep * ortho
                } else {
                    0.0
                }
            }
        };
        *slot = center_v + std * normal(rng);
    }
}

/// Generates a planted dataset. Deterministic for a fixed seed; vision rows
/// of the auxiliary type are completed from text before returning.
pub fn generate_synthetic_mmhn(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    // Separate streams so edge structure is invariant to feature knobs
    // (modality count, dims); labels are drawn first from the feature
    // stream and shared by both.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edge_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let n_target = spec.target_nodes;
    let n_aux = spec.aux_nodes;
    let n = n_target + n_aux;
    let c = spec.categories;

    // Balanced labels, shuffled.
    let mut target_labels: Vec<usize> = (0..n_target).map(|i| i % c).collect();
    target_labels.shuffle(&mut rng);
    let mut aux_labels: Vec<usize> = (0..n_aux).map(|i| i % c).collect();
    aux_labels.shuffle(&mut rng);

    // Which target nodes carry the label signal in text (the rest in vision).
    let mut text_signal: Vec<bool> = (0..n_target).map(|i| i % 2 == 0).collect();
    text_signal.shuffle(&mut rng);

    let sep = spec.cluster_separation;
    let std = spec.noise_std;
    // Class centers occupy axes 0..c, neutral mixture components the next
    // noise_components axes; the sets are orthogonal by construction.
    let noise_center = |rng: &mut ChaCha8Rng| -> NoiseCenter {
        if spec.confusion_mix > 0.0 && rng.gen::<f64>() < spec.confusion_mix {
            NoiseCenter::Confusion {
                class_axis: rng.gen_range(0..c),
                neutral_axis: c + rng.gen_range(0..spec.noise_components),
            }
        } else {
            NoiseCenter::Neutral(c + rng.gen_range(0..spec.noise_components))
        }
    };

    let mut text = vec![0.0; n * spec.text_dim];
    let mut vision = vec![0.0; n * spec.vision_dim];
    for i in 0..n_target {
        let label = target_labels[i];
        let trow = &mut text[i * spec.text_dim..(i + 1) * spec.text_dim];
        let text_signal_here =
            spec.planting == PlantingMode::BothModalities || text_signal[i];
        if text_signal_here {
            cluster_row(trow, label, sep, std, &mut rng);
        } else {
            let center = noise_center(&mut rng);
            noise_row(trow, &center, sep, spec.confusion_scale, spec.noise_modal_std, &mut rng);
        }
        let vrow = &mut vision[i * spec.vision_dim..(i + 1) * spec.vision_dim];
        let vision_signal_here =
            spec.planting == PlantingMode::BothModalities || !text_signal[i];
        if vision_signal_here {
            cluster_row(vrow, label, sep, std, &mut rng);
        } else {
            let center = noise_center(&mut rng);
            noise_row(vrow, &center, sep, spec.confusion_scale, spec.noise_modal_std, &mut rng);
        }
    }
    for a in 0..n_aux {
        let i = n_target + a;
        let trow = &mut text[i * spec.text_dim..(i + 1) * spec.text_dim];
        cluster_row(trow, aux_labels[a], sep, std, &mut rng);
        // Vision is not native for the aux type; rows stay zero until
        // completion copies the text features over.
    }
    // Extra modalities: mixture noise on target nodes, missing on aux.
    let mut extras: Vec<Vec<f64>> = Vec::with_capacity(spec.extra_modalities);
    for _ in 0..spec.extra_modalities {
        let mut mat = vec![0.0; n * spec.text_dim];
        for i in 0..n_target {
            let center = noise_center(&mut rng);
            let row = &mut mat[i * spec.text_dim..(i + 1) * spec.text_dim];
            noise_row(row, &center, sep, spec.confusion_scale, spec.noise_modal_std, &mut rng);
        }
        extras.push(mat);
    }

    // Edges: target <-> aux with 2-hop homophily via latent aux labels, plus
    // an optional sprinkle of direct target-target edges.
    let mut edges = Vec::new();
    for t in 0..n_target {
        for a in 0..n_aux {
            let p = if target_labels[t] == aux_labels[a] {
                spec.edge_prob_same
            } else {
                spec.edge_prob_diff
            };
            if edge_rng.gen::<f64>() < p {
                let aux_id = n_target + a;
                edges.push(Edge { src: aux_id, dst: t, etype: 0 });
                edges.push(Edge { src: t, dst: aux_id, etype: 1 });
            }
        }
    }
    if spec.target_edge_prob_same > 0.0 || spec.target_edge_prob_diff > 0.0 {
        for t1 in 0..n_target {
            for t2 in (t1 + 1)..n_target {
                let p = if target_labels[t1] == target_labels[t2] {
                    spec.target_edge_prob_same
                } else {
                    spec.target_edge_prob_diff
                };
                if edge_rng.gen::<f64>() < p {
                    edges.push(Edge { src: t1, dst: t2, etype: 2 });
                    edges.push(Edge { src: t2, dst: t1, etype: 2 });
                }
            }
        }
    }

    let node_type_of: Vec<usize> = (0..n).map(|i| usize::from(i >= n_target)).collect();
    let graph = MmhnGraph::new(
        vec!["item".into(), "tag".into()],
        vec!["tag_item".into(), "item_tag".into(), "item_item".into()],
        node_type_of,
        edges,
    )?;
    let mut modality_names = vec!["text".to_string(), "vision".to_string()];
    let mut input_dims = vec![spec.text_dim, spec.vision_dim];
    let mut target_native = vec![0, 1];
    for x in 0..spec.extra_modalities {
        modality_names.push(format!("m{}", x + 2));
        input_dims.push(spec.text_dim);
        target_native.push(2 + x);
    }
    let schema = ModalitySchema {
        modality_names,
        input_dims,
        native_modalities_of_type: vec![target_native, vec![0]],
        target_node_type: 0,
        categories: (0..c).map(|k| format!("c{k}")).collect(),
    };
    let mut matrices = vec![
        Tensor::new([n, spec.text_dim], text)?,
        Tensor::new([n, spec.vision_dim], vision)?,
    ];
    for mat in extras {
        matrices.push(Tensor::new([n, spec.text_dim], mat)?);
    }
    let features = FeatureStore::new(&graph, &schema, matrices)?;
    let features = complete_missing_features(&features, &graph, &schema, 0, RefMissingPolicy::Error)?;

    let mut labels: Vec<Option<usize>> = vec![None; n];
    for (i, &l) in target_labels.iter().enumerate() {
        labels[i] = Some(l);
    }
    let split = split_dataset(&labels, spec.split_ratios, seed ^ 0x5eed)?;

    let dataset = Dataset {
        graph,
        schema,
        features,
        split,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Small deterministic 12-node fixture with 3 node types, 2 modalities of
/// differing dims, 4 edge types, and a modality missing on one type. Used by
/// the gradient-check command and tests. Features come completed.
pub fn gradcheck_fixture() -> Dataset {
    let node_type_names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let edge_type_names = vec![
        "ba".to_string(),
        "ab".to_string(),
        "ca".to_string(),
        "bc".to_string(),
    ];
    // Nodes 0-4: type a (targets), 5-8: type b, 9-11: type c.
    let node_type_of = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
    let e = |src, dst, etype| Edge { src, dst, etype };
    let edges = vec![
        e(5, 0, 0),
        e(6, 0, 0),
        e(5, 1, 0),
        e(7, 2, 0),
        e(8, 3, 0),
        e(6, 4, 0),
        e(0, 5, 1),
        e(1, 6, 1),
        e(2, 7, 1),
        e(3, 8, 1),
        e(9, 0, 2),
        e(10, 1, 2),
        e(11, 4, 2),
        e(5, 9, 3),
        e(6, 10, 3),
        e(7, 11, 3),
    ];
    let graph = MmhnGraph::new(node_type_names, edge_type_names, node_type_of, edges).unwrap();
    let schema = ModalitySchema {
        modality_names: vec!["text".into(), "vision".into()],
        input_dims: vec![5, 3],
        native_modalities_of_type: vec![vec![0, 1], vec![0], vec![0, 1]],
        target_node_type: 0,
        categories: vec!["c0".into(), "c1".into()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = graph.node_count();
    let text = Tensor::from_parts(
        vec![n, 5],
        (0..n * 5).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let vision = Tensor::from_parts(
        vec![n, 3],
        (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let features = FeatureStore::new(&graph, &schema, vec![text, vision]).unwrap();
    let features =
        complete_missing_features(&features, &graph, &schema, 0, RefMissingPolicy::Error).unwrap();
    let mut labels = vec![None; n];
    for (i, l) in [(0usize, 0usize), (1, 1), (2, 0), (3, 1), (4, 0)] {
        labels[i] = Some(l);
    }
    let split = DatasetSplit {
        train_ids: vec![0, 1, 2],
        val_ids: vec![3],
        test_ids: vec![4],
        labels,
    };
    let dataset = Dataset {
        graph,
        schema,
        features,
        split,
    };
    dataset.validate().unwrap();
    dataset
}
