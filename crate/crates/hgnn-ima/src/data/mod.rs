//! The multi-modal heterogeneous network data model.
//!
//! A network is a set of typed nodes and typed directed edges where each node
//! type natively carries a subset of the declared modalities. One node type
//! is the classification target; its nodes hold category labels and are
//! partitioned into train/validation/test splits.

pub mod manifest;
pub mod split;
pub mod synth;

pub use manifest::{load_dataset, save_dataset};
pub use split::split_dataset;
pub use synth::{generate_synthetic_mmhn, gradcheck_fixture, PlantingMode, SyntheticSpec};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// A directed typed edge `src -> dst`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub etype: usize,
}

/// Typed multigraph with per-node incoming adjacency.
///
/// `in_neighbors[i]` lists `(src, etype)` for every edge targeting `i`,
/// sorted by `(src, etype)`; it is a pure function of the edge multiset, so
/// permuting the stored edge list changes nothing downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct MmhnGraph {
    node_count: usize,
    node_type_of: Vec<usize>,
    edges: Vec<Edge>,
    in_neighbors: Vec<Vec<(usize, usize)>>,
    node_type_names: Vec<String>,
    edge_type_names: Vec<String>,
}

impl MmhnGraph {
    pub fn new(
        node_type_names: Vec<String>,
        edge_type_names: Vec<String>,
        node_type_of: Vec<usize>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let node_count = node_type_of.len();
        if node_type_names.is_empty() {
            return Err(Error::data("graph needs at least one node type"));
        }
        if node_type_names.len() + edge_type_names.len() <= 2 {
            return Err(Error::data(
                "not heterogeneous: |node types| + |edge types| must exceed 2",
            ));
        }
        for (i, &t) in node_type_of.iter().enumerate() {
            if t >= node_type_names.len() {
                return Err(Error::data(format!(
                    "node {i} has unregistered node type id {t}"
                )));
            }
        }
        for (i, e) in edges.iter().enumerate() {
            if e.src >= node_count || e.dst >= node_count {
                return Err(Error::data(format!(
                    "edge {i} has invalid endpoint: {} -> {} with {node_count} nodes",
                    e.src, e.dst
                )));
            }
            if e.etype >= edge_type_names.len() {
                return Err(Error::data(format!(
                    "edge {i} has unregistered edge type id {}",
                    e.etype
                )));
            }
        }
        let mut in_neighbors = vec![Vec::new(); node_count];
        for e in &edges {
            in_neighbors[e.dst].push((e.src, e.etype));
        }
        for adj in in_neighbors.iter_mut() {
            adj.sort_unstable();
        }
        Ok(Self {
            node_count,
            node_type_of,
            edges,
            in_neighbors,
            node_type_names,
            edge_type_names,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn node_type_of(&self, node: usize) -> usize {
        self.node_type_of[node]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_type_of
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn in_neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.in_neighbors[node]
    }

    pub fn node_type_names(&self) -> &[String] {
        &self.node_type_names
    }

    pub fn edge_type_names(&self) -> &[String] {
        &self.edge_type_names
    }

    pub fn node_type_id(&self, name: &str) -> Option<usize> {
        self.node_type_names.iter().position(|n| n == name)
    }

    pub fn edge_type_id(&self, name: &str) -> Option<usize> {
        self.edge_type_names.iter().position(|n| n == name)
    }

    /// Returns a copy with a dedicated "self" edge type and one loop per node.
    pub fn with_self_loops(&self) -> Result<Self> {
        let mut edge_type_names = self.edge_type_names.clone();
        let etype = edge_type_names.len();
        edge_type_names.push("self".into());
        let mut edges = self.edges.clone();
        for i in 0..self.node_count {
            edges.push(Edge {
                src: i,
                dst: i,
                etype,
            });
        }
        Self::new(
            self.node_type_names.clone(),
            edge_type_names,
            self.node_type_of.clone(),
            edges,
        )
    }
}

/// Declares modalities, which node types natively possess which modalities,
/// the classification target type, and the category set.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalitySchema {
    pub modality_names: Vec<String>,
    pub input_dims: Vec<usize>,
    /// `native[type_id]` is the set of modality ids the type possesses.
    pub native_modalities_of_type: Vec<Vec<usize>>,
    pub target_node_type: usize,
    pub categories: Vec<String>,
}

impl ModalitySchema {
    pub fn validate(&self, graph: &MmhnGraph) -> Result<()> {
        if self.modality_names.is_empty() {
            return Err(Error::data("schema declares no modalities"));
        }
        if self.modality_names.len() != self.input_dims.len() {
            return Err(Error::data("modality names and dims differ in length"));
        }
        if self.input_dims.iter().any(|&d| d == 0) {
            return Err(Error::data("modality input dims must be positive"));
        }
        if self.native_modalities_of_type.len() != graph.node_type_names().len() {
            return Err(Error::data(
                "native modality map must cover every node type",
            ));
        }
        for (t, mods) in self.native_modalities_of_type.iter().enumerate() {
            if mods.is_empty() {
                return Err(Error::data(format!(
                    "node type {} has an empty native modality set",
                    graph.node_type_names()[t]
                )));
            }
            for &m in mods {
                if m >= self.modality_names.len() {
                    return Err(Error::data(format!(
                        "node type {} references unknown modality id {m}",
                        graph.node_type_names()[t]
                    )));
                }
            }
        }
        if self.target_node_type >= graph.node_type_names().len() {
            return Err(Error::data("target node type is not registered"));
        }
        if self.categories.len() < 2 {
            return Err(Error::data("need >= 2 categories"));
        }
        Ok(())
    }

    pub fn modality_id(&self, name: &str) -> Option<usize> {
        self.modality_names.iter().position(|n| n == name)
    }

    pub fn category_id(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|n| n == name)
    }

    pub fn is_native(&self, node_type: usize, modality: usize) -> bool {
        self.native_modalities_of_type[node_type].contains(&modality)
    }
}

/// Per-modality feature matrices plus the presence mask derived from the
/// schema. The mask records which modalities are native and is not changed by
/// completion.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    /// One `[node_count x input_dims[m]]` matrix per modality.
    matrices: Vec<Tensor>,
    /// `presence[node * n_modalities + m]`.
    presence: Vec<bool>,
    n_modalities: usize,
}

impl FeatureStore {
    pub fn new(graph: &MmhnGraph, schema: &ModalitySchema, matrices: Vec<Tensor>) -> Result<Self> {
        schema.validate(graph)?;
        if matrices.len() != schema.modality_names.len() {
            return Err(Error::data(format!(
                "expected {} feature matrices, got {}",
                schema.modality_names.len(),
                matrices.len()
            )));
        }
        for (m, mat) in matrices.iter().enumerate() {
            let want = [graph.node_count(), schema.input_dims[m]];
            if mat.shape() != want {
                return Err(Error::Shape {
                    expected: format!("{want:?}"),
                    got: format!("{:?}", mat.shape()),
                    context: format!("feature matrix for {}", schema.modality_names[m]),
                });
            }
            if !mat.is_finite() {
                return Err(Error::NonFinite(format!(
                    "feature matrix for {}",
                    schema.modality_names[m]
                )));
            }
        }
        let nm = schema.modality_names.len();
        let mut presence = vec![false; graph.node_count() * nm];
        for i in 0..graph.node_count() {
            for m in 0..nm {
                presence[i * nm + m] = schema.is_native(graph.node_type_of(i), m);
            }
        }
        Ok(Self {
            matrices,
            presence,
            n_modalities: nm,
        })
    }

    pub fn matrix(&self, modality: usize) -> &Tensor {
        &self.matrices[modality]
    }

    pub fn n_modalities(&self) -> usize {
        self.n_modalities
    }

    pub fn is_present(&self, node: usize, modality: usize) -> bool {
        self.presence[node * self.n_modalities + modality]
    }
}

/// How [`complete_missing_features`] treats a node type that lacks the
/// reference modality itself.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum RefMissingPolicy {
    /// Reject the configuration.
    #[default]
    Error,
    /// Fill such rows with zero vectors; the attention loss suppresses these
    /// slots anyway.
    ZeroFill,
}

/// Fills non-native modality rows from the reference modality. When the dims
/// differ, the reference row is copied and then zero-padded or truncated to
/// the target width. Idempotent; the presence mask is left untouched.
pub fn complete_missing_features(
    store: &FeatureStore,
    graph: &MmhnGraph,
    schema: &ModalitySchema,
    reference_modality: usize,
    policy: RefMissingPolicy,
) -> Result<FeatureStore> {
    if reference_modality >= schema.modality_names.len() {
        return Err(Error::config(format!(
            "reference modality id {reference_modality} is not registered"
        )));
    }
    if policy == RefMissingPolicy::Error {
        for (t, mods) in schema.native_modalities_of_type.iter().enumerate() {
            if !mods.contains(&reference_modality) {
                return Err(Error::config(format!(
                    "reference modality {} is itself missing for node type {}",
                    schema.modality_names[reference_modality],
                    graph.node_type_names()[t]
                )));
            }
        }
    }
    let ref_dim = schema.input_dims[reference_modality];
    let ref_mat = store.matrix(reference_modality).clone();
    let mut matrices = store.matrices.clone();
    for m in 0..schema.modality_names.len() {
        if m == reference_modality {
            continue;
        }
        let dim = schema.input_dims[m];
        for node in 0..graph.node_count() {
            if store.is_present(node, m) {
                continue;
            }
            let row = &mut matrices[m].data_mut()[node * dim..(node + 1) * dim];
            if store.is_present(node, reference_modality) {
                let src = &ref_mat.data()[node * ref_dim..(node + 1) * ref_dim];
                for (c, slot) in row.iter_mut().enumerate() {
                    *slot = if c < ref_dim { src[c] } else { 0.0 };
                }
            } else {
                row.fill(0.0);
            }
        }
    }
    Ok(FeatureStore {
        matrices,
        presence: store.presence.clone(),
        n_modalities: store.n_modalities,
    })
}

/// Train/validation/test partition over target-type nodes, plus labels.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DatasetSplit {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    /// `labels[i] = Some(category)` for labeled target nodes, indexed by node id.
    pub labels: Vec<Option<usize>>,
}

impl DatasetSplit {
    pub fn validate(&self, graph: &MmhnGraph, schema: &ModalitySchema) -> Result<()> {
        let mut seen = vec![false; graph.node_count()];
        for (part, ids) in [
            ("train", &self.train_ids),
            ("val", &self.val_ids),
            ("test", &self.test_ids),
        ] {
            for &id in ids.iter() {
                if id >= graph.node_count() {
                    return Err(Error::data(format!("{part} split lists unknown node {id}")));
                }
                if graph.node_type_of(id) != schema.target_node_type {
                    return Err(Error::data(format!(
                        "{part} split node {id} is not of the target type"
                    )));
                }
                if seen[id] {
                    return Err(Error::data(format!(
                        "node {id} appears in more than one split part"
                    )));
                }
                seen[id] = true;
                match self.labels.get(id) {
                    Some(Some(c)) if *c < schema.categories.len() => {}
                    Some(Some(c)) => {
                        return Err(Error::data(format!(
                            "node {id} has label {c} outside the category set"
                        )))
                    }
                    _ => {
                        return Err(Error::data(format!(
                            "{part} split node {id} has no label"
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn label_of(&self, node: usize) -> Option<usize> {
        self.labels.get(node).copied().flatten()
    }
}

/// Everything needed to train or evaluate: graph, schema, features, split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: MmhnGraph,
    pub schema: ModalitySchema,
    pub features: FeatureStore,
    pub split: DatasetSplit,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate(&self.graph)?;
        self.split.validate(&self.graph, &self.schema)
    }

    /// Stable hex digest of the structural schema; checkpoints record it so
    /// evaluation refuses graphs with a different shape vocabulary.
    pub fn schema_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        let mut feed = |s: &str| {
            hasher.update(s.as_bytes());
            hasher.update([0u8]);
        };
        for n in self.graph.node_type_names() {
            feed(n);
        }
        feed("|");
        for n in self.graph.edge_type_names() {
            feed(n);
        }
        feed("|");
        for (name, dim) in self
            .schema
            .modality_names
            .iter()
            .zip(&self.schema.input_dims)
        {
            feed(name);
            feed(&dim.to_string());
        }
        feed("|");
        for mods in &self.schema.native_modalities_of_type {
            feed(&format!("{mods:?}"));
        }
        feed(&self.schema.target_node_type.to_string());
        for c in &self.schema.categories {
            feed(c);
        }
        hex(&hasher.finalize())
    }

    /// Digest of the full dataset content (schema plus graph, features,
    /// labels, and split), for run provenance.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.schema_hash().as_bytes());
        for &t in self.graph.node_types() {
            hasher.update(t.to_le_bytes());
        }
        for e in self.graph.edges() {
            hasher.update(e.src.to_le_bytes());
            hasher.update(e.dst.to_le_bytes());
            hasher.update(e.etype.to_le_bytes());
        }
        for m in 0..self.schema.modality_names.len() {
            for v in self.features.matrix(m).data() {
                hasher.update(v.to_le_bytes());
            }
        }
        for l in &self.split.labels {
            hasher.update((l.map(|c| c as i64).unwrap_or(-1)).to_le_bytes());
        }
        for ids in [
            &self.split.train_ids,
            &self.split.val_ids,
            &self.split.test_ids,
        ] {
            hasher.update(ids.len().to_le_bytes());
            for &id in ids.iter() {
                hasher.update(id.to_le_bytes());
            }
        }
        hex(&hasher.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
