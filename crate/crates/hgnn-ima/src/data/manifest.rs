//! Dataset manifest and on-disk formats.
//!
//! A dataset is one JSON manifest plus plain text files next to it:
//! - nodes: TSV `node_id \t type_name`, ids 0-based contiguous;
//! - edges: TSV `src \t dst \t edge_type_name`;
//! - features: one CSV per modality, row i holds node i's vector;
//! - labels: TSV `node_id \t category_name`;
//! - split (optional): TSV `node_id \t train|val|test`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetSplit, Edge, FeatureStore, MmhnGraph, ModalitySchema};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub node_types: Vec<NodeTypeDecl>,
    pub edge_types: Vec<String>,
    pub modalities: Vec<ModalityDecl>,
    pub target_type: String,
    pub categories: Vec<String>,
    pub files: FileSet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTypeDecl {
    pub name: String,
    /// Modalities this node type natively possesses.
    pub modalities: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityDecl {
    pub name: String,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSet {
    pub nodes: String,
    pub edges: String,
    /// Modality name -> CSV path.
    pub features: BTreeMap<String, String>,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads a dataset from a manifest file. Missing modality rows are NOT
/// completed here; run [`crate::data::complete_missing_features`] before
/// feeding the model.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
        Error::parse(file_name(manifest_path), e.line(), e.to_string())
    })?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let node_type_names: Vec<String> =
        manifest.node_types.iter().map(|t| t.name.clone()).collect();
    let modality_names: Vec<String> =
        manifest.modalities.iter().map(|m| m.name.clone()).collect();
    let input_dims: Vec<usize> = manifest.modalities.iter().map(|m| m.dim).collect();

    let mut native = Vec::with_capacity(manifest.node_types.len());
    for t in &manifest.node_types {
        let mut ids = Vec::new();
        for m in &t.modalities {
            let id = modality_names
                .iter()
                .position(|n| n == m)
                .ok_or_else(|| {
                    Error::data(format!(
                        "node type {} declares unknown modality {m}",
                        t.name
                    ))
                })?;
            ids.push(id);
        }
        ids.sort_unstable();
        ids.dedup();
        native.push(ids);
    }
    let target = node_type_names
        .iter()
        .position(|n| *n == manifest.target_type)
        .ok_or_else(|| Error::data(format!("unknown target type {}", manifest.target_type)))?;

    // Nodes.
    let nodes_path = dir.join(&manifest.files.nodes);
    let nodes_text = read_to_string(&nodes_path)?;
    let nodes_file = file_name(&nodes_path);
    let mut typed: Vec<Option<usize>> = Vec::new();
    for (lineno, line) in nonempty_lines(&nodes_text) {
        let mut parts = line.split('\t');
        let (id_s, ty_s) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::parse(
                    &nodes_file,
                    lineno,
                    "expected `node_id<TAB>type_name`",
                ))
            }
        };
        let id: usize = id_s.parse().map_err(|_| {
            Error::parse(&nodes_file, lineno, format!("bad node id {id_s:?}"))
        })?;
        let ty = node_type_names
            .iter()
            .position(|n| n == ty_s)
            .ok_or_else(|| {
                Error::parse(&nodes_file, lineno, format!("unknown node type {ty_s:?}"))
            })?;
        if typed.len() <= id {
            typed.resize(id + 1, None);
        }
        if typed[id].is_some() {
            return Err(Error::parse(
                &nodes_file,
                lineno,
                format!("duplicate node id {id}"),
            ));
        }
        typed[id] = Some(ty);
    }
    let mut node_type_of = Vec::with_capacity(typed.len());
    for (id, ty) in typed.iter().enumerate() {
        match ty {
            Some(t) => node_type_of.push(*t),
            None => {
                return Err(Error::data(format!(
                    "{nodes_file}: node ids are not contiguous (missing {id})"
                )))
            }
        }
    }
    let node_count = node_type_of.len();

    // Edges.
    let edges_path = dir.join(&manifest.files.edges);
    let edges_text = read_to_string(&edges_path)?;
    let edges_file = file_name(&edges_path);
    let mut edges = Vec::new();
    for (lineno, line) in nonempty_lines(&edges_text) {
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::parse(
                &edges_file,
                lineno,
                "expected `src<TAB>dst<TAB>edge_type_name`",
            ));
        }
        let src: usize = parts[0].parse().map_err(|_| {
            Error::parse(&edges_file, lineno, format!("bad source id {:?}", parts[0]))
        })?;
        let dst: usize = parts[1].parse().map_err(|_| {
            Error::parse(&edges_file, lineno, format!("bad target id {:?}", parts[1]))
        })?;
        if src >= node_count || dst >= node_count {
            return Err(Error::parse(
                &edges_file,
                lineno,
                format!("invalid endpoint: {src} -> {dst} with {node_count} nodes"),
            ));
        }
        let etype = manifest
            .edge_types
            .iter()
            .position(|n| n == parts[2])
            .ok_or_else(|| {
                Error::parse(
                    &edges_file,
                    lineno,
                    format!("unknown edge type {:?}", parts[2]),
                )
            })?;
        edges.push(Edge { src, dst, etype });
    }

    let graph = MmhnGraph::new(
        node_type_names,
        manifest.edge_types.clone(),
        node_type_of,
        edges,
    )?;
    let schema = ModalitySchema {
        modality_names: modality_names.clone(),
        input_dims: input_dims.clone(),
        native_modalities_of_type: native,
        target_node_type: target,
        categories: manifest.categories.clone(),
    };

    // Features, one CSV per modality.
    let mut matrices = Vec::with_capacity(modality_names.len());
    for (m, name) in modality_names.iter().enumerate() {
        let rel = manifest.files.features.get(name).ok_or_else(|| {
            Error::data(format!("manifest lists no feature file for modality {name}"))
        })?;
        let fpath = dir.join(rel);
        let ftext = read_to_string(&fpath)?;
        let ffile = file_name(&fpath);
        let dim = input_dims[m];
        let mut data = Vec::with_capacity(node_count * dim);
        let mut rows = 0usize;
        for (lineno, line) in nonempty_lines(&ftext) {
            let mut count = 0usize;
            for cell in line.split(',') {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::parse(&ffile, lineno, format!("bad float {:?}", cell.trim()))
                })?;
                data.push(v);
                count += 1;
            }
            if count != dim {
                return Err(Error::parse(
                    &ffile,
                    lineno,
                    format!("dimension mismatch: row has {count} values, modality {name} declares {dim}"),
                ));
            }
            rows += 1;
        }
        if rows != node_count {
            return Err(Error::data(format!(
                "{ffile}: dimension mismatch: {rows} feature rows for {node_count} nodes"
            )));
        }
        matrices.push(Tensor::new([node_count, dim], data)?);
    }
    let features = FeatureStore::new(&graph, &schema, matrices)?;

    // Labels.
    let labels_path = dir.join(&manifest.files.labels);
    let labels_text = read_to_string(&labels_path)?;
    let labels_file = file_name(&labels_path);
    let mut labels: Vec<Option<usize>> = vec![None; node_count];
    for (lineno, line) in nonempty_lines(&labels_text) {
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 2 {
            return Err(Error::parse(
                &labels_file,
                lineno,
                "expected `node_id<TAB>category_name`",
            ));
        }
        let id: usize = parts[0].parse().map_err(|_| {
            Error::parse(&labels_file, lineno, format!("bad node id {:?}", parts[0]))
        })?;
        if id >= node_count {
            return Err(Error::parse(
                &labels_file,
                lineno,
                format!("invalid endpoint: node {id} with {node_count} nodes"),
            ));
        }
        let cat = manifest
            .categories
            .iter()
            .position(|c| c == parts[1])
            .ok_or_else(|| {
                Error::parse(
                    &labels_file,
                    lineno,
                    format!("label {:?} outside the category set", parts[1]),
                )
            })?;
        labels[id] = Some(cat);
    }

    // Optional split assignment.
    let mut split = DatasetSplit {
        labels,
        ..Default::default()
    };
    if let Some(rel) = &manifest.files.split {
        let spath = dir.join(rel);
        let stext = read_to_string(&spath)?;
        let sfile = file_name(&spath);
        for (lineno, line) in nonempty_lines(&stext) {
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 2 {
                return Err(Error::parse(
                    &sfile,
                    lineno,
                    "expected `node_id<TAB>train|val|test`",
                ));
            }
            let id: usize = parts[0].parse().map_err(|_| {
                Error::parse(&sfile, lineno, format!("bad node id {:?}", parts[0]))
            })?;
            match parts[1] {
                "train" => split.train_ids.push(id),
                "val" => split.val_ids.push(id),
                "test" => split.test_ids.push(id),
                other => {
                    return Err(Error::parse(
                        &sfile,
                        lineno,
                        format!("unknown split part {other:?}"),
                    ))
                }
            }
        }
    }

    let dataset = Dataset {
        graph,
        schema,
        features,
        split,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes a dataset as manifest + data files into `dir`, returning the
/// manifest path. Deterministic: identical datasets produce identical bytes.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|source| Error::Io { path, source })
    };

    let graph = &dataset.graph;
    let schema = &dataset.schema;

    let mut nodes = String::new();
    for (id, &t) in graph.node_types().iter().enumerate() {
        nodes.push_str(&format!("{id}\t{}\n", graph.node_type_names()[t]));
    }
    write("nodes.tsv", nodes)?;

    let mut edges = String::new();
    for e in graph.edges() {
        edges.push_str(&format!(
            "{}\t{}\t{}\n",
            e.src,
            e.dst,
            graph.edge_type_names()[e.etype]
        ));
    }
    write("edges.tsv", edges)?;

    let mut feature_files = BTreeMap::new();
    for (m, name) in schema.modality_names.iter().enumerate() {
        let mat = dataset.features.matrix(m);
        let dim = schema.input_dims[m];
        let mut csv = String::new();
        for r in 0..graph.node_count() {
            let row: Vec<String> = (0..dim).map(|c| format!("{}", mat.at(r, c))).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        let fname = format!("features_{name}.csv");
        write(&fname, csv)?;
        feature_files.insert(name.clone(), fname);
    }

    let mut labels = String::new();
    for (id, l) in dataset.split.labels.iter().enumerate() {
        if let Some(c) = l {
            labels.push_str(&format!("{id}\t{}\n", schema.categories[*c]));
        }
    }
    write("labels.tsv", labels)?;

    let has_split = !(dataset.split.train_ids.is_empty()
        && dataset.split.val_ids.is_empty()
        && dataset.split.test_ids.is_empty());
    if has_split {
        let mut rows: Vec<(usize, &str)> = Vec::new();
        for &id in &dataset.split.train_ids {
            rows.push((id, "train"));
        }
        for &id in &dataset.split.val_ids {
            rows.push((id, "val"));
        }
        for &id in &dataset.split.test_ids {
            rows.push((id, "test"));
        }
        rows.sort_unstable();
        let mut split = String::new();
        for (id, part) in rows {
            split.push_str(&format!("{id}\t{part}\n"));
        }
        write("split.tsv", split)?;
    }

    let manifest = Manifest {
        node_types: graph
            .node_type_names()
            .iter()
            .enumerate()
            .map(|(t, name)| NodeTypeDecl {
                name: name.clone(),
                modalities: schema.native_modalities_of_type[t]
                    .iter()
                    .map(|&m| schema.modality_names[m].clone())
                    .collect(),
            })
            .collect(),
        edge_types: graph.edge_type_names().to_vec(),
        modalities: schema
            .modality_names
            .iter()
            .zip(&schema.input_dims)
            .map(|(name, &dim)| ModalityDecl {
                name: name.clone(),
                dim,
            })
            .collect(),
        target_type: graph.node_type_names()[schema.target_node_type].clone(),
        categories: schema.categories.clone(),
        files: FileSet {
            nodes: "nodes.tsv".into(),
            edges: "edges.tsv".into(),
            features: feature_files,
            labels: "labels.tsv".into(),
            split: has_split.then(|| "split.tsv".into()),
        },
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::data(format!("manifest serialization failed: {e}")))?;
    fs::write(&path, json + "\n").map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn nonempty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}
