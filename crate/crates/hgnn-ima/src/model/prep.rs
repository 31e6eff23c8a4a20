//! Precomputed graph structure for the forward pass.
//!
//! Edges are re-sorted into a canonical order keyed by (dst, src, edge type),
//! so every node's in-edges form one contiguous segment and any permutation
//! of the stored edge list yields bit-identical results. Per-edge-type and
//! per-node-type index groups drive the type-dependent parameter lookups;
//! when type dependence is ablated they collapse to single shared groups.

use std::rc::Rc;

use crate::data::{Dataset, Edge};
use crate::error::Result;
use crate::model::config::ModelConfig;
use crate::model::params::SHARED;
use crate::numerics::{RowIndex, Segments};

pub struct EdgeGroup {
    /// Parameter name component: the edge type name, or "shared".
    pub name: String,
    /// Positions in the canonical edge array.
    pub rows: RowIndex,
    /// Source / destination node ids, aligned with `rows`.
    pub src: RowIndex,
    pub dst: RowIndex,
}

pub struct NodeGroup {
    /// Parameter name component: the node type name, or "shared".
    pub name: String,
    pub ids: RowIndex,
}

pub struct GraphPrep {
    pub node_count: usize,
    pub canon_edges: Vec<Edge>,
    /// Contiguous in-edge ranges, one per node with at least one in-edge.
    pub segments: Segments,
    /// Destination node of each segment.
    pub seg_dst: Vec<usize>,
    pub edge_groups: Vec<EdgeGroup>,
    pub node_groups: Vec<NodeGroup>,
    /// Enabled modality ids, in schema order.
    pub enabled: Vec<usize>,
    /// Names of the enabled modalities.
    pub modality_names: Vec<String>,
    /// Per enabled modality: 1.0 for canonical edges whose SOURCE node type
    /// does not natively possess it.
    pub miss_mask: Vec<Vec<f64>>,
    pub any_missing: bool,
}

impl GraphPrep {
    pub fn new(dataset: &Dataset, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        dataset.validate()?;
        let graph = &dataset.graph;
        let schema = &dataset.schema;
        let enabled = cfg.enabled_modalities(schema)?;

        let mut canon_edges: Vec<Edge> = graph.edges().to_vec();
        canon_edges.sort_unstable_by_key(|e| (e.dst, e.src, e.etype));
        let n_edges = canon_edges.len();

        let mut segments = Vec::new();
        let mut seg_dst = Vec::new();
        let mut row = 0;
        while row < n_edges {
            let dst = canon_edges[row].dst;
            let start = row;
            while row < n_edges && canon_edges[row].dst == dst {
                row += 1;
            }
            segments.push((start, row));
            seg_dst.push(dst);
        }

        let mut edge_groups = Vec::new();
        if cfg.edge_type_dependent_params {
            for (etype, name) in graph.edge_type_names().iter().enumerate() {
                let rows: Vec<usize> = (0..n_edges)
                    .filter(|&r| canon_edges[r].etype == etype)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                edge_groups.push(make_edge_group(name.clone(), rows, &canon_edges));
            }
        } else if n_edges > 0 {
            edge_groups.push(make_edge_group(
                SHARED.to_string(),
                (0..n_edges).collect(),
                &canon_edges,
            ));
        }

        let mut node_groups = Vec::new();
        if cfg.node_type_dependent_params {
            for (ty, name) in graph.node_type_names().iter().enumerate() {
                let ids: Vec<usize> = (0..graph.node_count())
                    .filter(|&i| graph.node_type_of(i) == ty)
                    .collect();
                if ids.is_empty() {
                    continue;
                }
                node_groups.push(NodeGroup {
                    name: name.clone(),
                    ids: Rc::new(ids),
                });
            }
        } else {
            node_groups.push(NodeGroup {
                name: SHARED.to_string(),
                ids: Rc::new((0..graph.node_count()).collect()),
            });
        }

        let mut miss_mask = Vec::with_capacity(enabled.len());
        let mut any_missing = false;
        for &m in &enabled {
            let mask: Vec<f64> = canon_edges
                .iter()
                .map(|e| {
                    let native = schema.is_native(graph.node_type_of(e.src), m);
                    if native {
                        0.0
                    } else {
                        any_missing = true;
                        1.0
                    }
                })
                .collect();
            miss_mask.push(mask);
        }

        Ok(Self {
            node_count: graph.node_count(),
            canon_edges,
            segments: Rc::new(segments),
            seg_dst,
            edge_groups,
            node_groups,
            modality_names: enabled
                .iter()
                .map(|&m| schema.modality_names[m].clone())
                .collect(),
            enabled,
            miss_mask,
            any_missing,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.canon_edges.len()
    }

    pub fn n_modalities(&self) -> usize {
        self.enabled.len()
    }
}

fn make_edge_group(name: String, rows: Vec<usize>, canon: &[Edge]) -> EdgeGroup {
    let src: Vec<usize> = rows.iter().map(|&r| canon[r].src).collect();
    let dst: Vec<usize> = rows.iter().map(|&r| canon[r].dst).collect();
    EdgeGroup {
        name,
        rows: Rc::new(rows),
        src: Rc::new(src),
        dst: Rc::new(dst),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::gradcheck_fixture;

    #[test]
    fn segments_cover_all_edges_contiguously() {
        let ds = gradcheck_fixture();
        let cfg = ModelConfig {
            hidden_dim: 8,
            heads: 2,
            dropout: 0.0,
            ..Default::default()
        };
        let prep = GraphPrep::new(&ds, &cfg).unwrap();
        let mut covered = 0;
        for (i, &(s, e)) in prep.segments.iter().enumerate() {
            assert_eq!(s, covered);
            covered = e;
            for r in s..e {
                assert_eq!(prep.canon_edges[r].dst, prep.seg_dst[i]);
            }
        }
        assert_eq!(covered, prep.edge_count());
        // The fixture's type-b sources lack vision (enabled modality 1).
        assert!(prep.any_missing);
        let vision_mask = &prep.miss_mask[1];
        for (r, e) in prep.canon_edges.iter().enumerate() {
            let src_is_b = (5..=8).contains(&e.src);
            assert_eq!(vision_mask[r] == 1.0, src_is_b);
        }
    }
}
