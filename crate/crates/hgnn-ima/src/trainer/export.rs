//! Attention-record export and the positive/negative-pair analysis.
//!
//! The CSV holds one row per (target, in-edge, head) for a chosen layer,
//! carrying the per-modality inter-node attention, the inter-modal
//! attention, and the combined/alignment/mixed weights, plus a same-label
//! flag for pairs where both endpoints are labeled. The pair analysis
//! compares the combined attention against the single-modality attention of
//! a baseline modality: on pairs with the same label the combined score
//! should more often be the larger one.

use std::fs;
use std::path::Path;

use crate::data::MmhnGraph;
use crate::error::{Error, Result};
use crate::model::{GraphPrep, LayerState};

/// Writes one layer's attention records as CSV. Floats use shortest
/// round-trip formatting, so recomputations from the file are exact.
pub fn export_attention(
    prep: &GraphPrep,
    graph: &MmhnGraph,
    state: &LayerState,
    layer: usize,
    labels: &[Option<usize>],
    out_path: &Path,
) -> Result<()> {
    let att = state
        .layer(layer)
        .ok_or_else(|| Error::config(format!(
            "layer {layer} out of range; the capture has {} layers",
            state.n_layers()
        )))?;
    let heads = att.beta.row_width();
    let mut csv = String::new();
    csv.push_str("layer,target,source,edge_type,head");
    for name in &prep.modality_names {
        csv.push_str(&format!(",alpha_{name}"));
    }
    for name in &prep.modality_names {
        csv.push_str(&format!(",lambda_{name}"));
    }
    csv.push_str(",beta,beta_bar,beta_tilde,same_label\n");

    for (row, edge) in prep.canon_edges.iter().enumerate() {
        let same_label = match (labels.get(edge.dst), labels.get(edge.src)) {
            (Some(Some(a)), Some(Some(b))) => {
                if a == b {
                    "1"
                } else {
                    "0"
                }
            }
            _ => "",
        };
        for h in 0..heads {
            csv.push_str(&format!(
                "{layer},{},{},{},{h}",
                edge.dst,
                edge.src,
                graph.edge_type_names()[edge.etype],
            ));
            for a in &att.alpha {
                csv.push_str(&format!(",{}", a.at(row, h)));
            }
            for l in &att.lambda {
                csv.push_str(&format!(",{}", l.at(row, h)));
            }
            csv.push_str(&format!(
                ",{},{},{},{same_label}\n",
                att.beta.at(row, h),
                att.beta_bar.at(row, h),
                att.beta_tilde.at(row, h),
            ));
        }
    }
    fs::write(out_path, csv).map_err(|source| Error::Io {
        path: out_path.to_path_buf(),
        source,
    })
}

/// Outcome of comparing combined vs single-modality attention on labeled
/// node pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairAnalysis {
    pub positive_pairs: usize,
    pub negative_pairs: usize,
    /// Fraction of positive (same label) pairs where the head-averaged
    /// combined attention exceeds the baseline modality's attention.
    pub combined_larger_on_positive: f64,
    /// Fraction of negative pairs where the combined attention is smaller.
    pub combined_smaller_on_negative: f64,
}

/// Runs the pair analysis in memory over one captured layer.
pub fn attention_pair_analysis(
    prep: &GraphPrep,
    state: &LayerState,
    layer: usize,
    labels: &[Option<usize>],
    baseline_modality: usize,
) -> Result<PairAnalysis> {
    let att = state
        .layer(layer)
        .ok_or_else(|| Error::config(format!("layer {layer} out of range")))?;
    if baseline_modality >= att.alpha.len() {
        return Err(Error::config(format!(
            "baseline modality {baseline_modality} out of range"
        )));
    }
    let heads = att.beta.row_width();
    let mut pos = 0usize;
    let mut neg = 0usize;
    let mut pos_wins = 0usize;
    let mut neg_wins = 0usize;
    for (row, edge) in prep.canon_edges.iter().enumerate() {
        let (a, b) = match (labels.get(edge.dst), labels.get(edge.src)) {
            (Some(Some(a)), Some(Some(b))) => (*a, *b),
            _ => continue,
        };
        let mut beta_sum = 0.0;
        let mut alpha_sum = 0.0;
        for h in 0..heads {
            beta_sum += att.beta.at(row, h);
            alpha_sum += att.alpha[baseline_modality].at(row, h);
        }
        let beta_avg = beta_sum / heads as f64;
        let alpha_avg = alpha_sum / heads as f64;
        if a == b {
            pos += 1;
            if beta_avg > alpha_avg {
                pos_wins += 1;
            }
        } else {
            neg += 1;
            if beta_avg < alpha_avg {
                neg_wins += 1;
            }
        }
    }
    Ok(PairAnalysis {
        positive_pairs: pos,
        negative_pairs: neg,
        combined_larger_on_positive: ratio(pos_wins, pos),
        combined_smaller_on_negative: ratio(neg_wins, neg),
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Recomputes the pair analysis from an exported CSV; exact decimal
/// round-tripping makes this bit-identical to the in-memory result.
pub fn pair_analysis_from_csv(path: &Path, baseline_modality: &str) -> Result<PairAnalysis> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(&file, 1, "empty export"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::parse(&file, 1, format!("missing column {name}")))
    };
    let alpha_col = find(&format!("alpha_{baseline_modality}"))?;
    let beta_col = find("beta")?;
    let label_col = find("same_label")?;
    let target_col = find("target")?;
    let source_col = find("source")?;
    let head_col = find("head")?;

    let mut pos = 0usize;
    let mut neg = 0usize;
    let mut pos_wins = 0usize;
    let mut neg_wins = 0usize;
    // Rows arrive grouped per edge in head order; accumulate head sums in
    // file order so the arithmetic matches the in-memory pass exactly.
    let mut current: Option<(String, String, f64, f64, usize, String)> = None;
    let mut flush = |cur: &Option<(String, String, f64, f64, usize, String)>| {
        if let Some((_, _, beta_sum, alpha_sum, heads, same)) = cur {
            if same.is_empty() {
                return;
            }
            let beta_avg = beta_sum / *heads as f64;
            let alpha_avg = alpha_sum / *heads as f64;
            if same == "1" {
                pos += 1;
                if beta_avg > alpha_avg {
                    pos_wins += 1;
                }
            } else {
                neg += 1;
                if beta_avg < alpha_avg {
                    neg_wins += 1;
                }
            }
        }
    };
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(&file, i + 1, "wrong column count"));
        }
        let parse_f = |c: usize| -> Result<f64> {
            fields[c]
                .parse()
                .map_err(|_| Error::parse(&file, i + 1, format!("bad float {:?}", fields[c])))
        };
        let head: usize = fields[head_col]
            .parse()
            .map_err(|_| Error::parse(&file, i + 1, "bad head index"))?;
        let key = (fields[target_col].to_string(), fields[source_col].to_string());
        let beta = parse_f(beta_col)?;
        let alpha = parse_f(alpha_col)?;
        match &mut current {
            Some((t, s, beta_sum, alpha_sum, heads, _))
                if *t == key.0 && *s == key.1 && head > 0 =>
            {
                *beta_sum += beta;
                *alpha_sum += alpha;
                *heads += 1;
            }
            _ => {
                flush(&current);
                current = Some((
                    key.0,
                    key.1,
                    beta,
                    alpha,
                    1,
                    fields[label_col].to_string(),
                ));
            }
        }
    }
    flush(&current);

    Ok(PairAnalysis {
        positive_pairs: pos,
        negative_pairs: neg,
        combined_larger_on_positive: ratio(pos_wins, pos),
        combined_smaller_on_negative: ratio(neg_wins, neg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::gradcheck_fixture;
    use crate::model::{
        forward_full, ForwardOptions, Mode, ModelConfig, ParameterSet,
    };

    fn captured() -> (crate::data::Dataset, ModelConfig, GraphPrep, LayerState) {
        let ds = gradcheck_fixture();
        let cfg = ModelConfig {
            layers: 2,
            hidden_dim: 8,
            heads: 2,
            dropout: 0.0,
            ..Default::default()
        };
        let prep = GraphPrep::new(&ds, &cfg).unwrap();
        let params = ParameterSet::init(
            &ds.schema,
            ds.graph.node_type_names(),
            ds.graph.edge_type_names(),
            &cfg,
            21,
        )
        .unwrap();
        let out = forward_full(
            &prep,
            &ds.features,
            &params,
            &cfg,
            ForwardOptions {
                mode: Mode::Eval,
                rng: None,
                loss_ids: &ds.split.train_ids,
                labels: &ds.split.labels,
                capture_attention: true,
            },
        )
        .unwrap();
        let state = out.attention.unwrap();
        (ds, cfg, prep, state)
    }

    #[test]
    fn export_row_count_and_simplex_groups() {
        let (ds, cfg, prep, state) = captured();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attention.csv");
        export_attention(&prep, &ds.graph, &state, 0, &ds.split.labels, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), prep.edge_count() * cfg.heads);
        // Per (target, head) group, the beta column sums to 1.
        let beta_col = text
            .lines()
            .next()
            .unwrap()
            .split(',')
            .position(|c| c == "beta")
            .unwrap();
        let mut sums: std::collections::BTreeMap<(String, String), f64> =
            std::collections::BTreeMap::new();
        for r in &rows {
            let f: Vec<&str> = r.split(',').collect();
            let key = (f[1].to_string(), f[4].to_string());
            *sums.entry(key).or_default() += f[beta_col].parse::<f64>().unwrap();
        }
        for ((target, head), sum) in sums {
            assert!(
                (sum - 1.0).abs() < 1e-9,
                "target {target} head {head}: beta sums to {sum}"
            );
        }
    }

    #[test]
    fn csv_recomputation_matches_in_memory_exactly() {
        let (ds, _cfg, prep, state) = captured();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attention.csv");
        export_attention(&prep, &ds.graph, &state, 1, &ds.split.labels, &path).unwrap();
        let mem = attention_pair_analysis(&prep, &state, 1, &ds.split.labels, 0).unwrap();
        let csv = pair_analysis_from_csv(&path, "text").unwrap();
        assert_eq!(mem, csv);
    }

    #[test]
    fn layer_out_of_range_errors() {
        let (ds, _cfg, prep, state) = captured();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attention.csv");
        assert!(
            export_attention(&prep, &ds.graph, &state, 5, &ds.split.labels, &path).is_err()
        );
    }
}
