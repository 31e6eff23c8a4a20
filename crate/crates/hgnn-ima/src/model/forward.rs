//! The full forward pass: type-dependent projections, nested inter-modal
//! attention, alignment modulation, residual propagation, modality fusion,
//! classification heads, and the joint loss.
//!
//! Per layer and influencing modality m', similarity scores between a node
//! and each in-neighbor are bilinear forms over projected embeddings; a
//! segmented softmax over in-edges yields the inter-node attention. A second
//! bilinear form with separate matrices scores each modality per edge, and a
//! softmax over modalities yields the inter-modal attention that mixes the
//! per-modality inter-node attentions into one combined weight per edge.
//! Cross-modal consistency of the similarity scores modulates the combined
//! weights before aggregation; a residual connection closes each layer.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::data::FeatureStore;
use crate::error::{Error, Result};
use crate::model::config::{AlignmentSign, ModelConfig};
use crate::model::params::ParameterSet;
use crate::model::prep::{GraphPrep, NodeGroup};
use crate::model::state::{LayerAttention, LayerState};
use crate::numerics::init::dropout_mask;
use crate::numerics::{ParamMap, Tape, Tensor, Tid};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub struct ForwardOptions<'a> {
    pub mode: Mode,
    /// Dropout stream; required in train mode when dropout > 0.
    pub rng: Option<&'a mut ChaCha8Rng>,
    /// Labeled node ids the cross-entropy terms run over (typically the
    /// train split; pass the val split to compute a validation loss).
    pub loss_ids: &'a [usize],
    /// Node id -> label, indexed by node id (the split's label table).
    pub labels: &'a [Option<usize>],
    pub capture_attention: bool,
}

pub struct ForwardOutput {
    /// Fused class probabilities, `[N x C]`.
    pub fused_probs: Tensor,
    /// Per enabled modality class probabilities.
    pub modality_probs: Vec<Tensor>,
    /// Argmax class per node, ties broken toward the lowest index.
    pub predictions: Vec<usize>,
    /// Fused node embeddings Z, `[N x d]`.
    pub fused_embedding: Tensor,
    /// Final per-modality embeddings h^(K), `[N x d]` each.
    pub modality_embeddings: Vec<Tensor>,
    pub loss: f64,
    pub loss_cro: f64,
    pub loss_att: f64,
    pub attention: Option<LayerState>,
    tape: Tape,
    loss_id: Tid,
    param_ids: BTreeMap<String, Tid>,
}

impl ForwardOutput {
    /// Reverse pass; returns gradients for every parameter block (zeros for
    /// blocks the configuration leaves unused).
    pub fn backward(&self, params: &ParameterSet) -> Result<ParamMap> {
        let mut grads = self.tape.backward(self.loss_id)?;
        let mut out = ParamMap::new();
        for (name, tensor) in params.map() {
            match self.param_ids.get(name) {
                Some(&tid) => {
                    out.insert(name.clone(), grads.take(tid));
                }
                None => {
                    out.insert(name.clone(), Tensor::zeros(tensor.shape().to_vec()));
                }
            }
        }
        Ok(out)
    }
}

/// Lazily registers parameter tensors as tape leaves.
struct Binder<'p> {
    params: &'p ParameterSet,
    ids: BTreeMap<String, Tid>,
}

impl<'p> Binder<'p> {
    fn new(params: &'p ParameterSet) -> Self {
        Self {
            params,
            ids: BTreeMap::new(),
        }
    }

    fn get(&mut self, tape: &mut Tape, name: &str) -> Result<Tid> {
        if let Some(&id) = self.ids.get(name) {
            return Ok(id);
        }
        let tensor = self.params.get(name)?.clone();
        let id = tape.param(tensor);
        self.ids.insert(name.to_string(), id);
        Ok(id)
    }
}

#[derive(Copy, Clone)]
enum ProjKind {
    /// Dense `[in_dim x d]` map (input projections).
    Full,
    /// Stacked per-head `[d x d/H]` blocks.
    Headwise,
}

/// Applies a type-dependent (or shared) projection group-by-group:
/// gather rows, apply the map, scatter back. Returns `[N x d]`.
#[allow(clippy::too_many_arguments)]
fn project_per_type(
    tape: &mut Tape,
    binder: &mut Binder,
    groups: &[NodeGroup],
    node_count: usize,
    x: Tid,
    role_prefix: &str,
    suffix: Option<&str>,
    kind: ProjKind,
    heads: usize,
    nonlinear: bool,
) -> Result<Tid> {
    let mut acc: Option<Tid> = None;
    for group in groups {
        let name = match suffix {
            Some(s) => format!("{role_prefix}.{}.{s}", group.name),
            None => format!("{role_prefix}.{}", group.name),
        };
        let rows = tape.gather_rows(x, group.ids.clone());
        let w = binder.get(tape, &format!("{name}.weight"))?;
        let b = binder.get(tape, &format!("{name}.bias"))?;
        let mut h = match kind {
            ProjKind::Full => tape.matmul(rows, w)?,
            ProjKind::Headwise => tape.headwise_matmul(rows, w, heads)?,
        };
        h = tape.add_row_broadcast(h, b)?;
        if nonlinear {
            let t = tape.tanh(h);
            let w2 = binder.get(tape, &format!("{name}.weight2"))?;
            let b2 = binder.get(tape, &format!("{name}.bias2"))?;
            h = match kind {
                ProjKind::Full => tape.matmul(t, w2)?,
                ProjKind::Headwise => tape.headwise_matmul(t, w2, heads)?,
            };
            h = tape.add_row_broadcast(h, b2)?;
        }
        let scattered = tape.scatter_add_rows(h, group.ids.clone(), node_count)?;
        acc = Some(match acc {
            None => scattered,
            Some(prev) => tape.add(prev, scattered)?,
        });
    }
    acc.ok_or_else(|| Error::data("projection over empty node group list"))
}

/// Bilinear similarity scores for every canonical edge, `[E x H]`:
/// per edge group, `score[r,h] = (K[src] W_h) . Q[dst]` with the group's
/// edge-type matrix.
fn edge_scores(
    tape: &mut Tape,
    binder: &mut Binder,
    prep: &GraphPrep,
    kproj: Tid,
    qproj: Tid,
    w_prefix: &str,
    w_suffix: Option<&str>,
    heads: usize,
) -> Result<Tid> {
    let n_edges = prep.edge_count();
    let mut acc: Option<Tid> = None;
    for group in &prep.edge_groups {
        let name = match w_suffix {
            Some(s) => format!("{w_prefix}.{}.{s}.weight", group.name),
            None => format!("{w_prefix}.{}.weight", group.name),
        };
        let ke = tape.gather_rows(kproj, group.src.clone());
        let qe = tape.gather_rows(qproj, group.dst.clone());
        let w = binder.get(tape, &name)?;
        let sc = tape.bilinear_per_head(ke, qe, w, heads)?;
        let placed = tape.scatter_add_rows(sc, group.rows.clone(), n_edges)?;
        acc = Some(match acc {
            None => placed,
            Some(prev) => tape.add(prev, placed)?,
        });
    }
    acc.ok_or_else(|| Error::data("edge scores over empty edge group list"))
}

/// Mean negative log-likelihood over the listed nodes.
fn cross_entropy(
    tape: &mut Tape,
    logits: Tid,
    ids: &[usize],
    labels: &[usize],
) -> Result<Tid> {
    let lp = tape.log_softmax_rows(logits);
    let rows = tape.gather_rows(lp, Rc::new(ids.to_vec()));
    let picked = tape.select_entries(rows, Rc::new(labels.to_vec()))?;
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0 / ids.len() as f64))
}

pub fn forward_full(
    prep: &GraphPrep,
    features: &FeatureStore,
    params: &ParameterSet,
    cfg: &ModelConfig,
    opts: ForwardOptions,
) -> Result<ForwardOutput> {
    cfg.validate()?;
    let n = prep.node_count;
    let n_edges = prep.edge_count();
    let heads = cfg.heads;
    let d = cfg.hidden_dim;
    let n_mod = prep.n_modalities();
    let train = opts.mode == Mode::Train;
    let use_dropout = train && cfg.dropout > 0.0;
    let mut rng = opts.rng;
    if use_dropout && rng.is_none() {
        return Err(Error::config(
            "train-mode forward with dropout needs an RNG",
        ));
    }
    let nonlin = cfg.nonlinear_projections;

    let mut tape = Tape::new();
    let mut binder = Binder::new(params);

    // Layer-0 embeddings: type-dependent input projection per modality.
    let mut h: Vec<Tid> = Vec::with_capacity(n_mod);
    for (mi, &m) in prep.enabled.iter().enumerate() {
        let x = tape.constant(features.matrix(m).clone());
        let h0 = project_per_type(
            &mut tape,
            &mut binder,
            &prep.node_groups,
            n,
            x,
            "input_proj",
            Some(&prep.modality_names[mi]),
            ProjKind::Full,
            heads,
            nonlin,
        )?;
        h.push(h0);
    }

    let mut capture = opts.capture_attention.then(LayerState::default);
    // Per layer, per modality: inter-modal attention node ids for the loss.
    let mut lambda_cache: Vec<Vec<Tid>> = Vec::new();

    for _layer in 0..cfg.layers {
        let mut h_next = Vec::with_capacity(n_mod);
        // Aggregation weights per modality (shared when the cross-modal unit
        // is on).
        let mut agg_weights: Vec<Tid> = Vec::with_capacity(n_mod);
        let mut layer_lambdas: Vec<Tid> = Vec::new();

        if n_edges > 0 {
            // Projections reused by both bilinear forms.
            let mut kproj = Vec::with_capacity(n_mod);
            let mut qproj = Vec::with_capacity(n_mod);
            for &hm in &h {
                kproj.push(project_per_type(
                    &mut tape,
                    &mut binder,
                    &prep.node_groups,
                    n,
                    hm,
                    "key_proj",
                    None,
                    ProjKind::Headwise,
                    heads,
                    nonlin,
                )?);
                qproj.push(project_per_type(
                    &mut tape,
                    &mut binder,
                    &prep.node_groups,
                    n,
                    hm,
                    "query_proj",
                    None,
                    ProjKind::Headwise,
                    heads,
                    nonlin,
                )?);
            }

            // Inter-node similarity g and attention alpha, per modality.
            let mut g = Vec::with_capacity(n_mod);
            let mut alpha = Vec::with_capacity(n_mod);
            for mi in 0..n_mod {
                let mut gm = edge_scores(
                    &mut tape,
                    &mut binder,
                    prep,
                    kproj[mi],
                    qproj[mi],
                    "w_node",
                    None,
                    heads,
                )?;
                if cfg.attention_scale {
                    gm = tape.scale(gm, 1.0 / (cfg.head_dim() as f64).sqrt());
                }
                g.push(gm);
                alpha.push(tape.segment_softmax(gm, prep.segments.clone()));
            }

            // Inter-modal scores s and attention lambda. Under "+inf" a
            // separate lambda is computed per influenced modality with its
            // own modal matrices; otherwise one lambda is shared.
            let lambda_sets: Vec<Vec<Tid>> = {
                let influenced: Vec<Option<usize>> = if cfg.influenced_modality_in_lambda {
                    (0..n_mod).map(Some).collect()
                } else {
                    vec![None]
                };
                let mut sets = Vec::with_capacity(influenced.len());
                for inf in influenced {
                    let mut flats = Vec::with_capacity(n_mod);
                    for mi in 0..n_mod {
                        let suffix = inf.map(|i| prep.modality_names[i].clone());
                        let mut sm = edge_scores(
                            &mut tape,
                            &mut binder,
                            prep,
                            kproj[mi],
                            qproj[mi],
                            "w_modal",
                            suffix.as_deref(),
                            heads,
                        )?;
                        if !cfg.neighbor_in_lambda {
                            sm = tape.segment_mean_broadcast(sm, prep.segments.clone());
                        }
                        flats.push(tape.reshape(sm, [n_edges * heads])?);
                    }
                    let stacked = tape.concat_cols(&flats)?;
                    let lam_mat = tape.softmax_rows(stacked);
                    let mut lams = Vec::with_capacity(n_mod);
                    for mi in 0..n_mod {
                        let col = tape.slice_cols(lam_mat, mi, 1)?;
                        lams.push(tape.reshape(col, [n_edges, heads])?);
                    }
                    sets.push(lams);
                }
                sets
            };
            // Average over the influenced axis for the loss and captures.
            for mi in 0..n_mod {
                let mut acc = lambda_sets[0][mi];
                for set in &lambda_sets[1..] {
                    acc = tape.add(acc, set[mi])?;
                }
                if lambda_sets.len() > 1 {
                    acc = tape.scale(acc, 1.0 / lambda_sets.len() as f64);
                }
                layer_lambdas.push(acc);
            }

            // Combined attention beta. With the unit off, each modality
            // falls back to its own inter-node attention.
            let betas: Vec<Tid> = if cfg.cross_modal_unit {
                let mut acc: Vec<Tid> = Vec::new();
                for (set_idx, lams) in lambda_sets.iter().enumerate() {
                    let mut z: Option<Tid> = None;
                    for mi in 0..n_mod {
                        let term = if cfg.adaptive_weights {
                            tape.mul(lams[mi], alpha[mi])?
                        } else {
                            tape.scale(alpha[mi], 1.0 / n_mod as f64)
                        };
                        z = Some(match z {
                            None => term,
                            Some(p) => tape.add(p, term)?,
                        });
                    }
                    let beta = tape.segment_softmax(z.unwrap(), prep.segments.clone());
                    acc.push(beta);
                    let _ = set_idx;
                }
                if acc.len() == 1 {
                    vec![acc[0]; n_mod]
                } else {
                    acc
                }
            } else {
                alpha.clone()
            };

            // Alignment modulation from the cross-modal discrepancy of g.
            let (beta_tildes, beta_bar_id, r_id) = if cfg.alignment_modulation {
                let mut r: Option<Tid> = None;
                for m1 in 0..n_mod {
                    for m2 in 0..n_mod {
                        let diff = tape.sub(g[m1], g[m2])?;
                        let term = tape.abs(diff);
                        r = Some(match r {
                            None => term,
                            Some(p) => tape.add(p, term)?,
                        });
                    }
                }
                let r = r.unwrap();
                let signed = match cfg.alignment_sign {
                    AlignmentSign::AsWritten => r,
                    AlignmentSign::Negated => tape.scale(r, -1.0),
                };
                let beta_bar = tape.segment_softmax(signed, prep.segments.clone());
                let mut tildes = Vec::with_capacity(n_mod);
                for &b in &betas {
                    let mixed = tape.mul(b, beta_bar)?;
                    tildes.push(tape.segment_softmax(mixed, prep.segments.clone()));
                }
                (tildes, Some(beta_bar), Some(r))
            } else {
                (betas.clone(), None, None)
            };
            agg_weights = beta_tildes.clone();

            if let Some(state) = capture.as_mut() {
                let grab = |tape: &Tape, id: Tid| tape.value(id).clone();
                let mean_tensor = |ts: &[Tid], tape: &Tape| {
                    let mut out = Tensor::zeros([n_edges, heads]);
                    for &t in ts {
                        for (o, v) in out.data_mut().iter_mut().zip(tape.value(t).data()) {
                            *o += v / ts.len() as f64;
                        }
                    }
                    out
                };
                let beta_val = if cfg.cross_modal_unit && !cfg.influenced_modality_in_lambda {
                    grab(&tape, betas[0])
                } else {
                    mean_tensor(&betas, &tape)
                };
                let tilde_val = if cfg.cross_modal_unit && !cfg.influenced_modality_in_lambda {
                    grab(&tape, beta_tildes[0])
                } else {
                    mean_tensor(&beta_tildes, &tape)
                };
                let beta_bar_val = match beta_bar_id {
                    Some(id) => grab(&tape, id),
                    // Without modulation the alignment view is neutral:
                    // uniform over each neighborhood.
                    None => {
                        let mut t = Tensor::zeros([n_edges, heads]);
                        for &(s, e) in prep.segments.iter() {
                            let u = 1.0 / (e - s) as f64;
                            for r in s..e {
                                for c in 0..heads {
                                    t.data_mut()[r * heads + c] = u;
                                }
                            }
                        }
                        t
                    }
                };
                state.layers.push(LayerAttention {
                    alpha: alpha.iter().map(|&a| grab(&tape, a)).collect(),
                    lambda: layer_lambdas.iter().map(|&l| grab(&tape, l)).collect(),
                    beta: beta_val,
                    beta_bar: beta_bar_val,
                    beta_tilde: tilde_val,
                    discrepancy: match r_id {
                        Some(id) => grab(&tape, id),
                        None => Tensor::zeros([n_edges, heads]),
                    },
                });
            }
        } else if let Some(state) = capture.as_mut() {
            state.layers.push(LayerAttention {
                alpha: vec![Tensor::zeros([0, heads]); n_mod],
                lambda: vec![Tensor::zeros([0, heads]); n_mod],
                beta: Tensor::zeros([0, heads]),
                beta_bar: Tensor::zeros([0, heads]),
                beta_tilde: Tensor::zeros([0, heads]),
                discrepancy: Tensor::zeros([0, heads]),
            });
        }
        lambda_cache.push(layer_lambdas);

        // Aggregate messages and close the layer with the residual.
        for mi in 0..n_mod {
            let mproj = project_per_type(
                &mut tape,
                &mut binder,
                &prep.node_groups,
                n,
                h[mi],
                "message_proj",
                None,
                ProjKind::Headwise,
                heads,
                nonlin,
            )?;
            let mut msg: Option<Tid> = None;
            if n_edges > 0 {
                let weights = agg_weights[mi];
                for group in &prep.edge_groups {
                    let me = tape.gather_rows(mproj, group.src.clone());
                    let w = binder.get(&mut tape, &format!("w_msg.{}.weight", group.name))?;
                    let mw = tape.headwise_matmul(me, w, heads)?;
                    let bt = tape.gather_rows(weights, group.rows.clone());
                    let weighted = tape.mul_head_broadcast(mw, bt, heads)?;
                    let part = tape.scatter_add_rows(weighted, group.dst.clone(), n)?;
                    msg = Some(match msg {
                        None => part,
                        Some(p) => tape.add(p, part)?,
                    });
                }
            }
            let msg = match msg {
                Some(m) => m,
                // Empty-sum convention: isolated graphs aggregate nothing.
                None => tape.constant(Tensor::zeros([n, d])),
            };
            let act = tape.sigmoid(msg);
            let mut out = project_per_type(
                &mut tape,
                &mut binder,
                &prep.node_groups,
                n,
                act,
                "output_proj",
                None,
                ProjKind::Headwise,
                heads,
                nonlin,
            )?;
            if use_dropout {
                let mask = Rc::new(dropout_mask(n * d, cfg.dropout, rng.as_mut().unwrap()));
                out = tape.dropout(out, mask, cfg.dropout)?;
            }
            h_next.push(tape.add(out, h[mi])?);
        }
        h = h_next;
    }

    // Modality fusion: scalar gate per (node, modality), softmax over
    // modalities, convex combination of the final per-modality embeddings.
    let w1 = binder.get(&mut tape, "fusion.w1.weight")?;
    let w2 = binder.get(&mut tape, "fusion.w2.weight")?;
    let b2 = binder.get(&mut tape, "fusion.w2.bias")?;
    let mut gates = Vec::with_capacity(n_mod);
    for &hm in &h {
        let t1 = tape.matmul(hm, w1)?;
        let t2 = tape.tanh(t1);
        let t3 = tape.matmul(t2, w2)?;
        let omega = tape.add_row_broadcast(t3, b2)?;
        gates.push(omega);
    }
    let gate_mat = tape.concat_cols(&gates)?;
    let delta = tape.softmax_rows(gate_mat);
    let mut fused: Option<Tid> = None;
    for (mi, &hm) in h.iter().enumerate() {
        let dm = tape.slice_cols(delta, mi, 1)?;
        let dv = tape.reshape(dm, [n])?;
        let term = tape.mul_col_broadcast(hm, dv)?;
        fused = Some(match fused {
            None => term,
            Some(p) => tape.add(p, term)?,
        });
    }
    let fused = fused.unwrap();

    let wc = binder.get(&mut tape, "classifier.fused.weight")?;
    let fused_logits = tape.matmul(fused, wc)?;
    let mut modality_logits = Vec::with_capacity(n_mod);
    for (mi, &hm) in h.iter().enumerate() {
        let name = ParameterSet::modality_classifier_name(cfg, &prep.modality_names[mi]);
        let wcm = binder.get(&mut tape, &name)?;
        modality_logits.push(tape.matmul(hm, wcm)?);
    }

    // Classification loss: mean negative log-likelihood on the fused head,
    // plus the per-modality heads unless ablated.
    let loss_cro_id = if opts.loss_ids.is_empty() {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let mut labels = Vec::with_capacity(opts.loss_ids.len());
        for &id in opts.loss_ids {
            let l = opts.labels.get(id).copied().flatten().ok_or_else(|| {
                Error::data(format!("loss node {id} has no label"))
            })?;
            labels.push(l);
        }
        let ce_fused = cross_entropy(&mut tape, fused_logits, opts.loss_ids, &labels)?;
        if cfg.individual_modality_loss {
            let mut total = ce_fused;
            for &ml in &modality_logits {
                let ce_m = cross_entropy(&mut tape, ml, opts.loss_ids, &labels)?;
                total = tape.add(total, ce_m)?;
            }
            tape.scale(total, 1.0 / (1 + n_mod) as f64)
        } else {
            ce_fused
        }
    };

    // Attention loss: total inter-modal attention mass on modalities the
    // edge source does not natively possess, over all layers and edges,
    // scaled by 1/(K * |M|) and averaged over heads.
    let missing_active = cfg.attention_loss && prep.any_missing && n_edges > 0;
    let loss_att_id = if missing_active {
        let mut acc: Option<Tid> = None;
        for layer_lams in &lambda_cache {
            for (mi, &lam) in layer_lams.iter().enumerate() {
                if prep.miss_mask[mi].iter().all(|&v| v == 0.0) {
                    continue;
                }
                let mask = tape.constant(Tensor::from_parts(
                    vec![n_edges],
                    prep.miss_mask[mi].clone(),
                ));
                let masked = tape.mul_col_broadcast(lam, mask)?;
                let s = tape.sum(masked);
                acc = Some(match acc {
                    None => s,
                    Some(p) => tape.add(p, s)?,
                });
            }
        }
        match acc {
            Some(total) => {
                let mut denom = (cfg.layers * n_mod * heads) as f64;
                if cfg.normalize_attention_loss_by_pairs {
                    denom *= n_edges as f64;
                }
                tape.scale(total, 1.0 / denom)
            }
            None => tape.constant(Tensor::scalar(0.0)),
        }
    } else {
        tape.constant(Tensor::scalar(0.0))
    };

    let loss_id = tape.add(loss_cro_id, loss_att_id)?;
    let loss = tape.value(loss_id).item()?;
    let loss_cro = tape.value(loss_cro_id).item()?;
    let loss_att = tape.value(loss_att_id).item()?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("forward loss".into()));
    }

    // Probabilities and predictions are computed off-tape from the logits.
    let probs_of = |tape: &Tape, id: Tid| -> Tensor {
        let logits = tape.value(id);
        let (rows, cols) = (logits.rows(), logits.row_width());
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &logits.data()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..cols {
                out[r * cols + c] = (row[c] - max).exp();
                sum += out[r * cols + c];
            }
            for c in 0..cols {
                out[r * cols + c] /= sum;
            }
        }
        Tensor::from_parts(vec![rows, cols], out)
    };
    let fused_probs = probs_of(&tape, fused_logits);
    let modality_probs: Vec<Tensor> = modality_logits
        .iter()
        .map(|&ml| probs_of(&tape, ml))
        .collect();
    let predictions = argmax_rows(&fused_probs);

    Ok(ForwardOutput {
        fused_probs,
        modality_probs,
        predictions,
        fused_embedding: tape.value(fused).clone(),
        modality_embeddings: h.iter().map(|&hm| tape.value(hm).clone()).collect(),
        loss,
        loss_cro,
        loss_att,
        attention: capture,
        tape,
        loss_id,
        param_ids: binder.ids,
    })
}

/// Row-wise argmax with ties broken toward the lowest index.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let (rows, cols) = (probs.rows(), probs.row_width());
    (0..rows)
        .map(|r| {
            let mut best = 0;
            for c in 1..cols {
                if probs.at(r, c) > probs.at(r, best) {
                    best = c;
                }
            }
            best
        })
        .collect()
}
