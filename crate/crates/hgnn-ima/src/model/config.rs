//! Model configuration, including every ablation switch.

use serde::{Deserialize, Serialize};

use crate::data::ModalitySchema;
use crate::error::{Error, Result};

/// Sign applied to the cross-modal discrepancy before the alignment softmax.
/// `AsWritten` up-weights neighbors with LARGE discrepancy; `Negated`
/// up-weights modality-aligned neighbors.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentSign {
    AsWritten,
    Negated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Propagation layers (K).
    pub layers: usize,
    /// Embedding width (d); must be divisible by `heads`.
    pub hidden_dim: usize,
    /// Attention heads (H).
    pub heads: usize,
    pub dropout: f64,
    /// Width of the fusion hidden layer; defaults to `hidden_dim`.
    pub fusion_hidden_dim: Option<usize>,

    /// Off reproduces the "-cross" variant: aggregation weights fall back to
    /// the per-modality inter-node attention.
    pub cross_modal_unit: bool,
    /// Off ("-adapt") replaces the learned inter-modal attention with a
    /// uniform 1/|M| mix when combining per-modality attentions.
    pub adaptive_weights: bool,
    /// On ("+inf") computes a separate inter-modal attention per influenced
    /// modality, with per-modality copies of the modal bilinear matrices.
    pub influenced_modality_in_lambda: bool,
    /// Off ("-nei") averages the modal scores over each neighborhood, so all
    /// in-edges of a node share one inter-modal attention.
    pub neighbor_in_lambda: bool,
    /// Off ("-align") skips the consistency-based modulation.
    pub alignment_modulation: bool,
    /// Off ("-Latt") drops the missing-modality attention loss.
    pub attention_loss: bool,
    /// Off ("-Lind") drops the per-modality cross-entropy terms.
    pub individual_modality_loss: bool,
    /// Restricts the model to a subset of modalities (by name); None = all.
    pub modalities_enabled: Option<Vec<String>>,
    /// Off ("node-ind") shares one projection block across node types.
    pub node_type_dependent_params: bool,
    /// Off ("edge-ind") shares one bilinear block across edge types.
    pub edge_type_dependent_params: bool,
    /// On ("nonlinear") turns each type-dependent linear map into a two-layer
    /// perceptron with a tanh hidden layer of equal width.
    pub nonlinear_projections: bool,

    pub alignment_sign: AlignmentSign,
    /// Divide similarity scores by sqrt(head dim).
    pub attention_scale: bool,
    /// Divide the attention loss by the edge count as well.
    pub normalize_attention_loss_by_pairs: bool,
    /// Share one classifier matrix across the per-modality heads.
    pub share_modality_classifier: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden_dim: 64,
            heads: 8,
            dropout: 0.6,
            fusion_hidden_dim: None,
            cross_modal_unit: true,
            adaptive_weights: true,
            influenced_modality_in_lambda: false,
            neighbor_in_lambda: true,
            alignment_modulation: true,
            attention_loss: true,
            individual_modality_loss: true,
            modalities_enabled: None,
            node_type_dependent_params: true,
            edge_type_dependent_params: true,
            nonlinear_projections: false,
            alignment_sign: AlignmentSign::AsWritten,
            attention_scale: true,
            normalize_attention_loss_by_pairs: false,
            share_modality_classifier: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::config("layers must be >= 1"));
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden_dim {} must be a positive multiple of heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout {} not in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    pub fn fusion_dim(&self) -> usize {
        self.fusion_hidden_dim.unwrap_or(self.hidden_dim)
    }

    /// Resolves the enabled modality ids against a schema, in schema order.
    pub fn enabled_modalities(&self, schema: &ModalitySchema) -> Result<Vec<usize>> {
        match &self.modalities_enabled {
            None => Ok((0..schema.modality_names.len()).collect()),
            Some(names) => {
                let mut ids = Vec::new();
                for name in names {
                    let id = schema.modality_id(name).ok_or_else(|| {
                        Error::config(format!("enabled modality {name} is not in the schema"))
                    })?;
                    if !ids.contains(&id) {
                        ids.push(id);
                    }
                }
                if ids.is_empty() {
                    return Err(Error::config("modalities_enabled must not be empty"));
                }
                ids.sort_unstable();
                Ok(ids)
            }
        }
    }
}

/// The named ablation variants.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    NoCross,
    NoAdapt,
    PlusInf,
    NoNei,
    NoAlign,
    NoAttLoss,
    NoIndLoss,
    TextOnly,
    VisionOnly,
    NodeInd,
    EdgeInd,
    Nonlinear,
}

impl Variant {
    pub const ALL: [Variant; 13] = [
        Variant::Full,
        Variant::NoCross,
        Variant::NoAdapt,
        Variant::PlusInf,
        Variant::NoNei,
        Variant::NoAlign,
        Variant::NoAttLoss,
        Variant::NoIndLoss,
        Variant::TextOnly,
        Variant::VisionOnly,
        Variant::NodeInd,
        Variant::EdgeInd,
        Variant::Nonlinear,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCross => "-cross",
            Variant::NoAdapt => "-adapt",
            Variant::PlusInf => "+inf",
            Variant::NoNei => "-nei",
            Variant::NoAlign => "-align",
            Variant::NoAttLoss => "-Latt",
            Variant::NoIndLoss => "-Lind",
            Variant::TextOnly => "text-only",
            Variant::VisionOnly => "vision-only",
            Variant::NodeInd => "node-ind",
            Variant::EdgeInd => "edge-ind",
            Variant::Nonlinear => "nonlinear",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown variant {name:?}; expected one of {}",
                    Variant::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }

    /// Applies the variant's switches on top of a base configuration.
    pub fn apply(&self, cfg: &mut ModelConfig) {
        match self {
            Variant::Full => {}
            Variant::NoCross => cfg.cross_modal_unit = false,
            Variant::NoAdapt => cfg.adaptive_weights = false,
            Variant::PlusInf => cfg.influenced_modality_in_lambda = true,
            Variant::NoNei => cfg.neighbor_in_lambda = false,
            Variant::NoAlign => cfg.alignment_modulation = false,
            Variant::NoAttLoss => cfg.attention_loss = false,
            Variant::NoIndLoss => cfg.individual_modality_loss = false,
            Variant::TextOnly => cfg.modalities_enabled = Some(vec!["text".into()]),
            Variant::VisionOnly => cfg.modalities_enabled = Some(vec!["vision".into()]),
            Variant::NodeInd => cfg.node_type_dependent_params = false,
            Variant::EdgeInd => cfg.edge_type_dependent_params = false,
            Variant::Nonlinear => cfg.nonlinear_projections = true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_full_model() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.layers, 3);
        assert_eq!(cfg.hidden_dim, 64);
        assert_eq!(cfg.heads, 8);
        assert_eq!(cfg.dropout, 0.6);
        assert!(cfg.cross_modal_unit && cfg.adaptive_weights);
        assert!(cfg.attention_loss && cfg.individual_modality_loss);
    }

    #[test]
    fn variants_parse_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("bogus").is_err());
    }

    #[test]
    fn validation_catches_bad_dims() {
        let cfg = ModelConfig {
            hidden_dim: 10,
            heads: 4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
