//! Captured attention tensors, for the attention loss analysis and export.

use crate::numerics::Tensor;

/// Attention tensors of one propagation layer. All tensors are `[E x H]`
/// over the canonical edge order; per-modality vectors follow the enabled
/// modality order of the prep.
#[derive(Clone, Debug)]
pub struct LayerAttention {
    /// Inter-node attention per modality.
    pub alpha: Vec<Tensor>,
    /// Inter-modal attention per modality (averaged over the influenced axis
    /// under the "+inf" variant).
    pub lambda: Vec<Tensor>,
    /// Combined inter-node attention (averaged over modalities under
    /// "-cross", where aggregation is per-modality).
    pub beta: Tensor,
    /// Alignment attention from the cross-modal discrepancy.
    pub beta_bar: Tensor,
    /// Final mixed aggregation weights.
    pub beta_tilde: Tensor,
    /// Raw discrepancy r (zero when modulation is off or |M| = 1).
    pub discrepancy: Tensor,
}

/// Per-layer attention captures from one forward pass.
#[derive(Clone, Debug, Default)]
pub struct LayerState {
    pub layers: Vec<LayerAttention>,
}

impl LayerState {
    pub fn layer(&self, k: usize) -> Option<&LayerAttention> {
        self.layers.get(k)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }
}
