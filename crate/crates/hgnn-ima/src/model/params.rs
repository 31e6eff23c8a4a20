//! Learnable parameters: construction, naming, and checkpoint IO.
//!
//! Every tensor has a stable name of the form
//! `<role>.<type-name>[.<modality>].<weight|bias>`; the nonlinear variant
//! adds `.weight2`/`.bias2` blocks for the second perceptron layer. Per-head
//! projection blocks are stored stacked: a `[d x d/H]` tensor holds H blocks
//! of `[d/H x d/H]`.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ModalitySchema};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::numerics::{glorot_uniform_with_fans, ParamMap, Tensor};

pub const CHECKPOINT_FORMAT: &str = "hgnn-ima-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Shared placeholder type name used when type dependence is switched off.
pub const SHARED: &str = "shared";

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    map: ParamMap,
}

impl ParameterSet {
    /// Builds and glorot-initializes every block required by the config for
    /// the given graph vocabulary. Construction order is fixed, so one seed
    /// yields bit-identical parameters across runs.
    pub fn init(
        schema: &ModalitySchema,
        node_type_names: &[String],
        edge_type_names: &[String],
        cfg: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let enabled = cfg.enabled_modalities(schema)?;
        let d = cfg.hidden_dim;
        let dh = cfg.head_dim();
        let df = cfg.fusion_dim();
        let n_cat = schema.categories.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = ParamMap::new();

        let node_types: Vec<String> = if cfg.node_type_dependent_params {
            node_type_names.to_vec()
        } else {
            vec![SHARED.to_string()]
        };
        let edge_types: Vec<String> = if cfg.edge_type_dependent_params {
            edge_type_names.to_vec()
        } else {
            vec![SHARED.to_string()]
        };

        let linear = |map: &mut ParamMap,
                          name: String,
                          in_dim: usize,
                          out_dim: usize,
                          fan_in: usize,
                          fan_out: usize,
                          rng: &mut ChaCha8Rng,
                          nonlinear: bool| {
            map.insert(
                format!("{name}.weight"),
                glorot_uniform_with_fans([in_dim, out_dim], fan_in, fan_out, rng),
            );
            map.insert(format!("{name}.bias"), Tensor::zeros([out_dim]));
            if nonlinear {
                map.insert(
                    format!("{name}.weight2"),
                    glorot_uniform_with_fans([out_dim, out_dim], fan_out, fan_out, rng),
                );
                map.insert(format!("{name}.bias2"), Tensor::zeros([out_dim]));
            }
        };

        // Input projections per (node type, modality): input_dim(m) -> d.
        for t in &node_types {
            for &m in &enabled {
                let in_dim = schema.input_dims[m];
                linear(
                    &mut map,
                    format!("input_proj.{t}.{}", schema.modality_names[m]),
                    in_dim,
                    d,
                    in_dim,
                    d,
                    &mut rng,
                    cfg.nonlinear_projections,
                );
            }
        }
        // Key/query/message/output projections per node type. The stacked
        // [d x dh] weight holds H per-head [dh x dh] blocks; the d-wide bias
        // covers all heads.
        for role in ["key_proj", "query_proj", "message_proj", "output_proj"] {
            for t in &node_types {
                map.insert(
                    format!("{role}.{t}.weight"),
                    glorot_uniform_with_fans([d, dh], dh, dh, &mut rng),
                );
                map.insert(format!("{role}.{t}.bias"), Tensor::zeros([d]));
                if cfg.nonlinear_projections {
                    map.insert(
                        format!("{role}.{t}.weight2"),
                        glorot_uniform_with_fans([d, dh], dh, dh, &mut rng),
                    );
                    map.insert(format!("{role}.{t}.bias2"), Tensor::zeros([d]));
                }
            }
        }
        // Edge-type bilinear matrices, per head.
        for e in &edge_types {
            map.insert(
                format!("w_node.{e}.weight"),
                glorot_uniform_with_fans([d, dh], dh, dh, &mut rng),
            );
        }
        for e in &edge_types {
            if cfg.influenced_modality_in_lambda {
                for &m in &enabled {
                    map.insert(
                        format!("w_modal.{e}.{}.weight", schema.modality_names[m]),
                        glorot_uniform_with_fans([d, dh], dh, dh, &mut rng),
                    );
                }
            } else {
                map.insert(
                    format!("w_modal.{e}.weight"),
                    glorot_uniform_with_fans([d, dh], dh, dh, &mut rng),
                );
            }
        }
        for e in &edge_types {
            map.insert(
                format!("w_msg.{e}.weight"),
                glorot_uniform_with_fans([d, dh], dh, dh, &mut rng),
            );
        }
        // Fusion attention.
        map.insert(
            "fusion.w1.weight".into(),
            glorot_uniform_with_fans([d, df], d, df, &mut rng),
        );
        map.insert(
            "fusion.w2.weight".into(),
            glorot_uniform_with_fans([df, 1], df, 1, &mut rng),
        );
        map.insert("fusion.w2.bias".into(), Tensor::zeros([1]));
        // Classifier heads.
        map.insert(
            "classifier.fused.weight".into(),
            glorot_uniform_with_fans([d, n_cat], d, n_cat, &mut rng),
        );
        if cfg.share_modality_classifier {
            map.insert(
                "classifier.modality.weight".into(),
                glorot_uniform_with_fans([d, n_cat], d, n_cat, &mut rng),
            );
        } else {
            for &m in &enabled {
                map.insert(
                    format!("classifier.{}.weight", schema.modality_names[m]),
                    glorot_uniform_with_fans([d, n_cat], d, n_cat, &mut rng),
                );
            }
        }
        Ok(Self { map })
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown parameter block {name}")))
    }

    pub fn map(&self) -> &ParamMap {
        &self.map
    }

    pub fn map_mut(&mut self) -> &mut ParamMap {
        &mut self.map
    }

    pub fn from_map(map: ParamMap) -> Self {
        Self { map }
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn total_len(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// Classifier block name for a modality head.
    pub fn modality_classifier_name(cfg: &ModelConfig, modality_name: &str) -> String {
        if cfg.share_modality_classifier {
            "classifier.modality.weight".into()
        } else {
            format!("classifier.{modality_name}.weight")
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    schema_hash: String,
    config: ModelConfig,
    params: Vec<CheckpointTensor>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Model card: the effective config plus the schema hash, written next to
/// checkpoints so evaluation can refuse mismatched graphs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelCard {
    pub config: ModelConfig,
    pub schema_hash: String,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ParameterSet,
    cfg: &ModelConfig,
    schema_hash: &str,
) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        schema_hash: schema_hash.into(),
        config: cfg.clone(),
        params: params
            .map
            .iter()
            .map(|(name, t)| CheckpointTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::data(format!("checkpoint serialization failed: {e}")))?;
    fs::write(path, json).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(ParameterSet, ModelConfig, String)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("malformed checkpoint {}: {e}", path.display())))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::data(format!(
            "not a checkpoint file: format {:?}",
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::data(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    let mut map = ParamMap::new();
    for t in file.params {
        let tensor = Tensor::new(t.shape, t.values)?;
        if map.insert(t.name.clone(), tensor).is_some() {
            return Err(Error::data(format!(
                "duplicate parameter {} in checkpoint",
                t.name
            )));
        }
    }
    Ok((ParameterSet { map }, file.config, file.schema_hash))
}

/// Refuses to pair a checkpoint with a dataset of a different schema.
pub fn check_schema(dataset: &Dataset, checkpoint_hash: &str) -> Result<()> {
    let got = dataset.schema_hash();
    if got != checkpoint_hash {
        return Err(Error::SchemaMismatch {
            expected: checkpoint_hash.into(),
            got,
        });
    }
    Ok(())
}
