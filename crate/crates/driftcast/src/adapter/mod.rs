//! Proactive model adaptation: concept encoders over completed and
//! current windows, drift estimation between them, and a low-rank
//! generator that turns drift into per-layer rescaling coefficients
//! applied to a forecaster without touching its stored parameters.

mod apply;
mod encoder;
mod generator;

pub use apply::{
    adapted_chain_backward, adapted_chain_forward, adapted_chain_forward_cached,
    adapted_forward, adapted_model_backward, adapted_model_forward, adapted_model_forward_cached,
    materialize_adapted, materialize_params, member_indices, AdaptedChainCache, AdaptedModelCache,
};
pub use encoder::{
    concat_xy, encode_test_concept, encode_train_backward, encode_train_cached,
    encode_train_concept, AggregationMode, ConceptEncoder, EncodeCache, TrainConceptCache,
};
pub use generator::{
    adapter_param_count, naive_dense_count, AdaptationCoefficients, CoeffGenerator, GenCache,
    LayerCoeffs,
};

use std::path::Path;

use rand::Rng;

use crate::forecasters::LayerTypeRegistry;
use crate::nncore::{
    read_checkpoint, write_checkpoint, CheckpointError, CheckpointSection, ParamTensor, Tensor,
};
use crate::seriesdata::WindowSample;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("input arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {0}, got {1}")]
    DimMismatch(usize, usize),
    #[error("aggregation bound to {expected} variates, got {got}")]
    ModeDimMismatch { expected: usize, got: usize },
    #[error("coefficient layout does not match the model's layer registry")]
    RegistryMismatch,
    #[error("batch arity mismatch: {0} coefficient sets for {1} inputs")]
    BatchArityMismatch(usize, usize),
    #[error("malformed adapter checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Nncore(#[from] crate::nncore::NncoreError),
}

/// Drift between two concept vectors: new minus old, element-wise.
pub fn estimate_drift(c_new: &Tensor, c_prev: &Tensor) -> Result<Tensor, AdapterError> {
    if c_new.numel() != c_prev.numel() {
        return Err(AdapterError::DimMismatch(c_new.numel(), c_prev.numel()));
    }
    let data = c_new
        .as_slice()
        .iter()
        .zip(c_prev.as_slice())
        .map(|(a, b)| a - b)
        .collect::<Vec<_>>();
    Ok(Tensor::from_slice(&data))
}

/// Build-time switches for a [`DriftAdapter`].
#[derive(Debug, Clone)]
pub struct AdapterBuildConfig {
    pub d_c: usize,
    pub r: usize,
    pub aggregation: AggregationMode,
    pub n_variates: usize,
    pub lookback: usize,
    pub horizon: usize,
    /// Per-member W1/W2 instead of per-type sharing.
    pub unshared_generator: bool,
    /// One encoder serves both the completed-window and current-window
    /// concepts (reads lookbacks only on both sides).
    pub shared_encoder: bool,
    /// Feed the current concept itself to the generator instead of the
    /// drift.
    pub concept_only: bool,
}

impl AdapterBuildConfig {
    pub fn new(n_variates: usize, lookback: usize, horizon: usize) -> AdapterBuildConfig {
        AdapterBuildConfig {
            d_c: 100,
            r: 32,
            aggregation: AggregationMode::Average,
            n_variates,
            lookback,
            horizon,
            unshared_generator: false,
            shared_encoder: false,
            concept_only: false,
        }
    }
}

/// The full adaptation stack: completed-window encoder (absent when
/// shared), current-window encoder, and the coefficient generator.
#[derive(Debug, Clone)]
pub struct DriftAdapter {
    pub enc_train: Option<ConceptEncoder>,
    pub enc_test: ConceptEncoder,
    pub generator: CoeffGenerator,
    pub concept_only: bool,
}

impl DriftAdapter {
    pub fn build<R: Rng>(
        registry: &LayerTypeRegistry,
        cfg: &AdapterBuildConfig,
        rng: &mut R,
    ) -> DriftAdapter {
        let enc_train = if cfg.shared_encoder {
            None
        } else {
            Some(ConceptEncoder::new(
                cfg.lookback + cfg.horizon,
                cfg.d_c,
                cfg.aggregation,
                cfg.n_variates,
                rng,
            ))
        };
        let enc_test = ConceptEncoder::new(
            cfg.lookback,
            cfg.d_c,
            cfg.aggregation,
            cfg.n_variates,
            rng,
        );
        let generator = CoeffGenerator::new(registry, cfg.d_c, cfg.r, cfg.unshared_generator, rng);
        DriftAdapter {
            enc_train,
            enc_test,
            generator,
            concept_only: cfg.concept_only,
        }
    }

    pub fn d_c(&self) -> usize {
        self.enc_test.d_c
    }

    pub fn shared_encoder(&self) -> bool {
        self.enc_train.is_none()
    }

    /// Concept of completed samples. With a dedicated train-side encoder
    /// this reads lookback and target; with a shared encoder it reads
    /// lookbacks only, through the test-side weights.
    pub fn train_concept(&self, samples: &[WindowSample]) -> Result<Tensor, AdapterError> {
        match &self.enc_train {
            Some(enc) => encode_train_concept(enc, samples),
            None => {
                assert!(!samples.is_empty(), "at least one sample");
                let mut acc = vec![0.0; self.d_c()];
                for s in samples {
                    let c = self.enc_test.encode(&s.x)?;
                    for (a, v) in acc.iter_mut().zip(c.as_slice()) {
                        *a += v;
                    }
                }
                for a in acc.iter_mut() {
                    *a /= samples.len() as f64;
                }
                Ok(Tensor::from_slice(&acc))
            }
        }
    }

    /// Encoder inputs for [`train_concept`]'s cached form: concatenated
    /// (lookback ∥ target) blocks, or bare lookbacks when shared.
    pub fn train_inputs(&self, samples: &[WindowSample]) -> Vec<Tensor> {
        match &self.enc_train {
            Some(_) => samples.iter().map(concat_xy).collect(),
            None => samples.iter().map(|s| s.x.clone()).collect(),
        }
    }

    pub fn test_concept(&self, x: &Tensor) -> Result<Tensor, AdapterError> {
        self.enc_test.encode(x)
    }

    /// Generator input: drift from `c_prev` to `c_test`, or `c_test`
    /// alone in concept-only mode.
    pub fn generator_input(&self, c_test: &Tensor, c_prev: &Tensor) -> Result<Tensor, AdapterError> {
        if self.concept_only {
            Ok(c_test.clone())
        } else {
            estimate_drift(c_test, c_prev)
        }
    }

    pub fn param_count(&self) -> usize {
        self.enc_train.as_ref().map_or(0, |e| e.param_count())
            + self.enc_test.param_count()
            + self.generator.param_count()
    }

    /// Mutable views of every adapter parameter, in the fixed order
    /// train encoder, test encoder, generator.
    pub fn all_params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out: Vec<&mut ParamTensor> = Vec::new();
        if let Some(enc) = &mut self.enc_train {
            out.extend(enc.params.iter_mut());
        }
        out.extend(self.enc_test.params.iter_mut());
        out.extend(self.generator.params.iter_mut());
        out
    }

    pub fn zero_grads(&mut self) {
        if let Some(enc) = &mut self.enc_train {
            enc.zero_grads();
        }
        self.enc_test.zero_grads();
        self.generator.zero_grads();
    }

    /// Order-sensitive FNV-1a digest over every parameter value, for
    /// freeze checks.
    pub fn checksum(&self) -> u64 {
        use crate::nncore::params_checksum;
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            hash ^= v;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        };
        if let Some(enc) = &self.enc_train {
            mix(params_checksum(&enc.params));
        }
        mix(params_checksum(&self.enc_test.params));
        mix(params_checksum(&self.generator.params));
        hash
    }

    fn encoder_section(name: &str, enc: &ConceptEncoder) -> CheckpointSection {
        let mode = match enc.mode() {
            AggregationMode::Average => "average",
            AggregationMode::Linear => "linear",
            AggregationMode::Weighted => "weighted",
        };
        CheckpointSection {
            name: name.to_string(),
            meta: vec![
                ("arity".to_string(), enc.arity.to_string()),
                ("d_c".to_string(), enc.d_c.to_string()),
                ("mode".to_string(), mode.to_string()),
                (
                    "n_variates".to_string(),
                    enc.bound_n().unwrap_or(0).to_string(),
                ),
            ],
            tensors: enc.params.clone(),
        }
    }

    pub fn to_sections(&self) -> Vec<CheckpointSection> {
        let mut sections = Vec::new();
        if let Some(enc) = &self.enc_train {
            sections.push(Self::encoder_section("adapter.enc_train", enc));
        }
        sections.push(Self::encoder_section("adapter.enc_test", &self.enc_test));
        sections.push(CheckpointSection {
            name: "adapter.generator".to_string(),
            meta: vec![
                ("d_c".to_string(), self.generator.d_c.to_string()),
                ("r".to_string(), self.generator.r.to_string()),
                (
                    "unshared".to_string(),
                    u8::from(self.generator.unshared).to_string(),
                ),
                (
                    "concept_only".to_string(),
                    u8::from(self.concept_only).to_string(),
                ),
                (
                    "shared_encoder".to_string(),
                    u8::from(self.shared_encoder()).to_string(),
                ),
            ],
            tensors: self.generator.params.clone(),
        });
        sections
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), AdapterError> {
        write_checkpoint(path, &self.to_sections())?;
        Ok(())
    }

    fn encoder_from_section(section: &CheckpointSection) -> Result<ConceptEncoder, AdapterError> {
        let get = |key: &str| {
            section
                .meta_value(key)
                .ok_or_else(|| AdapterError::BadCheckpoint(format!("missing meta key {key}")))
        };
        let parse = |key: &str| -> Result<usize, AdapterError> {
            get(key)?
                .parse()
                .map_err(|_| AdapterError::BadCheckpoint(format!("non-integer meta key {key}")))
        };
        let arity = parse("arity")?;
        let d_c = parse("d_c")?;
        let n = parse("n_variates")?;
        let mode = match get("mode")? {
            "average" => AggregationMode::Average,
            "linear" => AggregationMode::Linear,
            "weighted" => AggregationMode::Weighted,
            other => {
                return Err(AdapterError::BadCheckpoint(format!(
                    "unknown aggregation mode {other}"
                )))
            }
        };
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut enc = ConceptEncoder::new(arity, d_c, mode, n.max(1), &mut rng);
        overwrite_params(&mut enc.params, &section.tensors, &section.name)?;
        Ok(enc)
    }

    /// Rebuilds the adapter saved by [`save_checkpoint`]; the registry
    /// must describe the same model the adapter was trained against.
    pub fn load_checkpoint(
        path: &Path,
        registry: &LayerTypeRegistry,
    ) -> Result<DriftAdapter, AdapterError> {
        let sections = read_checkpoint(path)?;
        let find = |name: &str| sections.iter().find(|s| s.name == name);
        let gen_section = find("adapter.generator")
            .ok_or_else(|| AdapterError::BadCheckpoint("missing generator section".into()))?;
        let get = |key: &str| {
            gen_section
                .meta_value(key)
                .ok_or_else(|| AdapterError::BadCheckpoint(format!("missing meta key {key}")))
        };
        let parse = |key: &str| -> Result<usize, AdapterError> {
            get(key)?
                .parse()
                .map_err(|_| AdapterError::BadCheckpoint(format!("non-integer meta key {key}")))
        };
        let d_c = parse("d_c")?;
        let r = parse("r")?;
        let unshared = get("unshared")? == "1";
        let concept_only = get("concept_only")? == "1";
        let shared_encoder = get("shared_encoder")? == "1";
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut generator = CoeffGenerator::new(registry, d_c, r, unshared, &mut rng);
        if !generator.matches_registry(registry) {
            return Err(AdapterError::RegistryMismatch);
        }
        overwrite_params(&mut generator.params, &gen_section.tensors, "adapter.generator")?;
        let enc_test = Self::encoder_from_section(
            find("adapter.enc_test")
                .ok_or_else(|| AdapterError::BadCheckpoint("missing enc_test section".into()))?,
        )?;
        let enc_train = if shared_encoder {
            None
        } else {
            Some(Self::encoder_from_section(find("adapter.enc_train").ok_or_else(
                || AdapterError::BadCheckpoint("missing enc_train section".into()),
            )?)?)
        };
        Ok(DriftAdapter {
            enc_train,
            enc_test,
            generator,
            concept_only,
        })
    }
}

fn overwrite_params(
    into: &mut [ParamTensor],
    from: &[ParamTensor],
    section: &str,
) -> Result<(), AdapterError> {
    if into.len() != from.len() {
        return Err(AdapterError::BadCheckpoint(format!(
            "{section}: expected {} tensors, found {}",
            into.len(),
            from.len()
        )));
    }
    for (p, t) in into.iter_mut().zip(from) {
        if p.name != t.name || p.kind != t.kind {
            return Err(AdapterError::BadCheckpoint(format!(
                "{section}: tensor {} does not match the rebuilt layout",
                t.name
            )));
        }
        p.values = t.values.clone();
    }
    Ok(())
}
