use std::path::Path;

use rand::Rng;

use crate::nncore::{
    chain_backward, chain_forward, chain_forward_cached, read_checkpoint, revin_denormalize,
    revin_normalize, write_checkpoint, ChainCache, CheckpointError, CheckpointSection, LayerOp,
    ParamKind, ParamTensor, RevinState, Tensor, REVIN_EPS,
};

use super::{ForecasterError, LayerTypeRegistry};

/// A direct forecaster: one parametric chain applied independently to
/// each variate's lookback (weights shared across variates), emitting
/// all `horizon` steps in a single forward pass.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    pub n_variates: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub revin: bool,
    pub params: Vec<ParamTensor>,
    arch: Arch,
    wiring: Vec<LayerOp>,
    registry: LayerTypeRegistry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arch {
    Linear,
    Mlp { hidden: usize },
}

/// Activations of one model forward, consumed by `backward`.
pub struct ModelCache {
    revin: Option<RevinState>,
    rows: Vec<ChainCache>,
}

/// Deep copy of a model's parameter values, restorable only into a model
/// with identical wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    entries: Vec<(String, ParamKind, usize, Vec<f64>)>,
}

/// Single linear map lookback → horizon plus bias.
pub fn build_linear<R: Rng>(
    n_variates: usize,
    lookback: usize,
    horizon: usize,
    revin: bool,
    rng: &mut R,
) -> ForecastModel {
    assert!(n_variates >= 1 && lookback >= 1 && horizon >= 1);
    let mut registry = LayerTypeRegistry::new();
    let mut params = Vec::new();
    let mut push = |name: &str, kind: ParamKind, params: &mut Vec<ParamTensor>, rng: &mut R| {
        let mut p = if matches!(kind, ParamKind::Bias { .. }) {
            ParamTensor::zeros(name, kind)
        } else {
            ParamTensor::init_uniform(name, kind, rng)
        };
        p.layer_type_id = registry.assign(name, kind);
        params.push(p);
    };
    push(
        "fc.w",
        ParamKind::Linear {
            d_in: lookback,
            d_out: horizon,
        },
        &mut params,
        rng,
    );
    push("fc.b", ParamKind::Bias { d_out: horizon }, &mut params, rng);
    ForecastModel {
        n_variates,
        lookback,
        horizon,
        revin,
        params,
        arch: Arch::Linear,
        wiring: vec![LayerOp::Affine {
            weight: 0,
            bias: Some(1),
        }],
        registry,
    }
}

/// Two-hidden-layer perceptron lookback → hidden → hidden → horizon with
/// GeLU between the affine maps.
pub fn build_mlp<R: Rng>(
    n_variates: usize,
    lookback: usize,
    horizon: usize,
    hidden: usize,
    revin: bool,
    rng: &mut R,
) -> ForecastModel {
    assert!(n_variates >= 1 && lookback >= 1 && horizon >= 1 && hidden >= 1);
    let mut registry = LayerTypeRegistry::new();
    let mut params = Vec::new();
    let mut push = |name: &str, kind: ParamKind, params: &mut Vec<ParamTensor>, rng: &mut R| {
        let mut p = if matches!(kind, ParamKind::Bias { .. }) {
            ParamTensor::zeros(name, kind)
        } else {
            ParamTensor::init_uniform(name, kind, rng)
        };
        p.layer_type_id = registry.assign(name, kind);
        params.push(p);
    };
    let dims = [
        ("in", lookback, hidden),
        ("hid", hidden, hidden),
        ("out", hidden, horizon),
    ];
    for (stem, d_in, d_out) in dims {
        push(
            &format!("{stem}.w"),
            ParamKind::Linear { d_in, d_out },
            &mut params,
            rng,
        );
        push(
            &format!("{stem}.b"),
            ParamKind::Bias { d_out },
            &mut params,
            rng,
        );
    }
    ForecastModel {
        n_variates,
        lookback,
        horizon,
        revin,
        params,
        arch: Arch::Mlp { hidden },
        wiring: vec![
            LayerOp::Affine {
                weight: 0,
                bias: Some(1),
            },
            LayerOp::Gelu,
            LayerOp::Affine {
                weight: 2,
                bias: Some(3),
            },
            LayerOp::Gelu,
            LayerOp::Affine {
                weight: 4,
                bias: Some(5),
            },
        ],
        registry,
    }
}

impl ForecastModel {
    pub fn wiring(&self) -> &[LayerOp] {
        &self.wiring
    }

    pub fn registry(&self) -> &LayerTypeRegistry {
        &self.registry
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.values.numel()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ForecasterError> {
        if x.shape() != [self.n_variates, self.lookback] {
            return Err(ForecasterError::Nncore(
                crate::nncore::NncoreError::ShapeMismatch {
                    context: "model input",
                    expected: vec![self.n_variates, self.lookback],
                    got: x.shape().to_vec(),
                },
            ));
        }
        Ok(())
    }

    /// Forecast for one lookback block `x` of shape `[n_variates,
    /// lookback]`; output `[n_variates, horizon]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, ForecasterError> {
        self.check_input(x)?;
        let (xin, state) = if self.revin {
            let (n, s) = revin_normalize(x, REVIN_EPS)?;
            (n, Some(s))
        } else {
            (x.clone(), None)
        };
        let mut out = Tensor::zeros(&[self.n_variates, self.horizon]);
        for v in 0..self.n_variates {
            let row = Tensor::from_slice(xin.row(v));
            let z = chain_forward(&self.wiring, &self.params, &row)?;
            out.row_mut(v).copy_from_slice(z.as_slice());
        }
        match state {
            Some(s) => Ok(revin_denormalize(&out, &s)?),
            None => Ok(out),
        }
    }

    /// Forward that records activations for one exact backward.
    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ModelCache), ForecasterError> {
        self.check_input(x)?;
        let (xin, state) = if self.revin {
            let (n, s) = revin_normalize(x, REVIN_EPS)?;
            (n, Some(s))
        } else {
            (x.clone(), None)
        };
        let mut out = Tensor::zeros(&[self.n_variates, self.horizon]);
        let mut rows = Vec::with_capacity(self.n_variates);
        for v in 0..self.n_variates {
            let row = Tensor::from_slice(xin.row(v));
            let (z, cache) = chain_forward_cached(&self.wiring, &self.params, &row)?;
            out.row_mut(v).copy_from_slice(z.as_slice());
            rows.push(cache);
        }
        let cache = ModelCache {
            revin: state.clone(),
            rows,
        };
        match state {
            Some(s) => Ok((revin_denormalize(&out, &s)?, cache)),
            None => Ok((out, cache)),
        }
    }

    /// Accumulates parameter gradients for `upstream` = dLoss/dForecast
    /// of shape `[n_variates, horizon]`. The denormalization wrapper is
    /// affine per variate, so its backward is one multiplication by the
    /// stored divisor.
    pub fn backward(&mut self, cache: &ModelCache, upstream: &Tensor) -> Result<(), ForecasterError> {
        assert_eq!(upstream.shape(), [self.n_variates, self.horizon]);
        assert_eq!(cache.rows.len(), self.n_variates, "cache arity");
        for v in 0..self.n_variates {
            let mut g = upstream.row(v).to_vec();
            if let Some(state) = &cache.revin {
                let d = state.divisor(v);
                for gi in g.iter_mut() {
                    *gi *= d;
                }
            }
            let g = Tensor::from_vec(&[self.horizon], g)?;
            chain_backward(&self.wiring, &mut self.params, &cache.rows[v], &g)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Deep value snapshot, for reset semantics and best-epoch keeping.
    pub fn clone_params(&self) -> ParamSnapshot {
        ParamSnapshot {
            entries: self
                .params
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        p.kind,
                        p.layer_type_id,
                        p.values.as_slice().to_vec(),
                    )
                })
                .collect(),
        }
    }

    /// Restores values bit-exactly; the snapshot must come from a model
    /// with the same wiring.
    pub fn restore_params(&mut self, snap: &ParamSnapshot) -> Result<(), ForecasterError> {
        if snap.entries.len() != self.params.len() {
            return Err(ForecasterError::WiringMismatch);
        }
        for (p, (name, kind, type_id, _)) in self.params.iter().zip(snap.entries.iter()) {
            if p.name != *name || p.kind != *kind || p.layer_type_id != *type_id {
                return Err(ForecasterError::WiringMismatch);
            }
        }
        for (p, (_, _, _, values)) in self.params.iter_mut().zip(snap.entries.iter()) {
            p.values.as_mut_slice().copy_from_slice(values);
        }
        Ok(())
    }

    /// Checkpoint section describing this model: architecture metadata
    /// plus every parameter tensor.
    pub fn to_section(&self, section_name: &str) -> CheckpointSection {
        let mut meta = vec![
            (
                "arch".to_string(),
                match self.arch {
                    Arch::Linear => "linear".to_string(),
                    Arch::Mlp { .. } => "mlp".to_string(),
                },
            ),
            ("n_variates".to_string(), self.n_variates.to_string()),
            ("lookback".to_string(), self.lookback.to_string()),
            ("horizon".to_string(), self.horizon.to_string()),
            ("revin".to_string(), u8::from(self.revin).to_string()),
        ];
        if let Arch::Mlp { hidden } = self.arch {
            meta.push(("hidden".to_string(), hidden.to_string()));
        }
        CheckpointSection {
            name: section_name.to_string(),
            meta,
            tensors: self.params.clone(),
        }
    }

    /// Rebuilds a model from a checkpoint section written by
    /// `to_section`.
    pub fn from_section(section: &CheckpointSection) -> Result<ForecastModel, ForecasterError> {
        let get = |key: &str| {
            section
                .meta_value(key)
                .ok_or(ForecasterError::WiringMismatch)
        };
        let n: usize = get("n_variates")?.parse().map_err(|_| ForecasterError::WiringMismatch)?;
        let l: usize = get("lookback")?.parse().map_err(|_| ForecasterError::WiringMismatch)?;
        let h: usize = get("horizon")?.parse().map_err(|_| ForecasterError::WiringMismatch)?;
        let revin = get("revin")? == "1";
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut model = match get("arch")? {
            "linear" => build_linear(n, l, h, revin, &mut rng),
            "mlp" => {
                let hidden: usize = get("hidden")?
                    .parse()
                    .map_err(|_| ForecasterError::WiringMismatch)?;
                build_mlp(n, l, h, hidden, revin, &mut rng)
            }
            _ => return Err(ForecasterError::WiringMismatch),
        };
        if section.tensors.len() != model.params.len() {
            return Err(ForecasterError::WiringMismatch);
        }
        for (p, t) in model.params.iter_mut().zip(section.tensors.iter()) {
            if p.name != t.name || p.kind != t.kind || p.layer_type_id != t.layer_type_id {
                return Err(ForecasterError::WiringMismatch);
            }
            p.values = t.values.clone();
        }
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), CheckpointError> {
        write_checkpoint(path, &[self.to_section("model")])
    }

    pub fn load_checkpoint(path: &Path) -> Result<ForecastModel, ForecasterError> {
        let sections = read_checkpoint(path).map_err(|_| ForecasterError::WiringMismatch)?;
        let section = sections
            .iter()
            .find(|s| s.name == "model")
            .ok_or(ForecasterError::WiringMismatch)?;
        ForecastModel::from_section(section)
    }
}
