use rand::Rng;

use crate::nncore::{
    chain_backward, chain_forward, chain_forward_cached, ChainCache, LayerOp, ParamKind,
    ParamTensor, Tensor,
};
use crate::seriesdata::WindowSample;

use super::AdapterError;

/// Config-facing aggregation choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Average,
    Linear,
    Weighted,
}

/// How per-variate feature vectors combine into one concept vector.
/// Linear and weighted modes carry a trainable parameter (an index into
/// the encoder's parameter list) and are bound to the variate count they
/// were built for; average is variate-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Aggregation {
    Average,
    Linear { param: usize },
    Weighted { param: usize },
}

/// Concept encoder: one linear–GeLU–linear feature map applied to each
/// variate's series (weights shared across variates), then aggregation.
/// `arity` is the per-variate input width: lookback+horizon for the
/// train-side encoder, lookback for the test-side encoder.
#[derive(Debug, Clone)]
pub struct ConceptEncoder {
    pub arity: usize,
    pub d_c: usize,
    pub params: Vec<ParamTensor>,
    wiring: Vec<LayerOp>,
    aggregation: Aggregation,
    bound_n: Option<usize>,
}

/// Activations of one `encode_cached`, for the exact backward.
pub struct EncodeCache {
    rows: Vec<ChainCache>,
    features: Vec<Vec<f64>>,
}

/// Activations of one multi-sample `encode_train_cached`.
pub struct TrainConceptCache {
    pub per_sample: Vec<EncodeCache>,
}

impl ConceptEncoder {
    pub fn new<R: Rng>(
        arity: usize,
        d_c: usize,
        mode: AggregationMode,
        n_variates: usize,
        rng: &mut R,
    ) -> ConceptEncoder {
        assert!(arity >= 1 && d_c >= 1 && n_variates >= 1);
        let mut params = vec![
            ParamTensor::init_uniform(
                "enc.a.w",
                ParamKind::Linear {
                    d_in: arity,
                    d_out: d_c,
                },
                rng,
            ),
            ParamTensor::zeros("enc.a.b", ParamKind::Bias { d_out: d_c }),
            ParamTensor::init_uniform(
                "enc.b.w",
                ParamKind::Linear { d_in: d_c, d_out: d_c },
                rng,
            ),
            ParamTensor::zeros("enc.b.b", ParamKind::Bias { d_out: d_c }),
        ];
        // Trainable aggregations start exactly at the average they
        // replace, so every mode shares one initial behavior.
        let (aggregation, bound_n) = match mode {
            AggregationMode::Average => (Aggregation::Average, None),
            AggregationMode::Weighted => {
                let mut w = ParamTensor::zeros("enc.agg.w", ParamKind::Bias { d_out: n_variates });
                w.values.fill(1.0 / n_variates as f64);
                params.push(w);
                (Aggregation::Weighted { param: 4 }, Some(n_variates))
            }
            AggregationMode::Linear => {
                let mut w = ParamTensor::zeros(
                    "enc.agg.w",
                    ParamKind::Linear {
                        d_in: n_variates * d_c,
                        d_out: d_c,
                    },
                );
                for v in 0..n_variates {
                    for o in 0..d_c {
                        *w.values.at2_mut(v * d_c + o, o) = 1.0 / n_variates as f64;
                    }
                }
                params.push(w);
                (Aggregation::Linear { param: 4 }, Some(n_variates))
            }
        };
        ConceptEncoder {
            arity,
            d_c,
            params,
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
            ],
            aggregation,
            bound_n,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.values.numel()).sum()
    }

    pub fn mode(&self) -> AggregationMode {
        match self.aggregation {
            Aggregation::Average => AggregationMode::Average,
            Aggregation::Linear { .. } => AggregationMode::Linear,
            Aggregation::Weighted { .. } => AggregationMode::Weighted,
        }
    }

    /// Variate count the aggregation is bound to; `None` for the
    /// variate-agnostic average.
    pub fn bound_n(&self) -> Option<usize> {
        self.bound_n
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, AdapterError> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.arity {
            return Err(AdapterError::ArityMismatch {
                expected: self.arity,
                got: *shape.last().unwrap_or(&0),
            });
        }
        if let Some(n) = self.bound_n {
            if shape[0] != n {
                return Err(AdapterError::ModeDimMismatch {
                    expected: n,
                    got: shape[0],
                });
            }
        }
        Ok(shape[0])
    }

    fn aggregate(&self, features: &[Vec<f64>]) -> Vec<f64> {
        let n = features.len();
        let mut c = vec![0.0; self.d_c];
        match self.aggregation {
            Aggregation::Average => {
                for f in features {
                    for (ci, fi) in c.iter_mut().zip(f.iter()) {
                        *ci += fi;
                    }
                }
                for ci in c.iter_mut() {
                    *ci /= n as f64;
                }
            }
            Aggregation::Weighted { param } => {
                let w = self.params[param].values.as_slice();
                for (v, f) in features.iter().enumerate() {
                    for (ci, fi) in c.iter_mut().zip(f.iter()) {
                        *ci += w[v] * fi;
                    }
                }
            }
            Aggregation::Linear { param } => {
                let w = self.params[param].values.as_slice();
                for (v, f) in features.iter().enumerate() {
                    for (i, fi) in f.iter().enumerate() {
                        let row = (v * self.d_c + i) * self.d_c;
                        for (o, ci) in c.iter_mut().enumerate() {
                            *ci += w[row + o] * fi;
                        }
                    }
                }
            }
        }
        c
    }

    /// Concept vector for one `[n_variates, arity]` block.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor, AdapterError> {
        let n = self.check_input(x)?;
        let mut features = Vec::with_capacity(n);
        for v in 0..n {
            let row = Tensor::from_slice(x.row(v));
            let f = chain_forward(&self.wiring, &self.params, &row)?;
            features.push(f.as_slice().to_vec());
        }
        Ok(Tensor::from_slice(&self.aggregate(&features)))
    }

    pub fn encode_cached(&self, x: &Tensor) -> Result<(Tensor, EncodeCache), AdapterError> {
        let n = self.check_input(x)?;
        let mut features = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for v in 0..n {
            let row = Tensor::from_slice(x.row(v));
            let (f, cache) = chain_forward_cached(&self.wiring, &self.params, &row)?;
            features.push(f.as_slice().to_vec());
            rows.push(cache);
        }
        let c = Tensor::from_slice(&self.aggregate(&features));
        Ok((c, EncodeCache { rows, features }))
    }

    /// Accumulates parameter gradients for dLoss/dConcept `upstream`.
    pub fn encode_backward(
        &mut self,
        cache: &EncodeCache,
        upstream: &[f64],
    ) -> Result<(), AdapterError> {
        assert_eq!(upstream.len(), self.d_c, "concept gradient arity");
        let n = cache.features.len();
        let mut per_variate: Vec<Vec<f64>> = Vec::with_capacity(n);
        match self.aggregation {
            Aggregation::Average => {
                for _ in 0..n {
                    per_variate.push(upstream.iter().map(|g| g / n as f64).collect());
                }
            }
            Aggregation::Weighted { param } => {
                let w = self.params[param].values.as_slice().to_vec();
                let wg = self.params[param].grad.as_mut_slice();
                for (v, f) in cache.features.iter().enumerate() {
                    wg[v] += f.iter().zip(upstream.iter()).map(|(fi, g)| fi * g).sum::<f64>();
                    per_variate.push(upstream.iter().map(|g| w[v] * g).collect());
                }
            }
            Aggregation::Linear { param } => {
                let w = self.params[param].values.as_slice().to_vec();
                let wg = self.params[param].grad.as_mut_slice();
                for (v, f) in cache.features.iter().enumerate() {
                    let mut df = vec![0.0; self.d_c];
                    for (i, fi) in f.iter().enumerate() {
                        let row = (v * self.d_c + i) * self.d_c;
                        let mut acc = 0.0;
                        for (o, g) in upstream.iter().enumerate() {
                            wg[row + o] += fi * g;
                            acc += w[row + o] * g;
                        }
                        df[i] = acc;
                    }
                    per_variate.push(df);
                }
            }
        }
        for (v, df) in per_variate.into_iter().enumerate() {
            let g = Tensor::from_slice(&df);
            chain_backward(&self.wiring, &mut self.params, &cache.rows[v], &g)?;
        }
        Ok(())
    }
}

/// Concatenates a sample's lookback and target per variate into the
/// `[n_variates, l+h]` block the train-side encoder consumes.
pub fn concat_xy(sample: &WindowSample) -> Tensor {
    let n = sample.x.shape()[0];
    let l = sample.x.shape()[1];
    let h = sample.y.shape()[1];
    let mut out = Tensor::zeros(&[n, l + h]);
    for v in 0..n {
        out.row_mut(v)[..l].copy_from_slice(sample.x.row(v));
        out.row_mut(v)[l..].copy_from_slice(sample.y.row(v));
    }
    out
}

/// Concept of a set of completed samples: each sample's (lookback ∥
/// target) block is encoded and the encodings are averaged.
pub fn encode_train_concept(
    enc: &ConceptEncoder,
    samples: &[WindowSample],
) -> Result<Tensor, AdapterError> {
    assert!(!samples.is_empty(), "at least one sample");
    let mut acc = vec![0.0; enc.d_c];
    for s in samples {
        let c = enc.encode(&concat_xy(s))?;
        for (a, v) in acc.iter_mut().zip(c.as_slice()) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a /= samples.len() as f64;
    }
    Ok(Tensor::from_slice(&acc))
}

/// Cached form of [`encode_train_concept`].
pub fn encode_train_cached(
    enc: &ConceptEncoder,
    inputs: &[Tensor],
) -> Result<(Tensor, TrainConceptCache), AdapterError> {
    assert!(!inputs.is_empty(), "at least one sample");
    let mut acc = vec![0.0; enc.d_c];
    let mut per_sample = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (c, cache) = enc.encode_cached(x)?;
        for (a, v) in acc.iter_mut().zip(c.as_slice()) {
            *a += v;
        }
        per_sample.push(cache);
    }
    for a in acc.iter_mut() {
        *a /= inputs.len() as f64;
    }
    Ok((Tensor::from_slice(&acc), TrainConceptCache { per_sample }))
}

/// Backward of [`encode_train_cached`]: the mean distributes the
/// upstream gradient equally over the samples.
pub fn encode_train_backward(
    enc: &mut ConceptEncoder,
    cache: &TrainConceptCache,
    upstream: &[f64],
) -> Result<(), AdapterError> {
    let k = cache.per_sample.len() as f64;
    let per: Vec<f64> = upstream.iter().map(|g| g / k).collect();
    for sample in &cache.per_sample {
        enc.encode_backward(sample, &per)?;
    }
    Ok(())
}

/// Concept of the current lookback, via the test-side encoder.
pub fn encode_test_concept(enc: &ConceptEncoder, x: &Tensor) -> Result<Tensor, AdapterError> {
    enc.encode(x)
}
