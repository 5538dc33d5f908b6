//! Layer primitives and chained forward/backward execution.
//!
//! A network is an ordered [`ParamTensor`] list plus a wiring descriptor
//! referencing parameters by index. Affine ops act on 1-D inputs with the
//! d_in×d_out weight layout (z = Wᵀh + b); causal conv acts on 2-D
//! (channels × length) inputs, left-padding with zeros so the output
//! keeps the input length.

use crate::nncore::{NncoreError, ParamKind, ParamTensor, Tensor};

const GELU_CUBIC: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// GeLU, tanh approximation with fixed constants so gradient tests pin
/// one formula.
pub fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let x2 = x * x;
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x2);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x2);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOp {
    Affine { weight: usize, bias: Option<usize> },
    CausalConv { filter: usize, bias: Option<usize> },
    Gelu,
}

#[derive(Debug, Clone)]
pub(crate) enum StepCache {
    Affine { input: Tensor },
    CausalConv { input: Tensor },
    Gelu { input: Tensor },
}

/// Activations recorded by a cached forward, sufficient for one exact
/// backward through the same wiring and parameter shapes.
#[derive(Debug, Clone)]
pub struct ChainCache {
    fingerprint: u64,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    pub(crate) steps: Vec<StepCache>,
}

fn param<'a>(params: &'a [ParamTensor], idx: usize) -> Result<&'a ParamTensor, NncoreError> {
    params.get(idx).ok_or(NncoreError::BadParamIndex(idx))
}

/// Structural fingerprint of (wiring, referenced shapes, input shape);
/// detects a cache replayed against a different network.
fn fingerprint(
    wiring: &[LayerOp],
    params: &[ParamTensor],
    input_shape: &[usize],
) -> Result<u64, NncoreError> {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: u64| {
        hash ^= v;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for d in input_shape {
        mix(*d as u64 + 1);
    }
    for op in wiring {
        match *op {
            LayerOp::Affine { weight, bias } => {
                mix(1);
                mix(weight as u64);
                for d in param(params, weight)?.values.shape() {
                    mix(*d as u64);
                }
                if let Some(b) = bias {
                    mix(b as u64 + 3);
                }
            }
            LayerOp::CausalConv { filter, bias } => {
                mix(2);
                mix(filter as u64);
                for d in param(params, filter)?.values.shape() {
                    mix(*d as u64);
                }
                if let Some(b) = bias {
                    mix(b as u64 + 3);
                }
            }
            LayerOp::Gelu => mix(5),
        }
    }
    Ok(hash)
}

fn affine_dims(w: &ParamTensor) -> Result<(usize, usize), NncoreError> {
    match w.kind {
        ParamKind::Linear { d_in, d_out } => Ok((d_in, d_out)),
        _ => Err(NncoreError::ShapeMismatch {
            context: "affine weight kind",
            expected: vec![],
            got: w.values.shape().to_vec(),
        }),
    }
}

fn conv_dims(f: &ParamTensor) -> Result<(usize, usize, usize), NncoreError> {
    match f.kind {
        ParamKind::ConvFilter { d_in, d_out, d_k } => Ok((d_in, d_out, d_k)),
        _ => Err(NncoreError::ShapeMismatch {
            context: "conv filter kind",
            expected: vec![],
            got: f.values.shape().to_vec(),
        }),
    }
}

// The accumulation order below (ascending input index per output slot)
// is an interface contract: the adapter's scaled execution path repeats
// it exactly so that unit coefficients reproduce these outputs to the
// bit.
fn affine_forward(
    w: &ParamTensor,
    b: Option<&ParamTensor>,
    h: &Tensor,
) -> Result<Tensor, NncoreError> {
    let (d_in, d_out) = affine_dims(w)?;
    if h.shape() != [d_in] {
        return Err(NncoreError::ShapeMismatch {
            context: "affine input",
            expected: vec![d_in],
            got: h.shape().to_vec(),
        });
    }
    let mut z = vec![0.0; d_out];
    let wd = w.values.as_slice();
    let hd = h.as_slice();
    for i in 0..d_in {
        let hi = hd[i];
        let row = &wd[i * d_out..(i + 1) * d_out];
        for o in 0..d_out {
            z[o] += row[o] * hi;
        }
    }
    if let Some(b) = b {
        if b.values.numel() != d_out {
            return Err(NncoreError::ShapeMismatch {
                context: "affine bias",
                expected: vec![d_out],
                got: b.values.shape().to_vec(),
            });
        }
        let bd = b.values.as_slice();
        for o in 0..d_out {
            z[o] += bd[o];
        }
    }
    Tensor::from_vec(&[d_out], z)
}

fn conv_forward(
    f: &ParamTensor,
    b: Option<&ParamTensor>,
    x: &Tensor,
) -> Result<Tensor, NncoreError> {
    let (d_in, d_out, d_k) = conv_dims(f)?;
    if x.shape().len() != 2 || x.shape()[0] != d_in {
        return Err(NncoreError::ShapeMismatch {
            context: "conv input",
            expected: vec![d_in, 0],
            got: x.shape().to_vec(),
        });
    }
    let len = x.shape()[1];
    let fd = f.values.as_slice();
    let xd = x.as_slice();
    let mut z = vec![0.0; d_out * len];
    for o in 0..d_out {
        for p in 0..len {
            let mut acc = 0.0;
            for i in 0..d_in {
                for k in 0..d_k {
                    if p >= k {
                        acc += fd[(i * d_out + o) * d_k + k] * xd[i * len + (p - k)];
                    }
                }
            }
            z[o * len + p] = acc;
        }
    }
    if let Some(b) = b {
        if b.values.numel() != d_out {
            return Err(NncoreError::ShapeMismatch {
                context: "conv bias",
                expected: vec![d_out],
                got: b.values.shape().to_vec(),
            });
        }
        let bd = b.values.as_slice();
        for o in 0..d_out {
            for p in 0..len {
                z[o * len + p] += bd[o];
            }
        }
    }
    Tensor::from_vec(&[d_out, len], z)
}

fn run_chain(
    wiring: &[LayerOp],
    params: &[ParamTensor],
    x: &Tensor,
    mut caches: Option<&mut Vec<StepCache>>,
) -> Result<Tensor, NncoreError> {
    let mut h = x.clone();
    for op in wiring {
        h = match *op {
            LayerOp::Affine { weight, bias } => {
                let w = param(params, weight)?;
                let b = bias.map(|i| param(params, i)).transpose()?;
                let out = affine_forward(w, b, &h)?;
                if let Some(c) = caches.as_deref_mut() {
                    c.push(StepCache::Affine { input: h });
                }
                out
            }
            LayerOp::CausalConv { filter, bias } => {
                let f = param(params, filter)?;
                let b = bias.map(|i| param(params, i)).transpose()?;
                let out = conv_forward(f, b, &h)?;
                if let Some(c) = caches.as_deref_mut() {
                    c.push(StepCache::CausalConv { input: h });
                }
                out
            }
            LayerOp::Gelu => {
                let mut out = h.clone();
                for v in out.as_mut_slice() {
                    *v = gelu(*v);
                }
                if let Some(c) = caches.as_deref_mut() {
                    c.push(StepCache::Gelu { input: h });
                }
                out
            }
        };
    }
    Ok(h)
}

pub fn chain_forward(
    wiring: &[LayerOp],
    params: &[ParamTensor],
    x: &Tensor,
) -> Result<Tensor, NncoreError> {
    run_chain(wiring, params, x, None)
}

pub fn chain_forward_cached(
    wiring: &[LayerOp],
    params: &[ParamTensor],
    x: &Tensor,
) -> Result<(Tensor, ChainCache), NncoreError> {
    let mut steps = Vec::with_capacity(wiring.len());
    let out = run_chain(wiring, params, x, Some(&mut steps))?;
    let cache = ChainCache {
        fingerprint: fingerprint(wiring, params, x.shape())?,
        input_shape: x.shape().to_vec(),
        output_shape: out.shape().to_vec(),
        steps,
    };
    Ok((out, cache))
}

/// Backward through the chain. Accumulates into each parameter's `grad`
/// and returns the gradient with respect to the chain input.
pub fn chain_backward(
    wiring: &[LayerOp],
    params: &mut [ParamTensor],
    cache: &ChainCache,
    upstream: &Tensor,
) -> Result<Tensor, NncoreError> {
    if fingerprint(wiring, params, &cache.input_shape)? != cache.fingerprint
        || cache.steps.len() != wiring.len()
    {
        return Err(NncoreError::StaleCache);
    }
    if upstream.shape() != cache.output_shape.as_slice() {
        return Err(NncoreError::ShapeMismatch {
            context: "chain upstream gradient",
            expected: cache.output_shape.clone(),
            got: upstream.shape().to_vec(),
        });
    }
    let mut g = upstream.clone();
    for (op, step) in wiring.iter().zip(cache.steps.iter()).rev() {
        g = match (*op, step) {
            (LayerOp::Affine { weight, bias }, StepCache::Affine { input }) => {
                let (d_in, d_out) = affine_dims(&params[weight])?;
                let gd = g.as_slice().to_vec();
                let hd = input.as_slice().to_vec();
                let mut dh = vec![0.0; d_in];
                {
                    let wvals = params[weight].values.as_slice().to_vec();
                    let wgrad = params[weight].grad.as_mut_slice();
                    for i in 0..d_in {
                        let mut acc = 0.0;
                        for o in 0..d_out {
                            wgrad[i * d_out + o] += hd[i] * gd[o];
                            acc += wvals[i * d_out + o] * gd[o];
                        }
                        dh[i] = acc;
                    }
                }
                if let Some(bi) = bias {
                    let bgrad = params[bi].grad.as_mut_slice();
                    for o in 0..d_out {
                        bgrad[o] += gd[o];
                    }
                }
                Tensor::from_vec(&[d_in], dh)?
            }
            (LayerOp::CausalConv { filter, bias }, StepCache::CausalConv { input }) => {
                let (d_in, d_out, d_k) = conv_dims(&params[filter])?;
                let len = input.shape()[1];
                let gd = g.as_slice().to_vec();
                let xd = input.as_slice().to_vec();
                let mut dx = vec![0.0; d_in * len];
                {
                    let fvals = params[filter].values.as_slice().to_vec();
                    let fgrad = params[filter].grad.as_mut_slice();
                    for i in 0..d_in {
                        for o in 0..d_out {
                            for k in 0..d_k {
                                let mut acc = 0.0;
                                for p in k..len {
                                    acc += gd[o * len + p] * xd[i * len + (p - k)];
                                }
                                fgrad[(i * d_out + o) * d_k + k] += acc;
                            }
                        }
                    }
                    for i in 0..d_in {
                        for q in 0..len {
                            let mut acc = 0.0;
                            for o in 0..d_out {
                                for k in 0..d_k {
                                    if q + k < len {
                                        acc += fvals[(i * d_out + o) * d_k + k]
                                            * gd[o * len + (q + k)];
                                    }
                                }
                            }
                            dx[i * len + q] = acc;
                        }
                    }
                }
                if let Some(bi) = bias {
                    let bgrad = params[bi].grad.as_mut_slice();
                    for o in 0..d_out {
                        for p in 0..len {
                            bgrad[o] += gd[o * len + p];
                        }
                    }
                }
                Tensor::from_vec(&[d_in, len], dx)?
            }
            (LayerOp::Gelu, StepCache::Gelu { input }) => {
                let mut dh = input.clone();
                let gd = g.as_slice();
                for (v, gv) in dh.as_mut_slice().iter_mut().zip(gd) {
                    *v = gelu_grad(*v) * gv;
                }
                dh
            }
            _ => return Err(NncoreError::StaleCache),
        };
    }
    Ok(g)
}
