use crate::forecasters::{ForecastModel, LayerTypeRegistry};
use crate::nncore::{
    gelu, gelu_grad, revin_denormalize, revin_normalize, LayerOp, NncoreError, ParamKind,
    ParamTensor, RevinState, Tensor, REVIN_EPS,
};

use super::{AdaptationCoefficients, AdapterError, LayerCoeffs};

/// Maps each parameter index to its (layer type id, member position).
/// Member position is the parameter's rank among same-type parameters in
/// index order, which equals its registration order.
pub fn member_indices(params: &[ParamTensor], registry: &LayerTypeRegistry) -> Vec<(usize, usize)> {
    let mut seen = vec![0usize; registry.n_types()];
    params
        .iter()
        .map(|p| {
            let tid = p.layer_type_id;
            let member = seen[tid];
            seen[tid] += 1;
            debug_assert_eq!(registry.entry(tid).members[member], p.name);
            (tid, member)
        })
        .collect()
}

fn check_arity(p: &ParamTensor, alpha: &[f64], beta: &[f64]) -> Result<(), AdapterError> {
    let (a_in, a_out) = p.kind.scale_arity();
    if alpha.len() != a_in {
        return Err(AdapterError::DimMismatch(a_in, alpha.len()));
    }
    if beta.len() != a_out {
        return Err(AdapterError::DimMismatch(a_out, beta.len()));
    }
    Ok(())
}

/// Rescales one parameter tensor: weights by the rank-one grid α[i]·β[o]
/// (every kernel slice of a conv filter gets the same grid), biases by β
/// alone. The input tensor is untouched.
pub fn materialize_adapted(
    p: &ParamTensor,
    alpha: &[f64],
    beta: &[f64],
) -> Result<Tensor, AdapterError> {
    check_arity(p, alpha, beta)?;
    let mut out = p.values.clone();
    match p.kind {
        ParamKind::Linear { d_in, d_out } => {
            let data = out.as_mut_slice();
            for i in 0..d_in {
                for o in 0..d_out {
                    data[i * d_out + o] *= alpha[i] * beta[o];
                }
            }
        }
        ParamKind::Bias { d_out } => {
            let data = out.as_mut_slice();
            for o in 0..d_out {
                data[o] *= beta[o];
            }
        }
        ParamKind::ConvFilter { d_in, d_out, d_k } => {
            let data = out.as_mut_slice();
            for i in 0..d_in {
                for o in 0..d_out {
                    let scale = alpha[i] * beta[o];
                    for k in 0..d_k {
                        data[(i * d_out + o) * d_k + k] *= scale;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Materialized copy of a whole parameter list under one coefficient
/// set, the reference the functional path is tested against.
pub fn materialize_params(
    params: &[ParamTensor],
    mapping: &[(usize, usize)],
    coeffs: &AdaptationCoefficients,
) -> Result<Vec<ParamTensor>, AdapterError> {
    params
        .iter()
        .zip(mapping)
        .map(|(p, &(tid, member))| {
            let c = coeffs.layer(tid, member);
            let values = materialize_adapted(p, &c.alpha, &c.beta)?;
            let mut out = p.clone();
            out.values = values;
            Ok(out)
        })
        .collect()
}

enum AdaptedStep {
    Affine { input: Tensor, acc: Vec<f64> },
    CausalConv { input: Tensor, acc: Vec<f64> },
    Gelu { input: Tensor },
}

/// Activations of one adapted chain run.
pub struct AdaptedChainCache {
    steps: Vec<AdaptedStep>,
    output_shape: Vec<usize>,
}

fn layer_coeffs<'c>(
    coeffs: &'c AdaptationCoefficients,
    mapping: &[(usize, usize)],
    param_idx: usize,
) -> &'c LayerCoeffs {
    let (tid, member) = mapping[param_idx];
    coeffs.layer(tid, member)
}

fn affine_dims(p: &ParamTensor) -> Result<(usize, usize), AdapterError> {
    match p.kind {
        ParamKind::Linear { d_in, d_out } => Ok((d_in, d_out)),
        _ => Err(AdapterError::Nncore(NncoreError::ShapeMismatch {
            context: "adapted affine weight kind",
            expected: vec![],
            got: p.values.shape().to_vec(),
        })),
    }
}

fn conv_dims(p: &ParamTensor) -> Result<(usize, usize, usize), AdapterError> {
    match p.kind {
        ParamKind::ConvFilter { d_in, d_out, d_k } => Ok((d_in, d_out, d_k)),
        _ => Err(AdapterError::Nncore(NncoreError::ShapeMismatch {
            context: "adapted conv filter kind",
            expected: vec![],
            got: p.values.shape().to_vec(),
        })),
    }
}

// The scaled execution path repeats nncore's accumulation order exactly:
// with every coefficient equal to 1.0 each multiply is an IEEE identity,
// so outputs and parameter gradients match the plain path bit for bit.
fn run_adapted(
    wiring: &[LayerOp],
    params: &[ParamTensor],
    mapping: &[(usize, usize)],
    coeffs: &AdaptationCoefficients,
    x: &Tensor,
    mut caches: Option<&mut Vec<AdaptedStep>>,
) -> Result<Tensor, AdapterError> {
    let mut h = x.clone();
    for op in wiring {
        h = match *op {
            LayerOp::Affine { weight, bias } => {
                let w = &params[weight];
                let (d_in, d_out) = affine_dims(w)?;
                let wc = layer_coeffs(coeffs, mapping, weight);
                if h.shape() != [d_in] {
                    return Err(AdapterError::Nncore(NncoreError::ShapeMismatch {
                        context: "adapted affine input",
                        expected: vec![d_in],
                        got: h.shape().to_vec(),
                    }));
                }
                check_arity(w, &wc.alpha, &wc.beta)?;
                let hd = h.as_slice();
                let hp: Vec<f64> = (0..d_in).map(|i| wc.alpha[i] * hd[i]).collect();
                let wd = w.values.as_slice();
                let mut acc = vec![0.0; d_out];
                for i in 0..d_in {
                    let hi = hp[i];
                    let row = &wd[i * d_out..(i + 1) * d_out];
                    for o in 0..d_out {
                        acc[o] += row[o] * hi;
                    }
                }
                let mut z = vec![0.0; d_out];
                for o in 0..d_out {
                    z[o] = wc.beta[o] * acc[o];
                }
                if let Some(bi) = bias {
                    let b = &params[bi];
                    let bc = layer_coeffs(coeffs, mapping, bi);
                    check_arity(b, &bc.alpha, &bc.beta)?;
                    let bd = b.values.as_slice();
                    for o in 0..d_out {
                        z[o] += bc.beta[o] * bd[o];
                    }
                }
                if let Some(c) = caches.as_deref_mut() {
                    c.push(AdaptedStep::Affine { input: h, acc });
                }
                Tensor::from_vec(&[d_out], z).map_err(AdapterError::Nncore)?
            }
            LayerOp::CausalConv { filter, bias } => {
                let f = &params[filter];
                let (d_in, d_out, d_k) = conv_dims(f)?;
                let fc = layer_coeffs(coeffs, mapping, filter);
                if h.shape().len() != 2 || h.shape()[0] != d_in {
                    return Err(AdapterError::Nncore(NncoreError::ShapeMismatch {
                        context: "adapted conv input",
                        expected: vec![d_in, 0],
                        got: h.shape().to_vec(),
                    }));
                }
                check_arity(f, &fc.alpha, &fc.beta)?;
                let len = h.shape()[1];
                let xd = h.as_slice();
                let mut xp = vec![0.0; d_in * len];
                for i in 0..d_in {
                    for q in 0..len {
                        xp[i * len + q] = fc.alpha[i] * xd[i * len + q];
                    }
                }
                let fd = f.values.as_slice();
                let mut acc = vec![0.0; d_out * len];
                for o in 0..d_out {
                    for p in 0..len {
                        let mut a = 0.0;
                        for i in 0..d_in {
                            for k in 0..d_k {
                                if p >= k {
                                    a += fd[(i * d_out + o) * d_k + k] * xp[i * len + (p - k)];
                                }
                            }
                        }
                        acc[o * len + p] = a;
                    }
                }
                let mut z = vec![0.0; d_out * len];
                for o in 0..d_out {
                    for p in 0..len {
                        z[o * len + p] = fc.beta[o] * acc[o * len + p];
                    }
                }
                if let Some(bi) = bias {
                    let b = &params[bi];
                    let bc = layer_coeffs(coeffs, mapping, bi);
                    check_arity(b, &bc.alpha, &bc.beta)?;
                    let bd = b.values.as_slice();
                    for o in 0..d_out {
                        for p in 0..len {
                            z[o * len + p] += bc.beta[o] * bd[o];
                        }
                    }
                }
                if let Some(c) = caches.as_deref_mut() {
                    c.push(AdaptedStep::CausalConv { input: h, acc });
                }
                Tensor::from_vec(&[d_out, len], z).map_err(AdapterError::Nncore)?
            }
            LayerOp::Gelu => {
                let mut out = h.clone();
                for v in out.as_mut_slice() {
                    *v = gelu(*v);
                }
                if let Some(c) = caches.as_deref_mut() {
                    c.push(AdaptedStep::Gelu { input: h });
                }
                out
            }
        };
    }
    Ok(h)
}

pub fn adapted_chain_forward(
    wiring: &[LayerOp],
    params: &[ParamTensor],
    mapping: &[(usize, usize)],
    coeffs: &AdaptationCoefficients,
    x: &Tensor,
) -> Result<Tensor, AdapterError> {
    run_adapted(wiring, params, mapping, coeffs, x, None)
}

pub fn adapted_chain_forward_cached(
    wiring: &[LayerOp],
    params: &[ParamTensor],
    mapping: &[(usize, usize)],
    coeffs: &AdaptationCoefficients,
    x: &Tensor,
) -> Result<(Tensor, AdaptedChainCache), AdapterError> {
    let mut steps = Vec::with_capacity(wiring.len());
    let out = run_adapted(wiring, params, mapping, coeffs, x, Some(&mut steps))?;
    let cache = AdaptedChainCache {
        steps,
        output_shape: out.shape().to_vec(),
    };
    Ok((out, cache))
}

/// Backward through the adapted chain. Base-parameter gradients
/// accumulate into `params[..].grad`; coefficient gradients accumulate
/// into `coeff_grads` (same layout as the coefficients, usually started
/// from `zeroed_like`). Returns the gradient with respect to the input.
pub fn adapted_chain_backward(
    wiring: &[LayerOp],
    params: &mut [ParamTensor],
    mapping: &[(usize, usize)],
    coeffs: &AdaptationCoefficients,
    coeff_grads: &mut AdaptationCoefficients,
    cache: &AdaptedChainCache,
    upstream: &Tensor,
) -> Result<Tensor, AdapterError> {
    if cache.steps.len() != wiring.len() {
        return Err(AdapterError::Nncore(NncoreError::StaleCache));
    }
    if upstream.shape() != cache.output_shape.as_slice() {
        return Err(AdapterError::Nncore(NncoreError::ShapeMismatch {
            context: "adapted chain upstream gradient",
            expected: cache.output_shape.clone(),
            got: upstream.shape().to_vec(),
        }));
    }
    let mut g = upstream.clone();
    for (op, step) in wiring.iter().zip(cache.steps.iter()).rev() {
        g = match (*op, step) {
            (LayerOp::Affine { weight, bias }, AdaptedStep::Affine { input, acc }) => {
                let (d_in, d_out) = affine_dims(&params[weight])?;
                let gd = g.as_slice().to_vec();
                let hd = input.as_slice().to_vec();
                let wc = layer_coeffs(coeffs, mapping, weight).clone();
                let hp: Vec<f64> = (0..d_in).map(|i| wc.alpha[i] * hd[i]).collect();
                let mut dacc = vec![0.0; d_out];
                {
                    let (tid, member) = mapping[weight];
                    let cg = &mut coeff_grads.per_type[tid][member];
                    for o in 0..d_out {
                        cg.beta[o] += gd[o] * acc[o];
                        dacc[o] = gd[o] * wc.beta[o];
                    }
                }
                if let Some(bi) = bias {
                    let bc = layer_coeffs(coeffs, mapping, bi).clone();
                    let bd = params[bi].values.as_slice().to_vec();
                    let (tid, member) = mapping[bi];
                    let cg = &mut coeff_grads.per_type[tid][member];
                    for o in 0..d_out {
                        cg.beta[o] += gd[o] * bd[o];
                    }
                    let bgrad = params[bi].grad.as_mut_slice();
                    for o in 0..d_out {
                        bgrad[o] += gd[o] * bc.beta[o];
                    }
                }
                let mut dhp = vec![0.0; d_in];
                {
                    let wvals = params[weight].values.as_slice().to_vec();
                    let wgrad = params[weight].grad.as_mut_slice();
                    for i in 0..d_in {
                        let mut a = 0.0;
                        for o in 0..d_out {
                            wgrad[i * d_out + o] += hp[i] * dacc[o];
                            a += wvals[i * d_out + o] * dacc[o];
                        }
                        dhp[i] = a;
                    }
                }
                let mut dh = vec![0.0; d_in];
                {
                    let (tid, member) = mapping[weight];
                    let cg = &mut coeff_grads.per_type[tid][member];
                    for i in 0..d_in {
                        cg.alpha[i] += dhp[i] * hd[i];
                        dh[i] = dhp[i] * wc.alpha[i];
                    }
                }
                Tensor::from_vec(&[d_in], dh).map_err(AdapterError::Nncore)?
            }
            (LayerOp::CausalConv { filter, bias }, AdaptedStep::CausalConv { input, acc }) => {
                let (d_in, d_out, d_k) = conv_dims(&params[filter])?;
                let len = input.shape()[1];
                let gd = g.as_slice().to_vec();
                let xd = input.as_slice().to_vec();
                let fc = layer_coeffs(coeffs, mapping, filter).clone();
                let mut xp = vec![0.0; d_in * len];
                for i in 0..d_in {
                    for q in 0..len {
                        xp[i * len + q] = fc.alpha[i] * xd[i * len + q];
                    }
                }
                let mut dacc = vec![0.0; d_out * len];
                {
                    let (tid, member) = mapping[filter];
                    let cg = &mut coeff_grads.per_type[tid][member];
                    for o in 0..d_out {
                        for p in 0..len {
                            cg.beta[o] += gd[o * len + p] * acc[o * len + p];
                            dacc[o * len + p] = gd[o * len + p] * fc.beta[o];
                        }
                    }
                }
                if let Some(bi) = bias {
                    let bc = layer_coeffs(coeffs, mapping, bi).clone();
                    let bd = params[bi].values.as_slice().to_vec();
                    let (tid, member) = mapping[bi];
                    let cg = &mut coeff_grads.per_type[tid][member];
                    for o in 0..d_out {
                        for p in 0..len {
                            cg.beta[o] += gd[o * len + p] * bd[o];
                        }
                    }
                    let bgrad = params[bi].grad.as_mut_slice();
                    for o in 0..d_out {
                        for p in 0..len {
                            bgrad[o] += gd[o * len + p] * bc.beta[o];
                        }
                    }
                }
                let mut dxp = vec![0.0; d_in * len];
                {
                    let fvals = params[filter].values.as_slice().to_vec();
                    let fgrad = params[filter].grad.as_mut_slice();
                    for i in 0..d_in {
                        for o in 0..d_out {
                            for k in 0..d_k {
                                let mut a = 0.0;
                                for p in k..len {
                                    a += dacc[o * len + p] * xp[i * len + (p - k)];
                                }
                                fgrad[(i * d_out + o) * d_k + k] += a;
                            }
                        }
                    }
                    for i in 0..d_in {
                        for q in 0..len {
                            let mut a = 0.0;
                            for o in 0..d_out {
                                for k in 0..d_k {
                                    if q + k < len {
                                        a += fvals[(i * d_out + o) * d_k + k]
                                            * dacc[o * len + (q + k)];
                                    }
                                }
                            }
                            dxp[i * len + q] = a;
                        }
                    }
                }
                let mut dx = vec![0.0; d_in * len];
                {
                    let (tid, member) = mapping[filter];
                    let cg = &mut coeff_grads.per_type[tid][member];
                    for i in 0..d_in {
                        for q in 0..len {
                            cg.alpha[i] += dxp[i * len + q] * xd[i * len + q];
                            dx[i * len + q] = dxp[i * len + q] * fc.alpha[i];
                        }
                    }
                }
                Tensor::from_vec(&[d_in, len], dx).map_err(AdapterError::Nncore)?
            }
            (LayerOp::Gelu, AdaptedStep::Gelu { input }) => {
                let mut dh = input.clone();
                let gd = g.as_slice();
                for (v, gv) in dh.as_mut_slice().iter_mut().zip(gd) {
                    *v = gelu_grad(*v) * gv;
                }
                dh
            }
            _ => return Err(AdapterError::Nncore(NncoreError::StaleCache)),
        };
    }
    Ok(g)
}

fn check_model_coeffs(
    model: &ForecastModel,
    coeffs: &AdaptationCoefficients,
) -> Result<(), AdapterError> {
    let registry = model.registry();
    if coeffs.per_type.len() != registry.n_types() {
        return Err(AdapterError::RegistryMismatch);
    }
    for (tid, members) in coeffs.per_type.iter().enumerate() {
        if members.len() != registry.entry(tid).members.len() {
            return Err(AdapterError::RegistryMismatch);
        }
    }
    Ok(())
}

/// Activations of one adapted model forward.
pub struct AdaptedModelCache {
    revin: Option<RevinState>,
    rows: Vec<AdaptedChainCache>,
}

/// Forecast under functionally applied coefficients: per variate, the
/// scaled chain runs against the unchanged base parameters. RevIN wraps
/// the chain exactly as in the plain forward and is never adapted.
pub fn adapted_model_forward(
    model: &ForecastModel,
    coeffs: &AdaptationCoefficients,
    x: &Tensor,
) -> Result<Tensor, AdapterError> {
    check_model_coeffs(model, coeffs)?;
    if x.shape() != [model.n_variates, model.lookback] {
        return Err(AdapterError::Nncore(NncoreError::ShapeMismatch {
            context: "adapted model input",
            expected: vec![model.n_variates, model.lookback],
            got: x.shape().to_vec(),
        }));
    }
    let mapping = member_indices(&model.params, model.registry());
    let (xin, state) = if model.revin {
        let (n, s) = revin_normalize(x, REVIN_EPS).map_err(AdapterError::Nncore)?;
        (n, Some(s))
    } else {
        (x.clone(), None)
    };
    let mut out = Tensor::zeros(&[model.n_variates, model.horizon]);
    for v in 0..model.n_variates {
        let row = Tensor::from_slice(xin.row(v));
        let z = adapted_chain_forward(model.wiring(), &model.params, &mapping, coeffs, &row)?;
        out.row_mut(v).copy_from_slice(z.as_slice());
    }
    match state {
        Some(s) => revin_denormalize(&out, &s).map_err(AdapterError::Nncore),
        None => Ok(out),
    }
}

pub fn adapted_model_forward_cached(
    model: &ForecastModel,
    coeffs: &AdaptationCoefficients,
    x: &Tensor,
) -> Result<(Tensor, AdaptedModelCache), AdapterError> {
    check_model_coeffs(model, coeffs)?;
    if x.shape() != [model.n_variates, model.lookback] {
        return Err(AdapterError::Nncore(NncoreError::ShapeMismatch {
            context: "adapted model input",
            expected: vec![model.n_variates, model.lookback],
            got: x.shape().to_vec(),
        }));
    }
    let mapping = member_indices(&model.params, model.registry());
    let (xin, state) = if model.revin {
        let (n, s) = revin_normalize(x, REVIN_EPS).map_err(AdapterError::Nncore)?;
        (n, Some(s))
    } else {
        (x.clone(), None)
    };
    let mut out = Tensor::zeros(&[model.n_variates, model.horizon]);
    let mut rows = Vec::with_capacity(model.n_variates);
    for v in 0..model.n_variates {
        let row = Tensor::from_slice(xin.row(v));
        let (z, cache) =
            adapted_chain_forward_cached(model.wiring(), &model.params, &mapping, coeffs, &row)?;
        out.row_mut(v).copy_from_slice(z.as_slice());
        rows.push(cache);
    }
    let cache = AdaptedModelCache {
        revin: state.clone(),
        rows,
    };
    match state {
        Some(s) => Ok((revin_denormalize(&out, &s).map_err(AdapterError::Nncore)?, cache)),
        None => Ok((out, cache)),
    }
}

/// Backward of the adapted model forward. Accumulates base-parameter
/// gradients in the model and returns the coefficient gradients.
pub fn adapted_model_backward(
    model: &mut ForecastModel,
    coeffs: &AdaptationCoefficients,
    cache: &AdaptedModelCache,
    upstream: &Tensor,
) -> Result<AdaptationCoefficients, AdapterError> {
    check_model_coeffs(model, coeffs)?;
    assert_eq!(upstream.shape(), [model.n_variates, model.horizon]);
    assert_eq!(cache.rows.len(), model.n_variates, "cache arity");
    let mapping = member_indices(&model.params, model.registry());
    let wiring = model.wiring().to_vec();
    let mut coeff_grads = coeffs.zeroed_like();
    for v in 0..model.n_variates {
        let mut g = upstream.row(v).to_vec();
        if let Some(state) = &cache.revin {
            let d = state.divisor(v);
            for gi in g.iter_mut() {
                *gi *= d;
            }
        }
        let g = Tensor::from_vec(&[model.horizon], g).map_err(AdapterError::Nncore)?;
        adapted_chain_backward(
            &wiring,
            &mut model.params,
            &mapping,
            coeffs,
            &mut coeff_grads,
            &cache.rows[v],
            &g,
        )?;
    }
    Ok(coeff_grads)
}

/// Batched functional application: item j runs under `coeffs[j]`. Base
/// parameters are shared and never mutated.
pub fn adapted_forward(
    model: &ForecastModel,
    coeffs: &[AdaptationCoefficients],
    inputs: &[Tensor],
) -> Result<Vec<Tensor>, AdapterError> {
    if coeffs.len() != inputs.len() {
        return Err(AdapterError::BatchArityMismatch(coeffs.len(), inputs.len()));
    }
    coeffs
        .iter()
        .zip(inputs)
        .map(|(c, x)| adapted_model_forward(model, c, x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasters::{build_linear, build_mlp};
    use crate::nncore::params_checksum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::from_vec(shape, data).unwrap()
    }

    fn random_coeffs<R: Rng>(model: &ForecastModel, r: &mut R) -> AdaptationCoefficients {
        let mut c = AdaptationCoefficients::identity(model.registry());
        for members in c.per_type.iter_mut() {
            for lc in members.iter_mut() {
                for a in lc.alpha.iter_mut() {
                    *a = r.gen_range(0.25..2.0);
                }
                for b in lc.beta.iter_mut() {
                    *b = r.gen_range(0.25..2.0);
                }
            }
        }
        c
    }

    fn random_input<R: Rng>(n: usize, l: usize, r: &mut R) -> Tensor {
        let mut x = Tensor::zeros(&[n, l]);
        for v in x.as_mut_slice() {
            *v = r.gen_range(-2.0..2.0);
        }
        x
    }

    #[test]
    fn hand_materialization_of_a_two_by_two_linear() {
        let p = ParamTensor::new(
            "w",
            ParamKind::Linear { d_in: 2, d_out: 2 },
            t(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap();
        let out = materialize_adapted(&p, &[2.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 12.0, 3.0, 12.0]);
        assert_eq!(p.values.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn unit_coefficients_materialize_bit_identically() {
        let mut r = rng(1);
        let p = ParamTensor::init_uniform(
            "w",
            ParamKind::Linear { d_in: 5, d_out: 3 },
            &mut r,
        );
        let out = materialize_adapted(&p, &[1.0; 5], &[1.0; 3]).unwrap();
        assert_eq!(out.as_slice(), p.values.as_slice());
    }

    #[test]
    fn bias_materialization_uses_beta_only() {
        let p = ParamTensor::new(
            "b",
            ParamKind::Bias { d_out: 3 },
            t(&[3], vec![1.0, -2.0, 0.5]),
        )
        .unwrap();
        let out = materialize_adapted(&p, &[], &[2.0, 3.0, -1.0]).unwrap();
        assert_eq!(out.as_slice(), &[2.0, -6.0, -0.5]);
        let err = materialize_adapted(&p, &[1.0], &[2.0, 3.0, -1.0]).unwrap_err();
        assert!(matches!(err, AdapterError::DimMismatch(0, 1)));
    }

    #[test]
    fn conv_slices_share_one_rank_one_grid() {
        let (d_in, d_out, d_k) = (2, 2, 3);
        let mut r = rng(2);
        let p = ParamTensor::init_uniform(
            "f",
            ParamKind::ConvFilter { d_in, d_out, d_k },
            &mut r,
        );
        let alpha = [1.5, -0.5];
        let beta = [2.0, 0.25];
        let out = materialize_adapted(&p, &alpha, &beta).unwrap();
        // Slice-by-slice reference: fix k, scale the d_in×d_out matrix.
        for k in 0..d_k {
            for i in 0..d_in {
                for o in 0..d_out {
                    let idx = (i * d_out + o) * d_k + k;
                    let want = alpha[i] * beta[o] * p.values.as_slice()[idx];
                    assert!((out.as_slice()[idx] - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn wrong_alpha_length_is_a_dim_mismatch() {
        let p = ParamTensor::zeros("w", ParamKind::Linear { d_in: 4, d_out: 2 });
        let err = materialize_adapted(&p, &[1.0; 3], &[1.0; 2]).unwrap_err();
        assert!(matches!(err, AdapterError::DimMismatch(4, 3)));
    }

    #[test]
    fn identity_coefficients_reproduce_plain_forward_bit_for_bit() {
        let mut r = rng(3);
        for revin in [false, true] {
            let model = build_mlp(3, 12, 4, 8, revin, &mut r);
            let coeffs = AdaptationCoefficients::identity(model.registry());
            for trial in 0..10 {
                let x = random_input(3, 12, &mut r);
                let plain = model.forward(&x).unwrap();
                let adapted = adapted_model_forward(&model, &coeffs, &x).unwrap();
                assert_eq!(
                    plain.as_slice(),
                    adapted.as_slice(),
                    "revin={revin} trial={trial}"
                );
            }
        }
    }

    #[test]
    fn functional_path_matches_materialized_path() {
        let mut r = rng(4);
        let model = build_mlp(2, 10, 5, 6, false, &mut r);
        let mapping = member_indices(&model.params, model.registry());
        for trial in 0..20 {
            let coeffs = random_coeffs(&model, &mut r);
            let x = random_input(2, 10, &mut r);
            let functional = adapted_model_forward(&model, &coeffs, &x).unwrap();
            let mut twin = model.clone();
            twin.params = materialize_params(&model.params, &mapping, &coeffs).unwrap();
            let materialized = twin.forward(&x).unwrap();
            for (a, b) in functional.as_slice().iter().zip(materialized.as_slice()) {
                let denom = a.abs().max(b.abs()).max(1e-9);
                assert!((a - b).abs() / denom < 1e-6, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn adapted_conv_chain_matches_materialized_path() {
        let mut r = rng(5);
        let mut registry = LayerTypeRegistry::new();
        let mut params = vec![
            ParamTensor::init_uniform(
                "c.f",
                ParamKind::ConvFilter {
                    d_in: 2,
                    d_out: 3,
                    d_k: 3,
                },
                &mut r,
            ),
            ParamTensor::init_uniform("c.b", ParamKind::Bias { d_out: 3 }, &mut r),
        ];
        for p in params.iter_mut() {
            p.layer_type_id = registry.assign(&p.name, p.kind);
        }
        let wiring = vec![
            LayerOp::CausalConv {
                filter: 0,
                bias: Some(1),
            },
            LayerOp::Gelu,
        ];
        let mapping = member_indices(&params, &registry);
        let mut coeffs = AdaptationCoefficients::identity(&registry);
        for members in coeffs.per_type.iter_mut() {
            for lc in members.iter_mut() {
                for a in lc.alpha.iter_mut() {
                    *a = r.gen_range(0.5..1.5);
                }
                for b in lc.beta.iter_mut() {
                    *b = r.gen_range(0.5..1.5);
                }
            }
        }
        let mut x = Tensor::zeros(&[2, 7]);
        for v in x.as_mut_slice() {
            *v = r.gen_range(-1.0..1.0);
        }
        let functional = adapted_chain_forward(&wiring, &params, &mapping, &coeffs, &x).unwrap();
        let materialized_params = materialize_params(&params, &mapping, &coeffs).unwrap();
        let materialized =
            crate::nncore::chain_forward(&wiring, &materialized_params, &x).unwrap();
        for (a, b) in functional.as_slice().iter().zip(materialized.as_slice()) {
            let denom = a.abs().max(b.abs()).max(1e-9);
            assert!((a - b).abs() / denom < 1e-6);
        }
    }

    #[test]
    fn batched_items_run_under_their_own_coefficients() {
        let mut r = rng(6);
        let model = build_linear(2, 8, 3, false, &mut r);
        let mapping = member_indices(&model.params, model.registry());
        let c0 = random_coeffs(&model, &mut r);
        let c1 = random_coeffs(&model, &mut r);
        let x0 = random_input(2, 8, &mut r);
        let x1 = random_input(2, 8, &mut r);
        let outs = adapted_forward(
            &model,
            &[c0.clone(), c1.clone()],
            &[x0.clone(), x1.clone()],
        )
        .unwrap();
        for (c, x, out) in [(&c0, &x0, &outs[0]), (&c1, &x1, &outs[1])] {
            let mut twin = model.clone();
            twin.params = materialize_params(&model.params, &mapping, c).unwrap();
            let want = twin.forward(x).unwrap();
            for (a, b) in out.as_slice().iter().zip(want.as_slice()) {
                let denom = a.abs().max(b.abs()).max(1e-9);
                assert!((a - b).abs() / denom < 1e-6);
            }
        }
    }

    #[test]
    fn batch_arity_mismatch_is_reported() {
        let mut r = rng(7);
        let model = build_linear(1, 4, 2, false, &mut r);
        let coeffs = AdaptationCoefficients::identity(model.registry());
        let x = random_input(1, 4, &mut r);
        let err = adapted_forward(&model, &[coeffs], &[x.clone(), x]).unwrap_err();
        assert!(matches!(err, AdapterError::BatchArityMismatch(1, 2)));
    }

    #[test]
    fn base_parameters_stay_bit_identical_through_adapted_runs() {
        let mut r = rng(8);
        let model = build_mlp(2, 9, 4, 5, true, &mut r);
        let before = params_checksum(&model.params);
        for _ in 0..5 {
            let coeffs = random_coeffs(&model, &mut r);
            let x = random_input(2, 9, &mut r);
            adapted_model_forward(&model, &coeffs, &x).unwrap();
        }
        assert_eq!(params_checksum(&model.params), before);
    }

    #[test]
    fn foreign_coefficient_layout_is_rejected() {
        let mut r = rng(9);
        let model = build_mlp(1, 6, 2, 4, false, &mut r);
        let other = build_linear(1, 6, 2, false, &mut r);
        let coeffs = AdaptationCoefficients::identity(other.registry());
        let x = random_input(1, 6, &mut r);
        let err = adapted_model_forward(&model, &coeffs, &x).unwrap_err();
        assert!(matches!(err, AdapterError::RegistryMismatch));
    }

    #[test]
    fn unit_coefficient_backward_reproduces_plain_parameter_grads() {
        let mut r = rng(10);
        for revin in [false, true] {
            let mut plain = build_mlp(2, 10, 4, 6, revin, &mut r);
            let mut adapted = plain.clone();
            let coeffs = AdaptationCoefficients::identity(plain.registry());
            let x = random_input(2, 10, &mut r);
            let mut upstream = Tensor::zeros(&[2, 4]);
            for v in upstream.as_mut_slice() {
                *v = r.gen_range(-1.0..1.0);
            }
            let (_, pc) = plain.forward_cached(&x).unwrap();
            plain.backward(&pc, &upstream).unwrap();
            let (_, ac) = adapted_model_forward_cached(&adapted, &coeffs, &x).unwrap();
            let cg = adapted_model_backward(&mut adapted, &coeffs, &ac, &upstream).unwrap();
            for (pp, ap) in plain.params.iter().zip(adapted.params.iter()) {
                assert_eq!(
                    pp.grad.as_slice(),
                    ap.grad.as_slice(),
                    "revin={revin} param {}",
                    pp.name
                );
            }
            assert!(cg.all_finite());
        }
    }

    // Finite differences for base parameters and coefficients through the
    // functional path; loss = 0.5‖output‖².
    fn fd_adapted_model(model: &mut ForecastModel, coeffs: &AdaptationCoefficients, x: &Tensor) {
        let loss_of_model = |m: &ForecastModel, c: &AdaptationCoefficients| {
            let y = adapted_model_forward(m, c, x).unwrap();
            y.as_slice().iter().map(|v| 0.5 * v * v).sum::<f64>()
        };
        model.zero_grads();
        let (y, cache) = adapted_model_forward_cached(model, coeffs, x).unwrap();
        let cg = adapted_model_backward(model, coeffs, &cache, &y).unwrap();
        let eps = 1e-6;
        let check = |fd: f64, analytic: f64, what: &str| {
            let denom = fd.abs().max(analytic.abs()).max(1e-3);
            assert!(
                ((fd - analytic) / denom).abs() < 1e-4,
                "{what}: fd {fd} vs analytic {analytic}"
            );
        };
        for pi in 0..model.params.len() {
            for k in 0..model.params[pi].values.numel() {
                let orig = model.params[pi].values.as_slice()[k];
                model.params[pi].values.as_mut_slice()[k] = orig + eps;
                let hi = loss_of_model(model, coeffs);
                model.params[pi].values.as_mut_slice()[k] = orig - eps;
                let lo = loss_of_model(model, coeffs);
                model.params[pi].values.as_mut_slice()[k] = orig;
                check(
                    (hi - lo) / (2.0 * eps),
                    model.params[pi].grad.as_slice()[k],
                    &format!("theta {pi}[{k}]"),
                );
            }
        }
        let mut probe = coeffs.clone();
        for tid in 0..probe.per_type.len() {
            for m in 0..probe.per_type[tid].len() {
                // field 0 probes alpha, field 1 probes beta
                for field in 0..2usize {
                    let len = if field == 0 {
                        probe.per_type[tid][m].alpha.len()
                    } else {
                        probe.per_type[tid][m].beta.len()
                    };
                    for k in 0..len {
                        let set = |p: &mut AdaptationCoefficients, v: f64| {
                            if field == 0 {
                                p.per_type[tid][m].alpha[k] = v;
                            } else {
                                p.per_type[tid][m].beta[k] = v;
                            }
                        };
                        let orig = if field == 0 {
                            probe.per_type[tid][m].alpha[k]
                        } else {
                            probe.per_type[tid][m].beta[k]
                        };
                        set(&mut probe, orig + eps);
                        let hi = loss_of_model(model, &probe);
                        set(&mut probe, orig - eps);
                        let lo = loss_of_model(model, &probe);
                        set(&mut probe, orig);
                        let analytic = if field == 0 {
                            cg.per_type[tid][m].alpha[k]
                        } else {
                            cg.per_type[tid][m].beta[k]
                        };
                        check(
                            (hi - lo) / (2.0 * eps),
                            analytic,
                            &format!("coeff t{tid} m{m} f{field} [{k}]"),
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn adapted_backward_matches_finite_differences() {
        let mut r = rng(11);
        let mut model = build_mlp(2, 6, 3, 4, false, &mut r);
        let coeffs = random_coeffs(&model, &mut r);
        let x = random_input(2, 6, &mut r);
        fd_adapted_model(&mut model, &coeffs, &x);
    }

    #[test]
    fn adapted_backward_matches_finite_differences_under_revin() {
        let mut r = rng(12);
        let mut model = build_linear(2, 7, 3, true, &mut r);
        let coeffs = random_coeffs(&model, &mut r);
        let x = random_input(2, 7, &mut r);
        fd_adapted_model(&mut model, &coeffs, &x);
    }

    #[test]
    fn theta_gradient_through_functional_path_matches_materialized_autodiff() {
        // d(loss)/dθ via Eq.5 equals α[i]β[o]·d(loss)/dθ̂ via Eq.4; the
        // materialized model's own backward provides the reference.
        let mut r = rng(13);
        let model = build_linear(1, 5, 4, false, &mut r);
        let mapping = member_indices(&model.params, model.registry());
        let coeffs = random_coeffs(&model, &mut r);
        let x = random_input(1, 5, &mut r);
        let mut functional = model.clone();
        let (y, cache) = adapted_model_forward_cached(&functional, &coeffs, &x).unwrap();
        adapted_model_backward(&mut functional, &coeffs, &cache, &y).unwrap();
        let mut materialized = model.clone();
        materialized.params = materialize_params(&model.params, &mapping, &coeffs).unwrap();
        let (ym, cm) = materialized.forward_cached(&x).unwrap();
        materialized.backward(&cm, &ym).unwrap();
        for (idx, (fp, mp)) in functional
            .params
            .iter()
            .zip(materialized.params.iter())
            .enumerate()
        {
            let (tid, member) = mapping[idx];
            let lc = coeffs.layer(tid, member);
            for (j, (fg, mg)) in fp
                .grad
                .as_slice()
                .iter()
                .zip(mp.grad.as_slice())
                .enumerate()
            {
                let scaled = match fp.kind {
                    ParamKind::Linear { d_out, .. } => {
                        let i = j / d_out;
                        let o = j % d_out;
                        mg * lc.alpha[i] * lc.beta[o]
                    }
                    ParamKind::Bias { .. } => mg * lc.beta[j],
                    ParamKind::ConvFilter { d_out, d_k, .. } => {
                        let i = j / (d_out * d_k);
                        let o = (j / d_k) % d_out;
                        mg * lc.alpha[i] * lc.beta[o]
                    }
                };
                let denom = fg.abs().max(scaled.abs()).max(1e-6);
                assert!(
                    (fg - scaled).abs() / denom < 1e-4,
                    "param {} entry {j}",
                    fp.name
                );
            }
        }
    }
}
