use rand::Rng;

use crate::forecasters::LayerTypeRegistry;
use crate::nncore::{sigmoid, ParamKind, ParamTensor, Tensor};

use super::AdapterError;

/// Scales for one parameter tensor: `alpha` over the input dimension
/// (empty for biases), `beta` over the output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCoeffs {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// One coefficient set per registry member, indexed `[type_id][member]`
/// in registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationCoefficients {
    pub per_type: Vec<Vec<LayerCoeffs>>,
}

impl AdaptationCoefficients {
    pub fn layer(&self, type_id: usize, member: usize) -> &LayerCoeffs {
        &self.per_type[type_id][member]
    }

    /// All-ones coefficients for a registry: the adaptation identity.
    pub fn identity(registry: &LayerTypeRegistry) -> Self {
        let per_type = registry
            .entries()
            .iter()
            .map(|e| {
                let (a_in, a_out) = e.kind.scale_arity();
                e.members
                    .iter()
                    .map(|_| LayerCoeffs {
                        alpha: vec![1.0; a_in],
                        beta: vec![1.0; a_out],
                    })
                    .collect()
            })
            .collect();
        AdaptationCoefficients { per_type }
    }

    /// Same layout, all entries zero; used as a gradient accumulator.
    pub fn zeroed_like(&self) -> Self {
        let per_type = self
            .per_type
            .iter()
            .map(|members| {
                members
                    .iter()
                    .map(|c| LayerCoeffs {
                        alpha: vec![0.0; c.alpha.len()],
                        beta: vec![0.0; c.beta.len()],
                    })
                    .collect()
            })
            .collect();
        AdaptationCoefficients { per_type }
    }

    pub fn all_finite(&self) -> bool {
        self.per_type.iter().flatten().all(|c| {
            c.alpha.iter().all(|v| v.is_finite()) && c.beta.iter().all(|v| v.is_finite())
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct MemberSlot {
    w1: usize,
    w2: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct TypeSlot {
    kind: ParamKind,
    members: Vec<MemberSlot>,
}

/// Bottleneck coefficient generator. Each layer type owns one projection
/// pair (drift → rank-r bottleneck → input+output scales); each member
/// layer owns only its r-vector bias, which is what lets two layers of
/// one type receive distinct coefficients. The second projection starts
/// at zero, so a fresh generator emits exactly 1 everywhere.
#[derive(Debug, Clone)]
pub struct CoeffGenerator {
    pub d_c: usize,
    pub r: usize,
    /// Per-member projections instead of per-type ones.
    pub unshared: bool,
    slots: Vec<TypeSlot>,
    pub params: Vec<ParamTensor>,
}

/// Pre-activation state of one generator forward, for the exact
/// backward.
#[derive(Debug, Clone)]
pub struct GenCache {
    pub delta: Vec<f64>,
    /// `[type_id][member]` → (u, z) with z = sigmoid(u).
    layers: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl CoeffGenerator {
    pub fn new<R: Rng>(
        registry: &LayerTypeRegistry,
        d_c: usize,
        r: usize,
        unshared: bool,
        rng: &mut R,
    ) -> CoeffGenerator {
        assert!(d_c >= 1, "concept dimension must be positive");
        assert!(r >= 1, "bottleneck rank must be positive");
        let mut params: Vec<ParamTensor> = Vec::new();
        let mut slots = Vec::with_capacity(registry.n_types());
        for (k, entry) in registry.entries().iter().enumerate() {
            let (a_in, a_out) = entry.kind.scale_arity();
            let out_dim = a_in + a_out;
            let mut shared_pair: Option<(usize, usize)> = None;
            let mut members = Vec::with_capacity(entry.members.len());
            for m in 0..entry.members.len() {
                let (w1, w2) = if unshared {
                    let w1 = params.len();
                    params.push(ParamTensor::init_uniform(
                        format!("g.t{k}.m{m}.w1"),
                        ParamKind::Linear { d_in: d_c, d_out: r },
                        rng,
                    ));
                    let w2 = params.len();
                    params.push(ParamTensor::zeros(
                        format!("g.t{k}.m{m}.w2"),
                        ParamKind::Linear {
                            d_in: r,
                            d_out: out_dim,
                        },
                    ));
                    (w1, w2)
                } else {
                    *shared_pair.get_or_insert_with(|| {
                        let w1 = params.len();
                        params.push(ParamTensor::init_uniform(
                            format!("g.t{k}.w1"),
                            ParamKind::Linear { d_in: d_c, d_out: r },
                            rng,
                        ));
                        let w2 = params.len();
                        params.push(ParamTensor::zeros(
                            format!("g.t{k}.w2"),
                            ParamKind::Linear {
                                d_in: r,
                                d_out: out_dim,
                            },
                        ));
                        (w1, w2)
                    })
                };
                let bias = params.len();
                params.push(ParamTensor::zeros(
                    format!("g.t{k}.m{m}.b"),
                    ParamKind::Bias { d_out: r },
                ));
                members.push(MemberSlot { w1, w2, bias });
            }
            slots.push(TypeSlot {
                kind: entry.kind,
                members,
            });
        }
        CoeffGenerator {
            d_c,
            r,
            unshared,
            slots,
            params,
        }
    }

    /// True when this generator was built against a registry with the
    /// same type/member structure.
    pub fn matches_registry(&self, registry: &LayerTypeRegistry) -> bool {
        self.slots.len() == registry.n_types()
            && self
                .slots
                .iter()
                .zip(registry.entries())
                .all(|(s, e)| s.kind == e.kind && s.members.len() == e.members.len())
    }

    /// Total generator parameters (projections plus per-layer biases).
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.values.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    pub fn generate_coefficients(
        &self,
        delta: &Tensor,
        registry: &LayerTypeRegistry,
    ) -> Result<AdaptationCoefficients, AdapterError> {
        if !self.matches_registry(registry) {
            return Err(AdapterError::RegistryMismatch);
        }
        Ok(self.generate_cached(delta)?.0)
    }

    /// Coefficients plus the cache needed to push gradients back through
    /// the generator.
    pub fn generate_cached(
        &self,
        delta: &Tensor,
    ) -> Result<(AdaptationCoefficients, GenCache), AdapterError> {
        if delta.shape() != [self.d_c] {
            return Err(AdapterError::DimMismatch(
                self.d_c,
                delta.numel(),
            ));
        }
        let dv = delta.as_slice();
        let mut per_type = Vec::with_capacity(self.slots.len());
        let mut layers = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            let (a_in, a_out) = slot.kind.scale_arity();
            let mut type_coeffs = Vec::with_capacity(slot.members.len());
            let mut type_cache = Vec::with_capacity(slot.members.len());
            for member in &slot.members {
                let w1 = self.params[member.w1].values.as_slice();
                let w2 = self.params[member.w2].values.as_slice();
                let b = self.params[member.bias].values.as_slice();
                let mut u = vec![0.0; self.r];
                for j in 0..self.r {
                    let mut acc = 0.0;
                    for (i, &d) in dv.iter().enumerate() {
                        acc += w1[i * self.r + j] * d;
                    }
                    u[j] = acc + b[j];
                }
                let z: Vec<f64> = u.iter().map(|&x| sigmoid(x)).collect();
                let out_dim = a_in + a_out;
                let mut out = vec![0.0; out_dim];
                for (o, slot_out) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &zj) in z.iter().enumerate() {
                        acc += w2[j * out_dim + o] * zj;
                    }
                    *slot_out = acc + 1.0;
                }
                let beta = out.split_off(a_in);
                type_coeffs.push(LayerCoeffs { alpha: out, beta });
                type_cache.push((u, z));
            }
            per_type.push(type_coeffs);
            layers.push(type_cache);
        }
        Ok((
            AdaptationCoefficients { per_type },
            GenCache {
                delta: dv.to_vec(),
                layers,
            },
        ))
    }

    /// Accumulates generator parameter gradients from coefficient
    /// gradients and returns dLoss/dδ.
    pub fn generate_backward(
        &mut self,
        cache: &GenCache,
        coeff_grads: &AdaptationCoefficients,
    ) -> Result<Vec<f64>, AdapterError> {
        if coeff_grads.per_type.len() != self.slots.len() {
            return Err(AdapterError::RegistryMismatch);
        }
        let mut d_delta = vec![0.0; self.d_c];
        for (t, slot) in self.slots.iter().enumerate() {
            let (a_in, a_out) = slot.kind.scale_arity();
            let out_dim = a_in + a_out;
            if coeff_grads.per_type[t].len() != slot.members.len() {
                return Err(AdapterError::RegistryMismatch);
            }
            for (m, member) in slot.members.iter().enumerate() {
                let g = &coeff_grads.per_type[t][m];
                if g.alpha.len() != a_in || g.beta.len() != a_out {
                    return Err(AdapterError::RegistryMismatch);
                }
                let (_, z) = &cache.layers[t][m];
                // d_out is the concatenated (dα ∥ dβ) gradient.
                let mut dz = vec![0.0; self.r];
                {
                    let w2_vals = self.params[member.w2].values.as_slice().to_vec();
                    let w2_grad = self.params[member.w2].grad.as_mut_slice();
                    for o in 0..out_dim {
                        let go = if o < a_in {
                            g.alpha[o]
                        } else {
                            g.beta[o - a_in]
                        };
                        if go == 0.0 {
                            continue;
                        }
                        for j in 0..self.r {
                            w2_grad[j * out_dim + o] += z[j] * go;
                            dz[j] += w2_vals[j * out_dim + o] * go;
                        }
                    }
                }
                let du: Vec<f64> = dz
                    .iter()
                    .zip(z.iter())
                    .map(|(&dzj, &zj)| dzj * zj * (1.0 - zj))
                    .collect();
                {
                    let b_grad = self.params[member.bias].grad.as_mut_slice();
                    for j in 0..self.r {
                        b_grad[j] += du[j];
                    }
                }
                {
                    let w1_vals = self.params[member.w1].values.as_slice().to_vec();
                    let w1_grad = self.params[member.w1].grad.as_mut_slice();
                    for i in 0..self.d_c {
                        let mut acc = 0.0;
                        for j in 0..self.r {
                            w1_grad[i * self.r + j] += cache.delta[i] * du[j];
                            acc += w1_vals[i * self.r + j] * du[j];
                        }
                        d_delta[i] += acc;
                    }
                }
            }
        }
        Ok(d_delta)
    }
}

/// Parameter count of the naive alternative: one dense map from the
/// drift vector straight to every scalar of every member layer.
pub fn naive_dense_count(registry: &LayerTypeRegistry, d_c: usize) -> usize {
    registry
        .entries()
        .iter()
        .map(|e| {
            let numel: usize = e.kind.shape().iter().product();
            d_c * numel * e.members.len()
        })
        .sum()
}

/// Generator parameter count; the per-layer-bias layout makes this
/// `Σ_types r·(d_c + d_in + d_out) + Σ_layers r` in the shared layout.
pub fn adapter_param_count(gen: &CoeffGenerator, registry: &LayerTypeRegistry) -> usize {
    assert!(gen.matches_registry(registry), "foreign registry");
    gen.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn four_linear_registry() -> LayerTypeRegistry {
        let mut reg = LayerTypeRegistry::new();
        for i in 0..4 {
            reg.assign(&format!("w{i}"), ParamKind::Linear { d_in: 64, d_out: 32 });
        }
        reg
    }

    #[test]
    fn fresh_generator_emits_exactly_one() {
        let mut reg = LayerTypeRegistry::new();
        reg.assign("w0", ParamKind::Linear { d_in: 5, d_out: 3 });
        reg.assign("b0", ParamKind::Bias { d_out: 3 });
        reg.assign(
            "f0",
            ParamKind::ConvFilter {
                d_in: 2,
                d_out: 4,
                d_k: 3,
            },
        );
        let gen = CoeffGenerator::new(&reg, 7, 4, false, &mut rng(1));
        let delta = Tensor::from_slice(&[0.3, -1.0, 2.0, 0.0, 5.0, -0.2, 0.7]);
        let coeffs = gen.generate_coefficients(&delta, &reg).unwrap();
        for members in &coeffs.per_type {
            for c in members {
                assert!(c.alpha.iter().all(|&a| a == 1.0));
                assert!(c.beta.iter().all(|&b| b == 1.0));
            }
        }
        // Bias type carries no input-side scale.
        assert!(coeffs.layer(1, 0).alpha.is_empty());
        assert_eq!(coeffs.layer(1, 0).beta.len(), 3);
        assert_eq!(coeffs.layer(2, 0).alpha.len(), 2);
        assert_eq!(coeffs.layer(2, 0).beta.len(), 4);
    }

    #[test]
    fn hand_evaluated_scalar_case() {
        // d_c=1, r=1, one 1x1 linear: W1=[2], b=[0], W2=[[0.5],[0.5]],
        // δ=[0] → z=σ(0)=0.5 → α=β=0.25+1=1.25.
        let mut reg = LayerTypeRegistry::new();
        reg.assign("w", ParamKind::Linear { d_in: 1, d_out: 1 });
        let mut gen = CoeffGenerator::new(&reg, 1, 1, false, &mut rng(0));
        gen.params[0].values.as_mut_slice()[0] = 2.0;
        gen.params[1].values.as_mut_slice().copy_from_slice(&[0.5, 0.5]);
        gen.params[2].values.as_mut_slice()[0] = 0.0;
        let coeffs = gen
            .generate_coefficients(&Tensor::from_slice(&[0.0]), &reg)
            .unwrap();
        assert_eq!(coeffs.layer(0, 0).alpha, vec![1.25]);
        assert_eq!(coeffs.layer(0, 0).beta, vec![1.25]);
    }

    #[test]
    fn member_biases_differentiate_layers_of_one_type() {
        let mut reg = LayerTypeRegistry::new();
        reg.assign("w0", ParamKind::Linear { d_in: 2, d_out: 2 });
        reg.assign("w1", ParamKind::Linear { d_in: 2, d_out: 2 });
        let mut gen = CoeffGenerator::new(&reg, 3, 2, false, &mut rng(2));
        // Shared W2 must be nonzero for coefficients to move at all.
        for v in gen.params[1].values.as_mut_slice() {
            *v = 0.4;
        }
        // Distinct member biases.
        let b0 = gen
            .params
            .iter()
            .position(|p| p.name == "g.t0.m0.b")
            .unwrap();
        let b1 = gen
            .params
            .iter()
            .position(|p| p.name == "g.t0.m1.b")
            .unwrap();
        gen.params[b0].values.fill(0.3);
        gen.params[b1].values.fill(-1.1);
        let delta = Tensor::from_slice(&[0.5, -0.25, 1.0]);
        let coeffs = gen.generate_coefficients(&delta, &reg).unwrap();
        assert_ne!(coeffs.layer(0, 0), coeffs.layer(0, 1));
    }

    #[test]
    fn sharing_contract_isolates_types_and_members() {
        let mut reg = LayerTypeRegistry::new();
        reg.assign("w0", ParamKind::Linear { d_in: 2, d_out: 2 });
        reg.assign("w1", ParamKind::Linear { d_in: 2, d_out: 2 });
        reg.assign("b0", ParamKind::Bias { d_out: 2 });
        let mut gen = CoeffGenerator::new(&reg, 2, 2, false, &mut rng(3));
        for p in &mut gen.params {
            if p.name.ends_with("w2") {
                p.values.fill(0.2);
            }
        }
        let delta = Tensor::from_slice(&[1.0, -0.5]);
        let before = gen.generate_coefficients(&delta, &reg).unwrap();
        // Mutating type 0's W1 must not touch type 1's coefficients.
        let w1_t0 = gen.params.iter().position(|p| p.name == "g.t0.w1").unwrap();
        gen.params[w1_t0].values.fill(0.9);
        let after = gen.generate_coefficients(&delta, &reg).unwrap();
        assert_ne!(before.per_type[0], after.per_type[0]);
        assert_eq!(before.per_type[1], after.per_type[1]);
        // Mutating member 0's bias must not touch member 1.
        let b_m0 = gen
            .params
            .iter()
            .position(|p| p.name == "g.t0.m0.b")
            .unwrap();
        gen.params[b_m0].values.fill(2.0);
        let third = gen.generate_coefficients(&delta, &reg).unwrap();
        assert_ne!(after.per_type[0][0], third.per_type[0][0]);
        assert_eq!(after.per_type[0][1], third.per_type[0][1]);
    }

    #[test]
    fn parameter_counts_match_the_closed_forms() {
        let reg = four_linear_registry();
        let gen = CoeffGenerator::new(&reg, 100, 32, false, &mut rng(0));
        // 32·100 + 32·(64+32) + 4·32
        assert_eq!(adapter_param_count(&gen, &reg), 6_400);
        assert_eq!(naive_dense_count(&reg, 100), 819_200);
    }

    #[test]
    fn unshared_layout_costs_more_on_multi_member_types() {
        let reg = four_linear_registry();
        let shared = CoeffGenerator::new(&reg, 100, 32, false, &mut rng(0));
        let unshared = CoeffGenerator::new(&reg, 100, 32, true, &mut rng(0));
        assert!(unshared.param_count() > shared.param_count());
        // 4 members × (32·100 + 32·96 + 32)
        assert_eq!(unshared.param_count(), 4 * (3200 + 3072 + 32));
    }

    #[test]
    #[should_panic(expected = "bottleneck rank")]
    fn zero_rank_is_refused_at_construction() {
        let reg = four_linear_registry();
        let _ = CoeffGenerator::new(&reg, 100, 0, false, &mut rng(0));
    }

    #[test]
    fn foreign_registry_is_rejected() {
        let reg = four_linear_registry();
        let gen = CoeffGenerator::new(&reg, 4, 2, false, &mut rng(0));
        let mut other = LayerTypeRegistry::new();
        other.assign("w", ParamKind::Linear { d_in: 3, d_out: 3 });
        let delta = Tensor::from_slice(&[0.0; 4]);
        assert!(matches!(
            gen.generate_coefficients(&delta, &other),
            Err(AdapterError::RegistryMismatch)
        ));
    }

    #[test]
    fn wrong_drift_length_is_rejected() {
        let reg = four_linear_registry();
        let gen = CoeffGenerator::new(&reg, 4, 2, false, &mut rng(0));
        assert!(matches!(
            gen.generate_cached(&Tensor::from_slice(&[0.0; 3])),
            Err(AdapterError::DimMismatch(4, 3))
        ));
    }

    fn fd_probe(gen: &mut CoeffGenerator, delta: &[f64]) {
        // Loss = Σ over coefficients of 0.5·x², so dLoss/dcoeff = coeff.
        let loss_of = |g: &CoeffGenerator, d: &[f64]| -> f64 {
            let (c, _) = g.generate_cached(&Tensor::from_slice(d)).unwrap();
            c.per_type
                .iter()
                .flatten()
                .map(|lc| {
                    lc.alpha.iter().chain(lc.beta.iter()).map(|&x| 0.5 * x * x).sum::<f64>()
                })
                .sum()
        };
        let (coeffs, cache) = gen.generate_cached(&Tensor::from_slice(delta)).unwrap();
        let d_delta = gen.generate_backward(&cache, &coeffs).unwrap();
        let eps = 1e-6;
        // dδ check.
        for i in 0..delta.len() {
            let mut lo = delta.to_vec();
            let mut hi = delta.to_vec();
            lo[i] -= eps;
            hi[i] += eps;
            let fd = (loss_of(gen, &hi) - loss_of(gen, &lo)) / (2.0 * eps);
            let denom = fd.abs().max(d_delta[i].abs()).max(1e-3);
            assert!(
                ((fd - d_delta[i]) / denom).abs() < 1e-4,
                "dδ[{i}]: fd {fd} vs {got}",
                got = d_delta[i]
            );
        }
        // Parameter gradient check.
        for pi in 0..gen.params.len() {
            for k in 0..gen.params[pi].values.numel() {
                let analytic = gen.params[pi].grad.as_slice()[k];
                let orig = gen.params[pi].values.as_slice()[k];
                gen.params[pi].values.as_mut_slice()[k] = orig + eps;
                let hi = loss_of(gen, delta);
                gen.params[pi].values.as_mut_slice()[k] = orig - eps;
                let lo = loss_of(gen, delta);
                gen.params[pi].values.as_mut_slice()[k] = orig;
                let fd = (hi - lo) / (2.0 * eps);
                let denom = fd.abs().max(analytic.abs()).max(1e-3);
                assert!(
                    ((fd - analytic) / denom).abs() < 1e-4,
                    "param {pi}[{k}]: fd {fd} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn generator_backward_matches_finite_differences() {
        let mut reg = LayerTypeRegistry::new();
        reg.assign("w0", ParamKind::Linear { d_in: 2, d_out: 2 });
        reg.assign("w1", ParamKind::Linear { d_in: 2, d_out: 2 });
        reg.assign("b0", ParamKind::Bias { d_out: 2 });
        let mut gen = CoeffGenerator::new(&reg, 3, 2, false, &mut rng(7));
        let mut r = rng(8);
        for p in &mut gen.params {
            for v in p.values.as_mut_slice() {
                *v = r.gen_range(-0.8..0.8);
            }
        }
        fd_probe(&mut gen, &[0.4, -0.9, 0.15]);
    }

    #[test]
    fn unshared_generator_backward_matches_finite_differences() {
        let mut reg = LayerTypeRegistry::new();
        reg.assign("w0", ParamKind::Linear { d_in: 2, d_out: 3 });
        reg.assign("w1", ParamKind::Linear { d_in: 2, d_out: 3 });
        let mut gen = CoeffGenerator::new(&reg, 2, 2, true, &mut rng(9));
        let mut r = rng(10);
        for p in &mut gen.params {
            for v in p.values.as_mut_slice() {
                *v = r.gen_range(-0.8..0.8);
            }
        }
        fd_probe(&mut gen, &[-0.3, 0.6]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn drift_to_coefficients_is_lipschitz(
            seed in 0u64..500,
            d1 in proptest::collection::vec(-2.0f64..2.0, 3),
            d2 in proptest::collection::vec(-2.0f64..2.0, 3),
        ) {
            let mut reg = LayerTypeRegistry::new();
            reg.assign("w", ParamKind::Linear { d_in: 3, d_out: 2 });
            reg.assign("b", ParamKind::Bias { d_out: 2 });
            let mut gen = CoeffGenerator::new(&reg, 3, 2, false, &mut rng(seed));
            let mut r = rng(seed.wrapping_add(1));
            let mut frob = vec![0.0f64; reg.n_types()];
            for p in &mut gen.params {
                if p.name.ends_with("w2") {
                    for v in p.values.as_mut_slice() {
                        *v = r.gen_range(-1.0..1.0);
                    }
                }
            }
            for (t, _) in reg.entries().iter().enumerate() {
                let w1: f64 = gen.params.iter().filter(|p| p.name == format!("g.t{t}.w1"))
                    .flat_map(|p| p.values.as_slice()).map(|v| v * v).sum();
                let w2: f64 = gen.params.iter().filter(|p| p.name == format!("g.t{t}.w2"))
                    .flat_map(|p| p.values.as_slice()).map(|v| v * v).sum();
                frob[t] = w1.sqrt() * w2.sqrt();
            }
            let c1 = gen.generate_coefficients(&Tensor::from_slice(&d1), &reg).unwrap();
            let c2 = gen.generate_coefficients(&Tensor::from_slice(&d2), &reg).unwrap();
            let dist: f64 = d1.iter().zip(&d2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            for (t, (m1, m2)) in c1.per_type.iter().zip(&c2.per_type).enumerate() {
                for (l1, l2) in m1.iter().zip(m2) {
                    let diff: f64 = l1.alpha.iter().chain(&l1.beta)
                        .zip(l2.alpha.iter().chain(&l2.beta))
                        .map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    prop_assert!(diff <= frob[t] / 4.0 * dist + 1e-9,
                        "type {t}: moved {diff} over distance {dist}, bound {}", frob[t] / 4.0 * dist);
                }
            }
        }
    }
}
