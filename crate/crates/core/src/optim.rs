//! Named parameter storage and the AdamW optimizer.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;


// Resolves f64 math (exp, ln, sqrt, sin, powf) in pure-no_std
// builds. When any dependent links std, the identical inherent
// methods shadow the trait and this import appears unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// A model's parameters, keyed by hierarchical dotted names
/// (`enc.0.attn.wq`). Iteration order is the name order, which keeps
/// every whole-set operation deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    map: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Registers a new parameter. Duplicate names are a wiring bug.
    pub fn insert(&mut self, name: &str, value: Tensor) {
        let prev = self.map.insert(String::from(name), value);
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| CoreError::internal(alloc::format!("unknown parameter {name}")))
    }

    /// Replaces an existing parameter's value, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .map
            .get_mut(name)
            .ok_or_else(|| CoreError::internal(alloc::format!("unknown parameter {name}")))?;
        if !slot.same_shape(&value) {
            return Err(CoreError::shape(alloc::format!(
                "parameter {name} shape change"
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.map
            .get_mut(name)
            .ok_or_else(|| CoreError::internal(alloc::format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.map.values().map(Tensor::len).sum()
    }

    /// Bit-level equality, the freeze contract's currency: true only
    /// if both sets have the same names and every value is the same
    /// f64 bit pattern.
    pub fn bits_eq(&self, other: &ParamSet) -> bool {
        if self.map.len() != other.map.len() {
            return false;
        }
        self.map.iter().zip(other.map.iter()).all(|((na, ta), (nb, tb))| {
            na == nb
                && ta.same_shape(tb)
                && ta
                    .values()
                    .iter()
                    .zip(tb.values())
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Shared training budget for the three trainable networks.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Swaps checkpointed values into a freshly initialized parameter set
/// and returns the epoch to continue from. The checkpoint must carry
/// exactly the names and shapes the initializer produced; optimizer
/// moments are not restored.
pub fn apply_resume(
    fresh: &mut ParamSet,
    resume: Option<(ParamSet, usize)>,
    total_epochs: usize,
) -> Result<usize> {
    let Some((saved, done)) = resume else {
        return Ok(0);
    };
    if done > total_epochs {
        return Err(CoreError::config(alloc::format!(
            "checkpoint already at epoch {done}, target is {total_epochs}"
        )));
    }
    if saved.len() != fresh.len() {
        return Err(CoreError::format(alloc::format!(
            "resumed checkpoint has {} parameters, model has {}",
            saved.len(),
            fresh.len()
        )));
    }
    for (name, value) in saved.iter() {
        if !fresh.get(name)?.same_shape(value) {
            return Err(CoreError::shape(alloc::format!(
                "resumed parameter {name} changed shape"
            )));
        }
    }
    *fresh = saved;
    Ok(done)
}

/// AdamW with decoupled weight decay. Moment buffers are created
/// lazily per parameter and are not part of any checkpoint; a resumed
/// run restarts them from zero.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: OptimConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(config: OptimConfig) -> Self {
        AdamW {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every named gradient. Parameters without a
    /// gradient entry stay untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);

        for (name, grad) in grads {
            if !grad.all_finite() {
                return Err(CoreError::training(alloc::format!(
                    "non-finite gradient for parameter {name}"
                )));
            }
            let value = params.get_mut(name)?;
            if !value.same_shape(grad) {
                return Err(CoreError::shape(alloc::format!(
                    "gradient shape mismatch for parameter {name}"
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows(), grad.cols()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.rows(), grad.cols()));

            let ws: &mut [f64] = value.values_mut();
            let ms = m.values_mut();
            let vs = v.values_mut();
            let gs = grad.values();
            for i in 0..ws.len() {
                ms[i] = c.beta1 * ms[i] + (1.0 - c.beta1) * gs[i];
                vs[i] = c.beta2 * vs[i] + (1.0 - c.beta2) * gs[i] * gs[i];
                let mhat = ms[i] / bc1;
                let vhat = vs[i] / bc2;
                ws[i] -= c.lr * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * ws[i]);
            }
        }
        Ok(())
    }
}

/// Collects every parameter's current value into a plain map, for
/// snapshot comparisons.
pub fn snapshot(params: &ParamSet) -> Vec<(String, Tensor)> {
    params.iter().map(|(n, t)| (n.clone(), t.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_grads(name: &str, g: f64) -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        m.insert(String::from(name), Tensor::scalar(g));
        m
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_fixed_point() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::scalar(1.25));
        let mut opt = AdamW::new(OptimConfig {
            weight_decay: 0.0,
            ..OptimConfig::default()
        });
        opt.step(&mut params, &scalar_grads("w", 0.0)).unwrap();
        assert_eq!(params.get("w").unwrap().item().unwrap(), 1.25);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        // Bias correction cancels at step 1, leaving -lr * g/(|g|+~0).
        for g in [3.7, -0.002] {
            let mut params = ParamSet::new();
            params.insert("w", Tensor::scalar(0.0));
            let cfg = OptimConfig {
                lr: 0.01,
                weight_decay: 0.0,
                ..OptimConfig::default()
            };
            let mut opt = AdamW::new(cfg);
            opt.step(&mut params, &scalar_grads("w", g)).unwrap();
            let w = params.get("w").unwrap().item().unwrap();
            let expect = -cfg.lr * g.signum();
            assert!((w - expect).abs() < 1e-5, "g={g}: {w} vs {expect}");
        }
    }

    #[test]
    fn twenty_steps_descend_a_parabola() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::scalar(1.0));
        let mut opt = AdamW::new(OptimConfig {
            lr: 0.02,
            weight_decay: 0.0,
            ..OptimConfig::default()
        });
        let mut last = 1.0_f64; // f(1) = 1
        for _ in 0..20 {
            let w = params.get("w").unwrap().item().unwrap();
            opt.step(&mut params, &scalar_grads("w", 2.0 * w)).unwrap();
            let w = params.get("w").unwrap().item().unwrap();
            let f = w * w;
            assert!(f < last, "f grew: {f} >= {last}");
            last = f;
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut params = ParamSet::new();
        params.insert("dec.1.ffn1.w", Tensor::scalar(0.5));
        let mut opt = AdamW::new(OptimConfig::default());
        let err = opt
            .step(&mut params, &scalar_grads("dec.1.ffn1.w", f64::NAN))
            .unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("dec.1.ffn1.w"), "message was: {msg}");
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::scalar(1.0));
        let cfg = OptimConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..OptimConfig::default()
        };
        let mut opt = AdamW::new(cfg);
        opt.step(&mut params, &scalar_grads("w", 0.0)).unwrap();
        let w = params.get("w").unwrap().item().unwrap();
        assert!((w - (1.0 - 0.1 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn bits_eq_detects_single_bit_drift() {
        let mut a = ParamSet::new();
        a.insert("w", Tensor::row_vec(vec![0.1, 0.2]));
        let mut b = a.clone();
        assert!(a.bits_eq(&b));
        let v = b.get_mut("w").unwrap().values_mut();
        v[1] = f64::from_bits(v[1].to_bits() ^ 1);
        assert!(!a.bits_eq(&b));
        let _ = &a;
    }
}
