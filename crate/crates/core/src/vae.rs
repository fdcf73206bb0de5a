//! Per-frame pose variational autoencoder.
//!
//! The trained encoder doubles as the distillation teacher (its mean
//! head supplies latent targets) and the trained decoder as the pose
//! generator that turns predicted latents back into poses. Both are
//! frozen after this module's training finishes.
//!
//! Encoder: three ReLU dense layers, then parallel mean/log-variance
//! heads. Decoder: the mirrored three ReLU layers, then a sigmoid
//! output layer, so every generated coordinate is strictly in (0,1).

use alloc::vec::Vec;


// Resolves f64 math (exp, ln, sqrt, sin, powf) in pure-no_std
// builds. When any dependent links std, the identical inherent
// methods shadow the trait and this import appears unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::{Graph, TensorId};
use crate::error::{CoreError, Result};
use crate::nn::{dense, init_dense, ParamNodes};
use crate::optim::{apply_resume, AdamW, ParamSet, TrainConfig};
use crate::pose::{PoseFrame, PoseSequence};
use crate::rng::{purpose, SeededRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct VaeConfig {
    /// Flat pose width `J*K`.
    pub input_dim: usize,
    /// Latent width, the interface to the sequence model.
    pub latent_dim: usize,
    /// Widths of the three ReLU layers, encoder order.
    pub hidden_dims: [usize; 3],
    /// Weight of the KL term in the training loss.
    pub lambda_kl: f64,
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(CoreError::config("vae dims must be positive"));
        }
        if !(self.lambda_kl >= 0.0) {
            return Err(CoreError::config("lambda_kl must be >= 0"));
        }
        Ok(())
    }
}

/// Mean, log-variance, and a sampled latent for one frame.
#[derive(Debug, Clone)]
pub struct LatentSample {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VaeBundle {
    pub config: VaeConfig,
    pub params: ParamSet,
}

/// Fresh Xavier-initialized VAE.
pub fn init_vae(config: &VaeConfig, rng: &mut SeededRng) -> Result<VaeBundle> {
    config.validate()?;
    let [h1, h2, h3] = config.hidden_dims;
    let mut params = ParamSet::new();
    init_dense(&mut params, "enc.l1", config.input_dim, h1, rng);
    init_dense(&mut params, "enc.l2", h1, h2, rng);
    init_dense(&mut params, "enc.l3", h2, h3, rng);
    init_dense(&mut params, "enc.mu", h3, config.latent_dim, rng);
    init_dense(&mut params, "enc.logvar", h3, config.latent_dim, rng);
    init_dense(&mut params, "dec.l1", config.latent_dim, h3, rng);
    init_dense(&mut params, "dec.l2", h3, h2, rng);
    init_dense(&mut params, "dec.l3", h2, h1, rng);
    init_dense(&mut params, "dec.out", h1, config.input_dim, rng);
    Ok(VaeBundle {
        config: config.clone(),
        params,
    })
}

fn relu_dense(g: &mut Graph, nodes: &mut ParamNodes, prefix: &str, x: TensorId) -> Result<TensorId> {
    let w = nodes.node(g, &alloc::format!("{prefix}.w"))?;
    let b = nodes.node(g, &alloc::format!("{prefix}.b"))?;
    let h = dense(g, x, w, b)?;
    Ok(g.relu(h))
}

/// Encoder forward on the graph: `[B x J*K] -> ([B x d], [B x d])`.
pub fn encode_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &VaeConfig,
    x: TensorId,
) -> Result<(TensorId, TensorId)> {
    if g.value(x).cols() != config.input_dim {
        return Err(CoreError::format("encoder input width mismatch"));
    }
    let h = relu_dense(g, nodes, "enc.l1", x)?;
    let h = relu_dense(g, nodes, "enc.l2", h)?;
    let h = relu_dense(g, nodes, "enc.l3", h)?;
    let (mw, mb) = (
        nodes.node(g, "enc.mu.w")?,
        nodes.node(g, "enc.mu.b")?,
    );
    let (lw, lb) = (
        nodes.node(g, "enc.logvar.w")?,
        nodes.node(g, "enc.logvar.b")?,
    );
    Ok((dense(g, h, mw, mb)?, dense(g, h, lw, lb)?))
}

/// Decoder forward on the graph: `[B x d] -> [B x J*K]`, sigmoid last.
pub fn decode_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &VaeConfig,
    z: TensorId,
) -> Result<TensorId> {
    if g.value(z).cols() != config.latent_dim {
        return Err(CoreError::format("decoder latent width mismatch"));
    }
    let h = relu_dense(g, nodes, "dec.l1", z)?;
    let h = relu_dense(g, nodes, "dec.l2", h)?;
    let h = relu_dense(g, nodes, "dec.l3", h)?;
    let w = nodes.node(g, "dec.out.w")?;
    let b = nodes.node(g, "dec.out.b")?;
    let out = dense(g, h, w, b)?;
    Ok(g.sigmoid(out))
}

/// Batched deterministic encode of already-normalized frames.
pub fn encode_batch(bundle: &VaeBundle, frames: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let mut nodes = ParamNodes::frozen(&bundle.params);
    let x = g.constant(frames.clone());
    let (mu, lv) = encode_graph(&mut g, &mut nodes, &bundle.config, x)?;
    Ok((g.value(mu).clone(), g.value(lv).clone()))
}

/// Batched decode: latent rows to pose rows.
pub fn decode_batch(bundle: &VaeBundle, z: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let mut nodes = ParamNodes::frozen(&bundle.params);
    let zi = g.constant(z.clone());
    let out = decode_graph(&mut g, &mut nodes, &bundle.config, zi)?;
    Ok(g.value(out).clone())
}

/// Deterministic single-frame encode; `z` starts at the mean.
pub fn encode(bundle: &VaeBundle, frame: &PoseFrame) -> Result<LatentSample> {
    let x = Tensor::row_vec(frame.coords.clone());
    let (mu, lv) = encode_batch(bundle, &x)?;
    Ok(LatentSample {
        mu: mu.values().to_vec(),
        logvar: lv.values().to_vec(),
        z: mu.values().to_vec(),
    })
}

/// `z = mu + exp(logvar/2) * eps`, element-wise.
pub fn reparameterize(sample: &LatentSample, eps: &[f64]) -> Vec<f64> {
    sample
        .mu
        .iter()
        .zip(&sample.logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (lv * 0.5).exp() * e)
        .collect()
}

/// Single-latent decode to a pose frame.
pub fn decode(bundle: &VaeBundle, z: &[f64]) -> Result<PoseFrame> {
    let out = decode_batch(bundle, &Tensor::row_vec(z.to_vec()))?;
    Ok(PoseFrame::new(out.values().to_vec()))
}

/// Closed-form KL of the diagonal Gaussian against the standard
/// normal: `0.5 * sum(mu^2 + e^logvar - 1 - logvar)`.
pub fn kl_divergence(sample: &LatentSample) -> f64 {
    sample
        .mu
        .iter()
        .zip(&sample.logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// Mean binary cross-entropy over all `T*J*K` elements, predictions
/// clamped away from {0,1}.
pub fn bce_pose_loss(target: &PoseSequence, pred: &PoseSequence) -> Result<f64> {
    let (t, p) = (target.to_matrix(), pred.to_matrix());
    if t.shape() != p.shape() {
        return Err(CoreError::shape("pose loss shape mismatch"));
    }
    let mut g = Graph::new();
    let pi = g.constant(p);
    let loss = g.bce_mean(pi, t)?;
    g.value(loss).item()
}

/// Reconstruction BCE plus `lambda_kl` times the KL term, the
/// single-frame training objective.
pub fn vae_loss(
    pose: &PoseFrame,
    recon: &PoseFrame,
    sample: &LatentSample,
    lambda_kl: f64,
) -> Result<f64> {
    let target = PoseSequence::new(alloc::vec![pose.clone()])?;
    let predicted = PoseSequence::new(alloc::vec![recon.clone()])?;
    Ok(bce_pose_loss(&target, &predicted)? + lambda_kl * kl_divergence(sample))
}

/// Builds the batch training loss on a graph: BCE reconstruction of
/// `x` through one reparameterized sample, plus the mean KL.
pub fn vae_loss_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &VaeConfig,
    x: &Tensor,
    eps: &Tensor,
) -> Result<TensorId> {
    let xi = g.constant(x.clone());
    let (mu, logvar) = encode_graph(g, nodes, config, xi)?;
    let half = g.scale(logvar, 0.5);
    let sd = g.exp(half);
    let epsi = g.constant(eps.clone());
    let noise = g.mul(sd, epsi)?;
    let z = g.add(mu, noise)?;
    let recon = decode_graph(g, nodes, config, z)?;
    let bce = g.bce_mean(recon, x.clone())?;
    let kl = g.kl_std_normal(mu, logvar)?;
    let kl_scaled = g.scale(kl, config.lambda_kl);
    g.add(bce, kl_scaled)
}

/// Trains on every frame of the corpus as an independent sample.
/// Returns the bundle and the mean loss per epoch.
pub fn train_vae(
    sequences: &[PoseSequence],
    config: &VaeConfig,
    train: &TrainConfig,
    seed: u64,
    resume: Option<(ParamSet, usize)>,
) -> Result<(VaeBundle, Vec<f64>)> {
    config.validate()?;
    train.validate()?;
    let mut init_rng = SeededRng::new(seed, purpose::INIT);
    let mut bundle = init_vae(config, &mut init_rng)?;
    let start = apply_resume(&mut bundle.params, resume, train.epochs)?;

    let mut frames: Vec<&PoseFrame> = Vec::new();
    for seq in sequences {
        if seq.width() != config.input_dim {
            return Err(CoreError::format("corpus width differs from vae input_dim"));
        }
        frames.extend(seq.frames());
    }
    if frames.is_empty() {
        return Err(CoreError::InsufficientData(alloc::string::String::from(
            "vae training needs at least one frame",
        )));
    }

    let mut opt = AdamW::new(train.optim);
    let mut trace = Vec::with_capacity(train.epochs - start);
    for epoch in start..train.epochs {
        let mut rng = SeededRng::for_epoch(seed, purpose::TRAIN, epoch as u64);
        let mut order: Vec<usize> = (0..frames.len()).collect();
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(train.batch_size) {
            let x = Tensor::from_fn(chunk.len(), config.input_dim, |r, c| {
                frames[chunk[r]].coords[c]
            });
            let eps = Tensor::from_fn(chunk.len(), config.latent_dim, |_, _| rng.normal());

            let mut g = Graph::new();
            let mut nodes = ParamNodes::trainable(&bundle.params);
            let loss = vae_loss_graph(&mut g, &mut nodes, config, &x, &eps)?;
            let loss_v = g.value(loss).item()?;
            if !loss_v.is_finite() {
                return Err(CoreError::training(alloc::format!(
                    "epoch {epoch}: vae loss is not finite"
                )));
            }
            g.backward(loss)?;
            opt.step(&mut bundle.params, &g.param_grads())?;
            epoch_loss += loss_v;
            batches += 1.0;
        }
        trace.push(epoch_loss / batches);
    }
    Ok((bundle, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use alloc::vec;

    fn tiny_config() -> VaeConfig {
        VaeConfig {
            input_dim: 6,
            latent_dim: 2,
            hidden_dims: [5, 4, 3],
            lambda_kl: 1e-4,
        }
    }

    fn zeroed_bundle(config: &VaeConfig) -> VaeBundle {
        let mut rng = SeededRng::new(1, purpose::INIT);
        let mut b = init_vae(config, &mut rng).unwrap();
        let names: Vec<_> = b.params.names().cloned().collect();
        for name in names {
            let shape = b.params.get(&name).unwrap().shape();
            b.params
                .set(&name, Tensor::zeros(shape.0, shape.1))
                .unwrap();
        }
        b
    }

    #[test]
    fn zero_encoder_emits_zero_mean_and_logvar() {
        let cfg = tiny_config();
        let b = zeroed_bundle(&cfg);
        let frame = PoseFrame::new(vec![0.1, 0.9, 0.4, 0.6, 0.2, 0.8]);
        let s = encode(&b, &frame).unwrap();
        assert_eq!(s.mu, vec![0.0, 0.0]);
        assert_eq!(s.logvar, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_decoder_emits_half_everywhere() {
        let cfg = tiny_config();
        let b = zeroed_bundle(&cfg);
        let f = decode(&b, &[3.0, -1.0]).unwrap();
        assert!(f.coords.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn encode_is_deterministic_with_latent_dim_width() {
        let cfg = tiny_config();
        let mut rng = SeededRng::new(12, purpose::INIT);
        let b = init_vae(&cfg, &mut rng).unwrap();
        let frame = PoseFrame::new(vec![0.3, 0.3, 0.9, 0.05, 0.5, 0.71]);
        let s1 = encode(&b, &frame).unwrap();
        let s2 = encode(&b, &frame).unwrap();
        assert_eq!(s1.mu.len(), cfg.latent_dim);
        assert_eq!(s1.mu, s2.mu);
        assert_eq!(s1.logvar, s2.logvar);
    }

    #[test]
    fn reparameterize_special_cases() {
        let s = LatentSample {
            mu: vec![0.5, -1.0],
            logvar: vec![0.0, 0.0],
            z: vec![],
        };
        assert_eq!(reparameterize(&s, &[0.0, 0.0]), s.mu);
        assert_eq!(reparameterize(&s, &[2.0, -3.0]), vec![2.5, -4.0]);
    }

    #[test]
    fn reparameterize_monte_carlo_mean_approaches_mu() {
        let s = LatentSample {
            mu: vec![0.7, -0.3],
            logvar: vec![0.4, -0.8],
            z: vec![],
        };
        let n = 100_000;
        let mut rng = SeededRng::new(3, purpose::TRAIN);
        let mut sums = [0.0f64; 2];
        for _ in 0..n {
            let z = reparameterize(&s, &[rng.normal(), rng.normal()]);
            sums[0] += z[0];
            sums[1] += z[1];
        }
        for d in 0..2 {
            let mean = sums[d] / n as f64;
            let sd = (s.logvar[d] * 0.5).exp();
            let margin = 3.0 * sd / (n as f64).sqrt();
            assert!(
                (mean - s.mu[d]).abs() < margin,
                "dim {d}: {mean} vs {} +- {margin}",
                s.mu[d]
            );
        }
    }

    #[test]
    fn decode_output_is_strictly_inside_unit_interval() {
        let cfg = tiny_config();
        let mut rng = SeededRng::new(4, purpose::INIT);
        let b = init_vae(&cfg, &mut rng).unwrap();
        for _ in 0..100 {
            let z: Vec<f64> = (0..cfg.latent_dim).map(|_| rng.normal() * 4.0).collect();
            let f = decode(&b, &z).unwrap();
            assert!(f.coords.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn kl_closed_form_reference_points() {
        let zero = LatentSample {
            mu: vec![0.0],
            logvar: vec![0.0],
            z: vec![],
        };
        assert_eq!(kl_divergence(&zero), 0.0);

        let unit_mean = LatentSample {
            mu: vec![1.0],
            logvar: vec![0.0],
            z: vec![],
        };
        assert!((kl_divergence(&unit_mean) - 0.5).abs() < 1e-15);

        let wide = LatentSample {
            mu: vec![0.0],
            logvar: vec![4.0f64.ln()],
            z: vec![],
        };
        let expect = 0.5 * (4.0 - 1.0 - 4.0f64.ln());
        assert!((kl_divergence(&wide) - expect).abs() < 1e-15);
    }

    #[test]
    fn kl_is_nonnegative_on_random_samples() {
        let mut rng = SeededRng::new(5, purpose::TRAIN);
        for _ in 0..100 {
            let s = LatentSample {
                mu: (0..4).map(|_| rng.normal() * 3.0).collect(),
                logvar: (0..4).map(|_| rng.normal() * 2.0).collect(),
                z: vec![],
            };
            assert!(kl_divergence(&s) >= 0.0);
        }
    }

    #[test]
    fn bce_reference_points() {
        let seq = |v: Vec<f64>| PoseSequence::new(vec![PoseFrame::new(v)]).unwrap();
        let ln2 = core::f64::consts::LN_2;
        let l = bce_pose_loss(&seq(vec![1.0]), &seq(vec![0.5])).unwrap();
        assert!((l - ln2).abs() < 1e-12);
        let l = bce_pose_loss(&seq(vec![0.5]), &seq(vec![0.5])).unwrap();
        assert!((l - ln2).abs() < 1e-12);
        // Perfect (clamped) prediction of a binary target.
        let l = bce_pose_loss(&seq(vec![1.0, 0.0]), &seq(vec![1.0, 0.0])).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn bce_is_minimized_at_the_target() {
        let seq = |v: Vec<f64>| PoseSequence::new(vec![PoseFrame::new(v)]).unwrap();
        let y = 0.37;
        let at = bce_pose_loss(&seq(vec![y]), &seq(vec![y])).unwrap();
        for delta in [-0.05, -0.01, 0.01, 0.05] {
            let off = bce_pose_loss(&seq(vec![y]), &seq(vec![y + delta])).unwrap();
            assert!(off > at, "perturbation {delta} did not increase loss");
        }
    }

    #[test]
    fn vae_loss_components_sum() {
        let cfg = tiny_config();
        let mut rng = SeededRng::new(6, purpose::INIT);
        let b = init_vae(&cfg, &mut rng).unwrap();
        let pose = PoseFrame::new(vec![0.2, 0.4, 0.6, 0.8, 0.5, 0.3]);
        let s = encode(&b, &pose).unwrap();
        let recon = decode(&b, &s.z).unwrap();

        let lam = 0.25;
        let total = vae_loss(&pose, &recon, &s, lam).unwrap();
        let recon_only = vae_loss(&pose, &recon, &s, 0.0).unwrap();
        let seq = |f: &PoseFrame| PoseSequence::new(vec![f.clone()]).unwrap();
        let bce = bce_pose_loss(&seq(&pose), &seq(&recon)).unwrap();
        assert!((recon_only - bce).abs() < 1e-15);
        assert!((total - (bce + lam * kl_divergence(&s))).abs() < 1e-12);
    }

    #[test]
    fn vae_loss_gradients_match_finite_differences() {
        let cfg = tiny_config();
        let mut rng = SeededRng::new(7, purpose::INIT);
        let bundle = init_vae(&cfg, &mut rng).unwrap();
        let x = Tensor::from_fn(2, cfg.input_dim, |_, _| rng.uniform(0.2, 0.8));
        let eps = Tensor::from_fn(2, cfg.latent_dim, |_, _| rng.normal());

        let params: alloc::collections::BTreeMap<_, _> = bundle
            .params
            .iter()
            .map(|(n, t)| (n.clone(), t.clone()))
            .collect();
        let report = check_gradients(&params, 1e-4, |p| {
            let mut set = ParamSet::new();
            for (n, t) in p {
                set.insert(n, t.clone());
            }
            let mut g = Graph::new();
            let mut nodes = ParamNodes::trainable(&set);
            let loss = vae_loss_graph(&mut g, &mut nodes, &cfg, &x, &eps)?;
            Ok((g, loss))
        })
        .unwrap();
        assert!(
            report.passed(),
            "max rel err {}, first failures: {:?}",
            report.max_rel_error,
            &report.failures[..report.failures.len().min(3)]
        );
    }

    fn tiny_corpus() -> Vec<PoseSequence> {
        let cfg = crate::synth::SynthConfig {
            vocab_size: 4,
            tokens_min: 1,
            tokens_max: 2,
            frames_min: 2,
            frames_max: 4,
            t_max: 8,
            noise_scale: 0.005,
            j_joints: 3,
            k_dims: 2,
            seed: 50,
        };
        crate::synth::synth_corpus(&cfg, 6)
            .unwrap()
            .into_iter()
            .map(|r| r.poses)
            .collect()
    }

    #[test]
    fn zero_epochs_returns_the_initialized_bundle() {
        let cfg = tiny_config();
        let train = TrainConfig {
            epochs: 0,
            batch_size: 4,
            optim: Default::default(),
        };
        let (trained, trace) = train_vae(&tiny_corpus(), &cfg, &train, 77, None).unwrap();
        assert!(trace.is_empty());
        let mut rng = SeededRng::new(77, purpose::INIT);
        let fresh = init_vae(&cfg, &mut rng).unwrap();
        assert!(trained.params.bits_eq(&fresh.params));
    }

    #[test]
    fn same_seed_trains_to_identical_parameters() {
        let cfg = tiny_config();
        let train = TrainConfig {
            epochs: 2,
            batch_size: 4,
            optim: Default::default(),
        };
        let corpus = tiny_corpus();
        let (a, trace_a) = train_vae(&corpus, &cfg, &train, 123, None).unwrap();
        let (b, trace_b) = train_vae(&corpus, &cfg, &train, 123, None).unwrap();
        assert!(a.params.bits_eq(&b.params));
        assert_eq!(trace_a, trace_b);
        let (c, _) = train_vae(&corpus, &cfg, &train, 124, None).unwrap();
        assert!(!a.params.bits_eq(&c.params));
    }

    #[test]
    fn resume_continues_at_the_saved_epoch() {
        let cfg = tiny_config();
        let corpus = tiny_corpus();
        let budget = |epochs| TrainConfig {
            epochs,
            batch_size: 4,
            optim: Default::default(),
        };
        let (half, trace) = train_vae(&corpus, &cfg, &budget(2), 9, None).unwrap();
        assert_eq!(trace.len(), 2);

        let resumed = Some((half.params.clone(), 2));
        let (full, trace) = train_vae(&corpus, &cfg, &budget(5), 9, resumed).unwrap();
        assert_eq!(trace.len(), 3);
        assert!(!full.params.bits_eq(&half.params));

        // A checkpoint already at the target is a completed run.
        let done = Some((half.params.clone(), 2));
        let (same, trace) = train_vae(&corpus, &cfg, &budget(2), 9, done).unwrap();
        assert!(trace.is_empty());
        assert!(same.params.bits_eq(&half.params));

        let over = Some((half.params.clone(), 3));
        assert!(train_vae(&corpus, &cfg, &budget(2), 9, over).is_err());

        let mut missing = ParamSet::new();
        missing.insert("enc.mu.b", Tensor::zeros(1, cfg.latent_dim));
        assert!(train_vae(&corpus, &cfg, &budget(5), 9, Some((missing, 2))).is_err());
    }
}
