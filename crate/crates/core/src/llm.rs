//! Latent learning module: text to latent pose sequence in one pass.
//!
//! A transformer encoder reads the token sequence with a learned CLS
//! embedding prepended. The CLS state drives a sigmoid length
//! regulator; the full hidden states are the cross-attention context
//! for a non-autoregressive decoder whose first-layer queries are the
//! positional encoding rows. The decoder output is projected to the
//! VAE latent width, trained against three summed losses:
//!
//! - pose: MSE of the frozen generator's decoded poses vs targets,
//! - distillation: MSE against the frozen teacher's latents,
//! - length: BCE of the predicted vs ground-truth length ratio.
//!
//! There is no causal structure anywhere: all positions are produced
//! in parallel and truncated by the regulated length.

use alloc::string::String;
use alloc::vec::Vec;


// Resolves f64 math (exp, ln, sqrt, sin, powf) in pure-no_std
// builds. When any dependent links std, the identical inherent
// methods shadow the trait and this import appears unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::{Graph, TensorId};
use crate::error::{CoreError, Result};
use crate::nn::{
    decoder_layer, dense, encoder_layer, init_dense, init_decoder_layer, init_encoder_layer,
    positional_encoding, xavier_init, Mode, ParamNodes,
};
use crate::optim::{apply_resume, AdamW, ParamSet, TrainConfig};
use crate::pose::PoseSequence;
use crate::rng::{purpose, SeededRng};
use crate::tensor::Tensor;
use crate::vae::{decode_graph, encode_batch, VaeBundle};

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    /// Longest producible sequence; the decoder always emits this many
    /// rows before regulation.
    pub t_max: usize,
    pub vocab_size: usize,
    /// Must equal the frozen VAE's latent width.
    pub latent_dim: usize,
    /// Dense layers in the length regulator head (>= 1).
    pub regulator_layers: usize,
    /// Distillation ablation switch: when false the teacher term is
    /// dropped from the total loss and training must still work.
    pub use_distillation: bool,
    /// Pose reconstruction ablation switch. The length term is
    /// mandatory and cannot be switched off.
    pub use_pose_loss: bool,
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.ffn_dim == 0 {
            return Err(CoreError::config("llm dims must be positive"));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(CoreError::config("d_model must divide by n_heads"));
        }
        if self.d_model % 2 != 0 {
            return Err(CoreError::config("d_model must be even for the encoding"));
        }
        if self.t_max == 0 || self.vocab_size == 0 || self.latent_dim == 0 {
            return Err(CoreError::config("t_max, vocab_size, latent_dim must be positive"));
        }
        if self.regulator_layers == 0 {
            return Err(CoreError::config("regulator needs at least one layer"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::config("dropout must be in [0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LlmBundle {
    pub config: LlmConfig,
    pub params: ParamSet,
}

/// One training example: token ids plus the normalized pose sequence.
#[derive(Debug, Clone)]
pub struct LlmExample {
    pub token_ids: Vec<usize>,
    pub poses: PoseSequence,
}

pub fn init_llm(config: &LlmConfig, rng: &mut SeededRng) -> Result<LlmBundle> {
    config.validate()?;
    let mut params = ParamSet::new();
    params.insert("embed.tok", xavier_init(config.vocab_size, config.d_model, rng));
    params.insert("embed.cls", xavier_init(1, config.d_model, rng));
    for i in 0..config.n_layers {
        init_encoder_layer(
            &mut params,
            &alloc::format!("enc.{i}"),
            config.d_model,
            config.ffn_dim,
            rng,
        );
    }
    for l in 1..config.regulator_layers {
        init_dense(&mut params, &alloc::format!("reg.l{l}"), config.d_model, config.d_model, rng);
    }
    init_dense(
        &mut params,
        &alloc::format!("reg.l{}", config.regulator_layers),
        config.d_model,
        1,
        rng,
    );
    for i in 0..config.n_layers {
        init_decoder_layer(
            &mut params,
            &alloc::format!("dec.{i}"),
            config.d_model,
            config.ffn_dim,
            rng,
        );
    }
    init_dense(&mut params, "out.proj", config.d_model, config.latent_dim, rng);
    Ok(LlmBundle {
        config: config.clone(),
        params,
    })
}

/// Encoder forward: embeds `[CLS] || tokens` with positional encoding
/// and runs the stack. Returns (all hidden states `[U+1 x d]`, CLS
/// state `[1 x d]`).
pub fn encode_text_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &LlmConfig,
    token_ids: &[usize],
    mode: &mut Mode,
) -> Result<(TensorId, TensorId)> {
    if token_ids.is_empty() {
        return Err(CoreError::Input(String::from("token sequence is empty")));
    }
    if let Some(&bad) = token_ids.iter().find(|&&t| t >= config.vocab_size) {
        return Err(CoreError::Input(alloc::format!(
            "token id {bad} outside vocabulary of {}",
            config.vocab_size
        )));
    }
    let table = nodes.node(g, "embed.tok")?;
    let tokens = g.gather_rows(table, token_ids)?;
    let cls = nodes.node(g, "embed.cls")?;
    let mut x = g.concat_rows(&[cls, tokens])?;

    let pe = positional_encoding(token_ids.len() + 1, config.d_model)?;
    let pe = g.constant(pe);
    x = g.add(x, pe)?;

    for i in 0..config.n_layers {
        x = encoder_layer(
            g,
            nodes,
            &alloc::format!("enc.{i}"),
            x,
            config.d_model,
            config.n_heads,
            mode,
        )?;
    }
    let pooled = g.slice_rows(x, 0, 1)?;
    Ok((x, pooled))
}

/// Length regulator head: dense stack on the CLS state ending in a
/// sigmoid, so the ratio is strictly inside (0,1).
pub fn regulator_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &LlmConfig,
    pooled: TensorId,
) -> Result<TensorId> {
    let mut h = pooled;
    for l in 1..config.regulator_layers {
        let w = nodes.node(g, &alloc::format!("reg.l{l}.w"))?;
        let b = nodes.node(g, &alloc::format!("reg.l{l}.b"))?;
        h = dense(g, h, w, b)?;
        h = g.relu(h);
    }
    let w = nodes.node(g, &alloc::format!("reg.l{}.w", config.regulator_layers))?;
    let b = nodes.node(g, &alloc::format!("reg.l{}.b", config.regulator_layers))?;
    let out = dense(g, h, w, b)?;
    Ok(g.sigmoid(out))
}

/// NAR decoder forward from explicit first-layer queries (normally the
/// positional encoding rows). Output is `[queries.rows x latent_dim]`.
pub fn nar_decode_from_queries(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &LlmConfig,
    queries: TensorId,
    encoder_hidden: TensorId,
    mode: &mut Mode,
) -> Result<TensorId> {
    let mut x = queries;
    for i in 0..config.n_layers {
        x = decoder_layer(
            g,
            nodes,
            &alloc::format!("dec.{i}"),
            x,
            encoder_hidden,
            config.d_model,
            config.n_heads,
            mode,
        )?;
    }
    let w = nodes.node(g, "out.proj.w")?;
    let b = nodes.node(g, "out.proj.b")?;
    dense(g, x, w, b)
}

/// Standard NAR decode: queries are the `t_max` positional encoding
/// rows, one parallel pass, no masking.
pub fn nar_decode_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &LlmConfig,
    encoder_hidden: TensorId,
    mode: &mut Mode,
) -> Result<TensorId> {
    let pe = positional_encoding(config.t_max, config.d_model)?;
    let queries = g.constant(pe);
    nar_decode_from_queries(g, nodes, config, queries, encoder_hidden, mode)
}

/// The regulated length: `clamp(round(ratio * t_max), 1, t_max)`.
pub fn regulated_length(ratio: f64, t_max: usize) -> usize {
    let t = (ratio * t_max as f64).round() as i64;
    t.clamp(1, t_max as i64) as usize
}

/// Keeps the first `regulated_length(ratio, rows)` rows.
pub fn length_regulate(latents: &Tensor, ratio: f64) -> Result<Tensor> {
    latents.slice_rows(0, regulated_length(ratio, latents.rows()))
}

/// Frozen-teacher latent targets: the encoder mean of every frame.
pub fn teacher_targets(poses: &PoseSequence, vae: &VaeBundle) -> Result<Tensor> {
    if poses.width() != vae.config.input_dim {
        return Err(CoreError::format("pose width differs from teacher input"));
    }
    let (mu, _logvar) = encode_batch(vae, &poses.to_matrix())?;
    Ok(mu)
}

/// Mean squared error over all elements of two equal-shape latent
/// sequences.
pub fn distillation_loss(z_lang: &Tensor, z_pose: &Tensor) -> Result<f64> {
    if z_lang.shape() != z_pose.shape() {
        return Err(CoreError::internal("distillation shapes differ"));
    }
    let n = z_lang.len() as f64;
    Ok(z_lang
        .values()
        .iter()
        .zip(z_pose.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// MSE between the frozen generator's decode of `z_lang` and the
/// target poses, in normalized coordinate space.
pub fn llm_pose_loss(target: &PoseSequence, z_lang: &Tensor, vae: &VaeBundle) -> Result<f64> {
    if z_lang.rows() != target.len() {
        return Err(CoreError::internal("pose loss length mismatch"));
    }
    let decoded = crate::vae::decode_batch(vae, z_lang)?;
    let t = target.to_matrix();
    if decoded.shape() != t.shape() {
        return Err(CoreError::internal("pose loss shape mismatch"));
    }
    let n = t.len() as f64;
    Ok(decoded
        .values()
        .iter()
        .zip(t.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Binary cross-entropy between the scalar ratios, prediction clamped
/// like every other BCE in the system.
pub fn length_loss(target_ratio: f64, predicted_ratio: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target_ratio) {
        return Err(CoreError::Input(String::from("target ratio outside [0,1]")));
    }
    let p = predicted_ratio.clamp(crate::autodiff::BCE_EPS, 1.0 - crate::autodiff::BCE_EPS);
    Ok(-(target_ratio * p.ln() + (1.0 - target_ratio) * (1.0 - p).ln()))
}

/// Unweighted sum of the three terms.
pub fn total_loss(pose_l: f64, distil_l: f64, length_l: f64) -> f64 {
    pose_l + distil_l + length_l
}

/// Loss nodes of one example; optional terms follow the config flags.
pub struct ExampleLoss {
    pub total: TensorId,
    pub pose: Option<TensorId>,
    pub distillation: Option<TensorId>,
    pub length: TensorId,
}

/// Builds one example's training loss on the graph. The student
/// output is truncated to the ground-truth length for the pose and
/// distillation terms; the ratio head is trained only by the length
/// term. The total is the unweighted sum of the active terms.
#[allow(clippy::too_many_arguments)]
pub fn example_loss_graph(
    g: &mut Graph,
    llm_nodes: &mut ParamNodes,
    vae_nodes: &mut ParamNodes,
    config: &LlmConfig,
    vae: &VaeBundle,
    example: &LlmExample,
    z_pose: &Tensor,
    mode: &mut Mode,
) -> Result<ExampleLoss> {
    let t_gt = example.poses.len();
    if t_gt > config.t_max {
        return Err(CoreError::Data(alloc::format!(
            "sequence of {t_gt} frames exceeds t_max {}",
            config.t_max
        )));
    }

    let (hidden, pooled) = encode_text_graph(g, llm_nodes, config, &example.token_ids, mode)?;
    let ratio = regulator_graph(g, llm_nodes, config, pooled)?;
    let z_full = nar_decode_graph(g, llm_nodes, config, hidden, mode)?;
    let z_lang = g.slice_rows(z_full, 0, t_gt)?;

    let target_ratio = t_gt as f64 / config.t_max as f64;
    let length = g.bce_mean(ratio, Tensor::scalar(target_ratio))?;
    let mut total = length;

    let pose = if config.use_pose_loss {
        let decoded = decode_graph(g, vae_nodes, &vae.config, z_lang)?;
        let l = g.mse_mean(decoded, example.poses.to_matrix())?;
        total = g.add(total, l)?;
        Some(l)
    } else {
        None
    };
    let distillation = if config.use_distillation {
        let l = g.mse_mean(z_lang, z_pose.clone())?;
        total = g.add(total, l)?;
        Some(l)
    } else {
        None
    };
    Ok(ExampleLoss {
        total,
        pose,
        distillation,
        length,
    })
}

/// Per-epoch mean of each loss term; inactive terms stay `None` so a
/// trace file shows exactly which terms entered the total.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmLossTerms {
    pub total: f64,
    pub pose: Option<f64>,
    pub distillation: Option<f64>,
    pub length: f64,
}

/// Trains the LLM against a frozen VAE. Teacher targets are computed
/// once up front; the VAE enters every graph as constants, so no
/// gradient can touch it. Returns the bundle and per-epoch loss terms.
pub fn train_llm(
    examples: &[LlmExample],
    vae: &VaeBundle,
    config: &LlmConfig,
    train: &TrainConfig,
    seed: u64,
    resume: Option<(ParamSet, usize)>,
) -> Result<(LlmBundle, Vec<LlmLossTerms>)> {
    config.validate()?;
    train.validate()?;
    if config.latent_dim != vae.config.latent_dim {
        return Err(CoreError::config("llm latent_dim differs from vae"));
    }
    if examples.is_empty() {
        return Err(CoreError::InsufficientData(String::from(
            "llm training needs at least one example",
        )));
    }

    let mut init_rng = SeededRng::new(seed, purpose::INIT);
    let mut bundle = init_llm(config, &mut init_rng)?;
    let start = apply_resume(&mut bundle.params, resume, train.epochs)?;

    let targets: Vec<Tensor> = examples
        .iter()
        .map(|ex| teacher_targets(&ex.poses, vae))
        .collect::<Result<_>>()?;

    let mut opt = AdamW::new(train.optim);
    let mut trace = Vec::with_capacity(train.epochs - start);
    for epoch in start..train.epochs {
        let mut rng = SeededRng::for_epoch(seed, purpose::TRAIN, epoch as u64);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        rng.shuffle(&mut order);

        let mut sums = LlmLossTerms {
            total: 0.0,
            pose: config.use_pose_loss.then_some(0.0),
            distillation: config.use_distillation.then_some(0.0),
            length: 0.0,
        };
        let mut batches = 0.0;
        for chunk in order.chunks(train.batch_size) {
            let mut g = Graph::new();
            let mut llm_nodes = ParamNodes::trainable(&bundle.params);
            let mut vae_nodes = ParamNodes::frozen(&vae.params);
            let mut mode = Mode::Train {
                dropout: config.dropout,
                rng: &mut rng,
            };
            let mut losses = Vec::with_capacity(chunk.len());
            for &ix in chunk {
                losses.push(example_loss_graph(
                    &mut g,
                    &mut llm_nodes,
                    &mut vae_nodes,
                    config,
                    vae,
                    &examples[ix],
                    &targets[ix],
                    &mut mode,
                )?);
            }
            let mut sum = losses[0].total;
            for l in &losses[1..] {
                sum = g.add(sum, l.total)?;
            }
            let loss = g.scale(sum, 1.0 / chunk.len() as f64);

            let loss_v = g.value(loss).item()?;
            if !loss_v.is_finite() {
                return Err(CoreError::training(alloc::format!(
                    "epoch {epoch}: llm loss is not finite"
                )));
            }

            let inv = 1.0 / chunk.len() as f64;
            for l in &losses {
                if let (Some(s), Some(id)) = (sums.pose.as_mut(), l.pose) {
                    *s += g.value(id).item()? * inv;
                }
                if let (Some(s), Some(id)) = (sums.distillation.as_mut(), l.distillation) {
                    *s += g.value(id).item()? * inv;
                }
                sums.length += g.value(l.length).item()? * inv;
            }

            g.backward(loss)?;
            opt.step(&mut bundle.params, &g.param_grads())?;
            sums.total += loss_v;
            batches += 1.0;
        }
        trace.push(LlmLossTerms {
            total: sums.total / batches,
            pose: sums.pose.map(|s| s / batches),
            distillation: sums.distillation.map(|s| s / batches),
            length: sums.length / batches,
        });
    }
    Ok((bundle, trace))
}

/// Deterministic evaluation-mode wrappers over the graph functions.
pub fn encode_text(bundle: &LlmBundle, token_ids: &[usize]) -> Result<(Tensor, Tensor)> {
    let mut g = Graph::new();
    let mut nodes = ParamNodes::frozen(&bundle.params);
    let (hidden, pooled) =
        encode_text_graph(&mut g, &mut nodes, &bundle.config, token_ids, &mut Mode::Eval)?;
    Ok((g.value(hidden).clone(), g.value(pooled).clone()))
}

pub fn predict_length_ratio(bundle: &LlmBundle, pooled: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let mut nodes = ParamNodes::frozen(&bundle.params);
    let pi = g.constant(pooled.clone());
    let ratio = regulator_graph(&mut g, &mut nodes, &bundle.config, pi)?;
    g.value(ratio).item()
}

pub fn nar_decode(bundle: &LlmBundle, encoder_hidden: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let mut nodes = ParamNodes::frozen(&bundle.params);
    let hi = g.constant(encoder_hidden.clone());
    let z = nar_decode_graph(&mut g, &mut nodes, &bundle.config, hi, &mut Mode::Eval)?;
    Ok(g.value(z).clone())
}

/// Full inference: text to a length-regulated pose sequence and its
/// frame count. One parallel decoder pass; the generator decodes only
/// the regulated rows.
pub fn generate(
    token_ids: &[usize],
    llm: &LlmBundle,
    vae: &VaeBundle,
) -> Result<(PoseSequence, usize)> {
    if llm.config.latent_dim != vae.config.latent_dim {
        return Err(CoreError::config("llm latent_dim differs from vae"));
    }
    let mut g = Graph::new();
    let mut nodes = ParamNodes::frozen(&llm.params);
    let mut mode = Mode::Eval;
    let (hidden, pooled) = encode_text_graph(&mut g, &mut nodes, &llm.config, token_ids, &mut mode)?;
    let ratio = regulator_graph(&mut g, &mut nodes, &llm.config, pooled)?;
    let z_full = nar_decode_graph(&mut g, &mut nodes, &llm.config, hidden, &mut mode)?;

    let ratio_v = g.value(ratio).item()?;
    let z = length_regulate(g.value(z_full), ratio_v)?;
    let poses = crate::vae::decode_batch(vae, &z)?;
    Ok((PoseSequence::from_matrix(&poses)?, z.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use crate::pose::PoseFrame;
    use crate::vae::{init_vae, VaeConfig};
    use alloc::vec;

    fn tiny_llm_config() -> LlmConfig {
        LlmConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 12,
            dropout: 0.1,
            t_max: 5,
            vocab_size: 6,
            latent_dim: 2,
            regulator_layers: 2,
            use_distillation: true,
            use_pose_loss: true,
        }
    }

    fn tiny_vae() -> VaeBundle {
        let cfg = VaeConfig {
            input_dim: 4,
            latent_dim: 2,
            hidden_dims: [4, 3, 3],
            lambda_kl: 1e-4,
        };
        let mut rng = SeededRng::new(800, purpose::INIT);
        init_vae(&cfg, &mut rng).unwrap()
    }

    fn tiny_bundle(seed: u64) -> LlmBundle {
        let mut rng = SeededRng::new(seed, purpose::INIT);
        init_llm(&tiny_llm_config(), &mut rng).unwrap()
    }

    fn demo_sequence(t: usize) -> PoseSequence {
        let frames = (0..t)
            .map(|i| {
                PoseFrame::new(vec![
                    0.2 + 0.1 * i as f64 % 0.6,
                    0.5,
                    0.3 + 0.05 * i as f64,
                    0.7 - 0.04 * i as f64,
                ])
            })
            .collect();
        PoseSequence::new(frames).unwrap()
    }

    #[test]
    fn encode_text_prepends_cls_row() {
        let b = tiny_bundle(1);
        let (hidden, pooled) = encode_text(&b, &[2, 4, 1]).unwrap();
        assert_eq!(hidden.shape(), (4, 8));
        assert_eq!(pooled.shape(), (1, 8));
        assert_eq!(pooled.values(), hidden.row(0));
    }

    #[test]
    fn encode_text_rejects_bad_tokens() {
        let b = tiny_bundle(1);
        assert!(matches!(encode_text(&b, &[]), Err(CoreError::Input(_))));
        assert!(matches!(encode_text(&b, &[0, 6]), Err(CoreError::Input(_))));
    }

    #[test]
    fn permuting_tokens_changes_the_encoding() {
        let b = tiny_bundle(2);
        let (h1, _) = encode_text(&b, &[1, 2, 3]).unwrap();
        let (h2, _) = encode_text(&b, &[3, 2, 1]).unwrap();
        assert_ne!(h1.values(), h2.values());
        // Determinism with dropout off.
        let (h3, _) = encode_text(&b, &[1, 2, 3]).unwrap();
        assert_eq!(h1.values(), h3.values());
    }

    #[test]
    fn zeroed_regulator_head_predicts_half() {
        let mut b = tiny_bundle(3);
        for l in 1..=2 {
            for suffix in ["w", "b"] {
                let name = alloc::format!("reg.l{l}.{suffix}");
                let shape = b.params.get(&name).unwrap().shape();
                b.params.set(&name, Tensor::zeros(shape.0, shape.1)).unwrap();
            }
        }
        let pooled = Tensor::row_vec(vec![0.4, -1.0, 2.0, 0.1, 0.0, 3.0, -2.0, 0.9]);
        assert_eq!(predict_length_ratio(&b, &pooled).unwrap(), 0.5);
    }

    #[test]
    fn regulator_output_stays_inside_unit_interval() {
        let b = tiny_bundle(4);
        let mut rng = SeededRng::new(4, purpose::EVAL);
        for _ in 0..10_000 {
            let pooled = Tensor::from_fn(1, 8, |_, _| rng.normal() * 5.0);
            let r = predict_length_ratio(&b, &pooled).unwrap();
            assert!(r > 0.0 && r < 1.0);
        }
    }

    #[test]
    fn nar_decode_has_contract_shape_and_is_deterministic() {
        let b = tiny_bundle(5);
        let (hidden, _) = encode_text(&b, &[1, 2]).unwrap();
        let z1 = nar_decode(&b, &hidden).unwrap();
        let z2 = nar_decode(&b, &hidden).unwrap();
        assert_eq!(z1.shape(), (5, 2));
        assert_eq!(z1.values(), z2.values());
    }

    #[test]
    fn identical_queries_collapse_nar_output_rows() {
        let b = tiny_bundle(6);
        let (hidden, _) = encode_text(&b, &[1, 2]).unwrap();
        let mut g = Graph::new();
        let mut nodes = ParamNodes::frozen(&b.params);
        let hi = g.constant(hidden);
        let row: Vec<f64> = (0..8).map(|c| 0.1 * c as f64).collect();
        let queries = g.constant(Tensor::from_fn(5, 8, |_, c| row[c]));
        let z = nar_decode_from_queries(&mut g, &mut nodes, &b.config, queries, hi, &mut Mode::Eval)
            .unwrap();
        let first = g.value(z).row(0).to_vec();
        for r in 1..5 {
            assert_eq!(g.value(z).row(r), first.as_slice());
        }
    }

    #[test]
    fn regulated_length_follows_the_clamp_round_rule() {
        assert_eq!(regulated_length(1.0, 34), 34);
        assert_eq!(regulated_length(0.5, 34), 17);
        assert_eq!(regulated_length(0.001, 34), 1);
        assert_eq!(regulated_length(0.999, 34), 34);
        // round(0.044 * 34) = round(1.496) = 1
        assert_eq!(regulated_length(0.044, 34), 1);
    }

    #[test]
    fn teacher_targets_are_per_frame_encoder_means() {
        let vae = tiny_vae();
        let frame = PoseFrame::new(vec![0.3, 0.6, 0.1, 0.8]);
        let seq = PoseSequence::new(vec![frame.clone(), frame.clone(), frame.clone()]).unwrap();
        let z = teacher_targets(&seq, &vae).unwrap();
        assert_eq!(z.shape(), (3, 2));
        assert_eq!(z.row(0), z.row(1));
        assert_eq!(z.row(1), z.row(2));
        let single = crate::vae::encode(&vae, &frame).unwrap();
        assert_eq!(z.row(0), single.mu.as_slice());
    }

    #[test]
    fn distillation_loss_reference_points() {
        let a = Tensor::from_fn(3, 2, |r, c| (r + c) as f64 * 0.3);
        assert_eq!(distillation_loss(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 1.0);
        assert!((distillation_loss(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let c = a.map(|v| v - 0.5);
        let l = distillation_loss(&a, &c).unwrap();
        assert!(l >= 0.0 && (l - 0.25).abs() < 1e-15);
        assert!(distillation_loss(&a, &Tensor::zeros(2, 2)).is_err());
    }

    #[test]
    fn pose_loss_measures_offset_from_decoded_output() {
        let vae = tiny_vae();
        let z = Tensor::from_fn(2, 2, |r, c| 0.2 * (r as f64) - 0.1 * (c as f64));
        let decoded = crate::vae::decode_batch(&vae, &z).unwrap();

        let exact = PoseSequence::from_matrix(&decoded).unwrap();
        assert!(llm_pose_loss(&exact, &z, &vae).unwrap() < 1e-30);

        let shifted = PoseSequence::from_matrix(&decoded.map(|v| v - 0.1)).unwrap();
        let l = llm_pose_loss(&shifted, &z, &vae).unwrap();
        assert!((l - 0.01).abs() < 1e-12, "{l}");
    }

    #[test]
    fn length_loss_reference_points() {
        let ln2 = core::f64::consts::LN_2;
        assert!((length_loss(0.5, 0.5).unwrap() - ln2).abs() < 1e-12);
        assert!(length_loss(1.0, 1.0 - 1e-9).unwrap() < 1e-6);
        assert!(length_loss(0.0, 1e-9).unwrap() < 1e-6);
        // Minimum at the target.
        let at = length_loss(0.5, 0.5).unwrap();
        for p in [0.42, 0.48, 0.52, 0.58] {
            assert!(length_loss(0.5, p).unwrap() > at);
        }
        assert!(length_loss(1.5, 0.5).is_err());
    }

    #[test]
    fn total_loss_is_the_plain_sum() {
        assert_eq!(total_loss(0.0, 0.0, 0.0), 0.0);
        assert_eq!(total_loss(1.0, 2.0, 3.0), 6.0);
        let mut rng = SeededRng::new(10, purpose::EVAL);
        for _ in 0..20 {
            let (a, b, c) = (rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0));
            assert_eq!(total_loss(a, b, c), a + b + c);
        }
    }

    fn demo_examples() -> Vec<LlmExample> {
        vec![
            LlmExample {
                token_ids: vec![1, 3],
                poses: demo_sequence(4),
            },
            LlmExample {
                token_ids: vec![2],
                poses: demo_sequence(2),
            },
            LlmExample {
                token_ids: vec![4, 5, 1],
                poses: demo_sequence(5),
            },
        ]
    }

    fn quick_train(
        seed: u64,
        use_distillation: bool,
        use_pose_loss: bool,
    ) -> (LlmBundle, Vec<LlmLossTerms>) {
        let vae = tiny_vae();
        let mut config = tiny_llm_config();
        config.use_distillation = use_distillation;
        config.use_pose_loss = use_pose_loss;
        let train = TrainConfig {
            epochs: 2,
            batch_size: 2,
            optim: Default::default(),
        };
        train_llm(&demo_examples(), &vae, &config, &train, seed, None).unwrap()
    }

    #[test]
    fn zero_epoch_training_returns_the_initial_bundle() {
        let vae = tiny_vae();
        let config = tiny_llm_config();
        let train = TrainConfig {
            epochs: 0,
            batch_size: 2,
            optim: Default::default(),
        };
        let (bundle, trace) = train_llm(&demo_examples(), &vae, &config, &train, 9, None).unwrap();
        assert!(trace.is_empty());
        let mut rng = SeededRng::new(9, purpose::INIT);
        let fresh = init_llm(&config, &mut rng).unwrap();
        assert!(bundle.params.bits_eq(&fresh.params));
    }

    #[test]
    fn training_is_seed_deterministic_and_leaves_the_teacher_alone() {
        let vae = tiny_vae();
        let before = vae.params.clone();
        let (a, ta) = quick_train(77, true, true);
        let (b, tb) = quick_train(77, true, true);
        assert!(a.params.bits_eq(&b.params));
        assert_eq!(ta, tb);
        assert!(vae.params.bits_eq(&before));
        let (c, _) = quick_train(78, true, true);
        assert!(!a.params.bits_eq(&c.params));
    }

    #[test]
    fn loss_flags_control_which_terms_are_traced() {
        let (_b, full) = quick_train(79, true, true);
        assert_eq!(full.len(), 2);
        for e in &full {
            assert!(e.total.is_finite());
            let sum = e.pose.unwrap() + e.distillation.unwrap() + e.length;
            assert!((e.total - sum).abs() < 1e-9, "{} vs {sum}", e.total);
        }

        let (_b, no_kd) = quick_train(79, false, true);
        for e in &no_kd {
            assert!(e.distillation.is_none());
            let sum = e.pose.unwrap() + e.length;
            assert!((e.total - sum).abs() < 1e-9);
        }

        let (_b, no_pose) = quick_train(79, true, false);
        for e in &no_pose {
            assert!(e.pose.is_none());
            assert!(e.distillation.is_some());
            assert!(e.total.is_finite());
        }

        let (_b, bare) = quick_train(79, false, false);
        for e in &bare {
            assert!(e.pose.is_none() && e.distillation.is_none());
            assert!((e.total - e.length).abs() < 1e-9);
        }
    }

    #[test]
    fn generate_contract() {
        let vae = tiny_vae();
        let (bundle, _) = quick_train(80, true, true);
        let (poses, t) = generate(&[1, 2], &bundle, &vae).unwrap();
        assert_eq!(poses.len(), t);
        assert!(t >= 1 && t <= bundle.config.t_max);
        for f in poses.frames() {
            assert!(f.coords.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        let (hidden, pooled) = encode_text(&bundle, &[1, 2]).unwrap();
        let ratio = predict_length_ratio(&bundle, &pooled).unwrap();
        assert_eq!(t, regulated_length(ratio, bundle.config.t_max));
        let _ = hidden;

        let (again, t2) = generate(&[1, 2], &bundle, &vae).unwrap();
        assert_eq!(t2, t);
        assert_eq!(again, poses);
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences_and_spare_the_vae() {
        let vae = tiny_vae();
        let config = tiny_llm_config();
        let mut rng = SeededRng::new(500, purpose::INIT);
        let bundle = init_llm(&config, &mut rng).unwrap();
        let example = LlmExample {
            token_ids: vec![1, 4],
            poses: demo_sequence(3),
        };
        let z_pose = teacher_targets(&example.poses, &vae).unwrap();

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
            let mut llm_nodes = ParamNodes::trainable(&set);
            let mut vae_nodes = ParamNodes::frozen(&vae.params);
            let loss = example_loss_graph(
                &mut g,
                &mut llm_nodes,
                &mut vae_nodes,
                &config,
                &vae,
                &example,
                &z_pose,
                &mut Mode::Eval,
            )?;
            Ok((g, loss.total))
        })
        .unwrap();
        assert!(
            report.passed(),
            "max rel err {}, first failures: {:?}",
            report.max_rel_error,
            &report.failures[..report.failures.len().min(3)]
        );

        // The same loss must produce no gradient entries for any VAE
        // parameter: the frozen network enters as constants.
        let mut g = Graph::new();
        let mut llm_nodes = ParamNodes::trainable(&bundle.params);
        let mut vae_nodes = ParamNodes::frozen(&vae.params);
        let loss = example_loss_graph(
            &mut g,
            &mut llm_nodes,
            &mut vae_nodes,
            &config,
            &vae,
            &example,
            &z_pose,
            &mut Mode::Eval,
        )
        .unwrap();
        g.backward(loss.total).unwrap();
        let grads = g.param_grads();
        for name in vae.params.names() {
            assert!(!grads.contains_key(name), "teacher gradient for {name}");
        }
        assert!(grads.contains_key("embed.tok"));
    }
}
