//! Evaluation: Fréchet gesture distance over learned sequence
//! features, duration accuracy, and per-length-interval analysis.
//!
//! The feature extractor is a transformer autoencoder over windows of
//! exactly `fixed_len` frames: encode, mean-pool the positions into
//! one feature vector, decode back to the window. It is trained with
//! BCE reconstruction and afterwards only the encoder half is used.
//! Distances compare Gaussian moment estimates of real and generated
//! feature sets.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Graph, TensorId};
use crate::error::{CoreError, Result};
use crate::linalg::{matrix_sqrt_psd, trace};
use crate::nn::{
    decoder_layer, dense, encoder_layer, init_dense, init_decoder_layer, init_encoder_layer,
    positional_encoding, Mode, ParamNodes,
};
use crate::optim::{apply_resume, AdamW, ParamSet, TrainConfig};
use crate::pose::PoseSequence;
use crate::rng::{purpose, SeededRng};
use crate::tensor::Tensor;

/// Frame rate the duration metric is defined against.
pub const DEFAULT_FPS: usize = 25;

/// A distance this far below zero is rounding noise and clamps to 0;
/// anything lower is treated as a numerical failure.
pub const FGD_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TaeConfig {
    /// Flat pose width `J*K`.
    pub input_dim: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    /// Window length every sequence is cut or padded to.
    pub fixed_len: usize,
    pub feature_dim: usize,
}

impl TaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.d_model == 0 || self.n_layers == 0 || self.ffn_dim == 0 {
            return Err(CoreError::config("tae dims must be positive"));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(CoreError::config("d_model must divide by n_heads"));
        }
        if self.d_model % 2 != 0 {
            return Err(CoreError::config("d_model must be even for the encoding"));
        }
        if self.fixed_len == 0 || self.feature_dim == 0 {
            return Err(CoreError::config("fixed_len and feature_dim must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::config("dropout must be in [0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TaeBundle {
    pub config: TaeConfig,
    pub params: ParamSet,
}

/// Sample mean and unbiased covariance of a feature set.
#[derive(Debug, Clone)]
pub struct MomentStats {
    /// `[1 x feature_dim]`.
    pub mean: Tensor,
    /// `[feature_dim x feature_dim]`, exactly symmetric.
    pub cov: Tensor,
    pub n_samples: usize,
}

/// One length bin of an interval report. `fgd` is absent when either
/// side has fewer than two feature windows in the bin.
#[derive(Debug, Clone)]
pub struct IntervalBin {
    /// Frame-length range `[lo, hi)`.
    pub lo: usize,
    pub hi: usize,
    pub fgd: Option<f64>,
    /// Sequence pairs contributing to the bin.
    pub count: usize,
    pub n_real_windows: usize,
    pub n_gen_windows: usize,
}

#[derive(Debug, Clone)]
pub struct IntervalReport {
    pub bins: Vec<IntervalBin>,
    pub fps: usize,
}

/// How sequences enter a length bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMode {
    /// Whole sequences, grouped by the real sequence's length.
    Bucket,
    /// Every pair truncated to its first `hi` frames, all pairs in
    /// every bin; isolates how generation quality varies over time.
    Prefix,
}

/// Cuts a sequence into windows of exactly `fixed_len` frames:
/// non-overlapping windows with the trailing remainder dropped, or a
/// single window padded by repeating the last frame.
pub fn fix_length(seq: &PoseSequence, fixed_len: usize) -> Result<Vec<PoseSequence>> {
    if fixed_len == 0 {
        return Err(CoreError::config("fixed_len must be positive"));
    }
    let t = seq.len();
    if t >= fixed_len {
        return (0..t / fixed_len)
            .map(|w| {
                let frames = seq.frames()[w * fixed_len..(w + 1) * fixed_len].to_vec();
                PoseSequence::new(frames)
            })
            .collect();
    }
    let mut frames = seq.frames().to_vec();
    let last = frames[t - 1].clone();
    frames.resize(fixed_len, last);
    Ok(alloc::vec![PoseSequence::new(frames)?])
}

pub fn init_tae(config: &TaeConfig, rng: &mut SeededRng) -> Result<TaeBundle> {
    config.validate()?;
    let mut params = ParamSet::new();
    init_dense(&mut params, "in.proj", config.input_dim, config.d_model, rng);
    for i in 0..config.n_layers {
        init_encoder_layer(
            &mut params,
            &alloc::format!("enc.{i}"),
            config.d_model,
            config.ffn_dim,
            rng,
        );
    }
    init_dense(&mut params, "feat", config.d_model, config.feature_dim, rng);
    init_dense(&mut params, "unfeat", config.feature_dim, config.d_model, rng);
    for i in 0..config.n_layers {
        init_decoder_layer(
            &mut params,
            &alloc::format!("dec.{i}"),
            config.d_model,
            config.ffn_dim,
            rng,
        );
    }
    init_dense(&mut params, "out.proj", config.d_model, config.input_dim, rng);
    Ok(TaeBundle {
        config: config.clone(),
        params,
    })
}

/// Encoder half: window `[fixed_len x input_dim]` to one feature row.
/// Positions are mean-pooled before the feature projection.
pub fn tae_encode_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &TaeConfig,
    window: TensorId,
    mode: &mut Mode,
) -> Result<TensorId> {
    let shape = g.value(window).shape();
    if shape != (config.fixed_len, config.input_dim) {
        return Err(CoreError::Input(alloc::format!(
            "window is {}x{}, expected {}x{}",
            shape.0,
            shape.1,
            config.fixed_len,
            config.input_dim
        )));
    }
    let w = nodes.node(g, "in.proj.w")?;
    let b = nodes.node(g, "in.proj.b")?;
    let mut x = dense(g, window, w, b)?;
    let pe = positional_encoding(config.fixed_len, config.d_model)?;
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
    let pool = g.constant(Tensor::filled(1, config.fixed_len, 1.0 / config.fixed_len as f64));
    let pooled = g.matmul(pool, x)?;
    let w = nodes.node(g, "feat.w")?;
    let b = nodes.node(g, "feat.b")?;
    dense(g, pooled, w, b)
}

/// Decoder half: one feature row back to a `[fixed_len x input_dim]`
/// window in (0,1). The feature is the single cross-attention key.
pub fn tae_decode_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &TaeConfig,
    feature: TensorId,
    mode: &mut Mode,
) -> Result<TensorId> {
    let w = nodes.node(g, "unfeat.w")?;
    let b = nodes.node(g, "unfeat.b")?;
    let memory = dense(g, feature, w, b)?;
    let pe = positional_encoding(config.fixed_len, config.d_model)?;
    let mut x = g.constant(pe);
    for i in 0..config.n_layers {
        x = decoder_layer(
            g,
            nodes,
            &alloc::format!("dec.{i}"),
            x,
            memory,
            config.d_model,
            config.n_heads,
            mode,
        )?;
    }
    let w = nodes.node(g, "out.proj.w")?;
    let b = nodes.node(g, "out.proj.b")?;
    let out = dense(g, x, w, b)?;
    Ok(g.sigmoid(out))
}

/// Reconstruction BCE of one window through the autoencoder.
pub fn tae_loss_graph(
    g: &mut Graph,
    nodes: &mut ParamNodes,
    config: &TaeConfig,
    window: &Tensor,
    mode: &mut Mode,
) -> Result<TensorId> {
    let x = g.constant(window.clone());
    let feature = tae_encode_graph(g, nodes, config, x, mode)?;
    let recon = tae_decode_graph(g, nodes, config, feature, mode)?;
    g.bce_mean(recon, window.clone())
}

/// Trains the autoencoder on every window of every sequence. Returns
/// the bundle and the mean loss per epoch.
pub fn train_tae(
    sequences: &[PoseSequence],
    config: &TaeConfig,
    train: &TrainConfig,
    seed: u64,
    resume: Option<(ParamSet, usize)>,
) -> Result<(TaeBundle, Vec<f64>)> {
    config.validate()?;
    train.validate()?;
    let mut windows: Vec<Tensor> = Vec::new();
    for seq in sequences {
        if seq.width() != config.input_dim {
            return Err(CoreError::format("sequence width differs from tae input"));
        }
        for w in fix_length(seq, config.fixed_len)? {
            windows.push(w.to_matrix());
        }
    }
    if windows.is_empty() {
        return Err(CoreError::InsufficientData(String::from(
            "tae training needs at least one window",
        )));
    }

    let mut init_rng = SeededRng::new(seed, purpose::INIT);
    let mut bundle = init_tae(config, &mut init_rng)?;
    let start = apply_resume(&mut bundle.params, resume, train.epochs)?;

    let mut opt = AdamW::new(train.optim);
    let mut trace = Vec::with_capacity(train.epochs - start);
    for epoch in start..train.epochs {
        let mut rng = SeededRng::for_epoch(seed, purpose::TRAIN, epoch as u64);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(train.batch_size) {
            let mut g = Graph::new();
            let mut nodes = ParamNodes::trainable(&bundle.params);
            let mut mode = Mode::Train {
                dropout: config.dropout,
                rng: &mut rng,
            };
            let mut losses = Vec::with_capacity(chunk.len());
            for &ix in chunk {
                losses.push(tae_loss_graph(&mut g, &mut nodes, config, &windows[ix], &mut mode)?);
            }
            let mut sum = losses[0];
            for &l in &losses[1..] {
                sum = g.add(sum, l)?;
            }
            let loss = g.scale(sum, 1.0 / chunk.len() as f64);

            let loss_v = g.value(loss).item()?;
            if !loss_v.is_finite() {
                return Err(CoreError::training(alloc::format!(
                    "epoch {epoch}: tae loss is not finite"
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

/// Encoder features of fixed-length windows, one row per window, in
/// evaluation mode.
pub fn extract_features(windows: &[PoseSequence], tae: &TaeBundle) -> Result<Tensor> {
    if windows.is_empty() {
        return Err(CoreError::Input(String::from("no windows to featurize")));
    }
    let mut features = Tensor::zeros(windows.len(), tae.config.feature_dim);
    for (i, w) in windows.iter().enumerate() {
        if w.len() != tae.config.fixed_len {
            return Err(CoreError::Input(alloc::format!(
                "window of {} frames, feature extractor needs exactly {}",
                w.len(),
                tae.config.fixed_len
            )));
        }
        let mut g = Graph::new();
        let mut nodes = ParamNodes::frozen(&tae.params);
        let x = g.constant(w.to_matrix());
        let f = tae_encode_graph(&mut g, &mut nodes, &tae.config, x, &mut Mode::Eval)?;
        features.row_mut(i).copy_from_slice(g.value(f).row(0));
    }
    Ok(features)
}

/// Sample mean and `1/(n-1)` covariance of the feature rows. The
/// covariance is symmetrized exactly as `(S + S^T)/2`.
pub fn gaussian_moments(features: &Tensor) -> Result<MomentStats> {
    let n = features.rows();
    let d = features.cols();
    if n < 2 {
        return Err(CoreError::InsufficientData(alloc::format!(
            "moment estimation needs >= 2 samples, got {n}"
        )));
    }
    let mut mean = Tensor::zeros(1, d);
    for r in 0..n {
        for (c, v) in features.row(r).iter().enumerate() {
            mean.values_mut()[c] += v;
        }
    }
    mean.scale_assign(1.0 / n as f64);

    let mut cov = Tensor::zeros(d, d);
    for r in 0..n {
        let row = features.row(r);
        for i in 0..d {
            let di = row[i] - mean.values()[i];
            for j in 0..d {
                let v = di * (row[j] - mean.values()[j]);
                *cov.values_mut().get_mut(i * d + j).unwrap() += v;
            }
        }
    }
    cov.scale_assign(1.0 / (n - 1) as f64);
    let sym = Tensor::from_fn(d, d, |i, j| 0.5 * (cov.get(i, j) + cov.get(j, i)));
    Ok(MomentStats {
        mean,
        cov: sym,
        n_samples: n,
    })
}

/// Fréchet distance between two Gaussian moment estimates:
/// `|mu_r - mu_g|^2 + tr(S_r + S_g - 2 (S_r S_g)^{1/2})`. The cross
/// trace uses `tr((S_r^{1/2} S_g S_r^{1/2})^{1/2})`, which equals the
/// direct form while keeping every square root symmetric PSD.
pub fn fgd(real: &MomentStats, gen: &MomentStats) -> Result<f64> {
    if real.mean.shape() != gen.mean.shape() || real.cov.shape() != gen.cov.shape() {
        return Err(CoreError::shape("moment dimensions differ"));
    }
    let mean_term: f64 = real
        .mean
        .values()
        .iter()
        .zip(gen.mean.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let sqrt_r = matrix_sqrt_psd(&real.cov)?;
    let inner = sqrt_r.matmul(&gen.cov)?.matmul(&sqrt_r)?;
    let cross = matrix_sqrt_psd(&inner)?;
    let raw = mean_term + trace(&real.cov)? + trace(&gen.cov)? - 2.0 * trace(&cross)?;
    if raw < -FGD_SLACK {
        return Err(CoreError::internal(alloc::format!(
            "distance {raw:.3e} below the numerical slack"
        )));
    }
    Ok(raw.max(0.0))
}

/// Fraction of predictions within one second of the ground truth:
/// strictly fewer than `fps` frames apart.
pub fn duration_accuracy(pred: &[usize], gt: &[usize], fps: usize) -> Result<f64> {
    if pred.is_empty() {
        return Err(CoreError::Input(String::from("no durations to compare")));
    }
    if pred.len() != gt.len() {
        return Err(CoreError::Input(String::from("duration list lengths differ")));
    }
    if fps == 0 {
        return Err(CoreError::config("fps must be positive"));
    }
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(&p, &g)| p.abs_diff(g) < fps)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

fn bin_windows(seqs: &[&PoseSequence], fixed_len: usize) -> Result<Vec<PoseSequence>> {
    let mut windows = Vec::new();
    for seq in seqs {
        windows.extend(fix_length(seq, fixed_len)?);
    }
    Ok(windows)
}

fn bin_fgd(
    real: &[&PoseSequence],
    gen: &[&PoseSequence],
    tae: &TaeBundle,
) -> Result<(Option<f64>, usize, usize)> {
    let rw = bin_windows(real, tae.config.fixed_len)?;
    let gw = bin_windows(gen, tae.config.fixed_len)?;
    if rw.len() < 2 || gw.len() < 2 {
        return Ok((None, rw.len(), gw.len()));
    }
    let mr = gaussian_moments(&extract_features(&rw, tae)?)?;
    let mg = gaussian_moments(&extract_features(&gw, tae)?)?;
    Ok((Some(fgd(&mr, &mg)?), rw.len(), gw.len()))
}

fn prefix(seq: &PoseSequence, k: usize) -> Result<PoseSequence> {
    let keep = seq.len().min(k.max(1));
    PoseSequence::new(seq.frames()[..keep].to_vec())
}

/// Distance per ground-truth-length bin between paired real and
/// generated sequences. Bins are `[lo, hi)` frame ranges, ascending
/// and disjoint. A bin where either side yields fewer than two
/// feature windows reports no distance rather than failing the run.
pub fn interval_fgd(
    real: &[PoseSequence],
    generated: &[PoseSequence],
    bins: &[(usize, usize)],
    mode: IntervalMode,
    tae: &TaeBundle,
    fps: usize,
) -> Result<IntervalReport> {
    if real.len() != generated.len() {
        return Err(CoreError::Input(String::from(
            "real and generated sequence counts differ",
        )));
    }
    if real.is_empty() {
        return Err(CoreError::Input(String::from("no sequence pairs to evaluate")));
    }
    if bins.is_empty() {
        return Err(CoreError::config("interval report needs at least one bin"));
    }
    let mut prev_hi = 0;
    for &(lo, hi) in bins {
        if lo >= hi || lo < prev_hi {
            return Err(CoreError::config("bins must be ascending disjoint ranges"));
        }
        prev_hi = hi;
    }

    let mut out = Vec::with_capacity(bins.len());
    for &(lo, hi) in bins {
        let (fgd_v, count, n_real, n_gen) = match mode {
            IntervalMode::Bucket => {
                let mut rs = Vec::new();
                let mut gs = Vec::new();
                for (r, g) in real.iter().zip(generated) {
                    if (lo..hi).contains(&r.len()) {
                        rs.push(r);
                        gs.push(g);
                    }
                }
                let count = rs.len();
                if count == 0 {
                    (None, 0, 0, 0)
                } else {
                    let (f, nr, ng) = bin_fgd(&rs, &gs, tae)?;
                    (f, count, nr, ng)
                }
            }
            IntervalMode::Prefix => {
                let rs: Vec<PoseSequence> =
                    real.iter().map(|s| prefix(s, hi)).collect::<Result<_>>()?;
                let gs: Vec<PoseSequence> =
                    generated.iter().map(|s| prefix(s, hi)).collect::<Result<_>>()?;
                let rrefs: Vec<&PoseSequence> = rs.iter().collect();
                let grefs: Vec<&PoseSequence> = gs.iter().collect();
                let (f, nr, ng) = bin_fgd(&rrefs, &grefs, tae)?;
                (f, real.len(), nr, ng)
            }
        };
        out.push(IntervalBin {
            lo,
            hi,
            fgd: fgd_v,
            count,
            n_real_windows: n_real,
            n_gen_windows: n_gen,
        });
    }
    Ok(IntervalReport { bins: out, fps })
}
