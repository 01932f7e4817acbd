//! The multiscale autoencoder: downscaling encoder stages with
//! inception-residual feature blocks, a latent bottleneck, and the
//! hierarchical decoder that classifies and prunes candidate voxels
//! scale by scale.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::entropy::FactorizedPrior;
use crate::tensor::{
    conv_down, conv_same, conv_up, Coord, ConvWeights, SparseTensor, StrideKind, TensorError,
};

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
}

/// Architecture hyperparameters. Channel widths must be divisible by four
/// for the inception branch split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub num_scales: usize,
    pub channels: Vec<usize>,
    pub latent_channels: usize,
    pub irn_units_per_block: usize,
    /// Width of the non-strided convolutions outside the IRN units.
    pub kernel_width: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            num_scales: 3,
            channels: vec![16, 32, 64],
            latent_channels: 8,
            irn_units_per_block: 3,
            kernel_width: 3,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.num_scales < 1 || self.channels.len() != self.num_scales {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} scales but {} channel widths",
                self.num_scales,
                self.channels.len()
            )));
        }
        if self.channels.iter().any(|&c| c % 4 != 0 || c == 0) {
            return Err(NetworkError::ShapeMismatch(
                "channel widths must be positive multiples of 4".into(),
            ));
        }
        if self.latent_channels < 1 {
            return Err(NetworkError::ShapeMismatch("latent_channels must be >= 1".into()));
        }
        if self.kernel_width % 2 == 0 {
            return Err(NetworkError::ShapeMismatch("kernel_width must be odd".into()));
        }
        Ok(())
    }
}

/// One inception-residual unit: a 1^3 half-width branch beside a two-conv
/// 3^3 branch, concatenated back to the input width and added residually.
#[derive(Clone, Debug, PartialEq)]
pub struct IrnUnit {
    pub branch_a: ConvWeights,  // 1^3, C -> C/2
    pub branch_b1: ConvWeights, // 3^3, C -> C/4
    pub branch_b2: ConvWeights, // 3^3, C/4 -> C/2
}

impl IrnUnit {
    pub fn zeros(channels: usize) -> Self {
        assert_eq!(channels % 4, 0);
        IrnUnit {
            branch_a: ConvWeights::zeros(1, StrideKind::Same, channels, channels / 2),
            branch_b1: ConvWeights::zeros(3, StrideKind::Same, channels, channels / 4),
            branch_b2: ConvWeights::zeros(3, StrideKind::Same, channels / 4, channels / 2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrnBlock {
    pub units: Vec<IrnUnit>,
}

impl IrnBlock {
    pub fn zeros(channels: usize, units: usize) -> Self {
        IrnBlock {
            units: (0..units).map(|_| IrnUnit::zeros(channels)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStage {
    pub conv: ConvWeights, // kw^3, C_prev -> C_j
    pub down: ConvWeights, // 2^3 stride 2, C_j -> C_j
    pub irn: IrnBlock,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStage {
    pub up: ConvWeights,   // 2^3 transposed, C_in -> C_j
    pub irn: IrnBlock,
    pub conv: ConvWeights, // kw^3, C_j -> C_j
    pub head: ConvWeights, // kw^3, C_j -> 1 (occupancy logit)
}

/// All learnable state of the codec.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecModel {
    pub config: NetConfig,
    pub encoder: Vec<EncoderStage>,
    pub bottleneck: ConvWeights, // kw^3, C_{M-1} -> latent
    pub decoder: Vec<DecoderStage>,
    pub prior: FactorizedPrior,
}

fn lecun_uniform(rng: &mut ChaCha8Rng, w: &mut ConvWeights) {
    let fan_in = (w.cin * w.num_offsets()) as f64;
    let bound = (3.0 / fan_in).sqrt();
    for v in w.kernel.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    // biases stay zero
}

impl CodecModel {
    /// Zero-weight model with the right shapes.
    pub fn zeros(config: NetConfig) -> Result<Self, NetworkError> {
        config.validate()?;
        let m = config.num_scales;
        let kw = config.kernel_width;
        let units = config.irn_units_per_block;
        let mut encoder = Vec::with_capacity(m);
        let mut prev = 1usize;
        for &c in &config.channels {
            encoder.push(EncoderStage {
                conv: ConvWeights::zeros(kw, StrideKind::Same, prev, c),
                down: ConvWeights::zeros(2, StrideKind::Down2, c, c),
                irn: IrnBlock::zeros(c, units),
            });
            prev = c;
        }
        let bottleneck = ConvWeights::zeros(kw, StrideKind::Same, prev, config.latent_channels);
        let mut decoder = Vec::with_capacity(m);
        let mut dec_in = config.latent_channels;
        for s in 0..m {
            let c = config.channels[m - 1 - s];
            decoder.push(DecoderStage {
                up: ConvWeights::zeros(2, StrideKind::Up2, dec_in, c),
                irn: IrnBlock::zeros(c, units),
                conv: ConvWeights::zeros(kw, StrideKind::Same, c, c),
                head: ConvWeights::zeros(kw, StrideKind::Same, c, 1),
            });
            dec_in = c;
        }
        let prior = FactorizedPrior::new_default(config.latent_channels);
        Ok(CodecModel {
            config,
            encoder,
            bottleneck,
            decoder,
            prior,
        })
    }

    /// Fan-in-scaled uniform kernels, zero biases, bell-shaped prior.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NetworkError> {
        let mut model = CodecModel::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for stage in &mut model.encoder {
            lecun_uniform(&mut rng, &mut stage.conv);
            lecun_uniform(&mut rng, &mut stage.down);
            for u in &mut stage.irn.units {
                lecun_uniform(&mut rng, &mut u.branch_a);
                lecun_uniform(&mut rng, &mut u.branch_b1);
                lecun_uniform(&mut rng, &mut u.branch_b2);
            }
        }
        lecun_uniform(&mut rng, &mut model.bottleneck);
        for stage in &mut model.decoder {
            lecun_uniform(&mut rng, &mut stage.up);
            for u in &mut stage.irn.units {
                lecun_uniform(&mut rng, &mut u.branch_a);
                lecun_uniform(&mut rng, &mut u.branch_b1);
                lecun_uniform(&mut rng, &mut u.branch_b2);
            }
            lecun_uniform(&mut rng, &mut stage.conv);
            lecun_uniform(&mut rng, &mut stage.head);
        }
        Ok(model)
    }

    /// Visits every parameter array in the canonical serialization order.
    pub fn for_each_param<'a>(&'a self, f: &mut dyn FnMut(&'a Vec<f64>)) {
        for stage in &self.encoder {
            f(&stage.conv.kernel);
            f(&stage.conv.bias);
            f(&stage.down.kernel);
            f(&stage.down.bias);
            for u in &stage.irn.units {
                f(&u.branch_a.kernel);
                f(&u.branch_a.bias);
                f(&u.branch_b1.kernel);
                f(&u.branch_b1.bias);
                f(&u.branch_b2.kernel);
                f(&u.branch_b2.bias);
            }
        }
        f(&self.bottleneck.kernel);
        f(&self.bottleneck.bias);
        for stage in &self.decoder {
            f(&stage.up.kernel);
            f(&stage.up.bias);
            for u in &stage.irn.units {
                f(&u.branch_a.kernel);
                f(&u.branch_a.bias);
                f(&u.branch_b1.kernel);
                f(&u.branch_b1.bias);
                f(&u.branch_b2.kernel);
                f(&u.branch_b2.bias);
            }
            f(&stage.conv.kernel);
            f(&stage.conv.bias);
            f(&stage.head.kernel);
            f(&stage.head.bias);
        }
        for ch in 0..self.prior.channels() {
            f(self.prior.channel_params_vec(ch));
        }
    }

    /// Mutable variant of `for_each_param`, same order.
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&mut Vec<f64>)) {
        for stage in &mut self.encoder {
            f(&mut stage.conv.kernel);
            f(&mut stage.conv.bias);
            f(&mut stage.down.kernel);
            f(&mut stage.down.bias);
            for u in &mut stage.irn.units {
                f(&mut u.branch_a.kernel);
                f(&mut u.branch_a.bias);
                f(&mut u.branch_b1.kernel);
                f(&mut u.branch_b1.bias);
                f(&mut u.branch_b2.kernel);
                f(&mut u.branch_b2.bias);
            }
        }
        f(&mut self.bottleneck.kernel);
        f(&mut self.bottleneck.bias);
        for stage in &mut self.decoder {
            f(&mut stage.up.kernel);
            f(&mut stage.up.bias);
            for u in &mut stage.irn.units {
                f(&mut u.branch_a.kernel);
                f(&mut u.branch_a.bias);
                f(&mut u.branch_b1.kernel);
                f(&mut u.branch_b1.bias);
                f(&mut u.branch_b2.kernel);
                f(&mut u.branch_b2.bias);
            }
            f(&mut stage.conv.kernel);
            f(&mut stage.conv.bias);
            f(&mut stage.head.kernel);
            f(&mut stage.head.bias);
        }
        for ch in 0..self.prior.channels() {
            f(self.prior.channel_params_vec_mut(ch));
        }
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |p| n += p.len());
        n
    }
}

/// Elementwise max(0, x).
pub fn relu(t: &SparseTensor) -> SparseTensor {
    let feats = t.feats().iter().map(|&v| v.max(0.0)).collect();
    t.with_feats(feats, t.channels())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One inception-residual unit; output coordinates equal input coordinates.
pub fn irn_unit(input: &SparseTensor, unit: &IrnUnit) -> Result<SparseTensor, NetworkError> {
    let a = relu(&conv_same(input, &unit.branch_a)?);
    let b = relu(&conv_same(input, &unit.branch_b1)?);
    let b = relu(&conv_same(&b, &unit.branch_b2)?);
    let c = input.channels();
    let half = c / 2;
    let mut feats = Vec::with_capacity(input.len() * c);
    for i in 0..input.len() {
        let xi = input.row(i);
        let ai = a.row(i);
        let bi = b.row(i);
        for ch in 0..half {
            feats.push(ai[ch] + xi[ch]);
        }
        for ch in 0..half {
            feats.push(bi[ch] + xi[half + ch]);
        }
    }
    Ok(input.with_feats(feats, c))
}

pub fn irn_block(input: &SparseTensor, block: &IrnBlock) -> Result<SparseTensor, NetworkError> {
    let mut t = input.clone();
    for unit in &block.units {
        t = irn_unit(&t, unit)?;
    }
    Ok(t)
}

/// Runs the encoder on an occupancy tensor, producing the latent {C_Y, F_Y}.
/// The latent coordinate set is the input set halved `num_scales` times,
/// independent of the weights.
pub fn encode_latent(x: &SparseTensor, model: &CodecModel) -> Result<SparseTensor, NetworkError> {
    if x.is_empty() {
        return Err(NetworkError::EmptyInput);
    }
    let mut t = x.clone();
    for stage in &model.encoder {
        t = relu(&conv_same(&t, &stage.conv)?);
        t = relu(&conv_down(&t, &stage.down)?);
        t = irn_block(&t, &stage.irn)?;
    }
    conv_same(&t, &model.bottleneck).map_err(Into::into)
}

/// Unique coordinates after `j` halvings, canonical order; `j = 0` is the
/// input itself.
pub fn ground_truth_at_scale(c_x: &[Coord], j: usize) -> Vec<Coord> {
    let mut set = c_x.to_vec();
    set.sort_unstable();
    set.dedup();
    for _ in 0..j {
        for c in set.iter_mut() {
            *c = c.half();
        }
        set.sort_unstable();
        set.dedup();
    }
    set
}

/// Occupancy probability per coordinate: sigmoid of the 1-channel head.
pub fn classify(t: &SparseTensor, head: &ConvWeights) -> Result<Vec<f64>, NetworkError> {
    if head.cout != 1 {
        return Err(NetworkError::ShapeMismatch(format!(
            "classification head must have 1 output channel, has {}",
            head.cout
        )));
    }
    let logits = conv_same(t, head)?;
    Ok(logits.feats().iter().map(|&v| sigmoid(v)).collect())
}

/// Coordinates of the k highest probabilities; ties keep the canonically
/// smaller coordinate. Output is canonical-sorted.
pub fn topk_select(candidates: &[Coord], p: &[f64], k: usize) -> Vec<Coord> {
    assert_eq!(candidates.len(), p.len());
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        p[b].partial_cmp(&p[a])
            .unwrap()
            .then_with(|| candidates[a].cmp(&candidates[b]))
    });
    let mut kept: Vec<Coord> = order
        .into_iter()
        .take(k)
        .map(|i| candidates[i])
        .collect();
    kept.sort_unstable();
    kept
}

/// Decoder mode: training keeps every candidate flowing to the next scale to
/// expose errors; inference prunes to the top-k survivors first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    Train,
    Infer,
}

/// Per-scale decoder output.
#[derive(Clone, Debug)]
pub struct ScaleResult {
    /// Candidate coordinates produced by upsampling, carrying the refined
    /// stage features that fed the classifier.
    pub candidates: SparseTensor,
    pub probabilities: Vec<f64>,
    pub kept: Vec<Coord>,
}

pub(crate) fn decode_hierarchical_impl<F>(
    c_y: &[Coord],
    f_hat: &[f64],
    k_list: &[usize],
    model: &CodecModel,
    mode: DecodeMode,
    mut prob_of: F,
) -> Result<Vec<ScaleResult>, NetworkError>
where
    F: FnMut(usize, &SparseTensor, &ConvWeights) -> Result<Vec<f64>, NetworkError>,
{
    let m = model.config.num_scales;
    if k_list.len() != m {
        return Err(NetworkError::ShapeMismatch(format!(
            "k_list has {} entries for {} scales",
            k_list.len(),
            m
        )));
    }
    if c_y.is_empty() {
        return Err(NetworkError::EmptyInput);
    }
    if f_hat.len() != c_y.len() * model.config.latent_channels {
        return Err(NetworkError::ShapeMismatch(format!(
            "{} latent rows x {} channels but {} values",
            c_y.len(),
            model.config.latent_channels,
            f_hat.len()
        )));
    }
    let mut current = SparseTensor::new(
        c_y.to_vec(),
        f_hat.to_vec(),
        model.config.latent_channels,
    )
    .map_err(NetworkError::from)?;
    let mut results = Vec::with_capacity(m);
    for (s, stage) in model.decoder.iter().enumerate() {
        let mut t = relu(&conv_up(&current, &stage.up)?);
        t = irn_block(&t, &stage.irn)?;
        t = relu(&conv_same(&t, &stage.conv)?);
        let probabilities = prob_of(s, &t, &stage.head)?;
        let kept = topk_select(t.coords(), &probabilities, k_list[s]);
        current = match mode {
            DecodeMode::Train => t.clone(),
            DecodeMode::Infer => t.prune(&kept)?,
        };
        results.push(ScaleResult {
            candidates: t,
            probabilities,
            kept,
        });
    }
    Ok(results)
}

/// Hierarchical reconstruction from the latent tensor; `k_list` is ordered
/// coarsest scale first (finest last), matching the bitstream field. The
/// final reconstruction is the `kept` set of the last result.
pub fn decode_hierarchical(
    c_y: &[Coord],
    f_hat: &[f64],
    k_list: &[usize],
    model: &CodecModel,
    mode: DecodeMode,
) -> Result<Vec<ScaleResult>, NetworkError> {
    decode_hierarchical_impl(c_y, f_hat, k_list, model, mode, |_, t, head| {
        classify(t, head)
    })
}

/// Mean binary cross-entropy in nats; probabilities clamped to
/// [1e-12, 1 - 1e-12].
pub fn bce_loss(p: &[f64], labels: &[f64]) -> Result<f64, NetworkError> {
    if p.len() != labels.len() {
        return Err(NetworkError::ShapeMismatch(format!(
            "{} probabilities vs {} labels",
            p.len(),
            labels.len()
        )));
    }
    let n = p.len() as f64;
    let mut acc = 0.0;
    for (&pi, &yi) in p.iter().zip(labels) {
        let pc = pi.clamp(1e-12, 1.0 - 1e-12);
        acc -= yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln();
    }
    Ok(acc / n)
}

/// Membership labels of candidate coordinates in a ground-truth set.
pub fn occupancy_labels(candidates: &[Coord], gt: &[Coord]) -> Vec<f64> {
    debug_assert!(gt.windows(2).all(|w| w[0] < w[1]));
    candidates
        .iter()
        .map(|c| if gt.binary_search(c).is_ok() { 1.0 } else { 0.0 })
        .collect()
}

/// Unweighted mean of the per-scale BCE losses; `gts[i]` is the ground
/// truth at the same scale as `results[i]`.
pub fn multiscale_distortion(
    results: &[ScaleResult],
    gts: &[Vec<Coord>],
) -> Result<f64, NetworkError> {
    if results.len() != gts.len() {
        return Err(NetworkError::ShapeMismatch(format!(
            "{} scale results vs {} ground-truth sets",
            results.len(),
            gts.len()
        )));
    }
    let mut acc = 0.0;
    for (r, gt) in results.iter().zip(gts) {
        let labels = occupancy_labels(r.candidates.coords(), gt);
        acc += bce_loss(&r.probabilities, &labels)?;
    }
    Ok(acc / results.len() as f64)
}
