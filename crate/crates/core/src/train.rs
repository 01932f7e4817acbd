//! Rate-distortion training: builds the Lagrangian J = R + lambda * D on the
//! tape, runs Adam with an exponentially interpolated learning rate, and
//! keeps per-cloud convolution plans cached across steps (coordinates never
//! change, only features do).

use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{AutodiffError, NodeId, Tape};
use crate::network::{ground_truth_at_scale, occupancy_labels, CodecModel, NetConfig};
use crate::tensor::{plan_down, plan_same, plan_up, ConvPlan, Coord};

/// Immutable per-cloud context reused every step: ground truths, labels and
/// every convolution gather plan of the encoder and the train-mode decoder.
pub struct TrainItem {
    pub n_points: usize,
    enc: Vec<EncPlans>,
    bottleneck: Arc<ConvPlan>,
    dec: Vec<DecPlans>,
    pub cy_len: usize,
}

struct EncPlans {
    conv: Arc<ConvPlan>,
    down: Arc<ConvPlan>,
    irn1: Arc<ConvPlan>,
    irn3: Arc<ConvPlan>,
}

struct DecPlans {
    up: Arc<ConvPlan>,
    irn1: Arc<ConvPlan>,
    irn3: Arc<ConvPlan>,
    conv: Arc<ConvPlan>,
    labels: Arc<Vec<f64>>,
}

impl TrainItem {
    pub fn new(coords: &[Coord], config: &NetConfig) -> Self {
        let m = config.num_scales;
        let kw = config.kernel_width;
        let gts: Vec<Vec<Coord>> = (0..=m).map(|j| ground_truth_at_scale(coords, j)).collect();
        let mut enc = Vec::with_capacity(m);
        for j in 0..m {
            let down = plan_down(&gts[j]);
            enc.push(EncPlans {
                conv: Arc::new(plan_same(&gts[j], kw)),
                irn1: Arc::new(plan_same(&gts[j + 1], 1)),
                irn3: Arc::new(plan_same(&gts[j + 1], 3)),
                down: Arc::new(down),
            });
        }
        let bottleneck = Arc::new(plan_same(&gts[m], kw));
        let mut dec = Vec::with_capacity(m);
        let mut current: Vec<Coord> = gts[m].clone();
        for s in 0..m {
            let up = plan_up(&current);
            let cand = up.out_coords.clone();
            let labels = occupancy_labels(&cand, &gts[m - 1 - s]);
            dec.push(DecPlans {
                up: Arc::new(up),
                irn1: Arc::new(plan_same(&cand, 1)),
                irn3: Arc::new(plan_same(&cand, 3)),
                conv: Arc::new(plan_same(&cand, kw)),
                labels: Arc::new(labels),
            });
            current = cand;
        }
        TrainItem {
            n_points: gts[0].len(),
            enc,
            bottleneck,
            dec,
            cy_len: gts[m].len(),
        }
    }
}

/// Node ids of every parameter array, in the canonical model order.
pub struct ParamNodes {
    pub flat: Vec<NodeId>,
}

/// Registers each model parameter array as a tape leaf; `flat` follows
/// `CodecModel::for_each_param` order exactly.
pub fn register_params(tape: &mut Tape, model: &CodecModel) -> ParamNodes {
    let mut flat = Vec::new();
    model.for_each_param(&mut |p| {
        flat.push(p.clone());
    });
    let flat = flat
        .into_iter()
        .map(|data| tape.leaf_vec(data))
        .collect();
    ParamNodes { flat }
}

/// Cursor over `ParamNodes.flat` that hands out ids in declaration order.
struct Cursor<'a> {
    ids: &'a [NodeId],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn pair(&mut self) -> (NodeId, NodeId) {
        let (k, b) = (self.ids[self.pos], self.ids[self.pos + 1]);
        self.pos += 2;
        (k, b)
    }
}

/// Forward values of interest alongside the loss node.
pub struct LossGraph {
    pub tape: Tape,
    pub loss: NodeId,
    pub params: ParamNodes,
    pub rate_per_point: f64,
    pub distortion: f64,
    pub per_scale_bce: Vec<f64>,
}

/// Builds J = R + lambda * D for one cloud: encoder, noise quantization,
/// rate under the prior, train-mode hierarchical decode, multiscale BCE.
pub fn training_loss(
    item: &TrainItem,
    model: &CodecModel,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LossGraph, AutodiffError> {
    assert!(lambda > 0.0, "lambda must be positive");
    if item.n_points == 0 {
        return Err(AutodiffError::EmptyInput);
    }
    let cfg = &model.config;
    let m = cfg.num_scales;
    let units = cfg.irn_units_per_block;
    let mut tape = Tape::new();
    let params = register_params(&mut tape, model);
    let mut cur = Cursor {
        ids: &params.flat,
        pos: 0,
    };

    let irn_apply = |tape: &mut Tape,
                         cur: &mut Cursor,
                         x: NodeId,
                         channels: usize,
                         plan1: &Arc<ConvPlan>,
                         plan3: &Arc<ConvPlan>|
     -> NodeId {
        let mut t = x;
        for _ in 0..units {
            let (ak, ab) = cur.pair();
            let (b1k, b1b) = cur.pair();
            let (b2k, b2b) = cur.pair();
            let a = tape.conv(t, ak, ab, plan1.clone(), channels, channels / 2);
            let a = tape.relu(a);
            let b = tape.conv(t, b1k, b1b, plan3.clone(), channels, channels / 4);
            let b = tape.relu(b);
            let b = tape.conv(b, b2k, b2b, plan3.clone(), channels / 4, channels / 2);
            let b = tape.relu(b);
            let cat = tape.concat_cols(a, b);
            t = tape.add(cat, t);
        }
        t
    };

    // encoder
    let mut t = tape.leaf(vec![1.0; item.n_points], item.n_points, 1);
    let mut prev_c = 1usize;
    for (j, stage) in item.enc.iter().enumerate() {
        let c = cfg.channels[j];
        let (ck, cb) = cur.pair();
        t = tape.conv(t, ck, cb, stage.conv.clone(), prev_c, c);
        t = tape.relu(t);
        let (dk, db) = cur.pair();
        t = tape.conv(t, dk, db, stage.down.clone(), c, c);
        t = tape.relu(t);
        t = irn_apply(&mut tape, &mut cur, t, c, &stage.irn1, &stage.irn3);
        prev_c = c;
    }
    let (bk, bb) = cur.pair();
    let latent = tape.conv(t, bk, bb, item.bottleneck.clone(), prev_c, cfg.latent_channels);

    // noise quantization and the rate term
    let n_latent = item.cy_len * cfg.latent_channels;
    let noise: Vec<f64> = (0..n_latent).map(|_| rng.gen::<f64>() - 0.5).collect();
    let latent_q = tape.noise_quant(latent, &noise);
    let psi_start = params.flat.len() - cfg.latent_channels;
    let psi: Vec<NodeId> = params.flat[psi_start..].to_vec();
    let rate = tape.rate_bits(latent_q, psi);
    let rate_norm = tape.scale(rate, 1.0 / item.n_points as f64);

    // train-mode decoder: all candidates flow forward
    let mut bces = Vec::with_capacity(m);
    let mut per_scale_bce = Vec::with_capacity(m);
    let mut dec_t = latent_q;
    let mut dec_c = cfg.latent_channels;
    for (s, stage) in item.dec.iter().enumerate() {
        let c = cfg.channels[m - 1 - s];
        let (uk, ub) = cur.pair();
        dec_t = tape.conv(dec_t, uk, ub, stage.up.clone(), dec_c, c);
        dec_t = tape.relu(dec_t);
        dec_t = irn_apply(&mut tape, &mut cur, dec_t, c, &stage.irn1, &stage.irn3);
        let (ck, cb) = cur.pair();
        dec_t = tape.conv(dec_t, ck, cb, stage.conv.clone(), c, c);
        dec_t = tape.relu(dec_t);
        let (hk, hb) = cur.pair();
        let logits = tape.conv(dec_t, hk, hb, stage.conv.clone(), c, 1);
        let probs = tape.sigmoid(logits);
        let bce = tape.bce(probs, stage.labels.as_ref().clone());
        per_scale_bce.push(tape.scalar_value(bce));
        bces.push(bce);
        dec_c = c;
    }
    debug_assert_eq!(cur.pos, psi_start);

    let distortion = tape.mean_scalars(&bces);
    let weighted = tape.scale(distortion, lambda);
    let loss = tape.add(rate_norm, weighted);

    Ok(LossGraph {
        rate_per_point: tape.scalar_value(rate_norm),
        distortion: tape.scalar_value(distortion),
        per_scale_bce,
        tape,
        loss,
        params,
    })
}

/// First/second moment state of the Adam optimizer.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(model: &CodecModel) -> Self {
        let mut shapes = Vec::new();
        model.for_each_param(&mut |p| shapes.push(p.len()));
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update; `grads` follows the canonical parameter
/// array order.
pub fn adam_step(
    model: &mut CodecModel,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), AutodiffError> {
    if grads.len() != state.m.len() {
        return Err(AutodiffError::ShapeMismatch(format!(
            "{} gradient arrays vs {} state arrays",
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    let mut idx = 0usize;
    let mut err = None;
    let (ms, vs) = (&mut state.m, &mut state.v);
    model.for_each_param_mut(&mut |p| {
        if idx >= grads.len() || grads[idx].len() != p.len() {
            err = Some(idx);
            idx += 1;
            return;
        }
        let g = &grads[idx];
        let m = &mut ms[idx];
        let v = &mut vs[idx];
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        idx += 1;
    });
    match err {
        Some(i) => Err(AutodiffError::ShapeMismatch(format!(
            "gradient shape mismatch at array {i}"
        ))),
        None => Ok(()),
    }
}

/// Exponential interpolation from `lr_start` to `lr_end` over `steps`.
pub fn lr_at(step: usize, steps: usize, lr_start: f64, lr_end: f64) -> f64 {
    if steps <= 1 {
        return lr_start;
    }
    let t = step as f64 / (steps - 1) as f64;
    lr_start * (lr_end / lr_start).powf(t)
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lambda: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    /// Emit a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            steps: 2000,
            batch_size: 8,
            lr_start: 8e-4,
            lr_end: 2e-5,
            seed: 1,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub j_initial: f64,
    pub j_final: f64,
    pub rate_initial: f64,
    pub rate_final: f64,
    pub distortion_initial: f64,
    pub distortion_final: f64,
    pub per_scale_bce_final: Vec<f64>,
}

fn item_rng(seed: u64, step: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_mul(0x1_0000).wrapping_add(item));
    rng
}

/// Mean J (and components) over up to `probe` clouds with a fixed noise
/// stream, used to compare before/after training fairly.
fn evaluate(
    items: &[TrainItem],
    model: &CodecModel,
    lambda: f64,
    seed: u64,
    probe: usize,
) -> Result<(f64, f64, f64, Vec<f64>), AutodiffError> {
    let take = probe.min(items.len());
    let mut j = 0.0;
    let mut r = 0.0;
    let mut d = 0.0;
    let mut bce = vec![0.0; model.config.num_scales];
    for (i, item) in items.iter().take(take).enumerate() {
        let mut rng = item_rng(seed, u64::MAX, i as u64);
        let graph = training_loss(item, model, lambda, &mut rng)?;
        j += graph.tape.scalar_value(graph.loss);
        r += graph.rate_per_point;
        d += graph.distortion;
        for (acc, v) in bce.iter_mut().zip(&graph.per_scale_bce) {
            *acc += v;
        }
    }
    let n = take as f64;
    for v in bce.iter_mut() {
        *v /= n;
    }
    Ok((j / n, r / n, d / n, bce))
}

/// Trains a fresh or given model on voxelized clouds. Deterministic for a
/// fixed seed: batch order, noise streams and gradient reduction order are
/// all derived from it.
pub fn train(
    clouds: &[Vec<Coord>],
    net: NetConfig,
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &CodecModel),
) -> Result<(CodecModel, TrainReport), AutodiffError> {
    if clouds.is_empty() {
        return Err(AutodiffError::EmptyDataset);
    }
    let mut model = CodecModel::init(net.clone(), cfg.seed)?;
    let items: Vec<TrainItem> = clouds
        .par_iter()
        .map(|c| TrainItem::new(c, &net))
        .collect();

    let (j0, r0, d0, _) = evaluate(&items, &model, cfg.lambda, cfg.seed, 8)?;
    let mut state = AdamState::new(&model);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut cursor = items.len(); // force a shuffle on first use

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor >= order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }

        let results: Vec<Result<Vec<Vec<f64>>, AutodiffError>> = batch
            .par_iter()
            .enumerate()
            .map(|(bi, &idx)| {
                let mut rng = item_rng(cfg.seed, step as u64, bi as u64);
                let mut graph = training_loss(&items[idx], &model, cfg.lambda, &mut rng)?;
                graph.tape.backward(graph.loss)?;
                Ok(graph
                    .params
                    .flat
                    .iter()
                    .map(|&id| graph.tape.grad(id).to_vec())
                    .collect())
            })
            .collect();

        // deterministic reduction: batch index order
        let mut mean_grads: Option<Vec<Vec<f64>>> = None;
        for res in results {
            let grads = res?;
            match &mut mean_grads {
                None => mean_grads = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        for (x, y) in a.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
        }
        let mut mean_grads = mean_grads.unwrap();
        let scale = 1.0 / cfg.batch_size as f64;
        for g in mean_grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }

        let lr = lr_at(step, cfg.steps, cfg.lr_start, cfg.lr_end);
        adam_step(&mut model, &mean_grads, &mut state, lr)?;

        let mut finite = true;
        model.for_each_param(&mut |p| finite &= p.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(AutodiffError::TrainingDiverged(step));
        }

        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            on_checkpoint(step + 1, &model);
        }
    }

    let (j1, r1, d1, bce) = evaluate(&items, &model, cfg.lambda, cfg.seed, 8)?;
    let report = TrainReport {
        j_initial: j0,
        j_final: j1,
        rate_initial: r0,
        rate_final: r1,
        distortion_initial: d0,
        distortion_final: d1,
        per_scale_bce_final: bce,
    };
    Ok((model, report))
}

/// Flattens all parameters into one vector (canonical order).
pub fn flatten_params(model: &CodecModel) -> Vec<f64> {
    let mut out = Vec::new();
    model.for_each_param(&mut |p| out.extend_from_slice(p));
    out
}

/// Inverse of `flatten_params`.
pub fn set_params_from_flat(model: &mut CodecModel, flat: &[f64]) {
    let mut pos = 0usize;
    model.for_each_param_mut(&mut |p| {
        let n = p.len();
        p.copy_from_slice(&flat[pos..pos + n]);
        pos += n;
    });
    assert_eq!(pos, flat.len());
}
