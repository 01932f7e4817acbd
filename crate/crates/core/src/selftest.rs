//! Built-in oracle suites behind the `selftest` CLI command: fast
//! independent checks of the numeric core against brute-force references.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::entropy::{build_pmf_tables, range_decode, range_encode, FactorizedPrior};
use crate::metrics;
use crate::network::NetConfig;
use crate::octree::{octree_decode, octree_encode};
use crate::tensor::{
    conv_same, same_offsets, ConvWeights, Coord, Extent, SparseTensor, StrideKind,
};
use crate::train::{flatten_params, set_params_from_flat, training_loss, TrainItem};
use crate::network::CodecModel;

pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(), String>) -> CheckResult {
    CheckResult {
        name,
        outcome: f(),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, extent: i32, channels: usize) -> SparseTensor {
    let mut coords = Vec::new();
    for x in 0..extent {
        for y in 0..extent {
            for z in 0..extent {
                if rng.gen::<f64>() < 0.4 {
                    coords.push(Coord::new(x, y, z));
                }
            }
        }
    }
    if coords.is_empty() {
        coords.push(Coord::new(0, 0, 0));
    }
    let feats = (0..coords.len() * channels)
        .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
        .collect();
    SparseTensor::new(coords, feats, channels).unwrap()
}

fn conv_dense_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..10 {
        let t = random_tensor(&mut rng, 6, 2);
        let mut w = ConvWeights::zeros(3, StrideKind::Same, 2, 2);
        for v in w.kernel.iter_mut() {
            *v = rng.gen::<f64>() - 0.5;
        }
        let out = conv_same(&t, &w).map_err(|e| e.to_string())?;
        let extent = Extent::new(Coord::new(0, 0, 0), [6, 6, 6]);
        let dense = t.to_dense(extent).map_err(|e| e.to_string())?;
        for (j, &u) in t.coords().iter().enumerate() {
            for co in 0..2 {
                let mut want = 0.0;
                for (o, &(dx, dy, dz)) in same_offsets(3).iter().enumerate() {
                    let nb = u.offset(dx, dy, dz);
                    if !extent.contains(nb) {
                        continue;
                    }
                    let base = ((nb.x as usize * 6 + nb.y as usize) * 6 + nb.z as usize) * 2;
                    for ci in 0..2 {
                        want += dense[base + ci] * w.kernel[w.kernel_index(o, ci, co)];
                    }
                }
                let got = out.row(j)[co];
                if (got - want).abs() > 1e-9 {
                    return Err(format!("case {case}: {got} vs {want}"));
                }
            }
        }
    }
    Ok(())
}

fn octree_roundtrip() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..50 {
        let depth = rng.gen_range(3..=7);
        let lim = 1 << depth;
        let mut coords: Vec<Coord> = (0..rng.gen_range(1..300))
            .map(|_| {
                Coord::new(
                    rng.gen_range(0..lim),
                    rng.gen_range(0..lim),
                    rng.gen_range(0..lim),
                )
            })
            .collect();
        coords.sort_unstable();
        coords.dedup();
        let payload = octree_encode(&coords, depth).map_err(|e| e.to_string())?;
        let back = octree_decode(&payload).map_err(|e| e.to_string())?;
        if back != coords {
            return Err("decoded set differs".into());
        }
    }
    Ok(())
}

fn coder_roundtrip() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut prior = FactorizedPrior::new_default(2);
    for ch in 0..2 {
        for v in prior.channel_params_mut(ch) {
            *v += rng.gen::<f64>() * 0.4 - 0.2;
        }
    }
    let tables = build_pmf_tables(&prior);
    for _ in 0..25 {
        let n = rng.gen_range(0..600);
        let symbols: Vec<i32> = (0..n)
            .map(|i| {
                if i % 101 == 0 {
                    rng.gen_range(-1_000_000..1_000_000)
                } else {
                    rng.gen_range(-5..=5)
                }
            })
            .collect();
        let ids: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let bytes = range_encode(&symbols, &ids, &tables);
        let back = range_decode(&bytes, n, &ids, &tables).map_err(|e| e.to_string())?;
        if back != symbols {
            return Err("symbol stream differs after round-trip".into());
        }
    }
    Ok(())
}

fn prior_monotone() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..10 {
        let mut prior = FactorizedPrior::new_default(1);
        for v in prior.channel_params_mut(0) {
            *v += rng.gen::<f64>() * 2.0 - 1.0;
        }
        let mut prev = -1.0;
        for i in 0..1000 {
            let x = -25.0 + i as f64 * 0.05;
            let c = prior.cumulative(0, x);
            if c < prev - 1e-15 {
                return Err(format!("cumulative decreases at {x}"));
            }
            prev = c;
        }
    }
    Ok(())
}

fn gradient_spot_check() -> Result<(), String> {
    let net = NetConfig {
        num_scales: 1,
        channels: vec![4],
        latent_channels: 1,
        irn_units_per_block: 0,
        kernel_width: 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut coords: Vec<Coord> = (0..40)
        .map(|_| {
            Coord::new(
                rng.gen_range(0..8),
                rng.gen_range(0..8),
                rng.gen_range(0..8),
            )
        })
        .collect();
    coords.sort_unstable();
    coords.dedup();
    let item = TrainItem::new(&coords, &net);
    let seed_rng = || {
        let mut r = ChaCha8Rng::seed_from_u64(500);
        r.set_stream(7);
        r
    };
    // jostle parameters off the zero-bias kinks, then demand a margin
    let model = (9..64)
        .map(|seed| {
            let mut m = CodecModel::init(net.clone(), seed).unwrap();
            let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ 0xF00D);
            let mut theta = flatten_params(&m);
            for v in theta.iter_mut() {
                *v += jitter.gen::<f64>() * 0.02 - 0.01;
            }
            set_params_from_flat(&mut m, &theta);
            m
        })
        .find(|m| {
            training_loss(&item, m, 1.0, &mut seed_rng())
                .map(|g| g.tape.min_abs_relu_input() > 2e-5)
                .unwrap_or(false)
        })
        .ok_or_else(|| "no init with kink margin".to_string())?;
    let mut graph = training_loss(&item, &model, 1.0, &mut seed_rng()).map_err(|e| e.to_string())?;
    graph.tape.backward(graph.loss).map_err(|e| e.to_string())?;
    let analytic: Vec<f64> = graph
        .params
        .flat
        .iter()
        .flat_map(|&id| graph.tape.grad(id).to_vec())
        .collect();
    let theta = flatten_params(&model);
    let mut probe_model = model.clone();
    let mut probe = theta.clone();
    let h = 1e-6;
    // spot-check a spread of parameters
    for idx in (0..theta.len()).step_by(theta.len() / 24 + 1) {
        probe[idx] = theta[idx] + h;
        set_params_from_flat(&mut probe_model, &probe);
        let fp = {
            let g = training_loss(&item, &probe_model, 1.0, &mut seed_rng())
                .map_err(|e| e.to_string())?;
            g.tape.scalar_value(g.loss)
        };
        probe[idx] = theta[idx] - h;
        set_params_from_flat(&mut probe_model, &probe);
        let fm = {
            let g = training_loss(&item, &probe_model, 1.0, &mut seed_rng())
                .map_err(|e| e.to_string())?;
            g.tape.scalar_value(g.loss)
        };
        probe[idx] = theta[idx];
        let numeric = (fp - fm) / (2.0 * h);
        let denom = analytic[idx].abs().max(numeric.abs()).max(1e-6);
        if (analytic[idx] - numeric).abs() / denom > 1e-4 {
            return Err(format!(
                "param {idx}: analytic {} vs numeric {numeric}",
                analytic[idx]
            ));
        }
    }
    Ok(())
}

fn metrics_oracle() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let cloud = |rng: &mut ChaCha8Rng| -> Vec<Coord> {
        let mut pts: Vec<Coord> = (0..120)
            .map(|_| {
                Coord::new(
                    rng.gen_range(0..16),
                    rng.gen_range(0..16),
                    rng.gen_range(0..16),
                )
            })
            .collect();
        pts.sort_unstable();
        pts.dedup();
        pts
    };
    let a = cloud(&mut rng);
    let b = cloud(&mut rng);
    let (mse, _) = metrics::d1_psnr(&a, &b, 63.0).map_err(|e| e.to_string())?;
    let brute = |from: &[Coord], to: &[Coord]| -> f64 {
        from.iter()
            .map(|&p| {
                to.iter()
                    .map(|&q| {
                        let d = [
                            (p.x - q.x) as i64,
                            (p.y - q.y) as i64,
                            (p.z - q.z) as i64,
                        ];
                        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
                    })
                    .min()
                    .unwrap() as f64
            })
            .sum::<f64>()
            / from.len() as f64
    };
    let want = brute(&a, &b).max(brute(&b, &a));
    if (mse - want).abs() > 1e-12 {
        return Err(format!("d1 {mse} vs brute {want}"));
    }
    Ok(())
}

/// Runs every suite; all must pass for `selftest` to exit 0.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("sparse conv vs dense oracle", conv_dense_oracle),
        check("octree round-trip", octree_roundtrip),
        check("range coder round-trip", coder_roundtrip),
        check("factorized prior monotonicity", prior_monotone),
        check("gradients vs finite differences", gradient_spot_check),
        check("d1 metric vs brute force", metrics_oracle),
    ]
}
