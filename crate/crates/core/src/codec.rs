//! End-to-end bitstream codec: header, octree payload for the bottleneck
//! coordinates, range-coded payload for the quantized features. All integers
//! little-endian; layout is normative for decoder compatibility.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::dataset::{lattice_to_cloud, voxelize, DatasetError};
use crate::entropy::{
    build_pmf_tables, quantize_round, range_decode, range_encode, EntropyError,
};
use crate::metrics;
use crate::model_io::{load_model, ModelIoError};
use crate::network::{
    decode_hierarchical, encode_latent, ground_truth_at_scale, CodecModel, DecodeMode,
    NetworkError,
};
use crate::octree::{octree_decode, octree_encode, OctreeError, OctreePayload};
use crate::ply::{read_ply, write_ply, PlyError, PlyFormat};
use crate::tensor::Coord;

pub const BITSTREAM_MAGIC: [u8; 4] = *b"PCGC";
pub const BITSTREAM_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("empty input")]
    EmptyInput,
    #[error("bitdepth {bitdepth} too shallow for {scales} scales")]
    BadBitdepth { bitdepth: u8, scales: usize },
    #[error("model hash mismatch: stream {stream:#018x}, model {model:#018x}")]
    ModelMismatch { stream: u64, model: u64 },
    #[error("corrupt bitstream: {0}")]
    CorruptHeader(String),
    #[error(transparent)]
    Octree(#[from] OctreeError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bit accounting of one encoded stream.
#[derive(Clone, Debug)]
pub struct EncodeStats {
    pub n_input_points: usize,
    pub n_latent_points: usize,
    pub total_bits: u64,
    pub header_bits: u64,
    pub coord_bits: u64,
    pub feature_bits: u64,
    pub estimated_feature_bits: f64,
    pub k_list: Vec<usize>,
}

impl EncodeStats {
    pub fn bpp(&self) -> f64 {
        self.total_bits as f64 / self.n_input_points as f64
    }

    pub fn coord_bpp(&self) -> f64 {
        self.coord_bits as f64 / self.n_input_points as f64
    }

    pub fn feature_bpp(&self) -> f64 {
        self.feature_bits as f64 / self.n_input_points as f64
    }
}

/// Per-scale top-k budgets: ground-truth counts scaled by the density
/// multiplier, coarsest scale first (finest last).
pub fn k_list_for(coords: &[Coord], num_scales: usize, k_multiplier: f64) -> Vec<usize> {
    (0..num_scales)
        .map(|s| {
            let gt = ground_truth_at_scale(coords, num_scales - 1 - s);
            ((gt.len() as f64 * k_multiplier).round() as usize).max(1)
        })
        .collect()
}

/// Encodes a voxelized cloud into the bitstream bytes.
pub fn encode_cloud(
    coords: &[Coord],
    model: &CodecModel,
    model_hash: u64,
    bitdepth: u8,
    k_multiplier: f64,
) -> Result<(Vec<u8>, EncodeStats), CodecError> {
    if coords.is_empty() {
        return Err(CodecError::EmptyInput);
    }
    let m = model.config.num_scales;
    if (bitdepth as usize) <= m {
        return Err(CodecError::BadBitdepth {
            bitdepth,
            scales: m,
        });
    }
    let x = crate::tensor::SparseTensor::occupancy(coords.to_vec())
        .map_err(NetworkError::from)?;
    let n_input_points = x.len();
    let latent = encode_latent(&x, model)?;
    let fhat = quantize_round(latent.feats())?;
    let octree_depth = bitdepth - m as u8;
    let octree = octree_encode(latent.coords(), octree_depth)?;

    let channels = model.config.latent_channels;
    let tables = build_pmf_tables(&model.prior);
    let n_latent = latent.len();
    let mut symbols = Vec::with_capacity(n_latent * channels);
    let mut table_ids = Vec::with_capacity(n_latent * channels);
    for ch in 0..channels {
        for row in 0..n_latent {
            symbols.push(fhat[row * channels + ch]);
            table_ids.push(ch);
        }
    }
    let feature_bytes = range_encode(&symbols, &table_ids, &tables);
    let estimated_feature_bits =
        crate::entropy::rate_bits(&fhat, channels, &model.prior);

    let k_list = k_list_for(x.coords(), m, k_multiplier);

    let mut out = Vec::new();
    out.extend_from_slice(&BITSTREAM_MAGIC);
    out.push(BITSTREAM_VERSION);
    out.push(bitdepth);
    out.push(m as u8);
    out.extend_from_slice(&model_hash.to_le_bytes());
    out.extend_from_slice(&(n_input_points as u32).to_le_bytes());
    for &k in &k_list {
        out.extend_from_slice(&(k as u32).to_le_bytes());
    }
    let header_bits = 8 * (out.len() as u64 + 4 + 2 + 4 + 4); // plus length/count fields
    out.extend_from_slice(&(octree.bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&octree.bytes);
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&(symbols.len() as u32).to_le_bytes());
    out.extend_from_slice(&(feature_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&feature_bytes);

    let stats = EncodeStats {
        n_input_points,
        n_latent_points: n_latent,
        total_bits: 8 * out.len() as u64,
        header_bits,
        coord_bits: 8 * octree.bytes.len() as u64,
        feature_bits: 8 * feature_bytes.len() as u64,
        estimated_feature_bits,
        k_list,
    };
    Ok((out, stats))
}

/// Parsed bitstream header plus payload slices.
struct Parsed<'a> {
    bitdepth: u8,
    num_scales: usize,
    model_hash: u64,
    n_input_points: usize,
    k_list: Vec<usize>,
    octree_bytes: &'a [u8],
    latent_channels: usize,
    symbol_count: usize,
    feature_bytes: &'a [u8],
}

fn parse_stream(bytes: &[u8]) -> Result<Parsed<'_>, CodecError> {
    let need = |have: usize, want: usize| -> Result<(), CodecError> {
        if have < want {
            Err(CodecError::CorruptHeader("truncated header".into()))
        } else {
            Ok(())
        }
    };
    need(bytes.len(), 7)?;
    if bytes[0..4] != BITSTREAM_MAGIC {
        return Err(CodecError::CorruptHeader("bad magic".into()));
    }
    if bytes[4] != BITSTREAM_VERSION {
        return Err(CodecError::CorruptHeader(format!(
            "unsupported version {}",
            bytes[4]
        )));
    }
    let bitdepth = bytes[5];
    let num_scales = bytes[6] as usize;
    let mut pos = 7usize;
    need(bytes.len(), pos + 8 + 4 + 4 * num_scales + 4)?;
    let model_hash = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
    pos += 8;
    let n_input_points = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    let k_list: Vec<usize> = (0..num_scales)
        .map(|i| {
            u32::from_le_bytes(bytes[pos + 4 * i..pos + 4 * i + 4].try_into().unwrap()) as usize
        })
        .collect();
    pos += 4 * num_scales;
    let octree_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    need(bytes.len(), pos + octree_len + 2 + 4 + 4)?;
    let octree_bytes = &bytes[pos..pos + octree_len];
    pos += octree_len;
    let latent_channels = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
    pos += 2;
    let symbol_count = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    let feature_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    need(bytes.len(), pos + feature_len)?;
    let feature_bytes = &bytes[pos..pos + feature_len];
    pos += feature_len;
    if pos != bytes.len() {
        return Err(CodecError::CorruptHeader("trailing bytes".into()));
    }
    Ok(Parsed {
        bitdepth,
        num_scales,
        model_hash,
        n_input_points,
        k_list,
        octree_bytes,
        latent_channels,
        symbol_count,
        feature_bytes,
    })
}

#[derive(Clone, Debug)]
pub struct DecodeStats {
    pub n_input_points: usize,
    pub n_output_points: usize,
    pub bitdepth: u8,
}

/// Decodes a bitstream back to the reconstructed lattice coordinates.
pub fn decode_cloud(
    bytes: &[u8],
    model: &CodecModel,
    model_hash: u64,
) -> Result<(Vec<Coord>, DecodeStats), CodecError> {
    let parsed = parse_stream(bytes)?;
    if parsed.model_hash != model_hash {
        return Err(CodecError::ModelMismatch {
            stream: parsed.model_hash,
            model: model_hash,
        });
    }
    if parsed.num_scales != model.config.num_scales
        || parsed.latent_channels != model.config.latent_channels
    {
        return Err(CodecError::CorruptHeader(
            "stream architecture disagrees with model".into(),
        ));
    }
    if (parsed.bitdepth as usize) <= parsed.num_scales {
        return Err(CodecError::CorruptHeader("bitdepth too shallow".into()));
    }
    let octree_depth = parsed.bitdepth - parsed.num_scales as u8;
    if octree_depth > crate::octree::MAX_DEPTH {
        return Err(CodecError::CorruptHeader(format!(
            "octree depth {octree_depth} out of range"
        )));
    }
    let payload = OctreePayload {
        depth: octree_depth,
        bytes: parsed.octree_bytes.to_vec(),
    };
    let c_y = octree_decode(&payload)?;
    let channels = parsed.latent_channels;
    if parsed.symbol_count != c_y.len() * channels {
        return Err(CodecError::CorruptHeader(format!(
            "{} symbols declared for {} latent rows x {} channels",
            parsed.symbol_count,
            c_y.len(),
            channels
        )));
    }
    let tables = build_pmf_tables(&model.prior);
    let table_ids: Vec<usize> = (0..parsed.symbol_count)
        .map(|i| i / c_y.len())
        .collect();
    let symbols = range_decode(
        parsed.feature_bytes,
        parsed.symbol_count,
        &table_ids,
        &tables,
    )?;
    let n = c_y.len();
    let mut f_hat = vec![0.0f64; n * channels];
    for ch in 0..channels {
        for row in 0..n {
            f_hat[row * channels + ch] = symbols[ch * n + row] as f64;
        }
    }
    let results = decode_hierarchical(&c_y, &f_hat, &parsed.k_list, model, DecodeMode::Infer)?;
    let rec = results.last().unwrap().kept.clone();
    let stats = DecodeStats {
        n_input_points: parsed.n_input_points,
        n_output_points: rec.len(),
        bitdepth: parsed.bitdepth,
    };
    Ok((rec, stats))
}

/// In-process reference reconstruction: encoder-side inference with rounded
/// latents, bypassing serialization. Bitstream decode must match it exactly.
pub fn reference_reconstruction(
    coords: &[Coord],
    model: &CodecModel,
    k_multiplier: f64,
) -> Result<Vec<Coord>, CodecError> {
    let x = crate::tensor::SparseTensor::occupancy(coords.to_vec())
        .map_err(NetworkError::from)?;
    let latent = encode_latent(&x, model)?;
    let fhat = quantize_round(latent.feats())?;
    let f: Vec<f64> = fhat.iter().map(|&v| v as f64).collect();
    let m = model.config.num_scales;
    let k_list = k_list_for(x.coords(), m, k_multiplier);
    let results = decode_hierarchical(latent.coords(), &f, &k_list, model, DecodeMode::Infer)?;
    Ok(results.last().unwrap().kept.clone())
}

/// Encodes a PLY file; prints nothing, returns the stats for the caller.
pub fn encode_file(
    input: &Path,
    model_path: &Path,
    output: &Path,
    bitdepth: u8,
    k_multiplier: f64,
) -> Result<EncodeStats, CodecError> {
    let (model, hash) = load_model(model_path)?;
    let cloud = read_ply(input)?;
    let coords = voxelize(&cloud, bitdepth)?;
    let (bytes, stats) = encode_cloud(&coords, &model, hash, bitdepth, k_multiplier)?;
    fs::write(output, &bytes)?;
    Ok(stats)
}

/// Decodes a bitstream file to a PLY in the lattice frame (each voxel at
/// its cell center). The output file is only written on full success.
pub fn decode_file(
    input: &Path,
    model_path: &Path,
    output: &Path,
    format: PlyFormat,
) -> Result<DecodeStats, CodecError> {
    let (model, hash) = load_model(model_path)?;
    let bytes = fs::read(input)?;
    let (rec, stats) = decode_cloud(&bytes, &model, hash)?;
    write_ply(&lattice_to_cloud(&rec), output, format)?;
    Ok(stats)
}

/// Rate-distortion measurement of a decoded cloud against the raw original:
/// the reference is voxelized at the stream's bitdepth, the reconstruction
/// is taken as already lattice-aligned.
pub fn evaluate_pair(
    rec_ply: &Path,
    ref_ply: &Path,
    bitdepth: u8,
    total_bits: u64,
) -> Result<metrics::RDPoint, CodecError> {
    let rec_cloud = read_ply(rec_ply)?;
    let ref_cloud = read_ply(ref_ply)?;
    let ref_vox = voxelize(&ref_cloud, bitdepth)?;
    let rec: Vec<Coord> = {
        let mut v: Vec<Coord> = rec_cloud
            .points
            .iter()
            .map(|p| Coord::new(p[0].round() as i32, p[1].round() as i32, p[2].round() as i32))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    if rec.is_empty() || ref_vox.is_empty() {
        return Err(CodecError::EmptyInput);
    }
    let peak = ((1u32 << bitdepth) - 1) as f64;
    let (_, d1) = metrics::d1_psnr(&rec, &ref_vox, peak).map_err(map_metrics)?;
    let k = metrics::NORMAL_ESTIMATION_K.min(ref_vox.len()).max(3);
    let normals = metrics::estimate_normals(&ref_vox, k).map_err(map_metrics)?;
    let (_, d2) = metrics::d2_psnr(&rec, &ref_vox, &normals, peak).map_err(map_metrics)?;
    let bpp = metrics::bpp(total_bits, ref_vox.len()).map_err(map_metrics)?;
    Ok(metrics::RDPoint {
        bpp,
        d1_psnr: d1,
        d2_psnr: d2,
    })
}

fn map_metrics(e: metrics::MetricsError) -> CodecError {
    match e {
        metrics::MetricsError::EmptyCloud | metrics::MetricsError::ZeroPoints => {
            CodecError::EmptyInput
        }
        other => CodecError::CorruptHeader(other.to_string()),
    }
}
