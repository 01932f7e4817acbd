//! Multiscale sparse-convolutional point cloud geometry codec.
//!
//! The pipeline voxelizes a point cloud, runs a sparse convolutional
//! encoder down three scales, transmits the bottleneck coordinates with a
//! lossless octree code and the bottleneck features with a learned
//! factorized prior driving a range coder, then reconstructs
//! coarse-to-fine with per-scale occupancy classification and top-k
//! pruning. Training optimizes the rate-distortion Lagrangian with a
//! built-in reverse-mode tape and Adam.

pub mod autodiff;
pub mod codec;
pub mod coder;
pub mod dataset;
pub mod entropy;
pub mod metrics;
pub mod model_io;
pub mod network;
pub mod octree;
pub mod ply;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use codec::{decode_cloud, encode_cloud, CodecError, DecodeStats, EncodeStats};
pub use dataset::{gen_toy_dataset, voxelize};
pub use entropy::{FactorizedPrior, PmfTable};
pub use metrics::{RDCurve, RDPoint};
pub use model_io::{load_model, model_hash, save_model};
pub use network::{CodecModel, DecodeMode, NetConfig, ScaleResult};
pub use octree::OctreePayload;
pub use ply::{read_ply, write_ply, PlyFormat, PointCloud};
pub use tensor::{Coord, ConvWeights, Extent, SparseTensor, StrideKind};
pub use train::{TrainConfig, TrainReport};
