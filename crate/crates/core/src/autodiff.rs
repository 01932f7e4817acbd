//! Reverse-mode differentiation over tensor-valued nodes. The tape records
//! whole feature matrices per node (not scalars), so a forward pass mirrors
//! the inference pipeline op for op and the backward pass reuses the sparse
//! convolution kernels for the adjoints.

use std::rc::Rc;
use std::sync::Arc;

use thiserror::Error;

use crate::entropy::{cum_backward, cum_forward, PMF_FLOOR, PRIOR_PARAMS_PER_CHANNEL};
use crate::network::NetworkError;
use crate::tensor::{conv_apply, conv_backward_input, conv_backward_params, ConvPlan};

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("loss node must be scalar")]
    NonScalarLoss,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite parameter after step {0}")]
    TrainingDiverged(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Row-major matrix value held by a tape node.
#[derive(Clone, Debug)]
pub struct Tensor2 {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor2 {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        Tensor2 { data, rows, cols }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor2::new(vec![v], 1, 1)
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

pub type NodeId = usize;

enum Op {
    Leaf,
    Conv {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        plan: Arc<ConvPlan>,
        cin: usize,
        cout: usize,
    },
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    /// Column-wise concatenation of two matrices with equal row counts.
    ConcatCols {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    /// Mean binary cross-entropy of probabilities against fixed labels.
    Bce {
        p: NodeId,
        labels: Rc<Vec<f64>>,
    },
    /// Additive uniform noise; the noise is a constant on the tape, so the
    /// gradient passes through unchanged.
    NoiseQuant {
        x: NodeId,
    },
    /// Total code length in bits of an N x C matrix under the factorized
    /// prior whose per-channel parameter vectors live at `psi`.
    RateBits {
        x: NodeId,
        psi: Vec<NodeId>,
    },
    /// Fixed-weight reduction to a scalar.
    WeightedSum {
        x: NodeId,
        weights: Rc<Vec<f64>>,
    },
}

struct Node {
    value: Tensor2,
    op: Op,
}

/// Append-only computation record; node indices are topologically ordered
/// by construction and the backward pass walks them once in reverse.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert!(self.nodes[id].value.is_scalar());
        self.nodes[id].value.data[0]
    }

    /// Gradient of the last backward target w.r.t. this node.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id]
    }

    pub fn leaf(&mut self, data: Vec<f64>, rows: usize, cols: usize) -> NodeId {
        self.push(Tensor2::new(data, rows, cols), Op::Leaf)
    }

    pub fn leaf_vec(&mut self, data: Vec<f64>) -> NodeId {
        let n = data.len();
        self.push(Tensor2::new(data, 1, n), Op::Leaf)
    }

    pub fn conv(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        plan: Arc<ConvPlan>,
        cin: usize,
        cout: usize,
    ) -> NodeId {
        let xv = &self.nodes[x].value;
        debug_assert_eq!(xv.rows, plan.n_in);
        debug_assert_eq!(xv.cols, cin);
        debug_assert_eq!(self.nodes[w].value.data.len(), plan.n_offsets * cin * cout);
        debug_assert_eq!(self.nodes[b].value.data.len(), cout);
        let y = conv_apply(
            &plan,
            &self.nodes[w].value.data,
            &self.nodes[b].value.data,
            &xv.data,
            cin,
            cout,
        );
        let rows = plan.n_out();
        self.push(
            Tensor2::new(y, rows, cout),
            Op::Conv {
                x,
                w,
                b,
                plan,
                cin,
                cout,
            },
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x].value;
        let data = v.data.iter().map(|&a| a.max(0.0)).collect();
        let t = Tensor2::new(data, v.rows, v.cols);
        self.push(t, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x].value;
        let data = v.data.iter().map(|&a| 1.0 / (1.0 + (-a).exp())).collect();
        let t = Tensor2::new(data, v.rows, v.cols);
        self.push(t, Op::Sigmoid { x })
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(va.rows, vb.rows);
        let cols = va.cols + vb.cols;
        let mut data = Vec::with_capacity(va.rows * cols);
        for r in 0..va.rows {
            data.extend_from_slice(&va.data[r * va.cols..(r + 1) * va.cols]);
            data.extend_from_slice(&vb.data[r * vb.cols..(r + 1) * vb.cols]);
        }
        let t = Tensor2::new(data, va.rows, cols);
        self.push(t, Op::ConcatCols { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols));
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect();
        let t = Tensor2::new(data, va.rows, va.cols);
        self.push(t, Op::Add { a, b })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = &self.nodes[x].value;
        let data = v.data.iter().map(|&a| a * c).collect();
        let t = Tensor2::new(data, v.rows, v.cols);
        self.push(t, Op::Scale { x, c })
    }

    pub fn bce(&mut self, p: NodeId, labels: Vec<f64>) -> NodeId {
        let v = &self.nodes[p].value;
        assert_eq!(v.data.len(), labels.len());
        let n = labels.len() as f64;
        let mut acc = 0.0;
        for (&pi, &yi) in v.data.iter().zip(&labels) {
            let pc = pi.clamp(1e-12, 1.0 - 1e-12);
            acc -= yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln();
        }
        self.push(
            Tensor2::scalar(acc / n),
            Op::Bce {
                p,
                labels: Rc::new(labels),
            },
        )
    }

    pub fn noise_quant(&mut self, x: NodeId, noise: &[f64]) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.data.len(), noise.len());
        let data = v.data.iter().zip(noise).map(|(a, u)| a + u).collect();
        let t = Tensor2::new(data, v.rows, v.cols);
        self.push(t, Op::NoiseQuant { x })
    }

    /// Code length of node `x` (N x C) under per-channel prior parameters.
    pub fn rate_bits(&mut self, x: NodeId, psi: Vec<NodeId>) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.cols, psi.len());
        for &pid in &psi {
            assert_eq!(self.nodes[pid].value.data.len(), PRIOR_PARAMS_PER_CHANNEL);
        }
        let mut bits = 0.0;
        for (idx, &val) in v.data.iter().enumerate() {
            let p = &self.nodes[psi[idx % v.cols]].value.data;
            let mass = (cum_forward(p, val + 0.5).c - cum_forward(p, val - 0.5).c).max(PMF_FLOOR);
            bits -= mass.log2();
        }
        self.push(Tensor2::scalar(bits), Op::RateBits { x, psi })
    }

    pub fn weighted_sum(&mut self, x: NodeId, weights: Vec<f64>) -> NodeId {
        let v = &self.nodes[x].value;
        assert_eq!(v.data.len(), weights.len());
        let acc = v.data.iter().zip(&weights).map(|(a, w)| a * w).sum();
        self.push(
            Tensor2::scalar(acc),
            Op::WeightedSum {
                x,
                weights: Rc::new(weights),
            },
        )
    }

    /// Mean of several scalar nodes.
    pub fn mean_scalars(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty());
        let mut acc = ids[0];
        for &id in &ids[1..] {
            acc = self.add(acc, id);
        }
        self.scale(acc, 1.0 / ids.len() as f64)
    }

    /// Smallest |pre-activation| across all ReLU nodes. Finite-difference
    /// tests use this to confirm no probe can cross a kink.
    pub fn min_abs_relu_input(&self) -> f64 {
        let mut min = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Relu { x } = node.op {
                for &v in &self.nodes[x].value.data {
                    min = min.min(v.abs());
                }
            }
        }
        min
    }

    /// Reverse pass seeding d(loss)/d(loss) = 1; adjoints for every node
    /// become available through `grad`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AutodiffError> {
        if !self.nodes[loss].value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss);
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.data.len()])
            .collect();
        self.grads[loss][0] = 1.0;
        for id in (0..=loss).rev() {
            let g = std::mem::take(&mut self.grads[id]);
            if g.iter().all(|&v| v == 0.0) {
                self.grads[id] = g;
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Conv {
                    x,
                    w,
                    b,
                    plan,
                    cin,
                    cout,
                } => {
                    let (x, w, b, plan, cin, cout) = (*x, *w, *b, plan.clone(), *cin, *cout);
                    let gx = conv_backward_input(&plan, &self.nodes[w].value.data, &g, cin, cout);
                    let (gw, gb) =
                        conv_backward_params(&plan, &self.nodes[x].value.data, &g, cin, cout);
                    accumulate(&mut self.grads[x], &gx);
                    accumulate(&mut self.grads[w], &gw);
                    accumulate(&mut self.grads[b], &gb);
                }
                Op::Relu { x } => {
                    let x = *x;
                    let xv = &self.nodes[x].value.data;
                    let gx = &mut self.grads[x];
                    for (i, &gi) in g.iter().enumerate() {
                        if xv[i] > 0.0 {
                            gx[i] += gi;
                        }
                    }
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let yv = &self.nodes[id].value.data;
                    let gx = &mut self.grads[x];
                    for (i, &gi) in g.iter().enumerate() {
                        gx[i] += gi * yv[i] * (1.0 - yv[i]);
                    }
                }
                Op::ConcatCols { a, b } => {
                    let (a, b) = (*a, *b);
                    let (ca, cb) = (self.nodes[a].value.cols, self.nodes[b].value.cols);
                    let rows = self.nodes[a].value.rows;
                    for r in 0..rows {
                        for c in 0..ca {
                            self.grads[a][r * ca + c] += g[r * (ca + cb) + c];
                        }
                        for c in 0..cb {
                            self.grads[b][r * cb + c] += g[r * (ca + cb) + ca + c];
                        }
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut self.grads[a], &g);
                    accumulate(&mut self.grads[b], &g);
                }
                Op::Scale { x, c } => {
                    let (x, c) = (*x, *c);
                    let gx = &mut self.grads[x];
                    for (i, &gi) in g.iter().enumerate() {
                        gx[i] += gi * c;
                    }
                }
                Op::Bce { p, labels } => {
                    let (p, labels) = (*p, labels.clone());
                    let n = labels.len() as f64;
                    let pv = &self.nodes[p].value.data;
                    let gp = &mut self.grads[p];
                    for (i, (&pi, &yi)) in pv.iter().zip(labels.iter()).enumerate() {
                        // zero gradient where the clamp is active
                        if pi > 1e-12 && pi < 1.0 - 1e-12 {
                            gp[i] += g[0] * (-yi / pi + (1.0 - yi) / (1.0 - pi)) / n;
                        }
                    }
                }
                Op::NoiseQuant { x } => {
                    let x = *x;
                    accumulate(&mut self.grads[x], &g);
                }
                Op::RateBits { x, psi } => {
                    let (x, psi) = (*x, psi.clone());
                    let cols = self.nodes[x].value.cols;
                    let ln2 = std::f64::consts::LN_2;
                    let xv = self.nodes[x].value.data.clone();
                    for (idx, &val) in xv.iter().enumerate() {
                        let pid = psi[idx % cols];
                        let params = self.nodes[pid].value.data.clone();
                        let hi = cum_forward(&params, val + 0.5);
                        let lo = cum_forward(&params, val - 0.5);
                        let mass = hi.c - lo.c;
                        if mass <= PMF_FLOOR {
                            continue; // clamp active, zero gradient
                        }
                        let dmass = -g[0] / (mass * ln2);
                        let gp = &mut self.grads[pid];
                        let dx_hi = cum_backward(&params, val + 0.5, &hi, dmass, gp);
                        let dx_lo = cum_backward(&params, val - 0.5, &lo, -dmass, gp);
                        self.grads[x][idx] += dx_hi + dx_lo;
                    }
                }
                Op::WeightedSum { x, weights } => {
                    let (x, weights) = (*x, weights.clone());
                    let gx = &mut self.grads[x];
                    for (i, &w) in weights.iter().enumerate() {
                        gx[i] += g[0] * w;
                    }
                }
            }
            self.grads[id] = g;
        }
        Ok(())
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
