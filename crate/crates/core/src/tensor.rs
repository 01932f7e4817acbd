//! Sparse 3D tensors over integer voxel lattices and the convolution flavors
//! used by the codec: same-scale, stride-2 down, and stride-2 up.

use std::collections::HashMap;

use thiserror::Error;

/// A voxel coordinate in lattice units. Ordered lexicographically by (x, y, z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        Coord { x, y, z }
    }

    /// Parent coordinate one scale up, flooring toward negative infinity.
    pub fn half(self) -> Coord {
        Coord::new(
            self.x.div_euclid(2),
            self.y.div_euclid(2),
            self.z.div_euclid(2),
        )
    }

    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Coord {
        Coord::new(self.x + dx, self.y + dy, self.z + dz)
    }
}

impl From<(i32, i32, i32)> for Coord {
    fn from((x, y, z): (i32, i32, i32)) -> Self {
        Coord::new(x, y, z)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("duplicate coordinate {0:?}")]
    DuplicateCoordinate(Coord),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel mismatch: kernel expects {expected}, tensor has {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("coordinate {0:?} not present in tensor")]
    UnknownCoordinate(Coord),
    #[error("coordinate {0:?} outside extent")]
    OutOfExtent(Coord),
    #[error("empty input")]
    EmptyInput,
}

/// Axis-aligned box of lattice cells: `min + [0, size)` per axis.
#[derive(Clone, Copy, Debug)]
pub struct Extent {
    pub min: Coord,
    pub size: [usize; 3],
}

impl Extent {
    pub fn new(min: Coord, size: [usize; 3]) -> Self {
        Extent { min, size }
    }

    /// Smallest extent covering `coords`; `None` when empty.
    pub fn bounding(coords: &[Coord]) -> Option<Extent> {
        let first = *coords.first()?;
        let (mut lo, mut hi) = (first, first);
        for c in coords {
            lo = Coord::new(lo.x.min(c.x), lo.y.min(c.y), lo.z.min(c.z));
            hi = Coord::new(hi.x.max(c.x), hi.y.max(c.y), hi.z.max(c.z));
        }
        Some(Extent::new(
            lo,
            [
                (hi.x - lo.x) as usize + 1,
                (hi.y - lo.y) as usize + 1,
                (hi.z - lo.z) as usize + 1,
            ],
        ))
    }

    pub fn contains(&self, c: Coord) -> bool {
        let dx = c.x as i64 - self.min.x as i64;
        let dy = c.y as i64 - self.min.y as i64;
        let dz = c.z as i64 - self.min.z as i64;
        dx >= 0
            && dy >= 0
            && dz >= 0
            && (dx as usize) < self.size[0]
            && (dy as usize) < self.size[1]
            && (dz as usize) < self.size[2]
    }

    fn index(&self, c: Coord) -> usize {
        let dx = (c.x - self.min.x) as usize;
        let dy = (c.y - self.min.y) as usize;
        let dz = (c.z - self.min.z) as usize;
        (dx * self.size[1] + dy) * self.size[2] + dz
    }
}

/// Occupied coordinates plus an N x C feature matrix, row i belonging to
/// `coords[i]`. Coordinates are unique and kept in canonical (lexicographic)
/// order so identical inputs always produce identical outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    coords: Vec<Coord>,
    feats: Vec<f64>,
    channels: usize,
}

impl SparseTensor {
    /// Builds a tensor from unsorted rows; sorts into canonical order and
    /// rejects duplicate coordinates.
    pub fn new(
        coords: Vec<Coord>,
        feats: Vec<f64>,
        channels: usize,
    ) -> Result<Self, TensorError> {
        assert!(channels >= 1, "channels must be >= 1");
        if feats.len() != coords.len() * channels {
            return Err(TensorError::ShapeMismatch(format!(
                "{} coords x {} channels but {} feature values",
                coords.len(),
                channels,
                feats.len()
            )));
        }
        let mut order: Vec<usize> = (0..coords.len()).collect();
        order.sort_unstable_by_key(|&i| coords[i]);
        for w in order.windows(2) {
            if coords[w[0]] == coords[w[1]] {
                return Err(TensorError::DuplicateCoordinate(coords[w[0]]));
            }
        }
        let sorted_coords: Vec<Coord> = order.iter().map(|&i| coords[i]).collect();
        let mut sorted_feats = Vec::with_capacity(feats.len());
        for &i in &order {
            sorted_feats.extend_from_slice(&feats[i * channels..(i + 1) * channels]);
        }
        Ok(SparseTensor {
            coords: sorted_coords,
            feats: sorted_feats,
            channels,
        })
    }

    /// Occupancy tensor: one all-ones channel per coordinate.
    pub fn occupancy(coords: Vec<Coord>) -> Result<Self, TensorError> {
        let n = coords.len();
        SparseTensor::new(coords, vec![1.0; n], 1)
    }

    /// Rebuilds a tensor from rows already in canonical order with unique
    /// coordinates; used on hot paths where the invariant is known to hold.
    pub(crate) fn from_sorted(coords: Vec<Coord>, feats: Vec<f64>, channels: usize) -> Self {
        debug_assert!(coords.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!(feats.len(), coords.len() * channels);
        SparseTensor {
            coords,
            feats,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn feats(&self) -> &[f64] {
        &self.feats
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.feats[i * self.channels..(i + 1) * self.channels]
    }

    /// Same coordinates, new feature matrix.
    pub fn with_feats(&self, feats: Vec<f64>, channels: usize) -> SparseTensor {
        assert_eq!(feats.len(), self.coords.len() * channels);
        SparseTensor {
            coords: self.coords.clone(),
            feats,
            channels,
        }
    }

    /// Keeps exactly the given coordinates with their feature rows.
    pub fn prune(&self, keep: &[Coord]) -> Result<SparseTensor, TensorError> {
        let index = coord_index(&self.coords);
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        let mut feats = Vec::with_capacity(keep_sorted.len() * self.channels);
        for &c in &keep_sorted {
            let &row = index.get(&c).ok_or(TensorError::UnknownCoordinate(c))?;
            feats.extend_from_slice(self.row(row as usize));
        }
        Ok(SparseTensor {
            coords: keep_sorted,
            feats,
            channels: self.channels,
        })
    }

    /// Dense 4D array (x, y, z, channel) over `extent`; absent cells are zero.
    pub fn to_dense(&self, extent: Extent) -> Result<Vec<f64>, TensorError> {
        let cells = extent.size[0] * extent.size[1] * extent.size[2];
        let mut dense = vec![0.0; cells * self.channels];
        for (i, &c) in self.coords.iter().enumerate() {
            if !extent.contains(c) {
                return Err(TensorError::OutOfExtent(c));
            }
            let base = extent.index(c) * self.channels;
            dense[base..base + self.channels].copy_from_slice(self.row(i));
        }
        Ok(dense)
    }

    /// Inverse of `to_dense`: collects cells with any nonzero channel.
    pub fn from_dense(dense: &[f64], extent: Extent, channels: usize) -> SparseTensor {
        let cells = extent.size[0] * extent.size[1] * extent.size[2];
        assert_eq!(dense.len(), cells * channels);
        let mut coords = Vec::new();
        let mut feats = Vec::new();
        for dx in 0..extent.size[0] {
            for dy in 0..extent.size[1] {
                for dz in 0..extent.size[2] {
                    let c = Coord::new(
                        extent.min.x + dx as i32,
                        extent.min.y + dy as i32,
                        extent.min.z + dz as i32,
                    );
                    let base = extent.index(c) * channels;
                    let row = &dense[base..base + channels];
                    if row.iter().any(|&v| v != 0.0) {
                        coords.push(c);
                        feats.extend_from_slice(row);
                    }
                }
            }
        }
        SparseTensor::from_sorted(coords, feats, channels)
    }
}

/// How a kernel walks the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrideKind {
    /// Odd-width kernel, output coordinates equal input coordinates.
    Same,
    /// 2x2x2 kernel over disjoint cells, halving the scale.
    Down2,
    /// Transposed stride-2: each input spawns its 8 children.
    Up2,
}

/// Convolution parameters. The kernel is stored offset-major:
/// `kernel[(o * cin + ci) * cout + co]` with offsets enumerated
/// lexicographically over their (dx, dy, dz) triples.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub kernel_width: usize,
    pub stride_kind: StrideKind,
    pub cin: usize,
    pub cout: usize,
}

impl ConvWeights {
    pub fn zeros(kernel_width: usize, stride_kind: StrideKind, cin: usize, cout: usize) -> Self {
        match stride_kind {
            StrideKind::Same => assert!(kernel_width % 2 == 1, "same stride requires odd width"),
            StrideKind::Down2 | StrideKind::Up2 => {
                assert_eq!(kernel_width, 2, "strided kernels are fixed at width 2")
            }
        }
        let k3 = kernel_width * kernel_width * kernel_width;
        ConvWeights {
            kernel: vec![0.0; k3 * cin * cout],
            bias: vec![0.0; cout],
            kernel_width,
            stride_kind,
            cin,
            cout,
        }
    }

    pub fn num_offsets(&self) -> usize {
        self.kernel_width * self.kernel_width * self.kernel_width
    }

    /// Flat kernel index for an offset triple and channel pair.
    pub fn kernel_index(&self, offset: usize, ci: usize, co: usize) -> usize {
        (offset * self.cin + ci) * self.cout + co
    }

    fn check_input(&self, input: &SparseTensor) -> Result<(), TensorError> {
        if input.channels != self.cin {
            return Err(TensorError::ChannelMismatch {
                expected: self.cin,
                got: input.channels,
            });
        }
        Ok(())
    }
}

/// Offset triples for a `Same` kernel of odd width `k`, lexicographic.
pub fn same_offsets(k: usize) -> Vec<(i32, i32, i32)> {
    let h = (k as i32 - 1) / 2;
    let mut out = Vec::with_capacity(k * k * k);
    for dx in -h..=h {
        for dy in -h..=h {
            for dz in -h..=h {
                out.push((dx, dy, dz));
            }
        }
    }
    out
}

/// Offset triples {0,1}^3 for the strided kernels, lexicographic.
pub fn child_offsets() -> [(i32, i32, i32); 8] {
    [
        (0, 0, 0),
        (0, 0, 1),
        (0, 1, 0),
        (0, 1, 1),
        (1, 0, 0),
        (1, 0, 1),
        (1, 1, 0),
        (1, 1, 1),
    ]
}

pub(crate) fn coord_index(coords: &[Coord]) -> HashMap<Coord, u32> {
    coords
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u32))
        .collect()
}

/// Gather plan for one convolution application, stored by output row: for
/// output j, `entries[row_ptr[j]..row_ptr[j+1]]` lists the contributing
/// (kernel offset, input row) pairs in offset enumeration order, which fixes
/// the accumulation order per output.
#[derive(Clone, Debug)]
pub struct ConvPlan {
    pub out_coords: Vec<Coord>,
    pub row_ptr: Vec<u32>,
    pub entries: Vec<(u32, u32)>,
    pub n_in: usize,
    pub n_offsets: usize,
}

/// Widest supported channel count of a single convolution.
pub const MAX_CHANNELS: usize = 128;

impl ConvPlan {
    pub fn n_out(&self) -> usize {
        self.out_coords.len()
    }

    fn row(&self, j: usize) -> &[(u32, u32)] {
        &self.entries[self.row_ptr[j] as usize..self.row_ptr[j + 1] as usize]
    }

    fn from_buckets(
        out_coords: Vec<Coord>,
        buckets: Vec<Vec<(u32, u32)>>,
        n_in: usize,
        n_offsets: usize,
    ) -> ConvPlan {
        let mut row_ptr = Vec::with_capacity(out_coords.len() + 1);
        let mut entries = Vec::with_capacity(buckets.iter().map(Vec::len).sum());
        row_ptr.push(0u32);
        for mut b in buckets {
            b.sort_unstable_by_key(|&(o, _)| o);
            entries.extend_from_slice(&b);
            row_ptr.push(entries.len() as u32);
        }
        ConvPlan {
            out_coords,
            row_ptr,
            entries,
            n_in,
            n_offsets,
        }
    }
}

/// Plan for a same-scale convolution: outputs at the input coordinates,
/// each gathering the occupied neighbors inside its k^3 window.
pub fn plan_same(coords: &[Coord], kernel_width: usize) -> ConvPlan {
    let index = coord_index(coords);
    let offsets = same_offsets(kernel_width);
    let mut row_ptr = Vec::with_capacity(coords.len() + 1);
    let mut entries = Vec::new();
    row_ptr.push(0u32);
    for &u in coords {
        for (o, &(dx, dy, dz)) in offsets.iter().enumerate() {
            if let Some(&i) = index.get(&u.offset(dx, dy, dz)) {
                entries.push((o as u32, i));
            }
        }
        row_ptr.push(entries.len() as u32);
    }
    ConvPlan {
        out_coords: coords.to_vec(),
        row_ptr,
        entries,
        n_in: coords.len(),
        n_offsets: offsets.len(),
    }
}

/// Plan for a stride-2 downsampling convolution: outputs at the unique
/// halved coordinates, each gathering its up to 8 occupied children.
pub fn plan_down(coords: &[Coord]) -> ConvPlan {
    let mut out_coords: Vec<Coord> = coords.iter().map(|&c| c.half()).collect();
    out_coords.sort_unstable();
    out_coords.dedup();
    let out_index = coord_index(&out_coords);
    let mut buckets = vec![Vec::new(); out_coords.len()];
    for (i, &c) in coords.iter().enumerate() {
        let v = c.half();
        let rem = (c.x - 2 * v.x, c.y - 2 * v.y, c.z - 2 * v.z);
        let o = child_offsets().iter().position(|&d| d == rem).unwrap();
        buckets[out_index[&v] as usize].push((o as u32, i as u32));
    }
    let n_in = coords.len();
    ConvPlan::from_buckets(out_coords, buckets, n_in, 8)
}

/// Plan for a stride-2 transposed convolution: every input coordinate spawns
/// its 8 children, so the output has exactly 8x the input size.
pub fn plan_up(coords: &[Coord]) -> ConvPlan {
    let mut out_coords = Vec::with_capacity(coords.len() * 8);
    for &c in coords {
        for (dx, dy, dz) in child_offsets() {
            out_coords.push(Coord::new(2 * c.x + dx, 2 * c.y + dy, 2 * c.z + dz));
        }
    }
    out_coords.sort_unstable();
    debug_assert!(out_coords.windows(2).all(|w| w[0] < w[1]));
    let out_index = coord_index(&out_coords);
    let mut buckets = vec![Vec::new(); out_coords.len()];
    for (i, &c) in coords.iter().enumerate() {
        for (o, &(dx, dy, dz)) in child_offsets().iter().enumerate() {
            let w = Coord::new(2 * c.x + dx, 2 * c.y + dy, 2 * c.z + dz);
            buckets[out_index[&w] as usize].push((o as u32, i as u32));
        }
    }
    let n_in = coords.len();
    ConvPlan::from_buckets(out_coords, buckets, n_in, 8)
}

fn apply_rows<const COUT: usize>(
    plan: &ConvPlan,
    kernel: &[f64],
    bias: &[f64],
    x: &[f64],
    cin: usize,
    y: &mut [f64],
) {
    let mut acc = [0.0f64; COUT];
    for j in 0..plan.n_out() {
        acc.copy_from_slice(&bias[..COUT]);
        for &(o, i) in plan.row(j) {
            let w_o = &kernel[o as usize * cin * COUT..][..cin * COUT];
            let xi = &x[i as usize * cin..][..cin];
            for (ci, &a) in xi.iter().enumerate() {
                if a != 0.0 {
                    let wr = &w_o[ci * COUT..][..COUT];
                    for co in 0..COUT {
                        acc[co] += a * wr[co];
                    }
                }
            }
        }
        y[j * COUT..][..COUT].copy_from_slice(&acc);
    }
}

fn apply_rows_dyn(
    plan: &ConvPlan,
    kernel: &[f64],
    bias: &[f64],
    x: &[f64],
    cin: usize,
    cout: usize,
    y: &mut [f64],
) {
    let mut acc = [0.0f64; MAX_CHANNELS];
    for j in 0..plan.n_out() {
        acc[..cout].copy_from_slice(bias);
        for &(o, i) in plan.row(j) {
            let w_o = &kernel[o as usize * cin * cout..][..cin * cout];
            let xi = &x[i as usize * cin..][..cin];
            for (ci, &a) in xi.iter().enumerate() {
                if a != 0.0 {
                    let wr = &w_o[ci * cout..][..cout];
                    for (co, &w) in wr.iter().enumerate() {
                        acc[co] += a * w;
                    }
                }
            }
        }
        y[j * cout..][..cout].copy_from_slice(&acc[..cout]);
    }
}

/// Applies a planned convolution to a feature matrix: for every output row j,
/// `y[j] = bias + sum over contributing offsets o of x[i] * W[o]`.
pub(crate) fn conv_apply(
    plan: &ConvPlan,
    kernel: &[f64],
    bias: &[f64],
    x: &[f64],
    cin: usize,
    cout: usize,
) -> Vec<f64> {
    debug_assert_eq!(x.len(), plan.n_in * cin);
    assert!(cout <= MAX_CHANNELS);
    let mut y = vec![0.0; plan.n_out() * cout];
    match cout {
        1 => apply_rows::<1>(plan, kernel, bias, x, cin, &mut y),
        2 => apply_rows::<2>(plan, kernel, bias, x, cin, &mut y),
        4 => apply_rows::<4>(plan, kernel, bias, x, cin, &mut y),
        8 => apply_rows::<8>(plan, kernel, bias, x, cin, &mut y),
        16 => apply_rows::<16>(plan, kernel, bias, x, cin, &mut y),
        32 => apply_rows::<32>(plan, kernel, bias, x, cin, &mut y),
        64 => apply_rows::<64>(plan, kernel, bias, x, cin, &mut y),
        _ => apply_rows_dyn(plan, kernel, bias, x, cin, cout, &mut y),
    }
    y
}

fn backward_input_rows<const COUT: usize>(
    plan: &ConvPlan,
    kernel: &[f64],
    grad_out: &[f64],
    cin: usize,
    grad_in: &mut [f64],
) {
    let mut gj = [0.0f64; COUT];
    for j in 0..plan.n_out() {
        gj.copy_from_slice(&grad_out[j * COUT..][..COUT]);
        if gj.iter().all(|&g| g == 0.0) {
            continue;
        }
        for &(o, i) in plan.row(j) {
            let w_o = &kernel[o as usize * cin * COUT..][..cin * COUT];
            let gi = &mut grad_in[i as usize * cin..][..cin];
            for ci in 0..cin {
                let wr = &w_o[ci * COUT..][..COUT];
                let mut s = 0.0;
                for co in 0..COUT {
                    s += wr[co] * gj[co];
                }
                gi[ci] += s;
            }
        }
    }
}

/// Adjoint of `conv_apply` with respect to the input features.
pub(crate) fn conv_backward_input(
    plan: &ConvPlan,
    kernel: &[f64],
    grad_out: &[f64],
    cin: usize,
    cout: usize,
) -> Vec<f64> {
    let mut grad_in = vec![0.0; plan.n_in * cin];
    match cout {
        1 => backward_input_rows::<1>(plan, kernel, grad_out, cin, &mut grad_in),
        2 => backward_input_rows::<2>(plan, kernel, grad_out, cin, &mut grad_in),
        4 => backward_input_rows::<4>(plan, kernel, grad_out, cin, &mut grad_in),
        8 => backward_input_rows::<8>(plan, kernel, grad_out, cin, &mut grad_in),
        16 => backward_input_rows::<16>(plan, kernel, grad_out, cin, &mut grad_in),
        32 => backward_input_rows::<32>(plan, kernel, grad_out, cin, &mut grad_in),
        64 => backward_input_rows::<64>(plan, kernel, grad_out, cin, &mut grad_in),
        _ => {
            let mut gj = [0.0f64; MAX_CHANNELS];
            for j in 0..plan.n_out() {
                gj[..cout].copy_from_slice(&grad_out[j * cout..][..cout]);
                if gj[..cout].iter().all(|&g| g == 0.0) {
                    continue;
                }
                for &(o, i) in plan.row(j) {
                    let w_o = &kernel[o as usize * cin * cout..][..cin * cout];
                    let gi = &mut grad_in[i as usize * cin..][..cin];
                    for ci in 0..cin {
                        let wr = &w_o[ci * cout..][..cout];
                        let mut s = 0.0;
                        for (co, &w) in wr.iter().enumerate() {
                            s += w * gj[co];
                        }
                        gi[ci] += s;
                    }
                }
            }
        }
    }
    grad_in
}

fn backward_params_rows<const COUT: usize>(
    plan: &ConvPlan,
    x: &[f64],
    grad_out: &[f64],
    cin: usize,
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
) {
    let mut gj = [0.0f64; COUT];
    for j in 0..plan.n_out() {
        gj.copy_from_slice(&grad_out[j * COUT..][..COUT]);
        for co in 0..COUT {
            grad_bias[co] += gj[co];
        }
        if gj.iter().all(|&g| g == 0.0) {
            continue;
        }
        for &(o, i) in plan.row(j) {
            let gw = &mut grad_kernel[o as usize * cin * COUT..][..cin * COUT];
            let xi = &x[i as usize * cin..][..cin];
            for (ci, &a) in xi.iter().enumerate() {
                if a != 0.0 {
                    let gw_row = &mut gw[ci * COUT..][..COUT];
                    for co in 0..COUT {
                        gw_row[co] += a * gj[co];
                    }
                }
            }
        }
    }
}

/// Adjoint of `conv_apply` with respect to the kernel and bias.
pub(crate) fn conv_backward_params(
    plan: &ConvPlan,
    x: &[f64],
    grad_out: &[f64],
    cin: usize,
    cout: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut grad_kernel = vec![0.0; plan.n_offsets * cin * cout];
    let mut grad_bias = vec![0.0; cout];
    match cout {
        1 => backward_params_rows::<1>(plan, x, grad_out, cin, &mut grad_kernel, &mut grad_bias),
        2 => backward_params_rows::<2>(plan, x, grad_out, cin, &mut grad_kernel, &mut grad_bias),
        4 => backward_params_rows::<4>(plan, x, grad_out, cin, &mut grad_kernel, &mut grad_bias),
        8 => backward_params_rows::<8>(plan, x, grad_out, cin, &mut grad_kernel, &mut grad_bias),
        16 => backward_params_rows::<16>(plan, x, grad_out, cin, &mut grad_kernel, &mut grad_bias),
        32 => backward_params_rows::<32>(plan, x, grad_out, cin, &mut grad_kernel, &mut grad_bias),
        64 => backward_params_rows::<64>(plan, x, grad_out, cin, &mut grad_kernel, &mut grad_bias),
        _ => {
            let mut gj = [0.0f64; MAX_CHANNELS];
            for j in 0..plan.n_out() {
                let gjs = &grad_out[j * cout..][..cout];
                for (co, &g) in gjs.iter().enumerate() {
                    grad_bias[co] += g;
                }
                gj[..cout].copy_from_slice(gjs);
                if gj[..cout].iter().all(|&g| g == 0.0) {
                    continue;
                }
                for &(o, i) in plan.row(j) {
                    let gw = &mut grad_kernel[o as usize * cin * cout..][..cin * cout];
                    let xi = &x[i as usize * cin..][..cin];
                    for (ci, &a) in xi.iter().enumerate() {
                        if a != 0.0 {
                            let gw_row = &mut gw[ci * cout..][..cout];
                            for co in 0..cout {
                                gw_row[co] += a * gj[co];
                            }
                        }
                    }
                }
            }
        }
    }
    (grad_kernel, grad_bias)
}

fn run_conv(
    input: &SparseTensor,
    w: &ConvWeights,
    plan: ConvPlan,
) -> SparseTensor {
    let feats = conv_apply(&plan, &w.kernel, &w.bias, &input.feats, w.cin, w.cout);
    SparseTensor::from_sorted(plan.out_coords, feats, w.cout)
}

/// Same-scale sparse convolution: output coordinates equal input coordinates,
/// absent neighbors contribute zero.
pub fn conv_same(input: &SparseTensor, w: &ConvWeights) -> Result<SparseTensor, TensorError> {
    assert_eq!(w.stride_kind, StrideKind::Same);
    w.check_input(input)?;
    let plan = plan_same(&input.coords, w.kernel_width);
    Ok(run_conv(input, w, plan))
}

/// Stride-2 downsampling convolution onto the halved coordinate set.
pub fn conv_down(input: &SparseTensor, w: &ConvWeights) -> Result<SparseTensor, TensorError> {
    assert_eq!(w.stride_kind, StrideKind::Down2);
    w.check_input(input)?;
    let plan = plan_down(&input.coords);
    Ok(run_conv(input, w, plan))
}

/// Stride-2 transposed convolution generating all 8 children per coordinate.
pub fn conv_up(input: &SparseTensor, w: &ConvWeights) -> Result<SparseTensor, TensorError> {
    assert_eq!(w.stride_kind, StrideKind::Up2);
    w.check_input(input)?;
    let plan = plan_up(&input.coords);
    Ok(run_conv(input, w, plan))
}
