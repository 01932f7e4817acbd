//! Objective evaluation: point-to-point (D1) and point-to-plane (D2) PSNR,
//! bits-per-point accounting, and Bjontegaard delta rate between curves.

use std::collections::BinaryHeap;

use thiserror::Error;

use crate::tensor::Coord;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("zero input points")]
    ZeroPoints,
    #[error("BD-Rate needs at least 4 points per curve, got {0}")]
    InsufficientPoints(usize),
    #[error("rate-distortion curves share no PSNR interval")]
    NoOverlap,
    #[error("curve bpp values must strictly increase")]
    NonMonotoneRate,
}

/// PSNR reported for a zero-error reconstruction.
pub const PSNR_SENTINEL: f64 = 999.0;

/// Neighborhood size used when estimating normals for D2.
pub const NORMAL_ESTIMATION_K: usize = 12;

fn dist2(a: Coord, b: Coord) -> i64 {
    let dx = (a.x - b.x) as i64;
    let dy = (a.y - b.y) as i64;
    let dz = (a.z - b.z) as i64;
    dx * dx + dy * dy + dz * dz
}

/// Exact nearest-neighbor search over integer coordinates; equidistant
/// neighbors resolve to the canonically smallest coordinate.
pub struct KdTree {
    pts: Vec<Coord>,
    // nodes in build order: (point index, split axis)
    nodes: Vec<(u32, u8)>,
    left: Vec<i32>,
    right: Vec<i32>,
    root: i32,
}

impl KdTree {
    pub fn build(pts: &[Coord]) -> KdTree {
        let mut tree = KdTree {
            pts: pts.to_vec(),
            nodes: Vec::with_capacity(pts.len()),
            left: Vec::with_capacity(pts.len()),
            right: Vec::with_capacity(pts.len()),
            root: -1,
        };
        let mut idx: Vec<u32> = (0..pts.len() as u32).collect();
        tree.root = tree.build_rec(&mut idx);
        tree
    }

    fn axis_val(c: Coord, axis: u8) -> i32 {
        match axis {
            0 => c.x,
            1 => c.y,
            _ => c.z,
        }
    }

    fn build_rec(&mut self, idx: &mut [u32]) -> i32 {
        if idx.is_empty() {
            return -1;
        }
        // split on the widest axis for balanced pruning
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for &i in idx.iter() {
            let c = self.pts[i as usize];
            for (a, v) in [c.x, c.y, c.z].into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        let axis = (0..3)
            .max_by_key(|&a| hi[a] as i64 - lo[a] as i64)
            .unwrap() as u8;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by_key(mid, |&i| {
            (Self::axis_val(self.pts[i as usize], axis), self.pts[i as usize])
        });
        let node = self.nodes.len() as i32;
        self.nodes.push((idx[mid], axis));
        self.left.push(-1);
        self.right.push(-1);
        let (lo_half, rest) = idx.split_at_mut(mid);
        let (_, hi_half) = rest.split_at_mut(1);
        let l = self.build_rec(lo_half);
        let r = self.build_rec(hi_half);
        self.left[node as usize] = l;
        self.right[node as usize] = r;
        node
    }

    /// Index and squared distance of the nearest point to `q`.
    pub fn nearest(&self, q: Coord) -> (usize, i64) {
        debug_assert!(!self.pts.is_empty());
        let mut best = (usize::MAX, i64::MAX);
        self.nearest_rec(self.root, q, &mut best);
        best
    }

    fn better(&self, cand: usize, d2: i64, best: (usize, i64)) -> bool {
        d2 < best.1
            || (d2 == best.1
                && (best.0 == usize::MAX || self.pts[cand] < self.pts[best.0]))
    }

    fn nearest_rec(&self, node: i32, q: Coord, best: &mut (usize, i64)) {
        if node < 0 {
            return;
        }
        let (pi, axis) = self.nodes[node as usize];
        let p = self.pts[pi as usize];
        let d = dist2(q, p);
        if self.better(pi as usize, d, *best) {
            *best = (pi as usize, d);
        }
        let diff = (Self::axis_val(q, axis) - Self::axis_val(p, axis)) as i64;
        let (near, far) = if diff < 0 {
            (self.left[node as usize], self.right[node as usize])
        } else {
            (self.right[node as usize], self.left[node as usize])
        };
        self.nearest_rec(near, q, best);
        // ties matter for the canonical-order rule, so probe on equality too
        if diff * diff <= best.1 {
            self.nearest_rec(far, q, best);
        }
    }

    /// Indices of the k nearest points (including exact self-matches),
    /// deterministic under distance ties.
    pub fn k_nearest(&self, q: Coord, k: usize) -> Vec<usize> {
        let mut heap: BinaryHeap<(i64, Coord, usize)> = BinaryHeap::new();
        self.k_nearest_rec(self.root, q, k, &mut heap);
        let mut out: Vec<(i64, Coord, usize)> = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|(_, _, i)| i).collect()
    }

    fn k_nearest_rec(
        &self,
        node: i32,
        q: Coord,
        k: usize,
        heap: &mut BinaryHeap<(i64, Coord, usize)>,
    ) {
        if node < 0 {
            return;
        }
        let (pi, axis) = self.nodes[node as usize];
        let p = self.pts[pi as usize];
        let d = dist2(q, p);
        let cand = (d, p, pi as usize);
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().unwrap() {
            heap.pop();
            heap.push(cand);
        }
        let diff = (Self::axis_val(q, axis) - Self::axis_val(p, axis)) as i64;
        let (near, far) = if diff < 0 {
            (self.left[node as usize], self.right[node as usize])
        } else {
            (self.right[node as usize], self.left[node as usize])
        };
        self.k_nearest_rec(near, q, k, heap);
        let worst = heap.peek().map(|w| w.0).unwrap_or(i64::MAX);
        if heap.len() < k || diff * diff <= worst {
            self.k_nearest_rec(far, q, k, heap);
        }
    }
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_SENTINEL;
    }
    10.0 * (3.0 * peak * peak / mse).log10()
}

fn mean_nn_sq(from: &[Coord], to_tree: &KdTree) -> f64 {
    let total: i64 = from.iter().map(|&p| to_tree.nearest(p).1).sum();
    total as f64 / from.len() as f64
}

/// Symmetric point-to-point distortion: the worse of the two directional
/// mean squared nearest-neighbor distances, as (MSE, PSNR) with
/// `peak = 2^bitdepth - 1`.
pub fn d1_psnr(rec: &[Coord], reference: &[Coord], peak: f64) -> Result<(f64, f64), MetricsError> {
    if rec.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let rec_tree = KdTree::build(rec);
    let ref_tree = KdTree::build(reference);
    let ab = mean_nn_sq(rec, &ref_tree);
    let ba = mean_nn_sq(reference, &rec_tree);
    let mse = ab.max(ba);
    Ok((mse, psnr_from_mse(mse, peak)))
}

/// Jacobi eigensolver for a symmetric 3x3 matrix. Returns eigenvalues in
/// descending order with matching unit eigenvectors as rows.
fn eig_sym3(mut m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..64 {
        // largest off-diagonal element
        let (mut p, mut q, mut max) = (0usize, 1usize, 0.0f64);
        for i in 0..3 {
            for j in (i + 1)..3 {
                if m[i][j].abs() > max {
                    max = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if max < 1e-14 {
            break;
        }
        let theta = 0.5 * (m[q][q] - m[p][p]) / m[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        let (mpp, mqq, mpq) = (m[p][p], m[q][q], m[p][q]);
        m[p][p] = mpp - t * mpq;
        m[q][q] = mqq + t * mpq;
        m[p][q] = 0.0;
        m[q][p] = 0.0;
        for i in 0..3 {
            if i != p && i != q {
                let (mip, miq) = (m[i][p], m[i][q]);
                m[i][p] = c * mip - s * miq;
                m[p][i] = m[i][p];
                m[i][q] = s * mip + c * miq;
                m[q][i] = m[i][q];
            }
        }
        for row in v.iter_mut() {
            let (vip, viq) = (row[p], row[q]);
            row[p] = c * vip - s * viq;
            row[q] = s * vip + c * viq;
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_unstable_by(|&a, &b| m[b][b].partial_cmp(&m[a][a]).unwrap());
    let evals = [m[order[0]][order[0]], m[order[1]][order[1]], m[order[2]][order[2]]];
    let mut evecs = [[0.0; 3]; 3];
    for (k, &o) in order.iter().enumerate() {
        for i in 0..3 {
            evecs[k][i] = v[i][o];
        }
    }
    (evals, evecs)
}

/// Per-point unit normals from the covariance of the k nearest neighbors;
/// the smallest-eigenvalue eigenvector, sign-fixed so the component of
/// largest magnitude is positive. Degenerate neighborhoods (rank < 2) fall
/// back to the canonical +z normal.
pub fn estimate_normals(cloud: &[Coord], k: usize) -> Result<Vec<[f64; 3]>, MetricsError> {
    if cloud.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    assert!(k >= 3, "normal estimation needs k >= 3");
    assert!(cloud.len() >= k, "cloud smaller than neighborhood");
    let tree = KdTree::build(cloud);
    let mut normals = Vec::with_capacity(cloud.len());
    for &p in cloud {
        let nn = tree.k_nearest(p, k);
        let mut mean = [0.0f64; 3];
        for &i in &nn {
            let c = cloud[i];
            mean[0] += c.x as f64;
            mean[1] += c.y as f64;
            mean[2] += c.z as f64;
        }
        for m in mean.iter_mut() {
            *m /= nn.len() as f64;
        }
        let mut cov = [[0.0f64; 3]; 3];
        for &i in &nn {
            let c = cloud[i];
            let d = [c.x as f64 - mean[0], c.y as f64 - mean[1], c.z as f64 - mean[2]];
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += d[a] * d[b];
                }
            }
        }
        let (evals, evecs) = eig_sym3(cov);
        // rank < 2: all points on a line (or a single point)
        let degenerate = evals[0] <= 1e-12 || evals[1] <= 1e-9 * evals[0];
        let mut n = if degenerate { [0.0, 0.0, 1.0] } else { evecs[2] };
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        for v in n.iter_mut() {
            *v /= norm;
        }
        let arg = (0..3).max_by(|&a, &b| n[a].abs().partial_cmp(&n[b].abs()).unwrap()).unwrap();
        if n[arg] < 0.0 {
            for v in n.iter_mut() {
                *v = -*v;
            }
        }
        normals.push(n);
    }
    Ok(normals)
}

fn mean_plane_sq(from: &[Coord], to: &[Coord], to_tree: &KdTree, to_normals: &[[f64; 3]]) -> f64 {
    let mut total = 0.0;
    for &p in from {
        let (nn, _) = to_tree.nearest(p);
        let t = to[nn];
        let disp = [
            (p.x - t.x) as f64,
            (p.y - t.y) as f64,
            (p.z - t.z) as f64,
        ];
        let n = to_normals[nn];
        let proj = disp[0] * n[0] + disp[1] * n[1] + disp[2] * n[2];
        total += proj * proj;
    }
    total / from.len() as f64
}

/// Symmetric point-to-plane distortion. The forward direction projects each
/// displacement onto the reference normal; the reverse direction uses
/// normals estimated on the reconstruction.
pub fn d2_psnr(
    rec: &[Coord],
    reference: &[Coord],
    ref_normals: &[[f64; 3]],
    peak: f64,
) -> Result<(f64, f64), MetricsError> {
    if rec.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    assert_eq!(ref_normals.len(), reference.len());
    let ref_tree = KdTree::build(reference);
    let ab = mean_plane_sq(rec, reference, &ref_tree, ref_normals);
    let rec_tree = KdTree::build(rec);
    let rec_normals = if rec.len() >= 3 {
        estimate_normals(rec, NORMAL_ESTIMATION_K.min(rec.len()).max(3))?
    } else {
        vec![[0.0, 0.0, 1.0]; rec.len()]
    };
    let ba = mean_plane_sq(reference, rec, &rec_tree, &rec_normals);
    let mse = ab.max(ba);
    Ok((mse, psnr_from_mse(mse, peak)))
}

/// Bits per input point.
pub fn bpp(total_bits: u64, n_input_points: usize) -> Result<f64, MetricsError> {
    if n_input_points == 0 {
        return Err(MetricsError::ZeroPoints);
    }
    Ok(total_bits as f64 / n_input_points as f64)
}

/// One rate-distortion measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RDPoint {
    pub bpp: f64,
    pub d1_psnr: f64,
    pub d2_psnr: f64,
}

/// Ordered rate-distortion curve (strictly increasing bpp).
#[derive(Clone, Debug, PartialEq)]
pub struct RDCurve(pub Vec<RDPoint>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistortionKind {
    D1,
    D2,
}

impl RDCurve {
    fn validate(&self) -> Result<(), MetricsError> {
        if self.0.len() < 4 {
            return Err(MetricsError::InsufficientPoints(self.0.len()));
        }
        if self.0.windows(2).any(|w| w[1].bpp <= w[0].bpp) {
            return Err(MetricsError::NonMonotoneRate);
        }
        Ok(())
    }

    fn samples(&self, kind: DistortionKind) -> Vec<(f64, f64)> {
        self.0
            .iter()
            .map(|p| {
                let q = match kind {
                    DistortionKind::D1 => p.d1_psnr,
                    DistortionKind::D2 => p.d2_psnr,
                };
                (q, p.bpp.log10())
            })
            .collect()
    }
}

/// Least-squares cubic fit of y over a centered/scaled abscissa; returns
/// coefficients plus the (mid, halfspan) mapping.
fn cubic_fit(samples: &[(f64, f64)]) -> ([f64; 4], f64, f64) {
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).max(1e-9);
    // normal equations A^T A c = A^T y in the scaled variable
    let mut ata = [[0.0f64; 4]; 4];
    let mut aty = [0.0f64; 4];
    for &(x, y) in samples {
        let t = (x - mid) / half;
        let row = [1.0, t, t * t, t * t * t];
        for i in 0..4 {
            aty[i] += row[i] * y;
            for j in 0..4 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    let mut a = ata;
    let mut b = aty;
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        for row in (col + 1)..4 {
            let f = a[row][col] / d;
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut c = [0.0f64; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in (row + 1)..4 {
            acc -= a[row][k] * c[k];
        }
        c[row] = acc / a[row][row];
    }
    (c, mid, half)
}

/// Definite integral of the fitted cubic between PSNR bounds.
fn integrate_fit(fit: &([f64; 4], f64, f64), lo: f64, hi: f64) -> f64 {
    let (c, mid, half) = fit;
    let anti = |t: f64| -> f64 {
        c[0] * t + c[1] * t * t / 2.0 + c[2] * t * t * t / 3.0 + c[3] * t * t * t * t / 4.0
    };
    let tl = (lo - mid) / half;
    let th = (hi - mid) / half;
    half * (anti(th) - anti(tl))
}

/// Bjontegaard delta rate of `curve_b` against `curve_a` in percent;
/// negative means `curve_b` spends fewer bits at equal quality.
pub fn bd_rate(
    curve_a: &RDCurve,
    curve_b: &RDCurve,
    kind: DistortionKind,
) -> Result<f64, MetricsError> {
    curve_a.validate()?;
    curve_b.validate()?;
    let sa = curve_a.samples(kind);
    let sb = curve_b.samples(kind);
    let min_a = sa.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let max_a = sa.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let min_b = sb.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let max_b = sb.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let lo = min_a.max(min_b);
    let hi = max_a.min(max_b);
    if hi <= lo {
        return Err(MetricsError::NoOverlap);
    }
    let fa = cubic_fit(&sa);
    let fb = cubic_fit(&sb);
    let delta = (integrate_fit(&fb, lo, hi) - integrate_fit(&fa, lo, hi)) / (hi - lo);
    Ok((10f64.powf(delta) - 1.0) * 100.0)
}

/// Writes rate-distortion rows as CSV (label,bpp,d1_psnr,d2_psnr).
pub fn write_rd_csv(rows: &[(String, RDPoint)]) -> String {
    let mut out = String::from("label,bpp,d1_psnr,d2_psnr\n");
    for (label, p) in rows {
        out.push_str(&format!("{},{},{},{}\n", label, p.bpp, p.d1_psnr, p.d2_psnr));
    }
    out
}

/// Parses the CSV format produced by `write_rd_csv`.
pub fn read_rd_csv(text: &str) -> Result<Vec<(String, RDPoint)>, String> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("label,")) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(format!("line {}: expected 4 columns", ln + 1));
        }
        let parse = |s: &str| -> Result<f64, String> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", ln + 1))
        };
        rows.push((
            parts[0].to_string(),
            RDPoint {
                bpp: parse(parts[1])?,
                d1_psnr: parse(parts[2])?,
                d2_psnr: parse(parts[3])?,
            },
        ));
    }
    Ok(rows)
}
