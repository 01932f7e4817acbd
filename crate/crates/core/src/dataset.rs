//! Voxelization of raw clouds onto integer lattices and the deterministic
//! toy surface generator used for desk-scale training and evaluation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ply::PointCloud;
use crate::tensor::Coord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("empty point cloud")]
    EmptyCloud,
}

/// Quantizes a cloud onto `[0, 2^bitdepth)^3`: shift to the min corner,
/// scale the bounding cube onto the lattice, round half away from zero,
/// merge duplicates.
pub fn voxelize(cloud: &PointCloud, bitdepth: u8) -> Result<Vec<Coord>, DatasetError> {
    assert!((1..=12).contains(&bitdepth), "bitdepth out of desk range");
    if cloud.points.is_empty() {
        return Err(DatasetError::EmptyCloud);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &cloud.points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    let max_idx = ((1u32 << bitdepth) - 1) as f64;
    let scale = if extent > 0.0 { max_idx / extent } else { 0.0 };
    let mut coords: Vec<Coord> = cloud
        .points
        .iter()
        .map(|p| {
            let q = |a: usize| {
                (((p[a] - lo[a]) * scale).round() as i32).clamp(0, max_idx as i32)
            };
            Coord::new(q(0), q(1), q(2))
        })
        .collect();
    coords.sort_unstable();
    coords.dedup();
    Ok(coords)
}

/// Lattice coordinates back to a cloud, each voxel at its cell center
/// (the integer coordinate itself in lattice units).
pub fn lattice_to_cloud(coords: &[Coord]) -> PointCloud {
    PointCloud {
        points: coords
            .iter()
            .map(|c| [c.x as f64, c.y as f64, c.z as f64])
            .collect(),
    }
}

/// Uniform random rotation (Shoemake's quaternion method).
fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (x, y, z, w) = (a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn rotate(m: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
    ]
}

enum Shape {
    Sphere { r: f64 },
    Box { half: [f64; 3] },
    Plane { a: f64, b: f64 },
    Torus { big: f64, small: f64 },
}

impl Shape {
    fn area(&self) -> f64 {
        match self {
            Shape::Sphere { r } => 4.0 * std::f64::consts::PI * r * r,
            Shape::Box { half } => {
                8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2])
            }
            Shape::Plane { a, b } => a * b,
            Shape::Torus { big, small } => {
                4.0 * std::f64::consts::PI * std::f64::consts::PI * big * small
            }
        }
    }

    fn max_radius(&self) -> f64 {
        match self {
            Shape::Sphere { r } => *r,
            Shape::Box { half } => (half[0] * half[0] + half[1] * half[1] + half[2] * half[2]).sqrt(),
            Shape::Plane { a, b } => 0.5 * (a * a + b * b).sqrt(),
            Shape::Torus { big, small } => big + small,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        match self {
            Shape::Sphere { r } => {
                // uniform direction via the z/angle trick
                let z = rng.gen::<f64>() * 2.0 - 1.0;
                let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                let s = (1.0 - z * z).sqrt();
                [r * s * phi.cos(), r * s * phi.sin(), r * z]
            }
            Shape::Box { half } => {
                let areas = [
                    half[1] * half[2],
                    half[0] * half[2],
                    half[0] * half[1],
                ];
                let total: f64 = areas.iter().sum::<f64>();
                let mut pick = rng.gen::<f64>() * total;
                let mut face = 2usize;
                for (i, &a) in areas.iter().enumerate() {
                    if pick < a {
                        face = i;
                        break;
                    }
                    pick -= a;
                }
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let mut p = [
                    (rng.gen::<f64>() * 2.0 - 1.0) * half[0],
                    (rng.gen::<f64>() * 2.0 - 1.0) * half[1],
                    (rng.gen::<f64>() * 2.0 - 1.0) * half[2],
                ];
                p[face] = sign * half[face];
                p
            }
            Shape::Plane { a, b } => [
                (rng.gen::<f64>() - 0.5) * a,
                (rng.gen::<f64>() - 0.5) * b,
                0.0,
            ],
            Shape::Torus { big, small } => {
                let u = rng.gen::<f64>() * std::f64::consts::TAU;
                let v = rng.gen::<f64>() * std::f64::consts::TAU;
                let ring = big + small * v.cos();
                [ring * u.cos(), ring * u.sin(), small * v.sin()]
            }
        }
    }
}

/// Deterministic toy clouds: rotated parametric surfaces (sphere shells,
/// box surfaces, plane patches, torus patches) quantized directly onto the
/// lattice, each with 500 to 5000 occupied voxels.
pub fn gen_toy_dataset(seed: u64, count: usize, bitdepth: u8) -> Vec<Vec<Coord>> {
    assert!((4..=12).contains(&bitdepth), "toy generator needs bitdepth 4..=12");
    let mut master = ChaCha8Rng::seed_from_u64(seed ^ 0x70795f646174); // distinct stream family
    (0..count)
        .map(|_| {
            let cloud_seed: u64 = master.gen();
            gen_toy_cloud(cloud_seed, bitdepth)
        })
        .collect()
}

fn gen_toy_cloud(seed: u64, bitdepth: u8) -> Vec<Coord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lattice = (1u32 << bitdepth) as f64;
    let center = lattice / 2.0;
    let fit = 0.85 * (lattice / 2.0 - 1.0); // keep rotated shapes inside
    for _ in 0..32 {
        let kind = rng.gen_range(0..4);
        // aim for a surface budget the lattice can hold
        let max_area = match kind {
            0 => 4.0 * std::f64::consts::PI * fit * fit,
            1 => 24.0 * (fit / 3f64.sqrt()) * (fit / 3f64.sqrt()),
            2 => 2.0 * fit * fit,
            _ => 4.0 * std::f64::consts::PI * std::f64::consts::PI * fit * 0.3 * fit,
        };
        let target = rng.gen_range(620.0..1800.0f64.min(max_area * 0.8).max(680.0));
        let shape = match kind {
            0 => Shape::Sphere {
                r: (target / (4.0 * std::f64::consts::PI)).sqrt(),
            },
            1 => {
                let (ra, rb): (f64, f64) = (rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0));
                // solve 8(ab+bc+ca) = target with aspect ratios ra, rb
                let unit = 8.0 * (ra * rb + rb + ra);
                let c = (target / unit).sqrt();
                Shape::Box {
                    half: [ra * c, rb * c, c],
                }
            }
            2 => {
                let aspect: f64 = rng.gen_range(0.5..1.0);
                let a = (target / aspect).sqrt();
                Shape::Plane { a, b: a * aspect }
            }
            _ => {
                let small: f64 = rng.gen_range(2.5..4.0);
                let big = target / (4.0 * std::f64::consts::PI * std::f64::consts::PI * small);
                Shape::Torus { big, small }
            }
        };
        if shape.max_radius() > fit {
            continue;
        }
        let rot = random_rotation(&mut rng);
        let samples = (shape.area() * 8.0) as usize;
        let mut coords: Vec<Coord> = (0..samples)
            .map(|_| {
                let p = rotate(&rot, shape.sample(&mut rng));
                Coord::new(
                    (center + p[0]).round() as i32,
                    (center + p[1]).round() as i32,
                    (center + p[2]).round() as i32,
                )
            })
            .filter(|c| {
                let lim = lattice as i32;
                c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < lim && c.y < lim && c.z < lim
            })
            .collect();
        coords.sort_unstable();
        coords.dedup();
        if (500..=5000).contains(&coords.len()) {
            return coords;
        }
    }
    unreachable!("toy shape budgets are sized to always land in range");
}
