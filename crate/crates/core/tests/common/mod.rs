#![allow(dead_code)]

use emff::frames::{random_rotation, Dcm};
use emff::Vec3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dcm(rng: &mut ChaCha8Rng) -> Dcm {
    Dcm::from_quaternion(&random_rotation(rng))
}

/// Uniform direction, distance uniform in `[d_min, d_max]`.
pub fn random_offset(rng: &mut ChaCha8Rng, d_min: f64, d_max: f64) -> Vec3 {
    let d = rng.random_range(d_min..=d_max);
    random_rotation(rng) * Vec3::z() * d
}

pub fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
        rng.random_range(-scale..=scale),
    )
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Nodes and elements of a circular loop of `radius` about `normal`, with a
/// starting phase unrelated to the library's coil frames.
fn loop_nodes(center: &Vec3, normal: &Vec3, radius: f64, n: usize, phase: f64) -> Vec<(Vec3, Vec3)> {
    let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = normal.cross(&helper).normalize();
    let v = normal.cross(&u);
    let dphi = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|i| {
            let (s, c) = (phase + i as f64 * dphi).sin_cos();
            (center + (u * c + v * s) * radius, (v * c - u * s) * (radius * dphi))
        })
        .collect()
}

/// Force on satellite `j` and torque about its center, by direct double
/// summation of the Biot-Savart force over all nine loop pairs carrying the
/// given per-axis currents (A) with `turns` turns each.
#[allow(clippy::too_many_arguments)]
pub fn direct_wrench(
    center_j: &Vec3,
    dcm_j: &Dcm,
    currents_j: &Vec3,
    center_k: &Vec3,
    dcm_k: &Dcm,
    currents_k: &Vec3,
    radius: f64,
    turns: f64,
    n: usize,
) -> (Vec3, Vec3) {
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for l in 0..3 {
        let src = loop_nodes(center_k, &dcm_k.column(l), radius, n, 0.3 + l as f64);
        for m in 0..3 {
            let tgt = loop_nodes(center_j, &dcm_j.column(m), radius, n, 1.1 + 0.5 * m as f64);
            let scale = 1e-7 * turns * turns * currents_k[l] * currents_j[m];
            for (pj, dlj) in &tgt {
                let mut b = Vec3::zeros();
                for (pk, dlk) in &src {
                    let s = pj - pk;
                    b += dlk.cross(&s) / s.norm().powi(3);
                }
                let df = dlj.cross(&b) * scale;
                force += df;
                torque += (pj - center_j).cross(&df);
            }
        }
    }
    (force, torque)
}
