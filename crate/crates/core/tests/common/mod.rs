#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// O(M^{2d}) DFT with sign `-1` (forward) or `+1` (unnormalized inverse).
pub fn naive_dft(x: &[Complex64], dim: usize, side: usize, sign: f64) -> Vec<Complex64> {
    let len = x.len();
    let digits = |mut i: usize| {
        let mut v = vec![0usize; dim];
        for a in (0..dim).rev() {
            v[a] = i % side;
            i /= side;
        }
        v
    };
    (0..len)
        .map(|k| {
            let kk = digits(k);
            (0..len)
                .map(|j| {
                    let jj = digits(j);
                    let ph: usize = kk.iter().zip(&jj).map(|(a, b)| a * b).sum();
                    let ang = sign * 2.0 * std::f64::consts::PI * (ph % side) as f64 / side as f64;
                    x[j] * Complex64::from_polar(1.0, ang)
                })
                .sum()
        })
        .collect()
}

/// `Σ_κ Φ(k-κ) u_κ` straight from the lattice kernel values.
pub fn dense_apply(op: &fraclap::OperatorHandle, u: &[f64]) -> Vec<f64> {
    let p = *op.params();
    let (d, n) = (p.d(), p.n());
    let kv = op.kernel_values();
    let idx: Vec<Vec<i64>> = (0..p.len())
        .map(|i| fraclap::multi_index(i, d, n).unwrap().as_slice().to_vec())
        .collect();
    idx.iter()
        .map(|k| {
            idx.iter()
                .zip(u)
                .map(|(q, &v)| {
                    let lag: Vec<i64> = k.iter().zip(q).map(|(a, b)| a - b).collect();
                    kv.at(&lag) * v
                })
                .sum()
        })
        .collect()
}
