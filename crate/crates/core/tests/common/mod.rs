//! Independent oracles and fixtures shared by the integration tests. Nothing
//! here calls into the solver code it is used to check.
#![allow(dead_code)]

use localnewton_core::{Dataset, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn normal_vec(r: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * normal(r)).collect()
}

/// Gaussian rows; binary labels from a random hyperplane with 10% flips,
/// regression targets linear plus unit noise.
pub fn random_dataset(n: usize, d: usize, task: Task, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let w = normal_vec(&mut r, d, 1.0);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = normal_vec(&mut r, d, 1.0);
        let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let y = match task {
            Task::Binary => {
                let s = if z >= 0.0 { 1.0 } else { -1.0 };
                if r.random::<f64>() < 0.1 {
                    -s
                } else {
                    s
                }
            }
            Task::Regression => z + normal(&mut r),
        };
        rows.push(x);
        ys.push(y);
    }
    Dataset::from_rows(&rows, ys, task).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / max(|b|, floor)`
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(floor)
}

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        assert!(a[col][col] != 0.0, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let pivot_row = a[col].clone();
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Double-double number `hi + lo` built from error-free transformations.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl DoubleDouble {
    pub fn add(self, x: f64) -> Self {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = two_sum(s, e + self.lo);
        DoubleDouble { hi, lo }
    }

    /// Quotient by a small integer, good to about 2^-100 relative.
    pub fn div(self, k: f64) -> f64 {
        let q = self.hi / k;
        // fma gives the exact remainder of hi - q k.
        let r = q.mul_add(-k, self.hi) + self.lo;
        q + r / k
    }
}

/// Coordinate-wise mean accumulated in double-double precision.
pub fn extended_mean(vs: &[Vec<f64>]) -> Vec<f64> {
    let d = vs[0].len();
    (0..d)
        .map(|i| {
            let acc = vs.iter().fold(DoubleDouble::default(), |acc, v| acc.add(v[i]));
            acc.div(vs.len() as f64)
        })
        .collect()
}

/// Central-difference gradient of `f` at `w` with step `h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    let mut wp = w.to_vec();
    (0..w.len())
        .map(|i| {
            wp[i] = w[i] + h;
            let up = f(&wp);
            wp[i] = w[i] - h;
            let down = f(&wp);
            wp[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central difference of a vector function along direction `v`.
pub fn fd_directional(f: impl Fn(&[f64]) -> Vec<f64>, w: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let plus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = w.iter().zip(v).map(|(a, b)| a - h * b).collect();
    f(&plus).iter().zip(f(&minus)).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Random symmetric positive definite matrix `A^T A + shift I`.
pub fn random_spd(r: &mut ChaCha8Rng, d: usize, shift: f64) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..d).map(|_| normal_vec(r, d, 1.0)).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| a[k][i] * a[k][j]).sum::<f64>() + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn random_subset(r: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).filter(|_| r.random::<f64>() < 0.5).collect();
    if idx.is_empty() {
        idx.push(r.random_range(0..n));
    }
    idx
}
