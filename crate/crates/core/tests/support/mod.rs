//! Shared test helpers, including an ε-SVR reference solver that shares no
//! code with the library's SMO implementation.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Solution of the 2n-variable ε-SVR dual by accelerated projected gradient.
pub struct QpSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub iterations: usize,
}

fn objective(k: &[Vec<f64>], y: &[f64], eps: f64, a: &[f64]) -> f64 {
    let n = y.len();
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * k[i][j] * beta[j];
        }
    }
    let lin: f64 = (0..n).map(|i| y[i] * beta[i]).sum();
    let l1: f64 = a.iter().sum();
    0.5 * quad - lin + eps * l1
}

fn gradient(k: &[Vec<f64>], y: &[f64], eps: f64, a: &[f64]) -> Vec<f64> {
    let n = y.len();
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
    let mut g = vec![0.0; 2 * n];
    for i in 0..n {
        let kb: f64 = (0..n).map(|j| k[i][j] * beta[j]).sum();
        g[i] = kb - y[i] + eps;
        g[n + i] = -kb + y[i] + eps;
    }
    g
}

/// Euclidean projection onto `{0 <= a <= c, sum_{i<n} a_i - sum_{i>=n} a_i = 0}`:
/// `a = clip(v - lambda s, 0, c)` with `lambda` found by bisection.
fn project(v: &[f64], c: f64) -> Vec<f64> {
    let n = v.len() / 2;
    let balance = |lambda: f64| -> f64 {
        let plus: f64 = v[..n].iter().map(|x| (x - lambda).clamp(0.0, c)).sum();
        let minus: f64 = v[n..].iter().map(|x| (x + lambda).clamp(0.0, c)).sum();
        plus - minus
    };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let s = if i < n { 1.0 } else { -1.0 };
            (x - lambda * s).clamp(0.0, c)
        })
        .collect()
}

/// Norm of the projected-gradient step; zero exactly at a KKT point.
fn residual(k: &[Vec<f64>], y: &[f64], eps: f64, c: f64, a: &[f64], step: f64) -> f64 {
    let g = gradient(k, y, eps, a);
    let v: Vec<f64> = a.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
    project(&v, c)
        .iter()
        .zip(a)
        .map(|(p, x)| (p - x).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn solve_svr_qp(k: &[Vec<f64>], y: &[f64], c: f64, eps: f64) -> QpSolution {
    let n = y.len();
    let step = 1.0 / (2.0 * 1.01 * largest_eigenvalue(k));
    let mut a = vec![0.0; 2 * n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(k, y, eps, &a);
    let mut iterations = 0;
    let mut checkpoint = f_prev;
    while iterations < 400_000 {
        iterations += 1;
        let g = gradient(k, y, eps, &z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect();
        let a_next = project(&v, c);
        let f = objective(k, y, eps, &a_next);
        // adaptive restart keeps the momentum monotone
        if f > f_prev && t > 1.0 {
            t = 1.0;
            z = a.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        z = a_next
            .iter()
            .zip(&a)
            .map(|(x, xp)| x + mom * (x - xp))
            .collect();
        a = a_next;
        t = t_next;
        f_prev = f;
        if iterations % 1000 == 0 {
            if checkpoint - f < 1e-14 || residual(k, y, eps, c, &a, step) < 1e-10 {
                break;
            }
            checkpoint = f;
        }
    }
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
    let bias = kkt_bias(k, y, c, eps, &beta);
    QpSolution {
        objective: objective(k, y, eps, &a),
        beta,
        bias,
        iterations,
    }
}

/// Power iteration on a symmetric PSD matrix.
fn largest_eigenvalue(k: &[Vec<f64>]) -> f64 {
    let n = k.len();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = k
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        lambda = norm;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Offset from the KKT conditions: free coefficients sit exactly on the
/// tube boundary. Falls back to the middle of the feasible interval.
fn kkt_bias(k: &[Vec<f64>], y: &[f64], c: f64, eps: f64, beta: &[f64]) -> f64 {
    let n = y.len();
    let margin = 1e-6 * c;
    let mut free = Vec::new();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let kb: f64 = (0..n).map(|j| k[i][j] * beta[j]).sum();
        let b = beta[i];
        if b > margin && b < c - margin {
            free.push(y[i] - eps - kb);
        } else if b < -margin && b > -c + margin {
            free.push(y[i] + eps - kb);
        } else if b.abs() <= margin {
            lo = lo.max(y[i] - eps - kb);
            hi = hi.min(y[i] + eps - kb);
        } else if b > 0.0 {
            lo = lo.max(y[i] - eps - kb);
        } else {
            hi = hi.min(y[i] + eps - kb);
        }
    }
    if free.is_empty() {
        0.5 * (lo + hi)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    }
}

/// Random regression instance with an RBF kernel (full rank, so the optimal
/// coefficients are unique).
pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub gamma: f64,
    pub c: f64,
    pub eps: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = rng.random_range(10..=50);
    let n_f = rng.random_range(2..=6);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n_f).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let w: Vec<f64> = (0..n_f).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = x
        .iter()
        .map(|xi| {
            let s: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum();
            s.sin() + 0.1 * rng.random_range(-1.0..1.0)
        })
        .collect();
    Instance {
        x,
        y,
        gamma: rng.random_range(0.2..2.0),
        c: rng.random_range(0.1..10.0),
        eps: rng.random_range(0.0..0.2),
    }
}

pub fn rbf_matrix(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    a.iter()
        .map(|p| {
            b.iter()
                .map(|q| {
                    let d2: f64 = p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum();
                    (-gamma * d2).exp()
                })
                .collect()
        })
        .collect()
}

pub fn oracle_predict(sol: &QpSolution, k_row: &[f64]) -> f64 {
    sol.beta.iter().zip(k_row).map(|(b, k)| b * k).sum::<f64>() + sol.bias
}
