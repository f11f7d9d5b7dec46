// SPDX-License-Identifier: MIT OR Apache-2.0

//! Direct, unoptimized reference computations.

use persuasion_probe::{Dataset, ProbeModel};

/// AUROC by counting every positive–negative pair; ties count one half.
pub fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

fn kl2(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Jensen–Shannon divergence, base 2.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl2(p, &m) + 0.5 * kl2(q, &m)
}

/// Jensen–Shannon distance, base 2.
pub fn js_distance(p: &[f64], q: &[f64]) -> f64 {
    js_divergence(p, q).sqrt()
}

/// Pearson r by the raw-sums formula.
pub fn pearson_sums(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Logistic sigmoid.
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean softmax cross-entropy plus `λ/2·‖W‖²`, written from scratch.
pub fn objective(probe: &ProbeModel, data: &Dataset, l2: f64) -> f64 {
    let (c, d) = (probe.num_classes(), probe.dim());
    let w = probe.weights();
    let b = probe.bias();
    let mut total = 0.0;
    for i in 0..data.len() {
        let x = data.x(i);
        let z: Vec<f64> = (0..c)
            .map(|k| b[k] + (0..d).map(|j| w[k * d + j] * x[j]).sum::<f64>())
            .collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln();
        total += lse - z[data.label(i)];
    }
    total / data.len() as f64 + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Central finite-difference gradient of `f` in `(W, b)`.
pub fn numeric_gradient(
    probe: &ProbeModel,
    step: f64,
    f: impl Fn(&ProbeModel) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut p = probe.clone();
    let mut gw = vec![0.0; probe.weights().len()];
    for (i, g) in gw.iter_mut().enumerate() {
        let orig = p.weights()[i];
        p.weights_mut()[i] = orig + step;
        let up = f(&p);
        p.weights_mut()[i] = orig - step;
        let down = f(&p);
        p.weights_mut()[i] = orig;
        *g = (up - down) / (2.0 * step);
    }
    let mut gb = vec![0.0; probe.bias().len()];
    for (i, g) in gb.iter_mut().enumerate() {
        let orig = p.bias()[i];
        p.bias_mut()[i] = orig + step;
        let up = f(&p);
        p.bias_mut()[i] = orig - step;
        let down = f(&p);
        p.bias_mut()[i] = orig;
        *g = (up - down) / (2.0 * step);
    }
    (gw, gb)
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot = a[col].clone();
        for r in col + 1..n {
            let f = a[r][col] / pivot[col];
            for (v, p) in a[r].iter_mut().zip(&pivot).skip(col) {
                *v -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Binary logistic regression by Newton's method (IRLS), minimizing
/// `mean NLL + ridge·‖v‖²` with an unpenalized intercept. Returns `(v, c)`
/// with `P(y = 1 | x) = σ(v·x + c)`.
pub fn irls_logistic(data: &Dataset, ridge: f64, iterations: usize) -> (Vec<f64>, f64) {
    let d = data.dim();
    let n = data.len() as f64;
    let mut theta = vec![0.0; d + 1];
    for _ in 0..iterations {
        let mut grad = vec![0.0; d + 1];
        let mut hess = vec![vec![0.0; d + 1]; d + 1];
        for i in 0..data.len() {
            let x: Vec<f64> = data.x(i).iter().cloned().chain([1.0]).collect();
            let z: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            let y = data.label(i) as f64;
            for r in 0..=d {
                grad[r] += (p - y) * x[r] / n;
                for c in 0..=d {
                    hess[r][c] += p * (1.0 - p) * x[r] * x[c] / n;
                }
            }
        }
        for r in 0..d {
            grad[r] += 2.0 * ridge * theta[r];
            hess[r][r] += 2.0 * ridge;
        }
        let step = solve(hess, grad);
        for (t, s) in theta.iter_mut().zip(step) {
            *t -= s;
        }
    }
    let c = theta.pop().expect("intercept");
    (theta, c)
}
