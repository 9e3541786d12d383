#![allow(dead_code)]

//! Independent reference solutions used only by tests.
//!
//! For k = k* = 1 the global minimiser of the training objective is known in
//! closed form given the top eigenpair `(s, u)` of `S = XᵀX/d`: the decoder is
//! `w = √(dQ) u`, the encoder `v = c w` with `c = s/((Q+β)s + λ)`, the
//! variance `D = β/(Q+β)`, and `Q` minimises
//! `F(Q) = −½ Q s²/((Q+β)s+λ) + (αβ/2) log((Q+β)/β) + λQ/2`.
//! In the proportional limit `s = α λ₁` with `λ₁` and the squared overlap
//! `⟨u, w*⟩²/d` given by the spiked Marchenko–Pastur (BBP) formulas.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn profile(q: f64, s: f64, alpha: f64, beta: f64, lambda: f64) -> f64 {
    let kappa = q + beta;
    let log_term = if beta > 0.0 { 0.5 * alpha * beta * (kappa / beta).ln() } else { 0.0 };
    -0.5 * q * s * s / (kappa * s + lambda) + log_term + 0.5 * lambda * q
}

/// Global minimiser of `profile` over `Q ≥ 0`.
pub fn best_q(s: f64, alpha: f64, beta: f64, lambda: f64) -> f64 {
    let f = |q: f64| profile(q, s, alpha, beta, lambda);
    let hi = 4.0 * s.max(1.0) + 10.0;
    let grid = 4000;
    let mut best = (0.0, f(0.0));
    for i in 1..=grid {
        let q = hi * (i as f64 / grid as f64).powi(2);
        let v = f(q);
        if v < best.1 {
            best = (q, v);
        }
    }
    if best.0 == 0.0 {
        // refine near zero in case the minimum sits inside the first cell
        let (mut a, mut b) = (0.0, hi / (grid as f64).powi(2));
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if f(m1) < f(m2) { b = m2 } else { a = m1 }
        }
        let q = 0.5 * (a + b);
        return if f(q) < f(0.0) - 1e-15 { q } else { 0.0 };
    }
    let i = ((best.0 / hi).sqrt() * grid as f64).round();
    let (mut a, mut b) = (hi * ((i - 1.0) / grid as f64).powi(2), hi * ((i + 1.0) / grid as f64).powi(2));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) { b = d } else { a = c }
    }
    let q = 0.5 * (a + b);
    if f(q) < f(0.0) { q } else { 0.0 }
}

#[derive(Clone, Copy, Debug)]
pub struct Reference {
    pub q: f64,
    pub m: f64,
    pub e: f64,
    pub r: f64,
    pub b: f64,
    /// Free energy per dimension (training objective per dimension, data constant removed).
    pub f: f64,
    /// Average rate on the training set.
    pub train_rate: f64,
}

fn reference_from(s: f64, overlap_sq: f64, lambda1: f64, alpha: f64, beta: f64, lambda: f64) -> Reference {
    let q = best_q(s, alpha, beta, lambda);
    let kappa = q + beta;
    let c = s / (kappa * s + lambda);
    let m = (q * overlap_sq).sqrt();
    let dv = if beta > 0.0 { beta / kappa } else { 0.0 };
    let train_rate = if beta > 0.0 { 0.5 * (c * c * q * lambda1 + dv - 1.0 - dv.ln()) } else { f64::INFINITY };
    Reference { q, m, e: c * c * q, r: c * q, b: c * m, f: profile(q, s, alpha, beta, lambda), train_rate }
}

/// Proportional-limit prediction from the spiked Marchenko–Pastur law.
pub fn asymptotic(alpha: f64, beta: f64, lambda: f64, rho: f64, eta: f64) -> Reference {
    let gamma = 1.0 / alpha;
    let theta = rho / eta;
    let (lambda1, ov2) = if theta > gamma.sqrt() {
        ((rho + eta) * (1.0 + gamma * eta / rho), (1.0 - gamma / (theta * theta)) / (1.0 + gamma / theta))
    } else {
        (eta * (1.0 + gamma.sqrt()).powi(2), 0.0)
    };
    reference_from(alpha * lambda1, ov2, lambda1, alpha, beta, lambda)
}

/// Exact finite-d global minimiser for a dataset `x` (n×d) with unit signal direction `w_hat`.
pub struct ExactOptimum {
    pub reference: Reference,
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub dvar: DVector<f64>,
}

pub fn exact_optimum(x: &DMatrix<f64>, w_star: &DMatrix<f64>, beta: f64, lambda: f64) -> ExactOptimum {
    let (n, d) = x.shape();
    let alpha = n as f64 / d as f64;
    let s_mat = x.transpose() * x / d as f64;
    let eig = SymmetricEigen::new(s_mat);
    let (imax, &s) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let mut u = eig.eigenvectors.column(imax).clone_owned();
    let w_hat = w_star.column(0) / (d as f64).sqrt();
    if u.dot(&w_hat) < 0.0 {
        u.neg_mut();
    }
    let ov2 = u.dot(&w_hat).powi(2);
    let reference = reference_from(s, ov2, s / alpha, alpha, beta, lambda);
    let q = reference.q;
    let c = s / ((q + beta) * s + lambda);
    let w = DMatrix::from_column_slice(d, 1, (u.clone() * (d as f64 * q).sqrt()).as_slice());
    let v = &w * c;
    let dvar = DVector::from_element(1, if beta > 0.0 { beta / (q + beta) } else { 1e-8 });
    ExactOptimum { reference, w, v, dvar }
}
