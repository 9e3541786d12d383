//! Linear VAE: decoder `p(x|z) = N(W z/√d, σ² I)`, encoder
//! `q(z|x) = N(Vᵀx/√d, D)`, trained on the closed-form beta-ELBO with an
//! l2 penalty on both weight matrices.
//!
//! The additive `(d/2) log 2πσ²` of the Gaussian likelihood is dropped
//! everywhere.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::replica::SummaryStatistics;
use crate::scm::Dataset;

/// Fixed variational variance used when β = 0.
pub const DVAR_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub k: usize,
    pub sigma2: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl VaeConfig {
    pub fn new(k: usize, beta: f64, lambda: f64) -> Self {
        Self { k, sigma2: 1.0, beta, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("latent dimension k must be positive".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma2 must be > 0, got {}", self.sigma2)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeParameters {
    /// Decoder weights, d×k.
    pub w: DMatrix<f64>,
    /// Encoder weights, d×k.
    pub v: DMatrix<f64>,
    /// Diagonal variational variances, length k.
    pub dvar: DVector<f64>,
}

impl VaeParameters {
    pub fn zeros(d: usize, k: usize) -> Self {
        Self {
            w: DMatrix::zeros(d, k),
            v: DMatrix::zeros(d, k),
            dvar: DVector::from_element(k, 1.0),
        }
    }

    /// Entries of W and V i.i.d. standard normal, so `Q` and `E` start near one.
    pub fn random(d: usize, k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let w = DMatrix::from_fn(d, k, |_, _| rng.sample(StandardNormal));
        let v = DMatrix::from_fn(d, k, |_, _| rng.sample(StandardNormal));
        Self { w, v, dvar: DVector::from_element(k, 1.0) }
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// `Q = WᵀW/d`.
    pub fn q(&self) -> DMatrix<f64> {
        linalg::scaled_tr_mul(&self.w, &self.w, 1.0 / self.d() as f64)
    }

    /// Flip each latent direction so that its total overlap with `W*` is non-negative.
    /// The objective is invariant under a joint sign flip of a column of W and V.
    pub fn align_signs(&mut self, w_star: &DMatrix<f64>) {
        let m = linalg::scaled_tr_mul(&self.w, w_star, 1.0 / self.d() as f64);
        for l in 0..self.k() {
            if m.row(l).sum() < 0.0 {
                self.w.column_mut(l).neg_mut();
                self.v.column_mut(l).neg_mut();
            }
        }
    }

    fn check(&self) -> Result<()> {
        if self.v.shape() != self.w.shape() || self.dvar.len() != self.k() {
            return Err(Error::InvalidConfig("inconsistent parameter shapes".into()));
        }
        if self.dvar.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Domain("variational variances must be positive".into()));
        }
        Ok(())
    }

    fn check_against(&self, d: usize, config: Option<&VaeConfig>) -> Result<()> {
        self.check()?;
        if self.d() != d {
            return Err(Error::InvalidConfig(format!("parameters have d = {}, data has d = {d}", self.d())));
        }
        if let Some(c) = config {
            c.validate()?;
            if c.k != self.k() {
                return Err(Error::InvalidConfig(format!("config k = {} but parameters have k = {}", c.k, self.k())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub dvar: DVector<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        (linalg::frobenius_sq(&self.w) + linalg::frobenius_sq(&self.v) + self.dvar.norm_squared()).sqrt()
    }
}

fn kl_term(u: &DVector<f64>, dvar: &DVector<f64>) -> f64 {
    let k = dvar.len() as f64;
    0.5 * (u.norm_squared() + dvar.sum() - dvar.iter().map(|v| v.ln()).sum::<f64>() - k)
}

fn quad(q: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    (q * u).dot(u)
}

fn trace_qd(q: &DMatrix<f64>, dvar: &DVector<f64>) -> f64 {
    dvar.iter().enumerate().map(|(l, v)| q[(l, l)] * v).sum()
}

/// Per-sample beta-ELBO loss.
pub fn elbo_loss(params: &VaeParameters, x: &DVector<f64>, config: &VaeConfig) -> Result<f64> {
    params.check_against(x.len(), Some(config))?;
    let sd = (params.d() as f64).sqrt();
    let h = params.w.tr_mul(x) / sd;
    let u = params.v.tr_mul(x) / sd;
    let q = params.q();
    let recon = x.norm_squared() - 2.0 * h.dot(&u) + quad(&q, &u) + trace_qd(&q, &params.dvar);
    Ok(recon / (2.0 * config.sigma2) + config.beta * kl_term(&u, &params.dvar))
}

/// Sum of per-sample losses plus `(λ/2)(‖W‖² + ‖V‖²)`.
pub fn objective(params: &VaeParameters, dataset: &Dataset, config: &VaeConfig) -> Result<f64> {
    objective_on(params, &dataset.x, config)
}

pub fn objective_on(params: &VaeParameters, x: &DMatrix<f64>, config: &VaeConfig) -> Result<f64> {
    params.check_against(x.ncols(), Some(config))?;
    let n = x.nrows() as f64;
    let sd = (params.d() as f64).sqrt();
    let h = linalg::scaled_mul(x, &params.w, 1.0 / sd);
    let u = linalg::scaled_mul(x, &params.v, 1.0 / sd);
    let q = params.q();
    let sum_sq = linalg::frobenius_sq(x);
    let cross: f64 = h.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
    let p = u.tr_mul(&u);
    let quad_sum = (&q * &p).trace();
    let dv = &params.dvar;
    let recon = sum_sq - 2.0 * cross + quad_sum + n * trace_qd(&q, dv);
    let kl = 0.5 * (p.trace() + n * (dv.sum() - dv.iter().map(|v| v.ln()).sum::<f64>() - dv.len() as f64));
    let ridge = 0.5 * config.lambda * (linalg::frobenius_sq(&params.w) + linalg::frobenius_sq(&params.v));
    Ok(recon / (2.0 * config.sigma2) + config.beta * kl + ridge)
}

/// Second-moment summary of a dataset; the objective depends on the data only through it.
#[derive(Clone, Debug)]
pub struct GramData {
    /// `XᵀX/d`.
    pub s: DMatrix<f64>,
    pub n: usize,
    pub sum_sq: f64,
}

impl GramData {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let d = x.ncols();
        Self {
            s: linalg::gram(x, 1.0 / d as f64),
            n: x.nrows(),
            sum_sq: linalg::frobenius_sq(x),
        }
    }

    pub fn d(&self) -> usize {
        self.s.nrows()
    }
}

/// Objective value without the data-only constant `Σ‖x‖²/(2σ²)`, and its gradient.
fn value_and_gradient(g: &GramData, params: &VaeParameters, config: &VaeConfig) -> (f64, Gradients) {
    let d = g.d() as f64;
    let n = g.n as f64;
    let k = params.k();
    let s2 = config.sigma2;
    let beta = config.beta;

    let mut wv = DMatrix::<f64>::zeros(g.d(), 2 * k);
    wv.columns_mut(0, k).copy_from(&params.w);
    wv.columns_mut(k, k).copy_from(&params.v);
    let swv = linalg::scaled_mul(&g.s, &wv, 1.0);
    let sw = swv.columns(0, k);
    let sv = swv.columns(k, k);

    let q = params.q();
    let p = params.v.tr_mul(&sv);
    let cross = params.w.dot(&sv);
    let dv = &params.dvar;
    let log_sum: f64 = dv.iter().map(|v| v.ln()).sum();
    let value = (-2.0 * cross + (&q * &p).trace() + n * trace_qd(&q, dv)) / (2.0 * s2)
        + 0.5 * beta * (p.trace() + n * (dv.sum() - log_sum - k as f64))
        + 0.5 * config.lambda * (linalg::frobenius_sq(&params.w) + linalg::frobenius_sq(&params.v));

    let mut pn = p.clone();
    for l in 0..k {
        pn[(l, l)] += n * dv[l];
    }
    let gw = (&params.w * pn / d - sv) / s2 + &params.w * config.lambda;
    let gv = (sv * &q - sw) / s2 + sv * beta + &params.v * config.lambda;
    let gd = DVector::from_fn(k, |l, _| 0.5 * n * q[(l, l)] / s2 + 0.5 * beta * n * (1.0 - 1.0 / dv[l]));
    (value, Gradients { w: gw, v: gv, dvar: gd })
}

/// Analytic gradient of [`objective`] with respect to W, V and the variances.
pub fn gradients(params: &VaeParameters, dataset: &Dataset, config: &VaeConfig) -> Result<Gradients> {
    params.check_against(dataset.d(), Some(config))?;
    Ok(value_and_gradient(&GramData::new(&dataset.x), params, config).1)
}

/// Stationary variational variances `D_l = βσ²/(Q_ll + βσ²)`.
pub fn optimal_variational_variance(q_diag: &DVector<f64>, config: &VaeConfig) -> Result<DVector<f64>> {
    if config.beta == 0.0 {
        return Err(Error::Domain("variational variance is degenerate at beta = 0".into()));
    }
    if q_diag.iter().any(|&q| !(q >= 0.0)) {
        return Err(Error::Domain("Q diagonal must be non-negative".into()));
    }
    let bs = config.beta * config.sigma2;
    Ok(q_diag.map(|q| bs / (q + bs)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Full-batch gradient descent with Barzilai–Borwein trial steps and Armijo backtracking.
    LineSearch,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub max_steps: usize,
    /// Stop once `‖∇J‖ ≤ grad_tol · d`.
    pub grad_tol: f64,
    pub learning_rate: f64,
    pub closed_form_dvar: bool,
    pub seed: u64,
    pub record_trace: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::LineSearch,
            max_steps: 200_000,
            grad_tol: 1e-7,
            learning_rate: 1e-2,
            closed_form_dvar: true,
            seed: 0,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: VaeParameters,
    pub objective: f64,
    pub grad_norm: f64,
    pub steps: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

struct Trainer<'a> {
    gram: &'a GramData,
    config: &'a VaeConfig,
    closed_form: bool,
    fixed_dvar: bool,
    constant: f64,
}

impl Trainer<'_> {
    fn profile(&self, p: &mut VaeParameters) {
        if self.fixed_dvar {
            p.dvar.fill(DVAR_FLOOR);
        } else if self.closed_form {
            let bs = self.config.beta * self.config.sigma2;
            let d = p.d() as f64;
            for l in 0..p.k() {
                let qll = p.w.column(l).norm_squared() / d;
                p.dvar[l] = bs / (qll + bs);
            }
        }
    }

    /// Value and gradient with the variance gradient taken in log coordinates
    /// and zeroed when the variances are not free optimisation variables.
    fn eval(&self, p: &VaeParameters) -> (f64, Gradients) {
        let (v, mut g) = value_and_gradient(self.gram, p, self.config);
        if self.fixed_dvar || self.closed_form {
            g.dvar.fill(0.0);
        } else {
            g.dvar.component_mul_assign(&p.dvar);
        }
        (v, g)
    }

    fn report(&self, value: f64) -> f64 {
        value + self.constant
    }
}

fn step(p: &VaeParameters, g: &Gradients, t: f64) -> VaeParameters {
    VaeParameters {
        w: &p.w - &g.w * t,
        v: &p.v - &g.v * t,
        dvar: p.dvar.zip_map(&g.dvar, |d, gd| (d.ln() - t * gd).exp()),
    }
}

fn inner(a: &Gradients, b: &Gradients) -> f64 {
    a.w.dot(&b.w) + a.v.dot(&b.v) + a.dvar.dot(&b.dvar)
}

/// Full-batch training of the objective from a seeded random start.
pub fn train(dataset: &Dataset, config: &VaeConfig, train_config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let gram = GramData::new(&dataset.x);
    let init = VaeParameters::random(dataset.d(), config.k, train_config.seed);
    train_from(&gram, init, config, train_config)
}

pub fn train_from(
    gram: &GramData,
    init: VaeParameters,
    config: &VaeConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    init.check_against(gram.d(), Some(config))?;
    if !(tc.grad_tol > 0.0) {
        return Err(Error::InvalidConfig("grad_tol must be positive".into()));
    }
    let trainer = Trainer {
        gram,
        config,
        closed_form: tc.closed_form_dvar,
        fixed_dvar: config.beta == 0.0,
        constant: gram.sum_sq / (2.0 * config.sigma2),
    };
    let tol = tc.grad_tol * gram.d() as f64;
    match tc.optimizer {
        Optimizer::LineSearch => run_line_search(&trainer, init, tc, tol),
        Optimizer::Adam => run_adam(&trainer, init, tc, tol),
    }
}

fn run_line_search(tr: &Trainer, mut p: VaeParameters, tc: &TrainConfig, tol: f64) -> Result<TrainOutcome> {
    tr.profile(&mut p);
    let (mut f, mut g) = tr.eval(&p);
    if !f.is_finite() {
        return Err(Error::Diverged { step: 0, last_finite: Box::new(p) });
    }
    let mut trace = Vec::new();
    let mut gn = g.norm();
    let mut t = 1.0 / (1.0 + gn);
    let mut steps = 0;
    let mut converged = gn <= tol;
    let mut use_long = true;
    while !converged && steps < tc.max_steps {
        if tc.record_trace {
            trace.push(TraceRow { step: steps, objective: tr.report(f), grad_norm: gn });
        }
        let g2 = gn * gn;
        let mut trial = t;
        let accepted = loop {
            let mut cand = step(&p, &g, trial);
            tr.profile(&mut cand);
            let (fc, gc) = tr.eval(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * trial * g2 {
                break Some((cand, fc, gc));
            }
            trial *= 0.5;
            if trial < 1e-300 || trial * gn < 1e-18 * (1.0 + linalg::frobenius_sq(&p.w).sqrt()) {
                break None;
            }
        };
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        steps += 1;
        // Barzilai–Borwein step from the secant pair, alternating long and short variants.
        let s = Gradients { w: &cand.w - &p.w, v: &cand.v - &p.v, dvar: cand.dvar.map(f64::ln) - p.dvar.map(f64::ln) };
        let y = Gradients { w: &gc.w - &g.w, v: &gc.v - &g.v, dvar: &gc.dvar - &g.dvar };
        let sy = inner(&s, &y);
        t = if sy > 0.0 {
            let bb = if use_long { inner(&s, &s) / sy } else { sy / inner(&y, &y) };
            use_long = !use_long;
            bb.clamp(1e-12, 1e12)
        } else {
            trial * 2.0
        };
        p = cand;
        f = fc;
        g = gc;
        gn = g.norm();
        converged = gn <= tol;
    }
    if tc.record_trace {
        trace.push(TraceRow { step: steps, objective: tr.report(f), grad_norm: gn });
    }
    Ok(TrainOutcome { params: p, objective: tr.report(f), grad_norm: gn, steps, converged, trace })
}

fn run_adam(tr: &Trainer, mut p: VaeParameters, tc: &TrainConfig, tol: f64) -> Result<TrainOutcome> {
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    tr.profile(&mut p);
    let (d, k) = (p.d(), p.k());
    let mut m = Gradients { w: DMatrix::zeros(d, k), v: DMatrix::zeros(d, k), dvar: DVector::zeros(k) };
    let mut v2 = m.clone();
    let (mut f, mut g) = tr.eval(&p);
    if !f.is_finite() {
        return Err(Error::Diverged { step: 0, last_finite: Box::new(p) });
    }
    let mut gn = g.norm();
    let mut trace = Vec::new();
    let mut steps = 0;
    while gn > tol && steps < tc.max_steps {
        if tc.record_trace {
            trace.push(TraceRow { step: steps, objective: tr.report(f), grad_norm: gn });
        }
        steps += 1;
        let c1 = 1.0 - f64::powi(b1, steps as i32);
        let c2 = 1.0 - f64::powi(b2, steps as i32);
        let lr = tc.learning_rate;
        let upd = |mm: &mut f64, vv: &mut f64, gg: f64| -> f64 {
            *mm = b1 * *mm + (1.0 - b1) * gg;
            *vv = b2 * *vv + (1.0 - b2) * gg * gg;
            lr * (*mm / c1) / ((*vv / c2).sqrt() + eps)
        };
        let mut next = p.clone();
        for i in 0..g.w.len() {
            next.w[i] -= upd(&mut m.w[i], &mut v2.w[i], g.w[i]);
            next.v[i] -= upd(&mut m.v[i], &mut v2.v[i], g.v[i]);
        }
        if !(tr.fixed_dvar || tr.closed_form) {
            for l in 0..k {
                let delta = upd(&mut m.dvar[l], &mut v2.dvar[l], g.dvar[l]);
                next.dvar[l] = (next.dvar[l].ln() - delta).exp();
            }
        }
        tr.profile(&mut next);
        let (fn_, gn_) = tr.eval(&next);
        if !fn_.is_finite() || next.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: steps, last_finite: Box::new(p) });
        }
        p = next;
        f = fn_;
        g = gn_;
        gn = g.norm();
    }
    if tc.record_trace {
        trace.push(TraceRow { step: steps, objective: tr.report(f), grad_norm: gn });
    }
    Ok(TrainOutcome { params: p, objective: tr.report(f), grad_norm: gn, steps, converged: gn <= tol, trace })
}

/// Matrix-valued overlaps `Q = WᵀW/d`, `E = VᵀV/d`, `R = WᵀV/d`, `m = WᵀW*/d`, `b = VᵀW*/d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Overlaps {
    pub q: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

pub fn empirical_overlaps(params: &VaeParameters, w_star: &DMatrix<f64>) -> Overlaps {
    let inv_d = 1.0 / params.d() as f64;
    Overlaps {
        q: linalg::scaled_tr_mul(&params.w, &params.w, inv_d),
        e: linalg::scaled_tr_mul(&params.v, &params.v, inv_d),
        r: linalg::scaled_tr_mul(&params.w, &params.v, inv_d),
        m: linalg::scaled_tr_mul(&params.w, w_star, inv_d),
        b: linalg::scaled_tr_mul(&params.v, w_star, inv_d),
    }
}

/// Empirical order parameters. For k = k* = 1 these are the scalar overlaps;
/// for larger ranks each field is the sum of the entries of the corresponding
/// overlap matrix, which keeps `ε_g = k*ρ − 2√ρ m + Q`. The response functions
/// χ, ζ, ω are not measurable from a single minimiser and are set to NaN.
pub fn empirical_summary_stats(params: &VaeParameters, w_star: &DMatrix<f64>) -> SummaryStatistics {
    let o = empirical_overlaps(params, w_star);
    SummaryStatistics {
        q: o.q.sum(),
        e: o.e.sum(),
        r: o.r.sum(),
        m: o.m.sum(),
        b: o.b.sum(),
        chi: f64::NAN,
        zeta: f64::NAN,
        omega: f64::NAN,
    }
}

/// `ε_g = k*ρ − 2√ρ Σ m + Σ Q` on aggregated statistics, the expansion of
/// `(1/d) E_c ‖√ρ W* c − W c‖²`.
pub fn signal_recovery_error(summary: &SummaryStatistics, rho: f64, _k: usize, k_star: usize) -> f64 {
    k_star as f64 * rho - 2.0 * rho.sqrt() * summary.m + summary.q
}

fn encoder_means(params: &VaeParameters, x: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::scaled_mul(x, &params.v, 1.0 / (params.d() as f64).sqrt())
}

fn per_dim_kl(u: f64, dv: f64) -> f64 {
    0.5 * (u * u + dv - dv.ln() - 1.0)
}

/// Sample mean of `KL[q(z|x) ‖ N(0, I)]`.
pub fn empirical_rate(params: &VaeParameters, dataset: &Dataset) -> Result<f64> {
    params.check_against(dataset.d(), None)?;
    let u = encoder_means(params, &dataset.x);
    let n = u.nrows() as f64;
    let mut total = 0.0;
    for l in 0..params.k() {
        let dv = params.dvar[l];
        total += u.column(l).iter().map(|&ui| per_dim_kl(ui, dv)).sum::<f64>();
    }
    Ok(total / n)
}

/// Per-sample distortion along the signal subspace:
/// `(1/2σ²)[‖P* x‖² − 2 h·u + uᵀQu + tr(QD)]`, with `P*` the projector onto the
/// span of `W*`. The full reconstruction term minus this value is the
/// parameter-independent `‖(I − P*) x‖²/(2σ²)`.
pub fn distortion_contribution(
    params: &VaeParameters,
    x: &DVector<f64>,
    w_star: &DMatrix<f64>,
    config: &VaeConfig,
) -> Result<f64> {
    params.check_against(x.len(), Some(config))?;
    let sd = (params.d() as f64).sqrt();
    let h = params.w.tr_mul(x) / sd;
    let u = params.v.tr_mul(x) / sd;
    let proj = w_star.tr_mul(x) / sd;
    let q = params.q();
    let val = proj.norm_squared() - 2.0 * h.dot(&u) + quad(&q, &u) + trace_qd(&q, &params.dvar);
    Ok(val / (2.0 * config.sigma2))
}

/// Sample mean of [`distortion_contribution`].
pub fn empirical_distortion(params: &VaeParameters, dataset: &Dataset, config: &VaeConfig) -> Result<f64> {
    params.check_against(dataset.d(), Some(config))?;
    let sd = (params.d() as f64).sqrt();
    let h = linalg::scaled_mul(&dataset.x, &params.w, 1.0 / sd);
    let u = linalg::scaled_mul(&dataset.x, &params.v, 1.0 / sd);
    let proj = linalg::scaled_mul(&dataset.x, &dataset.w_star, 1.0 / sd);
    let q = params.q();
    let n = dataset.n() as f64;
    let cross: f64 = h.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
    let quad_sum = (&q * u.tr_mul(&u)).trace();
    let total = linalg::frobenius_sq(&proj) - 2.0 * cross + quad_sum + n * trace_qd(&q, &params.dvar);
    Ok(total / (2.0 * config.sigma2 * n))
}

/// Fraction of (sample, latent) pairs whose per-dimension KL to the prior is below `epsilon`.
pub fn collapse_fraction(params: &VaeParameters, dataset: &Dataset, epsilon: f64) -> Result<f64> {
    let per_dim = collapsed_share_per_dimension(params, dataset, epsilon)?;
    Ok(per_dim.iter().sum::<f64>() / per_dim.len() as f64)
}

/// For each latent dimension, the share of samples with KL below `epsilon`.
pub fn collapsed_share_per_dimension(params: &VaeParameters, dataset: &Dataset, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("epsilon must be >= 0, got {epsilon}")));
    }
    params.check_against(dataset.d(), None)?;
    let u = encoder_means(params, &dataset.x);
    let n = u.nrows() as f64;
    Ok((0..params.k())
        .map(|l| {
            let dv = params.dvar[l];
            u.column(l).iter().filter(|&&ui| per_dim_kl(ui, dv) < epsilon).count() as f64 / n
        })
        .collect())
}

/// Latent dimensions that are (ε, δ)-collapsed.
pub fn collapsed_dimensions(params: &VaeParameters, dataset: &Dataset, epsilon: f64, delta: f64) -> Result<Vec<bool>> {
    Ok(collapsed_share_per_dimension(params, dataset, epsilon)?
        .into_iter()
        .map(|share| share >= 1.0 - delta)
        .collect())
}

/// Sample mean of `KL[p_W(z|x) ‖ q(z|x)]` between the exact Gaussian posterior
/// of the linear decoder and the encoder.
pub fn posterior_kl_true_vs_variational(params: &VaeParameters, dataset: &Dataset, config: &VaeConfig) -> Result<f64> {
    params.check_against(dataset.d(), Some(config))?;
    let k = params.k();
    let s2 = config.sigma2;
    let sd = (params.d() as f64).sqrt();
    let precision = DMatrix::<f64>::identity(k, k) + params.q() / s2;
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("posterior precision is not positive definite".into()))?;
    let cov = chol.inverse();
    let log_det_cov = -2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let inv_d = params.dvar.map(|v| 1.0 / v);
    let log_det_q: f64 = params.dvar.iter().map(|v| v.ln()).sum();
    let trace_term: f64 = (0..k).map(|l| cov[(l, l)] * inv_d[l]).sum();
    let constant = 0.5 * (trace_term - k as f64 + log_det_q - log_det_cov);

    let h = linalg::scaled_mul(&dataset.x, &params.w, 1.0 / sd);
    let u = linalg::scaled_mul(&dataset.x, &params.v, 1.0 / sd);
    // posterior means, one row per sample
    let mu = linalg::scaled_mul(&h, &cov, 1.0 / s2);
    let n = dataset.n();
    let mut total = 0.0;
    for i in 0..n {
        for l in 0..k {
            let diff = u[(i, l)] - mu[(i, l)];
            total += 0.5 * diff * diff * inv_d[l];
        }
    }
    Ok(constant + total / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub summary: SummaryStatistics,
    pub eps_g: f64,
    pub rate: f64,
    pub distortion: f64,
    pub kl_true_vs_var: f64,
    pub collapse_fraction: f64,
}

impl MetricsReport {
    pub fn evaluate(params: &VaeParameters, dataset: &Dataset, config: &VaeConfig, epsilon: f64) -> Result<Self> {
        let summary = empirical_summary_stats(params, &dataset.w_star);
        let eps_g = signal_recovery_error(&summary, dataset.config.rho, params.k(), dataset.w_star.ncols());
        Ok(Self {
            summary,
            eps_g,
            rate: empirical_rate(params, dataset)?,
            distortion: empirical_distortion(params, dataset, config)?,
            kl_true_vs_var: posterior_kl_true_vs_variational(params, dataset, config)?,
            collapse_fraction: collapse_fraction(params, dataset, epsilon)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{generate_dataset, GenerativeConfig};

    fn small() -> (Dataset, VaeConfig) {
        let cfg = GenerativeConfig::new(1.0, 1.0, 6, 1, 3.0).unwrap();
        (generate_dataset(&cfg, 3).unwrap(), VaeConfig::new(2, 0.7, 0.3))
    }

    #[test]
    fn zero_parameters_give_half_power() {
        let (ds, cfg) = small();
        let p = VaeParameters::zeros(6, 2);
        let x = ds.x.row(0).transpose();
        let l = elbo_loss(&p, &x, &cfg).unwrap();
        assert!((l - 0.5 * x.norm_squared()).abs() < 1e-14);
        let j = objective(&p, &ds, &cfg).unwrap();
        assert!((j - 0.5 * linalg::frobenius_sq(&ds.x)).abs() < 1e-12);
        let g = gradients(&p, &ds, &cfg).unwrap();
        assert_eq!(g.w.abs().max(), 0.0);
    }

    #[test]
    fn gram_path_matches_direct_objective() {
        let (ds, cfg) = small();
        let p = VaeParameters::random(6, 2, 5);
        let gram = GramData::new(&ds.x);
        let (v, _) = value_and_gradient(&gram, &p, &cfg);
        let direct = objective(&p, &ds, &cfg).unwrap();
        assert!((v + gram.sum_sq / 2.0 - direct).abs() < 1e-9 * direct.abs());
    }

    #[test]
    fn nonpositive_variance_is_rejected() {
        let (ds, cfg) = small();
        let mut p = VaeParameters::zeros(6, 2);
        p.dvar[1] = 0.0;
        assert!(matches!(objective(&p, &ds, &cfg), Err(Error::Domain(_))));
        assert!(empirical_rate(&p, &ds).is_err());
    }

    #[test]
    fn optimal_variance_values() {
        let cfg = VaeConfig::new(2, 1.0, 0.0);
        let dv = optimal_variational_variance(&DVector::from_vec(vec![0.0, 1.0]), &cfg).unwrap();
        assert_eq!(dv[0], 1.0);
        assert!((dv[1] - 0.5).abs() < 1e-15);
        assert!(optimal_variational_variance(&dv, &VaeConfig::new(2, 0.0, 0.0)).is_err());
    }

    #[test]
    fn signal_recovery_error_examples() {
        let mut s = SummaryStatistics::zero();
        assert_eq!(signal_recovery_error(&s, 1.0, 1, 1), 1.0);
        s.m = 1.0;
        s.q = 1.0;
        assert_eq!(signal_recovery_error(&s, 1.0, 1, 1), 0.0);
        s.m = 0.5f64.sqrt();
        s.q = 0.5;
        assert!((signal_recovery_error(&s, 1.0, 1, 1) - (1.5 - 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn summary_of_true_features() {
        let (ds, _) = small();
        let mut p = VaeParameters::zeros(6, 1);
        p.w = ds.w_star.clone();
        let s = empirical_summary_stats(&p, &ds.w_star);
        assert!((s.m - 1.0).abs() < 1e-12 && (s.q - 1.0).abs() < 1e-12);
        p.w = -ds.w_star.clone();
        assert!((empirical_summary_stats(&p, &ds.w_star).m + 1.0).abs() < 1e-12);
        assert!(s.chi.is_nan());
    }

    #[test]
    fn align_signs_makes_overlap_positive() {
        let (ds, _) = small();
        let mut p = VaeParameters::zeros(6, 1);
        p.w = -ds.w_star.clone();
        p.v = ds.w_star.clone() * 0.5;
        p.align_signs(&ds.w_star);
        let s = empirical_summary_stats(&p, &ds.w_star);
        assert!(s.m > 0.0 && s.b < 0.0);
    }
}
