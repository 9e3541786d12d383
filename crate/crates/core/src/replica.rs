//! Replica-symmetric saddle point for k = k* = 1 with σ² = 1.
//!
//! Order parameters `Q, E, R, m, b` are the overlaps of W and V with each
//! other and with W*; `χ, ζ, ω` are the matching response functions. The
//! free-energy density is
//!
//! ```text
//! f = −½(Q̂Q + 2R̂R + ÊE) + ½(χ̂χ + 2ω̂ω + ζ̂ζ) + m̂m + b̂b
//!     − ½(e s₁₁ + a s₂₂ − 2 r s₁₂)/Ĝ
//!     + α [ N/(2Δ) + (β/2) log((Q+β)/β) ]
//! ```
//!
//! with `a = Q̂+λ`, `e = Ê+λ`, `r = R̂`, `Ĝ = ae − r²`, `s₁₁ = χ̂+m̂²`,
//! `s₂₂ = ζ̂+b̂²`, `s₁₂ = ω̂+m̂b̂`, `κ = Q+β`, `Δ = (ηω−1)² + ηζ(κ−ηχ)` and
//! `N = −ηζ C₁₁ + 2(ηω−1) C₁₂ + (κ−ηχ) C₂₂`, where `C` is the covariance of
//! the decoder and encoder fields, `C₁₁ = ρm²+ηQ`, `C₁₂ = ρmb+ηR`,
//! `C₂₂ = ρb²+ηE`. Its value at the physical saddle equals the minimum of the
//! training objective per dimension, so competing branches are ranked by
//! lowest `f`. The update map below is the exact stationarity condition of `f`.

use nalgebra::{Matrix2, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStatistics {
    #[serde(rename = "Q", with = "nan_as_null")]
    pub q: f64,
    #[serde(rename = "E", with = "nan_as_null")]
    pub e: f64,
    #[serde(rename = "R", with = "nan_as_null")]
    pub r: f64,
    #[serde(with = "nan_as_null")]
    pub m: f64,
    #[serde(with = "nan_as_null")]
    pub b: f64,
    #[serde(with = "nan_as_null")]
    pub chi: f64,
    #[serde(with = "nan_as_null")]
    pub zeta: f64,
    #[serde(with = "nan_as_null")]
    pub omega: f64,
}

impl SummaryStatistics {
    pub fn zero() -> Self {
        Self::from_array([0.0; 8])
    }

    pub fn to_array(&self) -> [f64; 8] {
        [self.q, self.e, self.r, self.m, self.b, self.chi, self.zeta, self.omega]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self { q: a[0], e: a[1], r: a[2], m: a[3], b: a[4], chi: a[5], zeta: a[6], omega: a[7] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateStatistics {
    #[serde(rename = "hatQ")]
    pub hat_q: f64,
    #[serde(rename = "hatE")]
    pub hat_e: f64,
    #[serde(rename = "hatR")]
    pub hat_r: f64,
    #[serde(rename = "hatm")]
    pub hat_m: f64,
    #[serde(rename = "hatb")]
    pub hat_b: f64,
    #[serde(rename = "hatchi")]
    pub hat_chi: f64,
    #[serde(rename = "hatzeta")]
    pub hat_zeta: f64,
    #[serde(rename = "hatomega")]
    pub hat_omega: f64,
}

impl ConjugateStatistics {
    pub fn to_array(&self) -> [f64; 8] {
        [self.hat_q, self.hat_e, self.hat_r, self.hat_m, self.hat_b, self.hat_chi, self.hat_zeta, self.hat_omega]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            hat_q: a[0],
            hat_e: a[1],
            hat_r: a[2],
            hat_m: a[3],
            hat_b: a[4],
            hat_chi: a[5],
            hat_zeta: a[6],
            hat_omega: a[7],
        }
    }
}

/// The five model reals `(α, β, λ, ρ, η)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub rho: f64,
    pub eta: f64,
}

impl ModelPoint {
    pub fn new(alpha: f64, beta: f64, lambda: f64, rho: f64, eta: f64) -> Self {
        Self { alpha, beta, lambda, rho, eta }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64| Error::InvalidConfig(format!("invalid {name} = {v}"));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(bad("alpha", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(bad("beta", self.beta));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(bad("lambda", self.lambda));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(bad("rho", self.rho));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(bad("eta", self.eta));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Collapsed,
    Informed,
    Random(u64),
    /// Start from a given point, e.g. the neighbouring solution of a sweep.
    Warm(SummaryStatistics),
}

impl std::str::FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "collapsed" => Ok(Init::Collapsed),
            "informed" => Ok(Init::Informed),
            _ => match t.strip_prefix("random") {
                Some(rest) => {
                    let seed = rest.trim_start_matches([':', '=']);
                    let seed = if seed.is_empty() { 0 } else {
                        seed.parse().map_err(|_| Error::InvalidConfig(format!("bad random seed in init `{s}`")))?
                    };
                    Ok(Init::Random(seed))
                }
                None => Err(Error::InvalidConfig(format!("unknown init `{s}` (collapsed|informed|random:SEED)"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
    pub ridge_eps: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-10, max_iter: 100_000, init: Init::Informed, ridge_eps: 1e-12 }
    }
}

impl SolverOptions {
    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!("damping must lie in (0,1], got {}", self.damping)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        if !(self.ridge_eps >= 0.0) {
            return Err(Error::InvalidConfig(format!("ridge_eps must be >= 0, got {}", self.ridge_eps)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Collapsed,
    Learning,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub stats: SummaryStatistics,
    pub conj: ConjugateStatistics,
    pub residual: f64,
    pub free_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub branch: Branch,
    /// Max-norm of the numerical gradient of the free energy at the result.
    pub stationarity: f64,
    /// Set when the conjugate matrix had to be ridge-regularised.
    pub regularized: bool,
}

type State = [f64; 8];

struct Energetic {
    kappa: f64,
    delta: f64,
    big_n: f64,
}

fn energetic_parts(x: &State, p: &ModelPoint) -> Energetic {
    let [q, e, r, m, b, chi, zeta, om] = *x;
    let eta = p.eta;
    let kappa = (q + p.beta).max(1e-14);
    let c11 = p.rho * m * m + eta * q;
    let c12 = p.rho * m * b + eta * r;
    let c22 = p.rho * b * b + eta * e;
    let a1 = eta * om - 1.0;
    let a2 = kappa - eta * chi;
    let delta = a1 * a1 + eta * zeta * a2;
    let big_n = -eta * zeta * c11 + 2.0 * a1 * c12 + a2 * c22;
    Energetic { kappa, delta, big_n }
}

/// `β/κ` and `(β/2) log(κ/β)`, with their β → 0 limits.
fn variance_terms(beta: f64, kappa: f64) -> (f64, f64) {
    if beta == 0.0 {
        (0.0, 0.0)
    } else {
        (beta / kappa, 0.5 * beta * (kappa / beta).ln())
    }
}

/// Conjugates from statistics: derivatives of the energetic term.
fn energetic_update(x: &State, p: &ModelPoint) -> State {
    let [q, e, r, m, b, chi, zeta, om] = *x;
    let (alpha, eta, rho) = (p.alpha, p.eta, p.rho);
    let en = energetic_parts(x, p);
    let kappa = en.kappa;
    let c11 = rho * m * m + eta * q;
    let c12 = rho * m * b + eta * r;
    let c22 = rho * b * b + eta * e;
    let a1 = eta * om - 1.0;
    let a2 = kappa - eta * chi;
    let dl = en.delta;
    let nn = en.big_n;
    let (bk, _) = variance_terms(p.beta, kappa);
    let d2 = dl * dl;
    [
        alpha * ((c22 - eta * eta * zeta) / dl - eta * zeta * nn / d2 + bk),
        alpha * eta * a2 / dl,
        alpha * eta * a1 / dl,
        alpha * rho * (eta * zeta * m - a1 * b) / dl,
        -alpha * rho * (a1 * m + a2 * b) / dl,
        alpha * eta * (dl * c22 - eta * zeta * nn) / d2,
        alpha * eta * (dl * c11 + nn * a2) / d2,
        -alpha * eta * (dl * c12 - a1 * nn) / d2,
    ]
}

/// Statistics from conjugates: derivatives of the entropic term.
fn entropic_update(h: &State, lambda: f64, ridge_eps: f64) -> (State, bool) {
    let [qh, eh, rh, mh, bh, chih, zetah, omh] = *h;
    let mut a = qh + lambda;
    let mut e = eh + lambda;
    let r = rh;
    let mut g = a * e - r * r;
    let mut regularized = false;
    if g.abs() < ridge_eps {
        a += ridge_eps;
        e += ridge_eps;
        g = a * e - r * r;
        if g.abs() < ridge_eps {
            g = ridge_eps.copysign(if g == 0.0 { 1.0 } else { g });
        }
        regularized = true;
    }
    let s11 = chih + mh * mh;
    let s22 = zetah + bh * bh;
    let s12 = omh + mh * bh;
    let g2 = g * g;
    (
        [
            (e * e * s11 - 2.0 * e * r * s12 + r * r * s22) / g2,
            (a * a * s22 - 2.0 * a * r * s12 + r * r * s11) / g2,
            (-e * r * s11 + (a * e + r * r) * s12 - a * r * s22) / g2,
            (e * mh - r * bh) / g,
            (a * bh - r * mh) / g,
            e / g,
            a / g,
            -r / g,
        ],
        regularized,
    )
}

fn update_map(x: &State, p: &ModelPoint, ridge_eps: f64) -> (State, State, bool) {
    let h = energetic_update(x, p);
    let (nx, reg) = entropic_update(&h, p.lambda, ridge_eps);
    (nx, h, reg)
}

fn project(x: &mut State) {
    for i in [0, 1, 5, 6] {
        if x[i] < 0.0 {
            x[i] = 0.0;
        }
    }
}

fn max_diff(a: &State, b: &State) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() { f64::INFINITY } else { acc.max(d) }
    })
}

fn finite(x: &State) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// k = k* = 1 free-energy density at an arbitrary point.
pub fn free_energy_k1(stats: &SummaryStatistics, conj: &ConjugateStatistics, p: &ModelPoint) -> Result<f64> {
    free_energy_raw(&stats.to_array(), &conj.to_array(), p)
}

fn free_energy_raw(x: &State, h: &State, p: &ModelPoint) -> Result<f64> {
    let [q, e, r, m, b, chi, zeta, om] = *x;
    let [qh, eh, rh, mh, bh, chih, zetah, omh] = *h;
    if p.beta > 0.0 && q + p.beta <= 0.0 {
        return Err(Error::Domain("Q + beta must be positive".into()));
    }
    let a = qh + p.lambda;
    let ee = eh + p.lambda;
    let g = a * ee - rh * rh;
    if g == 0.0 || !g.is_finite() {
        return Err(Error::Domain("singular conjugate matrix".into()));
    }
    let en = energetic_parts(x, p);
    if en.delta == 0.0 || !en.delta.is_finite() {
        return Err(Error::Domain("singular energetic denominator".into()));
    }
    let s11 = chih + mh * mh;
    let s22 = zetah + bh * bh;
    let s12 = omh + mh * bh;
    let entropic = -0.5 * (qh * q + 2.0 * rh * r + eh * e) + 0.5 * (chih * chi + 2.0 * omh * om + zetah * zeta) + mh * m + bh * b
        - 0.5 * (ee * s11 + a * s22 - 2.0 * rh * s12) / g;
    let (_, logterm) = variance_terms(p.beta, en.kappa);
    Ok(entropic + p.alpha * (0.5 * en.big_n / en.delta + logterm))
}

/// Central-difference gradient of the free energy in all sixteen variables,
/// statistics first, then conjugates.
pub fn free_energy_gradient(stats: &SummaryStatistics, conj: &ConjugateStatistics, p: &ModelPoint) -> Result<[f64; 16]> {
    let mut z = [0.0; 16];
    z[..8].copy_from_slice(&stats.to_array());
    z[8..].copy_from_slice(&conj.to_array());
    let eval = |z: &[f64; 16]| -> Result<f64> {
        let mut x = [0.0; 8];
        let mut h = [0.0; 8];
        x.copy_from_slice(&z[..8]);
        h.copy_from_slice(&z[8..]);
        free_energy_raw(&x, &h, p)
    };
    let mut grad = [0.0; 16];
    for j in 0..16 {
        let step = 1e-4 * z[j].abs().max(1.0);
        let at = |k: f64| {
            let mut zz = z;
            zz[j] += k * step;
            eval(&zz)
        };
        let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
        grad[j] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step);
    }
    Ok(grad)
}

fn initial_state(p: &ModelPoint, init: &Init) -> State {
    match init {
        Init::Collapsed => [0.0; 8],
        Init::Informed => {
            let mut s = large_alpha_limit(p.beta, p.rho, p.eta).stats.to_array();
            // The closed forms carry no response information. A learned spike has
            // responses of order 1/α; a fitted bulk edge (no signal) of order 1/√α.
            let scale = if p.rho > 0.0 { 1.0 / (1.0 + p.alpha) } else { 1.0 / (1.0 + p.alpha).sqrt() };
            s[5] = scale;
            s[6] = scale;
            s[7] = if p.rho > 0.0 { 0.0 } else { scale };
            s
        }
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let q: f64 = rng.random_range(0.05..2.0);
            let m = q.sqrt() * rng.random_range(0.0..1.0);
            let e = q * rng.random_range(0.05..1.0);
            [
                q,
                e,
                (q * e).sqrt() * rng.random_range(0.0..1.0),
                m,
                m * rng.random_range(0.0..1.0),
                rng.random_range(0.01..1.0),
                rng.random_range(0.01..1.0),
                rng.random_range(-0.5..0.5),
            ]
        }
        Init::Warm(s) => {
            let mut a = s.to_array();
            for v in a.iter_mut() {
                if !v.is_finite() {
                    *v = 0.0;
                }
            }
            a
        }
    }
}

struct Solver<'a> {
    p: &'a ModelPoint,
    opts: &'a SolverOptions,
    regularized: bool,
}

impl Solver<'_> {
    fn residual(&mut self, x: &State) -> (f64, State) {
        let (nx, _, reg) = update_map(x, self.p, self.opts.ridge_eps);
        self.regularized |= reg;
        if !finite(&nx) {
            return (f64::INFINITY, nx);
        }
        let mut r = [0.0; 8];
        for i in 0..8 {
            r[i] = nx[i] - x[i];
        }
        (max_diff(&nx, x), r)
    }

    /// Damped iteration with adaptive damping: halve on residual growth, recover slowly.
    fn damped(&mut self, x: &mut State, budget: usize) -> (usize, f64) {
        let mut d = self.opts.damping;
        let mut prev = f64::INFINITY;
        let mut res = f64::INFINITY;
        for it in 0..budget {
            let (nx, _, reg) = update_map(x, self.p, self.opts.ridge_eps);
            self.regularized |= reg;
            if !finite(&nx) {
                d = (d * 0.5).max(1e-6);
                if d <= 1e-6 {
                    return (it + 1, f64::INFINITY);
                }
                continue;
            }
            res = max_diff(&nx, x);
            if res <= self.opts.tol {
                return (it + 1, res);
            }
            if res > prev {
                d = (d * 0.5).max(1e-4);
            } else {
                d = (d * 1.05).min(self.opts.damping);
            }
            prev = res;
            for i in 0..8 {
                x[i] = (1.0 - d) * x[i] + d * nx[i];
            }
            project(x);
        }
        (budget, res)
    }

    /// Newton iteration on `F(x) − x = 0` with a finite-difference Jacobian and
    /// residual-decreasing backtracking.
    fn newton(&mut self, x: &mut State, budget: usize) -> (usize, f64) {
        let (mut res, mut r) = self.residual(x);
        for it in 0..budget {
            if res <= self.opts.tol || !res.is_finite() {
                return (it, res);
            }
            let mut jac = SMatrix::<f64, 8, 8>::zeros();
            for j in 0..8 {
                let h = 1e-7 * x[j].abs().max(1.0);
                let mut xp = *x;
                let mut xm = *x;
                xp[j] += h;
                xm[j] -= h;
                let (_, rp) = self.residual(&xp);
                let (_, rm) = self.residual(&xm);
                for i in 0..8 {
                    jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let rhs = -SVector::<f64, 8>::from_row_slice(&r);
            let Some(dx) = jac.lu().solve(&rhs) else {
                return (it, res);
            };
            if dx.iter().any(|v| !v.is_finite()) {
                return (it, res);
            }
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-6 {
                let mut xn = *x;
                for i in 0..8 {
                    xn[i] += t * dx[i];
                }
                project(&mut xn);
                let (rn, rv) = self.residual(&xn);
                if rn < res {
                    *x = xn;
                    res = rn;
                    r = rv;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                return (it + 1, res);
            }
        }
        (budget, res)
    }
}

/// Solve the saddle-point equations from the requested starting point.
pub fn saddle_point_solve(p: &ModelPoint, opts: &SolverOptions) -> Result<FixedPointResult> {
    p.validate()?;
    opts.validate()?;
    let mut solver = Solver { p, opts, regularized: false };
    let mut x = initial_state(p, &opts.init);
    project(&mut x);

    let first = opts.max_iter.min(2_000);
    let (mut iterations, mut res) = solver.damped(&mut x, first);
    while res > opts.tol && iterations < opts.max_iter {
        let saved = x;
        let (used, r) = solver.newton(&mut x, 60.min(opts.max_iter - iterations));
        iterations += used.max(1);
        if r <= opts.tol {
            break;
        }
        if !r.is_finite() {
            x = saved;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let chunk = (opts.max_iter - iterations).min(5_000);
        let (used, r) = solver.damped(&mut x, chunk);
        iterations += used;
        res = r;
    }

    // The map is symmetric under (m, b) → (−m, −b); report m ≥ 0.
    if x[3] < 0.0 {
        x[3] = -x[3];
        x[4] = -x[4];
    }
    let (fx, _, _) = update_map(&x, p, opts.ridge_eps);
    let residual = max_diff(&fx, &x);
    let converged = residual <= opts.tol;
    let conj = energetic_update(&x, p);
    let stats = SummaryStatistics::from_array(x);
    let conj = ConjugateStatistics::from_array(conj);
    let free_energy = free_energy_k1(&stats, &conj, p).unwrap_or(f64::NAN);
    let stationarity = free_energy_gradient(&stats, &conj, p)
        .map(|g| g.iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .unwrap_or(f64::NAN);
    let branch = if !converged {
        Branch::Unknown
    } else if stats.m.abs() < 1e-6 {
        Branch::Collapsed
    } else {
        Branch::Learning
    };
    Ok(FixedPointResult {
        stats,
        conj,
        residual,
        free_energy,
        iterations,
        converged,
        branch,
        stationarity,
        regularized: solver.regularized,
    })
}

/// One application of the update map (conjugates, then statistics).
pub fn apply_update(stats: &SummaryStatistics, p: &ModelPoint, ridge_eps: f64) -> (SummaryStatistics, ConjugateStatistics) {
    let (nx, h, _) = update_map(&stats.to_array(), p, ridge_eps);
    (SummaryStatistics::from_array(nx), ConjugateStatistics::from_array(h))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticMetrics {
    pub eps_g: f64,
    pub rate: f64,
    pub distortion: f64,
}

/// `ε_g = ρ − 2√ρ m + Q` for k = k* = 1.
pub fn signal_recovery_error_k1(m: f64, q: f64, rho: f64) -> f64 {
    rho - 2.0 * rho.sqrt() * m + q
}

/// Signal-recovery error, population rate and distortion per dimension from
/// the order parameters.
pub fn asymptotic_metrics(stats: &SummaryStatistics, beta: f64, rho: f64, eta: f64) -> Result<AsymptoticMetrics> {
    let kappa = stats.q + beta;
    if !(kappa > 0.0) {
        return Err(Error::Domain("Q + beta must be positive".into()));
    }
    let dv = beta / kappa;
    let u2 = rho * stats.b * stats.b + eta * stats.e;
    let rate = if dv > 0.0 {
        0.5 * (u2 + dv - 1.0 - dv.ln())
    } else {
        f64::INFINITY
    };
    let distortion = 0.5 * (rho + eta - 2.0 * (rho * stats.m * stats.b + eta * stats.r) + stats.q * (u2 + dv));
    Ok(AsymptoticMetrics { eps_g: signal_recovery_error_k1(stats.m, stats.q, rho), rate, distortion })
}

/// Average rate over the training set itself (as opposed to fresh data),
/// from the proximal-field covariance `T C Tᵀ` with `T = (I + η g K)⁻¹`.
pub fn training_rate(stats: &SummaryStatistics, p: &ModelPoint) -> Result<f64> {
    let s = stats;
    let kappa = s.q + p.beta;
    if !(kappa > 0.0) {
        return Err(Error::Domain("Q + beta must be positive".into()));
    }
    let k = Matrix2::new(0.0, -1.0, -1.0, kappa);
    let g = Matrix2::new(s.chi, s.omega, s.omega, s.zeta);
    let t = (Matrix2::identity() + g * k * p.eta)
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular field response".into()))?;
    let c12 = p.rho * s.m * s.b + p.eta * s.r;
    let c = Matrix2::new(p.rho * s.m * s.m + p.eta * s.q, c12, c12, p.rho * s.b * s.b + p.eta * s.e);
    let u2 = (t * c * t.transpose())[(1, 1)];
    let dv = p.beta / kappa;
    if dv > 0.0 {
        Ok(0.5 * (u2 + dv - 1.0 - dv.ln()))
    } else {
        Ok(f64::INFINITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeAlphaLimit {
    pub stats: SummaryStatistics,
    pub eps_g: f64,
    pub rate: f64,
    pub distortion: f64,
}

/// Closed-form α → ∞ solution.
pub fn large_alpha_limit(beta: f64, rho: f64, eta: f64) -> LargeAlphaLimit {
    let total = rho + eta;
    if beta < total {
        let q = total - beta;
        // without a spike the learned direction carries no signal
        let m = if rho > 0.0 { q.sqrt() } else { 0.0 };
        let stats = SummaryStatistics {
            q,
            e: q / (total * total),
            r: q / total,
            m,
            b: m / total,
            chi: 0.0,
            zeta: 0.0,
            omega: 0.0,
        };
        LargeAlphaLimit {
            stats,
            eps_g: signal_recovery_error_k1(m, q, rho),
            rate: if beta > 0.0 { 0.5 * (total / beta).ln() } else { f64::INFINITY },
            distortion: beta / 2.0,
        }
    } else {
        LargeAlphaLimit { stats: SummaryStatistics::zero(), eps_g: rho, rate: 0.0, distortion: total / 2.0 }
    }
}

/// β above which collapse is the only solution at every sample complexity.
pub fn collapse_threshold(rho: f64, eta: f64) -> f64 {
    rho + eta
}

/// Eigenvalue `ρ/(β − η)` of the linearised map around the collapsed solution.
pub fn collapse_stability_eigenvalue(beta: f64, rho: f64, eta: f64) -> Result<f64> {
    if beta == eta {
        return Err(Error::Domain("linearisation is singular at beta = eta".into()));
    }
    Ok(rho / (beta - eta))
}

/// Rate-distortion function of a Gaussian source with variance `(ρ+η)/2` per unit.
pub fn gaussian_source_rd(distortion: f64, rho: f64, eta: f64) -> Result<f64> {
    if !(distortion > 0.0) {
        return Err(Error::Domain(format!("distortion must be positive, got {distortion}")));
    }
    let half = 0.5 * (rho + eta);
    Ok(if distortion < half { 0.5 * (half / distortion).ln() } else { 0.0 })
}
