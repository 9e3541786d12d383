//! Sweeps over (α, β), phase diagrams, rate-distortion curves, optimal-β
//! search and replica-versus-simulation comparisons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvWriter};
use crate::linear_vae::{self, TrainConfig, VaeConfig};
use crate::replica::{
    asymptotic_metrics, large_alpha_limit, saddle_point_solve, training_rate, AsymptoticMetrics, Branch,
    FixedPointResult, Init, ModelPoint, SolverOptions,
};
use crate::scm::{self, GenerativeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Learning,
    Overfitting,
    Regularized,
}

impl Phase {
    pub fn classify(m: f64, q: f64, m_tol: f64, q_tol: f64) -> Self {
        if m.abs() > m_tol {
            Phase::Learning
        } else if q > q_tol {
            Phase::Overfitting
        } else {
            Phase::Regularized
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Learning => "Learning",
            Phase::Overfitting => "Overfitting",
            Phase::Regularized => "Regularized",
        }
    }
}

/// Physical saddle point at one model point, chosen among several starts.
#[derive(Clone, Debug)]
pub struct PhysicalSolution {
    pub result: FixedPointResult,
    pub metrics: AsymptoticMetrics,
    /// Another converged start reached a different branch with near-equal free energy.
    pub boundary: bool,
}

/// Random starts tried when no start reached a converged learning solution.
const FALLBACK_STARTS: u64 = 8;

/// Solve from the collapsed and informed starts (plus any extra starts) and
/// keep the converged solution of lowest free energy. If that solution has no
/// signal overlap or nothing converged, seeded random starts look for a lower branch.
pub fn solve_physical(p: &ModelPoint, opts: &SolverOptions, extra: &[Init]) -> Result<PhysicalSolution> {
    let mut inits = vec![Init::Collapsed, Init::Informed];
    if !inits.contains(&opts.init) {
        inits.push(opts.init);
    }
    inits.extend_from_slice(extra);
    let mut results = Vec::with_capacity(inits.len());
    for init in inits {
        results.push(saddle_point_solve(p, &opts.with_init(init))?);
    }
    let learning = select(&results).is_some_and(|r| r.converged && r.branch == Branch::Learning);
    if !learning {
        for seed in 0..FALLBACK_STARTS {
            results.push(saddle_point_solve(p, &opts.with_init(Init::Random(seed)))?);
        }
    }
    let chosen = select(&results).expect("at least one start").clone();
    let boundary = results.iter().filter(|r| usable(r)).any(|r| {
        r.branch != chosen.branch && (r.free_energy - chosen.free_energy).abs() <= 1e-6 * (1.0 + chosen.free_energy.abs())
    });
    let metrics = metrics_or_nan(&chosen, p);
    Ok(PhysicalSolution { result: chosen, metrics, boundary })
}

fn usable(r: &FixedPointResult) -> bool {
    r.converged && r.free_energy.is_finite()
}

/// Lowest free energy among converged results, else the smallest residual.
/// Near-ties keep the earlier start, so deterministic starts win over random ones.
fn select(results: &[FixedPointResult]) -> Option<&FixedPointResult> {
    let mut best: Option<&FixedPointResult> = None;
    for r in results.iter().filter(|r| usable(r)) {
        match best {
            Some(b) if r.free_energy >= b.free_energy - 1e-9 * (1.0 + b.free_energy.abs()) => {}
            _ => best = Some(r),
        }
    }
    best.or_else(|| results.iter().min_by(|a, b| a.residual.total_cmp(&b.residual)))
}

fn metrics_or_nan(r: &FixedPointResult, p: &ModelPoint) -> AsymptoticMetrics {
    asymptotic_metrics(&r.stats, p.beta, p.rho, p.eta).unwrap_or(AsymptoticMetrics {
        eps_g: f64::NAN,
        rate: f64::NAN,
        distortion: f64::NAN,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub m: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "R_stat")]
    pub r_stat: f64,
    pub b: f64,
    pub eps_g: f64,
    pub rate: f64,
    pub distortion: f64,
    pub phase: Phase,
    pub converged: bool,
    #[serde(skip)]
    pub boundary: bool,
}

pub const SWEEP_COLUMNS: [&str; 13] =
    ["alpha", "beta", "lambda", "m", "Q", "E", "R_stat", "b", "eps_g", "rate", "distortion", "phase", "converged"];

impl SweepRow {
    fn new(p: &ModelPoint, sol: &PhysicalSolution, m_tol: f64, q_tol: f64) -> Self {
        let s = sol.result.stats;
        Self {
            alpha: p.alpha,
            beta: p.beta,
            lambda: p.lambda,
            m: s.m,
            q: s.q,
            e: s.e,
            r_stat: s.r,
            b: s.b,
            eps_g: sol.metrics.eps_g,
            rate: sol.metrics.rate,
            distortion: sol.metrics.distortion,
            phase: Phase::classify(s.m, s.q, m_tol, q_tol),
            converged: sol.result.converged,
            boundary: sol.boundary,
        }
    }

    pub fn cells(&self) -> Vec<String> {
        vec![
            fmt_f64(self.alpha),
            fmt_f64(self.beta),
            fmt_f64(self.lambda),
            fmt_f64(self.m),
            fmt_f64(self.q),
            fmt_f64(self.e),
            fmt_f64(self.r_stat),
            fmt_f64(self.b),
            fmt_f64(self.eps_g),
            fmt_f64(self.rate),
            fmt_f64(self.distortion),
            self.phase.as_str().to_string(),
            self.converged.to_string(),
        ]
    }
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = CsvWriter::new(out, &SWEEP_COLUMNS)?;
    for r in rows {
        w.row(&r.cells())?;
    }
    w.finish()?;
    Ok(())
}

fn check_grid(name: &str, grid: &[f64], positive: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite() || (positive && *v <= 0.0) || *v < 0.0) {
        return Err(Error::InvalidConfig(format!("{name} grid has invalid entries")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

pub const DEFAULT_M_TOL: f64 = 1e-6;
pub const DEFAULT_Q_TOL: f64 = 1e-6;

/// Learning curve along an increasing α grid, warm-starting each point from its predecessor.
pub fn sweep_alpha(
    alpha_grid: &[f64],
    beta: f64,
    lambda: f64,
    rho: f64,
    eta: f64,
    opts: &SolverOptions,
) -> Result<Vec<SweepRow>> {
    check_grid("alpha", alpha_grid, true)?;
    sweep_line(alpha_grid, |a| ModelPoint::new(a, beta, lambda, rho, eta), opts, DEFAULT_M_TOL, DEFAULT_Q_TOL)
}

fn sweep_line(
    grid: &[f64],
    point: impl Fn(f64) -> ModelPoint,
    opts: &SolverOptions,
    m_tol: f64,
    q_tol: f64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(grid.len());
    let mut warm: Option<Init> = None;
    for &g in grid {
        let p = point(g);
        let extra: Vec<Init> = warm.into_iter().collect();
        let sol = solve_physical(&p, opts, &extra)?;
        warm = sol.result.converged.then_some(Init::Warm(sol.result.stats));
        rows.push(SweepRow::new(&p, &sol, m_tol, q_tol));
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct PhaseDiagram {
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// Row-major in β: cell `(i_beta, i_alpha)` is at `i_beta * alpha_len + i_alpha`.
    pub cells: Vec<SweepRow>,
}

impl PhaseDiagram {
    pub fn cell(&self, i_beta: usize, i_alpha: usize) -> &SweepRow {
        &self.cells[i_beta * self.alpha_grid.len() + i_alpha]
    }
}

/// Phase classification on an (α, β) grid. Each β line is an independent
/// task warm-started along α; the output order does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn phase_diagram(
    alpha_grid: &[f64],
    beta_grid: &[f64],
    lambda: f64,
    rho: f64,
    eta: f64,
    opts: &SolverOptions,
    m_tol: f64,
    q_tol: f64,
) -> Result<PhaseDiagram> {
    check_grid("alpha", alpha_grid, true)?;
    check_grid("beta", beta_grid, false)?;
    let rows: Vec<Vec<SweepRow>> = beta_grid
        .par_iter()
        .map(|&beta| sweep_line(alpha_grid, |a| ModelPoint::new(a, beta, lambda, rho, eta), opts, m_tol, q_tol))
        .collect::<Result<_>>()?;
    Ok(PhaseDiagram {
        alpha_grid: alpha_grid.to_vec(),
        beta_grid: beta_grid.to_vec(),
        cells: rows.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub beta: f64,
    pub rate: f64,
    pub distortion: f64,
    /// `f64::INFINITY` for the analytic curve.
    pub alpha: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct RdCurve {
    pub points: Vec<RdPoint>,
    pub reference: Vec<RdPoint>,
}

fn analytic_rd_point(beta: f64, rho: f64, eta: f64) -> RdPoint {
    let l = large_alpha_limit(beta, rho, eta);
    RdPoint { beta, rate: l.rate, distortion: l.distortion, alpha: f64::INFINITY, converged: true }
}

/// Rate-distortion points traced by β at fixed α (α may be infinite), plus the analytic α = ∞ curve.
pub fn rd_curve(beta_grid: &[f64], alpha: f64, lambda: f64, rho: f64, eta: f64, opts: &SolverOptions) -> Result<RdCurve> {
    check_grid("beta", beta_grid, true)?;
    let reference: Vec<RdPoint> = beta_grid.iter().map(|&b| analytic_rd_point(b, rho, eta)).collect();
    let points = if alpha.is_infinite() && alpha > 0.0 {
        reference.clone()
    } else {
        sweep_line(beta_grid, |b| ModelPoint::new(alpha, b, lambda, rho, eta), opts, DEFAULT_M_TOL, DEFAULT_Q_TOL)?
            .into_iter()
            .map(|r| RdPoint { beta: r.beta, rate: r.rate, distortion: r.distortion, alpha, converged: r.converged })
            .collect()
    };
    Ok(RdCurve { points, reference })
}

pub fn write_rd_csv<W: std::io::Write>(out: W, points: &[RdPoint]) -> Result<()> {
    let mut w = CsvWriter::new(out, &["alpha", "beta", "distortion", "rate", "converged"])?;
    for p in points {
        w.row(&[fmt_f64(p.alpha), fmt_f64(p.beta), fmt_f64(p.distortion), fmt_f64(p.rate), p.converged.to_string()])?;
    }
    w.finish()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalBeta {
    pub beta_star: f64,
    pub eps_g_star: f64,
    /// ε_g did not vary over the range; `beta_star` is the midpoint.
    pub flat: bool,
    pub converged: bool,
}

/// ε_g at one β; α may be infinite.
pub fn eps_g_at(alpha: f64, beta: f64, lambda: f64, rho: f64, eta: f64, opts: &SolverOptions) -> Result<(f64, bool)> {
    if alpha.is_infinite() {
        return Ok((large_alpha_limit(beta, rho, eta).eps_g, true));
    }
    let sol = solve_physical(&ModelPoint::new(alpha, beta, lambda, rho, eta), opts, &[])?;
    Ok((sol.metrics.eps_g, sol.result.converged))
}

/// Minimise ε_g over β by a grid scan followed by golden-section refinement.
pub fn optimal_beta(
    alpha: f64,
    lambda: f64,
    rho: f64,
    eta: f64,
    beta_range: (f64, f64),
    grid_points: usize,
    opts: &SolverOptions,
) -> Result<OptimalBeta> {
    let (lo, hi) = beta_range;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(Error::InvalidConfig(format!("invalid beta range [{lo}, {hi}]")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    let npts = grid_points.max(3);
    let grid: Vec<f64> = (0..npts).map(|i| lo + (hi - lo) * i as f64 / (npts - 1) as f64).collect();
    let mut values = Vec::with_capacity(npts);
    let mut all_converged = true;
    for &b in &grid {
        let (v, c) = eps_g_at(alpha, b, lambda, rho, eta, opts)?;
        all_converged &= c;
        values.push(v);
    }
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (imin, &vmin) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if vmax - vmin <= 1e-10 * (1.0 + vmin.abs()) {
        return Ok(OptimalBeta { beta_star: 0.5 * (lo + hi), eps_g_star: vmin, flat: true, converged: all_converged });
    }
    let mut a = grid[imin.saturating_sub(1)];
    let mut b = grid[(imin + 1).min(npts - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, cc) = eps_g_at(alpha, c, lambda, rho, eta, opts)?;
    let (mut fd, cd) = eps_g_at(alpha, d, lambda, rho, eta, opts)?;
    all_converged &= cc && cd;
    while b - a > 1e-7 * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            let (v, ok) = eps_g_at(alpha, c, lambda, rho, eta, opts)?;
            fc = v;
            all_converged &= ok;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            let (v, ok) = eps_g_at(alpha, d, lambda, rho, eta, opts)?;
            fd = v;
            all_converged &= ok;
        }
    }
    let (beta_star, eps_star) = if fc < fd { (c, fc) } else { (d, fd) };
    let (beta_star, eps_star) = if vmin < eps_star { (grid[imin], vmin) } else { (beta_star, eps_star) };
    Ok(OptimalBeta { beta_star, eps_g_star: eps_star, flat: false, converged: all_converged })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub eps_g: f64,
    pub m: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    /// Expected rate on fresh data given the trained parameters.
    pub rate: f64,
    /// Average rate over the training set.
    pub rate_train: f64,
    pub distortion: f64,
    pub kl_true_vs_var: f64,
    pub converged: bool,
    pub steps: usize,
    pub grad_norm: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub mean: f64,
    pub std_error: f64,
    pub replica: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub point: ModelPoint,
    pub d: usize,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedMetrics>,
    pub replica: FixedPointResult,
    pub comparisons: Vec<MetricComparison>,
}

impl ComparisonReport {
    pub fn max_abs_z(&self) -> f64 {
        self.comparisons.iter().fold(0.0, |a, c| a.max(c.z.abs()))
    }

    pub fn get(&self, metric: &str) -> Option<&MetricComparison> {
        self.comparisons.iter().find(|c| c.metric == metric)
    }
}

/// `(mean − reference)/SE`; zero when both the spread and the gap vanish.
pub fn z_score(samples: &[f64], reference: f64) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let se = (var / n).sqrt();
    let gap = mean - reference;
    let z = if se > 0.0 {
        gap / se
    } else if gap.abs() <= 1e-12 * (1.0 + reference.abs()) {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };
    (mean, se, z)
}

/// Train one k = 1 VAE per seed and compare the averaged metrics with the replica prediction.
pub fn compare_replica_vs_mc(
    point: &ModelPoint,
    d: usize,
    seeds: &[u64],
    train_config: &TrainConfig,
    opts: &SolverOptions,
) -> Result<ComparisonReport> {
    point.validate()?;
    if d < 100 {
        return Err(Error::InvalidConfig(format!("comparison needs d >= 100, got {d}")));
    }
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig("comparison needs at least 2 seeds".into()));
    }
    let gen = GenerativeConfig::new(point.rho, point.eta, d, 1, point.alpha)?;
    let vae = VaeConfig::new(1, point.beta, point.lambda);
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        per_seed.push(simulate_seed(&gen, &vae, seed, train_config)?);
    }

    let sol = solve_physical(point, opts, &[])?;
    let rep = sol.result.stats;
    let rep_train_rate = training_rate(&rep, point).unwrap_or(f64::NAN);
    let ok: Vec<&SeedMetrics> = per_seed.iter().filter(|s| s.error.is_none()).collect();
    let collect = |f: fn(&SeedMetrics) -> f64| ok.iter().map(|s| f(s)).collect::<Vec<f64>>();
    let table: [(&str, Vec<f64>, f64); 6] = [
        ("eps_g", collect(|s| s.eps_g), sol.metrics.eps_g),
        ("m", collect(|s| s.m), rep.m),
        ("Q", collect(|s| s.q), rep.q),
        ("rate", collect(|s| s.rate), sol.metrics.rate),
        ("rate_train", collect(|s| s.rate_train), rep_train_rate),
        ("distortion", collect(|s| s.distortion), sol.metrics.distortion),
    ];
    let comparisons = table
        .into_iter()
        .map(|(name, xs, reference)| {
            let (mean, std_error, z) = if xs.is_empty() { (f64::NAN, f64::NAN, f64::NAN) } else { z_score(&xs, reference) };
            MetricComparison { metric: name.to_string(), mean, std_error, replica: reference, z }
        })
        .collect();
    Ok(ComparisonReport { point: *point, d, seeds: seeds.to_vec(), per_seed, replica: sol.result, comparisons })
}

/// One simulated dataset, trained and evaluated; divergence is recorded rather than propagated.
pub fn simulate_seed(gen: &GenerativeConfig, vae: &VaeConfig, seed: u64, tc: &TrainConfig) -> Result<SeedMetrics> {
    let data = scm::generate_dataset(gen, seed)?;
    let tc = TrainConfig { seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1), ..tc.clone() };
    let outcome = match linear_vae::train(&data, vae, &tc) {
        Ok(o) => o,
        Err(Error::Diverged { step, .. }) => {
            return Ok(SeedMetrics {
                seed,
                eps_g: f64::NAN,
                m: f64::NAN,
                q: f64::NAN,
                rate: f64::NAN,
                rate_train: f64::NAN,
                distortion: f64::NAN,
                kl_true_vs_var: f64::NAN,
                converged: false,
                steps: step,
                grad_norm: f64::NAN,
                error: Some(format!("diverged at step {step}")),
            })
        }
        Err(e) => return Err(e),
    };
    let mut params = outcome.params;
    params.align_signs(&data.w_star);
    let summary = linear_vae::empirical_summary_stats(&params, &data.w_star);
    let population = asymptotic_metrics(&summary, vae.beta, gen.rho, gen.eta)?;
    Ok(SeedMetrics {
        seed,
        eps_g: population.eps_g,
        m: summary.m,
        q: summary.q,
        rate: if vae.beta > 0.0 { population.rate } else { f64::INFINITY },
        rate_train: linear_vae::empirical_rate(&params, &data)?,
        distortion: population.distortion,
        kl_true_vs_var: linear_vae::posterior_kl_true_vs_variational(&params, &data, vae)?,
        converged: outcome.converged,
        steps: outcome.steps,
        grad_norm: outcome.grad_norm,
        error: None,
    })
}
