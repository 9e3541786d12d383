//! `vae-replica` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vae_replica::analysis::{self, DEFAULT_M_TOL, DEFAULT_Q_TOL};
use vae_replica::config::{Alpha, GridSpec, RunConfig};
use vae_replica::io::{self, Series};
use vae_replica::linear_vae::{self, MetricsReport, Optimizer, TrainConfig, VaeConfig};
use vae_replica::replica::{self, Init, ModelPoint, SolverOptions};
use vae_replica::scm::{self, GenerativeConfig};
use vae_replica::Error;

const THREADS_ENV: &str = "VAE_REPLICA_THREADS";

#[derive(Parser)]
#[command(name = "vae-replica", version, about = "Replica predictions and simulations for linear beta-VAEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the saddle-point equations at one point and print the result as JSON.
    Solve(Params),
    /// Replica learning curve along an α grid.
    Sweep(Params),
    /// Phase classification on an (α, β) grid.
    Phase(Params),
    /// Rate-distortion curve traced by β, with an SVG chart.
    Rd(Params),
    /// β minimising the signal recovery error.
    Optbeta(Params),
    /// Generate one dataset, train a VAE and report its metrics.
    Simulate(Params),
    /// Compare replica predictions with trained VAEs over several seeds.
    Compare(Params),
    /// Sample covariance spectrum and noise-strength estimate.
    Spectrum(Params),
}

#[derive(Args, Clone, Default)]
struct Params {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON/SVG artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to VAE_REPLICA_THREADS, then the core count).
    #[arg(long)]
    threads: Option<usize>,
    /// Treat convergence failures as errors (exit code 2).
    #[arg(long)]
    strict: bool,

    /// Sample complexity n/d; `inf` selects the analytic limit where supported.
    #[arg(long)]
    alpha: Option<Alpha>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,

    /// `linspace:a:b:n`, `logspace:a:b:n` or a comma-separated list.
    #[arg(long)]
    alpha_grid: Option<GridSpec>,
    #[arg(long)]
    beta_grid: Option<GridSpec>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    beta_points: Option<usize>,
    #[arg(long)]
    m_tol: Option<f64>,
    #[arg(long)]
    q_tol: Option<f64>,

    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// collapsed, informed or random:SEED.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    ridge_eps: Option<f64>,

    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k_star: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds for `compare`.
    #[arg(long)]
    seeds: Option<usize>,

    /// line_search or adam.
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    closed_form_dvar: Option<bool>,
    /// Record the training objective and gradient norm per step.
    #[arg(long)]
    trace: bool,
    /// Write the generated dataset in the binary SCMD format.
    #[arg(long)]
    dump_dataset: bool,
    #[arg(long)]
    collapse_eps: Option<f64>,
    #[arg(long)]
    cumulative_rate: Option<f64>,
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "line_search" | "linesearch" | "gd" => Ok(Optimizer::LineSearch),
        "adam" => Ok(Optimizer::Adam),
        _ => Err(format!("unknown optimizer `{s}` (line_search|adam)")),
    }
}

impl Params {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            rho: self.rho,
            eta: self.eta,
            alpha_grid: self.alpha_grid.clone(),
            beta_grid: self.beta_grid.clone(),
            beta_min: self.beta_min,
            beta_max: self.beta_max,
            beta_points: self.beta_points,
            m_tol: self.m_tol,
            q_tol: self.q_tol,
            damping: self.damping,
            tol: self.tol,
            max_iter: self.max_iter,
            init: self.init.clone(),
            ridge_eps: self.ridge_eps,
            d: self.d,
            k: self.k,
            k_star: self.k_star,
            seed: self.seed,
            seeds: self.seeds,
            optimizer: self.optimizer,
            max_steps: self.max_steps,
            grad_tol: self.grad_tol,
            learning_rate: self.learning_rate,
            closed_form_dvar: self.closed_form_dvar,
            trace: self.trace.then_some(true),
            dump_dataset: self.dump_dataset.then_some(true),
            collapse_eps: self.collapse_eps,
            cumulative_rate: self.cumulative_rate,
            threads: self.threads,
            strict: self.strict.then_some(true),
        }
    }
}

enum Failure {
    Usage(String),
    Convergence(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Resolved configuration for one run: file values, then flags, then command defaults.
/// Every default that a command reads is written back, so the echoed file is complete.
struct Run {
    cfg: RunConfig,
    out: Option<PathBuf>,
    warnings: usize,
}

macro_rules! getter {
    ($name:ident, $ty:ty) => {
        fn $name(&mut self, default: $ty) -> $ty {
            *self.cfg.$name.get_or_insert(default)
        }
    };
}

impl Run {
    fn new(p: &Params) -> Result<Self, Failure> {
        let mut cfg = match &p.config {
            Some(path) => RunConfig::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
            None => RunConfig::default(),
        };
        cfg.merge(p.overrides());
        Ok(Self { cfg, out: p.out.clone(), warnings: 0 })
    }

    getter!(beta, f64);
    getter!(lambda, f64);
    getter!(rho, f64);
    getter!(eta, f64);
    getter!(m_tol, f64);
    getter!(q_tol, f64);
    getter!(beta_min, f64);
    getter!(beta_max, f64);
    getter!(beta_points, usize);
    getter!(d, usize);
    getter!(k, usize);
    getter!(k_star, usize);
    getter!(seed, u64);
    getter!(seeds, usize);
    getter!(collapse_eps, f64);
    getter!(cumulative_rate, f64);

    fn strict(&self) -> bool {
        self.cfg.strict.unwrap_or(false)
    }

    fn required_beta(&mut self) -> Result<f64, Failure> {
        self.cfg.beta.ok_or_else(|| usage("missing required --beta"))
    }

    fn alpha(&mut self, default: Option<f64>) -> Result<f64, Failure> {
        match (self.cfg.alpha, default) {
            (Some(a), _) => Ok(a.0),
            (None, Some(d)) => {
                self.cfg.alpha = Some(Alpha(d));
                Ok(d)
            }
            (None, None) => Err(usage("missing required --alpha")),
        }
    }

    fn finite_alpha(&mut self, default: Option<f64>) -> Result<f64, Failure> {
        let a = self.alpha(default)?;
        if a.is_infinite() {
            return Err(usage("alpha = inf is only supported by `rd` and `optbeta`"));
        }
        Ok(a)
    }

    fn grid(&mut self, which: &str, default: &str) -> Result<Vec<f64>, Failure> {
        let slot = if which == "alpha" { &mut self.cfg.alpha_grid } else { &mut self.cfg.beta_grid };
        Ok(slot.get_or_insert_with(|| GridSpec::Spec(default.into())).values()?)
    }

    fn solver(&mut self) -> Result<SolverOptions, Failure> {
        let base = SolverOptions::default();
        let init_text = self.cfg.init.get_or_insert_with(|| "informed".into()).clone();
        let opts = SolverOptions {
            damping: *self.cfg.damping.get_or_insert(base.damping),
            tol: *self.cfg.tol.get_or_insert(base.tol),
            max_iter: *self.cfg.max_iter.get_or_insert(base.max_iter),
            ridge_eps: *self.cfg.ridge_eps.get_or_insert(base.ridge_eps),
            init: init_text.parse::<Init>()?,
        };
        opts.validate()?;
        Ok(opts)
    }

    fn training(&mut self) -> TrainConfig {
        let base = TrainConfig::default();
        TrainConfig {
            optimizer: *self.cfg.optimizer.get_or_insert(base.optimizer),
            max_steps: *self.cfg.max_steps.get_or_insert(base.max_steps),
            grad_tol: *self.cfg.grad_tol.get_or_insert(base.grad_tol),
            learning_rate: *self.cfg.learning_rate.get_or_insert(base.learning_rate),
            closed_form_dvar: *self.cfg.closed_form_dvar.get_or_insert(base.closed_form_dvar),
            seed: base.seed,
            record_trace: *self.cfg.trace.get_or_insert(false),
        }
    }

    fn point(&mut self, alpha: f64) -> Result<ModelPoint, Failure> {
        let beta = self.required_beta()?;
        let p = ModelPoint::new(alpha, beta, self.lambda(1.0), self.rho(1.0), self.eta(1.0));
        p.validate()?;
        Ok(p)
    }

    fn warn(&mut self, msg: &str) {
        eprintln!("warning: {msg}");
        self.warnings += 1;
    }

    fn out_dir(&self) -> Result<&Path, Failure> {
        let dir = self.out.as_deref().unwrap_or(Path::new("out"));
        fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn write(&self, name: &str, contents: &[u8]) -> Outcome {
        let path = self.out_dir()?.join(name);
        fs::write(&path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
    }

    fn finish(&self) -> Outcome {
        let mut text = self.cfg.to_json_pretty()?;
        text.push('\n');
        self.write("config.json", text.as_bytes())?;
        if self.strict() && self.warnings > 0 {
            return Err(Failure::Convergence(format!("{} convergence warning(s) under --strict", self.warnings)));
        }
        Ok(())
    }
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn cmd_solve(run: &mut Run) -> Outcome {
    let alpha = run.finite_alpha(None)?;
    let p = run.point(alpha)?;
    let opts = run.solver()?;
    let result = replica::saddle_point_solve(&p, &opts)?;
    let text = String::from_utf8(json_bytes(&result)?).expect("JSON is UTF-8");
    print!("{text}");
    if run.out.is_some() {
        run.write("solve.json", text.as_bytes())?;
        run.finish()?;
    }
    if result.converged {
        Ok(())
    } else {
        Err(Failure::Convergence(format!("no convergence after {} iterations (residual {:.3e})", result.iterations, result.residual)))
    }
}

fn check_rows(run: &mut Run, rows: &[analysis::SweepRow]) {
    for r in rows.iter().filter(|r| !r.converged) {
        let msg = format!("no convergence at alpha={} beta={}", r.alpha, r.beta);
        run.warn(&msg);
    }
}

fn cmd_sweep(run: &mut Run) -> Outcome {
    let grid = run.grid("alpha", "logspace:0.1:100:40")?;
    let beta = run.required_beta()?;
    let (lambda, rho, eta) = (run.lambda(1.0), run.rho(1.0), run.eta(1.0));
    let opts = run.solver()?;
    let rows = analysis::sweep_alpha(&grid, beta, lambda, rho, eta, &opts)?;
    check_rows(run, &rows);
    let mut buf = Vec::new();
    analysis::write_sweep_csv(&mut buf, &rows)?;
    run.write("sweep.csv", &buf)?;
    run.finish()
}

fn cmd_phase(run: &mut Run) -> Outcome {
    let alphas = run.grid("alpha", "logspace:0.1:100:60")?;
    let betas = run.grid("beta", "linspace:0:3:60")?;
    let (lambda, rho, eta) = (run.lambda(1.0), run.rho(1.0), run.eta(1.0));
    let (m_tol, q_tol) = (run.m_tol(DEFAULT_M_TOL), run.q_tol(DEFAULT_Q_TOL));
    let opts = run.solver()?;
    let diagram = analysis::phase_diagram(&alphas, &betas, lambda, rho, eta, &opts, m_tol, q_tol)?;
    check_rows(run, &diagram.cells);
    let mut buf = Vec::new();
    analysis::write_sweep_csv(&mut buf, &diagram.cells)?;
    run.write("phase.csv", &buf)?;
    run.finish()
}

fn cmd_rd(run: &mut Run) -> Outcome {
    let alpha = run.alpha(Some(f64::INFINITY))?;
    let betas = run.grid("beta", "linspace:0.05:3:60")?;
    let (lambda, rho, eta) = (run.lambda(1.0), run.rho(1.0), run.eta(1.0));
    let opts = run.solver()?;
    let curve = analysis::rd_curve(&betas, alpha, lambda, rho, eta, &opts)?;
    for p in curve.points.iter().filter(|p| !p.converged) {
        let msg = format!("no convergence at beta={}", p.beta);
        run.warn(&msg);
    }
    let mut buf = Vec::new();
    analysis::write_rd_csv(&mut buf, &curve.points)?;
    run.write("rd.csv", &buf)?;

    let to_xy = |pts: &[analysis::RdPoint]| pts.iter().map(|p| (p.distortion, p.rate)).collect::<Vec<_>>();
    let mut series = vec![Series { label: "alpha = inf".into(), points: to_xy(&curve.reference), dashed: alpha.is_finite() }];
    if alpha.is_finite() {
        series.push(Series { label: format!("alpha = {alpha}"), points: to_xy(&curve.points), dashed: false });
    }
    let svg = io::svg_line_chart("Rate-distortion", "distortion D", "rate R", &series);
    run.write("rd.svg", svg.as_bytes())?;
    run.finish()
}

fn cmd_optbeta(run: &mut Run) -> Outcome {
    let alpha = run.alpha(None)?;
    let (lambda, rho, eta) = (run.lambda(1.0), run.rho(1.0), run.eta(1.0));
    let range = (run.beta_min(0.05), run.beta_max(2.5));
    let points = run.beta_points(50);
    let opts = run.solver()?;
    let best = analysis::optimal_beta(alpha, lambda, rho, eta, range, points, &opts)?;
    if !best.converged {
        run.warn("some solves along the beta scan did not converge");
    }
    if best.flat {
        run.warn("eps_g is flat over the beta range; reporting the midpoint");
    }
    let report = json!({
        "alpha": io::fmt_f64(alpha),
        "beta_star": best.beta_star,
        "eps_g_star": best.eps_g_star,
        "flat": best.flat,
        "converged": best.converged,
    });
    let bytes = json_bytes(&report)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    run.write("optbeta.json", &bytes)?;
    run.finish()
}

fn generative(run: &mut Run) -> Result<GenerativeConfig, Failure> {
    let alpha = run.finite_alpha(Some(4.0))?;
    let (rho, eta, d, k_star) = (run.rho(1.0), run.eta(1.0), run.d(500), run.k_star(1));
    Ok(GenerativeConfig::new(rho, eta, d, k_star, alpha)?)
}

fn cmd_simulate(run: &mut Run) -> Outcome {
    let gen = generative(run)?;
    let seed = run.seed(0);
    let vae = VaeConfig::new(run.k(gen.k_star), run.beta(1.0), run.lambda(1.0));
    vae.validate()?;
    let collapse_eps = run.collapse_eps(1e-3);
    let mut tc = run.training();
    tc.seed = seed;
    let dump = *run.cfg.dump_dataset.get_or_insert(false);

    let data = scm::generate_dataset(&gen, seed)?;
    if dump {
        run.write("dataset.scmd", &io::encode_matrix(&data.x)?)?;
    }
    let outcome = match linear_vae::train(&data, &vae, &tc) {
        Ok(o) => o,
        Err(Error::Diverged { step, .. }) => {
            run.warn(&format!("training diverged at step {step}"));
            run.finish()?;
            return Err(Failure::Convergence(format!("training diverged at step {step}")));
        }
        Err(e) => return Err(e.into()),
    };
    if !outcome.converged {
        run.warn(&format!("training stopped after {} steps with gradient norm {:.3e}", outcome.steps, outcome.grad_norm));
    }
    let mut params = outcome.params;
    params.align_signs(&data.w_star);
    let metrics = MetricsReport::evaluate(&params, &data, &vae, collapse_eps)?;
    let report = json!({
        "metrics": metrics,
        "objective": outcome.objective,
        "grad_norm": outcome.grad_norm,
        "steps": outcome.steps,
        "converged": outcome.converged,
        "n": data.n(),
        "d": data.d(),
    });
    let bytes = json_bytes(&report)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    run.write("metrics.json", &bytes)?;
    if tc.record_trace {
        let mut w = io::CsvWriter::new(Vec::new(), &["step", "objective", "grad_norm"])?;
        for t in &outcome.trace {
            w.row(&[t.step.to_string(), io::fmt_f64(t.objective), io::fmt_f64(t.grad_norm)])?;
        }
        run.write("trace.csv", &w.finish()?)?;
    }
    run.finish()
}

fn cmd_compare(run: &mut Run) -> Outcome {
    let alpha = run.finite_alpha(None)?;
    let point = run.point(alpha)?;
    let d = run.d(2000);
    let base = run.seed(0);
    let count = run.seeds(5) as u64;
    let seeds: Vec<u64> = (base..base + count).collect();
    let tc = run.training();
    let opts = run.solver()?;
    let report = analysis::compare_replica_vs_mc(&point, d, &seeds, &tc, &opts)?;
    if !report.replica.converged {
        run.warn("replica solve did not converge");
    }
    for s in &report.per_seed {
        if let Some(err) = &s.error {
            run.warn(&format!("seed {}: {err}", s.seed));
        } else if !s.converged {
            run.warn(&format!("seed {}: training stopped at gradient norm {:.3e}", s.seed, s.grad_norm));
        }
    }
    let mut w = io::CsvWriter::new(Vec::new(), &["metric", "mean", "std_error", "replica", "z"])?;
    for c in &report.comparisons {
        w.row(&[c.metric.clone(), io::fmt_f64(c.mean), io::fmt_f64(c.std_error), io::fmt_f64(c.replica), io::fmt_f64(c.z)])?;
        eprintln!("{:>10}  mean {:.6}  se {:.2e}  replica {:.6}  z {:+.2}", c.metric, c.mean, c.std_error, c.replica, c.z);
    }
    run.write("compare.csv", &w.finish()?)?;
    run.write("compare.json", &json_bytes(&report)?)?;
    run.finish()
}

fn cmd_spectrum(run: &mut Run) -> Outcome {
    let gen = generative(run)?;
    let seed = run.seed(0);
    let rate = run.cumulative_rate(0.8);
    let data = scm::generate_dataset(&gen, seed)?;
    let spectrum = scm::covariance_spectrum(&data)?;
    let mut buf = Vec::new();
    io::write_spectrum_csv(&mut buf, &spectrum)?;
    run.write("spectrum.csv", &buf)?;
    let edge = scm::bulk_edge(gen.eta, gen.alpha);
    let summary = json!({
        "bulk_edge": edge,
        "above_edge": spectrum.iter().filter(|&&v| v > 1.05 * edge).count(),
        "top_eigenvalue": spectrum.first(),
        "leading_components": scm::leading_components(&spectrum, rate),
        "eta_estimate": scm::estimate_noise_strength(&data, rate)?,
    });
    let bytes = json_bytes(&summary)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    run.write("spectrum.json", &bytes)?;
    run.finish()
}

fn threads(run: &Run) -> Result<usize, Failure> {
    if let Some(t) = run.cfg.threads {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn execute(cmd: Command) -> Outcome {
    let (params, f): (&Params, fn(&mut Run) -> Outcome) = match &cmd {
        Command::Solve(p) => (p, cmd_solve),
        Command::Sweep(p) => (p, cmd_sweep),
        Command::Phase(p) => (p, cmd_phase),
        Command::Rd(p) => (p, cmd_rd),
        Command::Optbeta(p) => (p, cmd_optbeta),
        Command::Simulate(p) => (p, cmd_simulate),
        Command::Compare(p) => (p, cmd_compare),
        Command::Spectrum(p) => (p, cmd_spectrum),
    };
    let mut run = Run::new(params)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(&run)?)
        .build()
        .map_err(|e| usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| f(&mut run))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `vae-replica <command> --help` for usage");
            ExitCode::from(1)
        }
        Err(Failure::Convergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
