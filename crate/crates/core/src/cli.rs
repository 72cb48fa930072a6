//! The `contact-thermo` command line.
//!
//! Every subcommand prints a short summary on stdout and, with `--emit PATH`,
//! writes its artifact (CSV or JSON per `output.format`) to `PATH`; `--emit -`
//! writes the artifact to stdout instead of the summary. Exit status is 0 on
//! success, 2 when inputs are rejected and 1 on I/O failures.

use std::fs;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::entropy::{
    hessian_big, hessian_fd_reference, hessian_small, mass, normalize, relative_entropy, HessianReport, Variation,
};
use crate::error::{Error, Result};
use crate::expr;
use crate::fields::{Grid, ObservableSystem, OneForm, ScalarField};
use crate::flows::{
    cocycle_check, conformal_factor_pullback, dissipation_rate, flow_point, CocycleReport, Diffeomorphism, FlowMap,
    Identity,
};
use crate::geometry::{reeb_field_with_residual, ContactForm, ContactModel};
use crate::maxent::{LegendrianReport, MaxEntProblem, MaxEntSummary};
use crate::pressure::{
    gibbs_diagnostic, pressure_estimate, validation_sample, variational_bound, ContactPair, GibbsReport, OrbitTable,
    PressureEstimate,
};
use crate::report::{Artifact, Cell, Table};
use crate::samples;

pub const THREADS_ENV: &str = "CONTACT_THERMO_THREADS";

#[derive(Parser, Debug)]
#[command(name = "contact-thermo", version, about = "Contact thermodynamics on periodic contact manifolds")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct GlobalOpts {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Override one configuration key, e.g. `--set tol.conf=1e-6`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Model parameter `n` (dimension `2n+1`).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Quadrature nodes per axis.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// RK4 step size.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    /// Artifact path; `-` for stdout.
    #[arg(long, global = true)]
    pub emit: Option<String>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Total contact volume of `f·λ₀`.
    Mass {
        #[arg(long, default_value = "1")]
        scale: String,
    },
    /// Relative entropy of `f·λ₀` against `g·λ₀`.
    Entropy {
        #[arg(long)]
        scale: String,
        #[arg(long, default_value = "1")]
        reference: String,
    },
    /// Reeb field and defining-equation residuals at points.
    Reeb {
        #[arg(long, default_value = "1")]
        scale: String,
        /// `x,y,z;x,y,z;...`; seeded random points when omitted.
        #[arg(long)]
        points: Option<String>,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Contact Hamiltonian flow from one point, with both potential routes.
    Flow {
        #[arg(long)]
        ham: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long)]
        point: Option<String>,
        #[arg(long, default_value = "1")]
        scale: String,
    },
    /// Composition, iteration and growth identities of the conformal exponent.
    CocycleCheck {
        #[arg(long)]
        ham: String,
        /// Hamiltonian of the outer map; defaults to `--ham`.
        #[arg(long)]
        ham2: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        n_max: usize,
    },
    /// Maximum-entropy equilibrium for moment targets.
    Maxent {
        #[arg(long)]
        obs: String,
        #[arg(long, allow_hyphen_values = true)]
        targets: String,
    },
    /// Equilibria along a path of multipliers and the Legendrian residuals.
    LegendrianSweep {
        #[arg(long)]
        obs: String,
        /// CSV of multiplier vectors, one per line.
        #[arg(long)]
        path_file: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<String>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Small and big Hessians of the entropy against finite differences.
    HessianCheck {
        #[arg(long, default_value = "1")]
        scale: String,
        #[arg(long)]
        h1: String,
        #[arg(long)]
        h2: String,
        /// Optional one-form components for the big-phase-space check.
        #[arg(long)]
        alpha1: Option<String>,
        #[arg(long)]
        alpha2: Option<String>,
        #[arg(long, default_value_t = 1e-3)]
        fd_step: f64,
    },
    /// Finite-N topological pressure data from greedy separated sets.
    Pressure {
        /// Hamiltonian; the Reeb flow when omitted.
        #[arg(long)]
        ham: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long = "N", default_value = "1,2,4,8")]
        n_list: String,
    },
    /// Empirical Gibbs constants over Bowen balls.
    GibbsCheck {
        #[arg(long)]
        ham: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        p: f64,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long = "N", default_value = "1,2")]
        n_list: String,
        #[arg(long, default_value_t = 4)]
        centers: usize,
    },
    /// Runs the battery of elementary checks.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mass { .. } => "mass",
            Command::Entropy { .. } => "entropy",
            Command::Reeb { .. } => "reeb",
            Command::Flow { .. } => "flow",
            Command::CocycleCheck { .. } => "cocycle-check",
            Command::Maxent { .. } => "maxent",
            Command::LegendrianSweep { .. } => "legendrian-sweep",
            Command::HessianCheck { .. } => "hessian-check",
            Command::Pressure { .. } => "pressure",
            Command::GibbsCheck { .. } => "gibbs-check",
            Command::Selftest => "selftest",
        }
    }
}

/// Resolves defaults, the config file, `--set` overrides and flags, in
/// that order of precedence (later wins).
pub fn resolve_config(g: &GlobalOpts) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for kv in &g.overrides {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Error::ConfigInvalid(format!("expected KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(m) = &g.model {
        cfg.model = m.clone();
    }
    if let Some(n) = g.n {
        cfg.model_n = n;
    }
    if let Some(r) = g.resolution {
        cfg.resolution = r;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(dt) = g.dt {
        cfg.dt = dt;
    }
    if let Some(f) = &g.format {
        cfg.output_format = f.parse()?;
    }
    if let Some(e) = &g.emit {
        cfg.output_path = e.clone();
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads(cfg: &RunConfig) {
    let from_env = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    let n = from_env.unwrap_or(cfg.threads);
    if n > 0 {
        // The global pool can only be built once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// What a subcommand hands back: its artifact and a human summary.
pub struct Outcome {
    pub artifact: Artifact,
    pub summary: String,
}

/// Parses `args` (including the program name), runs, and returns the exit
/// status. Output goes to the given writers.
pub fn run_with_io(args: &[String], out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    return 0;
                }
                ErrorKind::InvalidSubcommand => {
                    let name = args.get(1).cloned().unwrap_or_default();
                    let _ = writeln!(err, "error: {}", Error::UnknownSubcommand(name));
                    return 2;
                }
                _ => 2,
            };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match execute(&cli) {
        Ok((cfg, outcome)) => match deliver(&cfg, &outcome, out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                1
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(args: &[String]) -> i32 {
    run_with_io(args, &mut std::io::stdout(), &mut std::io::stderr())
}

fn deliver(cfg: &RunConfig, outcome: &Outcome, out: &mut dyn std::io::Write) -> Result<()> {
    let text = outcome.artifact.render(cfg)?;
    match cfg.output_path.as_str() {
        "" => writeln!(out, "{}", outcome.summary)?,
        "-" => write!(out, "{text}")?,
        path => {
            fs::write(path, text)?;
            writeln!(out, "{}", outcome.summary)?;
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(RunConfig, Outcome)> {
    let cfg = resolve_config(&cli.global)?;
    configure_threads(&cfg);
    let model = cfg.build_model()?;
    let ctx = Ctx { grid: model.grid(cfg.resolution)?, model, cfg: cfg.clone() };
    let outcome = match &cli.command {
        Command::Mass { scale } => ctx.mass(scale)?,
        Command::Entropy { scale, reference } => ctx.entropy(scale, reference)?,
        Command::Reeb { scale, points, count } => ctx.reeb(scale, points.as_deref(), *count)?,
        Command::Flow { ham, t, point, scale } => ctx.flow(ham, *t, point.as_deref(), scale)?,
        Command::CocycleCheck { ham, ham2, t, samples, n_max } => {
            ctx.cocycle(ham, ham2.as_deref(), *t, *samples, *n_max)?
        }
        Command::Maxent { obs, targets } => ctx.maxent(obs, targets)?,
        Command::LegendrianSweep { obs, path_file, from, to, steps } => {
            ctx.sweep(obs, path_file.as_deref(), from.as_deref(), to.as_deref(), *steps)?
        }
        Command::HessianCheck { scale, h1, h2, alpha1, alpha2, fd_step } => {
            ctx.hessian(scale, h1, h2, alpha1.as_deref(), alpha2.as_deref(), *fd_step)?
        }
        Command::Pressure { ham, t, beta, eps, n_list } => ctx.pressure(ham.as_deref(), *t, *beta, *eps, n_list)?,
        Command::GibbsCheck { ham, t, beta, p, eps, n_list, centers } => {
            ctx.gibbs(ham.as_deref(), *t, *beta, *p, *eps, n_list, *centers)?
        }
        Command::Selftest => ctx.selftest()?,
    };
    Ok((cfg, outcome))
}

fn parse_vec(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::InvalidInput(format!("cannot parse number `{v}`")))
        })
        .collect()
}

fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::InvalidInput(format!("cannot parse integer `{v}`"))))
        .collect()
}

/// Multiplier vectors from CSV text; comment lines and a non-numeric
/// header line are skipped.
pub fn parse_path(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_vec(line) {
            Ok(v) => out.push(v),
            Err(_) if i == 0 || out.is_empty() => continue,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput("path file has no rows".into()));
    }
    Ok(out)
}

fn num_cells(v: &[f64]) -> Vec<Cell> {
    v.iter().map(|x| Cell::Num(*x)).collect()
}

struct Ctx {
    cfg: RunConfig,
    model: Arc<ContactModel>,
    grid: Grid,
}

#[derive(Serialize)]
struct ScalarReport {
    value: f64,
}

#[derive(Serialize)]
struct ReebRow {
    x: Vec<f64>,
    reeb: Vec<f64>,
    residual: f64,
}

#[derive(Serialize)]
struct FlowReport {
    start: Vec<f64>,
    endpoint: Vec<f64>,
    g_integrated: f64,
    g_pullback: f64,
    xi_defect: f64,
    potential_gap: f64,
    dissipation_at_start: f64,
}

#[derive(Serialize)]
struct MaxEntReport {
    observables: Vec<String>,
    targets: Vec<f64>,
    solution: MaxEntSummary,
}

#[derive(Serialize)]
struct SweepReport {
    observables: Vec<String>,
    points: usize,
    legendrian: LegendrianReport,
}

#[derive(Serialize)]
struct HessianCheckReport {
    small_value: Option<f64>,
    small_fd_reference: f64,
    small_rel_err: Option<f64>,
    big: HessianReport,
}

#[derive(Serialize)]
struct PressureReport {
    map: String,
    estimate: PressureEstimate,
    variational_bound_zero_entropy: Option<f64>,
}

#[derive(Serialize, Clone)]
struct Check {
    name: String,
    value: f64,
    expected: f64,
    pass: bool,
}

#[derive(Serialize)]
struct SelftestReport {
    checks: Vec<Check>,
    all_passed: bool,
}

impl Ctx {
    fn scalar(&self, src: &str) -> Result<ScalarField> {
        expr::parse(src, self.model.axis_names())
    }

    /// `f·λ₀`, exact when `f` is the constant 1.
    fn form(&self, scale: &str) -> Result<ContactForm> {
        if scale.trim() == "1" {
            return Ok(ContactForm::base(&self.model));
        }
        let lam = ContactForm::scaled(&self.model, self.scalar(scale)?);
        lam.validate(&self.grid)?;
        Ok(lam)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed)
    }

    fn points(&self, list: Option<&str>, count: usize) -> Result<Vec<Vec<f64>>> {
        match list {
            Some(s) => s
                .split(';')
                .map(|p| {
                    let v = parse_vec(p)?;
                    if v.len() != self.model.dim() {
                        return Err(Error::InvalidInput(format!(
                            "point `{p}` has {} coordinates, expected {}",
                            v.len(),
                            self.model.dim()
                        )));
                    }
                    self.model.check_point(&v)?;
                    Ok(v)
                })
                .collect(),
            None => {
                let mut rng = self.rng();
                Ok((0..count).map(|_| samples::random_point(&mut rng, self.model.periods())).collect())
            }
        }
    }

    fn flow_map(&self, lam: &ContactForm, ham: Option<&str>, t: f64) -> Result<FlowMap> {
        match ham {
            Some(h) => FlowMap::new(lam, self.scalar(h)?, t, self.cfg.dt),
            None => FlowMap::reeb(lam, t, self.cfg.dt),
        }
    }

    fn mass(&self, scale: &str) -> Result<Outcome> {
        let v = mass(&self.form(scale)?, &self.grid)?;
        let mut t = Table::new(["mass"]);
        t.push(vec![v.into()]);
        Ok(Outcome { artifact: Artifact::new("mass", t, &ScalarReport { value: v })?, summary: format!("{v}") })
    }

    fn entropy(&self, scale: &str, reference: &str) -> Result<Outcome> {
        let s = relative_entropy(&self.form(scale)?, &self.form(reference)?, &self.grid)?;
        let mut t = Table::new(["relative_entropy"]);
        t.push(vec![s.into()]);
        Ok(Outcome { artifact: Artifact::new("entropy", t, &ScalarReport { value: s })?, summary: format!("{s}") })
    }

    fn reeb(&self, scale: &str, points: Option<&str>, count: usize) -> Result<Outcome> {
        let lam = self.form(scale)?;
        let pts = self.points(points, count)?;
        let d = self.model.dim();
        let axes = self.model.axis_names();
        let header: Vec<String> =
            axes.iter().cloned().chain(axes.iter().map(|a| format!("R_{a}"))).chain(["residual".to_string()]).collect();
        let mut t = Table::new(header);
        let mut rows = Vec::new();
        for x in &pts {
            let (r, res) = reeb_field_with_residual(&lam, x)?;
            let mut row = num_cells(x);
            row.extend(num_cells(&r));
            row.push(res.into());
            t.push(row);
            rows.push(ReebRow { x: x.clone(), reeb: r, residual: res });
        }
        let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
        let summary = format!("{} points, dimension {d}, max residual {worst:e}", rows.len());
        Ok(Outcome { artifact: Artifact::new("reeb", t, &rows)?, summary })
    }

    fn flow(&self, ham: &str, t: f64, point: Option<&str>, scale: &str) -> Result<Outcome> {
        let lam = self.form(scale)?;
        let fm = FlowMap::new(&lam, self.scalar(ham)?, t, self.cfg.dt)?;
        let x = self.points(point, 1)?.remove(0);
        let (end, trace) = flow_point(&fm, &x)?;
        let g_int = *trace.g_values.last().unwrap();
        let cf = conformal_factor_pullback(&lam, &fm, &x)?;
        let report = FlowReport {
            start: x.clone(),
            endpoint: end.clone(),
            g_integrated: g_int,
            g_pullback: cf.f.ln(),
            xi_defect: cf.defect,
            potential_gap: (cf.f.ln() - g_int).abs(),
            dissipation_at_start: dissipation_rate(&lam, fm.hamiltonian(), &x)?,
        };
        let axes = self.model.axis_names();
        let header: Vec<String> = ["t".to_string(), "g".to_string()].into_iter().chain(axes.iter().cloned()).collect();
        let mut table = Table::new(header);
        for k in 0..trace.times.len() {
            let mut row = vec![trace.times[k].into(), trace.g_values[k].into()];
            row.extend(num_cells(&trace.points[k]));
            table.push(row);
        }
        let summary = format!(
            "endpoint {:?}, g integrated {}, g pullback {}, gap {:e}",
            end, report.g_integrated, report.g_pullback, report.potential_gap
        );
        Ok(Outcome { artifact: Artifact::new("flow", table, &report)?, summary })
    }

    fn cocycle(&self, ham: &str, ham2: Option<&str>, t: f64, count: usize, n_max: usize) -> Result<Outcome> {
        let lam = ContactForm::base(&self.model);
        let phi: Arc<dyn Diffeomorphism> = Arc::new(self.flow_map(&lam, Some(ham), t)?);
        let psi: Arc<dyn Diffeomorphism> = Arc::new(self.flow_map(&lam, Some(ham2.unwrap_or(ham)), t)?);
        let pts = self.points(None, count)?;
        let rep: CocycleReport = cocycle_check(&lam, psi, phi, &pts, n_max)?;
        let mut table = Table::new(["N", "iteration_defect", "growth", "g_sup"]);
        for k in 0..n_max {
            table.push(vec![(k + 1).into(), rep.iteration_defects[k].into(), rep.growth[k].into(), rep.g_sup.into()]);
        }
        let summary = format!(
            "composition defect {:e}, max iteration defect {:e}, growth bound {}",
            rep.composition_defect,
            rep.iteration_defects.iter().cloned().fold(0.0, f64::max),
            if rep.growth_bound_holds { "holds" } else { "violated" }
        );
        Ok(Outcome { artifact: Artifact::new("cocycle-check", table, &rep)?, summary })
    }

    fn problem(&self, obs: &str) -> Result<(MaxEntProblem, Vec<String>)> {
        let fields = expr::parse_list(obs, self.model.axis_names())?;
        let labels = fields.iter().map(|f| f.label().to_string()).collect();
        let (lam0, _) = normalize(&ContactForm::base(&self.model), &self.grid)?;
        Ok((MaxEntProblem::new(&lam0, &ObservableSystem::new(fields)?, &self.grid)?, labels))
    }

    fn maxent(&self, obs: &str, targets: &str) -> Result<Outcome> {
        let (prob, labels) = self.problem(obs)?;
        let q = parse_vec(targets)?;
        let sol = prob.solve_for(&q)?;
        let n = q.len();
        let header: Vec<String> = (1..=n)
            .map(|i| format!("p_{i}"))
            .chain((1..=n).map(|i| format!("q_{i}")))
            .chain(["w".into(), "entropy".into(), "iterations".into()])
            .collect();
        let mut t = Table::new(header);
        let mut row = num_cells(&sol.p);
        row.extend(num_cells(&sol.q));
        row.extend([sol.w.into(), sol.entropy.into(), sol.iterations.into()]);
        t.push(row);
        let summary = format!("p = {:?}, w = {}, entropy = {}", sol.p, sol.w, sol.entropy);
        let report = MaxEntReport { observables: labels, targets: q, solution: sol.summary() };
        Ok(Outcome { artifact: Artifact::new("maxent", t, &report)?, summary })
    }

    fn sweep(
        &self,
        obs: &str,
        path_file: Option<&str>,
        from: Option<&str>,
        to: Option<&str>,
        steps: usize,
    ) -> Result<Outcome> {
        let (prob, labels) = self.problem(obs)?;
        let path = match (path_file, from, to) {
            (Some(f), _, _) => parse_path(&fs::read_to_string(f)?)?,
            (None, Some(a), Some(b)) => {
                let (a, b) = (parse_vec(a)?, parse_vec(b)?);
                if a.len() != b.len() || steps == 0 {
                    return Err(Error::InvalidInput("--from and --to need equal length and steps ≥ 1".into()));
                }
                (0..=steps)
                    .map(|k| {
                        let s = k as f64 / steps as f64;
                        a.iter().zip(&b).map(|(u, v)| u + s * (v - u)).collect()
                    })
                    .collect()
            }
            _ => return Err(Error::InvalidInput("give --path-file or both --from and --to".into())),
        };
        let (points, rep) = prob.sweep(&path)?;
        let n = labels.len();
        let header: Vec<String> = (1..=n)
            .map(|i| format!("p_{i}"))
            .chain((1..=n).map(|i| format!("q_{i}")))
            .chain(["z".into(), "residual".into()])
            .collect();
        let mut t = Table::new(header);
        for (k, pt) in points.iter().enumerate() {
            let mut row = num_cells(&pt.p);
            row.extend(num_cells(&pt.q));
            row.push(pt.z.into());
            // Residual of the segment ending at this row.
            row.push(if k == 0 { 0.0 } else { rep.residuals[k - 1] }.into());
            t.push(row);
        }
        let summary = format!("{} points, max Legendrian residual {:e}", points.len(), rep.max_residual);
        let report = SweepReport { observables: labels, points: points.len(), legendrian: rep };
        Ok(Outcome { artifact: Artifact::new("legendrian-sweep", t, &report)?, summary })
    }

    fn variation(&self, lam: &ContactForm, h: &ScalarField, alpha: Option<&str>) -> Result<Variation> {
        match alpha {
            None => Ok(Variation::vertical(h.clone())),
            Some(a) => {
                let comps = expr::parse_list(a, self.model.axis_names())?;
                if comps.len() != self.model.dim() {
                    return Err(Error::InvalidInput(format!("one-form needs {} components", self.model.dim())));
                }
                let alpha = Variation::from_one_form(lam, &OneForm::from_components(comps));
                Ok(Variation { h: h.clone(), y_pi: alpha.y_pi })
            }
        }
    }

    fn hessian(
        &self,
        scale: &str,
        h1: &str,
        h2: &str,
        alpha1: Option<&str>,
        alpha2: Option<&str>,
        fd_step: f64,
    ) -> Result<Outcome> {
        let lam0 = ContactForm::base(&self.model);
        let lam = self.form(scale)?;
        let (f1, f2) = (self.scalar(h1)?, self.scalar(h2)?);
        let small = if lam.is_scale() { Some(hessian_small(&lam0, &lam, &f1, &f2, &self.grid)?) } else { None };
        let small_fd = hessian_fd_reference(
            &lam0,
            &lam,
            &Variation::vertical(f1.clone()),
            &Variation::vertical(f2.clone()),
            &self.grid,
            fd_step,
        )?;
        let (v1, v2) = (self.variation(&lam, &f1, alpha1)?, self.variation(&lam, &f2, alpha2)?);
        let big = hessian_big(&lam0, &lam, &v1, &v2, &self.grid, fd_step)?;
        let report = HessianCheckReport {
            small_value: small,
            small_fd_reference: small_fd,
            small_rel_err: small.map(|s| (s - small_fd).abs() / small_fd.abs().max(f64::MIN_POSITIVE)),
            big,
        };
        let mut t = Table::new(["quantity", "value"]);
        if let Some(s) = small {
            t.push(vec!["small_value".into(), s.into()]);
        }
        t.push(vec!["small_fd_reference".into(), small_fd.into()]);
        t.push(vec!["big_value".into(), report.big.value.into()]);
        t.push(vec!["big_fd_reference".into(), report.big.fd_reference.into()]);
        t.push(vec!["big_rel_err".into(), report.big.rel_err.into()]);
        t.push(vec!["big_symmetry_defect".into(), report.big.symmetry_defect.into()]);
        let summary = format!(
            "small {:?} (fd {}), big {} (fd {}, symmetry defect {:e})",
            small, small_fd, report.big.value, report.big.fd_reference, report.big.symmetry_defect
        );
        Ok(Outcome { artifact: Artifact::new("hessian-check", t, &report)?, summary })
    }

    fn pair(&self, ham: Option<&str>, t: f64) -> Result<ContactPair> {
        ContactPair::from_flow(self.flow_map(&ContactForm::base(&self.model), ham, t)?)
    }

    fn pressure(&self, ham: Option<&str>, t: f64, beta: f64, eps: f64, n_list: &str) -> Result<Outcome> {
        let pair = self.pair(ham, t)?;
        let ns = parse_sizes(n_list)?;
        let cands: Vec<Vec<f64>> = self.grid.nodes().collect();
        let est = pressure_estimate(&pair, beta, eps, &ns, &cands)?;
        let mut table = Table::new(["N", "set_size", "Z_N", "log_Z_N", "rate"]);
        for r in &est.per_n {
            table.push(vec![r.n.into(), r.set_size.into(), r.z.into(), r.log_z.into(), r.rate.into()]);
        }
        let summary = format!(
            "finite-N pressure estimate {} at N = {} (nonincreasing: {})",
            est.extrapolated,
            ns.last().unwrap(),
            est.monotone
        );
        let report = PressureReport { map: pair.map().label(), estimate: est, variational_bound_zero_entropy: None };
        Ok(Outcome { artifact: Artifact::new("pressure", table, &report)?, summary })
    }

    #[allow(clippy::too_many_arguments)]
    fn gibbs(
        &self,
        ham: Option<&str>,
        t: f64,
        beta: f64,
        p: f64,
        eps: f64,
        n_list: &str,
        centers: usize,
    ) -> Result<Outcome> {
        let pair = self.pair(ham, t)?;
        let ns = parse_sizes(n_list)?;
        let lam = pair.form().clone();
        let v = mass(&lam, &self.grid)?;
        let mu = ScalarField::new("μ/V", move |x| lam.density(x).unwrap_or(f64::NAN) / v);
        let pts = self.points(None, centers)?;
        let rep: GibbsReport = gibbs_diagnostic(&pair, &mu, beta, p, eps, &ns, &pts, &self.grid)?;
        let axes = self.model.axis_names();
        let header: Vec<String> =
            axes.iter().cloned().chain(["N", "nodes", "ball_mass", "ratio"].iter().map(|s| s.to_string())).collect();
        let mut table = Table::new(header);
        for s in &rep.samples {
            let mut row = num_cells(&s.center);
            row.extend([s.n.into(), s.nodes.into(), s.ball_mass.into(), s.ratio.into()]);
            table.push(row);
        }
        let summary = format!("Gibbs ratios in [{}, {}]", rep.ratio_min, rep.ratio_max);
        Ok(Outcome { artifact: Artifact::new("gibbs-check", table, &rep)?, summary })
    }

    fn selftest(&self) -> Result<Outcome> {
        let checks = selftest_checks(&self.model, &self.grid)?;
        let all_passed = checks.iter().all(|c| c.pass);
        let mut t = Table::new(["check", "value", "expected", "pass"]);
        for c in &checks {
            t.push(vec![c.name.as_str().into(), c.value.into(), c.expected.into(), (c.pass as usize).into()]);
        }
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        let summary = if failed.is_empty() {
            format!("{} checks passed", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        };
        let artifact = Artifact::new("selftest", t, &SelftestReport { checks, all_passed })?;
        if !all_passed {
            return Err(Error::InvalidInput(summary));
        }
        Ok(Outcome { artifact, summary })
    }
}

fn check(name: &str, value: f64, expected: f64, tol: f64) -> Check {
    Check { name: name.into(), value, expected, pass: (value - expected).abs() <= tol }
}

fn selftest_checks(model: &Arc<ContactModel>, grid: &Grid) -> Result<Vec<Check>> {
    let d = model.dim();
    let lam = ContactForm::base(model);
    let origin = vec![0.0; d];
    let mut out = Vec::new();

    let (r, res) = reeb_field_with_residual(&lam, &origin)?;
    out.push(check("reeb_residual_at_origin", res, 0.0, 1e-10));
    out.push(check("reeb_evaluates_form_to_one", lam.frame(&origin)?.eval_form(&r), 1.0, 1e-12));

    let v = mass(&lam, grid)?;
    out.push(check("mass_positive", (v > 0.0) as usize as f64, 1.0, 0.0));
    out.push(check("self_entropy", relative_entropy(&lam, &lam, grid)?, 0.0, 0.0));
    out.push(check("doubled_mass", mass(&lam.times(2.0), grid)? / v, 2f64.powi(model.n() as i32 + 1), 1e-12));

    let h = samples::cos2pi(0, 1.0);
    let fm = FlowMap::new(&lam, h.clone(), 0.0, 1e-3)?;
    let (end, trace) = flow_point(&fm, &[0.2; 1].repeat(d))?;
    out.push(check(
        "zero_time_flow",
        crate::linalg::max_abs(&end.iter().map(|v| v - 0.2).collect::<Vec<_>>()),
        0.0,
        0.0,
    ));
    out.push(check("zero_time_potential", trace.g_values[0], 0.0, 0.0));
    out.push(check(
        "constant_hamiltonian_dissipation",
        dissipation_rate(&lam, &ScalarField::constant(3.0, d), &origin)?,
        0.0,
        0.0,
    ));

    let id: Arc<dyn Diffeomorphism> = Arc::new(Identity { dim: d });
    let cc = cocycle_check(&lam, id.clone(), id.clone(), &validation_sample(model.periods(), 3), 2)?;
    out.push(check("identity_cocycle", cc.composition_defect, 0.0, 0.0));

    let (lam0, _) = normalize(&lam, grid)?;
    let prob = MaxEntProblem::new(&lam0, &ObservableSystem::new(vec![h.clone()])?, grid)?;
    let lp = prob.log_partition(&[0.0])?;
    out.push(check("log_partition_at_zero", lp.w, 0.0, 1e-12));
    let sol = prob.solve_for(&lp.q)?;
    out.push(check("uniform_equilibrium_multiplier", sol.p[0], 0.0, 1e-12));
    out.push(check("uniform_equilibrium_entropy", sol.entropy, 0.0, 1e-12));
    let unattainable = matches!(prob.solve_for(&[9.9]), Err(Error::NotAttainable(_)));
    out.push(check("target_outside_moment_range", unattainable as usize as f64, 1.0, 0.0));
    let (_, sweep) = prob.sweep(&vec![vec![0.5]; 4])?;
    out.push(check("constant_path_residual", sweep.max_residual, 0.0, 0.0));

    let big = crate::entropy::hessian_big_value(
        &lam0,
        &lam0,
        &Variation::vertical(h.clone()),
        &Variation::vertical(h.clone()),
        grid,
    )?;
    let small = hessian_small(&lam0, &lam0, &h, &h, grid)?;
    out.push(check("big_hessian_vertical_equals_small", big - small, 0.0, 0.0));

    let pair = ContactPair::new(&lam, id)?;
    let cands: Vec<Vec<f64>> = grid.nodes().step_by(grid.len() / 64).collect();
    let table = OrbitTable::new(&pair, cands, 2)?;
    out.push(check("wide_separated_set", table.separated(1, 10.0)?.len() as f64, 1.0, 0.0));
    let (z, _, k) = table.partition(2, 0.3, 0.0)?;
    out.push(check("counting_partition_function", z, k as f64, 0.0));
    let est = crate::pressure::pressure_from_table(&table, 0.0, 0.3, &[1, 2])?;
    out.push(check("identity_rates_nonincreasing", est.monotone as usize as f64, 1.0, 0.0));
    let nu = ScalarField::constant(1.0 / grid.volume(), d);
    out.push(check("zero_beta_variational_bound", variational_bound(&pair, &nu, 0.25, 0.0, grid)?, 0.25, 0.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<String> =
            std::iter::once("contact-thermo").chain(args.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with_io(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn mass_prints_two_pi() {
        let (code, out, _) = run_capture(&["mass", "--model", "torus3"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("6.28318"), "{out}");
    }

    #[test]
    fn unattainable_target_exits_two() {
        let (code, _, err) = run_capture(&["maxent", "--obs", "cos2pix", "--targets", "9.9"]);
        assert_eq!(code, 2);
        assert!(err.contains("not attainable"), "{err}");
    }

    #[test]
    fn unknown_subcommand_and_bad_config() {
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&["mass", "--set", "tol.conf=-1"]).0, 2);
        assert_eq!(run_capture(&["mass", "--resolution", "8"]).0, 2);
        assert_eq!(run_capture(&["mass", "--model", "sphere"]).0, 2);
        assert_eq!(run_capture(&["mass", "--config", "/nonexistent/cfg"]).0, 1);
    }

    #[test]
    fn artifact_to_stdout() {
        let (code, out, _) = run_capture(&["mass", "--emit", "-", "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["command"], "mass");
        assert!((v["report"]["value"].as_f64().unwrap() - std::f64::consts::TAU).abs() < 1e-12);
    }

    #[test]
    fn path_parsing() {
        let p = parse_path("# comment\np_1,p_2\n0,1\n0.5,1.5\n").unwrap();
        assert_eq!(p, vec![vec![0.0, 1.0], vec![0.5, 1.5]]);
        assert!(parse_path("0,1\nx,y\n").is_err());
    }
}
