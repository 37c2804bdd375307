mod config;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sharpmp::adversarial::{self, build_verified, read_instance_file, reconstruct, ConstructionParams};
use sharpmp::analysis::{comparison_csv, compare};
use sharpmp::constants::{solve_beta_star, tau_star};
use sharpmp::grid::Extension;
use sharpmp::integral_equation::{bracket_sequence, sample_g, solve_f};
use sharpmp::report::VERSION;
use sharpmp::{
    bundle, check_bounds, check_conditions, fit_decay, run, solve_gamma, Algorithm, ConditionMode, Error,
    GreedyTrace, GridFunction, PhiProfile, Report, VerifyOptions,
};

use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "sharpmp", version, about = "Matching pursuit and a worst-case dictionary for it")]
struct Cli {
    /// Flat key=value file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate constants for a shrinkage value and the parameter inequalities.
    Constants {
        #[arg(long, default_value_t = 1.0)]
        shrinkage: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the integral equation; writes f0..f3 and the converged f.
    SolveF {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Mollify and normalize f into the profile φ.
    MakePhi {
        #[arg(long, default_value = "f.csv")]
        input: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Build and verify an adversarial instance.
    Build {
        #[arg(long, default_value = "phi.csv")]
        phi: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Replay an instance file and check every selection inequality.
    Verify {
        #[arg(long, default_value = "instance.txt")]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a greedy algorithm on an instance.
    Run {
        #[arg(long, default_value = "instance.txt")]
        instance: PathBuf,
        #[arg(long, default_value = "pga")]
        algorithm: String,
        #[arg(long, default_value_t = 1.0)]
        shrinkage: f64,
        /// Defaults to n_max − N.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several algorithms on one instance and tabulate their decay.
    Compare {
        #[arg(long, default_value = "instance.txt")]
        instance: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "pga,oga")]
        algorithms: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        shrinkage: f64,
        #[arg(long, default_value_t = 500)]
        fit_min: usize,
        #[arg(long, default_value_t = 5000)]
        fit_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the decay exponent of a trace.
    Rate {
        #[arg(long, default_value = "trace.csv")]
        trace: PathBuf,
        #[arg(long, default_value_t = 500)]
        fit_min: usize,
        #[arg(long, default_value_t = 5000)]
        fit_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot trace CSVs (log-log) or grid CSVs (linear) to SVG.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
        #[arg(long, default_value = "")]
        title: String,
    },
}

/// Failures that map to exit code 3 without a library error.
#[derive(Debug)]
struct Rejected(String);

enum Failure {
    Lib(Error),
    Rejected(Rejected),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) | Error::Io(_) => 1,
        Error::ConditionFailed { .. }
        | Error::IncreaseN
        | Error::ProfileRejected(_)
        | Error::PhiSupportMissesResidual(_)
        | Error::XiImaginary { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = Config::resolve(cli.config.as_deref(), &cli.overrides)
        .map_err(Failure::from)
        .and_then(|cfg| dispatch(&cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Rejected(Rejected(msg))) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: &Command, cfg: &Config) -> CmdResult {
    match cmd {
        Command::Constants { shrinkage, out } => cmd_constants(cfg, *shrinkage, out.as_deref()),
        Command::SolveF { out_dir } => cmd_solve_f(cfg, out_dir.as_deref()),
        Command::MakePhi { input, out_dir } => cmd_make_phi(cfg, input, out_dir.as_deref()),
        Command::Build { phi, out_dir } => cmd_build(cfg, phi, out_dir.as_deref()),
        Command::Verify { instance, out } => cmd_verify(cfg, instance, out.as_deref()),
        Command::Run { instance, algorithm, shrinkage, steps, out } => {
            cmd_run(cfg, instance, algorithm, *shrinkage, *steps, out.as_deref())
        }
        Command::Compare { instance, algorithms, shrinkage, fit_min, fit_max, out } => {
            cmd_compare(cfg, instance, algorithms, *shrinkage, (*fit_min, *fit_max), out.as_deref())
        }
        Command::Rate { trace, fit_min, fit_max, out } => cmd_rate(cfg, trace, (*fit_min, *fit_max), out.as_deref()),
        Command::Plot { inputs, out, title } => cmd_plot(inputs, out, title),
    }
}

/// `version`, `command`, then the resolved config under `config.`.
fn header(cfg: &Config, command: &str) -> Report {
    let mut r = Report::new();
    r.push("version", VERSION).push("command", command).extend("config", &cfg.to_report());
    r
}

fn write(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)
}

fn read(path: &Path) -> std::result::Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn cmd_constants(cfg: &Config, s: f64, out: Option<&Path>) -> CmdResult {
    let rate = solve_gamma(s)?;
    let beta_star = solve_beta_star()?;
    let (beta, tau) = cfg.operating_point().resolve()?;
    let b = bundle(beta, tau)?;
    let mut r = header(cfg, "constants");
    r.num("s", s)
        .num("gamma", rate.gamma)
        .num("alpha", rate.alpha)
        .num("gamma_residual", rate.residual)
        .num("beta_star", beta_star)
        .num("tau_star", tau_star(beta_star))
        .num("beta", beta)
        .num("tau", tau)
        .num("c", b.c)
        .num("R_G", b.rg)
        .num("R_G_argmax", b.rg_argmax)
        .num("R_G_scan", b.rg_scan);
    for m in &b.margins {
        r.num(format!("margins.{}.lhs", m.name), m.lhs)
            .num(format!("margins.{}.bound", m.name), m.bound)
            .num(format!("margins.{}.slack", m.name), m.slack())
            .push(format!("margins.{}.strict", m.name), m.strict());
    }
    r.push("all_strict", b.all_strict());
    let text = r.to_text();
    write(&cfg.path(out, "constants_out", "constants.txt"), &text)?;
    print!("{text}");
    if b.all_strict() {
        Ok(())
    } else {
        Err(Failure::Rejected(Rejected("parameter inequalities not strict at the operating point".into())))
    }
}

fn cmd_solve_f(cfg: &Config, out_dir: Option<&Path>) -> CmdResult {
    let dir = cfg.path(out_dir, "out_dir", ".");
    let (beta, tau) = cfg.operating_point().resolve()?;
    let g = sample_g(&bundle(beta, tau)?, cfg.m)?;
    let mut head = header(cfg, "solve-f");
    head.num("beta", beta).num("tau", tau);

    let early = bracket_sequence(&g, tau, 4)?;
    for (j, f) in early.iterates.iter().take(4).enumerate() {
        let mut h = head.clone();
        h.push("iterate", j);
        write(&dir.join(format!("f{j}.csv")), &f.to_csv(&h))?;
    }
    let rep = solve_f(&g, tau, cfg.tol, cfg.max_iter)?;
    write(&dir.join("f.csv"), &rep.converged_f.to_csv(&head))?;

    let mut r = head.clone();
    r.push("iterations", rep.iterations)
        .num("residual_sup", rep.residual_sup)
        .num("bracket_width", rep.bracket_width)
        .num("R_G", rep.rg)
        .num("derivative_sup", rep.derivative_sup)
        .num("derivative_bound", rep.derivative_bound)
        .num("f3_min", early.f3_min)
        .push("bracket_inequalities", early.bracket_inequalities);
    write(&dir.join("solve_f.txt"), &r.to_text())?;
    if early.f3_min > 0.0 && early.bracket_inequalities {
        Ok(())
    } else {
        Err(Failure::Rejected(Rejected(format!("f3 min {} or bracket inequalities fail", early.f3_min))))
    }
}

fn cmd_make_phi(cfg: &Config, input: &Path, out_dir: Option<&Path>) -> CmdResult {
    let dir = cfg.path(out_dir, "out_dir", ".");
    let (f, fh) = GridFunction::from_csv(&read(input)?)?;
    let f = f.with_extension(Extension::ZeroBelowConstAbove);
    let (beta, tau) = (fh.get_f64("beta")?, fh.get_f64("tau")?);
    let f_form = check_conditions(&f, beta, tau, ConditionMode::F);
    let profile = sharpmp::build_phi(&f, beta, tau, cfg.t, cfg.m)?;

    let mut head = header(cfg, "make-phi");
    head.num("beta", beta).num("tau", tau).num("t", profile.t).num("C_t", profile.c_t).num("delta", profile.delta);
    write(&dir.join("phi.csv"), &profile.phi.to_csv(&head))?;

    let mut r = head.clone();
    r.extend("f_form", &f_form.to_report());
    if let Some(c) = &profile.conditions {
        r.extend("phi_form", &c.to_report());
    }
    r.push("f_form_pass", f_form.passes());
    write(&dir.join("phi_conditions.txt"), &r.to_text())?;
    if f_form.passes() {
        Ok(())
    } else {
        Err(Failure::Rejected(Rejected("f fails its integral inequalities".into())))
    }
}

fn cmd_build(cfg: &Config, phi_path: &Path, out_dir: Option<&Path>) -> CmdResult {
    let dir = cfg.path(out_dir, "out_dir", ".");
    let (grid, ph) = GridFunction::from_csv(&read(phi_path)?)?;
    let phi = PhiProfile::from_parts(grid, ph.get_f64("t")?, ph.get_f64("C_t")?, ph.get_f64("beta")?, ph.get_f64("tau")?);
    let mut params = ConstructionParams::new(phi, cfg.k, cfg.n, cfg.n_max);
    params.epsilon = cfg.epsilon;
    let outcome = build_verified(&params, &VerifyOptions::for_size(cfg.n_max, cfg.seed))?;
    let inst = &outcome.instance;
    let head = header(cfg, "build");
    write(&dir.join("instance.txt"), &adversarial::to_instance_file(inst, &head))?;

    let mut r = head;
    r.push("K", inst.k())
        .push("N", inst.big_n())
        .push("n_max", inst.n_max())
        .num("epsilon", inst.epsilon)
        .num("variation_bound", inst.variation_bound)
        .push("doublings", outcome.rejected.len());
    for (i, why) in outcome.rejected.iter().enumerate() {
        r.push(format!("rejected.{i}"), why);
    }
    r.extend("verification", &outcome.verification.to_report());
    write(&dir.join("build.txt"), &r.to_text())?;
    Ok(())
}

fn load_instance(path: &Path) -> std::result::Result<sharpmp::AdversarialInstance, Error> {
    reconstruct(&read_instance_file(&read(path)?)?)
}

fn cmd_verify(cfg: &Config, path: &Path, out: Option<&Path>) -> CmdResult {
    let inst = load_instance(path)?;
    let rep = adversarial::verify(&inst, &VerifyOptions::for_size(inst.n_max(), cfg.seed));
    let mut r = header(cfg, "verify");
    r.extend("verification", &rep.to_report()).push("pass", rep.passes());
    let text = r.to_text();
    write(&cfg.path(out, "verify_out", "verify.txt"), &text)?;
    if rep.passes() {
        println!("min_margin={}", sharpmp::report::fmt_f64(rep.min_margin));
        Ok(())
    } else {
        Err(Failure::Rejected(Rejected(format!(
            "min margin {:e}, construction diagnostics ok={}",
            rep.min_margin,
            rep.construction.ok()
        ))))
    }
}

fn instance_header(cfg: &Config, command: &str, inst: &sharpmp::AdversarialInstance) -> Report {
    let mut h = header(cfg, command);
    h.num("beta", inst.beta()).push("N", inst.big_n()).num("variation_bound", inst.variation_bound);
    h
}

fn cmd_run(
    cfg: &Config,
    path: &Path,
    algorithm: &str,
    shrinkage: f64,
    steps: Option<usize>,
    out: Option<&Path>,
) -> CmdResult {
    let alg = Algorithm::parse(algorithm, shrinkage)?;
    if let Algorithm::PgaShrink(s) = alg {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidArgument(format!("shrinkage {s} not in (0, 1]")).into());
        }
    }
    let inst = load_instance(path)?;
    let steps = steps.unwrap_or(inst.n_max() - inst.big_n());
    let dict = if alg == Algorithm::Oga { inst.dictionary.clone().with_gram() } else { inst.dictionary.clone() };
    let mut trace = run(alg, &inst.f, &dict, steps, inst.variation_bound)?;
    trace.index_offset = inst.big_n();
    let text = trace.to_csv(&instance_header(cfg, "run", &inst));
    write(&cfg.path(out, "trace_out", "trace.csv"), &text)?;
    Ok(())
}

fn cmd_compare(
    cfg: &Config,
    path: &Path,
    algorithms: &[String],
    shrinkage: f64,
    fit: (usize, usize),
    out: Option<&Path>,
) -> CmdResult {
    let algs = algorithms.iter().map(|a| Algorithm::parse(a, shrinkage)).collect::<Result<Vec<_>, _>>()?;
    let inst = load_instance(path)?;
    let dict = if algs.contains(&Algorithm::Oga) { inst.dictionary.clone().with_gram() } else { inst.dictionary.clone() };
    let steps = inst.n_max() - inst.big_n();
    let rows = compare(&inst.f, &dict, &algs, steps, inst.variation_bound, inst.big_n(), fit)?;
    let mut h = instance_header(cfg, "compare", &inst);
    h.push("fit_min", fit.0).push("fit_max", fit.1);
    write(&cfg.path(out, "compare_out", "comparison.csv"), &comparison_csv(&rows, &h))?;
    Ok(())
}

fn cmd_rate(cfg: &Config, path: &Path, fit: (usize, usize), out: Option<&Path>) -> CmdResult {
    let (trace, th) = GreedyTrace::from_csv(&read(path)?)?;
    let beta = th.get_f64("beta")?;
    let vb = th.get_f64("variation_bound")?;
    let rf = fit_decay(&trace, fit.0, fit.1)?;
    let expected = -(0.5 - beta);
    let bounds = check_bounds(&trace, 0.5 - beta, vb);
    let mut r = header(cfg, "rate");
    r.push("algorithm", trace.algorithm.tag())
        .num("beta", beta)
        .extend("fit", &rf.to_report())
        .num("expected_slope", expected)
        .num("slope_error", rf.slope - expected)
        .extend("bounds", &bounds.to_report());
    let text = r.to_text();
    write(&cfg.path(out, "rate_out", "rate.txt"), &text)?;
    println!("slope={} expected={}", sharpmp::report::fmt_f64(rf.slope), sharpmp::report::fmt_f64(expected));
    Ok(())
}

fn is_trace(text: &str) -> bool {
    text.lines().any(|l| l.trim() == "n,residual_norm,atom_id,sign,coefficient")
}

fn cmd_plot(inputs: &[PathBuf], out: &Path, title: &str) -> CmdResult {
    let texts = inputs.iter().map(|p| read(p)).collect::<Result<Vec<_>, _>>()?;
    let traces = texts.iter().filter(|t| is_trace(t)).count();
    if traces != 0 && traces != texts.len() {
        return Err(Error::InvalidArgument("cannot mix trace and grid CSVs in one plot".into()).into());
    }
    let log_log = traces > 0;
    let mut series = Vec::new();
    for (p, text) in inputs.iter().zip(&texts) {
        let label = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let points = if log_log {
            let (t, _) = GreedyTrace::from_csv(text)?;
            t.steps.iter().map(|s| ((t.index_offset + s.step_index) as f64, s.residual_norm)).collect()
        } else {
            let (g, _) = GridFunction::from_csv(text)?;
            (0..g.len()).map(|i| (g.x(i), g.values()[i])).collect()
        };
        series.push(svg::Series { label, points });
    }
    let mut comment = Report::new();
    comment.push("version", VERSION).push("command", "plot").push("log_log", log_log);
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    comment.push("series", labels.join(" "));
    write(out, &svg::render(&series, log_log, title, &comment.to_text()))?;
    Ok(())
}
