use std::io::Write;
use std::path::Path;
use std::time::Instant;

use mclose_core::closure::close_system;
use mclose_core::expr::{parse_model, render_model};
use mclose_core::momentgen::build_open_system;
use mclose_core::sim::{euler_maruyama, initial_moments, integrate_closed};
use mclose_core::{models, ClosedMomentSystem, McEstimate, SdeModel, Trajectory};

use crate::output::{mc_csv, trajectory_csv};
use crate::report::CompareReport;
use crate::{CliError, Command, Opts, RunConfig};

/// A parsed model with its default initial state, if it has one.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: SdeModel,
    pub default_x0: Option<Vec<f64>>,
}

/// Reads `model` as a file, falling back to a bundled model of that name.
pub fn load_model(model: &str) -> Result<LoadedModel, CliError> {
    let path = Path::new(model);
    let (text, name) = if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Read {
            path: model.to_string(),
            message: e.to_string(),
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(model).to_string();
        (text, stem)
    } else if let Some(b) = models::bundled(model) {
        (b.source.to_string(), b.name.to_string())
    } else {
        return Err(CliError::NotFound(model.to_string()));
    };
    let model = parse_model(&text)
        .map_err(|source| CliError::Parse {
            path: model.to_string(),
            source,
        })?
        .with_name(name.clone());
    let default_x0 = models::bundled(&name)
        .filter(|b| b.x0.len() == model.space().dim())
        .map(|b| b.x0.to_vec());
    Ok(LoadedModel { model, default_x0 })
}

fn initial_state(loaded: &LoadedModel, opts: &Opts) -> Result<Vec<f64>, CliError> {
    let x0 = match (&opts.x0, &loaded.default_x0) {
        (Some(x), _) => x.clone(),
        (None, Some(x)) => x.clone(),
        (None, None) => return Err(CliError::Usage("no default initial state for this model; pass --x0".into())),
    };
    let dim = loaded.model.space().dim();
    if x0.len() != dim {
        return Err(CliError::Usage(format!("--x0 has {} entries, model has {dim} states", x0.len())));
    }
    Ok(x0)
}

fn closed_system(model: &SdeModel, cfg: &RunConfig) -> Result<ClosedMomentSystem, CliError> {
    let open = build_open_system(model, cfg.order)?;
    Ok(close_system(open, cfg.scheme, cfg.delta)?)
}

pub fn execute(cli: &crate::Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let opts = cli.command.opts();
    let loaded = load_model(&opts.model)?;
    match &cli.command {
        Command::Parse(_) => cmd_parse(&loaded.model, out),
        Command::Moments(o) => cmd_moments(&loaded.model, o, out),
        Command::Close(o) => cmd_close(&loaded.model, &RunConfig::from_opts(o)?, out),
        Command::Run(o) => {
            let cfg = RunConfig::from_opts(o)?;
            let x0 = initial_state(&loaded, o)?;
            let traj = run_closed(&loaded.model, &x0, &cfg)?;
            emit(cfg.out.as_deref(), &trajectory_csv(&traj, loaded.model.space(), cfg.imag)?, out)
        }
        Command::Mc(o) => {
            let cfg = RunConfig::from_opts(o)?;
            let x0 = initial_state(&loaded, o)?;
            let basis = loaded
                .model
                .space()
                .enumerate_upto(cfg.order)
                .map_err(|e| CliError::Model(e.to_string()))?;
            let est = euler_maruyama(&loaded.model, &x0, &cfg.mc_config(), &basis)?;
            emit(cfg.out.as_deref(), &mc_csv(&est, loaded.model.space(), cfg.imag)?, out)
        }
        Command::Compare(o) => {
            let cfg = RunConfig::from_opts(o)?;
            let x0 = initial_state(&loaded, o)?;
            let (traj, est, report) = compare(&loaded.model, &x0, &cfg)?;
            let text = report.render();
            if let Some(dir) = &cfg.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("closed.csv"), trajectory_csv(&traj, loaded.model.space(), cfg.imag)?)?;
                std::fs::write(dir.join("mc.csv"), mc_csv(&est, loaded.model.space(), cfg.imag)?)?;
                std::fs::write(dir.join("report.txt"), &text)?;
            }
            eprintln!(
                "runtime: closed {:.3} s, monte carlo {:.3} s",
                report.closed_seconds, report.mc_seconds
            );
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_parse(model: &SdeModel, out: &mut dyn Write) -> Result<(), CliError> {
    let space = model.space();
    writeln!(
        out,
        "# {}: {} states, {} params, {} drifts, {} noise entries",
        model.name,
        space.dim(),
        model.params().len(),
        (0..space.dim()).filter(|&i| !model.drift(i).is_zero()).count(),
        model.noise_entries()
    )?;
    out.write_all(render_model(model).as_bytes())?;
    Ok(())
}

fn cmd_moments(model: &SdeModel, opts: &Opts, out: &mut dyn Write) -> Result<(), CliError> {
    if opts.order == 0 {
        return Err(CliError::Usage("--order must be at least 1".into()));
    }
    let open = build_open_system(model, opts.order)?;
    let space = open.space();
    writeln!(
        out,
        "# {}: order {}, {} equations, {} higher moments",
        model.name,
        open.order(),
        open.basis().len(),
        open.higher().len()
    )?;
    writeln!(out, "basis:")?;
    for idx in open.basis() {
        writeln!(out, "  {}", space.moment_label(idx))?;
    }
    writeln!(out, "equations:")?;
    out.write_all(open.render_equations().as_bytes())?;
    writeln!(out, "higher:")?;
    if open.higher().is_empty() {
        writeln!(out, "  (none)")?;
    }
    for idx in open.higher() {
        writeln!(out, "  {}", space.moment_label(idx))?;
    }
    Ok(())
}

fn cmd_close(model: &SdeModel, cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let closed = closed_system(model, cfg)?;
    let open = closed.open();
    let space = open.space();
    let labels: Vec<String> = open.basis().iter().map(|b| space.moment_label(b)).collect();
    writeln!(
        out,
        "# {}: {} closure, order {}, {} basis moments, {} closed moments",
        model.name,
        cfg.scheme.short_name(),
        open.order(),
        open.basis().len(),
        closed.rules().len()
    )?;
    writeln!(out, "basis: {}", labels.join(", "))?;
    for rule in closed.rules() {
        writeln!(out, "{}", rule.render(space, open.basis()))?;
        let exps: Vec<String> = rule.exponents.iter().map(|&a| format_exponent(a)).collect();
        writeln!(out, "  exponents: ({})", exps.join(", "))?;
        if rule.system_dim > 0 {
            writeln!(out, "  system: {0}x{0}", rule.system_dim)?;
        }
    }
    Ok(())
}

fn format_exponent(a: f64) -> String {
    if a.fract() == 0.0 {
        format!("{}", a as i64)
    } else {
        format!("{a}")
    }
}

fn run_closed(model: &SdeModel, x0: &[f64], cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let closed = closed_system(model, cfg)?;
    let nu0 = initial_moments(model.space(), x0, closed.open().basis());
    Ok(integrate_closed(&closed, &nu0, cfg.t0, cfg.t1, cfg.dt, cfg.save_every)?)
}

/// Closed trajectory and Monte Carlo estimate on one grid, with their comparison.
pub fn compare(model: &SdeModel, x0: &[f64], cfg: &RunConfig) -> Result<(Trajectory, McEstimate, CompareReport), CliError> {
    let start = Instant::now();
    let traj = run_closed(model, x0, cfg)?;
    let closed_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let est = euler_maruyama(model, x0, &cfg.mc_config(), &traj.basis)?;
    let mc_seconds = start.elapsed().as_secs_f64();

    let mut report = CompareReport::new(model, cfg, &traj, &est);
    report.closed_seconds = closed_seconds;
    report.mc_seconds = mc_seconds;
    Ok((traj, est, report))
}
