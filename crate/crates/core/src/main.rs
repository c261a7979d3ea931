use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qflow::integrator::{self, Perturbation, Trajectory};
use qflow::io::{self, InitSpec, IoError, RunConfig};
use qflow::paracalc::{self, DyadicPartition, NormSpec};
use qflow::random::Spectrum;
use qflow::verify::{self, Report, VerifyError};
use qflow::{State, VelocityField};

#[derive(Parser)]
#[command(name = "qflow", version, about = "Q-tensor / Navier-Stokes solver and estimate checker")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a simulation and write series, snapshots and the config to a run directory.
    Simulate {
        config: PathBuf,
        /// Output directory, overriding `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured state and a perturbed copy side by side and record their difference.
    Twin {
        config: PathBuf,
        /// RMS size of the perturbation; 0 gives identical twins.
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run checks on a finished run directory.
    Analyze {
        rundir: PathBuf,
        /// energy, lp, osgood, uniqueness, difference-regularity or all.
        #[arg(long, default_value = "all")]
        check: String,
        /// Regularity index of the Osgood check.
        #[arg(long, default_value_t = 0.5)]
        s: f64,
    },
    /// Run a seeded random-ensemble check.
    Check {
        /// One of the lemma names listed by `--help`, or all.
        lemma: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print Besov norms of a snapshot.
    Norms {
        snapshot: PathBuf,
        /// `s,p,r`; `p` and `r` accept `inf`.
        #[arg(long, default_value = "0,2,2", allow_hyphen_values = true)]
        spec: String,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Other(String),
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("QFLOW_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => eprintln!("ignoring QFLOW_THREADS={v}: expected a positive integer"),
        }
    }
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate { config, out } => simulate(&config, out),
        Cmd::Twin { config, eps, seed, out } => twin(&config, eps, seed, out),
        Cmd::Analyze { rundir, check, s } => analyze(&rundir, &check, s),
        Cmd::Check { lemma, trials, seed } => check(&lemma, trials, seed),
        Cmd::Norms { snapshot, spec } => norms(&snapshot, &spec),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn config_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn output_dir(cfg: &RunConfig, config: &Path, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| {
        if cfg.output.dir.is_absolute() {
            cfg.output.dir.clone()
        } else {
            config_dir(config).join(&cfg.output.dir)
        }
    })
}

fn prepare(config: &Path, out: Option<PathBuf>) -> Result<(RunConfig, State, PathBuf), CliError> {
    let cfg = io::load_config(config)?;
    let init = io::initial_state(&cfg, &config_dir(config))?;
    let dir = output_dir(&cfg, config, out);
    io::create_dir(&dir)?;
    let text = std::fs::read_to_string(config).map_err(|e| CliError::Other(format!("{}: {e}", config.display())))?;
    io::write_text(&dir.join(io::CONFIG_FILE), &text)?;
    Ok((cfg, init, dir))
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), CliError> {
    if !traj.series.is_empty() && !traj.series.names.is_empty() {
        io::emit_series(&traj.series, &dir.join(io::SERIES_FILE))?;
    }
    let params = traj.params.as_array();
    for (k, s) in traj.states.iter().enumerate() {
        io::write_snapshot(s, &params, &dir.join(io::snapshot_name("snap", k)))?;
    }
    Ok(())
}

fn simulate(config: &Path, out: Option<PathBuf>) -> Result<bool, CliError> {
    let (cfg, init, dir) = prepare(config, out)?;
    match integrator::run(&init, &cfg.params, &cfg.time, &cfg.output.probes, cfg.output.stride) {
        Ok(traj) => {
            write_trajectory(&dir, &traj)?;
            let last = traj.last();
            println!(
                "reached t = {} after {} samples; energy {:.6e}; wrote {}",
                last.t,
                traj.series.len().max(1) - 1,
                integrator::energy(last, &cfg.params),
                dir.display()
            );
            Ok(true)
        }
        Err(fail) => {
            write_trajectory(&dir, &fail.partial)?;
            Err(CliError::Other(format!("run stopped: {} (partial output in {})", fail.error, dir.display())))
        }
    }
}

fn twin(config: &Path, eps: f64, seed: u64, out: Option<PathBuf>) -> Result<bool, CliError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(CliError::Other(format!("--eps must be finite and non-negative, got {eps}")));
    }
    let (cfg, init, dir) = prepare(config, out)?;
    let spectrum = match &cfg.init {
        InitSpec::Preset { spectrum, .. } => *spectrum,
        InitSpec::Snapshot(_) => Spectrum::new(1.0, 8.0, 1.0),
    };
    let pert = Perturbation { eps, seed, spectrum };
    let diff = integrator::twin_run(&init, &pert, &cfg.params, &cfg.time, cfg.output.stride)
        .map_err(|e| CliError::Other(format!("twin run stopped: {e}")))?;
    io::emit_series(&diff.to_series(), &dir.join(io::TWIN_FILE))?;
    let params = cfg.params.as_array();
    for (k, (t, du, dq)) in diff.snapshots.iter().enumerate() {
        let s = State::new(
            VelocityField::from_spectral(du.clone()),
            qflow::QTensorField::from_spectral(dq.clone()),
            *t,
        );
        io::write_snapshot(&s, &params, &dir.join(io::snapshot_name("diff", k)))?;
    }
    let phi = diff.phi();
    println!(
        "difference functional: initial {:.6e}, final {:.6e}, max {:.6e}; wrote {}",
        phi[0],
        phi[phi.len() - 1],
        phi.iter().copied().fold(0.0, f64::max),
        dir.display()
    );
    Ok(true)
}

const ANALYSES: &[&str] = &["energy", "lp", "osgood", "uniqueness", "difference-regularity"];

fn load_trajectory(dir: &Path, cfg: &RunConfig) -> Result<Trajectory, CliError> {
    let series_path = dir.join(io::SERIES_FILE);
    let series = if series_path.exists() {
        io::read_series(&series_path)?
    } else {
        integrator::NormSeries::default()
    };
    let states = io::list_snapshots(dir, "snap")?
        .iter()
        .map(|p| io::read_snapshot(p).map(|s| s.state))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory {
        params: cfg.params,
        states,
        series,
    })
}

fn analyze(dir: &Path, which: &str, s: f64) -> Result<bool, CliError> {
    let names: Vec<&str> = if which == "all" {
        ANALYSES.to_vec()
    } else if ANALYSES.contains(&which) {
        vec![which]
    } else {
        return Err(VerifyError::UnknownCheck(which.to_string()).into());
    };
    let cfg = io::load_config(&dir.join(io::CONFIG_FILE))?;
    let twin_path = dir.join(io::TWIN_FILE);
    let is_twin = twin_path.exists();
    let traj = if is_twin { None } else { Some(load_trajectory(dir, &cfg)?) };
    let diff = if is_twin {
        let ns = io::read_series(&twin_path)?;
        Some(integrator::TwinDiff::from_series(cfg.params.l, &ns).map_err(CliError::Other)?)
    } else {
        None
    };

    let mut reports: Vec<Report> = Vec::new();
    for name in names {
        let explicit = which != "all";
        let outcome: Result<Vec<Report>, VerifyError> = match (name, &traj, &diff) {
            ("energy", Some(t), _) => verify::energy_balance_check(t, &cfg.params, verify::ENERGY_TOL).map(|r| vec![r]),
            ("lp", Some(t), _) => (1..=3).map(|p| verify::lp_bound_check(t, p as f64, None)).collect(),
            ("osgood", Some(t), _) => verify::osgood_check(t, s, None).map(|d| vec![d.report]),
            ("uniqueness", _, Some(d)) => Ok(vec![verify::uniqueness_check(d, None)]),
            ("difference-regularity", _, Some(d)) => Ok(vec![verify::difference_regularity_check(d)]),
            _ => {
                if explicit {
                    let kind = if is_twin { "a twin run" } else { "a simulation run" };
                    return Err(CliError::Other(format!("check `{name}` does not apply to {kind}")));
                }
                continue;
            }
        };
        match outcome {
            Ok(rs) => reports.extend(rs),
            Err(e) if !explicit => println!("{name}: skipped ({e})"),
            Err(e) => return Err(e.into()),
        }
    }
    finish(&reports, Some(&dir.join(io::REPORT_FILE)))
}

fn finish(reports: &[Report], path: Option<&Path>) -> Result<bool, CliError> {
    for r in reports {
        print!("{r}");
    }
    if let Some(p) = path {
        io::write_reports(reports, p)?;
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn check(lemma: &str, trials: usize, seed: u64) -> Result<bool, CliError> {
    let names: Vec<&str> = if lemma == "all" {
        verify::LEMMAS.to_vec()
    } else {
        vec![lemma]
    };
    let mut reports = Vec::new();
    for name in names {
        reports.extend(verify::run_lemma(name, trials, seed)?);
    }
    finish(&reports, None)
}

fn parse_exponent(s: &str) -> Result<f64, CliError> {
    match s.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse().map_err(|e| CliError::Other(format!("bad number `{t}` in --spec: {e}"))),
    }
}

fn norms(path: &Path, spec: &str) -> Result<bool, CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Other(format!("--spec expects s,p,r, got `{spec}`")));
    }
    let ns = NormSpec::new(parse_exponent(parts[0])?, parse_exponent(parts[1])?, parse_exponent(parts[2])?);
    let snap = io::read_snapshot(path)?;
    let st = &snap.state;
    let part = DyadicPartition::new(st.grid());
    println!("t = {}, n = {}, len = {}", st.t, st.grid().n(), st.grid().len());
    for (name, f) in [("u", st.u.spectral()), ("Q", st.q.spectral())] {
        let b = paracalc::besov_norm(f, ns, &part).map_err(VerifyError::from)?;
        let note = if b.mean_removed { " (mean removed)" } else { "" };
        println!("{name}: L2 = {:.16e}, B^{}_{{{},{}}} = {:.16e}{note}", f.l2_norm(), ns.s, ns.p, ns.r, b.value);
    }
    Ok(true)
}
