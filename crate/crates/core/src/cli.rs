//! `delaystab` command line.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 inconsistent verdict.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::charmat::CharMatrix;
use crate::error::{Error, Result};
use crate::io::{fmt17, load_system, norms_csv, spectrum_csv, trajectory_csv, SystemFile};
use crate::model::{SystemKind, SystemSpec};
use crate::report::{check_criterion, fit_decay, fit_decay_combined, norm_series, CriterionConfig, NormKind, Verdict};
use crate::spectrum::{
    default_window, find_roots_with, levin_lower_bound_probe, riemann_lebesgue_probe, Rect, BOUNDARY_TOL,
    ROOT_RESIDUAL_TOL,
};
use crate::timedomain::simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INCONSISTENT: i32 = 4;

const LEVIN_Y_MAX: [f64; 3] = [20.0, 40.0, 80.0];
const RL_Y: [f64; 3] = [10.0, 100.0, 1000.0];

#[derive(Debug, Parser)]
#[command(name = "delaystab", version, about = "Stability analysis of integral and delay difference equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Search window for zeros: XMIN XMAX YMAX
    #[arg(long, num_args = 3, value_names = ["XMIN", "XMAX", "YMAX"], allow_negative_numbers = true, global = true)]
    pub window: Option<Vec<f64>>,

    /// Simulation horizon T
    #[arg(long, global = true)]
    pub horizon: Option<f64>,

    /// Grid step h (must divide tau_star and every delay)
    #[arg(long, global = true)]
    pub step: Option<f64>,

    /// State-space norm: l1, l2, linf, sup, bv (default sup for IDE, l2 for DDE)
    #[arg(long, global = true)]
    pub norm: Option<String>,

    /// Root residual tolerance
    #[arg(long, default_value_t = ROOT_RESIDUAL_TOL, global = true)]
    pub tol: f64,

    /// Minimum |det Delta| accepted on box boundaries
    #[arg(long, default_value_t = BOUNDARY_TOL, global = true)]
    pub boundary_tol: f64,

    /// Output directory
    #[arg(long, default_value = ".", global = true)]
    pub out: PathBuf,

    /// Seed for the generated test histories
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeKind {
    Levin,
    Rl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Locate zeros of det Delta and report the windowed spectral abscissa
    Analyze { spec: PathBuf },
    /// Simulate from the history in the system file
    Simulate { spec: PathBuf },
    /// Run the stability criterion: spectrum versus simulated decay
    Verify { spec: PathBuf },
    /// Numerical probes of the characteristic function
    Probe {
        spec: PathBuf,
        #[arg(long, value_enum)]
        probe: ProbeKind,
        /// Half-width of the vertical strip
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Excluded radius around each zero (levin)
        #[arg(long, default_value_t = 0.3)]
        delta: f64,
        /// Sampling grid step (levin)
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
    },
    /// Evaluate Delta(z), det Delta(z) and its derivative at one point
    CharEval {
        spec: PathBuf,
        #[arg(long, num_args = 2, value_names = ["RE", "IM"], allow_negative_numbers = true, required = true)]
        z: Vec<f64>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
/// Messages go to stderr; command output goes to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("DELAYSTAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Input(format!("DELAYSTAB_THREADS must be a positive integer, got '{raw}'")))?;
    #[cfg(feature = "parallel")]
    {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Analyze { spec } => cmd_analyze(cli, &load(spec)?),
        Command::Simulate { spec } => cmd_simulate(cli, &load(spec)?),
        Command::Verify { spec } => cmd_verify(cli, &load(spec)?),
        Command::Probe {
            spec,
            probe,
            beta,
            delta,
            grid_step,
        } => cmd_probe(cli, &load(spec)?, *probe, *beta, *delta, *grid_step),
        Command::CharEval { spec, z } => cmd_char_eval(&load(spec)?, Complex64::new(z[0], z[1])),
    }
}

fn load(path: &Path) -> Result<SystemFile> {
    load_system(path).map_err(|e| match e {
        Error::Io(io) => Error::Input(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn window(cli: &Cli, spec: &SystemSpec) -> Result<Rect> {
    match &cli.window {
        Some(w) => {
            let rect = Rect::new(w[0], w[1], 0.0, w[2]);
            if rect.is_degenerate() {
                return Err(Error::Input(format!(
                    "window: need XMIN < XMAX and YMAX > 0, got {} {} {}",
                    w[0], w[1], w[2]
                )));
            }
            Ok(rect)
        }
        None => Ok(default_window(spec)),
    }
}

fn norm_kind(cli: &Cli, spec: &SystemSpec) -> Result<NormKind> {
    let kind = match &cli.norm {
        Some(s) => s.parse::<NormKind>().map_err(|e| Error::Input(format!("norm: {e}")))?,
        None => match spec.kind {
            SystemKind::Ide => NormKind::Sup,
            SystemKind::Dde => NormKind::Lp(2.0),
        },
    };
    if spec.kind == SystemKind::Dde && kind == NormKind::Sup {
        return Err(Error::Input("norm: the sup space B^inf is offered for IDE systems only".into()));
    }
    Ok(kind)
}

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Input(format!("{name} must be positive, got {x}"))),
        other => Ok(other),
    }
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn cmd_analyze(cli: &Cli, file: &SystemFile) -> Result<i32> {
    let spec = &file.spec;
    let rect = window(cli, spec)?;
    let report = find_roots_with(spec, &rect, cli.tol, cli.boundary_tol)?;
    write_out(&cli.out, "spectrum.csv", &spectrum_csv(&report))?;
    match report.abscissa {
        Some(a) => println!("abscissa={} windowed=true", fmt17(a)),
        None => println!("abscissa=none-in-window"),
    }
    println!("roots={} total_winding={}", report.roots.len(), report.total_winding);
    println!("note={}", report.truncation_note);
    Ok(EXIT_OK)
}

fn cmd_simulate(cli: &Cli, file: &SystemFile) -> Result<i32> {
    let spec = &file.spec;
    let history = file
        .history
        .as_ref()
        .ok_or_else(|| Error::Input("history: simulate needs initial data in the system file".into()))?;
    let h = positive("step", cli.step)?.unwrap_or(history.step);
    let t_end = positive("horizon", cli.horizon)?.unwrap_or(10.0 * spec.tau_star);
    let kind = norm_kind(cli, spec)?;
    let traj = simulate(spec, history, t_end, h)?;
    let dde = spec.kind == SystemKind::Dde;
    let series = norm_series(&traj, kind, spec.tau_star, dde)?;
    write_out(&cli.out, "trajectory.csv", &trajectory_csv(&traj))?;
    write_out(&cli.out, "norms.csv", &norms_csv(&series))?;
    let fit = if dde {
        fit_decay_combined(&series, 2.0 * spec.tau_star)
    } else {
        fit_decay(&series, 2.0 * spec.tau_star)
    };
    match fit {
        Ok(f) => {
            println!("nu_hat={} C_hat={}", fmt17(f.nu_hat), fmt17(f.c_hat));
            if let Some(n) = f.note {
                println!("note={n}");
            }
        }
        Err(e) => println!("nu_hat=unavailable ({e})"),
    }
    Ok(EXIT_OK)
}

fn number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(fmt17(v))
    }
}

fn cmd_verify(cli: &Cli, file: &SystemFile) -> Result<i32> {
    let spec = &file.spec;
    let config = CriterionConfig {
        window: Some(window(cli, spec)?),
        horizon: positive("horizon", cli.horizon)?,
        step: positive("step", cli.step)?,
        norm_kind: norm_kind(cli, spec)?,
        root_tol: cli.tol,
        seed: cli.seed,
    };
    let verdict = check_criterion(spec, &config)?;
    let roots_path = write_out(&cli.out, "spectrum.csv", &spectrum_csv(&verdict.spectrum))?;
    let mut per_history = Vec::new();
    for fit in &verdict.per_history {
        let name = format!("norms_{}.csv", fit.history_id);
        write_out(&cli.out, &name, &norms_csv(&fit.series))?;
        per_history.push(json!({
            "history_id": fit.history_id,
            "norm_kind": verdict.norm_kind.label(),
            "nu_hat": number(fit.nu_hat),
            "C_hat": number(fit.c_hat),
            "norms_csv_path": name,
        }));
    }
    let margins: Vec<Value> = verdict
        .margins
        .iter()
        .map(|m| json!({"nu": m.nu, "constant": number(m.constant), "bounded": m.bounded}))
        .collect();
    let doc = json!({
        "windowed_abscissa": verdict.windowed_abscissa.map(number).unwrap_or_else(|| json!("none-in-window")),
        "roots_csv_path": roots_path.file_name().map(|s| s.to_string_lossy().into_owned()),
        "per_history": per_history,
        "fitted_decay_rate": number(verdict.fitted_decay_rate),
        "fitted_constant": number(verdict.fitted_constant),
        "verdict": verdict.verdict.to_string(),
        "norm_kind": verdict.norm_kind.label(),
        "horizon": verdict.horizon,
        "step": verdict.step,
        "margins": margins,
        "notes": verdict.notes,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    write_out(&cli.out, "report.json", &text)?;
    println!(
        "verdict={} abscissa={} nu_hat={}",
        verdict.verdict,
        verdict.windowed_abscissa.map(fmt17).unwrap_or_else(|| "none-in-window".into()),
        fmt17(verdict.fitted_decay_rate)
    );
    Ok(if verdict.verdict == Verdict::Inconsistent {
        EXIT_INCONSISTENT
    } else {
        EXIT_OK
    })
}

fn cmd_probe(cli: &Cli, file: &SystemFile, which: ProbeKind, beta: f64, delta: f64, grid_step: f64) -> Result<i32> {
    let spec = &file.spec;
    if !(beta > 0.0) {
        return Err(Error::Input(format!("beta must be positive, got {beta}")));
    }
    match which {
        ProbeKind::Levin => {
            if !(delta > 0.0 && delta < beta) {
                return Err(Error::Input(format!("delta: need 0 < delta < beta, got delta={delta}, beta={beta}")));
            }
            let mut csv = String::from("y_max,empirical_min\n");
            for y in LEVIN_Y_MAX {
                let p = levin_lower_bound_probe(spec, beta, delta, y, grid_step)?;
                csv.push_str(&format!("{},{}\n", fmt17(y), fmt17(p.empirical_min)));
                println!("y_max={} empirical_min={} at {}", fmt17(y), fmt17(p.empirical_min), p.argmin);
            }
            write_out(&cli.out, "levin.csv", &csv)?;
        }
        ProbeKind::Rl => {
            let mut csv = String::from("y,sup_x_absR\n");
            for (y, v) in riemann_lebesgue_probe(spec, beta, &RL_Y) {
                csv.push_str(&format!("{},{}\n", fmt17(y), fmt17(v)));
                println!("y={} sup_x_absR={}", fmt17(y), fmt17(v));
            }
            write_out(&cli.out, "rl.csv", &csv)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_char_eval(file: &SystemFile, z: Complex64) -> Result<i32> {
    let cm = CharMatrix::new(&file.spec);
    let v = cm.eval(z);
    println!("z={},{}", fmt17(z.re), fmt17(z.im));
    println!("det={},{}", fmt17(v.det.re), fmt17(v.det.im));
    println!("abs_det={}", fmt17(v.det.norm()));
    println!("det_derivative={},{}", fmt17(v.det_derivative.re), fmt17(v.det_derivative.im));
    for i in 0..v.delta.nrows() {
        let row: Vec<String> = (0..v.delta.ncols())
            .map(|j| format!("{}{:+}i", fmt17(v.delta[(i, j)].re), v.delta[(i, j)].im))
            .collect();
        println!("delta[{i}]={}", row.join(" "));
    }
    Ok(EXIT_OK)
}
