//! Command-line front end for the relay power-minimization library.
//!
//! Three subcommands: `solve` works one channel and prints the
//! allocation next to its lower bound, `sweep` runs a Monte Carlo
//! experiment and writes a CSV report, `verify` runs the self-check
//! battery. Exit codes: 0 on success, 1 on bad arguments or runtime
//! errors, 2 when verification fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use relayqos::channel::{read_channel_file, C64};
use relayqos::sweep::{emit_csv, run_sweep, Method, SweepConfig};
use relayqos::verify::run_battery;
use relayqos::{
    allocation_from_lambda, allocation_from_theta, build_dfe, build_linear, decompose,
    generate_channel, lower_bound_linear, lower_bound_nonlinear, rotation_equal_qos,
    solve_exponential, solve_hyperbola, total_power_matrices, Error, QosVector, Result,
    StreamProfile,
};

#[derive(Parser)]
#[command(
    name = "relayqos",
    version,
    about = "Power-minimal two-hop relay transceiver design under per-stream MSE targets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel and print the allocation with its lower bound.
    Solve(SolveArgs),
    /// Run a Monte Carlo sweep and write a CSV report.
    Sweep(SweepArgs),
    /// Run the self-check battery; fails with exit code 2.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Receiver architecture.
    #[arg(long, value_enum, default_value_t = Mode::Linear)]
    mode: Mode,
    /// Comma-separated MSE targets in (0, 1], non-decreasing; their
    /// count sets the number of streams.
    #[arg(long, value_delimiter = ',', required = true)]
    eta: Vec<f64>,
    /// Noise variance at the relay and the destination.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Seed for a random channel draw (default 0).
    #[arg(long, conflicts_with = "channel_file")]
    seed: Option<u64>,
    /// Load the two hop matrices from a file instead of drawing them.
    #[arg(long)]
    channel_file: Option<PathBuf>,
    /// Source and destination antennas (default: the stream count).
    #[arg(long, conflicts_with = "channel_file")]
    n: Option<usize>,
    /// Relay antennas (default: same as --n).
    #[arg(long, conflicts_with = "channel_file")]
    m: Option<usize>,
    /// Rotation applied on top of the eigenbasis when assembling the
    /// matrices.
    #[arg(long, value_enum, default_value_t = RotationKind::Dft)]
    rotation: RotationKind,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Linear (Wiener) receiver.
    Linear,
    /// Decision-feedback receiver.
    Dfe,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RotationKind {
    /// Normalized DFT; spreads every stream evenly (equalizes equal
    /// targets).
    Dft,
    /// No rotation; streams ride the eigenmodes directly.
    Identity,
}

#[derive(Args)]
struct SweepArgs {
    /// Canned layout: table1, fig3, fig4, or fig5.
    #[arg(long)]
    preset: Option<String>,
    /// key=value config file applied on top of the preset (keys: n, k,
    /// rho, eta, equal_eta, trials, seed, methods, out, threads).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (overrides preset and config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo repetitions per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed for the paired channel draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated method tags among L-HA, L-LB, NL-EA, NL-LB,
    /// ALT, GRID.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Worker threads (RELAYQOS_THREADS caps this).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random instances shared by the instance-driven checks.
    #[arg(long, default_value_t = 200)]
    instances: usize,
    /// Seed for the instance draws.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Sweep(args) => run_sweep_command(args),
        Command::Verify(args) => Ok(run_verify(args)),
    }
}

fn run_solve(args: SolveArgs) -> Result<ExitCode> {
    let qos = QosVector::new(args.eta)?;
    let k = qos.k();
    let rho = args.rho;
    let ch = match &args.channel_file {
        Some(path) => {
            let ch = read_channel_file(path, rho)?;
            println!(
                "channel: {} (hop one {}x{}, hop two {}x{}), rho={rho}",
                path.display(),
                ch.m(),
                ch.n(),
                ch.n(),
                ch.m()
            );
            ch
        }
        None => {
            let n = args.n.unwrap_or(k);
            let m = args.m.unwrap_or(n);
            let seed = args.seed.unwrap_or(0);
            println!("channel: random draw, n={n}, m={m}, rho={rho}, seed={seed}");
            generate_channel(n, m, rho, seed)?
        }
    };
    let eigen = decompose(&ch, k)?;
    let profile = StreamProfile::from_eigen(&eigen, rho)?;
    let rotation = match args.rotation {
        RotationKind::Dft => rotation_equal_qos(k)?,
        RotationKind::Identity => DMatrix::<C64>::identity(k, k),
    };

    let (total, bound, traced, matrix_mse) = match args.mode {
        Mode::Linear => {
            let lam = solve_hyperbola(&profile.w, &qos)?;
            let alloc = allocation_from_lambda(&lam, &eigen, rho, &qos)?;
            let bound = lower_bound_linear(&profile, &qos)?;
            println!("receiver: linear (Wiener)\n");
            println!(
                "{:>6} {:>14} {:>14} {:>14} {:>14}",
                "stream", "eigenvalue", "source load", "relay load", "power"
            );
            for i in 0..k {
                let power = rho * (alloc.a[i] / eigen.lam_h1[i] + alloc.b[i] / eigen.lam_h2[i]);
                println!(
                    "{:>6} {:>14.8} {:>14.8} {:>14.8} {:>14.8}",
                    i + 1,
                    alloc.lam[i],
                    alloc.lam_u[i],
                    alloc.lam_f[i],
                    power
                );
            }
            let tm = build_linear(&alloc, &eigen, rho, &rotation)?;
            let traced = total_power_matrices(&tm.u, &tm.f, &ch.h1, rho);
            (alloc.total_power, bound, traced, tm.per_stream_mse())
        }
        Mode::Dfe => {
            let theta = solve_exponential(&profile.w, &qos.kappa)?;
            let alloc = allocation_from_theta(&theta, &eigen, rho, &qos.kappa)?;
            let bound = lower_bound_nonlinear(&profile, &qos.kappa)?;
            println!("receiver: decision feedback\n");
            println!(
                "{:>6} {:>14} {:>14} {:>14} {:>14} {:>14}",
                "stream", "log MSE", "design MSE", "source load", "relay load", "power"
            );
            for i in 0..k {
                let power = rho * (alloc.a[i] / eigen.lam_h1[i] + alloc.b[i] / eigen.lam_h2[i]);
                println!(
                    "{:>6} {:>14.8} {:>14.8} {:>14.8} {:>14.8} {:>14.8}",
                    i + 1,
                    alloc.theta[i],
                    alloc.theta[i].exp(),
                    alloc.lam_u[i],
                    alloc.lam_f[i],
                    power
                );
            }
            let tm = build_dfe(&alloc, &eigen, rho, &rotation)?;
            let traced = total_power_matrices(&tm.u, &tm.f, &ch.h1, rho);
            (alloc.total_power, bound, traced, tm.per_stream_mse())
        }
    };

    let gap = if bound.value > 0.0 {
        (total - bound.value) / bound.value
    } else {
        total - bound.value
    };
    let mse_list = matrix_mse
        .iter()
        .map(|m| format!("{m:.8}"))
        .collect::<Vec<_>>()
        .join(", ");
    println!();
    println!(
        "total power:        {total:.8} ({:.3} dB)",
        10.0 * total.log10()
    );
    println!("lower bound:        {:.8}", bound.value);
    println!("relative gap:       {gap:.3e}");
    println!(
        "matrix trace power: {traced:.8} (allocation agreement {:.3e})",
        (traced - total).abs() / total.abs().max(1e-300)
    );
    println!("matrix stream MSEs: {mse_list}");
    Ok(ExitCode::SUCCESS)
}

fn run_sweep_command(args: SweepArgs) -> Result<ExitCode> {
    let mut cfg = match &args.preset {
        Some(name) => SweepConfig::preset(name)?,
        None => SweepConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_config_text(&text)?;
    }
    if let Some(out) = args.out {
        cfg.out_path = out;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(tags) = &args.methods {
        cfg.methods = tags
            .iter()
            .map(|t| Method::parse(t))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(threads) = args.threads {
        cfg.threads = Some(threads);
    }
    if let Some(cap) = thread_cap_from_env()? {
        cfg.threads = Some(cfg.threads.map_or(cap, |t| t.min(cap)));
    }

    let rows = run_sweep(&cfg)?;
    emit_csv(&rows, &cfg.out_path)?;
    println!(
        "wrote {} rows to {} ({} trials per cell)",
        rows.len(),
        cfg.out_path.display(),
        cfg.trials
    );
    for row in &rows {
        println!(
            "{:>6} rho={:<8} eta={:<24} mean={:<12.6} ({:>8.3} dB) se={:.3e} gap={:.3e} trials={}",
            row.method.tag(),
            row.rho,
            row.eta_descriptor,
            row.mean_power,
            10.0 * row.mean_power.log10(),
            row.std_error,
            row.mean_gap_to_lb,
            row.trials_used
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn thread_cap_from_env() -> Result<Option<usize>> {
    match std::env::var("RELAYQOS_THREADS") {
        Ok(text) => {
            let cap: usize = text.trim().parse().map_err(|_| {
                Error::invalid(format!(
                    "RELAYQOS_THREADS must be a positive integer, got '{text}'"
                ))
            })?;
            if cap == 0 {
                return Err(Error::invalid("RELAYQOS_THREADS must be at least 1"));
            }
            Ok(Some(cap))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::invalid(format!(
            "RELAYQOS_THREADS is unreadable: {e}"
        ))),
    }
}

fn run_verify(args: VerifyArgs) -> ExitCode {
    let reports = run_battery(args.instances, args.seed);
    let mut all_passed = true;
    for r in &reports {
        let verdict = if r.passed { "pass" } else { "FAIL" };
        println!("{}: {verdict} ({})", r.name, r.detail);
        all_passed &= r.passed;
    }
    if all_passed {
        println!("all {} checks passed", reports.len());
        ExitCode::SUCCESS
    } else {
        println!("verification failed");
        ExitCode::from(2)
    }
}
