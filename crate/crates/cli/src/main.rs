use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maflow::config::RunConfig;
use maflow::TorusGrid;
use maflow_cli::{
    cmd_compare, cmd_oracle, cmd_restart, cmd_run, cmd_verify, resolve_output, summary, CliError, CliResult, Oracle,
    EXIT_CONFIG, EXIT_VERIFY, OUTPUT_ROOT_ENV,
};

#[derive(Parser)]
#[command(name = "maflow", version, about = "Parabolic complex Monge-Ampere flows on flat tori")]
struct Cli {
    /// Root for relative output paths.
    #[arg(long, env = OUTPUT_ROOT_ENV, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every approximation level of a config.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's output.dir, else "run").
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stored run; exit code 4 if a non-advisory check fails.
    Verify {
        dir: PathBuf,
        /// Check names (default: the config's list, else all).
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
    },
    /// Continue a stored run from one of its snapshots.
    Restart {
        dir: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Snapshot differences between two runs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit reference outputs.
    Oracle {
        #[command(subcommand)]
        which: OracleCmd,
        #[arg(long, global = true, default_value = "oracle")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Heat-limit decay of one Fourier mode.
    Heat {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        #[arg(long, default_value_t = 1e-3)]
        amp: f64,
        /// Wave vector, one integer per real axis.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        k: Vec<i32>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        times: Vec<f64>,
    },
    /// Elliptic fixed point with zero data.
    Elliptic {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 32)]
        res: usize,
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Closed-form log-singular field.
    Lelong {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
    },
}

fn grid(n: usize, res: usize, period: f64) -> CliResult<TorusGrid> {
    Ok(TorusGrid::new(n, res, period)?)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let root = cli.output_root.as_deref();
    let out_path = |p: &Path| resolve_output(root, p);
    match cli.cmd {
        Cmd::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("run"));
            let dir = out_path(&dir);
            let runs = cmd_run(&cfg, &dir)?;
            println!("wrote {} level(s) to {}", runs.len(), dir.display());
        }
        Cmd::Verify { dir, checks } => {
            let o = cmd_verify(&out_path(&dir), &checks)?;
            print!("{}", summary(&o.reports));
            if o.failed {
                return Err(CliError { code: EXIT_VERIFY, message: "verification failed".into() });
            }
        }
        Cmd::Restart { dir, from, horizon, out } => {
            let runs = cmd_restart(&out_path(&dir), from, horizon, &out_path(&out))?;
            println!("restarted {} level(s) from t = {from}", runs.len());
        }
        Cmd::Compare { a, b, out } => {
            let out = out.map(|p| out_path(&p));
            let rows = cmd_compare(&out_path(&a), &out_path(&b), out.as_deref())?;
            for r in rows {
                println!(
                    "level {} t={:.6} min={:.3e} max={:.3e} sup={:.3e}",
                    r.level, r.t, r.min_diff, r.max_diff, r.sup_abs
                );
            }
        }
        Cmd::Oracle { which, out } => {
            let oracle = match which {
                OracleCmd::Heat { n, res, period, amp, k, times } => {
                    let g = grid(n, res, period)?;
                    let k = if k.is_empty() {
                        let mut k = vec![0; g.dims()];
                        k[0] = 1;
                        k
                    } else {
                        k
                    };
                    Oracle::Heat { grid: g, amp, k, times }
                }
                OracleCmd::Elliptic { n, res, period, alpha } => Oracle::Elliptic { grid: grid(n, res, period)?, alpha },
                OracleCmd::Lelong { n, res, period, gamma } => Oracle::Lelong { grid: grid(n, res, period)?, gamma },
            };
            for f in cmd_oracle(&oracle, &out_path(&out))? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
