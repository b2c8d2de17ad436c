use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use otfs_sync::analysis::{
    complexity_cms, crossover_conditions, doppler_energy_audit, efficiency_report, KappaCondition, LinkBudget, Technique,
};
use otfs_sync::frame::FrameParams;
use otfs_sync::harness::presets::{self, Axis, REFERENCE_KAPPA};
use otfs_sync::harness::report::{gnuplot_script, to_csv};
use otfs_sync::harness::validate::{run_validation, ValidateOptions};
use otfs_sync::harness::{run_experiment, ExperimentConfig};
use otfs_sync::pilots::{bem_order, max_users, mu_half_len, Structure};
use otfs_sync::{Result, SyncError};

#[derive(Parser)]
#[command(name = "otfs-sync", version, about = "Uplink multiuser OTFS synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct PresetArgs {
    #[arg(long, value_enum, default_value = "snr")]
    axis: Axis,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the generated config as JSON instead of running it.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Timing error sweep.
    ToSweep(PresetArgs),
    /// CFO MSE sweep.
    CfoSweep(PresetArgs),
    /// Channel NMSE sweep.
    NmseSweep(PresetArgs),
    /// Closed-form tables.
    Analyze {
        #[arg(long, value_enum)]
        what: Analysis,
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        l_ch: usize,
        #[arg(long, default_value_t = 30)]
        l_cp: usize,
    },
    /// Run the oracle and invariant checks.
    Validate {
        /// Run a tenth of the nominal Monte Carlo trials.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Emit a gnuplot script for a result CSV.
    Gnuplot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "snr_db")]
        x: String,
        #[arg(long, default_value = "to_err_mean")]
        y: String,
        #[arg(long)]
        log_y: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Analysis {
    Efficiency,
    Complexity,
    Capacity,
    DopplerEnergy,
}

fn write_output(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| SyncError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_config(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let records = run_experiment(cfg)?;
    write_output(&to_csv(&records), out)
}

fn run_preset(args: &PresetArgs, build: fn(Axis, usize, u64) -> ExperimentConfig) -> Result<()> {
    let cfg = build(args.axis, args.trials, args.seed);
    cfg.validate()?;
    if args.print_config {
        return write_output(&(cfg.to_json() + "\n"), args.out.as_deref());
    }
    run_config(&cfg, args.out.as_deref())
}

fn kappa_condition(c: KappaCondition) -> String {
    match c {
        KappaCondition::AtMost(x) => format!("kappa_max <= {x:.6}"),
        KappaCondition::AtLeast(x) => format!("kappa_max >= {x:.6}"),
        KappaCondition::Always => "always".into(),
        KappaCondition::Never => "never".into(),
    }
}

fn analyze(what: Analysis, m: usize, n: usize, l_ch: usize, l_cp: usize) -> Result<String> {
    let mut s = String::new();
    let kappas = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, REFERENCE_KAPPA];
    match what {
        Analysis::Efficiency => {
            s.push_str("Q,kappa_max,beta,su_full,su_partial,mu,lambda0,lambda1,beta_max_partial,beta_max_full,kappa_bound_full,kappa_bound_partial_printed,kappa_bound_partial_derived,partial_feasible\n");
            for q in [2, 4] {
                for &k in &kappas {
                    let beta = bem_order(k);
                    let r = efficiency_report(&LinkBudget { m, n, q, l_ch, l_cp, kappa_max: k, beta });
                    let c = crossover_conditions(n, q, l_ch, k)?;
                    s.push_str(&format!(
                        "{q},{k},{beta},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.6},{},{}\n",
                        r.su_full,
                        r.su_partial,
                        r.mu,
                        r.lambda0,
                        r.lambda1,
                        c.beta_max_partial,
                        c.beta_max_full,
                        c.kappa_max_full,
                        c.kappa_max_partial_printed,
                        kappa_condition(c.kappa_partial_exact),
                        c.partial_feasible
                    ));
                }
            }
        }
        Analysis::Complexity => {
            s.push_str("Q,kappa_max,su_pcp,mu_pcp,absorbed_cfo,mu_minus_su\n");
            for q in [2, 4] {
                for &k in &kappas {
                    let su = complexity_cms(Technique::SuPcp, m, n, q, l_ch, k);
                    let mu = complexity_cms(Technique::MuPcp, m, n, q, l_ch, k);
                    let ab = complexity_cms(Technique::AbsorbedCfo, m, n, q, l_ch, k);
                    s.push_str(&format!("{q},{k},{su:.2},{mu:.2},{ab:.2},{:.2}\n", mu - su));
                }
            }
        }
        Analysis::Capacity => {
            s.push_str("kappa_max,alpha,su_pcp_users,mu_pcp_users\n");
            let params = FrameParams::new(m, n, 1, otfs_sync::harness::config::DEFAULT_DELTA_TAU, l_cp)?;
            for &k in &kappas {
                for alpha in [0.5, 1.0] {
                    let su = max_users(Structure::SuPcp, &params, l_ch, k, alpha);
                    let mu = max_users(Structure::MuPcp, &params, mu_half_len(l_ch, bem_order(k)), k, alpha);
                    s.push_str(&format!("{k},{alpha},{su},{mu}\n"));
                }
            }
        }
        Analysis::DopplerEnergy => {
            let (rows, alpha90) = doppler_energy_audit()?;
            s.push_str("alpha,closed_form,numeric,printed,divergence\n");
            for r in rows {
                s.push_str(&format!(
                    "{},{:.5},{:.5},{},{:.5}\n",
                    r.alpha,
                    r.closed_form,
                    r.numeric,
                    r.printed,
                    r.printed - r.closed_form
                ));
            }
            s.push_str(&format!("# printed values disagree with E_s(a) = a + sin(pi a)/pi; 90% energy needs alpha = {alpha90:.4}\n"));
        }
    }
    Ok(s)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| SyncError::Config(format!("cannot read {}: {e}", config.display())))?;
            run_config(&ExperimentConfig::from_json(&text)?, out.as_deref())?;
        }
        Command::ToSweep(a) => run_preset(&a, presets::to_sweep)?,
        Command::CfoSweep(a) => run_preset(&a, presets::cfo_sweep)?,
        Command::NmseSweep(a) => run_preset(&a, presets::nmse_sweep)?,
        Command::Analyze { what, m, n, l_ch, l_cp } => print!("{}", analyze(what, m, n, l_ch, l_cp)?),
        Command::Validate { quick, seed } => {
            let opts = ValidateOptions { trial_scale: if quick { 0.1 } else { 1.0 }, seed };
            let checks = run_validation(&opts)?;
            for c in &checks {
                println!("{c}");
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Command::Gnuplot { csv, x, y, log_y } => {
            let text = std::fs::read_to_string(&csv)
                .map_err(|e| SyncError::Config(format!("cannot read {}: {e}", csv.display())))?;
            let mut variants: Vec<String> = Vec::new();
            for line in text.lines().skip(1) {
                if let Some(v) = line.split(',').nth(1) {
                    if !variants.iter().any(|x| x == v) {
                        variants.push(v.to_string());
                    }
                }
            }
            let script = gnuplot_script(&csv.display().to_string(), &x, &y, &variants, log_y)
                .ok_or_else(|| SyncError::Config(format!("unknown column {x} or {y}")))?;
            print!("{script}");
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
