use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use delight_cli::config::{ExperimentConfig, Testbed};
use delight_cli::run::cmd_run;
use delight_cli::sweep::cmd_sweep;
use delight_cli::{cmd_verify, CliError, DEFAULT_OUTDIR, OUTDIR_ENV};

/// Delight-gated policy gradient experiments.
///
/// Every run is deterministic in its configuration. A configuration can be
/// given as a flat `key=value` file (`--config`, `#` starts a comment) whose
/// keys are the long flag names below; explicit flags override the file.
#[derive(Parser)]
#[command(name = "delight", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analytic property suite; exit 0 iff every check passes.
    Verify {
        /// Harness self-test: flip the sign of the reference gate.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Train one testbed and write trace.csv, summary.jsonl and config.echo.
    #[command(allow_negative_numbers = true)]
    Run {
        /// bandit, multictx or classify.
        #[arg(value_parser = parse_testbed)]
        testbed: Testbed,
        #[command(flatten)]
        common: Common,
    },
    /// Fan a testbed out over values of one config field and write sweep.csv.
    #[command(allow_negative_numbers = true)]
    Sweep {
        /// bandit, multictx or classify.
        #[arg(value_parser = parse_testbed)]
        testbed: Testbed,
        /// Numeric config key, or beta / ucb / entropy to sweep an estimator parameter.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_testbed(s: &str) -> Result<Testbed, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

#[derive(Args)]
struct Common {
    /// key=value configuration file applied before flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root.
    #[arg(long, env = OUTDIR_ENV, default_value = DEFAULT_OUTDIR)]
    outdir: PathBuf,
    /// Run directory name; defaults to a hash of the configuration.
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Config keys settable from the command line.
#[derive(Args)]
#[command(next_help_heading = "Config keys")]
struct Overrides {
    /// Comma-separated arms: pg, dg, entropy:A, ucb:A, beta:B; multictx also ce;
    /// classify also ce, pg-oracle.
    #[arg(long)]
    estimators: Option<String>,
    /// Gate temperature.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    base_seed: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    /// Normalized step size (bandit, multictx).
    #[arg(long)]
    alpha: Option<String>,
    /// Bandit action count.
    #[arg(long)]
    k: Option<String>,
    /// Bandit reward baseline b.
    #[arg(long)]
    bandit_baseline: Option<String>,
    /// Start the bandit from the symmetric policy with this error, or `none`.
    #[arg(long)]
    init_error: Option<String>,
    #[arg(long)]
    contexts: Option<String>,
    /// Multictx actions per context.
    #[arg(long)]
    actions: Option<String>,
    /// Classify hidden width.
    #[arg(long)]
    width: Option<String>,
    /// Classify Adam learning rate.
    #[arg(long)]
    lr: Option<String>,
    /// Comma-separated action samples per input.
    #[arg(long)]
    samples_per_input: Option<String>,
    /// Comma-separated baselines: zero, constant, expected, expected-max, oracle.
    #[arg(long)]
    baselines: Option<String>,
    /// Validation interval in steps.
    #[arg(long)]
    eval_every: Option<String>,
    /// synthetic or idx.
    #[arg(long)]
    dataset: Option<String>,
    /// IDX image archive (dataset=idx).
    #[arg(long)]
    images: Option<String>,
    /// IDX label archive (dataset=idx).
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    syn_classes: Option<String>,
    #[arg(long)]
    syn_dim: Option<String>,
    #[arg(long)]
    syn_per_class: Option<String>,
    #[arg(long)]
    syn_spread: Option<String>,
    #[arg(long)]
    syn_seed: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("estimators", &self.estimators),
            ("eta", &self.eta),
            ("seeds", &self.seeds),
            ("base-seed", &self.base_seed),
            ("steps", &self.steps),
            ("batch", &self.batch),
            ("alpha", &self.alpha),
            ("k", &self.k),
            ("bandit-baseline", &self.bandit_baseline),
            ("init-error", &self.init_error),
            ("contexts", &self.contexts),
            ("actions", &self.actions),
            ("width", &self.width),
            ("lr", &self.lr),
            ("samples-per-input", &self.samples_per_input),
            ("baselines", &self.baselines),
            ("eval-every", &self.eval_every),
            ("dataset", &self.dataset),
            ("images", &self.images),
            ("labels", &self.labels),
            ("syn-classes", &self.syn_classes),
            ("syn-dim", &self.syn_dim),
            ("syn-per-class", &self.syn_per_class),
            ("syn-spread", &self.syn_spread),
            ("syn-seed", &self.syn_seed),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

fn build_config(testbed: Testbed, common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::defaults(testbed);
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.clone(),
            source: e,
        })?;
        cfg.apply_text(&text)?;
    }
    // dataset must switch before its dependent keys apply
    let pairs = common.overrides.pairs();
    for (k, v) in pairs.iter().filter(|(k, _)| *k == "dataset") {
        cfg.set(k, v)?;
    }
    for (k, v) in pairs.iter().filter(|(k, _)| *k != "dataset") {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Verify { inject_fault } => {
            let ok = cmd_verify(inject_fault, &mut std::io::stdout()).map_err(|e| CliError::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Run { testbed, common } => {
            let cfg = build_config(testbed, &common)?;
            let dir = cmd_run(&cfg, &common.outdir, common.label.as_deref())?;
            println!("{}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            testbed,
            axis,
            values,
            common,
        } => {
            let cfg = build_config(testbed, &common)?;
            let (dir, rows) = cmd_sweep(&cfg, &axis, &values, &common.outdir, common.label.as_deref())?;
            println!("axis,value,arm,mean_final_error,stderr,seeds");
            for r in rows {
                println!(
                    "{},{},{},{},{},{}",
                    r.axis, r.value, r.arm, r.mean_final_error, r.stderr, r.seeds
                );
            }
            eprintln!("wrote {}", dir.join("sweep.csv").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
