use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evm_sinr::config::{parse_config, parse_override, RunConfig, Study};
use evm_sinr::study::run_study;
use evm_sinr::Result;

#[derive(Parser)]
#[command(name = "evm-sinr", version, about = "EVM-based SINR prediction studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fit the EVM-SINR gradient for one QAM order.
    FitA,
    /// Fit the gradient for every order and interferer count.
    QamCompare,
    /// Prediction error against the number of frames.
    IterationStudy,
    /// Signalled vs predicted SINR over the multi-user link.
    Mmimo,
    /// Block-to-block spread of the signalled SINR.
    Repeatability,
    /// Prediction error spread against sub-band width.
    BandwidthSweep,
}

impl Command {
    fn study(self) -> Study {
        match self {
            Command::FitA => Study::FitA,
            Command::QamCompare => Study::QamCompare,
            Command::IterationStudy => Study::IterationStudy,
            Command::Mmimo => Study::Mmimo,
            Command::Repeatability => Study::Repeatability,
            Command::BandwidthSweep => Study::BandwidthSweep,
        }
    }
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "EVM_SINR_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    qam_order: Option<usize>,
    #[arg(long, global = true)]
    n_interferers: Option<usize>,
    #[arg(long, global = true)]
    carriers: Option<usize>,
    #[arg(long, global = true)]
    frames: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    blocks: Option<usize>,
    /// EVM reference: data-aided or decision-directed.
    #[arg(long, global = true)]
    evm_mode: Option<String>,
    /// Link scenario: both, stationary or moving.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Any config key, as key=value. Repeatable; applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        let int = |v: usize| toml::Value::Integer(v as i64);
        let mut o: Vec<(String, toml::Value)> = Vec::new();
        if let Some(s) = self.seed {
            o.push(("seed".into(), toml::Value::Integer(s as i64)));
        }
        let named = [
            ("threads", self.threads),
            ("qam_order", self.qam_order),
            ("n_interferers", self.n_interferers),
            ("carriers", self.carriers),
            ("frames", self.frames),
            ("trials", self.trials),
            ("blocks", self.blocks),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                o.push((k.into(), int(v)));
            }
        }
        for (k, v) in [("evm_mode", &self.evm_mode), ("scenario", &self.scenario)] {
            if let Some(v) = v {
                o.push((k.into(), toml::Value::String(v.clone())));
            }
        }
        for kv in &self.set {
            o.push(parse_override(kv)?);
        }
        Ok(o)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut overrides = cli.common.overrides()?;
    overrides.insert(0, ("study".into(), toml::Value::String(cli.command.study().name().into())));
    let cfg: RunConfig = parse_config(cli.common.config.as_deref(), &overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| evm_sinr::Error::InvalidArgument(e.to_string()))?;
    let output = pool.install(|| run_study(&cfg))?;
    output.write_to(&cli.common.out)?;
    let failed: Vec<&str> = output.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
    println!(
        "{}: wrote {} files to {} ({} verdicts, {} failed{})",
        cfg.study.name(),
        output.files.len(),
        cli.common.out.display(),
        output.verdicts.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(": {}", failed.join(", ")) }
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evm-sinr: {e}");
            ExitCode::FAILURE
        }
    }
}
