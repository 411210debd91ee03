use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fastconsensus::experiment::{
    run_experiment, ConsensusProtocol, Experiment, ExperimentConfig, GraphSource, InitialValues,
    Preset, Report, UPolicy, DEFAULT_SEED,
};
use fastconsensus::graph::GraphKind;
use fastconsensus::learning::Scheme;
use fastconsensus::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "fastconsensus", version, about = "Average-consensus simulator and its applications")]
struct Cli {
    /// Seed for initial values and sample streams.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
}

#[derive(Args, Debug)]
struct Common {
    /// `line:n=50`, `lollipop:n=100`, `random_connected:n=30,seed=7`, or `file:<edge list>`.
    #[arg(long)]
    graph: String,
    #[arg(long)]
    rounds: Option<usize>,
    /// Rounds as a multiple of n (ignored when --rounds is given).
    #[arg(long)]
    rounds_factor: Option<f64>,
    /// Use U = ⌈m·n⌉ instead of U = n for accelerated schemes.
    #[arg(long)]
    u_multiplier: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an average-consensus protocol and print E(t) per round.
    Consensus {
        #[command(flatten)]
        common: Common,
        /// uniform-epsilon | lazy-metropolis | accelerated
        #[arg(long, default_value = "lazy-metropolis")]
        protocol: String,
        /// Edge weight for uniform-epsilon (default 1/(2 d_max)).
        #[arg(long)]
        epsilon: Option<f64>,
        /// ramp | random | indicator
        #[arg(long, default_value = "random")]
        init: String,
        /// Append every node's value to each row.
        #[arg(long)]
        values: bool,
        /// Write the weight matrix as CSV to this path.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Fuse Gaussian measurements (`y,var` per line) into a network-wide MLE.
    Fuse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Distributed median of the mirrored `i mod 10` data.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "median")]
        objective: String,
    },
    /// Distributed hypothesis testing from a TOML model file.
    Learn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// learndyn | betu
        #[arg(long, default_value = "betu")]
        scheme: String,
    },
    /// Preset sweeps: median-sweep, protocol-scaling.
    Sweep {
        preset: String,
        /// Comma-separated network sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Graph kind for protocol-scaling.
        #[arg(long)]
        graph: Option<String>,
        /// Target shrink factor for protocol-scaling.
        #[arg(long)]
        eps: Option<f64>,
        /// Rounds as a multiple of n for median-sweep.
        #[arg(long)]
        rounds_factor: Option<f64>,
    },
}

fn from_common(experiment: Experiment, common: &Common, seed: u64) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        graph: Some(common.graph.parse::<GraphSource>()?),
        u_policy: common.u_multiplier.map_or(UPolicy::ExactN, UPolicy::Multiplier),
        rounds: common.rounds,
        rounds_factor: common.rounds_factor,
        seed,
        ..ExperimentConfig::new(experiment)
    })
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    match &cli.command {
        Command::Consensus {
            common,
            protocol,
            epsilon,
            init,
            values,
            dump_matrix,
        } => {
            let protocol = match (protocol.parse()?, epsilon) {
                (ConsensusProtocol::UniformEpsilon(_), Some(eps)) => {
                    ConsensusProtocol::UniformEpsilon(Some(*eps))
                }
                (_, Some(_)) => {
                    return Err(Error::config("epsilon", "only applies to --protocol uniform-epsilon"))
                }
                (p, None) => p,
            };
            let experiment = Experiment::Consensus {
                protocol,
                init: init.parse::<InitialValues>()?,
                with_values: *values,
                dump_matrix: dump_matrix.clone(),
            };
            from_common(experiment, common, cli.seed)
        }
        Command::Fuse { common, measurements } => from_common(
            Experiment::Fuse {
                measurements: measurements.clone(),
            },
            common,
            cli.seed,
        ),
        Command::Optimize { common, objective } => {
            if objective != "median" {
                return Err(Error::config("objective", format!("unknown objective `{objective}` (median)")));
            }
            from_common(Experiment::Optimize, common, cli.seed)
        }
        Command::Learn { common, model, scheme } => from_common(
            Experiment::Learn {
                model: model.clone(),
                scheme: scheme.parse::<Scheme>()?,
            },
            common,
            cli.seed,
        ),
        Command::Sweep {
            preset,
            sizes,
            graph,
            eps,
            rounds_factor,
        } => {
            let mut preset = Preset::by_name(preset)?;
            match &mut preset {
                Preset::MedianSweep { sizes: s } => {
                    if graph.is_some() || eps.is_some() {
                        return Err(Error::config("preset", "median-sweep takes only --sizes and --rounds-factor"));
                    }
                    if let Some(list) = sizes {
                        *s = list.clone();
                    }
                }
                Preset::ProtocolScaling { kind, sizes: s, eps: e } => {
                    if rounds_factor.is_some() {
                        return Err(Error::config("rounds-factor", "protocol-scaling uses fixed run lengths"));
                    }
                    if let Some(list) = sizes {
                        *s = list.clone();
                    }
                    if let Some(g) = graph {
                        *kind = g.parse::<GraphKind>()?;
                    }
                    if let Some(v) = eps {
                        *e = *v;
                    }
                }
            }
            Ok(ExperimentConfig {
                rounds_factor: *rounds_factor,
                seed: cli.seed,
                ..ExperimentConfig::new(Experiment::Sweep(preset))
            })
        }
    }
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<()> {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match out {
        Some(path) => report.write_to(path),
        None => {
            print!("{}", report.to_csv()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Format::Csv = cli.format;
    let result = build_config(&cli)
        .and_then(|cfg| run_experiment(&cfg))
        .and_then(|report| emit(&report, cli.out.as_ref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
