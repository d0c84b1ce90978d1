use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedlearn_core::data::{gen_blobs, load_csv, vertical_split, write_csv, write_split, LabelKind};
use fedlearn_core::he::{write_key_files, KeyPair};
use fedlearn_core::transport::serve_tcp;
use fedlearn_core::Party;
use fedlearn_cli::config::{RunConfig, TransportKind};
use fedlearn_cli::run::{
    loopback_transport, predict, prediction_ids, run_training, shutdown_parties, tcp_transport,
    wait_for_parties, write_predictions, Manifest,
};
use tracing::info;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "fedlearn", version, about = "Vertical federated learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set kernel.gamma=0.5` or `--set parties.1.endpoint=host:port`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    /// `-1` / `+1`
    Pm1,
    /// `0` / `1`
    #[value(name = "01")]
    ZeroOne,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Paillier key pair.
    Keygen {
        #[arg(long, default_value_t = 2048)]
        bits: u32,
        #[arg(long)]
        out: PathBuf,
        /// Permit 64-bit keys (tests only).
        #[arg(long)]
        allow_insecure: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a two-blob dataset with a label column.
    GenData {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        d: usize,
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Labels::Pm1)]
        labels: Labels,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a labelled CSV column-wise into per-party files plus a label file.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        parties: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// File name stem; defaults to the input's.
        #[arg(long)]
        stem: Option<String>,
    },
    /// Serve one party over TCP until the coordinator shuts it down.
    Party {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        name: String,
    },
    /// Drive training against running parties over TCP.
    Coordinator {
        #[command(flatten)]
        config: ConfigArgs,
        /// How long to wait for every party to answer a ping.
        #[arg(long, default_value_t = 30)]
        wait_secs: u64,
    },
    /// Train with every party in this process.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score samples with a trained model and write `id,score,label`.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model manifest; defaults to `<output_dir>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV whose first column (header `id`) lists the samples; defaults to all samples.
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        wait_secs: u64,
    },
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("FEDLEARN_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Keygen {
            bits,
            out,
            allow_insecure,
            seed,
        } => {
            let kp = KeyPair::generate(bits, seed, allow_insecure)?;
            let (public, secret) = write_key_files(&kp, &out)
                .with_context(|| format!("writing keys to {}", out.display()))?;
            println!("{}\n{}", public.display(), secret.display());
        }
        Command::GenData {
            n,
            d,
            separation,
            seed,
            labels,
            out,
        } => {
            let kind = match labels {
                Labels::Pm1 => LabelKind::PlusMinusOne,
                Labels::ZeroOne => LabelKind::ZeroOne,
            };
            let table = gen_blobs(n, d, separation, seed, kind)?;
            write_csv(&table, &out, true)?;
            println!("{}", out.display());
        }
        Command::Split {
            input,
            parties,
            seed,
            out_dir,
            stem,
        } => {
            let table = load_csv(&input, true)?;
            let stem = match stem {
                Some(s) => s,
                None => input
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .context("input has no file name")?
                    .to_owned(),
            };
            for path in write_split(&vertical_split(&table, parties, seed)?, &out_dir, &stem)? {
                println!("{}", path.display());
            }
        }
        Command::Party { config, name } => {
            let config = config.load()?;
            let (index, entry) = config.party(&name)?;
            let endpoint = entry
                .endpoint
                .as_deref()
                .with_context(|| format!("parties[{index}].endpoint: required to serve"))?;
            let listener =
                TcpListener::bind(endpoint).with_context(|| format!("binding {endpoint}"))?;
            let party = Party::new(config.load_table(index)?, Some(config.model_dir(&name)));
            let mut service = party.into_service();
            info!(%name, %endpoint, "serving");
            let outcome = serve_tcp(
                &listener,
                &name,
                &mut service,
                Duration::from_secs(config.timeout_secs),
            )?;
            info!(requests = outcome.requests_served, "shut down");
        }
        Command::Coordinator { config, wait_secs } => {
            let config = config.load()?;
            if config.transport != TransportKind::Tcp {
                bail!("transport: coordinator needs \"tcp\" (use simulate for loopback)");
            }
            let transport = tcp_transport(&config);
            if let Err(e) = wait_for_parties(&transport, &config, Duration::from_secs(wait_secs)) {
                shutdown_parties(&transport, &config);
                return Err(e);
            }
            let result = run_training(&config, &transport);
            shutdown_parties(&transport, &config);
            let metrics = result?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Simulate { config } => {
            let config = config.load()?;
            if config.transport != TransportKind::Loopback {
                bail!("transport: simulate needs \"loopback\" (use --set transport=loopback)");
            }
            let metrics = run_training(&config, &loopback_transport(&config)?)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Predict {
            config,
            model,
            ids,
            out,
            wait_secs,
        } => {
            let config = config.load()?;
            let manifest = Manifest::read(&model.unwrap_or_else(|| config.manifest_path()))?;
            manifest.check_against(&config)?;
            let ids = prediction_ids(&config, ids.as_deref())?;
            let pred = match config.transport {
                TransportKind::Loopback => predict(&loopback_transport(&config)?, &manifest, &ids)?,
                TransportKind::Tcp => {
                    let transport = tcp_transport(&config);
                    let pred = wait_for_parties(&transport, &config, Duration::from_secs(wait_secs))
                        .and_then(|()| predict(&transport, &manifest, &ids));
                    shutdown_parties(&transport, &config);
                    pred?
                }
            };
            write_predictions(&out, &pred)?;
            info!(rows = pred.len(), out = %out.display(), "predictions written");
        }
    }
    Ok(())
}
