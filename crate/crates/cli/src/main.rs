use std::io::Write;
use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use magsim_cli::{parse_list, parse_vec3, simulate, sweep, Mode, SimulateOptions, SweepOptions};
use magsim_core::Vec3;
use magsim_service::{bind, serve, AppState, ServiceConfig, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "magsim", version, about = "Simulate hard-magnetic soft robots")]
struct Cli {
    /// Directory with extra model descriptors (*.json).
    #[arg(long, global = true, env = "MAGSIM_MODELS_DIR")]
    models_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dynamic,
    Static,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation, write VTK and print a JSON summary.
    Simulate {
        /// Model name or descriptor path.
        #[arg(long)]
        model: String,
        /// External field "bx,by,bz" in tesla. Defaults to the model's field.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        field: Option<Vec3>,
        #[arg(long, value_enum, default_value = "static")]
        mode: ModeArg,
        /// Number of implicit steps in dynamic mode.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Time step in seconds.
        #[arg(long, allow_negative_numbers = true)]
        dt: Option<f64>,
        /// Quasi-static force tolerance relative to the characteristic force.
        #[arg(long)]
        tolerance: Option<f64>,
        /// VTK output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quasi-static solves over a list of field magnitudes, written as CSV.
    Sweep {
        #[arg(long)]
        model: String,
        /// Field direction "x,y,z". Defaults to the model's field direction.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        direction: Option<Vec3>,
        /// Magnitudes in tesla, comma separated.
        #[arg(long)]
        magnitudes: String,
        /// CSV output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the web socket service.
    Serve {
        /// 0 picks a free port.
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// UI bundle served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Where uploaded meshes are stored.
        #[arg(long)]
        upload_dir: Option<PathBuf>,
    },
}

fn fail(message: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Usage errors exit 1; exit 2 is reserved for non-converged solves.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match cli.command {
        Command::Simulate {
            model,
            field,
            mode,
            steps,
            dt,
            tolerance,
            out,
        } => {
            let opts = SimulateOptions {
                model,
                field,
                mode: match mode {
                    ModeArg::Dynamic => Mode::Dynamic,
                    ModeArg::Static => Mode::Static,
                },
                steps,
                dt,
                tolerance,
                out,
                models_dir: cli.models_dir,
            };
            match simulate(&opts) {
                Ok(run) => {
                    let text = serde_json::to_string_pretty(&run.summary).expect("summary serializes");
                    let _ = writeln!(std::io::stdout(), "{text}");
                    if run.summary.converged {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("error: quasi-static solve did not converge");
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(&e, e.exit_code() as u8),
            }
        }
        Command::Sweep {
            model,
            direction,
            magnitudes,
            out,
        } => {
            let magnitudes = match parse_list(&magnitudes) {
                Ok(m) => m,
                Err(e) => return fail(format!("--magnitudes: {e}"), 1),
            };
            let opts = SweepOptions {
                model,
                direction,
                magnitudes,
                out: out.clone(),
                models_dir: cli.models_dir,
            };
            match sweep(&opts) {
                Ok(rows) => {
                    if out.is_none() {
                        let _ = write!(std::io::stdout(), "{}", magsim_cli::sweep_csv(&rows));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e, e.exit_code() as u8),
            }
        }
        Command::Serve {
            port,
            host,
            static_dir,
            upload_dir,
        } => {
            let mut config = ServiceConfig {
                host,
                port,
                models_dir: cli.models_dir,
                static_dir,
                ..Default::default()
            };
            if let Some(dir) = upload_dir {
                config.upload_dir = dir;
            }
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            match runtime.block_on(run_service(config)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e, 1),
            }
        }
    }
}

async fn run_service(config: ServiceConfig) -> Result<(), magsim_service::ServeError> {
    let state = AppState::from_config(&config)?;
    let listener = bind(config.host, config.port).await?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr} (web socket at ws://{addr}/sim)");
    log::info!("serving on {addr}");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        log::info!("interrupt received, shutting down");
    };
    serve(listener, state, config.static_dir.clone(), shutdown).await
}
