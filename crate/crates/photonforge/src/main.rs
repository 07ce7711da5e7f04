//! Command-line front end for the photonforge toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use photonforge::cli::{
    self, cmd_basis, cmd_figure, cmd_optimize, cmd_oracle, cmd_render, cmd_sweep, cmd_verify,
    parse_f64_list, parse_range, parse_sub_ops, FigureSource, OptimizeConfig, ResultRecord,
};
use photonforge::error::Error;
use photonforge::fock::Occupation;
use photonforge::linalg::random_unitary;
use photonforge::optim::DIMENSION_GUARD;
use photonforge::transfer::ModeUnitary;

#[derive(Parser)]
#[command(
    name = "photonforge",
    version,
    about = "Simulation and optimization of measurement-assisted linear-optical entangling gates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct UnitarySource {
    /// Identity circuit on M modes.
    #[arg(long, value_name = "M", conflicts_with_all = ["beam_splitter", "random", "file"])]
    identity: Option<usize>,

    /// Symmetric 50/50 beam splitter on two modes.
    #[arg(long, conflicts_with_all = ["random", "file"])]
    beam_splitter: bool,

    /// Random unitary on M modes (seeded with --useed).
    #[arg(long, value_name = "M", conflicts_with = "file")]
    random: Option<usize>,

    /// Seed for --random.
    #[arg(long, default_value_t = 0)]
    useed: u64,

    /// JSON file with {"dim": M, "entries": [[re, im], ...]} row-major.
    #[arg(long)]
    file: Option<PathBuf>,
}

impl UnitarySource {
    fn build(&self) -> Result<ModeUnitary, Error> {
        if let Some(m) = self.identity {
            return Ok(ModeUnitary::identity(m));
        }
        if self.beam_splitter {
            return Ok(ModeUnitary::balanced_beam_splitter());
        }
        if let Some(m) = self.random {
            let mut rng = ChaCha8Rng::seed_from_u64(self.useed);
            return ModeUnitary::new(random_unitary(m, &mut rng));
        }
        if let Some(path) = &self.file {
            return cli::read_unitary(path);
        }
        Err(Error::InvalidConfig(
            "no unitary source given (--identity, --beam-splitter, --random, or --file)".into(),
        ))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical Fock basis and its dimension.
    Basis {
        /// Photon count N.
        photons: usize,
        /// Mode count M.
        modes: usize,
    },

    /// Print the transfer matrix of a circuit on the full N-photon basis.
    Render {
        /// Photon count N.
        #[arg(long, default_value_t = 1)]
        photons: usize,
        #[command(flatten)]
        unitary: UnitarySource,
    },

    /// Brute-force expansion of one input state (debugging aid).
    #[command(hide = true)]
    Oracle {
        /// Input occupation, e.g. "1,1".
        #[arg(long)]
        input: String,
        #[command(flatten)]
        unitary: UnitarySource,
    },

    /// Search circuit and ancilla parameters for a sub-operation.
    Optimize {
        /// Sub-operation: c1 | c2 | c3 | c4.
        #[arg(long)]
        gate: String,
        /// Ancilla photons N_a.
        #[arg(long)]
        na: usize,
        /// Ancilla modes M_a.
        #[arg(long)]
        ma: usize,
        /// Restarts per projector candidate.
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        /// Reproducibility seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated merit weights, e.g. "0.1,1.0".
        #[arg(long, default_value = "0.1,1.0")]
        eps: String,
        /// Explicit projector outcome(s), e.g. "1,1" (repeatable).
        #[arg(long = "projector")]
        projectors: Vec<String>,
        /// Worker thread count (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Include Kraus matrices in the record.
        #[arg(long)]
        emit_kraus: bool,
        /// Record output path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Optimize over a grid of ancilla resources.
    Sweep {
        /// Sub-operation: c1 | c2 | c3 | c4.
        #[arg(long)]
        gate: String,
        /// Ancilla photon range, e.g. "1..3" or "2".
        #[arg(long)]
        na: String,
        /// Ancilla mode range, e.g. "1..3" or "2".
        #[arg(long)]
        ma: String,
        /// Comma-separated merit weights.
        #[arg(long, default_value = "0.1,1.0")]
        eps: String,
        /// Restarts per projector candidate and grid point.
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Joint-dimension guard; bigger grid points are skipped.
        #[arg(long, default_value_t = DIMENSION_GUARD)]
        guard: usize,
        /// Output path for the entry list (JSON).
        #[arg(long)]
        out: PathBuf,
    },

    /// CSV of composed CNOT_first,last success probabilities p(q).
    Figure {
        /// Comma-separated sub-operations, e.g. "c1,c2,c3,c4".
        #[arg(long)]
        sub_ops: String,
        /// Block-size range, e.g. "1..4".
        #[arg(long)]
        q: String,
        /// Use the published per-application success values.
        #[arg(long)]
        paper_constants: bool,
        /// Result records supplying per-application success values.
        #[arg(long = "records")]
        records: Vec<PathBuf>,
        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Recompute a record's measures from its stored parameters.
    Verify {
        /// Record path.
        record: PathBuf,
    },
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::ResourceGuard { .. } => cli::EXIT_RESOURCE_GUARD as u8,
        _ => cli::EXIT_INVALID_CONFIG as u8,
    }
}

fn run(command: Command) -> Result<u8, Error> {
    let stdout = std::io::stdout();
    match command {
        Command::Basis { photons, modes } => {
            cmd_basis(photons, modes, &mut stdout.lock())?;
            Ok(cli::EXIT_OK as u8)
        }
        Command::Render { photons, unitary } => {
            let u = unitary.build()?;
            cmd_render(&u, photons, &mut stdout.lock())?;
            Ok(cli::EXIT_OK as u8)
        }
        Command::Oracle { input, unitary } => {
            let u = unitary.build()?;
            let occupation: Occupation = input.parse()?;
            cmd_oracle(&u, &occupation, &mut stdout.lock())?;
            Ok(cli::EXIT_OK as u8)
        }
        Command::Optimize {
            gate,
            na,
            ma,
            restarts,
            seed,
            eps,
            projectors,
            jobs,
            emit_kraus,
            out,
        } => {
            let config = OptimizeConfig {
                gate,
                ancilla_photons: na,
                ancilla_modes: ma,
                epsilons: parse_f64_list(&eps)?,
                restarts,
                seed,
                projectors,
                jobs,
                emit_kraus,
            };
            let record = cmd_optimize(&config, &out)?;
            let outcome = &record.payload.outcome;
            println!(
                "gate {} N_a={} M_a={} projector=({})",
                record.payload.config.gate,
                record.payload.config.ancilla_photons,
                record.payload.config.ancilla_modes,
                outcome.projector
            );
            for subspace in &outcome.subspaces {
                println!(
                    "  N_c={} F={} S={}",
                    subspace.photons,
                    cli::fmt_f64(subspace.fidelity),
                    cli::fmt_f64(subspace.success)
                );
            }
            println!(
                "record written to {} ({})",
                out.display(),
                if outcome.passed {
                    "fidelity filter passed"
                } else {
                    "no exact solution found"
                }
            );
            Ok(if outcome.passed {
                cli::EXIT_OK as u8
            } else {
                cli::EXIT_FILTER_UNMET as u8
            })
        }
        Command::Sweep {
            gate,
            na,
            ma,
            eps,
            restarts,
            seed,
            guard,
            out,
        } => {
            let sub_op = photonforge::gates::SubOp::parse(&gate)?;
            cmd_sweep(
                sub_op,
                &parse_range(&na)?,
                &parse_range(&ma)?,
                &parse_f64_list(&eps)?,
                restarts,
                seed,
                guard,
                &out,
                &mut stdout.lock(),
            )?;
            println!("sweep entries written to {}", out.display());
            Ok(cli::EXIT_OK as u8)
        }
        Command::Figure {
            sub_ops,
            q,
            paper_constants,
            records,
            out,
        } => {
            let source = if paper_constants {
                FigureSource::PaperConstants
            } else if !records.is_empty() {
                let loaded = records
                    .iter()
                    .map(|p| ResultRecord::read(p))
                    .collect::<Result<Vec<_>, _>>()?;
                FigureSource::Records(loaded)
            } else {
                return Err(Error::InvalidConfig(
                    "give --paper-constants or at least one --records file".into(),
                ));
            };
            let csv = cmd_figure(&parse_sub_ops(&sub_ops)?, &parse_range(&q)?, &source)?;
            match out {
                Some(path) => std::fs::write(&path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(cli::EXIT_OK as u8)
        }
        Command::Verify { record } => {
            let loaded = ResultRecord::read(&record)?;
            let report = cmd_verify(&loaded)?;
            for line in &report.lines {
                println!("{line}");
            }
            Ok(if report.passed {
                cli::EXIT_OK as u8
            } else {
                cli::EXIT_FILTER_UNMET as u8
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
