use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgiga_cli::{cmd_list, cmd_run, cmd_sweep, to_csv, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "dgiga", version, about = "Multipatch dG IgA convergence studies")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "DGIGA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case over refinement levels and write `<out>/<case>_k<k>.csv`.
    Run(RunArgs),
    /// Run one case for several degrees.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated degrees.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        degrees: Vec<usize>,
    },
    /// List the registry cases with their expected rates.
    List,
}

/// Flags override values from `--config`, which override the defaults.
#[derive(Args)]
struct RunArgs {
    /// `key = value` file (keys as the long flags; `nitsche`, `vtk` are booleans).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Mesh-size ratio between patches (two_patch_sine).
    #[arg(long)]
    ratio: Option<usize>,
    /// Singularity exponent (radial cases).
    #[arg(long)]
    lambda: Option<f64>,
    /// Grading exponent in (0, 1] toward the singular point.
    #[arg(long)]
    grading: Option<f64>,
    /// Penalty parameter μ (default 2(k+1)(k+d)/d).
    #[arg(long)]
    penalty: Option<f64>,
    /// Gauss points per direction.
    #[arg(long)]
    quad: Option<usize>,
    /// Relative residual tolerance of the iterative solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop the consistency term of the Dirichlet data from the right-hand side.
    #[arg(long)]
    no_nitsche: bool,
    /// Also write the finest solution as VTK, one file per patch.
    #[arg(long)]
    vtk: bool,
}

impl RunArgs {
    fn resolve(&self, threads: Option<usize>) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone().into(); } )* };
        }
        over!(case, degree, levels, tol, out);
        if self.ratio.is_some() {
            c.ratio = self.ratio;
        }
        if self.lambda.is_some() {
            c.lambda = self.lambda;
        }
        if self.grading.is_some() {
            c.grading = self.grading;
        }
        if self.penalty.is_some() {
            c.penalty = self.penalty;
        }
        if self.quad.is_some() {
            c.quad = self.quad;
        }
        if self.no_nitsche {
            c.nitsche = false;
        }
        if self.vtk {
            c.vtk = true;
        }
        if threads.is_some() {
            c.threads = threads;
        }
        Ok(c)
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // a second initialization only fails if the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::List => {
            for line in cmd_list()? {
                println!("{line}");
            }
        }
        Command::Run(args) => {
            let cfg = args.resolve(cli.threads)?;
            init_threads(cfg.threads);
            let records = cmd_run(&cfg)?;
            print!("{}", to_csv(&records));
        }
        Command::Sweep { run, degrees } => {
            let cfg = run.resolve(cli.threads)?;
            init_threads(cfg.threads);
            for (k, records) in cmd_sweep(&cfg, &degrees)? {
                println!("# degree {k}");
                print!("{}", to_csv(&records));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dgiga: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
