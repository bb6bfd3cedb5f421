use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elastodpg::study::{dump_mesh, run_adaptive, run_convergence, run_infsup, Refinement, RunConfig};
use elastodpg::{Error, Result};

#[derive(Parser)]
#[command(name = "elastodpg", version, about = "DPG finite elements for plane-strain elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uniform refinement study; writes a convergence CSV.
    Converge(RunArgs),
    /// Residual-driven adaptive study; writes a convergence CSV.
    Adapt(RunArgs),
    /// Discrete inf-sup table over three levels and both boundary regimes.
    Infsup(RunArgs),
    /// Writes the benchmark mesh as legacy VTK.
    DumpMesh {
        #[command(flatten)]
        run: RunArgs,
        /// Uniform refinements applied before writing.
        #[arg(long, default_value_t = 0)]
        levels: usize,
        #[arg(long)]
        path: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    formulation: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    dp: Option<String>,
    #[arg(long)]
    p_res: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    n0: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    rate_window: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        let flags = [
            ("benchmark", &self.benchmark),
            ("formulation", &self.formulation),
            ("p", &self.p),
            ("dp", &self.dp),
            ("p_res", &self.p_res),
            ("steps", &self.steps),
            ("n0", &self.n0),
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("rate_window", &self.rate_window),
            ("output", &self.output),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, v, 0)?;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Converge(args) => {
            let mut c = args.resolve()?;
            c.refinement = Refinement::Uniform;
            let rec = run_convergence(&c)?;
            for r in &rec.rows {
                eprintln!("step {} dofs {} eta {:.4e} error {:.4e} ({:.2}s)", r.step, r.dofs, r.eta, r.rel_error, r.wall_time);
            }
            println!("error_slope {:.6} eta_slope {:.6}", rec.error_slope, rec.eta_slope);
        }
        Command::Adapt(args) => {
            let mut c = args.resolve()?;
            c.refinement = Refinement::Adaptive;
            let rec = run_adaptive(&c)?;
            for r in &rec.rows {
                eprintln!("step {} dofs {} marked {} eta {:.4e} error {:.4e}", r.step, r.dofs, r.marked, r.eta, r.rel_error);
            }
            println!("error_slope {:.6} eta_slope {:.6}", rec.error_slope, rec.eta_slope);
        }
        Command::Infsup(args) => {
            let c = args.resolve()?;
            for r in run_infsup(&c)? {
                let regime = if r.gamma0 { "gamma0" } else { "free" };
                println!("{} level {} {regime} gamma_h {:.6e}", r.formulation.name(), r.level, r.gamma_h);
            }
        }
        Command::DumpMesh { run, levels, path } => {
            let c = run.resolve()?;
            let mesh = dump_mesh(&c, levels, &path)?;
            println!("{} triangles written to {}", mesh.num_triangles(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message=\"{}\"", e.kind(), msg.replace('"', "'"));
            ExitCode::FAILURE
        }
    }
}
