use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dimcons::config::{ConfigFile, EtaSpec, ExperimentConfig, Kind, LadderSpec};
use dimcons::experiments;
use dimcons::system::{builtin_systems, load_system};
use dimcons_core::ifs::{self, System};

#[derive(Parser)]
#[command(name = "dimcons", version, about = "Projection and dimension experiments on self-similar sets")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long, global = true, env = "DIMCONS_OUT", default_value = "dimcons-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Box-counting dimension of an attractor against its closed form.
    Dim(ExperimentArgs),
    /// Exceptional-direction counts over a δ-ladder.
    Sweep(ExperimentArgs),
    /// Fat-plane energy over a δ-ladder.
    Energy(ExperimentArgs),
    /// Counting constant over random nets of Gr(n, k).
    Counting(ExperimentArgs),
    /// Almost dimension-conserving check along a coordinate plane.
    AlmostDc(ExperimentArgs),
    /// Transversality scan of the projected family.
    Transversality(ExperimentArgs),
    /// List bundled systems.
    Systems,
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// TOML config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled system name or path to a system file.
    #[arg(long)]
    system: Option<String>,
    /// Scales: `2^-4..2^-8` or a comma list.
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long)]
    net_separation: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fiber dimension Δ.
    #[arg(long)]
    fiber_dimension: Option<f64>,
    /// Comma list of Δ values to scan.
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    /// `fixed:F`, `absolute:V` or `asymptotic:ε,γ,s`.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    oversample: Option<f64>,
    #[arg(long)]
    jitter: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    directions: Option<usize>,
    #[arg(long)]
    word_depth: Option<usize>,
    #[arg(long)]
    axis: Option<usize>,
    /// Scales checked against the brute-force energy.
    #[arg(long)]
    verify: Option<usize>,
    #[arg(long)]
    max_net_scale: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Finite-difference step.
    #[arg(long)]
    step: Option<f64>,
}

fn config_for(kind: Kind, args: ExperimentArgs, out: PathBuf) -> Result<ExperimentConfig, Vec<String>> {
    let mut errs = Vec::new();
    let base = match &args.config {
        Some(p) => ConfigFile::read(p).map_err(|e| e.fields)?,
        None => ConfigFile::default(),
    };
    let eta = args.eta.as_deref().and_then(|e| {
        EtaSpec::parse(e).map_err(|m| errs.push(format!("eta: {m}"))).ok()
    });
    let flags = ConfigFile {
        kind: Some(kind),
        system: args.system,
        ladder: args.ladder.map(LadderSpec::Text),
        net_separation: args.net_separation,
        s: args.s,
        epsilon: args.epsilon,
        fiber_dimension: args.fiber_dimension,
        delta_grid: args.delta_grid,
        eta,
        seed: args.seed,
        output: None,
        n: args.n,
        k: args.k,
        instances: args.instances,
        oversample: args.oversample,
        jitter: args.jitter,
        depth: args.depth,
        directions: args.directions,
        word_depth: args.word_depth,
        axis: args.axis,
        verify: args.verify,
        max_net_scale: args.max_net_scale,
        tolerance: args.tolerance,
        step: args.step,
    };
    match ExperimentConfig::validate(base.overlay(flags), out) {
        Ok(c) if errs.is_empty() => Ok(c),
        Ok(_) => Err(errs),
        Err(e) => {
            errs.extend(e.fields);
            Err(errs)
        }
    }
}

fn list_systems() -> anyhow::Result<()> {
    println!("{:<14} {:>3} {:>10} {:>5} {:>10} {:>6}  description", "name", "n", "dimension", "ssc", "c", "group");
    for sys in builtin_systems() {
        let c = sys.self_similar().and_then(|s| ifs::separation_constant(s, 8));
        let group = match sys.system.as_ref() {
            System::SelfSimilar(_) => ifs::transformation_group(&sys.system, None, 1024)?.order(),
            System::GraphDirected(_) => ifs::transformation_group(&sys.system, Some(0), 1024)?.order(),
        };
        println!(
            "{:<14} {:>3} {:>10.6} {:>5} {:>10} {:>6}  {}",
            sys.name,
            sys.system.dim(),
            sys.dimension(),
            sys.ssc,
            c.map_or("-".into(), |c| format!("{c:.4}")),
            group.map_or("∞".into(), |g| g.to_string()),
            sys.description
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: worker pool: {e}");
        return ExitCode::from(1);
    }
    let (kind, args) = match cli.command {
        Command::Systems => {
            return match list_systems() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            };
        }
        Command::Dim(a) => (Kind::Dim, a),
        Command::Sweep(a) => (Kind::Sweep, a),
        Command::Energy(a) => (Kind::Energy, a),
        Command::Counting(a) => (Kind::Counting, a),
        Command::AlmostDc(a) => (Kind::AlmostDc, a),
        Command::Transversality(a) => (Kind::Transversality, a),
    };
    let config = match config_for(kind, args, cli.out) {
        Ok(c) => c,
        Err(fields) => {
            eprintln!("error: invalid configuration:");
            for f in fields {
                eprintln!("  - {f}");
            }
            return ExitCode::from(2);
        }
    };
    if let Some(spec) = &config.system {
        if let Err(e) = load_system(spec) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match experiments::run(&config) {
        Ok(outcome) => {
            for v in &outcome.verdicts {
                println!("{v}");
            }
            for a in &outcome.artifacts {
                eprintln!("wrote {}", a.display());
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
