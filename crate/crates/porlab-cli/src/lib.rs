//! Command-line front end: argument parsing, config layering, thread-pool
//! setup, output routing, and the exit-code contract (0 success, 1 input
//! error, 2 invariant violation, 3 failed hypothesis).

mod config;
mod tasks;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use porlab::{Error, Result};

use config::{Effective, RunConfig};
use tasks::TaskOutput;

#[derive(Debug, Parser)]
#[command(
    name = "porlab",
    version,
    about = "Dyadic-cube porosity and distance-weight diagnostics on finite metric measure spaces"
)]
struct Cli {
    /// Cap the worker thread count (PORLAB_THREADS is honored when the
    /// flag is absent)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for every randomized routine
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory to write the JSON report and CSV tables into
    /// (default: JSON on stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Omit the wall-clock stamp so reruns are byte-identical
    #[arg(long, global = true)]
    no_stamp: bool,

    /// JSON config file; explicit flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Deliberately corrupt an internal structure to exercise the
    /// invariant-violation exit path
    #[arg(long, global = true, hide = true)]
    inject_fault: Option<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Args)]
struct SpaceArgs {
    /// Space spec: cross:Tmax=48,h=1/64 | segment:N=64,h=0.001 |
    /// cantor:level=5 | cloud:n=500,dim=2,seed=1 | file:points.csv
    #[arg(long)]
    space: Option<String>,

    /// Target set spec: default | empty | all | ids:0,5,9 | point:0,0
    #[arg(long)]
    set: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct DyadicArgs {
    /// Scale ratio between consecutive generations, in (0,1)
    #[arg(long)]
    theta: Option<f64>,

    /// Net separation coefficient
    #[arg(long)]
    c0: Option<f64>,

    /// Net covering coefficient (>= c0)
    #[arg(long)]
    cover: Option<f64>,

    /// Number of adjacent grids
    #[arg(long)]
    grids: Option<usize>,

    /// Family depth M for cube decompositions
    #[arg(long)]
    depth: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Build an adjacent system of dyadic cube grids and audit it
    BuildDyadic {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        dyadic: DyadicArgs,
    },

    /// Run a named selection of analyses as one bundled report
    Analyze {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        dyadic: DyadicArgs,
        /// Comma-separated: dyadic-check,holes,porosity,keysum,weight,exponent,example71
        #[arg(long, value_delimiter = ',')]
        analyses: Option<Vec<String>>,
        /// Weight exponent for the weight/exponent analyses
        #[arg(long)]
        alpha: Option<f64>,
        /// Integrability exponent p (1 = A1)
        #[arg(long)]
        p: Option<f64>,
        /// Porosity scale parameter delta in (0,1]
        #[arg(long)]
        delta: Option<f64>,
        /// Sampled ball count
        #[arg(long)]
        balls: Option<usize>,
        /// Sample count for the neighbourhood exponent
        #[arg(long)]
        samples: Option<usize>,
    },

    /// Sweep porosity certificates over sampled balls; prints a CSV
    /// frontier (delta, worst c, witness ball)
    PorosityScan {
        #[command(flatten)]
        space: SpaceArgs,
        /// Deltas to sweep, comma-separated (fractions allowed)
        #[arg(long, value_delimiter = ',')]
        delta: Option<Vec<String>>,
        /// Sampled ball count
        #[arg(long)]
        balls: Option<usize>,
    },

    /// Certify one ball: greedy free-ball packing at the given delta
    Certify {
        #[command(flatten)]
        space: SpaceArgs,
        /// Center point, as a set spec naming one point (e.g. point:3,0)
        #[arg(long)]
        center: String,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        delta: Option<f64>,
    },

    /// Decompose from every top cube and check the truncated key sum
    Keysum {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        dyadic: DyadicArgs,
        /// Generation step bound to test (default: the measured one)
        #[arg(long)]
        step_bound: Option<u32>,
    },

    /// Muckenhoupt characteristic for the weight dist(.,set)^(-alpha)
    CheckWeight {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        alpha: f64,
        /// Integrability exponent p (1 = A1)
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        balls: Option<usize>,
        /// Resolution ladder (coarse to fine, comma-separated) for a
        /// refinement trend of the constant
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<String>>,
    },

    /// Neighbourhood-decay exponent of the target set
    Exponent {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        samples: Option<usize>,
    },

    /// Recompute the four branch-space reference claims and verify them
    Example71 {
        /// Arm length of the branch space
        #[arg(long, default_value_t = 48)]
        tmax: u32,
        /// Grid resolution (fractions allowed)
        #[arg(long, default_value = "1/64")]
        h: String,
    },

    /// Classify the target as absolutely porous or not via the
    /// family-depth sweep against the measured threshold
    Absolute {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        dyadic: DyadicArgs,
        /// Largest family depth to try
        #[arg(long, default_value_t = 4)]
        max_depth: u32,
    },

    /// Run every analysis and emit all tables (analyze with everything on)
    Report {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        dyadic: DyadicArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        balls: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("porlab: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let base = match &cli.config {
        Some(path) => Effective::from_file(&config::load(path)?),
        None => Effective::from_file(&RunConfig::default()),
    };
    let stamp = !cli.no_stamp;
    let fault = cli.inject_fault.as_deref();
    let out = resolve(&cli, base)?;
    emit(cli.out.as_deref(), run_task(out, stamp, fault)?)
}

struct Resolved {
    eff: Effective,
    task: Task,
}

enum Task {
    BuildDyadic,
    Analyze,
    PorosityScan(Vec<f64>),
    Certify { center: String, radius: f64 },
    Keysum { step_bound: Option<u32> },
    CheckWeight,
    Exponent,
    Example71,
    Absolute { max_depth: u32 },
    Report,
}

fn parse_fraction(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad number {s:?}")))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad number {s:?}")))?;
        if d == 0.0 {
            return Err(Error::input(format!("zero denominator in {s:?}")));
        }
        Ok(n / d)
    } else {
        s.parse()
            .map_err(|_| Error::input(format!("bad number {s:?}")))
    }
}

fn parse_fractions(list: &[String]) -> Result<Vec<f64>> {
    list.iter().map(|s| parse_fraction(s)).collect()
}

fn apply_space(eff: &mut Effective, args: &SpaceArgs) {
    if let Some(s) = &args.space {
        eff.space = s.clone();
    }
    if let Some(s) = &args.set {
        eff.set = s.clone();
    }
}

fn apply_dyadic(eff: &mut Effective, args: &DyadicArgs) {
    if let Some(v) = args.theta {
        eff.theta = v;
    }
    if let Some(v) = args.c0 {
        eff.c0 = v;
    }
    if let Some(v) = args.cover {
        eff.cover = v;
    }
    if let Some(v) = args.grids {
        eff.grids = v;
    }
    if let Some(v) = args.depth {
        eff.depth = v;
    }
}

fn resolve(cli: &Cli, mut eff: Effective) -> Result<Resolved> {
    if let Some(seed) = cli.seed {
        eff.seed = seed;
    }
    let task = match &cli.cmd {
        Cmd::BuildDyadic { space, dyadic } => {
            apply_space(&mut eff, space);
            apply_dyadic(&mut eff, dyadic);
            Task::BuildDyadic
        }
        Cmd::Analyze {
            space,
            dyadic,
            analyses,
            alpha,
            p,
            delta,
            balls,
            samples,
        } => {
            apply_space(&mut eff, space);
            apply_dyadic(&mut eff, dyadic);
            if let Some(list) = analyses {
                eff.analyses = list.clone();
            }
            if let Some(v) = alpha {
                eff.alpha = *v;
            }
            if let Some(v) = p {
                eff.p = *v;
            }
            if let Some(v) = delta {
                eff.delta = *v;
            }
            if let Some(v) = balls {
                eff.balls = *v;
            }
            if let Some(v) = samples {
                eff.samples = *v;
            }
            Task::Analyze
        }
        Cmd::PorosityScan { space, delta, balls } => {
            apply_space(&mut eff, space);
            if let Some(v) = balls {
                eff.balls = *v;
            }
            let deltas = match delta {
                Some(list) => parse_fractions(list)?,
                None => vec![eff.delta],
            };
            Task::PorosityScan(deltas)
        }
        Cmd::Certify {
            space,
            center,
            radius,
            delta,
        } => {
            apply_space(&mut eff, space);
            if let Some(v) = delta {
                eff.delta = *v;
            }
            Task::Certify {
                center: center.clone(),
                radius: *radius,
            }
        }
        Cmd::Keysum {
            space,
            dyadic,
            step_bound,
        } => {
            apply_space(&mut eff, space);
            apply_dyadic(&mut eff, dyadic);
            Task::Keysum {
                step_bound: *step_bound,
            }
        }
        Cmd::CheckWeight {
            space,
            alpha,
            p,
            balls,
            ladder,
        } => {
            apply_space(&mut eff, space);
            eff.alpha = *alpha;
            if let Some(v) = p {
                eff.p = *v;
            }
            if let Some(v) = balls {
                eff.balls = *v;
            }
            if let Some(list) = ladder {
                eff.ladder = parse_fractions(list)?;
            }
            Task::CheckWeight
        }
        Cmd::Exponent { space, samples } => {
            apply_space(&mut eff, space);
            if let Some(v) = samples {
                eff.samples = *v;
            }
            Task::Exponent
        }
        Cmd::Example71 { tmax, h } => {
            let h = parse_fraction(h)?;
            eff.space = format!("cross:Tmax={tmax},h={h}");
            eff.set = "default".to_string();
            // one half-scale grid is enough to measure the cube constants
            eff.theta = 0.5;
            eff.grids = 1;
            Task::Example71
        }
        Cmd::Absolute {
            space,
            dyadic,
            max_depth,
        } => {
            apply_space(&mut eff, space);
            apply_dyadic(&mut eff, dyadic);
            Task::Absolute {
                max_depth: *max_depth,
            }
        }
        Cmd::Report {
            space,
            dyadic,
            alpha,
            p,
            delta,
            balls,
            samples,
        } => {
            apply_space(&mut eff, space);
            apply_dyadic(&mut eff, dyadic);
            if let Some(v) = alpha {
                eff.alpha = *v;
            }
            if let Some(v) = p {
                eff.p = *v;
            }
            if let Some(v) = delta {
                eff.delta = *v;
            }
            if let Some(v) = balls {
                eff.balls = *v;
            }
            if let Some(v) = samples {
                eff.samples = *v;
            }
            eff.analyses = vec![
                "dyadic-check".to_string(),
                "holes".to_string(),
                "porosity".to_string(),
                "keysum".to_string(),
                "weight".to_string(),
                "exponent".to_string(),
            ];
            Task::Report
        }
    };
    Ok(Resolved { eff, task })
}

fn run_task(resolved: Resolved, stamp: bool, fault: Option<&str>) -> Result<TaskOutput> {
    let eff = &resolved.eff;
    match resolved.task {
        Task::BuildDyadic => tasks::build_dyadic(eff, stamp, fault),
        Task::Analyze => tasks::analyze(eff, stamp, fault, "analyze"),
        Task::PorosityScan(deltas) => tasks::porosity_scan_task(eff, stamp, &deltas),
        Task::Certify { center, radius } => tasks::certify(eff, stamp, &center, radius),
        Task::Keysum { step_bound } => tasks::keysum(eff, stamp, fault, step_bound),
        Task::CheckWeight => tasks::check_weight(eff, stamp),
        Task::Exponent => tasks::exponent(eff, stamp),
        Task::Example71 => tasks::example71(eff, stamp),
        Task::Absolute { max_depth } => tasks::classify_absolute(eff, stamp, max_depth),
        Task::Report => tasks::analyze(eff, stamp, fault, "report"),
    }
}

fn emit(out: Option<&std::path::Path>, output: TaskOutput) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::input(format!("cannot create {}: {e}", dir.display())))?;
            let write = |name: String, text: &str| -> Result<()> {
                let path = dir.join(name);
                std::fs::write(&path, text)
                    .map_err(|e| Error::input(format!("cannot write {}: {e}", path.display())))
            };
            write(format!("{}.json", output.kind), &output.json)?;
            for (name, table) in &output.tables {
                write(format!("{name}.csv"), table)?;
            }
        }
        None => match &output.stdout_csv {
            Some(csv) => print!("{csv}"),
            None => print!("{}", output.json),
        },
    }
    Ok(())
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("PORLAB_THREADS") {
            Ok(raw) => Some(raw.parse::<usize>().map_err(|_| {
                Error::input(format!(
                    "PORLAB_THREADS must be a positive integer, got {raw:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::input("thread count must be positive"));
        }
        // a second call in the same process keeps the first pool; fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_version_exit_zero_and_bad_flags_exit_one() {
        assert_eq!(run(["porlab", "--help"]), 0);
        assert_eq!(run(["porlab", "--version"]), 0);
        assert_eq!(run(["porlab", "frobnicate"]), 1);
        assert_eq!(run(["porlab", "exponent", "--no-such-flag"]), 1);
    }

    #[test]
    fn fraction_parse_accepts_both_forms() {
        assert_eq!(parse_fraction("1/64").unwrap(), 1.0 / 64.0);
        assert_eq!(parse_fraction("0.25").unwrap(), 0.25);
        assert!(parse_fraction("x").is_err());
        assert!(parse_fraction("1/0").is_err());
    }

    #[test]
    fn report_selects_every_analysis() {
        let cli = Cli::try_parse_from(["porlab", "report", "--space", "segment:N=2,h=1/16"])
            .unwrap();
        let resolved = resolve(&cli, Effective::default()).unwrap();
        assert_eq!(resolved.eff.analyses.len(), 6);
        assert!(matches!(resolved.task, Task::Report));
    }

    #[test]
    fn seed_flag_reaches_the_effective_config() {
        let cli = Cli::try_parse_from([
            "porlab",
            "--seed",
            "9",
            "exponent",
            "--space",
            "segment:N=2,h=1/16",
        ])
        .unwrap();
        let resolved = resolve(&cli, Effective::default()).unwrap();
        assert_eq!(resolved.eff.seed, 9);
        assert_eq!(resolved.eff.space, "segment:N=2,h=1/16");
    }
}
