//! `credal`: run credal two-sample tests and rejection-rate sweeps.

mod settings;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter};

use anyhow::{bail, Context, Result};
use clap::Parser;

use credal::experiment::{run_experiment_with, ExperimentConfig, RecordWriter};
use credal::io::{read_credal_sample, read_grouped};
use credal::{
    adaptive_split_ratio, equality_test, inclusion_test, plausibility_test, specification_test, Bandwidth,
    CredalSample, CredalTestConfig, Hypothesis, NullMethod, ScenarioSpec, SplitMode, TestKind, TestReport,
};

use settings::{Cli, Command, Common, ExperimentArgs, Hyp, Kind, Mode, Null, RatioArgs, TestArgs};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Test(mut args) => {
            args.apply_config()?;
            set_threads(&args.common)?;
            run_test(&args)
        }
        Command::Experiment(mut args) => {
            args.apply_config()?;
            set_threads(&args.common)?;
            run_sweep(&args)
        }
        Command::Ratio(args) => run_ratio(&args),
    }
}

fn set_threads(c: &Common) -> Result<()> {
    if let Some(t) = c.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn test_config(c: &Common) -> CredalTestConfig {
    let mut cfg = CredalTestConfig {
        alpha: c.alpha,
        permutations: c.permutations,
        seed: c.seed,
        null_method: match c.null {
            Null::Wild => NullMethod::WildBootstrap,
            Null::Permutation => NullMethod::Permutation,
        },
        bandwidth: c.bandwidth.map_or(Bandwidth::Median, Bandwidth::Fixed),
        ..Default::default()
    };
    cfg.split.beta = c.beta;
    cfg.split.mode = match c.mode {
        Mode::Split => SplitMode::Split,
        Mode::DoubleDip => SplitMode::DoubleDip,
    };
    cfg
}

fn kind(k: Kind) -> TestKind {
    match k {
        Kind::Spec => TestKind::Specification,
        Kind::Incl => TestKind::Inclusion,
        Kind::Eq => TestKind::Equality,
        Kind::Plaus => TestKind::Plausibility,
    }
}

fn read_side(paths: &[std::path::PathBuf], group_col: Option<usize>) -> Result<(CredalSample, Option<Vec<i64>>)> {
    match group_col {
        Some(col) => {
            if paths.len() != 1 {
                bail!("with --group-col each side must be a single file");
            }
            let (s, labels) = read_grouped(&paths[0], col)?;
            Ok((s, Some(labels)))
        }
        None => Ok((read_credal_sample(paths, None)?, None)),
    }
}

fn run_test(args: &TestArgs) -> Result<()> {
    let cfg = test_config(&args.common);
    let (sx, gx) = read_side(&args.x, args.group_col)?;
    let (sy, gy) = read_side(&args.y, args.group_col)?;
    let mut report = match kind(args.kind) {
        TestKind::Specification => {
            if sx.len() != 1 {
                bail!("the specification test takes a single X sample, got {} extreme points", sx.len());
            }
            specification_test(sx.extreme(0), &sy, &cfg)?
        }
        TestKind::Inclusion => inclusion_test(&sx, &sy, &cfg)?,
        TestKind::Equality => equality_test(&sx, &sy, &cfg)?,
        TestKind::Plausibility => plausibility_test(&sx, &sy, &cfg)?,
    };
    report.metadata.insert("sizes_x".into(), format!("{:?}", sx.sizes()));
    report.metadata.insert("sizes_y".into(), format!("{:?}", sy.sizes()));
    if let Some(g) = gx {
        report.metadata.insert("groups_x".into(), format!("{g:?}"));
    }
    if let Some(g) = gy {
        report.metadata.insert("groups_y".into(), format!("{g:?}"));
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", render(&report, 0));
    }
    Ok(())
}

fn render(r: &TestReport, depth: usize) -> String {
    let pad = "  ".repeat(depth);
    let mut s = String::new();
    let _ = writeln!(s, "{pad}test: {}", r.test);
    let _ = writeln!(s, "{pad}decision: {}", r.decision);
    let _ = writeln!(s, "{pad}p_value: {}", r.p_value);
    let _ = writeln!(s, "{pad}statistic: {}", r.statistic);
    let _ = writeln!(s, "{pad}alpha: {}", r.alpha);
    let _ = writeln!(s, "{pad}permutations: {}", r.permutations_used);
    for (k, v) in &r.metadata {
        let _ = writeln!(s, "{pad}{k}: {v}");
    }
    for (i, sub) in r.sub_reports.iter().enumerate() {
        let _ = writeln!(s, "{pad}sub_report[{i}]:");
        s.push_str(&render(sub, depth + 1));
    }
    s
}

fn run_sweep(args: &ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        scenario: ScenarioSpec {
            kind: kind(args.kind),
            hypothesis: match args.hypothesis {
                Hyp::Null => Hypothesis::Null,
                Hyp::Alt => Hypothesis::Alternative,
            },
            d: args.dim,
            r: args.r,
            l: args.l,
            df: args.df,
            linearly_dependent: args.linearly_dependent,
            ..Default::default()
        },
        n_grid: args.n_grid.clone(),
        beta_grid: args.beta_grid.clone(),
        repetitions: args.reps,
        test: test_config(&args.common),
        master_seed: args.common.seed,
        fresh_means: !args.frozen_means,
        timing: args.timing,
    };
    cfg.validate()?;
    let sink: Box<dyn io::Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout()),
    };
    let mut w = RecordWriter::new(sink)?;
    run_experiment_with(&cfg, |rec| w.write(rec))?;
    Ok(())
}

fn run_ratio(args: &RatioArgs) -> Result<()> {
    let r = adaptive_split_ratio(args.n, args.beta, 1e-8, 100)?;
    println!("n: {}", r.n);
    println!("beta: {}", r.beta);
    println!("n_e_real: {}", r.n_e_real);
    println!("n_e: {}", r.n_e);
    println!("n_t: {}", r.n_t);
    println!("rho: {}", r.rho);
    println!("iterations: {}", r.iterations);
    Ok(())
}
