use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use mmcache_core::drl::{checkpoint, gradcheck, td_targets, EpsilonSchedule, NetworkShape, QNetwork, Transition};
use mmcache_core::harness::agents::network_shape;
use mmcache_core::harness::results::rows_for;
use mmcache_core::harness::sweep::{assemble, evaluate_grid, sweep, write_outputs};
use mmcache_core::harness::train::{train, write_curve_csv};
use mmcache_core::harness::{generate_trace, replay_trace, run_episode, AgentMode};
use mmcache_core::workload::{read_trace_csv, write_trace_csv};
use mmcache_core::{rng, ExperimentConfig, Scheme};
use rand::Rng;

#[derive(Parser, Debug)]
#[command(name = "mmcache", version, about = "Multi-modal edge caching simulator")]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run with a single seed instead of the configured list. For `train`
    /// it replaces the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to these schemes (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    /// Output directory; defaults to the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Start from the 500-content, 6-node profile instead of the desk one.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the learned schemes and write checkpoints and learning curves.
    Train,
    /// Evaluate schemes over the configured cache sizes and seeds. Learned
    /// schemes load `<out>/<scheme>.qnet`.
    Evaluate {
        /// Also write the request trace of the first seed.
        #[arg(long)]
        save_trace: Option<PathBuf>,
    },
    /// Train, then evaluate every scheme × cache size × seed cell.
    Sweep,
    /// Feed a recorded request trace through the schemes.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Quick internal consistency checks.
    Selftest,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match (&cli.config, cli.full_scale) {
        (Some(_), true) => bail!("--config and --full-scale are mutually exclusive"),
        (Some(path), false) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        (None, true) => ExperimentConfig::full_scale(),
        (None, false) => ExperimentConfig::default(),
    };
    if !cli.scheme.is_empty() {
        config.schemes = cli.scheme.clone();
    }
    if let Some(seed) = cli.seed {
        match cli.command {
            Command::Train => config.training.seed = seed,
            _ => config.seeds = vec![seed],
        }
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn checkpoint_path(dir: &Path, scheme: Scheme) -> PathBuf {
    dir.join(format!("{scheme}.qnet"))
}

fn train_cmd(config: &ExperimentConfig) -> Result<()> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let learned: Vec<Scheme> = config.schemes.iter().copied().filter(|s| s.is_learned()).collect();
    if learned.is_empty() {
        bail!("no learned scheme selected");
    }
    for scheme in learned {
        let agent = train(config, scheme)?;
        checkpoint::save(&agent.network, &checkpoint_path(dir, scheme))?;
        let curve = File::create(dir.join(format!("{scheme}_curve.csv")))?;
        write_curve_csv(&agent.report.curve, BufWriter::new(curve))?;
        println!(
            "{scheme}: {} episodes, kept episode {} (validation unsatisfied ratio {:.4})",
            agent.report.curve.len(),
            agent.report.best_episode,
            agent.report.best_score
        );
    }
    Ok(())
}

fn load_agents(config: &ExperimentConfig) -> Result<BTreeMap<Scheme, QNetwork>> {
    let mut agents = BTreeMap::new();
    for &scheme in config.schemes.iter().filter(|s| s.is_learned()) {
        let path = checkpoint_path(&config.output_dir, scheme);
        let net = checkpoint::load(&path)
            .with_context(|| format!("loading {} (run `train` first)", path.display()))?;
        agents.insert(scheme, net);
    }
    Ok(agents)
}

fn print_cumulative(rows: &[mmcache_core::harness::ResultRow]) {
    for r in rows.iter().filter(|r| r.window_index < 0) {
        match r.snapshot {
            Some(s) => println!(
                "{:<12} {:>5} MB seed {:>3}: hops {:.3} hit {:.4} load {:.4} unsatisfied {:.4}",
                r.scheme.name(),
                r.cache_size_bytes / 1_000_000,
                r.seed,
                s.avg_hops,
                s.hit_ratio,
                s.reduced_load_ratio,
                s.unsatisfied_ratio
            ),
            None => println!("{:<12} {:>5} MB seed {:>3}: no requests", r.scheme.name(), r.cache_size_bytes / 1_000_000, r.seed),
        }
    }
}

fn evaluate_cmd(config: &ExperimentConfig, save_trace: Option<&Path>) -> Result<()> {
    if let Some(path) = save_trace {
        let trace = generate_trace(config, config.seeds[0])?;
        write_trace_csv(&trace, BufWriter::new(File::create(path)?))?;
        info!("wrote {} requests to {}", trace.len(), path.display());
    }
    let agents = load_agents(config)?;
    let result = assemble(evaluate_grid(config, &agents)?, Vec::new());
    write_outputs(&result, &config.output_dir)?;
    print_cumulative(&result.rows);
    Ok(())
}

fn sweep_cmd(config: &ExperimentConfig) -> Result<()> {
    let result = sweep(config)?;
    write_outputs(&result, &config.output_dir)?;
    for report in &result.training {
        let curve = File::create(config.output_dir.join(format!("{}_curve.csv", report.scheme)))?;
        write_curve_csv(&report.curve, BufWriter::new(curve))?;
    }
    print_cumulative(&result.rows);
    Ok(())
}

fn replay_cmd(config: &ExperimentConfig, trace_path: &Path) -> Result<()> {
    let file = File::open(trace_path).with_context(|| format!("opening {}", trace_path.display()))?;
    let trace = read_trace_csv(BufReader::new(file))?;
    let agents = load_agents(config)?;
    let seed = config.seeds[0];
    let mut episodes = Vec::new();
    for &scheme in &config.schemes {
        for &size in &config.cache_sizes_bytes {
            let mode = agents.get(&scheme).map_or(AgentMode::None, AgentMode::Frozen);
            episodes.push(replay_trace(config, scheme, seed, size, mode, &trace)?);
        }
    }
    let result = assemble(episodes, Vec::new());
    write_outputs(&result, &config.output_dir)?;
    print_cumulative(&result.rows);
    Ok(())
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn selftest(config: &ExperimentConfig) -> Result<()> {
    let mut r = rng::stream(1, "selftest");
    let mut ok = true;

    let shape = network_shape(config, Scheme::D3qn).expect("d3qn has a network");
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let net = QNetwork::new(shape.clone(), &mut r);
        let s: Vec<f64> = (0..shape.input_dim).map(|_| r.random::<f64>()).collect();
        let h = net.heads(&s)?;
        let mean = h.q.iter().sum::<f64>() / h.q.len() as f64;
        worst = worst.max((mean - h.value.unwrap_or(mean)).abs());
    }
    ok &= check("dueling identity", worst < 1e-9, format!("max deviation {worst:.2e}"));

    let fixture = |value: f64, adv: [f64; 2]| {
        let mut net = QNetwork::zeros(NetworkShape {
            input_dim: 1,
            hidden: vec![],
            actions: 2,
            dueling: true,
        });
        let mut t = net.tensors_mut();
        t[1][0] = value;
        t[3].copy_from_slice(&adv);
        net
    };
    let tr = Transition {
        state: vec![0.0],
        action: 0,
        reward: 1.0,
        next_state: vec![0.0],
        terminal: false,
    };
    let y = td_targets(&[tr], &fixture(0.0, [0.0, 1.0]), &fixture(2.5, [0.5, -0.5]), 0.99)?;
    ok &= check("double-Q target", y == [2.98], format!("{y:?}"));

    let small = NetworkShape {
        input_dim: shape.input_dim,
        hidden: vec![8, 8],
        actions: shape.actions,
        dueling: true,
    };
    let net = QNetwork::new(small, &mut r);
    let samples: Vec<(Vec<f64>, usize, f64)> = (0..20)
        .map(|_| {
            let s = (0..shape.input_dim).map(|_| r.random::<f64>()).collect();
            (s, r.random_range(0..shape.actions), r.random_range(-2.0..2.0))
        })
        .collect();
    let refs: Vec<_> = samples.iter().map(|(s, a, y)| (s.as_slice(), *a, *y)).collect();
    let g = gradcheck::check_gradient(&net, &refs, 1e-5)?;
    ok &= check(
        "gradient",
        g.max_relative_error < 1e-4,
        format!("max relative error {:.2e}", g.max_relative_error),
    );

    let mut schedule = EpsilonSchedule::new(config.dqn.epsilon);
    let eps = schedule.epsilon(10_000);
    ok &= check("epsilon floor", eps == config.dqn.epsilon.end, format!("{eps}"));

    let mut short = config.clone();
    short.workload.horizon_slots = short.workload.horizon_slots.min(120);
    for scheme in Scheme::ALL {
        let size = config.cache_sizes_bytes[0];
        let res = run_episode(&short, scheme, config.seeds[0], size, AgentMode::None);
        let detail = match &res {
            Ok(e) => format!("{} requests, {} rows", e.counters.requests, rows_for(e).len()),
            Err(e) => e.to_string(),
        };
        ok &= check(&format!("episode {scheme}"), res.is_ok(), detail);
    }
    if !ok {
        bail!("selftest failed");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Train => train_cmd(&config),
        Command::Evaluate { save_trace } => evaluate_cmd(&config, save_trace.as_deref()),
        Command::Sweep => sweep_cmd(&config),
        Command::Replay { trace } => replay_cmd(&config, trace),
        Command::Selftest => selftest(&config),
    }
}
