use std::collections::BTreeSet;
use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use packsim_core::bench::synth::{write_dataset, SynthConfig};
use packsim_core::bench::{
    load_episodes, run_suite, BenchSettings, MethodSpec, ObjectLibrary, SuiteConfig,
};
use packsim_core::container::{read_heightmap, write_heightmap_csv};
use packsim_core::episode::PolicyView;
use packsim_core::sequence::{
    beam3_plan, greedy_plan, load_demos, sample_plan, PlanItem, DEFAULT_SMOOTHING,
};
use packsim_core::wire::{serve, Session};
use packsim_core::{Env, PackError, RewardConfig, TransitionMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// `println!` that stops quietly when stdout is closed early.
macro_rules! out {
    ($($arg:tt)*) => {{
        let mut stdout = std::io::stdout().lock();
        if let Err(e) = writeln!(stdout, $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            return Err(PackError::Io { path: PathBuf::from("<stdout>"), source: e });
        }
    }};
}

#[derive(Parser)]
#[command(
    name = "pack",
    version,
    about = "Irregular object packing: benchmarks, sequencing and placement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run methods over test episodes and write report.csv, traces and plots.
    Bench(BenchArgs),
    /// Order a set of objects from demonstration sequences.
    Plan(PlanArgs),
    /// Place one object into a saved heightmap.
    Place(PlaceArgs),
    /// Speak the line-delimited JSON protocol on stdin/stdout or TCP.
    Serve(ServeArgs),
    /// Write a synthetic dataset: meshes, manifest, demonstrations, episodes.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BoxArgs {
    /// Settings file (TOML or JSON) with container, reward and heuristic tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Heightmap cell size in meters, overriding the settings file.
    #[arg(long)]
    cell: Option<f64>,
    /// Reward: simple, c, or cs<alpha> such as cs0.6.
    #[arg(long)]
    reward: Option<RewardConfig>,
}

impl BoxArgs {
    fn settings(&self) -> Result<BenchSettings, PackError> {
        let mut s = match &self.config {
            Some(path) => BenchSettings::load(path)?,
            None => BenchSettings::default(),
        };
        if let Some(cell) = self.cell {
            s.container.cell_size = cell;
            s.container.validate()?;
        }
        if let Some(reward) = self.reward {
            s.reward = reward;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    /// Demonstrations, needed by the greedy, beam3 and sampled planners.
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Comma-separated methods, e.g. blbf-so2,blbf-so3,beam3+policy.
    #[arg(long, value_delimiter = ',', required = true)]
    methods: Vec<MethodSpec>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to PACK_THREADS, then the core count.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
    #[command(flatten)]
    container: BoxArgs,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    demos: PathBuf,
    /// Comma-separated objects, either `id=category` or manifest ids.
    #[arg(long, value_delimiter = ',', required = true)]
    objects: Vec<String>,
    /// Resolves bare ids to categories.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Greedy one-step lookahead instead of the width-3 beam.
    #[arg(long, conflicts_with = "stochastic")]
    greedy: bool,
    /// Sample each next object from the renormalized top three.
    #[arg(long)]
    stochastic: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
    /// Also write the transition matrix as JSON.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

#[derive(Args)]
struct PlaceArgs {
    /// Heightmap snapshot, CSV in meters or 16-bit PGM.
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    object: String,
    #[arg(long)]
    manifest: PathBuf,
    /// blbf-so2, blbf-so3 or yaw-scan.
    #[arg(long, default_value = "blbf-so2")]
    method: MethodSpec,
    /// Write the updated heightmap as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    container: BoxArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Listen on this address instead of stdin/stdout, one client at a time.
    #[arg(long)]
    tcp: Option<String>,
    #[command(flatten)]
    container: BoxArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().episodes)]
    episodes: usize,
    #[arg(long, default_value_t = SynthConfig::default().demos)]
    demos: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => bench(a),
        Command::Plan(a) => plan(a),
        Command::Place(a) => place(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn matrix_for(
    library: &ObjectLibrary,
    demos: &Path,
    smoothing: f64,
) -> Result<TransitionMatrix, PackError> {
    let categories: BTreeSet<&str> = library.iter().map(|m| m.category.as_str()).collect();
    let categories: Vec<&str> = categories.into_iter().collect();
    TransitionMatrix::build(&categories, &load_demos(demos)?, smoothing)
}

fn bench(a: BenchArgs) -> Result<(), PackError> {
    let library = ObjectLibrary::load(&a.manifest)?;
    let episodes = load_episodes(&a.episodes, &library)?;
    let matrix = match &a.demos {
        Some(d) => Some(Arc::new(matrix_for(&library, d, a.smoothing)?)),
        None => None,
    };
    let cfg = SuiteConfig {
        methods: a.methods,
        seeds: a.seeds,
        threads: a.threads,
        ..a.container.settings()?.suite()
    };
    let report = run_suite(&library, &episodes, matrix, &cfg)?;
    report.write_all(&a.out)?;
    out!(
        "{:<24} {:>8} {:>14} {:>14} {:>16}",
        "method",
        "success",
        "objects",
        "compactness",
        "latency ms"
    );
    for s in &report.summaries {
        let c = match (s.compactness_mean, s.compactness_std) {
            (Some(m), Some(d)) => format!("{m:.3} ({d:.3})"),
            _ => "-".into(),
        };
        out!(
            "{:<24} {:>7.1}% {:>14} {:>14} {:>16}",
            s.method,
            s.success_rate,
            format!("{:.2} ({:.2})", s.objects_mean, s.objects_std),
            c,
            format!("{:.2} ({:.2})", s.latency_mean_ms, s.latency_std_ms),
        );
    }
    out!(
        "{:<24} {:>8} {:>14}",
        "reference",
        "",
        format!("{:.2} ({:.2})", report.reference.0, report.reference.1)
    );
    out!("wrote {}", a.out.join("report.csv").display());
    Ok(())
}

fn plan(a: PlanArgs) -> Result<(), PackError> {
    let library = a.manifest.as_deref().map(ObjectLibrary::load).transpose()?;
    let items = a
        .objects
        .iter()
        .map(|o| match (o.split_once('='), &library) {
            (Some((id, category)), _) => Ok(PlanItem::new(id.trim(), category.trim())),
            (None, Some(lib)) => lib
                .get(o.trim())
                .map(|m| PlanItem::new(&m.id, &m.category))
                .ok_or_else(|| PackError::Manifest(format!("unknown object id {o:?}"))),
            (None, None) => Err(PackError::Config(format!(
                "{o:?} needs `=category` or --manifest"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut categories: BTreeSet<String> = items.iter().map(|i| i.category.clone()).collect();
    if let Some(lib) = &library {
        categories.extend(lib.iter().map(|m| m.category.clone()));
    }
    let categories: Vec<String> = categories.into_iter().collect();
    let matrix = TransitionMatrix::build(&categories, &load_demos(&a.demos)?, a.smoothing)?;
    if let Some(path) = &a.matrix_out {
        std::fs::write(path, matrix.to_json()?).map_err(|source| PackError::Io {
            path: path.clone(),
            source,
        })?;
    }
    let plan = if a.stochastic {
        sample_plan(&matrix, &items, &mut ChaCha8Rng::seed_from_u64(a.seed))?
    } else if a.greedy {
        greedy_plan(&matrix, &items)?
    } else {
        beam3_plan(&matrix, &items)?
    };
    out!("{}", serde_json::to_string_pretty(&plan)?);
    Ok(())
}

fn place(a: PlaceArgs) -> Result<(), PackError> {
    let library = ObjectLibrary::load(&a.manifest)?;
    let object = library.resolve(std::slice::from_ref(&a.object))?;
    let settings = a.container.settings()?;
    let cfg = settings.suite();
    let state = read_heightmap(cfg.env.container, &a.state)?;
    let mut env = Env::new(cfg.env)?;
    env.reset_on(object.clone(), state, 0)?;
    let mut policy = a.method.policy(&cfg.heuristic, cfg.random_spread)?;
    let decision = policy.act(&PolicyView {
        state: env.state(),
        object: &object[0],
        upcoming: &[],
        observation: None,
        cache: env.cache(),
        step: 0,
    })?;
    let t = env.apply(decision)?;
    let settle = t.settle;
    out!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "object": a.object,
            "method": a.method.name,
            "status": t.status,
            "pose": t.pose,
            "tilt_deg": settle.map(|s| s.tilt_deg),
            "stable": settle.map(|s| s.stable),
            "reward": t.reward,
        }))?
    );
    if let Some(out) = &a.out {
        write_heightmap_csv(env.state(), out)?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<(), PackError> {
    let library = Arc::new(ObjectLibrary::load(&a.manifest)?);
    let cfg = a.container.settings()?.suite().env;
    let Some(addr) = &a.tcp else {
        let mut session = Session::new(library, cfg)?;
        return serve(
            &mut session,
            std::io::stdin().lock(),
            std::io::stdout().lock(),
        );
    };
    let io = |source| PackError::Io {
        path: PathBuf::from(addr),
        source,
    };
    let listener = TcpListener::bind(addr).map_err(io)?;
    eprintln!("listening on {}", listener.local_addr().map_err(io)?);
    for stream in listener.incoming() {
        let stream = stream.map_err(io)?;
        let mut session = Session::new(Arc::clone(&library), cfg.clone())?;
        let reader = BufReader::new(stream.try_clone().map_err(io)?);
        if let Err(e) = serve(&mut session, reader, &stream) {
            eprintln!("client dropped: {e}");
        }
        let _ = (&stream).flush();
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), PackError> {
    let cfg = SynthConfig {
        episodes: a.episodes,
        demos: a.demos,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let paths = write_dataset(&a.out, &cfg)?;
    out!("manifest  {}", paths.manifest.display());
    out!("demos     {}", paths.demos.display());
    out!("episodes  {}", paths.episodes.display());
    Ok(())
}
