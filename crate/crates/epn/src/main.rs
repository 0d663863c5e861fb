use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{error::ErrorKind, Args, Parser, Subcommand};
use epn::config::{AlgorithmChoice, ChildOrderChoice, NsChoice, RunConfig};
use epn::core::{
    replay_with_store, split, EpnSnapshot, EventType, GSquareTest, IndependenceTest, Memoized, NoPruning,
    NsMode, SplitSpec,
};
use epn::driver::build;
use epn::format::{prediction_records, read_epn, read_store, write_epn, write_report_csv, write_report_json, write_store};
use epn::ingest::{generate_synthetic, read_path, write_generic_csv, InputFormat, SyntheticSpec};
use epn::parallel::parallel_replay;
use epn::Error;

#[derive(Parser)]
#[command(name = "epn", version, about = "Event precedence networks: build, query, evaluate")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Default)]
struct Overrides {
    /// Window period T.
    #[arg(long, global = true)]
    period: Option<f64>,
    #[arg(short, long, global = true)]
    k: Option<usize>,
    /// Comma-separated k sweep for `evaluate`.
    #[arg(long, global = true, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Confidence level of the G² test.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    store_capacity: Option<usize>,
    /// Largest condition set used in CI tests.
    #[arg(long, global = true)]
    cond_cap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    ns_mode: Option<NsChoice>,
    #[arg(long, global = true, value_enum)]
    algorithm: Option<AlgorithmChoice>,
    #[arg(long, global = true, value_enum)]
    child_order: Option<ChildOrderChoice>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    #[arg(long, global = true)]
    max_delta: Option<u32>,
    /// Input format: auto, msnbc, cascade or csv.
    #[arg(long, global = true)]
    format: Option<InputFormat>,
    /// Accuracy-only multi-threaded evaluation (timing columns are zero).
    #[arg(long, global = true)]
    parallel: bool,
    /// Disable caching of CI verdicts during evaluation.
    #[arg(long, global = true)]
    no_memo: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build an EPN file (and optionally a sample store) from an event stream.
    Build {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the presence-sample store.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Rank the most likely next event types after the given causes.
    Predict {
        epn: PathBuf,
        /// Comma-separated cause type names, oldest first.
        #[arg(long, value_delimiter = ',', required = true)]
        causes: Vec<String>,
        /// Sample store for CI pruning; without it no edges are pruned.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Split, build on train, replay test, and report accuracy and runtime.
    Evaluate {
        input: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write a synthetic Markov stream as `timestamp,type,cra` CSV.
    Generate {
        /// TOML synthetic spec.
        #[arg(long, conflicts_with_all = ["chain", "random"])]
        spec: Option<PathBuf>,
        /// Deterministic chain over this many types.
        #[arg(long, conflicts_with = "random")]
        chain: Option<usize>,
        /// Random sparse matrix over this many types.
        #[arg(long)]
        random: Option<usize>,
        #[arg(long, default_value_t = 3)]
        out_degree: usize,
        #[arg(long, default_value_t = 0.2)]
        absorb: f64,
        #[arg(long, default_value_t = 1000)]
        partitions: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the ground-truth matrices as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Dump an EPN file.
    Inspect {
        epn: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(m) => Failure::Usage(m),
            e => Failure::Data(e),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.period {
        c.window_period = v;
    }
    if let Some(v) = o.k {
        c.k = v;
    }
    if let Some(v) = &o.ks {
        c.ks = Some(v.clone());
    }
    if let Some(v) = o.alpha {
        c.alpha = v;
    }
    if let Some(v) = o.store_capacity {
        c.store_capacity = v;
    }
    if let Some(v) = o.cond_cap {
        c.cond_cap = v;
    }
    if let Some(v) = o.ns_mode {
        c.ns_mode = v;
    }
    if let Some(v) = o.algorithm {
        c.algorithm = v;
    }
    if let Some(v) = o.child_order {
        c.child_order = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = o.train_fraction {
        c.train_fraction = v;
    }
    if let Some(v) = o.max_delta {
        c.max_delta = v;
    }
    if let Some(v) = o.format {
        c.format = v;
    }
    c.parallel |= o.parallel;
    if o.no_memo {
        c.memoize = false;
    }
    match &cli.command {
        Some(Command::Build { output, store, .. }) => {
            c.output = output.clone().or(c.output);
            c.store_output = store.clone().or(c.store_output);
        }
        Some(Command::Evaluate { csv, json, .. }) => {
            c.report_csv = csv.clone().or(c.report_csv);
            c.report_json = json.clone().or(c.report_json);
        }
        _ => {}
    }
    c.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(c)
}

fn run(cli: Cli) -> CmdResult {
    let cfg = effective_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.command {
        None => Err(Failure::Usage("a subcommand is required (see --help)".into())),
        Some(Command::Build { input, .. }) => cmd_build(&cfg, &input),
        Some(Command::Predict { epn, causes, store }) => cmd_predict(&cfg, &epn, &causes, store.as_deref()),
        Some(Command::Evaluate { input, .. }) => cmd_evaluate(&cfg, &input),
        Some(Command::Generate {
            spec,
            chain,
            random,
            out_degree,
            absorb,
            partitions,
            output,
            truth,
        }) => {
            let spec = match (spec, chain, random) {
                (Some(p), _, _) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
                }
                (None, Some(n), _) if n > 0 => SyntheticSpec::chain(n, partitions, cfg.seed),
                (None, None, Some(n)) if n > 0 => {
                    if !(0.0..1.0).contains(&absorb) {
                        return Err(Failure::Usage("--absorb must lie in [0, 1)".into()));
                    }
                    SyntheticSpec::random(n, out_degree, absorb, partitions, cfg.seed)
                }
                _ => return Err(Failure::Usage("give one of --spec, --chain N or --random N (N > 0)".into())),
            };
            cmd_generate(&spec, output.as_deref(), truth.as_deref())
        }
        Some(Command::Inspect { epn, store }) => cmd_inspect(&epn, store.as_deref()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open_epn(path: &Path) -> Result<EpnSnapshot, Failure> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_epn(BufReader::new(f))?)
}

fn open_store(path: &Path) -> Result<epn::core::PresenceSampleStore, Failure> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_store(BufReader::new(f))?)
}

fn cmd_build(cfg: &RunConfig, input: &Path) -> CmdResult {
    let data = read_path(input, cfg.format)?;
    let out = build(&data.registry, &data.events, &cfg.build_config())?;
    match &cfg.output {
        Some(p) => write_epn(create(p)?, &out.snapshot)?,
        None => write_epn(io::stdout().lock(), &out.snapshot)?,
    }
    if let Some(p) = &cfg.store_output {
        write_store(create(p)?, &out.store)?;
    }
    eprintln!("# config {}", cfg.to_json());
    eprintln!(
        "N={} edges={} events={} windows={} rejected={}",
        out.snapshot.n_types(),
        out.snapshot.edge_count(),
        out.snapshot.total_events(),
        out.windows,
        data.stats.rejected
    );
    Ok(())
}

fn resolve_causes(snapshot: &EpnSnapshot, names: &[String]) -> Result<Vec<EventType>, Failure> {
    names
        .iter()
        .map(|n| {
            let n = n.trim();
            snapshot
                .registry()
                .id(n)
                .ok_or_else(|| Failure::Data(Error::Invalid(format!("unknown event type `{n}`"))))
        })
        .collect()
}

fn cmd_predict(cfg: &RunConfig, epn: &Path, causes: &[String], store: Option<&Path>) -> CmdResult {
    let snapshot = open_epn(epn)?;
    let causes = resolve_causes(&snapshot, causes)?;
    let store = store.map(open_store).transpose()?;
    let frozen = store.as_ref().map(|s| s.freeze());
    let g2 = match &frozen {
        Some(f) => Some(GSquareTest::new(f, cfg.alpha, NsMode::from(cfg.ns_mode)).map_err(Error::from)?),
        None => {
            eprintln!("note: no --store given, CI pruning disabled");
            None
        }
    };
    let test: &dyn IndependenceTest = match &g2 {
        Some(t) => t,
        None => &NoPruning,
    };
    let memo = Memoized::new(test);
    let qcfg = cfg.query_config();
    eprintln!("# config {}", cfg.to_json());
    let mut out = io::stdout().lock();
    for alg in cfg.algorithm.algorithms() {
        let t0 = Instant::now();
        let p = alg.run(&snapshot, &causes, &qcfg, &memo).map_err(Error::from)?;
        let elapsed = t0.elapsed().as_secs_f64();
        for rec in prediction_records(alg, &p, snapshot.registry(), elapsed) {
            writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
        }
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, input: &Path) -> CmdResult {
    let data = read_path(input, cfg.format)?;
    let (train, test) = split(
        &data.events,
        &SplitSpec {
            train_fraction: cfg.train_fraction,
            seed: cfg.seed,
        },
    );
    let built = build(&data.registry, &train, &cfg.build_config())?;
    let rcfg = cfg.replay_config(data.registry.len());
    let ns = NsMode::from(cfg.ns_mode);
    let report = if cfg.parallel {
        let frozen = built.store.freeze();
        parallel_replay(&test, &built.snapshot, Some(&frozen), cfg.alpha, ns, &rcfg)?
    } else {
        let origin = Instant::now();
        let clock = move || origin.elapsed().as_nanos() as u64;
        replay_with_store(&test, &built.snapshot, &built.store, cfg.alpha, ns, &rcfg, &clock)
            .map_err(Error::from)?
    };
    let echo = cfg.to_json();
    match &cfg.report_csv {
        Some(p) => write_report_csv(create(p)?, &report, &echo)?,
        None if cfg.report_json.is_none() => write_report_csv(io::stdout().lock(), &report, &echo)?,
        None => {}
    }
    if let Some(p) = &cfg.report_json {
        write_report_json(create(p)?, &report, &echo)?;
    }
    eprintln!(
        "types={} train_events={} test_events={} test_points={} edges={}",
        data.registry.len(),
        train.len(),
        test.len(),
        report.test_points,
        built.snapshot.edge_count()
    );
    Ok(())
}

fn cmd_generate(spec: &SyntheticSpec, output: Option<&Path>, truth: Option<&Path>) -> CmdResult {
    let (data, transition) = generate_synthetic(spec)?;
    match output {
        Some(p) => write_generic_csv(create(p)?, &data.registry, &data.events)?,
        None => write_generic_csv(io::stdout().lock(), &data.registry, &data.events)?,
    }
    if let Some(p) = truth {
        let doc = serde_json::json!({
            "spec": spec,
            "transition": transition,
            "conditional": spec.conditional(),
        });
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &doc).expect("json serializes");
        writeln!(w)?;
    }
    eprintln!("partitions={} events={}", spec.n_partitions, data.events.len());
    Ok(())
}

fn cmd_inspect(epn: &Path, store: Option<&Path>) -> CmdResult {
    let g = open_epn(epn)?;
    let mut out = io::stdout().lock();
    writeln!(out, "types {}  edges {}  events {}", g.n_types(), g.edge_count(), g.total_events())?;
    for (id, name) in g.registry().iter() {
        let kids = g.children(id);
        if kids.is_empty() {
            writeln!(out, "{id} {name}: absorbing")?;
            continue;
        }
        let list: Vec<String> = kids
            .iter()
            .map(|&c| format!("{c} {:.4} ({})", g.prob(id, c), g.frequencies().get(id, c)))
            .collect();
        writeln!(out, "{id} {name} -> {}", list.join(", "))?;
    }
    if let Some(p) = store {
        let s = open_store(p)?;
        let f = s.freeze();
        writeln!(
            out,
            "store: samples {} (capacity {})  distinct {}  events {}",
            s.n_samples(),
            s.capacity(),
            f.distinct(),
            s.n_events_total()
        )?;
    }
    Ok(())
}
