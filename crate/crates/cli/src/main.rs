use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use sparsehist::unbounded::release_unbounded;
use sparsehist::verify::{run_suite, CheckReport};
use sparsehist::{
    build_histogram, AbortMode, BitSource, DLapSampler, Dataset, Error, HistMechanism, HistParams,
    NoiseMechanism, RationalParam, Release, Stream, UnboundedParams,
};

#[derive(Parser, Debug)]
#[command(name = "sparsehist", version, about = "Pure-DP sparse histograms and exact noise samplers")]
struct Cli {
    /// 64-bit seed for a reproducible run; OS entropy when absent.
    #[arg(long, env = "SPARSEHIST_SEED", global = true)]
    seed: Option<u64>,

    /// Output path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Release a private histogram of a dataset file.
    Histogram(HistogramArgs),
    /// Draw outputs of the count mechanism for a fixed true count.
    Sample(SampleArgs),
    /// Run the exact verification suite and write a JSON report.
    Verify {
        /// Trim the largest instances.
        #[arg(long)]
        quick: bool,
    },
    /// Time the samplers over a parameter grid.
    Bench {
        /// Calls per grid cell.
        #[arg(long, default_value_t = 10_000)]
        count: u64,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Neighboring {
    /// Fixed dataset size; replace one record.
    Replace,
    /// Unknown dataset size; add or remove one record.
    Addremove,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AbortArg {
    /// Output the fixed histogram over items 1..=n
    FixedOutput,
    /// Redraw the blanket
    Retry,
}

impl From<AbortArg> for AbortMode {
    fn from(a: AbortArg) -> Self {
        match a {
            AbortArg::FixedOutput => AbortMode::FixedOutput,
            AbortArg::Retry => AbortMode::Retry,
        }
    }
}

#[derive(clap::Args, Debug)]
struct HistogramArgs {
    /// Domain size; items are 1..=d.
    #[arg(long)]
    d: u64,
    /// Privacy parameter, as a/b
    #[arg(long)]
    eps: RationalParam,
    /// Failure probability of the count mechanism, as a/b in (0, 1)
    #[arg(long)]
    gamma: RationalParam,
    /// Padding size; defaults to 3n.
    #[arg(long)]
    k: Option<u64>,
    /// Expected record count, checked against the input.
    #[arg(long)]
    n_expected: Option<u64>,
    #[arg(long, value_enum, default_value_t = Neighboring::Replace)]
    neighboring: Neighboring,
    /// Behaviour when the blanket cannot be filled
    #[arg(long, value_enum, default_value_t = AbortArg::FixedOutput)]
    abort_mode: AbortArg,
    /// Privacy budget of the size search (addremove only).
    #[arg(long, default_value = "1/1")]
    eps1: RationalParam,
    /// Failure budget of the size search (addremove only).
    #[arg(long, default_value = "1/10")]
    beta1: RationalParam,
    /// Dataset: one decimal item id per line.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(clap::Args, Debug)]
struct SampleArgs {
    /// Range bound; outputs lie in 0..=n.
    #[arg(long)]
    n: u64,
    /// Privacy parameter, as a/b
    #[arg(long)]
    eps: RationalParam,
    /// Failure probability of the count mechanism, as a/b in (0, 1)
    #[arg(long)]
    gamma: RationalParam,
    /// True count in 0..=n.
    #[arg(long)]
    t: u64,
    /// Number of draws
    #[arg(long, default_value_t = 1)]
    count: u64,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Input(String),
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Input(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ItemOutOfRange { .. } => CliError::Input(e.to_string()),
            Error::PrecisionExhausted { .. } | Error::MassMismatch { .. } => {
                CliError::Invariant(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sparsehist: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let src = match cli.seed {
        Some(s) => BitSource::seeded(s),
        None => BitSource::from_entropy(),
    };
    let mut out = open_output(cli.out.as_deref())?;
    match cli.cmd {
        Command::Histogram(args) => histogram(&args, &src, &mut out)?,
        Command::Sample(args) => sample(&args, src, &mut out)?,
        Command::Verify { quick } => verify(quick, &mut out)?,
        Command::Bench { count } => bench(count, &src, &mut out)?,
    }
    out.flush().map_err(|e| CliError::Config(format!("writing output: {e}")))
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let f = fs::File::create(p)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", p.display())))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> CliResult<()> {
    serde_json::to_writer(&mut *out, value)
        .map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    writeln!(out).map_err(|e| CliError::Config(format!("writing output: {e}")))
}

fn read_dataset(path: &Path, d: u64) -> CliResult<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let item = line.parse::<u64>().map_err(|_| {
            CliError::Input(format!("{}:{}: `{line}` is not an item id", path.display(), lineno + 1))
        })?;
        items.push(item);
    }
    Ok(Dataset::new(d, items)?)
}

#[derive(Serialize)]
struct Header {
    d: u64,
    n: u64,
    k: u64,
    eps: RationalParam,
    gamma: RationalParam,
    tau: Option<u64>,
    aborted: bool,
}

#[derive(Serialize)]
struct Entry {
    item: u64,
    count: u64,
}

fn histogram(args: &HistogramArgs, src: &BitSource, out: &mut dyn Write) -> CliResult<()> {
    let data = read_dataset(&args.input, args.d)?;
    if data.is_empty() {
        return Err(CliError::Input("dataset is empty".into()));
    }
    let (params, release) = match args.neighboring {
        Neighboring::Replace => release_replace(args, &data, src)?,
        Neighboring::Addremove => {
            if args.k.is_some() || args.n_expected.is_some() {
                return Err(CliError::Config(
                    "--k and --n-expected apply to --neighboring replace only".into(),
                ));
            }
            let p = UnboundedParams {
                d: args.d,
                eps: args.eps,
                gamma: args.gamma,
                eps1: args.eps1,
                beta1: args.beta1,
                abort_mode: args.abort_mode.into(),
            };
            let r = release_unbounded(&p, &data, src)?;
            let n_hat = r.n_hat();
            let params = HistParams::new(args.d, n_hat, args.eps, args.gamma)?
                .with_abort_mode(args.abort_mode.into());
            check_release(&HistMechanism::new(params)?, &r.release)?;
            (params, r.release)
        }
    };
    emit(
        out,
        &Header {
            d: params.d,
            n: params.n,
            k: params.k,
            eps: params.eps,
            gamma: params.gamma,
            tau: release.tau,
            aborted: release.aborted,
        },
    )?;
    for &(item, count) in release.histogram.entries() {
        emit(out, &Entry { item, count })?;
    }
    Ok(())
}

fn release_replace(args: &HistogramArgs, data: &Dataset, src: &BitSource) -> CliResult<(HistParams, Release)> {
    let n = data.len() as u64;
    if let Some(expect) = args.n_expected {
        if expect != n {
            return Err(CliError::Input(format!(
                "dataset has {n} records, --n-expected says {expect}"
            )));
        }
    }
    let mut params = HistParams::new(args.d, n, args.eps, args.gamma)?
        .with_abort_mode(args.abort_mode.into());
    if let Some(k) = args.k {
        params = params.with_k(k)?;
    }
    let hm = HistMechanism::new(params)?;
    let release = hm.release_auto(&build_histogram(data), src)?;
    check_release(&hm, &release)?;
    Ok((params, release))
}

/// Re-derives what the header and body must satisfy.
fn check_release(hm: &HistMechanism, r: &Release) -> CliResult<()> {
    let p = hm.params();
    if p.is_sparse() {
        if r.tau != Some(hm.tau()) {
            return Err(CliError::Invariant(format!(
                "released tau {:?} differs from computed tau {}",
                r.tau,
                hm.tau()
            )));
        }
        let want = if r.aborted { p.n } else { p.n + p.k };
        if r.histogram.len() as u64 != want {
            return Err(CliError::Invariant(format!(
                "release has {} entries, expected {want}",
                r.histogram.len()
            )));
        }
    } else if r.histogram.len() as u64 != p.d {
        return Err(CliError::Invariant("dense release does not cover the domain".into()));
    }
    if r.histogram.entries().iter().any(|&(_, c)| c > p.n) {
        return Err(CliError::Invariant("noisy count above n".into()));
    }
    Ok(())
}

fn sample(args: &SampleArgs, mut src: BitSource, out: &mut dyn Write) -> CliResult<()> {
    let m = NoiseMechanism::new(args.n, args.eps, args.gamma)?;
    for _ in 0..args.count {
        let v = m.query(args.t, &mut src)?;
        writeln!(out, "{v}").map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    pass: bool,
    checks: Vec<CheckReport>,
}

fn verify(quick: bool, out: &mut dyn Write) -> CliResult<()> {
    let checks = run_suite(quick)?;
    let pass = checks.iter().all(|c| c.pass);
    let report = VerifyReport { pass, checks };
    serde_json::to_writer_pretty(&mut *out, &report)
        .map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    writeln!(out).map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    if !pass {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(CliError::Invariant(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Cell {
    DLap { eps: (u64, u64), delta: (u64, u64) },
    Mech { n: u64, eps: (u64, u64), gamma: (u64, u64) },
}

#[derive(Serialize)]
struct BenchRow {
    sampler: &'static str,
    params: String,
    calls: u64,
    ns_per_call: f64,
    /// Private bits per call; `None` if calls disagreed.
    bits_per_call: Option<u64>,
}

fn rp(a: u64, b: u64) -> RationalParam {
    RationalParam::new(a, b).expect("positive literal")
}

fn bench_grid() -> Vec<Cell> {
    let mut grid = Vec::new();
    for eps in [(1, 1), (1, 4), (1, 16)] {
        for delta in [(1, 1000), (1, 1_000_000)] {
            grid.push(Cell::DLap { eps, delta });
        }
    }
    for n in [100, 10_000] {
        for eps in [(1, 2), (1, 1)] {
            grid.push(Cell::Mech { n, eps, gamma: (1, 100) });
        }
    }
    grid
}

fn time_calls<F: FnMut(u64, &mut BitSource) -> u64>(
    calls: u64,
    src: &mut BitSource,
    mut f: F,
) -> (f64, Option<u64>) {
    let mut per_call: Option<Option<u64>> = None;
    let mut sink = 0u64;
    let start = Instant::now();
    for i in 0..calls {
        let before = src.private_bits();
        sink ^= f(i, src);
        let used = src.private_bits() - before;
        per_call = match per_call {
            None => Some(Some(used)),
            Some(Some(u)) if u == used => Some(Some(u)),
            _ => Some(None),
        };
    }
    let elapsed = start.elapsed();
    std::hint::black_box(sink);
    (elapsed.as_nanos() as f64 / calls.max(1) as f64, per_call.flatten())
}

fn bench(count: u64, src: &BitSource, out: &mut dyn Write) -> CliResult<()> {
    let grid = bench_grid();
    let rows: Vec<CliResult<BenchRow>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let mut s = src.fork(Stream::Custom(i as u64));
            Ok(match *cell {
                Cell::DLap { eps, delta } => {
                    let sampler = DLapSampler::new(rp(eps.0, eps.1), rp(delta.0, delta.1))?;
                    let (ns, bits) = time_calls(count, &mut s, |_, s| sampler.sample(s) as u64);
                    BenchRow {
                        sampler: "dlap_sample",
                        params: format!("eps={}/{} delta={}/{}", eps.0, eps.1, delta.0, delta.1),
                        calls: count,
                        ns_per_call: ns,
                        bits_per_call: bits,
                    }
                }
                Cell::Mech { n, eps, gamma } => {
                    let m = NoiseMechanism::new(n, rp(eps.0, eps.1), rp(gamma.0, gamma.1))?;
                    let (ns, bits) = time_calls(count, &mut s, |i, s| {
                        m.query(i % (n + 1), s).expect("t in range")
                    });
                    BenchRow {
                        sampler: "mech_query",
                        params: format!("n={n} eps={}/{} gamma={}/{}", eps.0, eps.1, gamma.0, gamma.1),
                        calls: count,
                        ns_per_call: ns,
                        bits_per_call: bits,
                    }
                }
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<CliResult<Vec<_>>>()?;
    serde_json::to_writer_pretty(&mut *out, &rows)
        .map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    writeln!(out).map_err(|e| CliError::Config(format!("writing output: {e}")))?;
    if let Some(r) = rows.iter().find(|r| r.bits_per_call.is_none()) {
        return Err(CliError::Invariant(format!(
            "{} {} drew a data-dependent number of bits",
            r.sampler, r.params
        )));
    }
    Ok(())
}
