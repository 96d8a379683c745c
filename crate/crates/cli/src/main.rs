use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use prores::dynamics::{self, DynamicsConfig, Initial, Rule};
use prores::equilibrium::{self, EquilibriumCertificate, SolveOptions};
use prores::market::{generate_random, GenParams, RhoSpec};
use prores::rates::{self, RateCertificate, TheoremId};
use prores::{Market, SpendingState};

/// Proportional response dynamics for CES Fisher markets.
#[derive(Parser)]
#[command(name = "prores", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a random market instance.
    Generate(GenerateArgs),
    /// Iterate a response rule and write the trace.
    Run(RunArgs),
    /// Compute an equilibrium certificate.
    Solve(SolveArgs),
    /// Check first-order equilibrium conditions of a spending matrix.
    Verify(VerifyArgs),
    /// Check a convergence-rate certificate along a trajectory.
    Bounds(BoundsArgs),
    /// Two-buyer example where the generalized rule cycles.
    CycleDemo(CycleArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Number of buyers.
    #[arg(long)]
    m: usize,
    /// Number of goods.
    #[arg(long)]
    n: usize,
    /// substitutes:LO,HI | complements:LO,HI | mixed | full-range | grid:R1,R2,.. | fixed:R | linear | cobb-douglas | leontief
    #[arg(long, default_value = "substitutes:0.2,0.8")]
    rho: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct RunArgs {
    #[arg(long)]
    market: PathBuf,
    /// pr | damped-pr | generalized-pr
    #[arg(long, default_value = "damped-pr")]
    rule: String,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Equilibrium certificate (or bare spending matrix) used for gap columns.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Starting spending matrix; uniform when absent.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Stop early once the potential gap to the reference is below this.
    #[arg(long, default_value_t = 0.0)]
    stop_gap: f64,
    /// Also write spending snapshots as JSON lines.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    market: PathBuf,
    /// Potential stagnation tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    verify_tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    market: PathBuf,
    /// Certificate or bare spending matrix.
    #[arg(long)]
    spending: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct BoundsArgs {
    #[arg(long)]
    theorem: String,
    #[arg(long)]
    market: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Trace CSV from `run`; the trajectory is recomputed and checked against its phi column.
    #[arg(long, conflicts_with = "snapshots")]
    trace: Option<PathBuf>,
    /// Snapshot JSONL from `run --record-every 1`, used as the trajectory directly.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Horizon when neither a trace nor snapshots are given.
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Bound and empirical series as CSV; one file per certificate.
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CycleArgs {
    #[arg(long, default_value_t = 2)]
    iters: usize,
    #[arg(long, default_value = "generalized-pr")]
    rule: String,
}

enum Failure {
    /// Exit 1.
    Check(String),
    /// Exit 2.
    Usage(String),
}

impl From<prores::Error> for Failure {
    fn from(e: prores::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    market: Option<&'a Path>,
    reference: Option<&'a Path>,
    output_dir: Option<PathBuf>,
    version: &'static str,
}

fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Seed of a generated market, read from its manifest when present.
fn market_seed(market: &Path) -> Option<u64> {
    let text = fs::read_to_string(manifest_path(market)).ok()?;
    serde_json::from_str::<serde_json::Value>(&text).ok()?.get("seed")?.as_u64()
}

fn write_manifest<T: Serialize>(
    artifact: &Path,
    command: &str,
    args: &T,
    seed: Option<u64>,
    market: Option<&Path>,
    reference: Option<&Path>,
) -> io::Result<()> {
    let m = RunManifest {
        command,
        argv: std::env::args().collect(),
        config: serde_json::to_value(args).unwrap_or_default(),
        seed,
        market,
        reference,
        output_dir: artifact
            .parent()
            .map(|d| if d.as_os_str().is_empty() { PathBuf::from(".") } else { d.to_path_buf() }),
        version: env!("CARGO_PKG_VERSION"),
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(manifest_path(artifact), text + "\n")
}

fn emit(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().write_all(text.as_bytes()),
    }
}

/// Accepts an equilibrium certificate or a bare spending matrix.
fn load_spending(path: &Path) -> Result<SpendingState, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Ok(c) = serde_json::from_str::<EquilibriumCertificate>(&text) {
        return Ok(c.spending);
    }
    serde_json::from_str::<SpendingState>(&text)
        .map_err(|e| Failure::Usage(format!("{}: neither a certificate nor a spending matrix ({e})", path.display())))
}

fn load_market(path: &Path) -> Result<Market, Failure> {
    Market::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn summary(m: &Market) -> String {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for b in m.buyers() {
        let name = match b.class {
            prores::UtilityClass::Linear => "linear",
            prores::UtilityClass::SubstitutesCes(_) => "substitutes",
            prores::UtilityClass::CobbDouglas => "cobb_douglas",
            prores::UtilityClass::ComplementsCes(_) => "complements",
            prores::UtilityClass::Leontief => "leontief",
        };
        match counts.iter_mut().find(|(n, _)| n == name) {
            Some((_, c)) => *c += 1,
            None => counts.push((name.to_string(), 1)),
        }
    }
    let classes: Vec<String> = counts.iter().map(|(n, c)| format!("{c} {n}")).collect();
    format!(
        "{} buyers x {} goods ({}), total budget {:.6}",
        m.num_buyers(),
        m.goods(),
        classes.join(", "),
        m.total_budget()
    )
}

fn cmd_generate(a: &GenerateArgs) -> CmdResult {
    let rho: RhoSpec = a.rho.parse().map_err(|e: prores::Error| Failure::Usage(e.to_string()))?;
    let m = generate_random(&GenParams { buyers: a.m, goods: a.n, rho, seed: a.seed })?;
    match &a.output {
        Some(p) => {
            m.save(p)?;
            write_manifest(p, "generate", a, Some(a.seed), None, None)?;
            println!("{}", summary(&m));
        }
        None => println!("{}", m.to_json()),
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> CmdResult {
    let market = load_market(&a.market)?;
    let rule: Rule = a.rule.parse()?;
    let reference = a.reference.as_deref().map(load_spending).transpose()?;
    let initial = match &a.init {
        Some(p) => Initial::Given(load_spending(p)?),
        None => Initial::Uniform,
    };
    let config = DynamicsConfig {
        rule,
        max_iters: a.iters,
        stop_phi_gap: a.stop_gap,
        record_every: a.record_every,
        initial,
        keep_spending: a.snapshots.is_some(),
    };
    let records = dynamics::run(&market, &config, reference.as_ref())?;
    let mut buf = Vec::new();
    dynamics::write_trace_csv(&records, &mut buf)?;
    emit(a.output.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))?;
    let seed = market_seed(&a.market);
    if let Some(p) = &a.output {
        write_manifest(p, "run", a, seed, Some(&a.market), a.reference.as_deref())?;
    }
    if let Some(p) = &a.snapshots {
        dynamics::write_snapshots_jsonl(&records, fs::File::create(p)?)?;
        write_manifest(p, "run", a, seed, Some(&a.market), a.reference.as_deref())?;
    }
    let last = records.last().expect("iteration 0 is always recorded");
    match last.phi_gap {
        Some(g) => eprintln!("{rule}: {} iterations, phi {:.12e}, phi gap {g:.3e}", last.iter, last.phi),
        None => eprintln!("{rule}: {} iterations, phi {:.12e}", last.iter, last.phi),
    }
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> CmdResult {
    if !(a.tol > 0.0 && a.verify_tol > 0.0) || a.max_iters == 0 {
        return Err(Failure::Usage("--tol, --verify-tol and --max-iters must be positive".into()));
    }
    let market = load_market(&a.market)?;
    let opts = SolveOptions { phi_tol: a.tol, verify_tol: a.verify_tol, max_iters: a.max_iters, ..Default::default() };
    let (cert, converged) = match equilibrium::solve_with(&market, &opts) {
        Ok(c) => (c, true),
        Err(prores::Error::NotConverged(c)) => (*c, false),
        Err(e) => return Err(e.into()),
    };
    emit(a.output.as_deref(), &(cert.to_json() + "\n"))?;
    if let Some(p) = &a.output {
        write_manifest(p, "solve", a, market_seed(&a.market), Some(&a.market), None)?;
    }
    eprintln!(
        "valid: {}, clearing residual {:.3e}, best-response residual {:.3e}, {} iterations",
        cert.valid,
        cert.clearing_residual,
        cert.br_residual,
        cert.iterations.unwrap_or(0)
    );
    if converged {
        Ok(())
    } else {
        Err(Failure::Check("iteration cap reached with residuals above tolerance; prices reported".into()))
    }
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let market = load_market(&a.market)?;
    let spending = load_spending(&a.spending)?;
    let cert = equilibrium::verify(&market, &spending, a.tol)?;
    if let Some(p) = &a.output {
        fs::write(p, cert.to_json() + "\n")?;
        write_manifest(p, "verify", a, market_seed(&a.market), Some(&a.market), None)?;
    }
    println!(
        "valid: {}, clearing residual {:.3e}, best-response residual {:.3e}",
        cert.valid, cert.clearing_residual, cert.br_residual
    );
    if cert.valid {
        Ok(())
    } else {
        Err(Failure::Check(format!("not an equilibrium at tolerance {:e}", a.tol)))
    }
}

/// Recomputes the trajectory a trace was produced from and checks its phi column.
fn trajectory_from_trace(market: &Market, rule: Rule, path: &Path) -> Result<Vec<SpendingState>, Failure> {
    let text = fs::read_to_string(path)?;
    let rows = dynamics::read_trace_phi(&text)?;
    let t_max = rows.last().map(|r| r.0).ok_or_else(|| Failure::Usage(format!("{}: empty trace", path.display())))?;
    let traj = dynamics::trajectory(market, rule, &market.uniform_spending(), t_max)?;
    for &(t, phi) in &rows {
        let mine = prores::potential::phi(market, &traj[t])?.phi;
        if (mine - phi).abs() > 1e-9 * (1.0 + phi.abs()) {
            return Err(Failure::Usage(format!(
                "{}: phi at iteration {t} is {phi:e} but {rule} from uniform spending gives {mine:e}; pass --snapshots for other starts",
                path.display()
            )));
        }
    }
    Ok(traj)
}

fn trajectory_from_snapshots(path: &Path) -> Result<Vec<SpendingState>, Failure> {
    let snaps = dynamics::read_snapshots_jsonl(&fs::read_to_string(path)?)?;
    if snaps.is_empty() || snaps.iter().enumerate().any(|(k, s)| s.iter != k) {
        return Err(Failure::Usage(format!("{}: snapshots must cover every iteration from 0", path.display())));
    }
    Ok(snaps.into_iter().map(|s| s.spending).collect())
}

fn series_path(base: &Path, cert: &RateCertificate, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}.{}.{ext}", cert.label))
}

fn cmd_bounds(a: &BoundsArgs) -> CmdResult {
    let theorem: TheoremId = a.theorem.parse()?;
    let market = load_market(&a.market)?;
    let reference = load_spending(&a.reference)?;
    reference.check_against(&market)?;
    let rule = theorem.rule(&market);
    let traj = match (&a.trace, &a.snapshots) {
        (Some(p), _) => trajectory_from_trace(&market, rule, p)?,
        (None, Some(p)) => trajectory_from_snapshots(p)?,
        (None, None) => dynamics::trajectory(&market, rule, &market.uniform_spending(), a.iters)?,
    };
    let certs = rates::certify(theorem, &market, &traj, &reference)?;
    let holds = certs.iter().all(|c| c.holds);
    let report = json!({ "theorem_id": theorem, "rule": rule.to_string(), "holds": holds, "certificates": certs });
    emit(a.output.as_deref(), &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    let seed = market_seed(&a.market);
    if let Some(p) = &a.output {
        write_manifest(p, "bounds", a, seed, Some(&a.market), Some(&a.reference))?;
    }
    if let Some(base) = &a.series {
        for c in &certs {
            let p = series_path(base, c, certs.len() > 1);
            c.write_series_csv(fs::File::create(&p)?)?;
            write_manifest(&p, "bounds", a, seed, Some(&a.market), Some(&a.reference))?;
        }
    }
    for c in &certs {
        eprintln!("{} [{}] T<={}: holds={} max violation {:.3e}", theorem, c.label, c.t_max(), c.holds, c.max_violation);
    }
    if holds {
        Ok(())
    } else {
        Err(Failure::Check(format!("{theorem}: bound violated")))
    }
}

fn cmd_cycle_demo(a: &CycleArgs) -> CmdResult {
    let rule: Rule = a.rule.parse()?;
    let buyer = prores::Buyer::new(prores::UtilityClass::ComplementsCes(-1.0), vec![0.5, 0.5], 1.0);
    let market = Market::new(2, vec![buyer.clone(), buyer])?;
    let b0 = SpendingState::from_rows(vec![vec![0.25, 0.75], vec![0.75, 0.25]])?;
    let traj = dynamics::trajectory(&market, rule, &b0, a.iters)?;
    println!("rule {rule}, rho -1, a = (1/2, 1/2), e = (1, 1)");
    println!("{:>4}  {:>20} {:>20} {:>20} {:>20}", "t", "b11", "b12", "b21", "b22");
    for (t, b) in traj.iter().enumerate() {
        let r = b.rows();
        println!("{t:>4}  {:>20.17} {:>20.17} {:>20.17} {:>20.17}", r[0][0], r[0][1], r[1][0], r[1][1]);
    }
    let period2 = traj.len() > 2 && traj.windows(3).all(|w| w[0].max_abs_diff(&w[2]) <= 1e-14) && traj[0].max_abs_diff(&traj[1]) > 1e-14;
    if period2 {
        println!("period 2 confirmed over {} iterations", a.iters);
    } else if let Some(last) = traj.last() {
        let prev = &traj[traj.len().saturating_sub(2)];
        println!("no cycle; last step moved {:.3e}", last.max_abs_diff(prev));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PRORES_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Bounds(a) => cmd_bounds(a),
        Cmd::CycleDemo(a) => cmd_cycle_demo(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
