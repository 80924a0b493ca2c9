//! Front-end binary: run the generators, tabulate closed-form references,
//! analyze recorded series, and grade estimates against thresholds.
//!
//! Exit codes: 0 success / all comparisons pass, 1 a graded comparison
//! failed, 2 bad invocation, 3 runtime error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ticklab_cli::presets::{self, Overrides};
use ticklab_core::boltzmann::{self, ProfileGrid};
use ticklab_core::collect::SeriesCollector;
use ticklab_core::estimators::{fit_exponential_tail, fit_linear, fit_loglog, MsdCurve, SeriesMoments, SignStats};
use ticklab_core::meanfield::{self, Variant};
use ticklab_core::model::Derived;
use ticklab_core::oracle;
use ticklab_core::output::{read_table, write_table};
use ticklab_core::report::{compare, Threshold};
use ticklab_core::{micro, Error, IntervalMode, Result, SimConfig, SpreadLaw};

#[derive(Parser)]
#[command(
    name = "ticklab",
    version,
    about = "Order-book tick simulators, kinetic book solver, and estimator toolkit"
)]
struct Cli {
    /// Worker threads for ensemble fan-out (0 = library default). Results
    /// are identical for any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the order-book ensemble and record the transaction series.
    Simulate(SimulateCmd),
    /// Run the tick-time Langevin generator.
    Meanfield(MeanfieldCmd),
    /// Relax the kinetic book equation to its steady state.
    Boltzmann(BoltzmannCmd),
    /// Tabulate closed-form reference curves and constants.
    Oracle(OracleCmd),
    /// Estimator battery over a recorded transaction series.
    Analyze(AnalyzeCmd),
    /// Run a named experiment and grade it against its references.
    Preset(PresetCmd),
    /// Grade an estimates file against references and thresholds.
    Compare(CompareCmd),
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum LawKind {
    Point,
    Gamma,
}

#[derive(Copy, Clone, ValueEnum)]
enum ModeKind {
    Plain,
    Improved,
}

impl From<ModeKind> for IntervalMode {
    fn from(m: ModeKind) -> Self {
        match m {
            ModeKind::Plain => IntervalMode::Plain,
            ModeKind::Improved => IntervalMode::Improved,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum VariantKind {
    Hyperbolic,
    Ema,
    Linear,
}

#[derive(Copy, Clone, ValueEnum)]
enum InitKind {
    Nlo,
    Tent,
    Uniform,
}

#[derive(Copy, Clone, ValueEnum)]
enum OracleKind {
    /// Steady ask-side book density and its mirror.
    Book,
    /// Transaction-interval law (pdf and ccdf, tau in units of tau*).
    Interval,
    /// Finite-crowd boundary-layer profile near the requote points.
    Layer,
    /// Derived scalar constants for a (law, N, sigma) triple.
    Constants,
}

/// Run configuration assembled from an optional JSON file plus flag
/// overrides; flags win field by field.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of traders.
    #[arg(long)]
    n: Option<usize>,
    /// Transactions to record per replica.
    #[arg(long)]
    ticks: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent replicas, each with fresh spreads and noise.
    #[arg(long)]
    replicas: Option<usize>,
    /// Mid-price noise amplitude.
    #[arg(long)]
    sigma: Option<f64>,
    /// Spread law family.
    #[arg(long, value_enum)]
    law: Option<LawKind>,
    /// Spread-law scale parameter.
    #[arg(long)]
    scale: Option<f64>,
    /// Lower spread truncation (gamma law only).
    #[arg(long)]
    lo: Option<f64>,
    /// Upper spread truncation (gamma law only).
    #[arg(long)]
    hi: Option<f64>,
    /// Dimensionless trend strength; pairs with --dp-tilde.
    #[arg(long, requires = "dp_tilde")]
    c_tilde: Option<f64>,
    /// Dimensionless saturation scale; pairs with --c-tilde.
    #[arg(long, requires = "c_tilde")]
    dp_tilde: Option<f64>,
    /// Raw trend velocity (takes precedence over the dimensionless pair).
    #[arg(long)]
    c: Option<f64>,
    /// Raw saturation scale (takes precedence over the dimensionless pair).
    #[arg(long)]
    dp_star: Option<f64>,
    /// Integration step (absolute time).
    #[arg(long)]
    dt: Option<f64>,
    /// Relaxation time discarded before recording.
    #[arg(long)]
    warmup: Option<f64>,
    /// Book snapshot spacing (absolute time).
    #[arg(long)]
    snapshot_interval: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<SimConfig> {
        let mut cfg: SimConfig = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => SimConfig::new(100, SpreadLaw::gamma(1.0), 100_000),
        };
        if self.law.is_some() || self.scale.is_some() || self.lo.is_some() || self.hi.is_some() {
            let kind = match self.law {
                Some(k) => k,
                None => match cfg.law {
                    SpreadLaw::PointMass { .. } => LawKind::Point,
                    SpreadLaw::Gamma { .. } => LawKind::Gamma,
                },
            };
            let scale = self.scale.unwrap_or_else(|| cfg.law.scale());
            cfg.law = match kind {
                LawKind::Point => {
                    if self.lo.is_some() || self.hi.is_some() {
                        return Err(Error::InvalidConfig(
                            "spread truncation applies to the gamma law only".into(),
                        ));
                    }
                    SpreadLaw::point(scale)
                }
                LawKind::Gamma => SpreadLaw::Gamma { scale, lo: self.lo, hi: self.hi },
            };
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        if let Some(t) = self.ticks {
            cfg.ticks = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.replicas {
            cfg.replicas = r;
        }
        if self.dt.is_some() {
            cfg.dt = self.dt;
        }
        if self.warmup.is_some() {
            cfg.warmup = self.warmup;
        }
        if self.snapshot_interval.is_some() {
            cfg.snapshot_interval = self.snapshot_interval;
        }
        // trend knobs last: the dimensionless pair is resolved against the
        // final law/n/sigma, and raw values override even that
        if let (Some(ct), Some(dt)) = (self.c_tilde, self.dp_tilde) {
            cfg = cfg.with_trend(ct, dt);
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(d) = self.dp_star {
            cfg.dp_star = d;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Artifact filename prefix.
    #[arg(long, default_value = "run")]
    tag: String,
}

#[derive(Args)]
struct MeanfieldCmd {
    #[command(flatten)]
    config: ConfigArgs,
    /// Trend response form.
    #[arg(long, value_enum, default_value_t = VariantKind::Hyperbolic)]
    variant: VariantKind,
    /// Averaging time for the ema variant (0 = last increment).
    #[arg(long, default_value_t = 0.0)]
    tau_ema: f64,
    /// Transaction-interval law.
    #[arg(long, value_enum, default_value_t = ModeKind::Plain)]
    mode: ModeKind,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "meanfield")]
    tag: String,
}

#[derive(Args)]
struct BoltzmannCmd {
    #[arg(long, value_enum, default_value_t = LawKind::Gamma)]
    law: LawKind,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Crowd size entering the collision rate.
    #[arg(long, default_value_t = 800.0)]
    n: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Mesh spacing; defaults to the per-law resolution bound.
    #[arg(long)]
    h: Option<f64>,
    /// Spread-law quadrature classes (gamma law).
    #[arg(long, default_value_t = boltzmann::DEFAULT_BINS)]
    bins: usize,
    /// Domain half-width in units of the largest class spread.
    #[arg(long, default_value_t = boltzmann::DEFAULT_CUT_FACTOR)]
    cut_factor: f64,
    /// Steady-state residual target (L1 change per unit time).
    #[arg(long, default_value_t = 2e-3)]
    tol: f64,
    /// Give up after this much diffusion time.
    #[arg(long, default_value_t = 10.0)]
    max_time: f64,
    /// Initial condition.
    #[arg(long, value_enum, default_value_t = InitKind::Nlo)]
    init: InitKind,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "boltzmann")]
    tag: String,
}

#[derive(Args)]
struct OracleCmd {
    #[arg(value_enum)]
    kind: OracleKind,
    #[arg(long, value_enum, default_value_t = LawKind::Gamma)]
    law: LawKind,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Interval-law variant (interval kind only).
    #[arg(long, value_enum, default_value_t = ModeKind::Plain)]
    mode: ModeKind,
    /// Grid points per curve.
    #[arg(long, default_value_t = 257)]
    points: usize,
    /// Output path; constants print to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeCmd {
    /// Series table produced by `simulate` or `meanfield`.
    #[arg(long)]
    input: PathBuf,
    /// Autocorrelation depth.
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Compute the tick MSD and its fits.
    #[arg(long)]
    msd: bool,
    /// MSD fit window as LO,HI lags.
    #[arg(long, value_parser = parse_window, default_value = "1,32")]
    msd_window: (f64, f64),
    /// Fit an exponential tail to |dp|.
    #[arg(long)]
    tail: bool,
    /// Tail fit window as LO,HI (absolute |dp|); default [2 rms, 6 rms].
    #[arg(long, value_parser = parse_window)]
    tail_window: Option<(f64, f64)>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PresetCmd {
    /// Preset name; see --list.
    name: Option<String>,
    /// List available presets.
    #[arg(long)]
    list: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for artifacts.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Override the per-run tick budget.
    #[arg(long)]
    ticks: Option<u64>,
    /// Override the replica count.
    #[arg(long)]
    replicas: Option<usize>,
    /// Cheap coarse variant for smoke testing.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct CompareCmd {
    /// JSON map: key -> value or [value, stderr].
    #[arg(long)]
    estimates: PathBuf,
    /// JSON map: key -> reference value.
    #[arg(long)]
    references: PathBuf,
    /// JSON map: key -> threshold, e.g. {"kind":"rel_tol","tol":0.1}.
    #[arg(long)]
    thresholds: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("bad LO: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("bad HI: {e}"))?;
    if hi > lo {
        Ok((lo, hi))
    } else {
        Err("need HI > LO".into())
    }
}

fn usage(msg: impl std::fmt::Display) -> Result<ExitCode> {
    eprintln!("error: {msg}");
    Ok(ExitCode::from(2))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
        if let Err(e) = pool {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Simulate(c) => run_simulate(c),
        Cmd::Meanfield(c) => run_meanfield(c),
        Cmd::Boltzmann(c) => run_boltzmann(c),
        Cmd::Oracle(c) => run_oracle(c),
        Cmd::Analyze(c) => run_analyze(c),
        Cmd::Preset(c) => run_preset_cmd(c),
        Cmd::Compare(c) => run_compare(c),
    }
}

fn diag_json(diag: &micro::RunDiag, replicas: usize) -> serde_json::Value {
    json!({
        "steps": diag.steps,
        "stale_events": diag.stale_events,
        "coalesced_ticks": diag.coalesced_ticks,
        "quenched_wait_mean": diag.quenched_wait_sum / replicas as f64,
    })
}

fn derived_json(d: &Derived) -> serde_json::Value {
    json!({
        "l_rho_sq": d.l_rho_sq,
        "tau_star": d.tau_star,
        "alpha2": d.alpha2,
        "diffusion": d.diffusion,
    })
}

fn write_series(
    out: &Path,
    tag: &str,
    meta: &serde_json::Value,
    col: &SeriesCollector,
) -> Result<PathBuf> {
    let s = &col.series;
    let tick: Vec<f64> = s.tick.iter().map(|&v| v as f64).collect();
    let mut cols: Vec<(&str, &[f64])> = vec![
        ("tick", &tick),
        ("t", &s.t),
        ("p", &s.p),
        ("dp", &s.dp),
    ];
    if col.waits.len() == s.p.len() {
        cols.push(("wait", &col.waits));
    }
    let path = out.join(format!("{tag}_series.csv"));
    write_table(&path, meta, &cols)?;
    Ok(path)
}

fn run_simulate(c: SimulateCmd) -> Result<ExitCode> {
    let cfg = match c.config.resolve() {
        Ok(cfg) => cfg,
        Err(e) => return usage(e),
    };
    fs::create_dir_all(&c.out)?;
    let (col, diag) = micro::run_ensemble(&cfg, SeriesCollector::new)?;
    let meta = json!({ "command": "simulate", "config": serde_json::to_value(&cfg)? });
    let series = write_series(&c.out, &c.tag, &meta, &col)?;
    let run = json!({
        "command": "simulate",
        "config": serde_json::to_value(&cfg)?,
        "derived": derived_json(&cfg.derived()),
        "diag": diag_json(&diag, cfg.replicas),
    });
    let run_path = c.out.join(format!("{}_run.json", c.tag));
    fs::write(&run_path, serde_json::to_string_pretty(&run)? + "\n")?;
    println!(
        "wrote {} and {} ({} transactions, {} replicas)",
        series.display(),
        run_path.display(),
        col.series.p.len(),
        cfg.replicas
    );
    Ok(ExitCode::SUCCESS)
}

fn run_meanfield(c: MeanfieldCmd) -> Result<ExitCode> {
    let cfg = match c.config.resolve() {
        Ok(cfg) => cfg,
        Err(e) => return usage(e),
    };
    let variant = match c.variant {
        VariantKind::Hyperbolic => Variant::Hyperbolic,
        VariantKind::Ema => Variant::Ema { tau_ema: c.tau_ema },
        VariantKind::Linear => Variant::Linear,
    };
    let variant_json = match variant {
        Variant::Hyperbolic => json!("hyperbolic"),
        Variant::Ema { tau_ema } => json!({ "ema": { "tau_ema": tau_ema } }),
        Variant::Linear => json!("linear"),
    };
    let mode: IntervalMode = c.mode.into();
    fs::create_dir_all(&c.out)?;
    let col: SeriesCollector = meanfield::run_ensemble(&cfg, variant, mode, SeriesCollector::new)?;
    let meta = json!({
        "command": "meanfield",
        "config": serde_json::to_value(&cfg)?,
        "variant": variant_json,
        "mode": format!("{mode:?}"),
    });
    let series = write_series(&c.out, &c.tag, &meta, &col)?;
    let run = json!({
        "command": "meanfield",
        "config": serde_json::to_value(&cfg)?,
        "variant": variant_json,
        "mode": format!("{mode:?}"),
        "derived": derived_json(&cfg.derived()),
    });
    let run_path = c.out.join(format!("{}_run.json", c.tag));
    fs::write(&run_path, serde_json::to_string_pretty(&run)? + "\n")?;
    println!("wrote {} and {}", series.display(), run_path.display());
    Ok(ExitCode::SUCCESS)
}

fn build_law(kind: LawKind, scale: f64, lo: Option<f64>, hi: Option<f64>) -> Result<SpreadLaw> {
    match kind {
        LawKind::Point => {
            if lo.is_some() || hi.is_some() {
                return Err(Error::InvalidConfig(
                    "spread truncation applies to the gamma law only".into(),
                ));
            }
            Ok(SpreadLaw::point(scale))
        }
        LawKind::Gamma => Ok(SpreadLaw::Gamma { scale, lo, hi }),
    }
}

fn run_boltzmann(c: BoltzmannCmd) -> Result<ExitCode> {
    let law = match build_law(c.law, c.scale, c.lo, c.hi) {
        Ok(law) => law,
        Err(e) => return usage(e),
    };
    let h = c.h.unwrap_or(
        c.scale
            * match c.law {
                LawKind::Point => boltzmann::DEFAULT_H_POINT,
                LawKind::Gamma => boltzmann::DEFAULT_H_GAMMA,
            },
    );
    let mut grid = ProfileGrid::for_law(&law, c.n, c.sigma, h, c.cut_factor, c.bins)?;
    match c.init {
        InitKind::Tent => grid.init_tent(),
        InitKind::Uniform => grid.init_uniform(),
        InitKind::Nlo => {
            let l_rho_sq = Derived::new(&law, c.n.round().max(1.0) as usize, c.sigma).l_rho_sq;
            grid.init_nlo(l_rho_sq);
        }
    }
    let report = grid.solve_steady(c.tol, c.max_time)?;
    fs::create_dir_all(&c.out)?;
    let law_tag = match c.law {
        LawKind::Point => "point",
        LawKind::Gamma => "gamma",
    };
    let csv = presets::write_profiles(&c.out, &c.tag, law_tag, &grid, &report)?;
    let rep_json = serde_json::to_value(&report)?;
    let run = json!({
        "command": "boltzmann",
        "law": serde_json::to_value(&law)?,
        "n_traders": c.n,
        "sigma": c.sigma,
        "grid": { "h": grid.h, "half_width": grid.half_width, "nodes": grid.nodes() },
        "convergence": rep_json,
    });
    let run_path = c.out.join(format!("{}_report.json", c.tag));
    fs::write(&run_path, serde_json::to_string_pretty(&run)? + "\n")?;
    println!("wrote {} and {}", csv.display(), run_path.display());
    if run["convergence"]["converged"] != json!(true) {
        eprintln!("warning: residual target not reached within --max-time");
    }
    Ok(ExitCode::SUCCESS)
}

fn run_oracle(c: OracleCmd) -> Result<ExitCode> {
    let law = match build_law(c.law, c.scale, c.lo, c.hi) {
        Ok(law) => law,
        Err(e) => return usage(e),
    };
    if c.points < 2 {
        return usage("--points must be at least 2");
    }
    let derived = Derived::new(&law, c.n, c.sigma);
    let meta = json!({
        "command": "oracle",
        "law": serde_json::to_value(&law)?,
        "n": c.n,
        "sigma": c.sigma,
    });
    let grid = |lo: f64, hi: f64| -> Vec<f64> {
        let step = (hi - lo) / (c.points - 1) as f64;
        (0..c.points).map(|i| lo + step * i as f64).collect()
    };
    match c.kind {
        OracleKind::Book => {
            let out = match &c.out {
                Some(p) => p,
                None => return usage("--out is required for curve tables"),
            };
            let half = 4.0 * law.mean_spread();
            let r = grid(-half, half);
            let ask: Vec<f64> = r.iter().map(|&x| oracle::book_profile(&law, x)).collect();
            let bid: Vec<f64> = r.iter().map(|&x| oracle::book_profile(&law, -x)).collect();
            write_table(out, &meta, &[("r", &r), ("ask", &ask), ("bid", &bid)])?;
            println!("wrote {}", out.display());
        }
        OracleKind::Interval => {
            let out = match &c.out {
                Some(p) => p,
                None => return usage("--out is required for curve tables"),
            };
            let mode: IntervalMode = c.mode.into();
            let x = grid(0.0, 8.0);
            let pdf: Vec<f64> = x.iter().map(|&v| oracle::interval_pdf(v, 1.0, mode)).collect();
            let ccdf: Vec<f64> = x.iter().map(|&v| oracle::interval_ccdf(v, 1.0, mode)).collect();
            let meta = json!({
                "command": "oracle",
                "mode": format!("{mode:?}"),
                "units": "tau in units of tau*",
            });
            write_table(out, &meta, &[("tau", &x), ("pdf", &pdf), ("ccdf", &ccdf)])?;
            println!("wrote {}", out.display());
        }
        OracleKind::Layer => {
            let out = match &c.out {
                Some(p) => p,
                None => return usage("--out is required for curve tables"),
            };
            let l = law.scale();
            let r = grid(-0.75 * l, 0.75 * l);
            let tent: Vec<f64> = r.iter().map(|&x| oracle::tent_profile(l, x)).collect();
            let layer: Vec<f64> =
                r.iter().map(|&x| oracle::nlo_profile(l, x, c.n, derived.l_rho_sq)).collect();
            write_table(out, &meta, &[("r", &r), ("tent", &tent), ("layer", &layer)])?;
            println!("wrote {}", out.display());
        }
        OracleKind::Constants => {
            let v = json!({
                "law": serde_json::to_value(&law)?,
                "n": c.n,
                "sigma": c.sigma,
                "mean_spread": law.mean_spread(),
                "l_rho_sq": derived.l_rho_sq,
                "tau_star": derived.tau_star,
                "alpha2": derived.alpha2,
                "diffusion": derived.diffusion,
            });
            let text = serde_json::to_string_pretty(&v)? + "\n";
            match &c.out {
                Some(p) => {
                    fs::write(p, text)?;
                    println!("wrote {}", p.display());
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Replica boundaries: the per-replica tick counter restarts, so a
/// non-increasing tick column marks a seam.
fn split_segments(tick: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut cuts = vec![0];
    for i in 1..tick.len() {
        if tick[i] <= tick[i - 1] {
            cuts.push(i);
        }
    }
    cuts.push(tick.len());
    cuts.windows(2).map(|w| w[0]..w[1]).collect()
}

fn run_analyze(c: AnalyzeCmd) -> Result<ExitCode> {
    let table = read_table(&c.input)?;
    let tick = table.column("tick")?;
    let dp = table.column("dp")?;
    let p = table.column("p")?;
    if p.is_empty() {
        return Err(Error::Parse("empty series".into()));
    }
    let segments = split_segments(&tick);

    let mut moments = SeriesMoments::new(c.depth);
    let mut signs = SignStats::default();
    for seg in &segments {
        moments.accumulate(&dp[seg.clone()]);
        signs.accumulate(&dp[seg.clone()]);
    }
    let mut out = json!({
        "input": c.input.display().to_string(),
        "source_meta": table.meta,
        "ticks": p.len(),
        "segments": segments.len(),
        "mean_dp": moments.mean(),
        "variance": moments.variance(),
        "autocorr": (0..=c.depth).map(|k| moments.autocorr(k)).collect::<Vec<_>>(),
        "p_flip": signs.p_flip(),
        "p_same": signs.p_same(),
    });

    if c.msd {
        let mut lags: Vec<u64> = (1..=64).collect();
        let mut k = 96u64;
        while (k as f64) < 2.0 * c.msd_window.1 {
            lags.push(k);
            k = (k as f64 * 1.5).ceil() as u64;
        }
        let mut msd = MsdCurve::from_ticks(&[], &lags);
        for seg in &segments {
            msd.accumulate_ticks(&p[seg.clone()], &lags);
        }
        let pts = msd.points();
        let loglog = fit_loglog(&pts, c.msd_window)?;
        let linear = fit_linear(&pts, c.msd_window)?;
        let (ks, values): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        out["msd"] = json!({
            "lags": ks,
            "values": values,
            "window": [c.msd_window.0, c.msd_window.1],
            "loglog_slope": loglog.params[0],
            "hurst": loglog.params[0] / 2.0,
            "linear_slope": linear.params[0],
            "intercept": linear.params[1],
        });
    }

    if c.tail || c.tail_window.is_some() {
        let mags: Vec<f64> = dp.iter().map(|v| v.abs()).collect();
        let fit = fit_exponential_tail(&mags, c.tail_window)?;
        out["tail"] = json!({
            "decay": fit.params[0],
            "window": fit.window,
            "n_tail": fit.n_tail,
        });
    }

    let text = serde_json::to_string_pretty(&out)? + "\n";
    match &c.out {
        Some(p) => {
            fs::write(p, text)?;
            println!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_preset_cmd(c: PresetCmd) -> Result<ExitCode> {
    if c.list {
        for name in presets::PRESETS {
            println!("{name}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let name = match &c.name {
        Some(n) => n.as_str(),
        None => return usage("preset name required (or --list)"),
    };
    if !presets::PRESETS.contains(&name) {
        return usage(format!(
            "unknown preset {name:?}; available: {}",
            presets::PRESETS.join(", ")
        ));
    }
    fs::create_dir_all(&c.out)?;
    let ov = Overrides { ticks: c.ticks, replicas: c.replicas, quick: c.quick };
    let outcome = presets::run_preset(name, c.seed, &c.out, &ov)?;
    print!("{}", outcome.report.render());
    let pass = outcome.report.all_pass();
    println!(
        "preset {name}: {}/{} rows pass; {} artifacts in {}",
        outcome.report.rows.iter().filter(|r| r.pass).count(),
        outcome.report.rows.len(),
        outcome.files.len(),
        c.out.display()
    );
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn json_map(path: &Path) -> Result<serde_json::Map<String, serde_json::Value>> {
    match serde_json::from_str(&fs::read_to_string(path)?)? {
        serde_json::Value::Object(m) => Ok(m),
        _ => Err(Error::Parse(format!("{}: expected a JSON object", path.display()))),
    }
}

fn as_number(v: &serde_json::Value) -> Option<f64> {
    v.as_f64()
}

fn run_compare(c: CompareCmd) -> Result<ExitCode> {
    let mut estimates: Vec<(String, f64, Option<f64>)> = Vec::new();
    for (k, v) in json_map(&c.estimates)? {
        let parsed = match &v {
            serde_json::Value::Number(_) => as_number(&v).map(|x| (x, None)),
            serde_json::Value::Array(a) if a.len() == 1 || a.len() == 2 => {
                match (as_number(&a[0]), a.get(1)) {
                    (Some(x), None) => Some((x, None)),
                    (Some(x), Some(e)) => as_number(e).map(|se| (x, Some(se))),
                    _ => None,
                }
            }
            _ => None,
        };
        match parsed {
            Some((x, se)) => estimates.push((k, x, se)),
            None => {
                return Err(Error::Parse(format!(
                    "estimate {k:?}: expected a number or [value, stderr]"
                )))
            }
        }
    }
    let mut references: Vec<(String, f64)> = Vec::new();
    for (k, v) in json_map(&c.references)? {
        match as_number(&v) {
            Some(x) => references.push((k, x)),
            None => return Err(Error::Parse(format!("reference {k:?}: expected a number"))),
        }
    }
    let mut thresholds: Vec<(String, Threshold)> = Vec::new();
    for (k, v) in json_map(&c.thresholds)? {
        let t: Threshold = serde_json::from_value(v)
            .map_err(|e| Error::Parse(format!("threshold {k:?}: {e}")))?;
        thresholds.push((k, t));
    }

    let est: Vec<(&str, f64, Option<f64>)> =
        estimates.iter().map(|(k, v, e)| (k.as_str(), *v, *e)).collect();
    let refs: Vec<(&str, f64)> = references.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let thr: Vec<(&str, Threshold)> = thresholds.iter().map(|(k, t)| (k.as_str(), *t)).collect();
    let report = compare(&est, &refs, &thr)?;
    print!("{}", report.render());
    if let Some(p) = &c.out {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
        println!("wrote {}", p.display());
    }
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
