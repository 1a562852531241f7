use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lifespan_core::cutoff::{self, CutoffFamily, GridSpec};
use lifespan_core::damping::{self, DampingCalculus, DampingSpec};
use lifespan_core::experiments::{self, FitModel, FitResult, SweepPlan};
use lifespan_core::heat::{self, HeatConfig};
use lifespan_core::profile::Profile;
use lifespan_core::scaled::{self, ScaledConfig};
use lifespan_core::wave::{self, LifespanRecord, SolveConfig};

#[derive(Parser)]
#[command(name = "lifespan", version, about = "Lifespan experiments for semilinear damped wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a damping family.
    Damping {
        #[command(subcommand)]
        action: DampingAction,
    },
    /// Measure the cut-off constants C1, C2, C3 for a list of R.
    VerifyCutoff {
        #[command(flatten)]
        family: FamilyArgs,
        /// Comma-separated list of R values.
        #[arg(long = "R", value_delimiter = ',', required = true)]
        r: Vec<f64>,
        #[arg(long)]
        p: f64,
        #[arg(long = "N", default_value_t = 1)]
        n: usize,
    },
    /// The key-lemma blowup bound and its ODE cross-check.
    KeyBound {
        #[arg(long)]
        delta: f64,
        #[arg(long = "C0")]
        c0: f64,
        #[arg(long = "R1")]
        r1: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        p: f64,
    },
    /// Direct radial solve until blowup or the horizon.
    Solve(SolveArgs),
    /// Solve in the self-similar frame until blowup or the horizon.
    ScaledSolve {
        #[command(flatten)]
        common: SolveArgs,
        /// Largest scaled step.
        #[arg(long)]
        ds: Option<f64>,
        /// Half-width of the y-domain.
        #[arg(long = "Y")]
        y_max: Option<f64>,
        /// y-grid spacing.
        #[arg(long)]
        k: Option<f64>,
        /// Horizon in s = log(B+1); overrides --tmax.
        #[arg(long)]
        smax: Option<f64>,
        /// Write the energy series (N = 1) as CSV here.
        #[arg(long)]
        energies: Option<PathBuf>,
        /// Report spacing in s for --energies.
        #[arg(long, default_value_t = 0.1)]
        cadence: f64,
    },
    /// Evolve directly and in the scaled frame and compare at scaled time s.
    CompareFrames {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        /// Direct-solver spacing.
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        /// Write the energy series of the scaled run as CSV here.
        #[arg(long)]
        energies: Option<PathBuf>,
    },
    /// Heat-equation lower bound t_eps against the measured blowup time.
    HeatLowerBound {
        #[arg(long)]
        p: f64,
        #[arg(long = "N", default_value_t = 1)]
        n: usize,
        #[arg(long = "eps-list", value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        #[arg(long, default_value_t = 0.2)]
        h: f64,
        /// Horizon as a multiple of t_eps.
        #[arg(long, default_value_t = 10.0)]
        horizon_factor: f64,
    },
    /// Run an ε sweep described by a plan file.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Log failed runs and keep going instead of exiting with an error.
        #[arg(long)]
        keep_going: bool,
    },
    /// Fit a scaling law to a records CSV.
    Fit {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
    },
}

#[derive(Subcommand)]
enum DampingAction {
    /// Print the assumption report.
    Check {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = damping::DEFAULT_HORIZON)]
        horizon: f64,
    },
    /// Print one quantity in full precision.
    Eval {
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, value_enum)]
        what: Quantity,
        /// Time (or B-time for Binv).
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    #[value(name = "b")]
    LowerB,
    #[value(name = "B")]
    UpperB,
    #[value(name = "Binv")]
    Binv,
    #[value(name = "Phi")]
    Phi,
    #[value(name = "B0")]
    B0,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Power,
    #[value(name = "power_btime")]
    PowerBTime,
    Critical,
}

impl From<ModelArg> for FitModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Power => FitModel::Power,
            ModelArg::PowerBTime => FitModel::PowerBTime,
            ModelArg::Critical => FitModel::Critical,
        }
    }
}

#[derive(Args, Clone)]
struct FamilyArgs {
    /// power | scale-invariant | log-tower | constant
    #[arg(long)]
    family: String,
    /// e.g. beta=0.5, mu=2, n=1, c=1
    #[arg(long, default_value = "")]
    params: String,
}

impl FamilyArgs {
    fn spec(&self) -> Result<DampingSpec> {
        Ok(DampingSpec::parse(&self.family, &self.params)?)
    }
}

#[derive(Args, Clone)]
struct SolveArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long)]
    p: f64,
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    #[arg(long)]
    eps: f64,
    /// Outer radius.
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    umax: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    tmax: f64,
    /// Directory for snapshot files.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Snapshot spacing in time.
    #[arg(long, default_value_t = 1.0)]
    snapshot_every: f64,
}

fn print_records(records: &[LifespanRecord]) {
    print!("{}", wave::write_records(records));
}

fn damping_cmd(action: DampingAction) -> Result<()> {
    match action {
        DampingAction::Check { family, horizon } => {
            let report = damping::check_assumptions(&family.spec()?, horizon)?;
            print!("{report}");
        }
        DampingAction::Eval { family, what, t } => {
            let calc = DampingCalculus::new(family.spec()?);
            let value = match what {
                Quantity::LowerB => calc.coefficient(t)?.0,
                Quantity::UpperB => calc.big_b(t)?,
                Quantity::Binv => calc.invert_b(t)?,
                Quantity::Phi => calc.phi(t)?.0,
                Quantity::B0 => calc.b0(),
            };
            println!("{value:.17e}");
        }
    }
    Ok(())
}

fn verify_cutoff(family: FamilyArgs, rs: Vec<f64>, p: f64, n: usize) -> Result<()> {
    let calc = DampingCalculus::new(family.spec()?);
    println!("R,C1,C2,C3");
    for r in rs {
        let fam = CutoffFamily::new(&calc, r, p, n)?;
        let c = cutoff::verify_cutoff_bounds(&fam, GridSpec::default())?;
        println!("{r},{:.10e},{:.10e},{:.10e}", c.c1, c.c2, c.c3);
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let mut cfg = SolveConfig::new(args.family.spec()?, args.p, args.n, args.eps).with_horizon(args.tmax);
    if let Some(l) = args.l {
        cfg.l = l;
    }
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(u) = args.umax {
        cfg.u_max = u;
    }
    if args.snapshots.is_some() {
        cfg.snapshot_cadence = Some(args.snapshot_every);
    }
    let (record, snaps) = wave::solve_until_blowup(&cfg)?;
    if let Some(dir) = &args.snapshots {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, s) in snaps.iter().enumerate() {
            s.write_file(&dir.join(format!("snapshot_{i:05}.txt")))?;
        }
        log::info!("wrote {} snapshots to {}", snaps.len(), dir.display());
    }
    print_records(&[record]);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn scaled_solve(
    args: SolveArgs,
    ds: Option<f64>,
    y_max: Option<f64>,
    k: Option<f64>,
    smax: Option<f64>,
    energies: Option<PathBuf>,
    cadence: f64,
) -> Result<()> {
    if args.snapshots.is_some() || args.l.is_some() || args.h.is_some() {
        log::warn!("--snapshots, --L and --h apply to the direct solver and are ignored here");
    }
    let mut cfg = ScaledConfig::new(args.family.spec()?, args.p, args.n, args.eps);
    if let Some(ds) = ds {
        cfg.ds_max = ds;
    }
    if let Some(y) = y_max {
        cfg.y_max = y;
    }
    if let Some(k) = k {
        cfg.k = k;
    }
    if let Some(u) = args.umax {
        cfg.u_max = u;
    }
    cfg = match smax {
        Some(s) => ScaledConfig { s_max: s, ..cfg },
        None => cfg.with_time_horizon(args.tmax)?,
    };
    if energies.is_some() {
        cfg.report_cadence = Some(cadence);
    }
    let (record, series) = scaled::solve_scaled_until_blowup(&cfg)?;
    if let Some(path) = energies {
        write_energies(&path, &series, &cfg)?;
    }
    print_records(&[record]);
    Ok(())
}

fn write_energies(path: &PathBuf, series: &[scaled::ScaledState], cfg: &ScaledConfig) -> Result<()> {
    let calc = DampingCalculus::new(cfg.damping.clone());
    let reports = scaled::compute_energies_1d(series, &calc, cfg.p)?;
    fs::write(path, scaled::write_energy_csv(&reports)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn compare_frames(family: FamilyArgs, eps: f64, p: f64, s: f64, h: f64, energies: Option<PathBuf>) -> Result<()> {
    let cfg = ScaledConfig::new(family.spec()?, p, 1, eps);
    let (cmp, series) = scaled::compare_frames(&cfg, h, s)?;
    if let Some(path) = energies {
        write_energies(&path, &series, &cfg)?;
    }
    println!("s,t,rel_l2");
    println!("{},{:.10e},{:.10e}", cmp.s, cmp.t, cmp.rel_l2);
    Ok(())
}

fn heat_lower_bound(p: f64, n: usize, eps_list: Vec<f64>, h: f64, factor: f64) -> Result<()> {
    let f = Profile::gaussian(1.0)?;
    println!("eps,t_eps,T_heat,verdict");
    for eps in eps_list {
        let bound = heat::compute_h_and_teps(&f, eps, p, n)?;
        let t_eps = bound.t_eps();
        if !t_eps.is_finite() {
            println!("{eps},inf,-,global");
            continue;
        }
        let mut cfg = HeatConfig::new(p, n, eps, factor * t_eps);
        cfg.h = h;
        cfg.l = f.support_radius() + 10.0 * cfg.t_max.sqrt();
        let rec = heat::heat_solve_until_blowup(&cfg)?;
        let verdict = if rec.t_num >= t_eps { "ok" } else { "violated" };
        println!("{eps},{t_eps:.10e},{:.10e},{verdict}", rec.t_num);
    }
    Ok(())
}

fn sweep(plan_path: PathBuf, keep_going: bool) -> Result<()> {
    let text = fs::read_to_string(&plan_path).with_context(|| format!("reading {}", plan_path.display()))?;
    let plan = SweepPlan::parse(&text)?;
    let outcome = experiments::run_sweep_outcome(&plan)?;
    let records = if keep_going {
        for (eps, msg) in &outcome.failures {
            log::error!("eps = {eps}: {msg}");
        }
        outcome.records
    } else {
        outcome.into_result()?
    };
    let csv = wave::write_records(&records);
    match &plan.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {} records to {}", records.len(), path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn fit(csv: PathBuf, model: FitModel) -> Result<()> {
    let text = fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
    let records = wave::read_records(&text)?;
    if records.is_empty() {
        bail!("{} holds no records", csv.display());
    }
    let mut groups: Vec<((String, String), Vec<LifespanRecord>)> = Vec::new();
    for r in records {
        let key = (r.label.clone(), r.params.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out = std::io::stdout().lock();
    let many = groups.len() > 1;
    if many {
        writeln!(out, "family,{}", FitResult::CSV_HEADER)?;
    } else {
        writeln!(out, "{}", FitResult::CSV_HEADER)?;
    }
    for ((label, params), group) in &groups {
        let spec = DampingSpec::from_record(label, params)?;
        let res = experiments::fit_records(group, &spec.family, model)?;
        if many {
            writeln!(out, "{label},{}", res.to_csv_row())?;
        } else {
            writeln!(out, "{}", res.to_csv_row())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Damping { action } => damping_cmd(action),
        Command::VerifyCutoff { family, r, p, n } => verify_cutoff(family, r, p, n),
        Command::KeyBound { delta, c0, r1, theta, p } => {
            let chk = cutoff::check_key_lemma_ode(delta, c0, r1, theta, p)?;
            println!("bound,ode_radius,verdict");
            println!("{:.17e},{:.17e},{}", chk.bound, chk.radius, if chk.verdict { "ok" } else { "violated" });
            Ok(())
        }
        Command::Solve(args) => solve(args),
        Command::ScaledSolve { common, ds, y_max, k, smax, energies, cadence } => {
            scaled_solve(common, ds, y_max, k, smax, energies, cadence)
        }
        Command::CompareFrames { family, eps, p, s, h, energies } => compare_frames(family, eps, p, s, h, energies),
        Command::HeatLowerBound { p, n, eps_list, h, horizon_factor } => heat_lower_bound(p, n, eps_list, h, horizon_factor),
        Command::Sweep { plan, keep_going } => sweep(plan, keep_going),
        Command::Fit { csv, model } => fit(csv, model.into()),
    }
}
