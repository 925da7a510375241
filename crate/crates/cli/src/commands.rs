use podlb_core::bounds::{band_report, BandParams, BandReport};
use podlb_core::config::DSpec;
use podlb_core::ctmc::{solve_stationary_exact, AggregateSim, Horizon, SimSummary, SnapshotPolicy, SnapshotRecorder, DEFAULT_MAX_STATES};
use podlb_core::fluid::{asymptotic_plateau, fixed_point_closed_form, fixed_point_finite_b, integrate, OutputGrid, Tolerances};
use podlb_core::lyapunov::{drift_scan, scan_over_n, taylor_checks, CatalogParams, Family, LyapunovSpec, ScanOptions, TaylorGrid};
use podlb_core::regime::{classify_regime, infer_m, solve_implicit_d, InferredM, RegimeClass};
use podlb_core::stats::{
    containment, estimate, occupancy_profile, standard_functionals, ContainmentVerdict, Functional, MicroSpec,
    OccupancyProfile, Recorder, RecorderSetup, SteadyStateEstimate, DEFAULT_MICRO_BATCHES,
};
use podlb_core::{ConfigFile, RegimeSolution, SystemConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{float, Artifacts, Csv, Metadata};
use crate::{Cli, Command, DriftscanArgs, OdeArgs, Result, SimulateArgs, SweepArgs};

/// A config file with the command-line overrides applied.
struct Loaded {
    raw: Vec<u8>,
    file: ConfigFile,
}

impl Loaded {
    fn read(cli: &Cli) -> Result<Self> {
        let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
        let raw = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
        let mut file = ConfigFile::from_json(text)?;
        if let Some(seed) = cli.seed {
            file.seed = seed;
        }
        if let Some(r) = cli.d_round {
            file.rounding = r;
        }
        Ok(Self { raw, file })
    }

    fn meta(&self, command: &'static str) -> Metadata {
        Metadata::new(command, Some(&self.raw), Some(self.file.seed))
    }

    fn resolve(&self) -> Result<(SystemConfig, Option<RegimeSolution>)> {
        Ok(self.file.resolve()?)
    }

    fn gamma(&self) -> Result<f64> {
        self.file.gamma.ok_or_else(|| CliError::Config("this command needs gamma".into()))
    }
}

/// Plateau index: from the regime solve, the config, or inferred from `(n, gamma, d)`.
fn plateau_m(cfg: &SystemConfig, regime: Option<&RegimeSolution>) -> Option<u32> {
    regime.map(|r| r.m).or(cfg.m).or_else(|| {
        let gamma = cfg.gamma?;
        infer_m(cfg.nf(), gamma, cfg.d_real).ok().map(|i| i.m_int)
    })
}

fn band_params(cfg: &SystemConfig, regime: Option<&RegimeSolution>) -> Option<BandParams> {
    match regime {
        Some(r) => Some(BandParams::from_regime(r)),
        None => cfg.gamma.and(plateau_m(cfg, None)).map(|m| BandParams::from_config(cfg, m)),
    }
}

pub fn run(cli: &Cli) -> Result<Artifacts> {
    let artifacts = match &cli.command {
        Command::Simulate(args) => simulate(cli, args)?,
        Command::Exact => exact(cli)?,
        Command::Ode(args) => ode(cli, args)?,
        Command::Fixedpoint => fixedpoint(cli)?,
        Command::Regime => regime(cli)?,
        Command::Bounds => bounds(cli)?,
        Command::Driftscan(args) => driftscan(cli, args)?,
        Command::Taylor => taylor(cli)?,
        Command::Sweep(args) => sweep(cli, args)?,
    };
    artifacts.write_all(&cli.out)?;
    Ok(artifacts)
}

fn level_columns(first: &[&str], b: usize) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain((1..=b).map(|i| format!("s_{i}"))).collect()
}

#[derive(Serialize)]
struct EstimateOut<'a> {
    config: &'a SystemConfig,
    horizon: Horizon,
    warmup_fraction: f64,
    labels: Vec<String>,
    estimate: &'a SteadyStateEstimate,
    runs: Vec<&'a SimSummary>,
}

#[derive(Serialize)]
struct VerdictOut<'a> {
    bands: Option<&'a BandReport>,
    containment: Option<ContainmentVerdict>,
    profile: OccupancyProfile,
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let (cfg, regime) = loaded.resolve()?;
    if args.reps == 0 {
        return Err(CliError::Config("--reps must be at least 1".into()));
    }
    let horizon = match (args.events, args.time) {
        (_, Some(t)) => Horizon::Time(t),
        (Some(k), None) => Horizon::Events(k),
        (None, None) => Horizon::Events(1_000_000),
    };
    let rows = args.snapshots.max(1);
    let policy = match horizon {
        Horizon::Events(k) => SnapshotPolicy::EveryEvents((k / rows).max(1)),
        Horizon::Time(t) => SnapshotPolicy::TimeGrid(t / rows as f64),
    };

    let mut functionals = standard_functionals(cfg.b);
    functionals.extend(args.at_least.iter().map(|&(i, k)| Functional::AtLeast { i, k }));
    let params = band_params(&cfg, regime.as_ref());
    let report = params.as_ref().map(band_report);
    let mut setup = RecorderSetup::new(functionals, MicroSpec::for_horizon(horizon, DEFAULT_MICRO_BATCHES));
    if let Some(r) = &report {
        setup = setup.with_bands(r);
    }

    let runs = (0..args.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rec = Recorder::new(&cfg, &setup, rep)?;
            let mut snap = SnapshotRecorder::new(policy);
            let summary = AggregateSim::new(&cfg, rep).run(horizon, &mut (&mut snap, &mut rec))?;
            Ok((summary, snap.samples, rec.finish()))
        })
        .collect::<podlb_core::Result<Vec<_>>>()?;
    let trajectories: Vec<_> = runs.iter().map(|r| r.2.clone()).collect();
    let est = estimate(&trajectories, args.warmup, args.batches)?;
    let verdict = VerdictOut {
        bands: report.as_ref(),
        containment: report.as_ref().map(|r| containment(&est, r)).transpose()?,
        profile: occupancy_profile(&est, params.as_ref())?,
    };

    let meta = loaded.meta("simulate");
    let mut table = Csv::new(&level_columns(&["rep", "t"], cfg.b));
    for (rep, (_, samples, _)) in runs.iter().enumerate() {
        for s in samples {
            let mut row = vec![rep.to_string(), float(s.t)];
            row.extend(s.state.iter().map(|v| v.to_string()));
            table.row(&row);
        }
    }
    let mut out = Artifacts::default();
    out.csv("trajectory.csv", &meta, table);
    let labels = est.functionals.iter().map(Functional::label).collect();
    let runs_out = runs.iter().map(|r| &r.0).collect();
    out.json(
        "estimate.json",
        &meta,
        &EstimateOut { config: &cfg, horizon, warmup_fraction: args.warmup, labels, estimate: &est, runs: runs_out },
    )?;
    out.json("verdict.json", &meta, &verdict)?;
    Ok(out)
}

#[derive(Serialize)]
struct ExactOut<'a> {
    config: &'a SystemConfig,
    states: Vec<&'a [u32]>,
    probs: &'a [f64],
    residual: f64,
    mean_levels: Vec<f64>,
}

fn exact(cli: &Cli) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let (cfg, _) = loaded.resolve()?;
    let pi = solve_stationary_exact(&cfg, DEFAULT_MAX_STATES)?;
    let mean_levels = (1..=cfg.b)
        .map(|i| pi.states.iter().zip(&pi.probs).map(|(s, p)| p * s.get(i) as f64).sum())
        .collect();
    let mut out = Artifacts::default();
    out.json(
        "stationary.json",
        &loaded.meta("exact"),
        &ExactOut {
            config: &cfg,
            states: pi.states.iter().map(|s| s.as_slice()).collect(),
            probs: &pi.probs,
            residual: pi.residual,
            mean_levels,
        },
    )?;
    Ok(out)
}

fn ode(cli: &Cli, args: &OdeArgs) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let (cfg, _) = loaded.resolve()?;
    if !(args.t_end > 0.0 && args.dt > 0.0) {
        return Err(CliError::Config("--t-end and --dt must be positive".into()));
    }
    let traj = integrate(&vec![0.0; cfg.b], &cfg, args.t_end, Tolerances::default(), OutputGrid::Uniform(args.dt))?;
    let mut table = Csv::new(&level_columns(&["t"], cfg.b));
    for (t, x) in traj.t.iter().zip(&traj.x) {
        let row: Vec<String> = std::iter::once(*t).chain(x.iter().copied()).map(float).collect();
        table.row(&row);
    }
    let mut out = Artifacts::default();
    out.csv("ode.csv", &loaded.meta("ode"), table);
    Ok(out)
}

fn fixedpoint(cli: &Cli) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let (cfg, regime) = loaded.resolve()?;
    let result = serde_json::json!({
        "config": cfg,
        "closed_form": fixed_point_closed_form(&cfg),
        "finite_b": fixed_point_finite_b(&cfg, 1e-10)?,
        "plateau": regime.as_ref().map(|r| asymptotic_plateau(r, &cfg)),
    });
    let mut out = Artifacts::default();
    out.json("fixedpoint.json", &loaded.meta("fixedpoint"), &result)?;
    Ok(out)
}

#[derive(Serialize)]
struct RegimeOut {
    solution: RegimeSolution,
    /// Present when `m` was inferred from a given `d`.
    inferred_m: Option<InferredM>,
    given_d: Option<f64>,
    given_d_class: Option<RegimeClass>,
}

fn regime(cli: &Cli) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let f = &loaded.file;
    let gamma = loaded.gamma()?;
    let n = f.n as f64;
    let given_d = f.d.map(|d| match d {
        DSpec::Int(k) => k as f64,
        DSpec::Real(x) => x,
    });
    let (m, inferred_m) = match (f.m, given_d) {
        (Some(m), _) => (m, None),
        (None, Some(d)) => {
            let inf = infer_m(n, gamma, d)?;
            (inf.m_int, Some(inf))
        }
        (None, None) => return Err(CliError::Config("regime needs m or d".into())),
    };
    let solution = solve_implicit_d(n, gamma, m, f.rounding)?;
    let result = RegimeOut { solution, inferred_m, given_d, given_d_class: given_d.map(|d| classify_regime(n, gamma, d)) };
    let mut out = Artifacts::default();
    out.json("regime.json", &loaded.meta("regime"), &result)?;
    Ok(out)
}

fn bounds(cli: &Cli) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let (cfg, regime) = loaded.resolve()?;
    let params = band_params(&cfg, regime.as_ref())
        .ok_or_else(|| CliError::Config("bounds need gamma and a plateau index".into()))?;
    let mut out = Artifacts::default();
    out.json("bounds.json", &loaded.meta("bounds"), &band_report(&params))?;
    Ok(out)
}

fn driftscan(cli: &Cli, args: &DriftscanArgs) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let (cfg, regime) = loaded.resolve()?;
    let family: Family =
        serde_json::from_str(&args.family).map_err(|e| CliError::Config(format!("--family: {e}")))?;
    let m = plateau_m(&cfg, regime.as_ref()).ok_or_else(|| CliError::Config("driftscan needs a plateau index".into()))?;
    let opts = ScanOptions {
        budget: args.scan_budget,
        seed: cfg.seed,
        target: args.drift_target,
        value_floor: args.value_floor,
        ..ScanOptions::default()
    };
    let meta = loaded.meta("driftscan");
    let mut out = Artifacts::default();
    if args.n_grid.is_empty() {
        let params = CatalogParams::from_config(&cfg, m).with_b_m2(args.b_m2);
        let report = drift_scan(&LyapunovSpec::new(family, params)?, &opts)?;
        out.json("scan.json", &meta, &report)?;
    } else {
        let series = scan_over_n(family, loaded.gamma()?, m, cfg.b, args.b_m2, &args.n_grid, &opts)?;
        out.json("scan_series.json", &meta, &series)?;
    }
    Ok(out)
}

fn taylor(cli: &Cli) -> Result<Artifacts> {
    let raw = match &cli.config {
        Some(p) => Some(std::fs::read(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?),
        None => None,
    };
    let meta = Metadata::new("taylor", raw.as_deref(), None);
    let report = taylor_checks(&TaylorGrid::default());
    let mut table = Csv::new(&["lemma", "key", "x", "lhs_log", "rhs_log", "holds"]);
    for p in &report.points {
        table.row(&[p.lemma.clone(), p.key.clone(), float(p.x), float(p.lhs_log), float(p.rhs_log), p.holds.to_string()]);
    }
    let mut out = Artifacts::default();
    out.csv("taylor_grid.csv", &meta, table);
    out.json("taylor_thresholds.json", &meta, &report.thresholds)?;
    Ok(out)
}

/// Row of the regime table that a sample count falls in.
fn table_row(class: RegimeClass) -> (&'static str, &'static str, &'static str) {
    match class {
        RegimeClass::ZeroDelay => ("d >= n^gamma log n", "zero_delay", "proven"),
        RegimeClass::FiniteDelay => ("polynomial", "finite_delay", "proven"),
        RegimeClass::InfiniteDelayPolylog => ("poly-log and d >= log(n)^3", "infinite_delay", "proven"),
        RegimeClass::InfiniteDelayOpen => ("d < log(n)^3", "infinite_delay", "open"),
    }
}

fn sweep_grid(n: f64, gamma: f64, points: usize) -> Vec<(f64, String)> {
    let ln_n = n.ln();
    let lo = ln_n.powi(3).clamp(2.0, n);
    let mut grid: Vec<(f64, String)> = Vec::new();
    if points >= 2 && lo < n {
        let step = (n / lo).ln() / (points - 1) as f64;
        grid.extend((0..points).map(|k| ((lo.ln() + k as f64 * step).exp(), String::new())));
    }
    let mut landmarks = vec![
        (ln_n.powi(2), "log(n)^2".to_string()),
        (ln_n.powi(3), "log(n)^3".to_string()),
        (ln_n.powi(4), "log(n)^4".to_string()),
        (n.powf(gamma) * ln_n, "n^gamma log n".to_string()),
        (n, "n".to_string()),
    ];
    landmarks.extend((2..=5).map(|m| ((n.powf(gamma) * ln_n).powf(1.0 / m as f64), format!("(n^gamma log n)^(1/{m})"))));
    grid.extend(landmarks.into_iter().filter(|(d, _)| *d > 1.0 && *d <= n));
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
    grid.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12 * b.0);
    grid
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<Artifacts> {
    let loaded = Loaded::read(cli)?;
    let gamma = loaded.gamma()?;
    let n = args.n.unwrap_or(loaded.file.n as f64);
    if !(n >= 3.0) {
        return Err(CliError::Config("sweep needs n >= 3".into()));
    }
    let mut table = Csv::new(&[
        "d",
        "log_d_over_log_n",
        "d_range",
        "regime",
        "regime_class",
        "queue_length_m_real",
        "m_int",
        "status",
        "landmark",
    ]);
    for (d, landmark) in sweep_grid(n, gamma, args.points) {
        let class = classify_regime(n, gamma, d);
        let (range, delay, status) = table_row(class);
        let inferred = infer_m(n, gamma, d)?;
        table.row(&[
            float(d),
            float(d.ln() / n.ln()),
            range.into(),
            delay.into(),
            class.as_str().into(),
            float(inferred.m_real),
            inferred.m_int.to_string(),
            status.into(),
            landmark,
        ]);
    }
    let mut out = Artifacts::default();
    out.csv("sweep.csv", &loaded.meta("sweep"), table);
    Ok(out)
}

