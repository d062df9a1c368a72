use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rem_core::completion::build_grid_for;
use rem_core::kriging::{predict_many, tg_predict, transform_samples, KrigingConfig};
use rem_core::shadow::{empirical_correlation, extract_sf_with, fit_correlation_model, predicted_power, BinSpec, FitOptions};
use rem_core::{gpr, CalibratedDelta, CorrelationModel, GeoPoint, McPipeline, Measurement, RemError};
use rem_harness::{
    calibrate, ingest_measurements, monte_carlo_eval, sweep, write_sweep_csv, EnvironmentSpec, EvalConfig, HarnessError,
    Method, Mode, Result, SweepAxis, SweepValue,
};
use rem_synth::SynthDocument;

#[derive(Parser)]
#[command(name = "remap", version, about = "Radio environment maps from sparse UAV measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the campaigns of a scene document into measurement CSVs.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Fit the spatial correlation model to a campaign's residuals.
    FitCorr {
        #[command(flatten)]
        io: Common,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        fix_a_one: bool,
        /// Correct the fit for the mean removed over a bounded flight area.
        #[arg(long)]
        finite_domain: bool,
        /// Also write the binned empirical correlation as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Estimate the ΔG antenna correction from a campaign.
    Calibrate {
        #[command(flatten)]
        io: Common,
        #[arg(long, default_value_t = rem_core::calibration::DEFAULT_BIN_DEG)]
        bin_deg: f64,
        #[arg(long, default_value_t = rem_core::calibration::DEFAULT_MIN_SUPPORT)]
        min_support: usize,
    },
    /// Reconstruct received power on a grid from sparse measurements.
    Reconstruct {
        #[command(flatten)]
        io: Common,
        /// Correlation model JSON, as written by `fit-corr`.
        #[arg(long)]
        corr: PathBuf,
        #[arg(long, default_value = "OK")]
        method: String,
        #[arg(long, default_value_t = 200.0)]
        radius: f64,
        #[arg(long, default_value_t = rem_core::completion::DEFAULT_SPACING_M)]
        spacing: f64,
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Training campaign for the normal-score transform (TG methods) and
        /// the GPR variance split.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Monte-Carlo sparse-sampling evaluation.
    Eval(EvalArgs),
    /// One evaluation per value of an axis, as a long-format CSV.
    Sweep {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        axis: String,
        /// Comma-separated values; for `altitude_campaign`, CSV paths.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Measurement CSV.
    #[arg(long)]
    input: PathBuf,
    /// Environment JSON with `gs` and `propagation`.
    #[arg(long)]
    env: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    m_samples: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Report JSON; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { scene, out_dir } => synth(&scene, &out_dir),
        Command::FitCorr { io, calibration, fix_a_one, finite_domain, table } => {
            let opts = FitOptions { fix_a_one, finite_domain, ..FitOptions::default() };
            fit_corr(&io, calibration.as_deref(), opts, table.as_deref())
        }
        Command::Calibrate { io, bin_deg, min_support } => {
            let env = read_env(&io.env)?.build()?;
            let ms = ingest_measurements(&io.input)?;
            let delta = calibrate(&env, &ms, bin_deg, min_support)?;
            let mut buf = Vec::new();
            delta.write_csv(&mut buf)?;
            emit(io.out.as_deref(), &buf)
        }
        Command::Reconstruct { io, corr, method, radius, spacing, calibration, train } => {
            reconstruct(&io, &corr, &method, radius, spacing, calibration.as_deref(), train.as_deref())
        }
        Command::Eval(args) => {
            let (cfg, train, test) = eval_inputs(&args)?;
            let report = with_threads(args.threads, || monte_carlo_eval(&cfg, &train, &test[..]))?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(args.out.as_deref(), serde_json::to_string_pretty(&report)?.as_bytes())
        }
        Command::Sweep { eval, axis, values, csv } => {
            let (cfg, train, test) = eval_inputs(&eval)?;
            let axis: SweepAxis = axis.parse()?;
            let values = values.iter().map(|v| sweep_value(axis, v, cfg.mode)).collect::<Result<Vec<_>>>()?;
            let points = with_threads(eval.threads, || sweep(&cfg, &train, &test, &values))?;
            if let Some(path) = csv {
                write_sweep_csv(BufWriter::new(File::create(path)?), &points)?;
            }
            emit(eval.out.as_deref(), serde_json::to_string_pretty(&points)?.as_bytes())
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Validation(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut o = io::stdout().lock();
            o.write_all(bytes)?;
            if !bytes.ends_with(b"\n") {
                o.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn read_env(path: &Path) -> Result<EnvironmentSpec> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn read_delta(path: Option<&Path>) -> Result<Option<CalibratedDelta>> {
    path.map(|p| Ok(CalibratedDelta::read_csv(File::open(p)?, 0)?)).transpose()
}

fn synth(scene: &Path, out_dir: &Path) -> Result<()> {
    let doc = SynthDocument::from_json(&fs::read_to_string(scene)?)?;
    let realized = doc.realize()?;
    fs::create_dir_all(out_dir)?;
    for c in &realized.campaigns {
        let path = out_dir.join(format!("{}.csv", c.name));
        rem_synth::write_measurements_csv(BufWriter::new(File::create(&path)?), &c.measurements)?;
        eprintln!("{}: {} rows", path.display(), c.len());
    }
    let env = EnvironmentSpec { gs: doc.scene.gs, propagation: doc.scene.propagation.clone() };
    fs::write(out_dir.join("environment.json"), serde_json::to_string_pretty(&env)?)?;
    Ok(())
}

fn fit_corr(io: &Common, calibration: Option<&Path>, opts: FitOptions, table_out: Option<&Path>) -> Result<()> {
    let env = read_env(&io.env)?.build()?;
    let ms = ingest_measurements(&io.input)?;
    let delta = read_delta(calibration)?;
    let sf = extract_sf_with(&ms, &env.cfg, &env.gs, delta.as_ref(), Default::default())?;
    let table = empirical_correlation(&sf, &BinSpec::default())?;
    let fit = fit_correlation_model::<f64>(&table, opts)?;
    if let Some(path) = table_out {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["mean_dh_m", "mean_dv_m", "correlation", "count"])?;
        for b in table.non_empty() {
            w.write_record([b.mean_dh.to_string(), b.mean_dv.to_string(), b.value.to_string(), b.count.to_string()])?;
        }
        w.flush()?;
    }
    eprintln!("residual {:.4}, empirical mean {:.3} dB", fit.residual, table.mean);
    emit(io.out.as_deref(), serde_json::to_string_pretty(&fit.model)?.as_bytes())
}

fn reconstruct(
    io: &Common,
    corr_path: &Path,
    method: &str,
    radius: f64,
    spacing: f64,
    calibration: Option<&Path>,
    train: Option<&Path>,
) -> Result<()> {
    let env = read_env(&io.env)?.build()?;
    let ms = ingest_measurements(&io.input)?;
    let corr: CorrelationModel = serde_json::from_str(&fs::read_to_string(corr_path)?)?;
    corr.validate()?;
    let method: Method = method.parse()?;
    let delta = read_delta(calibration)?;
    let sf = extract_sf_with(&ms, &env.cfg, &env.gs, delta.as_ref(), Default::default())?;
    let locs: Vec<GeoPoint> = ms.iter().map(|m| m.location).collect();
    let grid = build_grid_for(&locs, spacing)?;
    let nodes = grid.nodes();
    let train_sf = match train {
        Some(p) => Some(extract_sf_with(&ingest_measurements(p)?, &env.cfg, &env.gs, delta.as_ref(), Default::default())?),
        None => None,
    };

    let z: Vec<f64> = match method {
        Method::TrplOnly => vec![0.0; nodes.len()],
        Method::Ok | Method::Sk => {
            let variant = if method == Method::Ok { rem_core::Variant::Ok } else { rem_core::Variant::Sk };
            predict_many(&sf, &corr, &nodes, &KrigingConfig::new(radius, variant))?.into_iter().map(|p| p.z_hat).collect()
        }
        Method::TgOk | Method::TgSk => {
            let source = train_sf.as_ref().ok_or_else(|| HarnessError::Validation("TG methods need --train".into()))?;
            let ns = rem_core::kriging::normal_score(source)?;
            let table_u = empirical_correlation(&transform_samples(source, &ns), &BinSpec::default())?;
            let corr_u = fit_correlation_model::<f64>(&table_u, FitOptions::default())?.model;
            let variant = if method == Method::TgOk { rem_core::Variant::TgOk } else { rem_core::Variant::TgSk };
            let kcfg = KrigingConfig::new(radius, variant);
            nodes
                .iter()
                .map(|t| match tg_predict(&sf, &ns, &corr_u, t, &kcfg) {
                    Ok(p) => Ok(p.z_hat),
                    Err(RemError::NoNeighbors) => Ok(0.0),
                    Err(e) => Err(e),
                })
                .collect::<std::result::Result<_, _>>()?
        }
        Method::Gpr | Method::McGpr => {
            let source = train_sf.as_ref().unwrap_or(&sf);
            let (sy, sgp) = gpr::hyperparameters_from_table(&empirical_correlation(source, &BinSpec::default())?)?;
            let model = gpr::gpr_fit(&sf, &corr, sy, sgp)?;
            if method == Method::Gpr {
                nodes.iter().map(|t| model.predict_mean(t)).collect()
            } else {
                let mc = McPipeline::build(&model, &grid, &Default::default())?;
                nodes.iter().map(|t| mc.predict(t)).collect()
            }
        }
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "col", "lat_deg", "lon_deg", "alt_m", "sf_db", "rsrp_dbm"])?;
    for (k, (p, zk)) in nodes.iter().zip(&z).enumerate() {
        let det = predicted_power(&env.cfg, &env.gs, p, delta.as_ref(), Default::default())?;
        w.write_record([
            (k / grid.n_cols).to_string(),
            (k % grid.n_cols).to_string(),
            p.lat.to_string(),
            p.lon.to_string(),
            p.alt.to_string(),
            zk.to_string(),
            (det + zk).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    emit(io.out.as_deref(), &bytes)
}

fn eval_inputs(args: &EvalArgs) -> Result<(EvalConfig, Vec<Measurement>, Vec<Measurement>)> {
    let mut cfg: EvalConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => {
            let env = args.env.as_ref().ok_or_else(|| HarnessError::Validation("need --config or --env".into()))?;
            let method = args.method.as_deref().ok_or_else(|| HarnessError::Validation("need --method".into()))?;
            let m = args.m_samples.ok_or_else(|| HarnessError::Validation("need --m-samples".into()))?;
            EvalConfig::new(method.parse()?, m, read_env(env)?)
        }
    };
    if let Some(env) = &args.env {
        cfg.environment = read_env(env)?;
    }
    if let Some(m) = &args.method {
        cfg.method = m.parse()?;
    }
    if let Some(m) = &args.mode {
        cfg.mode = m.parse()?;
    }
    if let Some(m) = args.m_samples {
        cfg.m_samples = m;
    }
    if let Some(r) = args.radius {
        cfg.radius_m = r;
    }
    if let Some(i) = args.iterations {
        cfg.iterations = i;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = &args.train {
        cfg.train_campaign = Some(p.clone());
    }
    if let Some(p) = &args.test {
        cfg.test_campaign = Some(p.clone());
    }
    let train_path = cfg.train_campaign.clone().ok_or_else(|| HarnessError::Validation("no training campaign".into()))?;
    let test_path = cfg.test_campaign.clone().ok_or_else(|| HarnessError::Validation("no test campaign".into()))?;
    let train = ingest_measurements(&train_path)?;
    let test = ingest_measurements(&test_path)?;
    cfg.validate(test.len())?;
    eprintln!("train {}: {} rows; test {}: {} rows", train_path.display(), train.len(), test_path.display(), test.len());
    Ok((cfg, train, test))
}

fn sweep_value(axis: SweepAxis, text: &str, mode: Mode) -> Result<SweepValue> {
    let bad = || HarnessError::Validation(format!("bad {} value `{text}`", axis.name()));
    Ok(match axis {
        SweepAxis::M => SweepValue::M(text.parse().map_err(|_| bad())?),
        SweepAxis::R => SweepValue::R(text.parse().map_err(|_| bad())?),
        SweepAxis::Method => match text.split_once('/') {
            Some((m, mode)) => SweepValue::Method(m.parse()?, mode.parse()?),
            None => SweepValue::Method(text.parse()?, mode),
        },
        SweepAxis::AltitudeCampaign => {
            let path = PathBuf::from(text);
            let name = path.file_stem().map_or_else(|| text.to_string(), |s| s.to_string_lossy().into_owned());
            SweepValue::Campaign { name, measurements: ingest_measurements(&path)? }
        }
    })
}
