//! The `nhdimer` command line.

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::calibration::{self, HashMap};
use crate::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{self, Axis, RunMetadata, SweepGrid};
use crate::integrator::integrate;
use crate::model::OperatingPoint;
use crate::{analytics, render, spectral, stability, units, validate};

/// Exit status for bad configuration or input.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical failures and failed acceptance checks.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nhdimer", version, about = "Two-cavity non-reciprocal dimer: simulations, sweeps, fits")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; built-in defaults otherwise.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (the NHDIMER_OUT environment variable takes precedence).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Hopping phase φ, rad.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    /// Net hopping gain ΔG, dB.
    #[arg(long = "delta-g", global = true, allow_negative_numbers = true)]
    pub delta_g: Option<f64>,
    /// Drive power, dBm.
    #[arg(long = "pd-dbm", global = true, allow_negative_numbers = true)]
    pub pd_dbm: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Data file format.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    pub format: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and dump it with its spectrum.
    Simulate,
    /// Driven S21 over the drive band for several gains.
    Transmission,
    /// Limit-cycle power and frequency over φ × ΔG.
    PhaseDiagram,
    /// Drive-frequency sweeps at the configured point (or peak-count maps).
    Sync {
        /// Peak-count maps over φ × ΔG with the drive at ω_c instead.
        #[arg(long)]
        contours: bool,
    },
    /// Closed-form stability and limit-cycle quantities.
    Analytics,
    /// Fit a reflection trace (CSV: freq_hz, mag_linear).
    FitS11 {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit an amplifier sweep (CSV: p_in_w, p_out_w).
    FitGain {
        #[arg(long)]
        input: PathBuf,
    },
    /// Build or query the settings lookup table.
    Hashmap {
        #[command(subcommand)]
        action: HashmapAction,
    },
    /// Run the acceptance checks.
    Validate {
        /// Only this criterion (1-11).
        #[arg(long)]
        criterion: Option<u8>,
    },
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Subcommand)]
pub enum HashmapAction {
    /// Build from calibration rows (CSV: phi_exp_deg, s21_db_at_gamma0).
    Build {
        /// Calibration CSV; a synthetic profile is used when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Settings for (--delta-g, --phi) from a table written by `build`.
    Lookup {
        #[arg(long)]
        table: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    workers: usize,
    data_format: OutputFormat,
    svg: bool,
}

impl Ctx {
    fn new(g: &GlobalArgs) -> Result<Ctx> {
        let mut cfg = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(phi) = g.phi {
            cfg.grid.point.phi_rad = phi;
        }
        if let Some(dg) = g.delta_g {
            cfg.grid.point.delta_g_db = dg;
        }
        if let Some(w) = g.workers {
            cfg.workers = w;
        }
        let out = std::env::var_os("NHDIMER_OUT")
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| g.out.clone())
            .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
        let data_format = match g.format.as_deref() {
            Some("json") => OutputFormat::Json,
            Some(_) => OutputFormat::Csv,
            None if !cfg.output.wants(OutputFormat::Csv) && cfg.output.wants(OutputFormat::Json) => OutputFormat::Json,
            None => OutputFormat::Csv,
        };
        let workers = match cfg.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        };
        let svg = cfg.output.wants(OutputFormat::Svg);
        Ok(Ctx {
            cfg,
            out,
            workers,
            data_format,
            svg,
        })
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Error::Io(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<()> {
        let p = self.path(name)?;
        std::fs::write(&p, contents).map_err(|e| Error::Io(format!("cannot write {}: {e}", p.display())))?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn write_with<F>(&self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let p = self.path(name)?;
        let file = File::create(&p).map_err(|e| Error::Io(format!("cannot write {}: {e}", p.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush())?;
        println!("wrote {}", p.display());
        Ok(())
    }

    /// Data file, metadata sidecar and (optionally) heatmap of a grid.
    fn write_grid(&self, stem: &str, grid: &SweepGrid, overlay: Option<&[(f64, f64)]>) -> Result<()> {
        match self.data_format {
            OutputFormat::Json => self.write(&format!("{stem}.json"), grid.to_json().as_bytes())?,
            _ => self.write(&format!("{stem}.csv"), grid.to_csv_string().as_bytes())?,
        }
        self.write(&format!("{stem}.meta.json"), (grid.metadata_json() + "\n").as_bytes())?;
        if self.svg {
            self.write(&format!("{stem}.svg"), render::render_heatmap(grid, overlay)?.as_bytes())?;
        }
        Ok(())
    }

    fn point(&self) -> OperatingPoint {
        let p = self.cfg.params();
        let pt = &self.cfg.grid.point;
        let omega_d = pt.drive_freq_ghz.map_or(p.omega_c, units::ghz);
        OperatingPoint::new(pt.delta_g_db, pt.phi_rad, omega_d, pt.p_d_dbm)
    }
}

/// Prints failed cells with their coordinates; true if there were any.
fn report_cell_errors(grid: &SweepGrid) -> bool {
    for (i, j, msg) in &grid.metadata.errors {
        eprintln!(
            "error in {} cell ({}={}, {}={}): {msg}",
            grid.quantity, grid.axis1.name, grid.axis1.values[*i], grid.axis2.name, grid.axis2.values[*j]
        );
    }
    !grid.metadata.errors.is_empty()
}

fn execute(cli: &Cli) -> Result<i32> {
    let ctx = Ctx::new(&cli.global)?;
    let g = &cli.global;
    match &cli.command {
        Command::Simulate => simulate(&ctx, g),
        Command::Transmission => transmission(&ctx, g),
        Command::PhaseDiagram => phase_diagram(&ctx),
        Command::Sync { contours } => sync(&ctx, g, *contours),
        Command::Analytics => analytics_cmd(&ctx),
        Command::FitS11 { input } => fit_s11(&ctx, input),
        Command::FitGain { input } => fit_gain(&ctx, input),
        Command::Hashmap { action } => hashmap(&ctx, g, action),
        Command::Validate { criterion } => validate_cmd(&ctx, *criterion),
        Command::Config => {
            print!("{}", ctx.cfg.to_json_string());
            Ok(0)
        }
    }
}

fn simulate(ctx: &Ctx, g: &GlobalArgs) -> Result<i32> {
    let p = ctx.cfg.params();
    let mut op = ctx.point();
    if let Some(pd) = g.pd_dbm {
        op.p_drive_dbm = Some(pd);
    }
    let traj = integrate(&p, &op, &ctx.cfg.integrator_config())?;
    let spec = spectral::spectrum(&p, &traj, spectral::DEFAULT_DISCARD)?;
    match ctx.data_format {
        OutputFormat::Json => {
            let doc = serde_json::json!({
                "t_s": traj.t,
                "a1": traj.states.iter().map(|s| [s.a1.re, s.a1.im]).collect::<Vec<_>>(),
                "a2": traj.states.iter().map(|s| [s.a2.re, s.a2.im]).collect::<Vec<_>>(),
            });
            ctx.write("trajectory.json", doc.to_string().as_bytes())?;
            let doc = serde_json::json!({"freq_hz": spec.freq, "power_dbm": spec.power_dbm});
            ctx.write("spectrum.json", doc.to_string().as_bytes())?;
        }
        _ => {
            ctx.write_with("trajectory.csv", |w| traj.write_csv(w))?;
            ctx.write_with("spectrum.csv", |w| spec.write_csv(w))?;
        }
    }
    if op.is_driven() {
        let dc = spectral::dc_component(&traj, spectral::DEFAULT_DISCARD)?;
        println!("s21_db = {}", spectral::s21_db(&p, dc, traj.epsilon)?);
        let leak = spectral::lc_leakage(&p, &traj)?;
        println!("leakage_dbm = {}", leak.power_dbm);
        println!("leakage_offset_hz = {}", leak.freq_offset);
    } else {
        let obs = spectral::lc_extract(&p, &traj)?;
        println!("limit_cycle = {}", obs.present);
        println!("amp_dbm = {}", obs.amp_dbm);
        println!("freq_offset_hz = {}", obs.freq_offset);
        println!("photons = {}", obs.photons);
    }
    Ok(0)
}

fn transmission(ctx: &Ctx, g: &GlobalArgs) -> Result<i32> {
    let p = ctx.cfg.params();
    let grid = &ctx.cfg.grid;
    let gains = g.delta_g.map_or_else(|| grid.transmission_delta_g_db.clone(), |dg| vec![dg]);
    let omega: Vec<f64> = grid.drive_freq_ghz.values().into_iter().map(units::ghz).collect();
    let pd = g.pd_dbm.unwrap_or(grid.transmission_p_d_dbm);
    let sweep = experiments::transmission_sweep(
        &p,
        grid.point.phi_rad,
        &gains,
        &omega,
        pd,
        &ctx.cfg.integrator_config(),
        ctx.workers,
    )?;
    ctx.write_grid("transmission", &sweep, None)?;
    Ok(if report_cell_errors(&sweep) { EXIT_NUMERICAL } else { 0 })
}

fn phase_diagram(ctx: &Ctx) -> Result<i32> {
    let p = ctx.cfg.params();
    let phis = ctx.cfg.grid.phi_rad.values();
    let gains = ctx.cfg.grid.delta_g_db.values();
    let pd = experiments::lc_phase_diagram(&p, &phis, &gains, &ctx.cfg.integrator_config(), ctx.workers)?;
    let curve = stability::boundary_curve(&p, 1000);
    ctx.write_grid("phase_diagram_amp", &pd.amp_dbm, Some(&curve))?;
    ctx.write_grid("phase_diagram_freq", &pd.freq_offset_mhz, Some(&curve))?;
    let failed = report_cell_errors(&pd.amp_dbm);
    Ok(if failed { EXIT_NUMERICAL } else { 0 })
}

/// Spectra of a drive sweep max-pooled onto `rows` offsets within ±`half_span` Hz.
fn pooled_spectra(sweep: &experiments::DriveSweep, half_span: f64, rows: usize) -> SweepGrid {
    let offsets = experiments::linspace(-half_span, half_span, rows);
    let step = 2.0 * half_span / (rows - 1) as f64;
    let mut cells = Vec::with_capacity(sweep.omega_d.len() * rows);
    let mut valid = Vec::with_capacity(cells.capacity());
    for power in &sweep.power_dbm {
        let mut pooled = vec![f64::NEG_INFINITY; rows];
        for (f, pw) in sweep.freq_hz.iter().zip(power) {
            let r = ((f + half_span) / step).round();
            if (0.0..rows as f64).contains(&r) {
                let r = r as usize;
                pooled[r] = pooled[r].max(*pw);
            }
        }
        for v in pooled {
            valid.push(v.is_finite());
            cells.push(if v.is_finite() { v } else { f64::NAN });
        }
    }
    let mut fixed = std::collections::BTreeMap::new();
    fixed.insert("p_d_dbm".to_string(), sweep.p_d_dbm);
    SweepGrid {
        quantity: "power_dbm".into(),
        axis1: Axis::new("drive_freq_ghz", sweep.omega_d.iter().map(|&w| units::to_ghz(w)).collect()),
        axis2: Axis::new("offset_mhz", offsets.iter().map(|f| f / 1e6).collect()),
        cells,
        valid,
        metadata: RunMetadata {
            run_id: experiments::run_id(&format!("pooled|{:?}|{}", sweep.omega_d, sweep.p_d_dbm)),
            fixed,
            errors: sweep.errors.iter().map(|(i, m)| (*i, 0, m.clone())).collect(),
        },
    }
}

fn sync(ctx: &Ctx, g: &GlobalArgs, contours: bool) -> Result<i32> {
    let p = ctx.cfg.params();
    let grid = &ctx.cfg.grid;
    let powers = g.pd_dbm.map_or_else(|| grid.sync_p_d_dbm.clone(), |pd| vec![pd]);
    let icfg = ctx.cfg.integrator_config();
    let mut failed = false;
    if contours {
        let maps = experiments::sync_power_contours(
            &p,
            &grid.phi_rad.values(),
            &grid.delta_g_db.values(),
            &powers,
            &icfg,
            ctx.workers,
        )?;
        let curve = stability::boundary_curve(&p, 1000);
        for (m, pd) in maps.iter().zip(&powers) {
            ctx.write_grid(&format!("sync_contours_pd{pd}"), m, Some(&curve))?;
            failed |= report_cell_errors(m);
        }
    } else {
        let omega: Vec<f64> = grid.drive_freq_ghz.values().into_iter().map(units::ghz).collect();
        let pt = &grid.point;
        for pd in powers {
            let sweep =
                experiments::drive_frequency_sweep(&p, pt.phi_rad, pt.delta_g_db, pd, &omega, &icfg, ctx.workers)?;
            ctx.write_with(&format!("sync_pd{pd}_summary.csv"), |w| sweep.write_summary_csv(w))?;
            let pooled = pooled_spectra(&sweep, 20e6, 201);
            ctx.write_grid(&format!("sync_pd{pd}_spectra"), &pooled, None)?;
            match sweep.locking_window(p.omega_c - analytics::lc_frequency(&p, pt.phi_rad)) {
                Some(w) => println!(
                    "P_d = {pd} dBm: locking window {} MHz ({} to {} GHz)",
                    units::to_mhz(w.width),
                    units::to_ghz(w.lo),
                    units::to_ghz(w.hi)
                ),
                None => println!("P_d = {pd} dBm: not locked at the limit-cycle frequency"),
            }
            for (i, msg) in &sweep.errors {
                eprintln!("error at drive_freq_ghz={}: {msg}", units::to_ghz(sweep.omega_d[*i]));
                failed = true;
            }
        }
    }
    Ok(if failed { EXIT_NUMERICAL } else { 0 })
}

fn analytics_cmd(ctx: &Ctx) -> Result<i32> {
    let p = ctx.cfg.params();
    let op = ctx.point();
    let (phi, dg) = (op.phi, op.delta_g_db);
    let report = stability::is_stable(&p, &OperatingPoint { p_drive_dbm: None, ..op });
    let rates = analytics::normal_mode_rates(&p, &op);
    let lc = analytics::lc_solution(&p, &op);
    let doc = serde_json::json!({
        "phi_rad": phi,
        "delta_g_db": dg,
        "stable": report.stable,
        "max_re_eigenvalue_per_s": report.max_re_eigenvalue,
        "threshold_gain_db": stability::threshold_gain(&p, phi),
        "j0_mhz": units::to_mhz(report.j0),
        "kappa0_mhz": units::to_mhz(report.kappa0),
        "kappa_plus0_mhz": units::to_mhz(rates.kappa_plus0),
        "kappa_minus0_mhz": units::to_mhz(rates.kappa_minus0),
        "domega_plus0_mhz": units::to_mhz(rates.domega_plus0),
        "domega_minus0_mhz": units::to_mhz(rates.domega_minus0),
        "n_sat": p.n_sat(),
        "n_lc": lc.map(|s| s.n_lc),
        "lc_power_dbm": lc.and_then(|s| spectral::photons_to_dbm(&p, s.n_lc).ok()),
        "domega_lc_mhz": units::to_mhz(analytics::lc_frequency(&p, phi)),
        "kappa_lc_mhz": lc.map(|s| units::to_mhz(s.kappa_lc)),
    });
    if ctx.data_format == OutputFormat::Json {
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else if let serde_json::Value::Object(m) = doc {
        for (k, v) in m {
            println!("{k} = {v}");
        }
    }
    Ok(0)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("cannot open {}: {e}", path.display())))
}

fn fit_s11(ctx: &Ctx, input: &Path) -> Result<i32> {
    let rows = calibration::read_s11_csv(open(input)?)?;
    let (f, m): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let fit = calibration::s11_fit(&f, &m)?;
    let doc = serde_json::json!({
        "resonance_ghz": units::to_ghz(fit.omega_res),
        "q_int": fit.q_int,
        "q_c": fit.q_c,
        "kappa_int_mhz": units::to_mhz(fit.kappa_int()),
        "kappa_c_mhz": units::to_mhz(fit.kappa_c()),
        "baseline": fit.baseline,
        "source": input.display().to_string(),
    });
    let text = serde_json::to_string_pretty(&doc)?;
    println!("{text}");
    ctx.write("s11_fit.json", text.as_bytes())?;
    Ok(0)
}

fn fit_gain(ctx: &Ctx, input: &Path) -> Result<i32> {
    let rows = calibration::read_gain_csv(open(input)?)?;
    let (pin, pout): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let fit = calibration::gain_profile_fit(&pin, &pout)?;
    let doc = serde_json::json!({
        "g0_db": fit.g0_db,
        "p_sat_mw": fit.p_sat * 1e3,
        "b_g_mw": fit.b_g * 1e3,
        "source": input.display().to_string(),
    });
    let text = serde_json::to_string_pretty(&doc)?;
    println!("{text}");
    ctx.write("gain_fit.json", text.as_bytes())?;
    Ok(0)
}

fn hashmap(ctx: &Ctx, g: &GlobalArgs, action: &HashmapAction) -> Result<i32> {
    let opts = ctx.cfg.hashmap_options();
    match action {
        HashmapAction::Build { input } => {
            let (profile, source) = match input {
                Some(path) => {
                    let rows = calibration::read_calibration_csv(open(path)?)?;
                    (calibration::profile_from_calibration(&rows, opts.g0_db), path.display().to_string())
                }
                None => (calibration::synthetic_profile(72, 0.8, 3.0), "synthetic".to_string()),
            };
            let map = calibration::hashmap_build(profile, &ctx.cfg.calibration.delta_g_targets_db, opts)?;
            for r in map.profile.iter().filter(|r| r.outlier) {
                println!("outlier excluded: phi_exp_deg = {}, loss_db = {}", r.phi_exp_deg, r.loss_db);
            }
            ctx.write_with("hashmap.csv", |w| {
                map.write_csv(w).map_err(|e| std::io::Error::other(e.to_string()))
            })?;
            ctx.write("hashmap.json", (map.metadata_json(&source) + "\n").as_bytes())?;
            Ok(0)
        }
        HashmapAction::Lookup { table } => {
            let map = HashMap::read_csv(open(table)?, opts)?;
            let dg = g.delta_g.unwrap_or(ctx.cfg.grid.point.delta_g_db);
            let phi = g.phi.unwrap_or(ctx.cfg.grid.point.phi_rad);
            let s = calibration::hashmap_lookup(&map, dg, phi)
                .map_err(|e| match e {
                    Error::Range(m) => Error::Range(format!("at φ = {phi} rad: {m}")),
                    other => other,
                })?;
            let (dg_real, phi_real) = map.implied(&s).unwrap_or((f64::NAN, f64::NAN));
            println!("gamma_fwd_db = {}", s.gamma_fwd_db);
            println!("gamma_bwd_db = {}", s.gamma_bwd_db);
            println!("phi_exp_deg = {}", s.phi_exp_deg);
            println!("implied_delta_g_db = {dg_real}");
            println!("implied_phi_rad = {phi_real}");
            Ok(0)
        }
    }
}

fn validate_cmd(ctx: &Ctx, criterion: Option<u8>) -> Result<i32> {
    let ids: Vec<u8> = match criterion {
        Some(id) if (1..=11).contains(&id) => vec![id],
        Some(id) => return Err(Error::Config(format!("no criterion {id}; choose 1-11"))),
        None => (1..=11).collect(),
    };
    let mut all = true;
    for id in ids {
        let r = validate::run(id, ctx.workers);
        println!("{r}");
        all &= r.passed;
    }
    Ok(if all { 0 } else { EXIT_NUMERICAL })
}
