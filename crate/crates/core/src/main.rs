use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use millmass::config::ScenarioConfig;
use millmass::dexel::init_workpiece;
use millmass::engagement::MillingMode;
use millmass::oracle::{compare, voxel_carve_path, OracleResult, VoxelGrid};
use millmass::scenario;
use millmass::simulate::{run_path, write_removals, LookupTable};
use millmass::toolpath::{load_path, resample, ToolPath};

/// Workpiece mass and center-of-mass lookup tables for milling tool paths.
#[derive(Parser)]
#[command(name = "millmass", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mass model along a path and write the lookup table.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Lookup table CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-step removal CSV (n,Vr_mm3,crx,cry,crz).
        #[arg(long)]
        removals: Option<PathBuf>,
        /// Dump the final dexel board as CSV.
        #[arg(long)]
        board: Option<PathBuf>,
    },
    /// Carve the path into a voxel grid and write the reference JSON.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Voxel edge length (mm).
        #[arg(long)]
        voxel: Option<f64>,
        /// Carve the path as loaded rather than resampled.
        #[arg(long)]
        raw_path: bool,
    },
    /// Compare a lookup table against an oracle result.
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        /// Report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a built-in tool path as CSV.
    Scenario {
        #[arg(value_enum)]
        kind: ScenarioKind,
        #[arg(long)]
        out: PathBuf,
        /// Matching run configuration (blank, tilt) as JSON.
        #[arg(long)]
        config_out: Option<PathBuf>,
        /// Stepover for pocket and face (mm).
        #[arg(long)]
        stepover: Option<f64>,
        /// Cut depth for pocket and face (mm).
        #[arg(long, default_value_t = 3.0)]
        depth: f64,
        /// Workpiece tilt about x for steps (degrees).
        #[arg(long, default_value_t = 0.0)]
        tilt: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioKind {
    Slot,
    Steps,
    Pocket,
    Face,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Down,
    Up,
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tool path, CSV (x_mm,y_mm,z_mm[,f_mm_min]) or linear G-code.
    #[arg(long)]
    path: PathBuf,
    #[arg(long)]
    path_step: Option<f64>,
    #[arg(long)]
    disk_height: Option<f64>,
    #[arg(long)]
    dphi_deg: Option<f64>,
    #[arg(long)]
    grid: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    tilt: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

impl RunArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        let r = &mut c.resolution;
        set(&mut r.path_step_mm, self.path_step);
        set(&mut r.disk_height_mm, self.disk_height);
        set(&mut r.dphi_deg, self.dphi_deg);
        set(&mut r.grid_mm, self.grid);
        set(&mut c.density_g_mm3, self.density);
        set(&mut c.workpiece.tilt_deg, self.tilt);
        if let Some(m) = self.mode {
            c.milling_mode = match m {
                Mode::Down => MillingMode::Down,
                Mode::Up => MillingMode::Up,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn output(flag: &Option<PathBuf>, cfg: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.clone())
        .with_context(|| format!("no output file for the {what}: pass --out or set it in the config"))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

fn simulate(run: &RunArgs, out: &Option<PathBuf>, removals: &Option<PathBuf>, board: &Option<PathBuf>) -> Result<()> {
    let cfg = run.config()?;
    let out = output(out, &cfg.output.table, "lookup table")?;
    let path = load_path(&run.path)?;
    let tool = cfg.tool()?;
    let wp = init_workpiece(cfg.box_dims(), &cfg.frame(), cfg.resolution.grid_mm, cfg.density_g_mm3)?;
    let start = Instant::now();
    let mut res = run_path(wp, &tool, &path, &cfg.sim_config())?;
    log::info!("simulated {} steps in {:.2?}", res.removals.len(), start.elapsed());

    res.table.provenance = vec![
        format!("millmass {}", env!("CARGO_PKG_VERSION")),
        format!("path: {} ({} positions, resampled to {})", run.path.display(), path.len(), res.path.len()),
        format!("config: {}", serde_json::to_string(&cfg)?),
    ];
    res.table.save(&out)?;
    if let Some(p) = removals.clone().or(cfg.output.removals.clone()) {
        let mut w = create(&p)?;
        write_removals(&res.removals, &mut w)?;
        w.flush()?;
    }
    if let Some(p) = board {
        let mut w = create(p)?;
        res.workpiece.write_csv(&mut w)?;
        w.flush()?;
    }
    let (first, last) = (&res.table.rows[0], res.final_state());
    println!(
        "steps {}  m0 {:.6} g  m {:.6} g  dm {:.6} g  com [{:.4}, {:.4}, {:.4}] mm",
        res.removals.len(),
        first.mass,
        last.mass,
        first.mass - last.mass,
        last.com.x,
        last.com.y,
        last.com.z
    );
    Ok(())
}

fn oracle(run: &RunArgs, out: &Option<PathBuf>, voxel: Option<f64>, raw: bool) -> Result<()> {
    let mut cfg = run.config()?;
    set(&mut cfg.resolution.voxel_mm, voxel);
    cfg.oracle.raw_path |= raw;
    cfg.validate()?;
    let out = output(out, &cfg.output.oracle, "oracle result")?;
    let tool = cfg.tool()?;
    let loaded = load_path(&run.path)?;
    let path: ToolPath = if cfg.oracle.raw_path {
        loaded
    } else {
        resample(&loaded, cfg.resolution.path_step_mm)?
    };
    let start = Instant::now();
    let mut grid = VoxelGrid::from_box(
        cfg.box_dims(),
        &cfg.frame(),
        cfg.resolution.voxel_mm,
        cfg.density_g_mm3,
        cfg.oracle.cell_cap,
    )?;
    let res = voxel_carve_path(&mut grid, &tool, &path, tool.flute_length);
    log::info!("oracle carved {} steps in {:.2?}", path.len().saturating_sub(1), start.elapsed());
    res.save(&out)?;
    println!("oracle dV {:.6} mm3  dm {:.6} g", res.dv_mm3, res.dm_g);
    Ok(())
}

fn compare_cmd(model: &Path, oracle: &Path, out: &Option<PathBuf>) -> Result<()> {
    let table = LookupTable::load(model)?;
    let reference = OracleResult::load(oracle)?;
    let report = compare(&table, &reference)?;
    if let Some(p) = out {
        report.save(p)?;
    }
    print!("{}", report.table());
    Ok(())
}

fn scenario_cmd(
    kind: ScenarioKind,
    out: &Path,
    config_out: &Option<PathBuf>,
    stepover: Option<f64>,
    depth: f64,
    tilt: f64,
) -> Result<()> {
    if !(depth > 0.0 && depth < scenario::BLANK.z) || stepover.is_some_and(|s| !(s > 0.0)) {
        anyhow::bail!("depth must be in (0, {}) and stepover > 0", scenario::BLANK.z);
    }
    let s = match kind {
        ScenarioKind::Slot => scenario::slot(),
        ScenarioKind::Steps => {
            let mut c = ScenarioConfig::default();
            c.workpiece.tilt_deg = tilt;
            c.validate()?;
            scenario::steps(c.frame())
        }
        ScenarioKind::Pocket => scenario::pocket(depth, stepover.unwrap_or(5.0)),
        ScenarioKind::Face => scenario::face(depth, stepover.unwrap_or(6.0)),
    };
    let mut w = create(out)?;
    writeln!(w, "# {}: {}", s.name, s.description)?;
    s.path.write_csv(&mut w)?;
    w.flush()?;
    if let Some(p) = config_out {
        let mut c = ScenarioConfig::default();
        c.workpiece.box_mm = s.dims.to_array();
        if matches!(kind, ScenarioKind::Steps) {
            c.workpiece.tilt_deg = tilt;
        }
        std::fs::write(p, c.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    println!("{}: {} positions, {:.3} mm", s.name, s.path.len(), s.path.length());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(n) = std::env::var("MILLMASS_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the worker pool: {e}");
                }
            }
            _ => log::warn!("ignoring MILLMASS_THREADS={n}: expected a positive integer"),
        }
    }
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Command::Simulate { run, out, removals, board } => simulate(run, out, removals, board),
        Command::Oracle { run, out, voxel, raw_path } => oracle(run, out, *voxel, *raw_path),
        Command::Compare { model, oracle, out } => compare_cmd(model, oracle, out),
        Command::Scenario { kind, out, config_out, stepover, depth, tilt } => {
            scenario_cmd(*kind, out, config_out, *stepover, *depth, *tilt)
        }
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
