use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use netflux_core::config::{load_config, SimulationConfig};
use netflux_core::geometry::NetworkGeometry;
use netflux_core::output::render_geometry;
use netflux_core::setup::{build_setup, load_geometry, load_geometry_files, SimulationSetup};
use netflux_core::verification::{spatial_sweep, temporal_sweep, HeatScenario};

use crate::{ConvergenceArgs, ExitWith, Failure, GeometryArgs, PlotGeometryArgs, ValidateArgs, EXIT_INPUT, EXIT_ORDER};

pub fn read_config(path: &Path, model: &str) -> anyhow::Result<SimulationConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    load_config(&text, model).with_context(|| format!("{}", path.display()))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Geometry from explicit CSV flags, falling back to the configuration.
pub fn resolve_geometry(
    flags: &GeometryArgs,
    config: Option<(&SimulationConfig, &Path)>,
) -> anyhow::Result<NetworkGeometry> {
    if let (Some(points), Some(lines)) = (&flags.points, &flags.lines) {
        return Ok(load_geometry_files(points, lines, flags.length_scale)?);
    }
    match config {
        Some((cfg, path)) => {
            let source = cfg.geometry.as_ref().ok_or_else(|| {
                anyhow!("{}: no [geometry] section and no --points/--lines given", path.display())
            })?;
            load_geometry(source, &config_dir(path)).with_context(|| format!("{}", path.display()))
        }
        None => bail!("give --points and --lines (or --config)"),
    }
}

pub fn prepare(model: &str, config: &Path, flags: &GeometryArgs) -> anyhow::Result<SimulationSetup> {
    let cfg = read_config(config, model)?;
    let geometry = resolve_geometry(flags, Some((&cfg, config)))?;
    build_setup(cfg, geometry).with_context(|| format!("{}", config.display()))
}

/// Refuses to clobber an existing file unless forced.
pub fn check_writable(path: &Path, force: bool) -> anyhow::Result<()> {
    if path.exists() && !force {
        bail!("{} already exists (use --force to overwrite)", path.display());
    }
    Ok(())
}

pub fn cmd_validate_config(args: &ValidateArgs) -> Result<(), Failure> {
    let cfg = read_config(&args.config, &args.model).exit_with(EXIT_INPUT)?;
    if cfg.geometry.is_some() {
        let geometry = resolve_geometry(&GeometryArgs::empty(), Some((&cfg, &args.config))).exit_with(EXIT_INPUT)?;
        let arcs = geometry.arcs.len();
        build_setup(cfg, geometry).with_context(|| format!("{}", args.config.display())).exit_with(EXIT_INPUT)?;
        println!("{}: ok ({arcs} arcs)", args.config.display());
    } else {
        println!("{}: ok", args.config.display());
    }
    Ok(())
}

pub fn cmd_describe(args: &GeometryArgs) -> Result<(), Failure> {
    let geometry = resolve_geometry(args, None).exit_with(EXIT_INPUT)?;
    print!("{}", geometry.describe());
    Ok(())
}

pub fn cmd_plot_geometry(args: &PlotGeometryArgs) -> Result<(), Failure> {
    let geometry = match &args.config {
        Some(path) => {
            // model only matters for parameter validation; the geometry is shared
            let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display())).exit_with(EXIT_INPUT)?;
            let cfg = ["ooc", "ks"]
                .iter()
                .find_map(|m| load_config(&text, m).ok())
                .ok_or_else(|| anyhow!("{}: not a valid ks or ooc configuration", path.display()))
                .exit_with(EXIT_INPUT)?;
            resolve_geometry(&args.geometry, Some((&cfg, path))).exit_with(EXIT_INPUT)?
        }
        None => resolve_geometry(&args.geometry, None).exit_with(EXIT_INPUT)?,
    };
    check_writable(&args.out, args.force).exit_with(EXIT_INPUT)?;
    std::fs::write(&args.out, render_geometry(&geometry))
        .with_context(|| format!("{}", args.out.display()))
        .exit_with(EXIT_INPUT)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn cmd_convergence(args: &ConvergenceArgs) -> Result<(), Failure> {
    let scenario = HeatScenario { t_final: args.t_final, ..HeatScenario::default() };
    match args.sweep.as_str() {
        "space" => {
            let report = spatial_sweep(&scenario, &args.levels, args.dt_factor).exit_with(EXIT_INPUT)?;
            print!("{}", report.to_table());
            check_errors_decrease(&report.levels.iter().map(|l| l.error).collect::<Vec<_>>())?;
            // the finest pair is the one in the asymptotic range
            let order = *report.orders.last().unwrap();
            println!("observed spatial order {order:.3}");
            if !(order >= 1.9) {
                return Err(Failure { code: EXIT_ORDER, error: anyhow!("spatial order {order:.3} below 1.9") });
            }
        }
        "time" => {
            let report = temporal_sweep(&scenario, args.elements, &args.steps).exit_with(EXIT_INPUT)?;
            print!("{}", report.to_table());
            check_errors_decrease(&report.levels.iter().map(|l| l.error).collect::<Vec<_>>())?;
            let order = *report.orders.last().unwrap();
            println!("observed temporal order {order:.3}");
            if !(0.9..=1.1).contains(&order) {
                return Err(Failure { code: EXIT_ORDER, error: anyhow!("temporal order {order:.3} outside [0.9, 1.1]") });
            }
        }
        other => {
            return Err(Failure { code: EXIT_INPUT, error: anyhow!("unknown sweep `{other}` (expected space or time)") })
        }
    }
    Ok(())
}

fn check_errors_decrease(errors: &[f64]) -> Result<(), Failure> {
    if errors.windows(2).all(|w| w[1] < w[0]) {
        Ok(())
    } else {
        Err(Failure { code: EXIT_ORDER, error: anyhow!("errors do not decrease under refinement: {errors:?}") })
    }
}

impl GeometryArgs {
    pub fn empty() -> Self {
        GeometryArgs { points: None, lines: None, length_scale: 1.0 }
    }
}
