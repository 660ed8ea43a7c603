use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use log::info;
use netflux_core::output::{mass_report, render_birdview, render_geometry, snapshot, write_diagnostics, write_snapshot};
use netflux_core::time_integration::{advance, StepMode, StepRecord};

use crate::commands::prepare;
use crate::{ExitWith, Failure, RunArgs, EXIT_INPUT, EXIT_SOLVER};

fn check_output_dir(out: &Path, force: bool) -> anyhow::Result<()> {
    if out.is_file() {
        bail!("{} is a file, expected a directory", out.display());
    }
    if !force && out.is_dir() && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) {
        bail!("{} is not empty (use --force to overwrite)", out.display());
    }
    Ok(())
}

fn create(path: PathBuf) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(&path).with_context(|| format!("{}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let setup = prepare(&args.model, &args.config, &args.geometry).exit_with(EXIT_INPUT)?;
    let mut time = setup.config.time.clone();
    if let Some(t) = args.t_final {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure { code: EXIT_INPUT, error: anyhow!("--t-final must be positive, got {t}") });
        }
        time.t_final = t;
    }
    let adaptive = args.adaptive || time.adaptive;
    let mode = match (args.steps, adaptive) {
        (Some(n), false) => StepMode::Fixed(n),
        (Some(n), true) => StepMode::Adaptive { t_final: f64::INFINITY, max_steps: Some(n) },
        (None, true) => StepMode::Adaptive { t_final: time.t_final, max_steps: None },
        (None, false) => {
            // constant steps that land on the final time
            let n = (time.t_final / time.dt_init - 1e-9).ceil().max(1.0) as usize;
            time.dt_init = time.t_final / n as f64;
            StepMode::Fixed(n)
        }
    };
    check_output_dir(&args.out, args.force).exit_with(EXIT_INPUT)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("{}", args.out.display())).exit_with(EXIT_INPUT)?;

    let system = &setup.system;
    let names = setup.config.equation_names();
    let initial = setup.initial_state().context("initial state").exit_with(EXIT_INPUT)?;
    let out = &args.out;
    let mut masses = create(out.join("masses.csv")).exit_with(EXIT_INPUT)?;
    writeln!(masses, "time,equation,total,left,right").exit_with(EXIT_INPUT)?;
    let mut write_masses = |state: &netflux_core::hdg::SystemState| -> anyhow::Result<()> {
        let rep = mass_report(system, state);
        for (eq, name) in names.iter().enumerate() {
            let (l, r) = rep.split[eq];
            writeln!(masses, "{},{name},{},{l},{r}", rep.time, rep.total[eq])?;
        }
        Ok(())
    };
    write_snapshot(&snapshot(system, &initial), create(out.join("snapshot_000000.csv")).exit_with(EXIT_INPUT)?)
        .exit_with(EXIT_INPUT)?;
    write_masses(&initial).exit_with(EXIT_INPUT)?;

    let mut records: Vec<StepRecord> = Vec::new();
    let mut io_error: Option<anyhow::Error> = None;
    let mut accepted = 0usize;
    let result = advance(system, initial, &time, mode, |rec, state| {
        records.push(*rec);
        if !rec.accepted || io_error.is_some() {
            return;
        }
        accepted += 1;
        let mut write = || -> anyhow::Result<()> {
            write_masses(state)?;
            if args.snapshot_every > 0 && accepted.is_multiple_of(args.snapshot_every) {
                write_snapshot(&snapshot(system, state), create(out.join(format!("snapshot_{accepted:06}.csv")))?)?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            io_error = Some(e);
        }
    });
    masses.flush().exit_with(EXIT_INPUT)?;
    write_diagnostics(&records, create(out.join("diagnostics.csv")).exit_with(EXIT_INPUT)?).exit_with(EXIT_INPUT)?;
    if let Some(e) = io_error {
        return Err(Failure { code: EXIT_INPUT, error: e });
    }
    let outcome = result.context("solver aborted").exit_with(EXIT_SOLVER)?;
    let state = &outcome.state;
    write_snapshot(&snapshot(system, state), create(out.join("snapshot_final.csv")).exit_with(EXIT_INPUT)?)
        .exit_with(EXIT_INPUT)?;
    if args.render {
        let write_svg = |name: String, body: String| std::fs::write(out.join(&name), body).with_context(|| name);
        write_svg("geometry.svg".into(), render_geometry(system.geometry())).exit_with(EXIT_INPUT)?;
        for (eq, name) in names.iter().enumerate() {
            let title = format!("{name} at t = {}", state.time);
            write_svg(format!("birdview_{name}.svg"), render_birdview(system, state, eq, &title)).exit_with(EXIT_INPUT)?;
        }
    }
    info!("finished: {} accepted steps, t = {}", outcome.accepted_steps(), state.time);
    println!("{} accepted steps, final time {}; outputs in {}", outcome.accepted_steps(), state.time, out.display());
    Ok(())
}
