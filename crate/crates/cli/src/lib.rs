//! `dipolar` command-line tool.
//!
//! ```text
//! dipolar rate      --species 52Cr --field-gauss 27 --temp-uk 275
//! dipolar sweep     --species 52Cr --temp-uk 50 --from 0.15 --to 1.7 --points 5
//! dipolar simulate  --config presets/0.7G-methodII.conf --out run.csv
//! dipolar fit ii    run.csv --config presets/0.7G-methodII.conf
//! dipolar presets
//! ```
//!
//! Exit codes: 0 on success, 1 when a computation fails (integrator,
//! quadrature, or a fit that cannot be carried out), 2 for usage and
//! configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use dipolar::dynamics::{
    apply_relative_noise, cloud_volume, default_rf_frequency, evolve_partial, rf_shield_check, EvolutionMode,
    Scenario,
};
use dipolar::estimate::{self, Column, TimeSeries, VolumeModel};
use dipolar::io::{self, format_number, ConfigMap, RunConfig, SweepAxis, SweepSpec};
use dipolar::ode;
use dipolar::thermal::{rate_coefficients, ThermalConditions};
use dipolar::units::Unit;
use dipolar::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Columns written by `simulate`.
pub const TRAJECTORY_COLUMNS: [Column; 5] = [Column::N3, Column::N2, Column::N1, Column::Temperature, Column::Volume];

#[derive(Debug, Parser)]
#[command(name = "dipolar", version, about = "Dipolar relaxation rates, cloud dynamics and rate-constant fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file in the key = value grammar.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Scenario preset; other flags and config keys override its values.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, value_name = "LABEL")]
    species: Option<String>,
    #[arg(long, value_name = "F", allow_hyphen_values = true)]
    field_gauss: Option<f64>,
    #[arg(long, value_name = "T", allow_hyphen_values = true)]
    temp_uk: Option<f64>,
    /// rf_shield or free_evolution.
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Write the result here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Field,
    Temp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    I,
    Ii,
    Iii,
    Beta2,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate coefficients at one field and temperature.
    Rate {
        #[command(flatten)]
        common: Common,
    },
    /// Rate coefficients over a field or temperature grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "field")]
        axis: Axis,
        /// First grid value, in G or uK.
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        /// Last grid value, in G or uK.
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 5)]
        points: usize,
    },
    /// Integrate the rate equations and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a rate constant to a CSV time series.
    Fit {
        #[arg(value_enum)]
        method: Method,
        /// CSV file with a t_s column.
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Restrict the fit to `start,end` seconds.
        #[arg(long, value_name = "START,END")]
        window: Option<String>,
    },
    /// List the built-in scenario presets.
    Presets {
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericalFailure { .. }
        | Error::DegenerateFit(_)
        | Error::InsufficientData(_)
        | Error::DivergentRatio => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let mut map = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidInput(format!("cannot read config {}: {e}", path.display()))
            })?;
            ConfigMap::parse(&text)?
        }
        None => ConfigMap::default(),
    };
    if let Some(p) = &common.preset {
        map.set("preset", p.as_str())?;
    }
    if let Some(s) = &common.species {
        map.set("species", s.as_str())?;
    }
    if let Some(b) = common.field_gauss {
        map.set("field_gauss", b.to_string())?;
    }
    if let Some(t) = common.temp_uk {
        map.set("temp_uk", t.to_string())?;
    }
    if let Some(m) = &common.mode {
        map.set("mode", m.as_str())?;
    }
    if let Some(s) = common.seed {
        map.set("seed", s.to_string())?;
    }
    map.resolve()
}

fn emit(text: &str, out: Option<&PathBuf>, stdout: &mut dyn Write) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", p.display()))),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn cm3s(v: f64) -> String {
    format_number(Unit::CubicCentimetrePerSecond.from_si(v).value)
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Error> {
    match command {
        Command::Rate { common } => {
            let cfg = load_config(&common)?;
            let r = rate_coefficients(&cfg.species, &ThermalConditions::new(cfg.temperature, cfg.field)?)?;
            let mut text = String::from("species,B_gauss,T_uK,beta_event_cm3s,beta_loss_cm3s,beta_elastic_cm3s\n");
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                cfg.species.label(),
                format_number(Unit::Gauss.from_si(cfg.field).value),
                format_number(Unit::MicroKelvin.from_si(cfg.temperature).value),
                cm3s(r.beta_event),
                cm3s(r.beta_loss),
                cm3s(r.beta_elastic_dd)
            );
            emit(&text, common.out.as_ref(), stdout)?;
        }
        Command::Sweep {
            common,
            axis,
            from,
            to,
            points,
        } => {
            let axis = match axis {
                Axis::Field => SweepAxis::Field,
                Axis::Temp => SweepAxis::Temperature,
            };
            // the swept quantity does not need to be in the config
            let mut probe = Common { ..common };
            match axis {
                SweepAxis::Field if probe.field_gauss.is_none() => probe.field_gauss = Some(from),
                SweepAxis::Temperature if probe.temp_uk.is_none() => probe.temp_uk = Some(from),
                _ => {}
            }
            let cfg = load_config(&probe)?;
            let spec = SweepSpec::linear(axis, from, to, points)?;
            let rows: Vec<Result<String, Error>> = spec
                .points()
                .par_iter()
                .map(|&x| {
                    let cond = match axis {
                        SweepAxis::Field => ThermalConditions::new(cfg.temperature, x)?,
                        SweepAxis::Temperature => ThermalConditions::new(x, cfg.field)?,
                    };
                    let r = rate_coefficients(&cfg.species, &cond)?;
                    Ok(format!(
                        "{},{},{}\n",
                        format_number(axis.unit().from_si(x).value),
                        cm3s(r.beta_event),
                        cm3s(r.beta_loss)
                    ))
                })
                .collect();
            let mut text = format!("{},beta_event_cm3s,beta_loss_cm3s\n", axis.header());
            for row in rows {
                text.push_str(&row?);
            }
            emit(&text, probe.out.as_ref(), stdout)?;
        }
        Command::Simulate { common } => return simulate(&common, stdout, stderr),
        Command::Fit {
            method,
            data,
            common,
            window,
        } => {
            let cfg = load_config(&common)?;
            let ts = io::parse_timeseries_csv(&data).map_err(|e| match e {
                Error::Io(io) => Error::InvalidInput(format!("cannot read {}: {io}", data.display())),
                other => other,
            })?;
            let window = match window {
                Some(w) => Some(io::parse_window(&w).map_err(Error::InvalidInput)?),
                None => cfg.fit_window,
            };
            let fit = match method {
                Method::I => {
                    let volume = match VolumeModel::from_series(&ts) {
                        Ok(v) => v,
                        Err(_) => VolumeModel::Constant(config_volume(&cfg)?),
                    };
                    estimate::fit_method_i(&ts, cfg.background_rate, &volume, window)?
                }
                Method::Ii => estimate::fit_method_ii(&with_volume(ts, &cfg)?, cfg.background_rate, window)?,
                Method::Iii => estimate::fit_method_iii(&with_volume(ts, &cfg)?, &cfg.species, cfg.field, window)?,
                Method::Beta2 => {
                    let v = match ts.volumes() {
                        Some(v) => v[0],
                        None => config_volume(&cfg)?,
                    };
                    estimate::fit_beta2(&ts, Some(v), window)?
                }
            };
            stdout.write_all(io::fit_report(&fit).as_bytes())?;
            if let Some(path) = &common.out {
                emit(&io::fit_csv(&fit), Some(path), stdout)?;
            }
        }
        Command::Presets { out } => {
            let mut text = String::from(
                "name,species,B_gauss,T_uK,freq_x_hz,freq_y_hz,freq_z_hz,density_per_cm3,gamma_bg_per_s,mode,duration_s\n",
            );
            for s in Scenario::all() {
                let f = s.trap.frequencies();
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    s.name,
                    s.species.label(),
                    format_number(Unit::Gauss.from_si(s.trap.offset_field()).value),
                    format_number(Unit::MicroKelvin.from_si(s.temperature).value),
                    format_number(f[0]),
                    format_number(f[1]),
                    format_number(f[2]),
                    format_number(Unit::PerCubicCentimetre.from_si(s.density).value),
                    format_number(s.trap.background_rate()),
                    s.mode,
                    format_number(s.duration)
                );
            }
            emit(&text, out.as_ref(), stdout)?;
        }
    }
    Ok(EXIT_OK)
}

/// Constant mean volume implied by the config's trap and temperature.
fn config_volume(cfg: &RunConfig) -> Result<f64, Error> {
    cloud_volume(cfg.temperature, &cfg.trap()?, &cfg.species)
}

/// Adds a constant volume column from the config when the data has none.
fn with_volume(ts: TimeSeries, cfg: &RunConfig) -> Result<TimeSeries, Error> {
    if ts.volumes().is_some() {
        return Ok(ts);
    }
    let v = config_volume(cfg)?;
    let mut cols: Vec<(Column, Vec<f64>)> = ts.columns().map(|(c, x)| (c, x.to_vec())).collect();
    cols.push((Column::Volume, vec![v; ts.len()]));
    TimeSeries::new(ts.times().to_vec(), cols)
}

fn simulate(common: &Common, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Error> {
    let cfg = load_config(common)?;
    let scenario = cfg.scenario()?;
    let rates = cfg.rate_inputs()?;
    if scenario.mode == EvolutionMode::RfShield {
        let nu = match cfg.rf_frequency {
            Some(nu) => nu,
            None => default_rf_frequency(&cfg.species, cfg.field)?,
        };
        if nu > 0.0 {
            let report = rf_shield_check(nu, cfg.field, cfg.temperature, &cfg.species)?;
            if !report.removes_products || !report.no_evaporation {
                let _ = writeln!(
                    stderr,
                    "warning: rf shield at {} MHz: removes products = {}, eta = {:.3}",
                    Unit::MegaHertz.from_si(nu).value,
                    report.removes_products,
                    report.eta
                );
            }
        } else {
            let _ = writeln!(stderr, "warning: no usable rf shield frequency at this field");
        }
    }
    let (traj, failure) = evolve_partial(
        &scenario.initial_state()?,
        &scenario.trap,
        &scenario.species,
        scenario.mode,
        &rates,
        &scenario.time_grid()?,
        ode::Options::default().rtol,
    )?;
    let mut ts = TimeSeries::from_trajectory(&traj)?;
    if cfg.noise_rel > 0.0 {
        let mut cols: Vec<(Column, Vec<f64>)> = ts.columns().map(|(c, x)| (c, x.to_vec())).collect();
        for (k, (c, values)) in cols.iter_mut().enumerate() {
            if matches!(c, Column::N3 | Column::N2 | Column::N1) {
                apply_relative_noise(values, cfg.noise_rel, cfg.seed.wrapping_add(k as u64))?;
            }
        }
        ts = TimeSeries::new(ts.times().to_vec(), cols)?;
    }
    emit(&io::write_timeseries_csv(&ts, &TRAJECTORY_COLUMNS), common.out.as_ref(), stdout)?;
    match failure {
        None => Ok(EXIT_OK),
        Some(e) => {
            let last = traj.points.last().map_or(0.0, |p| p.state.time);
            let _ = writeln!(stderr, "error: {e}");
            let _ = writeln!(stderr, "partial output: rows up to t = {last} s only");
            Ok(EXIT_NUMERICAL)
        }
    }
}
