//! Run configuration files and the CSV time-series format.
//!
//! # Config grammar
//!
//! One `key = value` pair per line. `#` starts a comment, blank lines are
//! ignored, keys are flat and carry their laboratory unit in the name:
//!
//! ```text
//! # high-field decay with an rf shield
//! preset = 27G-methodI
//! field_gauss = 27
//! temp_uk = 275
//! ```
//!
//! `species`, `field_gauss` and `temp_uk` are required unless a `preset` is
//! given, in which case they (and everything else) default to the preset's
//! values. See [`KEYS`] for the full list.
//!
//! # CSV vocabulary
//!
//! The header row names columns from `t_s, N3, N2, N1, T_uK, sigma_x_m,
//! sigma_y_m, sigma_z_m, V_cm3`, in any order; `t_s` and at least one data
//! column are required. Numbers are written with 9 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::channels::Species;
use crate::dynamics::{EvolutionMode, RateInputs, Scenario, TrapConfig};
use crate::estimate::{Column, FitResult, TimeSeries};
use crate::units::Unit;
use crate::{Error, Result};

/// Accepted config keys with a one-line description each.
pub const KEYS: [(&str, &str); 22] = [
    ("preset", "scenario preset supplying defaults for every other key"),
    ("species", "species label: 52Cr, 50Cr or 4He*"),
    ("field_gauss", "offset field, 0 to 100 G"),
    ("temp_uk", "initial temperature, above 0 and up to 10000 uK"),
    ("freq_x_hz", "trap frequency along x"),
    ("freq_y_hz", "trap frequency along y"),
    ("freq_z_hz", "trap frequency along z"),
    ("gamma_bg_per_s", "background-gas loss rate"),
    ("density_per_cm3", "initial mean density N_tot / V"),
    ("polarization", "fraction of atoms in the stretched state, 0 to 1"),
    ("mode", "rf_shield or free_evolution"),
    ("rates", "theory (default) or fixed"),
    ("beta_event_cm3s", "event rate constant used when rates = fixed"),
    ("beta_loss_cm3s", "loss rate constant used when rates = fixed"),
    ("beta2_cm3s", "lumped loss rate constant of the m_S = 2 cloud"),
    ("self_consistent", "re-evaluate theory rates as the cloud heats (true/false)"),
    ("duration_s", "simulated time span"),
    ("samples", "number of output rows of a simulation"),
    ("seed", "seed of the measurement-noise generator"),
    ("noise_rel", "relative Gaussian noise added to simulated atom numbers"),
    ("rf_mhz", "rf-shield frequency checked by simulate in rf_shield mode"),
    ("fit_window_s", "fit window as `start,end` in seconds"),
];

const REQUIRED: [&str; 3] = ["species", "field_gauss", "temp_uk"];

/// Where the two-body rate constants come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSource {
    Theory,
    /// m³/s
    Fixed { beta_event: f64, beta_loss: f64 },
}

/// A validated run configuration in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<&'static str>,
    pub species: Species,
    /// T
    pub field: f64,
    /// K
    pub temperature: f64,
    /// Hz, if known.
    pub frequencies: Option<[f64; 3]>,
    /// 1/s
    pub background_rate: f64,
    /// Initial `N_tot / V̄` in 1/m³, if known.
    pub density: Option<f64>,
    pub polarization: f64,
    pub mode: EvolutionMode,
    pub rates: RateSource,
    /// m³/s
    pub beta2: f64,
    pub self_consistent: bool,
    /// s
    pub duration: f64,
    pub samples: usize,
    pub seed: u64,
    pub noise_rel: f64,
    /// Hz
    pub rf_frequency: Option<f64>,
    /// s
    pub fit_window: Option<(f64, f64)>,
}

impl RunConfig {
    pub fn trap(&self) -> Result<TrapConfig> {
        let freq = self.frequencies.ok_or_else(|| Error::Config {
            line: 0,
            message: "trap frequencies freq_x_hz, freq_y_hz, freq_z_hz are required here".into(),
        })?;
        TrapConfig::new(freq, self.field, self.background_rate)
    }

    pub fn rate_inputs(&self) -> Result<RateInputs> {
        let mut r = match self.rates {
            RateSource::Theory => RateInputs::theory(&self.species, &self.trap()?, self.temperature, self.beta2)?,
            RateSource::Fixed { beta_event, beta_loss } => RateInputs::fixed(beta_event, beta_loss, self.beta2)?,
        };
        r.self_consistent = self.self_consistent;
        Ok(r)
    }

    /// The configured experiment as a [`Scenario`].
    pub fn scenario(&self) -> Result<Scenario> {
        let density = self.density.ok_or_else(|| Error::Config {
            line: 0,
            message: "density_per_cm3 is required to set up a simulation".into(),
        })?;
        Ok(Scenario {
            name: self.preset.unwrap_or("custom"),
            species: self.species.clone(),
            trap: self.trap()?,
            temperature: self.temperature,
            density,
            polarization: self.polarization,
            mode: self.mode,
            beta2: self.beta2,
            duration: self.duration,
            samples: self.samples,
        })
    }
}

/// Raw `key = value` pairs with the line each came from. Line 0 marks a
/// value set from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if value.is_empty() {
                return Err(Error::Config {
                    line,
                    message: format!("`{key}` has no value"),
                });
            }
            if let Some((_, first)) = entries.insert(key.to_string(), (value.to_string(), line)) {
                return Err(Error::Config {
                    line,
                    message: format!("`{key}` already set on line {first}"),
                });
            }
        }
        Ok(ConfigMap { entries })
    }

    /// Sets or replaces a key, as a command-line flag would.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config {
                line: 0,
                message: format!("unknown key `{key}`"),
            });
        }
        self.entries.insert(key.to_string(), (value.into(), 0));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let preset = match self.entries.get("preset") {
            Some((name, line)) => Some(Scenario::preset(name).map_err(|e| Error::Config {
                line: *line,
                message: e.to_string(),
            })?),
            None => None,
        };
        if preset.is_none() {
            let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !self.entries.contains_key(*k)).collect();
            if !missing.is_empty() {
                return Err(Error::Config {
                    line: 0,
                    message: format!("missing required keys: {}", missing.join(", ")),
                });
            }
        }

        let species = match self.entries.get("species") {
            Some((label, line)) => Species::preset(label).map_err(|e| Error::Config {
                line: *line,
                message: e.to_string(),
            })?,
            None => preset.as_ref().map(|p| p.species.clone()).expect("checked above"),
        };
        let field = match self.number("field_gauss")? {
            Some(b) => {
                self.check_range("field_gauss", b, (0.0..=100.0).contains(&b), "0 to 100 G")?;
                Unit::Gauss.to_si(b)
            }
            None => preset.as_ref().map(|p| p.trap.offset_field()).expect("checked above"),
        };
        let temperature = match self.number("temp_uk")? {
            Some(t) => {
                self.check_range("temp_uk", t, t > 0.0 && t <= 10_000.0, "above 0 and up to 10 mK")?;
                Unit::MicroKelvin.to_si(t)
            }
            None => preset.as_ref().map(|p| p.temperature).expect("checked above"),
        };

        let axes = ["freq_x_hz", "freq_y_hz", "freq_z_hz"];
        let given: Vec<Option<f64>> = axes.iter().map(|k| self.number(k)).collect::<Result<_>>()?;
        for (k, v) in axes.iter().zip(&given) {
            if let Some(v) = v {
                self.check_range(k, *v, *v > 0.0, "positive")?;
            }
        }
        let base = preset.as_ref().map(|p| p.trap.frequencies());
        let frequencies = match (given.iter().all(Option::is_some), given.iter().any(Option::is_some), base) {
            (true, _, _) => Some([given[0].unwrap(), given[1].unwrap(), given[2].unwrap()]),
            (false, true, Some(b)) => Some([0, 1, 2].map(|i| given[i].unwrap_or(b[i]))),
            (false, true, None) => {
                let line = axes.iter().filter_map(|k| self.entries.get(*k)).map(|(_, l)| *l).max();
                return Err(Error::Config {
                    line: line.unwrap_or(0),
                    message: "give all three trap frequencies".into(),
                });
            }
            (false, false, b) => b,
        };

        let background_rate = self.number_or("gamma_bg_per_s", preset.as_ref().map_or(0.0, |p| p.trap.background_rate()))?;
        self.check_range("gamma_bg_per_s", background_rate, background_rate >= 0.0, ">= 0")?;
        let density = match self.number("density_per_cm3")? {
            Some(n) => {
                self.check_range("density_per_cm3", n, n > 0.0, "positive")?;
                Some(Unit::PerCubicCentimetre.to_si(n))
            }
            None => preset.as_ref().map(|p| p.density),
        };
        let polarization = self.number_or("polarization", preset.as_ref().map_or(1.0, |p| p.polarization))?;
        self.check_range("polarization", polarization, (0.0..=1.0).contains(&polarization), "0 to 1")?;
        let mode = match self.entries.get("mode") {
            Some((m, line)) => m.parse().map_err(|e: Error| Error::Config {
                line: *line,
                message: e.to_string(),
            })?,
            None => preset.as_ref().map_or(EvolutionMode::FreeEvolution, |p| p.mode),
        };

        let rates = match self.entries.get("rates").map(|(v, l)| (v.as_str(), *l)) {
            None | Some(("theory", _)) => RateSource::Theory,
            Some(("fixed", line)) => {
                let pick = |k: &str| -> Result<f64> {
                    let v = self.number(k)?.ok_or_else(|| Error::Config {
                        line,
                        message: format!("rates = fixed needs `{k}`"),
                    })?;
                    self.check_range(k, v, v >= 0.0, ">= 0")?;
                    Ok(Unit::CubicCentimetrePerSecond.to_si(v))
                };
                RateSource::Fixed {
                    beta_event: pick("beta_event_cm3s")?,
                    beta_loss: pick("beta_loss_cm3s")?,
                }
            }
            Some((other, line)) => {
                return Err(Error::Config {
                    line,
                    message: format!("rates must be `theory` or `fixed`, got `{other}`"),
                })
            }
        };
        let beta2 = match self.number("beta2_cm3s")? {
            Some(b) => {
                self.check_range("beta2_cm3s", b, b >= 0.0, ">= 0")?;
                Unit::CubicCentimetrePerSecond.to_si(b)
            }
            None => preset.as_ref().map_or(0.0, |p| p.beta2),
        };
        let self_consistent = match self.entries.get("self_consistent") {
            Some((v, line)) => v.parse::<bool>().map_err(|_| Error::Config {
                line: *line,
                message: format!("self_consistent must be true or false, got `{v}`"),
            })?,
            None => false,
        };
        let duration = self.number_or("duration_s", preset.as_ref().map_or(10.0, |p| p.duration))?;
        self.check_range("duration_s", duration, duration > 0.0, "positive")?;
        let samples = self.integer("samples")?.unwrap_or(preset.as_ref().map_or(101, |p| p.samples as u64));
        if samples < 2 {
            return Err(self.error_at("samples", "need at least 2 samples".into()));
        }
        let seed = self.integer("seed")?.unwrap_or(0);
        let noise_rel = self.number_or("noise_rel", 0.0)?;
        self.check_range("noise_rel", noise_rel, (0.0..1.0).contains(&noise_rel), "0 to 1")?;
        let rf_frequency = match self.number("rf_mhz")? {
            Some(f) => {
                self.check_range("rf_mhz", f, f > 0.0, "positive")?;
                Some(Unit::MegaHertz.to_si(f))
            }
            None => None,
        };
        let fit_window = match self.entries.get("fit_window_s") {
            Some((v, line)) => Some(parse_window(v).map_err(|message| Error::Config { line: *line, message })?),
            None => None,
        };

        Ok(RunConfig {
            preset: preset.map(|p| p.name),
            species,
            field,
            temperature,
            frequencies,
            background_rate,
            density,
            polarization,
            mode,
            rates,
            beta2,
            self_consistent,
            duration,
            samples: samples as usize,
            seed,
            noise_rel,
            rf_frequency,
            fit_window,
        })
    }

    fn error_at(&self, key: &str, message: String) -> Error {
        Error::Config {
            line: self.entries.get(key).map_or(0, |(_, l)| *l),
            message,
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(Error::Config {
                    line: *line,
                    message: format!("`{key}` expects a number, got `{v}`"),
                }),
            },
        }
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    fn integer(&self, key: &str) -> Result<Option<u64>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<u64>().map(Some).map_err(|_| Error::Config {
                line: *line,
                message: format!("`{key}` expects a non-negative integer, got `{v}`"),
            }),
        }
    }

    fn check_range(&self, key: &str, value: f64, ok: bool, range: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(self.error_at(key, format!("`{key}` = {value} is out of range ({range})")))
        }
    }
}

/// Parses `start,end` in seconds.
pub fn parse_window(text: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.parse::<f64>().ok()).collect();
    match nums.as_deref() {
        Some([a, b]) if a < b => Ok((*a, *b)),
        _ => Err(format!("window must be `start,end` with start < end, got `{text}`")),
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    ConfigMap::parse(text)?.resolve()
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

/// Renders a config map back to the file grammar, keys in [`KEYS`] order.
pub fn write_config(map: &ConfigMap) -> String {
    let mut out = String::new();
    for (key, _) in KEYS {
        if let Some(v) = map.get(key) {
            let _ = writeln!(out, "{key} = {v}");
        }
    }
    out
}

/// Scan axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Field,
    Temperature,
}

impl SweepAxis {
    pub fn header(self) -> &'static str {
        match self {
            SweepAxis::Field => "B_gauss",
            SweepAxis::Temperature => "T_uK",
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            SweepAxis::Field => Unit::Gauss,
            SweepAxis::Temperature => Unit::MicroKelvin,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "field" | "field_gauss" | "B" => Ok(SweepAxis::Field),
            "temp" | "temperature" | "temp_uk" | "T" => Ok(SweepAxis::Temperature),
            _ => Err(Error::invalid(format!("unknown sweep axis `{s}` (field or temp)"))),
        }
    }
}

/// Grid of a field or temperature scan, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    axis: SweepAxis,
    points: Vec<f64>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a sweep needs at least 2 points"));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sweep points must be strictly increasing"));
        }
        Ok(SweepSpec { axis, points })
    }

    /// `count` evenly spaced points from `start` to `stop` (lab units of the
    /// axis).
    pub fn linear(axis: SweepAxis, start: f64, stop: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("a sweep needs at least 2 points"));
        }
        let step = (stop - start) / (count - 1) as f64;
        let points = (0..count)
            .map(|i| {
                let x = if i == count - 1 { stop } else { start + step * i as f64 };
                axis.unit().to_si(x)
            })
            .collect();
        SweepSpec::new(axis, points)
    }

    pub fn axis(&self) -> SweepAxis {
        self.axis
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Formats a number with 9 significant digits.
pub fn format_number(value: f64) -> String {
    format!("{value:.8e}")
}

/// Value as written in a CSV column.
fn to_column_unit(col: Column, value: f64) -> f64 {
    match col.unit() {
        Some(u) => u.from_si(value).value,
        None => value,
    }
}

fn from_column_unit(col: Column, value: f64) -> f64 {
    match col.unit() {
        Some(u) => u.to_si(value),
        None => value,
    }
}

/// CSV text with `t_s` first and the selected columns in canonical order.
/// Columns the series does not have are skipped.
pub fn write_timeseries_csv(ts: &TimeSeries, columns: &[Column]) -> String {
    let mut cols: Vec<Column> = columns.iter().copied().filter(|c| ts.column(*c).is_some()).collect();
    cols.sort();
    cols.dedup();
    let mut out = String::from("t_s");
    for c in &cols {
        out.push(',');
        out.push_str(c.header());
    }
    out.push('\n');
    for (i, t) in ts.times().iter().enumerate() {
        out.push_str(&format_number(*t));
        for c in &cols {
            out.push(',');
            out.push_str(&format_number(to_column_unit(*c, ts.column(*c).expect("filtered")[i])));
        }
        out.push('\n');
    }
    out
}

/// Reads a CSV time series. Rows come back sorted by time. Errors carry the
/// 1-based row (the header is row 1) and column.
pub fn read_timeseries_csv(reader: impl Read) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(1, 0, e.to_string()))?,
        None => return Err(csv_error(1, 0, "empty file".into())),
    };
    let mut time_col = None;
    let mut data_cols: Vec<(usize, Column)> = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if name == "t_s" {
            if time_col.replace(j).is_some() {
                return Err(csv_error(1, j + 1, "duplicate column `t_s`".into()));
            }
            continue;
        }
        let col: Column = name
            .parse()
            .map_err(|_| csv_error(1, j + 1, format!("unknown column `{name}`")))?;
        if data_cols.iter().any(|(_, c)| *c == col) {
            return Err(csv_error(1, j + 1, format!("duplicate column `{name}`")));
        }
        data_cols.push((j, col));
    }
    let time_col = time_col.ok_or_else(|| csv_error(1, 0, "missing `t_s` column".into()))?;
    if data_cols.is_empty() {
        return Err(csv_error(1, 0, "need at least one data column besides `t_s`".into()));
    }

    let mut times = Vec::new();
    let mut rows_of_time = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); data_cols.len()];
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_error(row, 0, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(csv_error(
                row,
                0,
                format!("{} fields, header has {}", rec.len(), header.len()),
            ));
        }
        let cell = |j: usize| -> Result<f64> {
            let text = &rec[j];
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(csv_error(row, j + 1, format!("`{text}` is not a finite number"))),
            }
        };
        times.push(cell(time_col)?);
        rows_of_time.push(row);
        for (k, (j, col)) in data_cols.iter().enumerate() {
            values[k].push(from_column_unit(*col, cell(*j)?));
        }
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    if let Some(w) = order.windows(2).find(|w| times[w[0]] == times[w[1]]) {
        let row = rows_of_time[w[0]].max(rows_of_time[w[1]]);
        return Err(csv_error(row, time_col + 1, format!("duplicate time {}", times[w[0]])));
    }
    if times.is_empty() {
        return Err(csv_error(2, 0, "no data rows".into()));
    }
    TimeSeries::new(times, data_cols.iter().map(|(_, c)| *c).zip(values).collect())
}

fn csv_error(row: usize, column: usize, message: String) -> Error {
    Error::Csv { row, column, message }
}

pub fn parse_timeseries_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    read_timeseries_csv(std::fs::File::open(path)?)
}

/// Key-value rendering of a fit, parameters in their conventional units.
pub fn fit_report(fit: &FitResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model = {}", fit.model_tag);
    for p in &fit.params {
        let (v, u, tag) = lab_value(p.value, p.uncertainty, p.unit);
        let _ = writeln!(out, "{}{tag} = {} +/- {}", p.name, format_number(v), format_number(u));
    }
    let _ = writeln!(out, "residual_norm = {}", format_number(fit.residual_norm));
    let _ = writeln!(out, "points = {}", fit.points_used);
    let _ = writeln!(out, "converged = {}", fit.converged);
    for f in &fit.flags {
        let _ = writeln!(out, "flag = {f}");
    }
    out
}

/// CSV rendering of a fit: one row per parameter.
pub fn fit_csv(fit: &FitResult) -> String {
    let mut out = String::from("model,param,value,uncertainty,unit\n");
    for p in &fit.params {
        let (v, u, _) = lab_value(p.value, p.uncertainty, p.unit);
        let unit = p.unit.map_or("", |u| u.tag());
        let _ = writeln!(
            out,
            "{},{},{},{},{unit}",
            fit.model_tag,
            p.name,
            format_number(v),
            format_number(u)
        );
    }
    out
}

fn lab_value(value: f64, uncertainty: f64, unit: Option<Unit>) -> (f64, f64, String) {
    match unit {
        Some(u) => (
            u.from_si(value).value,
            u.from_si(uncertainty).value,
            format!("_{}", u.tag().replace('/', "")),
        ),
        None => (value, uncertainty, String::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn preset_config() {
        let cfg = parse_config_str("preset = 27G-methodI\n").unwrap();
        assert_eq!(cfg.frequencies, Some([120.0, 120.0, 73.0]));
        assert_relative_eq!(cfg.field, 27e-4, max_relative = 1e-15, epsilon = 0.0);
        assert_relative_eq!(cfg.temperature, 275e-6, max_relative = 1e-15, epsilon = 0.0);
        assert_eq!(cfg.mode, EvolutionMode::RfShield);
        let cfg = parse_config_str("preset = 27G-methodI\nfield_gauss = 30 # override\n").unwrap();
        assert_relative_eq!(cfg.field, 30e-4, max_relative = 1e-15, epsilon = 0.0);
    }

    #[test]
    fn empty_config_lists_missing_keys() {
        let err = parse_config_str("# nothing here\n\n").unwrap_err();
        let msg = err.to_string();
        for k in REQUIRED {
            assert!(msg.contains(k), "{msg}");
        }
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let text = "species = 52Cr\ntemp_uk = 50\nfield_gauss = -1\n";
        match parse_config_str(text).unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("out of range"));
            }
            e => panic!("{e}"),
        }
        match parse_config_str("species = 52Cr\nbogus = 1\n").unwrap_err() {
            Error::Config { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        assert!(parse_config_str("species = 52Cr\nfield_gauss = 101\ntemp_uk = 1").is_err());
        assert!(parse_config_str("species = 52Cr\nfield_gauss = 1\ntemp_uk = 0").is_err());
        assert!(parse_config_str("species = 52Cr\nfield_gauss = 1\ntemp_uk = 10001").is_err());
        assert!(parse_config_str("species = 87Rb\nfield_gauss = 1\ntemp_uk = 1").is_err());
        assert!(parse_config_str("species = 52Cr\nspecies = 50Cr\n").is_err());
    }

    #[test]
    fn fixed_rates_and_window() {
        let cfg = parse_config_str(
            "species=52Cr\nfield_gauss=0.7\ntemp_uk=50\nrates=fixed\nbeta_event_cm3s=1e-11\nbeta_loss_cm3s=3.1e-12\nfit_window_s=0,5\n",
        )
        .unwrap();
        match cfg.rates {
            RateSource::Fixed { beta_event, beta_loss } => {
                assert_relative_eq!(beta_event, 1e-17, max_relative = 1e-15, epsilon = 0.0);
                assert_relative_eq!(beta_loss, 3.1e-18, max_relative = 1e-15, epsilon = 0.0);
            }
            RateSource::Theory => panic!("expected fixed rates"),
        }
        assert_eq!(cfg.fit_window, Some((0.0, 5.0)));
        assert!(parse_config_str("species=52Cr\nfield_gauss=0.7\ntemp_uk=50\nrates=fixed\n").is_err());
    }

    #[test]
    fn csv_examples() {
        let ts = read_timeseries_csv("t_s,N3\n0,100\n1,90\n2,80\n".as_bytes()).unwrap();
        assert_eq!(ts.len(), 3);
        let ts = read_timeseries_csv("t_s,T_uK\n0,50.0\n1,51.0\n".as_bytes()).unwrap();
        assert_relative_eq!(ts.column(Column::Temperature).unwrap()[0], 5.0e-5, max_relative = 1e-15, epsilon = 0.0);
        let sorted = read_timeseries_csv("t_s,N3\n0,100\n1,90\n2,80\n".as_bytes()).unwrap();
        let shuffled = read_timeseries_csv("N3,t_s\n80,2\n100,0\n90,1\n".as_bytes()).unwrap();
        assert_eq!(sorted, shuffled);
    }

    #[test]
    fn csv_errors_carry_coordinates() {
        let coords = |text: &str| match read_timeseries_csv(text.as_bytes()).unwrap_err() {
            Error::Csv { row, column, .. } => (row, column),
            e => panic!("{e}"),
        };
        assert_eq!(coords("t_s,N3,bogus\n0,1,2\n"), (1, 3));
        assert_eq!(coords("t_s,N3\n0,1\n1,x\n"), (3, 2));
        assert_eq!(coords("t_s,N3\n0,1\n1,2\n0,3\n"), (4, 1));
        assert_eq!(coords("t_s,N3,N3\n0,1,1\n"), (1, 3));
        assert_eq!(coords("N3\n1\n").0, 1);
        assert_eq!(coords("t_s\n1\n").0, 1);
    }

    #[test]
    fn emit_ingest_closure() {
        let ts = TimeSeries::new(
            vec![0.0, 0.5, 1.0],
            vec![
                (Column::N3, vec![1.234_567_891_23e6, 1.1e6, 1.0e6]),
                (Column::Temperature, vec![5.0e-5, 5.012_345_678_9e-5, 5.1e-5]),
                (Column::Volume, vec![3.3e-10, 3.31e-10, 3.32e-10]),
            ],
        )
        .unwrap();
        let text = write_timeseries_csv(&ts, &Column::ALL);
        let back = read_timeseries_csv(text.as_bytes()).unwrap();
        assert_eq!(write_timeseries_csv(&back, &Column::ALL), text);
        for (c, v) in ts.columns() {
            for (a, b) in v.iter().zip(back.column(c).unwrap()) {
                assert_relative_eq!(a, b, max_relative = 5e-9, epsilon = 0.0);
            }
        }
        assert!(text.starts_with("t_s,N3,T_uK,V_cm3\n"));
    }

    #[test]
    fn number_format_has_nine_digits() {
        assert_eq!(format_number(2.580_680_086e-11), "2.58068009e-11");
        assert_eq!(format_number(275.0), "2.75000000e2");
    }

    #[test]
    fn sweep_spec_validation() {
        let s = SweepSpec::linear(SweepAxis::Field, 0.15, 1.7, 5).unwrap();
        assert_eq!(s.points().len(), 5);
        assert_relative_eq!(s.points()[4], 1.7e-4, max_relative = 1e-15, epsilon = 0.0);
        assert!(SweepSpec::new(SweepAxis::Field, vec![1.0]).is_err());
        assert!(SweepSpec::new(SweepAxis::Field, vec![1.0, 1.0]).is_err());
    }
}
