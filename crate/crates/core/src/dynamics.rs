//! Rate-equation evolution of a thermal cloud in a harmonic magnetic trap.
//!
//! The state is the population of the three upper sublevels (`N₃` is the
//! stretched state) and the temperature. Two-body terms use the mean volume
//! `V̄ = √8 (2π)^{3/2} σx σy σz`, so `N/V̄` is the mean density of the cloud.
//!
//! Two experimental situations are modelled:
//!
//! - [`EvolutionMode::RfShield`]: an rf knife removes every relaxation
//!   product, so each event costs two atoms and the temperature stays put.
//! - [`EvolutionMode::FreeEvolution`]: products stay trapped in lower
//!   sublevels and the released Zeeman energy heats the cloud.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channels::{temperature_step, zeeman_splitting, Species};
use crate::ode;
use crate::thermal::{rate_coefficients, ThermalConditions};
use crate::units::{Unit, CODATA_2018};
use crate::{Error, Result};

/// Ratio of the mean volume of a thermalized `m_S = 2` cloud to that of the
/// `m_S = 3` cloud at the same temperature: the trap is 2/3 as stiff.
pub const M2_VOLUME_FACTOR: f64 = 1.837_117_307_087_383_6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig {
    frequencies: [f64; 3],
    offset_field: f64,
    background_rate: f64,
}

impl TrapConfig {
    /// Frequencies in Hz, offset field in T, background loss rate in 1/s.
    pub fn new(frequencies: [f64; 3], offset_field: f64, background_rate: f64) -> Result<Self> {
        if frequencies.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::invalid(format!(
                "trap frequencies must be positive, got {frequencies:?}"
            )));
        }
        if !(offset_field >= 0.0) || !offset_field.is_finite() {
            return Err(Error::Domain {
                what: "offset field",
                value: offset_field,
                domain: ">= 0 T",
            });
        }
        if !(background_rate >= 0.0) || !background_rate.is_finite() {
            return Err(Error::Domain {
                what: "background rate",
                value: background_rate,
                domain: ">= 0 1/s",
            });
        }
        Ok(TrapConfig {
            frequencies,
            offset_field,
            background_rate,
        })
    }

    pub fn frequencies(&self) -> [f64; 3] {
        self.frequencies
    }

    pub fn offset_field(&self) -> f64 {
        self.offset_field
    }

    pub fn background_rate(&self) -> f64 {
        self.background_rate
    }

    pub fn with_background_rate(self, rate: f64) -> Result<Self> {
        TrapConfig::new(self.frequencies, self.offset_field, rate)
    }
}

/// Populations of the three upper sublevels (atom numbers) and temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudState {
    pub n3: f64,
    pub n2: f64,
    pub n1: f64,
    /// K
    pub temperature: f64,
    /// s
    pub time: f64,
}

impl CloudState {
    pub fn new(n3: f64, n2: f64, n1: f64, temperature: f64, time: f64) -> Result<Self> {
        let state = CloudState {
            n3,
            n2,
            n1,
            temperature,
            time,
        };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if [self.n3, self.n2, self.n1].iter().any(|n| !(*n >= 0.0) || !n.is_finite()) {
            return Err(Error::invalid("atom numbers must be finite and non-negative"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Domain {
                what: "temperature",
                value: self.temperature,
                domain: "> 0 K",
            });
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.n3 + self.n2 + self.n1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvolutionMode {
    RfShield,
    FreeEvolution,
}

impl EvolutionMode {
    pub fn tag(self) -> &'static str {
        match self {
            EvolutionMode::RfShield => "rf_shield",
            EvolutionMode::FreeEvolution => "free_evolution",
        }
    }
}

impl fmt::Display for EvolutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EvolutionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rf_shield" | "shield" => Ok(EvolutionMode::RfShield),
            "free_evolution" | "free" => Ok(EvolutionMode::FreeEvolution),
            other => Err(Error::invalid(format!(
                "unknown mode `{other}` (expected rf_shield or free_evolution)"
            ))),
        }
    }
}

/// Rate constants driving [`evolve`], all in m³/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    pub beta_event: f64,
    pub beta_loss: f64,
    /// Lumped loss of `m_S = 2` pairs (relaxation plus spin exchange).
    pub beta2: f64,
    /// Re-evaluate `beta_event` and `beta_loss` from the current temperature
    /// instead of keeping them fixed.
    pub self_consistent: bool,
}

impl RateInputs {
    pub fn fixed(beta_event: f64, beta_loss: f64, beta2: f64) -> Result<Self> {
        for (name, v) in [("beta_event", beta_event), ("beta_loss", beta_loss), ("beta2", beta2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(RateInputs {
            beta_event,
            beta_loss,
            beta2,
            self_consistent: false,
        })
    }

    /// Theory values at the given temperature and the trap's offset field.
    pub fn theory(species: &Species, trap: &TrapConfig, temperature: f64, beta2: f64) -> Result<Self> {
        let rates = rate_coefficients(species, &ThermalConditions::new(temperature, trap.offset_field)?)?;
        RateInputs::fixed(rates.beta_event, rates.beta_loss, beta2)
    }
}

/// `σᵢ = √(k_B T / m ωᵢ²)` in m.
pub fn gaussian_widths(temperature: f64, trap: &TrapConfig, species: &Species) -> Result<[f64; 3]> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Domain {
            what: "temperature",
            value: temperature,
            domain: "> 0 K",
        });
    }
    let kt_m = CODATA_2018.boltzmann * temperature / species.mass();
    Ok(trap
        .frequencies
        .map(|nu| kt_m.sqrt() / (2.0 * std::f64::consts::PI * nu)))
}

/// `V̄ = √8 (2π)^{3/2} σx σy σz` in m³.
pub fn mean_volume(widths: [f64; 3]) -> Result<f64> {
    if widths.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid(format!("widths must be positive, got {widths:?}")));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(8f64.sqrt() * two_pi.powf(1.5) * widths[0] * widths[1] * widths[2])
}

pub fn cloud_volume(temperature: f64, trap: &TrapConfig, species: &Species) -> Result<f64> {
    mean_volume(gaussian_widths(temperature, trap, species)?)
}

/// Mean volume of the thermalized `m_S = 2` cloud.
pub fn thermalized_m2_volume(volume: f64) -> f64 {
    M2_VOLUME_FACTOR * volume
}

/// One sample of a trajectory together with the derived cloud geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub state: CloudState,
    pub widths: [f64; 3],
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mode: EvolutionMode,
    pub points: Vec<TrajectoryPoint>,
    pub stats: ode::Stats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.state.time).collect()
    }

    pub fn n3(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.state.n3).collect()
    }

    pub fn n2(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.state.n2).collect()
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.state.temperature).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.volume).collect()
    }
}

struct Model<'a> {
    trap: &'a TrapConfig,
    species: &'a Species,
    mode: EvolutionMode,
    rates: RateInputs,
    delta_t: f64,
}

impl Model<'_> {
    fn rates_at(&self, temperature: f64) -> Result<(f64, f64)> {
        if self.rates.self_consistent {
            let r = rate_coefficients(
                self.species,
                &ThermalConditions::new(temperature, self.trap.offset_field)?,
            )?;
            Ok((r.beta_event, r.beta_loss))
        } else {
            Ok((self.rates.beta_event, self.rates.beta_loss))
        }
    }

    // y = [N3, N2, N1, T]
    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (n3, n2, n1, t) = (y[0], y[1], y[2], y[3]);
        if !(t > 0.0) {
            return Err(Error::NumericalFailure {
                message: "temperature left the physical domain".into(),
                estimate: t,
            });
        }
        let gamma = self.trap.background_rate;
        let v = cloud_volume(t, self.trap, self.species)?;
        let m2_loss = self.rates.beta2 * n2 * n2 / thermalized_m2_volume(v);
        let (beta_event, beta_loss) = self.rates_at(t)?;
        match self.mode {
            EvolutionMode::RfShield => {
                dy[0] = -gamma * n3 - beta_event * n3 * n3 / v;
                dy[1] = -gamma * n2 - m2_loss;
                dy[2] = -gamma * n1;
                dy[3] = 0.0;
            }
            EvolutionMode::FreeEvolution => {
                let transfer = beta_loss * n3 * n3 / v;
                dy[0] = -gamma * n3 - transfer;
                dy[1] = -gamma * n2 + transfer - m2_loss;
                dy[2] = -gamma * n1 + m2_loss;
                dy[3] = beta_loss * n3 / v * self.delta_t;
            }
        }
        Ok(())
    }
}

/// Integrates the rate equations and samples them on `grid`, which must
/// start at `initial.time`.
pub fn evolve(
    initial: &CloudState,
    trap: &TrapConfig,
    species: &Species,
    mode: EvolutionMode,
    rates: &RateInputs,
    grid: &[f64],
) -> Result<Trajectory> {
    evolve_with_tolerance(initial, trap, species, mode, rates, grid, ode::Options::default().rtol)
}

pub fn evolve_with_tolerance(
    initial: &CloudState,
    trap: &TrapConfig,
    species: &Species,
    mode: EvolutionMode,
    rates: &RateInputs,
    grid: &[f64],
    rtol: f64,
) -> Result<Trajectory> {
    let (traj, failure) = evolve_partial(initial, trap, species, mode, rates, grid, rtol)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Like [`evolve_with_tolerance`], but an integrator failure part-way
/// returns the samples reached so far together with the error.
pub fn evolve_partial(
    initial: &CloudState,
    trap: &TrapConfig,
    species: &Species,
    mode: EvolutionMode,
    rates: &RateInputs,
    grid: &[f64],
    rtol: f64,
) -> Result<(Trajectory, Option<Error>)> {
    initial.validate()?;
    RateInputs::fixed(rates.beta_event, rates.beta_loss, rates.beta2)?;
    if grid.first() != Some(&initial.time) {
        return Err(Error::invalid("time grid must start at the initial state's time"));
    }
    let model = Model {
        trap,
        species,
        mode,
        rates: *rates,
        delta_t: temperature_step(species, trap.offset_field)?,
    };
    let count_scale = initial.total().max(1.0);
    let opts = ode::Options {
        rtol,
        atol: vec![
            1e-3 * rtol * count_scale,
            1e-3 * rtol * count_scale,
            1e-3 * rtol * count_scale,
            1e-3 * rtol * initial.temperature,
        ],
        ..ode::Options::default()
    };
    let y0 = [initial.n3, initial.n2, initial.n1, initial.temperature];
    let partial = ode::integrate_partial(|_, y, dy| model.rhs(y, dy), grid, &y0, &opts)?;
    let points = grid
        .iter()
        .zip(partial.states)
        .map(|(&time, y)| {
            // tiny negative overshoots of an emptied level are clipped
            let state = CloudState {
                n3: y[0].max(0.0),
                n2: y[1].max(0.0),
                n1: y[2].max(0.0),
                temperature: y[3],
                time,
            };
            let widths = gaussian_widths(state.temperature, trap, species)?;
            Ok(TrajectoryPoint {
                state,
                widths,
                volume: mean_volume(widths)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Trajectory {
            mode,
            points,
            stats: partial.stats,
        },
        partial.failure,
    ))
}

/// `dT/dt` at the initial state, in K/s.
pub fn initial_heating_rate(
    initial: &CloudState,
    trap: &TrapConfig,
    species: &Species,
    mode: EvolutionMode,
    rates: &RateInputs,
) -> Result<f64> {
    initial.validate()?;
    let model = Model {
        trap,
        species,
        mode,
        rates: *rates,
        delta_t: temperature_step(species, trap.offset_field)?,
    };
    let mut dy = [0.0; 4];
    model.rhs(&[initial.n3, initial.n2, initial.n1, initial.temperature], &mut dy)?;
    Ok(dy[3])
}

/// Closed-form solution of `dN/dt = −γN − (β/V) N²` at constant volume.
pub fn analytic_two_body_decay(n0: f64, gamma: f64, beta_over_v: f64, t: f64) -> f64 {
    // (1 − e^{−γt})/γ, which tends to t as γ → 0
    let window = if gamma == 0.0 { t } else { -(-gamma * t).exp_m1() / gamma };
    n0 * (-gamma * t).exp() / (1.0 + beta_over_v * n0 * window)
}

/// Validity of an rf-shield setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfShieldReport {
    /// Hz
    pub frequency: f64,
    /// `m_J (hν − ΔE) < ΔE/2` at `m_J = S`: atoms that relaxed once sit
    /// above the knife.
    pub removes_products: bool,
    /// `η = S (hν − ΔE) / k_B T`.
    pub eta: f64,
    /// `η ≥ 5`: the parent cloud is not evaporated.
    pub no_evaporation: bool,
    /// `7ΔE/6h − 1 MHz`, the usual working point.
    pub default_frequency: f64,
}

/// `7ΔE/6h − 1 MHz`. Negative at fields below about 0.3 G, where no
/// useful shield setting exists.
pub fn default_rf_frequency(species: &Species, field: f64) -> Result<f64> {
    Ok(7.0 * zeeman_splitting(species, field)? / (6.0 * CODATA_2018.planck) - 1e6)
}

pub fn rf_shield_check(frequency: f64, field: f64, temperature: f64, species: &Species) -> Result<RfShieldReport> {
    if !(frequency > 0.0) || !frequency.is_finite() {
        return Err(Error::Domain {
            what: "rf frequency",
            value: frequency,
            domain: "> 0 Hz",
        });
    }
    if !(temperature > 0.0) {
        return Err(Error::Domain {
            what: "temperature",
            value: temperature,
            domain: "> 0 K",
        });
    }
    let de = zeeman_splitting(species, field)?;
    let depth = species.spin() * (CODATA_2018.planck * frequency - de);
    let eta = depth / (CODATA_2018.boltzmann * temperature);
    // The relative guards keep the exact boundary cases on the side the
    // inequalities put them, despite rounding in hν.
    Ok(RfShieldReport {
        frequency,
        removes_products: depth < 0.5 * de * (1.0 - 1e-12),
        eta,
        no_evaporation: eta >= 5.0 * (1.0 - 1e-12),
        default_frequency: default_rf_frequency(species, field)?,
    })
}

/// Multiplies every value by `1 + rel_sigma·ξ` with standard normal `ξ`
/// drawn from a ChaCha8 stream seeded with `seed`.
pub fn apply_relative_noise(values: &mut [f64], rel_sigma: f64, seed: u64) -> Result<()> {
    if rel_sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, rel_sigma)
        .map_err(|e| Error::invalid(format!("noise level {rel_sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in values {
        *v *= 1.0 + normal.sample(&mut rng);
    }
    Ok(())
}

/// A named experimental setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub species: Species,
    pub trap: TrapConfig,
    /// K
    pub temperature: f64,
    /// Initial mean density `N_tot / V̄` in 1/m³.
    pub density: f64,
    /// Fraction of atoms starting in the stretched state. The rest is split
    /// evenly between `m_S = 2` and `m_S = 1`.
    pub polarization: f64,
    pub mode: EvolutionMode,
    /// m³/s
    pub beta2: f64,
    /// s
    pub duration: f64,
    pub samples: usize,
}

impl Scenario {
    pub const NAMES: [&'static str; 3] = ["27G-methodI", "0.7G-methodII", "20G-isotope"];

    /// High-field rf-shield measurement.
    pub fn high_field_shielded() -> Self {
        Scenario {
            name: "27G-methodI",
            species: Species::cr52(),
            trap: TrapConfig::new([120.0, 120.0, 73.0], Unit::Gauss.to_si(27.0), 1.0 / 200.0)
                .expect("valid preset"),
            temperature: Unit::MicroKelvin.to_si(275.0),
            density: Unit::PerCubicCentimetre.to_si(1e11),
            polarization: 1.0,
            mode: EvolutionMode::RfShield,
            beta2: 0.0,
            duration: 10.0,
            samples: 101,
        }
    }

    /// Low-field free evolution observed by Stern-Gerlach separation. The
    /// density is chosen so that a rate constant of 3.1e-12 cm³/s would move
    /// 35% of the stretched-state atoms in 15 s at constant volume.
    pub fn low_field_free() -> Self {
        Scenario {
            name: "0.7G-methodII",
            species: Species::cr52(),
            trap: TrapConfig::new([806.0, 806.0, 42.0], Unit::Gauss.to_si(0.7), 0.0).expect("valid preset"),
            temperature: Unit::MicroKelvin.to_si(50.0),
            density: Unit::PerCubicCentimetre.to_si(1.16e10),
            polarization: 1.0,
            mode: EvolutionMode::FreeEvolution,
            beta2: Unit::CubicCentimetrePerSecond.to_si(1.1e-10),
            duration: 15.0,
            samples: 31,
        }
    }

    /// Heating comparison between isotopes at 20 G.
    pub fn isotope_heating() -> Self {
        Scenario {
            name: "20G-isotope",
            species: Species::cr52(),
            trap: TrapConfig::new([120.0, 120.0, 73.0], Unit::Gauss.to_si(20.0), 1.0 / 200.0)
                .expect("valid preset"),
            temperature: Unit::MicroKelvin.to_si(275.0),
            density: Unit::PerCubicCentimetre.to_si(1e10),
            polarization: 1.0,
            mode: EvolutionMode::FreeEvolution,
            beta2: Unit::CubicCentimetrePerSecond.to_si(1.1e-10),
            duration: 5.0,
            samples: 51,
        }
    }

    pub fn all() -> Vec<Scenario> {
        vec![
            Self::high_field_shielded(),
            Self::low_field_free(),
            Self::isotope_heating(),
        ]
    }

    /// Case-insensitive lookup by name.
    pub fn preset(name: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|s| s.name.eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown scenario `{name}` (known: {})",
                    Self::NAMES.join(", ")
                ))
            })
    }

    pub fn initial_state(&self) -> Result<CloudState> {
        if !(0.0..=1.0).contains(&self.polarization) {
            return Err(Error::Domain {
                what: "polarization",
                value: self.polarization,
                domain: "[0, 1]",
            });
        }
        let total = self.density * cloud_volume(self.temperature, &self.trap, &self.species)?;
        let rest = 0.5 * (1.0 - self.polarization) * total;
        CloudState::new(self.polarization * total, rest, rest, self.temperature, 0.0)
    }

    pub fn theory_rates(&self) -> Result<RateInputs> {
        RateInputs::theory(&self.species, &self.trap, self.temperature, self.beta2)
    }

    /// `samples` evenly spaced times from 0 to `duration`.
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        uniform_grid(self.duration, self.samples)
    }

    pub fn run(&self) -> Result<Trajectory> {
        evolve(
            &self.initial_state()?,
            &self.trap,
            &self.species,
            self.mode,
            &self.theory_rates()?,
            &self.time_grid()?,
        )
    }
}

pub fn uniform_grid(duration: f64, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 || !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::invalid(format!(
            "need duration > 0 and at least 2 samples (got {duration} s, {samples})"
        )));
    }
    let last = (samples - 1) as f64;
    Ok((0..samples).map(|i| duration * i as f64 / last).collect())
}
