//! Maxwell-Boltzmann averages of the Born cross sections.
//!
//! The pair's relative kinetic energy `E` (reduced mass `m/2`, relative
//! speed `v = √(4E/m)`) is distributed as `√E e^{-E/k_BT}`. In units
//! `u = E/k_BT` the average of `σ v` becomes
//!
//! ```text
//! ⟨σ v⟩ = ⟨v⟩ ∫₀^∞ u e^{-u} σ(u k_BT) du,      ⟨v⟩ = √(16 k_BT / π m)
//! ```
//!
//! `σ₀` does not depend on energy, so its average factorizes exactly. The
//! inelastic channels carry `k_f/k_i = √(1 + nΔE/E)`, which diverges like
//! `u^{-1/2}` at threshold; absorbing one `√u` into the weight leaves the
//! bounded integrand `√(u + a)·[1 + h]` for a generalized Gauss-Laguerre rule
//! with `α = 1/2`.

use std::sync::OnceLock;

use crate::born::{channel_prefactors, inelastic_factor};
use crate::channels::{zeeman_splitting, Species};
use crate::quadrature::{adaptive_gk15, GaussLaguerre};
use crate::units::CODATA_2018;
use crate::{Error, Result};

const RULE_ORDER: usize = 96;
const CHECK_ORDER: usize = 48;
/// Relative disagreement between the two Laguerre rules above which the
/// adaptive integrator takes over.
const LAGUERRE_TOLERANCE: f64 = 1e-7;
const ADAPTIVE_REL_TOL: f64 = 1e-11;
/// `e^{-s²}` is below 1e-62 past this point.
const S_MAX: f64 = 12.0;

fn rule(order: usize) -> &'static GaussLaguerre {
    static MAIN: OnceLock<GaussLaguerre> = OnceLock::new();
    static CHECK: OnceLock<GaussLaguerre> = OnceLock::new();
    let cell = if order == RULE_ORDER { &MAIN } else { &CHECK };
    cell.get_or_init(|| GaussLaguerre::new(order, 0.5).expect("fixed Laguerre rule builds"))
}

/// Temperature (K) and magnetic field (T) of a thermal sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalConditions {
    temperature: f64,
    field: f64,
}

impl ThermalConditions {
    pub fn new(temperature: f64, field: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Domain {
                what: "temperature",
                value: temperature,
                domain: "> 0 K",
            });
        }
        if !(field >= 0.0) || !field.is_finite() {
            return Err(Error::Domain {
                what: "magnetic field",
                value: field,
                domain: ">= 0 T",
            });
        }
        Ok(ThermalConditions { temperature, field })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn field(&self) -> f64 {
        self.field
    }
}

/// Per-channel multipliers applied inside the thermal average.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelWeights {
    pub elastic: f64,
    pub single: f64,
    pub double: f64,
}

impl ChannelWeights {
    pub const EVENT: ChannelWeights = ChannelWeights {
        elastic: 0.0,
        single: 2.0,
        double: 2.0,
    };
    pub const LOSS: ChannelWeights = ChannelWeights {
        elastic: 0.0,
        single: 1.0,
        double: 2.0,
    };
    pub const ELASTIC: ChannelWeights = ChannelWeights {
        elastic: 1.0,
        single: 0.0,
        double: 0.0,
    };
}

/// Rate coefficients in m³/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCoefficients {
    /// `2⟨(σ₁+σ₂) v⟩`: two atoms removed per relaxation event.
    pub beta_event: f64,
    /// `⟨(σ₁+2σ₂) v⟩`: atoms leaving the stretched state.
    pub beta_loss: f64,
    /// `⟨σ₀ v⟩`, for comparison with the elastic rate.
    pub beta_elastic_dd: f64,
}

/// `√(16 k_B T / π m)`.
pub fn mean_relative_speed(temperature: f64, species: &Species) -> f64 {
    (16.0 * CODATA_2018.boltzmann * temperature / (std::f64::consts::PI * species.mass())).sqrt()
}

/// Thermal integrals `J_n = ∫ u e^{-u} [1+h(x)] x du` of the single- and
/// double-flip channels, with `x = √(1 + n a/u)`, `a = ΔE/k_BT`.
#[derive(Debug, Clone, Copy)]
struct InelasticIntegrals {
    single: f64,
    double: f64,
}

fn laguerre_integral(order: usize, a: f64) -> f64 {
    rule(order).integrate(|u| {
        let x = (1.0 + a / u).sqrt();
        u.sqrt() * inelastic_factor(x)
    })
}

/// Same integral via `u = s²` on a truncated range, where the integrand
/// `2 s² √(s²+a) e^{-s²} [1+h]` is smooth down to `a = 0`.
fn adaptive_integral(a: f64) -> Result<f64> {
    let integrand = |s: f64| {
        if s == 0.0 {
            return 0.0;
        }
        let s2 = s * s;
        let x = (1.0 + a / s2).sqrt();
        2.0 * s2 * s * (-s2).exp() * inelastic_factor(x)
    };
    Ok(adaptive_gk15(integrand, 0.0, S_MAX, 0.0, ADAPTIVE_REL_TOL, 2000)?.value)
}

fn channel_integral(a: f64) -> Result<f64> {
    if a == 0.0 {
        // 1 + h(1) = 1/2 and ∫ u e^{-u} du = 1
        return Ok(0.5);
    }
    let main = laguerre_integral(RULE_ORDER, a);
    let check = laguerre_integral(CHECK_ORDER, a);
    if ((main - check) / main).abs() <= LAGUERRE_TOLERANCE {
        Ok(main)
    } else {
        adaptive_integral(a)
    }
}

fn inelastic_integrals(species: &Species, conditions: &ThermalConditions) -> Result<InelasticIntegrals> {
    let de = zeeman_splitting(species, conditions.field)?;
    let a = de / (CODATA_2018.boltzmann * conditions.temperature);
    Ok(InelasticIntegrals {
        single: channel_integral(a)?,
        double: channel_integral(2.0 * a)?,
    })
}

/// `⟨Σ_c w_c σ_c v⟩` over the Maxwell-Boltzmann distribution, in m³/s.
pub fn thermal_average(
    species: &Species,
    conditions: &ThermalConditions,
    weights: ChannelWeights,
) -> Result<f64> {
    let [c0, c1, c2] = channel_prefactors(species)?;
    let vbar = mean_relative_speed(conditions.temperature, species);
    let mut total = weights.elastic * c0 * 0.5;
    if weights.single != 0.0 || weights.double != 0.0 {
        let j = inelastic_integrals(species, conditions)?;
        total += weights.single * c1 * j.single + weights.double * c2 * j.double;
    }
    Ok(vbar * total)
}

/// The inelastic part of [`thermal_average`] evaluated only with adaptive
/// Gauss-Kronrod subdivision. Used to cross-check the Laguerre path.
pub fn thermal_average_adaptive(
    species: &Species,
    conditions: &ThermalConditions,
    weights: ChannelWeights,
) -> Result<f64> {
    let [c0, c1, c2] = channel_prefactors(species)?;
    let vbar = mean_relative_speed(conditions.temperature, species);
    let de = zeeman_splitting(species, conditions.field)?;
    let a = de / (CODATA_2018.boltzmann * conditions.temperature);
    let total = weights.elastic * c0 * 0.5
        + weights.single * c1 * adaptive_integral(a)?
        + weights.double * c2 * adaptive_integral(2.0 * a)?;
    Ok(vbar * total)
}

/// `β° = 2⟨(σ₁+σ₂) v⟩`, the event rate seen with an rf shield.
pub fn beta_event_rate(species: &Species, conditions: &ThermalConditions) -> Result<f64> {
    thermal_average(species, conditions, ChannelWeights::EVENT)
}

/// `β̃ = ⟨(σ₁+2σ₂) v⟩`, the loss rate out of the stretched state.
pub fn beta_loss_rate(species: &Species, conditions: &ThermalConditions) -> Result<f64> {
    thermal_average(species, conditions, ChannelWeights::LOSS)
}

/// All three coefficients from one pair of channel integrals.
pub fn rate_coefficients(species: &Species, conditions: &ThermalConditions) -> Result<RateCoefficients> {
    let [c0, c1, c2] = channel_prefactors(species)?;
    let vbar = mean_relative_speed(conditions.temperature, species);
    let j = inelastic_integrals(species, conditions)?;
    let single = c1 * j.single;
    let double = c2 * j.double;
    Ok(RateCoefficients {
        beta_event: vbar * 2.0 * (single + double),
        beta_loss: vbar * (single + 2.0 * double),
        beta_elastic_dd: vbar * c0 * 0.5,
    })
}
