//! Orientation-averaged first-order Born cross sections for a pair of
//! identical bosons in the stretched Zeeman state.
//!
//! With `P = (µ₀ (g µ_B)² m / 4πħ²)²` and `x = k_f/k_i` the three channels are
//!
//! ```text
//! σ₀ = (16π/45) S⁴ P [1 + h(1)]
//! σ₁ = ( 8π/15) S³ P [1 + h(x₁)] x₁      x₁ = √(1 +  ΔE/E)
//! σ₂ = ( 8π/15) S² P [1 + h(x₂)] x₂      x₂ = √(1 + 2ΔE/E)
//! ```
//!
//! where `h` is the exchange-to-direct ratio ([`exchange_ratio_h`]).
//!
//! # Energy convention
//!
//! `E` is the kinetic energy of relative motion, `E = ħ²k²/m` with `k` the
//! relative wavevector and `m` the *atomic* mass (so `m/2` is the reduced
//! mass). It is **not** `ħ²k²/2m`. Getting this wrong shifts every
//! `k_f/k_i` by a factor of two under the root.

use std::f64::consts::PI;

use crate::channels::{zeeman_splitting, RelaxationChannel, Species, Statistics};
use crate::units::CODATA_2018;
use crate::{Error, Result};

/// Below this distance from `x = 1` the series branch of `h` is used.
const H_SERIES_THRESHOLD: f64 = 1e-4;

/// Ratio of the exchange to the direct contribution of the cross section,
///
/// `h(x) = -1/2 - (3/8) (1-x²)² / (x(1+x²)) · ln[(1-x)²/(1+x)²]`,
///
/// defined for `x ≥ 1`. It rises monotonically from `h(1) = -1/2` towards 1,
/// approaching it as `1 - 4/x²`.
pub fn exchange_ratio_h(x: f64) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(Error::Domain {
            what: "k_f/k_i",
            value: x,
            domain: "x >= 1",
        });
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let eps = x - 1.0;
    if eps == 0.0 {
        return Ok(-0.5);
    }
    if eps < H_SERIES_THRESHOLD {
        // prefactor = 2ε²(1 - ε + 3ε²/4) + O(ε⁵), log = 2 ln(ε/2) - ε + ε²/4 + O(ε³)
        let pref = 2.0 * eps * eps * (1.0 - eps + 0.75 * eps * eps);
        let log = 2.0 * (0.5 * eps).ln() - eps + 0.25 * eps * eps;
        return Ok(-0.5 - 0.375 * pref * log);
    }
    // (x²-1)² / (x (x²+1)) written to stay finite for huge x
    let inv2 = 1.0 / (x * x);
    let pref = x * (1.0 - inv2).powi(2) / (1.0 + inv2);
    // ln((x-1)²/(x+1)²) = 2 ln(1 - 2/(x+1))
    let log = 2.0 * (-2.0 / (x + 1.0)).ln_1p();
    Ok(-0.5 - 0.375 * pref * log)
}

/// `(µ₀ (g µ_B)² m / 4πħ²)²` in m², from first principles.
///
/// For `g = 2` this equals `(m/m_e)² r₀²` because `µ₀ µ_B² = π ħ² r₀ / m_e`.
/// That shortcut is only checked in tests; computing from `µ₀`, `µ_B` and `ħ`
/// keeps species with `g ≠ 2` correct.
pub fn coupling_prefactor(species: &Species) -> f64 {
    let c = CODATA_2018;
    let moment = species.lande_g() * c.bohr_magneton;
    let length = c.vacuum_permeability * moment * moment * species.mass()
        / (4.0 * PI * c.hbar * c.hbar);
    length * length
}

/// Relative-motion kinematics of the incoming pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionKinematics {
    k_initial: f64,
    kinetic_energy: f64,
}

impl CollisionKinematics {
    /// From the relative kinetic energy `E = ħ²k²/m` in joules.
    pub fn from_energy(species: &Species, kinetic_energy: f64) -> Result<Self> {
        if !(kinetic_energy >= 0.0) || !kinetic_energy.is_finite() {
            return Err(Error::Domain {
                what: "kinetic energy",
                value: kinetic_energy,
                domain: ">= 0 J",
            });
        }
        let k_initial = (species.mass() * kinetic_energy).sqrt() / CODATA_2018.hbar;
        Ok(CollisionKinematics {
            k_initial,
            kinetic_energy,
        })
    }

    /// From the relative wavevector modulus in 1/m.
    pub fn from_wavevector(species: &Species, k_initial: f64) -> Result<Self> {
        if !(k_initial >= 0.0) || !k_initial.is_finite() {
            return Err(Error::Domain {
                what: "wavevector",
                value: k_initial,
                domain: ">= 0 1/m",
            });
        }
        let hbar = CODATA_2018.hbar;
        Ok(CollisionKinematics {
            k_initial,
            kinetic_energy: hbar * hbar * k_initial * k_initial / species.mass(),
        })
    }

    pub fn k_initial(&self) -> f64 {
        self.k_initial
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.kinetic_energy
    }
}

/// `k_f/k_i = √(1 + n ΔE/E)` for a channel releasing `n ΔE`.
///
/// At zero collision energy and finite `ΔE` the ratio is infinite and
/// [`Error::DivergentRatio`] is returned; thermal averages never sample that
/// point because the Maxwell-Boltzmann weight vanishes there.
pub fn wavevector_ratio(
    channel: RelaxationChannel,
    kinematics: &CollisionKinematics,
    zeeman_energy: f64,
) -> Result<f64> {
    ratio_from_energies(channel, kinematics.kinetic_energy, zeeman_energy)
}

fn ratio_from_energies(channel: RelaxationChannel, energy: f64, zeeman_energy: f64) -> Result<f64> {
    let released = f64::from(channel.flips()) * zeeman_energy;
    if released == 0.0 {
        return Ok(1.0);
    }
    if energy == 0.0 {
        return Err(Error::DivergentRatio);
    }
    Ok((1.0 + released / energy).sqrt())
}

/// `[1 + h(x)] x`, the energy-dependent factor of the inelastic channels.
pub(crate) fn inelastic_factor(x: f64) -> f64 {
    (1.0 + exchange_ratio_h(x).expect("x >= 1 by construction")) * x
}

/// The three averaged cross sections at one collision energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSectionSet {
    /// Dipolar contribution to elastic scattering, m².
    pub sigma0: f64,
    /// Single spin flip, m².
    pub sigma1: f64,
    /// Double spin flip, m².
    pub sigma2: f64,
    pub kf_over_ki_1: f64,
    pub kf_over_ki_2: f64,
}

impl CrossSectionSet {
    pub fn get(&self, channel: RelaxationChannel) -> f64 {
        match channel {
            RelaxationChannel::Elastic => self.sigma0,
            RelaxationChannel::SingleFlip => self.sigma1,
            RelaxationChannel::DoubleFlip => self.sigma2,
        }
    }
}

/// Channel prefactors `(16π/45) S⁴ P`, `(8π/15) S³ P`, `(8π/15) S² P`.
pub(crate) fn channel_prefactors(species: &Species) -> Result<[f64; 3]> {
    if species.statistics() != Statistics::Boson {
        return Err(Error::UnsupportedStatistics);
    }
    let s = species.spin();
    let p = coupling_prefactor(species);
    Ok([
        16.0 * PI / 45.0 * s.powi(4) * p,
        8.0 * PI / 15.0 * s.powi(3) * p,
        8.0 * PI / 15.0 * s.powi(2) * p,
    ])
}

/// Evaluates σ₀, σ₁, σ₂ for `species` at the given kinematics and field (T).
pub fn cross_sections(
    species: &Species,
    kinematics: &CollisionKinematics,
    field: f64,
) -> Result<CrossSectionSet> {
    let [c0, c1, c2] = channel_prefactors(species)?;
    let de = zeeman_splitting(species, field)?;
    let x1 = wavevector_ratio(RelaxationChannel::SingleFlip, kinematics, de)?;
    let x2 = wavevector_ratio(RelaxationChannel::DoubleFlip, kinematics, de)?;
    Ok(CrossSectionSet {
        sigma0: c0 * 0.5,
        sigma1: c1 * inelastic_factor(x1),
        sigma2: c2 * inelastic_factor(x2),
        kf_over_ki_1: x1,
        kf_over_ki_2: x2,
    })
}
