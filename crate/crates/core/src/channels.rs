//! Species, Zeeman structure and the spin-flip exit channels of a
//! stretched-state pair.

use std::fmt;
use std::str::FromStr;

use crate::units::{Unit, CODATA_2018};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistics {
    Boson,
    Fermion,
}

impl Statistics {
    /// Sign of the exchange term: `+1` for bosons, `-1` for fermions.
    pub fn sign(self) -> i32 {
        match self {
            Statistics::Boson => 1,
            Statistics::Fermion => -1,
        }
    }
}

/// An atomic species with pure electron-spin magnetism (`L = 0`, `I = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    label: String,
    /// Twice the spin, so half-integers stay exact.
    twice_spin: u32,
    lande_g: f64,
    mass: f64,
    statistics: Statistics,
}

impl Species {
    /// `spin` must be a positive multiple of 1/2, `mass` in kg.
    pub fn new(
        label: impl Into<String>,
        spin: f64,
        lande_g: f64,
        mass: f64,
        statistics: Statistics,
    ) -> Result<Self> {
        let twice = 2.0 * spin;
        if !(spin >= 0.5) || (twice - twice.round()).abs() > 1e-12 {
            return Err(Error::Domain {
                what: "spin",
                value: spin,
                domain: "positive half-integer",
            });
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Domain {
                what: "mass",
                value: mass,
                domain: "> 0 kg",
            });
        }
        if !(lande_g > 0.0) || !lande_g.is_finite() {
            return Err(Error::Domain {
                what: "lande_g",
                value: lande_g,
                domain: "> 0",
            });
        }
        Ok(Species {
            label: label.into(),
            twice_spin: twice.round() as u32,
            lande_g,
            mass,
            statistics,
        })
    }

    /// ⁵²Cr in its ⁷S₃ ground state.
    pub fn cr52() -> Self {
        Self::preset_unchecked("52Cr", 3.0, 51.9405)
    }

    /// ⁵⁰Cr, same electronic structure as ⁵²Cr.
    pub fn cr50() -> Self {
        Self::preset_unchecked("50Cr", 3.0, 49.9460)
    }

    /// Metastable triplet ⁴He (2³S₁).
    pub fn he4_metastable() -> Self {
        Self::preset_unchecked("4He*", 1.0, 4.0026)
    }

    fn preset_unchecked(label: &str, spin: f64, mass_u: f64) -> Self {
        Species::new(
            label,
            spin,
            2.0,
            Unit::AtomicMassUnit.to_si(mass_u),
            Statistics::Boson,
        )
        .expect("built-in preset is valid")
    }

    pub fn presets() -> Vec<Species> {
        vec![Self::cr52(), Self::cr50(), Self::he4_metastable()]
    }

    /// Looks a preset up by label, case-insensitively. `Cr52`, `52Cr` and
    /// `cr-52` all resolve to the same species.
    pub fn preset(label: &str) -> Result<Self> {
        let key: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '*')
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "52cr" | "cr52" => Ok(Self::cr52()),
            "50cr" | "cr50" => Ok(Self::cr50()),
            "4he*" | "he4*" | "he*" | "4he" | "he4" => Ok(Self::he4_metastable()),
            _ => Err(Error::invalid(format!("unknown species label `{label}`"))),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn spin(&self) -> f64 {
        f64::from(self.twice_spin) / 2.0
    }

    pub fn lande_g(&self) -> f64 {
        self.lande_g
    }

    /// kg
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }
}

impl FromStr for Species {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Species::preset(s)
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Exit channel of a collision between two stretched-state atoms, labelled by
/// the number of flipped spins. First-order coupling flips at most one spin
/// per atom, so there are exactly three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelaxationChannel {
    Elastic,
    SingleFlip,
    DoubleFlip,
}

impl RelaxationChannel {
    pub const ALL: [RelaxationChannel; 3] = [
        RelaxationChannel::Elastic,
        RelaxationChannel::SingleFlip,
        RelaxationChannel::DoubleFlip,
    ];

    pub fn from_flips(flips: u32) -> Result<Self> {
        match flips {
            0 => Ok(RelaxationChannel::Elastic),
            1 => Ok(RelaxationChannel::SingleFlip),
            2 => Ok(RelaxationChannel::DoubleFlip),
            n => Err(Error::invalid(format!(
                "{n} spin flips; a pair can flip at most two spins"
            ))),
        }
    }

    pub fn flips(self) -> u32 {
        match self {
            RelaxationChannel::Elastic => 0,
            RelaxationChannel::SingleFlip => 1,
            RelaxationChannel::DoubleFlip => 2,
        }
    }

    /// Released energy in units of the Zeeman splitting.
    pub fn released_energy_multiplier(self) -> u32 {
        self.flips()
    }
}

fn check_field(field: f64) -> Result<()> {
    if field >= 0.0 && field.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "magnetic field",
            value: field,
            domain: ">= 0 T",
        })
    }
}

/// `ΔE = g µ_B B` in joules, for `B` in tesla.
pub fn zeeman_splitting(species: &Species, field: f64) -> Result<f64> {
    check_field(field)?;
    Ok(species.lande_g * CODATA_2018.bohr_magneton * field)
}

pub fn released_energy(channel: RelaxationChannel, species: &Species, field: f64) -> Result<f64> {
    Ok(f64::from(channel.released_energy_multiplier()) * zeeman_splitting(species, field)?)
}

/// Equilibrium temperature rise of the pair per single spin flip: the
/// released `ΔE` is shared by two atoms, each thermalizing over `3 k_B T`,
/// so `ΔT = ΔE / (6 k_B)`.
///
/// At 10 G this evaluates to about 224 µK for a `g = 2` atom.
pub fn temperature_step(species: &Species, field: f64) -> Result<f64> {
    Ok(released_energy(RelaxationChannel::SingleFlip, species, field)?
        / (6.0 * CODATA_2018.boltzmann))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const GAUSS: f64 = 1e-4;

    #[test]
    fn presets_are_valid() {
        let cr = Species::cr52();
        assert_eq!(cr.spin(), 3.0);
        assert_eq!(cr.lande_g(), 2.0);
        assert_eq!(cr.statistics().sign(), 1);
        assert_relative_eq!(cr.mass(), 51.9405 * 1.660_539_066_60e-27, max_relative = 1e-15, epsilon = 0.0);
        assert_eq!(Species::he4_metastable().spin(), 1.0);
        assert_eq!(Species::preset("Cr52").unwrap(), cr);
        assert_eq!(Species::preset("50cr").unwrap(), Species::cr50());
        assert_eq!(Species::preset("He*").unwrap().label(), "4He*");
        assert!(Species::preset("87Rb").is_err());
    }

    #[test]
    fn rejects_invalid_species() {
        assert!(Species::new("x", 0.0, 2.0, 1e-26, Statistics::Boson).is_err());
        assert!(Species::new("x", 1.25, 2.0, 1e-26, Statistics::Boson).is_err());
        assert!(Species::new("x", 1.5, 2.0, -1.0, Statistics::Boson).is_err());
        let fermion = Species::new("53Cr-like", 0.5, 2.0, 1e-26, Statistics::Fermion).unwrap();
        assert_eq!(fermion.statistics().sign(), -1);
        assert_eq!(fermion.spin(), 0.5);
    }

    #[test]
    fn zeeman_examples() {
        let cr = Species::cr52();
        assert_eq!(zeeman_splitting(&cr, 0.0).unwrap(), 0.0);
        let de = zeeman_splitting(&cr, 10.0 * GAUSS).unwrap();
        assert_relative_eq!(de, 1.8548e-26, max_relative = 1e-4, epsilon = 0.0);
        // h × 27.99 MHz
        assert_relative_eq!(de / CODATA_2018.planck, 27.99e6, max_relative = 1e-3, epsilon = 0.0);
        assert_relative_eq!(
            zeeman_splitting(&cr, 27.0 * GAUSS).unwrap(),
            5.008e-26,
            max_relative = 1e-3, epsilon = 0.0
        );
        assert!(matches!(zeeman_splitting(&cr, -1e-4), Err(Error::Domain { .. })));
    }

    #[test]
    fn zeeman_is_linear() {
        let cr = Species::cr52();
        for b in [1e-6, 3.3e-4, 0.01] {
            assert_eq!(
                zeeman_splitting(&cr, 2.0 * b).unwrap(),
                2.0 * zeeman_splitting(&cr, b).unwrap()
            );
        }
    }

    #[test]
    fn released_energy_per_channel() {
        let cr = Species::cr52();
        let b = 10.0 * GAUSS;
        assert_eq!(released_energy(RelaxationChannel::Elastic, &cr, b).unwrap(), 0.0);
        assert_relative_eq!(
            released_energy(RelaxationChannel::SingleFlip, &cr, b).unwrap(),
            1.8548e-26,
            max_relative = 1e-4, epsilon = 0.0
        );
        assert_relative_eq!(
            released_energy(RelaxationChannel::DoubleFlip, &cr, b).unwrap(),
            3.7096e-26,
            max_relative = 1e-4, epsilon = 0.0
        );
        for ch in RelaxationChannel::ALL {
            assert_eq!(RelaxationChannel::from_flips(ch.flips()).unwrap(), ch);
            assert_eq!(ch.released_energy_multiplier(), ch.flips());
        }
        assert!(RelaxationChannel::from_flips(3).is_err());
    }

    #[test]
    fn temperature_step_examples() {
        let cr = Species::cr52();
        assert_eq!(temperature_step(&cr, 0.0).unwrap(), 0.0);
        assert_relative_eq!(temperature_step(&cr, 10.0 * GAUSS).unwrap(), 2.239e-4, max_relative = 1e-3, epsilon = 0.0);
        assert_relative_eq!(temperature_step(&cr, 0.7 * GAUSS).unwrap(), 15.67e-6, max_relative = 1e-3, epsilon = 0.0);
        for b in [0.0, 1e-5, 2.7e-3] {
            let single = released_energy(RelaxationChannel::SingleFlip, &cr, b).unwrap();
            assert_eq!(
                temperature_step(&cr, b).unwrap(),
                single / (6.0 * CODATA_2018.boltzmann)
            );
        }
    }
}
