//! Physical constants and laboratory-unit conversion.
//!
//! Everything inside the crate is SI. Conversion happens once at the edges:
//! config files, CSV columns and CLI flags use gauss, microkelvin, cm³/s and
//! friends.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Fundamental constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// J/T
    pub bohr_magneton: f64,
    /// J/K
    pub boltzmann: f64,
    /// J s
    pub planck: f64,
    /// J s
    pub hbar: f64,
    /// kg
    pub electron_mass: f64,
    /// m
    pub classical_electron_radius: f64,
    /// T² m³ / J
    pub vacuum_permeability: f64,
    /// kg
    pub atomic_mass_unit: f64,
}

const PLANCK: f64 = 6.626_070_15e-34;

/// CODATA 2018 recommended values.
pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    bohr_magneton: 9.274_010_078_3e-24,
    boltzmann: 1.380_649e-23,
    planck: PLANCK,
    hbar: PLANCK / (2.0 * PI),
    electron_mass: 9.109_383_701_5e-31,
    classical_electron_radius: 2.817_940_326_2e-15,
    vacuum_permeability: 1.256_637_062_12e-6,
    atomic_mass_unit: 1.660_539_066_60e-27,
};

impl PhysicalConstants {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.bohr_magneton,
            self.boltzmann,
            self.planck,
            self.hbar,
            self.electron_mass,
            self.classical_electron_radius,
            self.vacuum_permeability,
            self.atomic_mass_unit,
        ]
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA_2018
    }
}

/// Supported units. Each variant knows its SI scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Tesla,
    Gauss,
    Kelvin,
    MilliKelvin,
    MicroKelvin,
    Hertz,
    KiloHertz,
    MegaHertz,
    Kilogram,
    AtomicMassUnit,
    Second,
    Millisecond,
    PerSecond,
    Metre,
    Micrometre,
    CubicMetre,
    CubicCentimetre,
    PerCubicMetre,
    PerCubicCentimetre,
    CubicMetrePerSecond,
    CubicCentimetrePerSecond,
    Joule,
}

impl Unit {
    pub const ALL: [Unit; 22] = [
        Unit::Tesla,
        Unit::Gauss,
        Unit::Kelvin,
        Unit::MilliKelvin,
        Unit::MicroKelvin,
        Unit::Hertz,
        Unit::KiloHertz,
        Unit::MegaHertz,
        Unit::Kilogram,
        Unit::AtomicMassUnit,
        Unit::Second,
        Unit::Millisecond,
        Unit::PerSecond,
        Unit::Metre,
        Unit::Micrometre,
        Unit::CubicMetre,
        Unit::CubicCentimetre,
        Unit::PerCubicMetre,
        Unit::PerCubicCentimetre,
        Unit::CubicMetrePerSecond,
        Unit::CubicCentimetrePerSecond,
        Unit::Joule,
    ];

    /// How many SI base units one of `self` is.
    pub fn si_factor(self) -> f64 {
        match self {
            Unit::Tesla
            | Unit::Kelvin
            | Unit::Hertz
            | Unit::Kilogram
            | Unit::Second
            | Unit::PerSecond
            | Unit::Metre
            | Unit::CubicMetre
            | Unit::PerCubicMetre
            | Unit::CubicMetrePerSecond
            | Unit::Joule => 1.0,
            Unit::Gauss => 1e-4,
            Unit::MilliKelvin => 1e-3,
            Unit::MicroKelvin => 1e-6,
            Unit::KiloHertz => 1e3,
            Unit::MegaHertz => 1e6,
            Unit::AtomicMassUnit => CODATA_2018.atomic_mass_unit,
            Unit::Millisecond => 1e-3,
            Unit::Micrometre => 1e-6,
            Unit::CubicCentimetre => 1e-6,
            Unit::PerCubicCentimetre => 1e6,
            Unit::CubicCentimetrePerSecond => 1e-6,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Unit::Tesla => "T",
            Unit::Gauss => "G",
            Unit::Kelvin => "K",
            Unit::MilliKelvin => "mK",
            Unit::MicroKelvin => "uK",
            Unit::Hertz => "Hz",
            Unit::KiloHertz => "kHz",
            Unit::MegaHertz => "MHz",
            Unit::Kilogram => "kg",
            Unit::AtomicMassUnit => "u",
            Unit::Second => "s",
            Unit::Millisecond => "ms",
            Unit::PerSecond => "1/s",
            Unit::Metre => "m",
            Unit::Micrometre => "um",
            Unit::CubicMetre => "m3",
            Unit::CubicCentimetre => "cm3",
            Unit::PerCubicMetre => "1/m3",
            Unit::PerCubicCentimetre => "1/cm3",
            Unit::CubicMetrePerSecond => "m3/s",
            Unit::CubicCentimetrePerSecond => "cm3/s",
            Unit::Joule => "J",
        }
    }

    /// Shorthand for `to_si(Quantity::new(value, self))`.
    pub fn to_si(self, value: f64) -> f64 {
        value * self.si_factor()
    }

    pub fn from_si(self, value: f64) -> Quantity {
        from_si(value, self)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unit = match s.trim() {
            "T" => Unit::Tesla,
            "G" => Unit::Gauss,
            "K" => Unit::Kelvin,
            "mK" => Unit::MilliKelvin,
            "uK" | "µK" | "μK" => Unit::MicroKelvin,
            "Hz" => Unit::Hertz,
            "kHz" => Unit::KiloHertz,
            "MHz" => Unit::MegaHertz,
            "kg" => Unit::Kilogram,
            "u" | "amu" => Unit::AtomicMassUnit,
            "s" => Unit::Second,
            "ms" => Unit::Millisecond,
            "1/s" => Unit::PerSecond,
            "m" => Unit::Metre,
            "um" | "µm" | "μm" => Unit::Micrometre,
            "m3" => Unit::CubicMetre,
            "cm3" => Unit::CubicCentimetre,
            "1/m3" => Unit::PerCubicMetre,
            "1/cm3" => Unit::PerCubicCentimetre,
            "m3/s" => Unit::CubicMetrePerSecond,
            "cm3/s" => Unit::CubicCentimetrePerSecond,
            "J" => Unit::Joule,
            other => return Err(Error::UnknownUnit(other.to_string())),
        };
        Ok(unit)
    }
}

/// A value tagged with its unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity { value, unit }
    }

    /// Parses `"27 G"` or `"275uK"`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let split = text
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .ok_or_else(|| Error::invalid(format!("`{text}` has no unit")))?;
        let (num, tag) = text.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("`{num}` is not a number")))?;
        Ok(Quantity::new(value, tag.parse()?))
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit)
    }
}

pub fn to_si(q: Quantity) -> f64 {
    q.unit.to_si(q.value)
}

pub fn from_si(value: f64, target: Unit) -> Quantity {
    Quantity::new(value / target.si_factor(), target)
}

/// Converts a value given with a textual unit tag.
pub fn to_si_tagged(value: f64, tag: &str) -> Result<f64> {
    Ok(tag.parse::<Unit>()?.to_si(value))
}

pub fn from_si_tagged(value: f64, tag: &str) -> Result<Quantity> {
    Ok(from_si(value, tag.parse()?))
}
