//! Conversion between field units and SI.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

pub const PSI: f64 = 6894.757;
pub const DAY: f64 = 86400.0;
pub const MILLIDARCY: f64 = 9.869233e-16;
pub const CENTIPOISE: f64 = 1e-3;

/// Unit tags accepted at I/O boundaries.
///
/// The field-unit core set is `psi`, `day`, `mD`, `cp`, `m` and
/// `dimensionless`; the rest are SI identities or derived field units
/// (compressibility, rates) that show up in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Psi,
    Day,
    Millidarcy,
    Centipoise,
    Meter,
    Dimensionless,
    PerPsi,
    CubicMeterPerDay,
    Pascal,
    Second,
    SquareMeter,
    PascalSecond,
    PerPascal,
    CubicMeterPerSecond,
}

impl Unit {
    /// Multiplier taking a value in this unit to SI.
    pub fn factor(self) -> f64 {
        match self {
            Unit::Psi => PSI,
            Unit::Day => DAY,
            Unit::Millidarcy => MILLIDARCY,
            Unit::Centipoise => CENTIPOISE,
            Unit::PerPsi => 1.0 / PSI,
            Unit::CubicMeterPerDay => 1.0 / DAY,
            Unit::Meter
            | Unit::Dimensionless
            | Unit::Pascal
            | Unit::Second
            | Unit::SquareMeter
            | Unit::PascalSecond
            | Unit::PerPascal
            | Unit::CubicMeterPerSecond => 1.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Unit::Psi => "psi",
            Unit::Day => "day",
            Unit::Millidarcy => "mD",
            Unit::Centipoise => "cp",
            Unit::Meter => "m",
            Unit::Dimensionless => "dimensionless",
            Unit::PerPsi => "1/psi",
            Unit::CubicMeterPerDay => "m3/day",
            Unit::Pascal => "Pa",
            Unit::Second => "s",
            Unit::SquareMeter => "m2",
            Unit::PascalSecond => "Pa.s",
            Unit::PerPascal => "1/Pa",
            Unit::CubicMeterPerSecond => "m3/s",
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unit = match s {
            "psi" | "psia" => Unit::Psi,
            "day" | "days" => Unit::Day,
            "mD" | "md" => Unit::Millidarcy,
            "cp" | "cP" => Unit::Centipoise,
            "m" => Unit::Meter,
            "dimensionless" | "1" | "-" => Unit::Dimensionless,
            "1/psi" | "1/psia" | "psi^-1" => Unit::PerPsi,
            "m3/day" | "m3/d" => Unit::CubicMeterPerDay,
            "Pa" => Unit::Pascal,
            "s" => Unit::Second,
            "m2" => Unit::SquareMeter,
            "Pa.s" | "Pa*s" => Unit::PascalSecond,
            "1/Pa" => Unit::PerPascal,
            "m3/s" => Unit::CubicMeterPerSecond,
            other => return Err(Error::UnknownUnit(other.to_string())),
        };
        Ok(unit)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub fn to_si(value: f64, unit: Unit) -> f64 {
    value * unit.factor()
}

pub fn from_si(value: f64, unit: Unit) -> f64 {
    value / unit.factor()
}

/// Parses `unit` and converts `value` to SI in one go.
pub fn to_si_tagged(value: f64, unit: &str) -> Result<f64> {
    Ok(to_si(value, unit.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_conversions() {
        assert!((to_si(3000.0, Unit::Psi) - 2.0684271e7).abs() < 1e-3);
        assert_eq!(to_si(0.5, Unit::Day), 43200.0);
        assert_eq!(to_si(1.0, Unit::Dimensionless), 1.0);
        assert_eq!(to_si(1.13, Unit::Centipoise), 1.13e-3);
        assert!((to_si(50.0, Unit::Millidarcy) - 4.9346165e-14).abs() < 1e-24);
    }

    #[test]
    fn unknown_tag_rejected() {
        assert!(matches!(to_si_tagged(1.0, "furlong"), Err(Error::UnknownUnit(_))));
        assert!("bar".parse::<Unit>().is_err());
    }

    #[test]
    fn tags_parse_back() {
        for unit in [
            Unit::Psi,
            Unit::Day,
            Unit::Millidarcy,
            Unit::Centipoise,
            Unit::Meter,
            Unit::Dimensionless,
            Unit::PerPsi,
            Unit::CubicMeterPerDay,
            Unit::Pascal,
            Unit::Second,
            Unit::SquareMeter,
            Unit::PascalSecond,
            Unit::PerPascal,
            Unit::CubicMeterPerSecond,
        ] {
            assert_eq!(unit.tag().parse::<Unit>().unwrap(), unit);
        }
    }

    proptest! {
        #[test]
        fn round_trip(value in -1e12f64..1e12, idx in 0usize..6) {
            let unit = [Unit::Psi, Unit::Day, Unit::Millidarcy, Unit::Centipoise, Unit::Meter, Unit::Dimensionless][idx];
            let back = from_si(to_si(value, unit), unit);
            prop_assert!((back - value).abs() <= 1e-12 * value.abs().max(f64::MIN_POSITIVE));
        }
    }
}
