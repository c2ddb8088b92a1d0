//! Physical quantities written as `"<number> <unit>"` strings.
//!
//! Frequencies given in Hz-based units are angular: `"5 GHz"` becomes
//! `2π × 5e9 rad/s`. Use `rad/s` to give an angular frequency directly.
//! Parsed values are stored in SI and written back in the canonical SI unit,
//! so a config echoed into a report parses to the same numbers.

use std::f64::consts::PI;
use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

pub trait Dimension {
    const NAME: &'static str;
    const SI: &'static str;
    fn scale(unit: &str) -> Option<f64>;
}

macro_rules! dimension {
    ($ty:ident, $name:literal, $si:literal, { $($unit:literal => $scale:expr),* $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $ty;
        impl Dimension for $ty {
            const NAME: &'static str = $name;
            const SI: &'static str = $si;
            fn scale(unit: &str) -> Option<f64> {
                match unit {
                    $($unit => Some($scale),)*
                    _ => None,
                }
            }
        }
    };
}

dimension!(Frequency, "frequency", "rad/s", {
    "rad/s" => 1.0, "krad/s" => 1e3, "Mrad/s" => 1e6, "Grad/s" => 1e9,
    "1/s" => 1.0,
    "Hz" => 2.0 * PI, "kHz" => 2.0 * PI * 1e3, "MHz" => 2.0 * PI * 1e6, "GHz" => 2.0 * PI * 1e9,
});
dimension!(Time, "time", "s", {
    "s" => 1.0, "ms" => 1e-3, "us" => 1e-6, "μs" => 1e-6, "µs" => 1e-6, "ns" => 1e-9, "ps" => 1e-12,
});
dimension!(Length, "length", "m", {
    "m" => 1.0, "cm" => 1e-2, "mm" => 1e-3, "um" => 1e-6, "μm" => 1e-6, "µm" => 1e-6,
});
dimension!(Field, "magnetic field", "T", {
    "T" => 1.0, "mT" => 1e-3, "uT" => 1e-6, "μT" => 1e-6, "µT" => 1e-6,
});
dimension!(Temperature, "temperature", "K", {
    "K" => 1.0, "mK" => 1e-3, "uK" => 1e-6, "μK" => 1e-6, "µK" => 1e-6,
});

/// An SI value of dimension `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity<D> {
    value: f64,
    _dim: PhantomData<D>,
}

impl<D: Dimension> Quantity<D> {
    pub fn si(value: f64) -> Self {
        Self {
            value,
            _dim: PhantomData,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut parts = text.split_whitespace();
        let (Some(number), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!(
                "expected `<number> <unit>` for a {}, got `{text}`",
                D::NAME
            ));
        };
        let number: f64 = number
            .parse()
            .map_err(|_| format!("`{number}` is not a number"))?;
        if !number.is_finite() {
            return Err(format!("`{text}` is not finite"));
        }
        let scale = D::scale(unit)
            .ok_or_else(|| format!("`{unit}` is not a unit of {}", D::NAME))?;
        Ok(Self::si(number * scale))
    }
}

impl<D: Dimension> fmt::Display for Quantity<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} {}", self.value, D::SI)
    }
}

impl<D: Dimension> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        struct V<D>(PhantomData<D>);
        impl<D: Dimension> Visitor<'_> for V<D> {
            type Value = Quantity<D>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "a {} such as \"1 {}\"", D::NAME, D::SI)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Quantity::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_str(V(PhantomData))
    }
}
