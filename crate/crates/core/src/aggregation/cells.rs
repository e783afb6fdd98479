use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const SUPPRESSED: &str = "suppressed";
const UNDEFINED: &str = "undefined";

/// A count in an exported aggregate: a number, or the suppression marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CountCell {
    Count(u64),
    Suppressed,
}

impl CountCell {
    pub fn count(self) -> Option<u64> {
        match self {
            CountCell::Count(n) => Some(n),
            CountCell::Suppressed => None,
        }
    }

    pub fn is_suppressed(self) -> bool {
        self == CountCell::Suppressed
    }

    /// Replaces `0 < n < k` with the marker; true when it did.
    pub fn floor(&mut self, k: u64) -> bool {
        match *self {
            CountCell::Count(n) if n > 0 && n < k => {
                *self = CountCell::Suppressed;
                true
            }
            _ => false,
        }
    }
}

impl From<u64> for CountCell {
    fn from(n: u64) -> Self {
        CountCell::Count(n)
    }
}

impl Serialize for CountCell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CountCell::Count(n) => s.serialize_u64(*n),
            CountCell::Suppressed => s.serialize_str(SUPPRESSED),
        }
    }
}

impl<'de> Deserialize<'de> for CountCell {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = CountCell;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a non-negative integer or {SUPPRESSED:?}")
            }

            fn visit_u64<E: de::Error>(self, n: u64) -> Result<CountCell, E> {
                Ok(CountCell::Count(n))
            }

            fn visit_i64<E: de::Error>(self, n: i64) -> Result<CountCell, E> {
                u64::try_from(n)
                    .map(CountCell::Count)
                    .map_err(|_| E::invalid_value(de::Unexpected::Signed(n), &self))
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<CountCell, E> {
                if s == SUPPRESSED {
                    Ok(CountCell::Suppressed)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(s), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// A real-valued statistic: a number, undefined (formula has no value), or
/// suppressed because it depends on a suppressed count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
    Suppressed,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Metric::Value(_))
    }

    /// `Value` when finite, otherwise `Undefined`.
    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            Metric::Value(v)
        } else {
            Metric::Undefined
        }
    }
}

impl From<Option<f64>> for Metric {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Metric::Undefined, Metric::from_f64)
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str(UNDEFINED),
            Metric::Suppressed => s.serialize_str(SUPPRESSED),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Metric;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number, {UNDEFINED:?} or {SUPPRESSED:?}")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Metric, E> {
                Ok(Metric::Value(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Metric, E> {
                Ok(Metric::Value(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Metric, E> {
                Ok(Metric::Value(v as f64))
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<Metric, E> {
                match s {
                    UNDEFINED => Ok(Metric::Undefined),
                    SUPPRESSED => Ok(Metric::Suppressed),
                    _ => Err(E::invalid_value(de::Unexpected::Str(s), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// What the privacy floor did to an aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyMeta {
    /// 1 means no floor was applied.
    pub k: u64,
    /// Number of count cells replaced by the marker.
    pub suppressed_cells: u64,
}
