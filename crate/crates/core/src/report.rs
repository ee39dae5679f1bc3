//! Serialization helpers shared by the reports.

use rug::Integer;
use serde::Serializer;

/// Integers as decimal strings, so large values survive JSON round trips.
pub fn ser_integer<S: Serializer>(v: &Integer, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

pub fn ser_opt_integer<S: Serializer>(v: &Option<Integer>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_some(&v.to_string()),
        None => s.serialize_none(),
    }
}
