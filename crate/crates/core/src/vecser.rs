//! Serde adapters that write vectors as plain JSON arrays.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::matops::Vector;

pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
    v.as_slice().serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
    let raw = Vec::<f64>::deserialize(d)?;
    Ok(Vector::from_vec(raw))
}
