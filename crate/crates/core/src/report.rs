//! Serialization helpers shared by reports.

use serde::Serializer;

use crate::gf2::BitWord;

pub fn ser_hex<S: Serializer>(w: &BitWord, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&w.to_hex())
}

pub fn ser_hex_opt<S: Serializer>(w: &Option<BitWord>, s: S) -> Result<S::Ok, S::Error> {
    match w {
        Some(w) => s.serialize_str(&w.to_hex()),
        None => s.serialize_none(),
    }
}
