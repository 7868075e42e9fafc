//! Desk-scale potential theory on finite weighted networks.
//!
//! The crate is organised bottom-up: [`metric`] (finite metric spaces),
//! [`network`] (the discrete Dirichlet form), [`dyadic`] (nested cubes),
//! [`vk`] (capacity-good measures), [`harnack`] (Harnack constants and the
//! Green/capacity verifiers), [`remetric`] (scale functions and functional
//! inequalities) and [`spaces`] (generators). [`format`] holds the JSON space
//! format and the canonical report serializer.

pub mod dyadic;
pub mod error;
pub mod fit;
pub mod format;
pub mod harnack;
pub mod linalg;
pub mod metric;
pub mod network;
pub mod remetric;
pub mod spaces;
pub mod vk;

pub use error::{Error, Result};
pub use metric::FinitePointMetric;
pub use network::Network;

/// A ratio that may be infinite. Serialized as a number or the string `"infinite"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

impl Ratio {
    pub fn from_f64(v: f64) -> Ratio {
        if v.is_finite() {
            Ratio::Finite(v)
        } else {
            Ratio::Infinite
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Ratio::Finite(v) => v,
            Ratio::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Ratio::Finite(_))
    }

    pub fn max(self, other: Ratio) -> Ratio {
        Ratio::from_f64(self.value().max(other.value()))
    }
}

impl serde::Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::Infinite => s.serialize_str("infinite"),
        }
    }
}

/// Evenly strided indices, about `count` of them (all when `None`).
pub(crate) fn sample_indices(n: usize, count: Option<usize>) -> Vec<usize> {
    let stride = count.map(|c| (n / c.max(1)).max(1)).unwrap_or(1);
    (0..n).step_by(stride).collect()
}
