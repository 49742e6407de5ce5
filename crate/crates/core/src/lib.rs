//! Angle-of-arrival estimation for uniform linear arrays.
//!
//! The crate simulates array snapshots ([`array_signal`]), turns them into
//! covariance features ([`features`]), and estimates source angles either with
//! the MUSIC subspace method ([`music`]) or with neural regressors
//! ([`neural`], composed for several angles by [`schemes`]). [`harness`] runs
//! seeded comparison experiments and writes CSV/JSON reports.

pub mod array_signal;
pub mod error;
pub mod features;
pub mod harness;
pub mod music;
pub mod neural;
pub mod schemes;

pub use error::{DoaError, Result};

/// Serializes an SNR in dB, writing `+∞` (noise-free) as JSON `null`.
pub(crate) mod serde_snr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
