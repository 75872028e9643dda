//! Unequal sub-array (UESA) hybrid analog combining for massive-MIMO
//! receivers.
//!
//! The crate covers the whole pipeline: mmWave channel draws ([`channel`]),
//! factorized analog combining for a given antenna allocation ([`combiner`]),
//! the allocation searches ([`allocation`]), rates, bounds and power
//! ([`metrics`]), and a seeded Monte Carlo driver ([`harness`]).
//!
//! ```
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha8Rng;
//! use uesa::allocation::uesa_res;
//! use uesa::channel::{generate_channel, ChannelParams};
//! use uesa::combiner::PhaseSet;
//! use uesa::metrics::snr_db_to_linear;
//!
//! let h = generate_channel(&ChannelParams::new(16, 4), &mut ChaCha8Rng::seed_from_u64(1))?;
//! let best = uesa_res(&h, 4, snr_db_to_linear(0.0), &PhaseSet::default())?;
//! assert!(best.allocation.is_nondecreasing());
//! assert_eq!(best.candidates_examined, 34);
//! # Ok::<(), uesa::Error>(())
//! ```

pub mod allocation;
pub mod channel;
pub mod combiner;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;

pub use error::{Error, Result};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/combining.md")]
    mod combining {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
