//! Contextuality-certified randomness expansion toolkit.
//!
//! The crate simulates a qutrit playing the modified KCBS game, runs the
//! spot-checking expansion protocol against it, certifies smooth
//! min-entropy with the Miller-Shi and Huang-Shi rate curves, hashes the raw
//! output with a Toeplitz extractor and checks the result with a battery of
//! statistical tests.
//!
//! Module map:
//!
//! * [`qutrit`]: three-level state simulation, rotations, noisy measurements.
//! * [`kcbs`]: pentagram geometry, classical bound oracles, game scoring.
//! * [`protocol`]: the spot-checking protocol and log replay.
//! * [`bounds`]: min-entropy rate curves, optimisation, sweeps.
//! * [`extractor`]: GF(2) Toeplitz hashing over packed bit streams.
//! * [`stattests`]: frequency, block frequency, cumulative sums, runs,
//!   longest run, rank, spectral and serial tests.
//! * [`io`]: trial logs, `.bits` files and their JSON sidecars.
//! * [`fixtures`]: synthetic logs with known statistics.
//!
//! Data-parallel loops (trial shards, sweep cells, extractor blocks, test
//! batteries) go through [`exec::Execution`]. With the `parallel` feature
//! disabled every mode runs sequentially and produces identical results.

pub mod bits;
pub mod bounds;
pub mod error;
pub mod exec;
pub mod extractor;
pub mod fixtures;
pub mod gf2;
pub mod io;
pub mod kcbs;
pub mod protocol;
pub mod qutrit;
pub mod rng;
pub mod stattests;

pub use bits::BitStream;
pub use error::{Error, Result};
pub use exec::Execution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
