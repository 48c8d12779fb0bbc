//! Finite-field spreading multiple access.
//!
//! Each user maps every `s` information bits to a GF(2^s) symbol, spreads it
//! by `L` field multiplications, demaps the products to `sL` chips and
//! interleaves them at chip level. The receiver runs an iterative
//! chip-by-chip multi-user decoder on a single factor graph.
//!
//! Besides the transmitter, channel and decoder, the crate provides EXIT
//! analysis of the despreader, the closed-form asymptotic EXIT slope
//! `g(s, L)` with an independent enumeration oracle, and a reproducible
//! parallel BER simulator.
//!
//! A guide with longer explanations lives in the `book/` directory of the
//! repository; its code listings are compiled as doc-tests of this crate.

pub mod analysis;
pub mod channel;
pub mod codec;
pub mod decoder;
pub mod error;
pub mod gf;
pub mod mc;
pub mod seed;
pub mod sim;
pub mod slope;

pub use error::{Error, Result};

// The guide's listings run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/field.md")]
    mod field {}
    #[doc = include_str!("../../../book/src/transmitter.md")]
    mod transmitter {}
    #[doc = include_str!("../../../book/src/decoder.md")]
    mod decoder {}
    #[doc = include_str!("../../../book/src/exit.md")]
    mod exit {}
    #[doc = include_str!("../../../book/src/slope.md")]
    mod slope {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
