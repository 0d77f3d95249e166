//! Voronoi constellations of Construction-A lattices.
//!
//! The fine (coding) lattice is `C + pZ^n` where `C` is a dual-diagonal
//! nonbinary LDPC code over `F_p`; the coarse (shaping) lattice is `pΓ` for an
//! integer lattice `Γ` with a lower-triangular generator, typically a direct
//! sum of scaled Leech lattices. Messages are pairs `(u, s)` with `u ∈ F_p^k`
//! and `s` bounded by the diagonal of `Γ`'s generator; encoding, decoding and
//! demapping are all linear in the blocklength.
//!
//! Module map:
//!
//! * [`field`]: prime-field arithmetic and the embedding `F_p -> {0..p-1}`.
//! * [`ldpc`]: parity-check construction and systematic encoding.
//! * [`lattice`]: triangular generators, closest-point search, VNR and
//!   shaping-gain estimation.
//! * [`leech`]: the integer Leech generator and direct-sum shaping lattices.
//! * [`voronoi`]: coset leaders, encoding and demapping.
//! * [`decoder`]: channel beliefs, belief propagation, MMSE scaling.
//! * [`sim`]: the Monte-Carlo harness behind the `leech-lda` binary.

pub mod decoder;
pub mod error;
pub mod field;
pub mod lattice;
pub mod ldpc;
pub mod leech;
pub mod sim;
pub mod voronoi;

pub use error::{Error, Result};
