//! PolyProtect: polynomial protection for real-valued embeddings, plus the
//! evaluation machinery needed to judge it as a template-protection scheme.
//!
//! The library has three layers:
//!
//! * the transform itself ([`transform`]): windowed multivariate-polynomial
//!   mapping from an embedding to a lower-dimensional protected template,
//!   user-specific parameter generation (naive and unlinkability-aware), and
//!   the negative-cosine-distance comparator;
//! * corpus plumbing ([`corpus`], [`dist`]): a CSV embedding format, a
//!   deterministic synthetic-corpus generator with controllable class
//!   separation, development/evaluation partitioning, and per-element
//!   histogram distributions used to seed attack guesses;
//! * evaluation protocols ([`verify`], [`attack`], [`linkability`]):
//!   verification accuracy (normal / stolen-parameters scenarios with
//!   TMR-at-FMR reporting), numerical inversion attacks built on the
//!   Levenberg-Marquardt solver in [`solver`] (single-template and stacked
//!   record-multiplicity variants), and likelihood-ratio linkability metrics.
//!
//! Every randomized operation takes a 64-bit seed and derives independent
//! substreams per task ([`rng`]), so campaigns give identical results
//! regardless of worker count. Data-parallel loops go through [`exec`],
//! which uses rayon when the `parallel` feature (default) is enabled and
//! plain iteration otherwise.

pub mod attack;
pub mod corpus;
pub mod dist;
mod error;
pub mod exec;
pub mod linkability;
pub mod rng;
pub mod solver;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
