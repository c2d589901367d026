//! Exact stroboscopic fixed points of a single fermionic level coupled to a
//! finite tight-binding chain under coherence-selective resets.
//!
//! Each reset interval `tau` the system and chain evolve unitarily; the reset
//! then restores the chain to a thermal reference state and multiplies the
//! system-chain coherences by a retention factor `eta` in `[0, 1]`. The
//! post-reset kept entries obey an exact affine map whose fixed point yields
//! the retained coherence, reset heat current and entropy production.
//!
//! Modules, bottom-up: [`linalg`], [`model`], [`resetmap`], [`observables`],
//! [`asymptotics`], [`sweeps`]. [`oracle`] and [`validation`] hold slow
//! reference implementations and the self-check suite.

pub mod asymptotics;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod resetmap;
pub mod sweeps;
pub mod validation;

pub use linalg::c64;
