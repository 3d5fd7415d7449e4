//! High-precision laboratory for the marked length spectrum of planar
//! billiards with three strictly convex, non-eclipsing scatterers.
//!
//! The crate computes periodic orbits and their lengths to hundreds of
//! digits, extracts the Birkhoff normal form and gluing data of the
//! two-scatterer hyperbolic core, expands orbit lengths in an asymptotic
//! triangular series, inverts that series to recover dynamical invariants
//! from length data alone, and reconstructs a shadowed scatterer boundary
//! point by point from the spectrum.

pub mod numerics;
pub mod geometry;
pub mod billiard;
pub mod orbits;
pub mod normal_form;
pub mod series;
pub mod recovery;
pub mod reconstruction;
pub mod config;
