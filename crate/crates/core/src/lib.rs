//! Planar mechanical billiards in attracting n-centre potentials.
//!
//! Motion in the potential V(x) = Σ m_i |x − c_i|^{−α_i} (m_i > 0, α_i ≥ 1)
//! at fixed positive energy h, confined to a half-plane Π by a straight wall
//! on which the velocity reflects elastically. The crate provides:
//!
//! - [`potential`]: the potential, its derivatives, the Jacobi-Maupertuis
//!   conformal geometry, and escape/convexity diagnostics;
//! - [`dynamics`]: adaptive integration between wall impacts, the first-return
//!   billiard map on the wall section, and winding words of segments;
//! - [`variational`]: discrete JM-length minimizers in prescribed winding
//!   classes, periodic bounce orbits, and shadowing windows;
//! - [`twocentre`]: the integrable two-centre structure in elliptic
//!   coordinates, closed-form separatrix spirals, and wall admissibility;
//! - [`specfun`]: the elliptic integrals and Jacobi functions the closed
//!   forms need, via AGM/Landen;
//! - [`symbolic`]: itineraries over a section ray and sub-shift membership.
//!
//! The geometry/potential/special-function/stepper kernel is generic over the
//! scalar type via [`real::Real`]; the crate root re-exports concrete `f64`
//! aliases, which the higher layers use exclusively.

pub mod geom;
pub mod ode;
pub mod potential;
pub mod real;
pub mod specfun;
pub mod winding;

pub mod dynamics;
// pub mod symbolic;
pub mod twocentre;
pub mod variational;

/// Concrete f64 instantiations used by the dynamics and variational layers.
pub type Vec2 = geom::Vec2<f64>;
pub type CentreSystem = potential::CentreSystem<f64>;
pub type Wall = potential::Wall<f64>;
pub type EnergyLevel = potential::EnergyLevel<f64>;
pub type EllipticModulus = specfun::EllipticModulus<f64>;
