//! Generalized Camassa-Holm flows on the cone over `[0, 1]`.
//!
//! The variational boundary-value problem behind the Camassa-Holm equation
//! can be relaxed to weighted families of paths on the cone
//! `([0,1] x [0,inf)) / ([0,1] x {0})`, constrained so that the radially
//! `r^2`-weighted base marginal stays uniform at every time and the
//! endpoint coupling is prescribed by a boundary map. This crate provides
//! the pieces needed to compute and study such flows:
//!
//! - [`cone`]: exact cone metric, development map and closed-form geodesics;
//! - [`grid`], [`boundary`], [`gibbs`]: the discretization (grids, boundary
//!   maps, squared-distance arrays, Gibbs kernels);
//! - [`solver`]: cycle-structured multi-marginal Sinkhorn iterations with
//!   per-node Newton dual updates, in dense or log-domain arithmetic;
//! - [`diagnostics`]: transport plans, cone marginals, action/entropy,
//!   discrete pressure and determinism metrics of a solved plan;
//! - [`flows`]: a sandbox for discrete path measures (actions, dilation,
//!   rescaling, homogeneous marginals, deterministic lifts);
//! - [`smooth`]: deterministic reference solutions of the geodesic system
//!   and the short-time optimality condition checks;
//! - [`exhaustive`]: brute-force reference computations on tiny grids used
//!   to cross-check the solver;
//! - [`io`]: CSV and PGM emission for reproducible artifacts.

pub mod boundary;
pub mod cone;
pub mod diagnostics;
pub mod error;
pub mod exhaustive;
pub mod flows;
pub mod gibbs;
pub mod grid;
pub mod io;
pub mod smooth;
pub mod solver;

pub use error::{Error, Result};
