//! Finite-difference simulation and verification of the
//! chemotaxis-consumption system with logistic source
//!
//! ```text
//! u_t = Δu − χ∇·(u∇v) + κu − μu² − εu² ln(au)
//! v_t = Δv − uv
//! ```
//!
//! on boxes with homogeneous Neumann boundary conditions.

pub mod diagnostics;
pub mod experiments;
pub mod expr;
pub mod grid;
pub mod io;
pub mod model;
pub mod stepper;
