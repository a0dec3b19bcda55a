//! Eigenpairs and eigencurves of two-parameter Sturm–Liouville problems
//!
//! ```text
//! -y'' + q y = (mu1^2 w1 + mu2^2 w2) y,   y(0) = y(c) = y(1) = 0
//! ```
//!
//! by regularized sampling: the shooting solution `y(x; mu1, mu2)` is multiplied
//! by a sinc-power regularizer so that it becomes band-limited in `(mu1, mu2)`,
//! sampled on a rectangular lattice, and reconstructed anywhere with the 2-D
//! cardinal series. Eigenpairs are the common zeros of the reconstructed
//! boundary functions at `x = 1` and `x = c`.

pub mod acceptance;
pub mod cli;
pub mod coeffexpr;
pub mod ivp;
pub mod oracle;
pub mod pipeline;
pub mod problem;
pub mod quadrature;
pub mod sampling;
pub mod solver;
