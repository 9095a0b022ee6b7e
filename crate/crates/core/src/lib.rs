//! Exact Gaussian entropic optimal transport.
//!
//! Closed-form Schrödinger bridges between Gaussian marginals for
//! linear-Gaussian reference kernels, the Gaussian Sinkhorn recursion with
//! its Riccati description, convergence-rate certificates, regularization
//! asymptotics and independent oracles (grid IPF, Monte Carlo).
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`spd`] | SPD matrices, square roots, geometric means, divergences |
//! | [`gaussian`] | Gaussians, kernels `θ = (α, β, τ)`, Bayes maps |
//! | [`riccati`] | Riccati maps, fixed points, Floquet products |
//! | [`bridge`] | Schrödinger bridge map, duals, potentials, asymptotics |
//! | [`sinkhorn`] | Gaussian Sinkhorn flow and its diagnostics |
//! | [`oracle`] | Grid IPF and Monte Carlo checks |

pub mod bridge;
pub mod error;
pub mod gaussian;
pub mod oracle;
pub mod random;
pub mod riccati;
pub mod sinkhorn;
pub mod spd;

pub use bridge::{schrodinger_bridge, BridgeProblem, BridgeSolution};
pub use error::{Error, Result};
pub use gaussian::{GaussianDist, KernelParams, PushforwardMoments, RelaxedParams};
pub use nalgebra::{DMatrix, DVector};
pub use riccati::RiccatiSpec;
pub use sinkhorn::{run_sinkhorn, run_sinkhorn_until, SinkhornTrajectory};
pub use spd::{SpdMatrix, SymMatrix};
