//! Numerical toolkit for the integrability of Poisson manifolds.
//!
//! The crate computes the objects that decide whether a Poisson manifold
//! integrates to a symplectic groupoid: the bracket on 1-forms, cotangent paths
//! and their homotopies, isotropy Lie algebras, monodromy period groups and the
//! variation of leafwise symplectic areas. All structures are written in a
//! single chart with the expression language of [`expr`].
//!
//! Sign conventions used throughout:
//!
//! * anchor: `(#α)^k = Π^{jk} α_j`, so that `X_f = #df` satisfies `X_f(g) = {f, g}`
//!   with `{f, g} = Π^{jk} ∂_j f ∂_k g`;
//! * path integrals of Hamiltonian fields: `∫_a X_h = HAMILTONIAN_SIGN · (h(γ(1)) − h(γ(0)))`
//!   with [`paths::HAMILTONIAN_SIGN`] `= −1`;
//! * homotopy variation: `∂_t b − ∂_ε a = −T(a, b)`, see [`homotopy::VARIATION_TORSION_SIGN`];
//! * leafwise symplectic form: `ω(#α, #β) = Π(α, β)`.

pub mod connection;
pub mod expr;
pub mod forms;
pub mod homotopy;
pub mod isotropy;
pub mod monodromy;
pub mod numeric;
pub mod ode;
pub mod paths;
pub mod registry;
pub mod structure;

pub use expr::{ExprError, Expression, Params, Scope};
pub use forms::{OneForm, TimeDependentOneForm, VectorField};
pub use ode::{Method, OdeSettings};
pub use paths::CotangentPath;
pub use structure::PoissonStructure;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("ODE integration failed near t = {t}: {reason}")]
    Ode { t: f64, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("cotangent defect {defect:e} exceeds tolerance {tol:e}")]
    Defect { defect: f64, tol: f64 },
    #[error("base endpoint mismatch {0:e}")]
    EndpointMismatch(f64),
    #[error("ambiguous numerical rank: gap ratio {ratio:.3} between singular values {kept:e} and {dropped:e}")]
    AmbiguousRank { ratio: f64, kept: f64, dropped: f64 },
    #[error("covector is not in the kernel of the anchor (|#u| = {0:e})")]
    NotInKernel(f64),
    #[error("vector is not tangent to the symplectic leaf (residual {0:e})")]
    NotTangent(f64),
    #[error("Jacobi identity fails: max residual {residual:e} at {point:?}")]
    NotPoisson { residual: f64, point: Vec<f64> },
    #[error("{what} is not positive at {at}: value {value}")]
    NotPositive { what: String, at: f64, value: f64 },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid splitting: {0}")]
    Splitting(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when a structure was rejected by one of its validity checks.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::NotPoisson { .. } | Error::NotPositive { .. })
    }

    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Ode { .. }
                | Error::Defect { .. }
                | Error::AmbiguousRank { .. }
                | Error::Quadrature(_)
                | Error::Expr(ExprError::Domain(_))
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
