use thiserror::Error;

use crate::expr::ExprError;
use crate::jet::JetError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0:?} is outside the model domain")]
    Domain(Vec<f64>),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("constraint matrix has rank {rank}, expected {rows}")]
    RankDeficient { rank: usize, rows: usize },
    #[error(
        "pullback metric is degenerate (eigenvalues {min_eigenvalue:e} .. {max_eigenvalue:e}); \
         the slice is tangent to the kernel"
    )]
    DegeneratePullback {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
    #[error("dual-coordinate Jacobian is singular")]
    SingularDualJacobian,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Domain violations surfaced by the expression engine count as domain
    /// errors for callers that only care about the class.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Jet(JetError::Domain { .. } | JetError::DivisionByZero)
                | Error::Expr(ExprError::Jet(
                    JetError::Domain { .. } | JetError::DivisionByZero
                ))
        )
    }
}
