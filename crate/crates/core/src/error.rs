//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants are named after the failure they report;
/// most carry enough context to be actionable from a test log.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("polynomial is not squarefree: roots {0} and {1} closer than threshold")]
    NotSquarefree(usize, usize),
    #[error("wrong degree: expected an odd degree 2g+1 with g >= 1, got {0}")]
    WrongDegree(usize),
    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),
    #[error("a-period matrix ill conditioned (condition number {0:.3e})")]
    IllConditionedAPeriods(f64),
    #[error("path passes within {dist:.3e} of branch point {index}")]
    PathTooCloseToBranchPoint { index: usize, dist: f64 },
    #[error("invalid Riemann matrix: {0}")]
    InvalidTau(String),
    #[error("theta truncation radius would require more than 10^8 lattice points")]
    RadiusOverflow,
    #[error("differential evaluated at a branch point")]
    EvaluationAtBranchPoint,
    #[error("Abel path degenerate: point within {0:.3e} of a branch point")]
    PathDegenerate(f64),
    #[error("Riemann vector search left {0} candidates instead of exactly one")]
    RiemannVectorAmbiguous(usize),
    #[error("sampling exhausted after {0} rejections")]
    SamplingExhausted(usize),
    #[error("no nonsingular odd characteristic found (genus {0})")]
    NoNonsingularOddCharacteristic(usize),
    #[error("half-differential vanishes at the requested point")]
    HalfDiffVanishes,
    #[error("theta denominator lies on (or indeterminately near) the theta divisor")]
    DenominatorOnThetaDivisor,
    #[error("Szego kernel requested on the diagonal")]
    DiagonalEvaluation,
    #[error("weight ledger mismatch at point {0}: lhs carries {1} half-weights, rhs {2}")]
    WeightLedgerMismatch(String, i32, i32),
    #[error("section bases of a split bundle must share one degree (square blocks)")]
    NonSquareBlocks,
    #[error("bundle degree {0} too small: need n >= 2g-1 = {1}")]
    DegreeTooSmall(i64, i64),
    #[error("factorization is not an even partition of the projective branch points: {0}")]
    NotEvenPartition(String),
    #[error("stable indecomposable bundles have no known analytic theta expression; only rank-1 and split bundles are representable")]
    NotImplementedIndecomposable,
}

pub type Result<T> = std::result::Result<T, Error>;
