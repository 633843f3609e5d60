//! Martingale approximation, projective norms and condition series.

pub mod conditions;
pub mod decomposition;
pub mod norms;
pub mod series;

pub use decomposition::{build_decomposition, four_term_residual, projection_p0, verify_projection_tail, verify_four_term_identity, MartingaleDecomposition};
pub use series::{ConditionId, SeriesDiagnostic, Verdict};
