//! Process exit codes.

use phasebeam::Error;

/// Everything succeeded.
pub const OK: i32 = 0;
/// Unexpected failure not attributable to the inputs.
pub const INTERNAL: i32 = 1;
/// Bad command line (also used by clap itself).
pub const USAGE: i32 = 2;
/// Malformed or inconsistent input files or configuration.
pub const INPUT: i32 = 3;
/// Physically inadmissible parameters, e.g. the collimation condition is
/// undefined for `b <= 0`.
pub const PHYSICS: i32 = 4;
/// A numerical stage failed on valid input (non-positive filtered image,
/// negative simulated intensity, zero background noise).
pub const NUMERICAL: i32 = 5;

/// Command-line misuse detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn code_for(err: &Error) -> i32 {
    if err.is_physics() {
        return PHYSICS;
    }
    match err {
        Error::Projection { source, .. } => code_for(source),
        Error::NonPositiveFiltered { .. }
        | Error::NegativeIntensity { .. }
        | Error::ZeroBackgroundStd
        | Error::VisibilityUndefined(_) => NUMERICAL,
        _ => INPUT,
    }
}

/// Exit code for an error chain: the first library error decides.
pub fn code_for_chain(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return USAGE;
    }
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(INTERNAL, code_for)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn physics_errors_have_their_own_code() {
        assert_eq!(code_for(&Error::NonPositiveScatteringLength(-1.0)), PHYSICS);
        assert_eq!(code_for(&Error::NoRetrievalGain(-1.0).at_projection(3)), PHYSICS);
        assert_eq!(code_for(&Error::ZeroBackgroundStd), NUMERICAL);
        assert_eq!(code_for(&Error::ShapeMismatch("x".into())), INPUT);
        let chained = anyhow::Error::new(Error::NonPositiveTau(0.0)).context("design");
        assert_eq!(code_for_chain(&chained), PHYSICS);
        assert_eq!(code_for_chain(&anyhow::anyhow!("other")), INTERNAL);
    }
}
