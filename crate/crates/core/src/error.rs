use std::fmt;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid model: {}", ViolationList(.0))]
    Invalid(Vec<Violation>),

    #[error("stage payoffs must be bounded below by a positive value (minimum entry {min})")]
    NonPositivePayoff { min: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("stage LP has no feasible vertex")]
    EmptyStageLp,

    #[error("stage LP at stage {stage}, region {region} has no feasible vertex")]
    NoVertices { stage: usize, region: usize },

    #[error("no region of the partition contains belief {belief:?}")]
    CoverageGap { belief: Vec<f64> },

    #[error("region {region} has no provenance link for branch (aL={leader}, aF={follower}, o={observation})")]
    MissingProvenance {
        region: usize,
        leader: usize,
        follower: usize,
        observation: usize,
    },

    #[error("region cap exceeded at stage {stage}: {count} regions > cap {cap}")]
    RegionCap {
        stage: usize,
        count: usize,
        cap: usize,
    },

    #[error("feasibility program failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by the solver itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Schema(_)
                | Error::Invalid(_)
                | Error::InvalidArgument(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
