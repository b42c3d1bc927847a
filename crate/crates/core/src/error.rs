use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("non-finite value {value} at node {coord:?}")]
    NonFinite { coord: Vec<f64>, value: f64 },
    #[error("degenerate ball: center {center:?}, radius {radius}")]
    DegenerateBall { center: Vec<f64>, radius: f64 },
    #[error("domain mismatch between operands")]
    DomainMismatch,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("memory budget exceeded: {points} points for the {route} route (limit {limit})")]
    BudgetExceeded {
        route: &'static str,
        points: usize,
        limit: usize,
    },
    #[error("eigen-solver failure: {0}")]
    EigenFailure(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("quadrature did not converge: successive doublings differ by {difference:e}")]
    QuadratureNonconvergence { difference: f64 },
    #[error("insufficient dynamic range: {usable} usable points, need at least 4")]
    InsufficientDynamicRange { usable: usize },
    #[error("degenerate normalizer: operator seminorm vanishes (f is a fixed point)")]
    DegenerateNormalizer,
    #[error("potential vanishes on every ball of the family")]
    PotentialVanishes,
    #[error("every ball was skipped ({skipped} balls lack resolved heights)")]
    AllBallsSkipped { skipped: usize },
    #[error("invalid height grid: {0}")]
    InvalidHeights(String),
    #[error("too few interior heights: {0}, need at least 3")]
    TooFewHeights(usize),
    #[error("no uniform trace bound: Morrey norms of the slices grow by {growth:.3}x")]
    NoUniformTraceBound { growth: f64 },
    #[error("unknown corpus generator `{0}`")]
    UnknownGenerator(String),
    #[error("empty corpus specification")]
    EmptyCorpus,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
