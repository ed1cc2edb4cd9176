use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the stitching core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate line segment: endpoints closer than {0:e}")]
    DegenerateSegment(f64),
    #[error("point maps to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("invalid correspondence records: {}", .0.join("; "))]
    InvalidCorrespondences(Vec<String>),
    #[error("insufficient matches: need at least {needed}, got {got}")]
    InsufficientMatches { needed: usize, got: usize },
    #[error("no consensus: best model supports only {0} matches")]
    NoConsensus(usize),
    #[error("rank deficient system: {rows} constraint rows, need at least 8")]
    RankDeficient { rows: usize },
    #[error("degenerate singular-value separation ({0:e})")]
    DegenerateSeparation(f64),
    #[error("cell ({col}, {row}): {source}")]
    Cell {
        col: usize,
        row: usize,
        source: alloc::boxed::Box<Error>,
    },
    #[error("no similarity group found")]
    NoSimilarityGroup,
    #[error("point beyond the projective horizon (1 - c*u = {0:e})")]
    BeyondHorizon(f64),
    #[error("singular homography (det = {0:e})")]
    SingularHomography(f64),
    #[error("point ({x}, {y}) lies outside the mesh")]
    OutsideMesh { x: f64, y: f64 },
    #[error("degenerate triangle in smoothness term")]
    DegenerateTriangle,
    #[error("linear solve failed: {0}")]
    SolverFailure(String),
    #[error("window at ({x}, {y}) crosses the raster border")]
    WindowOutOfBounds { x: usize, y: usize },
    #[error("empty overlap region")]
    EmptyOverlap,
    #[error("no correspondences to evaluate")]
    EmptyCorrespondences,
    #[error("canvas of {width}x{height} exceeds the {cap} pixel cap")]
    CanvasTooLarge {
        width: usize,
        height: usize,
        cap: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty sampling region")]
    EmptyRegion,
    #[error("image chain is disconnected: image {0} is unreachable from the anchor")]
    DisconnectedChain(usize),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: alloc::boxed::Box::new(self),
        }
    }

    /// Strip stage and cell annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Cell { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by malformed input rather than numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidCorrespondences(_)
                | Error::InsufficientMatches { .. }
                | Error::InvalidInput(_)
                | Error::DegenerateSegment(_)
                | Error::DisconnectedChain(_)
                | Error::CanvasTooLarge { .. }
                | Error::EmptyCorrespondences
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
