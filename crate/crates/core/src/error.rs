use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("rotation angle {0} is at the logarithm cut locus")]
    AngleNearPi(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("information matrix of edge {from}->{to} is not symmetric positive-definite")]
    InvalidInformationMatrix { from: usize, to: usize },
    #[error("edge {from}->{to} references missing vertex {missing}")]
    MissingVertex { from: usize, to: usize, missing: usize },
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(usize),
    #[error("odometry chain does not connect vertices 0..{0}")]
    Disconnected(usize),
    #[error("loop edge {0}->{0} is a self loop")]
    SelfLoop(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("normalized weight {0} is outside [0, 1]")]
    DomainError(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("normal equations stayed singular up to the maximum damping")]
    SingularNormalEquations,
    #[error("residual evaluation produced a non-finite value")]
    NonFiniteResidual,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("ParseError line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("not enough vertices to place outliers ({0})")]
    InsufficientVertices(usize),
    #[error("trajectory lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid corruption spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("trajectory lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {0} poses are required")]
    TooShort(usize),
    #[error("no injected outliers to score against")]
    NoOutliers,
}
