use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("amplitude gain {0} is out of range (must be finite and >= 1)")]
    GainOutOfRange(f64),
    #[error("parameter {name} = {value} is out of range")]
    ParamOutOfRange { name: &'static str, value: f64 },
    #[error("mode `{0}` is already present in the expression")]
    ModeReuse(String),
    #[error("coherent mode `{0}` has no amplitude assigned")]
    UnassignedAmplitude(String),
    #[error("feedback loop is singular (denominator magnitude {denom_mag:e})")]
    SingularLoop { denom_mag: f64 },
    #[error("malformed network: {0}")]
    MalformedNetwork(NetworkIssue),
    #[error("operating point is at the oscillation threshold (denominator magnitude {denom_mag:e})")]
    NearThreshold { denom_mag: f64 },
    #[error("loop unrolling diverges for loop gain {loop_gain}")]
    DivergentUnroll { loop_gain: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),
}

/// Structural problems found while validating a [`crate::network::NetworkSpec`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkIssue {
    #[error("network has no components")]
    Empty,
    #[error("duplicate component id `{0}`")]
    DuplicateComponent(String),
    #[error("duplicate mode `{0}`")]
    DuplicateMode(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("component `{comp}` has no port `{port}`")]
    UnknownPort { comp: String, port: String },
    #[error("`{comp}.{port}` is an output port and cannot be driven")]
    NotAnInput { comp: String, port: String },
    #[error("`{comp}.{port}` is an input port and cannot drive a link or output")]
    NotAnOutput { comp: String, port: String },
    #[error("input `{comp}.{port}` is not driven")]
    UnconnectedInput { comp: String, port: String },
    #[error("input `{comp}.{port}` has more than one driver")]
    DuplicateDriver { comp: String, port: String },
    #[error("`{0}` is used more than once")]
    ReusedSource(String),
    #[error("duplicate output name `{0}`")]
    DuplicateOutput(String),
    #[error("component `{comp}`: {name} = {value} is out of range")]
    Param { comp: String, name: &'static str, value: f64 },
    #[error("coherent amplitude of mode `{0}` is not finite")]
    BadAmplitude(String),
}
