//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Expression source could not be parsed.  `pos` is a byte offset into
    /// the source string.
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    /// An identifier was called like a function but is not a known builtin.
    #[error("unknown function '{name}' at position {pos}")]
    UnknownFunction { name: String, pos: usize },

    /// A variable had no value bound during evaluation.
    #[error("unbound variable '{name}'")]
    UnboundVariable { name: String },

    /// Evaluation left the domain of a builtin (sqrt of a negative, log of
    /// a non-positive, division by zero, ...).  `expr` is the offending
    /// subexpression, printed.
    #[error("domain violation evaluating '{expr}': {msg}")]
    EvalDomain { expr: String, msg: String },

    /// An expression referenced variables it is not allowed to depend on.
    #[error("expression '{expr}' may only use {{{allowed}}}, found '{found}'")]
    WrongVariables {
        expr: String,
        allowed: String,
        found: String,
    },

    /// A point fell outside the declared domain box.
    #[error("point ({}, {}, {}) lies outside the domain box", .point[0], .point[1], .point[2])]
    OutsideDomain { point: [f64; 3] },

    /// Area-map construction probe found a determinant off one.
    #[error(
        "not area-preserving: determinant {det} at (k2, k3) = ({}, {}) deviates from 1 by more than {tol}",
        .point[0], .point[1]
    )]
    NotAreaPreserving {
        point: [f64; 2],
        det: f64,
        tol: f64,
    },

    /// Construction probe could not evaluate the map somewhere in the box.
    #[error("map is singular near (k2, k3) = ({}, {}): {source}", .point[0], .point[1])]
    SingularInDomain {
        point: [f64; 2],
        source: Box<Error>,
    },

    /// Newton failed to find tau2 for the requested (k2, k3).
    #[error("Newton iteration did not converge at (k2, k3) = ({}, {}): {msg}", .point[0], .point[1])]
    NewtonDiverged { point: [f64; 2], msg: String },

    /// The generating potential has (near-)vanishing mixed derivative, so
    /// the implicit solve for tau2 is ill-posed.
    #[error(
        "degenerate generating potential at (k2, k3) = ({}, {}): |d2(potential)/dk3 dtau2| = {deriv:e} is below 1e-12",
        .point[0], .point[1]
    )]
    DegenerateHodograph { point: [f64; 2], deriv: f64 },

    /// Flow-map construction probe found a Jacobian determinant off one.
    #[error(
        "not volume-preserving: determinant {det} at k = ({}, {}, {}) deviates from 1 by more than {tol}",
        .point[0], .point[1], .point[2]
    )]
    NotVolumePreserving {
        point: [f64; 3],
        det: f64,
        tol: f64,
    },

    /// Scene domain is not covered by the area map's domain.
    #[error("area map domain {have} does not cover the scene's (k2, k3) box {need}")]
    DomainNotCovered { have: String, need: String },

    /// A transform's scaling function vanishes or changes sign.
    #[error("scaling function must be nonvanishing: phi({at}) = {value:e}")]
    PhiVanishes { at: f64, value: f64 },

    /// Current-sheet parameters out of range.
    #[error("invalid current sheet: {0}")]
    BadSheet(String),

    /// Verification grid unusable (zero resolution, no room for the
    /// finite-difference margin, ...).
    #[error("invalid grid: {0}")]
    BadGrid(String),

    /// Nothing to export.
    #[error("refusing to export empty {0}")]
    EmptyExport(&'static str),

    /// Export target cannot represent this data.
    #[error("{what} cannot be written as {format}")]
    UnsupportedFormat {
        what: &'static str,
        format: &'static str,
    },

    /// Scene file failed schema validation.
    #[error("scene error: {0}")]
    Scene(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
