use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// The split between [`Error::Invalid`] and [`Error::Numerical`] mirrors the
/// CLI exit codes: bad input is exit 1, a failure while computing is exit 2.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid specification, configuration, or argument.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Numerical failure during integration, quadrature, or search.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Scalar minimization was asked to refine a bracket whose coarse scan
    /// put the minimum on an endpoint.
    #[error("no minimum in bracket [{lo}, {hi}]: coarse scan is monotone toward {at}")]
    NoMinimumInBracket { lo: f64, hi: f64, at: f64 },

    /// Integration failure at one sweep grid point, with its coordinates.
    #[error("sweep point ({i_vb}, {i_vc}) at v_B = {vb_mps} m/s, v_C = {vc_mps:?} m/s: {source}")]
    SweepPoint {
        i_vb: usize,
        i_vc: usize,
        vb_mps: f64,
        vc_mps: Option<f64>,
        source: Box<Error>,
    },

    #[error("config parse: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// CLI exit code class for this error (1 = config, 2 = numerical).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::ConfigParse(_) | Error::Io(_) => 1,
            Error::Numerical(_) | Error::NoMinimumInBracket { .. } | Error::SweepPoint { .. } => 2,
        }
    }
}
