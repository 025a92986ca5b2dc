use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate LFSR seed")]
    DegenerateSeed,

    #[error("no feedback polynomial for PRBS order {0} (supported: 2..=16)")]
    UnsupportedOrder(u32),

    #[error("seed length {got} does not match PRBS order {order}")]
    SeedLength { order: u32, got: usize },

    #[error("sequence length {0} is not of the form 2^k - 1")]
    NotMaximalLength(usize),

    #[error("empty bit sequence")]
    EmptySequence,

    #[error("position {position} m outside fiber [0, {length}] m")]
    PositionOutOfRange { position: f64, length: f64 },

    #[error("unstable discretization: dt ({dt} s) >= tau ({tau} s)")]
    UnstableDiscretization { dt: f64, tau: f64 },

    #[error("frame_period too short: need {needed} samples, frame holds {frame_len}")]
    FrameTooShort { needed: usize, frame_len: usize },

    #[error("ADC full-scale range must be positive, got {0}")]
    InvalidFullScale(f64),

    #[error("reference ({reference} samples) longer than frame ({frame} samples)")]
    ReferenceTooLong { reference: usize, frame: usize },

    #[error("mismatched traces: {0}")]
    TraceMismatch(String),

    #[error("undefined phase at bin {0} (zero magnitude)")]
    UndefinedPhase(usize),

    #[error("bin {bin} outside trace of length {len}")]
    BinOutOfRange { bin: usize, len: usize },

    #[error("series too short or band empty: {0}")]
    ToneBand(String),

    #[error("series has gaps at {0} frame(s)")]
    SeriesGaps(usize),

    #[error("unresolved gratings (merged peaks): {0}")]
    UnresolvedGratings(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("trace archive: {0}")]
    Archive(String),

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    ScenarioParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario invalid:\n{0}")]
    ScenarioInvalid(String),

    #[error("non-finite value in output: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
