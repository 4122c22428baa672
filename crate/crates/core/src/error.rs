use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("not enough {bits}-bit primes congruent to 1 mod {modulus} (wanted {wanted}, found {found})")]
    NotEnoughPrimes {
        bits: u32,
        modulus: u64,
        wanted: usize,
        found: usize,
    },
    #[error("{0} has no inverse modulo {1}")]
    NoInverse(u64, u64),
    #[error("invalid modulus {q}: {reason}")]
    InvalidModulus { q: u64, reason: &'static str },
    #[error("invalid ring dimension {0}: must be a power of two >= 2")]
    InvalidRingDim(usize),
    #[error("domain mismatch: expected {expected:?}, found {found:?}")]
    DomainMismatch {
        expected: crate::ring::Domain,
        found: crate::ring::Domain,
    },
    #[error("modulus mismatch: {0} vs {1}")]
    ModulusMismatch(u64, u64),
    #[error("ring dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("source and target bases share modulus {0}")]
    BasisOverlap(u64),
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("cannot rescale a polynomial with a single limb")]
    SingleLimb,
    #[error("level mismatch: {0} vs {1}")]
    LevelMismatch(usize, usize),
    #[error("no {kind} rotation key for offset {offset}")]
    MissingKey { offset: usize, kind: &'static str },
    #[error("expected {expected} decomposition digits, found {found}")]
    DigitCountMismatch { expected: usize, found: usize },
    #[error("value {0} does not fit the modulus margin")]
    Overflow(f64),
    #[error("matrix dimension {n} exceeds the slot count {slots}")]
    DimensionTooLarge { n: usize, slots: usize },
    #[error("plan mismatch: {0}")]
    PlanMismatch(String),
    #[error("bad factors: {0}")]
    BadFactors(String),
    #[error("configuration out of range: {0}")]
    ConfigOutOfRange(String),
    #[error("no parallelism configuration fits in {0} bytes of on-chip memory")]
    Infeasible(u64),
    #[error("phase {phase} needs {needed} on-chip limbs but only {declared} are declared")]
    OnchipOverflow {
        phase: usize,
        needed: u64,
        declared: u64,
    },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },
}
