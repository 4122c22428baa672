//! Resolution of flags and config-file keys into one run description.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use thbsgs::ckks::CkksParams;
use thbsgs::config::{parse_usize_list, ConfigFile};
use thbsgs::costmodel::{Convention, HeParams, NamedSet, Packing, ParallelismConfig};
use thbsgs::helt::{LtPlan, Method};

/// Largest ring dimension encrypted runs accept without `--allow-large`.
pub const DEFAULT_MAX_LOG_N: u32 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSel {
    All,
    One(Method),
}

impl FromStr for MethodSel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(MethodSel::All);
        }
        s.parse().map(MethodSel::One).map_err(|e| format!("{e}"))
    }
}

impl MethodSel {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSel::All => Method::ALL.to_vec(),
            MethodSel::One(m) => vec![m],
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run file with `key = value` lines and `[section]` headers.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Named set (toy, set-a, set-b, set-c) or `ring_dim,q_count,alpha[,w]`.
    #[arg(long, global = true)]
    pub params: Option<String>,
    /// diagonal, bsgs, dh-bsgs, th-bsgs or all.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// LT dimension.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated factors, e.g. `4,4,4`.
    #[arg(long, global = true)]
    pub factors: Option<String>,
    /// `m1,m2,m3,m4,m5,m6,l1,l2,l3,l4,l5`.
    #[arg(long, global = true)]
    pub parallelism: Option<String>,
    /// Memory banks per limb.
    #[arg(long, global = true)]
    pub dp: Option<usize>,
    /// RNG seed for keys, vectors and matrices (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Largest accepted slotwise error against the plaintext product.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// On-chip budget for the parallelism search.
    #[arg(long, global = true)]
    pub budget_bytes: Option<f64>,
    /// json (default) or csv.
    #[arg(long, global = true)]
    pub format: Option<String>,
    /// Output path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Limb storage for byte counts: bit-packed or byte-aligned.
    #[arg(long, global = true)]
    pub packing: Option<String>,
    /// Permit encrypted runs above N = 2^13.
    #[arg(long, global = true)]
    pub allow_large: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "params",
    "method",
    "n",
    "factors",
    "parallelism",
    "dp",
    "seed",
    "tolerance",
    "pairwise-tolerance",
    "budget-bytes",
    "format",
    "out",
    "packing",
    "convention",
    "trials",
    "allow-large",
    "compare",
    "identity",
    "strict",
    "compute",
];

/// Settings of one command after merging flags, config and defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub set: Option<NamedSet>,
    pub params: HeParams,
    pub method: MethodSel,
    pub factors: Option<Vec<usize>>,
    pub parallelism: Option<ParallelismConfig>,
    pub dp: Option<usize>,
    pub seed: u64,
    pub tolerance: f64,
    pub budget_bytes: Option<f64>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub packing: Packing,
    pub allow_large: bool,
    pub file: ConfigFile,
    pub section: &'static str,
}

fn parse_packing(s: &str) -> anyhow::Result<Packing> {
    match s {
        "bit-packed" => Ok(Packing::BitPacked),
        "byte-aligned" => Ok(Packing::ByteAligned),
        _ => bail!("unknown packing {s:?}; expected bit-packed or byte-aligned"),
    }
}

/// A named set, or `ring_dim,q_count,alpha[,w]` with `w` defaulting to 54.
pub fn parse_params(s: &str, n: Option<usize>) -> anyhow::Result<(Option<NamedSet>, HeParams)> {
    if let Ok(set) = s.parse::<NamedSet>() {
        let p = set.params();
        let p = match n {
            Some(n) => p.with_n(n)?,
            None => p,
        };
        return Ok((Some(set), p));
    }
    let v = parse_usize_list(s).with_context(|| format!("unknown parameter set {s:?}"))?;
    let (ring_dim, q, alpha, w) = match v[..] {
        [a, b, c] => (a, b, c, 54),
        [a, b, c, d] => (a, b, c, d),
        _ => bail!("inline parameters take ring_dim,q_count,alpha[,w], got {s:?}"),
    };
    let w = u32::try_from(w).context("w out of range")?;
    let n = n.unwrap_or(64.min(ring_dim / 2).max(1));
    Ok((None, HeParams::new(ring_dim, q, alpha, w, n)?))
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, section: &'static str) -> anyhow::Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ConfigFile::parse(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => ConfigFile::default(),
        };
        for s in file.sections() {
            for (k, _) in file.keys(s) {
                if !KNOWN_KEYS.contains(&k) {
                    bail!("unknown key {k:?} in config section [{s}]");
                }
            }
        }
        let get = |flag: &Option<String>, key: &str| -> Option<String> {
            flag.clone()
                .or_else(|| file.lookup(section, key).map(str::to_string))
        };
        let num = |key: &str| -> anyhow::Result<Option<f64>> { Ok(file.parsed(section, key)?) };

        let n = match args.n {
            Some(n) => Some(n),
            None => file.parsed(section, "n")?,
        };
        let params_name = get(&args.params, "params").unwrap_or_else(|| "toy".into());
        let (set, params) = parse_params(&params_name, n)?;
        let method = match get(&args.method, "method") {
            Some(m) => m.parse().map_err(anyhow::Error::msg)?,
            None => MethodSel::One(Method::ThBsgs),
        };
        let factors = get(&args.factors, "factors")
            .map(|s| parse_usize_list(&s))
            .transpose()?;
        let parallelism = get(&args.parallelism, "parallelism")
            .map(|s| ParallelismConfig::parse_list(&s))
            .transpose()?;
        let dp = match args.dp {
            Some(d) => Some(d),
            None => file.parsed(section, "dp")?,
        };
        let seed = match args.seed {
            Some(s) => s,
            None => file.parsed(section, "seed")?.unwrap_or(0),
        };
        let tolerance = match args.tolerance {
            Some(t) => t,
            None => num("tolerance")?.unwrap_or(1e-3),
        };
        if !(tolerance > 0.0) {
            bail!("tolerance must be positive");
        }
        let budget_bytes = match args.budget_bytes {
            Some(b) => Some(b),
            None => num("budget-bytes")?,
        };
        let format = match get(&args.format, "format") {
            Some(f) => f.parse().map_err(anyhow::Error::msg)?,
            None => Format::Json,
        };
        let out = args
            .out
            .clone()
            .or_else(|| file.lookup(section, "out").map(PathBuf::from));
        let packing = match get(&args.packing, "packing") {
            Some(p) => parse_packing(&p)?,
            None => Packing::BitPacked,
        };
        let allow_large = args.allow_large || file.parsed(section, "allow-large")?.unwrap_or(false);
        Ok(RunConfig {
            set,
            params,
            method,
            factors,
            parallelism,
            dp,
            seed,
            tolerance,
            budget_bytes,
            format,
            out,
            packing,
            allow_large,
            file,
            section,
        })
    }

    /// A command-specific boolean: the flag, else the config key.
    pub fn flag(&self, flag: bool, key: &str) -> anyhow::Result<bool> {
        Ok(flag || self.file.parsed(self.section, key)?.unwrap_or(false))
    }

    pub fn value<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.file.parsed(self.section, key)?),
        }
    }

    pub fn convention(&self) -> anyhow::Result<Convention> {
        Ok(self.value(None, "convention")?.unwrap_or(Convention::Algorithm))
    }

    pub fn single_method(&self) -> anyhow::Result<Method> {
        match self.method {
            MethodSel::One(m) => Ok(m),
            MethodSel::All => bail!("this command takes a single --method"),
        }
    }

    /// The plan of `method`: explicit factors, the named set's datapath
    /// factors when they fit, or a balanced split of `n`.
    pub fn plan(&self, method: Method) -> anyhow::Result<LtPlan> {
        let n = self.params.n;
        if let Some(f) = &self.factors {
            return Ok(LtPlan::new(method, n, f)?);
        }
        if method == Method::ThBsgs {
            if let Some(set) = self.set {
                let f = set.factors();
                if f.iter().product::<usize>() == n {
                    return Ok(LtPlan::new(method, n, &f)?);
                }
            }
        }
        Ok(LtPlan::new(method, n, &balanced(n, method.arity()))?)
    }

    pub fn plans(&self) -> anyhow::Result<Vec<LtPlan>> {
        if self.factors.is_some() && self.method == MethodSel::All {
            bail!("--factors needs a single --method");
        }
        self.method.methods().into_iter().map(|m| self.plan(m)).collect()
    }

    /// Parallelism: explicit, else searched under `budget_bytes`, else the
    /// named set's, else all ones. `dp` overrides in every case.
    pub fn parallelism(&self, plan: &LtPlan) -> anyhow::Result<ParallelismConfig> {
        let dp = self.dp.unwrap_or_else(|| self.set.map_or(2, |s| s.parallelism().dp));
        let mut c = match (&self.parallelism, self.budget_bytes) {
            (Some(c), _) => *c,
            (None, Some(b)) => {
                thbsgs::costmodel::search_parallelism(&self.params, plan, b, self.packing, dp)?
            }
            (None, None) => match self.set {
                Some(s) if s.factors()[..] == plan.factors()[..] && s.params().n == self.params.n => {
                    s.parallelism()
                }
                _ => ParallelismConfig::ones(),
            },
        };
        c.dp = dp;
        c.validate(&self.params, plan)?;
        Ok(c)
    }

    /// Encryption parameters for toy-feasible runs.
    pub fn ckks_params(&self) -> anyhow::Result<CkksParams> {
        let log_n = self.params.log_n();
        if log_n > DEFAULT_MAX_LOG_N && !self.allow_large {
            bail!(
                "N = 2^{log_n} exceeds the 2^{DEFAULT_MAX_LOG_N} guard for encrypted runs; pass --allow-large"
            );
        }
        let w = self.params.w;
        if w < 30 {
            bail!("encrypted runs need primes of at least 30 bits, got {w}");
        }
        Ok(CkksParams {
            log_n,
            q_count: self.params.q_count,
            alpha: self.params.alpha,
            bits: w,
            scale: 2f64.powi(40.min(w as i32 - 14)),
            sigma: 3.2,
        })
    }
}

/// Powers-of-two split of `n` into `parts` factors, larger ones first.
pub fn balanced(n: usize, parts: usize) -> Vec<usize> {
    let log = n.trailing_zeros() as usize;
    (0..parts)
        .map(|i| 1usize << (log / parts + usize::from(i < log % parts)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_splits() {
        assert_eq!(balanced(64, 3), vec![4, 4, 4]);
        assert_eq!(balanced(128, 3), vec![8, 4, 4]);
        assert_eq!(balanced(64, 2), vec![8, 8]);
        assert_eq!(balanced(64, 1), vec![64]);
    }

    #[test]
    fn inline_params() {
        let (set, p) = parse_params("1024,5,5", None).unwrap();
        assert!(set.is_none());
        assert_eq!((p.ring_dim, p.q_count, p.alpha, p.w, p.n), (1024, 5, 5, 54, 64));
        assert!(parse_params("1024,5", None).is_err());
        assert!(parse_params("set-z", None).is_err());
    }
}
