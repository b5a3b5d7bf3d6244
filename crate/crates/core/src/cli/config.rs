//! Flat `key = value` run configuration with flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{EnergyParams, Grid};

/// Where a raw setting came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "a",
    "b",
    "n",
    "s",
    "m",
    "alpha",
    "h",
    "T",
    "tol",
    "window",
    "n_images",
    "max_iter",
    "quad_order",
    "seed",
    "output_dir",
    "datum",
    "file",
    "lambda2_est",
    "snapshots",
    "n_samples",
    "trials",
    "check_samples",
    "plot",
    "cache_dir",
];

#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    /// Parses config text; `path` only labels error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: idx + 1,
            };
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config(format!("{origin}: expected `key = value`, got `{body}`")));
            };
            raw.set(key.trim(), value.trim(), origin)?;
        }
        Ok(raw)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: cannot read config: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("{origin}: unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), (value.to_string(), origin));
        Ok(())
    }

    /// Later settings win.
    pub fn merge(&mut self, other: RawConfig) {
        self.entries.extend(other.entries);
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, origin)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("{origin}: invalid value `{v}` for `{key}`: {e}"))),
        }
    }

    fn origin(&self, key: &str) -> String {
        self.entries
            .get(key)
            .map(|(_, o)| o.to_string())
            .unwrap_or_else(|| "defaults".into())
    }
}

/// Initial datum presets. `bump_mix` adds `amplitude exp(-((x - center) / width)^2)`
/// to the stationary profile `w^(q-1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DatumSpec {
    Ground,
    MinusGround,
    BumpMix { amplitude: f64, center: f64, width: f64 },
    Random { seed: u64, scale: f64 },
    File(PathBuf),
}

impl fmt::Display for DatumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatumSpec::Ground => write!(f, "ground"),
            DatumSpec::MinusGround => write!(f, "minus_ground"),
            DatumSpec::BumpMix { amplitude, center, width } => write!(f, "bump_mix({amplitude}, {center}, {width})"),
            DatumSpec::Random { seed, scale } => write!(f, "random({seed}, {scale})"),
            DatumSpec::File(p) => write!(f, "file({})", p.display()),
        }
    }
}

impl Serialize for DatumSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl std::str::FromStr for DatumSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (name, args) = match s.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| format!("missing `)` in `{s}`"))?;
                let args = inner.split(',').map(|a| a.trim().to_string()).collect::<Vec<_>>();
                (name.trim(), args)
            }
            None => (s, Vec::new()),
        };
        let nums = |count: usize| -> std::result::Result<Vec<f64>, String> {
            if args.len() != count {
                return Err(format!("`{name}` takes {count} arguments, got {}", args.len()));
            }
            args.iter()
                .map(|a| a.parse::<f64>().map_err(|e| format!("bad number `{a}`: {e}")))
                .collect()
        };
        match name {
            "ground" if args.is_empty() => Ok(DatumSpec::Ground),
            "minus_ground" if args.is_empty() => Ok(DatumSpec::MinusGround),
            "bump_mix" => {
                let v = nums(3)?;
                if !(v[2] > 0.0) {
                    return Err("bump width must be positive".into());
                }
                Ok(DatumSpec::BumpMix {
                    amplitude: v[0],
                    center: v[1],
                    width: v[2],
                })
            }
            "random" => {
                if args.len() != 2 {
                    return Err(format!("`random` takes 2 arguments, got {}", args.len()));
                }
                let seed = args[0].parse::<u64>().map_err(|e| format!("bad seed `{}`: {e}", args[0]))?;
                let scale = args[1].parse::<f64>().map_err(|e| format!("bad scale `{}`: {e}", args[1]))?;
                Ok(DatumSpec::Random { seed, scale })
            }
            "file" if args.len() == 1 => Ok(DatumSpec::File(PathBuf::from(&args[0]))),
            _ => Err(format!("unknown datum `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub s: f64,
    pub m: f64,
    pub alpha: f64,
    pub h: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub tol: f64,
    pub window: f64,
    pub n_images: usize,
    pub max_iter: usize,
    pub quad_order: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub datum: DatumSpec,
    pub lambda2_est: Option<f64>,
    pub snapshots: Vec<f64>,
    pub n_samples: usize,
    pub trials: usize,
    pub check_samples: usize,
    pub plot: bool,
    pub cache_dir: Option<PathBuf>,
}

fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number `{}`: {e}", t.trim())))
        .collect()
}

impl RunConfig {
    /// Resolves defaults and enforces every parameter precondition.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let bad = |key: &str, msg: String| Error::Config(format!("{}: {msg}", raw.origin(key)));
        let a = raw.get("a")?.unwrap_or(-1.0);
        let b = raw.get("b")?.unwrap_or(1.0);
        let n = raw.get("n")?.unwrap_or(256);
        let s: f64 = raw.get("s")?.unwrap_or(0.5);
        let m: f64 = raw.get("m")?.unwrap_or(2.0);
        Grid::new(a, b, n).map_err(|e| bad(if raw.entries.contains_key("n") { "n" } else { "a" }, e.to_string()))?;
        if !(s > 0.0 && s < 1.0) {
            return Err(bad("s", format!("s must lie in (0, 1), got {s}")));
        }
        if !(m > 1.0 && m.is_finite()) {
            return Err(bad("m", format!("m must exceed 1, got {m}")));
        }
        let alpha = raw.get("alpha")?.unwrap_or(1.0 / (m - 1.0));
        EnergyParams::new(s, m, alpha).map_err(|e| bad("alpha", e.to_string()))?;
        let h = raw.get("h")?.unwrap_or(0.05f64.min(0.5 / alpha));
        if !(h > 0.0) {
            return Err(bad("h", format!("time step must be positive, got {h}")));
        }
        if h * alpha >= 1.0 {
            return Err(bad("h", format!("h * alpha = {} must be < 1", h * alpha)));
        }
        let horizon: f64 = raw.get("T")?.unwrap_or(15.0);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(bad("T", format!("horizon must be positive, got {horizon}")));
        }
        let tol = raw.get("tol")?.unwrap_or(crate::asymptotics::DEFAULT_TOL);
        if !(tol > 0.0) {
            return Err(bad("tol", format!("tolerance must be positive, got {tol}")));
        }
        let window = raw
            .get("window")?
            .unwrap_or(crate::asymptotics::DEFAULT_WINDOW_FRACTION * horizon);
        if !(window >= 0.0 && window <= horizon) {
            return Err(bad("window", format!("window must lie in [0, T], got {window}")));
        }
        let n_images = raw.get("n_images")?.unwrap_or(crate::landscape::DEFAULT_IMAGES);
        if n_images < crate::landscape::MIN_IMAGES {
            return Err(bad("n_images", format!("need at least {} images", crate::landscape::MIN_IMAGES)));
        }
        let max_iter = raw.get("max_iter")?.unwrap_or(crate::landscape::DEFAULT_MAX_ITER);
        let quad_order = raw.get("quad_order")?.unwrap_or(crate::frlap::DEFAULT_QUAD_ORDER);
        if quad_order < 4 {
            return Err(bad("quad_order", format!("quadrature order must be at least 4, got {quad_order}")));
        }
        let seed = raw.get("seed")?.unwrap_or(0);
        let output_dir = raw.get::<String>("output_dir")?.map(PathBuf::from).unwrap_or_else(|| "fpme-out".into());
        let mut datum = match raw.get::<String>("datum")? {
            Some(text) => text.parse::<DatumSpec>().map_err(|e| bad("datum", e))?,
            None => DatumSpec::BumpMix {
                amplitude: -0.4,
                center: 0.6,
                width: 0.15,
            },
        };
        if let Some(path) = raw.get::<String>("file")? {
            datum = DatumSpec::File(PathBuf::from(path));
        }
        let lambda2_est = raw.get("lambda2_est")?;
        let snapshots = match raw.get::<String>("snapshots")? {
            Some(text) => parse_list(&text).map_err(|e| bad("snapshots", e))?,
            None => Vec::new(),
        };
        if let Some(t) = snapshots.iter().find(|&&t| !(t >= 0.0 && t <= horizon)) {
            return Err(bad("snapshots", format!("snapshot time {t} outside [0, T]")));
        }
        let n_samples = raw.get("n_samples")?.unwrap_or(101);
        if n_samples < crate::landscape::MIN_SAMPLES {
            return Err(bad("n_samples", format!("need at least {} samples", crate::landscape::MIN_SAMPLES)));
        }
        let trials = raw.get("trials")?.unwrap_or(5);
        if trials < 2 {
            return Err(bad("trials", "need at least two uniqueness trials".into()));
        }
        let check_samples = raw.get("check_samples")?.unwrap_or(100_000);
        let plot = raw.get("plot")?.unwrap_or(true);
        let cache_dir = raw.get::<String>("cache_dir")?.map(PathBuf::from);
        Ok(RunConfig {
            a,
            b,
            n,
            s,
            m,
            alpha,
            h,
            horizon,
            tol,
            window,
            n_images,
            max_iter,
            quad_order,
            seed,
            output_dir,
            datum,
            lambda2_est,
            snapshots,
            n_samples,
            trials,
            check_samples,
            plot,
            cache_dir,
        })
    }

    /// Reads `file` if it exists, then applies `overrides` on top.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut raw = match file {
            Some(p) if p.exists() => RawConfig::read(p)?,
            _ => RawConfig::default(),
        };
        let mut flags = RawConfig::default();
        for (k, v) in overrides {
            flags.set(k, v, Origin::Flag)?;
        }
        raw.merge(flags);
        Self::from_raw(&raw)
    }

    pub fn params(&self) -> Result<EnergyParams> {
        EnergyParams::new(self.s, self.m, self.alpha)
    }
}
