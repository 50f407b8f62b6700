//! Flat `key = value` run configuration.
//!
//! Sources are layered: built-in defaults, then `--config FILE`, then each
//! `--set key=value` in order, then the dedicated flags. Problem parameters
//! use a `param.` prefix (`param.eps1 = 0.05`). Lists are comma separated.
//!
//! | key | default |
//! |-----|---------|
//! | `problem` | `ac1` |
//! | `n` | `64` |
//! | `n_max`, `kappa` | `40`, `50` |
//! | `tau`, `tol` | `1e-3`, `1e-3` |
//! | `n_t` | `max(300, 2n)` |
//! | `snapshot_scheme`, `reference_scheme` | `imex`, `etd` |
//! | `methods` | per subcommand |
//! | `stride` | `1` for `n ≤ 256`, else `5` |
//! | `symmetric` | `false` |
//! | `taus` | `1e-2,1e-3,1e-4` |
//! | `n_test`, `repeats` | `300`, `3` |
//! | `bench_ns`, `bench_k`, `bench_p`, `bench_steps` | `128,512,1024`, `10,10`, `10,10`, `100` |
//! | `seed` | `0` |
//! | `out` | `out` |
//! | `artifacts` | same as `out` |
//! | `override_memory_guard` | `false` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mor2s::full::{default_steps, default_stride, Scheme};
use mor2s::pipeline::Method;
use mor2s::problems::Params;
use mor2s::{Error, Result};

const KEYS: &[&str] = &[
    "problem",
    "n",
    "n_max",
    "kappa",
    "tau",
    "tol",
    "n_t",
    "snapshot_scheme",
    "reference_scheme",
    "methods",
    "stride",
    "symmetric",
    "taus",
    "n_test",
    "repeats",
    "bench_ns",
    "bench_k",
    "bench_p",
    "bench_steps",
    "seed",
    "out",
    "artifacts",
    "override_memory_guard",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub params: Params,
    pub n: usize,
    pub n_max: usize,
    pub kappa: usize,
    pub tau: f64,
    pub tol: f64,
    pub n_t: usize,
    pub snapshot_scheme: Scheme,
    pub reference_scheme: Scheme,
    /// `None` means the subcommand's default set.
    pub methods: Option<Vec<Method>>,
    pub stride: usize,
    pub symmetric: bool,
    pub taus: Vec<f64>,
    pub n_test: usize,
    pub repeats: usize,
    pub bench_ns: Vec<usize>,
    pub bench_k: (usize, usize),
    pub bench_p: (usize, usize),
    pub bench_steps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub artifacts: Option<PathBuf>,
    pub override_memory_guard: bool,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value, got '{line}'", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn list<V: FromStr>(key: &str, v: &str) -> Result<Vec<V>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn pair(key: &str, v: &str) -> Result<(usize, usize)> {
    match list::<usize>(key, v)?.as_slice() {
        [a] => Ok((*a, *a)),
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("{key}: expected one or two integers, got '{v}'"))),
    }
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

/// Command-line layer on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub override_memory_guard: bool,
}

impl RunConfig {
    pub fn load(ov: &Overrides) -> Result<Self> {
        let mut pairs = Vec::new();
        if let Some(path) = &ov.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            pairs.extend(parse_kv(&text, &path.display().to_string())?);
        }
        for s in &ov.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{s}'")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(out) = &ov.out {
            pairs.push(("out".into(), out.display().to_string()));
        }
        if let Some(seed) = ov.seed {
            pairs.push(("seed".into(), seed.to_string()));
        }
        if ov.override_memory_guard {
            pairs.push(("override_memory_guard".into(), "true".into()));
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut params = Params::new();
        for (k, v) in pairs {
            if let Some(p) = k.strip_prefix("param.") {
                params.insert(p.to_string(), num(k, v)?);
            } else if KEYS.contains(&k.as_str()) {
                map.insert(k.as_str(), v.as_str());
            } else {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }
        let get = |k: &str| map.get(k).copied();
        let n: usize = get("n").map(|v| num("n", v)).transpose()?.unwrap_or(64);
        let cfg = RunConfig {
            problem: get("problem").unwrap_or("ac1").to_ascii_lowercase(),
            params,
            n,
            n_max: get("n_max").map(|v| num("n_max", v)).transpose()?.unwrap_or(40),
            kappa: get("kappa").map(|v| num("kappa", v)).transpose()?.unwrap_or(50),
            tau: get("tau").map(|v| num("tau", v)).transpose()?.unwrap_or(1e-3),
            tol: get("tol").map(|v| num("tol", v)).transpose()?.unwrap_or(1e-3),
            n_t: get("n_t").map(|v| num("n_t", v)).transpose()?.unwrap_or_else(|| default_steps(n)),
            snapshot_scheme: get("snapshot_scheme").map(str::parse).transpose()?.unwrap_or(Scheme::Imex),
            reference_scheme: get("reference_scheme").map(str::parse).transpose()?.unwrap_or(Scheme::Etd),
            methods: get("methods").map(|v| list("methods", v)).transpose()?,
            stride: get("stride").map(|v| num("stride", v)).transpose()?.unwrap_or_else(|| default_stride(n)),
            symmetric: get("symmetric").map(|v| flag("symmetric", v)).transpose()?.unwrap_or(false),
            taus: get("taus").map(|v| list("taus", v)).transpose()?.unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]),
            n_test: get("n_test").map(|v| num("n_test", v)).transpose()?.unwrap_or(300),
            repeats: get("repeats").map(|v| num("repeats", v)).transpose()?.unwrap_or(3),
            bench_ns: get("bench_ns").map(|v| list("bench_ns", v)).transpose()?.unwrap_or_else(|| vec![128, 512, 1024]),
            bench_k: get("bench_k").map(|v| pair("bench_k", v)).transpose()?.unwrap_or((10, 10)),
            bench_p: get("bench_p").map(|v| pair("bench_p", v)).transpose()?.unwrap_or((10, 10)),
            bench_steps: get("bench_steps").map(|v| num("bench_steps", v)).transpose()?.unwrap_or(100),
            seed: get("seed").map(|v| num("seed", v)).transpose()?.unwrap_or(0),
            out: PathBuf::from(get("out").unwrap_or("out")),
            artifacts: get("artifacts").map(PathBuf::from),
            override_memory_guard: get("override_memory_guard")
                .map(|v| flag("override_memory_guard", v))
                .transpose()?
                .unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 8 {
            return bad(format!("n must be at least 8, got {}", self.n));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.n_max < 4 {
            return bad(format!("n_max must be at least 4, got {}", self.n_max));
        }
        if self.kappa == 0 || self.n_t == 0 || self.stride == 0 || self.repeats == 0 || self.n_test == 0 {
            return bad("kappa, n_t, stride, repeats and n_test must be positive".into());
        }
        if let Some(&t) = self.taus.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return bad(format!("taus must lie in (0, 1), got {t}"));
        }
        if self.bench_k.0 == 0 || self.bench_k.1 == 0 || self.bench_p.0 == 0 || self.bench_p.1 == 0 {
            return bad("bench_k and bench_p must be positive".into());
        }
        if self.bench_ns.iter().any(|&m| m < 8) {
            return bad("bench_ns entries must be at least 8".into());
        }
        Ok(())
    }

    pub fn methods_or(&self, default: &[Method]) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn artifacts_dir(&self) -> &Path {
        self.artifacts.as_deref().unwrap_or(&self.out)
    }

    /// Every resolved key, one `# key = value` line each, in a fixed order.
    pub fn echo(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let methods = match &self.methods {
            Some(m) => join(&m.iter().map(|m| m.to_string()).collect::<Vec<_>>()),
            None => "default".into(),
        };
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "# {k} = {v}");
        };
        line("problem", self.problem.clone());
        for (k, v) in &self.params {
            line(&format!("param.{k}"), format!("{v:?}"));
        }
        line("n", self.n.to_string());
        line("n_max", self.n_max.to_string());
        line("kappa", self.kappa.to_string());
        line("tau", format!("{:?}", self.tau));
        line("tol", format!("{:?}", self.tol));
        line("n_t", self.n_t.to_string());
        line("snapshot_scheme", self.snapshot_scheme.to_string());
        line("reference_scheme", self.reference_scheme.to_string());
        line("methods", methods);
        line("stride", self.stride.to_string());
        line("symmetric", self.symmetric.to_string());
        line("taus", join(&self.taus.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>()));
        line("n_test", self.n_test.to_string());
        line("repeats", self.repeats.to_string());
        line("bench_ns", join(&self.bench_ns.iter().map(|n| n.to_string()).collect::<Vec<_>>()));
        line("bench_k", format!("{},{}", self.bench_k.0, self.bench_k.1));
        line("bench_p", format!("{},{}", self.bench_p.0, self.bench_p.1));
        line("bench_steps", self.bench_steps.to_string());
        line("seed", self.seed.to_string());
        line("out", self.out.display().to_string());
        line("artifacts", self.artifacts_dir().display().to_string());
        line("override_memory_guard", self.override_memory_guard.to_string());
        s
    }

    /// Identifies the full-order problem an artifact set was built for.
    pub fn problem_hash(&self) -> String {
        let mut key = format!("{};{};", self.problem, self.n);
        for (k, v) in &self.params {
            let _ = write!(key, "{k}={v:?};");
        }
        // FNV-1a, 64 bit: stable across builds, unlike the std hasher.
        let h = key.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
        format!("{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(s: &str) -> Vec<(String, String)> {
        parse_kv(s, "test").unwrap()
    }

    #[test]
    fn defaults_follow_n() {
        let c = RunConfig::from_pairs(&pairs("n = 512")).unwrap();
        assert_eq!(c.n_t, 1024);
        assert_eq!(c.stride, 5);
        let c = RunConfig::from_pairs(&[]).unwrap();
        assert_eq!((c.n, c.n_t, c.stride), (64, 300, 1));
    }

    #[test]
    fn rejects_bad_values() {
        for s in ["n = 4", "tau = 1", "tau = 0", "n_max = 3", "bogus = 1", "methods = svd", "n = x"] {
            assert!(matches!(RunConfig::from_pairs(&pairs(s)), Err(Error::Config(_))), "{s}");
        }
        assert!(parse_kv("no equals sign", "t").is_err());
    }

    #[test]
    fn params_and_lists() {
        let c = RunConfig::from_pairs(&pairs(
            "problem = RDC # comment\nparam.eps1 = 0.05\nmethods = dynamic, vector\nbench_k = 7\ntaus=0.1,0.01",
        ))
        .unwrap();
        assert_eq!(c.problem, "rdc");
        assert_eq!(c.params["eps1"], 0.05);
        assert_eq!(c.methods, Some(vec![Method::Dynamic, Method::Vector]));
        assert_eq!(c.bench_k, (7, 7));
        assert_eq!(c.taus, vec![0.1, 0.01]);
    }

    #[test]
    fn later_layers_win_and_echo_is_stable() {
        let a = RunConfig::from_pairs(&pairs("n = 16\nn = 32")).unwrap();
        assert_eq!(a.n, 32);
        assert_eq!(a.echo(), a.clone().echo());
        assert!(a.echo().contains("# n = 32\n"));
    }

    #[test]
    fn hash_depends_on_problem_only() {
        let a = RunConfig::from_pairs(&pairs("n = 16")).unwrap();
        let b = RunConfig::from_pairs(&pairs("n = 16\ntau = 0.01")).unwrap();
        let c = RunConfig::from_pairs(&pairs("n = 16\nparam.eps1 = 0.02")).unwrap();
        assert_eq!(a.problem_hash(), b.problem_hash());
        assert_ne!(a.problem_hash(), c.problem_hash());
    }
}
