use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::allocation::binomial;
use crate::error::{Error, Result};

/// Above this many compositions a `uesa-es` cell needs `heavy = true`.
pub const HEAVY_ES_THRESHOLD: u128 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Esa,
    UesaEs,
    UesaRes,
    UesaResEt,
    FastUesa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Esa,
        Algorithm::UesaEs,
        Algorithm::UesaRes,
        Algorithm::UesaResEt,
        Algorithm::FastUesa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Esa => "esa",
            Algorithm::UesaEs => "uesa-es",
            Algorithm::UesaRes => "uesa-res",
            Algorithm::UesaResEt => "uesa-res-et",
            Algorithm::FastUesa => "fast-uesa",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm `{s}` (expected one of esa, uesa-es, uesa-res, uesa-res-et, fast-uesa)"
                ))
            })
    }
}

/// Everything needed to reproduce a sweep.
///
/// `k = None` means one user per RF chain, i.e. `K = N` in every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nr: Vec<usize>,
    pub n: Vec<usize>,
    pub k: Option<usize>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub q_levels: usize,
    pub paths: usize,
    pub count_max: Option<usize>,
    pub fast_iters: Option<usize>,
    pub gamma: Option<f64>,
    pub out: Option<PathBuf>,
    pub heavy: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            nr: vec![16, 32],
            n: vec![4],
            k: None,
            snr_db: vec![0.0],
            trials: 200,
            seed: 1,
            algorithm: Algorithm::Esa,
            q_levels: 16,
            paths: 10,
            count_max: None,
            fast_iters: None,
            gamma: None,
            out: None,
            heavy: false,
        }
    }
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Sets one key. Keys may use `-` or `_`; list values are comma separated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "nr" => self.nr = parse_list(&key, v)?,
            "n" => self.n = parse_list(&key, v)?,
            "k" => {
                self.k = match v {
                    "" | "auto" => None,
                    _ => Some(parse_one(&key, v)?),
                }
            }
            "snr_db" => self.snr_db = parse_list(&key, v)?,
            "trials" => self.trials = parse_one(&key, v)?,
            "seed" => self.seed = parse_one(&key, v)?,
            "algorithm" => self.algorithm = v.parse()?,
            "q_levels" => self.q_levels = parse_one(&key, v)?,
            "paths" => self.paths = parse_one(&key, v)?,
            "count_max" => self.count_max = Some(parse_one(&key, v)?),
            "fast_iters" => self.fast_iters = Some(parse_one(&key, v)?),
            "gamma" => self.gamma = Some(parse_one(&key, v)?),
            "out" => self.out = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "heavy" => self.heavy = parse_one(&key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file on top of `self`. `#` starts a
    /// comment.
    pub fn merge_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.merge_kv(text)?;
        Ok(cfg)
    }

    /// Resolved configuration in the same `key=value` form `merge_kv` reads.
    pub fn to_kv(&self) -> String {
        let mut lines = vec![
            format!("nr={}", join(&self.nr)),
            format!("n={}", join(&self.n)),
            format!("k={}", self.k.map_or("auto".to_string(), |k| k.to_string())),
            format!("snr_db={}", join(&self.snr_db)),
            format!("trials={}", self.trials),
            format!("seed={}", self.seed),
            format!("algorithm={}", self.algorithm),
            format!("q_levels={}", self.q_levels),
            format!("paths={}", self.paths),
        ];
        if let Some(c) = self.count_max {
            lines.push(format!("count_max={c}"));
        }
        if let Some(i) = self.fast_iters {
            lines.push(format!("fast_iters={i}"));
        }
        if let Some(g) = self.gamma {
            lines.push(format!("gamma={g}"));
        }
        if let Some(o) = &self.out {
            lines.push(format!("out={}", o.display()));
        }
        lines.push(format!("heavy={}", self.heavy));
        lines.join("\n")
    }

    pub fn users_for(&self, n: usize) -> usize {
        self.k.unwrap_or(n)
    }

    /// `(N_r, N, snr_db)` in output order: `N_r` outer, `N` middle, SNR inner.
    pub fn cells(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nr.len() * self.n.len() * self.snr_db.len());
        for &nr in &self.nr {
            for &n in &self.n {
                for &snr in &self.snr_db {
                    out.push((nr, n, snr));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.nr.is_empty() || self.n.is_empty() || self.snr_db.is_empty() {
            return Err(Error::Config("nr, n and snr_db must be non-empty".into()));
        }
        if self.trials == 0 || self.trials > u32::MAX as usize {
            return Err(Error::Config("trials must be between 1 and 2^32 - 1".into()));
        }
        if self.q_levels < 2 {
            return Err(Error::Config("q_levels must be at least 2".into()));
        }
        if self.paths == 0 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if let Some(bad) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("snr_db must be finite, got {bad}")));
        }
        match self.algorithm {
            Algorithm::UesaResEt => match self.count_max {
                None => return Err(Error::Config("uesa-res-et needs count_max".into())),
                Some(0) => return Err(Error::Config("count_max must be at least 1".into())),
                _ => {}
            },
            Algorithm::FastUesa => {
                match self.fast_iters {
                    None => return Err(Error::Config("fast-uesa needs fast_iters".into())),
                    Some(0) => return Err(Error::Config("fast_iters must be at least 1".into())),
                    _ => {}
                }
                match self.gamma {
                    None => return Err(Error::Config("fast-uesa needs gamma".into())),
                    Some(g) if g.is_nan() => return Err(Error::Config("gamma must not be NaN".into())),
                    _ => {}
                }
            }
            _ => {}
        }
        for (nr, n, snr) in self.cells() {
            let k = self.users_for(n);
            let cell = format!("(nr={nr}, n={n}, k={k}, snr_db={snr})");
            if n == 0 || n > nr {
                return Err(Error::Config(format!("cell {cell}: need 1 <= n <= nr")));
            }
            if k > nr {
                return Err(Error::Config(format!("cell {cell}: need k <= nr")));
            }
            if self.algorithm == Algorithm::Esa && nr % n != 0 {
                return Err(Error::UnsupportedConfiguration(format!(
                    "cell {cell}: esa needs n to divide nr"
                )));
            }
            if self.algorithm == Algorithm::UesaEs
                && !self.heavy
                && binomial(nr as u64 - 1, n as u64 - 1) > HEAVY_ES_THRESHOLD
            {
                return Err(Error::Config(format!(
                    "cell {cell}: exhaustive search over {} allocations needs --heavy",
                    binomial(nr as u64 - 1, n as u64 - 1)
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.merge_kv("# comment\nnr = 8, 16\nn=2\nsnr-db=0,12.5\nalgorithm=fast-uesa\nfast_iters=20\ngamma=2\nk=2\n")
            .unwrap();
        assert_eq!(cfg.nr, vec![8, 16]);
        assert_eq!(cfg.snr_db, vec![0.0, 12.5]);
        assert_eq!(cfg.algorithm, Algorithm::FastUesa);
        assert_eq!(cfg.k, Some(2));
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = ExperimentConfig::from_kv("nr=8\n\nbogus\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = ExperimentConfig::from_kv("trials=x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(ExperimentConfig::from_kv("colour=blue").is_err());
    }

    #[test]
    fn required_parameters() {
        let mut cfg = ExperimentConfig {
            algorithm: Algorithm::UesaResEt,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.count_max = Some(30);
        cfg.validate().unwrap();

        let mut cfg = ExperimentConfig {
            algorithm: Algorithm::FastUesa,
            fast_iters: Some(20),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.gamma = Some(2.0);
        cfg.validate().unwrap();

        let cfg = ExperimentConfig {
            trials: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            snr_db: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn esa_divisibility_names_cell() {
        let cfg = ExperimentConfig {
            nr: vec![16, 10],
            n: vec![4],
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::UnsupportedConfiguration(msg)) => assert!(msg.contains("nr=10")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn heavy_gate() {
        let mut cfg = ExperimentConfig {
            nr: vec![64],
            algorithm: Algorithm::UesaEs,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.heavy = true;
        cfg.validate().unwrap();
        cfg.nr = vec![32];
        cfg.heavy = false;
        cfg.validate().unwrap();
    }

    #[test]
    fn cell_order() {
        let cfg = ExperimentConfig {
            nr: vec![8, 16],
            n: vec![2, 4],
            snr_db: vec![0.0, 5.0],
            ..Default::default()
        };
        let cells = cfg.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0], (8, 2, 0.0));
        assert_eq!(cells[1], (8, 2, 5.0));
        assert_eq!(cells[2], (8, 4, 0.0));
        assert_eq!(cells[7], (16, 4, 5.0));
    }
}
