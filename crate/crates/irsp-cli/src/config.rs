//! TOML run configuration. The grammar is documented in the README.

use std::path::{Path, PathBuf};

use irsp::network::{mean_field, parse_network_csv, validate_network, NetworkError, WeightedNetwork};
use irsp::schedules::{make_r, make_weights, RSchedule, ScheduleError, WeightFamily, WeightSchedule};
use irsp::simulator::InitMode;
use irsp::asymptotics::Params;
use irsp::verify::{ProxyCorrection, Tolerances};
use irsp::nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable overriding the output directory of every command.
pub const OUT_DIR_ENV: &str = "IRSP_OUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    MeanField { agents: usize, alpha: f64 },
    /// CSV file, relative paths resolved against the config's directory.
    File { path: String },
    /// Rows of `W` written out in the config.
    Inline { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reinforcement {
    pub c: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Every agent starts at `value`.
    Constant { value: f64 },
    Fixed { z0: Vec<f64> },
    UniformIid,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Constant { value: 0.5 }
    }
}

impl InitSpec {
    pub fn to_mode(&self, agents: usize) -> InitMode {
        match self {
            InitSpec::Constant { value } => InitMode::Fixed { z0: vec![*value; agents] },
            InitSpec::Fixed { z0 } => InitMode::Fixed { z0: z0.clone() },
            InitSpec::UniformIid => InitMode::UniformIid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub horizon: u64,
    /// Recorded steps; empty means the horizon only.
    pub checkpoints: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    pub init: InitSpec,
    pub output_dir: String,
    /// Record every step instead of the checkpoints.
    pub history: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            checkpoints: Vec::new(),
            replicas: 1,
            seed: 0,
            init: InitSpec::default(),
            output_dir: "irsp-out".into(),
            history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    /// Reference horizon for the limit proxy; defaults to four times the horizon.
    pub n_ref: Option<u64>,
    pub proxy: ProxyCorrection,
    pub rate_horizons: Vec<u64>,
    pub rate_tolerance: f64,
    pub sync_early: u64,
    pub allow_boundary: bool,
    pub tolerances: Tolerances,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            n_ref: None,
            proxy: ProxyCorrection::Linear,
            rate_horizons: Vec::new(),
            rate_tolerance: 0.05,
            sync_early: 1000,
            allow_boundary: false,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSource,
    pub reinforcement: Reinforcement,
    pub weights: WeightFamily,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
}

/// Parse and check everything that does not need the file system.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text)?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<(RunConfig, PathBuf), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((parse_config(&text)?, base))
}

impl RunConfig {
    fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.schedules()?;
        if let NetworkSource::MeanField { agents, alpha } = self.network {
            if agents < 2 || !(alpha > 0.0 && alpha <= 1.0) {
                return bad(format!("mean_field needs agents >= 2 and alpha in (0, 1], got {agents}, {alpha}"));
            }
        }
        let run = &self.run;
        if run.horizon == 0 {
            return bad("run.horizon must be positive".into());
        }
        if run.replicas == 0 {
            return bad("run.replicas must be positive".into());
        }
        let cps = &run.checkpoints;
        if cps.windows(2).any(|w| w[0] >= w[1]) || cps.first().is_some_and(|&c| c == 0) || cps.last().is_some_and(|&c| c > run.horizon) {
            return bad(format!("run.checkpoints must increase strictly within [1, {}]", run.horizon));
        }
        match &run.init {
            InitSpec::Constant { value } if !(0.0..=1.0).contains(value) => return bad(format!("init value {value} outside [0, 1]")),
            InitSpec::Fixed { z0 } if z0.iter().any(|z| !(0.0..=1.0).contains(z)) => return bad("init z0 outside [0, 1]".into()),
            _ => {}
        }
        let v = &self.verify;
        if let Some(n_ref) = v.n_ref {
            if n_ref <= run.horizon {
                return bad(format!("verify.n_ref = {n_ref} must exceed run.horizon = {}", run.horizon));
            }
        }
        if v.rate_horizons.contains(&0) || !(v.rate_tolerance > 0.0) || v.sync_early == 0 {
            return bad("verify.rate_horizons, rate_tolerance and sync_early must be positive".into());
        }
        Ok(())
    }

    pub fn schedules(&self) -> Result<(RSchedule, WeightSchedule), ConfigError> {
        Ok((make_r(self.reinforcement.c, self.reinforcement.gamma)?, make_weights(self.weights)?))
    }

    pub fn params(&self) -> Result<Params, ConfigError> {
        let (r, w) = self.schedules()?;
        Ok(Params::from_schedules(&r, &w))
    }

    pub fn network(&self, base: &Path) -> Result<WeightedNetwork, ConfigError> {
        Ok(match &self.network {
            NetworkSource::MeanField { agents, alpha } => mean_field(*agents, *alpha)?,
            NetworkSource::File { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full).map_err(|source| ConfigError::Io { path: full, source })?;
                validate_network(parse_network_csv(&text)?)?
            }
            NetworkSource::Inline { rows } => validate_network(rows_to_matrix(rows)?)?,
        })
    }

    pub fn mean_field_alpha(&self) -> Option<f64> {
        match self.network {
            NetworkSource::MeanField { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        if self.run.history {
            (1..=self.run.horizon).collect()
        } else if self.run.checkpoints.is_empty() {
            vec![self.run.horizon]
        } else {
            self.run.checkpoints.clone()
        }
    }

    pub fn n_ref(&self) -> u64 {
        self.verify.n_ref.unwrap_or(4 * self.run.horizon)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// SHA-256 of the canonical JSON rendering, in hex.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("configs always serialize");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Output directory: the environment override, else the flag, else the config.
pub fn output_dir(flag: Option<&Path>, cfg: Option<&RunConfig>) -> PathBuf {
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.map(|c| PathBuf::from(&c.run.output_dir)))
        .unwrap_or_else(|| PathBuf::from("irsp-out"))
}

/// Square matrix from rows, rejecting ragged input.
fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, NetworkError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(NetworkError::NotSquare { rows: n, cols: rows.first().map_or(0, Vec::len) });
    }
    Ok(DMatrix::from_fn(n, n, |h, j| rows[h][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[network]
kind = "mean_field"
agents = 3
alpha = 0.5

[reinforcement]
c = 1.0
gamma = 0.9

[weights]
family = "exp_sum"
b = 5.0
delta = 0.4

[run]
horizon = 1000
checkpoints = [10, 1000]
replicas = 4
seed = 7
init = { mode = "uniform_iid" }

[verify]
rate_horizons = [10, 30]
tolerances = { ks = 0.05 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = parse_config(EXAMPLE).unwrap();
        assert_eq!(cfg.weights, WeightFamily::ExpSum { b: 5.0, delta: 0.4 });
        assert_eq!(cfg.verify.tolerances.ks, 0.05);
        assert_eq!(cfg.verify.tolerances.mean, 0.05);
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.fingerprint(), cfg.fingerprint());
        let p = cfg.params().unwrap();
        assert!((p.nu - 0.6).abs() < 1e-15 && (p.q - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = parse_config(EXAMPLE).unwrap();
        let b = parse_config(&EXAMPLE.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        for (from, to) in [
            ("gamma = 0.9", "gamma = 0.4"),
            ("agents = 3", "agents = 1"),
            ("checkpoints = [10, 1000]", "checkpoints = [10, 2000]"),
            ("replicas = 4", "replicas = 0"),
            ("seed = 7", "seed = 7\nbogus = 1"),
            ("delta = 0.4", "delta = 0.7"),
        ] {
            assert!(parse_config(&EXAMPLE.replace(from, to)).is_err(), "{to}");
        }
        assert!(matches!(parse_config("network = 3"), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn inline_network() {
        let text = EXAMPLE.replace("kind = \"mean_field\"\nagents = 3\nalpha = 0.5", "kind = \"inline\"\nrows = [[0.5, 0.5], [0.5, 0.5]]");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.network(Path::new(".")).unwrap().n_agents(), 2);
        let ragged = text.replace("[[0.5, 0.5], [0.5, 0.5]]", "[[0.5], [0.5, 0.5]]");
        assert!(parse_config(&ragged).unwrap().network(Path::new(".")).is_err());
    }
}
