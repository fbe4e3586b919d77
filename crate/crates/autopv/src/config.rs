//! Run configuration: a plain-text `key = value` format with dotted
//! section prefixes (`search.t_max = 40`, `pin.cps = mlp`). Defaults mirror
//! the reference experiment settings.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{NoiseSpec, TaskKind};
use crate::search_space::SpaceSpec;
use crate::searcher::SearchConfig;

/// Allowed forecast horizons.
pub const HORIZONS: [usize; 6] = [12, 24, 48, 72, 168, 336];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`: {why}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        why: String,
    },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("`data_path` and `synth.days` are mutually exclusive")]
    ConflictingData,
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Where the input series comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Minute-resolution CSV fed through the full cleaning pipeline.
    Csv(PathBuf),
    /// Generated hourly frame; skips cleaning and downsampling.
    Synth { days: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataSource,
    pub task_kind: TaskKind,
    pub t_p: usize,
    pub t_s: usize,
    pub search: SearchConfig,
    pub noise: NoiseSpec,
    pub max_epochs: usize,
    pub patience: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub space: SpaceSpec,
}

fn parse_num<T: std::str::FromStr>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        why: format!("not a valid {}", std::any::type_name::<T>()),
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut data_path: Option<PathBuf> = None;
        let mut synth_days: Option<usize> = None;
        let mut synth_seed: Option<u64> = None;
        let mut task_kind = TaskKind::Task1;
        let mut t_p: Option<usize> = None;
        let mut t_s = 96usize;
        let mut search = SearchConfig::default();
        let mut noise = NoiseSpec::default();
        let mut max_epochs = 50usize;
        let mut patience = 3usize;
        let mut output_dir: Option<PathBuf> = None;
        let mut seed = 0u64;
        let mut space = SpaceSpec::full();

        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line: n,
                    text: line.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |why: &str| ConfigError::BadValue {
                line: n,
                key: key.to_string(),
                value: value.to_string(),
                why: why.to_string(),
            };
            match key {
                "data_path" => data_path = Some(PathBuf::from(value)),
                "synth.days" => synth_days = Some(parse_num(n, key, value)?),
                "synth.seed" => synth_seed = Some(parse_num(n, key, value)?),
                "task" => {
                    task_kind = match value {
                        "task1" => TaskKind::Task1,
                        "task2" => TaskKind::Task2,
                        _ => return Err(bad("expected task1 or task2")),
                    }
                }
                "t_p" => {
                    let v: usize = parse_num(n, key, value)?;
                    if !HORIZONS.contains(&v) {
                        return Err(bad(&format!("horizon must be one of {HORIZONS:?}")));
                    }
                    t_p = Some(v);
                }
                "t_s" => {
                    t_s = parse_num(n, key, value)?;
                    if t_s == 0 {
                        return Err(bad("must be >= 1"));
                    }
                }
                "seed" => seed = parse_num(n, key, value)?,
                "output_dir" => output_dir = Some(PathBuf::from(value)),
                "search.k_ini" => search.k_ini = parse_num(n, key, value)?,
                "search.k_p" => search.k_p = parse_num(n, key, value)?,
                "search.k_m" => search.k_m = parse_num(n, key, value)?,
                "search.k_l" => search.k_l = parse_num(n, key, value)?,
                "search.t_max" => search.t_max = parse_num(n, key, value)?,
                "search.p_m" => search.p_m = parse_num(n, key, value)?,
                "search.surrogate.ensemble_size" => {
                    search.surrogate.ensemble_size = parse_num(n, key, value)?
                }
                "search.surrogate.width" => search.surrogate.width = parse_num(n, key, value)?,
                "search.surrogate.epochs" => search.surrogate.epochs = parse_num(n, key, value)?,
                "search.surrogate.lr" => search.surrogate.lr = parse_num(n, key, value)?,
                "noise.sigma0" => noise.sigma0 = parse_num(n, key, value)?,
                "noise.gamma" => noise.gamma = parse_num(n, key, value)?,
                "train.max_epochs" => {
                    max_epochs = parse_num(n, key, value)?;
                    if max_epochs == 0 {
                        return Err(bad("must be >= 1"));
                    }
                }
                "train.patience" => {
                    patience = parse_num(n, key, value)?;
                    if patience == 0 {
                        return Err(bad("must be >= 1"));
                    }
                }
                _ => {
                    // pin.<gene> = <label>; allow.<gene> = <label>[,<label>...]
                    let restricted = key
                        .strip_prefix("pin.")
                        .or_else(|| key.strip_prefix("allow."));
                    let Some(gene) = restricted else {
                        return Err(ConfigError::UnknownKey {
                            line: n,
                            key: key.to_string(),
                        });
                    };
                    let labels: Vec<&str> = value.split(',').map(str::trim).collect();
                    if key.starts_with("pin.") && labels.len() != 1 {
                        return Err(bad("pin takes exactly one option label"));
                    }
                    space
                        .restrict_labels(gene, &labels)
                        .map_err(|e| bad(&e.to_string()))?;
                }
            }
        }

        let data = match (data_path, synth_days) {
            (Some(_), Some(_)) => return Err(ConfigError::ConflictingData),
            (Some(p), None) => DataSource::Csv(p),
            (None, Some(days)) => DataSource::Synth {
                days,
                seed: synth_seed.unwrap_or(seed),
            },
            (None, None) => return Err(ConfigError::MissingKey("data_path or synth.days")),
        };
        let t_p = t_p.ok_or(ConfigError::MissingKey("t_p"))?;
        let output_dir = output_dir.ok_or(ConfigError::MissingKey("output_dir"))?;
        search.seed = seed;
        noise.seed = seed;
        search.validate();
        Ok(RunConfig {
            data,
            task_kind,
            t_p,
            t_s,
            search,
            noise,
            max_epochs,
            patience,
            output_dir,
            seed,
            space,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
        synth.days = 30\n\
        t_p = 12\n\
        output_dir = /tmp/run\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_str(MINIMAL).unwrap();
        assert!(matches!(c.data, DataSource::Synth { days: 30, seed: 0 }));
        assert_eq!(c.t_s, 96);
        assert_eq!(c.t_p, 12);
        assert!(matches!(c.task_kind, TaskKind::Task1));
        assert_eq!(c.search.t_max, 120);
        assert_eq!(c.search.k_ini, 10);
        assert_eq!(c.noise.sigma0, 0.05);
        assert_eq!(c.max_epochs, 50);
        assert_eq!(c.patience, 3);
        assert_eq!(c.space.canonical_size(), crate::search_space::space_size_canonical());
    }

    #[test]
    fn full_config_round_trip() {
        let text = "\
            # experiment settings\n\
            synth.days = 120\n\
            synth.seed = 9\n\
            task = task2\n\
            t_p = 24\n\
            t_s = 48\n\
            seed = 5\n\
            output_dir = out\n\
            search.t_max = 7  # trailing comment\n\
            search.k_l = 4\n\
            search.surrogate.epochs = 30\n\
            noise.sigma0 = 0.1\n\
            noise.gamma = 2.0\n\
            train.max_epochs = 12\n\
            train.patience = 2\n\
            pin.cps = mlp\n\
            allow.hs = 64, 128\n";
        let c = RunConfig::from_str(text).unwrap();
        assert!(matches!(c.data, DataSource::Synth { days: 120, seed: 9 }));
        assert!(matches!(c.task_kind, TaskKind::Task2));
        assert_eq!((c.t_p, c.t_s, c.seed), (24, 48, 5));
        assert_eq!(c.search.t_max, 7);
        assert_eq!(c.search.k_l, 4);
        assert_eq!(c.search.surrogate.epochs, 30);
        assert_eq!(c.search.seed, 5);
        assert_eq!((c.noise.sigma0, c.noise.gamma, c.noise.seed), (0.1, 2.0, 5));
        assert_eq!((c.max_epochs, c.patience), (12, 2));
        let cps_gene = 6;
        assert_eq!(c.space.allowed(cps_gene), &[1], "mlp is the second cps option");
        let hs_gene = 8;
        assert_eq!(c.space.allowed(hs_gene), &[0, 1]);
    }

    #[test]
    fn errors_are_specific() {
        let e = RunConfig::from_str("bogus line\n").unwrap_err();
        assert!(matches!(e, ConfigError::Malformed { line: 1, .. }));

        let e = RunConfig::from_str(&format!("{MINIMAL}wat = 1\n")).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 4, .. }));

        let e = RunConfig::from_str("synth.days = 1\nt_p = 13\noutput_dir = o\n").unwrap_err();
        assert!(matches!(e, ConfigError::BadValue { line: 2, .. }));

        let e = RunConfig::from_str("synth.days = 1\noutput_dir = o\n").unwrap_err();
        assert!(matches!(e, ConfigError::MissingKey("t_p")));

        let e = RunConfig::from_str(
            "data_path = a.csv\nsynth.days = 1\nt_p = 12\noutput_dir = o\n",
        )
        .unwrap_err();
        assert!(matches!(e, ConfigError::ConflictingData));

        let e = RunConfig::from_str(&format!("{MINIMAL}pin.cps = resnet\n")).unwrap_err();
        assert!(matches!(e, ConfigError::BadValue { line: 4, .. }));
    }
}
