//! Scenario configuration: a line-oriented `key = value` format with `#`
//! comments. `seed` and `T` are mandatory; everything else has a
//! documented default. Unknown keys are errors so typos cannot silently
//! change an experiment.

use crate::endpoint::RandMode;
use crate::rerand::{choose_pn_split, NonceMode, RerandError, RerandParams};

/// Post-hoc attacks to evaluate against the frame log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attack {
    Timing,
    Sn,
    Pn,
    NoncePrune,
}

impl Attack {
    pub fn name(self) -> &'static str {
        match self {
            Attack::Timing => "timing",
            Attack::Sn => "sn",
            Attack::Pn => "pn",
            Attack::NoncePrune => "nonce-prune",
        }
    }

    pub fn parse(s: &str) -> Option<Attack> {
        Some(match s {
            "timing" => Attack::Timing,
            "sn" => Attack::Sn,
            "pn" => Attack::Pn,
            "nonce-prune" | "nonce_prune" => Attack::NoncePrune,
            _ => return None,
        })
    }
}

/// Offered-load arrival process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficModel {
    /// Exponential inter-arrivals; stations are statistically identical
    /// but never phase-locked.
    Poisson,
    /// Fixed inter-arrivals with a random per-station phase.
    Constant,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("missing mandatory key `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("invalid PN split: h={h} + l={l} != 48")]
    InvalidSplit { h: u8, l: u8 },
}

/// A full scenario description. See the module docs for the file syntax.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Number of stations (`n_stations`, default 1).
    pub n_stations: usize,
    /// Rotation interval T in seconds (`T`, mandatory).
    pub interval_secs: u64,
    /// `mode`: off | per_connection | unsync | sync (default sync).
    pub mode: RandMode,
    /// `nonce_mode`: controlled | random | naive_zero (default controlled).
    pub nonce_mode: NonceMode,
    /// Explicit PN split (`h`, `l`); both or neither. Default: sized from
    /// bitrate, T and frame_len.
    pub split: Option<(u8, u8)>,
    /// Channel bit rate used for PN sizing (`bitrate`, default 54 Mbps).
    pub bitrate_bps: u64,
    /// On-air frame length in bytes (`frame_len`, default 1500).
    pub frame_len_bytes: usize,
    /// Simulated seconds (`duration`, default 600).
    pub duration_secs: u64,
    /// RTS threshold in bytes (`rts_threshold`, default 2347 = disabled).
    pub rts_threshold: usize,
    /// Station expiry (`inactivity_timeout`, seconds; default 3 * T).
    pub inactivity_timeout_secs: Option<u64>,
    /// RNG seed (`seed`, mandatory; every run is reproducible).
    pub seed: u64,
    /// Ablations (`no_sn_reset`, `no_pn_reset`; default false).
    pub no_sn_reset: bool,
    pub no_pn_reset: bool,
    /// Linkers to evaluate (`adversary`, comma list; default timing,sn,pn;
    /// empty string disables post-processing).
    pub adversaries: Vec<Attack>,
    /// Per-station clock skew in ms (`clock_skew_ms`, comma list, default
    /// all zero).
    pub clock_skew_ms: Vec<u64>,
    /// Uplink frames/s per station (`traffic_rate`, default 10).
    pub traffic_rate: f64,
    /// Downlink frames/s per station (`downlink_rate`, default =
    /// traffic_rate).
    pub downlink_rate: Option<f64>,
    /// `traffic_model`: poisson | constant (default poisson).
    pub traffic_model: TrafficModel,
    /// Uniform per-transmission corruption probability (`loss_rate`,
    /// default 0).
    pub loss_rate: f64,
    /// Grant the eavesdropper PTK derivation, as a WPA2 capture would
    /// (`wpa2_mode`, default false).
    pub wpa2_mode: bool,
}

impl ScenarioConfig {
    /// Programmatic constructor with the same defaults as an empty file.
    pub fn new(interval_secs: u64, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            n_stations: 1,
            interval_secs,
            mode: RandMode::SyncRuntime,
            nonce_mode: NonceMode::Controlled,
            split: None,
            bitrate_bps: 54_000_000,
            frame_len_bytes: 1500,
            duration_secs: 600,
            rts_threshold: crate::endpoint::DEFAULT_RTS_THRESHOLD,
            inactivity_timeout_secs: None,
            seed,
            no_sn_reset: false,
            no_pn_reset: false,
            adversaries: vec![Attack::Timing, Attack::Sn, Attack::Pn],
            clock_skew_ms: Vec::new(),
            traffic_rate: 10.0,
            downlink_rate: None,
            traffic_model: TrafficModel::Poisson,
            loss_rate: 0.0,
            wpa2_mode: false,
        }
    }

    /// Rotation parameters: the explicit split when given, otherwise sized
    /// from the channel capacity.
    pub fn params(&self) -> Result<RerandParams, RerandError> {
        match self.split {
            Some((h, l)) => RerandParams::new(self.interval_secs, h, l),
            None => choose_pn_split(
                self.bitrate_bps,
                self.interval_secs,
                self.frame_len_bytes as u64 * 8,
            ),
        }
    }

    pub fn downlink_rate(&self) -> f64 {
        self.downlink_rate.unwrap_or(self.traffic_rate)
    }

    pub fn inactivity_timeout_secs(&self) -> u64 {
        self.inactivity_timeout_secs
            .unwrap_or(3 * self.interval_secs)
    }

    /// Per-station skew, zero-filled to `n_stations`.
    pub fn skew_ms(&self, sta: usize) -> u64 {
        self.clock_skew_ms.get(sta).copied().unwrap_or(0)
    }
}

fn bad(line: usize, key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, val: &str) -> Result<T, ConfigError> {
    val.parse()
        .map_err(|_| bad(line, key, format!("cannot parse {val:?}")))
}

fn parse_bool(line: usize, key: &str, val: &str) -> Result<bool, ConfigError> {
    match val {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(line, key, format!("expected true/false, got {val:?}"))),
    }
}

/// Parses the scenario file format.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut seed: Option<u64> = None;
    let mut interval: Option<u64> = None;
    let mut h: Option<u8> = None;
    let mut l: Option<u8> = None;

    let mut cfg = ScenarioConfig::new(0, 0);

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, val)) = content.split_once('=') else {
            return Err(bad(line, content, "expected `key = value`"));
        };
        let key = key.trim();
        let val = val.trim();
        match key {
            "n_stations" => cfg.n_stations = parse_num(line, key, val)?,
            "T" => interval = Some(parse_num(line, key, val)?),
            "mode" => {
                cfg.mode = match val {
                    "off" => RandMode::Off,
                    "per_connection" => RandMode::PerConnection,
                    "unsync" => RandMode::UnsyncRuntime,
                    "sync" => RandMode::SyncRuntime,
                    _ => return Err(bad(line, key, format!("unknown mode {val:?}"))),
                }
            }
            "nonce_mode" => {
                cfg.nonce_mode = match val {
                    "controlled" => NonceMode::Controlled,
                    "random" => NonceMode::RandomReset,
                    "naive_zero" => NonceMode::NaiveZero,
                    _ => return Err(bad(line, key, format!("unknown nonce mode {val:?}"))),
                }
            }
            "h" => h = Some(parse_num(line, key, val)?),
            "l" => l = Some(parse_num(line, key, val)?),
            "bitrate" => cfg.bitrate_bps = parse_num(line, key, val)?,
            "frame_len" => cfg.frame_len_bytes = parse_num(line, key, val)?,
            "duration" => cfg.duration_secs = parse_num(line, key, val)?,
            "rts_threshold" => cfg.rts_threshold = parse_num(line, key, val)?,
            "inactivity_timeout" => {
                cfg.inactivity_timeout_secs = Some(parse_num(line, key, val)?)
            }
            "seed" => seed = Some(parse_num(line, key, val)?),
            "no_sn_reset" => cfg.no_sn_reset = parse_bool(line, key, val)?,
            "no_pn_reset" => cfg.no_pn_reset = parse_bool(line, key, val)?,
            "adversary" => {
                cfg.adversaries = val
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        Attack::parse(s)
                            .ok_or_else(|| bad(line, key, format!("unknown attack {s:?}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "clock_skew_ms" => {
                cfg.clock_skew_ms = val
                    .split(',')
                    .map(str::trim)
                    .map(|s| parse_num(line, key, s))
                    .collect::<Result<_, _>>()?;
            }
            "traffic_rate" => cfg.traffic_rate = parse_num(line, key, val)?,
            "downlink_rate" => cfg.downlink_rate = Some(parse_num(line, key, val)?),
            "traffic_model" => {
                cfg.traffic_model = match val {
                    "poisson" => TrafficModel::Poisson,
                    "constant" => TrafficModel::Constant,
                    _ => return Err(bad(line, key, format!("unknown traffic model {val:?}"))),
                }
            }
            "loss_rate" => {
                cfg.loss_rate = parse_num(line, key, val)?;
                if !(0.0..1.0).contains(&cfg.loss_rate) {
                    return Err(bad(line, key, "must be in [0, 1)"));
                }
            }
            "wpa2_mode" => cfg.wpa2_mode = parse_bool(line, key, val)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
    }

    cfg.seed = seed.ok_or(ConfigError::MissingKey("seed"))?;
    cfg.interval_secs = interval.ok_or(ConfigError::MissingKey("T"))?;
    if cfg.interval_secs == 0 {
        return Err(bad(0, "T", "must be at least 1"));
    }
    match (h, l) {
        (None, None) => {}
        (Some(h), Some(l)) => {
            if u16::from(h) + u16::from(l) != 48 {
                return Err(ConfigError::InvalidSplit { h, l });
            }
            cfg.split = Some((h, l));
        }
        _ => {
            return Err(bad(
                0,
                "h/l",
                "h and l must be given together (h + l = 48)",
            ))
        }
    }
    if !cfg.clock_skew_ms.is_empty() && cfg.clock_skew_ms.len() != cfg.n_stations {
        return Err(bad(
            0,
            "clock_skew_ms",
            format!(
                "expected {} entries, got {}",
                cfg.n_stations,
                cfg.clock_skew_ms.len()
            ),
        ));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("n_stations=5\nT=30\nmode=sync\nseed=1").unwrap();
        assert_eq!(cfg.n_stations, 5);
        assert_eq!(cfg.interval_secs, 30);
        assert_eq!(cfg.mode, RandMode::SyncRuntime);
        assert_eq!(cfg.nonce_mode, NonceMode::Controlled);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.duration_secs, 600);
        assert_eq!(cfg.rts_threshold, 2347);
        assert_eq!(cfg.traffic_rate, 10.0);
        assert_eq!(cfg.inactivity_timeout_secs(), 90);
        assert_eq!(cfg.adversaries.len(), 3);
    }

    #[test]
    fn comments_and_spacing() {
        let cfg = parse_config("# a scenario\n  T = 30   # thirty seconds\nseed = 9\n\n").unwrap();
        assert_eq!(cfg.interval_secs, 30);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn invalid_split_rejected() {
        let err = parse_config("T=30\nseed=1\nh=30\nl=30").unwrap_err();
        assert_eq!(err, ConfigError::InvalidSplit { h: 30, l: 30 });
        let cfg = parse_config("T=30\nseed=1\nh=24\nl=24").unwrap();
        assert_eq!(cfg.split, Some((24, 24)));
    }

    #[test]
    fn missing_seed_and_t() {
        assert_eq!(
            parse_config("T=30").unwrap_err(),
            ConfigError::MissingKey("seed")
        );
        assert_eq!(
            parse_config("seed=4").unwrap_err(),
            ConfigError::MissingKey("T")
        );
    }

    #[test]
    fn unknown_key_has_line_number() {
        let err = parse_config("T=30\nseed=1\nbogus=3").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 3,
                key: "bogus".into()
            }
        );
    }

    #[test]
    fn bad_value_has_line_number() {
        let err = parse_config("T=thirty\nseed=1").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 1, .. }));
    }

    #[test]
    fn adversary_list() {
        let cfg = parse_config("T=30\nseed=1\nadversary=timing, pn").unwrap();
        assert_eq!(cfg.adversaries, vec![Attack::Timing, Attack::Pn]);
        let cfg = parse_config("T=30\nseed=1\nadversary=").unwrap();
        assert!(cfg.adversaries.is_empty());
    }

    #[test]
    fn skew_length_checked() {
        assert!(parse_config("T=30\nseed=1\nn_stations=2\nclock_skew_ms=1,2").is_ok());
        assert!(parse_config("T=30\nseed=1\nn_stations=3\nclock_skew_ms=1,2").is_err());
    }

    #[test]
    fn params_resolution() {
        let cfg = parse_config("T=30\nseed=1\nh=24\nl=24").unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.pn_high_bits(), p.pn_low_bits()), (24, 24));
        // 54 Mbps, T=30, 1500-byte frames: ceil(54e6*30/12000) = 135000
        // frames -> l = 18.
        let cfg = parse_config("T=30\nseed=1").unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.pn_high_bits(), p.pn_low_bits()), (30, 18));
    }
}
