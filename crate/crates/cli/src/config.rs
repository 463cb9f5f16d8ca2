//! Configuration resolution: built-in defaults, then the `CARDEST_SEED`
//! environment variable (seed only), then the config file, then flags, each
//! layer overriding the one before it.
//!
//! The file is flat TOML, one key per setting. A run manifest is itself a
//! valid config file: the handful of bookkeeping keys a manifest adds are
//! accepted and ignored, everything else unknown is rejected.

use std::fmt;
use std::path::Path;

use cardest_core::{CoverageMetric, DistanceMode, FieldConfig, TrialConfig};

use crate::CmdError;

/// Settings a config file may carry. Flags mirror these one to one.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<u32>,
    pub n_max: Option<u32>,
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub radius: Option<f64>,
    pub f_initial: Option<f64>,
    pub erasure: Option<f64>,
    pub rounds: Option<u32>,
    pub queried: Option<u32>,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    pub distance_mode: Option<DistanceMode>,
    pub topology: Option<bool>,
    pub coord_bits: Option<u32>,
    pub coverage_threshold: Option<f64>,
    pub coverage_metric: Option<CoverageMetric>,
    pub round_cap: Option<u32>,
}

/// A fully materialized run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub trial: TrialConfig,
    pub distance_mode: DistanceMode,
    pub coverage_threshold: f64,
    pub coverage_metric: CoverageMetric,
    pub round_cap: u32,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            trial: TrialConfig {
                rounds: 8,
                k: 35,
                trials: 1000,
                ..TrialConfig::default()
            },
            distance_mode: DistanceMode::Planar,
            coverage_threshold: 0.95,
            coverage_metric: CoverageMetric::Count,
            round_cap: 50,
        }
    }
}

impl Resolved {
    fn apply(&mut self, o: &Overrides) {
        let t = &mut self.trial;
        if let Some(v) = o.n {
            t.n = v;
        }
        if let Some(v) = o.n_max {
            t.n_max = v;
        }
        if let Some(v) = o.length {
            t.field.length = v;
        }
        if let Some(v) = o.width {
            t.field.width = v;
        }
        if let Some(v) = o.radius {
            t.field.radius = v;
        }
        if let Some(v) = o.f_initial {
            t.f_initial = v;
        }
        if let Some(v) = o.erasure {
            t.q = v;
        }
        if let Some(v) = o.rounds {
            t.rounds = v;
        }
        if let Some(v) = o.queried {
            t.k = v;
        }
        if let Some(v) = o.trials {
            t.trials = v;
        }
        if let Some(v) = o.seed {
            t.base_seed = v;
        }
        if let Some(v) = o.distance_mode {
            self.distance_mode = v;
            t.field.mode = v;
        }
        if let Some(v) = o.topology {
            t.topology = v;
        }
        if let Some(v) = o.coord_bits {
            t.coord_bits = v;
        }
        if let Some(v) = o.coverage_threshold {
            self.coverage_threshold = v;
        }
        if let Some(v) = o.coverage_metric {
            self.coverage_metric = v;
        }
        if let Some(v) = o.round_cap {
            self.round_cap = v;
        }
    }

    fn validate(&self) -> Result<(), CmdError> {
        self.trial.validate().map_err(|e| CmdError::Config(e.to_string()))?;
        if !self.coverage_threshold.is_finite()
            || self.coverage_threshold <= 0.0
            || self.coverage_threshold > 1.0
        {
            return Err(CmdError::Config(format!(
                "coverage_threshold must lie in (0, 1], got {}",
                self.coverage_threshold
            )));
        }
        if self.round_cap == 0 {
            return Err(CmdError::Config("round_cap must be at least 1".into()));
        }
        if self.trial.topology && !(1..=64).contains(&self.trial.coord_bits) {
            return Err(CmdError::Config(format!(
                "coord_bits must lie in [1, 64], got {}",
                self.trial.coord_bits
            )));
        }
        Ok(())
    }

    /// All settings as flat TOML key-value lines, in declaration order.
    pub fn to_toml_lines(&self) -> String {
        let t = &self.trial;
        let mut out = String::new();
        let mut put = |key: &str, value: String| {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        };
        put("n", t.n.to_string());
        put("n_max", t.n_max.to_string());
        put("length", toml_float(t.field.length));
        put("width", toml_float(t.field.width));
        put("radius", toml_float(t.field.radius));
        put("f_initial", toml_float(t.f_initial));
        put("erasure", toml_float(t.q));
        put("rounds", t.rounds.to_string());
        put("queried", t.k.to_string());
        put("trials", t.trials.to_string());
        // seeds beyond the TOML integer range travel as strings
        put(
            "seed",
            if t.base_seed <= i64::MAX as u64 {
                t.base_seed.to_string()
            } else {
                format!("\"{}\"", t.base_seed)
            },
        );
        put("distance_mode", format!("\"{}\"", mode_name(self.distance_mode)));
        put("topology", t.topology.to_string());
        put("coord_bits", t.coord_bits.to_string());
        put("coverage_threshold", toml_float(self.coverage_threshold));
        put("coverage_metric", format!("\"{}\"", self.coverage_metric));
        put("round_cap", self.round_cap.to_string());
        out
    }
}

fn toml_float(v: f64) -> String {
    // Debug formatting keeps the decimal point TOML floats need and
    // round-trips exactly
    format!("{v:?}")
}

pub fn mode_name(mode: DistanceMode) -> &'static str {
    match mode {
        DistanceMode::Planar => "planar",
        DistanceMode::Toroidal => "toroidal",
    }
}

pub fn parse_mode(s: &str) -> Result<DistanceMode, String> {
    match s {
        "planar" => Ok(DistanceMode::Planar),
        "toroidal" => Ok(DistanceMode::Toroidal),
        other => Err(format!("unknown distance mode {other:?}, expected planar or toroidal")),
    }
}

/// Builds the final configuration. `file` settings override the environment
/// seed, `flags` override everything.
pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Resolved, CmdError> {
    let mut resolved = Resolved::default();
    if let Some(seed) = seed_from_env()? {
        resolved.trial.base_seed = seed;
    }
    if let Some(path) = file {
        let parsed = parse_file(path)?;
        resolved.apply(&parsed);
    }
    resolved.apply(flags);
    resolved.trial.field = FieldConfig::new(
        resolved.trial.field.length,
        resolved.trial.field.width,
        resolved.trial.field.radius,
    )
    .with_mode(resolved.distance_mode);
    resolved.validate()?;
    Ok(resolved)
}

fn seed_from_env() -> Result<Option<u64>, CmdError> {
    match std::env::var("CARDEST_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CmdError::Config(format!("CARDEST_SEED is not a valid seed: {raw:?}"))),
        Err(_) => Ok(None),
    }
}

/// Keys a run manifest adds on top of the config keys; accepted and ignored
/// so a manifest can be fed back as a config file.
const MANIFEST_KEYS: [&str; 4] = ["version", "command", "timestamp", "outputs"];

fn parse_file(path: &Path) -> Result<Overrides, CmdError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = raw
        .parse()
        .map_err(|e| CmdError::Config(format!("config {} is not valid TOML: {e}", path.display())))?;
    let mut fields = Fields { table, errors: Vec::new() };

    let o = Overrides {
        n: fields.u32("n"),
        n_max: fields.u32("n_max"),
        length: fields.f64("length"),
        width: fields.f64("width"),
        radius: fields.f64("radius"),
        f_initial: fields.f64("f_initial"),
        erasure: fields.f64("erasure"),
        rounds: fields.u32("rounds"),
        queried: fields.u32("queried"),
        trials: fields.u32("trials"),
        seed: fields.seed(),
        distance_mode: fields.parsed("distance_mode", parse_mode),
        topology: fields.bool("topology"),
        coord_bits: fields.u32("coord_bits"),
        coverage_threshold: fields.f64("coverage_threshold"),
        coverage_metric: fields
            .parsed("coverage_metric", |s| s.parse::<CoverageMetric>().map_err(|e| e.to_string())),
        round_cap: fields.u32("round_cap"),
    };

    for key in fields.table.keys() {
        if !MANIFEST_KEYS.contains(&key.as_str()) {
            fields.errors.push(format!("unknown config key {key:?}"));
        }
    }
    if fields.errors.is_empty() {
        Ok(o)
    } else {
        Err(CmdError::Config(format!(
            "config {}: {}",
            path.display(),
            fields.errors.join("; ")
        )))
    }
}

/// Typed extraction from the parsed table; every taken key is removed so the
/// leftovers can be checked against the manifest allowance.
struct Fields {
    table: toml::Table,
    errors: Vec<String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.table.remove(key)
    }

    fn complain<T>(&mut self, key: &str, wanted: &str, got: impl fmt::Display) -> Option<T> {
        self.errors.push(format!("{key} must be {wanted}, got {got}"));
        None
    }

    fn u32(&mut self, key: &str) -> Option<u32> {
        let value = self.take(key)?;
        match value.as_integer().and_then(|i| u32::try_from(i).ok()) {
            Some(v) => Some(v),
            None => self.complain(key, "a non-negative integer", value),
        }
    }

    fn f64(&mut self, key: &str) -> Option<f64> {
        let value = self.take(key)?;
        match value {
            toml::Value::Float(v) => Some(v),
            toml::Value::Integer(v) => Some(v as f64),
            other => self.complain(key, "a number", other),
        }
    }

    fn bool(&mut self, key: &str) -> Option<bool> {
        let value = self.take(key)?;
        match value.as_bool() {
            Some(v) => Some(v),
            None => self.complain(key, "a boolean", value),
        }
    }

    fn seed(&mut self) -> Option<u64> {
        let value = self.take("seed")?;
        let parsed = match &value {
            toml::Value::Integer(v) => u64::try_from(*v).ok(),
            toml::Value::String(s) => s.parse().ok(),
            _ => None,
        };
        match parsed {
            Some(v) => Some(v),
            None => self.complain("seed", "a non-negative integer", value),
        }
    }

    fn parsed<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let value = self.take(key)?;
        let Some(s) = value.as_str() else {
            return self.complain(key, "a string", value);
        };
        match parse(s) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn defaults_survive_an_empty_config() {
        let file = write_config("");
        let resolved = resolve(Some(file.path()), &Overrides::default()).unwrap();
        assert_eq!(resolved, Resolved::default());
    }

    #[test]
    fn flags_beat_the_file() {
        let file = write_config("trials = 7\nqueried = 12\n");
        let flags = Overrides { trials: Some(3), ..Overrides::default() };
        let resolved = resolve(Some(file.path()), &flags).unwrap();
        assert_eq!(resolved.trial.trials, 3);
        assert_eq!(resolved.trial.k, 12);
    }

    #[test]
    fn unknown_keys_are_rejected_but_manifest_keys_pass() {
        let bad = write_config("queured = 12\n");
        let err = resolve(Some(bad.path()), &Overrides::default()).unwrap_err();
        assert!(matches!(err, CmdError::Config(ref m) if m.contains("queured")));

        let manifest = write_config(
            "version = \"0.1.0\"\ncommand = \"simulate\"\ntimestamp = \"x\"\noutputs = []\ntrials = 9\n",
        );
        let resolved = resolve(Some(manifest.path()), &Overrides::default()).unwrap();
        assert_eq!(resolved.trial.trials, 9);
    }

    #[test]
    fn toml_lines_round_trip() {
        let mut resolved = Resolved::default();
        resolved.trial.base_seed = 99;
        resolved.trial.field.radius = 0.25;
        resolved.trial.field.mode = DistanceMode::Toroidal;
        resolved.distance_mode = DistanceMode::Toroidal;
        resolved.coverage_metric = CoverageMetric::Estimate;

        let file = write_config(&resolved.to_toml_lines());
        let back = resolve(Some(file.path()), &Overrides::default()).unwrap();
        assert_eq!(back, resolved);
    }

    #[test]
    fn bad_values_name_the_key() {
        let file = write_config("radius = \"wide\"\n");
        let err = resolve(Some(file.path()), &Overrides::default()).unwrap_err();
        assert!(matches!(err, CmdError::Config(ref m) if m.contains("radius")));
    }
}
