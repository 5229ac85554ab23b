//! Run configuration: plain `key=value` files, validation and the run manifest.
//!
//! Lists are comma-separated. Lines starting with `#` are comments. A manifest is a
//! valid configuration: it repeats every setting and adds `derived.*` entries, which
//! are recomputed on load and must agree with the recorded values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::decomposition::contraction_rate;
use crate::error::{KatokError, Result};
use crate::katok::KatokMap;
use crate::params::{MapParams, Preset};

/// The pipelines a run can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Orbit,
    Lyapunov,
    PressureCurve,
    Spectrum,
    GibbsCheck,
    Ldp,
    DecompStats,
    Probes,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Orbit,
        Command::Lyapunov,
        Command::PressureCurve,
        Command::Spectrum,
        Command::GibbsCheck,
        Command::Ldp,
        Command::DecompStats,
        Command::Probes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Orbit => "orbit",
            Command::Lyapunov => "lyapunov",
            Command::PressureCurve => "pressure-curve",
            Command::Spectrum => "spectrum",
            Command::GibbsCheck => "gibbs-check",
            Command::Ldp => "ldp",
            Command::DecompStats => "decomp-stats",
            Command::Probes => "probes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Command::ALL.iter().copied().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
            KatokError::Config(format!("unknown command '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// Knobs of the individual pipelines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub orbit_steps: usize,
    pub lyapunov_n: usize,
    pub lyapunov_samples: usize,
    pub lyapunov_linger_samples: usize,
    pub lyapunov_linger_n: usize,
    pub histogram_bins: usize,
    pub curve_pool_length: f64,
    pub curve_pool_count: usize,
    pub curve_n: Vec<usize>,
    pub curve_delta: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub alpha_step: f64,
    pub gibbs_resolution: usize,
    pub gibbs_length: usize,
    pub gibbs_n: Vec<usize>,
    pub gibbs_samples: usize,
    pub ldp_pool_length: f64,
    pub ldp_pool_count: usize,
    pub ldp_length: usize,
    pub ldp_n: Vec<usize>,
    pub ldp_delta: f64,
    pub ldp_delta_max: f64,
    pub decomp_r: f64,
    pub decomp_segments: usize,
    pub decomp_max_n: usize,
    pub probe_samples: usize,
    pub cone_samples: usize,
    pub linger_rho: Vec<f64>,
    pub bowen_n: Vec<usize>,
    pub bowen_trials: usize,
    pub zeta_samples: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            orbit_steps: 1000,
            lyapunov_n: 100_000,
            lyapunov_samples: 1000,
            lyapunov_linger_samples: 100,
            lyapunov_linger_n: 1000,
            histogram_bins: 50,
            curve_pool_length: 0.04,
            curve_pool_count: 10_000_000,
            curve_n: vec![11, 12, 13, 14, 15],
            curve_delta: 0.0625,
            t_min: -8.0,
            t_max: 2.0,
            t_step: 0.25,
            alpha_step: 0.01,
            gibbs_resolution: 32,
            gibbs_length: 8192,
            gibbs_n: vec![16, 32, 64],
            gibbs_samples: 100,
            ldp_pool_length: 0.04,
            ldp_pool_count: 2_000_000,
            ldp_length: 12,
            ldp_n: (1..=10).map(|k| 4 * k).collect(),
            ldp_delta: 0.1,
            ldp_delta_max: 0.3,
            decomp_r: 0.3,
            decomp_segments: 100_000,
            decomp_max_n: 64,
            probe_samples: 1000,
            cone_samples: 10_000,
            linger_rho: vec![1e-5, 1e-6, 1e-7, 1e-8, 1e-9],
            bowen_n: vec![250, 500, 1000, 2000],
            bowen_trials: 25,
            zeta_samples: 200,
        }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: MapParams,
    pub preset: Preset,
    pub command: Command,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub settings: Settings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: MapParams::preset(Preset::Pressure),
            preset: Preset::Pressure,
            command: Command::Orbit,
            seed: 1,
            output_dir: PathBuf::from("out"),
            workers: 1,
            settings: Settings::default(),
        }
    }
}

fn fmt_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.trim().parse().map_err(|_| format!("invalid value '{v}' for {key}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|x| parse_num(key, x)).collect()
}

impl Settings {
    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("orbit_steps", self.orbit_steps.to_string()),
            ("lyapunov_n", self.lyapunov_n.to_string()),
            ("lyapunov_samples", self.lyapunov_samples.to_string()),
            ("lyapunov_linger_samples", self.lyapunov_linger_samples.to_string()),
            ("lyapunov_linger_n", self.lyapunov_linger_n.to_string()),
            ("histogram_bins", self.histogram_bins.to_string()),
            ("curve_pool_length", self.curve_pool_length.to_string()),
            ("curve_pool_count", self.curve_pool_count.to_string()),
            ("curve_n", fmt_list(&self.curve_n)),
            ("curve_delta", self.curve_delta.to_string()),
            ("t_min", self.t_min.to_string()),
            ("t_max", self.t_max.to_string()),
            ("t_step", self.t_step.to_string()),
            ("alpha_step", self.alpha_step.to_string()),
            ("gibbs_resolution", self.gibbs_resolution.to_string()),
            ("gibbs_length", self.gibbs_length.to_string()),
            ("gibbs_n", fmt_list(&self.gibbs_n)),
            ("gibbs_samples", self.gibbs_samples.to_string()),
            ("ldp_pool_length", self.ldp_pool_length.to_string()),
            ("ldp_pool_count", self.ldp_pool_count.to_string()),
            ("ldp_length", self.ldp_length.to_string()),
            ("ldp_n", fmt_list(&self.ldp_n)),
            ("ldp_delta", self.ldp_delta.to_string()),
            ("ldp_delta_max", self.ldp_delta_max.to_string()),
            ("decomp_r", self.decomp_r.to_string()),
            ("decomp_segments", self.decomp_segments.to_string()),
            ("decomp_max_n", self.decomp_max_n.to_string()),
            ("probe_samples", self.probe_samples.to_string()),
            ("cone_samples", self.cone_samples.to_string()),
            ("linger_rho", fmt_list(&self.linger_rho)),
            ("bowen_n", fmt_list(&self.bowen_n)),
            ("bowen_trials", self.bowen_trials.to_string()),
            ("zeta_samples", self.zeta_samples.to_string()),
        ]
    }

    /// Set one knob; `Ok(false)` when the key is not a pipeline knob.
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<bool, String> {
        match key {
            "orbit_steps" => self.orbit_steps = parse_num(key, v)?,
            "lyapunov_n" => self.lyapunov_n = parse_num(key, v)?,
            "lyapunov_samples" => self.lyapunov_samples = parse_num(key, v)?,
            "lyapunov_linger_samples" => self.lyapunov_linger_samples = parse_num(key, v)?,
            "lyapunov_linger_n" => self.lyapunov_linger_n = parse_num(key, v)?,
            "histogram_bins" => self.histogram_bins = parse_num(key, v)?,
            "curve_pool_length" => self.curve_pool_length = parse_num(key, v)?,
            "curve_pool_count" => self.curve_pool_count = parse_num(key, v)?,
            "curve_n" => self.curve_n = parse_list(key, v)?,
            "curve_delta" => self.curve_delta = parse_num(key, v)?,
            "t_min" => self.t_min = parse_num(key, v)?,
            "t_max" => self.t_max = parse_num(key, v)?,
            "t_step" => self.t_step = parse_num(key, v)?,
            "alpha_step" => self.alpha_step = parse_num(key, v)?,
            "gibbs_resolution" => self.gibbs_resolution = parse_num(key, v)?,
            "gibbs_length" => self.gibbs_length = parse_num(key, v)?,
            "gibbs_n" => self.gibbs_n = parse_list(key, v)?,
            "gibbs_samples" => self.gibbs_samples = parse_num(key, v)?,
            "ldp_pool_length" => self.ldp_pool_length = parse_num(key, v)?,
            "ldp_pool_count" => self.ldp_pool_count = parse_num(key, v)?,
            "ldp_length" => self.ldp_length = parse_num(key, v)?,
            "ldp_n" => self.ldp_n = parse_list(key, v)?,
            "ldp_delta" => self.ldp_delta = parse_num(key, v)?,
            "ldp_delta_max" => self.ldp_delta_max = parse_num(key, v)?,
            "decomp_r" => self.decomp_r = parse_num(key, v)?,
            "decomp_segments" => self.decomp_segments = parse_num(key, v)?,
            "decomp_max_n" => self.decomp_max_n = parse_num(key, v)?,
            "probe_samples" => self.probe_samples = parse_num(key, v)?,
            "cone_samples" => self.cone_samples = parse_num(key, v)?,
            "linger_rho" => self.linger_rho = parse_list(key, v)?,
            "bowen_n" => self.bowen_n = parse_list(key, v)?,
            "bowen_trials" => self.bowen_trials = parse_num(key, v)?,
            "zeta_samples" => self.zeta_samples = parse_num(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(KatokError::Config(m.to_string()));
        if self.t_step <= 0.0 || self.t_min > -5.0 || self.t_max < 1.0 {
            return fail("the t-grid must have a positive step, t_min <= -5 and t_max >= 1");
        }
        if self.curve_n.len() < crate::pressure::MIN_FIT_LENGTHS || self.curve_n.windows(2).any(|w| w[1] <= w[0]) {
            return fail("curve_n must list at least four increasing lengths");
        }
        if self.gibbs_n.iter().any(|&n| n == 0 || n > self.gibbs_length) {
            return fail("gibbs_n entries must lie in 1..=gibbs_length");
        }
        if self.ldp_n.len() < 2 || self.ldp_n.contains(&0) {
            return fail("ldp_n must list at least two positive lengths");
        }
        if !(self.decomp_r > 0.0 && self.decomp_r <= 1.0) {
            return fail("decomp_r must lie in (0, 1]");
        }
        if self.linger_rho.is_empty() {
            return fail("linger_rho must not be empty");
        }
        if self.bowen_n.len() < 3 || self.bowen_n.contains(&0) {
            return fail("bowen_n must list at least three positive lengths");
        }
        let positive = [
            self.curve_pool_length,
            self.curve_delta,
            self.alpha_step,
            self.ldp_pool_length,
            self.ldp_delta,
            self.ldp_delta_max,
        ];
        if positive.iter().any(|&x| !(x > 0.0)) {
            return fail("pool lengths, scales and steps must be positive");
        }
        let counts = [
            self.orbit_steps,
            self.lyapunov_n,
            self.lyapunov_samples,
            self.lyapunov_linger_samples,
            self.lyapunov_linger_n,
            self.histogram_bins,
            self.curve_pool_count,
            self.gibbs_resolution,
            self.gibbs_samples,
            self.ldp_pool_count,
            self.ldp_length,
            self.decomp_segments,
            self.probe_samples,
            self.cone_samples,
            self.bowen_trials,
            self.zeta_samples,
        ];
        if counts.contains(&0) {
            return fail("counts and lengths must be positive");
        }
        Ok(())
    }
}

/// Every constant derived from the parameters, by name.
pub fn derived_constants(params: &MapParams) -> Result<Vec<(&'static str, f64)>> {
    let g = KatokMap::new(*params)?;
    Ok(vec![
        ("lambda", params.lambda),
        ("r1", params.r1),
        ("beta", params.beta),
        ("gamma", params.gamma),
        ("blend_lo", params.blend_lo),
        ("c0", g.profile.c0()),
        ("kappa0", g.profile.kappa0()),
        ("slow_radius", params.slow_radius()),
        ("product_scale", params.product_scale()),
        ("chi_radius", params.chi_radius()),
        ("contraction_rate", contraction_rate(params)),
    ])
}

/// Parse a configuration from text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut map_keys: BTreeMap<&str, f64> = BTreeMap::new();
    let mut derived: Vec<(usize, String, f64)> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| KatokError::ConfigParse { line: line_no, message };
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(first) = seen.insert(key.to_string(), line_no) {
            return Err(err(format!("duplicate key '{key}' (first set on line {first})")));
        }
        match key {
            "alpha" | "r0" | "epsilon" | "ode_step" | "quad_tol" => {
                let k = ["alpha", "r0", "epsilon", "ode_step", "quad_tol"].into_iter().find(|&k| k == key).unwrap();
                map_keys.insert(k, parse_num(key, value).map_err(err)?);
            }
            "preset" => cfg.preset = Preset::parse(value).map_err(|e| err(e.to_string()))?,
            "command" => cfg.command = Command::parse(value).map_err(|e| err(e.to_string()))?,
            "seed" => cfg.seed = parse_num(key, value).map_err(err)?,
            "output_dir" => cfg.output_dir = PathBuf::from(value),
            "workers" => cfg.workers = parse_num(key, value).map_err(err)?,
            _ if key.starts_with("derived.") => {
                derived.push((line_no, key["derived.".len()..].to_string(), parse_num(key, value).map_err(err)?));
            }
            _ => {
                if !cfg.settings.set(key, value).map_err(err)? {
                    return Err(err(format!("unknown key '{key}'")));
                }
            }
        }
    }
    let get = |k: &str, d: f64| map_keys.get(k).copied().unwrap_or(d);
    cfg.params = MapParams::new(
        get("alpha", MapParams::DEFAULT_ALPHA),
        get("r0", MapParams::DEFAULT_R0),
        get("epsilon", cfg.preset.epsilon()),
        get("ode_step", MapParams::DEFAULT_ODE_STEP),
        get("quad_tol", MapParams::DEFAULT_QUAD_TOL),
    )
    .map_err(|e| match e {
        KatokError::InvalidParams(m) => KatokError::Config(m),
        other => other,
    })?;
    if cfg.workers == 0 {
        return Err(KatokError::Config("workers must be at least 1".into()));
    }
    cfg.settings.validate()?;
    if !derived.is_empty() {
        let values = derived_constants(&cfg.params)?;
        for (line, name, recorded) in derived {
            let (_, actual) = values.iter().find(|(k, _)| *k == name).ok_or_else(|| KatokError::ConfigParse {
                line,
                message: format!("unknown derived constant '{name}'"),
            })?;
            if (actual - recorded).abs() > 1e-12 * actual.abs().max(1.0) {
                return Err(KatokError::ConfigParse {
                    line,
                    message: format!("derived constant {name} = {recorded} disagrees with the recomputed {actual}"),
                });
            }
        }
    }
    Ok(cfg)
}

/// Read and validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| KatokError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    /// The manifest: every setting, then every derived constant.
    pub fn manifest(&self) -> Result<String> {
        let mut out = String::new();
        let p = &self.params;
        let _ = writeln!(out, "# katoklab {}", env!("CARGO_PKG_VERSION"));
        let lines: Vec<(&str, String)> = vec![
            ("command", self.command.name().to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("workers", self.workers.to_string()),
            ("preset", self.preset.name().to_string()),
            ("alpha", p.alpha.to_string()),
            ("r0", p.r0.to_string()),
            ("epsilon", p.epsilon.to_string()),
            ("ode_step", p.ode_step.to_string()),
            ("quad_tol", p.quad_tol.to_string()),
        ];
        for (k, v) in lines.into_iter().chain(self.settings.entries()) {
            let _ = writeln!(out, "{k}={v}");
        }
        for (k, v) in derived_constants(p)? {
            let _ = writeln!(out, "derived.{k}={v}");
        }
        Ok(out)
    }

    /// The manifest written next to the outputs. It leaves out the worker count and the
    /// output directory, neither of which may influence the written bytes.
    pub fn artifact_manifest(&self) -> Result<String> {
        Ok(self
            .manifest()?
            .lines()
            .filter(|l| !l.starts_with("workers=") && !l.starts_with("output_dir="))
            .map(|l| format!("{l}\n"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("alpha=0.1\n").unwrap();
        assert_eq!(cfg.params, MapParams::preset(Preset::Pressure));
        assert_eq!(cfg.settings, Settings::default());
        let m = cfg.manifest().unwrap();
        for key in ["r1", "beta", "gamma", "c0", "kappa0"] {
            assert!(m.contains(&format!("derived.{key}=")), "{key} missing");
        }
    }

    #[test]
    fn invalid_alpha_is_named() {
        let e = parse_config("alpha=1.5").unwrap_err();
        assert!(e.to_string().contains("alpha must lie in (0, 0.5)"), "{e}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_config("# comment\nalpha=0.1\nbogus=3\n").unwrap_err();
        assert_eq!(e, KatokError::ConfigParse { line: 3, message: "unknown key 'bogus'".into() });
        assert!(matches!(parse_config("seed=x"), Err(KatokError::ConfigParse { line: 1, .. })));
        assert!(matches!(parse_config("\nno equals sign"), Err(KatokError::ConfigParse { line: 2, .. })));
        assert!(matches!(parse_config("seed=1\nseed=2"), Err(KatokError::ConfigParse { line: 2, .. })));
        assert!(parse_config("command=plot").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut cfg =
            parse_config("preset=product\nseed=42\ncommand=ldp\ncurve_n=5,6,7,8\nlinger_rho=1e-6,3e-7").unwrap();
        cfg.workers = 4;
        let back = parse_config(&cfg.manifest().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let tampered = cfg.manifest().unwrap().replace("derived.beta=", "derived.beta=1");
        assert!(parse_config(&tampered).is_err());
    }
}
