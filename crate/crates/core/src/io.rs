//! Run configuration, binary snapshots and CSV series.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! [grid]
//! n = 128            # required
//! len = 6.283185307179586
//!
//! [params]           # all required except n_cutoff
//! a = 0.2
//! b = 0.5
//! c = 1.0
//! gamma = 1.0
//! nu = 0.1
//! L = 0.1
//! # n_cutoff = 16
//!
//! [time]
//! t_end = 1.0        # required
//! dt = "auto"        # or a number
//! cfl = 0.4
//! scheme = "if-rk2"
//!
//! [init]
//! preset = "random_spectrum"   # taylor_green | uniaxial_wave | random_spectrum
//! # snapshot = "start.qtns"    # instead of a preset
//! seed = 0
//! u_amplitude = 0.5
//! q_amplitude = 0.3
//! k_min = 1.0
//! k_max = 8.0
//! slope = 1.0
//!
//! [output]
//! dir = "run"
//! stride = 10
//! probes = ["l2", "energy"]
//! ```
//!
//! Snapshot layout (little endian): magic `QTNS`, `u16` version 1, `u32` n,
//! `f64` len, `f64` time, six `f64` parameters `a, b, c, Γ, ν, L`, then the
//! two velocity planes and the five Q coefficient planes, each `n²` values
//! with index `i₂·n + i₁`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::integrator::{NormSeries, Probe, Scheme, TimeConfig, TimeStep};
use crate::qtensor::{ModelError, ModelParams, QTensorField, State, VelocityField};
use crate::random::{self, Draw, Spectrum};
use crate::spectral::{Grid, GridError, RealField, SpectralField};
use crate::verify::Report;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}{message}", location(.file.as_deref(), *.line))]
    Config {
        file: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: short read, expected {expected} bytes, found {found}")]
    ShortRead { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: velocity divergence {value:e} exceeds the 1e-8 relative limit")]
    Divergence { path: PathBuf, value: f64 },
    #[error("{0}")]
    Series(String),
}

fn location(file: Option<&Path>, line: Option<usize>) -> String {
    match (file, line) {
        (Some(f), Some(l)) => format!("{}:{l}: ", f.display()),
        (Some(f), None) => format!("{}: ", f.display()),
        (None, Some(l)) => format!("line {l}: "),
        (None, None) => String::new(),
    }
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Named initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `u = A(sin x cos y, −cos x sin y)`, `Q = 0`.
    TaylorGreen,
    /// `Q = s(x)(e₃⊗e₃ − I/3)` with a random band-limited scalar `s`, plus
    /// an optional random velocity.
    UniaxialWave,
    /// Random divergence-free `u` and random `Q` with a power-law spectrum.
    RandomSpectrum,
}

impl Preset {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "taylor_green" => Some(Self::TaylorGreen),
            "uniaxial_wave" => Some(Self::UniaxialWave),
            "random_spectrum" => Some(Self::RandomSpectrum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Preset {
        preset: Preset,
        seed: u64,
        u_amplitude: f64,
        q_amplitude: f64,
        spectrum: Spectrum,
    },
    Snapshot(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub stride: usize,
    pub probes: Vec<Probe>,
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: Grid,
    pub params: ModelParams,
    pub time: TimeConfig,
    pub init: InitSpec,
    pub output: OutputSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    params: RawParams,
    time: RawTime,
    #[serde(default)]
    init: RawInit,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: usize,
    #[serde(default = "two_pi")]
    len: f64,
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    a: f64,
    b: f64,
    c: f64,
    gamma: f64,
    nu: f64,
    #[serde(rename = "L")]
    l: f64,
    n_cutoff: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDt {
    Fixed(f64),
    Word(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_end: f64,
    dt: Option<RawDt>,
    #[serde(default = "default_cfl")]
    cfl: f64,
    #[serde(default = "default_scheme")]
    scheme: String,
}

fn default_cfl() -> f64 {
    0.4
}

fn default_scheme() -> String {
    "if-rk2".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    preset: Option<String>,
    snapshot: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_u_amp")]
    u_amplitude: f64,
    #[serde(default = "default_q_amp")]
    q_amplitude: f64,
    #[serde(default = "default_k_min")]
    k_min: f64,
    #[serde(default = "default_k_max")]
    k_max: f64,
    #[serde(default = "default_slope")]
    slope: f64,
}

fn default_u_amp() -> f64 {
    0.5
}
fn default_q_amp() -> f64 {
    0.3
}
fn default_k_min() -> f64 {
    1.0
}
fn default_k_max() -> f64 {
    8.0
}
fn default_slope() -> f64 {
    1.0
}

impl Default for RawInit {
    fn default() -> Self {
        Self {
            preset: None,
            snapshot: None,
            seed: 0,
            u_amplitude: default_u_amp(),
            q_amplitude: default_q_amp(),
            k_min: default_k_min(),
            k_max: default_k_max(),
            slope: default_slope(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default = "default_dir")]
    dir: PathBuf,
    #[serde(default = "default_stride")]
    stride: usize,
    #[serde(default = "default_probes")]
    probes: Vec<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("run")
}
fn default_stride() -> usize {
    10
}
fn default_probes() -> Vec<String> {
    vec!["l2".into(), "energy".into()]
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            stride: default_stride(),
            probes: default_probes(),
        }
    }
}

/// 1-based line of `key = …` inside `[section]`, if present.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// 1-based line of a byte offset.
fn offset_line(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, IoError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| IoError::Config {
        file: None,
        line: e.span().map(|s| offset_line(text, s.start)),
        message: e.message().to_string(),
    })?;
    let err = |section: &str, key: &str, message: String| IoError::Config {
        file: None,
        line: key_line(text, section, key),
        message,
    };

    let grid = Grid::new(raw.grid.n, raw.grid.len).map_err(|e| {
        let key = match e {
            GridError::BadSize(_) => "n",
            GridError::BadLength(_) => "len",
        };
        err("grid", key, e.to_string())
    })?;

    let rp = &raw.params;
    let params = ModelParams::new(rp.a, rp.b, rp.c, rp.gamma, rp.nu, rp.l)
        .map(|p| p.with_cutoff(rp.n_cutoff))
        .and_then(|p| p.validate().map(|_| p))
        .map_err(|e| {
            let key = match &e {
                ModelError::Constraint { name, .. } => *name,
                ModelError::Cutoff => "n_cutoff",
            };
            err("params", key, e.to_string())
        })?;

    let dt = match &raw.time.dt {
        None => TimeStep::Auto,
        Some(RawDt::Word(w)) if w == "auto" => TimeStep::Auto,
        Some(RawDt::Word(w)) => return Err(err("time", "dt", format!("dt must be a number or \"auto\", got \"{w}\""))),
        Some(RawDt::Fixed(v)) => TimeStep::Fixed(*v),
    };
    let scheme = match raw.time.scheme.as_str() {
        "if-rk2" => Scheme::IfRk2,
        other => return Err(err("time", "scheme", format!("unknown scheme \"{other}\", expected \"if-rk2\""))),
    };
    let time = TimeConfig {
        dt,
        t_end: raw.time.t_end,
        cfl: raw.time.cfl,
        scheme,
    };
    time.validate().map_err(|e| {
        let msg = e.to_string();
        let key = ["dt", "t_end", "cfl"].into_iter().find(|k| msg.contains(k)).unwrap_or("t_end");
        err("time", key, msg)
    })?;

    let ri = &raw.init;
    let init = match (&ri.preset, &ri.snapshot) {
        (Some(_), Some(_)) => {
            return Err(err("init", "snapshot", "give either `preset` or `snapshot`, not both".into()));
        }
        (None, Some(path)) => InitSpec::Snapshot(path.clone()),
        (preset, None) => {
            let name = preset.as_deref().unwrap_or("random_spectrum");
            let preset = Preset::parse(name).ok_or_else(|| {
                err(
                    "init",
                    "preset",
                    format!("unknown preset \"{name}\", expected taylor_green, uniaxial_wave or random_spectrum"),
                )
            })?;
            for (key, v) in [("u_amplitude", ri.u_amplitude), ("q_amplitude", ri.q_amplitude)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(err("init", key, format!("{key} must be finite and non-negative, got {v}")));
                }
            }
            if !(ri.k_min >= 0.0 && ri.k_max >= ri.k_min && ri.k_max.is_finite()) {
                return Err(err("init", "k_max", format!("need 0 ≤ k_min ≤ k_max, got {} and {}", ri.k_min, ri.k_max)));
            }
            InitSpec::Preset {
                preset,
                seed: ri.seed,
                u_amplitude: ri.u_amplitude,
                q_amplitude: ri.q_amplitude,
                spectrum: Spectrum::new(ri.k_min, ri.k_max, ri.slope),
            }
        }
    };

    if raw.output.stride < 1 {
        return Err(err("output", "stride", "stride must be at least 1".into()));
    }
    let probes = raw
        .output
        .probes
        .iter()
        .map(|p| Probe::parse(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|m| err("output", "probes", m))?;

    Ok(RunConfig {
        grid,
        params,
        time,
        init,
        output: OutputSpec {
            dir: raw.output.dir,
            stride: raw.output.stride,
            probes,
        },
    })
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_config(&text).map_err(|e| match e {
        IoError::Config { line, message, .. } => IoError::Config {
            file: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    })
}

/// Builds a preset initial state, dealiased and with a mean-zero
/// divergence-free velocity.
pub fn preset_state(grid: &Grid, preset: Preset, seed: u64, u_amp: f64, q_amp: f64, spectrum: &Spectrum) -> State {
    let mut rng = random::rng(seed);
    let (u, q) = match preset {
        Preset::TaylorGreen => {
            let w = std::f64::consts::TAU / grid.len();
            let u = VelocityField::from_fn(grid, |x, y| {
                [u_amp * (w * x).sin() * (w * y).cos(), -u_amp * (w * x).cos() * (w * y).sin()]
            });
            (u.spectral().clone(), SpectralField::zeros(grid, 5))
        }
        Preset::UniaxialWave => {
            let s = random::random_field(grid, 1, spectrum, Draw::Gaussian, q_amp, &mut rng);
            let u = random::random_solenoidal(grid, spectrum, Draw::Gaussian, u_amp, &mut rng);
            // e₃⊗e₃ − I/3 = diag(−1/3, −1/3, 2/3) is −(√6/3) times the second basis matrix.
            let coef = -(6f64.sqrt()) / 3.0;
            let mut comps = vec![vec![num_complex::Complex64::new(0.0, 0.0); grid.size()]; 5];
            comps[1] = s.comp(0).iter().map(|v| v * coef).collect();
            (u, SpectralField::from_comps(grid, comps))
        }
        Preset::RandomSpectrum => {
            let u = random::random_solenoidal(grid, spectrum, Draw::Gaussian, u_amp, &mut rng);
            let q = random::random_field(grid, 5, spectrum, Draw::Gaussian, q_amp, &mut rng);
            (u, q)
        }
    };
    let mut u = u.leray_project().dealias();
    u.zero_mean();
    State::new(VelocityField::from_spectral(u), QTensorField::from_spectral(q.dealias()), 0.0)
}

/// Initial state described by a configuration. Snapshot paths are resolved
/// relative to `base`.
pub fn initial_state(cfg: &RunConfig, base: &Path) -> Result<State, IoError> {
    match &cfg.init {
        InitSpec::Preset {
            preset,
            seed,
            u_amplitude,
            q_amplitude,
            spectrum,
        } => Ok(preset_state(&cfg.grid, *preset, *seed, *u_amplitude, *q_amplitude, spectrum)),
        InitSpec::Snapshot(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let snap = read_snapshot(&path)?;
            if snap.state.grid() != &cfg.grid {
                return Ok(snap.state.resample(&cfg.grid));
            }
            Ok(snap.state)
        }
    }
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"QTNS";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 8 + 6 * 8;

/// Contents of a snapshot file.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub state: State,
    /// `a, b, c, Γ, ν, L` as stored.
    pub params: [f64; 6],
}

impl Snapshot {
    /// Stored parameters, validated.
    pub fn model_params(&self) -> Result<ModelParams, ModelError> {
        let [a, b, c, g, nu, l] = self.params;
        ModelParams::new(a, b, c, g, nu, l)
    }
}

/// Serializes a state and its parameters.
pub fn encode_snapshot(s: &State, params: &[f64; 6]) -> Vec<u8> {
    let grid = s.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 7 * grid.size() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.len().to_le_bytes());
    out.extend_from_slice(&s.t.to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for plane in s.u.real().comps().iter().chain(s.q.real().comps()) {
        for v in plane {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_snapshot(s: &State, params: &[f64; 6], path: &Path) -> Result<(), IoError> {
    fs::write(path, encode_snapshot(s, params)).map_err(file_err(path))
}

/// Parses snapshot bytes; `path` only labels errors.
pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<Snapshot, IoError> {
    let format = |message: String| IoError::Format {
        path: path.to_path_buf(),
        message,
    };
    let short = |expected| IoError::ShortRead {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(short(HEADER_LEN));
    }
    if &bytes[..4] != MAGIC {
        return Err(format(format!("bad magic {:?}, expected \"QTNS\"", String::from_utf8_lossy(&bytes[..4]))));
    }
    if bytes.len() < HEADER_LEN {
        return Err(short(HEADER_LEN));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format(format!("unsupported version {version}, expected {VERSION}")));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let len = f64_at(10);
    let t = f64_at(18);
    let params: [f64; 6] = std::array::from_fn(|k| f64_at(26 + 8 * k));
    let grid = Grid::new(n, len).map_err(|e| format(e.to_string()))?;
    let expected = HEADER_LEN + 7 * n * n * 8;
    if bytes.len() < expected {
        return Err(short(expected));
    }
    if bytes.len() > expected {
        return Err(format(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let planes: Vec<Vec<f64>> = (0..7)
        .map(|p| (0..n * n).map(|i| f64_at(HEADER_LEN + 8 * (p * n * n + i))).collect())
        .collect();
    let mut it = planes.into_iter();
    let u = VelocityField::from_real(RealField::from_comps(&grid, it.by_ref().take(2).collect()));
    let q = QTensorField::from_real(RealField::from_comps(&grid, it.collect()));
    if !(u.real().is_finite() && q.real().is_finite()) {
        return Err(format("non-finite field values".into()));
    }
    let div = u.relative_divergence();
    if div > 1e-8 {
        return Err(IoError::Divergence {
            path: path.to_path_buf(),
            value: div,
        });
    }
    Ok(Snapshot {
        state: State::new(u, q, t),
        params,
    })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, IoError> {
    let bytes = fs::read(path).map_err(file_err(path))?;
    decode_snapshot(&bytes, path)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |e| IoError::Series(format!("{}: {e}", path.display()))
}

/// Writes `t,<names…>` followed by one row per sample, 17 significant digits.
pub fn emit_series(ns: &NormSeries, path: &Path) -> Result<(), IoError> {
    if ns.is_empty() {
        return Err(IoError::Series(format!("{}: refusing to write an empty series", path.display())));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["t".to_string()];
    header.extend(ns.names.iter().cloned());
    w.write_record(&header).map_err(csv_err(path))?;
    for (t, row) in ns.times.iter().zip(&ns.rows) {
        let rec: Vec<String> = std::iter::once(t).chain(row).map(|v| format!("{v:.16e}")).collect();
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

/// Reads a series written by [`emit_series`].
pub fn read_series(path: &Path) -> Result<NormSeries, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(IoError::Series(format!("{}: first column must be `t`", path.display())));
    }
    let mut ns = NormSeries::new(header[1..].to_vec());
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Series(format!("{}: row {}: {e}", path.display(), k + 2)))?;
        ns.push(vals[0], vals[1..].to_vec());
    }
    Ok(ns)
}

/// Writes reports as CSV, one line per measured or fitted value.
pub fn write_reports(reports: &[Report], path: &Path) -> Result<(), IoError> {
    let mut text = String::from(Report::CSV_HEADER);
    text.push('\n');
    for r in reports {
        for row in r.csv_rows() {
            text.push_str(&row);
            text.push('\n');
        }
    }
    fs::write(path, text).map_err(file_err(path))
}

// ---------------------------------------------------------------------------
// Run directories
// ---------------------------------------------------------------------------

pub const SERIES_FILE: &str = "series.csv";
pub const TWIN_FILE: &str = "twin.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "reports.csv";

/// File name of the `k`-th stored snapshot.
pub fn snapshot_name(prefix: &str, k: usize) -> String {
    format!("{prefix}_{k:06}.qtns")
}

/// Sorted snapshot paths with the given prefix in `dir`.
pub fn list_snapshots(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, IoError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(file_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&format!("{prefix}_")) && n.ends_with(".qtns"))
        })
        .collect();
    out.sort();
    Ok(out)
}

pub fn create_dir(dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(file_err(dir))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(file_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nn = 16\n[params]\na = 0.2\nb = 0.5\nc = 1.0\ngamma = 1.0\nnu = 0.1\nL = 0.1\n[time]\nt_end = 1.0\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.time.cfl, 0.4);
        assert_eq!(cfg.time.scheme, Scheme::IfRk2);
        assert_eq!(cfg.time.dt, TimeStep::Auto);
        assert_eq!(cfg.output.stride, 10);
    }

    #[test]
    fn key_lines_are_found() {
        assert_eq!(key_line(MINIMAL, "params", "c"), Some(6));
        assert_eq!(key_line(MINIMAL, "grid", "c"), None);
    }
}
