//! Run configuration: parsing, defaults and construction of samples.

use std::path::PathBuf;

use hyperscope::avset::SolverOptions;
use hyperscope::construct::{
    cluster_process, displace, lattice, phonon_lattice, place_in_tiling_with, poisson, renewal_product, zeta_renewal,
    ClusterSpec, Displacement, Placement, PlacementReport, PointConfig, RenewalSpec,
};
use hyperscope::geom::TorusBox;
use hyperscope::randfield::{synthesize_field, CovarianceSpec};
use hyperscope::realspace::TestFunction;
use hyperscope::rng;
use hyperscope::tessellate::{fair_stit, SplitDirectionSpec, TilingDiagnostics};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn uniform_sphere() -> SplitDirectionSpec {
    SplitDirectionSpec::UniformSphere
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstructorSpec {
    Poisson {
        d: usize,
        #[serde(rename = "L")]
        side: f64,
        #[serde(default = "one")]
        intensity: f64,
    },
    Lattice {
        d: usize,
        #[serde(rename = "L")]
        side: f64,
        #[serde(default = "one")]
        spacing: f64,
    },
    FairStit {
        d: usize,
        #[serde(rename = "L")]
        side: f64,
        rounds: usize,
        #[serde(default = "uniform_sphere")]
        directions: SplitDirectionSpec,
        placement: Placement,
        #[serde(default)]
        solver: SolverOptions,
    },
    Cluster {
        progenitor: Box<ConstructorSpec>,
        cluster: ClusterSpec,
    },
    ZetaRenewal {
        s: f64,
        length: f64,
    },
    RenewalProduct {
        d: usize,
        #[serde(rename = "L")]
        side: f64,
        s: f64,
    },
    DisplacedLattice {
        d: usize,
        #[serde(rename = "L")]
        side: f64,
        #[serde(default = "one")]
        spacing: f64,
        displacement: DisplacementSpec,
    },
    Phonon {
        #[serde(rename = "L")]
        side: f64,
        kappa: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisplacementSpec {
    IidGaussian { sigma: f64 },
    GaussianField { covariance: CovarianceSpec, grid_n: usize },
}

/// Side products of building one sample.
#[derive(Debug, Clone, Default)]
pub struct SampleInfo {
    pub placement: Option<PlacementReport>,
    pub tiling: Option<TilingDiagnostics>,
    pub field_clip_fraction: Option<f64>,
}

impl ConstructorSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Poisson { .. } => "poisson",
            Self::Lattice { .. } => "lattice",
            Self::FairStit { .. } => "fair-stit",
            Self::Cluster { .. } => "cluster",
            Self::ZetaRenewal { .. } => "zeta-renewal",
            Self::RenewalProduct { .. } => "renewal-product",
            Self::DisplacedLattice { .. } => "displaced-lattice",
            Self::Phonon { .. } => "phonon",
        }
    }

    /// One sample from its own seed.
    pub fn build(&self, seed: u64) -> hyperscope::Result<(PointConfig, SampleInfo)> {
        let mut info = SampleInfo::default();
        let config = match self {
            Self::Poisson { d, side, intensity } => poisson(TorusBox::new(*d, *side)?, *intensity, seed)?,
            Self::Lattice { d, side, spacing } => lattice(TorusBox::new(*d, *side)?, *spacing, seed)?,
            Self::FairStit {
                d,
                side,
                rounds,
                directions,
                placement,
                solver,
            } => {
                let tiling = fair_stit(TorusBox::new(*d, *side)?, *rounds, directions, seed)?;
                info.tiling = Some(tiling.diagnostics());
                let (c, report) = place_in_tiling_with(&tiling, *placement, seed, solver)?;
                info.placement = Some(report);
                c
            }
            Self::Cluster { progenitor, cluster } => {
                let (p, inner) = progenitor.build(rng::child_seed(seed, "progenitor", &[]))?;
                info = inner;
                cluster_process(&p, cluster, seed)?
            }
            Self::ZetaRenewal { s, length } => zeta_renewal(&RenewalSpec { s: *s, length: *length }, seed)?,
            Self::RenewalProduct { d, side, s } => renewal_product(TorusBox::new(*d, *side)?, *s, seed)?,
            Self::DisplacedLattice {
                d,
                side,
                spacing,
                displacement,
            } => {
                let b = TorusBox::new(*d, *side)?;
                let base = lattice(b, *spacing, seed)?;
                let disp = match displacement {
                    DisplacementSpec::IidGaussian { sigma } => Displacement::IidGaussian { sigma: *sigma },
                    DisplacementSpec::GaussianField { covariance, grid_n } => {
                        let field = synthesize_field(b, *grid_n, covariance, rng::child_seed(seed, "field-sample", &[]))?;
                        info.field_clip_fraction = Some(field.clip_fraction);
                        Displacement::Field(field)
                    }
                };
                displace(&base, &disp, seed)?
            }
            Self::Phonon { side, kappa } => phonon_lattice(TorusBox::new(3, *side)?, *kappa, seed)?,
        };
        Ok((config, info))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PointFormat {
    #[default]
    Csv,
    Binary,
}

impl PointFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Binary => "hspt",
        }
    }
}

/// Fit window: fixed bounds, or bounded below by the noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Fixed([f64; 2]),
    AboveFloor { floor_factor: f64, k_cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadiusGrid {
    List(Vec<f64>),
    Range {
        from: f64,
        to: f64,
        count: usize,
        #[serde(default = "yes")]
        log: bool,
    },
}

impl RadiusGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { from, to, count, log } => {
                let n = *count;
                if n == 1 {
                    return vec![*from];
                }
                (0..n)
                    .map(|i| {
                        let t = i as f64 / (n - 1) as f64;
                        if *log {
                            (from.ln() + t * (to.ln() - from.ln())).exp()
                        } else {
                            from + t * (to - from)
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Declared expectation for a fit or a stealth value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    #[serde(default)]
    pub exponent_min: Option<f64>,
    #[serde(default)]
    pub exponent_max: Option<f64>,
    #[serde(default)]
    pub value_max: Option<f64>,
}

impl Expect {
    pub fn check_exponent(&self, p: f64) -> bool {
        self.exponent_min.is_none_or(|m| p >= m) && self.exponent_max.is_none_or(|m| p <= m)
    }
}

fn sixteen() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnalysisSpec {
    Sf {
        k_max: f64,
        bin_width: f64,
        #[serde(default = "yes")]
        exclude_bragg: bool,
        window: WindowSpec,
        #[serde(default)]
        expect: Expect,
    },
    Var {
        test_function: TestFunction,
        radii: RadiusGrid,
        #[serde(default = "sixteen")]
        centers: usize,
        #[serde(default)]
        center_seed: u64,
        window: [f64; 2],
        #[serde(default)]
        expect: Expect,
    },
    Stealth {
        eps: f64,
        #[serde(default)]
        expect: Expect,
    },
}

impl AnalysisSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Sf { .. } => "sf",
            Self::Var { .. } => "var",
            Self::Stealth { .. } => "stealth",
        }
    }
}

fn default_samples() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("hyperscope-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub constructor: ConstructorSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; never changes results.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: PointFormat,
    /// Pipeline only: also write the point files.
    #[serde(default = "yes")]
    pub write_points: bool,
    #[serde(default)]
    pub analysis: Vec<AnalysisSpec>,
}

/// First key present in `input` but absent from `resolved`, as a path.
fn unknown_key(input: &Value, resolved: &Value, path: &str) -> Option<String> {
    match (input, resolved) {
        (Value::Object(a), Value::Object(b)) => a.iter().find_map(|(k, v)| {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            match b.get(k) {
                None => Some(p),
                Some(w) => unknown_key(v, w, &p),
            }
        }),
        (Value::Array(a), Value::Array(b)) => a
            .iter()
            .zip(b)
            .enumerate()
            .find_map(|(i, (v, w))| unknown_key(v, w, &format!("{path}[{i}]"))),
        _ => None,
    }
}

type ParseError = (String, String);

/// Enum tag keys used across the schema.
const TAGS: [&str; 3] = ["name", "kind", "mode"];

fn parse_at(value: &Value) -> Result<RunConfig, (Vec<Segment>, String)> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let segs = e
            .path()
            .iter()
            .filter_map(|s| match s {
                serde_path_to_error::Segment::Map { key } => Some(Segment::Key(key.clone())),
                serde_path_to_error::Segment::Seq { index } => Some(Segment::Index(*index)),
                _ => None,
            })
            .collect();
        (segs, e.inner().to_string())
    })
}

#[derive(Clone)]
enum Segment {
    Key(String),
    Index(usize),
}

fn render(path: &[Segment]) -> String {
    let mut s = String::new();
    for seg in path {
        match seg {
            Segment::Key(k) if s.is_empty() => s.push_str(k),
            Segment::Key(k) => {
                s.push('.');
                s.push_str(k);
            }
            Segment::Index(i) => s.push_str(&format!("[{i}]")),
        }
    }
    if s.is_empty() {
        s.push('.');
    }
    s
}

fn node_mut<'a>(v: &'a mut Value, path: &[Segment]) -> Option<&'a mut Value> {
    path.iter().try_fold(v, |v, seg| match seg {
        Segment::Key(k) => v.get_mut(k.as_str()),
        Segment::Index(i) => v.get_mut(*i),
    })
}

/// Deserialize, refining error paths that stop at a tagged enum (whose
/// content is buffered, so the inner field is lost): drop each member in
/// turn; the culprit is the member whose removal changes the error.
fn parse_value(value: &Value) -> Result<RunConfig, ParseError> {
    let (mut path, msg) = match parse_at(value) {
        Ok(c) => return Ok(c),
        Err(e) => e,
    };
    let mut probe = value.clone();
    loop {
        let keys: Vec<String> = match node_mut(&mut probe, &path) {
            Some(Value::Object(m)) => m.keys().cloned().collect(),
            _ => break,
        };
        let mut found = None;
        for k in keys.iter().filter(|k| !TAGS.contains(&k.as_str())) {
            let mut trial = probe.clone();
            if let Some(Value::Object(m)) = node_mut(&mut trial, &path) {
                m.remove(k);
            }
            match parse_at(&trial) {
                Err((_, m)) if m == msg => {}
                _ => found = Some(k.clone()),
            }
            if found.is_some() {
                break;
            }
        }
        match found {
            Some(k) => path.push(Segment::Key(k)),
            None => break,
        }
    }
    Err((render(&path), msg))
}

impl RunConfig {
    /// Parse a config, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("malformed JSON: {e}")))?;
        if value.get("manifest_version").is_some() {
            value = value
                .get("config")
                .cloned()
                .ok_or_else(|| CliError::config("manifest has no config member"))?;
        }
        let cfg: RunConfig = parse_value(&value).map_err(|(path, msg)| CliError::config(format!("at `{path}`: {msg}")))?;
        let resolved = serde_json::to_value(&cfg).map_err(|e| CliError::config(e.to_string()))?;
        if let Some(p) = unknown_key(&value, &resolved, "") {
            return Err(CliError::config(format!("at `{p}`: unknown field")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.samples == 0 {
            return Err(CliError::config("at `samples`: must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(CliError::config("at `workers`: must be at least 1"));
        }
        for (i, a) in self.analysis.iter().enumerate() {
            let bad = |field: &str, msg: &str| Err(CliError::config(format!("at `analysis[{i}].{field}`: {msg}")));
            match a {
                AnalysisSpec::Sf { k_max, bin_width, window, .. } => {
                    if !(*k_max > 0.0) {
                        return bad("k_max", "must be positive");
                    }
                    if !(*bin_width > 0.0) {
                        return bad("bin_width", "must be positive");
                    }
                    if let WindowSpec::Fixed([lo, hi]) = window {
                        if !(lo < hi) {
                            return bad("window", "lower bound must be below the upper bound");
                        }
                    }
                }
                AnalysisSpec::Var { radii, window, .. } => {
                    let r = radii.values();
                    if r.is_empty() || r.windows(2).any(|w| w[0] >= w[1]) || r[0] <= 0.0 {
                        return bad("radii", "must be positive and strictly increasing");
                    }
                    if !(window[0] < window[1]) {
                        return bad("window", "lower bound must be below the upper bound");
                    }
                }
                AnalysisSpec::Stealth { eps, .. } => {
                    if !(*eps > 0.0) {
                        return bad("eps", "must be positive");
                    }
                }
            }
        }
        Ok(())
    }

    /// Seed of sample `i`.
    pub fn sample_seed(&self, i: usize) -> u64 {
        rng::child_seed(self.seed, "sample", &[i as u64])
    }
}
