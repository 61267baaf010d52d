//! `generate`, `analyze` and `pipeline`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hyperscope::construct::PointConfig;
use hyperscope::fit::ScalingFit;
use hyperscope::geom::TorusBox;
use hyperscope::io;
use hyperscope::realspace::{
    fit_variance_exponent, scan_centers, stealth_from_statistics, linear_statistic, StealthVariance, TestFunction,
    VarianceAccumulator,
};
use hyperscope::spectral::{fit_exponent, SfAccumulator, SfOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisSpec, Expect, PointFormat, RunConfig, SampleInfo, WindowSpec};
use crate::svg::{Plot, Series};
use crate::{resolve_workers, sha256_hex, with_pool, write_file, CliError, TOOL_VERSION};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    #[serde(default)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub cells: usize,
    pub failed_cells: usize,
    pub failure_fraction: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingSummary {
    pub samples: usize,
    pub cells: usize,
    pub min_volume: f64,
    pub max_volume: f64,
    pub mean_vertices: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Fully resolved configuration; `generate` accepts this file as input.
    pub config: RunConfig,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub timings_s: BTreeMap<String, f64>,
    pub outputs: Vec<OutputFile>,
    pub solver: Option<SolverSummary>,
    pub tiling: Option<TilingSummary>,
    pub field_max_clip_fraction: Option<f64>,
}

enum Engine {
    Sf(SfAccumulator),
    Var(VarianceAccumulator),
    Stealth(Vec<f64>),
}

/// One analysis fed sample by sample.
pub struct Analysis {
    pub spec: AnalysisSpec,
    engine: Option<Engine>,
    error: Option<CliError>,
}

/// Everything an analysis produces.
#[derive(Debug, Clone, Default)]
pub struct Finished {
    pub csv: Option<String>,
    pub fit: Option<ScalingFit>,
    pub stealth: Option<StealthVariance>,
    pub svg: Option<String>,
    pub noise_floor: Option<f64>,
    pub pass: Option<bool>,
    pub error: Option<CliError>,
}

impl Analysis {
    pub fn new(spec: AnalysisSpec) -> Self {
        Self {
            spec,
            engine: None,
            error: None,
        }
    }

    fn init(&self, c: &PointConfig) -> hyperscope::Result<Engine> {
        Ok(match &self.spec {
            AnalysisSpec::Sf {
                k_max,
                bin_width,
                exclude_bragg,
                ..
            } => Engine::Sf(SfAccumulator::new(
                c.bounds,
                c.meta.bragg_spacing,
                &SfOptions {
                    k_max: *k_max,
                    bin_width: *bin_width,
                    exclude_bragg: *exclude_bragg,
                },
            )?),
            AnalysisSpec::Var {
                test_function,
                radii,
                centers,
                center_seed,
                ..
            } => {
                let centres = scan_centers(&c.bounds, *centers, *center_seed);
                Engine::Var(VarianceAccumulator::new(c.bounds, test_function, &radii.values(), centres)?)
            }
            AnalysisSpec::Stealth { .. } => Engine::Stealth(Vec::new()),
        })
    }

    pub fn add(&mut self, c: &PointConfig) {
        if self.error.is_some() {
            return;
        }
        if self.engine.is_none() {
            match self.init(c) {
                Ok(e) => self.engine = Some(e),
                Err(e) => {
                    self.error = Some(CliError::analysis(e.to_string()));
                    return;
                }
            }
        }
        let res = match self.engine.as_mut().unwrap() {
            Engine::Sf(acc) => acc.add(c),
            Engine::Var(acc) => acc.add(c),
            Engine::Stealth(v) => match &self.spec {
                AnalysisSpec::Stealth { eps, .. } => {
                    linear_statistic(c, &TestFunction::Sinc2Stealth { eps: *eps }, 1.0, &vec![0.0; c.dim()]).map(|x| v.push(x))
                }
                _ => unreachable!(),
            },
        };
        if let Err(e) = res {
            self.error = Some(CliError::analysis(e.to_string()));
        }
    }

    fn expect(&self) -> Expect {
        match &self.spec {
            AnalysisSpec::Sf { expect, .. } | AnalysisSpec::Var { expect, .. } | AnalysisSpec::Stealth { expect, .. } => {
                *expect
            }
        }
    }

    pub fn finish(&self, title: &str) -> Finished {
        let mut out = Finished::default();
        if let Some(e) = &self.error {
            out.error = Some(e.clone());
            return out;
        }
        let Some(engine) = &self.engine else {
            out.error = Some(CliError::analysis("no samples"));
            return out;
        };
        let expect = self.expect();
        let fail = |out: &mut Finished, e: hyperscope::Error| out.error = Some(CliError::analysis(e.to_string()));
        match (engine, &self.spec) {
            (Engine::Sf(acc), AnalysisSpec::Sf { window, .. }) => {
                let est = match acc.finish() {
                    Ok(e) => e,
                    Err(e) => {
                        fail(&mut out, e);
                        return out;
                    }
                };
                let csv = est.to_csv();
                out.noise_floor = Some(est.noise_floor);
                let win = match window {
                    WindowSpec::Fixed([a, b]) => Some((*a, *b)),
                    WindowSpec::AboveFloor { floor_factor, k_cap } => est.floor_window(*floor_factor, *k_cap),
                };
                match win {
                    None => out.error = Some(CliError::analysis("fit window empty: too few bins above the noise floor")),
                    Some(w) => match fit_exponent(&est, w) {
                        Ok(f) => {
                            out.pass = Some(expect.check_exponent(f.exponent));
                            out.fit = Some(f);
                        }
                        Err(e) => fail(&mut out, e),
                    },
                }
                let x: Vec<f64> = est.bins.iter().map(|b| b.k).collect();
                let y: Vec<f64> = est.bins.iter().map(|b| b.s).collect();
                let e: Vec<f64> = est.bins.iter().map(|b| b.stderr).collect();
                out.svg = Some(
                    Plot {
                        title,
                        xlabel: "k",
                        ylabel: "S(k)",
                        data: Series { x: &x, y: &y, err: &e },
                        fit: out.fit.map(|f| (f.exponent, f.amplitude, f.window)),
                        floor: Some(est.noise_floor),
                        csv_sha256: &sha256_hex(csv.as_bytes()),
                    }
                    .render(),
                );
                out.csv = Some(csv);
            }
            (Engine::Var(acc), AnalysisSpec::Var { window, .. }) => {
                let curve = match acc.finish() {
                    Ok(c) => c,
                    Err(e) => {
                        fail(&mut out, e);
                        return out;
                    }
                };
                let csv = curve.to_csv();
                match fit_variance_exponent(&curve, (window[0], window[1]), None) {
                    Ok(f) => {
                        out.pass = Some(expect.check_exponent(f.exponent));
                        out.fit = Some(f);
                    }
                    Err(e) => fail(&mut out, e),
                }
                // values ~ r^(-p), so the plotted slope is -p
                out.svg = Some(
                    Plot {
                        title,
                        xlabel: "r",
                        ylabel: "Var / r^d",
                        data: Series {
                            x: &curve.r,
                            y: &curve.values,
                            err: &curve.stderr,
                        },
                        fit: out.fit.map(|f| (-f.exponent, f.amplitude, f.window)),
                        floor: None,
                        csv_sha256: &sha256_hex(csv.as_bytes()),
                    }
                    .render(),
                );
                out.csv = Some(csv);
            }
            (Engine::Stealth(stats), AnalysisSpec::Stealth { eps, .. }) => match stealth_from_statistics(stats, *eps) {
                Ok(s) => {
                    out.pass = expect.value_max.map(|m| s.value <= m);
                    out.stealth = Some(s);
                }
                Err(e) => fail(&mut out, e),
            },
            _ => unreachable!(),
        }
        out
    }
}

/// Per-analysis entry of a pipeline report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub index: usize,
    pub kind: String,
    pub spec: AnalysisSpec,
    pub fit: Option<ScalingFit>,
    pub stealth: Option<StealthVariance>,
    pub noise_floor: Option<f64>,
    pub pass: Option<bool>,
    pub error: Option<String>,
    pub files: Vec<OutputFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    pub constructor: String,
    pub samples: usize,
    pub seed: u64,
    pub analyses: Vec<ReportEntry>,
    /// All declared expectations met and no analysis failed.
    pub pass: bool,
}

fn rel(dir: &Path, name: &str) -> (PathBuf, String) {
    (dir.join(name), name.to_string())
}

fn encode(c: &PointConfig, format: PointFormat) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    let r = match format {
        PointFormat::Csv => io::write_csv(c, &mut buf),
        PointFormat::Binary => io::write_binary(c, &mut buf),
    };
    r.map_err(|e| CliError::io(e.to_string()))?;
    Ok(buf)
}

/// Read a point file in either format.
pub fn read_points(path: &Path) -> Result<PointConfig, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let r = if bytes.starts_with(b"HSPT") {
        io::read_binary(&bytes)
    } else {
        io::read_csv(&bytes[..])
    };
    r.map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

struct Accum {
    solver: Option<SolverSummary>,
    tiling: Option<TilingSummary>,
    clip: Option<f64>,
}

impl Accum {
    fn add(&mut self, info: &SampleInfo) {
        if let Some(p) = &info.placement {
            let s = self.solver.get_or_insert_with(SolverSummary::default);
            s.cells += p.cells;
            s.failed_cells += p.failed_cells.len();
            s.failure_fraction = s.failed_cells as f64 / s.cells.max(1) as f64;
            s.max_residual = s.max_residual.max(p.max_residual);
        }
        if let Some(t) = &info.tiling {
            let s = self.tiling.get_or_insert(TilingSummary {
                samples: 0,
                cells: t.cells,
                min_volume: f64::INFINITY,
                max_volume: 0.0,
                mean_vertices: 0.0,
            });
            s.mean_vertices = (s.mean_vertices * s.samples as f64 + t.mean_vertices) / (s.samples + 1) as f64;
            s.samples += 1;
            s.min_volume = s.min_volume.min(t.min_volume);
            s.max_volume = s.max_volume.max(t.max_volume);
        }
        if let Some(c) = info.field_clip_fraction {
            self.clip = Some(self.clip.map_or(c, |m: f64| m.max(c)));
        }
    }
}

/// Build all samples in order, writing points if asked and feeding the analyses.
fn produce(
    cfg: &RunConfig,
    workers: usize,
    write_points: bool,
    analyses: &mut [Analysis],
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let mut acc = Accum {
        solver: None,
        tiling: None,
        clip: None,
    };
    let (mut t_build, mut t_write, mut t_analysis) = (0.0, 0.0, 0.0);
    let mut bounds: Option<TorusBox> = None;
    let mut start = 0;
    while start < cfg.samples {
        let end = (start + workers).min(cfg.samples);
        let t0 = Instant::now();
        let built: Vec<hyperscope::Result<(PointConfig, SampleInfo)>> = (start..end)
            .into_par_iter()
            .map(|i| cfg.constructor.build(cfg.sample_seed(i)))
            .collect();
        t_build += t0.elapsed().as_secs_f64();
        for (i, b) in (start..end).zip(built) {
            let (c, info) = b.map_err(|e| CliError::construction(format!("sample {i}: {e}")))?;
            bounds.get_or_insert(c.bounds);
            acc.add(&info);
            if write_points {
                let t0 = Instant::now();
                let name = format!("points-{i:04}.{}", cfg.format.extension());
                let (path, rel) = rel(&cfg.output_dir, &name);
                let digest = write_file(&path, &encode(&c, cfg.format)?)?;
                manifest.outputs.push(OutputFile {
                    path: rel,
                    sha256: digest,
                    points: Some(c.len()),
                });
                t_write += t0.elapsed().as_secs_f64();
            }
            let t0 = Instant::now();
            for a in analyses.iter_mut() {
                a.add(&c);
            }
            t_analysis += t0.elapsed().as_secs_f64();
        }
        start = end;
    }
    manifest.timings_s.insert("construct".into(), t_build);
    if write_points {
        manifest.timings_s.insert("write".into(), t_write);
    }
    if !analyses.is_empty() {
        manifest.timings_s.insert("analysis-accumulate".into(), t_analysis);
    }
    manifest.solver = acc.solver;
    manifest.tiling = acc.tiling;
    manifest.field_max_clip_fraction = acc.clip;
    Ok(())
}

fn new_manifest(cfg: &RunConfig, command: &str, workers: usize) -> RunManifest {
    RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        command: command.to_string(),
        config: cfg.clone(),
        seed: cfg.seed,
        workers,
        wall_time_s: 0.0,
        timings_s: BTreeMap::new(),
        outputs: Vec::new(),
        solver: None,
        tiling: None,
        field_max_clip_fraction: None,
    }
}

fn write_manifest(cfg: &RunConfig, m: &RunManifest) -> Result<PathBuf, CliError> {
    let path = cfg.output_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(m).map_err(|e| CliError::io(e.to_string()))?;
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

/// Write `R` point files and a manifest.
pub fn generate(cfg: &RunConfig, workers_override: Option<usize>) -> Result<RunManifest, CliError> {
    let workers = resolve_workers(workers_override.or(cfg.workers))?;
    let t0 = Instant::now();
    let mut m = new_manifest(cfg, "generate", workers);
    with_pool(workers, || produce(cfg, workers, true, &mut [], &mut m))??;
    m.wall_time_s = t0.elapsed().as_secs_f64();
    write_manifest(cfg, &m)?;
    Ok(m)
}

/// Files written for one finished analysis.
fn emit(dir: &Path, stem: &str, fin: &Finished) -> Result<Vec<OutputFile>, CliError> {
    let mut files = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<(), CliError> {
        let (path, rel) = rel(dir, &name);
        let sha256 = write_file(&path, bytes)?;
        files.push(OutputFile {
            path: rel,
            sha256,
            points: None,
        });
        Ok(())
    };
    if let Some(csv) = &fin.csv {
        put(format!("{stem}.csv"), csv.as_bytes())?;
    }
    if let Some(f) = &fin.fit {
        put(format!("{stem}.fit.json"), serde_json::to_string_pretty(f).unwrap().as_bytes())?;
    }
    if let Some(s) = &fin.stealth {
        put(format!("{stem}.json"), serde_json::to_string_pretty(s).unwrap().as_bytes())?;
    }
    if let Some(svg) = &fin.svg {
        put(format!("{stem}.svg"), svg.as_bytes())?;
    }
    Ok(files)
}

/// Generate, analyze and report in one pass without holding all samples.
pub fn pipeline(cfg: &RunConfig, workers_override: Option<usize>) -> Result<(Report, RunManifest), CliError> {
    let workers = resolve_workers(workers_override.or(cfg.workers))?;
    let t0 = Instant::now();
    let mut m = new_manifest(cfg, "pipeline", workers);
    let mut analyses: Vec<Analysis> = cfg.analysis.iter().cloned().map(Analysis::new).collect();
    with_pool(workers, || produce(cfg, workers, cfg.write_points, &mut analyses, &mut m))??;
    let t1 = Instant::now();
    let mut entries = Vec::new();
    for (i, a) in analyses.iter().enumerate() {
        let title = format!("{} {}", cfg.constructor.label(), a.spec.kind());
        let fin = with_pool(workers, || a.finish(&title))?;
        let files = emit(&cfg.output_dir, &format!("analysis-{i}-{}", a.spec.kind()), &fin)?;
        m.outputs.extend(files.iter().cloned());
        entries.push(ReportEntry {
            index: i,
            kind: a.spec.kind().to_string(),
            spec: a.spec.clone(),
            fit: fin.fit,
            stealth: fin.stealth,
            noise_floor: fin.noise_floor,
            pass: fin.pass,
            error: fin.error.map(|e| e.message),
            files,
        });
    }
    m.timings_s.insert("analysis-finish".into(), t1.elapsed().as_secs_f64());
    let pass = entries.iter().all(|e| e.error.is_none() && e.pass != Some(false));
    let report = Report {
        tool_version: TOOL_VERSION.to_string(),
        constructor: cfg.constructor.label().to_string(),
        samples: cfg.samples,
        seed: cfg.seed,
        analyses: entries,
        pass,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::io(e.to_string()))?;
    let (path, rel) = rel(&cfg.output_dir, "report.json");
    let sha256 = write_file(&path, text.as_bytes())?;
    m.outputs.push(OutputFile {
        path: rel,
        sha256,
        points: None,
    });
    m.wall_time_s = t0.elapsed().as_secs_f64();
    write_manifest(cfg, &m)?;
    Ok((report, m))
}

/// Expand directories to the point files they contain, sorted by name.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut v: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(format!("{}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| {
                    let name = q.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    name.starts_with("points-") && (name.ends_with(".csv") || name.ends_with(".hspt"))
                })
                .collect();
            v.sort();
            out.extend(v);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::config("no input point files"));
    }
    Ok(out)
}

/// `analyze`: stream input files through one analysis and write its outputs
/// as `<prefix>.csv`, `<prefix>.fit.json` (or `<prefix>.json`) and, with
/// `svg`, `<prefix>.svg`.
pub fn analyze(
    spec: AnalysisSpec,
    inputs: &[PathBuf],
    prefix: &Path,
    svg: bool,
    workers: Option<usize>,
) -> Result<(Finished, Vec<OutputFile>), CliError> {
    let workers = resolve_workers(workers)?;
    let files = expand_inputs(inputs)?;
    let mut a = Analysis::new(spec);
    let mut bounds: Option<TorusBox> = None;
    let mut intensity: Option<f64> = None;
    with_pool(workers, || -> Result<(), CliError> {
        for f in &files {
            let c = read_points(f)?;
            let b = *bounds.get_or_insert(c.bounds);
            if b != c.bounds {
                return Err(CliError::config(format!("{}: box differs from the first input", f.display())));
            }
            let lam = *intensity.get_or_insert(c.intensity());
            // a batch of one process has comparable intensities; flag gross mismatches
            if (c.intensity() - lam).abs() > 0.5 * lam {
                return Err(CliError::config(format!("{}: intensity differs from the first input", f.display())));
            }
            a.add(&c);
        }
        Ok(())
    })??;
    let title = format!("{} of {} samples", a.spec.kind(), files.len());
    let mut fin = with_pool(workers, || a.finish(&title))?;
    if !svg {
        fin.svg = None;
    }
    let dir = prefix.parent().unwrap_or(Path::new("."));
    let stem = prefix
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::config("output prefix has no file name"))?;
    let written = emit(dir, stem, &fin)?;
    if let Some(e) = &fin.error {
        return Err(e.clone());
    }
    Ok((fin, written))
}
