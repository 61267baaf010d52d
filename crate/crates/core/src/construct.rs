//! Point-process constructors on a periodic box.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::avset::{self, AveragingSolver, SolverOptions, TrigCurveSpec};
use crate::error::{invalid, Error, Result};
use crate::geom::TorusBox;
use crate::randfield::{synthesize_field, CovarianceKind, CovarianceSpec, GridField};
use crate::rng;
use crate::special::{hurwitz_zeta, zeta};
use crate::tessellate::FairTiling;

/// Provenance of a sample: constructor, parameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub constructor: String,
    pub params: serde_json::Value,
    pub seed: u64,
    /// Spacing of the lattice the sample derives from; its reciprocal lattice
    /// carries Bragg peaks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bragg_spacing: Option<f64>,
}

/// A finite weighted point sample in a periodic box.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    pub bounds: TorusBox,
    /// Row-major coordinates, `dim` per point.
    pub coords: Vec<f64>,
    pub weights: Vec<f64>,
    pub meta: Meta,
}

impl PointConfig {
    pub fn new(bounds: TorusBox, coords: Vec<f64>, weights: Option<Vec<f64>>, meta: Meta) -> Result<Self> {
        let d = bounds.dim();
        if coords.len() % d != 0 {
            return invalid("coordinate count is not a multiple of the dimension");
        }
        let n = coords.len() / d;
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return invalid("one weight per point required");
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return invalid("weights must be positive");
        }
        if coords.iter().any(|&x| !(0.0..bounds.side()).contains(&x)) {
            return invalid("points must lie in [0, L)^d");
        }
        Ok(Self {
            bounds,
            coords,
            weights,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn intensity(&self) -> f64 {
        self.total_weight() / self.bounds.volume()
    }
}

fn unit_config(bounds: TorusBox, coords: Vec<f64>, meta: Meta) -> PointConfig {
    let n = coords.len() / bounds.dim();
    PointConfig {
        bounds,
        coords,
        weights: vec![1.0; n],
        meta,
    }
}

fn meta(constructor: &str, params: serde_json::Value, seed: u64, bragg: Option<f64>) -> Meta {
    Meta {
        constructor: constructor.into(),
        params,
        seed,
        bragg_spacing: bragg,
    }
}

/// Number of lattice steps of length `spacing` in the side, if integral.
fn steps(bounds: &TorusBox, spacing: f64) -> Result<usize> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return invalid("lattice spacing must be positive");
    }
    let q = bounds.side() / spacing;
    let r = q.round();
    if r < 1.0 || (q - r).abs() > 1e-9 * q.max(1.0) {
        return invalid(format!("L = {} is not a multiple of spacing {spacing}", bounds.side()));
    }
    Ok(r as usize)
}

/// Cubic lattice `spacing * Z^d + U`, `U` uniform in `[0, spacing)^d`.
pub fn lattice(bounds: TorusBox, spacing: f64, seed: u64) -> Result<PointConfig> {
    let m = steps(&bounds, spacing)?;
    let d = bounds.dim();
    let total = m
        .checked_pow(d as u32)
        .filter(|&t| t <= 1 << 28)
        .ok_or_else(|| Error::InvalidArgument("lattice too large".into()))?;
    let mut r = rng::stream(seed, "lattice", &[]);
    let shift: Vec<f64> = (0..d).map(|_| spacing * r.random::<f64>()).collect();
    let mut coords = Vec::with_capacity(total * d);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        for a in 0..d {
            coords.push(bounds.wrap_coord(idx[a] as f64 * spacing + shift[a]));
        }
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < m {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(unit_config(
        bounds,
        coords,
        meta("lattice", json!({"L": bounds.side(), "d": d, "spacing": spacing}), seed, Some(spacing)),
    ))
}

/// Homogeneous Poisson process.
pub fn poisson(bounds: TorusBox, intensity: f64, seed: u64) -> Result<PointConfig> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return invalid("Poisson intensity must be positive");
    }
    let mean = intensity * bounds.volume();
    if mean > 1e9 {
        return invalid("expected point count too large");
    }
    let mut r = rng::stream(seed, "poisson", &[]);
    let n = Poisson::new(mean).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut r) as usize;
    let d = bounds.dim();
    let coords = (0..n * d).map(|_| bounds.wrap_coord(bounds.side() * r.random::<f64>())).collect();
    Ok(unit_config(
        bounds,
        coords,
        meta("poisson", json!({"L": bounds.side(), "d": d, "intensity": intensity}), seed, None),
    ))
}

/// How points are placed in the cells of a fair tiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Placement {
    UniformOne,
    Centroid,
    Avset { n: usize, p: usize },
}

/// Per-cell solver statistics of a placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub cells: usize,
    pub failed_cells: Vec<u64>,
    pub failure_fraction: f64,
    pub max_residual: f64,
}

/// Place points in every cell of `tiling`, independently per cell.
pub fn place_in_tiling(tiling: &FairTiling, mode: Placement, seed: u64) -> Result<(PointConfig, PlacementReport)> {
    place_in_tiling_with(tiling, mode, seed, &SolverOptions::default())
}

pub fn place_in_tiling_with(
    tiling: &FairTiling,
    mode: Placement,
    seed: u64,
    opts: &SolverOptions,
) -> Result<(PointConfig, PlacementReport)> {
    let bounds = tiling.bounds;
    let d = bounds.dim();
    let cells = &tiling.cells;
    let per_cell: Vec<Result<(Vec<f64>, f64)>> = match mode {
        Placement::UniformOne => cells
            .par_iter()
            .map(|c| {
                let mut r = rng::stream(seed, "place-uniform", &[c.id()]);
                Ok((c.sample_uniform(&mut r), 0.0))
            })
            .collect(),
        Placement::Centroid => cells.par_iter().map(|c| Ok((c.centroid(), 0.0))).collect(),
        Placement::Avset { n, p } => {
            AveragingSolver::new(d, n, p, *opts)?;
            cells
                .par_iter()
                .map_init(
                    || AveragingSolver::new(d, n, p, *opts).expect("validated above"),
                    |solver, c| {
                        let set = solver.solve(c, seed)?;
                        Ok((set.points.concat(), set.residual))
                    },
                )
                .collect()
        }
    };
    let mut coords = Vec::new();
    let mut failed = Vec::new();
    let mut first_failure = None;
    let mut max_residual = 0.0f64;
    for (cell, res) in cells.iter().zip(per_cell) {
        match res {
            Ok((pts, residual)) => {
                max_residual = max_residual.max(residual);
                coords.extend(pts.into_iter().map(|x| bounds.wrap_coord(x)));
            }
            Err(Error::SolverFailure { best_residual, .. }) => {
                failed.push(cell.id());
                first_failure.get_or_insert((cell.id(), best_residual));
            }
            Err(e) => return Err(e),
        }
    }
    let report = PlacementReport {
        cells: cells.len(),
        failure_fraction: failed.len() as f64 / cells.len().max(1) as f64,
        failed_cells: failed,
        max_residual,
    };
    if let Some((cell_id, best_residual)) = first_failure {
        return Err(Error::PlacementFailure {
            cell_id,
            failed: report.failed_cells.len(),
            cells: report.cells,
            best_residual,
        });
    }
    let params = json!({
        "L": bounds.side(),
        "d": d,
        "rounds": tiling.rounds,
        "tiling_seed": tiling.seed,
        "directions": tiling.directions,
        "placement": mode,
        "solver": opts,
    });
    Ok((unit_config(bounds, coords, meta("fair-stit", params, seed, None)), report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ClusterKind {
    /// `(sin(2 pi k/n + U), cos(2 pi k/n + U))`, k = 1..n.
    Circle { n: usize },
    Trig { curve: TrigCurveSpec, n: Vec<usize> },
    Spherical { name: String },
    Fixed { points: Vec<Vec<f64>> },
    IidGaussian {
        sigma: f64,
        #[serde(default = "one")]
        count: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    #[serde(flatten)]
    pub kind: ClusterKind,
    /// Uniformly random rotation per cluster.
    #[serde(default)]
    pub rotate: bool,
    /// Uniformly random angle offsets per cluster (trigonometric kinds).
    #[serde(default)]
    pub phase: bool,
}

impl ClusterSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        let kd = match &self.kind {
            ClusterKind::Circle { n } => {
                if *n == 0 {
                    return invalid("circle cluster needs n >= 1");
                }
                2
            }
            ClusterKind::Trig { curve, n } => {
                curve.validate()?;
                if n.len() != curve.vars || n.iter().any(|&k| k == 0) {
                    return invalid("trig cluster needs one positive grid size per angle");
                }
                curve.dim()
            }
            ClusterKind::Spherical { name } => avset::design_record(name)?.d,
            ClusterKind::Fixed { points } => {
                if points.is_empty() {
                    return invalid("fixed cluster is empty");
                }
                if points.iter().any(|p| p.len() != d) {
                    return invalid("fixed cluster points have the wrong dimension");
                }
                d
            }
            ClusterKind::IidGaussian { sigma, count } => {
                if !(*sigma >= 0.0) || !sigma.is_finite() || *count == 0 {
                    return invalid("iid-gaussian cluster needs sigma >= 0 and count >= 1");
                }
                d
            }
        };
        if kd != d {
            return invalid(format!("cluster dimension {kd} does not match box dimension {d}"));
        }
        if self.rotate && d > 3 {
            return invalid("random rotations support d <= 3");
        }
        Ok(())
    }

    /// Offsets of one cluster, drawn from `r`.
    fn draw<R: Rng>(&self, d: usize, base: Option<&[Vec<f64>]>, r: &mut R) -> Result<Vec<f64>> {
        let mut pts: Vec<f64> = match &self.kind {
            ClusterKind::Circle { n } => {
                let u = if self.phase || self.rotate {
                    2.0 * std::f64::consts::PI * r.random::<f64>()
                } else {
                    0.0
                };
                avset::trig_design(&TrigCurveSpec::circle(), &[*n], &[u])?.points.concat()
            }
            ClusterKind::Trig { curve, n } => {
                let u: Vec<f64> = (0..curve.vars)
                    .map(|_| {
                        if self.phase {
                            2.0 * std::f64::consts::PI * r.random::<f64>()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                avset::trig_design(curve, n, &u)?.points.concat()
            }
            ClusterKind::Spherical { .. } | ClusterKind::Fixed { .. } => base.expect("resolved points").concat(),
            ClusterKind::IidGaussian { sigma, count } => (0..count * d)
                .map(|_| sigma * r.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        let rotatable = !matches!(self.kind, ClusterKind::IidGaussian { .. } | ClusterKind::Circle { .. });
        if self.rotate && rotatable && d >= 2 {
            let rot = avset::random_rotation(d, r);
            for p in pts.chunks_exact_mut(d) {
                let mut q = [0.0; 3];
                for (i, qi) in q.iter_mut().enumerate().take(d) {
                    *qi = (0..d).map(|j| rot[i][j] * p[j]).sum();
                }
                p.copy_from_slice(&q[..d]);
            }
        }
        Ok(pts)
    }
}

/// Replace every progenitor point by an independent copy of the cluster.
pub fn cluster_process(progenitor: &PointConfig, spec: &ClusterSpec, seed: u64) -> Result<PointConfig> {
    let bounds = progenitor.bounds;
    let d = bounds.dim();
    spec.validate(d)?;
    let base = match &spec.kind {
        ClusterKind::Spherical { name } => Some(avset::spherical_design(name)?.points),
        ClusterKind::Fixed { points } => Some(points.clone()),
        _ => None,
    };
    let per: Vec<Result<(Vec<f64>, usize)>> = (0..progenitor.len())
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "cluster", &[i as u64]);
            let mut pts = spec.draw(d, base.as_deref(), &mut r)?;
            let centre = progenitor.point(i);
            for p in pts.chunks_exact_mut(d) {
                for a in 0..d {
                    p[a] = bounds.wrap_coord(p[a] + centre[a]);
                }
            }
            let k = pts.len() / d;
            Ok((pts, k))
        })
        .collect();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (i, res) in per.into_iter().enumerate() {
        let (pts, k) = res?;
        coords.extend(pts);
        weights.extend(std::iter::repeat_n(progenitor.weights[i], k));
    }
    let params = json!({"progenitor": progenitor.meta, "cluster": spec});
    Ok(PointConfig {
        bounds,
        coords,
        weights,
        meta: meta("cluster", params, seed, progenitor.meta.bragg_spacing),
    })
}

/// Gap law of a renewal process on the integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum GapLaw {
    /// `P(G = n) = n^(-s) / zeta(s)`.
    Zeta { s: f64 },
    /// Every gap equals one.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalSpec {
    pub s: f64,
    pub length: f64,
}

const ZETA_TABLE: usize = 1_000_000;

/// Survival table `P(G > n)`, n = 0..=ZETA_TABLE, of the zeta law.
struct ZetaTable {
    s: f64,
    zeta: f64,
    surv: Vec<f64>,
}

impl ZetaTable {
    fn build(s: f64) -> Result<Self> {
        let z = zeta(s)?;
        let mut surv = vec![0.0; ZETA_TABLE + 1];
        // accumulate from the tail so small terms are added first
        let mut acc = hurwitz_zeta(s, ZETA_TABLE as f64 + 1.0)?;
        surv[ZETA_TABLE] = acc / z;
        for n in (1..=ZETA_TABLE).rev() {
            acc += (n as f64).powf(-s);
            surv[n - 1] = acc / z;
        }
        surv[0] = 1.0;
        Ok(Self { s, zeta: z, surv })
    }

    fn cached(s: f64) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ZetaTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(t) = cache.lock().unwrap().get(&s.to_bits()) {
            return Ok(t.clone());
        }
        let t = Arc::new(Self::build(s)?);
        cache.lock().unwrap().insert(s.to_bits(), t.clone());
        Ok(t)
    }

    fn tail_survival(&self, n: f64) -> f64 {
        hurwitz_zeta(self.s, n + 1.0).map(|h| h / self.zeta).unwrap_or(0.0)
    }

    /// Inverse-CDF draw; exact in the tail through Hurwitz sums.
    fn sample<R: Rng>(&self, r: &mut R) -> f64 {
        let u = 1.0 - r.random::<f64>();
        if u > self.surv[ZETA_TABLE] {
            return self.surv.partition_point(|&v| v >= u) as f64;
        }
        // smallest n > table end with P(G > n) < u
        let mut lo = ZETA_TABLE as f64;
        let guess = (u * self.zeta * (self.s - 1.0)).powf(-1.0 / (self.s - 1.0)).floor();
        let mut hi = guess.max(lo + 1.0);
        const CAP: f64 = (1u64 << 60) as f64;
        while self.tail_survival(hi) >= u {
            lo = hi;
            hi *= 2.0;
            if hi >= CAP {
                return CAP;
            }
        }
        while hi - lo > 1.0 {
            let mid = ((lo + hi) / 2.0).floor();
            if self.tail_survival(mid) < u {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

impl GapLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            GapLaw::Zeta { s } if !(s > 2.0 && s <= 3.0) => invalid(format!("zeta gaps need 2 < s <= 3, got {s}")),
            _ => Ok(()),
        }
    }

    /// Mean gap.
    pub fn mean(&self) -> Result<f64> {
        match *self {
            GapLaw::Zeta { s } => Ok(zeta(s - 1.0)? / zeta(s)?),
            GapLaw::Unit => Ok(1.0),
        }
    }
}

/// Integer sample positions `j` in `[0, limit)` of a stationary renewal process on Z.
fn renewal_positions(law: &GapLaw, limit: f64, r: &mut rng::StreamRng) -> Result<Vec<f64>> {
    let (gaps, biased) = match *law {
        GapLaw::Unit => (None, None),
        GapLaw::Zeta { s } => (Some(ZetaTable::cached(s)?), Some(ZetaTable::cached(s - 1.0)?)),
    };
    // length-biased covering gap, origin uniform among its integer positions
    let first = match &biased {
        Some(t) => {
            let g = t.sample(r);
            (g * r.random::<f64>()).floor()
        }
        None => 0.0,
    };
    let mut out = Vec::new();
    let mut j = first;
    while j < limit {
        out.push(j);
        j += match &gaps {
            Some(t) => t.sample(r),
            None => 1.0,
        };
    }
    Ok(out)
}

/// One-dimensional stationary renewal process on `Z + U` inside `[0, length)`.
pub fn renewal_line(law: &GapLaw, length: f64, seed: u64) -> Result<PointConfig> {
    law.validate()?;
    let bounds = TorusBox::new(1, length)?;
    let mut r = rng::stream(seed, "renewal", &[]);
    let u: f64 = r.random();
    let coords = renewal_positions(law, length - u, &mut r)?
        .into_iter()
        .map(|j| bounds.wrap_coord(j + u))
        .collect();
    Ok(unit_config(
        bounds,
        coords,
        meta("renewal", json!({"L": length, "gaps": law}), seed, Some(1.0)),
    ))
}

/// Stationary renewal process with zeta(s) gaps.
pub fn zeta_renewal(spec: &RenewalSpec, seed: u64) -> Result<PointConfig> {
    renewal_line(&GapLaw::Zeta { s: spec.s }, spec.length, seed)
}

/// Product of `d` independent one-dimensional renewal samples.
pub fn renewal_product_with(bounds: TorusBox, law: &GapLaw, seed: u64) -> Result<PointConfig> {
    let d = bounds.dim();
    let factors: Vec<PointConfig> = (0..d)
        .map(|a| renewal_line(law, bounds.side(), rng::child_seed(seed, "renewal-factor", &[a as u64])))
        .collect::<Result<_>>()?;
    let counts: Vec<usize> = factors.iter().map(|f| f.len()).collect();
    let total = counts
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c))
        .filter(|&t| t <= 1 << 28)
        .ok_or_else(|| Error::InvalidArgument("renewal product too large".into()))?;
    let mut coords = Vec::with_capacity(total * d);
    if total > 0 {
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for a in 0..d {
                coords.push(factors[a].coords[idx[a]]);
            }
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
    Ok(unit_config(
        bounds,
        coords,
        meta(
            "renewal-product",
            json!({"L": bounds.side(), "d": d, "gaps": law}),
            seed,
            Some(1.0),
        ),
    ))
}

/// Product of zeta renewal processes, `2 < s < 3`.
pub fn renewal_product(bounds: TorusBox, s: f64, seed: u64) -> Result<PointConfig> {
    if !(s > 2.0 && s < 3.0) {
        return invalid(format!("renewal product needs 2 < s < 3, got {s}"));
    }
    renewal_product_with(bounds, &GapLaw::Zeta { s }, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Displacement {
    IidGaussian { sigma: f64 },
    Field(GridField),
}

const DISPLACE_CHUNK: usize = 1024;

/// Move every point by its displacement and wrap.
pub fn displace(config: &PointConfig, displacement: &Displacement, seed: u64) -> Result<PointConfig> {
    let bounds = config.bounds;
    let d = bounds.dim();
    let desc = match displacement {
        Displacement::IidGaussian { sigma } => {
            if !(*sigma >= 0.0) || !sigma.is_finite() {
                return invalid("displacement sigma must be >= 0");
            }
            json!({"kind": "iid-gaussian", "sigma": sigma})
        }
        Displacement::Field(f) => {
            if f.dim() != d || f.components != d || f.bounds != bounds {
                return invalid("displacement field must live on the same box with d components");
            }
            json!({"kind": "field", "spec": f.spec, "grid_n": f.grid_n, "seed": f.seed})
        }
    };
    let mut coords = config.coords.clone();
    coords
        .par_chunks_mut(DISPLACE_CHUNK * d)
        .enumerate()
        .for_each(|(chunk, block)| {
            let mut r = rng::stream(seed, "displace", &[chunk as u64]);
            for p in block.chunks_exact_mut(d) {
                let z = match displacement {
                    Displacement::IidGaussian { sigma } => {
                        (0..d).map(|_| sigma * r.sample::<f64, _>(StandardNormal)).collect()
                    }
                    Displacement::Field(f) => f.sample(p),
                };
                for a in 0..d {
                    p[a] = bounds.wrap_coord(p[a] + z[a]);
                }
            }
        });
    Ok(PointConfig {
        bounds,
        coords,
        weights: config.weights.clone(),
        meta: meta(
            "displace",
            json!({"base": config.meta, "displacement": desc}),
            seed,
            config.meta.bragg_spacing,
        ),
    })
}

/// Integer lattice plus shift, displaced at each site by a Gaussian field with
/// phonon spectral density.
pub fn phonon_lattice(bounds: TorusBox, kappa: f64, seed: u64) -> Result<PointConfig> {
    if bounds.dim() != 3 {
        return invalid("phonon lattices are defined for d = 3");
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return invalid("kappa must be positive");
    }
    let n = bounds
        .integer_side()
        .ok_or_else(|| Error::InvalidArgument("phonon lattice needs an integer side".into()))?;
    let spec = CovarianceSpec {
        kind: CovarianceKind::Phonon { kappa },
        components: 3,
    };
    let field = synthesize_field(bounds, n, &spec, rng::child_seed(seed, "phonon-field", &[]))?;
    let mut r = rng::stream(seed, "lattice", &[]);
    let shift: Vec<f64> = (0..3).map(|_| r.random::<f64>()).collect();
    let m = n * n * n;
    let mut coords = Vec::with_capacity(3 * m);
    for site in 0..m {
        let idx = [site / (n * n), (site / n) % n, site % n];
        for a in 0..3 {
            let z = field.values[a * m + site];
            coords.push(bounds.wrap_coord(idx[a] as f64 + shift[a] + z));
        }
    }
    Ok(unit_config(
        bounds,
        coords,
        meta("phonon", json!({"L": bounds.side(), "kappa": kappa}), seed, Some(1.0)),
    ))
}
