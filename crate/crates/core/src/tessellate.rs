//! Fair STIT tilings: every round splits every cell into two halves of equal
//! volume along an independently drawn direction.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{ConvexCell, HalfSpace, TorusBox};
use crate::rng;

/// Law of the split directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "direction")]
pub enum SplitDirectionSpec {
    UniformSphere,
    AxisAligned,
    FixedDirection(Vec<f64>),
}

impl SplitDirectionSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if let SplitDirectionSpec::FixedDirection(u) = self {
            if u.len() != dim {
                return invalid("fixed split direction has the wrong dimension");
            }
            let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return invalid(format!("fixed split direction must be a unit vector (norm {n})"));
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        match self {
            SplitDirectionSpec::UniformSphere => loop {
                let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-12 {
                    return g.into_iter().map(|x| x / n).collect();
                }
            },
            SplitDirectionSpec::AxisAligned => {
                let mut e = vec![0.0; dim];
                e[rng.random_range(0..dim)] = 1.0;
                e
            }
            SplitDirectionSpec::FixedDirection(u) => u.clone(),
        }
    }
}

/// Direction used for cell `cell_id` in round `round` of the chain seeded by `seed`.
pub fn split_direction(spec: &SplitDirectionSpec, dim: usize, seed: u64, round: usize, cell_id: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "stit-split", &[round as u64, cell_id]);
    spec.draw(dim, &mut r)
}

/// A partition of the torus into cells of equal volume.
#[derive(Debug, Clone)]
pub struct FairTiling {
    pub bounds: TorusBox,
    pub cells: Vec<ConvexCell>,
    pub rounds: usize,
    pub seed: u64,
    pub directions: SplitDirectionSpec,
    /// Global shift of the seed cube tiling.
    pub shift: Vec<f64>,
}

/// Summary statistics used to monitor the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TilingDiagnostics {
    pub cells: usize,
    pub total_volume: f64,
    pub min_volume: f64,
    pub max_volume: f64,
    pub mean_vertices: f64,
}

impl FairTiling {
    pub fn diagnostics(&self) -> TilingDiagnostics {
        let vols = self.cells.iter().map(|c| c.volume());
        let (mut lo, mut hi, mut tot) = (f64::INFINITY, 0.0f64, 0.0);
        for v in vols {
            lo = lo.min(v);
            hi = hi.max(v);
            tot += v;
        }
        let nv: usize = self.cells.iter().map(|c| c.raw_vertices().len()).sum();
        TilingDiagnostics {
            cells: self.cells.len(),
            total_volume: tot,
            min_volume: lo,
            max_volume: hi,
            mean_vertices: nv as f64 / self.cells.len().max(1) as f64,
        }
    }

    /// JSON export: box, round count and per-cell vertex lists.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct CellOut {
            id: u64,
            volume: f64,
            vertices: Vec<Vec<f64>>,
        }
        let cells: Vec<CellOut> = self
            .cells
            .iter()
            .map(|c| CellOut {
                id: c.id(),
                volume: c.volume(),
                vertices: c.vertices(),
            })
            .collect();
        serde_json::json!({
            "box": { "dim": self.bounds.dim(), "side": self.bounds.side() },
            "rounds": self.rounds,
            "seed": self.seed,
            "shift": self.shift,
            "cells": cells,
        })
    }
}

/// Area of `{x in polygon : u . x >= t}` for a counter-clockwise polygon.
fn area_above_2d(v: &[[f64; 3]], c: [f64; 2], u: [f64; 2], t: f64) -> f64 {
    let n = v.len();
    let tc = t - (u[0] * c[0] + u[1] * c[1]);
    let mut first = [0.0; 2];
    let mut prev = [0.0; 2];
    let mut have = false;
    let mut acc = 0.0;
    let mut emit = |p: [f64; 2], acc: &mut f64| {
        if have {
            *acc += prev[0] * p[1] - prev[1] * p[0];
        } else {
            first = p;
            have = true;
        }
        prev = p;
    };
    for i in 0..n {
        let p = [v[i][0] - c[0], v[i][1] - c[1]];
        let j = if i + 1 == n { 0 } else { i + 1 };
        let q = [v[j][0] - c[0], v[j][1] - c[1]];
        let sp = u[0] * p[0] + u[1] * p[1] - tc;
        let sq = u[0] * q[0] + u[1] * q[1] - tc;
        if sp >= 0.0 {
            emit(p, &mut acc);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            let s = sp / (sp - sq);
            emit([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])], &mut acc);
        }
    }
    if !have {
        return 0.0;
    }
    acc += prev[0] * first[1] - prev[1] * first[0];
    0.5 * acc
}

fn volume_above(cell: &ConvexCell, u: &[f64], t: f64) -> f64 {
    if cell.dim() == 2 {
        let c = cell.vertex_centroid();
        return area_above_2d(cell.raw_vertices(), [c[0], c[1]], [u[0], u[1]], t);
    }
    let neg: Vec<f64> = u.iter().map(|x| -x).collect();
    match cell.clip(&neg, -t) {
        Ok(c) => c.volume(),
        Err(Error::EmptyClip) => {
            let (lo, hi) = cell.support_range(u);
            if t <= 0.5 * (lo + hi) {
                cell.volume()
            } else {
                0.0
            }
        }
        Err(_) => 0.0,
    }
}

/// Offset t with vol({x in cell : u . x >= t}) = vol(cell) / 2.
pub fn equal_volume_offset(cell: &ConvexCell, u: &[f64]) -> Result<f64> {
    if u.len() != cell.dim() {
        return invalid("split direction has the wrong dimension");
    }
    let vol = cell.volume();
    let half = 0.5 * vol;
    let (mut lo, mut hi) = cell.support_range(u);
    // g decreases from +half at lo to -half at hi
    let g = |t: f64| volume_above(cell, u, t) - half;
    let (mut glo, mut ghi) = (half, -half);
    // aim well below the 1e-12 contract so both children agree to it
    let target = 1e-14 * vol;
    let accept = 2e-13 * vol;
    let mut best = (f64::INFINITY, 0.5 * (lo + hi));
    let mut side = 0i32;
    for iter in 0..200 {
        // Illinois false position, with a plain bisection every fourth step
        let t = if iter % 4 == 3 {
            0.5 * (lo + hi)
        } else {
            let t = (lo * ghi - hi * glo) / (ghi - glo);
            if t.is_finite() && t > lo && t < hi {
                t
            } else {
                0.5 * (lo + hi)
            }
        };
        let gt = g(t);
        if gt.abs() <= target {
            return Ok(t);
        }
        if gt.abs() < best.0 {
            best = (gt.abs(), t);
        }
        if gt > 0.0 {
            lo = t;
            glo = gt;
            if side == 1 {
                ghi *= 0.5;
            }
            side = 1;
        } else {
            hi = t;
            ghi = gt;
            if side == -1 {
                glo *= 0.5;
            }
            side = -1;
        }
        if hi - lo <= f64::EPSILON * (lo.abs() + hi.abs()) {
            break;
        }
    }
    if best.0 <= accept {
        return Ok(best.1);
    }
    Err(Error::SplitFailure { cell_id: cell.id() })
}

/// Split into `{u . x <= t}` and `{u . x >= t}` at the equal-volume offset.
///
/// Children get ids `2 id` and `2 id + 1`.
pub fn split_cell(cell: &ConvexCell, u: &[f64]) -> Result<(ConvexCell, ConvexCell)> {
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return invalid("split direction must be nonzero");
    }
    let u: Vec<f64> = u.iter().map(|x| x / norm).collect();
    let t = equal_volume_offset(cell, &u)?;
    let fail = |_| Error::SplitFailure { cell_id: cell.id() };
    let mut n = [0.0; 3];
    n[..u.len()].copy_from_slice(&u);
    let below = cell
        .clip_normalized(HalfSpace { normal: n, offset: t })
        .map_err(fail)?;
    let above = cell
        .clip_normalized(HalfSpace {
            normal: n.map(|x| -x),
            offset: -t,
        })
        .map_err(fail)?;
    let id = cell.id();
    Ok((below.with_id(2 * id), above.with_id(2 * id + 1)))
}

/// Run `rounds` rounds of the fair STIT chain on the shifted unit-cube tiling.
pub fn fair_stit(bounds: TorusBox, rounds: usize, dirspec: &SplitDirectionSpec, seed: u64) -> Result<FairTiling> {
    let d = bounds.dim();
    if !(2..=3).contains(&d) {
        return invalid("fair STIT supports d in {2, 3}");
    }
    let side = bounds
        .integer_side()
        .ok_or_else(|| Error::InvalidArgument(format!("box side {} is not a positive integer", bounds.side())))?;
    dirspec.validate(d)?;
    let roots = side.pow(d as u32) as u64;
    if 64 - roots.leading_zeros() as usize + rounds >= 64 {
        return invalid("too many rounds for 64-bit cell ids");
    }
    let mut srng = rng::stream(seed, "stit-shift", &[]);
    let shift: Vec<f64> = (0..d).map(|_| srng.random::<f64>()).collect();
    let mut cells = (0..roots)
        .map(|id| {
            let mut z = vec![0usize; d];
            let mut rem = id as usize;
            for zi in z.iter_mut() {
                *zi = rem % side;
                rem /= side;
            }
            let lo: Vec<f64> = z.iter().zip(&shift).map(|(&k, s)| k as f64 + s).collect();
            let hi: Vec<f64> = lo.iter().map(|x| x + 1.0).collect();
            ConvexCell::cuboid(&lo, &hi, id)
        })
        .collect::<Result<Vec<_>>>()?;
    for round in 0..rounds {
        let next: Result<Vec<(ConvexCell, ConvexCell)>> = cells
            .par_iter()
            .map(|c| {
                let u = split_direction(dirspec, d, seed, round, c.id());
                split_cell(c, &u)
            })
            .collect();
        cells = next?.into_iter().flat_map(|(a, b)| [a, b]).collect();
    }
    Ok(FairTiling {
        bounds,
        cells,
        rounds,
        seed,
        directions: dirspec.clone(),
        shift,
    })
}
