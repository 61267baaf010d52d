//! Averaging sets: equal-weight point sets whose empirical moments match a
//! reference measure up to a given degree.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{sphere_moments, ConvexCell, MomentVector, MonomialBasis};
use crate::rng;

/// What an averaging set was built to match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// Uniform distribution on a convex cell.
    Cell { id: u64, volume: f64 },
    /// A named reference measure.
    Measure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingSet {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    /// Order parameter in the convention of the constructor that produced it.
    pub order: usize,
    /// Largest total degree whose moments are matched.
    pub max_degree: usize,
    /// Largest absolute mismatch of the scaled moments.
    pub residual: f64,
    pub target: Target,
}

impl AveragingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_restarts: usize,
    /// Gauss-Newton iterations per start.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_restarts: 64,
            max_iter: 200,
        }
    }
}

/// Number of moment constraints for `n` points matching degrees `1..=p-1` in `d` dimensions.
pub fn constraint_count(d: usize, p: usize) -> usize {
    if p <= 1 {
        return 0;
    }
    MonomialBasis::new(d, p - 1).len() - 1
}

/// Cholesky solve of the SPD system `a y = b` in place (row-major `m x m`).
fn cholesky_solve(a: &mut [f64], b: &mut [f64], m: usize) -> bool {
    for j in 0..m {
        let (head, tail) = a.split_at_mut(j * m + m);
        let rj = &mut head[j * m..j * m + m];
        let s = rj[j] - rj[..j].iter().map(|v| v * v).sum::<f64>();
        if !(s > 0.0) {
            return false;
        }
        let l = s.sqrt();
        rj[j] = l;
        let rj = &head[j * m..j * m + j];
        for i in j + 1..m {
            let ri = &mut tail[(i - j - 1) * m..(i - j) * m];
            let dot: f64 = ri[..j].iter().zip(rj).map(|(x, y)| x * y).sum();
            ri[j] = (ri[j] - dot) / l;
        }
    }
    for i in 0..m {
        let ri = &a[i * m..i * m + i];
        let dot: f64 = ri.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
        b[i] = (b[i] - dot) / a[i * m + i];
    }
    // L^T x = y, row by row of L so memory runs forward
    for i in (0..m).rev() {
        let xi = b[i] / a[i * m + i];
        b[i] = xi;
        for (bk, l) in b[..i].iter_mut().zip(&a[i * m..i * m + i]) {
            *bk -= l * xi;
        }
    }
    true
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Lower Cholesky factor of a symmetric positive semidefinite `d x d` matrix.
fn cholesky3(cov: &[[f64; 3]; 3], d: usize) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    for j in 0..d {
        let mut s = cov[j][j];
        for k in 0..j {
            s -= l[j][k] * l[j][k];
        }
        l[j][j] = s.max(0.0).sqrt();
        for i in j + 1..d {
            let mut s = cov[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if l[j][j] > 0.0 { s / l[j][j] } else { 0.0 };
        }
    }
    l
}

pub(crate) fn random_rotation<R: rand::Rng>(d: usize, rng: &mut R) -> [[f64; 3]; 3] {
    let mut rot = [[0.0; 3]; 3];
    for row in rot.iter_mut().take(d) {
        for v in row.iter_mut().take(d) {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
    for i in 0..d {
        for k in 0..i {
            let c: f64 = (0..d).map(|t| rot[i][t] * rot[k][t]).sum();
            for t in 0..d {
                rot[i][t] -= c * rot[k][t];
            }
        }
        let nrm = (0..d).map(|t| rot[i][t] * rot[i][t]).sum::<f64>().sqrt();
        for t in 0..d {
            rot[i][t] /= nrm;
        }
    }
    rot
}

/// Start points. Even attempts use a randomly rotated spiral with roughly the
/// covariance of the cell, odd attempts iid uniform points.
fn initial_points<R: rand::Rng>(
    cell: &ConvexCell,
    chol: &[[f64; 3]; 3],
    n: usize,
    attempt: usize,
    rng: &mut R,
    x: &mut [f64],
) {
    let d = cell.dim();
    if attempt % 2 == 1 {
        for j in 0..n {
            let p = cell.sample_uniform(rng);
            x[j * d..(j + 1) * d].copy_from_slice(&p);
        }
        return;
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let phase = 2.0 * PI * rng.random::<f64>();
    let shrink = 0.95;
    let rot = random_rotation(d, rng);
    for j in 0..n {
        let q = (j as f64 + 0.5) / n as f64;
        let th = j as f64 * golden + phase;
        let y = if d == 2 {
            // the uniform disk of radius 2 has identity covariance
            let r = 2.0 * q.sqrt();
            [r * th.cos(), r * th.sin(), 0.0]
        } else {
            // and so does the ball of radius sqrt(5)
            let r = 5f64.sqrt() * q.cbrt();
            let z = 1.0 - 2.0 * (j as f64 * 0.618_033_988_749_895).fract();
            let rho = (1.0 - z * z).max(0.0).sqrt();
            [r * rho * th.cos(), r * rho * th.sin(), r * z]
        };
        let mut ry = [0.0; 3];
        for i in 0..d {
            ry[i] = (0..d).map(|t| rot[i][t] * y[t]).sum::<f64>() * shrink;
        }
        let mut p = [0.0; 3];
        for i in 0..d {
            p[i] = (0..=i).map(|t| chol[i][t] * ry[t]).sum();
        }
        if cell.contains(&p[..d]) {
            x[j * d..(j + 1) * d].copy_from_slice(&p[..d]);
        } else {
            let p = cell.sample_uniform(rng);
            x[j * d..(j + 1) * d].copy_from_slice(&p);
        }
    }
}

/// Normalize `mv` by its mass and return the covariance it implies. The
/// graded order puts degrees 1 and 2 at the same indices for every basis
/// of degree >= 2.
fn covariance_of(mv: &mut MomentVector, d: usize, lin: &[usize; 3], quad: &[[usize; 3]; 3]) -> [[f64; 3]; 3] {
    let mass = mv.values[0];
    mv.values.iter_mut().for_each(|v| *v /= mass);
    let v = &mv.values;
    let mut cov = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            cov[i][j] = v[quad[i][j]] - v[lin[i]] * v[lin[j]];
        }
    }
    cov
}

/// Reusable solver for `n` equal-weight points matching cell moments of
/// degree `0..p-1`; holds the monomial tables and work buffers.
#[derive(Debug, Clone)]
pub struct AveragingSolver {
    d: usize,
    n: usize,
    p: usize,
    opts: SolverOptions,
    // moments up to max(p - 1, 2); the first `len` entries form the target
    moments: MomentVector,
    // degree-2 moments used to whiten the cell
    low: MomentVector,
    len: usize,
    cov_index: [[usize; 3]; 3],
    lin_index: [usize; 3],
    // derivative table: d/dx_i of monomial k is dc[k d + i] times monomial dlo[k d + i]
    dlo: Vec<usize>,
    dc: Vec<f64>,
    // monomials of degree <= p - 2, the only ones appearing in derivatives
    glen: usize,
    // graded basis wide enough for the target moments and for all products
    // of two derivative monomials; `vals` holds it per point
    wide: MonomialBasis,
    // entry (r, s <= r) of J J^T is the sum of coef * psum[idx] over
    // pair_terms[pair_end[q - 1]..pair_end[q]], q enumerating the lower triangle
    pair_terms: Vec<(usize, f64)>,
    pair_end: Vec<usize>,
    psum: Vec<f64>,
    w: Vec<f64>,
    vals: Vec<f64>,
    x: Vec<f64>,
    trial: Vec<f64>,
    f: Vec<f64>,
    ft: Vec<f64>,
    a: Vec<f64>,
    y: Vec<f64>,
    step: Vec<f64>,
}

impl AveragingSolver {
    pub fn new(d: usize, n: usize, p: usize, opts: SolverOptions) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return invalid("averaging-set solver supports d in {2, 3}");
        }
        if n == 0 || p == 0 {
            return invalid("averaging sets need n >= 1 and p >= 1");
        }
        let m = constraint_count(d, p);
        if n * d < m {
            return invalid(format!("{n} points in d={d} cannot match {m} moment constraints"));
        }
        let moments = MomentVector::zeros(d, (p - 1).max(2));
        let basis = &moments.basis;
        let len = m + 1;
        let mut lin_index = [0; 3];
        let mut cov_index = [[0; 3]; 3];
        for i in 0..d {
            let mut e = vec![0u32; d];
            e[i] = 1;
            lin_index[i] = basis.index_of(&e).unwrap();
            for j in 0..d {
                let mut a = e.clone();
                a[j] += 1;
                cov_index[i][j] = basis.index_of(&a).unwrap();
            }
        }
        let mut dlo = Vec::with_capacity(len * d);
        let mut dc = Vec::with_capacity(len * d);
        for k in 0..len {
            let a = basis.exponent(k).to_vec();
            for i in 0..d {
                if a[i] == 0 {
                    dlo.push(0);
                    dc.push(0.0);
                } else {
                    let mut lower = a.clone();
                    lower[i] -= 1;
                    dlo.push(basis.index_of(&lower).unwrap());
                    dc.push(a[i] as f64 / n as f64);
                }
            }
        }
        let nd = n * d;
        let glen = if p >= 2 { MonomialBasis::new(d, p - 2).len() } else { 1 };
        let wide = MonomialBasis::new(d, (2 * p).saturating_sub(4).max(basis.degree()));
        let mut pair_terms = Vec::new();
        let mut pair_end = Vec::with_capacity(m * (m + 1) / 2);
        for r in 1..len {
            for s in 1..=r {
                for i in 0..d {
                    let (cr, cs) = (dc[r * d + i], dc[s * d + i]);
                    if cr != 0.0 && cs != 0.0 {
                        let e: Vec<u32> = basis
                            .exponent(dlo[r * d + i])
                            .iter()
                            .zip(basis.exponent(dlo[s * d + i]))
                            .map(|(a, b)| a + b)
                            .collect();
                        pair_terms.push((wide.index_of(&e).unwrap(), cr * cs));
                    }
                }
                pair_end.push(pair_terms.len());
            }
        }
        Ok(Self {
            d,
            n,
            p,
            opts,
            moments,
            low: MomentVector::zeros(d, 2),
            len,
            cov_index,
            lin_index,
            dlo,
            dc,
            glen,
            psum: vec![0.0; wide.len()],
            vals: vec![0.0; wide.len() * n],
            wide,
            pair_terms,
            pair_end,
            w: vec![0.0; glen * d],
            x: vec![0.0; nd],
            trial: vec![0.0; nd],
            f: vec![0.0; m],
            ft: vec![0.0; m],
            a: vec![0.0; m * m],
            y: vec![0.0; m],
            step: vec![0.0; nd],
        })
    }

    fn residual(&mut self, trial: bool) {
        let (len, d, n) = (self.len, self.d, self.n);
        let stride = self.wide.len();
        let x = if trial { &self.trial } else { &self.x };
        for (xj, row) in x.chunks_exact(d).zip(self.vals.chunks_exact_mut(stride)) {
            self.wide.eval(xj, row);
        }
        let inv = 1.0 / n as f64;
        let f = if trial { &mut self.ft } else { &mut self.f };
        f.iter_mut().for_each(|v| *v = 0.0);
        for row in self.vals.chunks_exact(stride) {
            for (fk, v) in f.iter_mut().zip(&row[1..len]) {
                *fk += v;
            }
        }
        for (fk, m) in f.iter_mut().zip(&self.moments.values[1..len]) {
            *fk = *fk * inv - m;
        }
    }

    /// Lower triangle of the normal matrix J J^T of the last
    /// `residual(false)` call; the Cholesky solve reads nothing else.
    fn normal_matrix(&mut self) {
        let len = self.len;
        // every product of two derivative monomials is one wide monomial, so
        // the Gram matrix reduces to power sums
        self.psum.iter_mut().for_each(|v| *v = 0.0);
        for row in self.vals.chunks_exact(self.wide.len()) {
            for (s, v) in self.psum.iter_mut().zip(row) {
                *s += v;
            }
        }
        let m = len - 1;
        let mut start = 0;
        let mut q = 0;
        for r in 0..m {
            for s in 0..=r {
                let end = self.pair_end[q];
                self.a[r * m + s] = self.pair_terms[start..end]
                    .iter()
                    .map(|&(idx, c)| c * self.psum[idx])
                    .sum();
                start = end;
                q += 1;
            }
        }
    }

    /// Minimum-norm step `-J^T y` into `self.step`.
    fn min_norm_step(&mut self) {
        let (len, d, n, g) = (self.len, self.d, self.n, self.glen);
        let stride = self.wide.len();
        self.w.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..len - 1 {
            for i in 0..d {
                let c = self.dc[(r + 1) * d + i];
                if c != 0.0 {
                    self.w[i * g + self.dlo[(r + 1) * d + i]] += c * self.y[r];
                }
            }
        }
        for j in 0..n {
            let v = &self.vals[j * stride..j * stride + g];
            for i in 0..d {
                let w = &self.w[i * g..(i + 1) * g];
                self.step[j * d + i] = -v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    /// Load the normalized moments of `frame` into `self.moments` and return
    /// its covariance.
    fn covariance(&mut self, frame: &ConvexCell) -> [[f64; 3]; 3] {
        self.moments.values.iter_mut().for_each(|v| *v = 0.0);
        frame.accumulate_moments(&mut self.moments);
        covariance_of(&mut self.moments, self.d, &self.lin_index, &self.cov_index)
    }

    /// Solve for one cell; randomness comes from the stream keyed by
    /// `(seed, cell id)`.
    pub fn solve(&mut self, cell: &ConvexCell, seed: u64) -> Result<AveragingSet> {
        let (d, n, p) = (self.d, self.n, self.p);
        if cell.dim() != d {
            return invalid("cell dimension does not match the solver");
        }
        let target = Target::Cell {
            id: cell.id(),
            volume: cell.volume(),
        };
        let mut rng = rng::stream(seed, "avset", &[cell.id()]);
        if p == 1 {
            let points = (0..n).map(|_| cell.sample_uniform(&mut rng)).collect();
            return Ok(AveragingSet {
                dim: d,
                points,
                order: p,
                max_degree: 0,
                residual: 0.0,
                target,
            });
        }
        let c = cell.centroid();
        if n == 1 && p == 2 {
            return Ok(AveragingSet {
                dim: d,
                points: vec![c],
                order: p,
                max_degree: 1,
                residual: 0.0,
                target,
            });
        }
        // whitened frame: centroid at the origin, identity covariance
        let h = cell.volume().powf(1.0 / d as f64);
        let scaled = cell.normalized_frame(&c, h)?;
        self.low.values.iter_mut().for_each(|v| *v = 0.0);
        scaled.accumulate_moments(&mut self.low);
        let cov = covariance_of(&mut self.low, d, &self.lin_index, &self.cov_index);
        let white = cholesky3(&cov, d);
        let mut inv = vec![0.0; d * d];
        for col in 0..d {
            // forward substitution for column `col` of white^-1
            for i in 0..d {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for t in 0..i {
                    s -= white[i][t] * inv[t * d + col];
                }
                inv[i * d + col] = s / white[i][i];
            }
        }
        let frame = scaled.affine_map(&inv, &vec![0.0; d])?;
        let cov = self.covariance(&frame);
        let chol = cholesky3(&cov, d);
        let to_cell = |y: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|i| c[i] + h * (0..=i).map(|t| white[i][t] * y[t]).sum::<f64>())
                .collect()
        };
        let m = self.len - 1;
        let nd = n * d;
        let mut best = f64::INFINITY;

        for attempt in 0..=self.opts.max_restarts {
            initial_points(&frame, &chol, n, attempt, &mut rng, &mut self.x);
            self.residual(false);
            let mut norm2 = sum_sq(&self.f);
            let mut prev_norm2 = norm2;
            let mut slow = 0;
            let mut lambda = 1e-12;
            for _ in 0..self.opts.max_iter {
                let res = max_abs(&self.f);
                best = best.min(res);
                if res <= self.opts.tol {
                    let points = (0..n).map(|j| to_cell(&self.x[j * d..(j + 1) * d])).collect();
                    return Ok(AveragingSet {
                        dim: d,
                        points,
                        order: p,
                        max_degree: p - 1,
                        residual: res,
                        target,
                    });
                }
                self.normal_matrix();
                let trace: f64 = (0..m).map(|r| self.a[r * m + r]).sum();
                let reg = lambda * (trace / m as f64).max(1e-300);
                for r in 0..m {
                    self.a[r * m + r] += reg;
                }
                self.y.copy_from_slice(&self.f);
                if !cholesky_solve(&mut self.a, &mut self.y, m) {
                    lambda *= 100.0;
                    if lambda > 1.0 {
                        break;
                    }
                    continue;
                }
                self.min_norm_step();
                // longest step keeping every point in the cell, then halve
                // until the residual drops
                let mut tmax = f64::INFINITY;
                for j in 0..n {
                    for hs in frame.halfspaces() {
                        let (mut ax, mut ad) = (0.0, 0.0);
                        for i in 0..d {
                            ax += hs.normal[i] * self.x[j * d + i];
                            ad += hs.normal[i] * self.step[j * d + i];
                        }
                        if ad > 0.0 {
                            tmax = tmax.min(((hs.offset - ax) / ad).max(0.0));
                        }
                    }
                }
                let mut t = if tmax >= 1.0 { 1.0 } else { 0.9 * tmax };
                let mut accepted = false;
                for _ in 0..40 {
                    for k in 0..nd {
                        self.trial[k] = self.x[k] + t * self.step[k];
                    }
                    let inside = (0..n).all(|j| frame.contains(&self.trial[j * d..(j + 1) * d]));
                    if inside {
                        self.residual(true);
                        let nt = sum_sq(&self.ft);
                        if nt < norm2 {
                            std::mem::swap(&mut self.x, &mut self.trial);
                            std::mem::swap(&mut self.f, &mut self.ft);
                            norm2 = nt;
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                // cached monomial values now belong to x
                if !accepted {
                    break;
                }
                lambda = (lambda * 0.1).max(1e-15);
                // restart when three consecutive steps each gain less than 10%
                if norm2 > 0.81 * prev_norm2 {
                    slow += 1;
                    if slow >= 3 {
                        break;
                    }
                } else {
                    slow = 0;
                }
                prev_norm2 = norm2;
            }
        }
        Err(Error::SolverFailure {
            cell_id: Some(cell.id()),
            best_residual: best,
        })
    }
}

/// Equal-weight points in `cell` matching its moments of degree `0..p-1`.
///
/// The system is solved in the whitened frame of the cell (centroid at the
/// origin, identity covariance); `residual` is measured there.
pub fn solve_averaging_set(
    cell: &ConvexCell,
    n: usize,
    p: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<AveragingSet> {
    AveragingSolver::new(cell.dim(), n, p, *opts)?.solve(cell, seed)
}

/// Chebyshev-Gauss nodes `cos((2k-1) pi / (2n))`, exact for the arcsine law
/// on (-1, 1) through degree `2n - 1`.
pub fn chebyshev_gauss(n: usize) -> Result<AveragingSet> {
    if n == 0 {
        return invalid("chebyshev_gauss needs n >= 1");
    }
    let points: Vec<Vec<f64>> = (1..=n)
        .map(|k| {
            let x = ((2 * k - 1) as f64 * PI / (2 * n) as f64).cos();
            // the middle node of odd n is exactly zero
            vec![if x.abs() < 1e-15 { 0.0 } else { x }]
        })
        .collect();
    let moments = arcsine_moments(2 * n - 1);
    let residual = verify_design(&points, &moments, 2 * n - 1, f64::INFINITY).max_mismatch;
    Ok(AveragingSet {
        dim: 1,
        points,
        order: 2 * n,
        max_degree: 2 * n - 1,
        residual,
        target: Target::Measure("arcsine".into()),
    })
}

/// Moments of the arcsine law on (-1, 1): `binom(q, q/2) / 2^q` for even q.
pub fn arcsine_moments(degree: usize) -> MomentVector {
    let mut mv = MomentVector::zeros(1, degree);
    for q in 0..=degree {
        if q % 2 == 0 {
            let mut c = 1.0;
            // binom(q, q/2) / 2^q as a running product
            for j in 0..q / 2 {
                c *= (q - j) as f64 / ((q / 2 - j) as f64 * 4.0);
            }
            mv.values[q] = c;
        }
    }
    mv
}

/// One term `coef * exp(i <freq, theta>)` of a trigonometric polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i32>,
    /// Real and imaginary part of the coefficient.
    pub coef: [f64; 2],
}

/// Real trigonometric polynomial in `vars` angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    /// `a0 + sum_k a_k cos(k t) + b_k sin(k t)` in one angle.
    pub fn from_cos_sin(a0: f64, cos: &[f64], sin: &[f64]) -> Self {
        let mut terms = vec![TrigTerm {
            freq: vec![0],
            coef: [a0, 0.0],
        }];
        for k in 1..=cos.len().max(sin.len()) {
            let a = cos.get(k - 1).copied().unwrap_or(0.0);
            let b = sin.get(k - 1).copied().unwrap_or(0.0);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            // a cos + b sin = (a - i b)/2 e^{ikt} + (a + i b)/2 e^{-ikt}
            terms.push(TrigTerm {
                freq: vec![k as i32],
                coef: [a / 2.0, -b / 2.0],
            });
            terms.push(TrigTerm {
                freq: vec![-(k as i32)],
                coef: [a / 2.0, b / 2.0],
            });
        }
        Self { terms }
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let ph: f64 = t.freq.iter().zip(theta).map(|(&k, th)| k as f64 * th).sum();
                t.coef[0] * ph.cos() - t.coef[1] * ph.sin()
            })
            .sum()
    }

    fn as_map(&self) -> HashMap<Vec<i32>, Complex64> {
        let mut m: HashMap<Vec<i32>, Complex64> = HashMap::new();
        for t in &self.terms {
            *m.entry(t.freq.clone()).or_default() += Complex64::new(t.coef[0], t.coef[1]);
        }
        m
    }
}

/// Curve `theta -> (p_1(theta), ..., p_d(theta))` on the `vars`-torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigCurveSpec {
    pub vars: usize,
    pub components: Vec<TrigPoly>,
}

impl TrigCurveSpec {
    pub fn circle() -> Self {
        Self {
            vars: 1,
            components: vec![
                TrigPoly::from_cos_sin(0.0, &[], &[1.0]),
                TrigPoly::from_cos_sin(0.0, &[1.0], &[]),
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Highest nonzero frequency per angle.
    pub fn degrees(&self) -> Vec<u32> {
        let mut m = vec![0u32; self.vars];
        for p in &self.components {
            for t in &p.terms {
                if t.coef[0] == 0.0 && t.coef[1] == 0.0 {
                    continue;
                }
                for (mk, &f) in m.iter_mut().zip(&t.freq) {
                    *mk = (*mk).max(f.unsigned_abs());
                }
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.vars == 0 || self.components.is_empty() {
            return invalid("trig curve needs at least one angle and one component");
        }
        for p in &self.components {
            if p.terms.iter().any(|t| t.freq.len() != self.vars) {
                return invalid("trig term frequency has the wrong number of angles");
            }
            let map = p.as_map();
            for (f, c) in &map {
                let neg: Vec<i32> = f.iter().map(|k| -k).collect();
                let partner = map.get(&neg).copied().unwrap_or_default();
                if (partner - c.conj()).norm() > 1e-12 * (1.0 + c.norm()) {
                    return invalid("trig polynomial is not real-valued (coefficients not conjugate-symmetric)");
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, theta: &[f64]) -> Vec<f64> {
        self.components.iter().map(|p| p.eval(theta)).collect()
    }

    /// Exact moments of the image of the uniform law on the torus: the
    /// constant Fourier coefficient of each monomial in the components.
    pub fn moments(&self, degree: usize) -> MomentVector {
        let d = self.dim();
        let mut mv = MomentVector::zeros(d, degree);
        let polys: Vec<HashMap<Vec<i32>, Complex64>> = self.components.iter().map(|p| p.as_map()).collect();
        let zero = vec![0i32; self.vars];
        // powers[i][e] = p_i^e
        let mut powers: Vec<Vec<HashMap<Vec<i32>, Complex64>>> = Vec::with_capacity(d);
        for p in &polys {
            let mut pw = vec![HashMap::from([(zero.clone(), Complex64::new(1.0, 0.0))])];
            for e in 1..=degree {
                let next = convolve(&pw[e - 1], p);
                pw.push(next);
            }
            powers.push(pw);
        }
        for k in 0..mv.basis.len() {
            let alpha = mv.basis.exponent(k).to_vec();
            let mut acc = HashMap::from([(zero.clone(), Complex64::new(1.0, 0.0))]);
            for (i, &e) in alpha.iter().enumerate() {
                if e > 0 {
                    acc = convolve(&acc, &powers[i][e as usize]);
                }
            }
            mv.values[k] = acc.get(&zero).copied().unwrap_or_default().re;
        }
        mv
    }
}

fn convolve(a: &HashMap<Vec<i32>, Complex64>, b: &HashMap<Vec<i32>, Complex64>) -> HashMap<Vec<i32>, Complex64> {
    let mut out: HashMap<Vec<i32>, Complex64> = HashMap::new();
    for (fa, ca) in a {
        for (fb, cb) in b {
            let f: Vec<i32> = fa.iter().zip(fb).map(|(x, y)| x + y).collect();
            *out.entry(f).or_default() += ca * cb;
        }
    }
    out.retain(|_, c| c.norm() > 0.0);
    out
}

/// Curve evaluated on the grid `2 pi j_k / n_k + u_k`, `j_k = 1..n_k`.
///
/// The result matches the image measure through degree
/// `min_k ceil(n_k / max(m_k, 1)) - 1`.
pub fn trig_design(spec: &TrigCurveSpec, n: &[usize], u: &[f64]) -> Result<AveragingSet> {
    spec.validate()?;
    if n.len() != spec.vars || u.len() != spec.vars {
        return invalid("trig_design needs one grid size and one phase per angle");
    }
    if n.iter().any(|&k| k == 0) {
        return invalid("trig_design needs n >= 1");
    }
    let degs = spec.degrees();
    let order = n
        .iter()
        .zip(&degs)
        .map(|(&nk, &mk)| nk.div_ceil(mk.max(1) as usize))
        .min()
        .unwrap()
        - 1;
    let total: usize = n.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![1usize; spec.vars];
    for _ in 0..total {
        let theta: Vec<f64> = idx
            .iter()
            .zip(n)
            .zip(u)
            .map(|((&j, &nk), &uk)| 2.0 * PI * j as f64 / nk as f64 + uk)
            .collect();
        points.push(spec.eval(&theta));
        for (k, j) in idx.iter_mut().enumerate() {
            if *j < n[k] {
                *j += 1;
                break;
            }
            *j = 1;
        }
    }
    let residual = verify_design(&points, &spec.moments(order), order, f64::INFINITY).max_mismatch;
    Ok(AveragingSet {
        dim: spec.dim(),
        points,
        order,
        max_degree: order,
        residual,
        target: Target::Measure("trig-curve".into()),
    })
}

/// Registry entry for a spherical design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub name: String,
    pub d: usize,
    pub t: usize,
    pub points: Vec<Vec<f64>>,
}

const BUNDLED: [&str; 5] = ["tetrahedron", "octahedron", "cube", "icosahedron", "dodecahedron"];

/// Names in the bundled registry; regular polygons are `polygon-N` for N >= 3.
pub fn registry_names() -> Vec<String> {
    let mut v: Vec<String> = (3..=12).map(|n| format!("polygon-{n}")).collect();
    v.extend(BUNDLED.iter().map(|s| s.to_string()));
    v
}

fn normalize_all(points: Vec<[f64; 3]>) -> Vec<Vec<f64>> {
    points
        .into_iter()
        .map(|p| {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            p.iter().map(|x| x / n).collect()
        })
        .collect()
}

fn signs3(base: [f64; 3], mask: [bool; 3]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for s in 0..8u32 {
        if (0..3).any(|i| !mask[i] && s & (1 << i) != 0) {
            continue;
        }
        let mut p = base;
        for (i, v) in p.iter_mut().enumerate() {
            if s & (1 << i) != 0 {
                *v = -*v;
            }
        }
        out.push(p);
    }
    out
}

fn cyclic(p: [f64; 3]) -> [[f64; 3]; 3] {
    [p, [p[1], p[2], p[0]], [p[2], p[0], p[1]]]
}

pub fn design_record(name: &str) -> Result<DesignRecord> {
    if let Some(rest) = name.strip_prefix("polygon-") {
        let n: usize = rest
            .parse()
            .map_err(|_| Error::NotFound(format!("spherical design {name}")))?;
        if n < 3 {
            return Err(Error::NotFound(format!("spherical design {name}")));
        }
        let points = (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        return Ok(DesignRecord {
            name: name.into(),
            d: 2,
            t: n - 1,
            points,
        });
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let (t, raw): (usize, Vec<[f64; 3]>) = match name {
        "tetrahedron" => (
            2,
            vec![[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]],
        ),
        "octahedron" => (
            3,
            (0..3)
                .flat_map(|i| {
                    let mut e = [0.0; 3];
                    e[i] = 1.0;
                    let mut f = [0.0; 3];
                    f[i] = -1.0;
                    [e, f]
                })
                .collect(),
        ),
        "cube" => (3, signs3([1.0, 1.0, 1.0], [true; 3])),
        "icosahedron" => (
            5,
            cyclic([0.0, 1.0, phi])
                .iter()
                .flat_map(|&p| {
                    let mask = [p[0] != 0.0, p[1] != 0.0, p[2] != 0.0];
                    signs3(p, mask)
                })
                .collect(),
        ),
        "dodecahedron" => {
            let mut v = signs3([1.0, 1.0, 1.0], [true; 3]);
            for p in cyclic([0.0, 1.0 / phi, phi]) {
                let mask = [p[0] != 0.0, p[1] != 0.0, p[2] != 0.0];
                v.extend(signs3(p, mask));
            }
            (5, v)
        }
        _ => return Err(Error::NotFound(format!("spherical design {name}"))),
    };
    Ok(DesignRecord {
        name: name.into(),
        d: 3,
        t,
        points: normalize_all(raw),
    })
}

/// Bundled spherical design as an averaging set of the uniform law on the sphere.
pub fn spherical_design(name: &str) -> Result<AveragingSet> {
    let rec = design_record(name)?;
    spherical_from_record(&rec)
}

/// Averaging set from a design record (e.g. loaded from JSON).
pub fn spherical_from_record(rec: &DesignRecord) -> Result<AveragingSet> {
    if rec.d < 2 || rec.points.iter().any(|p| p.len() != rec.d) {
        return invalid("design record has inconsistent dimension");
    }
    if rec
        .points
        .iter()
        .any(|p| (p.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() > 1e-12)
    {
        return invalid("spherical design points must have unit norm");
    }
    let moments = sphere_moments(rec.d, rec.t)?;
    let residual = verify_design(&rec.points, &moments, rec.t, f64::INFINITY).max_mismatch;
    Ok(AveragingSet {
        dim: rec.d,
        points: rec.points.clone(),
        order: rec.t,
        max_degree: rec.t,
        residual,
        target: Target::Measure(format!("sphere-{}", rec.d)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchEntry {
    pub alpha: Vec<u32>,
    pub empirical: f64,
    pub target: f64,
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub entries: Vec<MismatchEntry>,
    pub max_mismatch: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compare empirical moments of `points` with normalized `moments` for all
/// `|alpha| <= degree`.
pub fn verify_design(points: &[Vec<f64>], moments: &MomentVector, degree: usize, tol: f64) -> DesignReport {
    let d = moments.basis.dim();
    let degree = degree.min(moments.degree());
    let emp = MomentVector::of_points(points, d, degree);
    let mut entries = Vec::with_capacity(emp.basis.len());
    let mut worst = 0.0f64;
    for (k, alpha) in emp.basis.iter().enumerate() {
        let target = moments.get(alpha).unwrap_or(0.0);
        let mismatch = (emp.values[k] - target).abs();
        worst = worst.max(mismatch);
        entries.push(MismatchEntry {
            alpha: alpha.to_vec(),
            empirical: emp.values[k],
            target,
            mismatch,
        });
    }
    DesignReport {
        entries,
        max_mismatch: worst,
        tol,
        pass: worst <= tol,
    }
}
