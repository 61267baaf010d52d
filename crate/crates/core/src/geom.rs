//! Periodic boxes, convex cells and exact polynomial moments.
//!
//! Cells keep both a half-space list (used for membership and clipping) and
//! a vertex list (used for integration). Vertices carry an incidence bitmask
//! over the half-spaces they lie on; clipping walks the implicit edge graph
//! given by shared incidences, which works unchanged in two and three
//! dimensions.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Cube `[0, side)^dim` with periodic boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusBox {
    dim: usize,
    side: f64,
}

impl TorusBox {
    pub fn new(dim: usize, side: f64) -> Result<Self> {
        if dim < 1 {
            return invalid("box dimension must be at least 1");
        }
        if !(side > 0.0) || !side.is_finite() {
            return invalid(format!("box side must be positive, got {side}"));
        }
        Ok(Self { dim, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// The side as an integer, if it is one.
    pub fn integer_side(&self) -> Option<usize> {
        let r = self.side.round();
        ((self.side - r).abs() < 1e-12 && r >= 1.0).then_some(r as usize)
    }

    #[inline]
    pub fn wrap_coord(&self, x: f64) -> f64 {
        let y = x.rem_euclid(self.side);
        // rem_euclid may round up to `side` for tiny negative inputs
        if y >= self.side {
            0.0
        } else {
            y
        }
    }

    pub fn wrap(&self, p: &mut [f64]) {
        for x in p {
            *x = self.wrap_coord(*x);
        }
    }

    /// Minimal-image representative of a coordinate difference.
    #[inline]
    pub fn min_image(&self, dx: f64) -> f64 {
        dx - self.side * (dx / self.side).round()
    }
}

/// Monomials x^alpha in `dim` variables with |alpha| <= degree, graded order.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    dim: usize,
    degree: usize,
    exps: Vec<u32>,
    // raise[k * dim + i] = index of alpha_k + e_i, or usize::MAX
    raise: Vec<usize>,
    // products (i, j, k) with alpha_i + alpha_j = alpha_k
    products: Vec<(u32, u32, u32)>,
    lookup: HashMap<Vec<u32>, usize>,
    degrees: Vec<usize>,
    // monomial k > 0 is monomial recipe[k].0 times x[recipe[k].1]
    recipe: Vec<(u32, u32)>,
    // |alpha|! / alpha!
    multinom: Vec<f64>,
    // dim! alpha! / (|alpha| + dim)!, the simplex moment weights
    simplex_weight: Vec<f64>,
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        assert!(dim >= 1, "monomial basis needs at least one variable");
        let mut exps = Vec::new();
        for deg in 0..=degree {
            let mut cur = vec![0u32; dim];
            compositions(deg as u32, 0, &mut cur, &mut exps);
        }
        let len = exps.len() / dim;
        let mut basis = Self {
            dim,
            degree,
            exps,
            raise: vec![usize::MAX; len * dim],
            products: Vec::new(),
            lookup: HashMap::new(),
            degrees: Vec::new(),
            recipe: vec![(0, 0); len],
            multinom: Vec::with_capacity(len),
            simplex_weight: Vec::with_capacity(len),
        };
        basis.degrees = (0..len)
            .map(|k| basis.exponent(k).iter().sum::<u32>() as usize)
            .collect();
        for k in 0..len {
            let afact: f64 = basis.exponent(k).iter().map(|&e| factorial(e as usize)).product();
            let tot = basis.degrees[k];
            basis.multinom.push(factorial(tot) / afact);
            basis.simplex_weight.push(factorial(dim) * afact / factorial(tot + dim));
        }
        for k in 0..len {
            let e = basis.exponent(k).to_vec();
            basis.lookup.insert(e, k);
        }
        for k in 0..len {
            if basis.total_degree(k) == degree {
                continue;
            }
            for i in 0..dim {
                let mut a = basis.exponent(k).to_vec();
                a[i] += 1;
                let r = basis.index_of(&a).expect("raised monomial in basis");
                basis.raise[k * dim + i] = r;
                if basis.recipe[r] == (0, 0) && r != 0 {
                    basis.recipe[r] = (k as u32, i as u32);
                }
            }
        }
        for i in 0..len {
            for j in 0..len {
                if basis.total_degree(i) + basis.total_degree(j) > degree {
                    continue;
                }
                let a: Vec<u32> = basis
                    .exponent(i)
                    .iter()
                    .zip(basis.exponent(j))
                    .map(|(x, y)| x + y)
                    .collect();
                let k = basis.index_of(&a).expect("product monomial in basis");
                basis.products.push((i as u32, j as u32, k as u32));
            }
        }
        basis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exps.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponent(&self, k: usize) -> &[u32] {
        &self.exps[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    pub fn total_degree(&self, k: usize) -> usize {
        self.degrees[k]
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        if alpha.len() != self.dim || alpha.iter().sum::<u32>() as usize > self.degree {
            return None;
        }
        self.lookup.get(alpha).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> {
        self.exps.chunks(self.dim)
    }

    /// Evaluate every monomial at `x` into `out` (length `len()`).
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        // graded order: each monomial of degree > 0 is a raise of an earlier one
        let out = &mut out[..self.recipe.len()];
        for k in 1..out.len() {
            let (parent, var) = self.recipe[k];
            out[k] = out[parent as usize] * x[var as usize];
        }
    }

    /// Truncated product of two polynomials given as coefficient vectors.
    fn mul(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, k) in &self.products {
            out[k as usize] += a[i as usize] * b[j as usize];
        }
    }

    /// sum_{m <= degree} (v . t)^m as a polynomial in t.
    fn geometric_series(&self, v: &[f64], out: &mut [f64]) {
        self.eval(v, out);
        for (o, c) in out.iter_mut().zip(&self.multinom) {
            *o *= c;
        }
    }
}

fn compositions(remaining: u32, pos: usize, cur: &mut [u32], out: &mut Vec<u32>) {
    if pos == cur.len() - 1 {
        cur[pos] = remaining;
        out.extend_from_slice(cur);
        return;
    }
    for v in (0..=remaining).rev() {
        cur[pos] = v;
        compositions(remaining - v, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Monomial moments indexed by a [`MonomialBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub basis: MonomialBasis,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn zeros(dim: usize, degree: usize) -> Self {
        let basis = MonomialBasis::new(dim, degree);
        let values = vec![0.0; basis.len()];
        Self { basis, values }
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn get(&self, alpha: &[u32]) -> Option<f64> {
        self.basis.index_of(alpha).map(|k| self.values[k])
    }

    /// Total mass (the alpha = 0 entry).
    pub fn mass(&self) -> f64 {
        self.values[0]
    }

    /// Divide every entry by the mass.
    pub fn normalized(&self) -> Self {
        let m = self.mass();
        Self {
            basis: self.basis.clone(),
            values: self.values.iter().map(|v| v / m).collect(),
        }
    }

    /// Empirical moments (1/n) sum_j x_j^alpha of a point list.
    pub fn of_points(points: &[Vec<f64>], dim: usize, degree: usize) -> Self {
        let mut mv = Self::zeros(dim, degree);
        let mut buf = vec![0.0; mv.basis.len()];
        for p in points {
            mv.basis.eval(p, &mut buf);
            for (acc, b) in mv.values.iter_mut().zip(&buf) {
                *acc += b;
            }
        }
        let n = points.len().max(1) as f64;
        mv.values.iter_mut().for_each(|v| *v /= n);
        mv
    }
}

/// Closed half-space `normal . x <= offset` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl HalfSpace {
    #[inline]
    fn slack(&self, x: &[f64; 3]) -> f64 {
        self.normal[0] * x[0] + self.normal[1] * x[1] + self.normal[2] * x[2] - self.offset
    }
}

/// Membership tolerance for a half-space offset.
#[inline]
pub fn membership_tol(offset: f64) -> f64 {
    1e-9 * (1.0 + offset.abs())
}

const MAX_FACETS: usize = 64;

/// Bounded convex polytope in two or three dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCell {
    dim: usize,
    halfspaces: Vec<HalfSpace>,
    vertices: Vec<[f64; 3]>,
    incidence: Vec<u64>,
    volume: f64,
    id: u64,
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn to3(x: &[f64]) -> [f64; 3] {
    let mut p = [0.0; 3];
    p[..x.len()].copy_from_slice(x);
    p
}

fn normalize_halfspace(normal: &[f64], offset: f64) -> Result<HalfSpace> {
    let n = to3(normal);
    let norm = dot(&n, &n).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return invalid("half-space normal must be a nonzero finite vector");
    }
    Ok(HalfSpace {
        normal: [n[0] / norm, n[1] / norm, n[2] / norm],
        offset: offset / norm,
    })
}

impl ConvexCell {
    /// Build a cell from half-spaces by vertex enumeration.
    pub fn from_halfspaces(dim: usize, halfspaces: &[(Vec<f64>, f64)], id: u64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return invalid(format!("cells support d in {{2, 3}}, got {dim}"));
        }
        if halfspaces.len() > MAX_FACETS {
            return invalid("too many half-spaces");
        }
        let hs = halfspaces
            .iter()
            .map(|(a, b)| {
                if a.len() != dim {
                    return invalid("half-space normal has the wrong dimension");
                }
                normalize_halfspace(a, *b)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut cell = Self {
            dim,
            halfspaces: hs,
            vertices: Vec::new(),
            incidence: Vec::new(),
            volume: 0.0,
            id,
        };
        cell.enumerate_vertices();
        cell.finish()?;
        Ok(cell)
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn cuboid(lo: &[f64], hi: &[f64], id: u64) -> Result<Self> {
        let dim = lo.len();
        if hi.len() != dim {
            return invalid("cuboid corners differ in dimension");
        }
        let mut hs = Vec::new();
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            hs.push((e.clone(), hi[i]));
            e[i] = -1.0;
            hs.push((e, -lo[i]));
        }
        Self::from_halfspaces(dim, &hs, id)
    }

    /// Convex polygon from its vertices (either orientation).
    pub fn polygon(vertices: &[[f64; 2]], id: u64) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return invalid("polygon needs at least 3 vertices");
        }
        let area2: f64 = (0..n)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        let sign = if area2 >= 0.0 { 1.0 } else { -1.0 };
        let hs = (0..n)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                // outward normal of a CCW edge a->b is (dy, -dx)
                let nrm = vec![sign * (b[1] - a[1]), -sign * (b[0] - a[0])];
                let off = nrm[0] * a[0] + nrm[1] * a[1];
                (nrm, off)
            })
            .collect::<Vec<_>>();
        Self::from_halfspaces(2, &hs, id)
    }

    /// Simplex with the given `dim + 1` vertices.
    pub fn simplex(points: &[Vec<f64>], id: u64) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if points.len() != dim + 1 {
            return invalid("simplex needs dim + 1 vertices");
        }
        if dim == 2 {
            let v: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
            return Self::polygon(&v, id);
        }
        if dim != 3 {
            return invalid("simplex supports d in {2, 3}");
        }
        let pts: Vec<[f64; 3]> = points.iter().map(|p| to3(p)).collect();
        let mut hs = Vec::new();
        for skip in 0..4 {
            let f: Vec<&[f64; 3]> = (0..4).filter(|&i| i != skip).map(|i| &pts[i]).collect();
            let mut n = cross(&sub(f[1], f[0]), &sub(f[2], f[0]));
            let mut b = dot(&n, f[0]);
            if dot(&n, &pts[skip]) > b {
                n = [-n[0], -n[1], -n[2]];
                b = -b;
            }
            hs.push((n.to_vec(), b));
        }
        Self::from_halfspaces(3, &hs, id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }

    pub fn halfspaces(&self) -> &[HalfSpace] {
        &self.halfspaces
    }

    /// Vertices, truncated to the cell dimension. Polygons are counter-clockwise.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        self.vertices.iter().map(|v| v[..self.dim].to_vec()).collect()
    }

    pub(crate) fn raw_vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let p = to3(x);
        self.halfspaces
            .iter()
            .all(|h| h.slack(&p) <= membership_tol(h.offset))
    }

    /// Range of `u . x` over the cell.
    pub fn support_range(&self, u: &[f64]) -> (f64, f64) {
        let u = to3(u);
        self.vertices
            .iter()
            .map(|v| dot(&u, v))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)))
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in &self.vertices {
            for i in 0..self.dim {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }

    pub fn vertex_centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for i in 0..3 {
                c[i] += v[i];
            }
        }
        let n = self.vertices.len() as f64;
        c.map(|x| x / n)
    }

    /// Centre of mass.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = [0.0; 3];
        let mut total = 0.0;
        self.for_each_simplex(|s, vol| {
            total += vol;
            for i in 0..3 {
                let mean = s.iter().map(|p| p[i]).sum::<f64>() / s.len() as f64;
                c[i] += vol * mean;
            }
        });
        c[..self.dim].iter().map(|x| x / total).collect()
    }

    /// Uniform random point by rejection from the bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<f64> = (0..self.dim)
                .map(|i| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>())
                .collect();
            if self.contains(&x) {
                return x;
            }
        }
    }

    /// Exact volume from the simplicial fan (recomputed, not cached).
    pub fn compute_volume(&self) -> f64 {
        let mut total = 0.0;
        self.for_each_simplex(|_, vol| total += vol);
        total
    }

    /// Exact integrals of x^alpha over the cell for |alpha| <= degree.
    pub fn moments(&self, degree: usize) -> MomentVector {
        let mut mv = MomentVector::zeros(self.dim, degree);
        self.accumulate_moments(&mut mv);
        mv
    }

    pub(crate) fn accumulate_moments(&self, mv: &mut MomentVector) {
        let basis = &mv.basis;
        let d = self.dim;
        let len = basis.len();
        let mut acc = vec![0.0; len];
        let mut series = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        let mut prod = vec![0.0; len];
        let mut apex: Option<([f64; 3], Vec<f64>)> = None;
        self.for_each_simplex(|s, vol| {
            // every simplex of the fan shares its first vertex
            let (_, first) = match &apex {
                Some((a, _)) if *a == s[0] => apex.as_ref().unwrap(),
                _ => {
                    let mut ser = vec![0.0; len];
                    basis.geometric_series(&s[0][..d], &mut ser);
                    apex.insert((s[0], ser))
                }
            };
            prod.copy_from_slice(first);
            for v in &s[1..] {
                basis.geometric_series(&v[..d], &mut series);
                basis.mul(&prod, &series, &mut tmp);
                std::mem::swap(&mut prod, &mut tmp);
            }
            for k in 0..len {
                acc[k] += vol * basis.simplex_weight[k] * prod[k];
            }
        });
        for (m, a) in mv.values.iter_mut().zip(acc) {
            *m += a;
        }
    }

    /// Visit the simplices of the fan from the vertex centroid with their volumes.
    pub(crate) fn for_each_simplex<F: FnMut(&[[f64; 3]], f64)>(&self, mut f: F) {
        let c = self.vertex_centroid();
        if self.dim == 2 {
            let n = self.vertices.len();
            for i in 0..n {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let s = [c, a, b];
                let vol = 0.5 * ((a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0])).abs();
                f(&s, vol);
            }
            return;
        }
        for h in 0..self.halfspaces.len() {
            let bit = 1u64 << h;
            let face: Vec<[f64; 3]> = self
                .vertices
                .iter()
                .zip(&self.incidence)
                .filter(|(_, &inc)| inc & bit != 0)
                .map(|(v, _)| *v)
                .collect();
            if face.len() < 3 {
                continue;
            }
            let ordered = order_face(&face, &self.halfspaces[h].normal);
            for i in 1..ordered.len() - 1 {
                let s = [c, ordered[0], ordered[i], ordered[i + 1]];
                let vol = tet_volume(&s);
                f(&s, vol);
            }
        }
    }

    /// Sub-cell `{x in cell : a . x <= b}`.
    pub fn clip(&self, a: &[f64], b: f64) -> Result<Self> {
        if a.len() != self.dim {
            return invalid("clip normal has the wrong dimension");
        }
        let h = normalize_halfspace(a, b)?;
        self.clip_normalized(h)
    }

    pub(crate) fn clip_normalized(&self, h: HalfSpace) -> Result<Self> {
        let tol = membership_tol(h.offset);
        let slack: Vec<f64> = self.vertices.iter().map(|v| h.slack(v)).collect();
        let any_in = slack.iter().any(|&s| s < -tol);
        let any_out = slack.iter().any(|&s| s > tol);
        if !any_in || !any_out {
            return Err(Error::EmptyClip);
        }
        if self.halfspaces.len() >= MAX_FACETS {
            return invalid("cell has too many facets to clip further");
        }
        let new_bit = 1u64 << self.halfspaces.len();
        let mut vertices = Vec::with_capacity(self.vertices.len() + 2);
        let mut incidence = Vec::with_capacity(self.vertices.len() + 2);
        for (i, v) in self.vertices.iter().enumerate() {
            if slack[i] <= tol {
                vertices.push(*v);
                let on = if slack[i] >= -tol { new_bit } else { 0 };
                incidence.push(self.incidence[i] | on);
            }
        }
        let need = (self.dim - 1) as u32;
        for i in 0..self.vertices.len() {
            if slack[i] >= -tol {
                continue;
            }
            for j in 0..self.vertices.len() {
                if slack[j] <= tol {
                    continue;
                }
                let common = self.incidence[i] & self.incidence[j];
                if common.count_ones() < need {
                    continue;
                }
                let t = slack[i] / (slack[i] - slack[j]);
                let (p, q) = (self.vertices[i], self.vertices[j]);
                vertices.push([
                    p[0] + t * (q[0] - p[0]),
                    p[1] + t * (q[1] - p[1]),
                    p[2] + t * (q[2] - p[2]),
                ]);
                incidence.push(common | new_bit);
            }
        }
        let mut halfspaces = self.halfspaces.clone();
        halfspaces.push(h);
        let mut cell = Self {
            dim: self.dim,
            halfspaces,
            vertices,
            incidence,
            volume: 0.0,
            id: self.id,
        };
        cell.finish()?;
        Ok(cell)
    }

    /// Apply `x -> m x + t` (m row-major, dim x dim, invertible).
    pub fn affine_map(&self, m: &[f64], t: &[f64]) -> Result<Self> {
        let d = self.dim;
        if m.len() != d * d || t.len() != d {
            return invalid("affine map has the wrong shape");
        }
        // padded to 3x3 with the identity so everything stays on the stack
        let mut mat = nalgebra::Matrix3::identity();
        let mut tv = nalgebra::Vector3::zeros();
        for i in 0..d {
            for j in 0..d {
                mat[(i, j)] = m[i * d + j];
            }
            tv[i] = t[i];
        }
        let inv_t = mat
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("affine map is singular".into()))?
            .transpose();
        let hs = self
            .halfspaces
            .iter()
            .map(|h| {
                let na = inv_t * nalgebra::Vector3::from(h.normal);
                let off = h.offset + na.dot(&tv);
                (na.as_slice()[..d].to_vec(), off)
            })
            .collect::<Vec<_>>();
        let vertices: Vec<[f64; 3]> = self
            .vertices
            .iter()
            .map(|v| (mat * nalgebra::Vector3::from(*v) + tv).into())
            .collect();
        let mut halfspaces = Vec::with_capacity(hs.len());
        for (a, b) in hs {
            halfspaces.push(normalize_halfspace(&a, b)?);
        }
        let mut cell = Self {
            dim: d,
            halfspaces,
            vertices,
            incidence: self.incidence.clone(),
            volume: 0.0,
            id: self.id,
        };
        cell.finish()?;
        Ok(cell)
    }

    /// Translate by `-center` and scale by `1/scale`.
    pub fn normalized_frame(&self, center: &[f64], scale: f64) -> Result<Self> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = 1.0 / scale;
        }
        let t: Vec<f64> = center.iter().map(|c| -c / scale).collect();
        self.affine_map(&m, &t)
    }

    fn enumerate_vertices(&mut self) {
        let m = self.halfspaces.len();
        let d = self.dim;
        let mut verts: Vec<[f64; 3]> = Vec::new();
        let mut inc: Vec<u64> = Vec::new();
        let mut push = |x: [f64; 3], hs: &[HalfSpace]| {
            if !hs.iter().all(|h| h.slack(&x) <= membership_tol(h.offset)) {
                return;
            }
            let bits = hs
                .iter()
                .enumerate()
                .filter(|(_, h)| h.slack(&x).abs() <= membership_tol(h.offset))
                .fold(0u64, |acc, (k, _)| acc | (1 << k));
            let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if let Some(k) = verts
                .iter()
                .position(|v| sub(v, &x).iter().all(|e| e.abs() <= 1e-9 * scale))
            {
                inc[k] |= bits;
            } else {
                verts.push(x);
                inc.push(bits);
            }
        };
        let hs = self.halfspaces.clone();
        if d == 2 {
            for i in 0..m {
                for j in i + 1..m {
                    let (a, b) = (&hs[i], &hs[j]);
                    let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let x = (a.offset * b.normal[1] - b.offset * a.normal[1]) / det;
                    let y = (a.normal[0] * b.offset - b.normal[0] * a.offset) / det;
                    push([x, y, 0.0], &hs);
                }
            }
        } else {
            for i in 0..m {
                for j in i + 1..m {
                    for k in j + 1..m {
                        let (a, b, c) = (&hs[i].normal, &hs[j].normal, &hs[k].normal);
                        let bc = cross(b, c);
                        let det = dot(a, &bc);
                        if det.abs() < 1e-12 {
                            continue;
                        }
                        let ca = cross(c, a);
                        let ab = cross(a, b);
                        let mut x = [0.0; 3];
                        for t in 0..3 {
                            x[t] = (hs[i].offset * bc[t] + hs[j].offset * ca[t] + hs[k].offset * ab[t]) / det;
                        }
                        push(x, &hs);
                    }
                }
            }
        }
        self.vertices = verts;
        self.incidence = inc;
    }

    /// Drop redundant half-spaces, order polygon vertices, cache the volume.
    fn finish(&mut self) -> Result<()> {
        let d = self.dim;
        if self.vertices.len() < d + 1 {
            return Err(Error::DegenerateCell { volume: 0.0 });
        }
        let keep: Vec<usize> = (0..self.halfspaces.len())
            .filter(|&h| {
                let bit = 1u64 << h;
                self.incidence.iter().filter(|&&inc| inc & bit != 0).count() >= d
            })
            .collect();
        if keep.len() != self.halfspaces.len() {
            let halfspaces = keep.iter().map(|&h| self.halfspaces[h]).collect();
            for inc in &mut self.incidence {
                let mut new = 0u64;
                for (nk, &h) in keep.iter().enumerate() {
                    if *inc & (1u64 << h) != 0 {
                        new |= 1u64 << nk;
                    }
                }
                *inc = new;
            }
            self.halfspaces = halfspaces;
        }
        if d == 2 {
            let c = self.vertex_centroid();
            let mut idx: Vec<usize> = (0..self.vertices.len()).collect();
            let ang: Vec<f64> = self
                .vertices
                .iter()
                .map(|v| (v[1] - c[1]).atan2(v[0] - c[0]))
                .collect();
            idx.sort_by(|&a, &b| ang[a].total_cmp(&ang[b]));
            self.vertices = idx.iter().map(|&i| self.vertices[i]).collect();
            self.incidence = idx.iter().map(|&i| self.incidence[i]).collect();
        }
        // unbounded inputs leave some direction uncapped by any facet
        if self.halfspaces.len() < d + 1 {
            return Err(Error::DegenerateCell { volume: f64::INFINITY });
        }
        let vol = self.compute_volume();
        if !(vol > 0.0) || !vol.is_finite() {
            return Err(Error::DegenerateCell { volume: vol });
        }
        if !self.is_closed() {
            return Err(Error::DegenerateCell { volume: f64::INFINITY });
        }
        self.volume = vol;
        Ok(())
    }

    fn is_closed(&self) -> bool {
        // facet areas times unit normals sum to zero only for a closed surface
        let d = self.dim;
        let mut flux = [0.0; 3];
        let mut scale = 0.0;
        if d == 2 {
            // an unbounded region leaves a pair of ring neighbours with no common facet
            let n = self.vertices.len();
            return (0..n).all(|i| self.incidence[i] & self.incidence[(i + 1) % n] != 0);
        } else {
            for (h, hs) in self.halfspaces.iter().enumerate() {
                let bit = 1u64 << h;
                let face: Vec<[f64; 3]> = self
                    .vertices
                    .iter()
                    .zip(&self.incidence)
                    .filter(|(_, &inc)| inc & bit != 0)
                    .map(|(v, _)| *v)
                    .collect();
                if face.len() < 3 {
                    continue;
                }
                let ordered = order_face(&face, &hs.normal);
                let mut area = 0.0;
                for i in 1..ordered.len() - 1 {
                    let c = cross(&sub(&ordered[i], &ordered[0]), &sub(&ordered[i + 1], &ordered[0]));
                    area += 0.5 * dot(&c, &c).sqrt();
                }
                for t in 0..3 {
                    flux[t] += area * hs.normal[t];
                }
                scale += area;
            }
        }
        dot(&flux, &flux).sqrt() <= 1e-7 * scale.max(1e-300)
    }
}

fn tet_volume(s: &[[f64; 3]; 4]) -> f64 {
    let a = sub(&s[1], &s[0]);
    let b = sub(&s[2], &s[0]);
    let c = sub(&s[3], &s[0]);
    dot(&a, &cross(&b, &c)).abs() / 6.0
}

fn order_face(face: &[[f64; 3]], normal: &[f64; 3]) -> Vec<[f64; 3]> {
    let n = face.len() as f64;
    let mut c = [0.0; 3];
    for v in face {
        for t in 0..3 {
            c[t] += v[t] / n;
        }
    }
    let helper = if normal[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = {
        let x = cross(normal, &helper);
        let l = dot(&x, &x).sqrt();
        x.map(|v| v / l)
    };
    let e2 = cross(normal, &e1);
    let mut pts: Vec<(f64, [f64; 3])> = face
        .iter()
        .map(|v| {
            let r = sub(v, &c);
            (dot(&r, &e2).atan2(dot(&r, &e1)), *v)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().map(|(_, v)| v).collect()
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn double_factorial_odd(k: u32) -> f64 {
    // (k - 1)!! for even k
    let mut r = 1.0;
    let mut j = k as i64 - 1;
    while j > 1 {
        r *= j as f64;
        j -= 2;
    }
    r
}

/// Moment of x^alpha under the uniform probability measure on S^{d-1}.
pub fn sphere_moment(d: usize, alpha: &[u32]) -> Result<f64> {
    if d < 2 || alpha.len() != d {
        return invalid("sphere_moment needs d >= 2 and a multi-index of length d");
    }
    if alpha.iter().any(|a| a % 2 == 1) {
        return Ok(0.0);
    }
    let num: f64 = alpha.iter().map(|&a| double_factorial_odd(a)).product();
    let total: u32 = alpha.iter().sum();
    let mut den = 1.0;
    let mut j = 0;
    while j < total {
        den *= (d as u32 + j) as f64;
        j += 2;
    }
    Ok(num / den)
}

/// All sphere moments up to `degree` as a normalized [`MomentVector`].
pub fn sphere_moments(d: usize, degree: usize) -> Result<MomentVector> {
    let mut mv = MomentVector::zeros(d, degree);
    for k in 0..mv.basis.len() {
        mv.values[k] = sphere_moment(d, mv.basis.exponent(k))?;
    }
    Ok(mv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn unit_square() -> ConvexCell {
        ConvexCell::cuboid(&[0.0, 0.0], &[1.0, 1.0], 0).unwrap()
    }

    #[test]
    fn basis_is_graded() {
        let b = MonomialBasis::new(2, 2);
        let exps: Vec<Vec<u32>> = b.iter().map(|e| e.to_vec()).collect();
        assert_eq!(
            exps,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        let mut out = vec![0.0; b.len()];
        b.eval(&[2.0, 3.0], &mut out);
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn square_volume_and_moments() {
        let sq = unit_square();
        assert_relative_eq!(sq.volume(), 1.0, epsilon = 1e-15);
        let m = sq.moments(2);
        assert_relative_eq!(m.get(&[1, 0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.get(&[2, 0]).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m.get(&[1, 1]).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn simplex_volume_and_xy_moment() {
        let t = ConvexCell::simplex(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        assert_relative_eq!(t.volume(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(t.moments(2).get(&[1, 1]).unwrap(), 1.0 / 24.0, epsilon = 1e-15);
        // non-symmetric triangle: int_0^1 x int_0^x y = 1/8
        let t2 = ConvexCell::simplex(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]], 0).unwrap();
        assert_relative_eq!(t2.moments(2).get(&[1, 1]).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn unit_cube_moments_3d() {
        let c = ConvexCell::cuboid(&[0.0; 3], &[1.0; 3], 0).unwrap();
        assert_relative_eq!(c.volume(), 1.0, epsilon = 1e-14);
        let m = c.moments(4);
        assert_relative_eq!(m.get(&[2, 1, 1]).unwrap(), 1.0 / 12.0, epsilon = 1e-14);
        assert_relative_eq!(m.get(&[0, 0, 4]).unwrap(), 0.2, epsilon = 1e-14);
        let tet = ConvexCell::simplex(
            &[vec![0.0; 3], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            0,
        )
        .unwrap();
        assert_relative_eq!(tet.volume(), 1.0 / 6.0, epsilon = 1e-15);
        // int over the standard simplex of xyz = 1/720
        assert_relative_eq!(tet.moments(3).get(&[1, 1, 1]).unwrap(), 1.0 / 720.0, epsilon = 1e-15);
    }

    #[test]
    fn clip_examples() {
        let sq = unit_square();
        let half = sq.clip(&[1.0, 0.0], 0.5).unwrap();
        assert_relative_eq!(half.volume(), 0.5, epsilon = 1e-15);
        assert_eq!(sq.clip(&[1.0, 0.0], 2.0), Err(Error::EmptyClip));
        assert_eq!(sq.clip(&[1.0, 0.0], -1.0), Err(Error::EmptyClip));
        let a = [0.6, 0.8];
        let left = sq.clip(&a, 0.7).unwrap();
        let right = sq.clip(&[-0.6, -0.8], -0.7).unwrap();
        assert!((left.volume() + right.volume() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn contains_examples() {
        let sq = unit_square();
        assert!(sq.contains(&[0.5, 0.5]));
        assert!(!sq.contains(&[1.5, 0.5]));
        for v in sq.vertices() {
            assert!(sq.contains(&v));
        }
    }

    #[test]
    fn unbounded_input_is_degenerate() {
        let r = ConvexCell::from_halfspaces(2, &[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0)], 0);
        assert!(matches!(r, Err(Error::DegenerateCell { .. })));
        let r = ConvexCell::from_halfspaces(
            2,
            &[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0), (vec![-1.0, 0.0], 0.0)],
            0,
        );
        assert!(matches!(r, Err(Error::DegenerateCell { .. })));
    }

    #[test]
    fn clipped_cube_3d_is_consistent() {
        let c = ConvexCell::cuboid(&[0.0; 3], &[1.0; 3], 0).unwrap();
        let n = [1.0, 1.0, 1.0];
        let a = c.clip(&n, 1.5 / 1.0).unwrap();
        let b = c.clip(&[-1.0, -1.0, -1.0], -1.5).unwrap();
        assert_relative_eq!(a.volume(), 0.5, epsilon = 1e-13);
        assert_relative_eq!(a.volume() + b.volume(), 1.0, epsilon = 1e-13);
        // corner cut x + y + z <= 0.5 gives a tetrahedron of volume 1/48
        let t = c.clip(&n, 0.5).unwrap();
        assert_relative_eq!(t.volume(), 0.5f64.powi(3) / 6.0, epsilon = 1e-14);
        assert_eq!(t.vertices().len(), 4);
        for v in t.vertices() {
            assert!(t.contains(&v));
        }
    }

    #[test]
    fn random_hexagon_volume_matches_hit_count() {
        let hex: Vec<[f64; 2]> = (0..6)
            .map(|k| {
                let th = k as f64 * std::f64::consts::PI / 3.0 + 0.1 * (k as f64).sin();
                let r = 1.0 + 0.2 * (k as f64 * 1.3).cos();
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        let cell = ConvexCell::polygon(&hex, 0).unwrap();
        let (lo, hi) = cell.bounding_box();
        let area_box = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| {
                let x = [
                    lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
                    lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
                ];
                // independent point-in-polygon test by edge cross products
                (0..6).all(|i| {
                    let a = hex[i];
                    let b = hex[(i + 1) % 6];
                    (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]) >= 0.0
                })
            })
            .count() as f64;
        let p = hits / n as f64;
        let est = p * area_box;
        let sigma = area_box * (p * (1.0 - p) / n as f64).sqrt();
        assert!((est - cell.volume()).abs() <= 3.0 * sigma, "{est} vs {}", cell.volume());
    }

    #[test]
    fn triangle_xy_moment_matches_monte_carlo() {
        let t = ConvexCell::simplex(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let (x, y): (f64, f64) = (rng.random(), rng.random());
            let v = if x + y <= 1.0 { x * y } else { 0.0 };
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let sd = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - t.moments(2).get(&[1, 1]).unwrap()).abs() <= 3.0 * sd);
    }

    #[test]
    fn sphere_moment_examples() {
        assert_eq!(sphere_moment(2, &[1, 0]).unwrap(), 0.0);
        assert_relative_eq!(sphere_moment(2, &[2, 0]).unwrap(), 0.5, epsilon = 1e-15);
        // Monte Carlo over uniform points on S^2
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::StandardNormal;
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let g: [f64; 3] = [rng.sample(normal), rng.sample(normal), rng.sample(normal)];
            let r2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            let v = g[0] * g[0] * g[1] * g[1] / (r2 * r2);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let sd = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = sphere_moment(3, &[2, 2, 0]).unwrap();
        assert_relative_eq!(exact, 1.0 / 15.0, epsilon = 1e-15);
        assert!((mean - exact).abs() <= 3.0 * sd);
    }

    #[test]
    fn sphere_second_moments_sum_to_one() {
        for d in 2..6 {
            let m = sphere_moments(d, 3).unwrap();
            let total: f64 = (0..m.basis.len())
                .filter(|&k| m.basis.total_degree(k) == 2)
                .map(|k| m.values[k])
                .sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn torus_wrapping() {
        let b = TorusBox::new(2, 4.0).unwrap();
        assert_eq!(b.wrap_coord(-1e-18), 0.0);
        assert_relative_eq!(b.wrap_coord(5.5), 1.5);
        assert_relative_eq!(b.min_image(3.5), -0.5);
        assert!(TorusBox::new(2, 0.0).is_err());
        assert!(TorusBox::new(0, 1.0).is_err());
    }
}
