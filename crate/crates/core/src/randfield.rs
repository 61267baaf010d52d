//! Stationary Gaussian random fields on a periodic grid by circulant
//! embedding, with periodic multilinear interpolation.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fourier::{fft_nd, signed_index, unflatten};
use crate::geom::TorusBox;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CovarianceKind {
    /// `C(y) = sigma^2 exp(-|y|^2 / (2 ell^2))`.
    GaussianDecay { sigma: f64, ell: f64 },
    /// `C(y) = sigma^2 (1 + |y| / a)^(-rho)`.
    PowerDecay { sigma: f64, rho: f64, a: f64 },
    /// Spectral density `1 / (4 kappa sum_j sin^2(k_j / 2))` on the integer lattice.
    Phonon { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    #[serde(flatten)]
    pub kind: CovarianceKind,
    /// Number of independent identical scalar components.
    #[serde(default = "one")]
    pub components: usize,
}

fn one() -> usize {
    1
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return invalid("field needs at least one component");
        }
        let ok = match self.kind {
            CovarianceKind::GaussianDecay { sigma, ell } => sigma >= 0.0 && ell > 0.0,
            CovarianceKind::PowerDecay { sigma, rho, a } => sigma >= 0.0 && rho > 0.0 && a > 0.0,
            CovarianceKind::Phonon { kappa } => kappa > 0.0,
        };
        let finite = match self.kind {
            CovarianceKind::GaussianDecay { sigma, ell } => sigma.is_finite() && ell.is_finite(),
            CovarianceKind::PowerDecay { sigma, rho, a } => sigma.is_finite() && rho.is_finite() && a.is_finite(),
            CovarianceKind::Phonon { kappa } => kappa.is_finite(),
        };
        if !ok || !finite {
            return invalid(format!("invalid covariance parameters {:?}", self.kind));
        }
        Ok(())
    }

    /// Covariance at lag `y` (not defined for the phonon kind).
    pub fn covariance(&self, y: &[f64]) -> Option<f64> {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        match self.kind {
            CovarianceKind::GaussianDecay { sigma, ell } => Some(sigma * sigma * (-r2 / (2.0 * ell * ell)).exp()),
            CovarianceKind::PowerDecay { sigma, rho, a } => Some(sigma * sigma * (1.0 + r2.sqrt() / a).powf(-rho)),
            CovarianceKind::Phonon { .. } => None,
        }
    }
}

/// Phonon spectral density at wavevector `k`; infinite at `k = 0`.
pub fn phonon_density(kappa: f64, k: &[f64]) -> f64 {
    let s: f64 = k.iter().map(|kj| (kj / 2.0).sin().powi(2)).sum();
    1.0 / (4.0 * kappa * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub bounds: TorusBox,
    pub grid_n: usize,
    pub components: usize,
    /// `components` consecutive row-major `grid_n^d` arrays.
    pub values: Vec<f64>,
    pub spec: CovarianceSpec,
    pub seed: u64,
    /// Negative spectral mass clipped, relative to the total absolute mass.
    pub clip_fraction: f64,
    /// Largest imaginary part left after the inverse transform.
    pub imag_residue: f64,
    /// Covariance at lag L/2 relative to the variance; zero for spectral specs.
    pub wrap_correction: f64,
}

impl GridField {
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn spacing(&self) -> f64 {
        self.bounds.side() / self.grid_n as f64
    }

    pub fn node_count(&self) -> usize {
        self.grid_n.pow(self.dim() as u32)
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let m = self.node_count();
        &self.values[c * m..(c + 1) * m]
    }

    /// Value at the grid node with multi-index `idx`.
    pub fn node(&self, c: usize, idx: &[usize]) -> f64 {
        let flat = idx.iter().fold(0, |acc, &i| acc * self.grid_n + i);
        self.component(c)[flat]
    }

    /// Periodic multilinear interpolation at `x`.
    pub fn sample(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let n = self.grid_n;
        let h = self.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..d {
            let u = self.bounds.wrap_coord(x[a]) / h;
            let f = u.floor();
            base[a] = (f as usize) % n;
            frac[a] = u - f;
        }
        let m = self.node_count();
        let mut out = vec![0.0; self.components];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * n + (base[a] + bit) % n;
            }
            if w == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.values[c * m + flat];
            }
        }
        out
    }
}

/// Circulant spectral synthesis of a stationary Gaussian field on the `grid_n^d` grid.
pub fn synthesize_field(bounds: TorusBox, grid_n: usize, spec: &CovarianceSpec, seed: u64) -> Result<GridField> {
    spec.validate()?;
    if grid_n < 4 {
        return invalid("grid_n must be at least 4");
    }
    let d = bounds.dim();
    if d > 3 {
        return invalid("fields support d <= 3");
    }
    let total = grid_n
        .checked_pow(d as u32)
        .filter(|&t| t <= 1 << 26)
        .ok_or_else(|| Error::InvalidArgument("field grid too large".into()))?;
    let h = bounds.side() / grid_n as f64;
    let mut idx = [0usize; 3];
    let mut lam: Vec<f64>;
    let mut wrap_correction = 0.0;
    match spec.kind {
        CovarianceKind::Phonon { kappa } => {
            if (h - 1.0).abs() > 1e-12 {
                return invalid("phonon fields live on the integer lattice: grid_n must equal L");
            }
            lam = (0..total)
                .map(|i| {
                    unflatten(i, grid_n, d, &mut idx);
                    if i == 0 {
                        return 0.0;
                    }
                    let k: Vec<f64> = idx[..d]
                        .iter()
                        .map(|&j| 2.0 * std::f64::consts::PI * j as f64 / grid_n as f64)
                        .collect();
                    phonon_density(kappa, &k)
                })
                .collect();
        }
        _ => {
            let mut c: Vec<Complex64> = (0..total)
                .map(|i| {
                    unflatten(i, grid_n, d, &mut idx);
                    let y: Vec<f64> = idx[..d].iter().map(|&j| signed_index(j, grid_n) as f64 * h).collect();
                    Complex64::new(spec.covariance(&y).unwrap(), 0.0)
                })
                .collect();
            let var = spec.covariance(&vec![0.0; d]).unwrap();
            if var > 0.0 {
                let mut half = vec![0.0; d];
                half[0] = bounds.side() / 2.0;
                wrap_correction = spec.covariance(&half).unwrap() / var;
            }
            fft_nd(&mut c, grid_n, d, false);
            // enforce lam(k) = lam(-k) exactly; roundoff asymmetry near zero
            // would otherwise leak into the imaginary part through the sqrt
            lam = (0..total)
                .map(|i| {
                    unflatten(i, grid_n, d, &mut idx);
                    let j = idx[..d].iter().fold(0, |acc, &v| acc * grid_n + (grid_n - v) % grid_n);
                    0.5 * (c[i].re + c[j].re)
                })
                .collect();
        }
    }
    let neg: f64 = lam.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let abs: f64 = lam.iter().map(|v| v.abs()).sum();
    let clip_fraction = if abs > 0.0 { neg / abs } else { 0.0 };
    if clip_fraction > 0.01 {
        return Err(Error::IllPosedCovariance { clip_fraction });
    }
    for v in lam.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    let mut values = Vec::with_capacity(total * spec.components);
    let mut imag_residue = 0.0f64;
    let inv = 1.0 / total as f64;
    for comp in 0..spec.components {
        let mut r = rng::stream(seed, "field", &[comp as u64]);
        let mut w: Vec<Complex64> = (0..total)
            .map(|_| Complex64::new(StandardNormal.sample(&mut r), 0.0))
            .collect();
        fft_nd(&mut w, grid_n, d, false);
        for (z, s) in w.iter_mut().zip(&lam) {
            *z *= *s;
        }
        fft_nd(&mut w, grid_n, d, true);
        for z in &w {
            imag_residue = imag_residue.max((z.im * inv).abs());
            values.push(z.re * inv);
        }
    }
    Ok(GridField {
        bounds,
        grid_n,
        components: spec.components,
        values,
        spec: spec.clone(),
        seed,
        clip_fraction,
        imag_residue,
        wrap_correction,
    })
}

/// Interpolated field value at `x`.
pub fn sample_field(field: &GridField, x: &[f64]) -> Vec<f64> {
    field.sample(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(sigma: f64, ell: f64) -> CovarianceSpec {
        CovarianceSpec {
            kind: CovarianceKind::GaussianDecay { sigma, ell },
            components: 1,
        }
    }

    #[test]
    fn zero_sigma_is_zero_field() {
        let b = TorusBox::new(2, 8.0).unwrap();
        let f = synthesize_field(b, 16, &gauss(0.0, 1.0), 1).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    fn lag_covariance(lag_nodes: usize, seeds: u64) -> (f64, f64) {
        let b = TorusBox::new(1, 32.0).unwrap();
        let spec = gauss(0.7, 2.0);
        let n = 64;
        let per: Vec<f64> = (0..seeds)
            .map(|s| {
                let f = synthesize_field(b, n, &spec, s).unwrap();
                let v = f.component(0);
                (0..n).map(|i| v[i] * v[(i + lag_nodes) % n]).sum::<f64>() / n as f64
            })
            .collect();
        let m = per.iter().sum::<f64>() / seeds as f64;
        let var = per.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        (m, (var / seeds as f64).sqrt())
    }

    #[test]
    fn lag_zero_covariance_is_variance() {
        let (m, se) = lag_covariance(0, 500);
        assert!((m - 0.49).abs() < 4.0 * se, "{m} +- {se}");
    }

    #[test]
    fn lag_ell_covariance() {
        // spacing 0.5, so lag ell = 2 is four nodes
        let (m, se) = lag_covariance(4, 500);
        let target = 0.49 * (-0.5f64).exp();
        assert!((m - target).abs() < 4.0 * se, "{m} vs {target} +- {se}");
    }

    #[test]
    fn field_is_real_and_reproducible() {
        let b = TorusBox::new(2, 16.0).unwrap();
        let f = synthesize_field(b, 32, &gauss(1.3, 1.5), 9).unwrap();
        assert!(f.imag_residue < 1e-10 * 1.3, "{}", f.imag_residue);
        let g = synthesize_field(b, 32, &gauss(1.3, 1.5), 9).unwrap();
        assert_eq!(f.values, g.values);
    }

    #[test]
    fn interpolation_rules() {
        let b = TorusBox::new(1, 8.0).unwrap();
        let f = synthesize_field(b, 16, &gauss(1.0, 1.0), 3).unwrap();
        let v = f.component(0).to_vec();
        assert_eq!(f.sample(&[1.5])[0], v[3]);
        assert!((f.sample(&[1.75])[0] - 0.5 * (v[3] + v[4])).abs() < 1e-15);
        // periodic wrap between the last and first node
        assert!((f.sample(&[7.75])[0] - 0.5 * (v[15] + v[0])).abs() < 1e-15);
        let mut c = f.clone();
        c.values.iter_mut().for_each(|x| *x = 2.5);
        let b2 = TorusBox::new(1, 8.0).unwrap();
        assert_eq!(c.bounds, b2);
        assert!((c.sample(&[3.3])[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn interpolation_3d_nodes_and_constants() {
        let b = TorusBox::new(3, 4.0).unwrap();
        let spec = CovarianceSpec {
            kind: CovarianceKind::GaussianDecay { sigma: 1.0, ell: 0.5 },
            components: 2,
        };
        let f = synthesize_field(b, 8, &spec, 4).unwrap();
        let x = [1.0, 2.5, 3.5];
        let s = f.sample(&x);
        assert_eq!(s[0], f.node(0, &[2, 5, 7]));
        assert_eq!(s[1], f.node(1, &[2, 5, 7]));
    }

    #[test]
    fn components_uncorrelated() {
        let b = TorusBox::new(2, 32.0).unwrap();
        let spec = CovarianceSpec {
            kind: CovarianceKind::GaussianDecay { sigma: 1.0, ell: 1.0 },
            components: 2,
        };
        let per: Vec<f64> = (0..200)
            .map(|s| {
                let f = synthesize_field(b, 32, &spec, s).unwrap();
                let (a, c) = (f.component(0), f.component(1));
                a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
            })
            .collect();
        let m = per.iter().sum::<f64>() / 200.0;
        let sd = (per.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!(m.abs() < 4.0 * sd / 200f64.sqrt());
    }

    #[test]
    fn phonon_variance_is_grid_average() {
        let n = 8;
        let b = TorusBox::new(3, n as f64).unwrap();
        let spec = CovarianceSpec {
            kind: CovarianceKind::Phonon { kappa: 1.0 },
            components: 1,
        };
        let mut avg = 0.0;
        for i in 1..n * n * n {
            let mut idx = [0; 3];
            unflatten(i, n, 3, &mut idx);
            let k: Vec<f64> = idx.iter().map(|&j| 2.0 * std::f64::consts::PI * j as f64 / n as f64).collect();
            avg += phonon_density(1.0, &k);
        }
        avg /= (n * n * n) as f64;
        let per: Vec<f64> = (0..300)
            .map(|s| {
                let f = synthesize_field(b, n, &spec, s).unwrap();
                f.values.iter().map(|v| v * v).sum::<f64>() / f.values.len() as f64
            })
            .collect();
        let m = per.iter().sum::<f64>() / 300.0;
        let sd = (per.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 299.0).sqrt() / 300f64.sqrt();
        assert!((m - avg).abs() < 4.0 * sd, "{m} vs {avg} +- {sd}");
    }

    #[test]
    fn phonon_needs_unit_spacing() {
        let b = TorusBox::new(3, 8.0).unwrap();
        let spec = CovarianceSpec {
            kind: CovarianceKind::Phonon { kappa: 1.0 },
            components: 3,
        };
        assert!(synthesize_field(b, 16, &spec, 0).is_err());
    }

    #[test]
    fn power_decay_reports_wrap_correction() {
        let b = TorusBox::new(1, 64.0).unwrap();
        let spec = CovarianceSpec {
            kind: CovarianceKind::PowerDecay { sigma: 1.0, rho: 3.0, a: 1.0 },
            components: 1,
        };
        let f = synthesize_field(b, 256, &spec, 0).unwrap();
        assert!((f.wrap_correction - 33f64.powi(-3)).abs() < 1e-15);
        assert!(f.clip_fraction <= 0.01);
    }

    #[test]
    fn ill_posed_covariance_detected() {
        // a very wide Gaussian covariance wrapped onto a tiny torus is not
        // positive definite on the grid
        let b = TorusBox::new(1, 4.0).unwrap();
        let r = synthesize_field(b, 64, &gauss(1.0, 3.0), 0);
        match r {
            Err(Error::IllPosedCovariance { clip_fraction }) => assert!(clip_fraction > 0.01),
            Ok(f) => panic!("expected ill-posed covariance, clip {}", f.clip_fraction),
            Err(e) => panic!("{e}"),
        }
    }
}
