//! Structure-factor estimation on the torus, radial binning, power-law fits
//! and analytic spectral densities.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::PointConfig;
use crate::error::{invalid, Error, Result};
use crate::fit::{loglog, ScalingFit, MIN_BINS};
use crate::fourier::fft_nd;
use crate::geom::TorusBox;
use crate::special::{polylog_unit, zeta};

/// Integer mode vectors `m` with `0 < |2 pi m / L| <= k_max`.
fn mode_vectors(bounds: &TorusBox, k_max: f64, half: bool) -> Vec<Vec<i64>> {
    let d = bounds.dim();
    let unit = 2.0 * PI / bounds.side();
    let m_max = (k_max / unit).floor() as i64;
    let lim2 = (k_max / unit).powi(2) * (1.0 + 1e-12);
    let mut out = Vec::new();
    let mut m = vec![-m_max; d];
    loop {
        let n2: i64 = m.iter().map(|v| v * v).sum();
        let first = m.iter().copied().find(|&v| v != 0);
        if n2 > 0 && (n2 as f64) <= lim2 && (!half || first > Some(0)) {
            out.push(m.clone());
        }
        let mut a = d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            if m[a] < m_max {
                m[a] += 1;
                break;
            }
            m[a] = -m_max;
        }
    }
}

/// All allowed wavevectors `2 pi m / L`, `m != 0`, with norm at most `k_max`.
pub fn allowed_wavevectors(bounds: &TorusBox, k_max: f64) -> Vec<Vec<f64>> {
    let unit = 2.0 * PI / bounds.side();
    mode_vectors(bounds, k_max, false)
        .into_iter()
        .map(|m| m.iter().map(|&v| v as f64 * unit).collect())
        .collect()
}

/// Mode index of an allowed wavevector, if it is one.
fn as_mode(bounds: &TorusBox, k: &[f64]) -> Option<Vec<i64>> {
    let scale = bounds.side() / (2.0 * PI);
    k.iter()
        .map(|&kv| {
            let q = kv * scale;
            let r = q.round();
            ((q - r).abs() <= 1e-9 * r.abs().max(1.0)).then_some(r as i64)
        })
        .collect()
}

/// `sum_j w_j exp(-i k . x_j)` for an allowed wavevector `k`.
pub fn scattering(config: &PointConfig, k: &[f64]) -> Result<Complex64> {
    if k.len() != config.dim() {
        return invalid("wavevector dimension does not match the sample");
    }
    if as_mode(&config.bounds, k).is_none() {
        return invalid("wavevector is not an allowed mode 2 pi m / L");
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, &w) in config.points().zip(&config.weights) {
        let ph: f64 = p.iter().zip(k).map(|(x, kv)| x * kv).sum();
        let (s, c) = ph.sin_cos();
        acc += Complex64::new(w * c, -w * s);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBin {
    /// Mean wavenumber of the modes in the bin.
    pub k: f64,
    pub s: f64,
    pub stderr: f64,
    pub modes: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BraggMode {
    pub k: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub bins: Vec<SpectralBin>,
    pub dim: usize,
    pub side: f64,
    pub intensity: f64,
    pub k_max: f64,
    pub bin_width: f64,
    /// Roundoff floor of a single-mode estimate, at least 1e-28.
    pub noise_floor: f64,
    pub bragg_spacing: Option<f64>,
    pub bragg_excluded: bool,
    /// Reciprocal-lattice modes of lattice-derived samples (mode mean over samples).
    pub bragg: Vec<BraggMode>,
}

impl SpectralEstimate {
    /// CSV with columns `k,S,stderr,modes,samples`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,S,stderr,modes,samples\n");
        for b in &self.bins {
            s.push_str(&format!("{},{},{},{},{}\n", b.k, b.s, b.stderr, b.modes, b.samples));
        }
        s
    }

    /// `[4 * 2 pi / L, min(cap, half the first Bragg wavenumber)]`.
    pub fn default_window(&self, cap: f64) -> (f64, f64) {
        let lo = 4.0 * 2.0 * PI / self.side;
        let hi = match self.bragg_spacing {
            Some(a) => cap.min(PI / a),
            None => cap,
        };
        (lo, hi)
    }

    /// Window `[k_lo, k_cap]` where `k_lo` is the first bin after the last
    /// bin below `factor * noise_floor` (among bins with `k <= k_cap`).
    /// `None` if fewer than the minimum number of bins remain.
    pub fn floor_window(&self, factor: f64, k_cap: f64) -> Option<(f64, f64)> {
        let below: Vec<&SpectralBin> = self.bins.iter().filter(|b| b.k <= k_cap).collect();
        let start = below
            .iter()
            .rposition(|b| !(b.s >= factor * self.noise_floor))
            .map_or(0, |i| i + 1);
        let kept = &below[start..];
        (kept.len() >= MIN_BINS).then(|| (kept[0].k, k_cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfOptions {
    pub k_max: f64,
    pub bin_width: f64,
    /// Drop reciprocal-lattice modes of lattice-derived samples from the bins.
    pub exclude_bragg: bool,
}

/// Radial bin of a wavenumber.
pub fn bin_index(k: f64, bin_width: f64) -> usize {
    (k / bin_width).floor() as usize
}

const CHUNK: usize = 8192;

/// `|rho(m)|^2` for the given half-space modes, summing phase-power tables.
fn mode_power_direct(config: &PointConfig, modes: &[Vec<i64>]) -> Vec<f64> {
    let d = config.dim();
    let m_max = modes.iter().flatten().map(|v| v.unsigned_abs()).max().unwrap_or(0) as usize;
    let width = 2 * m_max + 1;
    let offs: Vec<[usize; 3]> = modes
        .iter()
        .map(|m| {
            let mut o = [0usize; 3];
            for a in 0..d {
                o[a] = a * width + (m[a] + m_max as i64) as usize;
            }
            o
        })
        .collect();
    // runs of modes sharing m[0] with consecutive m[1]: one product per mode
    let mut runs: Vec<(usize, usize)> = Vec::new();
    if d == 2 {
        for (q, m) in modes.iter().enumerate() {
            match runs.last_mut() {
                Some((first, len)) if modes[*first][0] == m[0] && modes[*first][1] + *len as i64 == m[1] => *len += 1,
                _ => runs.push((q, 1)),
            }
        }
    }
    let unit = 2.0 * PI / config.bounds.side();
    let n = config.len();
    let partials: Vec<Vec<Complex64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rho = vec![Complex64::new(0.0, 0.0); modes.len()];
            let mut table = vec![Complex64::new(0.0, 0.0); d * width];
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                let p = config.point(i);
                for a in 0..d {
                    let t = &mut table[a * width..(a + 1) * width];
                    let (s, c) = (-unit * p[a]).sin_cos();
                    let e = Complex64::new(c, s);
                    t[m_max] = Complex64::new(1.0, 0.0);
                    for j in 1..=m_max {
                        t[m_max + j] = t[m_max + j - 1] * e;
                        t[m_max - j] = t[m_max + j].conj();
                    }
                }
                let w = config.weights[i];
                match d {
                    1 => {
                        for (r, o) in rho.iter_mut().zip(&offs) {
                            *r += table[o[0]] * w;
                        }
                    }
                    2 => {
                        for &(q, len) in &runs {
                            let a = table[offs[q][0]] * w;
                            let start = offs[q][1];
                            for (r, t) in rho[q..q + len].iter_mut().zip(&table[start..start + len]) {
                                *r += a * t;
                            }
                        }
                    }
                    _ => {
                        for (r, o) in rho.iter_mut().zip(&offs) {
                            let mut v = table[o[0]];
                            for &oa in &o[1..d] {
                                v *= table[oa];
                            }
                            *r += v * w;
                        }
                    }
                }
            }
            rho
        })
        .collect();
    let mut rho = vec![Complex64::new(0.0, 0.0); modes.len()];
    for part in partials {
        for (r, v) in rho.iter_mut().zip(part) {
            *r += v;
        }
    }
    rho.iter().map(|z| z.norm_sqr()).collect()
}

/// Points of a lattice-derived sample all on `h Z^d + U`: occupancy-grid FFT.
fn mode_power_grid(config: &PointConfig, modes: &[Vec<i64>]) -> Option<Vec<f64>> {
    if config.dim() > 3 {
        return None;
    }
    let h = config.meta.bragg_spacing?;
    let d = config.dim();
    let q = config.bounds.side() / h;
    let n = q.round() as usize;
    if (q - n as f64).abs() > 1e-9 * q || n == 0 || n.checked_pow(d as u32)? > 1 << 24 || config.is_empty() {
        return None;
    }
    let u: Vec<f64> = config.point(0).iter().map(|x| x.rem_euclid(h)).collect();
    let mut grid = vec![Complex64::new(0.0, 0.0); n.pow(d as u32)];
    for (p, &w) in config.points().zip(&config.weights) {
        let mut flat = 0;
        for a in 0..d {
            let t = (p[a] - u[a]) / h;
            let r = t.round();
            if (t - r).abs() > 1e-8 {
                return None;
            }
            flat = flat * n + (r as i64).rem_euclid(n as i64) as usize;
        }
        grid[flat] += w;
    }
    fft_nd(&mut grid, n, d, false);
    Some(
        modes
            .iter()
            .map(|m| {
                let flat = m.iter().fold(0, |acc, &v| acc * n + v.rem_euclid(n as i64) as usize);
                grid[flat].norm_sqr()
            })
            .collect(),
    )
}

/// Per-mode `|rho(k)|^2 / N` over the half-space mode set.
fn mode_structure(config: &PointConfig, modes: &[Vec<i64>]) -> Result<Vec<f64>> {
    let n = config.total_weight();
    if !(n > 0.0) {
        return invalid("structure factor of an empty sample");
    }
    let p = mode_power_grid(config, modes).unwrap_or_else(|| mode_power_direct(config, modes));
    Ok(p.into_iter().map(|v| v / n).collect())
}

/// Binned structure factor averaged over samples sharing a box.
pub fn structure_factor(configs: &[PointConfig], k_max: f64, bin_width: f64) -> Result<SpectralEstimate> {
    structure_factor_with(
        configs,
        &SfOptions {
            k_max,
            bin_width,
            exclude_bragg: false,
        },
    )
}

pub fn structure_factor_with(configs: &[PointConfig], opts: &SfOptions) -> Result<SpectralEstimate> {
    let first = configs.first().ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let mut acc = SfAccumulator::new(first.bounds, first.meta.bragg_spacing, opts)?;
    if configs.iter().any(|c| c.bounds != acc.bounds) {
        return invalid("samples do not share a box");
    }
    let powers: Vec<Vec<f64>> = configs.par_iter().map(|c| acc.mode_powers(c)).collect::<Result<_>>()?;
    for (c, p) in configs.iter().zip(powers) {
        acc.push(p, c.intensity())?;
    }
    acc.finish()
}

/// Sample-by-sample structure-factor estimation, for batches too large to
/// hold in memory.
#[derive(Debug, Clone)]
pub struct SfAccumulator {
    bounds: TorusBox,
    opts: SfOptions,
    bragg_spacing: Option<f64>,
    modes: Vec<Vec<i64>>,
    norms: Vec<f64>,
    is_bragg: Vec<bool>,
    bin_of: Vec<Option<usize>>,
    count: Vec<usize>,
    ksum: Vec<f64>,
    bin_means: Vec<Vec<f64>>,
    mode_sum: Vec<f64>,
    intensity_sum: f64,
}

impl SfAccumulator {
    pub fn new(bounds: TorusBox, bragg_spacing: Option<f64>, opts: &SfOptions) -> Result<Self> {
        if bounds.dim() > 3 {
            return invalid("structure factors support d <= 3");
        }
        if !(opts.bin_width > 0.0) {
            return invalid("bin width must be positive");
        }
        if !(opts.k_max > 2.0 * PI / bounds.side()) {
            return invalid("k_max must exceed the smallest allowed wavenumber");
        }
        let modes = mode_vectors(&bounds, opts.k_max, true);
        let unit = 2.0 * PI / bounds.side();
        let norms: Vec<f64> = modes
            .iter()
            .map(|m| unit * (m.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt())
            .collect();
        let period = bragg_spacing.and_then(|a| {
            let q = bounds.side() / a;
            let r = q.round();
            ((q - r).abs() <= 1e-9 * q && r >= 1.0).then_some(r as i64)
        });
        let is_bragg: Vec<bool> = modes
            .iter()
            .map(|m| period.is_some_and(|q| m.iter().all(|v| v % q == 0)))
            .collect();
        let nbins = norms.iter().map(|&k| bin_index(k, opts.bin_width)).max().unwrap_or(0) + 1;
        let bin_of: Vec<Option<usize>> = norms
            .iter()
            .zip(&is_bragg)
            .map(|(&k, &b)| (!(b && opts.exclude_bragg)).then(|| bin_index(k, opts.bin_width)))
            .collect();
        let mut count = vec![0usize; nbins];
        let mut ksum = vec![0.0; nbins];
        for (b, &k) in bin_of.iter().zip(&norms) {
            if let Some(b) = *b {
                count[b] += 1;
                ksum[b] += k;
            }
        }
        Ok(Self {
            bounds,
            opts: *opts,
            bragg_spacing,
            mode_sum: vec![0.0; modes.len()],
            modes,
            norms,
            is_bragg,
            bin_of,
            count,
            ksum,
            bin_means: Vec::new(),
            intensity_sum: 0.0,
        })
    }

    /// Number of half-space modes evaluated per sample.
    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// `|rho_hat(k)|^2 / N` of one sample at every half-space mode.
    pub fn mode_powers(&self, config: &PointConfig) -> Result<Vec<f64>> {
        if config.bounds != self.bounds {
            return invalid("samples do not share a box");
        }
        mode_structure(config, &self.modes)
    }

    /// Add the mode powers of one sample.
    pub fn push(&mut self, powers: Vec<f64>, intensity: f64) -> Result<()> {
        if powers.len() != self.modes.len() {
            return invalid("mode power vector has the wrong length");
        }
        let mut means = vec![0.0; self.count.len()];
        for (mi, &v) in powers.iter().enumerate() {
            self.mode_sum[mi] += v;
            if let Some(b) = self.bin_of[mi] {
                means[b] += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&self.count) {
            if c > 0 {
                *m /= c as f64;
            }
        }
        self.bin_means.push(means);
        self.intensity_sum += intensity;
        Ok(())
    }

    pub fn add(&mut self, config: &PointConfig) -> Result<()> {
        let p = self.mode_powers(config)?;
        self.push(p, config.intensity())
    }

    pub fn samples(&self) -> usize {
        self.bin_means.len()
    }

    /// Bin means and spread across samples.
    pub fn finish(&self) -> Result<SpectralEstimate> {
        let r = self.bin_means.len();
        if r == 0 {
            return invalid("no samples");
        }
        let mut bins = Vec::new();
        for b in 0..self.count.len() {
            if self.count[b] == 0 {
                continue;
            }
            let vals: Vec<f64> = self.bin_means.iter().map(|row| row[b]).collect();
            let mean = vals.iter().sum::<f64>() / r as f64;
            let stderr = if r > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64 / r as f64).sqrt()
            } else {
                0.0
            };
            bins.push(SpectralBin {
                k: self.ksum[b] / self.count[b] as f64,
                s: mean,
                stderr,
                // both k and -k
                modes: 2 * self.count[b],
                samples: r,
            });
        }
        let bragg = (0..self.modes.len())
            .filter(|&i| self.is_bragg[i])
            .map(|i| BraggMode {
                k: self.norms[i],
                s: self.mode_sum[i] / r as f64,
            })
            .collect();
        let roundoff = (f64::EPSILON * self.opts.k_max * self.bounds.side()).powi(2);
        Ok(SpectralEstimate {
            bins,
            dim: self.bounds.dim(),
            side: self.bounds.side(),
            intensity: self.intensity_sum / r as f64,
            k_max: self.opts.k_max,
            bin_width: self.opts.bin_width,
            noise_floor: roundoff.max(1e-28),
            bragg_spacing: self.bragg_spacing,
            bragg_excluded: self.opts.exclude_bragg,
            bragg,
        })
    }
}

/// Weighted log-log fit `S ~ a k^p` over the bins with `k` in the window.
pub fn fit_exponent(est: &SpectralEstimate, window: (f64, f64)) -> Result<ScalingFit> {
    let sel: Vec<&SpectralBin> = est.bins.iter().filter(|b| b.k >= window.0 && b.k <= window.1).collect();
    if sel.len() < MIN_BINS {
        return invalid(format!(
            "fit window [{}, {}] holds {} bins, need {MIN_BINS}",
            window.0,
            window.1,
            sel.len()
        ));
    }
    if let Some(b) = sel.iter().find(|b| b.s <= est.noise_floor) {
        return Err(Error::BelowNoiseFloor { k: b.k, value: b.s });
    }
    let x: Vec<f64> = sel.iter().map(|b| b.k).collect();
    let y: Vec<f64> = sel.iter().map(|b| b.s).collect();
    let e: Vec<f64> = sel.iter().map(|b| b.stderr / b.s).collect();
    let (slope, icpt, se, r2) = loglog(&x, &y, &e)?;
    Ok(ScalingFit {
        exponent: slope,
        amplitude: icpt.exp(),
        window,
        stderr_exponent: se,
        r_squared: r2,
        bins: sel.len(),
    })
}

/// Bartlett density of a stationary renewal process on Z with gap transform
/// `q` and mean gap `mu`.
fn renewal_bartlett(q: Complex64, mu: f64) -> f64 {
    (1.0 + 2.0 * (q / (1.0 - q)).re) / mu
}

/// Density `g(k)` of the continuous part of the spectral measure of the
/// stationary zeta(s) renewal process on Z + U.
pub fn renewal_density(s: f64, k: f64) -> Result<f64> {
    if !(s > 2.0 && s <= 3.0) {
        return invalid(format!("renewal density needs 2 < s <= 3, got {s}"));
    }
    let t = k.rem_euclid(2.0 * PI);
    if t.min(2.0 * PI - t) < 1e-300 || !k.is_finite() {
        return Err(Error::Pole { k });
    }
    let z = zeta(s)?;
    let q = polylog_unit(s, -k)? / z;
    Ok(renewal_bartlett(q, zeta(s - 1.0)? / z))
}

/// Structure factor of a cluster process from its progenitor and cluster
/// statistics: `S(k) = (|E mu(k)|^2 S_prog(k) + atom0 Var mu(k)) / E mu(0)`.
///
/// `atom0` is the self-pair mass of the progenitor's reduced second moment
/// relative to its intensity (1 for a simple point process).
pub fn cluster_spectrum<'a>(
    progenitor_s: impl Fn(&[f64]) -> f64 + 'a,
    mean_ft: impl Fn(&[f64]) -> Complex64 + 'a,
    var_ft: impl Fn(&[f64]) -> f64 + 'a,
    atom0: f64,
) -> impl Fn(&[f64]) -> f64 + 'a {
    move |k: &[f64]| {
        let mass = mean_ft(&vec![0.0; k.len()]).re;
        (mean_ft(k).norm_sqr() * progenitor_s(k) + atom0 * var_ft(k)) / mass
    }
}
