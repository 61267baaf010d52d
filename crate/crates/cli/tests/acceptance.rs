//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! `HYPERSCOPE_ACCEPT=1,3` runs a subset; `HYPERSCOPE_ACCEPT_STRICT=1` turns
//! any FAIL into a nonzero exit status.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use hyperscope::avset::{
    design_record, registry_names, solve_averaging_set, trig_design, verify_design, SolverOptions, TrigCurveSpec,
};
use hyperscope::construct::{
    cluster_process, displace, lattice, phonon_lattice, place_in_tiling, poisson, renewal_product, zeta_renewal,
    ClusterKind, ClusterSpec, Displacement, Placement, PointConfig, RenewalSpec,
};
use hyperscope::geom::{sphere_moment, sphere_moments, ConvexCell, TorusBox};
use hyperscope::randfield::{synthesize_field, CovarianceKind, CovarianceSpec};
use hyperscope::realspace::{
    fit_variance_exponent, scan_centers, stealth_from_statistics, linear_statistic, TestFunction, VarianceAccumulator,
    VarianceCurve,
};
use hyperscope::rng;
use hyperscope::spectral::{
    allowed_wavevectors, bin_index, fit_exponent, renewal_density, SfAccumulator, SfOptions, SpectralEstimate,
};
use hyperscope::special::zeta;
use hyperscope::tessellate::{fair_stit, SplitDirectionSpec};
use hyperscope_cli::config::RunConfig;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

type Outcome = (bool, String);

fn seed_of(root: u64, i: usize) -> u64 {
    rng::child_seed(root, "sample", &[i as u64])
}

/// Build `n` samples in parallel batches and hand them to `sink` in order.
fn stream(n: usize, root: u64, build: impl Fn(u64) -> PointConfig + Sync, mut sink: impl FnMut(&PointConfig)) {
    let batch = rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let built: Vec<PointConfig> = (start..end).into_par_iter().map(|i| build(seed_of(root, i))).collect();
        built.iter().for_each(&mut sink);
        start = end;
    }
}

fn sf(bounds: TorusBox, bragg: Option<f64>, k_max: f64, bin_width: f64) -> SfAccumulator {
    SfAccumulator::new(
        bounds,
        bragg,
        &SfOptions {
            k_max,
            bin_width,
            exclude_bragg: true,
        },
    )
    .unwrap()
}

/// Oracle averaged over the non-Bragg modes of each bin, keyed by bin index.
fn bin_oracle(
    bounds: &TorusBox,
    bragg: Option<f64>,
    k_max: f64,
    bin_width: f64,
    f: impl Fn(&[f64]) -> f64,
) -> BTreeMap<usize, f64> {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for k in allowed_wavevectors(bounds, k_max) {
        if let Some(a) = bragg {
            let on = k.iter().all(|v| {
                let m = v * a / (2.0 * PI);
                (m - m.round()).abs() < 1e-9
            });
            if on {
                continue;
            }
        }
        let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = sums.entry(bin_index(norm, bin_width)).or_insert((0.0, 0));
        e.0 += f(&k);
        e.1 += 1;
    }
    sums.into_iter().map(|(b, (s, c))| (b, s / c as f64)).collect()
}

/// Largest `|S - oracle| / stderr` over the bins with `k` in `range`.
fn worst_z(est: &SpectralEstimate, oracle: &BTreeMap<usize, f64>, range: (f64, f64)) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut n = 0;
    for b in est.bins.iter().filter(|b| b.k >= range.0 && b.k <= range.1) {
        let want = oracle[&bin_index(b.k, est.bin_width)];
        worst = worst.max((b.s - want).abs() / b.stderr);
        n += 1;
    }
    (worst, n)
}

/// Feed a spectral accumulator; an empty sample has no `|rho|^2 / N` and is counted instead.
fn add_sf(acc: &mut SfAccumulator, c: &PointConfig, empty: &mut usize) {
    if c.is_empty() {
        *empty += 1;
    } else {
        acc.add(c).unwrap();
    }
}

fn var_scan(
    n: usize,
    root: u64,
    bounds: TorusBox,
    f: TestFunction,
    radii: &[f64],
    centres: usize,
    build: impl Fn(u64) -> PointConfig + Sync,
    mut extra: impl FnMut(&PointConfig),
) -> VarianceCurve {
    let mut acc = VarianceAccumulator::new(bounds, &f, radii, scan_centers(&bounds, centres, root)).unwrap();
    stream(n, root, build, |c| {
        acc.add(c).unwrap();
        extra(c);
    });
    acc.finish().unwrap()
}

fn log_grid(from: f64, to: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (from.ln() + (to.ln() - from.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn c1() -> Outcome {
    let b = TorusBox::new(2, 32.0).unwrap();
    let mut acc = sf(b, None, 3.0, 0.1);
    let radii = log_grid(1.0, 8.0, 12);
    let curve = var_scan(200, 101, b, TestFunction::BallIndicator, &radii, 16, |s| poisson(b, 1.0, s).unwrap(), |c| {
        acc.add(c).unwrap()
    });
    let fit = fit_exponent(&acc.finish().unwrap(), (0.5, 2.5)).unwrap();
    // Var[N(B_r)] / r^2 = pi for unit intensity
    let worst = curve
        .values
        .iter()
        .zip(&curve.stderr)
        .map(|(v, e)| (v - PI).abs() / e)
        .fold(0.0, f64::max);
    (
        fit.exponent.abs() <= 0.1 && worst <= 5.0,
        format!("sf exponent {:+.4} (|p| <= 0.1); variance curve max deviation from pi {worst:.2} stderr (<= 5)", fit.exponent),
    )
}

fn c2() -> Outcome {
    let b = TorusBox::new(2, 32.0).unwrap();
    let mut acc = sf(b, Some(1.0), 10.0, 0.25);
    stream(100, 201, |s| lattice(b, 1.0, s).unwrap(), |c| acc.add(c).unwrap());
    let est = acc.finish().unwrap();
    let s_max = est.bins.iter().map(|b| b.s).fold(0.0, f64::max);

    let eps = PI;
    let line = TorusBox::new(1, 1024.0).unwrap();
    let probe = TestFunction::Sinc2Stealth { eps };
    let stats = |build: &(dyn Fn(u64) -> PointConfig + Sync), root| {
        let mut v = Vec::new();
        stream(100, root, build, |c| v.push(linear_statistic(c, &probe, 1.0, &[0.0]).unwrap()));
        stealth_from_statistics(&v, eps).unwrap()
    };
    let lat = stats(&|s| lattice(line, 1.0, s).unwrap(), 202);
    let poi = stats(&|s| poisson(line, 1.0, s).unwrap(), 203);
    let z = (poi.value - poi.poisson_reference).abs() / poi.stderr;
    (
        s_max <= 1e-8 && lat.value <= 1e-6 && z <= 5.0,
        format!(
            "max non-Bragg S {s_max:.2e} (<= 1e-8); lattice stealth variance {:.2e} (<= 1e-6); Poisson {:.4} vs {:.4} ({z:.2} stderr)",
            lat.value, poi.value, poi.poisson_reference
        ),
    )
}

/// Exact `Var[N([0, r))] / r^(4-s)` of the stationary zeta renewal process
/// for integer `r`, from the spectral density and the Fejer kernel.
fn renewal_variance_oracle(s: f64, r: f64) -> f64 {
    // k = pi t^2 on (0, 1] smooths the k^(s-2) cusp at the origin
    let n = 200_000;
    let h = 1.0 / n as f64;
    let mut sum = 0.0;
    for i in 1..=n {
        let t = i as f64 * h;
        let k = PI * t * t;
        let fejer = ((k * r / 2.0).sin() / (k / 2.0).sin()).powi(2);
        let w = if i == n { 0.5 } else { 1.0 };
        sum += w * renewal_density(s, k).unwrap() * fejer * 2.0 * PI * t;
    }
    // both halves of (0, 2 pi), divided by 2 pi
    let var = 2.0 * sum * h / (2.0 * PI);
    var / r.powf(4.0 - s)
}

fn c3() -> Outcome {
    let s = 2.5;
    let len = 1e5;
    let b = TorusBox::new(1, len).unwrap();
    let build = |seed| zeta_renewal(&RenewalSpec { s, length: len }, seed).unwrap();
    let radii = log_grid(8.0, 128.0, 9);
    let (k_max, bw) = (2.6, 0.05);
    let mut acc = sf(b, Some(1.0), k_max, bw);
    let mut empty = 0;
    let curve = var_scan(400, 301, b, TestFunction::CubeIndicator, &radii, 64, build, |c| {
        add_sf(&mut acc, c, &mut empty)
    });
    let fit = fit_variance_exponent(&curve, (8.0, 128.0), None).unwrap();
    let last = radii.len() - 1;
    // values are Var / r
    let constant = curve.values[last] * 128.0 / 128f64.powf(4.0 - s);
    let paper = PI * zeta(s).unwrap().powi(2) * statrs::function::gamma::gamma(s - 4.0)
        / (zeta(s - 1.0).unwrap().powi(3) * statrs::function::gamma::gamma(s));
    let exact = renewal_variance_oracle(s, 128.0);
    let est = acc.finish().unwrap();
    // |rho|^2 / N carries a factor 1 / intensity = mu relative to g
    let mu = zeta(s - 1.0).unwrap() / zeta(s).unwrap();
    let oracle = bin_oracle(&b, Some(1.0), k_max, bw, |k| mu * renewal_density(s, k[0].abs()).unwrap());
    let (z, bins) = worst_z(&est, &oracle, (0.3, 2.5));
    let exp_ok = (fit.exponent + 0.5).abs() <= 0.1;
    let const_ok = (constant / paper - 1.0).abs() <= 0.15;
    (
        exp_ok && const_ok && z <= 5.0,
        format!(
            "variance exponent {:+.3} (-0.5 +- 0.1); Var/r^1.5 at r=128 {constant:.4} vs closed form {paper:.4} ({:+.1}%, 15% allowed; exact spectral oracle {exact:.4}, {:+.1}%); S(k) vs renewal density max {z:.2} stderr over {bins} bins ({empty} empty samples skipped)",
            fit.exponent,
            100.0 * (constant / paper - 1.0),
            100.0 * (constant / exact - 1.0)
        ),
    )
}

fn c4() -> Outcome {
    let s = 2.5;
    let b = TorusBox::new(2, 512.0).unwrap();
    let mut acc = sf(b, Some(1.0), 1.0, 0.02);
    let mut empty = 0;
    stream(400, 401, |seed| renewal_product(b, s, seed).unwrap(), |c| add_sf(&mut acc, c, &mut empty));
    let est = acc.finish().unwrap();
    let window = (0.02, 0.6);
    let fit = fit_exponent(&est, window).unwrap();
    (
        (fit.exponent + 1.5).abs() <= 0.2,
        format!(
            "sf exponent {:+.3} over k in {window:?} (-1.5 +- 0.2); {empty} empty samples skipped",
            fit.exponent
        ),
    )
}

fn c5() -> Outcome {
    let b = TorusBox::new(2, 8.0).unwrap();
    let (k_max, bw) = (6.0, 0.5);
    let mut centroid = sf(b, None, k_max, bw);
    let mut uniform = sf(b, None, k_max, bw);
    let tilings = |seed| fair_stit(b, 10, &SplitDirectionSpec::UniformSphere, seed).unwrap();
    let batch = rayon::current_num_threads().max(1);
    let n = 200;
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let built: Vec<(PointConfig, PointConfig)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let seed = seed_of(501, i);
                let t = tilings(seed);
                (
                    place_in_tiling(&t, Placement::Centroid, seed).unwrap().0,
                    place_in_tiling(&t, Placement::UniformOne, seed).unwrap().0,
                )
            })
            .collect();
        for (c, u) in &built {
            centroid.add(c).unwrap();
            uniform.add(u).unwrap();
        }
        start = end;
    }
    let window = (0.7, 6.0);
    let fc = fit_exponent(&centroid.finish().unwrap(), window).unwrap();
    let fu = fit_exponent(&uniform.finish().unwrap(), window).unwrap();
    (
        fc.exponent >= 2.2 && fu.exponent > 0.3,
        format!(
            "centroid exponent {:.3} (>= 2.2), uniform-one exponent {:.3} (> 0.3), k in {window:?}",
            fc.exponent, fu.exponent
        ),
    )
}

fn c6() -> Outcome {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/fig1-desk.json");
    let mut cfg = RunConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    cfg.output_dir = tmp.path().to_path_buf();
    let t0 = Instant::now();
    let (report, manifest) = hyperscope_cli::run::pipeline(&cfg, None).unwrap();
    let wall = t0.elapsed().as_secs_f64();
    let a = &report.analyses[0];
    let solver = manifest.solver.clone().unwrap_or_default();
    match (&a.error, a.fit) {
        (None, Some(f)) => (
            f.exponent >= 8.0 && wall <= 900.0 && solver.failed_cells == 0,
            format!(
                "exponent {:.2} (>= 8) over k in [{:.2}, {:.2}] ({} bins, floor {:.1e}); {} samples in {wall:.0}s (<= 900s); solver failures {}/{}",
                f.exponent,
                f.window.0,
                f.window.1,
                f.bins,
                a.noise_floor.unwrap_or(0.0),
                cfg.samples,
                solver.failed_cells,
                solver.cells
            ),
        ),
        (e, _) => (false, format!("no fit: {e:?}")),
    }
}

fn c7() -> Outcome {
    let b = TorusBox::new(2, 32.0).unwrap();
    let circle = ClusterSpec {
        kind: ClusterKind::Circle { n: 3 },
        rotate: false,
        phase: true,
    };
    let mut acc = sf(b, Some(1.0), 1.2, 0.05);
    stream(
        300,
        701,
        |seed| cluster_process(&lattice(b, 1.0, seed).unwrap(), &circle, seed).unwrap(),
        |c| acc.add(c).unwrap(),
    );
    let window = (0.2, 1.2);
    let fc = fit_exponent(&acc.finish().unwrap(), window).unwrap();

    let sigma = 0.2;
    let gauss = ClusterSpec {
        kind: ClusterKind::IidGaussian { sigma, count: 1 },
        rotate: false,
        phase: false,
    };
    let k_max = 6.0;
    let bw = 0.1;
    let mut acc = sf(b, Some(1.0), k_max, bw);
    stream(
        300,
        702,
        |seed| cluster_process(&lattice(b, 1.0, seed).unwrap(), &gauss, seed).unwrap(),
        |c| acc.add(c).unwrap(),
    );
    let est = acc.finish().unwrap();
    let fg = fit_exponent(&est, (0.2, 1.5)).unwrap();
    let oracle = bin_oracle(&b, Some(1.0), k_max, bw, |k| {
        1.0 - (-sigma * sigma * k.iter().map(|v| v * v).sum::<f64>()).exp()
    });
    let (z, bins) = worst_z(&est, &oracle, (0.0, k_max));
    (
        (fc.exponent - 6.0).abs() <= 0.75 && (fg.exponent - 2.0).abs() <= 0.3 && z <= 5.0,
        format!(
            "circle(3) exponent {:.3} over k in {window:?} (6 +- 0.75); iid-gaussian exponent {:.3} (2 +- 0.3); off-Bragg S vs 1 - exp(-sigma^2 k^2) max {z:.2} stderr over {bins} bins",
            fc.exponent, fg.exponent
        ),
    )
}

fn c8() -> Outcome {
    let b = TorusBox::new(1, 1024.0).unwrap();
    let spec = CovarianceSpec {
        kind: CovarianceKind::GaussianDecay { sigma: 0.3, ell: 2.0 },
        components: 1,
    };
    let mut acc = sf(b, Some(1.0), 0.4, 0.01);
    stream(
        400,
        801,
        |seed| {
            let field = synthesize_field(b, 1024, &spec, rng::child_seed(seed, "field-sample", &[])).unwrap();
            displace(&lattice(b, 1.0, seed).unwrap(), &Displacement::Field(field), seed).unwrap()
        },
        |c| acc.add(c).unwrap(),
    );
    let window = (0.03, 0.3);
    let f = fit_exponent(&acc.finish().unwrap(), window).unwrap();
    (
        (3.0..=4.4).contains(&f.exponent),
        format!(
            "exponent {:.3} over k in {window:?} (required in [3.0, 4.4]; ceiling <= 4.4 {})",
            f.exponent,
            if f.exponent <= 4.4 { "holds" } else { "violated" }
        ),
    )
}

fn c9() -> Outcome {
    let b = TorusBox::new(3, 16.0).unwrap();
    let mut acc = sf(b, Some(1.0), 1.1, 0.1);
    stream(100, 901, |seed| phonon_lattice(b, 1.0, seed).unwrap(), |c| acc.add(c).unwrap());
    let est = acc.finish().unwrap();
    let window = (0.3, 1.0);
    let f = fit_exponent(&est, window).unwrap();
    let sel: Vec<f64> = est.bins.iter().filter(|b| b.k >= window.0 && b.k <= window.1).map(|b| b.s).collect();
    let positive = sel.iter().all(|&s| s > 0.0);
    (
        f.exponent.abs() <= 0.15 && positive,
        format!(
            "exponent {:+.3} over k in {window:?} (0 +- 0.15); S in [{:.3}, {:.3}]",
            f.exponent,
            sel.iter().cloned().fold(f64::INFINITY, f64::min),
            sel.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn random_polygon(r: &mut impl Rng) -> ConvexCell {
    let k = r.random_range(3..9);
    let gaps: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
    let total: f64 = gaps.iter().sum();
    let (cx, cy, scale) = (r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(0.3..3.0));
    let mut t: f64 = r.random_range(0.0..2.0 * PI);
    let v: Vec<[f64; 2]> = gaps
        .iter()
        .map(|g| {
            t += 2.0 * PI * g / total;
            [cx + scale * t.cos(), cy + scale * t.sin()]
        })
        .collect();
    ConvexCell::polygon(&v, 0).unwrap()
}

fn random_tetra(r: &mut impl Rng) -> ConvexCell {
    loop {
        let p: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        if let Ok(c) = ConvexCell::simplex(&p, 0) {
            if c.volume() > 0.05 {
                return c;
            }
        }
    }
}

fn unit(r: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Clip additivity and affine equivariance of volume and centroid.
fn geometry_cases(cases: usize) -> (usize, usize) {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1001);
    let mut bad = 0;
    for i in 0..cases {
        let cell = if i % 2 == 0 { random_polygon(&mut r) } else { random_tetra(&mut r) };
        let d = cell.dim();
        let u = unit(&mut r, d);
        let (lo, hi) = cell.support_range(&u);
        let cut = lo + r.random_range(0.02..0.98) * (hi - lo);
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let (a, b) = (cell.clip(&u, cut).unwrap(), cell.clip(&neg, -cut).unwrap());
        let (m, ma, mb) = (cell.moments(3), a.moments(3), b.moments(3));
        let scale = cell.volume() * 125.0;
        let additive = (0..m.values.len()).all(|k| (ma.values[k] + mb.values[k] - m.values[k]).abs() <= 1e-12 * scale);

        let mat: Vec<f64> = loop {
            let m: Vec<f64> = (0..d * d).map(|_| r.random_range(-2.0..2.0)).collect();
            let det = if d == 2 {
                m[0] * m[3] - m[1] * m[2]
            } else {
                m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
            };
            if det.abs() > 0.3 {
                break m;
            }
        };
        let t: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let det = if d == 2 {
            mat[0] * mat[3] - mat[1] * mat[2]
        } else {
            mat[0] * (mat[4] * mat[8] - mat[5] * mat[7]) - mat[1] * (mat[3] * mat[8] - mat[5] * mat[6])
                + mat[2] * (mat[3] * mat[7] - mat[4] * mat[6])
        };
        let img = cell.affine_map(&mat, &t).unwrap();
        let c = cell.centroid();
        let want: Vec<f64> = (0..d).map(|i| t[i] + (0..d).map(|j| mat[i * d + j] * c[j]).sum::<f64>()).collect();
        let got = img.centroid();
        let equivariant = (img.volume() - det.abs() * cell.volume()).abs() <= 1e-11 * img.volume()
            && want.iter().zip(&got).all(|(w, g)| (w - g).abs() <= 1e-10 * (1.0 + w.abs()));
        if !(additive && equivariant) {
            bad += 1;
        }
    }
    (cases - bad, cases)
}

fn c10() -> Outcome {
    // averaging sets on random fair-STIT cells
    let b = TorusBox::new(2, 1.0).unwrap();
    let tiling = fair_stit(b, 10, &SplitDirectionSpec::UniformSphere, 1001).unwrap();
    let results: Vec<Option<f64>> = tiling.cells[..1000]
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            solve_averaging_set(cell, 12, 6, rng::child_seed(1002, "cell", &[i as u64]), &SolverOptions::default())
                .ok()
                .map(|s| s.residual)
        })
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    let worst = results.iter().flatten().cloned().fold(0.0, f64::max);
    let solver_ok = failed == 0 && worst <= 1e-10;

    // circle designs: exact through n - 1, violated at n
    let circle = TrigCurveSpec::circle();
    let mut trig_ok = true;
    for n in 1..=12 {
        let set = trig_design(&circle, &[n], &[0.37]).unwrap();
        let exact = circle.moments(n);
        let below = verify_design(&set.points, &exact, n - 1, 1e-12);
        let at = verify_design(&set.points, &exact, n, 1e-12);
        trig_ok &= below.pass && at.max_mismatch > 1e-6;
    }

    // spherical designs against independently evaluated sphere moments
    let mut sphere_ok = true;
    let names = registry_names();
    for name in &names {
        let rec = design_record(name).unwrap();
        let report = verify_design(&rec.points, &sphere_moments(rec.d, rec.t).unwrap(), rec.t, 1e-12);
        let direct = report
            .entries
            .iter()
            .all(|e| (e.target - sphere_moment(rec.d, &e.alpha).unwrap()).abs() <= 1e-15);
        sphere_ok &= report.pass && direct;
    }

    let (good, cases) = geometry_cases(1000);
    (
        solver_ok && trig_ok && sphere_ok && good == cases,
        format!(
            "solver on 1000 STIT cells: {failed} failures, max residual {worst:.1e} (<= 1e-10); circle designs n=1..12 exact to 1e-12 and violated at order n: {trig_ok}; {} spherical designs pass: {sphere_ok}; geometry cases {good}/{cases}",
            names.len()
        ),
    )
}

fn time_generation(rounds: usize, workers: Option<usize>) -> (f64, Vec<String>) {
    let json = format!(
        r#"{{"constructor": {{"name": "fair-stit", "d": 2, "L": 4, "rounds": {rounds},
            "placement": {{"mode": "avset", "n": 12, "p": 6}}}}, "samples": 2, "seed": 1101, "format": "binary"}}"#
    );
    let mut cfg = RunConfig::from_json(&json).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    cfg.output_dir = tmp.path().to_path_buf();
    let m = hyperscope_cli::run::generate(&cfg, workers).unwrap();
    let digests = m.outputs.iter().map(|o| o.sha256.clone()).collect();
    (m.timings_s["construct"], digests)
}

fn c11() -> Outcome {
    let rounds = [8, 9, 10, 11];
    let times: Vec<f64> = rounds
        .iter()
        .map(|&r| {
            // best of two to damp scheduler noise
            let a = time_generation(r, Some(1)).0;
            let b = time_generation(r, Some(1)).0;
            a.min(b)
        })
        .collect();
    let ratios: Vec<f64> = times.windows(2).map(|w| w[1] / w[0]).collect();
    let linear = ratios.iter().all(|r| (1.7..=2.4).contains(r));
    let (_, one) = time_generation(7, Some(1));
    let (_, three) = time_generation(7, Some(3));
    let same = one == three;
    (
        linear && same,
        format!(
            "times {:?} s for 2 x {{{}}} cells, ratios {:?} (each in [1.7, 2.4]); workers 1 vs 3 identical outputs: {same}",
            times.iter().map(|t| format!("{t:.2}")).collect::<Vec<_>>(),
            rounds.iter().map(|r| (16usize << r).to_string()).collect::<Vec<_>>().join(", "),
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn main() {
    let all: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "poisson sanity", c1),
        (2, "lattice stealth", c2),
        (3, "renewal exponent and constant", c3),
        (4, "renewal product hyperfluctuation", c4),
        (5, "fair-STIT centroid and uniform placement", c5),
        (6, "averaging-set fair-STIT at desk scale", c6),
        (7, "cluster processes", c7),
        (8, "gaussian-field ceiling", c8),
        (9, "phonon lattice", c9),
        (10, "exact-equality suites", c10),
        (11, "performance and worker invariance", c11),
    ];
    let only: Option<Vec<usize>> = std::env::var("HYPERSCOPE_ACCEPT")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut fails = 0;
    for (n, name, f) in all {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = f();
        if !pass {
            fails += 1;
        }
        println!(
            "{} criterion {n} ({name}): {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {fails} criteria failed");
    if fails > 0 && std::env::var("HYPERSCOPE_ACCEPT_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
