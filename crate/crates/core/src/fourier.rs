//! Multi-dimensional FFTs on cubic grids, built from 1-D passes.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place unnormalized DFT of an `n^d` row-major grid (last axis fastest).
///
/// Forward uses `exp(-2 pi i k.z / n)`; the inverse uses the opposite sign and
/// is not divided by `n^d`.
pub fn fft_nd(data: &mut [Complex64], n: usize, d: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(d as u32), "grid size mismatch");
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                if stride == 1 {
                    fft.process_with_scratch(&mut data[base..base + n], &mut scratch);
                    continue;
                }
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
}

/// Signed frequency of index `k` on an axis of length `n`, in `(-n/2, n/2]`.
pub fn signed_index(k: usize, n: usize) -> i64 {
    if 2 * k > n {
        k as i64 - n as i64
    } else {
        k as i64
    }
}

/// Multi-index of a flat row-major offset.
pub fn unflatten(mut idx: usize, n: usize, d: usize, out: &mut [usize]) {
    for a in (0..d).rev() {
        out[a] = idx % n;
        idx /= n;
    }
}
