//! Transforms between spectral coefficients and real samples on the physical grid.
//!
//! Real components are transformed two at a time by packing them into the
//! real and imaginary parts of one complex FFT.

use num_complex::Complex64;

use super::grid::SpectralGrid;

fn inverse_pair(grid: &SpectralGrid, a: &[Complex64], b: Option<&[Complex64]>, mask: bool) -> (Vec<f64>, Vec<f64>) {
    let i = Complex64::new(0.0, 1.0);
    let mut buf: Vec<Complex64> = (0..grid.len())
        .map(|idx| {
            if mask && !grid.in_dealias_set(idx) {
                return Complex64::default();
            }
            match b {
                Some(b) => a[idx] + i * b[idx],
                None => a[idx],
            }
        })
        .collect();
    grid.transform(&mut buf, true);
    let re = buf.iter().map(|z| z.re).collect();
    let im = if b.is_some() { buf.iter().map(|z| z.im).collect() } else { Vec::new() };
    (re, im)
}

fn forward_pair(grid: &SpectralGrid, a: &[f64], b: Option<&[f64]>, mask: bool) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = grid.len();
    let scale = 1.0 / n as f64;
    let mut buf: Vec<Complex64> = match b {
        Some(b) => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
        None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
    };
    grid.transform(&mut buf, false);
    let mut out_a = vec![Complex64::default(); n];
    let mut out_b = if b.is_some() { vec![Complex64::default(); n] } else { Vec::new() };
    let half_i = Complex64::new(0.0, -0.5);
    for idx in 0..n {
        if mask && !grid.in_dealias_set(idx) {
            continue;
        }
        let z = buf[idx] * scale;
        let zm = buf[grid.mirror(idx)].conj() * scale;
        out_a[idx] = 0.5 * (z + zm);
        if b.is_some() {
            out_b[idx] = half_i * (z - zm);
        }
    }
    (out_a, out_b)
}

fn many_inverse(grid: &SpectralGrid, comps: &[&[Complex64]], mask: bool) -> Vec<Vec<f64>> {
    // Exactly-zero components are not packed with live ones, so they stay exactly zero
    // instead of picking up the partner's rounding in the imaginary part.
    let live: Vec<usize> = (0..comps.len())
        .filter(|&c| comps[c].iter().any(|z| *z != Complex64::default()))
        .collect();
    let mut out = vec![Vec::new(); comps.len()];
    for chunk in live.chunks(2) {
        let (a, b) = inverse_pair(grid, comps[chunk[0]], chunk.get(1).map(|&c| comps[c]), mask);
        out[chunk[0]] = a;
        if let Some(&c) = chunk.get(1) {
            out[c] = b;
        }
    }
    for o in out.iter_mut().filter(|o| o.is_empty()) {
        *o = vec![0.0; grid.len()];
    }
    out
}

/// Physical samples of each component after zeroing modes outside the dealiased band.
///
/// Products of such samples are exact on the band once transformed back.
pub fn to_physical(grid: &SpectralGrid, comps: &[&[Complex64]]) -> Vec<Vec<f64>> {
    many_inverse(grid, comps, true)
}

/// Physical samples of each component, all modes kept.
pub fn to_physical_full(grid: &SpectralGrid, comps: &[&[Complex64]]) -> Vec<Vec<f64>> {
    many_inverse(grid, comps, false)
}

/// Spectral coefficients of real samples, restricted to the dealiased band.
///
/// The output is exactly Hermitian-symmetric.
pub fn from_physical(grid: &SpectralGrid, values: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
    from_physical_impl(grid, values, true)
}

/// Spectral coefficients of real samples, all modes kept.
pub fn from_physical_full(grid: &SpectralGrid, values: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
    from_physical_impl(grid, values, false)
}

fn from_physical_impl(grid: &SpectralGrid, values: &[Vec<f64>], mask: bool) -> Vec<Vec<Complex64>> {
    let live: Vec<usize> = (0..values.len())
        .filter(|&c| values[c].iter().any(|x| *x != 0.0))
        .collect();
    let mut out = vec![Vec::new(); values.len()];
    for chunk in live.chunks(2) {
        let (a, b) = forward_pair(grid, &values[chunk[0]], chunk.get(1).map(|&c| values[c].as_slice()), mask);
        out[chunk[0]] = a;
        if let Some(&c) = chunk.get(1) {
            out[c] = b;
        }
    }
    for o in out.iter_mut().filter(|o| o.is_empty()) {
        *o = vec![Complex64::default(); grid.len()];
    }
    out
}
