use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Default fraction of the resolved band kept by quadratic products (the 2/3 rule).
pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

/// Periodic box `[0, L)^dim` sampled on `M` points per axis.
///
/// Modes are stored in FFT order along every axis, row-major with the last
/// axis contiguous. Integer wavenumbers run over `[-M/2, M/2)`; the physical
/// wavevector is `xi = (2 pi / L) k`.
pub struct SpectralGrid {
    dim: usize,
    modes: usize,
    box_length: f64,
    cutoff: f64,
    dealias_fraction: f64,
    dealias_max: i64,
    len: usize,
    wavenumbers: Vec<[i64; 3]>,
    wavevectors: Vec<[f64; 3]>,
    xi_sq: Vec<f64>,
    dealias_mask: Vec<bool>,
    ball_mask: Vec<bool>,
    mirror: Vec<usize>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dim", &self.dim)
            .field("modes", &self.modes)
            .field("box_length", &self.box_length)
            .field("cutoff", &self.cutoff)
            .field("dealias_fraction", &self.dealias_fraction)
            .finish()
    }
}

/// Largest integer wavenumber strictly below `fraction * M / 2`.
///
/// Strictness keeps quadratic products alias-free even when `M` is a multiple of 3.
fn dealias_max(modes: usize, fraction: f64) -> i64 {
    let bound = fraction * modes as f64 / 2.0;
    let k = bound.ceil() as i64 - 1;
    k.max(0)
}

impl SpectralGrid {
    /// Grid with the default 2/3 dealiasing fraction.
    pub fn new(dim: usize, modes: usize, box_length: f64, cutoff: f64) -> Result<Arc<Self>> {
        Self::with_dealias(dim, modes, box_length, cutoff, DEFAULT_DEALIAS_FRACTION)
    }

    pub fn with_dealias(
        dim: usize,
        modes: usize,
        box_length: f64,
        cutoff: f64,
        dealias_fraction: f64,
    ) -> Result<Arc<Self>> {
        if dim != 2 && dim != 3 {
            return Err(Error::Grid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if modes % 2 != 0 {
            return Err(Error::Grid(format!("modes per axis must be even, got {modes}")));
        }
        if modes < 8 {
            return Err(Error::Grid(format!("modes per axis must be >= 8, got {modes}")));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::Grid(format!("box length must be positive, got {box_length}")));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::Grid(format!(
                "dealias fraction must lie in (0, 1], got {dealias_fraction}"
            )));
        }
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::Grid(format!("truncation radius must be positive, got {cutoff}")));
        }
        let base = 2.0 * std::f64::consts::PI / box_length;
        let limit = dealias_fraction * (modes as f64 / 2.0) * base;
        let kmax = dealias_max(modes, dealias_fraction);
        // Every integer mode inside the ball must also survive dealiasing.
        if cutoff > limit || (cutoff / base).floor() as i64 > kmax {
            return Err(Error::Grid(format!(
                "truncation radius {cutoff} exceeds dealias limit {limit:.2}"
            )));
        }

        let len = modes.pow(dim as u32);
        let half = (modes / 2) as i64;
        let wrap = |i: usize| -> i64 {
            let i = i as i64;
            if i < half {
                i
            } else {
                i - modes as i64
            }
        };
        let mut wavenumbers = Vec::with_capacity(len);
        for flat in 0..len {
            let mut k = [0i64; 3];
            let mut rem = flat;
            for axis in (0..dim).rev() {
                k[axis] = wrap(rem % modes);
                rem /= modes;
            }
            wavenumbers.push(k);
        }
        let wavevectors: Vec<[f64; 3]> = wavenumbers
            .iter()
            .map(|k| [base * k[0] as f64, base * k[1] as f64, base * k[2] as f64])
            .collect();
        let xi_sq: Vec<f64> = wavevectors.iter().map(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).collect();
        let dealias_mask = wavenumbers
            .iter()
            .map(|k| k[..dim].iter().all(|c| c.abs() <= kmax))
            .collect();
        let ball_mask = xi_sq.iter().map(|&q| q.sqrt() <= cutoff).collect();

        let index_of = |k: &[i64; 3]| -> usize {
            let mut flat = 0usize;
            for axis in 0..dim {
                flat = flat * modes + k[axis].rem_euclid(modes as i64) as usize;
            }
            flat
        };
        let mirror = wavenumbers
            .iter()
            .map(|k| index_of(&[-k[0], -k[1], -k[2]]))
            .collect();

        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(modes);
        let ifft = planner.plan_fft_inverse(modes);

        Ok(Arc::new(SpectralGrid {
            dim,
            modes,
            box_length,
            cutoff,
            dealias_fraction,
            dealias_max: kmax,
            len,
            wavenumbers,
            wavevectors,
            xi_sq,
            dealias_mask,
            ball_mask,
            mirror,
            fft,
            ifft,
        }))
    }

    /// Same discretization with a different truncation radius.
    pub fn with_cutoff(&self, cutoff: f64) -> Result<Arc<Self>> {
        Self::with_dealias(self.dim, self.modes, self.box_length, cutoff, self.dealias_fraction)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Truncation radius `n` of the ball `|xi| <= n`.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Largest integer wavenumber per axis retained by dealiased products.
    pub fn dealias_max(&self) -> i64 {
        self.dealias_max
    }

    /// Number of stored modes, `M^dim`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn wavenumber(&self, idx: usize) -> [i64; 3] {
        self.wavenumbers[idx]
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        self.wavevectors[idx]
    }

    pub fn xi_sq(&self, idx: usize) -> f64 {
        self.xi_sq[idx]
    }

    pub fn xi_sq_all(&self) -> &[f64] {
        &self.xi_sq
    }

    /// Flat index of `-k` for the mode at `idx`.
    pub fn mirror(&self, idx: usize) -> usize {
        self.mirror[idx]
    }

    pub fn in_dealias_set(&self, idx: usize) -> bool {
        self.dealias_mask[idx]
    }

    pub fn in_ball(&self, idx: usize) -> bool {
        self.ball_mask[idx]
    }

    /// Flat index of integer wavenumber `k`, if it is representable on this grid.
    pub fn index_of(&self, k: [i64; 3]) -> Option<usize> {
        let half = (self.modes / 2) as i64;
        let mut flat = 0usize;
        for (axis, &c) in k.iter().enumerate() {
            if axis >= self.dim {
                if c != 0 {
                    return None;
                }
                continue;
            }
            if c < -half || c >= half {
                return None;
            }
            flat = flat * self.modes + c.rem_euclid(self.modes as i64) as usize;
        }
        Some(flat)
    }

    /// Bessel weight `(1 + |xi|^2)^s` at every mode.
    pub fn bessel_weights(&self, s: f64) -> Vec<f64> {
        self.xi_sq.iter().map(|&q| (1.0 + q).powf(s)).collect()
    }

    /// Whether two grids describe the same discretization.
    pub fn same_as(&self, other: &SpectralGrid) -> bool {
        std::ptr::eq(self, other)
            || (self.dim == other.dim
                && self.modes == other.modes
                && self.box_length == other.box_length
                && self.cutoff == other.cutoff
                && self.dealias_fraction == other.dealias_fraction)
    }

    /// Coordinates of physical grid point `flat`.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let h = self.box_length / self.modes as f64;
        let mut x = [0.0; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            x[axis] = h * (rem % self.modes) as f64;
            rem /= self.modes;
        }
        x
    }

    /// In-place unnormalized multidimensional FFT.
    pub(crate) fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(buf.len(), self.len);
        let plan = if inverse { &self.ifft } else { &self.fft };
        let m = self.modes;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // Last axis is contiguous: rustfft processes consecutive chunks of length m.
        plan.process_with_scratch(buf, &mut scratch);
        if self.dim == 1 {
            return;
        }
        let mut lines = vec![Complex64::default(); self.len];
        for axis in 0..self.dim - 1 {
            let stride = m.pow((self.dim - 1 - axis) as u32);
            let block = m * stride;
            let outer = self.len / block;
            for o in 0..outer {
                for r in 0..m {
                    let src = o * block + r * stride;
                    for inner in 0..stride {
                        lines[(o * stride + inner) * m + r] = buf[src + inner];
                    }
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for o in 0..outer {
                for r in 0..m {
                    let dst = o * block + r * stride;
                    for inner in 0..stride {
                        buf[dst + inner] = lines[(o * stride + inner) * m + r];
                    }
                }
            }
        }
    }
}

/// Smallest 5-smooth even `M >= 8` whose dealiased band holds the ball of radius `cutoff`.
pub fn modes_for_cutoff(cutoff: f64, box_length: f64, dealias_fraction: f64) -> usize {
    let kmax_needed = (cutoff * box_length / (2.0 * std::f64::consts::PI)).floor() as i64;
    let mut m = 8usize;
    loop {
        let smooth = {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        };
        let limit = dealias_fraction * (m as f64 / 2.0) * 2.0 * std::f64::consts::PI / box_length;
        if smooth && dealias_max(m, dealias_fraction) >= kmax_needed && cutoff <= limit {
            return m;
        }
        m += 2;
    }
}
