use std::sync::Arc;

use num_complex::Complex64;

use super::grid::SpectralGrid;
use crate::error::{Error, Result};

/// Shared behaviour of spectral fields: a grid plus one coefficient array per component.
///
/// Coefficients use the mean-preserving normalization: the physical value at
/// `x` is `sum_k c_k exp(i xi_k . x)` and the zero mode equals the field mean.
pub trait Field: Clone + Sized {
    fn grid(&self) -> &Arc<SpectralGrid>;
    fn components(&self) -> &[Vec<Complex64>];
    fn components_mut(&mut self) -> &mut [Vec<Complex64>];

    /// Zero field of the same kind (and flags) on another grid.
    fn zeroed_on(&self, grid: &Arc<SpectralGrid>) -> Self;

    /// Combine structural flags after `self` absorbed a multiple of `other`.
    fn merge_flags(&mut self, _other: &Self) {}

    fn ensure_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid().same_as(other.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn scale(&mut self, alpha: f64) {
        for c in self.components_mut() {
            for z in c.iter_mut() {
                *z *= alpha;
            }
        }
    }

    fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `self += alpha * other`. Panics on grid mismatch.
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        assert!(self.grid().same_as(other.grid()), "grid mismatch in add_scaled");
        for (a, b) in self.components_mut().iter_mut().zip(other.components()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
        self.merge_flags(other);
    }

    fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    fn set_zero(&mut self) {
        for c in self.components_mut() {
            c.iter_mut().for_each(|z| *z = Complex64::default());
        }
    }

    fn is_finite(&self) -> bool {
        self.components()
            .iter()
            .all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Largest deviation from `c(-k) = conj(c(k))` over all modes and components.
    fn hermitian_defect(&self) -> f64 {
        let g = self.grid();
        let mut worst: f64 = 0.0;
        for c in self.components() {
            for (i, z) in c.iter().enumerate() {
                worst = worst.max((*z - c[g.mirror(i)].conj()).norm());
            }
        }
        worst
    }

    /// Replace every coefficient by its Hermitian-symmetric part.
    fn symmetrize_hermitian(&mut self) {
        let g = self.grid().clone();
        for c in self.components_mut() {
            let orig = c.clone();
            for (i, z) in c.iter_mut().enumerate() {
                *z = 0.5 * (orig[i] + orig[g.mirror(i)].conj());
            }
        }
    }

    /// Apply a real Fourier multiplier to every component.
    fn apply_multiplier(&mut self, symbol: impl Fn(usize) -> f64) {
        for c in self.components_mut() {
            for (i, z) in c.iter_mut().enumerate() {
                *z *= symbol(i);
            }
        }
    }
}

macro_rules! impl_field {
    ($ty:ident $(, $extra:item)*) => {
        impl Field for $ty {
            fn grid(&self) -> &Arc<SpectralGrid> {
                &self.grid
            }
            fn components(&self) -> &[Vec<Complex64>] {
                &self.comps
            }
            fn components_mut(&mut self) -> &mut [Vec<Complex64>] {
                &mut self.comps
            }
            fn zeroed_on(&self, grid: &Arc<SpectralGrid>) -> Self {
                let mut out = self.clone();
                out.grid = grid.clone();
                let n = out.comps.len();
                out.comps = vec![vec![Complex64::default(); grid.len()]; n];
                out
            }
            $($extra)*
        }
    };
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<SpectralGrid>,
    comps: Vec<Vec<Complex64>>,
}

/// A `dim`-vector field. Divergence-free is a property checked on demand, not a type.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: Arc<SpectralGrid>,
    comps: Vec<Vec<Complex64>>,
}

/// A `dim x dim` tensor field, components stored row-major.
#[derive(Clone, Debug)]
pub struct TensorField {
    grid: Arc<SpectralGrid>,
    comps: Vec<Vec<Complex64>>,
    symmetric: bool,
}

impl_field!(ScalarField);
impl_field!(VectorField);
impl_field!(TensorField, fn merge_flags(&mut self, other: &Self) {
    self.symmetric &= other.symmetric;
});

fn check_len(grid: &SpectralGrid, comps: &[Vec<Complex64>], expected: usize) -> Result<()> {
    if comps.len() != expected || comps.iter().any(|c| c.len() != grid.len()) {
        return Err(Error::Grid(format!(
            "expected {expected} components of length {}",
            grid.len()
        )));
    }
    Ok(())
}

impl ScalarField {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            comps: vec![vec![Complex64::default(); grid.len()]],
        }
    }

    pub fn from_coeffs(grid: &Arc<SpectralGrid>, coeffs: Vec<Complex64>) -> Result<Self> {
        let comps = vec![coeffs];
        check_len(grid, &comps, 1)?;
        Ok(ScalarField { grid: grid.clone(), comps })
    }

    /// Real field with a single Fourier pair `amp e^{i k x} + conj`.
    pub fn single_mode(grid: &Arc<SpectralGrid>, k: [i64; 3], amp: Complex64) -> Self {
        let mut f = Self::zeros(grid);
        let idx = grid.index_of(k).expect("mode not on grid");
        let mir = grid.mirror(idx);
        f.comps[0][idx] = amp;
        if mir != idx {
            f.comps[0][mir] = amp.conj();
        } else {
            f.comps[0][idx] = Complex64::new(amp.re, 0.0);
        }
        f
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.comps[0]
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.comps[0]
    }
}

impl VectorField {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        VectorField {
            grid: grid.clone(),
            comps: vec![vec![Complex64::default(); grid.len()]; grid.dim()],
        }
    }

    pub fn from_components(grid: &Arc<SpectralGrid>, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        check_len(grid, &comps, grid.dim())?;
        Ok(VectorField { grid: grid.clone(), comps })
    }

    /// Real field `amp e^{i k x} + conj` with a fixed complex polarization.
    pub fn single_mode(grid: &Arc<SpectralGrid>, k: [i64; 3], amp: &[Complex64]) -> Self {
        let mut v = Self::zeros(grid);
        let idx = grid.index_of(k).expect("mode not on grid");
        let mir = grid.mirror(idx);
        for (c, a) in v.comps.iter_mut().zip(amp) {
            c[idx] = *a;
            if mir != idx {
                c[mir] = a.conj();
            } else {
                c[idx] = Complex64::new(a.re, 0.0);
            }
        }
        v
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.comps[i]
    }

    /// Largest `|xi . v(xi)| / |v(xi)|` over modes with nonzero amplitude.
    pub fn divergence_defect(&self) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for idx in 0..g.len() {
            let xi = g.wavevector(idx);
            let mut dot = Complex64::default();
            let mut norm2 = 0.0;
            for (a, c) in self.comps.iter().enumerate() {
                dot += xi[a] * c[idx];
                norm2 += c[idx].norm_sqr();
            }
            if norm2 > 0.0 {
                worst = worst.max(dot.norm() / norm2.sqrt());
            }
        }
        worst
    }

    /// True when every mode satisfies `|xi . v| <= tol * |v|`.
    pub fn is_divergence_free(&self, tol: f64) -> bool {
        self.divergence_defect() <= tol
    }
}

impl TensorField {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        let d = grid.dim();
        TensorField {
            grid: grid.clone(),
            comps: vec![vec![Complex64::default(); grid.len()]; d * d],
            symmetric: true,
        }
    }

    pub fn from_components(
        grid: &Arc<SpectralGrid>,
        comps: Vec<Vec<Complex64>>,
        symmetric: bool,
    ) -> Result<Self> {
        let d = grid.dim();
        check_len(grid, &comps, d * d)?;
        let t = TensorField { grid: grid.clone(), comps, symmetric };
        if symmetric && t.symmetry_defect_abs() != 0.0 {
            return Err(Error::Grid("tensor flagged symmetric but (i,j) != (j,i)".into()));
        }
        Ok(t)
    }

    /// Constant field equal to `scale * I`.
    pub fn identity(grid: &Arc<SpectralGrid>, scale: f64) -> Self {
        let mut t = Self::zeros(grid);
        let d = grid.dim();
        for i in 0..d {
            t.comps[i * d + i][0] = Complex64::new(scale, 0.0);
        }
        t
    }

    pub fn component(&self, i: usize, j: usize) -> &[Complex64] {
        &self.comps[i * self.grid.dim() + j]
    }

    pub fn component_mut(&mut self, i: usize, j: usize) -> &mut [Complex64] {
        let d = self.grid.dim();
        &mut self.comps[i * d + j]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Set or clear the symmetric flag. Setting it requires exact symmetry.
    pub fn set_symmetric(&mut self, flag: bool) -> Result<()> {
        if flag && self.symmetry_defect_abs() != 0.0 {
            return Err(Error::Grid("tensor is not exactly symmetric".into()));
        }
        self.symmetric = flag;
        Ok(())
    }

    /// Overwrite `(j,i)` with `(i,j)` for `i < j` when data is known symmetric up to rounding.
    pub(crate) fn mirror_upper(&mut self) {
        let d = self.grid.dim();
        for i in 0..d {
            for j in i + 1..d {
                self.comps[j * d + i] = self.comps[i * d + j].clone();
            }
        }
        self.symmetric = true;
    }

    pub fn transpose(&self) -> Self {
        let d = self.grid.dim();
        let mut out = self.clone();
        for i in 0..d {
            for j in 0..d {
                out.comps[i * d + j] = self.comps[j * d + i].clone();
            }
        }
        out
    }

    /// `(tau + tau^T) / 2`, flagged symmetric.
    pub fn symmetric_part(&self) -> Self {
        let d = self.grid.dim();
        let mut out = self.clone();
        for i in 0..d {
            for j in 0..d {
                for (idx, z) in out.comps[i * d + j].iter_mut().enumerate() {
                    *z = 0.5 * (self.comps[i * d + j][idx] + self.comps[j * d + i][idx]);
                }
            }
        }
        out.mirror_upper();
        out
    }

    fn symmetry_defect_abs(&self) -> f64 {
        let d = self.grid.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                for (a, b) in self.comps[i * d + j].iter().zip(&self.comps[j * d + i]) {
                    worst = worst.max((a - b).norm());
                }
            }
        }
        worst
    }

    /// `||tau - tau^T||_{L2} / ||tau||_{L2}` (zero for the zero tensor).
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.grid.dim();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            for j in 0..d {
                for (a, b) in self.comps[i * d + j].iter().zip(&self.comps[j * d + i]) {
                    num += (a - b).norm_sqr();
                    den += a.norm_sqr();
                }
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    /// Trace of the tensor as a scalar field.
    pub fn trace(&self) -> ScalarField {
        let d = self.grid.dim();
        let mut out = ScalarField::zeros(&self.grid);
        for i in 0..d {
            for (o, z) in out.coeffs_mut().iter_mut().zip(&self.comps[i * d + i]) {
                *o += z;
            }
        }
        out
    }
}

/// L2 distance between two fields of the same kind living on grids with the same box.
///
/// Modes are matched by integer wavenumber; a mode present on only one grid
/// contributes its full amplitude.
pub fn l2_distance_across<F: Field>(a: &F, b: &F) -> f64 {
    if a.grid().same_as(b.grid()) {
        return super::ops::hs_norm(&a.sub(b), 0.0);
    }
    let (ga, gb) = (a.grid(), b.grid());
    assert_eq!(ga.dim(), gb.dim(), "dimension mismatch");
    assert_eq!(ga.box_length(), gb.box_length(), "box length mismatch");
    let mut sum = 0.0;
    for (ca, cb) in a.components().iter().zip(b.components()) {
        for (idx, za) in ca.iter().enumerate() {
            let zb = gb
                .index_of(ga.wavenumber(idx))
                .map(|j| cb[j])
                .unwrap_or_default();
            sum += (za - zb).norm_sqr();
        }
        for (idx, zb) in cb.iter().enumerate() {
            if ga.index_of(gb.wavenumber(idx)).is_none() {
                sum += zb.norm_sqr();
            }
        }
    }
    sum.sqrt()
}

/// Copy a field onto another grid with the same box, keeping matching wavenumbers.
pub fn transfer<F: Field>(src: &F, grid: &Arc<SpectralGrid>) -> F {
    assert_eq!(src.grid().dim(), grid.dim(), "dimension mismatch");
    let mut out = src.zeroed_on(grid);
    let (gs, gd) = (src.grid().clone(), grid.clone());
    for (cs, cd) in src.components().iter().zip(out.components_mut()) {
        for (idx, z) in cs.iter().enumerate() {
            let k = gs.wavenumber(idx);
            let nyquist = k.iter().any(|&c| c.unsigned_abs() as usize * 2 >= gd.modes());
            if nyquist {
                continue;
            }
            if let Some(j) = gd.index_of(k) {
                cd[j] = *z;
            }
        }
    }
    out
}
