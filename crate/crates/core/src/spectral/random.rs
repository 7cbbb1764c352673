//! Seeded random fields with prescribed spectral decay.
//!
//! Each wavenumber draws from its own ChaCha stream keyed by `(seed, k)`, so a
//! given seed produces the same coefficients at a given `k` on every grid
//! that resolves it. This is what lets refinement runs share initial data.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::{Field, ScalarField, TensorField, VectorField};
use super::grid::SpectralGrid;
use super::ops::leray_project;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    /// Divergence-free vector field (Leray-projected).
    Solenoidal,
    SymmetricTensor,
}

#[derive(Clone, Debug)]
pub enum RandomField {
    Scalar(ScalarField),
    Vector(VectorField),
    Tensor(TensorField),
}

impl RandomField {
    pub fn scalar(self) -> ScalarField {
        match self {
            RandomField::Scalar(f) => f,
            other => panic!("expected scalar field, got {other:?}"),
        }
    }

    pub fn vector(self) -> VectorField {
        match self {
            RandomField::Vector(f) => f,
            other => panic!("expected vector field, got {other:?}"),
        }
    }

    pub fn tensor(self) -> TensorField {
        match self {
            RandomField::Tensor(f) => f,
            other => panic!("expected tensor field, got {other:?}"),
        }
    }
}

fn mode_stream(k: [i64; 3]) -> u64 {
    const OFF: i64 = 1 << 20;
    (((k[0] + OFF) as u64) << 42) | (((k[1] + OFF) as u64) << 21) | ((k[2] + OFF) as u64)
}

/// True for the representative of each `{k, -k}` pair (first nonzero entry positive).
fn canonical(k: [i64; 3]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

/// Random field with `|f(xi)| = (1 + |xi|^2)^{-alpha/2}` and uniform random phases.
///
/// Every non-Nyquist mode is populated; the vector kind is Leray-projected
/// with zero mean, the tensor kind is symmetrized.
pub fn random_field(grid: &Arc<SpectralGrid>, alpha: f64, kind: FieldKind, seed: u64) -> RandomField {
    let d = grid.dim();
    let ncomp = match kind {
        FieldKind::Scalar => 1,
        FieldKind::Solenoidal => d,
        FieldKind::SymmetricTensor => d * d,
    };
    let mut comps = vec![vec![Complex64::default(); grid.len()]; ncomp];
    let half = (grid.modes() / 2) as i64;
    for idx in 0..grid.len() {
        let k = grid.wavenumber(idx);
        if k[..d].iter().any(|&c| c == -half) {
            continue;
        }
        let is_zero = k == [0, 0, 0];
        if !is_zero && !canonical(k) {
            continue;
        }
        if is_zero && kind == FieldKind::Solenoidal {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(mode_stream(k));
        let mag = (1.0 + grid.xi_sq(idx)).powf(-alpha / 2.0);
        let mir = grid.mirror(idx);
        for c in comps.iter_mut() {
            let phase: f64 = rng.random::<f64>() * 2.0 * PI;
            let z = if is_zero {
                Complex64::new(mag * phase.cos(), 0.0)
            } else {
                Complex64::from_polar(mag, phase)
            };
            c[idx] = z;
            c[mir] = z.conj();
        }
    }
    match kind {
        FieldKind::Scalar => RandomField::Scalar(ScalarField::from_coeffs(grid, comps.remove(0)).expect("length")),
        FieldKind::Solenoidal => {
            let v = VectorField::from_components(grid, comps).expect("length");
            RandomField::Vector(leray_project(&v))
        }
        FieldKind::SymmetricTensor => {
            let t = TensorField::from_components(grid, comps, false).expect("length");
            RandomField::Tensor(t.symmetric_part())
        }
    }
}

pub fn random_scalar(grid: &Arc<SpectralGrid>, alpha: f64, seed: u64) -> ScalarField {
    random_field(grid, alpha, FieldKind::Scalar, seed).scalar()
}

pub fn random_solenoidal(grid: &Arc<SpectralGrid>, alpha: f64, seed: u64) -> VectorField {
    random_field(grid, alpha, FieldKind::Solenoidal, seed).vector()
}

pub fn random_symmetric_tensor(grid: &Arc<SpectralGrid>, alpha: f64, seed: u64) -> TensorField {
    random_field(grid, alpha, FieldKind::SymmetricTensor, seed).tensor()
}

/// Random field rescaled so that its `H^s` norm equals `target`.
pub fn normalized<F: Field>(f: F, s: f64, target: f64) -> F {
    let n = super::ops::hs_norm(&f, s);
    if n == 0.0 {
        f
    } else {
        f.scaled(target / n)
    }
}
