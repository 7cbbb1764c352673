use num_complex::Complex64;

use super::field::{Field, ScalarField, TensorField, VectorField};
use super::grid::SpectralGrid;
use super::physical::{from_physical, to_physical, to_physical_full};
use crate::error::Result;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `sum_k (1 + |xi|^2)^s |f_k|^2` over all components.
pub fn hs_norm_sq<F: Field>(f: &F, s: f64) -> f64 {
    let g = f.grid();
    let w = g.bessel_weights(s);
    f.components()
        .iter()
        .map(|c| c.iter().zip(&w).map(|(z, w)| w * z.norm_sqr()).sum::<f64>())
        .sum()
}

/// Sobolev norm `||J^s f||_{L2}`; for `s = 0` this is the root-mean-square of the physical field.
pub fn hs_norm<F: Field>(f: &F, s: f64) -> f64 {
    hs_norm_sq(f, s).sqrt()
}

/// `(J^s f, J^s g)_{L2}`.
pub fn hs_inner<F: Field>(f: &F, g: &F, s: f64) -> Result<f64> {
    f.ensure_same_grid(g)?;
    let w = f.grid().bessel_weights(s);
    let mut acc = 0.0;
    for (a, b) in f.components().iter().zip(g.components()) {
        for ((x, y), w) in a.iter().zip(b).zip(&w) {
            acc += w * (x * y.conj()).re;
        }
    }
    Ok(acc)
}

/// Bessel potential `J^s`: multiply by `(1 + |xi|^2)^{s/2}`.
pub fn bessel<F: Field>(f: &F, s: f64) -> F {
    let w = f.grid().bessel_weights(s / 2.0);
    let mut out = f.clone();
    out.apply_multiplier(|i| w[i]);
    out
}

/// Fourier truncation to the closed ball `|xi| <= n`.
pub fn truncate<F: Field>(f: &F, n: f64) -> F {
    let g = f.grid().clone();
    let mut out = f.clone();
    for c in out.components_mut() {
        for (idx, z) in c.iter_mut().enumerate() {
            if g.xi_sq(idx).sqrt() > n {
                *z = Complex64::default();
            }
        }
    }
    out
}

/// Truncation to the grid's own cutoff radius.
pub fn truncate_to_grid<F: Field>(f: &F) -> F {
    let g = f.grid().clone();
    let mut out = f.clone();
    for c in out.components_mut() {
        for (idx, z) in c.iter_mut().enumerate() {
            if !g.in_ball(idx) {
                *z = Complex64::default();
            }
        }
    }
    out
}

/// Whether every coefficient outside `|xi| <= n` is exactly zero.
pub fn supported_in_ball<F: Field>(f: &F, n: f64) -> bool {
    let g = f.grid();
    f.components()
        .iter()
        .all(|c| c.iter().enumerate().all(|(idx, z)| g.xi_sq(idx).sqrt() <= n || *z == Complex64::default()))
}

/// Zero modes outside the dealiased band.
pub fn dealias<F: Field>(f: &F) -> F {
    let g = f.grid().clone();
    let mut out = f.clone();
    for c in out.components_mut() {
        for (idx, z) in c.iter_mut().enumerate() {
            if !g.in_dealias_set(idx) {
                *z = Complex64::default();
            }
        }
    }
    out
}

fn derivative(grid: &SpectralGrid, c: &[Complex64], axis: usize) -> Vec<Complex64> {
    c.iter()
        .enumerate()
        .map(|(idx, z)| I * grid.wavevector(idx)[axis] * z)
        .collect()
}

pub fn gradient_scalar(f: &ScalarField) -> VectorField {
    let g = f.grid().clone();
    let comps = (0..g.dim()).map(|a| derivative(&g, f.coeffs(), a)).collect();
    VectorField::from_components(&g, comps).expect("component count")
}

/// Velocity gradient with `(grad v)_{ij} = d_j v_i`.
pub fn gradient_vector(v: &VectorField) -> TensorField {
    let g = v.grid().clone();
    let d = g.dim();
    let mut comps = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            comps.push(derivative(&g, v.component(i), j));
        }
    }
    TensorField::from_components(&g, comps, false).expect("component count")
}

pub fn divergence_vector(v: &VectorField) -> ScalarField {
    let g = v.grid().clone();
    let mut out = ScalarField::zeros(&g);
    for a in 0..g.dim() {
        for (idx, (o, z)) in out.coeffs_mut().iter_mut().zip(v.component(a)).enumerate() {
            *o += I * g.wavevector(idx)[a] * z;
        }
    }
    out
}

/// Row-wise divergence `(div tau)_i = sum_j d_j tau_{ij}`.
pub fn divergence_tensor(t: &TensorField) -> VectorField {
    let g = t.grid().clone();
    let d = g.dim();
    let mut out = VectorField::zeros(&g);
    for i in 0..d {
        for j in 0..d {
            let src = t.component(i, j);
            for (idx, (o, z)) in out.component_mut(i).iter_mut().zip(src).enumerate() {
                *o += I * g.wavevector(idx)[j] * z;
            }
        }
    }
    out
}

pub fn laplacian<F: Field>(f: &F) -> F {
    let g = f.grid().clone();
    let mut out = f.clone();
    out.apply_multiplier(|i| -g.xi_sq(i));
    out
}

/// Projection onto divergence-free fields, `(I - xi xi^T / |xi|^2) v` per mode.
///
/// The mean mode is left unchanged.
pub fn leray_project(v: &VectorField) -> VectorField {
    let g = v.grid().clone();
    let d = g.dim();
    let mut out = v.clone();
    for idx in 0..g.len() {
        let q = g.xi_sq(idx);
        if q == 0.0 {
            continue;
        }
        let xi = g.wavevector(idx);
        let mut dot = Complex64::default();
        for a in 0..d {
            dot += xi[a] * v.component(a)[idx];
        }
        let dot = dot / q;
        for a in 0..d {
            out.component_mut(a)[idx] -= xi[a] * dot;
        }
    }
    out
}

/// Dealiased pointwise product of two scalar fields.
pub fn dealiased_product(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    f.ensure_same_grid(g)?;
    let grid = f.grid().clone();
    let phys = to_physical(&grid, &[f.coeffs(), g.coeffs()]);
    let prod: Vec<f64> = phys[0].iter().zip(&phys[1]).map(|(a, b)| a * b).collect();
    let mut out = from_physical(&grid, &[prod]);
    ScalarField::from_coeffs(&grid, out.remove(0))
}

/// Scalar times vector, dealiased.
pub fn scalar_times_vector(f: &ScalarField, v: &VectorField) -> VectorField {
    let grid = f.grid().clone();
    assert!(grid.same_as(v.grid()), "grid mismatch");
    let mut refs: Vec<&[Complex64]> = vec![f.coeffs()];
    refs.extend(v.components().iter().map(|c| c.as_slice()));
    let phys = to_physical(&grid, &refs);
    let prods: Vec<Vec<f64>> = phys[1..]
        .iter()
        .map(|c| c.iter().zip(&phys[0]).map(|(a, b)| a * b).collect())
        .collect();
    VectorField::from_components(&grid, from_physical(&grid, &prods)).expect("component count")
}

/// Pointwise matrix product `(A B)_{ij} = sum_k A_ik B_kj` of physical tensor samples.
pub(crate) fn matmul_physical(d: usize, a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a[0].len();
    let mut out = vec![vec![0.0; n]; d * d];
    for i in 0..d {
        for j in 0..d {
            let o = &mut out[i * d + j];
            for k in 0..d {
                for ((o, x), y) in o.iter_mut().zip(&a[i * d + k]).zip(&b[k * d + j]) {
                    *o += x * y;
                }
            }
        }
    }
    out
}

/// Dealiased pointwise matrix product of two tensor fields. The result is not flagged symmetric.
pub fn tensor_product(a: &TensorField, b: &TensorField) -> TensorField {
    let grid = a.grid().clone();
    assert!(grid.same_as(b.grid()), "grid mismatch");
    let pa = physical_components(a);
    let pb = physical_components(b);
    let prod = matmul_physical(grid.dim(), &pa, &pb);
    TensorField::from_components(&grid, from_physical(&grid, &prod), false).expect("component count")
}

/// Dealiased physical samples of every component.
pub fn physical_components<F: Field>(f: &F) -> Vec<Vec<f64>> {
    let refs: Vec<&[Complex64]> = f.components().iter().map(|c| c.as_slice()).collect();
    to_physical(f.grid(), &refs)
}

/// Physical samples of every component, all modes kept.
pub fn physical_components_full<F: Field>(f: &F) -> Vec<Vec<f64>> {
    let refs: Vec<&[Complex64]> = f.components().iter().map(|c| c.as_slice()).collect();
    to_physical_full(f.grid(), &refs)
}

/// Sup over grid points of the pointwise Euclidean (Frobenius) norm.
pub fn linf_norm<F: Field>(f: &F) -> f64 {
    let phys = physical_components_full(f);
    let n = phys[0].len();
    (0..n)
        .map(|p| phys.iter().map(|c| c[p] * c[p]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Advection `(v . grad) u` per component, dealiased. No truncation applied.
pub fn advection_vector(v: &VectorField, u: &VectorField) -> VectorField {
    let grid = v.grid().clone();
    let d = grid.dim();
    let pv = physical_components(v);
    let grad = gradient_vector(u);
    let pg = physical_components(&grad);
    let n = grid.len();
    let mut out = vec![vec![0.0; n]; d];
    for i in 0..d {
        for j in 0..d {
            let (a, b) = (&pv[j], &pg[i * d + j]);
            for p in 0..n {
                out[i][p] += a[p] * b[p];
            }
        }
    }
    VectorField::from_components(&grid, from_physical(&grid, &out)).expect("component count")
}

/// Advection `(v . grad) tau` per tensor component, dealiased. No truncation applied.
pub fn advection_tensor(v: &VectorField, t: &TensorField) -> TensorField {
    let grid = v.grid().clone();
    let d = grid.dim();
    let pv = physical_components(v);
    let n = grid.len();
    let mut out = Vec::with_capacity(d * d);
    for comp in t.components() {
        let derivs: Vec<Vec<Complex64>> = (0..d).map(|j| derivative(&grid, comp, j)).collect();
        let refs: Vec<&[Complex64]> = derivs.iter().map(|c| c.as_slice()).collect();
        let pd = to_physical(&grid, &refs);
        let mut acc = vec![0.0; n];
        for j in 0..d {
            for p in 0..n {
                acc[p] += pv[j][p] * pd[j][p];
            }
        }
        out.push(acc);
    }
    let mut res = TensorField::from_components(&grid, from_physical(&grid, &out), false).expect("component count");
    if t.is_symmetric() {
        res.mirror_upper();
    }
    res
}

/// Divergence of the outer product, `div(v (x) u)_i = sum_j d_j (v_j u_i)`, dealiased.
pub fn divergence_of_outer(v: &VectorField, u: &VectorField) -> VectorField {
    let grid = v.grid().clone();
    let d = grid.dim();
    let pv = physical_components(v);
    let pu = physical_components(u);
    let n = grid.len();
    // outer[i*d + j] = u_i v_j
    let mut outer = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            outer.push((0..n).map(|p| pu[i][p] * pv[j][p]).collect::<Vec<f64>>());
        }
    }
    let t = TensorField::from_components(&grid, from_physical(&grid, &outer), false).expect("component count");
    divergence_tensor(&t)
}
