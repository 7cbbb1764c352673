//! Deterministic drift of the Fourier-truncated velocity/stress system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::spectral::ops::{advection_tensor, advection_vector, physical_components};
use crate::spectral::physical::{from_physical, to_physical};
use crate::spectral::{
    divergence_tensor, gradient_vector, laplacian, leray_project, truncate_to_grid, Field, TensorField, VectorField,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    pub nu: f64,
    pub a: f64,
    pub b: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Switches off `(v.grad)v`, `(v.grad)tau` and `Q` (Stokes-type runs).
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

fn yes() -> bool {
    true
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams { nu: 0.05, a: 1.0, b: 0.0, mu1: 1.0, mu2: 1.0, nonlinear: true }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("params.nu", self.nu), ("params.a", self.a), ("params.mu1", self.mu1), ("params.mu2", self.mu2)];
        for (name, x) in nonneg {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {x}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.b) {
            return Err(Error::param("params.b", format!("must lie in [-1, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub v: VectorField,
    pub tau: TensorField,
}

impl FlowState {
    pub fn new(v: VectorField, tau: TensorField) -> Result<Self> {
        if !v.grid().same_as(tau.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(FlowState { t: 0.0, v, tau })
    }

    pub fn zero(grid: &std::sync::Arc<crate::spectral::SpectralGrid>) -> Self {
        FlowState { t: 0.0, v: VectorField::zeros(grid), tau: TensorField::zeros(grid) }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.v.is_finite() && self.tau.is_finite()
    }
}

/// `D(v) = (grad v + grad v^T) / 2`, exactly symmetric.
pub fn deformation(v: &VectorField) -> TensorField {
    gradient_vector(v).symmetric_part()
}

/// `W(v) = (grad v - grad v^T) / 2`.
pub fn vorticity(v: &VectorField) -> TensorField {
    let g = gradient_vector(v);
    let mut w = g.sub(&g.transpose());
    w.scale(0.5);
    w
}

fn q_physical(d: usize, tau: &[Vec<f64>], grad: &[Vec<f64>], b: f64) -> Vec<Vec<f64>> {
    let n = tau[0].len();
    let mut out = vec![vec![0.0; n]; d * d];
    let (mut t, mut dd, mut ww) = ([[0.0; 3]; 3], [[0.0; 3]; 3], [[0.0; 3]; 3]);
    for p in 0..n {
        for i in 0..d {
            for j in 0..d {
                let (gij, gji) = (grad[i * d + j][p], grad[j * d + i][p]);
                t[i][j] = tau[i * d + j][p];
                dd[i][j] = 0.5 * (gij + gji);
                ww[i][j] = 0.5 * (gij - gji);
            }
        }
        for i in 0..d {
            for j in 0..d {
                let mut q = 0.0;
                for k in 0..d {
                    q += t[i][k] * ww[k][j] - ww[i][k] * t[k][j] - b * (dd[i][k] * t[k][j] + t[i][k] * dd[k][j]);
                }
                out[i * d + j][p] = q;
            }
        }
    }
    out
}

/// `Q(tau, grad v) = tau W - W tau - b (D tau + tau D)`, dealiased, not truncated.
pub fn q_form(tau: &TensorField, v: &VectorField, b: f64) -> TensorField {
    let grid = tau.grid().clone();
    let pt = physical_components(tau);
    let pg = physical_components(&gradient_vector(v));
    let q = q_physical(grid.dim(), &pt, &pg, b);
    let mut out = TensorField::from_components(&grid, from_physical(&grid, &q), false).expect("component count");
    if tau.is_symmetric() {
        out.mirror_upper();
    }
    out
}

/// `J_n (v.grad) u`.
pub fn advect_vector(v: &VectorField, u: &VectorField) -> VectorField {
    truncate_to_grid(&advection_vector(v, u))
}

/// `J_n (v.grad) tau`.
pub fn advect_tensor(v: &VectorField, tau: &TensorField) -> TensorField {
    truncate_to_grid(&advection_tensor(v, tau))
}

/// Velocity drift split for the semi-implicit solve. Both parts are divergence-free.
#[derive(Clone, Debug)]
pub struct VelocityDrift {
    /// `nu Lap v`.
    pub viscous: VectorField,
    /// `P[-J_n (v.grad)v + mu1 div tau]`.
    pub explicit: VectorField,
}

pub fn velocity_drift(state: &FlowState, params: &PhysicalParams) -> VelocityDrift {
    let mut explicit = divergence_tensor(&state.tau).scaled(params.mu1);
    if params.nonlinear {
        explicit.add_scaled(-1.0, &advect_vector(&state.v, &state.v));
    }
    VelocityDrift {
        viscous: laplacian(&state.v).scaled(params.nu),
        explicit: leray_project(&truncate_to_grid(&explicit)),
    }
}

/// `-J_n(v.grad)tau - a tau - J_n Q + mu2 D(v) + J_n S^2(tau) / 2`, evaluated term by term.
pub fn stress_drift(state: &FlowState, params: &PhysicalParams, noise: &NoiseModel) -> TensorField {
    let mut out = deformation(&state.v).scaled(params.mu2);
    out.add_scaled(-params.a, &state.tau);
    if params.nonlinear {
        out.add_scaled(-1.0, &advect_tensor(&state.v, &state.tau));
        out.add_scaled(-1.0, &truncate_to_grid(&q_form(&state.tau, &state.v, params.b)));
    }
    out.add_scaled(1.0, &truncate_to_grid(&noise.ito_correction(&state.tau)));
    out
}

/// Both drifts at once. Shares the physical-space samples of `v`, `grad v` and
/// `tau` between the advection terms and `Q`.
pub fn evaluate_drifts(state: &FlowState, params: &PhysicalParams, noise: &NoiseModel) -> (VelocityDrift, TensorField) {
    if !params.nonlinear {
        return (velocity_drift(state, params), stress_drift(state, params, noise));
    }
    let grid = state.v.grid().clone();
    let d = grid.dim();
    let n = grid.len();
    let grad = gradient_vector(&state.v);
    let pv = physical_components(&state.v);
    let pg = physical_components(&grad);
    let pt = physical_components(&state.tau);

    let mut adv_v = vec![vec![0.0; n]; d];
    for i in 0..d {
        for j in 0..d {
            for ((o, a), b) in adv_v[i].iter_mut().zip(&pv[j]).zip(&pg[i * d + j]) {
                *o += a * b;
            }
        }
    }

    // (v.grad) tau + Q, component by component; only the upper triangle when symmetric.
    let sym = state.tau.is_symmetric();
    let mut nl = q_physical(d, &pt, &pg, params.b);
    let wanted: Vec<usize> = (0..d * d).filter(|c| !sym || c / d <= c % d).collect();
    let mut derivs: Vec<Vec<num_complex::Complex64>> = Vec::with_capacity(wanted.len() * d);
    for &c in &wanted {
        let comp = &state.tau.components()[c];
        for j in 0..d {
            derivs.push(
                comp.iter()
                    .enumerate()
                    .map(|(idx, z)| num_complex::Complex64::new(0.0, grid.wavevector(idx)[j]) * z)
                    .collect(),
            );
        }
    }
    let refs: Vec<&[num_complex::Complex64]> = derivs.iter().map(|c| c.as_slice()).collect();
    let pd = to_physical(&grid, &refs);
    for (w, &c) in wanted.iter().enumerate() {
        for j in 0..d {
            for ((o, a), b) in nl[c].iter_mut().zip(&pv[j]).zip(&pd[w * d + j]) {
                *o += a * b;
            }
        }
    }

    let mut to_forward: Vec<Vec<f64>> = adv_v;
    to_forward.extend(wanted.iter().map(|&c| std::mem::take(&mut nl[c])));
    let spec = from_physical(&grid, &to_forward);
    let adv_v = VectorField::from_components(&grid, spec[..d].to_vec()).expect("component count");
    let mut nl_comps = vec![vec![num_complex::Complex64::default(); n]; d * d];
    for (w, &c) in wanted.iter().enumerate() {
        nl_comps[c] = spec[d + w].clone();
    }
    let mut nl_t = TensorField::from_components(&grid, nl_comps, false).expect("component count");
    if sym {
        nl_t.mirror_upper();
    }

    let mut explicit = divergence_tensor(&state.tau).scaled(params.mu1);
    explicit.add_scaled(-1.0, &truncate_to_grid(&adv_v));
    let vel = VelocityDrift {
        viscous: laplacian(&state.v).scaled(params.nu),
        explicit: leray_project(&truncate_to_grid(&explicit)),
    };

    let mut sd = grad.symmetric_part().scaled(params.mu2);
    sd.add_scaled(-params.a, &state.tau);
    sd.add_scaled(-1.0, &truncate_to_grid(&nl_t));
    sd.add_scaled(1.0, &truncate_to_grid(&noise.ito_correction(&state.tau)));
    (vel, sd)
}

/// `(div tau, v)_{L2} + (D(v), tau)_{L2}`; zero for divergence-free `v` and symmetric `tau`.
pub fn coupling_residual(v: &VectorField, tau: &TensorField) -> f64 {
    let a = crate::spectral::hs_inner(&divergence_tensor(tau), v, 0.0).expect("same grid");
    let b = crate::spectral::hs_inner(&deformation(v), tau, 0.0).expect("same grid");
    a + b
}
