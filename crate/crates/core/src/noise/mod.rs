//! Concrete noise channels: Q-Wiener velocity noise, scalar Stratonovich
//! stress noise and compensated Poisson jumps in the velocity equation.

mod path;

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectral::ops::{matmul_physical, physical_components, scalar_times_vector};
use crate::spectral::physical::from_physical;
use crate::spectral::{leray_project, linf_norm, truncate_to_grid, Field, ScalarField, SpectralGrid, TensorField, VectorField};

pub use path::{NoisePath, NOISE_PATH_VERSION};

/// Eigen-expansion of the velocity Wiener process, `W1 = sum_j sqrt(lambda_j) beta_j e_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerQConfig {
    /// Scale of the default spectrum `lambda_j = lambda0 / j^2`.
    pub lambda0: f64,
    /// Number of retained basis elements `J`.
    pub basis_count: usize,
}

impl WienerQConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0.is_finite() && self.lambda0 > 0.0) {
            return Err(Error::param("noise.lambda0", "must be positive"));
        }
        if self.basis_count == 0 {
            return Err(Error::param("noise.basis_count", "must be at least 1"));
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.basis_count).map(|j| self.lambda0 / (j * j) as f64).collect()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues().iter().sum()
    }

    /// Bound on the discarded tail `sum_{j > J} lambda0 / j^2 <= lambda0 / J`.
    pub fn tail_bound(&self) -> f64 {
        self.lambda0 / self.basis_count as f64
    }
}

/// Amplitudes of the affine diffusion `sigma(v) e_j = c0 psi_j + c1 phi_j v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaInstance {
    pub c0: f64,
    pub c1: f64,
}

/// The stress noise coefficient `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StressNoiseConfig {
    /// `h = c I`; preserves symmetry of the stress exactly.
    Identity { scale: f64 },
    /// `h(x) = scale * exp(-|x - center|^2 / (2 width^2)) * matrix`, periodized.
    Bump {
        scale: f64,
        width: f64,
        matrix: Vec<f64>,
    },
}

impl StressNoiseConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            StressNoiseConfig::Identity { scale } if !scale.is_finite() => {
                Err(Error::param("noise.h_scale", "must be finite"))
            }
            StressNoiseConfig::Bump { scale, width, matrix } => {
                if !scale.is_finite() {
                    return Err(Error::param("noise.h_scale", "must be finite"));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::param("noise.h_width", "must be positive"));
                }
                if matrix.len() != dim * dim || matrix.iter().any(|x| !x.is_finite()) {
                    return Err(Error::param("noise.h_matrix", format!("needs {} finite entries", dim * dim)));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Mark dependence of the jump coefficient `G(v, z) = gamma(z) (kappa * v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkCoefficient {
    /// `gamma(z) = gamma0`.
    Constant,
    /// `gamma(z) = gamma0 * z`.
    Linear,
}

/// Finite-activity jump channel with uniform mark density on `[z_min, z_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpConfig {
    /// Total intensity `Lambda = lambda(Z)`.
    pub rate: f64,
    pub gamma0: f64,
    pub gamma_kind: MarkCoefficient,
    pub z_min: f64,
    pub z_max: f64,
    /// Order of the smoothing multiplier `(1 + |xi|^2)^{-order/2}`.
    pub kappa_order: f64,
}

impl JumpConfig {
    pub fn none() -> Self {
        JumpConfig {
            rate: 0.0,
            gamma0: 0.0,
            gamma_kind: MarkCoefficient::Constant,
            z_min: 0.0,
            z_max: 1.0,
            kappa_order: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(Error::param("noise.jump_rate", "must be finite and >= 0"));
        }
        if !self.gamma0.is_finite() {
            return Err(Error::param("noise.gamma0", "must be finite"));
        }
        if !(self.z_min.is_finite() && self.z_max.is_finite() && self.z_min < self.z_max) {
            return Err(Error::param("noise.z_min", "mark interval needs z_min < z_max"));
        }
        if !(self.kappa_order.is_finite() && self.kappa_order >= 0.0) {
            return Err(Error::param("noise.kappa_order", "must be >= 0"));
        }
        Ok(())
    }

    pub fn gamma(&self, z: f64) -> f64 {
        match self.gamma_kind {
            MarkCoefficient::Constant => self.gamma0,
            MarkCoefficient::Linear => self.gamma0 * z,
        }
    }

    /// `int gamma d lambda` in closed form.
    pub fn gamma_bar(&self) -> f64 {
        let (a, b) = (self.z_min, self.z_max);
        self.rate
            * match self.gamma_kind {
                MarkCoefficient::Constant => self.gamma0,
                MarkCoefficient::Linear => self.gamma0 * 0.5 * (a + b),
            }
    }

    /// `int gamma^2 d lambda` in closed form.
    pub fn gamma_sq_integral(&self) -> f64 {
        let (a, b) = (self.z_min, self.z_max);
        self.rate
            * match self.gamma_kind {
                MarkCoefficient::Constant => self.gamma0 * self.gamma0,
                MarkCoefficient::Linear => self.gamma0 * self.gamma0 * (a * a + a * b + b * b) / 3.0,
            }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub wiener: WienerQConfig,
    pub sigma: SigmaInstance,
    pub stress: StressNoiseConfig,
    pub jumps: JumpConfig,
}

impl NoiseConfig {
    /// Every channel switched off.
    pub fn silent() -> Self {
        NoiseConfig {
            wiener: WienerQConfig { lambda0: 1.0, basis_count: 1 },
            sigma: SigmaInstance { c0: 0.0, c1: 0.0 },
            stress: StressNoiseConfig::Identity { scale: 0.0 },
            jumps: JumpConfig::none(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.wiener.validate()?;
        if !(self.sigma.c0.is_finite() && self.sigma.c1.is_finite()) {
            return Err(Error::param("noise.c0", "sigma amplitudes must be finite"));
        }
        self.stress.validate(dim)?;
        self.jumps.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Cos,
    Sin,
}

/// One real basis element `sqrt(2) p cos(k.x)` or `sqrt(2) p sin(k.x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMode {
    pub k: [i64; 3],
    pub polarization: [f64; 3],
    phase: Phase,
}

impl BasisMode {
    pub fn is_cosine(&self) -> bool {
        self.phase == Phase::Cos
    }
}

fn canonical(k: [i64; 3]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn polarizations(dim: usize, k: [i64; 3]) -> Vec<[f64; 3]> {
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    if dim == 2 {
        return vec![normalize([-kf[1], kf[0], 0.0])];
    }
    let khat = normalize(kf);
    let axis = (0..3)
        .min_by(|&a, &b| khat[a].abs().total_cmp(&khat[b].abs()))
        .unwrap();
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let p1 = normalize(cross(khat, e));
    let p2 = cross(khat, p1);
    vec![p1, p2]
}

/// First `count` basis elements ordered by `|k|`, then wavenumber, polarization, phase.
pub fn noise_basis(dim: usize, count: usize) -> Vec<BasisMode> {
    let mut out = Vec::with_capacity(count);
    let mut radius = 1i64;
    while out.len() < count {
        let mut shell: Vec<[i64; 3]> = Vec::new();
        let r = radius;
        let zr = if dim == 3 { r } else { 0 };
        for a in -r..=r {
            for b in -r..=r {
                for c in -zr..=zr {
                    let k = [a, b, c];
                    let q = a * a + b * b + c * c;
                    if q > (r - 1) * (r - 1) && q <= r * r && canonical(k) {
                        shell.push(k);
                    }
                }
            }
        }
        shell.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1] + k[2] * k[2], *k));
        for k in shell {
            for p in polarizations(dim, k) {
                for phase in [Phase::Cos, Phase::Sin] {
                    if out.len() < count {
                        out.push(BasisMode { k, polarization: p, phase });
                    }
                }
            }
        }
        radius += 1;
    }
    out
}

/// Stable fingerprint of the noise basis and spectrum, used to reject mismatched replays.
pub fn basis_fingerprint(dim: usize, wiener: &WienerQConfig) -> u64 {
    let mut h = Sha256::new();
    h.update((dim as u64).to_le_bytes());
    h.update((wiener.basis_count as u64).to_le_bytes());
    for l in wiener.eigenvalues() {
        h.update(l.to_bits().to_le_bytes());
    }
    for m in noise_basis(dim, wiener.basis_count) {
        for c in m.k {
            h.update(c.to_le_bytes());
        }
        for p in m.polarization {
            h.update(p.to_bits().to_le_bytes());
        }
        h.update([m.is_cosine() as u8]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// One compound-Poisson jump: absolute time and mark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpEvent {
    pub t: f64,
    pub z: f64,
}

/// Noise consumed by one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    /// Standard Brownian increments per basis element, each `N(0, dt)`.
    pub dw1: Vec<f64>,
    pub dw2: f64,
    /// Jumps in `(t, t + dt]`, in time order.
    pub jumps: Vec<JumpEvent>,
}

impl StepNoise {
    pub fn zero(basis_count: usize) -> Self {
        StepNoise { dw1: vec![0.0; basis_count], dw2: 0.0, jumps: Vec::new() }
    }
}

/// Serializable position of a ChaCha stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

/// Auxiliary 64-bit seed for `stream` of `master_seed` (initial data, perturbations).
///
/// Uses the top half of the stream space so it never collides with run samplers.
pub fn derive_seed(master_seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((1 << 63) | stream);
    rng.next_u64()
}

/// Owns the RNG for one simulation. Not shareable.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    /// Sampler for run `run_index` of an ensemble keyed by `master_seed`.
    ///
    /// Runs use disjoint ChaCha streams of the same key, so any subset of runs
    /// can be reproduced independently and in any order.
    pub fn for_run(master_seed: u64, run_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(run_index);
        NoiseSampler { rng }
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.rng.get_seed(),
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn from_state(state: &RngState) -> Self {
        let mut rng = ChaCha8Rng::from_seed(state.seed);
        rng.set_stream(state.stream);
        rng.set_word_pos(state.word_pos);
        NoiseSampler { rng }
    }

    /// `J` independent `N(0, dt)` increments.
    pub fn sample_w1_increment(&mut self, basis_count: usize, dt: f64) -> Vec<f64> {
        let sd = dt.sqrt();
        (0..basis_count)
            .map(|_| {
                let z: f64 = self.rng.sample(StandardNormal);
                sd * z
            })
            .collect()
    }

    pub fn sample_w2_increment(&mut self, dt: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        dt.sqrt() * z
    }

    /// Jumps of the compound Poisson process on `(t0, t0 + dt]`, sorted by time.
    pub fn sample_jumps(&mut self, jumps: &JumpConfig, t0: f64, dt: f64) -> Vec<JumpEvent> {
        let mean = jumps.rate * dt;
        if mean <= 0.0 {
            return Vec::new();
        }
        let count = Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as usize;
        let mut out: Vec<JumpEvent> = (0..count)
            .map(|_| {
                let u: f64 = self.rng.random();
                let w: f64 = self.rng.random();
                JumpEvent {
                    t: t0 + (1.0 - u) * dt,
                    z: jumps.z_min + w * (jumps.z_max - jumps.z_min),
                }
            })
            .collect();
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        out
    }

    /// All draws for one step, in a fixed order: W1, W2, jumps.
    pub fn sample_step(&mut self, config: &NoiseConfig, t0: f64, dt: f64) -> StepNoise {
        let dw1 = self.sample_w1_increment(config.wiener.basis_count, dt);
        let dw2 = self.sample_w2_increment(dt);
        let jumps = self.sample_jumps(&config.jumps, t0, dt);
        StepNoise { dw1, dw2, jumps }
    }
}

enum StressCoefficient {
    Identity(f64),
    Field { h: TensorField, linf: f64 },
}

/// Noise channels instantiated on a particular grid. Immutable and shareable.
pub struct NoiseModel {
    grid: Arc<SpectralGrid>,
    config: NoiseConfig,
    eigenvalues: Vec<f64>,
    basis: Vec<BasisMode>,
    /// `psi_j = e_j`, the additive profiles.
    psi: Vec<VectorField>,
    /// Scalar multiplier profiles with the same wavevector and phase as `e_j`.
    phi: Vec<ScalarField>,
    stress: StressCoefficient,
    kappa: Vec<f64>,
    fingerprint: u64,
}

impl std::fmt::Debug for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseModel")
            .field("config", &self.config)
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

fn place_mode(grid: &SpectralGrid, comp: &mut [Complex64], mode: &BasisMode, weight: f64) {
    let Some(idx) = grid.index_of(mode.k) else { return };
    let mir = grid.mirror(idx);
    if mir == idx {
        return;
    }
    let a = weight / SQRT_2;
    let z = match mode.phase {
        Phase::Cos => Complex64::new(a, 0.0),
        Phase::Sin => Complex64::new(0.0, -a),
    };
    comp[idx] = z;
    comp[mir] = z.conj();
}

impl NoiseModel {
    pub fn new(config: &NoiseConfig, grid: &Arc<SpectralGrid>) -> Result<Self> {
        let dim = grid.dim();
        config.validate(dim)?;
        let eigenvalues = config.wiener.eigenvalues();
        let basis = noise_basis(dim, config.wiener.basis_count);
        let mut psi = Vec::with_capacity(basis.len());
        let mut phi = Vec::with_capacity(basis.len());
        for mode in &basis {
            let mut v = VectorField::zeros(grid);
            for a in 0..dim {
                place_mode(grid, v.component_mut(a), mode, mode.polarization[a]);
            }
            psi.push(v);
            let mut f = ScalarField::zeros(grid);
            place_mode(grid, f.coeffs_mut(), mode, 1.0);
            phi.push(f);
        }
        let stress = match &config.stress {
            StressNoiseConfig::Identity { scale } => StressCoefficient::Identity(*scale),
            StressNoiseConfig::Bump { scale, width, matrix } => {
                let h = bump_field(grid, *scale, *width, matrix);
                let linf = linf_norm(&h);
                StressCoefficient::Field { h, linf }
            }
        };
        let order = config.jumps.kappa_order;
        let kappa = grid.xi_sq_all().iter().map(|q| (1.0 + q).powf(-order / 2.0)).collect();
        Ok(NoiseModel {
            grid: grid.clone(),
            config: config.clone(),
            eigenvalues,
            basis,
            psi,
            phi,
            stress,
            kappa,
            fingerprint: basis_fingerprint(dim, &config.wiener),
        })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.config
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &[BasisMode] {
        &self.basis
    }

    pub fn basis_field(&self, j: usize) -> &VectorField {
        &self.psi[j]
    }

    pub fn multiplier_profile(&self, j: usize) -> &ScalarField {
        &self.phi[j]
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// `sum_j sqrt(lambda_j) dW_j e_j`, untruncated.
    pub fn assemble_w1(&self, dw1: &[f64]) -> VectorField {
        let mut out = VectorField::zeros(&self.grid);
        for ((e, l), dw) in self.psi.iter().zip(&self.eigenvalues).zip(dw1) {
            out.add_scaled(l.sqrt() * dw, e);
        }
        out
    }

    fn weighted_profile(&self, dw1: &[f64]) -> ScalarField {
        let mut out = ScalarField::zeros(&self.grid);
        for ((p, l), dw) in self.phi.iter().zip(&self.eigenvalues).zip(dw1) {
            out.add_scaled(l.sqrt() * dw, p);
        }
        out
    }

    /// Linear part `c1 sum_j sqrt(lambda_j) dW_j (phi_j v)`, truncated and projected.
    pub fn apply_sigma_linear(&self, v: &VectorField, dw1: &[f64]) -> VectorField {
        let c1 = self.config.sigma.c1;
        if c1 == 0.0 {
            return VectorField::zeros(&self.grid);
        }
        let mut prod = scalar_times_vector(&self.weighted_profile(dw1), v);
        prod.scale(c1);
        leray_project(&truncate_to_grid(&prod))
    }

    /// Velocity noise increment `J_n sigma(t, v) dW1`, truncated and Leray-projected.
    pub fn apply_sigma(&self, v: &VectorField, dw1: &[f64]) -> VectorField {
        let mut out = self.assemble_w1(dw1);
        out.scale(self.config.sigma.c0);
        let additive = leray_project(&truncate_to_grid(&out));
        let mut total = self.apply_sigma_linear(v, dw1);
        total.add_scaled(1.0, &additive);
        total
    }

    /// Column `sigma(v) e_j = c0 psi_j + c1 phi_j v`, projected but not truncated.
    pub fn sigma_column(&self, v: &VectorField, j: usize) -> VectorField {
        let mut out = self.psi[j].scaled(self.config.sigma.c0);
        if self.config.sigma.c1 != 0.0 {
            out.add_scaled(self.config.sigma.c1, &scalar_times_vector(&self.phi[j], v));
        }
        leray_project(&out)
    }

    /// Stress diffusion `S(tau) = h tau` (pointwise matrix product).
    pub fn s_operator(&self, tau: &TensorField) -> TensorField {
        match &self.stress {
            StressCoefficient::Identity(c) => tau.scaled(*c),
            StressCoefficient::Field { h, .. } => {
                let d = self.grid.dim();
                let ph = physical_components(h);
                let pt = physical_components(tau);
                let prod = matmul_physical(d, &ph, &pt);
                TensorField::from_components(&self.grid, from_physical(&self.grid, &prod), false)
                    .expect("component count")
            }
        }
    }

    /// `S(tau) dW2`.
    pub fn stress_noise(&self, tau: &TensorField, dw2: f64) -> TensorField {
        let mut out = self.s_operator(tau);
        out.scale(dw2);
        out
    }

    /// Ito correction `S^2(tau) / 2`.
    pub fn ito_correction(&self, tau: &TensorField) -> TensorField {
        let mut out = self.s_operator(&self.s_operator(tau));
        out.scale(0.5);
        out
    }

    /// Whether the stress noise keeps symmetric tensors exactly symmetric.
    pub fn stress_preserves_symmetry(&self) -> bool {
        matches!(self.stress, StressCoefficient::Identity(_))
    }

    /// `||h||_{L^inf}` measured as the largest pointwise Frobenius norm on the grid.
    pub fn h_linf(&self) -> f64 {
        match &self.stress {
            StressCoefficient::Identity(c) => c.abs() * (self.grid.dim() as f64).sqrt(),
            StressCoefficient::Field { linf, .. } => *linf,
        }
    }

    /// Jump amplitude `G(v, z) = gamma(z) (kappa * v)`.
    pub fn jump_increment(&self, v: &VectorField, z: f64) -> VectorField {
        let g = self.config.jumps.gamma(z);
        let mut out = v.clone();
        out.apply_multiplier(|i| g * self.kappa[i]);
        out
    }

    /// Compensator `int_Z G(v, z) lambda(dz) = gamma_bar (kappa * v)`.
    pub fn compensator(&self, v: &VectorField) -> VectorField {
        let gb = self.config.jumps.gamma_bar();
        let mut out = v.clone();
        out.apply_multiplier(|i| gb * self.kappa[i]);
        out
    }

    /// Bound on `||phi_j w||_{H^s} / ||w||_{H^s}` from Peetre's inequality.
    fn multiplier_bound(&self, j: usize, s: f64) -> f64 {
        let k = self.basis[j].k;
        let base = 2.0 * std::f64::consts::PI / self.grid.box_length();
        let xi2: f64 = k.iter().map(|&c| (base * c as f64).powi(2)).sum();
        SQRT_2 * 2f64.powf(s.abs() / 2.0) * (1.0 + xi2).powf(s.abs() / 2.0)
    }

    /// Constant `K` in `||sigma(v)||^2_{L_Q} + int ||G(v,z)||^2 dlambda <= K (1 + ||v||^2_{H^s})`.
    pub fn growth_constant(&self, s: f64) -> f64 {
        let (c0, c1) = (self.config.sigma.c0, self.config.sigma.c1);
        let mut additive = 0.0;
        let mut linear = self.config.jumps.gamma_sq_integral();
        for j in 0..self.basis.len() {
            let l = self.eigenvalues[j];
            let psi = crate::spectral::hs_norm_sq(&self.psi[j], s);
            additive += 2.0 * l * c0 * c0 * psi;
            linear += 2.0 * l * c1 * c1 * self.multiplier_bound(j, s).powi(2);
        }
        additive.max(linear)
    }

    /// Constant `L` in the Lipschitz condition for the same norms.
    pub fn lipschitz_constant(&self, s: f64) -> f64 {
        let c1 = self.config.sigma.c1;
        let mut l = self.config.jumps.gamma_sq_integral();
        for j in 0..self.basis.len() {
            l += self.eigenvalues[j] * c1 * c1 * self.multiplier_bound(j, s).powi(2);
        }
        l
    }

    /// `sum_j lambda_j ||sigma(v) e_j||^2_{H^s} + int ||G(v,z)||^2_{H^s} dlambda`, evaluated directly.
    pub fn growth_functional(&self, v: &VectorField, s: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..self.basis.len() {
            total += self.eigenvalues[j] * crate::spectral::hs_norm_sq(&self.sigma_column(v, j), s);
        }
        let mut kv = v.clone();
        kv.apply_multiplier(|i| self.kappa[i]);
        total + self.config.jumps.gamma_sq_integral() * crate::spectral::hs_norm_sq(&kv, s)
    }
}

fn bump_field(grid: &Arc<SpectralGrid>, scale: f64, width: f64, matrix: &[f64]) -> TensorField {
    let d = grid.dim();
    let l = grid.box_length();
    let center = l / 2.0;
    let profile: Vec<f64> = (0..grid.len())
        .map(|p| {
            let x = grid.point(p);
            let r2: f64 = x[..d]
                .iter()
                .map(|&c| {
                    let dx = c - center;
                    let dx = dx - l * (dx / l).round();
                    dx * dx
                })
                .sum();
            scale * (-r2 / (2.0 * width * width)).exp()
        })
        .collect();
    let comps: Vec<Vec<f64>> = matrix.iter().map(|m| profile.iter().map(|p| p * m).collect()).collect();
    TensorField::from_components(grid, from_physical(grid, &comps), false).expect("component count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::random::{random_solenoidal, random_symmetric_tensor};
    use crate::spectral::{hs_norm, truncate};
    use std::f64::consts::PI;

    fn grid() -> Arc<SpectralGrid> {
        SpectralGrid::new(2, 32, 2.0 * PI, 8.0).unwrap()
    }

    fn config() -> NoiseConfig {
        NoiseConfig {
            wiener: WienerQConfig { lambda0: 0.5, basis_count: 8 },
            sigma: SigmaInstance { c0: 0.7, c1: 0.3 },
            stress: StressNoiseConfig::Identity { scale: 0.4 },
            jumps: JumpConfig {
                rate: 3.0,
                gamma0: 0.2,
                gamma_kind: MarkCoefficient::Constant,
                z_min: -1.0,
                z_max: 1.0,
                kappa_order: 2.0,
            },
        }
    }

    #[test]
    fn zero_dt_gives_zero_increment() {
        let mut s = NoiseSampler::for_run(1, 0);
        assert!(s.sample_w1_increment(5, 0.0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn same_seed_same_draws() {
        let cfg = config();
        let mut a = NoiseSampler::for_run(42, 3);
        let mut b = NoiseSampler::for_run(42, 3);
        for k in 0..20 {
            assert_eq!(a.sample_step(&cfg, k as f64 * 0.01, 0.01), b.sample_step(&cfg, k as f64 * 0.01, 0.01));
        }
    }

    #[test]
    fn rng_state_round_trip() {
        let cfg = config();
        let mut a = NoiseSampler::for_run(7, 1);
        for _ in 0..13 {
            a.sample_step(&cfg, 0.0, 0.01);
        }
        let mut b = NoiseSampler::from_state(&a.state());
        assert_eq!(a.sample_step(&cfg, 0.0, 0.01), b.sample_step(&cfg, 0.0, 0.01));
    }

    #[test]
    fn basis_is_orthonormal_and_solenoidal() {
        let g = grid();
        let m = NoiseModel::new(&config(), &g).unwrap();
        for i in 0..8 {
            assert!(m.basis_field(i).is_divergence_free(1e-15));
            for j in 0..8 {
                let ip = crate::spectral::hs_inner(m.basis_field(i), m.basis_field(j), 0.0).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-14, "({i},{j}) -> {ip}");
            }
        }
    }

    #[test]
    fn sigma_off_gives_zero() {
        let g = grid();
        let mut cfg = config();
        cfg.sigma = SigmaInstance { c0: 0.0, c1: 0.0 };
        let m = NoiseModel::new(&cfg, &g).unwrap();
        let v = random_solenoidal(&g, 3.0, 1);
        let dw = NoiseSampler::for_run(1, 0).sample_w1_increment(8, 0.01);
        assert_eq!(hs_norm(&m.apply_sigma(&v, &dw), 0.0), 0.0);
    }

    #[test]
    fn additive_sigma_ignores_state() {
        let g = grid();
        let mut cfg = config();
        cfg.sigma.c1 = 0.0;
        let m = NoiseModel::new(&cfg, &g).unwrap();
        let dw = NoiseSampler::for_run(2, 0).sample_w1_increment(8, 0.01);
        let a = m.apply_sigma(&random_solenoidal(&g, 3.0, 1), &dw);
        let b = m.apply_sigma(&random_solenoidal(&g, 3.0, 2), &dw);
        assert_eq!(a.components(), b.components());
    }

    #[test]
    fn sigma_difference_is_linear_part() {
        let g = grid();
        let m = NoiseModel::new(&config(), &g).unwrap();
        let v1 = truncate(&random_solenoidal(&g, 3.0, 1), 8.0);
        let v2 = truncate(&random_solenoidal(&g, 3.0, 2), 8.0);
        let dw = NoiseSampler::for_run(3, 0).sample_w1_increment(8, 0.01);
        let lhs = m.apply_sigma(&v1, &dw).sub(&m.apply_sigma(&v2, &dw));
        let rhs = m.apply_sigma_linear(&v1.sub(&v2), &dw);
        assert!(hs_norm(&lhs.sub(&rhs), 0.0) <= 1e-14 * hs_norm(&rhs, 0.0).max(1e-300));
        assert!(m.apply_sigma(&v1, &dw).is_divergence_free(1e-12));
    }

    #[test]
    fn identity_h_scales_stress() {
        let g = grid();
        let m = NoiseModel::new(&config(), &g).unwrap();
        let tau = random_symmetric_tensor(&g, 3.0, 4);
        assert_eq!(m.s_operator(&tau).components(), tau.scaled(0.4).components());
        let s2 = m.s_operator(&m.s_operator(&tau));
        assert!(hs_norm(&s2.sub(&tau.scaled(0.16)), 0.0) < 1e-15);
    }

    #[test]
    fn bump_h_bounds_and_linearity() {
        let g = grid();
        let mut cfg = config();
        cfg.stress = StressNoiseConfig::Bump { scale: 0.8, width: 0.9, matrix: vec![1.0, 0.5, -0.3, 0.7] };
        let m = NoiseModel::new(&cfg, &g).unwrap();
        let t1 = crate::spectral::dealias(&random_symmetric_tensor(&g, 2.5, 5));
        let t2 = crate::spectral::dealias(&random_symmetric_tensor(&g, 2.5, 6));
        let h = m.h_linf();
        let s1 = hs_norm(&m.s_operator(&t1), 0.0);
        assert!(s1 <= h * hs_norm(&t1, 0.0) * (1.0 + 1e-12));
        let s2 = hs_norm(&m.s_operator(&m.s_operator(&t1)), 0.0);
        assert!(s2 <= h * h * hs_norm(&t1, 0.0) * (1.0 + 1e-12));
        let mut combo = t1.scaled(2.0);
        combo.add_scaled(-3.0, &t2);
        let mut expect = m.s_operator(&t1).scaled(2.0);
        expect.add_scaled(-3.0, &m.s_operator(&t2));
        assert!(hs_norm(&m.s_operator(&combo).sub(&expect), 0.0) < 1e-13 * hs_norm(&expect, 0.0));
        assert!(!m.stress_preserves_symmetry());
    }

    #[test]
    fn compensator_closed_form() {
        let g = grid();
        let m = NoiseModel::new(&config(), &g).unwrap();
        let v = random_solenoidal(&g, 3.0, 7);
        let comp = m.compensator(&v);
        let expect = m.jump_increment(&v, 0.0).scaled(3.0);
        assert!(hs_norm(&comp.sub(&expect), 0.0) < 1e-15);

        let mut cfg = config();
        cfg.jumps.rate = 0.0;
        let m0 = NoiseModel::new(&cfg, &g).unwrap();
        assert_eq!(hs_norm(&m0.compensator(&v), 0.0), 0.0);
        assert!(NoiseSampler::for_run(1, 1).sample_jumps(&cfg.jumps, 0.0, 1.0).is_empty());
    }

    #[test]
    fn linear_mark_moments() {
        let j = JumpConfig {
            rate: 2.0,
            gamma0: 3.0,
            gamma_kind: MarkCoefficient::Linear,
            z_min: 1.0,
            z_max: 3.0,
            kappa_order: 0.0,
        };
        // int_1^3 3z dz / 2 = 6, int_1^3 9 z^2 dz / 2 = 39
        assert!((j.gamma_bar() - 12.0).abs() < 1e-12);
        assert!((j.gamma_sq_integral() - 78.0).abs() < 1e-12);
    }

    #[test]
    fn growth_condition_holds_on_random_states() {
        let g = grid();
        let m = NoiseModel::new(&config(), &g).unwrap();
        for s in [0.0, 1.0, 2.0] {
            let k = m.growth_constant(s);
            for seed in 0..10 {
                let v = truncate(&random_solenoidal(&g, 2.5, seed).scaled(1.0 + seed as f64), 8.0);
                let lhs = m.growth_functional(&v, s);
                let rhs = k * (1.0 + crate::spectral::hs_norm_sq(&v, s));
                assert!(lhs <= rhs, "s={s} seed={seed}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn basis_order_starts_at_unit_shell() {
        let b = noise_basis(2, 4);
        assert_eq!(b[0].k, [0, 1, 0]);
        assert!(b[0].is_cosine() && !b[1].is_cosine());
        assert_eq!(b[2].k, [1, 0, 0]);
        let b3 = noise_basis(3, 12);
        assert_eq!(b3.len(), 12);
        for m in &b3 {
            let dot: f64 = (0..3).map(|a| m.k[a] as f64 * m.polarization[a]).sum();
            assert!(dot.abs() < 1e-15);
        }
    }
}
