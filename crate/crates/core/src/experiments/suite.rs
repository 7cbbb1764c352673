//! Randomized checks of the spectral identities and inequalities the solver relies on.
//!
//! Exact facts are asserted at a fixed relative tolerance. Inequalities with
//! unknown constants only report the observed ratio `lhs / rhs`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{coupling_residual, deformation, q_form};
use crate::error::{Error, Result};
use crate::spectral::random::{random_scalar, random_solenoidal, random_symmetric_tensor};
use crate::spectral::ops::{advection_vector, physical_components_full};
use crate::spectral::{
    bessel, dealias, dealiased_product, divergence_tensor, gradient_scalar, gradient_vector, hs_inner, hs_norm,
    hs_norm_sq, leray_project, linf_norm, truncate, Field, ScalarField, SpectralGrid, VectorField,
};

pub const SUITE_SCHEMA: u32 = 1;
pub const MIN_TRIALS: usize = 100;
/// Relative tolerance for identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-10;
/// Tolerance for the projection identities.
pub const LERAY_TOL: f64 = 1e-12;
/// Allowed spread of a fitted ratio across amplitude rescaling.
pub const SCALING_SPREAD: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactCheck {
    pub name: String,
    /// Worst relative violation over all trials.
    pub worst: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedConstant {
    pub name: String,
    /// Largest observed `lhs / rhs`: the smallest constant consistent with the samples.
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// Worst `max / min` of the ratio across amplitude rescaling of one sample.
    pub scaling_spread: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub seed: u64,
    pub trials: usize,
    pub modes: usize,
    pub dim: usize,
    pub exact: Vec<ExactCheck>,
    pub fitted: Vec<FittedConstant>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn failures(&self) -> Vec<&str> {
        self.exact
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .chain(self.fitted.iter().filter(|c| !c.passed).map(|c| c.name.as_str()))
            .collect()
    }
}

struct Worst {
    name: &'static str,
    tol: f64,
    worst: f64,
}

impl Worst {
    fn new(name: &'static str, tol: f64) -> Self {
        Worst { name, tol, worst: 0.0 }
    }
    fn see(&mut self, v: f64) {
        // NaN counts as a failure.
        if !(v <= self.worst) {
            self.worst = if v.is_nan() { f64::INFINITY } else { v };
        }
    }
    fn done(self) -> ExactCheck {
        ExactCheck { name: self.name.into(), worst: self.worst, tol: self.tol, passed: self.worst <= self.tol }
    }
}

struct Ratio {
    name: &'static str,
    max: f64,
    min: f64,
    spread: f64,
}

impl Ratio {
    fn new(name: &'static str) -> Self {
        Ratio { name, max: 0.0, min: f64::INFINITY, spread: 1.0 }
    }
    fn see(&mut self, ratios: &[f64]) {
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        self.max = self.max.max(hi);
        self.min = self.min.min(lo);
        let s = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        self.spread = self.spread.max(if s.is_nan() { f64::INFINITY } else { s });
    }
    fn done(self) -> FittedConstant {
        FittedConstant {
            name: self.name.into(),
            max_ratio: self.max,
            min_ratio: self.min,
            scaling_spread: self.spread,
            passed: self.spread <= SCALING_SPREAD && self.max.is_finite(),
        }
    }
}

fn rel(err: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

/// Largest `|xi . Pw| / (|xi| |w|)` over modes where the input `w` is nonzero.
fn relative_divergence(v: &VectorField, w: &VectorField) -> f64 {
    let g = v.grid();
    let mut worst: f64 = 0.0;
    for idx in 0..g.len() {
        let q = g.xi_sq(idx);
        if q == 0.0 {
            continue;
        }
        let xi = g.wavevector(idx);
        let mut dot = num_complex::Complex64::default();
        let mut n2 = 0.0;
        for a in 0..g.dim() {
            dot += xi[a] * v.component(a)[idx];
            n2 += w.component(a)[idx].norm_sqr();
        }
        if n2 > 0.0 {
            worst = worst.max(dot.norm() / (q * n2).sqrt());
        }
    }
    worst
}

fn same_coeffs<F: Field>(a: &F, b: &F) -> bool {
    a.components().iter().flatten().zip(b.components().iter().flatten()).all(|(x, y)| x == y)
}

/// `J^s (f g) - f J^s g`.
fn commutator(f: &ScalarField, g: &ScalarField, s: f64) -> ScalarField {
    let fg = dealiased_product(f, g).expect("same grid");
    let f_jg = dealiased_product(f, &bessel(g, s)).expect("same grid");
    bessel(&fg, s).sub(&f_jg)
}

fn random_vector(grid: &Arc<SpectralGrid>, alpha: f64, seed: u64) -> VectorField {
    let comps = (0..grid.dim())
        .map(|a| random_scalar(grid, alpha, seed.wrapping_add(a as u64 * 7919)).coeffs().to_vec())
        .collect();
    VectorField::from_components(grid, comps).expect("component count")
}

/// Default grid for the suite: 2D, `M = 64`, cutoff 16.
pub fn default_suite_grid() -> Arc<SpectralGrid> {
    SpectralGrid::new(2, 64, 2.0 * std::f64::consts::PI, 16.0).expect("valid grid")
}

/// Run every check over `trials` random samples drawn from `seed`.
pub fn inequality_suite(grid: &Arc<SpectralGrid>, seed: u64, trials: usize) -> Result<SuiteReport> {
    if trials < MIN_TRIALS {
        return Err(Error::param("trials", format!("need at least {MIN_TRIALS}, got {trials}")));
    }
    let d = grid.dim() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut leray_div = Worst::new("leray_divergence", LERAY_TOL);
    let mut leray_idem = Worst::new("leray_idempotent", LERAY_TOL);
    let mut leray_adj = Worst::new("leray_self_adjoint", LERAY_TOL);
    let mut leray_con = Worst::new("leray_contraction", LERAY_TOL);
    let mut plancherel = Worst::new("plancherel", LERAY_TOL);
    let mut hermitian = Worst::new("hermitian_symmetry", LERAY_TOL);
    let mut skew = Worst::new("advection_skew_symmetry", EXACT_TOL);
    let mut coupling = Worst::new("coupling_cancellation", EXACT_TOL);
    let mut corot = Worst::new("corotational_orthogonality", EXACT_TOL);
    let mut trunc_exact = Worst::new("truncation_contraction_idempotence_composition", 0.0);
    let mut trunc_decay = Worst::new("truncation_decay", EXACT_TOL);
    let mut interp = Worst::new("interpolation", EXACT_TOL);
    let mut kp_lin = Worst::new("commutator_bilinearity", EXACT_TOL);
    let mut q_hom = Worst::new("q_homogeneity", EXACT_TOL);

    let mut kp = Ratio::new("kato_ponce");
    let mut tame = Ratio::new("tame_q");
    let mut algebra = Ratio::new("algebra");

    let scalings = [0.1, 1.0, 10.0];

    for _ in 0..trials {
        let base = rng.random::<u64>();
        let alpha = rng.random_range(2.5..4.5);
        let s = rng.random_range(0.5..2.5);
        let sd = |k: u64| base.wrapping_add(k.wrapping_mul(0x9e37_79b9_7f4a_7c15));

        // Projection.
        let w = random_vector(grid, alpha, sd(1));
        let u = random_vector(grid, alpha, sd(2));
        let pw = leray_project(&w);
        let pu = leray_project(&u);
        leray_div.see(relative_divergence(&pw, &w));
        leray_idem.see(rel(hs_norm(&leray_project(&pw).sub(&pw), 0.0), hs_norm(&pw, 0.0)));
        let a = hs_inner(&pw, &u, 0.0)?;
        let b = hs_inner(&w, &pu, 0.0)?;
        leray_adj.see(rel((a - b).abs(), hs_norm(&w, 0.0) * hs_norm(&u, 0.0)));
        leray_con.see(((hs_norm(&pw, s) - hs_norm(&w, s)) / hs_norm(&w, s)).max(0.0));
        hermitian.see(rel(pw.hermitian_defect(), hs_norm(&pw, 0.0)));

        // Fields inside the dealiased band, where products are computed without aliasing.
        let f = dealias(&random_solenoidal(grid, alpha, sd(3)));
        let v = dealias(&random_solenoidal(grid, alpha, sd(4)));
        let tau = dealias(&random_symmetric_tensor(grid, alpha, sd(5)));
        let p = dealias(&random_scalar(grid, alpha, sd(6)));
        let q = dealias(&random_scalar(grid, alpha, sd(7)));

        let phys = physical_components_full(&tau);
        let mean_sq = phys.iter().flatten().map(|x| x * x).sum::<f64>() / grid.len() as f64;
        let n2 = hs_norm_sq(&tau, 0.0);
        plancherel.see(rel((mean_sq - n2).abs(), n2));

        // ((f . grad) J^s v, J^s v) = 0 for divergence-free f.
        let jv = bessel(&v, s);
        let adv = advection_vector(&f, &jv);
        hermitian.see(rel(adv.hermitian_defect(), hs_norm(&adv, 0.0)));
        skew.see(rel(hs_inner(&adv, &jv, 0.0)?.abs(), hs_norm(&adv, 0.0) * hs_norm(&jv, 0.0)));

        let scale = hs_norm(&divergence_tensor(&tau), 0.0) * hs_norm(&v, 0.0)
            + hs_norm(&deformation(&v), 0.0) * hs_norm(&tau, 0.0);
        coupling.see(rel(coupling_residual(&v, &tau).abs(), scale));

        let qc = q_form(&tau, &v, 0.0);
        hermitian.see(rel(qc.hermitian_defect(), hs_norm(&qc, 0.0)));
        corot.see(rel(hs_inner(&qc, &tau, 0.0)?.abs(), hs_norm(&qc, 0.0) * hs_norm(&tau, 0.0)));

        let lam = rng.random_range(-5.0..5.0);
        let bq = rng.random_range(-1.0..1.0);
        let q1 = q_form(&tau.scaled(lam), &v, bq);
        let q2 = q_form(&tau, &v, bq).scaled(lam);
        q_hom.see(rel(hs_norm(&q1.sub(&q2), 0.0), hs_norm(&q2, 0.0)));

        // Truncation.
        let g = random_scalar(grid, alpha, sd(8));
        let n = rng.random_range(1.0..grid.cutoff());
        let m = rng.random_range(1.0..grid.cutoff());
        let tn = truncate(&g, n);
        let ok = hs_norm_sq(&tn, s) <= hs_norm_sq(&g, s)
            && same_coeffs(&truncate(&tn, n), &tn)
            && same_coeffs(&truncate(&truncate(&g, m), n), &truncate(&g, n.min(m)));
        trunc_exact.see(if ok { 0.0 } else { 1.0 });
        for k in [1.0, 2.0] {
            let lhs = hs_norm(&truncate(&g, n).sub(&truncate(&g, m)), s);
            let rhs = n.min(m).powf(-k) * hs_norm(&g, s + k);
            trunc_decay.see(((lhs - rhs) / rhs).max(0.0));
        }

        // Interpolation with constant 1.
        let sp = s * rng.random_range(0.05..0.95);
        let th = sp / s;
        let lhs = hs_norm(&g, sp);
        let rhs = hs_norm(&g, 0.0).powf(1.0 - th) * hs_norm(&g, s).powf(th);
        interp.see(((lhs - rhs) / rhs).max(0.0));

        // Commutator: bilinearity, then fitted constants across amplitude rescaling.
        let c = commutator(&p, &q, s);
        let c1 = commutator(&p.scaled(lam), &q, s);
        let c2 = commutator(&p, &q.scaled(lam), s);
        let cn = hs_norm(&c, 0.0) * lam.abs();
        kp_lin.see(rel(hs_norm(&c1.sub(&c.scaled(lam)), 0.0), cn));
        kp_lin.see(rel(hs_norm(&c2.sub(&c.scaled(lam)), 0.0), cn));

        let mut kp_r = Vec::new();
        let mut tame_r = Vec::new();
        let mut alg_r = Vec::new();
        let s_alg = d / 2.0 + 0.5;
        for &a in &scalings {
            for &b in &scalings {
                let (pa, qb) = (p.scaled(a), q.scaled(b));
                let lhs = hs_norm(&commutator(&pa, &qb, s), 0.0);
                let rhs = linf_norm(&gradient_scalar(&pa)) * hs_norm(&qb, s - 1.0) + hs_norm(&pa, s) * linf_norm(&qb);
                kp_r.push(lhs / rhs);

                let (ta, vb) = (tau.scaled(a), v.scaled(b));
                let gv = gradient_vector(&vb);
                let lhs = hs_norm(&q_form(&ta, &vb, bq), s);
                let rhs = linf_norm(&ta) * hs_norm(&gv, s) + hs_norm(&ta, s) * linf_norm(&gv);
                tame_r.push(lhs / rhs);

                let lhs = hs_norm(&dealiased_product(&pa, &qb)?, s_alg);
                alg_r.push(lhs / (hs_norm(&pa, s_alg) * hs_norm(&qb, s_alg)));
            }
        }
        kp.see(&kp_r);
        tame.see(&tame_r);
        algebra.see(&alg_r);
    }

    let exact: Vec<ExactCheck> = [
        leray_div, leray_idem, leray_adj, leray_con, plancherel, hermitian, skew, coupling, corot, trunc_exact,
        trunc_decay, interp, kp_lin, q_hom,
    ]
    .into_iter()
    .map(Worst::done)
    .collect();
    let fitted: Vec<FittedConstant> = [kp, tame, algebra].into_iter().map(Ratio::done).collect();
    let passed = exact.iter().all(|c| c.passed) && fitted.iter().all(|c| c.passed);
    Ok(SuiteReport {
        schema_version: SUITE_SCHEMA,
        seed,
        trials,
        modes: grid.modes(),
        dim: grid.dim(),
        exact,
        fitted,
        passed,
    })
}
