use serde::{Deserialize, Serialize};

use super::stats::{loglog_slope, mean_var};
use crate::dynamics::FlowState;
use crate::error::{Error, Result};
use crate::integrator::Simulation;
use crate::monitor::{check_record, gradient_energy, EnergyMonitor};
use crate::noise::NoiseSampler;
use crate::spectral::{hs_norm, transfer, Field, SpectralGrid};

pub const REFINEMENT_SCHEMA: u32 = 1;

/// Differences between cutoffs `n < m` along one noise path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub n: f64,
    pub m: f64,
    pub sup_v_l2: f64,
    pub sup_tau_l2: f64,
    /// Left-endpoint sum of `dt * ||grad(v_n - v_m)||^2`.
    pub grad_v_integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRefinement {
    pub path: u64,
    /// End of the comparison window for this path.
    pub window: f64,
    /// True if some resolution stopped before the horizon.
    pub window_shrunk: bool,
    pub pairs: Vec<PairDifference>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub schema_version: u32,
    pub master_seed: u64,
    pub cutoffs: Vec<f64>,
    pub modes: Vec<usize>,
    pub horizon: f64,
    /// Smallest comparison window over all paths.
    pub common_window: f64,
    pub shrunk_paths: usize,
    pub paths: Vec<PathRefinement>,
    /// Monte Carlo means over paths, one entry per successive pair.
    pub mean_sup_v: Vec<f64>,
    pub sem_sup_v: Vec<f64>,
    pub var_sup_v: Vec<f64>,
    pub mean_sup_tau: Vec<f64>,
    pub mean_grad_v_integral: Vec<f64>,
    /// `mean_sup_v[i + 1] / mean_sup_v[i]`.
    pub ratios: Vec<f64>,
    /// Log-log slope of `mean_sup_v` against the lower cutoff of each pair.
    pub decay_rate: f64,
}

/// Cutoffs sorted ascending with duplicates removed; reports whether the input was out of order.
pub fn sort_cutoffs(cutoffs: &[f64]) -> (Vec<f64>, bool) {
    let mut c = cutoffs.to_vec();
    c.sort_by(f64::total_cmp);
    c.dedup();
    let reordered = c.as_slice() != cutoffs;
    (c, reordered)
}

fn check_family(sims: &[Simulation]) -> Result<()> {
    if sims.len() < 2 {
        return Err(Error::param("cutoffs", "need at least two cutoffs"));
    }
    let first = &sims[0];
    for (a, b) in sims.iter().zip(&sims[1..]) {
        if !(b.grid().cutoff() > a.grid().cutoff()) {
            return Err(Error::param("cutoffs", "must be strictly increasing"));
        }
    }
    for s in &sims[1..] {
        let g = s.grid();
        if g.dim() != first.grid().dim() || g.box_length() != first.grid().box_length() {
            return Err(Error::Config("refinement grids must share dimension and box".into()));
        }
        if s.stepper() != first.stepper() || s.noise().config() != first.noise().config() {
            return Err(Error::Config("refinement runs must share stepper and noise settings".into()));
        }
        if s.noise().fingerprint() != first.noise().fingerprint() {
            return Err(Error::Config("refinement runs must share the noise basis".into()));
        }
    }
    Ok(())
}

fn pair_diff(coarse: &FlowState, fine: &FlowState, fine_grid: &std::sync::Arc<SpectralGrid>) -> (f64, f64, f64) {
    let dv = transfer(&coarse.v, fine_grid).sub(&fine.v);
    let dt = transfer(&coarse.tau, fine_grid).sub(&fine.tau);
    (hs_norm(&dv, 0.0), hs_norm(&dt, 0.0), gradient_energy(&dv, 0.0))
}

/// One noise path driving every resolution in lockstep with the same draws.
pub fn refine_path(
    sims: &[Simulation],
    initial: &(dyn Fn(&std::sync::Arc<SpectralGrid>) -> FlowState + Sync),
    master_seed: u64,
    path: u64,
) -> Result<PathRefinement> {
    let dt = sims[0].stepper().dt;
    let steps = sims[0].stepper().steps();
    let mut states = sims
        .iter()
        .map(|s| s.admissible(initial(s.grid())))
        .collect::<Result<Vec<_>>>()?;
    let mut monitors: Vec<EnergyMonitor> = sims.iter().map(|s| EnergyMonitor::new(s.monitor().s)).collect();
    let mut sampler = NoiseSampler::for_run(master_seed, path);
    let npairs = sims.len() - 1;
    let mut sup_v = vec![0.0f64; npairs];
    let mut sup_tau = vec![0.0f64; npairs];
    let mut grad_int = vec![0.0f64; npairs];
    let mut grad_prev = vec![0.0f64; npairs];

    let mut window = 0.0;
    let mut shrunk = false;
    for k in 0..=steps {
        if k > 0 {
            let draws = sims[0].sample_step(&mut sampler, states[0].t);
            for (s, st) in sims.iter().zip(states.iter_mut()) {
                let mut next = s.step(st, &draws);
                next.t = k as f64 * dt;
                *st = next;
            }
        }
        let stopped = sims
            .iter()
            .zip(&states)
            .zip(monitors.iter_mut())
            .any(|((s, st), m)| check_record(&m.record(st, s.params()), s.monitor().threshold).is_some());
        if stopped {
            shrunk = true;
            break;
        }
        for i in 0..npairs {
            let (v, t, g) = pair_diff(&states[i], &states[i + 1], sims[i + 1].grid());
            sup_v[i] = sup_v[i].max(v);
            sup_tau[i] = sup_tau[i].max(t);
            if k > 0 {
                grad_int[i] += dt * grad_prev[i];
            }
            grad_prev[i] = g;
        }
        window = states[0].t;
    }
    let pairs = (0..npairs)
        .map(|i| PairDifference {
            n: sims[i].grid().cutoff(),
            m: sims[i + 1].grid().cutoff(),
            sup_v_l2: sup_v[i],
            sup_tau_l2: sup_tau[i],
            grad_v_integral: grad_int[i],
        })
        .collect();
    Ok(PathRefinement { path, window, window_shrunk: shrunk, pairs })
}

/// Lockstep common-noise runs at increasing cutoffs, averaged over `n_paths` noise paths.
///
/// `sims` must be the same model on grids with strictly increasing cutoffs.
pub fn refinement_study(
    sims: &[Simulation],
    initial: &(dyn Fn(&std::sync::Arc<SpectralGrid>) -> FlowState + Sync),
    n_paths: usize,
    master_seed: u64,
) -> Result<RefinementResult> {
    use rayon::prelude::*;
    check_family(sims)?;
    if n_paths == 0 {
        return Err(Error::param("paths", "need at least one noise path"));
    }
    let paths: Vec<PathRefinement> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| refine_path(sims, initial, master_seed, p))
        .collect::<Result<_>>()?;
    let npairs = sims.len() - 1;
    let column = |f: &dyn Fn(&PairDifference) -> f64, i: usize| -> Vec<f64> { paths.iter().map(|p| f(&p.pairs[i])).collect() };
    let mut mean_sup_v = Vec::new();
    let mut var_sup_v = Vec::new();
    let mut sem_sup_v = Vec::new();
    let mut mean_sup_tau = Vec::new();
    let mut mean_grad = Vec::new();
    for i in 0..npairs {
        let (m, v) = mean_var(&column(&|d| d.sup_v_l2, i));
        mean_sup_v.push(m);
        var_sup_v.push(v);
        sem_sup_v.push((v / n_paths as f64).sqrt());
        mean_sup_tau.push(mean_var(&column(&|d| d.sup_tau_l2, i)).0);
        mean_grad.push(mean_var(&column(&|d| d.grad_v_integral, i)).0);
    }
    let ratios = mean_sup_v.windows(2).map(|w| w[1] / w[0]).collect();
    let lower: Vec<f64> = sims[..npairs].iter().map(|s| s.grid().cutoff()).collect();
    let decay_rate = if npairs >= 2 && mean_sup_v.iter().all(|m| *m > 0.0) {
        loglog_slope(&lower, &mean_sup_v)
    } else {
        f64::NAN
    };
    Ok(RefinementResult {
        schema_version: REFINEMENT_SCHEMA,
        master_seed,
        cutoffs: sims.iter().map(|s| s.grid().cutoff()).collect(),
        modes: sims.iter().map(|s| s.grid().modes()).collect(),
        horizon: sims[0].stepper().actual_horizon(),
        common_window: paths.iter().map(|p| p.window).fold(f64::INFINITY, f64::min),
        shrunk_paths: paths.iter().filter(|p| p.window_shrunk).count(),
        paths,
        mean_sup_v,
        sem_sup_v,
        var_sup_v,
        mean_sup_tau,
        mean_grad_v_integral: mean_grad,
        ratios,
        decay_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PhysicalParams;
    use crate::integrator::StepperConfig;
    use crate::monitor::MonitorConfig;
    use crate::noise::{NoiseConfig, SigmaInstance, StressNoiseConfig, WienerQConfig};
    use crate::spectral::random::{random_solenoidal, random_symmetric_tensor};
    use crate::spectral::{modes_for_cutoff, truncate};
    use std::f64::consts::PI;

    fn family(nonlinear: bool, cutoffs: &[f64], threshold: f64) -> Vec<Simulation> {
        // The multiplicative part of sigma is a product and spreads modes, so the
        // linear model only keeps data in a ball when it is off.
        let c1 = if nonlinear { 0.1 } else { 0.0 };
        let noise = NoiseConfig {
            wiener: WienerQConfig { lambda0: 0.2, basis_count: 4 },
            sigma: SigmaInstance { c0: 0.2, c1 },
            stress: StressNoiseConfig::Identity { scale: 0.2 },
            ..NoiseConfig::silent()
        };
        cutoffs
            .iter()
            .map(|&n| {
                let g = SpectralGrid::new(2, modes_for_cutoff(n, 2.0 * PI, 2.0 / 3.0), 2.0 * PI, n).unwrap();
                Simulation::new(
                    &g,
                    PhysicalParams { nonlinear, ..Default::default() },
                    &noise,
                    StepperConfig { dt: 2e-3, horizon: 0.02, record_noise: false },
                    MonitorConfig { threshold, s: 1.0 },
                )
                .unwrap()
            })
            .collect()
    }

    fn low_modes(g: &std::sync::Arc<SpectralGrid>) -> FlowState {
        FlowState::new(
            truncate(&random_solenoidal(g, 3.0, 5), 2.0),
            truncate(&random_symmetric_tensor(g, 3.0, 6), 2.0),
        )
        .unwrap()
    }

    #[test]
    fn linear_model_with_low_mode_data_has_no_differences() {
        let sims = family(false, &[4.0, 6.0], 1e9);
        let r = refinement_study(&sims, &low_modes, 2, 3).unwrap();
        assert_eq!(r.mean_sup_v, vec![0.0]);
        assert_eq!(r.mean_sup_tau, vec![0.0]);
        assert_eq!(r.mean_grad_v_integral, vec![0.0]);
    }

    #[test]
    fn differences_nonnegative_and_window_shrinks() {
        let sims = family(true, &[4.0, 6.0, 8.0], 1e9);
        let r = refinement_study(&sims, &low_modes, 2, 3).unwrap();
        assert!(r.paths.iter().flat_map(|p| &p.pairs).all(|d| d.sup_v_l2 >= 0.0 && d.sup_tau_l2 >= 0.0 && d.grad_v_integral >= 0.0));
        assert_eq!(r.shrunk_paths, 0);
        assert!((r.common_window - 0.02).abs() < 1e-12);

        let tiny = family(true, &[4.0, 6.0], 1e-6);
        let r = refinement_study(&tiny, &low_modes, 1, 3).unwrap();
        assert_eq!(r.shrunk_paths, 1);
        assert!(r.common_window < 0.02);
    }

    #[test]
    fn cutoff_order_enforced() {
        let (c, warn) = sort_cutoffs(&[16.0, 8.0]);
        assert_eq!(c, vec![8.0, 16.0]);
        assert!(warn);
        assert!(!sort_cutoffs(&[8.0, 16.0]).1);
        let sims = family(true, &[6.0, 4.0], 1e9);
        assert!(refinement_study(&sims, &low_modes, 1, 0).unwrap_err().is_config());
    }
}
