use serde::{Deserialize, Serialize};

use super::stats::linear_fit;
use crate::dynamics::FlowState;
use crate::error::Result;
use crate::integrator::Simulation;
use crate::noise::{derive_seed, NoiseSampler};
use crate::spectral::random::{normalized, random_solenoidal};
use crate::spectral::{hs_norm, truncate_to_grid, Field};

pub const TWIN_SCHEMA: u32 = 1;

const PERTURBATION_STREAM: u64 = 1 << 41;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwinReport {
    pub schema_version: u32,
    pub seed: u64,
    /// Largest difference between two independent runs with the same seed.
    pub identical_max_dv: f64,
    pub identical_max_dtau: f64,
    pub identical_bitwise: bool,
    /// Largest distance for a zero perturbation under common noise.
    pub zero_perturbation_max_dv: f64,
    pub perturbation: f64,
    pub times: Vec<f64>,
    /// `||v_1 - v_2||_{L2}` at each time for the perturbed pair.
    pub distances: Vec<f64>,
    pub max_distance: f64,
    /// Slope of `ln(distance)` against `t`; reported, not checked.
    pub growth_rate: f64,
}

impl TwinReport {
    pub fn exact_checks_pass(&self) -> bool {
        self.identical_bitwise && self.zero_perturbation_max_dv == 0.0
    }
}

fn bits_equal(a: &FlowState, b: &FlowState) -> bool {
    let eq = |x: &[Vec<num_complex::Complex64>], y: &[Vec<num_complex::Complex64>]| {
        x.iter().flatten().zip(y.iter().flatten()).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits())
    };
    a.t.to_bits() == b.t.to_bits()
        && eq(a.v.components(), b.v.components())
        && eq(a.tau.components(), b.tau.components())
}

/// Pairs of runs probing pathwise uniqueness.
///
/// Runs stop early if any member leaves the finite range.
pub fn twin_uniqueness(sim: &Simulation, initial: FlowState, seed: u64, perturbation: f64) -> Result<TwinReport> {
    let base = sim.admissible(initial)?;
    let steps = sim.stepper().steps();
    let dt = sim.stepper().dt;

    // Same seed, separately drawn noise.
    let (mut a, mut b) = (base.clone(), base.clone());
    let (mut sa, mut sb) = (NoiseSampler::for_run(seed, 0), NoiseSampler::for_run(seed, 0));
    let mut bitwise = true;
    let (mut max_dv, mut max_dtau) = (0.0f64, 0.0f64);
    for k in 1..=steps {
        a = sim.step(&a, &sim.sample_step(&mut sa, a.t));
        b = sim.step(&b, &sim.sample_step(&mut sb, b.t));
        a.t = k as f64 * dt;
        b.t = k as f64 * dt;
        bitwise &= bits_equal(&a, &b);
        max_dv = max_dv.max(hs_norm(&a.v.sub(&b.v), 0.0));
        max_dtau = max_dtau.max(hs_norm(&a.tau.sub(&b.tau), 0.0));
        if !a.is_finite() {
            break;
        }
    }

    let dir = normalized(
        truncate_to_grid(&random_solenoidal(sim.grid(), 3.0, derive_seed(seed, PERTURBATION_STREAM))),
        0.0,
        1.0,
    );
    let shifted = |eps: f64| {
        let mut v = base.v.clone();
        v.add_scaled(eps, &dir);
        FlowState { v, ..base.clone() }
    };
    let pert = sim.admissible(shifted(perturbation))?;
    let zero = shifted(0.0);

    let mut sampler = NoiseSampler::for_run(seed, 0);
    let (mut x, mut y, mut z) = (base.clone(), zero, pert);
    let mut zero_max = hs_norm(&x.v.sub(&y.v), 0.0);
    let mut times = vec![0.0];
    let mut distances = vec![hs_norm(&x.v.sub(&z.v), 0.0)];
    for k in 1..=steps {
        let draws = sim.sample_step(&mut sampler, x.t);
        x = sim.step(&x, &draws);
        y = sim.step(&y, &draws);
        z = sim.step(&z, &draws);
        let t = k as f64 * dt;
        x.t = t;
        y.t = t;
        z.t = t;
        zero_max = zero_max.max(hs_norm(&x.v.sub(&y.v), 0.0));
        times.push(t);
        distances.push(hs_norm(&x.v.sub(&z.v), 0.0));
        if !(x.is_finite() && z.is_finite()) {
            break;
        }
    }
    let usable: Vec<(f64, f64)> = times
        .iter()
        .zip(&distances)
        .filter(|(_, d)| d.is_finite() && **d > 0.0)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    let growth_rate = if usable.len() >= 2 {
        let (ts, ls): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
        linear_fit(&ts, &ls).slope
    } else {
        f64::NAN
    };
    Ok(TwinReport {
        schema_version: TWIN_SCHEMA,
        seed,
        identical_max_dv: max_dv,
        identical_max_dtau: max_dtau,
        identical_bitwise: bitwise,
        zero_perturbation_max_dv: zero_max,
        perturbation,
        max_distance: distances.iter().cloned().fold(0.0, f64::max),
        times,
        distances,
        growth_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PhysicalParams;
    use crate::integrator::StepperConfig;
    use crate::monitor::MonitorConfig;
    use crate::noise::{NoiseConfig, SigmaInstance, StressNoiseConfig, WienerQConfig};
    use crate::spectral::random::random_symmetric_tensor;
    use crate::spectral::SpectralGrid;
    use std::f64::consts::PI;

    #[test]
    fn twins_agree_and_perturbation_stays_small() {
        let g = SpectralGrid::new(2, 32, 2.0 * PI, 8.0).unwrap();
        let noise = NoiseConfig {
            wiener: WienerQConfig { lambda0: 0.3, basis_count: 6 },
            sigma: SigmaInstance { c0: 0.2, c1: 0.2 },
            stress: StressNoiseConfig::Identity { scale: 0.2 },
            ..NoiseConfig::silent()
        };
        let sim = Simulation::new(
            &g,
            PhysicalParams::default(),
            &noise,
            StepperConfig { dt: 1e-3, horizon: 0.05, record_noise: false },
            MonitorConfig { threshold: 1e6, s: 1.0 },
        )
        .unwrap();
        let init = FlowState::new(random_solenoidal(&g, 3.0, 1), random_symmetric_tensor(&g, 3.0, 2)).unwrap();
        let r = twin_uniqueness(&sim, init, 9, 1e-6).unwrap();
        assert!(r.exact_checks_pass());
        assert_eq!(r.identical_max_dv, 0.0);
        assert_eq!(r.zero_perturbation_max_dv, 0.0);
        assert!((r.distances[0] - 1e-6).abs() < 1e-12);
        assert!(r.max_distance < 1e-2, "{}", r.max_distance);
        assert!(r.growth_rate.is_finite());
    }
}
