use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{wilson_interval, Z95};
use crate::dynamics::FlowState;
use crate::error::{Error, Result};
use crate::integrator::Simulation;
use crate::monitor::{EnergyRecord, StopKind, StoppingEvent};
use crate::noise::NoiseSampler;

pub const ENSEMBLE_SCHEMA: u32 = 1;
pub const MIN_RUNS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub schema_version: u32,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Threshold `N`.
    pub threshold: f64,
    pub deltas: Vec<f64>,
    /// Empirical `P(rho_N > delta)` per delta.
    pub survival: Vec<f64>,
    pub wilson_lo: Vec<f64>,
    pub wilson_hi: Vec<f64>,
    pub threshold_stops: usize,
    pub divergences: usize,
    /// Per-run stopping events in run-index order.
    pub events: Vec<StoppingEvent>,
}

impl EnsembleResult {
    /// Fold per-run events (in run order) into survival estimates.
    pub fn from_events(events: Vec<StoppingEvent>, deltas: &[f64], threshold: f64, master_seed: u64) -> Self {
        let n = events.len();
        let mut survival = Vec::with_capacity(deltas.len());
        let mut lo = Vec::with_capacity(deltas.len());
        let mut hi = Vec::with_capacity(deltas.len());
        for &d in deltas {
            let k = events.iter().filter(|e| e.survives(d)).count();
            survival.push(k as f64 / n as f64);
            let (a, b) = wilson_interval(k, n, Z95);
            lo.push(a);
            hi.push(b);
        }
        EnsembleResult {
            schema_version: ENSEMBLE_SCHEMA,
            n_runs: n,
            master_seed,
            threshold,
            deltas: deltas.to_vec(),
            survival,
            wilson_lo: lo,
            wilson_hi: hi,
            threshold_stops: events.iter().filter(|e| e.kind == StopKind::ThresholdN).count(),
            divergences: events.iter().filter(|e| e.kind == StopKind::Divergence).count(),
            events,
        }
    }

    pub fn survival_nonincreasing(&self) -> bool {
        self.survival.windows(2).all(|w| w[1] <= w[0])
    }

    /// Whether `self` is at least as good as `baseline` at every delta: either
    /// the estimate did not drop, or the two Wilson intervals overlap.
    pub fn improves_or_overlaps(&self, baseline: &EnsembleResult) -> bool {
        self.deltas.len() == baseline.deltas.len()
            && (0..self.deltas.len()).all(|i| {
                self.survival[i] >= baseline.survival[i]
                    || (self.wilson_hi[i] >= baseline.wilson_lo[i] && baseline.wilson_hi[i] >= self.wilson_lo[i])
            })
    }
}

/// Ensemble with energy records kept for output.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub result: EnsembleResult,
    pub records: Vec<Vec<EnergyRecord>>,
}

/// Validated, ascending list of survival times.
pub fn check_deltas(deltas: &[f64], horizon: f64) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(Error::param("deltas", "need at least one value"));
    }
    let mut d = deltas.to_vec();
    if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::param("deltas", "values must be finite and > 0"));
    }
    d.sort_by(f64::total_cmp);
    d.dedup();
    if *d.last().unwrap() > horizon * (1.0 + 1e-12) {
        return Err(Error::param("deltas", format!("largest delta exceeds the simulated horizon {horizon}")));
    }
    Ok(d)
}

/// Independent runs `0..n_runs`, run `i` seeded from `(master_seed, i)`.
///
/// Results do not depend on thread count or execution order.
pub fn run_ensemble(
    sim: &Simulation,
    initial: &(dyn Fn(u64) -> FlowState + Sync),
    n_runs: usize,
    deltas: &[f64],
    master_seed: u64,
    keep_records: bool,
) -> Result<Ensemble> {
    if n_runs < MIN_RUNS {
        return Err(Error::param("runs", format!("need at least {MIN_RUNS} runs, got {n_runs}")));
    }
    let deltas = check_deltas(deltas, sim.stepper().actual_horizon())?;
    let outcomes: Vec<(StoppingEvent, Vec<EnergyRecord>)> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let tr = sim.simulate(initial(i), NoiseSampler::for_run(master_seed, i))?;
            Ok((tr.event, if keep_records { tr.records } else { Vec::new() }))
        })
        .collect::<Result<_>>()?;
    let (events, records): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok(Ensemble {
        result: EnsembleResult::from_events(events, &deltas, sim.monitor().threshold, master_seed),
        records: if keep_records { records } else { Vec::new() },
    })
}
