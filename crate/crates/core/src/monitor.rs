//! Energy functional, stopping-time detection and CSV output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{FlowState, PhysicalParams};
use crate::error::{Error, Result};
use crate::spectral::{hs_norm_sq, Field, VectorField};

/// Energies at or above this level count as numerical blow-up.
pub const DIVERGENCE_LEVEL: f64 = 1e12;

pub const CSV_HEADER: &str = "t,v_hs2,tau_hs2,gradv_hs2,cum_diss,E_N,sym_defect";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Threshold `N` of the stopping time.
    pub threshold: f64,
    /// Sobolev index used in the energy.
    pub s: f64,
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::param("monitor.threshold", "N must be > 0"));
        }
        if !self.s.is_finite() {
            return Err(Error::param("monitor.s", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub v_hs2: f64,
    pub tau_hs2: f64,
    pub gradv_hs2: f64,
    /// Left-endpoint quadrature of `int_0^t ||grad v||^2_{H^s}`.
    pub cum_diss: f64,
    pub e_n: f64,
    pub sym_defect: f64,
}

impl EnergyRecord {
    pub fn is_finite(&self) -> bool {
        [self.t, self.v_hs2, self.tau_hs2, self.gradv_hs2, self.cum_diss, self.e_n, self.sym_defect]
            .iter()
            .all(|x| x.is_finite())
    }

    pub fn is_divergent(&self) -> bool {
        !self.is_finite() || self.e_n > DIVERGENCE_LEVEL
    }
}

/// `||grad v||^2_{H^s} = sum (1 + |xi|^2)^s |xi|^2 |v_k|^2`.
pub fn gradient_energy(v: &VectorField, s: f64) -> f64 {
    let g = v.grid();
    let w = g.bessel_weights(s);
    let q = g.xi_sq_all();
    v.components()
        .iter()
        .map(|c| c.iter().enumerate().map(|(i, z)| w[i] * q[i] * z.norm_sqr()).sum::<f64>())
        .sum()
}

/// Energy record of `state` given the dissipation accumulated so far.
pub fn energy(state: &FlowState, s: f64, params: &PhysicalParams, cum_diss: f64) -> EnergyRecord {
    let v_hs2 = hs_norm_sq(&state.v, s);
    let tau_hs2 = hs_norm_sq(&state.tau, s);
    EnergyRecord {
        t: state.t,
        v_hs2,
        tau_hs2,
        gradv_hs2: gradient_energy(&state.v, s),
        cum_diss,
        e_n: params.mu2 * v_hs2 + params.mu1 * tau_hs2 + 2.0 * params.mu2 * params.nu * cum_diss,
        sym_defect: state.tau.symmetry_defect(),
    }
}

/// Accumulates the dissipation integral along a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyMonitor {
    pub s: f64,
    pub cum_diss: f64,
    /// `||grad v||^2_{H^s}` at the last recorded time, or `None` before the first record.
    pub last_gradv: Option<f64>,
    pub last_t: f64,
}

impl EnergyMonitor {
    pub fn new(s: f64) -> Self {
        EnergyMonitor { s, cum_diss: 0.0, last_gradv: None, last_t: 0.0 }
    }

    pub fn record(&mut self, state: &FlowState, params: &PhysicalParams) -> EnergyRecord {
        if let Some(g) = self.last_gradv {
            self.cum_diss += (state.t - self.last_t) * g;
        }
        let rec = energy(state, self.s, params, self.cum_diss);
        self.last_gradv = Some(rec.gradv_hs2);
        self.last_t = state.t;
        rec
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    ThresholdN,
    Divergence,
    Horizon,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingEvent {
    pub kind: StopKind,
    pub t_stop: f64,
    pub e_n: f64,
}

impl StoppingEvent {
    /// Whether `rho_N > delta` for this path.
    pub fn survives(&self, delta: f64) -> bool {
        match self.kind {
            StopKind::Horizon => true,
            _ => self.t_stop > delta,
        }
    }
}

/// Classify one record: divergence takes precedence over a threshold crossing.
pub fn check_record(rec: &EnergyRecord, threshold: f64) -> Option<StoppingEvent> {
    if rec.is_divergent() {
        Some(StoppingEvent { kind: StopKind::Divergence, t_stop: rec.t, e_n: rec.e_n })
    } else if rec.e_n > threshold {
        Some(StoppingEvent { kind: StopKind::ThresholdN, t_stop: rec.t, e_n: rec.e_n })
    } else {
        None
    }
}

/// First record with `E_N > N` (or divergent); `None` means survival to the end of the series.
pub fn detect_stop(records: &[EnergyRecord], threshold: f64) -> Option<StoppingEvent> {
    records.iter().find_map(|r| check_record(r, threshold))
}

/// CSV with a provenance comment line, the mandatory header and one row per record.
pub fn write_csv(w: &mut impl Write, records: &[EnergyRecord], provenance: &str) -> Result<()> {
    for line in provenance.lines() {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t, r.v_hs2, r.tau_hs2, r.gradv_hs2, r.cum_diss, r.e_n, r.sym_defect
        )?;
    }
    Ok(())
}

pub fn read_csv(text: &str) -> Result<Vec<EnergyRecord>> {
    let bad = |r: String| Error::format("energy csv", r);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    lines
        .map(|l| {
            let v = l
                .split(',')
                .map(|x| x.parse::<f64>().map_err(|e| bad(format!("{x}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != 7 {
                return Err(bad(format!("expected 7 columns, got {}", v.len())));
            }
            Ok(EnergyRecord {
                t: v[0],
                v_hs2: v[1],
                tau_hs2: v[2],
                gradv_hs2: v[3],
                cum_diss: v[4],
                e_n: v[5],
                sym_defect: v[6],
            })
        })
        .collect()
}
