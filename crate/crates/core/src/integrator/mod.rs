//! Semi-implicit Euler–Maruyama time stepping with jump events, noise
//! recording, replay and checkpoint/resume.

mod checkpoint;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{evaluate_drifts, FlowState, PhysicalParams};
use crate::error::{Error, Result};
use crate::monitor::{check_record, EnergyMonitor, EnergyRecord, MonitorConfig, StopKind, StoppingEvent};
use crate::noise::{NoiseConfig, NoiseModel, NoisePath, NoiseSampler, StepNoise};
use crate::spectral::{leray_project, truncate_to_grid, Field, SpectralGrid};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    /// Requested horizon; the run covers `ceil(T / dt)` whole steps.
    pub horizon: f64,
    #[serde(default)]
    pub record_noise: bool,
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("stepper.dt", "must be finite and > 0"));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(Error::param("stepper.horizon", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        let r = self.horizon / self.dt;
        let k = r.round();
        if (r - k).abs() <= 1e-9 * r.max(1.0) {
            k as u64
        } else {
            r.ceil() as u64
        }
    }

    /// Horizon actually simulated, `steps * dt`.
    pub fn actual_horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }
}

/// A fully specified model on one grid. Immutable; shared by any number of runs.
#[derive(Debug)]
pub struct Simulation {
    grid: Arc<SpectralGrid>,
    params: PhysicalParams,
    noise: NoiseModel,
    stepper: StepperConfig,
    monitor: MonitorConfig,
    provenance: String,
}

/// Result of one run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<EnergyRecord>,
    pub event: StoppingEvent,
    pub final_state: FlowState,
    pub steps_taken: u64,
    pub noise_path: Option<NoisePath>,
}

impl Simulation {
    pub fn new(
        grid: &Arc<SpectralGrid>,
        params: PhysicalParams,
        noise: &NoiseConfig,
        stepper: StepperConfig,
        monitor: MonitorConfig,
    ) -> Result<Self> {
        params.validate()?;
        stepper.validate()?;
        monitor.validate()?;
        Ok(Simulation {
            grid: grid.clone(),
            noise: NoiseModel::new(noise, grid)?,
            params,
            stepper,
            monitor,
            provenance: String::new(),
        })
    }

    /// Text stored in recorded noise paths and output headers.
    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn stepper(&self) -> &StepperConfig {
        &self.stepper
    }

    pub fn monitor(&self) -> &MonitorConfig {
        &self.monitor
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Same model on another grid (typically another cutoff), sharing the noise basis.
    pub fn on_grid(&self, grid: &Arc<SpectralGrid>) -> Result<Self> {
        Ok(Simulation::new(grid, self.params.clone(), self.noise.config(), self.stepper.clone(), self.monitor.clone())?
            .with_provenance(self.provenance.clone()))
    }

    /// Project initial data into the truncated, divergence-free space.
    pub fn admissible(&self, state: FlowState) -> Result<FlowState> {
        if !state.v.grid().same_as(&self.grid) || !state.tau.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(FlowState {
            t: state.t,
            v: truncate_to_grid(&leray_project(&state.v)),
            tau: truncate_to_grid(&state.tau),
        })
    }

    pub fn sample_step(&self, sampler: &mut NoiseSampler, t: f64) -> StepNoise {
        sampler.sample_step(self.noise.config(), t, self.stepper.dt)
    }

    /// One step from `state` using the given draws.
    pub fn step(&self, state: &FlowState, draws: &StepNoise) -> FlowState {
        let dt = self.stepper.dt;
        let p = &self.params;
        let cfg = self.noise.config();
        let (vd, sd) = evaluate_drifts(state, p, &self.noise);

        let mut v = state.v.clone();
        v.add_scaled(dt, &vd.explicit);
        if cfg.jumps.gamma_bar() != 0.0 {
            v.add_scaled(-dt, &truncate_to_grid(&self.noise.compensator(&state.v)));
        }
        if cfg.sigma.c0 != 0.0 || cfg.sigma.c1 != 0.0 {
            v.add_scaled(1.0, &self.noise.apply_sigma(&state.v, &draws.dw1));
        }
        // Each jump sees the left limit, i.e. the state after all earlier jumps.
        for j in &draws.jumps {
            let inc = truncate_to_grid(&self.noise.jump_increment(&v, j.z));
            v.add_scaled(1.0, &inc);
        }
        let nu_dt = p.nu * dt;
        let g = &self.grid;
        v.apply_multiplier(|i| 1.0 / (1.0 + nu_dt * g.xi_sq(i)));
        let v = truncate_to_grid(&leray_project(&v));

        let mut tau = state.tau.clone();
        tau.add_scaled(dt, &sd);
        if draws.dw2 != 0.0 {
            tau.add_scaled(draws.dw2, &self.noise.s_operator(&state.tau));
        }
        let tau = truncate_to_grid(&tau);
        FlowState { t: state.t + dt, v, tau }
    }

    pub fn start(&self, initial: FlowState, sampler: NoiseSampler) -> Result<Run<'_>> {
        Run::new(self, self.admissible(initial)?, Source::Live(sampler), 0)
    }

    pub fn simulate(&self, initial: FlowState, sampler: NoiseSampler) -> Result<Trajectory> {
        let mut run = self.start(initial, sampler)?;
        run.run_to_end();
        Ok(run.finish())
    }

    /// Drive the model with a recorded noise path instead of fresh draws.
    pub fn simulate_replay(&self, initial: FlowState, path: &NoisePath) -> Result<Trajectory> {
        self.check_replay(path)?;
        let mut run = Run::new(self, self.admissible(initial)?, Source::Replay(path), 0)?;
        run.run_to_end();
        Ok(run.finish())
    }

    pub fn check_replay(&self, path: &NoisePath) -> Result<()> {
        if path.dt.to_bits() != self.stepper.dt.to_bits() {
            return Err(Error::Replay(format!("path dt {} differs from stepper dt {}", path.dt, self.stepper.dt)));
        }
        if path.basis_count != self.noise.config().wiener.basis_count || path.fingerprint != self.noise.fingerprint() {
            return Err(Error::Replay("noise basis differs from the recording".into()));
        }
        if (path.len() as u64) < self.stepper.steps() {
            return Err(Error::Replay(format!(
                "path has {} steps, run needs {}",
                path.len(),
                self.stepper.steps()
            )));
        }
        Ok(())
    }

    /// Continue a run from a checkpoint taken on this model.
    pub fn resume(&self, ckpt: &Checkpoint) -> Result<Run<'_>> {
        let state = ckpt.state(&self.grid)?;
        let mut run = Run::new(self, state, Source::Live(NoiseSampler::from_state(&ckpt.rng)), ckpt.step)?;
        run.monitor = EnergyMonitor {
            s: self.monitor.s,
            cum_diss: ckpt.cum_diss,
            last_gradv: ckpt.last_gradv,
            last_t: ckpt.last_t,
        };
        run.records.clear();
        run.event = None;
        Ok(run)
    }
}

enum Source<'p> {
    Live(NoiseSampler),
    Replay(&'p NoisePath),
}

/// A run in progress: a sequential state machine over steps.
pub struct Run<'s> {
    sim: &'s Simulation,
    state: FlowState,
    step: u64,
    total: u64,
    monitor: EnergyMonitor,
    source: Source<'s>,
    records: Vec<EnergyRecord>,
    recorded: Option<NoisePath>,
    event: Option<StoppingEvent>,
}

impl<'s> Run<'s> {
    fn new(sim: &'s Simulation, state: FlowState, source: Source<'s>, step: u64) -> Result<Self> {
        let recorded = sim.stepper.record_noise.then(|| {
            NoisePath::new(
                sim.stepper.dt,
                sim.noise.config().wiener.basis_count,
                sim.noise.fingerprint(),
                sim.provenance.clone(),
            )
        });
        let mut run = Run {
            sim,
            state,
            step,
            total: sim.stepper.steps(),
            monitor: EnergyMonitor::new(sim.monitor.s),
            source,
            records: Vec::new(),
            recorded,
            event: None,
        };
        run.observe();
        Ok(run)
    }

    fn observe(&mut self) {
        let rec = self.monitor.record(&self.state, &self.sim.params);
        self.event = check_record(&rec, self.sim.monitor.threshold);
        self.records.push(rec);
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn records(&self) -> &[EnergyRecord] {
        &self.records
    }

    pub fn is_done(&self) -> bool {
        self.event.is_some() || self.step >= self.total
    }

    /// Take one step. Returns false once the run has stopped or reached the horizon.
    pub fn advance(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let t = self.state.t;
        let draws = match &mut self.source {
            Source::Live(s) => self.sim.sample_step(s, t),
            Source::Replay(p) => p.steps[self.step as usize].clone(),
        };
        let mut next = self.sim.step(&self.state, &draws);
        next.t = (self.step + 1) as f64 * self.sim.stepper.dt;
        self.state = next;
        self.step += 1;
        if let Some(p) = &mut self.recorded {
            p.push(draws);
        }
        self.observe();
        !self.is_done()
    }

    pub fn run_to_end(&mut self) {
        while self.advance() {}
    }

    /// Snapshot for resuming later. Only runs with live sampling can be checkpointed.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let Source::Live(sampler) = &self.source else {
            return Err(Error::Config("replay runs cannot be checkpointed".into()));
        };
        Ok(Checkpoint::capture(
            &self.state,
            self.step,
            &self.monitor,
            sampler.state(),
        ))
    }

    pub fn finish(self) -> Trajectory {
        let last = *self.records.last().expect("initial record");
        let event = self.event.unwrap_or(StoppingEvent { kind: StopKind::Horizon, t_stop: last.t, e_n: last.e_n });
        Trajectory {
            records: self.records,
            event,
            final_state: self.state,
            steps_taken: self.step,
            noise_path: self.recorded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{JumpConfig, MarkCoefficient, SigmaInstance, StressNoiseConfig, WienerQConfig};
    use crate::spectral::random::{random_solenoidal, random_symmetric_tensor};
    use crate::spectral::{hs_norm, truncate, TensorField, VectorField};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn grid() -> Arc<SpectralGrid> {
        SpectralGrid::new(2, 32, 2.0 * PI, 8.0).unwrap()
    }

    fn noisy() -> NoiseConfig {
        NoiseConfig {
            wiener: WienerQConfig { lambda0: 0.5, basis_count: 6 },
            sigma: SigmaInstance { c0: 0.3, c1: 0.2 },
            stress: StressNoiseConfig::Identity { scale: 0.3 },
            jumps: JumpConfig {
                rate: 200.0,
                gamma0: 0.1,
                gamma_kind: MarkCoefficient::Linear,
                z_min: 0.0,
                z_max: 1.0,
                kappa_order: 2.0,
            },
        }
    }

    fn sim(noise: &NoiseConfig, steps: u64) -> Simulation {
        Simulation::new(
            &grid(),
            PhysicalParams { nu: 0.05, a: 0.5, b: 0.3, mu1: 0.5, mu2: 1.0, nonlinear: true },
            noise,
            StepperConfig { dt: 1e-3, horizon: steps as f64 * 1e-3, record_noise: true },
            MonitorConfig { threshold: 1e6, s: 1.0 },
        )
        .unwrap()
    }

    fn initial(g: &Arc<SpectralGrid>) -> FlowState {
        FlowState::new(
            truncate(&random_solenoidal(g, 3.0, 1), 8.0),
            truncate(&random_symmetric_tensor(g, 3.0, 2), 8.0).scaled(0.5),
        )
        .unwrap()
    }

    #[test]
    fn step_count_rounds_up() {
        let s = StepperConfig { dt: 0.3, horizon: 1.0, record_noise: false };
        assert_eq!(s.steps(), 4);
        assert!((s.actual_horizon() - 1.2).abs() < 1e-12);
        assert_eq!(StepperConfig { dt: 1e-3, horizon: 0.5, record_noise: false }.steps(), 500);
    }

    #[test]
    fn stokes_single_mode_closed_form() {
        let g = grid();
        let k = [3, -2, 0];
        let amp = [Complex64::new(2.0, 0.5), Complex64::new(3.0, 0.75)];
        let v = VectorField::single_mode(&g, k, &amp);
        let s = Simulation::new(
            &g,
            PhysicalParams { nu: 0.1, mu2: 0.0, ..Default::default() },
            &NoiseConfig::silent(),
            StepperConfig { dt: 1e-3, horizon: 0.2, record_noise: false },
            MonitorConfig { threshold: 1e9, s: 0.0 },
        )
        .unwrap();
        let tr = s.simulate(FlowState::new(v.clone(), TensorField::zeros(&g)).unwrap(), NoiseSampler::for_run(0, 0)).unwrap();
        let idx = g.index_of(k).unwrap();
        let factor = (1.0 + 0.1 * 1e-3 * g.xi_sq(idx)).powi(200);
        for a in 0..2 {
            let got = tr.final_state.v.component(a)[idx];
            let want = v.component(a)[idx] / factor;
            assert!((got - want).norm() <= 1e-12 * want.norm(), "{got} vs {want}");
        }
    }

    #[test]
    fn zero_stays_zero() {
        let mut cfg = noisy();
        cfg.sigma.c0 = 0.0;
        let s = sim(&cfg, 50);
        let tr = s.simulate(FlowState::zero(s.grid()), NoiseSampler::for_run(3, 0)).unwrap();
        assert_eq!(hs_norm(&tr.final_state.v, 0.0), 0.0);
        assert_eq!(hs_norm(&tr.final_state.tau, 0.0), 0.0);
    }

    #[test]
    fn zero_horizon_is_initial_diagnostics() {
        let s = Simulation::new(
            &grid(),
            PhysicalParams::default(),
            &noisy(),
            StepperConfig { dt: 1e-3, horizon: 0.0, record_noise: false },
            MonitorConfig { threshold: 1e6, s: 1.0 },
        )
        .unwrap();
        let init = s.admissible(initial(s.grid())).unwrap();
        let tr = s.simulate(init.clone(), NoiseSampler::for_run(1, 0)).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.records[0], crate::monitor::energy(&init, 1.0, s.params(), 0.0));
        assert_eq!(tr.event.kind, StopKind::Horizon);
    }

    #[test]
    fn post_step_invariants() {
        let s = sim(&noisy(), 20);
        let mut run = s.start(initial(s.grid()), NoiseSampler::for_run(5, 0)).unwrap();
        while run.advance() {
            let st = run.state();
            assert!(st.v.is_divergence_free(1e-12));
            assert!(crate::spectral::ops::supported_in_ball(&st.v, 8.0));
            assert!(crate::spectral::ops::supported_in_ball(&st.tau, 8.0));
            assert!(st.tau.is_symmetric());
        }
    }

    #[test]
    fn same_seed_bitwise_and_replay_matches() {
        let s = sim(&noisy(), 40);
        let a = s.simulate(initial(s.grid()), NoiseSampler::for_run(9, 2)).unwrap();
        let b = s.simulate(initial(s.grid()), NoiseSampler::for_run(9, 2)).unwrap();
        assert_eq!(a.records, b.records);
        let path = a.noise_path.clone().unwrap();
        assert!(path.steps.iter().any(|st| !st.jumps.is_empty()));
        let r = s.simulate_replay(initial(s.grid()), &path).unwrap();
        assert_eq!(a.records, r.records);
        assert_eq!(a.final_state.v.components(), r.final_state.v.components());
        assert_eq!(a.final_state.tau.components(), r.final_state.tau.components());
    }

    #[test]
    fn replay_rejects_mismatch() {
        let s = sim(&noisy(), 10);
        let path = s.simulate(initial(s.grid()), NoiseSampler::for_run(1, 0)).unwrap().noise_path.unwrap();
        let mut other = noisy();
        other.wiener.basis_count = 7;
        let s2 = sim(&other, 10);
        assert!(matches!(s2.simulate_replay(initial(s2.grid()), &path), Err(Error::Replay(_))));
        let mut p2 = path.clone();
        p2.dt = 2e-3;
        assert!(matches!(s.simulate_replay(initial(s.grid()), &p2), Err(Error::Replay(_))));
    }

    #[test]
    fn checkpoint_resume_is_seamless() {
        let s = sim(&noisy(), 30);
        let whole = s.simulate(initial(s.grid()), NoiseSampler::for_run(4, 1)).unwrap();
        let mut run = s.start(initial(s.grid()), NoiseSampler::for_run(4, 1)).unwrap();
        for _ in 0..13 {
            run.advance();
        }
        let mut bytes = Vec::new();
        run.checkpoint().unwrap().write_to(&mut bytes).unwrap();
        drop(run);
        let ck = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        let mut resumed = s.resume(&ck).unwrap();
        resumed.run_to_end();
        let tail = resumed.finish();
        assert_eq!(&whole.records[14..], &tail.records[..]);
        assert_eq!(whole.final_state.v.components(), tail.final_state.v.components());
    }

    #[test]
    fn viscous_solve_contracts() {
        let g = grid();
        let s = Simulation::new(
            &g,
            PhysicalParams { nu: 2.0, mu1: 0.0, nonlinear: false, ..Default::default() },
            &NoiseConfig::silent(),
            StepperConfig { dt: 0.1, horizon: 0.1, record_noise: false },
            MonitorConfig { threshold: 1e9, s: 0.0 },
        )
        .unwrap();
        let st = s.admissible(initial(&g)).unwrap();
        let next = s.step(&st, &StepNoise::zero(1));
        for a in 0..2 {
            for (x, y) in next.v.component(a).iter().zip(st.v.component(a)) {
                assert!(x.norm() <= y.norm());
            }
        }
    }

    #[test]
    fn blow_up_is_an_event() {
        let g = grid();
        let s = Simulation::new(
            &g,
            PhysicalParams { nu: 0.0, a: 0.0, mu1: 1.0, mu2: 0.0, nonlinear: false, ..Default::default() },
            &NoiseConfig { stress: StressNoiseConfig::Identity { scale: 40.0 }, ..NoiseConfig::silent() },
            StepperConfig { dt: 0.1, horizon: 100.0, record_noise: false },
            MonitorConfig { threshold: 1e30, s: 0.0 },
        )
        .unwrap();
        let st = FlowState::new(VectorField::zeros(&g), TensorField::identity(&g, 1.0)).unwrap();
        let tr = s.simulate(st, NoiseSampler::for_run(1, 0)).unwrap();
        assert_eq!(tr.event.kind, StopKind::Divergence);
    }
}
