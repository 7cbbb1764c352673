//! TOML run configuration: parsing, validation, hashing and construction of
//! the simulation objects it describes.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{FlowState, PhysicalParams};
use crate::error::{Error, Result};
use crate::integrator::{Simulation, StepperConfig};
use crate::monitor::MonitorConfig;
use crate::noise::{
    derive_seed, JumpConfig, MarkCoefficient, NoiseConfig, SigmaInstance, StressNoiseConfig, WienerQConfig,
};
use crate::spectral::random::{random_solenoidal, random_symmetric_tensor};
use crate::spectral::{modes_for_cutoff, SpectralGrid, DEFAULT_DEALIAS_FRACTION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub modes: usize,
    #[serde(default = "two_pi")]
    pub box_length: f64,
    pub cutoff: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

fn default_dealias() -> f64 {
    DEFAULT_DEALIAS_FRACTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub nu: f64,
    pub a: f64,
    pub b: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Sobolev index of the state space; used for the noise growth constants.
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HKind {
    Identity,
    Bump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub lambda0: f64,
    pub basis_count: usize,
    pub c0: f64,
    pub c1: f64,
    #[serde(default = "identity_kind")]
    pub h: HKind,
    pub h_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_matrix: Option<Vec<f64>>,
    #[serde(default)]
    pub jump_rate: f64,
    #[serde(default)]
    pub gamma0: f64,
    #[serde(default = "constant_mark")]
    pub gamma_kind: MarkCoefficient,
    #[serde(default)]
    pub z_min: f64,
    #[serde(default = "one")]
    pub z_max: f64,
    #[serde(default)]
    pub kappa_order: f64,
}

fn identity_kind() -> HKind {
    HKind::Identity
}

fn constant_mark() -> MarkCoefficient {
    MarkCoefficient::Constant
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Spectral decay of the velocity, `|v_k| ~ (1 + |xi|^2)^{-alpha/2}`.
    pub v_alpha: f64,
    pub v_amplitude: f64,
    pub tau_alpha: f64,
    pub tau_amplitude: f64,
    /// Draw fresh initial data for every ensemble member.
    #[serde(default)]
    pub randomize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    pub master: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub params: ParamsSection,
    pub noise: NoiseSection,
    pub stepper: StepperConfig,
    pub monitor: MonitorConfig,
    pub initial: InitialSection,
    pub seeds: SeedsSection,
}

const INITIAL_STREAM: u64 = 1 << 40;

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(text, e.span())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Header lines identifying this configuration in output files.
    pub fn provenance(&self) -> String {
        format!("config_hash={}\nmaster_seed={}", self.hash(), self.seeds.master)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.dim == 2 || g.dim == 3) {
            return Err(Error::param("grid.dim", format!("must be 2 or 3, got {}", g.dim)));
        }
        self.grid()?;
        self.physical_params().validate()?;
        if !self.params.s.is_finite() {
            return Err(Error::param("params.s", "must be finite"));
        }
        self.noise_config().validate(g.dim)?;
        self.stepper.validate()?;
        self.monitor.validate()?;
        let i = &self.initial;
        for (name, x) in [("initial.v_alpha", i.v_alpha), ("initial.tau_alpha", i.tau_alpha)] {
            if !(x.is_finite() && x > g.dim as f64 / 2.0) {
                return Err(Error::param(name, format!("must exceed dim/2 = {}", g.dim as f64 / 2.0)));
            }
        }
        for (name, x) in [("initial.v_amplitude", i.v_amplitude), ("initial.tau_amplitude", i.tau_amplitude)] {
            if !x.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<SpectralGrid>> {
        let g = &self.grid;
        SpectralGrid::with_dealias(g.dim, g.modes, g.box_length, g.cutoff, g.dealias_fraction)
    }

    /// Smallest admissible grid for cutoff `n` with this box and dealias fraction.
    pub fn grid_for_cutoff(&self, n: f64) -> Result<Arc<SpectralGrid>> {
        let g = &self.grid;
        let m = modes_for_cutoff(n, g.box_length, g.dealias_fraction);
        SpectralGrid::with_dealias(g.dim, m, g.box_length, n, g.dealias_fraction)
    }

    pub fn physical_params(&self) -> PhysicalParams {
        let p = &self.params;
        PhysicalParams { nu: p.nu, a: p.a, b: p.b, mu1: p.mu1, mu2: p.mu2, nonlinear: p.nonlinear }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        let n = &self.noise;
        let stress = match n.h {
            HKind::Identity => StressNoiseConfig::Identity { scale: n.h_scale },
            HKind::Bump => StressNoiseConfig::Bump {
                scale: n.h_scale,
                width: n.h_width.unwrap_or(f64::NAN),
                matrix: n.h_matrix.clone().unwrap_or_default(),
            },
        };
        NoiseConfig {
            wiener: WienerQConfig { lambda0: n.lambda0, basis_count: n.basis_count },
            sigma: SigmaInstance { c0: n.c0, c1: n.c1 },
            stress,
            jumps: JumpConfig {
                rate: n.jump_rate,
                gamma0: n.gamma0,
                gamma_kind: n.gamma_kind,
                z_min: n.z_min,
                z_max: n.z_max,
                kappa_order: n.kappa_order,
            },
        }
    }

    pub fn simulation(&self) -> Result<Simulation> {
        self.simulation_on(&self.grid()?)
    }

    pub fn simulation_on(&self, grid: &Arc<SpectralGrid>) -> Result<Simulation> {
        Ok(Simulation::new(
            grid,
            self.physical_params(),
            &self.noise_config(),
            self.stepper.clone(),
            self.monitor.clone(),
        )?
        .with_provenance(self.provenance()))
    }

    /// Initial data for ensemble member `run` on `grid`, before truncation.
    ///
    /// Coefficients depend only on the seed and the wavenumber, so every grid
    /// sees the same data on the modes it resolves.
    pub fn initial_state(&self, grid: &Arc<SpectralGrid>, run: u64) -> FlowState {
        let i = &self.initial;
        let stream = if i.randomize { INITIAL_STREAM + run } else { INITIAL_STREAM };
        let seed = derive_seed(self.seeds.master, stream);
        let v = random_solenoidal(grid, i.v_alpha, seed);
        let tau = random_symmetric_tensor(grid, i.tau_alpha, seed ^ 0x5eed);
        use crate::spectral::Field;
        FlowState::new(v.scaled(i.v_amplitude), tau.scaled(i.tau_amplitude)).expect("same grid")
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

/// A complete, valid example configuration.
pub const EXAMPLE_CONFIG: &str = r#"[grid]
dim = 2
modes = 64
cutoff = 16.0

[params]
nu = 0.05
a = 1.0
b = 0.0
mu1 = 1.0
mu2 = 1.0
s = 1.0

[noise]
lambda0 = 0.1
basis_count = 8
c0 = 0.5
c1 = 0.2
h = "identity"
h_scale = 0.2
jump_rate = 5.0
gamma0 = 0.1
gamma_kind = "constant"
z_min = 0.0
z_max = 1.0
kappa_order = 2.0

[stepper]
dt = 0.001
horizon = 0.1
record_noise = true

[monitor]
threshold = 100.0
s = 1.0

[initial]
v_alpha = 4.0
v_amplitude = 0.5
tau_alpha = 4.0
tau_amplitude = 0.2

[seeds]
master = 20240611
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_parses_and_round_trips() {
        let a = RunConfig::from_toml_str(EXAMPLE_CONFIG).unwrap();
        let b = RunConfig::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn b_out_of_range_is_config_error() {
        let text = EXAMPLE_CONFIG.replace("b = 0.0", "b = 1.5");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(err.is_config());
        let msg = err.to_string();
        assert!(msg.contains("params.b") && msg.contains("[-1, 1]"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = EXAMPLE_CONFIG.replace("mu2 = 1.0", "mu2 = 1.0\nmu3 = 2.0");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("mu3"), "{err}");
    }

    #[test]
    fn grid_errors_surface() {
        let text = EXAMPLE_CONFIG.replace("cutoff = 16.0", "cutoff = 40.0");
        assert!(RunConfig::from_toml_str(&text).unwrap_err().to_string().contains("dealias limit"));
        let text = EXAMPLE_CONFIG.replace("modes = 64", "modes = 63");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn initial_data_shared_across_grids() {
        let cfg = RunConfig::from_toml_str(EXAMPLE_CONFIG).unwrap();
        let g1 = cfg.grid_for_cutoff(8.0).unwrap();
        let g2 = cfg.grid_for_cutoff(16.0).unwrap();
        let a = cfg.initial_state(&g1, 0);
        let b = cfg.initial_state(&g2, 0);
        let idx = g1.index_of([2, -3, 0]).unwrap();
        let jdx = g2.index_of([2, -3, 0]).unwrap();
        assert_eq!(a.v.component(1)[idx], b.v.component(1)[jdx]);
        assert_eq!(a.tau.component(0, 1)[idx], b.tau.component(0, 1)[jdx]);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::from_toml_str(EXAMPLE_CONFIG).unwrap();
        let mut b = a.clone();
        b.seeds.master += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
