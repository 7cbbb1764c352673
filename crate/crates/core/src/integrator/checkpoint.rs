//! Versioned binary snapshot of a run: spectral state, step counter,
//! dissipation accumulator and RNG position.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::dynamics::FlowState;
use crate::error::{Error, Result};
use crate::monitor::EnergyMonitor;
use crate::noise::RngState;
use crate::spectral::{Field, SpectralGrid, TensorField, VectorField};

const MAGIC: &[u8; 8] = b"ONCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub dim: u32,
    pub modes: u64,
    pub box_length: f64,
    pub cutoff: f64,
    pub step: u64,
    pub t: f64,
    pub cum_diss: f64,
    pub last_gradv: Option<f64>,
    pub last_t: f64,
    pub tau_symmetric: bool,
    pub v: Vec<Vec<Complex64>>,
    pub tau: Vec<Vec<Complex64>>,
    pub rng: RngState,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("checkpoint", reason)
}

struct Reader<'a, R: Read>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => bad("truncated file"),
            _ => Error::Io(e),
        })?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn comps(&mut self, len: usize) -> Result<Vec<Vec<Complex64>>> {
        let n = self.u32()? as usize;
        (0..n)
            .map(|_| (0..len).map(|_| Ok(Complex64::new(self.f64()?, self.f64()?))).collect())
            .collect()
    }
}

fn write_comps(w: &mut impl Write, comps: &[Vec<Complex64>]) -> Result<()> {
    w.write_all(&(comps.len() as u32).to_le_bytes())?;
    for c in comps {
        for z in c {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

impl Checkpoint {
    pub(crate) fn capture(state: &FlowState, step: u64, monitor: &EnergyMonitor, rng: RngState) -> Self {
        let g = state.v.grid();
        Checkpoint {
            dim: g.dim() as u32,
            modes: g.modes() as u64,
            box_length: g.box_length(),
            cutoff: g.cutoff(),
            step,
            t: state.t,
            cum_diss: monitor.cum_diss,
            last_gradv: monitor.last_gradv,
            last_t: monitor.last_t,
            tau_symmetric: state.tau.is_symmetric(),
            v: state.v.components().to_vec(),
            tau: state.tau.components().to_vec(),
            rng,
        }
    }

    /// Rebuild the flow state on `grid`, which must match the recorded grid exactly.
    pub fn state(&self, grid: &Arc<SpectralGrid>) -> Result<FlowState> {
        let same = grid.dim() as u32 == self.dim
            && grid.modes() as u64 == self.modes
            && grid.box_length().to_bits() == self.box_length.to_bits()
            && grid.cutoff().to_bits() == self.cutoff.to_bits();
        if !same {
            return Err(Error::Replay("checkpoint was taken on a different grid".into()));
        }
        let v = VectorField::from_components(grid, self.v.clone())?;
        let tau = TensorField::from_components(grid, self.tau.clone(), self.tau_symmetric)?;
        Ok(FlowState { t: self.t, v, tau })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&self.dim.to_le_bytes())?;
        w.write_all(&self.modes.to_le_bytes())?;
        w.write_all(&self.box_length.to_le_bytes())?;
        w.write_all(&self.cutoff.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&self.t.to_le_bytes())?;
        w.write_all(&self.cum_diss.to_le_bytes())?;
        w.write_all(&[self.last_gradv.is_some() as u8])?;
        w.write_all(&self.last_gradv.unwrap_or(0.0).to_le_bytes())?;
        w.write_all(&self.last_t.to_le_bytes())?;
        w.write_all(&[self.tau_symmetric as u8])?;
        write_comps(w, &self.v)?;
        write_comps(w, &self.tau)?;
        w.write_all(&self.rng.seed)?;
        w.write_all(&self.rng.stream.to_le_bytes())?;
        w.write_all(&self.rng.word_pos.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut rd = Reader(r);
        if &rd.bytes::<8>()? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = rd.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dim = rd.u32()?;
        let modes = rd.u64()?;
        if !(dim == 2 || dim == 3) || modes == 0 || modes > 4096 {
            return Err(bad(format!("implausible grid {dim}D x {modes}")));
        }
        let len = (modes as usize).pow(dim);
        let box_length = rd.f64()?;
        let cutoff = rd.f64()?;
        let step = rd.u64()?;
        let t = rd.f64()?;
        let cum_diss = rd.f64()?;
        let has_g = rd.u8()? != 0;
        let g = rd.f64()?;
        let last_t = rd.f64()?;
        let tau_symmetric = rd.u8()? != 0;
        let v = rd.comps(len)?;
        let tau = rd.comps(len)?;
        let seed = rd.bytes::<32>()?;
        let stream = rd.u64()?;
        let word_pos = u128::from_le_bytes(rd.bytes()?);
        Ok(Checkpoint {
            dim,
            modes,
            box_length,
            cutoff,
            step,
            t,
            cum_diss,
            last_gradv: has_g.then_some(g),
            last_t,
            tau_symmetric,
            v,
            tau,
            rng: RngState { seed, stream, word_pos },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
