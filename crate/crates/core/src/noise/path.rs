//! Binary record of every noise draw of a run, for replay at other cutoffs.
//!
//! Layout (little endian): magic `ONPATH\0\0`, `u32` version, `f64` dt,
//! `u64` basis count, `u64` basis fingerprint, `u32` provenance length and
//! UTF-8 bytes, `u64` step count, then per step: `u64` index, `J` x `f64`
//! W1 increments, `f64` W2 increment, `u32` jump count and `(f64 t, f64 z)`
//! pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{JumpEvent, StepNoise};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ONPATH\0\0";
pub const NOISE_PATH_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub basis_count: usize,
    pub fingerprint: u64,
    /// Free-form provenance, typically the config hash and master seed.
    pub provenance: String,
    pub steps: Vec<StepNoise>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("noise path", reason)
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => bad("truncated file"),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact(r)?))
}

impl NoisePath {
    pub fn new(dt: f64, basis_count: usize, fingerprint: u64, provenance: impl Into<String>) -> Self {
        NoisePath {
            dt,
            basis_count,
            fingerprint,
            provenance: provenance.into(),
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, step: StepNoise) {
        debug_assert_eq!(step.dw1.len(), self.basis_count);
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Cumulative `W2` at the end of each step.
    pub fn w2_path(&self) -> Vec<f64> {
        self.steps
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.dw2;
                Some(*acc)
            })
            .collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&NOISE_PATH_VERSION.to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.basis_count as u64).to_le_bytes())?;
        w.write_all(&self.fingerprint.to_le_bytes())?;
        let prov = self.provenance.as_bytes();
        w.write_all(&(prov.len() as u32).to_le_bytes())?;
        w.write_all(prov)?;
        w.write_all(&(self.steps.len() as u64).to_le_bytes())?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_all(&(i as u64).to_le_bytes())?;
            for x in &s.dw1 {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&s.dw2.to_le_bytes())?;
            w.write_all(&(s.jumps.len() as u32).to_le_bytes())?;
            for j in &s.jumps {
                w.write_all(&j.t.to_le_bytes())?;
                w.write_all(&j.z.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if &read_exact::<8>(r)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(r)?;
        if version != NOISE_PATH_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dt = read_f64(r)?;
        let basis_count = read_u64(r)? as usize;
        let fingerprint = read_u64(r)?;
        let plen = read_u32(r)? as usize;
        let mut prov = vec![0u8; plen];
        r.read_exact(&mut prov).map_err(|_| bad("truncated provenance"))?;
        let provenance = String::from_utf8(prov).map_err(|_| bad("provenance is not UTF-8"))?;
        let nsteps = read_u64(r)? as usize;
        let mut steps = Vec::with_capacity(nsteps.min(1 << 20));
        for i in 0..nsteps {
            let idx = read_u64(r)?;
            if idx != i as u64 {
                return Err(bad(format!("step index {idx} out of sequence (expected {i})")));
            }
            let dw1 = (0..basis_count).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            let dw2 = read_f64(r)?;
            let nj = read_u32(r)? as usize;
            let jumps = (0..nj)
                .map(|_| Ok(JumpEvent { t: read_f64(r)?, z: read_f64(r)? }))
                .collect::<Result<Vec<_>>>()?;
            steps.push(StepNoise { dw1, dw2, jumps });
        }
        Ok(NoisePath { dt, basis_count, fingerprint, provenance, steps })
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
