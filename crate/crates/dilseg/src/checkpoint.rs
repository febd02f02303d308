//! The `DLCK` checkpoint format.
//!
//! ```text
//! "DLCK" | u32 version | u32 len + spec text
//! u32 count | count x (u16 name len, name, DLS1 container)      parameters and buffers
//! u32 count | count x (u16 name len, name, DLS1 container)      Adam moments "m:<param>", "v:<param>"
//! u64 step | f64 lr, beta1, beta2, epsilon | u32 batch size
//! f64 schedule lr | u32 patience | f64 factor | u8 has best | f64 best | u32 stagnant epochs
//! u32 epoch | f32 best DSC (NaN if none) | u32 len + RNG state
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use dilseg_core::arch::{NetSpec, ParamRole};
use dilseg_core::optim::{rng_from_state, rng_state, Adam, AdamConfig, Moments, PlateauSchedule};
use dilseg_core::train::Trainer;
use dilseg_core::{Shape, Tensor};

use crate::container::{read_exact, Container, Payload};
use crate::error::{IoError, IoResult};

pub const MAGIC: &[u8; 4] = b"DLCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetSpec,
    /// Every parameter and buffer, in model order.
    pub params: Vec<(String, Tensor<f32>)>,
    /// First and second Adam moments of each trainable parameter, in model
    /// order. Empty before the first optimizer step.
    pub moments: Vec<(String, Vec<f32>, Vec<f32>)>,
    pub adam: AdamConfig,
    pub step: u64,
    pub batch_size: u32,
    pub schedule: PlateauSchedule,
    pub epoch: u32,
    pub rng: Vec<u8>,
}

impl Checkpoint {
    pub fn from_trainer(t: &mut Trainer<f32>) -> Self {
        let spec = t.model.spec().clone();
        let named = t.model.params_mut();
        let mut params = Vec::with_capacity(named.len());
        let mut trainable = Vec::new();
        for p in named {
            let mut tensor = p.tensor.clone();
            tensor.drop_grad();
            if p.role == ParamRole::Trainable {
                trainable.push(p.name.clone());
            }
            params.push((p.name, tensor));
        }
        let moments = if t.adam.moments.is_empty() {
            Vec::new()
        } else {
            trainable.into_iter().zip(&t.adam.moments).map(|(n, m)| (n, m.m.clone(), m.v.clone())).collect()
        };
        Checkpoint {
            spec,
            params,
            moments,
            adam: t.adam.config,
            step: t.adam.t,
            batch_size: t.batch_size as u32,
            schedule: t.schedule.clone(),
            epoch: t.epoch,
            rng: rng_state(&t.rng).to_vec(),
        }
    }

    /// Best validation DSC so far (the schedule tracks the same maximum).
    pub fn best_dsc(&self) -> Option<f64> {
        self.schedule.best
    }

    /// Rebuilds a trainer whose next epoch continues exactly where the
    /// saved one stopped.
    pub fn into_trainer(self) -> IoResult<Trainer<f32>> {
        let cfg = dilseg_core::train::TrainConfig {
            batch_size: self.batch_size as usize,
            lr: self.adam.lr,
            seed: 0,
            patience: self.schedule.patience,
            factor: self.schedule.factor,
        };
        let mut t = Trainer::<f32>::new(&self.spec, &cfg)?;
        let mut saved: HashMap<String, Tensor<f32>> = self.params.into_iter().collect();
        let mut trainable = Vec::new();
        for p in t.model.params_mut() {
            let src = saved
                .remove(&p.name)
                .ok_or_else(|| IoError::Format(format!("checkpoint lacks parameter {}", p.name)))?;
            if src.shape() != p.tensor.shape() {
                return Err(IoError::Format(format!(
                    "parameter {} has shape {} in the checkpoint, model expects {}",
                    p.name,
                    src.shape(),
                    p.tensor.shape()
                )));
            }
            *p.tensor = src;
            if p.role == ParamRole::Trainable {
                trainable.push((p.name, p.tensor.len()));
            }
        }
        if let Some(extra) = saved.keys().next() {
            return Err(IoError::Format(format!("checkpoint has unknown parameter {}", extra)));
        }
        let mut adam = Adam::new(self.adam);
        adam.t = self.step;
        if !self.moments.is_empty() {
            if self.moments.len() != trainable.len() {
                return Err(IoError::Format(format!(
                    "{} moment records for {} trainable tensors",
                    self.moments.len(),
                    trainable.len()
                )));
            }
            for ((name, len), (mname, m, v)) in trainable.iter().zip(self.moments) {
                if *name != mname || m.len() != *len || v.len() != *len {
                    return Err(IoError::Format(format!("moment record {} does not match parameter {}", mname, name)));
                }
                adam.moments.push(Moments { m, v });
            }
        }
        t.adam = adam;
        t.schedule = self.schedule;
        t.epoch = self.epoch;
        t.best_dsc = t.schedule.best;
        t.rng = rng_from_state(&self.rng)?;
        Ok(t)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> IoResult<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let spec = self.spec.to_text();
        w.write_all(&(spec.len() as u32).to_le_bytes())?;
        w.write_all(spec.as_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in &self.params {
            write_record(w, name, &Container::from_tensor(t))?;
        }
        w.write_all(&(2 * self.moments.len() as u32).to_le_bytes())?;
        for (name, m, v) in &self.moments {
            write_record(w, &format!("m:{}", name), &Container::new(vec![m.len()], Payload::F32(m.clone()))?)?;
            write_record(w, &format!("v:{}", name), &Container::new(vec![v.len()], Payload::F32(v.clone()))?)?;
        }
        w.write_all(&self.step.to_le_bytes())?;
        for x in [self.adam.lr, self.adam.beta1, self.adam.beta2, self.adam.epsilon] {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&self.batch_size.to_le_bytes())?;
        let s = &self.schedule;
        w.write_all(&s.lr.to_le_bytes())?;
        w.write_all(&s.patience.to_le_bytes())?;
        w.write_all(&s.factor.to_le_bytes())?;
        w.write_all(&[s.best.is_some() as u8])?;
        w.write_all(&s.best.unwrap_or(0.0).to_le_bytes())?;
        w.write_all(&s.epochs_since_improvement.to_le_bytes())?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&(self.best_dsc().map_or(f32::NAN, |b| b as f32)).to_le_bytes())?;
        w.write_all(&(self.rng.len() as u32).to_le_bytes())?;
        w.write_all(&self.rng)?;
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> IoResult<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(IoError::Format(format!("bad checkpoint magic {:?}", magic)));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(IoError::Format(format!("unsupported checkpoint version {}", version)));
        }
        let spec_len = read_u32(r)? as usize;
        let mut spec = vec![0u8; spec_len];
        read_exact(r, &mut spec, "spec")?;
        let spec = String::from_utf8(spec).map_err(|_| IoError::Format("spec text is not UTF-8".into()))?;
        let spec = NetSpec::parse(&spec)?;
        let n = read_u32(r)?;
        let mut params = Vec::new();
        for _ in 0..n {
            let (name, c) = read_record(r)?;
            params.push((name, c.into_tensor()?));
        }
        let n = read_u32(r)?;
        if n % 2 != 0 {
            return Err(IoError::Format("odd number of optimizer records".into()));
        }
        let mut moments = Vec::new();
        for _ in 0..n / 2 {
            let (mn, m) = read_record(r)?;
            let (vn, v) = read_record(r)?;
            let name = mn
                .strip_prefix("m:")
                .filter(|p| vn.strip_prefix("v:") == Some(*p))
                .ok_or_else(|| IoError::Format(format!("unpaired optimizer records {} / {}", mn, vn)))?
                .to_string();
            moments.push((name, f32_payload(m)?, f32_payload(v)?));
        }
        let step = read_u64(r)?;
        let adam = AdamConfig { lr: read_f64(r)?, beta1: read_f64(r)?, beta2: read_f64(r)?, epsilon: read_f64(r)? };
        let batch_size = read_u32(r)?;
        let mut schedule = PlateauSchedule::new(read_f64(r)?);
        schedule.patience = read_u32(r)?;
        schedule.factor = read_f64(r)?;
        let mut flag = [0u8; 1];
        read_exact(r, &mut flag, "best flag")?;
        let best = read_f64(r)?;
        schedule.best = (flag[0] != 0).then_some(best);
        schedule.epochs_since_improvement = read_u32(r)?;
        let epoch = read_u32(r)?;
        let mut best32 = [0u8; 4];
        read_exact(r, &mut best32, "best DSC")?;
        let rng_len = read_u32(r)? as usize;
        let mut rng = vec![0u8; rng_len];
        read_exact(r, &mut rng, "rng state")?;
        Ok(Checkpoint { spec, params, moments, adam, step, batch_size, schedule, epoch, rng })
    }

    pub fn decode(bytes: &[u8]) -> IoResult<Self> {
        let mut cursor = bytes;
        let c = Checkpoint::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(IoError::Format(format!("{} trailing bytes after checkpoint", cursor.len())));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        let bytes = fs::read(path).map_err(|e| IoError::Path(path.display().to_string(), e))?;
        Checkpoint::decode(&bytes).map_err(|e| e.context(path))
    }

    /// Writes through a temporary file so an interrupted save never
    /// clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> IoResult<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.encode()).map_err(|e| IoError::Path(tmp.display().to_string(), e))?;
        fs::rename(&tmp, path).map_err(|e| IoError::Path(path.display().to_string(), e))
    }
}

fn f32_payload(c: Container) -> IoResult<Vec<f32>> {
    match c.payload {
        Payload::F32(v) => Ok(v),
        Payload::U8(_) => Err(IoError::Format("optimizer record is not f32".into())),
    }
}

fn write_record<W: Write>(w: &mut W, name: &str, c: &Container) -> IoResult<()> {
    let len = u16::try_from(name.len()).map_err(|_| IoError::Format(format!("record name too long: {}", name)))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    c.write_to(w)
}

fn read_record<R: Read>(r: &mut R) -> IoResult<(String, Container)> {
    let mut len = [0u8; 2];
    read_exact(r, &mut len, "record name length")?;
    let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact(r, &mut name, "record name")?;
    let name = String::from_utf8(name).map_err(|_| IoError::Format("record name is not UTF-8".into()))?;
    Ok((name, Container::read_from(r)?))
}

fn read_u32<R: Read>(r: &mut R) -> IoResult<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, "u32")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> IoResult<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, "u64")?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> IoResult<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Shape-checked copy of a checkpoint's parameters as a flat checksum
/// input: names and raw bits in model order.
pub fn parameter_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, t) in &ck.params {
        out.extend_from_slice(name.as_bytes());
        let s: Shape = t.shape();
        for d in s.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    out
}
