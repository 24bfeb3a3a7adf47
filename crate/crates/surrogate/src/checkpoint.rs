//! GCSW checkpoint format.
//!
//! Header: magic `GCSW`, u32 version = 1, then u32 fields n_layers, kx, ky,
//! kt, width, in_channels, out_channels, activation (0 = gelu, 1 = relu),
//! nx, ny, nt. Next the normalization statistics as f32: input means, input
//! stds, target means, target stds. Then every weight tensor in declaration
//! order, f32 little-endian, complex entries interleaved (re, im).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use gcs_core::CoreError;
use num_complex::Complex64;

use crate::encode::Normalization;
use crate::model::{Activation, FnoConfig, SurrogateWeights, TensorMut, TensorRef};
use crate::predict::SurrogateModel;
use crate::SurrogateError;

pub const GCSW_MAGIC: [u8; 4] = *b"GCSW";
pub const GCSW_VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, model: &SurrogateModel) -> Result<(), SurrogateError> {
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |bytes: &[u8]| -> Result<(), SurrogateError> {
        w.write_all(bytes).map_err(|e| CoreError::io(path, e))?;
        Ok(())
    };
    emit(&GCSW_MAGIC)?;
    let cfg = &model.weights.config;
    let act = match cfg.activation {
        Activation::Gelu => 0u32,
        Activation::Relu => 1u32,
    };
    for v in [
        GCSW_VERSION,
        cfg.n_layers as u32,
        cfg.modes.0 as u32,
        cfg.modes.1 as u32,
        cfg.modes.2 as u32,
        cfg.width as u32,
        cfg.in_channels as u32,
        cfg.out_channels as u32,
        act,
        model.dims.0 as u32,
        model.dims.1 as u32,
        model.dims.2 as u32,
    ] {
        emit(&v.to_le_bytes())?;
    }
    for stats in [
        &model.norm.input_mean,
        &model.norm.input_std,
        &model.norm.target_mean,
        &model.norm.target_std,
    ] {
        for v in stats.iter() {
            emit(&(*v as f32).to_le_bytes())?;
        }
    }
    for t in model.weights.tensors() {
        match t {
            TensorRef::Real(xs) => {
                for v in xs {
                    emit(&(*v as f32).to_le_bytes())?;
                }
            }
            TensorRef::Complex(xs) => {
                for v in xs {
                    emit(&(v.re as f32).to_le_bytes())?;
                    emit(&(v.im as f32).to_le_bytes())?;
                }
            }
        }
    }
    w.flush().map_err(|e| SurrogateError::Core(CoreError::io(path, e)))
}

pub fn read_checkpoint(path: &Path) -> Result<SurrogateModel, SurrogateError> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| CoreError::io(path, e))?;
    if magic != GCSW_MAGIC {
        return Err(CoreError::format(path, "bad magic").into());
    }
    let next_u32 = |r: &mut BufReader<File>| -> Result<u32, SurrogateError> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|e| CoreError::io(path, e))?;
        Ok(u32::from_le_bytes(b))
    };
    let version = next_u32(&mut r)?;
    if version != GCSW_VERSION {
        return Err(CoreError::format(path, format!("unsupported version {version}")).into());
    }
    let n_layers = next_u32(&mut r)? as usize;
    let kx = next_u32(&mut r)? as usize;
    let ky = next_u32(&mut r)? as usize;
    let kt = next_u32(&mut r)? as usize;
    let width = next_u32(&mut r)? as usize;
    let in_channels = next_u32(&mut r)? as usize;
    let out_channels = next_u32(&mut r)? as usize;
    let activation = match next_u32(&mut r)? {
        0 => Activation::Gelu,
        1 => Activation::Relu,
        other => return Err(CoreError::format(path, format!("unknown activation {other}")).into()),
    };
    let nx = next_u32(&mut r)? as usize;
    let ny = next_u32(&mut r)? as usize;
    let nt = next_u32(&mut r)? as usize;

    let cfg = FnoConfig { n_layers, modes: (kx, ky, kt), width, in_channels, out_channels, activation };
    cfg.validate()?;
    cfg.spectral_dims(nx, ny, nt).validate()?;

    let next_f32 = |r: &mut BufReader<File>| -> Result<f64, SurrogateError> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|e| CoreError::io(path, e))?;
        Ok(f32::from_le_bytes(b) as f64)
    };
    let read_vec = |r: &mut BufReader<File>, n: usize| -> Result<Vec<f64>, SurrogateError> {
        (0..n).map(|_| next_f32(r)).collect()
    };
    let input_mean = read_vec(&mut r, in_channels)?;
    let input_std = read_vec(&mut r, in_channels)?;
    let target_mean = read_vec(&mut r, out_channels)?;
    let target_std = read_vec(&mut r, out_channels)?;
    let norm = Normalization { input_mean, input_std, target_mean, target_std };

    let mut weights = SurrogateWeights::zeros_like(cfg)?;
    for t in weights.tensors_mut() {
        match t {
            TensorMut::Real(xs) => {
                for v in xs.iter_mut() {
                    let mut b = [0u8; 4];
                    r.read_exact(&mut b).map_err(|e| CoreError::io(path, e))?;
                    *v = f32::from_le_bytes(b) as f64;
                }
            }
            TensorMut::Complex(xs) => {
                for v in xs.iter_mut() {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b).map_err(|e| CoreError::io(path, e))?;
                    let re = f32::from_le_bytes(b[0..4].try_into().unwrap()) as f64;
                    let im = f32::from_le_bytes(b[4..8].try_into().unwrap()) as f64;
                    *v = Complex64::new(re, im);
                }
            }
        }
    }
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(CoreError::format(path, "trailing bytes after tensors").into()),
        Err(e) => return Err(CoreError::io(path, e).into()),
    }
    Ok(SurrogateModel { weights, norm, dims: (nx, ny, nt) })
}
