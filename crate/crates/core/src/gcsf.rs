//! GCSF raster container: the one binary format shared by every stage.
//!
//! Layout: 16-byte header (magic `GCSF`, u32 version = 1, u32 nx, u32 ny),
//! then u32 n_channels and u32 n_timesteps, then the payload as 32-bit
//! little-endian floats ordered channel-major, then time-major, then
//! row-major (y outer, x inner). Static fields use n_timesteps = 1.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{CoreError, Ensemble, EnsembleMeta, FieldRealization, GridSpec};

pub const GCSF_MAGIC: [u8; 4] = *b"GCSF";
pub const GCSF_VERSION: u32 = 1;

/// In-memory GCSF payload.
#[derive(Debug, Clone, PartialEq)]
pub struct GcsfRaster {
    pub nx: u32,
    pub ny: u32,
    pub n_channels: u32,
    pub n_timesteps: u32,
    /// channel-major, time-major, row-major (y outer, x inner)
    pub data: Vec<f32>,
}

impl GcsfRaster {
    pub fn new(nx: u32, ny: u32, n_channels: u32, n_timesteps: u32) -> Self {
        let len = nx as usize * ny as usize * n_channels as usize * n_timesteps as usize;
        GcsfRaster { nx, ny, n_channels, n_timesteps, data: vec![0.0; len] }
    }

    pub fn frame_len(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    pub fn index(&self, channel: usize, time: usize, iy: usize, ix: usize) -> usize {
        debug_assert!(channel < self.n_channels as usize && time < self.n_timesteps as usize);
        ((channel * self.n_timesteps as usize + time) * self.ny as usize + iy) * self.nx as usize + ix
    }

    pub fn get(&self, channel: usize, time: usize, iy: usize, ix: usize) -> f32 {
        self.data[self.index(channel, time, iy, ix)]
    }

    pub fn set(&mut self, channel: usize, time: usize, iy: usize, ix: usize, value: f32) {
        let i = self.index(channel, time, iy, ix);
        self.data[i] = value;
    }

    /// Copy one (channel, time) frame into an f64 raster.
    pub fn frame(&self, channel: usize, time: usize) -> Array2<f64> {
        let (ny, nx) = (self.ny as usize, self.nx as usize);
        Array2::from_shape_fn((ny, nx), |(iy, ix)| self.get(channel, time, iy, ix) as f64)
    }

    pub fn set_frame(&mut self, channel: usize, time: usize, raster: &Array2<f64>) {
        let (ny, nx) = (self.ny as usize, self.nx as usize);
        assert_eq!(raster.dim(), (ny, nx), "frame shape mismatch");
        for iy in 0..ny {
            for ix in 0..nx {
                self.set(channel, time, iy, ix, raster[[iy, ix]] as f32);
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CoreError> {
        let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| CoreError::io(path, e));
        emit(&GCSF_MAGIC)?;
        emit(&GCSF_VERSION.to_le_bytes())?;
        emit(&self.nx.to_le_bytes())?;
        emit(&self.ny.to_le_bytes())?;
        emit(&self.n_channels.to_le_bytes())?;
        emit(&self.n_timesteps.to_le_bytes())?;
        for v in &self.data {
            emit(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| CoreError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CoreError> {
        let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
        let mut r = BufReader::new(file);
        let u32_of = |r: &mut BufReader<File>| -> Result<u32, CoreError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| CoreError::io(path, e))?;
            Ok(u32::from_le_bytes(b))
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| CoreError::io(path, e))?;
        if magic != GCSF_MAGIC {
            return Err(CoreError::format(path, "bad magic"));
        }
        let version = u32_of(&mut r)?;
        if version != GCSF_VERSION {
            return Err(CoreError::format(path, format!("unsupported version {version}")));
        }
        let nx = u32_of(&mut r)?;
        let ny = u32_of(&mut r)?;
        let n_channels = u32_of(&mut r)?;
        let n_timesteps = u32_of(&mut r)?;
        let len = nx as usize * ny as usize * n_channels as usize * n_timesteps as usize;
        if len == 0 || len > (1usize << 34) / 4 {
            return Err(CoreError::format(path, format!("implausible payload length {len}")));
        }
        let mut data = vec![0.0f32; len];
        let mut buf = [0u8; 4];
        for v in data.iter_mut() {
            r.read_exact(&mut buf).map_err(|e| CoreError::io(path, e))?;
            *v = f32::from_le_bytes(buf);
        }
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing) {
            Ok(0) => {}
            Ok(_) => return Err(CoreError::format(path, "trailing bytes after payload")),
            Err(e) => return Err(CoreError::io(path, e)),
        }
        Ok(GcsfRaster { nx, ny, n_channels, n_timesteps, data })
    }
}

/// Sidecar metadata written next to each member's rasters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemberMeta {
    pub seed: u64,
    pub grid: GridSpec,
    pub channels: Vec<String>,
    /// Assimilation provenance, oldest first; empty for prior members.
    pub da_history: Vec<String>,
}

pub fn member_dir(base: &Path, index: usize) -> PathBuf {
    base.join(format!("member_{index:04}"))
}

const FIELD_CHANNELS: [&str; 3] = ["log_perm", "porosity", "facies"];

/// Write one member's static fields (`fields.gcsf` + `meta.json`).
pub fn write_member(base: &Path, index: usize, field: &FieldRealization, da_history: &[String]) -> Result<(), CoreError> {
    let dir = member_dir(base, index);
    std::fs::create_dir_all(&dir).map_err(|e| CoreError::io(&dir, e))?;
    let mut raster = GcsfRaster::new(field.grid.nx as u32, field.grid.ny as u32, 3, 1);
    raster.set_frame(0, 0, &field.log_perm);
    raster.set_frame(1, 0, &field.porosity);
    let facies = field.facies.mapv(|v| v as f64);
    raster.set_frame(2, 0, &facies);
    raster.write(&dir.join("fields.gcsf"))?;

    let meta = MemberMeta {
        seed: field.seed,
        grid: field.grid,
        channels: FIELD_CHANNELS.iter().map(|s| s.to_string()).collect(),
        da_history: da_history.to_vec(),
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| CoreError::Json { path: path.clone(), why: e.to_string() })?;
    std::fs::write(&path, text).map_err(|e| CoreError::io(&path, e))
}

pub fn read_member(base: &Path, index: usize) -> Result<(FieldRealization, MemberMeta), CoreError> {
    let dir = member_dir(base, index);
    let path = dir.join("meta.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let meta: MemberMeta = serde_json::from_str(&text)
        .map_err(|e| CoreError::Json { path: path.clone(), why: e.to_string() })?;
    let raster = GcsfRaster::read(&dir.join("fields.gcsf"))?;
    if raster.n_channels != 3 || raster.n_timesteps != 1 {
        return Err(CoreError::format(dir.join("fields.gcsf"), "expected 3 static channels"));
    }
    let field = FieldRealization {
        grid: meta.grid,
        log_perm: raster.frame(0, 0),
        porosity: raster.frame(1, 0),
        facies: raster.frame(2, 0).mapv(|v| v as u8),
        seed: meta.seed,
    };
    field.validate()?;
    Ok((field, meta))
}

/// Write all members of an ensemble under `base` in the member_#### layout.
pub fn write_ensemble(base: &Path, ensemble: &Ensemble) -> Result<(), CoreError> {
    std::fs::create_dir_all(base).map_err(|e| CoreError::io(base, e))?;
    for (i, member) in ensemble.members.iter().enumerate() {
        write_member(base, i, member, &ensemble.meta.da_history)?;
    }
    Ok(())
}

/// Read members 0..n until a member directory is missing.
pub fn read_ensemble(base: &Path) -> Result<Ensemble, CoreError> {
    let mut members = Vec::new();
    let mut histories: Vec<Vec<String>> = Vec::new();
    let mut idx = 0usize;
    while member_dir(base, idx).is_dir() {
        let (field, meta) = read_member(base, idx)?;
        histories.push(meta.da_history);
        members.push(field);
        idx += 1;
    }
    if members.is_empty() {
        return Err(CoreError::invalid("ensemble dir", format!("no member_0000 under {}", base.display())));
    }
    let base_seed = members[0].seed;
    let da_history = histories.pop().unwrap_or_default();
    Ok(Ensemble {
        members,
        meta: EnsembleMeta { base_seed, generation: format!("read from {}", base.display()), da_history },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips_random_rasters_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = std::env::temp_dir().join(format!("gcsf_rt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for case in 0..8 {
            let nx = rng.random_range(1..20u32);
            let ny = rng.random_range(1..20u32);
            let nc = rng.random_range(1..4u32);
            let nt = rng.random_range(1..6u32);
            let mut r = GcsfRaster::new(nx, ny, nc, nt);
            for v in r.data.iter_mut() {
                *v = rng.random_range(-1.0e6f32..1.0e6f32);
            }
            let path = dir.join(format!("case_{case}.gcsf"));
            r.write(&path).unwrap();
            let back = GcsfRaster::read(&path).unwrap();
            assert_eq!(r, back);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_corrupt_headers() {
        let dir = std::env::temp_dir().join(format!("gcsf_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.gcsf");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(GcsfRaster::read(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn payload_ordering_is_channel_time_row_major() {
        let mut r = GcsfRaster::new(2, 2, 2, 2);
        r.set(1, 0, 1, 0, 7.0);
        // channel 1 starts at 2 frames * 4 cells = 8; time 0; row 1 -> +2
        assert_eq!(r.data[8 + 2], 7.0);
    }
}
