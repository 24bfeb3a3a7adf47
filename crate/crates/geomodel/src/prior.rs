use gcs_core::CoreError;

/// Closed interval for uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

impl UniformRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        UniformRange { lo, hi }
    }

    fn validate(&self, what: &'static str) -> Result<(), CoreError> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo > self.hi {
            return Err(CoreError::invalid(what, format!("bad range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Mean/std pair for normal sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalSpec {
    pub mean: f64,
    pub std: f64,
}

/// Log-normal permeability of one facies: `median_md` is the median in mD,
/// `log_std` the standard deviation of ln(perm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaciesPerm {
    pub median_md: f64,
    pub log_std: f64,
}

impl FaciesPerm {
    pub fn log_mean(&self) -> f64 {
        self.median_md.ln()
    }
}

/// Statistical description of the channelized prior. Facies-indexed arrays
/// are ordered [background, levee, channel].
///
/// The default numeric ranges are heuristic: they are tuned to produce two to
/// four sinuous, roughly x-oriented sand bodies on a 32x32 grid with a sand
/// fraction around 30% and a clearly bimodal log-permeability histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPriorSpec {
    /// Inclusive range for the number of channels.
    pub n_channels: (u32, u32),
    /// Channel axis direction in degrees (0 = +x), sampled per channel.
    pub orientation_deg: NormalSpec,
    /// Sinuosity amplitude, in cells.
    pub amplitude_cells: UniformRange,
    /// Sinuosity wavelength, in cells.
    pub wavelength_cells: UniformRange,
    /// Full channel width, in cells.
    pub width_cells: UniformRange,
    /// Levee halo width beyond the channel edge, in cells.
    pub levee_width_cells: UniformRange,
    /// Probability that a channel sheds an avulsion branch.
    pub avulsion_probability: f64,
    /// Log-perm boost per extra stacked channel where channels amalgamate.
    pub aggradation_weight: f64,
    /// Per-facies permeability, ordered [background, levee, channel].
    pub facies_perm: [FaciesPerm; 3],
    /// Per-facies porosity fraction, ordered [background, levee, channel].
    pub porosity_per_facies: [f64; 3],
    /// Std of the additive porosity noise.
    pub porosity_noise_std: f64,
}

impl Default for ChannelPriorSpec {
    fn default() -> Self {
        ChannelPriorSpec {
            n_channels: (2, 4),
            orientation_deg: NormalSpec { mean: 0.0, std: 12.0 },
            amplitude_cells: UniformRange::new(2.0, 5.0),
            wavelength_cells: UniformRange::new(18.0, 36.0),
            width_cells: UniformRange::new(2.5, 5.0),
            levee_width_cells: UniformRange::new(1.0, 2.0),
            avulsion_probability: 0.25,
            aggradation_weight: 0.3,
            facies_perm: [
                FaciesPerm { median_md: 15.0, log_std: 0.5 },
                FaciesPerm { median_md: 120.0, log_std: 0.35 },
                FaciesPerm { median_md: 800.0, log_std: 0.4 },
            ],
            porosity_per_facies: [0.12, 0.20, 0.25],
            porosity_noise_std: 0.004,
        }
    }
}

impl ChannelPriorSpec {
    /// Same statistics with the channel axis rotated by `deg`; used to build
    /// reference models outside the sampling prior.
    pub fn rotated(&self, deg: f64) -> Self {
        let mut p = self.clone();
        p.orientation_deg.mean += deg;
        p
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_channels.0 > self.n_channels.1 {
            return Err(CoreError::invalid("prior", "n_channels range reversed"));
        }
        if !self.orientation_deg.mean.is_finite() || !(self.orientation_deg.std >= 0.0) {
            return Err(CoreError::invalid("prior", "bad orientation distribution"));
        }
        self.amplitude_cells.validate("prior amplitude")?;
        self.wavelength_cells.validate("prior wavelength")?;
        self.width_cells.validate("prior width")?;
        self.levee_width_cells.validate("prior levee width")?;
        if self.wavelength_cells.lo <= 1.0 {
            return Err(CoreError::invalid("prior", "wavelength must exceed one cell"));
        }
        if self.width_cells.lo <= 0.0 || self.levee_width_cells.lo < 0.0 {
            return Err(CoreError::invalid("prior", "widths must be positive"));
        }
        if !(0.0..=1.0).contains(&self.avulsion_probability) {
            return Err(CoreError::invalid("prior", "avulsion probability outside [0, 1]"));
        }
        if !(self.aggradation_weight >= 0.0) {
            return Err(CoreError::invalid("prior", "aggradation weight must be >= 0"));
        }
        for f in &self.facies_perm {
            if !(f.median_md > 0.0) || !(f.log_std > 0.0) || !f.median_md.is_finite() {
                return Err(CoreError::invalid("prior", "facies perm must have positive median and log-std"));
            }
        }
        let [bg, levee, ch] = &self.facies_perm;
        if !(ch.median_md > levee.median_md && levee.median_md > bg.median_md) {
            return Err(CoreError::invalid("prior", "facies perm must order channel > levee > background"));
        }
        for &phi in &self.porosity_per_facies {
            if !(phi > 0.0 && phi < 0.4) {
                return Err(CoreError::invalid("prior", "porosity must lie in (0, 0.4)"));
            }
        }
        if !(self.porosity_noise_std >= 0.0 && self.porosity_noise_std < 0.05) {
            return Err(CoreError::invalid("prior", "porosity noise std out of range"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_prior_is_valid() {
        ChannelPriorSpec::default().validate().unwrap();
    }

    #[test]
    fn rejects_misordered_facies() {
        let mut p = ChannelPriorSpec::default();
        p.facies_perm[0].median_md = 5000.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_bad_avulsion_probability() {
        let mut p = ChannelPriorSpec::default();
        p.avulsion_probability = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rotation_only_shifts_orientation() {
        let p = ChannelPriorSpec::default();
        let r = p.rotated(90.0);
        assert_eq!(r.orientation_deg.mean, 90.0);
        assert_eq!(r.width_cells, p.width_cells);
    }
}
