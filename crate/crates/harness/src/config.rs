//! Experiment configuration: INI-style sections of `key = value` lines.
//!
//! Grammar: `[section]` headers, `key = value` pairs, `#` or `;` comments,
//! blank lines ignored. Unknown sections or keys are errors with line
//! numbers. Every default is materialized at load, so two configs that
//! resolve to the same experiment hash identically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gcs_core::GridSpec;
use gcs_geomodel::{ChannelPriorSpec, FaciesPerm, NormalSpec, UniformRange};
use gcs_sim::{InjectionSchedule, SimConfig};
use gcs_surrogate::{Activation, FnoConfig, TrainConfig};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("config: {0}")]
    Invalid(String),

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Seeds for every random stream in the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds {
    pub prior: u64,
    pub truth: u64,
    pub truth_noise: u64,
    pub esmda: u64,
    pub rml: u64,
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSection {
    pub n_members: usize,
    pub truth_rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsmdaSection {
    pub n_assimilations: usize,
    /// Empty means the constant schedule alpha_i = n_assimilations.
    pub alpha: Vec<f64>,
    pub svd_energy_cutoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmlSection {
    pub n_opt_steps: usize,
    pub lr: f64,
    pub correlation_length: f64,
    pub fit_correlation_length: bool,
    pub variance: f64,
    pub nugget: f64,
    pub data_cov_ensemble: bool,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub prior: ChannelPriorSpec,
    pub sim: SimConfig,
    pub noise_std_bar: f64,
    pub surrogate: FnoConfig,
    pub train: TrainConfig,
    pub esmda: EsmdaSection,
    pub rml: RmlSection,
    pub ensemble: EnsembleSection,
    pub out_dir: String,
    pub seeds: Seeds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: GridSpec::default(),
            prior: ChannelPriorSpec::default(),
            sim: SimConfig::default(),
            noise_std_bar: 1.0,
            surrogate: FnoConfig::default(),
            train: TrainConfig::default(),
            esmda: EsmdaSection { n_assimilations: 4, alpha: Vec::new(), svd_energy_cutoff: 0.99 },
            rml: RmlSection {
                n_opt_steps: 200,
                lr: 0.05,
                correlation_length: 4.0,
                fit_correlation_length: true,
                variance: 2.0,
                nugget: 1.0e-3,
                data_cov_ensemble: false,
            },
            ensemble: EnsembleSection { n_members: 100, truth_rotation_deg: 90.0 },
            out_dir: "runs".to_string(),
            seeds: Seeds { prior: 100, truth: 777, truth_noise: 778, esmda: 2001, rml: 2002, train: 3001 },
        }
    }
}

struct RawConfig {
    path: String,
    /// section -> key -> (value, line)
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl RawConfig {
    fn parse(path: &str, text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(ConfigError::Parse {
                        path: path.into(),
                        line: line_no,
                        msg: format!("malformed section header `{line}`"),
                    });
                }
                let name = line[1..line.len() - 1].trim().to_string();
                current = Some(name.clone());
                sections.entry(name).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line: line_no,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let Some(section) = current.clone() else {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line: line_no,
                    msg: "key outside any [section]".into(),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let entry = sections.get_mut(&section).expect("just inserted");
            if entry.insert(key.clone(), (value, line_no)).is_some() {
                return Err(ConfigError::Parse {
                    path: path.into(),
                    line: line_no,
                    msg: format!("duplicate key `{key}` in [{section}]"),
                });
            }
        }
        Ok(RawConfig { path: path.into(), sections })
    }
}

/// Typed view over one section that records which keys were consumed.
struct SectionReader<'a> {
    raw: &'a RawConfig,
    name: &'a str,
    consumed: Vec<String>,
}

impl<'a> SectionReader<'a> {
    fn get(&mut self, key: &str) -> Option<(&'a str, usize)> {
        self.consumed.push(key.to_string());
        self.raw
            .sections
            .get(self.name)
            .and_then(|s| s.get(key))
            .map(|(v, l)| (v.as_str(), *l))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<T>().map_err(|_| ConfigError::Parse {
                path: self.raw.path.clone(),
                line,
                msg: format!("cannot parse `{v}` for {}.{key}", self.name),
            }),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(section) = self.raw.sections.get(self.name) {
            for (key, (_, line)) in section {
                if !self.consumed.contains(key) {
                    return Err(ConfigError::Parse {
                        path: self.raw.path.clone(),
                        line: *line,
                        msg: format!("unknown key `{key}` in [{}]", self.name),
                    });
                }
            }
        }
        Ok(())
    }
}

const KNOWN_SECTIONS: [&str; 10] =
    ["grid", "prior", "sim", "surrogate", "train", "esmda", "rml", "ensemble", "paths", "seeds"];

/// Parse `spec` like `1900x20,2850x20,3800x21` (rate x step-count) or a
/// single constant rate applied to every step.
fn parse_rates(spec: &str, n_steps: usize) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    if !spec.contains(',') && !spec.contains('x') {
        let rate: f64 = spec.parse().map_err(|_| format!("bad rate `{spec}`"))?;
        return Ok(vec![rate; n_steps]);
    }
    let mut rates = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let (rate, count) = match part.split_once('x') {
            Some((r, c)) => (
                r.trim().parse::<f64>().map_err(|_| format!("bad rate in `{part}`"))?,
                c.trim().parse::<usize>().map_err(|_| format!("bad count in `{part}`"))?,
            ),
            None => (part.parse::<f64>().map_err(|_| format!("bad rate `{part}`"))?, 1),
        };
        rates.extend(std::iter::repeat(rate).take(count));
    }
    if rates.len() != n_steps {
        return Err(format!("schedule covers {} steps but n_steps = {n_steps}", rates.len()));
    }
    Ok(rates)
}

fn rates_to_string(rates: &[f64]) -> String {
    let mut parts: Vec<(f64, usize)> = Vec::new();
    for &r in rates {
        match parts.last_mut() {
            Some((v, c)) if *v == r => *c += 1,
            _ => parts.push((r, 1)),
        }
    }
    parts.iter().map(|(v, c)| format!("{v}x{c}")).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    pub fn from_str_named(text: &str, path: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(path, text)?;
        for section in raw.sections.keys() {
            if !KNOWN_SECTIONS.contains(&section.as_str()) {
                return Err(ConfigError::Invalid(format!("unknown section [{section}]")));
            }
        }
        let mut cfg = ExperimentConfig::default();

        let mut s = SectionReader { raw: &raw, name: "grid", consumed: Vec::new() };
        cfg.grid.nx = s.parse("nx", cfg.grid.nx)?;
        cfg.grid.ny = s.parse("ny", cfg.grid.ny)?;
        cfg.grid.dx = s.parse("dx", cfg.grid.dx)?;
        cfg.grid.dy = s.parse("dy", cfg.grid.dy)?;
        cfg.grid.thickness = s.parse("thickness", cfg.grid.thickness)?;
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "prior", consumed: Vec::new() };
        let p = &mut cfg.prior;
        p.n_channels = (s.parse("n_channels_min", p.n_channels.0)?, s.parse("n_channels_max", p.n_channels.1)?);
        p.orientation_deg = NormalSpec {
            mean: s.parse("orientation_mean_deg", p.orientation_deg.mean)?,
            std: s.parse("orientation_std_deg", p.orientation_deg.std)?,
        };
        p.amplitude_cells =
            UniformRange::new(s.parse("amplitude_min", p.amplitude_cells.lo)?, s.parse("amplitude_max", p.amplitude_cells.hi)?);
        p.wavelength_cells = UniformRange::new(
            s.parse("wavelength_min", p.wavelength_cells.lo)?,
            s.parse("wavelength_max", p.wavelength_cells.hi)?,
        );
        p.width_cells = UniformRange::new(s.parse("width_min", p.width_cells.lo)?, s.parse("width_max", p.width_cells.hi)?);
        p.levee_width_cells =
            UniformRange::new(s.parse("levee_min", p.levee_width_cells.lo)?, s.parse("levee_max", p.levee_width_cells.hi)?);
        p.avulsion_probability = s.parse("avulsion_probability", p.avulsion_probability)?;
        p.aggradation_weight = s.parse("aggradation_weight", p.aggradation_weight)?;
        p.facies_perm = [
            FaciesPerm {
                median_md: s.parse("background_perm_md", p.facies_perm[0].median_md)?,
                log_std: s.parse("background_log_std", p.facies_perm[0].log_std)?,
            },
            FaciesPerm {
                median_md: s.parse("levee_perm_md", p.facies_perm[1].median_md)?,
                log_std: s.parse("levee_log_std", p.facies_perm[1].log_std)?,
            },
            FaciesPerm {
                median_md: s.parse("channel_perm_md", p.facies_perm[2].median_md)?,
                log_std: s.parse("channel_log_std", p.facies_perm[2].log_std)?,
            },
        ];
        p.porosity_per_facies = [
            s.parse("background_porosity", p.porosity_per_facies[0])?,
            s.parse("levee_porosity", p.porosity_per_facies[1])?,
            s.parse("channel_porosity", p.porosity_per_facies[2])?,
        ];
        p.porosity_noise_std = s.parse("porosity_noise_std", p.porosity_noise_std)?;
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "sim", consumed: Vec::new() };
        cfg.sim.n_steps = s.parse("n_steps", cfg.sim.n_steps)?;
        cfg.sim.dt = s.parse("dt_days", cfg.sim.dt)?;
        cfg.sim.p_init = s.parse("p_init_bar", cfg.sim.p_init)?;
        cfg.sim.viscosity = s.parse("viscosity_cp", cfg.sim.viscosity)?;
        cfg.sim.total_compressibility = s.parse("compressibility_per_bar", cfg.sim.total_compressibility)?;
        cfg.sim.f_init = s.parse("f_init", cfg.sim.f_init)?;
        cfg.sim.linear_solver_tol = s.parse("cg_tol", cfg.sim.linear_solver_tol)?;
        cfg.sim.max_cg_iters = s.parse("max_cg_iters", cfg.sim.max_cg_iters)?;
        match s.get("well") {
            None => cfg.sim.well_cell = None,
            Some(("center", _)) => cfg.sim.well_cell = None,
            Some((v, line)) => {
                let pair = v
                    .split_once(',')
                    .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)));
                match pair {
                    Some(cell) => cfg.sim.well_cell = Some(cell),
                    None => {
                        return Err(ConfigError::Parse {
                            path: raw.path.clone(),
                            line,
                            msg: format!("well must be `center` or `ix,iy`, got `{v}`"),
                        })
                    }
                }
            }
        }
        // the default ramp re-stretches when n_steps changed
        let default_rates = if cfg.sim.n_steps == cfg.sim.injection.len() {
            rates_to_string(&cfg.sim.injection.rates)
        } else {
            let ramp = InjectionSchedule::ramp3([1900.0, 2850.0, 3800.0], cfg.sim.n_steps)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            rates_to_string(&ramp.rates)
        };
        let rates_spec = match s.get("rates") {
            Some((v, line)) => parse_rates(v, cfg.sim.n_steps).map_err(|msg| ConfigError::Parse {
                path: raw.path.clone(),
                line,
                msg,
            })?,
            None => parse_rates(&default_rates, cfg.sim.n_steps).expect("default schedule parses"),
        };
        cfg.sim.injection = InjectionSchedule::new(rates_spec).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.noise_std_bar = s.parse("noise_std_bar", cfg.noise_std_bar)?;
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "surrogate", consumed: Vec::new() };
        cfg.surrogate.n_layers = s.parse("n_layers", cfg.surrogate.n_layers)?;
        cfg.surrogate.modes = (
            s.parse("modes_x", cfg.surrogate.modes.0)?,
            s.parse("modes_y", cfg.surrogate.modes.1)?,
            s.parse("modes_t", cfg.surrogate.modes.2)?,
        );
        cfg.surrogate.width = s.parse("width", cfg.surrogate.width)?;
        match s.get("activation") {
            None => {}
            Some(("gelu", _)) => cfg.surrogate.activation = Activation::Gelu,
            Some(("relu", _)) => cfg.surrogate.activation = Activation::Relu,
            Some((v, line)) => {
                return Err(ConfigError::Parse {
                    path: raw.path.clone(),
                    line,
                    msg: format!("activation must be gelu or relu, got `{v}`"),
                })
            }
        }
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "train", consumed: Vec::new() };
        cfg.train.lr = s.parse("lr", cfg.train.lr)?;
        cfg.train.weight_decay = s.parse("weight_decay", cfg.train.weight_decay)?;
        cfg.train.epochs = s.parse("epochs", cfg.train.epochs)?;
        cfg.train.batch_size = s.parse("batch_size", cfg.train.batch_size)?;
        cfg.train.adam_betas = (s.parse("beta1", cfg.train.adam_betas.0)?, s.parse("beta2", cfg.train.adam_betas.1)?);
        cfg.train.adam_eps = s.parse("eps", cfg.train.adam_eps)?;
        cfg.train.split_fraction = s.parse("split_fraction", cfg.train.split_fraction)?;
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "esmda", consumed: Vec::new() };
        cfg.esmda.n_assimilations = s.parse("n_assimilations", cfg.esmda.n_assimilations)?;
        match s.get("alpha") {
            None | Some(("constant", _)) => cfg.esmda.alpha = Vec::new(),
            Some((v, line)) => {
                let parsed: Result<Vec<f64>, _> = v.split(',').map(|x| x.trim().parse::<f64>()).collect();
                cfg.esmda.alpha = parsed.map_err(|_| ConfigError::Parse {
                    path: raw.path.clone(),
                    line,
                    msg: format!("alpha must be `constant` or comma-separated values, got `{v}`"),
                })?;
            }
        }
        cfg.esmda.svd_energy_cutoff = s.parse("svd_energy_cutoff", cfg.esmda.svd_energy_cutoff)?;
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "rml", consumed: Vec::new() };
        cfg.rml.n_opt_steps = s.parse("n_opt_steps", cfg.rml.n_opt_steps)?;
        cfg.rml.lr = s.parse("lr", cfg.rml.lr)?;
        cfg.rml.correlation_length = s.parse("correlation_length", cfg.rml.correlation_length)?;
        cfg.rml.fit_correlation_length = s.parse("fit_correlation_length", cfg.rml.fit_correlation_length)?;
        cfg.rml.variance = s.parse("variance", cfg.rml.variance)?;
        cfg.rml.nugget = s.parse("nugget", cfg.rml.nugget)?;
        match s.get("data_cov") {
            None | Some(("measurement", _)) => cfg.rml.data_cov_ensemble = false,
            Some(("ensemble", _)) => cfg.rml.data_cov_ensemble = true,
            Some((v, line)) => {
                return Err(ConfigError::Parse {
                    path: raw.path.clone(),
                    line,
                    msg: format!("data_cov must be measurement or ensemble, got `{v}`"),
                })
            }
        }
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "ensemble", consumed: Vec::new() };
        cfg.ensemble.n_members = s.parse("n_members", cfg.ensemble.n_members)?;
        cfg.ensemble.truth_rotation_deg = s.parse("truth_rotation_deg", cfg.ensemble.truth_rotation_deg)?;
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "paths", consumed: Vec::new() };
        if let Some((v, _)) = s.get("out_dir") {
            cfg.out_dir = v.to_string();
        }
        s.finish()?;

        let mut s = SectionReader { raw: &raw, name: "seeds", consumed: Vec::new() };
        cfg.seeds.prior = s.parse("prior", cfg.seeds.prior)?;
        cfg.seeds.truth = s.parse("truth", cfg.seeds.truth)?;
        cfg.seeds.truth_noise = s.parse("truth_noise", cfg.seeds.truth_noise)?;
        cfg.seeds.esmda = s.parse("esmda", cfg.seeds.esmda)?;
        cfg.seeds.rml = s.parse("rml", cfg.seeds.rml)?;
        cfg.seeds.train = s.parse("train", cfg.seeds.train)?;
        s.finish()?;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.prior.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.surrogate.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.ensemble.n_members == 0 {
            return Err(ConfigError::Invalid("ensemble.n_members must be >= 1".into()));
        }
        if !(self.noise_std_bar > 0.0) {
            return Err(ConfigError::Invalid("sim.noise_std_bar must be positive".into()));
        }
        if !self.esmda.alpha.is_empty() && self.esmda.alpha.len() != self.esmda.n_assimilations {
            return Err(ConfigError::Invalid("esmda.alpha length must equal n_assimilations".into()));
        }
        Ok(())
    }

    pub fn override_seed(&mut self, key: &str, value: u64) -> Result<(), ConfigError> {
        match key {
            "prior" => self.seeds.prior = value,
            "truth" => self.seeds.truth = value,
            "truth_noise" => self.seeds.truth_noise = value,
            "esmda" => self.seeds.esmda = value,
            "rml" => self.seeds.rml = value,
            "train" => self.seeds.train = value,
            other => return Err(ConfigError::Invalid(format!("unknown seed `{other}`"))),
        }
        Ok(())
    }

    pub fn alpha_schedule(&self) -> Vec<f64> {
        if self.esmda.alpha.is_empty() {
            vec![self.esmda.n_assimilations as f64; self.esmda.n_assimilations]
        } else {
            self.esmda.alpha.clone()
        }
    }

    /// Canonical text of the resolved configuration; hashing input and the
    /// `config.resolved.ini` payload.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let p = &self.prior;
        let w = |out: &mut String, s: &str| out.push_str(s);
        w(&mut out, "[grid]\n");
        let _ = writeln!(out, "nx = {}", self.grid.nx);
        let _ = writeln!(out, "ny = {}", self.grid.ny);
        let _ = writeln!(out, "dx = {}", self.grid.dx);
        let _ = writeln!(out, "dy = {}", self.grid.dy);
        let _ = writeln!(out, "thickness = {}", self.grid.thickness);
        w(&mut out, "\n[prior]\n");
        let _ = writeln!(out, "n_channels_min = {}", p.n_channels.0);
        let _ = writeln!(out, "n_channels_max = {}", p.n_channels.1);
        let _ = writeln!(out, "orientation_mean_deg = {}", p.orientation_deg.mean);
        let _ = writeln!(out, "orientation_std_deg = {}", p.orientation_deg.std);
        let _ = writeln!(out, "amplitude_min = {}", p.amplitude_cells.lo);
        let _ = writeln!(out, "amplitude_max = {}", p.amplitude_cells.hi);
        let _ = writeln!(out, "wavelength_min = {}", p.wavelength_cells.lo);
        let _ = writeln!(out, "wavelength_max = {}", p.wavelength_cells.hi);
        let _ = writeln!(out, "width_min = {}", p.width_cells.lo);
        let _ = writeln!(out, "width_max = {}", p.width_cells.hi);
        let _ = writeln!(out, "levee_min = {}", p.levee_width_cells.lo);
        let _ = writeln!(out, "levee_max = {}", p.levee_width_cells.hi);
        let _ = writeln!(out, "avulsion_probability = {}", p.avulsion_probability);
        let _ = writeln!(out, "aggradation_weight = {}", p.aggradation_weight);
        let _ = writeln!(out, "background_perm_md = {}", p.facies_perm[0].median_md);
        let _ = writeln!(out, "background_log_std = {}", p.facies_perm[0].log_std);
        let _ = writeln!(out, "levee_perm_md = {}", p.facies_perm[1].median_md);
        let _ = writeln!(out, "levee_log_std = {}", p.facies_perm[1].log_std);
        let _ = writeln!(out, "channel_perm_md = {}", p.facies_perm[2].median_md);
        let _ = writeln!(out, "channel_log_std = {}", p.facies_perm[2].log_std);
        let _ = writeln!(out, "background_porosity = {}", p.porosity_per_facies[0]);
        let _ = writeln!(out, "levee_porosity = {}", p.porosity_per_facies[1]);
        let _ = writeln!(out, "channel_porosity = {}", p.porosity_per_facies[2]);
        let _ = writeln!(out, "porosity_noise_std = {}", p.porosity_noise_std);
        w(&mut out, "\n[sim]\n");
        let _ = writeln!(out, "n_steps = {}", self.sim.n_steps);
        let _ = writeln!(out, "dt_days = {}", self.sim.dt);
        let _ = writeln!(out, "p_init_bar = {}", self.sim.p_init);
        let _ = writeln!(out, "viscosity_cp = {}", self.sim.viscosity);
        let _ = writeln!(out, "compressibility_per_bar = {}", self.sim.total_compressibility);
        let _ = writeln!(out, "f_init = {}", self.sim.f_init);
        let _ = writeln!(out, "cg_tol = {}", self.sim.linear_solver_tol);
        let _ = writeln!(out, "max_cg_iters = {}", self.sim.max_cg_iters);
        match self.sim.well_cell {
            None => {
                let _ = writeln!(out, "well = center");
            }
            Some((x, y)) => {
                let _ = writeln!(out, "well = {x},{y}");
            }
        }
        let _ = writeln!(out, "rates = {}", rates_to_string(&self.sim.injection.rates));
        let _ = writeln!(out, "noise_std_bar = {}", self.noise_std_bar);
        w(&mut out, "\n[surrogate]\n");
        let _ = writeln!(out, "n_layers = {}", self.surrogate.n_layers);
        let _ = writeln!(out, "modes_x = {}", self.surrogate.modes.0);
        let _ = writeln!(out, "modes_y = {}", self.surrogate.modes.1);
        let _ = writeln!(out, "modes_t = {}", self.surrogate.modes.2);
        let _ = writeln!(out, "width = {}", self.surrogate.width);
        let _ = writeln!(
            out,
            "activation = {}",
            match self.surrogate.activation {
                Activation::Gelu => "gelu",
                Activation::Relu => "relu",
            }
        );
        w(&mut out, "\n[train]\n");
        let _ = writeln!(out, "lr = {}", self.train.lr);
        let _ = writeln!(out, "weight_decay = {}", self.train.weight_decay);
        let _ = writeln!(out, "epochs = {}", self.train.epochs);
        let _ = writeln!(out, "batch_size = {}", self.train.batch_size);
        let _ = writeln!(out, "beta1 = {}", self.train.adam_betas.0);
        let _ = writeln!(out, "beta2 = {}", self.train.adam_betas.1);
        let _ = writeln!(out, "eps = {}", self.train.adam_eps);
        let _ = writeln!(out, "split_fraction = {}", self.train.split_fraction);
        w(&mut out, "\n[esmda]\n");
        let _ = writeln!(out, "n_assimilations = {}", self.esmda.n_assimilations);
        let alpha = if self.esmda.alpha.is_empty() {
            "constant".to_string()
        } else {
            self.esmda.alpha.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(out, "alpha = {alpha}");
        let _ = writeln!(out, "svd_energy_cutoff = {}", self.esmda.svd_energy_cutoff);
        w(&mut out, "\n[rml]\n");
        let _ = writeln!(out, "n_opt_steps = {}", self.rml.n_opt_steps);
        let _ = writeln!(out, "lr = {}", self.rml.lr);
        let _ = writeln!(out, "correlation_length = {}", self.rml.correlation_length);
        let _ = writeln!(out, "fit_correlation_length = {}", self.rml.fit_correlation_length);
        let _ = writeln!(out, "variance = {}", self.rml.variance);
        let _ = writeln!(out, "nugget = {}", self.rml.nugget);
        let _ = writeln!(out, "data_cov = {}", if self.rml.data_cov_ensemble { "ensemble" } else { "measurement" });
        w(&mut out, "\n[ensemble]\n");
        let _ = writeln!(out, "n_members = {}", self.ensemble.n_members);
        let _ = writeln!(out, "truth_rotation_deg = {}", self.ensemble.truth_rotation_deg);
        w(&mut out, "\n[paths]\n");
        let _ = writeln!(out, "out_dir = {}", self.out_dir);
        w(&mut out, "\n[seeds]\n");
        let _ = writeln!(out, "prior = {}", self.seeds.prior);
        let _ = writeln!(out, "truth = {}", self.seeds.truth);
        let _ = writeln!(out, "truth_noise = {}", self.seeds.truth_noise);
        let _ = writeln!(out, "esmda = {}", self.seeds.esmda);
        let _ = writeln!(out, "rml = {}", self.seeds.rml);
        let _ = writeln!(out, "train = {}", self.seeds.train);
        out
    }

    /// Hash binding artifacts to the full resolved configuration.
    pub fn config_hash(&self) -> String {
        hex_digest(&self.canonical())
    }

    /// Hash of everything the synthetic truth depends on; reports refuse to
    /// compare runs with different truth hashes.
    pub fn truth_hash(&self) -> String {
        let canon = self.canonical();
        let mut subset = String::new();
        let mut keep = false;
        for line in canon.lines() {
            if line.starts_with('[') {
                keep = matches!(line, "[grid]" | "[prior]" | "[sim]" | "[ensemble]");
            }
            if keep && !line.is_empty() {
                subset.push_str(line);
                subset.push('\n');
            }
        }
        subset.push_str(&format!("truth_seed = {}\n", self.seeds.truth));
        subset.push_str(&format!("truth_noise_seed = {}\n", self.seeds.truth_noise));
        hex_digest(&subset)
    }
}

fn hex_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_materializes_defaults() {
        let cfg = ExperimentConfig::from_str_named("", "test.ini").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.surrogate.width, 64);
        assert_eq!(cfg.train.split_fraction, 0.8);
    }

    #[test]
    fn canonical_round_trips_through_the_parser() {
        let cfg = ExperimentConfig::default();
        let text = cfg.canonical();
        let back = ExperimentConfig::from_str_named(&text, "canon.ini").unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let text = "[grid]\nnx = 16\nbogus = 3\n";
        match ExperimentConfig::from_str_named(text, "t.ini") {
            Err(ConfigError::Parse { line: 3, .. }) => {}
            other => panic!("expected parse error at line 3, got {other:?}"),
        }
        assert!(ExperimentConfig::from_str_named("[nope]\nx = 1\n", "t.ini").is_err());
    }

    #[test]
    fn rate_grammar_parses_and_validates_length() {
        assert_eq!(parse_rates("5", 3).unwrap(), vec![5.0, 5.0, 5.0]);
        assert_eq!(parse_rates("1x2,2x1", 3).unwrap(), vec![1.0, 1.0, 2.0]);
        assert!(parse_rates("1x2", 3).is_err());
        let text = "[sim]\nn_steps = 4\nrates = 10x2,20x2\n";
        let cfg = ExperimentConfig::from_str_named(text, "t.ini").unwrap();
        assert_eq!(cfg.sim.injection.rates, vec![10.0, 10.0, 20.0, 20.0]);
    }

    #[test]
    fn seed_override_changes_only_that_stream() {
        let mut cfg = ExperimentConfig::default();
        let h0 = cfg.config_hash();
        cfg.override_seed("esmda", 42).unwrap();
        assert_eq!(cfg.seeds.esmda, 42);
        assert_ne!(cfg.config_hash(), h0);
        assert!(cfg.override_seed("nope", 1).is_err());
    }

    #[test]
    fn truth_hash_ignores_assimilation_settings() {
        let mut a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        b.esmda.n_assimilations = 8;
        b.seeds.esmda = 555;
        assert_eq!(a.truth_hash(), b.truth_hash());
        a.seeds.truth = 9;
        assert_ne!(a.truth_hash(), b.truth_hash());
        let mut c = ExperimentConfig::default();
        c.ensemble.truth_rotation_deg = 45.0;
        assert_ne!(c.truth_hash(), b.truth_hash());
    }

    #[test]
    fn grid_validation_failures_surface() {
        assert!(ExperimentConfig::from_str_named("[grid]\nnx = 2\n", "t.ini").is_err());
        assert!(ExperimentConfig::from_str_named("[ensemble]\nn_members = 0\n", "t.ini").is_err());
    }
}
