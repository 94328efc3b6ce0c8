//! Experiment configuration: per-study defaults with a strict JSON overlay.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::covgen::Family;
use crate::error::{Error, Result};
use crate::solver::{Init, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::tensorops::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Spectrum,
    Trajectory,
    SampleEfficiency,
    RankSweep,
}

impl Study {
    pub const ALL: [Study; 4] = [
        Study::Spectrum,
        Study::Trajectory,
        Study::SampleEfficiency,
        Study::RankSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Study::Spectrum => "spectrum",
            Study::Trajectory => "trajectory",
            Study::SampleEfficiency => "sample_efficiency",
            Study::RankSweep => "rank_sweep",
        }
    }

    /// Stable id mixed into every replication seed.
    pub(crate) fn id(self) -> u64 {
        match self {
            Study::Spectrum => 1,
            Study::Trajectory => 2,
            Study::SampleEfficiency => 3,
            Study::RankSweep => 4,
        }
    }
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Study::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown study {s:?}; expected spectrum, trajectory, sample-efficiency or rank-sweep"
                ))
            })
    }
}

/// Whether the spectrum study uses the covariance itself or an empirical
/// covariance of `sample_factor * d` draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    Population,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// When false every run takes exactly `max_iterations` steps.
    pub stop_on_convergence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub shape: Shape,
    pub lambda1: Vec<f64>,
    /// Noise level: `Sigma_eps = lambda2 I`.
    pub lambda2: f64,
    pub kbar: usize,
    pub k: Vec<usize>,
    pub n: Vec<usize>,
    pub inits: Vec<Init>,
    pub power_method: bool,
    pub replications: usize,
    pub base_seed: u64,
    pub solver: SolverSettings,
    /// Draw a new ground truth for every replication; otherwise one per
    /// grid point from the base seed.
    pub fresh_xbar: bool,
    /// Replace the empirical covariance by the exact model covariance.
    pub noiseless: bool,
    pub families: Vec<Family>,
    pub spectrum_mode: SpectrumMode,
    pub sample_factor: usize,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Default settings of each study.
    pub fn defaults(study: Study) -> Self {
        let base = Self {
            study,
            shape: Shape::square(32).expect("valid"),
            lambda1: vec![5.0, 10.0, 100.0],
            lambda2: 1.0,
            kbar: 1,
            k: vec![2],
            n: vec![800],
            inits: Init::ALL.to_vec(),
            power_method: true,
            replications: 100,
            base_seed: 0,
            solver: SolverSettings {
                max_iterations: DEFAULT_MAX_ITERATIONS,
                tolerance: DEFAULT_TOLERANCE,
                stop_on_convergence: true,
            },
            fresh_xbar: true,
            noiseless: false,
            families: vec![
                Family::Toeplitz,
                Family::DiagDominant,
                Family::Kronecker,
                Family::GeneralPsd,
            ],
            spectrum_mode: SpectrumMode::Sampled,
            sample_factor: 2,
            threads: 0,
            output: None,
        };
        match study {
            Study::Spectrum => Self {
                shape: Shape::square(100).expect("valid"),
                ..base
            },
            Study::Trajectory => Self {
                solver: SolverSettings {
                    max_iterations: 100,
                    tolerance: DEFAULT_TOLERANCE,
                    stop_on_convergence: false,
                },
                ..base
            },
            Study::SampleEfficiency => Self {
                n: vec![100, 200, 400, 800, 1600],
                ..base
            },
            Study::RankSweep => Self {
                lambda1: vec![100.0],
                k: vec![1, 2, 4, 8, 16, 32],
                n: vec![100],
                inits: vec![Init::Random],
                ..base
            },
        }
    }

    /// Parses a JSON object naming a `study`; every other key overrides the
    /// study's default and unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(v, None)
    }

    /// As [`ExperimentConfig::from_json`], with `study` supplied when the
    /// object does not name one. A conflicting `study` key is an error.
    pub fn from_value(v: Value, study: Option<Study>) -> Result<Self> {
        let Value::Object(over) = v else {
            return Err(Error::Config("experiment config must be a JSON object".into()));
        };
        let named = match over.get("study") {
            Some(s) => Some(serde_json::from_value::<Study>(s.clone()).map_err(|e| Error::Config(format!("study: {e}")))?),
            None => None,
        };
        let study = match (named, study) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "config is for study {a} but {b} was requested"
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Config("config must name a study".into())),
        };
        let Value::Object(mut merged) = serde_json::to_value(Self::defaults(study))? else {
            unreachable!("config serializes to an object");
        };
        for (key, val) in over {
            let Some(slot) = merged.get_mut(&key) else {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            };
            if key == "solver" {
                merge_object(slot, val, "solver")?;
            } else {
                *slot = val;
            }
        }
        let cfg: Self = serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let shape = Shape::new(self.shape.rows(), self.shape.cols())
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return bad("solver needs a positive tolerance and max_iterations".into());
        }
        if self.study == Study::Spectrum {
            if self.families.is_empty() {
                return bad("families must not be empty".into());
            }
            if self.families.contains(&Family::Spiked) {
                return bad("the spectrum study does not take the spiked family".into());
            }
            if self.spectrum_mode == SpectrumMode::Sampled && self.sample_factor == 0 {
                return bad("sample_factor must be positive".into());
            }
            return Ok(());
        }
        for (name, len) in [("lambda1", self.lambda1.len()), ("k", self.k.len()), ("n", self.n.len())] {
            if len == 0 {
                return bad(format!("{name} must not be empty"));
            }
        }
        if self.inits.is_empty() && !self.power_method {
            return bad("nothing to run: no inits and power_method is false".into());
        }
        let single = |name: &str, len: usize| {
            if len != 1 {
                Err(Error::Config(format!(
                    "the {} study takes exactly one {name} value, got {len}",
                    self.study
                )))
            } else {
                Ok(())
            }
        };
        match self.study {
            Study::Trajectory => {
                single("k", self.k.len())?;
                single("n", self.n.len())?;
            }
            Study::SampleEfficiency => single("k", self.k.len())?,
            Study::RankSweep => {
                single("lambda1", self.lambda1.len())?;
                single("n", self.n.len())?;
                single("inits", self.inits.len())?;
            }
            Study::Spectrum => unreachable!(),
        }
        if !(self.lambda2 > 0.0) || !self.lambda2.is_finite() {
            return bad(format!("lambda2 must be positive, got {}", self.lambda2));
        }
        for &l in &self.lambda1 {
            if !(l > 0.0) || !l.is_finite() {
                return bad(format!("lambda1 values must be positive, got {l}"));
            }
        }
        if self.n.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        if self.kbar == 0 || self.kbar > shape.max_rank() {
            return bad(format!("kbar = {} is out of range for shape {shape}", self.kbar));
        }
        for &k in &self.k {
            if k == 0 || k > shape.max_rank() {
                return bad(format!("k = {k} is out of range for shape {shape}"));
            }
        }
        Ok(())
    }

    /// Grid points times replications.
    pub fn task_count(&self) -> usize {
        let grid = match self.study {
            Study::Spectrum => self.families.len(),
            Study::Trajectory | Study::RankSweep => self.lambda1.len(),
            Study::SampleEfficiency => self.lambda1.len(),
        };
        grid * self.replications
    }
}

fn merge_object(slot: &mut Value, over: Value, what: &str) -> Result<()> {
    let (Value::Object(base), Value::Object(over)) = (slot, over) else {
        return Err(Error::Config(format!("{what} must be a JSON object")));
    };
    for (k, v) in over {
        let Some(s) = base.get_mut(&k) else {
            return Err(Error::Config(format!("unknown {what} key {k:?}")));
        };
        *s = v;
    }
    Ok(())
}
