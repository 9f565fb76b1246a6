//! Experiment configuration: flat `key = value` text with dotted section
//! prefixes (`simulation.n_centers = 50`). Diff-friendly and parseable
//! without any format dependency. `#` starts a comment; blank lines are
//! ignored; unknown keys are errors.

use std::fmt;
use std::path::PathBuf;

use crate::datagen::{CensorBound, PerturbMode, SimulationConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Common-feature weighted averaging over all centers.
    Alg1,
    /// Feature-presence clustering with component-wise weighted averaging.
    Alg2,
    /// Loss-driven iterative clustering baseline.
    Ifca,
    /// Event-based reporting rounds.
    Event,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
            Algorithm::Ifca => "ifca",
            Algorithm::Event => "event",
        }
    }
}

/// A single cluster count or an inclusive range `lo..hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterSpec {
    One(usize),
    Range(usize, usize),
}

impl ClusterSpec {
    pub fn values(self) -> Vec<usize> {
        match self {
            ClusterSpec::One(c) => vec![c],
            ClusterSpec::Range(lo, hi) => (lo..=hi).collect(),
        }
    }
}

impl fmt::Display for ClusterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterSpec::One(c) => write!(f, "{c}"),
            ClusterSpec::Range(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub clusters: ClusterSpec,
    pub epsilon: f64,
    pub eta: Option<f64>,
    pub rounds: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub simulation: SimulationConfig,
    pub output_path: Option<PathBuf>,
    /// Row perturbation direction in event mode.
    pub event_mode: PerturbMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: Algorithm::Alg2,
            clusters: ClusterSpec::Range(2, 9),
            epsilon: 1e-5,
            eta: None,
            rounds: 5,
            repetitions: 1,
            seed: 0,
            simulation: SimulationConfig::full_scale(0),
            output_path: None,
            event_mode: PerturbMode::Add,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::invalid("repetitions must be >= 1"));
        }
        if self.rounds < 1 {
            return Err(Error::invalid("rounds must be >= 1"));
        }
        if let ClusterSpec::Range(lo, hi) = self.clusters {
            if lo > hi || lo == 0 {
                return Err(Error::invalid("cluster range must satisfy 1 <= lo <= hi"));
            }
        }
        if self.epsilon < 0.0 {
            return Err(Error::invalid("epsilon must be >= 0"));
        }
        self.simulation.validate()
    }

    /// Parse the flat key = value format. The simulation seed defaults to
    /// the top-level seed unless `simulation.seed` is given explicitly.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut sim_seed_explicit = false;
        let mut seen_seed: Option<u64> = None;

        for (index, raw_line) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |message: String| Error::Config { line, message };

            match key {
                "algorithm" => {
                    cfg.algorithm = match value {
                        "alg1" => Algorithm::Alg1,
                        "alg2" => Algorithm::Alg2,
                        "ifca" => Algorithm::Ifca,
                        "event" => Algorithm::Event,
                        other => {
                            return Err(bad(format!(
                                "unknown algorithm `{other}` (alg1|alg2|ifca|event)"
                            )))
                        }
                    }
                }
                "clusters" => {
                    cfg.clusters = parse_clusters(value).map_err(&bad)?;
                }
                "epsilon" => cfg.epsilon = parse_num(value).map_err(&bad)?,
                "eta" => cfg.eta = Some(parse_num(value).map_err(&bad)?),
                "rounds" => cfg.rounds = parse_num(value).map_err(&bad)?,
                "repetitions" => cfg.repetitions = parse_num(value).map_err(&bad)?,
                "seed" => seen_seed = Some(parse_num(value).map_err(&bad)?),
                "output_path" => cfg.output_path = Some(PathBuf::from(value)),
                "event.mode" => {
                    cfg.event_mode = match value {
                        "add" => PerturbMode::Add,
                        "remove" => PerturbMode::Remove,
                        other => return Err(bad(format!("unknown event.mode `{other}`"))),
                    }
                }
                "simulation.n_centers" => {
                    cfg.simulation.n_centers = parse_num(value).map_err(&bad)?
                }
                "simulation.rows_min" => {
                    cfg.simulation.rows_min = parse_num(value).map_err(&bad)?
                }
                "simulation.rows_max" => {
                    cfg.simulation.rows_max = parse_num(value).map_err(&bad)?
                }
                "simulation.p_total" => cfg.simulation.p_total = parse_num(value).map_err(&bad)?,
                "simulation.n_common" => {
                    cfg.simulation.n_common = parse_num(value).map_err(&bad)?
                }
                "simulation.baseline_lambda" => {
                    cfg.simulation.baseline_lambda = parse_num(value).map_err(&bad)?
                }
                "simulation.censoring" => {
                    cfg.simulation.censor_bound = match value {
                        "individual" => CensorBound::Individual,
                        "population" => CensorBound::Population,
                        other => {
                            return Err(bad(format!(
                                "unknown censoring bound `{other}` (individual|population)"
                            )))
                        }
                    }
                }
                "simulation.seed" => {
                    cfg.simulation.seed = parse_num(value).map_err(&bad)?;
                    sim_seed_explicit = true;
                }
                other => {
                    return Err(bad(format!("unknown key `{other}`")));
                }
            }
        }

        if let Some(seed) = seen_seed {
            cfg.seed = seed;
            if !sim_seed_explicit {
                cfg.simulation.seed = seed;
            }
        }
        // Regenerate the seed-derived coefficients for the final geometry.
        cfg.simulation = SimulationConfig::new(
            cfg.simulation.n_centers,
            cfg.simulation.rows_min,
            cfg.simulation.rows_max,
            cfg.simulation.p_total,
            cfg.simulation.n_common,
            cfg.simulation.baseline_lambda,
            cfg.simulation.seed,
        )
        .with_censor_bound(cfg.simulation.censor_bound);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input_io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Canonical serialization; `parse(serialize(cfg))` is field-wise equal
    /// to `cfg`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("algorithm = {}\n", self.algorithm.label()));
        out.push_str(&format!("clusters = {}\n", self.clusters));
        out.push_str(&format!("epsilon = {}\n", self.epsilon));
        if let Some(eta) = self.eta {
            out.push_str(&format!("eta = {eta}\n"));
        }
        out.push_str(&format!("rounds = {}\n", self.rounds));
        out.push_str(&format!("repetitions = {}\n", self.repetitions));
        out.push_str(&format!("seed = {}\n", self.seed));
        if let Some(path) = &self.output_path {
            out.push_str(&format!("output_path = {}\n", path.display()));
        }
        out.push_str(&format!(
            "event.mode = {}\n",
            match self.event_mode {
                PerturbMode::Add => "add",
                PerturbMode::Remove => "remove",
            }
        ));
        let sim = &self.simulation;
        out.push_str(&format!("simulation.n_centers = {}\n", sim.n_centers));
        out.push_str(&format!("simulation.rows_min = {}\n", sim.rows_min));
        out.push_str(&format!("simulation.rows_max = {}\n", sim.rows_max));
        out.push_str(&format!("simulation.p_total = {}\n", sim.p_total));
        out.push_str(&format!("simulation.n_common = {}\n", sim.n_common));
        out.push_str(&format!(
            "simulation.baseline_lambda = {}\n",
            sim.baseline_lambda
        ));
        out.push_str(&format!(
            "simulation.censoring = {}\n",
            match sim.censor_bound {
                CensorBound::Individual => "individual",
                CensorBound::Population => "population",
            }
        ));
        out.push_str(&format!("simulation.seed = {}\n", sim.seed));
        out
    }
}

fn parse_clusters(value: &str) -> std::result::Result<ClusterSpec, String> {
    if let Some((lo, hi)) = value.split_once("..") {
        let lo = lo
            .trim()
            .parse()
            .map_err(|_| format!("bad cluster range start `{lo}`"))?;
        let hi = hi
            .trim()
            .parse()
            .map_err(|_| format!("bad cluster range end `{hi}`"))?;
        Ok(ClusterSpec::Range(lo, hi))
    } else {
        value
            .parse()
            .map(ClusterSpec::One)
            .map_err(|_| format!("bad cluster count `{value}`"))
    }
}

fn parse_num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("cannot parse `{value}`"))
}
