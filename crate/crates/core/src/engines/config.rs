use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Library,
    Gp,
}

impl std::str::FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "library" => Ok(EngineKind::Library),
            "gp" => Ok(EngineKind::Gp),
            other => Err(Error::InvalidConfig(format!("unknown engine `{other}`"))),
        }
    }
}

/// Engine settings. `None` fields follow the per-engine defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub kind: EngineKind,
    /// Bounds of the template parameters `m1..m4` (`k` is unbounded).
    pub lower: f64,
    pub upper: f64,
    /// Library: `10 + 10 d` for arity `d`. GP: 100.
    pub population: Option<usize>,
    /// Library: generations per optimizer run, default `3 N_p`.
    /// GP: total generation budget across restarts, default 100000.
    pub generations: Option<usize>,
    /// Library: 1e-6. GP: 1e-8.
    pub eps_target: Option<f64>,
    pub seed: u64,
    /// Library: optimizer restarts per template while the tolerance is unmet.
    pub restarts: usize,
    /// Library: half-width of the box scanned to seed the optimizer and
    /// favoured by its initial population.
    pub scan_radius: f64,
    /// GP: wall-clock limit in seconds for one fit.
    pub time_limit: Option<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            kind: EngineKind::Library,
            lower: -50.0,
            upper: 50.0,
            population: None,
            generations: None,
            eps_target: None,
            seed: 0x5EED,
            restarts: 4,
            scan_radius: 10.0,
            time_limit: None,
        }
    }
}

impl EngineConfig {
    pub fn library() -> Self {
        Self::default()
    }

    pub fn gp() -> Self {
        Self {
            kind: EngineKind::Gp,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::InvalidConfig(
                "parameter bounds need lower < upper".into(),
            ));
        }
        if let Some(eps) = self.eps_target {
            if !(eps > 0.0) {
                return Err(Error::InvalidConfig("eps_target must be positive".into()));
            }
        }
        if let Some(p) = self.population {
            if p < 4 {
                return Err(Error::InvalidConfig("population must be at least 4".into()));
            }
        }
        if self.generations == Some(0) {
            return Err(Error::InvalidConfig("generations must be positive".into()));
        }
        if !(self.scan_radius > 0.0) {
            return Err(Error::InvalidConfig("scan_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.eps_target.unwrap_or(match self.kind {
            EngineKind::Library => 1e-6,
            EngineKind::Gp => 1e-8,
        })
    }

    /// Population for a factor of the given arity.
    pub fn population_for(&self, arity: usize) -> usize {
        self.population.unwrap_or(match self.kind {
            EngineKind::Library => 10 + 10 * arity,
            EngineKind::Gp => 100,
        })
    }

    /// Library: generations per optimizer run. GP: total budget.
    pub fn generations_for(&self, arity: usize) -> usize {
        self.generations.unwrap_or(match self.kind {
            EngineKind::Library => 3 * self.population_for(arity),
            EngineKind::Gp => 100_000,
        })
    }
}
