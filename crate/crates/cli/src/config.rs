use std::path::{Path, PathBuf};

use deltashell::analysis::FitPolicies;
use deltashell::experiment::{Normalization, COMPARISON_LAMBDAS};
use deltashell::poles::SeedStrategy;
use deltashell::propagator::PropagatorConfig;
use deltashell::tables::{TableConfig, REFERENCE_EXPONENTS};
use deltashell::tdse::{DELTA_LADDER, VALIDATION_DOMAIN};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run depends on. Every output carries this (after flag
/// overrides) together with its SHA-256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub time: TimeSection,
    pub propagator: PropagatorConfig,
    pub fits: FitPolicies,
    pub poles: PolesSection,
    pub decompose: DecomposeSection,
    pub tdse: TdseSection,
    pub compare: CompareSection,
    pub scale: ScaleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub lambdas: Vec<f64>,
    /// Index `n` of the initial well eigenstate.
    pub state: u32,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            lambdas: REFERENCE_EXPONENTS.iter().map(|r| r.0).collect(),
            state: 1,
        }
    }
}

/// Log-spaced output times in units of τ0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_min_tau0: f64,
    pub t_max_tau0: f64,
    pub points: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        let t = TableConfig::default();
        TimeSection {
            t_min_tau0: t.t_min_tau0,
            t_max_tau0: t.t_max_tau0,
            points: t.points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolesSection {
    pub count: usize,
    pub seed: SeedStrategy,
}

impl Default for PolesSection {
    fn default() -> Self {
        PolesSection {
            count: 10,
            seed: SeedStrategy::Deflated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeSection {
    /// Times (units of τ0) at which the background and pole fields are
    /// written on the well grid.
    pub field_times_tau0: Vec<f64>,
}

impl Default for DecomposeSection {
    fn default() -> Self {
        DecomposeSection {
            field_times_tau0: vec![0.1, 1.0, 10.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdseSection {
    pub lambda: f64,
    /// Probe point in units of `a`.
    pub x: f64,
    pub t_over_tau0: f64,
    /// Barrier widths in units of `a`.
    pub deltas: Vec<f64>,
    pub domain_length: f64,
    /// Indices into `deltas` rerun on the refined grid.
    pub grid_check: Vec<usize>,
    /// Also write the wavefunction at the probe time for the narrowest
    /// barrier.
    pub snapshot: bool,
}

impl Default for TdseSection {
    fn default() -> Self {
        TdseSection {
            lambda: 8.0,
            x: 0.6,
            t_over_tau0: 0.4,
            deltas: DELTA_LADDER.to_vec(),
            domain_length: VALIDATION_DOMAIN,
            grid_check: Vec::new(),
            snapshot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Experimental decay CSV (`t_ns, intensity`); a synthetic curve is
    /// used when absent.
    pub input: Option<PathBuf>,
    pub normalization: Normalization,
    pub lambda_grid: Vec<f64>,
    pub synthetic: SyntheticSection,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            input: None,
            normalization: Normalization::Peak,
            lambda_grid: vec![3.2, 3.4, 3.6, 3.8, 4.0],
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub lambda: f64,
    pub tau_exp_ns: f64,
    pub noise: f64,
    pub seed: u64,
    pub t_min_ns: f64,
    pub t_max_ns: f64,
    pub points: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            lambda: COMPARISON_LAMBDAS[1],
            tau_exp_ns: 3.9,
            noise: 0.02,
            seed: 0,
            t_min_ns: 0.5,
            t_max_ns: 200.0,
            points: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSection {
    pub lambda: f64,
    pub tau_th_over_tau0: f64,
    pub tau_exp_ns: f64,
}

impl Default for ScaleSection {
    fn default() -> Self {
        ScaleSection {
            lambda: 3.6,
            tau_th_over_tau0: 3.55,
            tau_exp_ns: 3.9,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn table_config(&self) -> TableConfig {
        TableConfig {
            lambdas: self.model.lambdas.clone(),
            t_min_tau0: self.time.t_min_tau0,
            t_max_tau0: self.time.t_max_tau0,
            points: self.time.points,
            propagator: self.propagator,
            fits: self.fits,
        }
    }

    /// Checks that do not need any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.lambdas.is_empty() {
            return Err(CliError::usage("empty lambda list"));
        }
        if let Some(l) = self.model.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(CliError::usage(format!("lambda must be finite and > 0, got {l}")));
        }
        if self.model.state == 0 {
            return Err(CliError::usage("state index must be >= 1"));
        }
        let t = &self.time;
        if !(t.t_min_tau0 > 0.0 && t.t_max_tau0 > t.t_min_tau0) || t.points < 2 {
            return Err(CliError::usage(format!(
                "time range needs 0 < t_min < t_max and >= 2 points, got [{}, {}] with {}",
                t.t_min_tau0, t.t_max_tau0, t.points
            )));
        }
        if self.poles.count == 0 {
            return Err(CliError::usage("pole count must be >= 1"));
        }
        self.propagator.validate().map_err(CliError::from)
    }
}
