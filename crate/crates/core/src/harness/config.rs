use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::StreamSpec;
use crate::error::{Error, Result};
use crate::hypothesis::{HypothesisFamily, Individual, Literal, Rule};
use crate::learners::{make_hyperparameters, Hyperparameters, Mode, Schedule};

/// Axis thresholds on one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub coord: usize,
    pub cutoffs: Vec<f64>,
    /// `None` adds both polarities.
    #[serde(default)]
    pub positive: Option<bool>,
}

/// Candidate points from which duplicates are detected and the separating
/// set is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolSpec {
    /// `per_axis` evenly spaced values in `[lo, hi]` on every coordinate.
    Grid {
        dim: usize,
        lo: f64,
        hi: f64,
        per_axis: usize,
    },
    Points {
        points: Vec<Individual>,
    },
}

impl PoolSpec {
    pub fn points(&self) -> Result<Vec<Individual>> {
        match self {
            PoolSpec::Points { points } => Ok(points.clone()),
            PoolSpec::Grid { dim, lo, hi, per_axis } => {
                if *dim == 0 || *per_axis < 2 || !(lo < hi) {
                    return Err(Error::Config("grid pool needs dim ≥ 1, per_axis ≥ 2 and lo < hi".into()));
                }
                let axis: Vec<f64> =
                    (0..*per_axis).map(|i| lo + (hi - lo) * i as f64 / (*per_axis - 1) as f64).collect();
                let total = per_axis.checked_pow(*dim as u32).filter(|n| *n <= 1 << 20);
                let total = total.ok_or_else(|| Error::Config("grid pool too large".into()))?;
                (0..total)
                    .map(|mut idx| {
                        let v = (0..*dim)
                            .map(|_| {
                                let c = axis[idx % per_axis];
                                idx /= per_axis;
                                c
                            })
                            .collect();
                        Individual::new(v)
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(default = "yes")]
    pub constants: bool,
    #[serde(default)]
    pub thresholds: Vec<ThresholdSpec>,
    #[serde(default)]
    pub conjunctions: Vec<Vec<Literal>>,
    pub pool: PoolSpec,
}

fn yes() -> bool {
    true
}

impl FamilySpec {
    pub fn rules(&self) -> Vec<Rule> {
        let mut rules = Vec::new();
        if self.constants {
            rules.extend([Rule::Constant(false), Rule::Constant(true)]);
        }
        for spec in &self.thresholds {
            for &cutoff in &spec.cutoffs {
                for positive in [true, false] {
                    if spec.positive.is_none_or(|p| p == positive) {
                        rules.push(Rule::Threshold { coord: spec.coord, cutoff, positive });
                    }
                }
            }
        }
        rules.extend(self.conjunctions.iter().cloned().map(Rule::Conjunction));
        rules
    }

    pub fn build(&self) -> Result<HypothesisFamily> {
        let pool = self.pool.points()?;
        let dim = pool.first().map(Individual::dim).ok_or_else(|| Error::Config("empty pool".into()))?;
        if pool.iter().any(|p| p.dim() != dim) {
            return Err(Error::Config("pool points have mixed dimensions".into()));
        }
        let coords = self.thresholds.iter().map(|t| t.coord);
        let lits = self.conjunctions.iter().flatten().map(|l| l.coord);
        if let Some(c) = coords.chain(lits).find(|c| *c >= dim) {
            return Err(Error::Config(format!("coordinate {c} out of range for dimension {dim}")));
        }
        HypothesisFamily::build(self.rules(), &pool)
    }
}

/// One experiment: learner settings, hypothesis family and input stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub seed: u64,
    pub family: FamilySpec,
    pub stream: StreamSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn schedule(&self, family: &HypothesisFamily) -> Schedule {
        Schedule {
            horizon: self.horizon,
            k: self.stream.k,
            separator_size: family.separator_size(),
            family_size: family.len(),
            alpha: self.alpha,
            epsilon: self.epsilon,
            delta: self.delta,
            b: self.b,
            mode: self.mode,
        }
    }

    /// Builds the family and checks every range before anything runs.
    pub fn validate(&self) -> Result<(HypothesisFamily, Hyperparameters)> {
        self.stream.validate()?;
        let family = self.family.build()?;
        let hyper = make_hyperparameters(self.schedule(&family))?;
        Ok((family, hyper))
    }

    /// Sensitivity of the comparator class, `α − ε`.
    pub fn comparator_alpha(&self) -> f64 {
        self.alpha - self.epsilon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "mode": "full", "T": 100, "alpha": 0.3, "epsilon": 0.3, "delta": 0.05, "seed": 7,
        "family": {
            "thresholds": [{"coord": 0, "cutoffs": [-0.5, 0.0, 0.5]}],
            "pool": {"kind": "grid", "dim": 1, "lo": -1.0, "hi": 1.0, "per_axis": 9}
        },
        "stream": {
            "k": 2,
            "features": {"kind": "iid_gaussian", "dim": 1},
            "labels": {"kind": "noisy_threshold", "coord": 0, "cutoff": 0.0, "flip": 0.1},
            "schemes": [{
                "panel": [{"kind": "l1", "weights": [1.0]}, {"kind": "constant", "value": 0.2}],
                "aggregation": {"kind": "majority"}
            }]
        }
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg: RunConfig = serde_json::from_str(CONFIG).unwrap();
        let (family, hyper) = cfg.validate().unwrap();
        assert_eq!(family.len(), 8);
        assert_eq!(hyper.schedule.k, 2);
        assert_eq!(cfg.b, 0.0);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn range_errors_surface() {
        let mut cfg: RunConfig = serde_json::from_str(CONFIG).unwrap();
        cfg.epsilon = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::InvalidRange(_))));
        let mut cfg: RunConfig = serde_json::from_str(CONFIG).unwrap();
        cfg.family.thresholds[0].coord = 2;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn grid_pool_enumerates_every_point() {
        let pts = PoolSpec::Grid { dim: 2, lo: 0.0, hi: 1.0, per_axis: 3 }.points().unwrap();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[5].features(), &[1.0, 0.5]);
    }
}
