//! Self-paced task scheduler.
//!
//! `v[i] == true` puts node `i` in the clustering task, `false` in the
//! discrimination task. The clustering quota grows by `pace · n / T` per epoch
//! and is filled with the lowest-entropy nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack when flooring the fractional quota, so `t · (n/T)` accumulated in
/// floating point lands on the intended integer.
const QUOTA_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub pace: f64,
    /// Pins the clustering share at `round(ratio · n)` every epoch.
    pub fixed_ratio: Option<f64>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            pace: 1.5,
            fixed_ratio: None,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pace >= 0.0 && self.pace.is_finite()) {
            return Err(Error::Config(format!("curriculum.pace must be non-negative, got {}", self.pace)));
        }
        if let Some(r) = self.fixed_ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("curriculum.fixed_ratio must lie in [0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

/// How the indicator evolves over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    SelfPaced { pace: f64 },
    FixedRatio(f64),
    /// Every node in the discrimination task, every epoch.
    AllDiscrimination,
    /// Every node in the clustering task, every epoch.
    AllClustering,
}

/// Loss weights derived from the indicator: the clustering task is weighted by
/// the share of nodes performing it, the discrimination task by the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskWeights {
    pub clustering: f64,
    pub discrimination: f64,
}

pub fn adaptive_weights(v: &[bool]) -> TaskWeights {
    if v.is_empty() {
        return TaskWeights {
            clustering: 0.0,
            discrimination: 1.0,
        };
    }
    let clustering = v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
    TaskWeights {
        clustering,
        discrimination: 1.0 - clustering,
    }
}

/// The `count` lowest-entropy nodes, ties broken by lower index.
pub fn select_indicator(entropy: &[f64], count: usize) -> Result<Vec<bool>> {
    let n = entropy.len();
    if count > n {
        return Err(Error::InvalidArgument(format!("cannot select {count} of {n} nodes")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| entropy[a].total_cmp(&entropy[b]).then(a.cmp(&b)));
    let mut v = vec![false; n];
    for &i in &order[..count] {
        v[i] = true;
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    v: Vec<bool>,
    quota: f64,
    epoch: usize,
    horizon: usize,
    schedule: Schedule,
    primed: bool,
}

impl CurriculumState {
    pub fn new(n: usize, horizon: usize, schedule: Schedule) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        let v = match schedule {
            Schedule::AllClustering => vec![true; n],
            _ => vec![false; n],
        };
        let quota = match schedule {
            Schedule::AllClustering => n as f64,
            _ => 0.0,
        };
        Ok(Self {
            v,
            quota,
            epoch: 0,
            horizon,
            schedule,
            primed: !matches!(schedule, Schedule::FixedRatio(_)),
        })
    }

    pub fn from_config(n: usize, horizon: usize, cfg: &CurriculumConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = match cfg.fixed_ratio {
            Some(r) => Schedule::FixedRatio(r),
            None => Schedule::SelfPaced { pace: cfg.pace },
        };
        Self::new(n, horizon, schedule)
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn indicator(&self) -> &[bool] {
        &self.v
    }

    pub fn active_count(&self) -> usize {
        self.v.iter().filter(|&&b| b).count()
    }

    pub fn quota(&self) -> f64 {
        self.quota
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    /// Integer clustering count implied by the quota.
    pub fn quota_count(&self) -> usize {
        ((self.quota + QUOTA_SLACK).floor() as usize).min(self.n())
    }

    /// `quota ← min(quota + pace · n / T, n)`. No-op outside self-paced mode.
    pub fn update_quota(&mut self) {
        if let Schedule::SelfPaced { pace } = self.schedule {
            let n = self.n() as f64;
            self.quota = (self.quota + pace * n / self.horizon as f64).min(n);
        }
    }

    /// Indicator to use for the current epoch. A fixed-ratio schedule selects
    /// its first indicator from the first entropy it sees.
    pub fn indicator_for_epoch(&mut self, entropy: &[f64]) -> Result<&[bool]> {
        if !self.primed {
            self.resolve(entropy)?;
            self.primed = true;
        }
        Ok(&self.v)
    }

    /// End-of-epoch update: grow the quota, then re-solve the indicator
    /// against the epoch's entropy.
    pub fn advance(&mut self, entropy: &[f64]) -> Result<()> {
        self.update_quota();
        self.resolve(entropy)?;
        self.epoch += 1;
        Ok(())
    }

    fn resolve(&mut self, entropy: &[f64]) -> Result<()> {
        if entropy.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "entropy has {} entries, curriculum tracks {} nodes",
                entropy.len(),
                self.n()
            )));
        }
        let count = match self.schedule {
            Schedule::SelfPaced { .. } => self.quota_count(),
            Schedule::FixedRatio(r) => ((r * self.n() as f64).round() as usize).min(self.n()),
            Schedule::AllDiscrimination | Schedule::AllClustering => return Ok(()),
        };
        self.v = select_indicator(entropy, count)?;
        Ok(())
    }
}
