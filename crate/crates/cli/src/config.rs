use mvmot::metrics::MetricConfig;
use mvmot::skeleton::KeypointConvention;
use mvmot::TrackerConfig;
use serde::{Deserialize, Serialize};

/// Everything a command needs besides its input files.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub metrics: MetricConfig,
    /// Overrides the scenario seed when set.
    pub seed: Option<u64>,
}

/// Command-line overrides applied on top of a loaded [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau_c: Option<f64>,
    pub tau_g: Option<f64>,
    pub max_misses: Option<u32>,
    pub bandwidth: Option<f64>,
    pub keypoints: Option<KeypointConvention>,
}

impl RunConfig {
    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(v) = o.tau_c {
            self.tracker.gating.tau_c = v;
        }
        if let Some(v) = o.tau_g {
            self.tracker.gating.tau_g = v;
        }
        if let Some(v) = o.max_misses {
            self.tracker.termination.max_misses = v;
        }
        if let Some(v) = o.bandwidth {
            self.tracker.birth.bandwidth = v;
        }
        if let Some(v) = o.keypoints {
            self.tracker.keypoints = v;
        }
        self
    }

    pub fn validate(&self) -> mvmot::Result<()> {
        self.tracker.validate()?;
        self.metrics.validate()
    }
}
