//! Multi-seed training runs, parameter sweeps and metrics output.

mod gradcheck;
mod metrics;
mod run;

pub use gradcheck::{grad_check_suite, GradCheck, GradCheckReport};
pub use metrics::{
    aggregate, read_records_csv, write_aggregates_csv, write_records_csv, AggregateResult,
    MetricsRecord, Summary,
};
pub use run::{run_aggregate, run_single, ExperimentOutput, Splits};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DatasetKind;
use crate::error::{Result, SalError};
use crate::network::{Method, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two-layer network, hidden 256, ReLU, routing in the first layer.
    Basic,
    /// Residual tanh networks with linear ends, swept over depth.
    Depth,
    /// Residual tanh networks at fixed depth, swept over width.
    Width,
    /// SAL against top-1 MoE at matching area/expert counts.
    MoeCompare,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Basic,
        Preset::Depth,
        Preset::Width,
        Preset::MoeCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Basic => "basic",
            Preset::Depth => "depth",
            Preset::Width => "width",
            Preset::MoeCompare => "moe-compare",
        }
    }

    fn is_deep(self) -> bool {
        matches!(self, Preset::Depth | Preset::Width)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase().replace('_', "-");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == lower || (lower == "moe" && *p == Preset::MoeCompare))
            .ok_or_else(|| {
                format!("unknown preset `{s}` (expected basic, depth, width or moe-compare)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    None,
    Areas,
    Depth,
    Width,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::None => "none",
            SweepAxis::Areas => "areas",
            SweepAxis::Depth => "depth",
            SweepAxis::Width => "width",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SweepAxis::None),
            "areas" | "n-areas" | "n_areas" => Ok(SweepAxis::Areas),
            "depth" => Ok(SweepAxis::Depth),
            "width" | "hidden" => Ok(SweepAxis::Width),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected none, areas, depth or width)"
            )),
        }
    }
}

/// Everything needed to reproduce one table or figure cell group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetKind,
    pub data_path: PathBuf,
    pub preset: Preset,
    /// Routed methods to run (SAL and/or MoE).
    pub methods: Vec<Method>,
    /// Also run the BP baseline.
    pub baseline: bool,
    pub n_areas: usize,
    pub depth: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_net: f64,
    /// Selector learning rate; `None` uses `lr_net`.
    pub lr_sel: Option<f64>,
    pub local_weight: f64,
    pub seeds: Vec<u64>,
    pub sweep: SweepAxis,
    pub sweep_values: Vec<usize>,
}

/// One network configuration within an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub config: NetworkConfig,
}

impl ExperimentSpec {
    pub fn preset(preset: Preset, dataset: DatasetKind, data_path: impl Into<PathBuf>) -> Self {
        let mut spec = Self {
            dataset,
            data_path: data_path.into(),
            preset,
            methods: vec![Method::Sal],
            baseline: true,
            n_areas: 16,
            depth: 2,
            hidden: 256,
            epochs: 25,
            batch_size: 16,
            lr_net: 1e-4,
            lr_sel: None,
            local_weight: 1.0,
            seeds: (1..=5).collect(),
            sweep: SweepAxis::None,
            sweep_values: Vec::new(),
        };
        match preset {
            Preset::Basic => {}
            Preset::Depth => {
                spec.n_areas = 4;
                spec.depth = 64;
                spec.sweep = SweepAxis::Depth;
                spec.sweep_values = vec![4, 16, 64, 128];
            }
            Preset::Width => {
                spec.n_areas = 4;
                spec.depth = 64;
                spec.hidden = 1024;
                spec.sweep = SweepAxis::Width;
                spec.sweep_values = vec![1024, 2048];
            }
            Preset::MoeCompare => {
                spec.methods = vec![Method::Sal, Method::Moe];
                spec.baseline = false;
                spec.sweep = SweepAxis::Areas;
                spec.sweep_values = vec![4, 16];
            }
        }
        spec
    }

    pub fn lr_sel(&self) -> f64 {
        self.lr_sel.unwrap_or(self.lr_net)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SalError::InvalidConfig(m.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.sweep != SweepAxis::None && self.sweep_values.is_empty() {
            return bad("a sweep needs at least one value");
        }
        if self.sweep_values.contains(&0) {
            return bad("sweep values must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if self.methods.contains(&Method::Bp) {
            return bad("list routed methods only; the BP baseline is controlled by `baseline`");
        }
        if self.methods.is_empty() && !self.baseline {
            return bad("nothing to run: no methods and no baseline");
        }
        if self.n_areas == 0 || self.depth == 0 || self.hidden == 0 {
            return bad("n_areas, depth and hidden must be positive");
        }
        Ok(())
    }

    /// Sweep values, or the single configured point when not sweeping.
    fn points(&self) -> Vec<Option<usize>> {
        if self.sweep == SweepAxis::None {
            vec![None]
        } else {
            self.sweep_values.iter().copied().map(Some).collect()
        }
    }

    /// Deep (residual, tanh) networks are used by the depth and width presets
    /// and whenever depth is swept or differs from 2.
    fn uses_deep_network(&self) -> bool {
        self.preset.is_deep() || self.sweep == SweepAxis::Depth || self.depth != 2
    }

    fn label_suffix(&self, depth: usize, hidden: usize) -> String {
        let mut tail = String::new();
        if self.uses_deep_network() {
            tail.push_str(&format!("-d{depth}"));
        }
        if self.sweep == SweepAxis::Width {
            tail.push_str(&format!("-w{hidden}"));
        }
        tail
    }

    /// Expands the spec into labeled network configurations. The seed list
    /// never affects which runs are produced.
    pub fn runs(&self, input_dim: usize, classes: usize) -> Result<Vec<RunSpec>> {
        self.validate()?;
        let mut runs = Vec::new();
        let mut push = |label: String, method: Method, n: usize, depth: usize, hidden: usize| {
            let mut config = if self.uses_deep_network() {
                NetworkConfig::deep(method, input_dim, hidden, classes, depth, n)
            } else {
                NetworkConfig::shallow(method, input_dim, hidden, classes, n)
            };
            config.lr_net = self.lr_net;
            config.lr_sel = self.lr_sel();
            config.local_weight = self.local_weight;
            runs.push(RunSpec { label, config });
        };

        let mut baseline_done = false;
        for point in self.points() {
            let (n, depth, hidden) = match (self.sweep, point) {
                (SweepAxis::Areas, Some(v)) => (v, self.depth, self.hidden),
                (SweepAxis::Depth, Some(v)) => (self.n_areas, v, self.hidden),
                (SweepAxis::Width, Some(v)) => (self.n_areas, self.depth, v),
                _ => (self.n_areas, self.depth, self.hidden),
            };
            let tail = self.label_suffix(depth, hidden);
            // the baseline has no areas, so an area sweep runs it once
            if self.baseline && !(self.sweep == SweepAxis::Areas && baseline_done) {
                push(format!("baseline{tail}"), Method::Bp, 1, depth, hidden);
                baseline_done = true;
            }
            for &m in &self.methods {
                push(format!("{m}-{n}{tail}"), m, n, depth, hidden);
            }
        }
        for r in &runs {
            r.config.validate()?;
        }
        Ok(runs)
    }
}
