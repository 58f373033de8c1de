//! TOML configuration with one section per module. Every key has a flag of
//! the same name (underscores become dashes); flags win over the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sal_core::data::{SPLIT_SEED, SPLIT_TRAIN_FRACTION};
use sal_core::{DatasetKind, ExperimentSpec, Method, Preset, SweepAxis};
use serde::{Deserialize, Serialize};

/// Default directory searched for dataset files.
pub const DATA_ROOT: &str = "data";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Methods to train; `bp` selects the baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Vec<Method>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_areas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_sel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory receiving `metrics.csv`, `aggregate.csv` and `config.toml`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn take<T>(low: &mut Option<T>, high: Option<T>) {
    if high.is_some() {
        *low = high;
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Field-wise override: every value set in `flags` replaces ours.
    pub fn merge(mut self, flags: Settings) -> Self {
        take(&mut self.data.dataset, flags.data.dataset);
        take(&mut self.data.path, flags.data.path);
        take(&mut self.network.method, flags.network.method);
        take(&mut self.network.n_areas, flags.network.n_areas);
        take(&mut self.network.depth, flags.network.depth);
        take(&mut self.network.width, flags.network.width);
        take(&mut self.network.local_weight, flags.network.local_weight);
        take(&mut self.training.epochs, flags.training.epochs);
        take(&mut self.training.batch, flags.training.batch);
        take(&mut self.training.lr, flags.training.lr);
        take(&mut self.training.lr_sel, flags.training.lr_sel);
        take(&mut self.training.seeds, flags.training.seeds);
        take(&mut self.experiment.preset, flags.experiment.preset);
        take(&mut self.experiment.baseline, flags.experiment.baseline);
        take(&mut self.experiment.sweep, flags.experiment.sweep);
        take(&mut self.experiment.values, flags.experiment.values);
        take(&mut self.experiment.jobs, flags.experiment.jobs);
        take(&mut self.output.path, flags.output.path);
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}

/// What a run command does with the merged settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    /// One configuration, no sweep.
    Train,
    /// The preset's sweep or the configured one.
    Sweep,
    /// SAL against MoE.
    Compare,
}

/// Fully resolved run: the experiment plus where to put results.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ExperimentSpec,
    pub jobs: usize,
    pub output: Option<PathBuf>,
    /// Every key filled in, for echoing and for the sidecar file.
    pub effective: Settings,
}

impl Resolved {
    /// The effective configuration as TOML, preceded by comment lines on how
    /// the data is split and normalized.
    pub fn describe(&self) -> String {
        let kind = self.spec.dataset;
        let mut out = String::from("# effective configuration\n");
        if kind.has_canonical_split() {
            let _ = writeln!(out, "# split: published train/test files");
        } else {
            let _ = writeln!(
                out,
                "# split: stratified {:.0}/{:.0}, seed {SPLIT_SEED}",
                100.0 * SPLIT_TRAIN_FRACTION,
                100.0 * (1.0 - SPLIT_TRAIN_FRACTION)
            );
        }
        let _ = writeln!(
            out,
            "# normalization: {}, fitted on the training split",
            kind.default_normalization()
        );
        out.push_str(&self.effective.to_toml());
        out
    }
}

pub fn resolve(settings: Settings, kind: RunKind) -> Result<Resolved, String> {
    let dataset = settings
        .data
        .dataset
        .ok_or("no dataset given (use --dataset or [data] dataset)")?;
    let path = settings
        .data
        .path
        .clone()
        .unwrap_or_else(|| dataset.default_location(Path::new(DATA_ROOT)));
    let preset = match (kind, settings.experiment.preset) {
        (RunKind::Compare, Some(p)) if p != Preset::MoeCompare => {
            return Err(format!("compare runs the moe-compare preset, not {p}"))
        }
        (RunKind::Compare, _) => Preset::MoeCompare,
        (_, Some(p)) => p,
        (_, None) => Preset::Basic,
    };
    let mut spec = ExperimentSpec::preset(preset, dataset, path.clone());

    let net = &settings.network;
    if let Some(methods) = &net.method {
        spec.methods = methods
            .iter()
            .copied()
            .filter(|&m| m != Method::Bp)
            .collect();
        spec.methods.dedup();
        spec.baseline = methods.contains(&Method::Bp);
    }
    if let Some(v) = settings.experiment.baseline {
        spec.baseline = v;
    }
    if let Some(v) = net.n_areas {
        spec.n_areas = v;
    }
    if let Some(v) = net.depth {
        spec.depth = v;
    }
    if let Some(v) = net.width {
        spec.hidden = v;
    }
    if let Some(v) = net.local_weight {
        spec.local_weight = v;
    }
    let tr = &settings.training;
    if let Some(v) = tr.epochs {
        spec.epochs = v;
    }
    if let Some(v) = tr.batch {
        spec.batch_size = v;
    }
    if let Some(v) = tr.lr {
        spec.lr_net = v;
    }
    if tr.lr_sel.is_some() {
        spec.lr_sel = tr.lr_sel;
    }
    if let Some(v) = &tr.seeds {
        spec.seeds = v.clone();
    }

    let ex = &settings.experiment;
    match kind {
        RunKind::Train => {
            if ex.sweep.is_some_and(|s| s != SweepAxis::None)
                || ex.values.as_ref().is_some_and(|v| !v.is_empty())
            {
                return Err(
                    "train runs a single configuration; use `sweep` for --sweep/--values".into(),
                );
            }
            spec.sweep = SweepAxis::None;
            spec.sweep_values.clear();
        }
        RunKind::Sweep | RunKind::Compare => {
            if let Some(s) = ex.sweep {
                spec.sweep = s;
            }
            if let Some(v) = &ex.values {
                spec.sweep_values = v.clone();
            }
            if kind == RunKind::Sweep && spec.sweep == SweepAxis::None {
                return Err(
                    "sweep needs an axis: use a sweeping preset or --sweep with --values".into(),
                );
            }
        }
    }
    spec.validate().map_err(|e| e.to_string())?;

    let jobs = ex.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err("--jobs must be at least 1".into());
    }
    let mut methods = Vec::new();
    if spec.baseline {
        methods.push(Method::Bp);
    }
    methods.extend(&spec.methods);
    let effective = Settings {
        data: DataSection {
            dataset: Some(dataset),
            path: Some(path),
        },
        network: NetworkSection {
            method: Some(methods),
            n_areas: Some(spec.n_areas),
            depth: Some(spec.depth),
            width: Some(spec.hidden),
            local_weight: Some(spec.local_weight),
        },
        training: TrainingSection {
            epochs: Some(spec.epochs),
            batch: Some(spec.batch_size),
            lr: Some(spec.lr_net),
            lr_sel: Some(spec.lr_sel()),
            seeds: Some(spec.seeds.clone()),
        },
        experiment: ExperimentSection {
            preset: Some(preset),
            baseline: Some(spec.baseline),
            sweep: Some(spec.sweep),
            values: Some(spec.sweep_values.clone()),
            jobs: Some(jobs),
        },
        output: settings.output.clone(),
    };
    Ok(Resolved {
        spec,
        jobs,
        output: settings.output.path,
        effective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digits() -> Settings {
        let mut s = Settings::default();
        s.data.dataset = Some(DatasetKind::Digits);
        s
    }

    #[test]
    fn flags_override_file_values() {
        let mut file = digits();
        file.training.epochs = Some(3);
        file.training.lr = Some(0.5);
        let mut flags = Settings::default();
        flags.training.epochs = Some(7);
        let merged = file.merge(flags);
        assert_eq!(merged.training.epochs, Some(7));
        assert_eq!(merged.training.lr, Some(0.5));
    }

    #[test]
    fn train_with_single_method_drops_baseline() {
        let mut s = digits();
        s.network.method = Some(vec![Method::Sal]);
        s.network.n_areas = Some(16);
        let r = resolve(s, RunKind::Train).unwrap();
        let labels: Vec<String> = r
            .spec
            .runs(64, 10)
            .unwrap()
            .into_iter()
            .map(|r| r.label)
            .collect();
        assert_eq!(labels, ["sal-16"]);
    }

    #[test]
    fn bp_method_means_baseline() {
        let mut s = digits();
        s.network.method = Some(vec![Method::Bp]);
        let r = resolve(s, RunKind::Train).unwrap();
        assert!(r.spec.baseline && r.spec.methods.is_empty());
    }

    #[test]
    fn train_rejects_sweep_keys() {
        let mut s = digits();
        s.experiment.values = Some(vec![1, 2]);
        assert!(resolve(s, RunKind::Train).is_err());
    }

    #[test]
    fn sweep_needs_an_axis() {
        assert!(resolve(digits(), RunKind::Sweep).is_err());
        let mut s = digits();
        s.experiment.preset = Some(Preset::Depth);
        let r = resolve(s, RunKind::Sweep).unwrap();
        assert_eq!(r.spec.sweep_values, [4, 16, 64, 128]);
    }

    #[test]
    fn effective_config_round_trips() {
        let mut s = digits();
        s.training.seeds = Some(vec![4, 5]);
        let r = resolve(s, RunKind::Compare).unwrap();
        let back: Settings = toml::from_str(&r.describe()).unwrap();
        assert_eq!(back, r.effective);
        let again = resolve(back, RunKind::Compare).unwrap();
        assert_eq!(again.effective, r.effective);
        assert_eq!(
            again.spec.runs(64, 10).unwrap(),
            r.spec.runs(64, 10).unwrap()
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("[training]\nepoch = 3\n").is_err());
    }
}
