use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::metrics::{aggregate, AggregateResult, MetricsRecord};
use super::{ExperimentSpec, RunSpec};
use crate::data::{BatchIterator, Dataset};
use crate::error::{Result, SalError};
use crate::network::Network;

/// Mixed into the run seed for mini-batch order so it does not share a
/// stream with parameter initialization.
const BATCH_ORDER_SALT: u64 = 0xBA7C_4E5D_0000_0000;

/// Normalized training and held-out data.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

impl Splits {
    fn check(&self) -> Result<()> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(SalError::Data("empty training or held-out split".into()));
        }
        if self.train.feature_count() != self.test.feature_count()
            || self.train.class_count() != self.test.class_count()
        {
            return Err(SalError::Data(
                "training and held-out splits disagree on features or classes".into(),
            ));
        }
        Ok(())
    }
}

/// Trains one configuration from `seed` and evaluates on the held-out split
/// after every epoch.
pub fn run_single(
    run: &RunSpec,
    splits: &Splits,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    progress: Option<&(dyn Fn(&MetricsRecord) + Sync)>,
) -> Result<Vec<MetricsRecord>> {
    splits.check()?;
    let mut net = Network::build(run.config.clone(), seed)?;
    let batches = BatchIterator::new(splits.train.len(), batch_size, seed ^ BATCH_ORDER_SALT);
    let mut records = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut loss_sum = 0.0;
        for idx in batches.epoch(epoch) {
            let (x, y) = splits.train.batch(&idx);
            loss_sum += net.train_step(&x, &y)? * idx.len() as f64;
        }
        let eval = net.evaluate(splits.test.features(), splits.test.labels())?;
        let record = MetricsRecord {
            run_label: run.label.clone(),
            seed,
            epoch: epoch + 1,
            train_loss: loss_sum / splits.train.len() as f64,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
        };
        if let Some(report) = progress {
            report(&record);
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Ordered by run, then seed (as listed in the spec), then epoch.
    pub records: Vec<MetricsRecord>,
    pub aggregates: Vec<AggregateResult>,
}

/// Runs every configuration of `spec` for every seed on up to `jobs`
/// threads. Output order does not depend on `jobs`.
pub fn run_aggregate(
    spec: &ExperimentSpec,
    splits: &Splits,
    jobs: usize,
    progress: Option<&(dyn Fn(&MetricsRecord) + Sync)>,
) -> Result<ExperimentOutput> {
    splits.check()?;
    let runs = spec.runs(splits.train.feature_count(), splits.train.class_count())?;
    let tasks: Vec<(&RunSpec, u64)> = runs
        .iter()
        .flat_map(|r| spec.seeds.iter().map(move |&s| (r, s)))
        .collect();

    let slots: Vec<Mutex<Option<Result<Vec<MetricsRecord>>>>> =
        tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(run, seed)) = tasks.get(i) else {
            break;
        };
        let out = run_single(run, splits, spec.epochs, spec.batch_size, seed, progress);
        *slots[i].lock().expect("result slot poisoned") = Some(out);
    };
    let jobs = jobs.clamp(1, tasks.len().max(1));
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }

    let mut records = Vec::new();
    for slot in slots {
        let out = slot
            .into_inner()
            .expect("result slot poisoned")
            .expect("every task ran");
        records.extend(out?);
    }
    let aggregates = aggregate(&records);
    Ok(ExperimentOutput {
        records,
        aggregates,
    })
}
