use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fed::client::train_selected;
use crate::fed::trace::Checkpoint;
use crate::fed::{
    aggregate, sample_clients, ClientState, ClientUpdate, LocalTask, MetricTrace, RoundConfig,
    RoundRecord, Variant, DIVERGENCE_LOSS,
};
use crate::fedos::{attach_unknown_caches, mask_unknown};
use crate::nn::{argmax, init_weights, Batch, Mode, ModelSpec, Real, WeightSet};

const EVAL_CHUNK: usize = 250;

/// Server-side data and the client population.
#[derive(Clone, Debug)]
pub struct Federation<'a> {
    pub train: &'a Dataset,
    /// Server validation split used for per-round accuracy.
    pub val: &'a Dataset,
    /// Held-out split scored only at checkpoint rounds.
    pub test: Option<&'a Dataset>,
    pub clients: Vec<ClientState>,
}

#[derive(Clone, Debug)]
pub struct RunOptions<T> {
    /// Centralized reference accuracy in `(0, 1]` for relative accuracy.
    pub reference_accuracy: f64,
    /// Recorded in the trace only.
    pub alpha: f64,
    /// Rounds at which the best-so-far weights are scored on the test split.
    pub checkpoints: Vec<usize>,
    pub header: Vec<(String, String)>,
    /// Starting weights; seeded initialisation when absent.
    pub initial: Option<WeightSet<T>>,
}

impl<T> RunOptions<T> {
    pub fn new(reference_accuracy: f64, alpha: f64) -> Self {
        RunOptions {
            reference_accuracy,
            alpha,
            checkpoints: Vec::new(),
            header: Vec::new(),
            initial: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BestWeights<T> {
    pub weights: WeightSet<T>,
    pub val_acc: f64,
    pub round: usize,
}

#[derive(Clone, Debug)]
pub struct GlobalState<T> {
    pub weights: WeightSet<T>,
    pub round: usize,
    /// Highest validation accuracy seen; earliest round wins ties.
    pub best: Option<BestWeights<T>>,
    /// Global label counts `p(y)` over all clients' data.
    pub label_counts: Vec<usize>,
}

/// Global label counts over the union of client data.
pub fn label_distribution(clients: &[ClientState], classes: usize) -> Vec<usize> {
    let mut p = vec![0; classes];
    for c in clients {
        for (acc, &h) in p.iter_mut().zip(&c.histogram) {
            *acc += h;
        }
    }
    p
}

/// Top-1 accuracy. With `mask` and an unknown head, predictions are
/// restricted to the known classes.
pub fn evaluate<T: Real>(spec: &ModelSpec, weights: &WeightSet<T>, ds: &Dataset, mask: bool) -> Result<f64> {
    let starts: Vec<usize> = (0..ds.len()).step_by(EVAL_CHUNK).collect();
    let correct: Vec<usize> = starts
        .par_iter()
        .map(|&s| -> Result<usize> {
            let idx: Vec<usize> = (s..(s + EVAL_CHUNK).min(ds.len())).collect();
            let batch: Batch<T> = ds.batch(&idx);
            let logits = crate::nn::forward(spec, weights, &batch, Mode::Eval)?;
            Ok((0..batch.len())
                .filter(|&i| {
                    let row = logits.row(i);
                    let pred = if mask && spec.has_unknown_head {
                        mask_unknown(row)
                    } else {
                        argmax(row)
                    };
                    pred == batch.labels[i]
                })
                .count())
        })
        .collect::<Result<_>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / ds.len() as f64)
}

fn check_reference(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "reference accuracy {r} outside (0, 1]"
        )))
    }
}

/// Synchronous rounds: sample clients, train them from the current global
/// weights, aggregate, evaluate on the server split, track the best weights.
pub fn run_training<T: Real>(
    spec: &ModelSpec,
    federation: &Federation,
    cfg: &RoundConfig,
    variant: &Variant,
    opts: RunOptions<T>,
) -> Result<(GlobalState<T>, MetricTrace)> {
    cfg.validate()?;
    variant.validate()?;
    spec.validate()?;
    check_reference(opts.reference_accuracy)?;
    if federation.clients.is_empty() {
        return Err(Error::InvalidArgument("federation has no clients".into()));
    }
    if matches!(variant, Variant::FedOs(_)) && !spec.has_unknown_head {
        return Err(Error::Model("FedOS needs a model with an unknown head".into()));
    }
    let k = federation.train.class_count();
    if k != spec.num_known_classes {
        return Err(Error::Model(format!(
            "model has {} known classes, data {k}",
            spec.num_known_classes
        )));
    }

    let clients = match variant {
        Variant::FedOs(u) if !u.resample_per_epoch => {
            let mut c = federation.clients.clone();
            attach_unknown_caches(&mut c, u, cfg.seed, federation.train, k)?;
            c
        }
        _ => federation.clients.clone(),
    };
    let label_counts = label_distribution(&clients, k);
    let weights = match opts.initial {
        Some(w) => {
            w.check_network(&spec.network)?;
            w
        }
        None => init_weights::<T>(&spec.network, cfg.seed)?,
    };

    let mut trace = MetricTrace::new(variant.name(), opts.alpha, cfg.seed, opts.reference_accuracy);
    trace.header = opts.header;
    let mut state = GlobalState {
        weights,
        round: 0,
        best: None,
        label_counts,
    };
    let mut scored: Option<(usize, f64)> = None;

    for round in 1..=cfg.rounds {
        let selected = sample_clients(clients.len(), cfg.client_fraction, cfg.seed, round);
        let task = LocalTask {
            spec,
            train: federation.train,
            cfg,
            variant,
            global_counts: &state.label_counts,
            round,
        };
        let outcomes = train_selected(&task, &state.weights, &clients, &selected)?;
        let n: usize = outcomes.iter().map(|o| o.samples).sum();
        let loss = outcomes.iter().map(|o| o.mean_loss * o.samples as f64).sum::<f64>() / n as f64;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { round, loss });
        }
        let updates: Vec<ClientUpdate<T>> = outcomes
            .into_iter()
            .map(|o| ClientUpdate {
                client: o.client,
                weights: o.weights,
                samples: o.samples,
            })
            .collect();
        state.weights = aggregate(&updates)?;
        if !state.weights.is_finite() {
            return Err(Error::Diverged { round, loss: f64::NAN });
        }
        state.round = round;

        let val_acc = evaluate(spec, &state.weights, federation.val, true)?;
        if state.best.as_ref().is_none_or(|b| val_acc > b.val_acc) {
            state.best = Some(BestWeights {
                weights: state.weights.clone(),
                val_acc,
                round,
            });
        }
        trace.records.push(RoundRecord {
            round,
            train_loss: loss,
            val_acc,
            rel_val_acc: trace.relative(val_acc),
            selected,
        });

        if let (true, Some(test), Some(best)) =
            (opts.checkpoints.contains(&round), federation.test, state.best.as_ref())
        {
            let test_acc = match scored {
                Some((r, acc)) if r == best.round => acc,
                _ => evaluate(spec, &best.weights, test, true)?,
            };
            scored = Some((best.round, test_acc));
            trace.checkpoints.push(Checkpoint {
                round,
                best_round: best.round,
                best_val_acc: best.val_acc,
                test_acc,
                rel_test_acc: trace.relative(test_acc),
            });
        }
    }
    Ok((state, trace))
}
