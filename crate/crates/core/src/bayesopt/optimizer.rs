//! The outer optimization loop and the acquisition step.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::acquisition::expected_improvement;
use super::gp::gp_fit_in_box;
use super::{BoConfig, BoHistory, BoRecord, SearchBounds};
use crate::error::{precondition, Result};

const LOCAL_SCALES: [f64; 3] = [0.1, 0.03, 0.01];
const LOSS_FLOOR: f64 = 1e-300;
const MIN_PENALTY: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossTolerance,
    StepTolerance,
    Budget,
}

#[derive(Clone, Debug)]
pub struct BoOutcome {
    pub w_opt: Vec<f64>,
    pub best_loss: f64,
    pub history: BoHistory,
    pub stop: StopReason,
}

/// Stratified design: each axis is split into `n` equal bins and every bin
/// receives exactly one point, with bins paired across axes at random.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut bins: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            bins.swap(i, rng.random_range(0..=i));
        }
        for (p, b) in pts.iter_mut().zip(bins) {
            p[d] = (b as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

fn surrogate_target(loss: f64) -> f64 {
    loss.max(LOSS_FLOOR).log10()
}

/// Proposes the next parameter vector.
///
/// While the history is shorter than the initial design this returns the
/// next design point; afterwards it maximizes expected improvement of the
/// log-loss surrogate over random and incumbent-local candidates.
pub fn bayes_step<R: Rng + ?Sized>(history: &BoHistory, bounds: &SearchBounds, config: &BoConfig, rng: &mut R) -> Result<Vec<f64>> {
    let dim = bounds.dim();
    let n = history.records.len();
    if n < config.initial_count(dim) || n < 2 {
        let u = match history.design.get(n) {
            Some(u) => u.clone(),
            None => (0..dim).map(|_| rng.random::<f64>()).collect(),
        };
        return Ok(bounds.from_unit(&u));
    }
    let Some(best) = history.incumbent else {
        return precondition("history has no incumbent");
    };

    let inputs: Vec<Vec<f64>> = history.records.iter().map(|r| bounds.to_unit(&r.w)).collect();
    let targets: Vec<f64> = history.records.iter().map(|r| surrogate_target(r.loss)).collect();
    let gp = gp_fit_in_box(&inputs, &targets, config.noise_floor, &vec![0.0; dim], &vec![1.0; dim])?;
    let best_target = targets[best];

    let mut candidates: Vec<Vec<f64>> = (0..config.candidates)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let anchor = &inputs[best];
    for i in 0..config.local_candidates {
        let normal = Normal::new(0.0, LOCAL_SCALES[i % LOCAL_SCALES.len()]).expect("positive scale");
        candidates.push(anchor.iter().map(|a| (a + normal.sample(rng)).clamp(0.0, 1.0)).collect());
    }

    let preds = gp.predict_many(&candidates);
    let scored: Vec<(f64, f64)> = preds.iter().map(|&(m, v)| (expected_improvement(m, v, best_target), m)).collect();
    let pick = select_candidate(&scored);
    Ok(bounds.from_unit(&candidates[pick]))
}

/// Index of the largest expected improvement given `(ei, mean)` pairs; when
/// no candidate improves, the lowest predicted mean.
pub fn select_candidate(scored: &[(f64, f64)]) -> usize {
    if scored.iter().all(|(ei, _)| *ei <= 0.0) {
        (0..scored.len()).min_by(|&a, &b| scored[a].1.total_cmp(&scored[b].1))
    } else {
        (0..scored.len()).max_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0).then(b.cmp(&a)))
    }
    .expect("candidate set is non-empty")
}

/// Minimizes `objective(w, evaluation_index)` over the box.
///
/// Stops when a loss drops below the loss tolerance, when two consecutive
/// parameter vectors are closer than the step tolerance in unit coordinates,
/// or when the evaluation budget is spent. Failed or non-finite evaluations
/// are recorded with a penalty and the search continues.
pub fn optimize<F, R>(mut objective: F, bounds: &SearchBounds, config: &BoConfig, rng: &mut R) -> Result<BoOutcome>
where
    F: FnMut(&[f64], usize) -> Result<f64>,
    R: Rng + ?Sized,
{
    config.validate()?;
    let dim = bounds.dim();
    let mut history = BoHistory {
        design: latin_hypercube(config.initial_count(dim).min(config.max_evaluations), dim, rng),
        ..Default::default()
    };
    let mut w = bounds.from_unit(&history.design[0]);
    let stop = loop {
        let k = history.records.len();
        let (loss, failed) = match objective(&w, k) {
            Ok(v) if v.is_finite() => (v, false),
            outcome => {
                let penalty = history.worst_finite().map_or(MIN_PENALTY, |v| (10.0 * v).max(MIN_PENALTY));
                log::warn!("evaluation {k} failed ({outcome:?}); recording penalty {penalty:e}");
                (penalty, true)
            }
        };
        log::debug!("evaluation {k}: w = {w:?}, loss = {loss:e}");
        history.push(BoRecord { w: w.clone(), loss, failed });
        if !failed && loss < config.loss_tolerance {
            break StopReason::LossTolerance;
        }
        if history.records.len() >= config.max_evaluations {
            break StopReason::Budget;
        }
        let next = bayes_step(&history, bounds, config, rng)?;
        let (a, b) = (bounds.to_unit(&w), bounds.to_unit(&next));
        let delta = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if delta < config.step_tolerance {
            break StopReason::StepTolerance;
        }
        w = next;
    };
    let best = history.best().expect("at least one evaluation");
    Ok(BoOutcome {
        w_opt: best.w.clone(),
        best_loss: best.loss,
        stop,
        history,
    })
}
