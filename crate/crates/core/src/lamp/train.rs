//! Layer-wise ("all-layer") training of the unrolled network.

use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grad::{gradient_probe, loss_and_gradient, visit_params, ParamClass, ProbeReport};
use super::{evaluate, LampParams, LampProblem, LampSample};
use crate::error::{domain, Error, Result};
use crate::rng::{rng_from_seed, stream_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub steps_per_stage: usize,
    pub learning_rate: f64,
    /// Samples per step; 0 uses the whole training set.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// 1-based stages during which the dictionary grid is trained.
    pub dict_active_layers: Vec<usize>,
    pub run_gradient_probe: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            steps_per_stage: 200,
            learning_rate: 1e-3,
            batch_size: 200,
            optimizer: OptimizerKind::Gd,
            dict_active_layers: vec![1, 2],
            run_gradient_probe: true,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(domain(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.dict_active_layers.contains(&0) {
            return Err(domain("dictionary stages are 1-based"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub step_losses: Vec<f64>,
    /// The stage raised the training loss and was undone.
    pub reverted: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LampParams,
    pub stages: Vec<StageRecord>,
    pub initial_validation_loss: f64,
    pub final_validation_loss: f64,
    /// Training ended worse on validation than the initial parameters, which were returned instead.
    pub fell_back: bool,
    pub probe: Option<ProbeReport>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MIN_GRID_DISTANCE: f64 = 1e-6;
const ANGLE_MARGIN: f64 = 1e-6;

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn direction(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        grad.iter()
            .enumerate()
            .map(|(i, g)| {
                self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS)
            })
            .collect()
    }
}

fn is_active(class: ParamClass, layer: Option<usize>, stage: usize, grid: bool) -> bool {
    match class {
        ParamClass::B | ParamClass::GMap | ParamClass::FMap => layer.is_some_and(|l| l < stage),
        ParamClass::Gamma | ParamClass::Epsilon => true,
        ParamClass::GridDistance | ParamClass::GridAngle => grid,
    }
}

/// Trains stage `t = 1..=T` on the `t`-layer network over layers `1..=t` plus the
/// shared prior (and the grid in the configured stages). A stage that ends with a
/// higher training loss than it started with is undone.
pub fn train_lamp(
    train: &[LampSample],
    validation: &[LampSample],
    problem: &LampProblem,
    init: LampParams,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(domain("training and validation sets must be non-empty"));
    }
    let probe = if schedule.run_gradient_probe {
        let report = gradient_probe(init.grid.is_some(), stream_seed(seed, Stream::Training, u64::MAX))?;
        if !report.passed() {
            return Err(Error::GradientCheck(format!("{:?}", report.worst)));
        }
        Some(report)
    } else {
        None
    };
    let layers = init.layers();
    let initial_validation_loss = evaluate(validation, problem, &init, layers)?;
    let mut params = init.clone();
    let mut stages = Vec::with_capacity(layers);
    let batch = if schedule.batch_size == 0 { train.len() } else { schedule.batch_size.min(train.len()) };

    for stage in 1..=layers {
        let grid_on = params.grid.is_some() && schedule.dict_active_layers.contains(&stage);
        let loss_before = evaluate(train, problem, &params, stage)?;
        let snapshot = params.clone();
        let mut rng = rng_from_seed(stream_seed(seed, Stream::Training, stage as u64));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut cursor = 0;
        let mut adam = None;
        let mut step_losses = Vec::with_capacity(schedule.steps_per_stage);
        for step in 0..schedule.steps_per_stage {
            if cursor + batch > order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let mb: Vec<LampSample> = order[cursor..cursor + batch].iter().map(|&i| train[i].clone()).collect();
            cursor += batch;
            let (loss, mut grads) = loss_and_gradient(&mb, problem, &params, stage, grid_on)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { stage, step });
            }
            step_losses.push(loss);
            let mut flat = Vec::new();
            grads.for_each(|c, l, g| flat.push(if is_active(c, l, stage, grid_on) { *g } else { 0.0 }));
            let dir = match schedule.optimizer {
                OptimizerKind::Gd => flat,
                OptimizerKind::Adam => adam.get_or_insert_with(|| Adam::new(flat.len())).direction(&flat),
            };
            let mut i = 0;
            visit_params(&mut params, |c, l, x| {
                if is_active(c, l, stage, grid_on) {
                    *x -= schedule.learning_rate * dir[i];
                }
                i += 1;
            });
            if let Some(grid) = params.grid.as_mut() {
                grid.distances.iter_mut().for_each(|d| *d = d.max(MIN_GRID_DISTANCE));
                let lim = FRAC_PI_2 - ANGLE_MARGIN;
                grid.angles_rad.iter_mut().for_each(|a| *a = a.clamp(-lim, lim));
            }
        }
        let loss_after = evaluate(train, problem, &params, stage)?;
        if !loss_after.is_finite() {
            return Err(Error::NonFiniteLoss { stage, step: schedule.steps_per_stage });
        }
        let reverted = loss_after > loss_before;
        if reverted {
            params = snapshot;
        }
        stages.push(StageRecord { stage, loss_before, loss_after, step_losses, reverted });
    }

    let mut final_validation_loss = evaluate(validation, problem, &params, layers)?;
    let fell_back = final_validation_loss > initial_validation_loss;
    if fell_back {
        params = init;
        final_validation_loss = initial_validation_loss;
    }
    Ok(TrainOutcome { params, stages, initial_validation_loss, final_validation_loss, fell_back, probe })
}
