//! End-to-end gradient verification: the mean of the model output is
//! differentiated analytically through the whole network and compared
//! against central finite differences for sampled parameters of every
//! parameter group.

use rand::Rng as _;

use crate::error::Result;
use crate::model::forward::{forward, stage_named};
use crate::model::params::group_of;
use crate::model::{IptModel, ModelConfig, TaskId};
use crate::rng::derive_rng;
use crate::scalar::Scalar;
use crate::tensor::gradcheck::{normalized_error, CheckOutcome, FdParams, GradcheckReport};
use crate::tensor::{Sabotage, Tape, Tensor};

/// Seeded input image in [0,1] for the check.
fn check_input<E: Scalar>(size: usize, seed: u64) -> Tensor<E> {
    let mut rng = derive_rng(seed, &["gradcheck-input"]);
    let data: Vec<E> = (0..3 * size * size)
        .map(|_| E::from_f64(rng.random_range(0.0..1.0)))
        .collect();
    Tensor::new(vec![3, size, size], data).unwrap()
}

fn eval_loss(
    params: &[(String, Tensor<f64>)],
    cfg: &ModelConfig,
    input: &Tensor<f64>,
    task: TaskId,
) -> Result<f64> {
    let mut tape: Tape<f64> = Tape::new();
    let staged = stage_named(&mut tape, params, false);
    let img = tape.leaf(input.clone());
    let out = forward(&mut tape, &staged, cfg, img, task)?;
    let loss = tape.mean(out);
    Ok(tape.value(loss).item())
}

/// Check `samples_per_group` randomly sampled parameters from every
/// parameter group of the model against central finite differences of
/// mean(forward(input)). Gradients flow through the first configured
/// task's full path.
///
/// The analytic side runs at `E` (the mode under test); the numeric side
/// always runs in the f64 shadow, because f32 forward rounding noise at
/// 2h swamps small per-parameter gradients long before any backward-rule
/// bug would.
pub fn check_model_gradients<E: Scalar>(
    model: &IptModel,
    size: usize,
    samples_per_group: usize,
    seed: u64,
    fd: FdParams,
    sabotage: Option<Sabotage>,
) -> Result<GradcheckReport> {
    let cfg = model.config().clone();
    let task = cfg.tasks[0];
    let input: Tensor<E> = check_input(size, seed);
    let input_f64: Tensor<f64> = input.cast();
    let analytic_params: Vec<(String, Tensor<E>)> = model
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.cast()))
        .collect();
    let mut params: Vec<(String, Tensor<f64>)> = model
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.cast()))
        .collect();

    // Analytic pass at mode precision.
    let mut tape: Tape<E> = Tape::with_sabotage(sabotage);
    let staged = stage_named(&mut tape, &analytic_params, true);
    let img = tape.leaf(input.clone());
    let out = forward(&mut tape, &staged, &cfg, img, task)?;
    let loss = tape.mean(out);
    tape.backward(loss)?;

    // Sample coordinates per group.
    let mut groups: Vec<String> = params.iter().map(|(n, _)| group_of(n)).collect::<Vec<_>>();
    groups.sort();
    groups.dedup();

    let mut outcomes = Vec::new();
    // Shadow-mode step for the f64 numeric side.
    let h = 1e-5f64;
    for group in groups {
        let members: Vec<usize> = params
            .iter()
            .enumerate()
            .filter(|(_, (n, _))| group_of(n) == group)
            .map(|(i, _)| i)
            .collect();
        let total: usize = members.iter().map(|&i| params[i].1.numel()).sum();
        let mut rng = derive_rng(seed, &["gradcheck-samples", &group]);
        let mut analytic = Vec::with_capacity(samples_per_group);
        let mut numeric = Vec::with_capacity(samples_per_group);
        for _ in 0..samples_per_group {
            let mut flat = rng.random_range(0..total);
            let mut which = members[0];
            for &i in &members {
                if flat < params[i].1.numel() {
                    which = i;
                    break;
                }
                flat -= params[i].1.numel();
            }
            let a = tape
                .grad(staged.var(&params[which].0))
                .map(|g| g[flat].to_f64())
                .unwrap_or(0.0);

            let orig = params[which].1.data()[flat];
            params[which].1.data_mut()[flat] = orig + h;
            let up = eval_loss(&params, &cfg, &input_f64, task)?;
            params[which].1.data_mut()[flat] = orig - h;
            let down = eval_loss(&params, &cfg, &input_f64, task)?;
            params[which].1.data_mut()[flat] = orig;

            analytic.push(a);
            numeric.push((up - down) / (2.0 * h));
        }
        outcomes.push(CheckOutcome {
            group,
            worst_rel: normalized_error(&analytic, &numeric, fd.floor),
            tol: fd.tol,
        });
    }

    Ok(GradcheckReport {
        mode: if std::mem::size_of::<E>() == 4 { "f32" } else { "f64" },
        outcomes,
    })
}
