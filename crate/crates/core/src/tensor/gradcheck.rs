//! Central finite-difference verification of tape gradients.
//!
//! The numeric side never touches the backward pass: every expected value
//! comes from re-running the forward closure at perturbed inputs.

use rand::Rng as _;

use crate::error::Result;
use crate::rng::{derive_rng, Rng};
use crate::scalar::Scalar;
use crate::tensor::{Sabotage, Tape, Tensor, Var};

/// Step size and tolerance for one precision mode.
#[derive(Debug, Clone, Copy)]
pub struct FdParams {
    pub h: f64,
    pub tol: f64,
    /// Scale floor used when normalizing coordinate errors.
    pub floor: f64,
}

/// Defaults per element width: h = 1e-3 / tol 1e-3 in f32,
/// h = 1e-5 / tol 1e-6 in the f64 shadow mode.
pub fn fd_defaults<E: Scalar>() -> FdParams {
    if std::mem::size_of::<E>() == 4 {
        FdParams { h: 1e-3, tol: 1e-3, floor: 1e-4 }
    } else {
        FdParams { h: 1e-5, tol: 1e-6, floor: 1e-10 }
    }
}

/// Error of an analytic gradient against its numeric estimate, normalized
/// by the larger gradient magnitude in the compared set (with a floor so
/// all-zero gradients compare clean).
pub fn normalized_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(floor, |m, &v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0, |worst, (&a, &n)| worst.max((a - n).abs() / scale))
}

/// Outcome of one checked group (an op, or a model parameter group).
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub group: String,
    pub worst_rel: f64,
    pub tol: f64,
}

impl CheckOutcome {
    pub fn pass(&self) -> bool {
        self.worst_rel.is_finite() && self.worst_rel < self.tol
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub mode: &'static str,
    pub outcomes: Vec<CheckOutcome>,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::pass)
    }

    pub fn worst(&self) -> f64 {
        self.outcomes.iter().fold(0.0, |m, o| m.max(o.worst_rel))
    }
}

/// A graph builder under check: stages the given leaves and returns a
/// scalar loss variable.
pub type GraphFn<E> = dyn Fn(&mut Tape<E>, &[Var]) -> Result<Var>;

/// Compare tape gradients of `f` w.r.t. every coordinate of every input
/// against central differences. Returns the worst normalized error.
pub fn check_graph<E: Scalar>(
    inputs: &[Tensor<E>],
    f: &GraphFn<E>,
    params: FdParams,
    sabotage: Option<Sabotage>,
) -> Result<f64> {
    let eval = |tensors: &[Tensor<E>]| -> Result<E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    // Analytic gradients.
    let mut tape = Tape::with_sabotage(sabotage);
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad()))
        .collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;

    let h = E::from_f64(params.h);
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<E>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = tape
            .grad(vars[i])
            .map(|g| g.iter().map(|&v| v.to_f64()).collect())
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let mut numeric = vec![0.0f64; input.numel()];
        for j in 0..input.numel() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?.to_f64();
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?.to_f64();
            work[i].data_mut()[j] = orig;
            numeric[j] = (up - down) / (2.0 * params.h);
        }
        worst = worst.max(normalized_error(&analytic, &numeric, params.floor));
    }
    Ok(worst)
}

fn uniform<E: Scalar>(rng: &mut Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<E> {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| E::from_f64(rng.random_range(lo..hi)))
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Like `uniform` but keeps every sample at least `margin` away from zero,
/// for ops with a kink at the origin.
fn uniform_off_zero<E: Scalar>(rng: &mut Rng, shape: Vec<usize>, margin: f64) -> Tensor<E> {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| {
            let mag = rng.random_range(margin..1.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            E::from_f64(sign * mag)
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Weighted-sum loss over an arbitrary output makes every output
/// coordinate matter, so gradient bugs cannot hide behind symmetric
/// reductions.
fn weighted_loss<E: Scalar>(tape: &mut Tape<E>, out: Var, weights: &Tensor<E>) -> Result<Var> {
    let w = tape.leaf(weights.clone());
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

/// Finite-difference every differentiable op on `instances` random cases.
/// `sabotage` is a negative-control hook: with it set, the matmul check
/// must fail.
pub fn check_all_ops<E: Scalar>(
    seed: u64,
    instances: usize,
    params: FdParams,
    sabotage: Option<Sabotage>,
) -> Result<GradcheckReport> {
    let mut outcomes = Vec::new();
    let mut run = |name: &str,
                   case: &dyn Fn(&mut Rng) -> (Vec<Tensor<E>>, Box<GraphFn<E>>)|
     -> Result<()> {
        let mut worst = 0.0f64;
        for inst in 0..instances {
            let mut rng = derive_rng(seed, &["gradcheck", name, &inst.to_string()]);
            let (inputs, f) = case(&mut rng);
            worst = worst.max(check_graph(&inputs, f.as_ref(), params, sabotage)?);
        }
        outcomes.push(CheckOutcome {
            group: name.to_string(),
            worst_rel: worst,
            tol: params.tol,
        });
        Ok(())
    };

    run("matmul", &|rng| {
        let a = uniform(rng, vec![3, 4], -1.0, 1.0);
        let b = uniform(rng, vec![4, 2], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![3, 2], 0.5, 1.5);
        (
            vec![a, b],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let c = t.matmul(v[0], v[1])?;
                weighted_loss(t, c, &w)
            }),
        )
    })?;

    run("conv2d_reflect", &|rng| {
        let x = uniform(rng, vec![2, 4, 4], -1.0, 1.0);
        let w = uniform(rng, vec![3, 2, 3, 3], -0.5, 0.5);
        let b = uniform(rng, vec![3], -0.2, 0.2);
        let lw = uniform::<E>(rng, vec![3, 4, 4], 0.5, 1.5);
        let lw2 = Tensor::new(vec![3 * 16], lw.data().to_vec()).unwrap();
        (
            vec![x, w, b],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.conv2d(v[0], v[1], v[2], 1, 1, crate::tensor::PadMode::Reflect)?;
                let flat = t.reshape(y, vec![3 * 16])?;
                weighted_loss(t, flat, &lw2)
            }),
        )
    })?;

    run("conv2d_zero_stride2", &|rng| {
        let x = uniform(rng, vec![2, 5, 5], -1.0, 1.0);
        let w = uniform(rng, vec![2, 2, 3, 3], -0.5, 0.5);
        let b = uniform(rng, vec![2], -0.2, 0.2);
        let lw = uniform::<E>(rng, vec![2 * 3 * 3], 0.5, 1.5);
        (
            vec![x, w, b],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.conv2d(v[0], v[1], v[2], 2, 1, crate::tensor::PadMode::Zero)?;
                let flat = t.reshape(y, vec![2 * 3 * 3])?;
                weighted_loss(t, flat, &lw)
            }),
        )
    })?;

    run("softmax", &|rng| {
        let x = uniform(rng, vec![5], -2.0, 2.0);
        // Mixed-sign weights: softmax gradients live on the simplex
        // tangent, so same-sign weights cancel and shrink the gradient
        // scale below what f32 finite differences can resolve.
        let w = uniform::<E>(rng, vec![5], -2.0, 2.0);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.softmax(v[0])?;
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("layernorm", &|rng| {
        let x = uniform(rng, vec![2, 8], -1.5, 1.5);
        let g = uniform(rng, vec![8], 0.5, 1.5);
        let s = uniform(rng, vec![8], -0.5, 0.5);
        let w = uniform::<E>(rng, vec![2, 8], 0.5, 1.5);
        (
            vec![x, g, s],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.layernorm(v[0], v[1], v[2], 1e-5)?;
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("add_mul", &|rng| {
        let a = uniform(rng, vec![2, 3], -1.0, 1.0);
        let b = uniform(rng, vec![2, 3], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![2, 3], 0.5, 1.5);
        (
            vec![a, b],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let s = t.add(v[0], v[1])?;
                let p = t.mul(s, v[1])?;
                weighted_loss(t, p, &w)
            }),
        )
    })?;

    run("relu", &|rng| {
        let x = uniform_off_zero(rng, vec![7], 0.05);
        let w = uniform::<E>(rng, vec![7], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.relu(v[0]);
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("gelu", &|rng| {
        let x = uniform(rng, vec![7], -2.0, 2.0);
        let w = uniform::<E>(rng, vec![7], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.gelu(v[0]);
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("scale", &|rng| {
        let x = uniform(rng, vec![5], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![5], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.scale(v[0], 0.37);
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("reshape_transpose", &|rng| {
        let x = uniform(rng, vec![3, 4], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![4, 3], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let r = t.reshape(v[0], vec![6, 2])?;
                let r = t.reshape(r, vec![3, 4])?;
                let y = t.transpose2d(r)?;
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("repeat_rows", &|rng| {
        let x = uniform(rng, vec![4], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![3, 4], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.repeat_rows(v[0], 3)?;
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("slice_concat_cols", &|rng| {
        let x = uniform(rng, vec![4, 6], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![4, 6], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let left = t.slice_cols(v[0], 0, 2)?;
                let right = t.slice_cols(v[0], 2, 4)?;
                let y = t.concat_cols(&[right, left])?;
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("slice_rows", &|rng| {
        let x = uniform(rng, vec![5, 3], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![2, 3], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.slice_rows(v[0], 1, 2)?;
                weighted_loss(t, y, &w)
            }),
        )
    })?;

    run("mean_sum", &|rng| {
        let x = uniform(rng, vec![6], -1.0, 1.0);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let m = t.mean(v[0]);
                let s = t.sum(v[0]);
                t.add(m, s)
            }),
        )
    })?;

    run("l1_loss", &|rng| {
        let a: Tensor<E> = uniform(rng, vec![5], -1.0, 1.0);
        let mut b = uniform::<E>(rng, vec![5], -1.0, 1.0);
        // Keep |a - b| away from the kink.
        let margin = E::from_f64(0.05);
        for (bv, av) in b.data_mut().iter_mut().zip(a.data()) {
            if (*bv - *av).abs() < margin {
                *bv = *av + E::from_f64(0.1);
            }
        }
        (
            vec![a, b],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| t.l1_loss(v[0], v[1])),
        )
    })?;

    run("depth_to_space", &|rng| {
        let x = uniform(rng, vec![4, 2, 2], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![1, 4, 4], 0.5, 1.5);
        let w = Tensor::new(vec![16], w.data().to_vec()).unwrap();
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let y = t.depth_to_space(v[0], 2)?;
                let flat = t.reshape(y, vec![16])?;
                weighted_loss(t, flat, &w)
            }),
        )
    })?;

    run("pad_crop", &|rng| {
        let x = uniform(rng, vec![2, 3, 3], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![2 * 5 * 5], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let p = t.pad2d(v[0], 1, 2, 1, 2, crate::tensor::PadMode::Reflect)?;
                let c = t.crop2d(p, 5, 5)?;
                let flat = t.reshape(c, vec![2 * 5 * 5])?;
                weighted_loss(t, flat, &w)
            }),
        )
    })?;

    run("patch_roundtrip", &|rng| {
        let x = uniform(rng, vec![2, 4, 4], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![4, 8], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                let seq = t.patch_flatten(v[0], 2)?;
                weighted_loss(t, seq, &w)
            }),
        )
    })?;

    run("fanout_two_consumers", &|rng| {
        let x = uniform(rng, vec![4], -1.0, 1.0);
        let w = uniform::<E>(rng, vec![4], 0.5, 1.5);
        (
            vec![x],
            Box::new(move |t: &mut Tape<E>, v: &[Var]| {
                // x feeds both a product and a sum; gradients must add.
                let sq = t.mul(v[0], v[0])?;
                let both = t.add(sq, v[0])?;
                weighted_loss(t, both, &w)
            }),
        )
    })?;

    Ok(GradcheckReport {
        mode: if std::mem::size_of::<E>() == 4 { "f32" } else { "f64" },
        outcomes,
    })
}
