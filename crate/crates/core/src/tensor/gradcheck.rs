use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, TensorError, Var};

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

/// Largest `|analytic - numeric| / max(1, |numeric|)` over every coordinate
/// of every parameter, with central differences of step `eps`.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    grad_check_sampled(f, params, eps, usize::MAX, 0)
}

/// Like [`grad_check`], but checks at most `per_param` seeded-random
/// coordinates of each parameter.
pub fn grad_check_sampled<F>(
    f: F,
    params: &[Tensor],
    eps: f64,
    per_param: usize,
    seed: u64,
) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let coords: Vec<usize> = if p.len() <= per_param {
            (0..p.len()).collect()
        } else {
            sample(&mut rng, p.len(), per_param).into_vec()
        };
        for j in coords {
            let orig = p.data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let plus = evaluate(&f, &work)?;
            work[pi].data_mut()[j] = orig - eps;
            let minus = evaluate(&f, &work)?;
            work[pi].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[pi][j] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use std::rc::Rc;

    use rand::Rng;

    use super::*;
    use crate::tensor::Segments;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let err = grad_check(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                t.sum(sq)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn two_layer_gelu_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = vec![
            random(&mut rng, &[4, 3]),
            random(&mut rng, &[3, 5]),
            random(&mut rng, &[5]),
            random(&mut rng, &[5, 1]),
            random(&mut rng, &[1]),
        ];
        let err = grad_check(
            |t, v| {
                let h = t.matmul(v[0], v[1])?;
                let h = t.add_bias(h, v[2])?;
                let h = t.gelu(h)?;
                let o = t.matmul(h, v[3])?;
                let o = t.add_bias(o, v[4])?;
                let o = t.sigmoid(o)?;
                t.mean(o)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    /// Each op alone, composed with a fixed random projection so the output
    /// is a scalar with non-trivial upstream gradient.
    #[test]
    fn every_op_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, &[4, 3]);
        let b = random(&mut rng, &[4, 3]);
        let w = random(&mut rng, &[4]);
        let mix = random(&mut rng, &[4, 3]);
        let proj = move |t: &mut Tape, x: Var| -> Result<Var, TensorError> {
            let n = t.value(x).len();
            let c: Vec<f64> = mix.data().iter().cycle().take(n).copied().collect();
            let c = t.constant(Tensor::new(t.value(x).shape().to_vec(), c)?);
            let y = t.mul(x, c)?;
            t.sum(y)
        };
        let positive = Tensor::new(vec![4, 3], a.data().iter().map(|x| x.abs() + 0.5).collect()).unwrap();
        let probs = Tensor::new(vec![4, 3], a.data().iter().map(|x| 0.2 + 0.3 * (x + 1.0)).collect()).unwrap();
        let idx = Rc::new(vec![2usize, 0, 2, 1, 3]);
        let dst = Rc::new(vec![1usize, 1, 0, 2]);
        let segs = Rc::new(Segments::from_ids(&[0, 1, 0, 1]));

        type Case = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>>;
        let p = proj.clone();
        let cases: Vec<(&str, Vec<Tensor>, Case)> = vec![
            ("matmul", vec![a.clone(), random(&mut rng, &[3, 2])], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.matmul(v[0], v[1])?; p(t, y) }
            })),
            ("add_bias", vec![a.clone(), random(&mut rng, &[3])], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.add_bias(v[0], v[1])?; p(t, y) }
            })),
            ("add_mul", vec![a.clone(), b.clone()], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.add(v[0], v[1])?; let y = t.mul(y, v[1])?; p(t, y) }
            })),
            ("concat", vec![a.clone(), b.clone()], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.concat(&[v[0], v[1]])?; let y = t.slice_rows(y, 1, 3)?; let y = t.scale(y, 0.7)?; p(t, y) }
            })),
            ("gather_scatter", vec![a.clone()], Box::new({
                let p = p.clone();
                let idx = idx.clone();
                let dst = dst.clone();
                move |t, v| {
                    let y = t.gather(v[0], idx.clone())?;
                    let y = t.slice_rows(y, 0, 4)?;
                    let y = t.scatter_sum(y, dst.clone(), 4)?;
                    p(t, y)
                }
            })),
            ("row_dot_scale", vec![a.clone(), b.clone(), w.clone()], Box::new({
                let p = p.clone();
                move |t, v| {
                    let d = t.row_dot(v[0], v[1])?;
                    let d = t.mul(d, v[2])?;
                    let y = t.row_scale(v[0], d)?;
                    p(t, y)
                }
            })),
            ("segment_softmax", vec![w.clone()], Box::new({
                let p = p.clone();
                let segs = segs.clone();
                move |t, v| { let y = t.segment_softmax(v[0], segs.clone())?; p(t, y) }
            })),
            ("log_softmax", vec![w.clone()], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.log_softmax(v[0])?; p(t, y) }
            })),
            ("gelu_sigmoid", vec![a.clone()], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.gelu(v[0])?; let y = t.sigmoid(y)?; p(t, y) }
            })),
            ("ln", vec![positive], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.ln(v[0])?; p(t, y) }
            })),
            ("clamp_one_minus", vec![probs], Box::new({
                let p = p.clone();
                move |t, v| { let y = t.clamp(v[0], 1e-12, 1.0 - 1e-12)?; let y = t.one_minus(y)?; let y = t.ln(y)?; p(t, y) }
            })),
            ("mean", vec![a.clone()], Box::new(|t, v| { let y = t.gelu(v[0])?; t.mean(y) })),
        ];
        for (name, params, f) in cases {
            let err = grad_check(|t, v| f(t, v), &params, 1e-5).unwrap();
            assert!(err < 1e-5, "{name}: {err}");
        }
    }

    #[test]
    fn gelu_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x: f64 = rng.gen_range(-4.0..4.0);
            let err = grad_check(|t, v| { let y = t.gelu(v[0])?; t.sum(y) }, &[Tensor::scalar(x)], 1e-5).unwrap();
            assert!(err < 1e-6, "x={x} err={err}");
        }
    }
}
