use super::{AutodiffError, Graph, Tensor, Var};

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` must record a scalar loss given one leaf per entry of `params`
/// (in order). Returns `max |analytic - numeric| / max(1e-8, |analytic| + |numeric|)`
/// over every entry of every parameter.
pub fn grad_check<F, E>(build: F, params: &[Tensor]) -> Result<f64, E>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    grad_check_with_floor(build, params, 1e-8)
}

/// [`grad_check`] with a different denominator floor. On an O(1) loss the
/// central difference itself carries about 1e-11 of rounding noise, so
/// deep graphs whose gradients include entries near 1e-8 need a floor
/// around 1e-6 to measure the gradient rather than the noise.
pub fn grad_check_with_floor<F, E>(build: F, params: &[Tensor], floor: f64) -> Result<f64, E>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, E>,
    E: From<AutodiffError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, E> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut work = params.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for i in 0..params[k].len() {
            let orig = params[k].data()[i];
            work[k].data_mut()[i] = orig + FD_STEP;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - FD_STEP;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = [
            random(&mut rng, &[4, 3]),
            random(&mut rng, &[3]),
            random(&mut rng, &[4]),
        ];
        let err = grad_check(
            |g, v| {
                let y = g.matvec(v[0], v[1])?;
                let y = g.add(y, v[2])?;
                g.dot(y, y)
            },
            &params,
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = [
            random(&mut rng, &[3, 3, 4]),
            random(&mut rng, &[3]),
            random(&mut rng, &[4]),
        ];
        let err = grad_check(
            |g, v| {
                let y = g.bilinear_contract(v[0], v[1], v[2])?;
                g.dot(y, y)
            },
            &params,
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    /// Every primitive against finite differences on random small shapes.
    #[test]
    fn every_op_random_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.gen_range(2..=8);
            let d = rng.gen_range(1..=8);
            let p = rng.gen_range(1..=4);
            let params = [
                random(&mut rng, &[n]),
                random(&mut rng, &[n]),
                random(&mut rng, &[n, d]),
                random(&mut rng, &[d]),
                random(&mut rng, &[n, n, d]),
                random(&mut rng, &[p, n]),
                random(&mut rng, &[3]),
                random(&mut rng, &[1]),
            ];
            let mask: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 2.0 } else { 0.0 }).collect();
            let err = grad_check(
                |g, v| {
                    let a = g.add(v[0], v[1])?;
                    let s = g.sub(a, v[1])?;
                    let h = g.hadamard(s, v[1])?;
                    let sg = g.sigmoid(h)?;
                    let th = g.tanh(v[0])?;
                    let mv = g.matvec(v[2], v[3])?;
                    let bl = g.bilinear_contract(v[4], th, v[3])?;
                    let sm = g.softmax(bl)?;
                    let sc = g.scale(sm, 1.7)?;
                    let bc = g.hadamard(sc, v[7])?;
                    let acts = g.softmax(v[6])?;
                    let st = g.stack_update(v[5], acts, sg)?;
                    let r0 = g.row(st, 0)?;
                    let mk = g.mask(r0, mask.clone())?;
                    let sum = g.sum(&[mk, mv, bc])?;
                    let mean = g.mean(&[sum, sg])?;
                    let cat = g.concat(&[mean, v[3]])?;
                    let i0 = g.index(cat, 0)?;
                    let d = g.dot(cat, cat)?;
                    let p = g.sigmoid(i0)?;
                    let ce = g.bce(p, 1.0)?;
                    g.add(d, ce)
                },
                &params,
            )
            .unwrap();
            assert!(err <= 1e-4, "n={n} d={d} p={p}: {err}");
        }
    }
}
