//! Differentiable stack memory: a `[p, n]` matrix whose row 0 is the top,
//! updated by a soft mixture of PUSH, POP and NOOP.

use crate::autodiff::{AutodiffError, Graph, Var};

/// Index of each action in an action vector.
pub const PUSH: usize = 0;
pub const POP: usize = 1;
pub const NOOP: usize = 2;

/// Default number of stack slots.
pub const DEFAULT_STACK_SIZE: usize = 10;

/// `softmax(A·z + b)` over (PUSH, POP, NOOP), with `A: [3, n]`, `b: [3]`.
pub fn compute_actions(g: &mut Graph, z: Var, a: Var, b: Var) -> Result<Var, AutodiffError> {
    let logits = g.matvec(a, z)?;
    let logits = g.add(logits, b)?;
    g.softmax(logits)
}

/// Applies `actions` to `stack`, pushing `σ(D·z)` as the candidate top.
pub fn stack_update(g: &mut Graph, stack: Var, actions: Var, z: Var, d: Var) -> Result<Var, AutodiffError> {
    let top = g.matvec(d, z)?;
    let top = g.sigmoid(top)?;
    g.stack_update(stack, actions, top)
}

/// `Σ_n P·S_n[0]`: what the children's stacks contribute to the parent.
pub fn stack_read_state(g: &mut Graph, stacks: &[Var], p: Var) -> Result<Var, AutodiffError> {
    let first = *stacks.first().ok_or(AutodiffError::EmptyInput("stack_read_state"))?;
    let mut reads = Vec::with_capacity(stacks.len());
    for &s in stacks {
        if g.shape(s) != g.shape(first) {
            return Err(AutodiffError::ShapeMismatch {
                op: "stack_read_state",
                left: g.shape(first).to_vec(),
                right: g.shape(s).to_vec(),
            });
        }
        let top = g.row(s, 0)?;
        reads.push(g.matvec(p, top)?);
    }
    if reads.len() == 1 {
        Ok(reads[0])
    } else {
        g.sum(&reads)
    }
}

/// Element-wise mean of the children's updated stacks.
pub fn merge_child_stacks(g: &mut Graph, updated: &[Var]) -> Result<Var, AutodiffError> {
    match updated {
        [] => Err(AutodiffError::EmptyInput("merge_child_stacks")),
        [one] => Ok(*one),
        many => g.mean(many),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hard(action: usize) -> Tensor {
        Tensor::one_hot(3, action)
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn uniform_and_pushing_actions() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::vector(vec![0.3, -0.2]));
        let a = g.zeros(&[3, 2]);
        let b = g.zeros(&[3]);
        let act = compute_actions(&mut g, z, a, b).unwrap();
        for &v in g.value(act).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let b = g.constant(Tensor::vector(vec![10.0, 0.0, 0.0]));
        let act = compute_actions(&mut g, z, a, b).unwrap();
        assert!(g.value(act).data()[PUSH] > 0.99);
    }

    #[test]
    fn actions_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let mut g = Graph::new();
            let z = g.constant(random(&mut rng, &[5], -3.0, 3.0));
            let a = g.constant(random(&mut rng, &[3, 5], -3.0, 3.0));
            let b = g.constant(random(&mut rng, &[3], -3.0, 3.0));
            let act = compute_actions(&mut g, z, a, b).unwrap();
            let v = g.value(act).data();
            assert!(v.iter().all(|&x| x >= 0.0));
            assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn push_then_pop_is_identity_and_noop_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, n) = (3, 4);
        let s0 = random(&mut rng, &[p, n], 0.0, 1.0);
        // Leave the bottom row empty so the push loses nothing.
        let mut data = s0.data().to_vec();
        data[(p - 1) * n..].iter_mut().for_each(|v| *v = 0.0);
        let s0 = Tensor::new(vec![p, n], data).unwrap();

        let mut g = Graph::new();
        let s = g.constant(s0.clone());
        let z = g.constant(random(&mut rng, &[n], -1.0, 1.0));
        let d = g.constant(random(&mut rng, &[n, n], -1.0, 1.0));
        let push = g.constant(hard(PUSH));
        let pop = g.constant(hard(POP));
        let noop = g.constant(hard(NOOP));
        let pushed = stack_update(&mut g, s, push, z, d).unwrap();
        let restored = stack_update(&mut g, pushed, pop, z, d).unwrap();
        assert_eq!(g.value(restored), &s0);
        let same = stack_update(&mut g, s, noop, z, d).unwrap();
        assert_eq!(g.value(same), &s0);
    }

    #[test]
    fn half_push_half_pop_on_three_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (p, n) = (3, 2);
        let s0 = random(&mut rng, &[p, n], 0.0, 1.0);
        let zv = random(&mut rng, &[n], -1.0, 1.0);
        let dv = random(&mut rng, &[n, n], -1.0, 1.0);

        let mut g = Graph::new();
        let s = g.constant(s0.clone());
        let z = g.constant(zv.clone());
        let d = g.constant(dv.clone());
        let a = g.constant(Tensor::vector(vec![0.5, 0.5, 0.0]));
        let out = stack_update(&mut g, s, a, z, d).unwrap();
        let out = g.value(out).data();

        let row = |i: usize| &s0.data()[i * n..(i + 1) * n];
        let top: Vec<f64> = (0..n)
            .map(|i| {
                let pre: f64 = (0..n).map(|j| dv.data()[i * n + j] * zv.data()[j]).sum();
                1.0 / (1.0 + (-pre).exp())
            })
            .collect();
        for j in 0..n {
            assert_eq!(out[j], 0.5 * top[j] + 0.5 * row(1)[j]);
            assert_eq!(out[n + j], 0.5 * row(0)[j] + 0.5 * row(2)[j]);
            assert_eq!(out[2 * n + j], 0.5 * row(1)[j]);
        }
    }

    #[test]
    fn update_is_linear_in_the_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, n) = (3, 3);
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.2, 0.3, 0.5]));
        let s1 = g.constant(random(&mut rng, &[p, n], 0.0, 1.0));
        let s2 = g.constant(random(&mut rng, &[p, n], 0.0, 1.0));
        let zero_top = g.zeros(&[n]);
        // With a zero push candidate the update is a linear map of S.
        let sum = g.add(s1, s2).unwrap();
        let u_sum = g.stack_update(sum, a, zero_top).unwrap();
        let u1 = g.stack_update(s1, a, zero_top).unwrap();
        let u2 = g.stack_update(s2, a, zero_top).unwrap();
        let sep = g.add(u1, u2).unwrap();
        for (x, y) in g.value(u_sum).data().iter().zip(g.value(sep).data()) {
            assert!((x - y).abs() <= 1e-15);
        }
        let bound = g.value(u_sum).data().iter().cloned().fold(0.0, f64::max);
        assert!(bound <= 2.0);
    }

    #[test]
    fn read_state_examples() {
        let mut g = Graph::new();
        let zero = g.zeros(&[3, 2]);
        let p = g.constant(Tensor::identity(2));
        let r = stack_read_state(&mut g, &[zero, zero], p).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0]);

        let s = g.constant(Tensor::matrix(3, 2, vec![0.4, 0.9, 0.1, 0.1, 0.0, 0.0]).unwrap());
        let r = stack_read_state(&mut g, &[s], p).unwrap();
        assert_eq!(g.value(r).data(), &[0.4, 0.9]);

        let other = g.zeros(&[4, 2]);
        assert!(matches!(
            stack_read_state(&mut g, &[s, other], p),
            Err(AutodiffError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn merge_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.5, 0.25]).unwrap());
        let b = g.constant(Tensor::matrix(2, 2, vec![0.0, 1.0, 0.5, 0.75]).unwrap());
        let one = merge_child_stacks(&mut g, &[a]).unwrap();
        assert_eq!(g.value(one), g.value(a));
        let same = merge_child_stacks(&mut g, &[a, a]).unwrap();
        assert_eq!(g.value(same), g.value(a));
        let mixed = merge_child_stacks(&mut g, &[a, b]).unwrap();
        assert_eq!(g.value(mixed).data(), &[0.5, 0.5, 0.5, 0.5]);
        assert!(merge_child_stacks(&mut g, &[]).is_err());
    }

    #[test]
    fn gradient_reaches_read_matrix_and_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let params = [
                random(&mut rng, &[3, 4], 0.0, 1.0),
                random(&mut rng, &[3, 4], 0.0, 1.0),
                random(&mut rng, &[4, 4], -1.0, 1.0),
                random(&mut rng, &[3, 4], -1.0, 1.0),
                random(&mut rng, &[3], -1.0, 1.0),
                random(&mut rng, &[4, 4], -1.0, 1.0),
            ];
            let err = grad_check(
                |g, v| {
                    let e = stack_read_state(g, &[v[0], v[1]], v[2])?;
                    let act = compute_actions(g, e, v[3], v[4])?;
                    let s0 = stack_update(g, v[0], act, e, v[5])?;
                    let s1 = stack_update(g, v[1], act, e, v[5])?;
                    let m = merge_child_stacks(g, &[s0, s1])?;
                    let r = g.row(m, 0)?;
                    let r1 = g.row(m, 1)?;
                    let t = g.add(r, r1)?;
                    g.dot(t, e)
                },
                &params,
            )
            .unwrap();
            assert!(err <= 1e-4, "{err}");
        }
    }
}
