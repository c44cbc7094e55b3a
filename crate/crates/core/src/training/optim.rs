use crate::numerics::{Bound, Gradients, ParamSet, Scalar, Tensor};

/// Moves gradients out of `grads` in parameter order. Unused parameters get `None`.
pub fn collect_gradients<T: Scalar>(bound: &Bound<'_>, grads: &mut Gradients<T>) -> Vec<Option<Tensor<T>>> {
    bound.vars().iter().map(|&v| grads.take(v)).collect()
}

pub fn global_norm<T: Scalar>(grads: &[Option<Tensor<T>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.data().iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales in place so the global norm is at most `threshold`. Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Option<Tensor<T>>], threshold: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > threshold && norm > 0.0 {
        let s = T::of(threshold / norm);
        for g in grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

/// Plain SGD: `p -= lr * g`, after optional global-norm clipping. Returns the pre-clip norm.
pub fn sgd_step<T: Scalar>(params: &mut ParamSet<T>, mut grads: Vec<Option<Tensor<T>>>, lr: f64, clip: Option<f64>) -> f64 {
    assert_eq!(grads.len(), params.len(), "one gradient slot per parameter");
    let norm = match clip {
        Some(c) => clip_global_norm(&mut grads, c),
        None => global_norm(&grads),
    };
    if lr == 0.0 {
        return norm;
    }
    let lr = T::of(lr);
    for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
        if let Some(g) = g {
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * *d;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    proptest! {
        #[test]
        fn clipped_norm_within_threshold(seed in 0u64..10_000, scale in 0.01f64..100.0, threshold in 0.1f64..10.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut g: Vec<Option<Tensor<f32>>> = vec![
                Some(Tensor::uniform(&[3, 4], scale, &mut rng)),
                None,
                Some(Tensor::uniform(&[7], scale, &mut rng)),
            ];
            let before = global_norm(&g);
            let reported = clip_global_norm(&mut g, threshold);
            prop_assert!((reported - before).abs() < 1e-9);
            let after = global_norm(&g);
            prop_assert!(after <= threshold + 1e-6);
            if before <= threshold {
                prop_assert!((after - before).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::filled(&[2], 1.0)).unwrap();
        let before = p.clone();
        sgd_step(&mut p, vec![Some(Tensor::filled(&[2], 3.0))], 0.0, Some(5.0));
        assert_eq!(p, before);
        sgd_step(&mut p, vec![Some(Tensor::filled(&[2], 3.0))], 0.5, None);
        assert_eq!(p.get("w").unwrap().data(), [-0.5, -0.5]);
    }
}
