//! Scalar pieces of the negative-sampling objective, generic over the float
//! type so the same code can be checked in `f64`.

use num_traits::Float;

/// Per-term cap for `-ln p`, i.e. probabilities are clamped at `1e-12`.
pub const LOSS_TERM_CAP: f64 = 27.631021115928547;

#[inline]
pub fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<F: Float>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Loss value plus the number of terms that hit the clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<F> {
    pub value: F,
    pub clamped: usize,
}

/// Loss from raw scores: `-ln σ(pos) - Σ ln(1 - σ(neg))`.
pub fn loss_from_scores<F: Float>(positive: F, negatives: impl IntoIterator<Item = F>) -> LossValue<F> {
    let cap = F::from(LOSS_TERM_CAP).unwrap();
    let mut clamped = 0;
    let mut term = |v: F| {
        if v > cap {
            clamped += 1;
            cap
        } else {
            v
        }
    };
    // -ln σ(s) = softplus(-s); -ln(1 - σ(s)) = softplus(s)
    let mut value = term(softplus(-positive));
    for s in negatives {
        value = value + term(softplus(s));
    }
    LossValue { value, clamped }
}

/// Loss of one (target, positive, negatives) example on raw vectors.
pub fn pair_loss_slices<F: Float>(target: &[F], positive: &[F], negatives: &[&[F]]) -> LossValue<F> {
    loss_from_scores(dot(positive, target), negatives.iter().map(|n| dot(n, target)))
}

/// Gradients of [`pair_loss_slices`] for each parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients<F> {
    pub target: Vec<F>,
    pub positive: Vec<F>,
    pub negatives: Vec<Vec<F>>,
}

/// Coefficient multiplying the partner vector in each gradient:
/// `σ(s) - 1` for the positive, `σ(s)` for a negative.
#[inline]
pub fn grad_coeff<F: Float>(score: F, is_positive: bool) -> F {
    if is_positive {
        sigmoid(score) - F::one()
    } else {
        sigmoid(score)
    }
}

pub fn pair_gradients_slices<F: Float>(target: &[F], positive: &[F], negatives: &[&[F]]) -> PairGradients<F> {
    let h = target.len();
    let g_pos = grad_coeff(dot(positive, target), true);
    let mut grad_target: Vec<F> = positive.iter().map(|&p| g_pos * p).collect();
    let grad_positive = target.iter().map(|&t| g_pos * t).collect();
    let mut grad_negatives = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let g = grad_coeff(dot(neg, target), false);
        for i in 0..h {
            grad_target[i] = grad_target[i] + g * neg[i];
        }
        grad_negatives.push(target.iter().map(|&t| g * t).collect());
    }
    PairGradients {
        target: grad_target,
        positive: grad_positive,
        negatives: grad_negatives,
    }
}

/// `A · v` for a row-major `h x h` matrix.
pub fn matvec<F: Float>(a: &[F], v: &[F]) -> Vec<F> {
    let h = v.len();
    (0..h).map(|r| dot(&a[r * h..(r + 1) * h], v)).collect()
}

/// Loss of the adapted model: the target vector is replaced by `A · v_t`.
pub fn adaptive_loss_slices<F: Float>(a: &[F], target: &[F], positive: &[F], negatives: &[&[F]]) -> LossValue<F> {
    pair_loss_slices(&matvec(a, target), positive, negatives)
}

/// `∂J/∂A = g ⊗ v_t` with `g = (σ(v'_pos·Av_t) - 1) v'_pos + Σ σ(v'_neg·Av_t) v'_neg`.
pub fn adaptive_gradients_slices<F: Float>(a: &[F], target: &[F], positive: &[F], negatives: &[&[F]]) -> Vec<F> {
    let h = target.len();
    let adapted = matvec(a, target);
    let g = pair_gradients_slices(&adapted, positive, negatives).target;
    let mut out = vec![F::zero(); h * h];
    for r in 0..h {
        for c in 0..h {
            out[r * h + c] = g[r] * target[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0f64) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0f64) >= 0.0);
        assert!(softplus(-800.0f64) < 1e-300);
    }

    #[test]
    fn zero_vectors_loss() {
        let z = [0.0f64; 3];
        let negs: Vec<&[f64]> = vec![&z; 5];
        let l = pair_loss_slices(&z, &z, &negs);
        assert!((l.value - 6.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(l.clamped, 0);
    }

    #[test]
    fn scalar_instance() {
        // -ln σ(2) - ln(1 - σ(-1)) evaluated directly
        let expect = -(1.0 / (1.0 + (-2.0f64).exp())).ln() - (1.0 - 1.0 / (1.0 + 1.0f64.exp())).ln();
        let l = pair_loss_slices(&[1.0f64], &[2.0], &[&[-1.0]]);
        assert!((l.value - expect).abs() < 1e-14);
        assert!((l.value - 0.4402).abs() < 1e-4);
    }

    #[test]
    fn saturation_goes_to_zero() {
        let l = loss_from_scores(60.0f64, [-60.0, -70.0]);
        assert!(l.value < 1e-25);
        let l = loss_from_scores(-100.0f64, []);
        assert_eq!(l.clamped, 1);
        assert_eq!(l.value, LOSS_TERM_CAP);
    }

    #[test]
    fn cap_matches_definition() {
        assert!((LOSS_TERM_CAP + 1e-12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn positive_gradient_at_zero() {
        let g = pair_gradients_slices(&[1.0f64], &[0.0], &[]);
        assert_eq!(g.positive, vec![-0.5]);
    }

    #[test]
    fn adaptive_gradient_zero_target() {
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let g = adaptive_gradients_slices(&a, &[0.0, 0.0], &[1.0, 1.0], &[&[0.5, -1.0]]);
        assert!(g.iter().all(|&x| x == 0.0));
    }
}
