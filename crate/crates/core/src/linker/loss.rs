use std::collections::HashSet;

/// `-log softmax(scores)[gold]`, computed with the max-shift.
pub fn ce_loss(scores: &[f64], gold: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    lse - scores[gold]
}

/// Loss and its gradient w.r.t. the scores: `softmax - onehot(gold)`.
pub fn ce_loss_grad(scores: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + sum.ln() - scores[gold];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[gold] -= 1.0;
    (loss, grad)
}

/// Binary cross-entropy from a logit: `softplus(z) - y z`.
pub(crate) fn bce_with_logit(z: f64, positive: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if positive {
        softplus - z
    } else {
        softplus
    }
}

/// Mean binary cross-entropy over `candidates`, with gold spans as positives.
/// `probs[k]` is the predicted probability of `candidates[k]`.
pub fn mention_detection_loss(
    probs: &[f64],
    gold: &[(usize, usize)],
    candidates: &[(usize, usize)],
) -> f64 {
    if candidates.is_empty() {
        return 0.0;
    }
    let gold: HashSet<_> = gold.iter().collect();
    let total: f64 = candidates
        .iter()
        .zip(probs)
        .map(|(span, &p)| {
            if gold.contains(span) {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / candidates.len() as f64
}

/// `detection_weight * detection + disambiguation`. The default weight is 1.
pub fn joint_loss(detection: f64, disambiguation: f64) -> f64 {
    weighted_joint_loss(detection, disambiguation, 1.0)
}

pub fn weighted_joint_loss(detection: f64, disambiguation: f64, detection_weight: f64) -> f64 {
    detection_weight * detection + disambiguation
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn softmax_oracle(scores: &[f64]) -> Vec<f64> {
        // direct definition without the shift
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        scores.iter().map(|s| s.exp() / z).collect()
    }

    #[test]
    fn single_candidate_is_zero() {
        assert_eq!(ce_loss(&[3.7], 0), 0.0);
    }

    #[test]
    fn two_equal_scores_give_ln2() {
        assert!((ce_loss(&[0.3, 0.3], 1) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn three_scores() {
        let expected = -softmax_oracle(&[2.0, 1.0, 0.0])[0].ln();
        assert!((expected - 0.40760596444438).abs() < 1e-12);
        assert!((ce_loss(&[2.0, 1.0, 0.0], 0) - expected).abs() < 1e-14);
    }

    #[test]
    fn gradient_is_softmax_minus_onehot() {
        let s = [0.5, -1.0, 2.0, 0.0];
        let (loss, g) = ce_loss_grad(&s, 2);
        assert!((loss - ce_loss(&s, 2)).abs() < 1e-15);
        let p = softmax_oracle(&s);
        for k in 0..4 {
            let expected = p[k] - if k == 2 { 1.0 } else { 0.0 };
            assert!((g[k] - expected).abs() < 1e-14);
        }
        let (zero, gz) = ce_loss_grad(&[1.0], 0);
        assert_eq!(zero, 0.0);
        assert_eq!(gz, vec![0.0]);
    }

    #[test]
    fn detection_loss_cases() {
        let spans = [(0, 0), (1, 2)];
        assert_eq!(mention_detection_loss(&[1.0, 0.0], &[(0, 0)], &spans), 0.0);
        let half = mention_detection_loss(&[0.5, 0.5], &[(0, 0)], &spans);
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        let mixed = mention_detection_loss(&[0.9, 0.2], &[(0, 0)], &spans);
        let expected = -(0.9f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((mixed - expected).abs() < 1e-15);
        assert!((mixed - 0.1642520334).abs() < 1e-9);
    }

    #[test]
    fn logit_bce_matches_probability_form() {
        for &z in &[-30.0, -2.0, 0.0, 0.7, 25.0] {
            let p = 1.0 / (1.0 + (-z as f64).exp());
            assert!((bce_with_logit(z, true) + p.ln()).abs() < 1e-12);
            if z < 20.0 {
                assert!((bce_with_logit(z, false) + (1.0 - p).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn joint_is_a_sum() {
        assert_eq!(joint_loss(0.0, 0.0), 0.0);
        assert_eq!(joint_loss(0.5, 0.25), 0.75);
        assert_eq!(weighted_joint_loss(0.5, 0.25, 2.0), 1.25);
    }

    proptest! {
        #[test]
        fn shift_invariance(
            scores in proptest::collection::vec(-20.0f64..20.0, 1..12),
            shift in -50.0f64..50.0,
            gold_seed in 0usize..100,
        ) {
            let gold = gold_seed % scores.len();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            prop_assert!((ce_loss(&scores, gold) - ce_loss(&shifted, gold)).abs() < 1e-9);
            let argmax = |v: &[f64]| v.iter().enumerate()
                .fold(0, |best, (i, x)| if *x > v[best] { i } else { best });
            prop_assert_eq!(argmax(&scores), argmax(&shifted));
            prop_assert!(ce_loss(&scores, gold) >= 0.0);
        }
    }
}
