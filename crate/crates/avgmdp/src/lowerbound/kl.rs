//! Kullback-Leibler divergences for Bernoulli and categorical laws.

fn xlogy(x: f64, ratio: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ratio.ln()
    }
}

/// Bernoulli divergence `kl(p, q)`, infinite when `q` puts no mass where `p` does.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    if (q <= 0.0 && p > 0.0) || (q >= 1.0 && p < 1.0) {
        return f64::INFINITY;
    }
    let v = xlogy(p, p / q) + xlogy(1.0 - p, (1.0 - p) / (1.0 - q));
    v.max(0.0)
}

/// Categorical divergence `KL(p ‖ q)`.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> f64 {
    let mut v = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            v += a * (a / b).ln();
        }
    }
    v.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        // 0.1 ln 0.2 + 0.9 ln 1.8
        let expected = 0.1 * 0.2f64.ln() + 0.9 * 1.8f64.ln();
        assert!((bernoulli_kl(0.1, 0.5) - expected).abs() < 1e-15);
        assert!((bernoulli_kl(0.1, 0.5) - 0.368_064).abs() < 1e-6);
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
    }

    #[test]
    fn boundary_conventions() {
        assert!((bernoulli_kl(0.0, 0.25) + 0.75f64.ln()).abs() < 1e-15);
        assert!((bernoulli_kl(1.0, 0.25) + 0.25f64.ln()).abs() < 1e-15);
        assert!(bernoulli_kl(0.5, 0.0).is_infinite());
        assert!(bernoulli_kl(0.5, 1.0).is_infinite());
    }

    proptest! {
        #[test]
        fn categorical_matches_bernoulli(p in 0.0f64..1.0, q in 0.001f64..0.999) {
            let a = bernoulli_kl(p, q);
            let b = categorical_kl(&[p, 1.0 - p], &[q, 1.0 - q]);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn convex_in_second_argument(p in 0.01f64..0.99, q1 in 0.01f64..0.99, q2 in 0.01f64..0.99, t in 0.0f64..1.0) {
            let mid = t * q1 + (1.0 - t) * q2;
            prop_assert!(bernoulli_kl(p, mid) <= t * bernoulli_kl(p, q1) + (1.0 - t) * bernoulli_kl(p, q2) + 1e-12);
        }

        #[test]
        fn perturbation_sandwich(
            raw in proptest::collection::vec((0.05f64..1.0, 0.05f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 2..6),
            eps in 0.0f64..0.5,
        ) {
            let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|x| x / s).collect::<Vec<f64>>() };
            let p2 = norm(raw.iter().map(|r| r.0).collect());
            let q2 = norm(raw.iter().map(|r| r.1).collect());
            let a = eps / 3.0;
            let p = norm(p2.iter().zip(&raw).map(|(x, r)| x * (1.0 + a * r.2)).collect());
            let q = norm(q2.iter().zip(&raw).map(|(x, r)| x * (1.0 + a * r.3)).collect());
            let e = p.iter().zip(&p2).chain(q.iter().zip(&q2)).map(|(x, y)| (x / y - 1.0).abs()).fold(0.0, f64::max);
            prop_assume!(e <= 0.5);
            let m = raw.len() as f64;
            let slack = 2.0 * e * (std::f64::consts::E * m).ln() + 1e-12;
            let (k, k2) = (categorical_kl(&p, &q), categorical_kl(&p2, &q2));
            prop_assert!((1.0 - e) * k2 - slack <= k && k <= (1.0 + e) * k2 + slack);
            prop_assert!((1.0 - e) * k - slack <= k2 && k2 <= (1.0 + 2.0 * e) * k + slack);
        }
    }
}
