use numsmooth::quadrules::{gauss_hermite, gauss_laguerre, rule, RuleKind, MAX_NODES};
use proptest::prelude::*;

/// E[Z^k] for Z ~ N(0,1).
fn normal_moment(k: u32) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        (1..k).step_by(2).map(f64::from).product()
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

#[test]
fn hermite_exact_through_degree_2n_minus_1() {
    for n in 1..=20usize {
        let r = gauss_hermite(n).unwrap();
        for k in 0..(2 * n as u32) {
            let got = r.integrate(|x| x.powi(k as i32));
            let want = normal_moment(k);
            // Odd moments vanish; compare against the scale of |x|^k instead.
            let scale = normal_moment(k + k % 2).max(1.0);
            assert!(
                (got - want).abs() <= 1e-12 * scale,
                "hermite n={n} k={k}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn laguerre_exact_through_degree_2n_minus_1() {
    for n in 1..=20usize {
        let r = gauss_laguerre(n).unwrap();
        for k in 0..(2 * n as u32) {
            let got = r.integrate(|x| x.powi(k as i32));
            let want = factorial(k);
            assert!((got - want).abs() <= 1e-12 * want, "laguerre n={n} k={k}: {got} vs {want}");
        }
    }
}

proptest! {
    #[test]
    fn rules_are_well_formed(n in 1usize..=MAX_NODES, laguerre in any::<bool>()) {
        let kind = if laguerre { RuleKind::Laguerre } else { RuleKind::HermiteProbabilists };
        let r = rule(kind, n).unwrap();
        prop_assert_eq!(r.nodes.len(), n);
        prop_assert!(r.weights.iter().all(|&w| w > 0.0));
        prop_assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
        let total: f64 = r.weights.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_is_symmetric(n in 1usize..=MAX_NODES) {
        let r = gauss_hermite(n).unwrap();
        for i in 0..n {
            let j = n - 1 - i;
            prop_assert!((r.nodes[i] + r.nodes[j]).abs() <= 1e-12 * (1.0 + r.nodes[i].abs()));
            prop_assert!((r.weights[i] - r.weights[j]).abs() <= 1e-12 * r.weights[i].max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn cache_returns_identical_arrays(n in 1usize..=64) {
        let a = gauss_laguerre(n).unwrap();
        let b = gauss_laguerre(n).unwrap();
        prop_assert_eq!(
            a.nodes.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.nodes.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(
            a.weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.weights.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn cache_is_race_free() {
    let handles: Vec<_> = (0..8)
        .map(|_| std::thread::spawn(|| gauss_hermite(97).unwrap()))
        .collect();
    let rules: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(rules.windows(2).all(|p| p[0].nodes == p[1].nodes && p[0].weights == p[1].weights));
}
