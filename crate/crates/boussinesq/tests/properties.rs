//! Randomized invariants over the spectral calculus, the stopping rule and
//! the harness bookkeeping. Each property quantifies over its input space
//! through proptest; shrinking reports the smallest failing case.

use proptest::prelude::*;

use boussinesq::coupled::{stopping_index, stopping_time};
use boussinesq::harness::ConfigMap;
use boussinesq::par::replica_seed;
use boussinesq::spectral::{BoxDomain, SpectralField};
use boussinesq::stats::wilson95;
use boussinesq::velocity::LerayProjector;

fn scalar_field(domain: BoxDomain, coeffs: Vec<f64>) -> SpectralField {
    let mut f = SpectralField::zero_scalar(domain);
    let n = f.component(0).coeffs.len().min(coeffs.len());
    f.component_mut(0).coeffs[..n].copy_from_slice(&coeffs[..n]);
    f
}

fn velocity_field(domain: BoxDomain, coeffs: &[f64]) -> SpectralField {
    let mut f = SpectralField::zero_velocity(domain);
    for c in 0..3 {
        let len = f.component(c).coeffs.len();
        for (i, slot) in f.component_mut(c).coeffs.iter_mut().enumerate() {
            *slot = coeffs[(c * len + i * 7) % coeffs.len()];
        }
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Projecting twice changes nothing, the projection is orthogonal in
    /// L2, and the projected field carries no divergence.
    #[test]
    fn leray_is_an_orthogonal_projector(coeffs in prop::collection::vec(-1.0f64..1.0, 32)) {
        let domain = BoxDomain::new(3, 4).unwrap();
        let leray = LerayProjector::new(domain).unwrap();
        let raw = velocity_field(domain, &coeffs);
        let mut p = raw.clone();
        leray.project(&mut p);
        let mut pp = p.clone();
        leray.project(&mut pp);
        let scale = p.norm_l2().max(1e-12);
        prop_assert!(pp.sub(&p).unwrap().norm_l2() <= 1e-12 * scale);
        prop_assert!(leray.divergence_l2(&p) <= 1e-10 * scale);
        let residual = raw.sub(&p).unwrap();
        let inner: f64 = (0..3)
            .map(|c| {
                p.component(c).coeffs.iter()
                    .zip(&residual.component(c).coeffs)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        prop_assert!(inner.abs() <= 1e-10 * scale * raw.norm_l2().max(1e-12));
    }

    /// Sobolev norms scale absolutely homogeneously and obey the
    /// interpolation-style monotonicity mu >= 1 gives in each mode.
    #[test]
    fn sobolev_norms_are_homogeneous_and_ordered(
        coeffs in prop::collection::vec(-1.0f64..1.0, 16),
        a in -3.0f64..3.0,
        s in -1.5f64..1.5,
    ) {
        let domain = BoxDomain::new(1, 16).unwrap();
        let f = scalar_field(domain, coeffs);
        let mut g = f.clone();
        g.scale(a);
        prop_assert!((g.norm_h(s) - a.abs() * f.norm_h(s)).abs() <= 1e-12 * (1.0 + f.norm_h(s)));
        // Eigenvalues on the interval start at 1, so higher order can only
        // grow the norm.
        prop_assert!(f.norm_h(s) <= f.norm_h(s + 0.5) * (1.0 + 1e-12));
    }

    /// Fractional powers compose additively on any field.
    #[test]
    fn fractional_powers_compose(
        coeffs in prop::collection::vec(-1.0f64..1.0, 16),
        a in -1.0f64..1.0,
        b in -1.0f64..1.0,
    ) {
        let domain = BoxDomain::new(1, 32).unwrap();
        let f = scalar_field(domain, coeffs);
        let two = f.fractional_power(a).unwrap().fractional_power(b).unwrap();
        let once = f.fractional_power(a + b).unwrap();
        let scale = once.norm_l2().max(1e-12);
        prop_assert!(two.sub(&once).unwrap().norm_l2() <= 1e-11 * scale);
    }

    /// The heat semigroup composes and contracts on every field.
    #[test]
    fn heat_semigroup_composes_and_contracts(
        coeffs in prop::collection::vec(-1.0f64..1.0, 16),
        t1 in 0.0f64..0.5,
        t2 in 0.0f64..0.5,
    ) {
        let domain = BoxDomain::new(1, 32).unwrap();
        let f = scalar_field(domain, coeffs);
        let two = f.heat_semigroup(t1).heat_semigroup(t2);
        let once = f.heat_semigroup(t1 + t2);
        prop_assert!(two.sub(&once).unwrap().norm_l2() <= 1e-12 * once.norm_l2().max(1e-12));
        prop_assert!(once.norm_l2() <= f.norm_l2() * (1.0 + 1e-12));
    }

    /// The first grid time whose norm exceeds the threshold: every earlier
    /// node obeys the bound, the flagged node does not, and raising the
    /// threshold never makes the stop come earlier.
    #[test]
    fn stopping_rule_is_consistent_and_monotone(
        norms in prop::collection::vec(0.0f64..2.0, 1..40),
        threshold in 0.1f64..1.9,
        bump in 0.0f64..0.5,
    ) {
        let dt = 0.25;
        match stopping_index(&norms, threshold) {
            Some(i) => {
                prop_assert!(norms[i] > threshold);
                prop_assert!(norms[..i].iter().all(|&v| v <= threshold));
                let (tau, hit) = stopping_time(&norms, dt, threshold);
                prop_assert!(hit);
                prop_assert!((tau - i as f64 * dt).abs() <= 1e-12);
            }
            None => {
                prop_assert!(norms.iter().all(|&v| v <= threshold));
                let (tau, hit) = stopping_time(&norms, dt, threshold);
                prop_assert!(!hit);
                prop_assert!((tau - (norms.len() - 1) as f64 * dt).abs() <= 1e-12);
            }
        }
        let early = stopping_index(&norms, threshold);
        let late = stopping_index(&norms, threshold + bump);
        match (early, late) {
            (None, Some(_)) => prop_assert!(false, "raising the threshold created a stop"),
            (Some(a), Some(b)) => prop_assert!(a <= b),
            _ => {}
        }
    }

    /// Wilson bounds always bracket the point estimate inside [0, 1].
    #[test]
    fn wilson_interval_brackets_the_estimate(hits in 0usize..200, extra in 0usize..200) {
        let n = hits + extra;
        prop_assume!(n > 0);
        let p = wilson95(hits, n);
        prop_assert!(0.0 <= p.lo && p.lo <= p.p_hat && p.p_hat <= p.hi && p.hi <= 1.0);
    }

    /// Replica seed derivation never collides across nearby replicas of the
    /// same base seed.
    #[test]
    fn replica_seeds_do_not_collide(base in any::<u64>(), i in 0u64..512, j in 0u64..512) {
        prop_assume!(i != j);
        prop_assert_ne!(replica_seed(base, i), replica_seed(base, j));
    }

    /// Key-value lines survive a render/parse round trip regardless of
    /// spacing, and duplicate keys are rejected.
    #[test]
    fn config_lines_round_trip(
        keys in prop::collection::btree_set("[a-z][a-z0-9_.]{0,12}", 1..8),
        values in prop::collection::vec(-1e6f64..1e6, 8),
        pad in 0usize..4,
    ) {
        let spaces = " ".repeat(pad);
        let text: String = keys
            .iter()
            .zip(&values)
            .map(|(k, v)| format!("{spaces}{k}{spaces}={spaces}{v}\n"))
            .collect();
        let map = ConfigMap::parse(&text).unwrap();
        for (k, v) in keys.iter().zip(&values) {
            let parsed: f64 = map.f64(k).unwrap();
            prop_assert_eq!(parsed, *v);
        }
        let first = keys.iter().next().unwrap();
        let doubled = format!("{text}{first} = 0\n");
        prop_assert!(ConfigMap::parse(&doubled).is_err());
    }
}
