//! Property tests for the model invariants.

use proptest::prelude::*;

use stepmix::ecm::{cm_pi, e_step, initialize};
use stepmix::model::{
    log_density, mean_vector, observed_loglik, Cluster, MixtureParams, Profile, ProfileParams,
    Responsibilities, Segmentation,
};

fn cluster_strategy() -> impl Strategy<Value = Cluster> {
    prop_oneof![
        Just(Cluster::Flat),
        Just(Cluster::OneJump),
        Just(Cluster::TwoJumps),
        Just(Cluster::OneDoubleJump),
    ]
}

fn segmentation_strategy(n: usize, k: Cluster) -> BoxedStrategy<Segmentation> {
    match k {
        Cluster::Flat => Just(Segmentation::flat()).boxed(),
        Cluster::OneJump | Cluster::OneDoubleJump => (1..n)
            .prop_map(move |t| Segmentation::new(k, vec![t]).unwrap())
            .boxed(),
        Cluster::TwoJumps => (1..n - 1)
            .prop_flat_map(move |u| (Just(u), u + 1..n))
            .prop_map(move |(u, v)| Segmentation::new(k, vec![u, v]).unwrap())
            .boxed(),
    }
}

fn shape_strategy() -> impl Strategy<Value = (usize, Cluster, Segmentation)> {
    (4usize..60, cluster_strategy())
        .prop_flat_map(|(n, k)| segmentation_strategy(n, k).prop_map(move |seg| (n, k, seg)))
}

proptest! {
    /// The mean vector never increases over time for a non-positive jump,
    /// whatever the cluster and segmentation.
    #[test]
    fn mean_vector_is_non_increasing(
        (n, k, seg) in shape_strategy(),
        mu in -10.0f64..10.0,
        delta in -8.0f64..0.0,
    ) {
        let m = mean_vector(n, k, mu, delta, &seg).unwrap();
        for w in m.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    /// The four-case mean equals `mu + delta * T` with `T` the derived
    /// incidence vector.
    #[test]
    fn mean_vector_equals_incidence_form(
        (n, k, seg) in shape_strategy(),
        mu in -10.0f64..10.0,
        delta in -8.0f64..8.0,
    ) {
        let m = mean_vector(n, k, mu, delta, &seg).unwrap();
        let t = seg.incidence(n);
        for i in 0..n {
            prop_assert!((m[i] - (mu + delta * t[i])).abs() < 1e-12);
        }
    }

    /// Shifting the data and the baseline together leaves the density alone.
    #[test]
    fn log_density_shift_invariant(
        values in proptest::collection::vec(-5.0f64..5.0, 4..40),
        shift in -50.0f64..50.0,
        sigma2 in 0.1f64..4.0,
    ) {
        let n = values.len();
        let y = Profile::new("p", values.clone()).unwrap();
        let shifted =
            Profile::new("p", values.iter().map(|v| v + shift).collect()).unwrap();
        let seg = Segmentation::new(Cluster::OneJump, vec![n / 2]).unwrap();
        let phi = ProfileParams { mu: 1.0, sigma2, seg: seg.clone() };
        let phi_shift = ProfileParams { mu: 1.0 + shift, sigma2, seg };
        let a = log_density(&y, Cluster::OneJump, &phi, -2.0).unwrap();
        let b = log_density(&shifted, Cluster::OneJump, &phi_shift, -2.0).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    /// Responsibilities always form a distribution per profile, and the
    /// proportion update preserves total mass.
    #[test]
    fn e_step_rows_and_pi_sum_to_one(
        seed in any::<u64>(),
        s in 2usize..6,
        n in 8usize..24,
    ) {
        let data: Vec<Profile> = (0..s)
            .map(|i| {
                let mut vals = Vec::with_capacity(n);
                let mut x = (seed ^ i as u64).wrapping_mul(0x9e3779b97f4a7c15);
                for t in 0..n {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    let u = (x >> 11) as f64 / (1u64 << 53) as f64;
                    vals.push(2.0 - 0.05 * t as f64 + (u - 0.5) * 3.0);
                }
                Profile::new(format!("p{i}"), vals).unwrap()
            })
            .collect();
        let params = initialize(&data, seed).unwrap();
        let tau = e_step(&data, &params).unwrap();
        tau.validate().unwrap();
        let pi = cm_pi(&tau);
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn observed_loglik_finite_on_spread_mixtures() {
    // log-sum-exp keeps the likelihood finite even when components are
    // far apart in density
    let data = vec![
        Profile::new("a", vec![100.0, 100.0, -100.0, -100.0]).unwrap(),
        Profile::new("b", vec![0.0, 0.1, -0.1, 0.05]).unwrap(),
    ];
    let per_profile = data
        .iter()
        .map(|_| {
            [
                ProfileParams { mu: 0.0, sigma2: 1e-6, seg: Segmentation::flat() },
                ProfileParams {
                    mu: 100.0,
                    sigma2: 1e-6,
                    seg: Segmentation::new(Cluster::OneJump, vec![2]).unwrap(),
                },
                ProfileParams {
                    mu: 0.0,
                    sigma2: 1e6,
                    seg: Segmentation::new(Cluster::TwoJumps, vec![1, 2]).unwrap(),
                },
                ProfileParams {
                    mu: 0.0,
                    sigma2: 1.0,
                    seg: Segmentation::new(Cluster::OneDoubleJump, vec![2]).unwrap(),
                },
            ]
        })
        .collect();
    let params = MixtureParams { pi: [0.25; 4], delta: -200.0, per_profile };
    let ll = observed_loglik(&data, &params).unwrap();
    assert!(ll.is_finite());
}

#[test]
fn responsibilities_validate_rejects_bad_rows() {
    let bad = Responsibilities { tau: vec![[0.5, 0.5, 0.2, 0.0]] };
    assert!(bad.validate().is_err());
    let good = Responsibilities { tau: vec![[0.25; 4]] };
    assert!(good.validate().is_ok());
}
