use hps_core::model::{line_reduction, social_laplacian, steady_norms, HumanParams, LineParams, SocialCase, Topology};
use hps_core::scenario::random_scenario;
use hps_core::HpsModel;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;

fn weights(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(0.0..5.0f64, n * n).prop_map(move |v| {
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { v[i * n + j] })
    })
}

fn topology(w: DMatrix<f64>) -> Topology {
    let n = w.nrows();
    Topology {
        incidence: DMatrix::from_fn(n, n - 1, |i, k| {
            if i == k {
                1.0
            } else if i == k + 1 {
                -1.0
            } else {
                0.0
            }
        }),
        social_weights: w,
    }
}

proptest! {
    #[test]
    fn laplacian_rows_sum_to_zero(w in (2usize..7).prop_flat_map(weights)) {
        let l = social_laplacian(&topology(w)).unwrap();
        for i in 0..l.nrows() {
            prop_assert!(l.row(i).sum().abs() <= 1e-12 * (1.0 + l[(i, i)].abs()));
            for j in 0..l.ncols() {
                if i != j {
                    prop_assert!(l[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn case_i_norms_are_convex_combinations(
        rows in proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0.01..1.0f64, 0.0..1.0f64), 2..8)
    ) {
        let n = rows.len();
        let human = HumanParams {
            a: vec![0.5; n],
            c: rows.iter().map(|r| r.2).collect(),
            d: rows.iter().map(|r| r.3).collect(),
            p_ego: rows.iter().map(|r| r.0).collect(),
            p_bio: rows.iter().map(|r| r.1).collect(),
            h: None,
        };
        let p = steady_norms(&human, &DMatrix::zeros(n, n), SocialCase::CaseI).unwrap();
        for (i, r) in rows.iter().enumerate() {
            prop_assert!(p[i] >= r.0.min(r.1) - 1e-12 && p[i] <= r.0.max(r.1) + 1e-12);
        }
    }

    #[test]
    fn line_reduction_inner_diagonal_is_negative(
        lines in proptest::collection::vec((1e-3..10.0f64, 1e-6..1e-2f64), 1..6)
    ) {
        let e = lines.len();
        let params: Vec<LineParams> = lines
            .iter()
            .map(|&(resistance, inductance)| LineParams { resistance, inductance })
            .collect();
        let inc = DMatrix::from_fn(e + 1, e, |i, k| if i == k { 1.0 } else if i == k + 1 { -1.0 } else { 0.0 });
        let red = line_reduction(&params, &inc, 2.0 * std::f64::consts::PI * 60.0).unwrap();
        prop_assert!(red.inner_diagonal.iter().all(|v| *v < 0.0));
        prop_assert!(red.j.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn random_scenarios_build_models() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let p = random_scenario(&mut rng);
        let n = p.n_nodes();
        let model = HpsModel::new(p).unwrap();
        assert_eq!(model.p_bar.len(), n);
        assert!(model.p_bar.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
