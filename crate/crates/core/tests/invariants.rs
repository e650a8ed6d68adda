use std::sync::Arc;

use osp_core::eval::osp_overlap;
use osp_core::family::{DecisionSetFamily, ScoreRule, SelectiveDecision};
use osp_core::metrics::{decisions, evaluate};
use osp_core::net::{backward, loss_value, softmax, Activation, BackboneSpec, BatchLoss, SelectiveModel};
use osp_core::oracle::{
    confidence_to_sets, sets_to_confidence, solve_osp_exact, AlphaAllocation, FiniteHypothesisClass,
};
use osp_core::select::{select, GridCell, SelectionCriterion, SelectionGrid};
use osp_core::train::{ConstraintLoss, LagrangianState, OspLagrangian, RestrictedLoss};
use osp_core::{LabeledDataset, Region};
use proptest::prelude::*;

fn dataset(dim: usize, max_n: usize, k: usize) -> impl Strategy<Value = LabeledDataset> {
    (1..max_n).prop_flat_map(move |n| {
        (
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, dim), n),
            proptest::collection::vec(0..k, n),
        )
            .prop_map(move |(xs, ys)| LabeledDataset::from_parts(xs, ys, k).unwrap())
    })
}

fn model(dim: usize, k: usize, seed: u64) -> SelectiveModel {
    SelectiveModel::new(BackboneSpec::new(vec![dim, 5], Activation::Tanh).unwrap(), k, seed).unwrap()
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in proptest::collection::vec(-700.0f64..700.0, 1..8)) {
        let p = softmax(&z);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Order of logits is preserved.
        for i in 0..z.len() {
            for j in 0..z.len() {
                if z[i] > z[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn softmax_ignores_a_common_shift(z in proptest::collection::vec(-20.0f64..20.0, 2..6), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_are_consistent_counts(d in dataset(1, 60, 3), cuts in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let regions = vec![
            Region::at_most(0, cuts[0]),
            Region::above(0, cuts[1]),
            Region::interval(0, cuts[2] - 0.5, cuts[2] + 0.5),
        ];
        let family = DecisionSetFamily::from_regions(1, regions, false).unwrap();
        let m = evaluate(&family, &d).unwrap();
        prop_assert_eq!(m.n, d.len());
        prop_assert!((m.coverage + m.rejection_rate - 1.0).abs() < 1e-12);
        prop_assert!(m.raw_error <= m.coverage + 1e-12);
        prop_assert_eq!(m.errors, m.one_sided_counts.iter().sum::<usize>());
        prop_assert!((m.one_sided_error_sum() - m.raw_error).abs() < 1e-15);
        let ds = decisions(&family, &d).unwrap();
        let accepted = ds.iter().filter(|x| !x.is_reject()).count();
        prop_assert_eq!(accepted, m.accepted);
        let wrong = ds.iter().zip(d.labels()).filter(|(x, y)| matches!(x, SelectiveDecision::Predict(k) if k != y)).count();
        prop_assert_eq!(wrong, m.errors);
    }

    #[test]
    fn one_sided_optimum_grows_with_its_budget(d in dataset(1, 40, 2), e1 in 0.0f64..0.5, de in 0.0f64..0.5, k in 0usize..2) {
        let class = FiniteHypothesisClass::thresholds(0, &FiniteHypothesisClass::data_cuts(&d, 0));
        let lo = solve_osp_exact(&d, &class, k, e1).unwrap();
        let hi = solve_osp_exact(&d, &class, k, (e1 + de).min(1.0)).unwrap();
        prop_assert!(hi.value >= lo.value);
        prop_assert!(lo.error <= e1 + 1e-12);
    }

    #[test]
    fn confidence_round_trip_keeps_decisions(d in dataset(1, 50, 3), a in -3.0f64..3.0, w in 0.0f64..2.0) {
        let regions = vec![
            Region::at_most(0, a),
            Region::interval(0, a + 0.1, a + 0.1 + w),
            Region::above(0, a + 0.2 + w),
        ];
        let family = DecisionSetFamily::from_regions(1, regions, true).unwrap();
        let conf = sets_to_confidence(&family, &d).unwrap();
        let back = confidence_to_sets(1, &conf).unwrap();
        for e in d.iter() {
            prop_assert_eq!(family.classify(&e.features).unwrap(), back.classify(&e.features).unwrap());
        }
    }

    #[test]
    fn allocations_sum_to_one(k in 1usize..4, eps in 0.001f64..0.3, n in 1usize..60) {
        for a in AlphaAllocation::count_grid(k, eps, n) {
            prop_assert!((a.alphas().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.alphas().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn selection_ignores_cell_order(
        raw in proptest::collection::vec((0usize..4, 0usize..5, 0u8..5, 0u8..5), 1..20),
        eps in 0.0f64..0.5,
        rotate in 0usize..20,
    ) {
        let mus = [0.1, 0.5, 1.0, 4.0];
        let ts = [0.0, 0.25, 0.5, 0.75, 1.0];
        // Deduplicate (mu, t) so each cell is unique, as in a real grid.
        let mut seen = std::collections::BTreeMap::new();
        for (m, t, c, e) in raw {
            seen.entry((m, t)).or_insert((c, e));
        }
        let cells: Vec<GridCell> = seen
            .iter()
            .map(|(&(m, t), &(c, e))| GridCell { mu: mus[m], t: ts[t], coverage: c as f64 / 4.0, error: e as f64 / 8.0 })
            .collect();
        let mut moved = cells.clone();
        moved.reverse();
        let r = rotate % moved.len();
        moved.rotate_left(r);
        let grid = |cells: Vec<GridCell>| SelectionGrid { mu_values: mus.to_vec(), t_values: ts.to_vec(), cells };
        for crit in [SelectionCriterion::ErrorConstrained(eps), SelectionCriterion::CoverageConstrained(1.0 - eps)] {
            let a = select(&grid(cells.clone()), crit).unwrap();
            let b = select(&grid(moved.clone()), crit).unwrap();
            prop_assert_eq!(a.cell, b.cell);
            prop_assert_eq!(a.feasible, b.feasible);
        }
    }

    #[test]
    fn raw_overlap_shrinks_as_t_grows(d in dataset(2, 40, 3), seed in 0u64..50, t in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let m = model(2, 3, seed);
        let lo = osp_overlap(&m, t, &d).unwrap();
        let hi = osp_overlap(&m, (t + dt).min(1.0), &d).unwrap();
        prop_assert!(hi <= lo);
        // Two scores above one half cannot coexist.
        prop_assert_eq!(osp_overlap(&m, 0.5, &d).unwrap(), 0.0);
    }

    #[test]
    fn hardened_coverage_shrinks_as_t_grows(d in dataset(2, 40, 3), seed in 0u64..50, t in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let m = Arc::new(model(2, 3, seed));
        let f = |t: f64| DecisionSetFamily::from_scores(m.clone(), t, ScoreRule::Harden).unwrap();
        prop_assert!(evaluate(&f((t + dt).min(1.0)), &d).unwrap().coverage <= evaluate(&f(t), &d).unwrap().coverage);
    }

    #[test]
    fn loss_gradients_match_finite_differences(d in dataset(2, 12, 3), seed in 0u64..1000, k in 0usize..3, coord in 0usize..1000) {
        let mut m = model(2, 3, seed);
        let mut state = LagrangianState::new(3, 0.7).unwrap();
        state.lambdas = vec![0.2, 1.1, 0.5];
        let losses: Vec<Box<dyn BatchLoss>> = vec![
            Box::new(RestrictedLoss { k }),
            Box::new(ConstraintLoss { k }),
            Box::new(OspLagrangian { state, unrestricted: false }),
            Box::new(OspLagrangian { state: LagrangianState::new(3, 0.3).unwrap(), unrestricted: true }),
        ];
        let theta = m.parameters();
        let i = coord % theta.len();
        for loss in &losses {
            let (_, g) = backward(&m, &d, loss.as_ref()).unwrap();
            let analytic = g.flat()[i];
            let h = 1e-5;
            let mut at = |v: f64| {
                let mut p = theta.clone();
                p[i] = v;
                m.set_parameters(&p).unwrap();
                loss_value(&m, &d, loss.as_ref()).unwrap()
            };
            let fd = (at(theta[i] + h) - at(theta[i] - h)) / (2.0 * h);
            m.set_parameters(&theta).unwrap();
            prop_assert!((fd - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()), "{}: fd {fd} analytic {analytic}", loss.name());
        }
    }
}
