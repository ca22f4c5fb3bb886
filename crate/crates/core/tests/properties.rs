use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gesture_hrl::env::PrimitiveAction;
use gesture_hrl::gesture::{completed_gestures, cumulant, oracle, Cell, GestureClass, GridGeometry, TouchHistory, TouchSymbol};
use gesture_hrl::hierarchy::{sample_goal, LevelZeroEncoder};
use gesture_hrl::value::{
    epsilon_greedy, her_relabel, load_approximators, masked_argmax, save_approximators, FeatureLayout, HerStep, Mlp,
    QApproximator, ReplayBuffer,
};

fn symbols(cells: usize) -> impl Strategy<Value = TouchSymbol> {
    prop_oneof![Just(TouchSymbol::Lift), (0..cells).prop_map(|c| TouchSymbol::Touch(Cell(c)))]
}

proptest! {
    #[test]
    fn matcher_agrees_with_oracle_on_3x3(seq in prop::collection::vec(symbols(9), 0..9)) {
        let g = GridGeometry::new(3, 3).unwrap();
        let h = TouchHistory::from_symbols(12, &seq);
        prop_assert_eq!(completed_gestures(&g, &h), oracle::oracle_completed_gestures(&g, &h));
    }

    #[test]
    fn relabeled_cumulants_match_matcher(actions in prop::collection::vec(0usize..12, 1..12), seed in any::<u64>()) {
        let g = GridGeometry::new(3, 2).unwrap();
        let encoder = LevelZeroEncoder::new(g, 0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut history = TouchHistory::for_timeout(10);
        history.push(TouchSymbol::Lift);
        let trajectory: Vec<HerStep> = actions
            .iter()
            .map(|&action| {
                let before = history.clone();
                history.push(PrimitiveAction::from_index(&g, action).symbol());
                HerStep { history: before, action, next_history: history.clone() }
            })
            .collect();
        let goal = sample_goal(&g, GestureClass::Swipe, &mut rng);
        let relabeled = her_relabel(&trajectory, goal, 16, &encoder, &mut rng);
        prop_assert!(relabeled.len() >= trajectory.len());
        for r in relabeled {
            let c = cumulant(&g, &r.goal, &trajectory[r.step].next_history);
            prop_assert_eq!(r.transition.cumulant, c);
            prop_assert_eq!(r.transition.continuation, 0.99 * (1.0 - c));
        }
    }

    #[test]
    fn replay_keeps_the_newest(capacity in 1usize..20, n in 0usize..60) {
        let mut b = ReplayBuffer::new(capacity);
        b.extend(0..n);
        let kept: Vec<usize> = b.iter().copied().collect();
        let expected: Vec<usize> = (n.saturating_sub(capacity)..n).collect();
        prop_assert_eq!(kept, expected);
        prop_assert_eq!(b.inserted(), n as u64);
    }

    #[test]
    fn greedy_choice_is_allowed_and_maximal(
        pairs in prop::collection::vec((-10.0f64..10.0, any::<bool>()), 1..20),
        eps in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (q, mask): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(mask.iter().any(|&m| m));
        let best = masked_argmax(&q, &mask).unwrap();
        prop_assert!(mask[best]);
        prop_assert!(q.iter().zip(&mask).all(|(&v, &m)| !m || v <= q[best]));
        let a = epsilon_greedy(&q, &mask, eps, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(mask[a]);
    }

    #[test]
    fn parameters_round_trip(sizes in prop::collection::vec(1usize..6, 2..4), writes in prop::collection::vec((0usize..24, 0usize..3, -5.0f64..5.0), 0..10), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = QApproximator::network(Mlp::new(&sizes, &mut rng));
        let layout = FeatureLayout::new().one_hot("a", 4).one_hot("b", 6);
        let mut table = QApproximator::table(&layout, 3).unwrap();
        if let gesture_hrl::value::Backend::Table(t) = table.backend_mut() {
            for (row, out, v) in writes {
                t.row_mut(row)[out] = v;
            }
        }
        let mut bytes = Vec::new();
        save_approximators(&mut bytes, 42, &[&net, &table]).unwrap();
        let loaded = load_approximators(bytes.as_slice(), 42).unwrap();
        prop_assert_eq!(&loaded[0], &net);
        prop_assert_eq!(&loaded[1], &table);
        prop_assert!(load_approximators(bytes.as_slice(), 43).is_err());
    }
}
