use proptest::prelude::*;
use rand::RngCore;

use ir_core::divergence::{
    ir_value, js_divergence_bits, point_mass_jsd_bits, shannon_entropy_bits, ActionDistribution, ActionId, Agent,
    DivergenceError,
};

/// Mean KL divergence of each distribution to the mixture, in bits. Equal to
/// the generalized JSD but computed along a different route.
fn jsd_via_kl(dists: &[Vec<f64>]) -> f64 {
    let n = dists.len() as f64;
    let c = dists[0].len();
    let mix: Vec<f64> = (0..c).map(|a| dists.iter().map(|d| d[a]).sum::<f64>() / n).collect();
    dists
        .iter()
        .map(|d| {
            d.iter()
                .zip(&mix)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, m)| p * (p / m).log2())
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

fn normalized(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn dist_sets() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..6, 2usize..8).prop_flat_map(|(c, n)| {
        prop::collection::vec(
            prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], c)
                .prop_filter("non-zero mass", |w| w.iter().sum::<f64>() > 0.0)
                .prop_map(normalized),
            n,
        )
    })
}

fn lift(raw: &[Vec<f64>]) -> Vec<ActionDistribution> {
    raw.iter().map(|w| ActionDistribution::new(w.clone()).unwrap()).collect()
}

struct Fixed(usize, usize);

impl Agent<()> for Fixed {
    fn action_count(&self) -> usize {
        self.1
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn sample_action(&self, _: &(), _: &mut dyn RngCore) -> Result<ActionId, DivergenceError> {
        Ok(ActionId(self.0))
    }
}

struct Mixed(ActionDistribution);

impl Agent<()> for Mixed {
    fn action_count(&self) -> usize {
        self.0.action_count()
    }
    fn is_deterministic(&self) -> bool {
        false
    }
    fn sample_action(&self, _: &(), rng: &mut dyn RngCore) -> Result<ActionId, DivergenceError> {
        Ok(self.0.sample(rng))
    }
}

proptest! {
    #[test]
    fn jsd_matches_kl_oracle_and_bounds(raw in dist_sets()) {
        let jsd = js_divergence_bits(&lift(&raw)).unwrap();
        prop_assert!((jsd - jsd_via_kl(&raw)).abs() < 1e-9);
        prop_assert!(jsd >= 0.0);
        prop_assert!(jsd <= (raw.len() as f64).log2() + 1e-12);
    }

    #[test]
    fn jsd_is_permutation_invariant(raw in dist_sets(), rot in 0usize..8) {
        let mut shuffled = raw.clone();
        let r = rot % raw.len();
        shuffled.rotate_left(r);
        shuffled.swap(0, raw.len() - 1);
        let a = js_divergence_bits(&lift(&raw)).unwrap();
        let b = js_divergence_bits(&lift(&shuffled)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn jsd_zero_iff_all_equal(raw in dist_sets()) {
        let same = raw.iter().all(|d| d == &raw[0]);
        let jsd = js_divergence_bits(&lift(&raw)).unwrap();
        if same {
            prop_assert_eq!(jsd, 0.0);
        } else {
            prop_assert!(jsd > 0.0);
        }
        let copies = vec![raw[0].clone(); raw.len()];
        prop_assert_eq!(js_divergence_bits(&lift(&copies)).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_matches_generic(actions in prop::collection::vec(0usize..6, 2..20)) {
        let ids: Vec<ActionId> = actions.iter().map(|a| ActionId(*a)).collect();
        let lifted: Vec<ActionDistribution> =
            ids.iter().map(|a| ActionDistribution::point_mass(*a, 6).unwrap()).collect();
        let fast = point_mass_jsd_bits(&ids, 6).unwrap();
        prop_assert!((fast - js_divergence_bits(&lifted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ir_value_in_unit_interval(actions in prop::collection::vec(0usize..5, 2..16), seed: u64) {
        let agents: Vec<Fixed> = actions.iter().map(|a| Fixed(*a, 5)).collect();
        let r = ir_value(&(), &agents, 1, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.value));
        let unanimous = actions.iter().all(|a| *a == actions[0]);
        prop_assert_eq!(r.value == 1.0, unanimous);
    }

    #[test]
    fn deterministic_value_ignores_trials(actions in prop::collection::vec(0usize..5, 2..16), seed: u64) {
        let agents: Vec<Fixed> = actions.iter().map(|a| Fixed(*a, 5)).collect();
        let one = ir_value(&(), &agents, 1, seed).unwrap();
        let many = ir_value(&(), &agents, 17, seed ^ 1).unwrap();
        prop_assert_eq!(one, many);
        prop_assert_eq!(one.samples_used, 1);
    }

    #[test]
    fn stochastic_value_is_bit_reproducible(raw in dist_sets(), seed: u64) {
        let agents: Vec<Mixed> = lift(&raw).into_iter().map(Mixed).collect();
        let a = ir_value(&(), &agents, 30, seed).unwrap();
        let b = ir_value(&(), &agents, 30, seed).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        prop_assert!((0.0..=1.0).contains(&a.value));
    }
}

/// Replacing an agent whose action nobody else chose with a copy of another
/// agent's action never raises the histogram entropy.
#[test]
fn merging_a_singleton_action_never_raises_divergence() {
    for n in 2..=4u32 {
        for c in 2..=4usize {
            for code in 0..c.pow(n) {
                let actions: Vec<usize> = (0..n).map(|i| code / c.pow(i) % c).collect();
                let ids = |a: &[usize]| a.iter().map(|x| ActionId(*x)).collect::<Vec<_>>();
                let before = point_mass_jsd_bits(&ids(&actions), c).unwrap();
                for i in 0..actions.len() {
                    if actions.iter().filter(|a| **a == actions[i]).count() != 1 {
                        continue;
                    }
                    for j in (0..actions.len()).filter(|j| *j != i) {
                        let mut merged = actions.clone();
                        merged[i] = actions[j];
                        let after = point_mass_jsd_bits(&ids(&merged), c).unwrap();
                        assert!(after <= before + 1e-12, "{actions:?} -> {merged:?}: {before} -> {after}");
                    }
                }
            }
        }
    }
}

/// Without the singleton condition the statement is false.
#[test]
fn copying_onto_a_shared_action_can_raise_divergence() {
    let ids = |a: &[usize]| a.iter().map(|x| ActionId(*x)).collect::<Vec<_>>();
    let before = point_mass_jsd_bits(&ids(&[0, 0, 0, 1]), 2).unwrap();
    let after = point_mass_jsd_bits(&ids(&[0, 0, 1, 1]), 2).unwrap();
    assert!(after > before);
}

#[test]
fn entropy_by_hand() {
    let d = ActionDistribution::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
    let by_hand = -(2.0f64 / 3.0) * (2.0f64 / 3.0).log2() - (1.0f64 / 3.0) * (1.0f64 / 3.0).log2();
    assert!((shannon_entropy_bits(&d) - by_hand).abs() < 1e-15);
    assert!((by_hand - 0.918_295_834_054_489_6).abs() < 1e-15);
}

#[test]
fn concurrent_calls_do_not_interact() {
    let coin = || Mixed(ActionDistribution::uniform(2).unwrap());
    let serial: Vec<f64> = (0..8).map(|s| ir_value(&(), &[coin(), coin()], 500, s).unwrap().value).collect();
    let threaded: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|s| scope.spawn(move || ir_value(&(), &[coin(), coin()], 500, s).unwrap().value))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, threaded);
}
