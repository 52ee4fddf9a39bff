use coxswitch::rng::{substream, Stream};
use coxswitch::switching::{
    sample_path, sample_path_with, FamilyState, ModeId, NextLaw, RateMap, SwitchingFamily, SwitchingPath,
};
use proptest::prelude::*;

#[test]
fn poisson_counts_match_mean_and_variance() {
    let fam = SwitchingFamily::iid(vec![0.5, 0.5]).unwrap();
    let rates = RateMap::constant(5.0, 2).unwrap();
    let n = 10_000;
    let counts: Vec<f64> = (0..n)
        .map(|i| {
            let mut rng = substream(99, i, Stream::Switching);
            sample_path_with(&fam, &rates, ModeId(0), 10.0, &mut rng).unwrap().jump_count() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!((mean - 50.0).abs() <= 3.0 * (50.0 / n as f64).sqrt(), "mean {mean}");
    assert!((var - 50.0).abs() <= 0.2 * 50.0, "variance {var}");
}

#[test]
fn sojourn_means_follow_mode_rates() {
    let fam = SwitchingFamily::iid(vec![0.5, 0.5]).unwrap();
    let rates = RateMap::new(vec![50.0, 1.0], 50.0).unwrap();
    let mut sojourns = [Vec::new(), Vec::new()];
    let mut seed = 0;
    while sojourns.iter().any(|s| s.len() < 10_000) {
        let mut rng = substream(3, seed, Stream::Switching);
        let path = sample_path_with(&fam, &rates, ModeId(seed as usize % 2), 2000.0, &mut rng).unwrap();
        for k in 0..path.jump_times.len() {
            let start = if k == 0 { 0.0 } else { path.jump_times[k - 1] };
            sojourns[path.modes[k].0].push(path.jump_times[k] - start);
        }
        seed += 1;
    }
    for (mode, expect) in [(0usize, 0.02), (1, 1.0)] {
        let s = &sojourns[mode][..10_000];
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        // exponential law: standard deviation equals the mean
        let se = expect / (s.len() as f64).sqrt();
        assert!((mean - expect).abs() <= 3.0 * se, "mode {mode}: {mean}");
    }
}

fn walk_transitions(steps: usize, seed: u64) -> [[usize; 2]; 2] {
    let fam = SwitchingFamily::ReflectedMaxWalk;
    let mut state = fam.initial_state(ModeId(0)).unwrap();
    let mut rng = substream(seed, 0, Stream::Switching);
    let mut counts = [[0usize; 2]; 2];
    for _ in 0..steps {
        let from = state.mode().0;
        let to = fam.next_mode(&mut state, &mut rng).0;
        counts[from][to] += 1;
    }
    counts
}

#[test]
fn reflected_walk_transition_frequencies() {
    let counts = walk_transitions(100_000, 17);
    let n0 = (counts[0][0] + counts[0][1]) as f64;
    let f01 = counts[0][1] as f64 / n0;
    let sigma0 = (0.25 / n0).sqrt();
    assert!((f01 - 0.5).abs() <= 3.0 * sigma0, "out of mode 0: {f01}");
    let n1 = (counts[1][0] + counts[1][1]) as f64;
    let f11 = counts[1][1] as f64 / n1;
    assert!(f11 >= 0.5 - 3.0 * (0.25 / n1).sqrt(), "stay in mode 1: {f11}");
}

#[test]
fn reflected_walk_law_at_maximum_matches_empirical() {
    let fam = SwitchingFamily::ReflectedMaxWalk;
    let law = fam.conditional_next_distribution(&FamilyState::Walk { sum: 3, max: 3 });
    let NextLaw::Exact(dist) = law else {
        panic!("mode 0 law should be exact, got {law:?}");
    };
    let counts = walk_transitions(100_000, 23);
    let n0 = (counts[0][0] + counts[0][1]) as f64;
    for to in 0..2 {
        let f = counts[0][to] as f64 / n0;
        let sigma = (dist[to] * (1.0 - dist[to]) / n0).sqrt();
        assert!((f - dist[to]).abs() <= 3.0 * sigma, "to {to}: {f} vs {}", dist[to]);
    }
}

#[test]
fn hidden_markov_identity_marginal() {
    let fam = SwitchingFamily::hidden_markov(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        0,
    )
    .unwrap();
    let state = fam.initial_state(ModeId(0)).unwrap();
    assert_eq!(fam.conditional_next_distribution(&state), NextLaw::Exact(vec![1.0, 0.0]));
}

#[test]
fn identical_inputs_give_identical_paths() {
    let fam = SwitchingFamily::ReflectedMaxWalk;
    let rates = RateMap::new(vec![50.0, 1.0], 50.0).unwrap();
    let a = sample_path(&fam, &rates, ModeId(0), 100.0, 42).unwrap();
    let b = sample_path(&fam, &rates, ModeId(0), 100.0, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_table(), b.to_table());
    let c = sample_path(&fam, &rates, ModeId(0), 100.0, 43).unwrap();
    assert_ne!(a.jump_times, c.jump_times);
}

proptest! {
    #[test]
    fn mode_at_matches_linear_scan(seed in any::<u64>(), queries in prop::collection::vec(0.0f64..1.0, 1..50)) {
        let fam = SwitchingFamily::markov(vec![vec![0.2, 0.8], vec![0.7, 0.3]]).unwrap();
        let rates = RateMap::new(vec![3.0, 1.0], 3.0).unwrap();
        let horizon = 20.0;
        let path: SwitchingPath = sample_path(&fam, &rates, ModeId(1), horizon, seed).unwrap();
        let mut qs: Vec<f64> = queries.iter().map(|q| q * horizon).collect();
        qs.extend(path.jump_times.iter().copied());
        for t in qs {
            let mut k = 0;
            while k < path.jump_times.len() && path.jump_times[k] <= t {
                k += 1;
            }
            prop_assert_eq!(path.mode_at(t).unwrap(), path.modes[k]);
        }
    }

    #[test]
    fn paths_respect_structural_invariants(seed in any::<u64>(), horizon in 0.0f64..30.0) {
        let fam = SwitchingFamily::ReflectedMaxWalk;
        let rates = RateMap::new(vec![5.0, 1.0], 5.0).unwrap();
        let path = sample_path(&fam, &rates, ModeId(0), horizon, seed).unwrap();
        prop_assert_eq!(path.modes.len(), path.jump_times.len() + 1);
        prop_assert_eq!(path.states.len(), path.modes.len());
        for w in path.jump_times.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        prop_assert!(path.jump_times.iter().all(|&t| t > 0.0 && t <= horizon));
        for (s, m) in path.states.iter().zip(&path.modes) {
            prop_assert_eq!(s.mode(), *m);
        }
    }
}
