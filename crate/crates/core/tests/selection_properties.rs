use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use symwm_core::labeling::AbstractionStore;
use symwm_core::proposal::Pool;
use symwm_core::selection::{hill_climb, AcceptAll, SelectionConfig, SelectionResult};
use symwm_testkit::selection::{random_case, types, FeatureReader, SelectionCase};

fn config(seed: u64) -> SelectionConfig {
    let mut cfg = SelectionConfig::default();
    // Small thresholds let several candidates through on these tiny domains.
    cfg.j_thresh = [0.0, 1.0, 50.0, 2000.0][seed as usize % 4];
    cfg.retain_all_initial = seed % 3 != 0;
    cfg
}

fn run(case: &SelectionCase, pool: &Pool, cfg: &SelectionConfig) -> SelectionResult {
    let store = AbstractionStore::new(Arc::new(case.demos.clone()), types());
    hill_climb(pool, &store, &FeatureReader, &AcceptAll, cfg).unwrap()
}

fn names(r: &SelectionResult) -> BTreeSet<String> {
    r.selected.iter().map(|p| p.signature()).collect()
}

#[test]
fn hill_climbing_properties_on_100_pools() {
    let mut grew = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng);
        let cfg = config(seed);
        let r = run(&case, &case.pool, &cfg);

        let js = r.trace.accepted_j();
        assert!(js.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: J went up: {js:?}");
        for rec in r.trace.iterations.iter().filter(|r| r.accepted) {
            if let Some(before) = rec.j_before {
                assert!(rec.j_after <= before, "seed {seed}");
            }
        }
        for g in &case.pool.goal {
            assert!(r.selected.contains(g), "seed {seed}: lost goal predicate {}", g.name);
        }
        assert!(r.trace.iterations.len() <= case.pool.len(), "seed {seed}");
        let chosen: BTreeSet<&String> = r.trace.iterations.iter().map(|i| &i.chosen).collect();
        assert_eq!(chosen.len(), r.trace.iterations.len(), "seed {seed}: a predicate was chosen twice");
        if r.selected.len() > case.pool.goal.len() + usize::from(cfg.retain_all_initial) * (case.pool.initial.len() - 1) {
            grew += 1;
        }

        // Candidate order in the pool does not matter.
        let mut shuffled = case.pool.clone();
        shuffled.predicates.shuffle(&mut rng);
        let r2 = run(&case, &shuffled, &cfg);
        assert_eq!(names(&r), names(&r2), "seed {seed}");
        assert_eq!(r.trace.iterations, r2.trace.iterations, "seed {seed}");
        assert_eq!(r.evaluation.j, r2.evaluation.j);

        // Nor does the number of worker threads evaluating candidates.
        if seed % 10 == 0 {
            let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let r3 = single.install(|| run(&case, &case.pool, &cfg));
            assert_eq!(r.trace, r3.trace, "seed {seed}");
        }
    }
    // The fuzzed pools must actually exercise selection.
    assert!(grew >= 20, "only {grew} runs selected anything beyond the fixed set");
}

#[test]
fn empty_goal_is_rejected() {
    let case = random_case(&mut ChaCha8Rng::seed_from_u64(1));
    let mut pool = case.pool.clone();
    pool.goal.clear();
    let store = AbstractionStore::new(Arc::new(case.demos.clone()), types());
    assert!(hill_climb(&pool, &store, &FeatureReader, &AcceptAll, &SelectionConfig::default()).is_err());
}
