use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use symwm_cli::commands::{
    cmd_eval, cmd_gen_demos, cmd_label, cmd_learn, cmd_plan, cmd_propose, cmd_report, load_demos, EvalRow,
    SeedAggregate, Services,
};
use symwm_cli::config::{ConfigError, LabelerConfig, Overrides, RunConfig};
use symwm_cli::pipeline::{evaluate_tasks, model_from_listing};
use symwm_core::artifact::{DatasetArtifact, ModelArtifact};
use symwm_core::atoms::Label;
use symwm_core::execute::Outcome;
use symwm_core::iso::isomorphic;
use symwm_core::labeling::abstract_state;
use symwm_core::listing::Listing;
use symwm_core::pddl::{emit_domain, parse_domain, Domain};
use symwm_sim::DomainName;
use symwm_vlm::{GatewayConfig, GatewayError, PromptBundle, Transport, TransportError};

fn kitchen(out: &Path, seeds: &[u64]) -> RunConfig {
    let mut c = RunConfig::for_domain(DomainName::Kitchen);
    c.seeds = seeds.to_vec();
    c.output_dir = out.to_path_buf();
    c
}

fn listing_fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../core/tests/fixtures/listings/{name}.txt", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn domain_defaults() {
    let k = RunConfig::for_domain(DomainName::Kitchen);
    assert_eq!((k.j_thresh, k.n_demo), (100.0, 3));
    let m = RunConfig::for_domain(DomainName::MoreStacks);
    assert_eq!((m.j_thresh, m.n_demo, m.h_pre_frac, m.h_data_frac), (2000.0, 12, 0.8, 0.05));
    assert_eq!(m.seeds.len(), 5);
    assert_eq!(m.n_tasks, 10);
    assert_eq!(m.labeler, LabelerConfig::GroundTruth);
}

#[test]
fn config_files_layer_over_domain_defaults() {
    let c = RunConfig::from_json(
        r#"{"schema_version": 1, "domain": "kitchen", "seeds": [3], "objective": {"node_budget": 500},
            "labeler": {"kind": "noisy", "flip_rate": 0.05}}"#,
        "run.json",
    )
    .unwrap();
    assert_eq!(c.j_thresh, 100.0);
    assert_eq!(c.objective.node_budget, 500);
    assert_eq!(c.objective.lambda_pred, 100.0);
    assert_eq!(c.pipeline(3).noise.unwrap().seed, 3);
    // Serialized configs load back to themselves.
    assert_eq!(RunConfig::from_json(&c.to_json(), "again.json").unwrap(), c);
}

#[test]
fn config_errors_point_at_the_problem() {
    let e = RunConfig::from_json("{\n  \"schema_version\": 1,\n  \"j_tresh\": 5\n}", "bad.json").unwrap_err();
    match &e {
        ConfigError::Syntax { line, message, .. } => {
            assert_eq!(*line, 3);
            assert!(message.contains("j_tresh"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    assert!(e.to_string().starts_with("bad.json:3:"));

    let e = RunConfig::from_json("{\"schema_version\": 1,\n\"seeds\": [1,,2]}", "c.json").unwrap_err();
    assert!(matches!(e, ConfigError::Syntax { line: 2, .. }), "{e:?}");

    let e = RunConfig::from_json(r#"{"schema_version": 7}"#, "v.json").unwrap_err();
    assert_eq!(e, ConfigError::SchemaVersion { path: "v.json".into(), found: 7 });

    let e = RunConfig::from_json(r#"{"schema_version": 1, "h_pre_frac": 1.5}"#, "f.json").unwrap_err();
    assert!(matches!(e, ConfigError::Invalid { field: "h_pre_frac", .. }));

    let e = RunConfig::from_json(r#"{"schema_version": 1, "domain": "mars"}"#, "d.json").unwrap_err();
    assert!(matches!(e, ConfigError::Invalid { field: "domain", .. }));

    let e = RunConfig::from_json(
        r#"{"schema_version": 1, "labeler": {"kind": "vlm", "gateway": {"base_url": "nope"}}}"#,
        "g.json",
    )
    .unwrap_err();
    assert!(matches!(e, ConfigError::Invalid { field: "labeler.gateway.base_url", .. }));
}

#[test]
fn overrides_win_and_switch_domain_defaults() {
    let base = RunConfig::for_domain(DomainName::MoreStacks);
    let c = base
        .clone()
        .apply(&Overrides {
            domain: Some("kitchen".into()),
            seeds: Some(vec![9]),
            node_budget: Some(77),
            ..Overrides::default()
        })
        .unwrap();
    assert_eq!((c.domain.as_str(), c.j_thresh, c.n_demo), ("kitchen", 100.0, 3));
    assert_eq!((c.objective.node_budget, c.exec.node_budget), (77, 77));
    let c = base
        .apply(&Overrides {
            j_thresh: Some(5.0),
            ..Overrides::default()
        })
        .unwrap();
    assert_eq!(c.j_thresh, 5.0);
    assert!(RunConfig::for_domain(DomainName::Kitchen)
        .apply(&Overrides {
            seeds: Some(vec![]),
            ..Overrides::default()
        })
        .is_err());
}

#[test]
fn kitchen_learn_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = kitchen(dir.path(), &[0]);
    let runs = cmd_learn(&cfg, &Services::default()).unwrap();
    let seed = dir.path().join("seed0");
    for f in ["model.json", "domain.pddl", "listing.txt", "trace.json"] {
        assert!(seed.join(f).is_file(), "{f} missing");
    }
    let want = Listing::parse(&listing_fixture("kitchen")).unwrap().to_operators();
    assert!(isomorphic(&runs[0].model.operators, &want));
    assert_eq!(read(seed.join("listing.txt")), runs[0].listing);
    assert!(runs[0].listing.contains("z<=[idx_0]1.59"));

    // save -> load -> save is byte-identical and loading keeps the model.
    let text = read(seed.join("model.json"));
    let artifact = ModelArtifact::from_json(&text).unwrap();
    assert_eq!(artifact.to_json(), text);
    assert_eq!(artifact.to_model().unwrap(), runs[0].model);
    assert_eq!(artifact.provenance.config_digest, runs[0].report.config_digest);
    assert_eq!(artifact.provenance.config_digest.len(), 64);
    assert_eq!(artifact.trace.as_ref(), Some(&runs[0].report.trace));

    // The written PDDL parses back to the same operators.
    let parsed = parse_domain(&read(seed.join("domain.pddl"))).unwrap();
    assert!(isomorphic(&parsed.operators, &runs[0].model.operators));
}

#[test]
fn equal_inputs_give_equal_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_learn(&kitchen(a.path(), &[2]), &Services::default()).unwrap();
    cmd_learn(&kitchen(b.path(), &[2]), &Services::default()).unwrap();
    for f in ["model.json", "trace.json", "listing.txt", "domain.pddl"] {
        assert_eq!(read(a.path().join("seed2").join(f)), read(b.path().join("seed2").join(f)), "{f}");
    }
}

#[test]
fn pddl_round_trips_on_learned_burger_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::for_domain(DomainName::MoreStacks);
    cfg.seeds = vec![0];
    cfg.n_demo = 4;
    cfg.output_dir = dir.path().to_path_buf();
    let run = &cmd_learn(&cfg, &Services::default()).unwrap()[0];
    assert!(run.model.operators.len() >= 3);
    let text = emit_domain(&Domain {
        name: "more_stacks".into(),
        types: run.model.types.clone(),
        predicates: run.model.predicates.clone(),
        operators: run.model.operators.clone(),
    });
    let back = parse_domain(&text).unwrap();
    assert!(isomorphic(&back.operators, &run.model.operators));
    assert_eq!(emit_domain(&back), text);
}

#[test]
fn eval_writes_fifty_rows_and_per_seed_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = kitchen(dir.path(), &[0, 1, 2, 3, 4]);
    cmd_learn(&cfg, &Services::default()).unwrap();
    let s = cmd_eval(&cfg, dir.path()).unwrap();
    assert_eq!(s.rows.len(), 50);
    let mut r = csv::Reader::from_path(dir.path().join("eval.csv")).unwrap();
    let rows: Vec<EvalRow> = r.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows, s.rows);
    let mut r = csv::Reader::from_path(dir.path().join("eval_seeds.csv")).unwrap();
    let seeds: Vec<SeedAggregate> = r.deserialize().map(Result::unwrap).collect();
    assert_eq!(seeds.len(), 5);
    assert!(seeds.iter().all(|a| a.tasks == 10));
    assert_eq!(s.report.mean_success_rate, 1.0);
    assert_eq!(s.report.std_success_rate, 0.0);
    assert_eq!(s.report.models.len(), 5);
    assert!(s.report.models.values().all(|m| m.dataset_digest.len() == 64));
    assert!(s.text.contains("100.0%"));

    let md = cmd_report(dir.path()).unwrap();
    assert!(md.contains("| 4 | 10 | 10 | 100.0% |"));
    assert!(md.contains(&s.report.config_digest[..12]));
    assert!(dir.path().join("report.md").is_file());
}

#[test]
fn reference_kitchen_listing_solves_every_test_task() {
    let dir = tempfile::tempdir().unwrap();
    let domain = DomainName::Kitchen;
    let listing = Listing::parse(&listing_fixture("kitchen")).unwrap();
    let demos = domain.generate_demos(3, 0).unwrap();
    let cfg = kitchen(dir.path(), &[0, 1, 2, 3, 4]);
    let model = model_from_listing(domain, &listing, &demos, &cfg.sampler).unwrap();
    let learned: Vec<_> = model
        .predicates
        .iter()
        .filter(|p| listing.predicates.iter().any(|l| l.name == p.name))
        .cloned()
        .collect();
    let artifact = ModelArtifact::from_model(domain.name(), &model, &learned);
    let path = dir.path().join("reference.json");
    std::fs::write(&path, artifact.to_json()).unwrap();
    let s = cmd_eval(&cfg, &path).unwrap();
    assert_eq!(s.rows.len(), 50);
    assert!(s.rows.iter().all(|r| r.success), "{:?}", s.rows.iter().find(|r| !r.success));
}

#[test]
fn unsolvable_tasks_count_as_failures() {
    let domain = DomainName::Kitchen;
    let dir = tempfile::tempdir().unwrap();
    let run = &cmd_learn(&kitchen(dir.path(), &[0]), &Services::default()).unwrap()[0];
    let mut tasks = domain.generate_tasks(2, 0).unwrap();
    // Kettle boiling on a burner its knob is not linked to.
    let goal = tasks[1].task.goal.iter().next().unwrap().clone();
    let objects = &tasks[1].task.objects;
    let other_knob = objects
        .iter()
        .find(|o| o.ty == "knob" && !goal.args.contains(o))
        .unwrap()
        .clone();
    let mut args = goal.args.clone();
    let k = args.iter().position(|o| o.ty == "knob").unwrap();
    args[k] = other_knob;
    tasks[1].task.goal = BTreeSet::from([symwm_core::atoms::GroundAtom::new_unchecked(goal.predicate.clone(), args)]);
    let reps = evaluate_tasks(domain, &run.model, &tasks, &Default::default(), 0).unwrap();
    assert!(reps[0].success());
    assert!(matches!(reps[1].outcome, Outcome::PlanFailure { .. }));
}

#[test]
fn empty_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let domain = DomainName::Kitchen;
    let ds = DatasetArtifact::from_demos(domain.name(), &domain.types(), &[], &[]);
    let path = dir.path().join("empty.json");
    std::fs::write(&path, ds.to_json()).unwrap();
    let mut cfg = kitchen(dir.path(), &[0]);
    cfg.dataset = Some(path);
    let e = cmd_learn(&cfg, &Services::default()).unwrap_err();
    assert!(format!("{e:#}").contains("no demonstrations"), "{e:#}");
}

#[test]
fn generated_datasets_feed_learning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = kitchen(dir.path(), &[1]);
    let paths = cmd_gen_demos(&cfg).unwrap();
    assert_eq!(paths, [dir.path().join("dataset_seed1.json")]);
    let text = read(&paths[0]);
    assert_eq!(DatasetArtifact::from_json(&text).unwrap().to_json(), text);

    let from_file = tempfile::tempdir().unwrap();
    let mut c2 = kitchen(from_file.path(), &[1]);
    c2.dataset = Some(paths[0].clone());
    cmd_learn(&c2, &Services::default()).unwrap();
    let direct = tempfile::tempdir().unwrap();
    cmd_learn(&kitchen(direct.path(), &[1]), &Services::default()).unwrap();
    let a = ModelArtifact::from_json(&read(from_file.path().join("seed1/model.json"))).unwrap();
    let b = ModelArtifact::from_json(&read(direct.path().join("seed1/model.json"))).unwrap();
    assert_eq!(a.operators, b.operators);
    assert_eq!(a.provenance.dataset_digest, b.provenance.dataset_digest);

    let mut wrong = kitchen(dir.path(), &[1]);
    wrong.domain = "more_stacks".into();
    wrong.dataset = Some(paths[0].clone());
    assert!(load_demos(&wrong, 1).is_err());
}

#[test]
fn plan_prints_a_two_step_kitchen_plan() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = kitchen(dir.path(), &[0]);
    cmd_learn(&cfg, &Services::default()).unwrap();
    let p = cmd_plan(&cfg, dir.path(), 0, 1).unwrap();
    assert_eq!(p.steps.len(), 2);
    assert!(p.steps[1].contains("PushKettleOntoBurner"));
    let problem = read(&p.problem_path);
    assert!(problem.starts_with("(define (problem"));
}

#[test]
fn ground_truth_labels_match_abstraction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = kitchen(dir.path(), &[0]);
    let s = cmd_label(&cfg, None, &Services::default()).unwrap();
    assert_eq!(s.gateway_requests, 0);
    let domain = DomainName::Kitchen;
    let demos = domain.generate_demos(3, 0).unwrap();
    let preds: Vec<_> = s
        .file
        .predicates
        .iter()
        .map(|n| {
            domain
                .initial_predicates()
                .into_iter()
                .chain(symwm_cli::pipeline::goal_predicates(&demos))
                .find(|p| &p.name == n)
                .unwrap()
        })
        .collect();
    for (d, demo) in demos.iter().enumerate() {
        for (t, state) in demo.states.iter().enumerate() {
            let abs = abstract_state(state, &preds, &demo.objects, &domain.types(), &domain.labeler()).unwrap();
            let trues: BTreeSet<String> = s.file.demos[d][t]
                .iter()
                .filter(|(_, l)| **l == Label::True)
                .map(|(a, _)| a.clone())
                .collect();
            let want: BTreeSet<String> = abs.atoms.iter().map(|a| a.to_string()).collect();
            assert_eq!(trues, want, "demo {d} step {t}");
        }
    }
    let on_disk: symwm_cli::commands::LabelsFile = serde_json::from_str(&read(&s.path)).unwrap();
    assert_eq!(on_disk, s.file);
}

fn vlm_config(out: &Path, cache: PathBuf, token_env: &str) -> RunConfig {
    let mut c = RunConfig::for_domain(DomainName::MoreStacks);
    c.seeds = vec![0];
    c.n_demo = 1;
    c.output_dir = out.to_path_buf();
    c.labeler = LabelerConfig::Vlm {
        gateway: GatewayConfig {
            token_env: token_env.into(),
            ..GatewayConfig::default()
        },
        cache_dir: Some(cache),
        double_check: true,
    };
    c
}

#[test]
fn vlm_without_credentials_fails_before_touching_anything() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("out");
    let cfg = vlm_config(&out, root.path().join("cache"), "SYMWM_UNSET_TOKEN_FOR_TESTS");
    for e in [
        cmd_label(&cfg, None, &Services::default()).unwrap_err(),
        cmd_propose(&cfg, &Services::default()).unwrap_err(),
        cmd_learn(&cfg, &Services::default()).err().unwrap(),
    ] {
        assert!(
            matches!(e.downcast_ref::<GatewayError>(), Some(GatewayError::AuthFailure(_))),
            "{e:#}"
        );
    }
    assert!(!out.exists());
    assert!(!root.path().join("cache").exists());
}

/// Answers label prompts with True for every atom and proposal prompts
/// with a fixed transcript; counts calls.
#[derive(Default)]
struct FakeVlm {
    calls: std::sync::atomic::AtomicUsize,
}

impl Transport for FakeVlm {
    fn send(&self, bundle: &PromptBundle, _: &GatewayConfig) -> Result<String, TransportError> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        if bundle.atoms.is_empty() && bundle.text.contains("Skills executed in trajectory") {
            return Ok("1. **Pick[robot:robot, patty1:patty]**\n    - Before: nearby(robot, grill)\n    - After: clutching(robot, grill)\n    - Synonyms: grasping(robot, grill)\n    - Antonyms: released(robot, grill)\n".into());
        }
        Ok(bundle.atoms.iter().map(|a| format!("* {a}: True. looks so\n")).collect())
    }
}

#[test]
fn warm_cache_means_no_gateway_requests() {
    let root = tempfile::tempdir().unwrap();
    let cache = root.path().join("cache");
    let fake = Arc::new(FakeVlm::default());
    let services = Services {
        transport: Some(fake.clone()),
    };

    let cold = vlm_config(&root.path().join("a"), cache.clone(), "UNUSED");
    let p1 = cmd_propose(&cold, &services).unwrap();
    assert_eq!(p1.gateway_requests, 1);
    assert!(p1.pool.predicates.iter().any(|p| p.name == "clutching"));
    let pool_path = p1.path.clone();
    let l1 = cmd_label(&cold, Some(&pool_path), &services).unwrap();
    assert!(l1.gateway_requests > 0);
    assert!(l1.file.labeler.contains("vlm-gpt-4o"));
    let visual_true = l1.file.demos[0][0].iter().any(|(a, l)| a.starts_with("clutching(") && *l == Label::True);
    assert!(visual_true);
    let before = fake.calls.load(std::sync::atomic::Ordering::SeqCst);

    let warm = vlm_config(&root.path().join("b"), cache, "UNUSED");
    let p2 = cmd_propose(&warm, &services).unwrap();
    let l2 = cmd_label(&warm, Some(&pool_path), &services).unwrap();
    assert_eq!((p2.gateway_requests, l2.gateway_requests), (0, 0));
    assert_eq!(fake.calls.load(std::sync::atomic::Ordering::SeqCst), before);
    assert_eq!(read(&l1.path), read(&l2.path));
    assert_eq!(read(p1.path), read(p2.path));
    // Every request and cache hit is audited.
    let audit = read(root.path().join("b/audit.ndjson"));
    assert!(audit.lines().count() as usize >= l1.gateway_requests);
    assert!(audit.lines().all(|l| l.contains("\"cache_hit\"")));
}
