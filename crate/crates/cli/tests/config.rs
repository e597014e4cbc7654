use horizon_cli::config::*;
use horizon_core::Error;
use serde_json::json;

fn config_error(text: &str) -> (String, String) {
    match RunConfig::from_toml_str(text) {
        Err(Error::Config { path, message }) => (path, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn presets_in_the_repo_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            if cfg.sweep().is_some() {
                sweep_points(&cfg).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            }
            seen += 1;
        }
    }
    assert!(seen >= 6);
}

#[test]
fn files_list_only_what_they_change() {
    let cfg = RunConfig::from_toml_str("kind = \"lock-dqn\"\n[learner]\nn = 16\n").unwrap();
    let RunConfig::LockDqn(c) = cfg else { panic!() };
    assert_eq!(c.learner.n, 16);
    assert_eq!(c.learner.hidden, vec![128, 128]);
    assert_eq!(c.env.horizon, 512);
    assert_eq!(c.dataset_kind(), LockDatasetKind::NStep);
}

#[test]
fn errors_name_the_offending_field() {
    assert_eq!(config_error("name = \"x\"\n").0, "kind");
    assert_eq!(config_error("kind = \"lock\"\n").0, "kind");
    assert_eq!(config_error("kind = \"lock-dqn\"\n[learner]\nlr = \"fast\"\n").0, "learner.lr");
    assert_eq!(config_error("kind = \"lock-dqn\"\n[train]\nstep = 5\n").0, "train.step");
    assert_eq!(config_error("kind = \"lock-dqn\"\n[env]\nhorizon = 1\n").0, "env.horizon");
    assert_eq!(config_error("kind = \"lock-dqn\"\nseeds = []\n").0, "seeds");
    assert_eq!(config_error("kind = \"maze-agents\"\n[env]\nlayout = \"attic\"\n").0, "env.layout");
    assert_eq!(config_error("kind = \"maze-agents\"\n[dataset]\ntransitions = 1001\n").0, "dataset.transitions");
    assert_eq!(config_error("kind = \"maze-agents\"\nmethods = [\"ppo\"]\n").0, "methods[0]");
    assert_eq!(config_error("kind = \"oracle-dump\"\n").0, "lock");
    let (path, _) = config_error("kind = \"lock-dqn\"\n[sweep]\naxis = \"depth\"\nvalues = [1]\n");
    assert_eq!(path, "sweep.axis");
    let (path, _) = config_error("kind = \"lock-dqn\"\n[learner]\nn = 0\n");
    assert!(path.contains('n'), "{path}");
    let (path, _) = config_error("kind = [");
    assert_eq!(path, "<toml>");
}

#[test]
fn resolved_config_round_trips() {
    for kind in ["lock-dqn", "maze-agents", "grad-check"] {
        let cfg = RunConfig::from_value(json!({ "kind": kind })).unwrap();
        let again = RunConfig::from_value(cfg.to_value()).unwrap();
        assert_eq!(cfg, again);
    }
}

#[test]
fn overrides_replace_existing_keys_only() {
    let cfg = RunConfig::from_value(json!({ "kind": "lock-dqn" })).unwrap();
    let cfg = cfg.with_overrides(&[("env.horizon", json!(64)), ("learner.n", json!(4))]).unwrap();
    let RunConfig::LockDqn(c) = &cfg else { panic!() };
    assert_eq!((c.env.horizon, c.learner.n), (64, 4));
    assert!(cfg.with_overrides(&[("env.height", json!(3))]).is_err());
    let mut doc = json!({ "a": { "b": 1 } });
    assert!(set_path(&mut doc, "a.b.c", json!(2)).is_err());
    set_path(&mut doc, "a.b", json!(2)).unwrap();
    assert_eq!(doc, json!({ "a": { "b": 2 } }));
}

#[test]
fn deep_merge_keeps_unmentioned_keys() {
    let mut base = json!({ "a": { "x": 1, "y": 2 }, "b": [1, 2] });
    deep_merge(&mut base, json!({ "a": { "y": 3 }, "b": [7] }));
    assert_eq!(base, json!({ "a": { "x": 1, "y": 3 }, "b": [7] }));
}

#[test]
fn sweep_points_cross_variants_with_axis_values() {
    let text = r#"
kind = "lock-dqn"
seeds = [0, 1]
[sweep]
axis = "H"
values = [128, 512]
[[sweep.variants]]
name = "dqn-1"
set = { "learner.n" = 1 }
[[sweep.variants]]
name = "dqn-n16"
set = { "learner.n" = 16 }
"#;
    let cfg = RunConfig::from_toml_str(text).unwrap();
    let points = sweep_points(&cfg).unwrap();
    let groups: Vec<&str> = points.iter().map(|p| p.group.as_str()).collect();
    assert_eq!(groups, ["dqn-1_H128", "dqn-1_H512", "dqn-n16_H128", "dqn-n16_H512"]);
    let RunConfig::LockDqn(c) = &points[3].config else { panic!() };
    assert_eq!((c.env.horizon, c.learner.n), (512, 16));
    assert!(c.sweep.is_none());
}

#[test]
fn every_axis_reaches_its_field() {
    let cases = [
        ("n", 8.0),
        ("dataset_size", 4096.0),
        ("mlp_width", 32.0),
        ("lr", 1e-3),
        ("tau", 0.01),
        ("H", 64.0),
    ];
    for (axis, value) in cases {
        let text = format!("kind = \"lock-dqn\"\n[sweep]\naxis = \"{axis}\"\nvalues = [{value:?}]\n");
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let RunConfig::LockDqn(c) = &sweep_points(&cfg).unwrap()[0].config else { panic!() };
        match axis {
            "n" => assert_eq!(c.learner.n, 8),
            "dataset_size" => assert_eq!(c.dataset.size, 4096),
            "mlp_width" => assert_eq!(c.learner.hidden, vec![32, 32]),
            "lr" => assert_eq!(c.learner.lr, 1e-3),
            "tau" => assert_eq!(c.learner.tau, 0.01),
            _ => assert_eq!(c.env.horizon, 64),
        }
    }
    let maze = RunConfig::from_toml_str("kind = \"maze-agents\"\n[sweep]\naxis = \"mlp_width\"\nvalues = [32]\n").unwrap();
    let RunConfig::MazeAgents(m) = &sweep_points(&maze).unwrap()[0].config else { panic!() };
    assert_eq!((m.agent.policy_hidden.clone(), m.agent.value_hidden.clone()), (vec![32, 32], vec![32, 32]));
    let maze_h = "kind = \"maze-agents\"\n[sweep]\naxis = \"H\"\nvalues = [4]\n";
    assert_eq!(config_error(maze_h).0, "sweep.axis");
    assert_eq!(config_error("kind = \"lock-dqn\"\n[sweep]\naxis = \"n\"\nvalues = [1.5]\n").0, "sweep.values");
}

#[test]
fn method_overrides_apply_to_that_method_only() {
    let text = r#"
kind = "maze-agents"
[agent]
n = 10
[overrides.hfbc]
subgoal_period = 1
[overrides.sharsa.actor_goals]
p_geom = 0.0
p_traj = 1.0
"#;
    let RunConfig::MazeAgents(c) = RunConfig::from_toml_str(text).unwrap() else { panic!() };
    use horizon_core::agents::Method;
    assert_eq!(c.agent_for(Method::Fbc).unwrap(), c.agent);
    let h = c.agent_for(Method::Hfbc).unwrap();
    assert_eq!((h.subgoal_period, h.n), (Some(1), 10));
    let s = c.agent_for(Method::Sharsa).unwrap();
    assert_eq!((s.actor_goals.p_traj, s.actor_goals.p_geom), (1.0, 0.0));
    assert_eq!(s.actor_goals.geom_discount, c.agent.actor_goals.geom_discount);
    assert_eq!(s.subgoal_period, None);

    assert_eq!(config_error("kind = \"maze-agents\"\n[overrides.ppo]\nn = 1\n").0, "overrides.ppo");
    assert_eq!(config_error("kind = \"maze-agents\"\n[overrides.hfbc]\nsubgoal_period = 0\n").0, "overrides.hfbc.subgoal_period");
    assert_eq!(config_error("kind = \"maze-agents\"\n[overrides.hfbc]\nwidth = 3\n").0, "overrides.hfbc.width");
}
