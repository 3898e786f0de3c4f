use super::*;
use crate::data::GtRecord;

fn kv(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn tiny_sac_map(dir: &Path) -> BTreeMap<String, String> {
    kv(&[
        ("env", "chain"),
        ("chain.cells", "5"),
        ("chain.horizon", "30"),
        ("algorithm", "sac"),
        ("sac.hidden", "8,8"),
        ("sac.batch_size", "16"),
        ("sac.initial_exploration_steps", "50"),
        ("run.total_steps", "200"),
        ("run.eval_interval", "50"),
        ("run.eval_episodes", "4"),
        ("out.dir", dir.to_str().unwrap()),
    ])
}

#[test]
fn kv_parsing_comments_overrides_and_unknown_keys() {
    let text = "# a comment\n\nenv = chain\nsac.lr = 0.001\n";
    let mut map = parse_kv_text(text).unwrap();
    assert_eq!(map["env"], "chain");
    apply_overrides(&mut map, &["sac.lr=0.002".into(), "run.total_steps=5".into()]).unwrap();
    assert_eq!(map["sac.lr"], "0.002");

    let cfg = ExperimentConfig::from_map(map).unwrap();
    assert_eq!(cfg.sac.lr, 0.002);
    assert_eq!(cfg.total_steps, 5);

    assert!(parse_kv_text("no equals sign").is_err());
    let bad = kv(&[("not.a.key", "1")]);
    assert!(ExperimentConfig::from_map(bad).is_err());
}

#[test]
fn config_hash_is_stable_and_sensitive() {
    let a = ExperimentConfig::from_map(kv(&[("env", "chain")])).unwrap();
    let b = ExperimentConfig::from_map(kv(&[("env", "chain")])).unwrap();
    let c = ExperimentConfig::from_map(kv(&[("env", "chain"), ("sac.lr", "0.001")])).unwrap();
    assert_eq!(a.config_hash(), b.config_hash());
    assert_ne!(a.config_hash(), c.config_hash());
    assert_eq!(a.config_hash().len(), 64);
}

#[test]
fn rlv_config_requires_obs_path() {
    let map = kv(&[("algorithm", "rlv")]);
    assert!(ExperimentConfig::from_map(map).is_err());
}

#[test]
fn metrics_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let rows = vec![
        MetricsRow {
            env_step: 100,
            eval_success_rate: 0.25,
            eval_mean_return: -3.5,
            loss_q1: 0.1,
            loss_q2: 0.2,
            loss_policy: -0.3,
            loss_inv: 0.4,
            loss_discrim: -1.386,
            loss_pair: 0.0,
            alpha: 0.9,
            wall_seconds: 0.0,
        },
        MetricsRow {
            env_step: 200,
            eval_success_rate: 1.0,
            eval_mean_return: 1.0,
            loss_q1: 0.0,
            loss_q2: 0.0,
            loss_policy: 0.0,
            loss_inv: 0.0,
            loss_discrim: 0.0,
            loss_pair: 0.0,
            alpha: 0.5,
            wall_seconds: 0.0,
        },
    ];
    write_metrics_csv(&path, "deadbeef", &rows).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# config-hash: deadbeef\n"));
    assert_eq!(text.lines().nth(1).unwrap(), CSV_HEADER);
    let (hash, back) = read_metrics_csv(&path).unwrap();
    assert_eq!(hash, "deadbeef");
    assert_eq!(back, rows);
}

#[test]
fn zero_total_steps_yields_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut map = tiny_sac_map(dir.path());
    map.insert("run.total_steps".into(), "0".into());
    let cfg = ExperimentConfig::from_map(map).unwrap();
    let out = run_experiment(&cfg, 0).unwrap();
    assert!(out.rows.is_empty());
    let text = fs::read_to_string(&out.csv_path).unwrap();
    assert_eq!(text.lines().count(), 2); // hash comment + header
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_map(tiny_sac_map(dir.path())).unwrap();
    let first = run_experiment(&cfg, 7).unwrap();
    let csv1 = fs::read(&first.csv_path).unwrap();
    let ckpt1 = fs::read(&first.checkpoint_path).unwrap();
    let second = run_experiment(&cfg, 7).unwrap();
    assert_eq!(csv1, fs::read(&second.csv_path).unwrap());
    assert_eq!(ckpt1, fs::read(&second.checkpoint_path).unwrap());
    assert!(!first.rows.is_empty());
    assert!(first.rows.iter().all(|r| r.is_finite()));
    // env_step strictly increases.
    for pair in first.rows.windows(2) {
        assert!(pair[1].env_step > pair[0].env_step);
    }
}

#[test]
fn checkpoint_bundle_manifest_is_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_map(tiny_sac_map(dir.path())).unwrap();
    let out = run_experiment(&cfg, 1).unwrap();
    let manifest = read_bundle_manifest(&out.checkpoint_path).unwrap();
    assert_eq!(manifest["algorithm"], "sac");
    assert_eq!(manifest["config_hash"], cfg.config_hash());
    let blocks: Vec<&str> = manifest["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(blocks, vec!["policy", "q1", "q2", "target_q1", "target_q2"]);
}

#[test]
fn ablation_mode_none_matches_run_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_map(tiny_sac_map(dir.path())).unwrap();
    let direct = run_experiment(&cfg, 3).unwrap();
    let via_ablate = run_ablation(&cfg, AblationMode::None, &[3]).unwrap();
    assert_eq!(via_ablate.len(), 1);
    assert_eq!(via_ablate[0].1.rows, direct.rows);
}

fn write_tiny_obs_dataset(dir: &Path, zero_gt_rewards: bool, clear_ends: bool) -> (PathBuf, usize) {
    let env = Env::Chain(ChainEnv {
        n_cells: 5,
        horizon: 30,
    });
    let iso = IsomorphismSpec::identity(5);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let space = env.action_space();
    let mut policy = |_s: &[f64], r: &mut ChaCha8Rng| space.sample_uniform(r);
    let (mut obs, mut gt) =
        generate_observation_dataset(&env, &iso, &mut policy, 4, &mut rng).unwrap();
    if zero_gt_rewards {
        for g in &mut gt {
            g.r = 0.0;
        }
    }
    if clear_ends {
        for o in &mut obs {
            o.traj_end = false;
        }
    }
    let header = DatasetHeader {
        schema: 1,
        env: env.name().into(),
        obs_dim: 5,
        act_dim: 3,
    };
    let path = dir.join(if zero_gt_rewards {
        "obs_zero.jsonl"
    } else {
        "obs.jsonl"
    });
    write_obs_dataset(&path, &header, &obs).unwrap();
    write_sidecar(&path, &header, &gt).unwrap();
    (path, obs.len())
}

fn tiny_rlv_map(dir: &Path, obs_path: &Path) -> BTreeMap<String, String> {
    let mut map = tiny_sac_map(dir);
    map.insert("algorithm".into(), "rlv".into());
    map.insert("data.obs_path".into(), obs_path.to_str().unwrap().into());
    map.insert("rlv.identity_encoder".into(), "true".into());
    map.insert("rlv.n_int".into(), "8".into());
    map.insert("rlv.m_obs".into(), "8".into());
    map.insert("rlv.c_small".into(), "-1".into());
    map.insert("rlv.inverse_hidden".into(), "8".into());
    map.insert("rlv.discr_hidden".into(), "8".into());
    map
}

#[test]
fn rlv_smoke_run_is_finite_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (obs_path, _) = write_tiny_obs_dataset(dir.path(), false, false);
    let cfg = ExperimentConfig::from_map(tiny_rlv_map(dir.path(), &obs_path)).unwrap();
    let a = run_experiment(&cfg, 5).unwrap();
    let bytes = fs::read(&a.csv_path).unwrap();
    let b = run_experiment(&cfg, 5).unwrap();
    assert_eq!(bytes, fs::read(&b.csv_path).unwrap());
    assert!(a.rows.iter().all(|r| r.is_finite()));
}

/// zero_rewards must behave exactly like gt_rewards fed an all-zero sidecar:
/// the two runs differ only in where the zeros come from.
#[test]
fn zero_rewards_equals_gt_rewards_with_zero_sidecar() {
    // zero_rewards withdraws both the reward and the trajectory-end terminal
    // claim, so its oracle is gt_rewards on a zeroed sidecar over the same
    // dataset with every traj_end flag cleared.
    let dir = tempfile::tempdir().unwrap();
    let (obs_a, _) = write_tiny_obs_dataset(dir.path(), false, false);
    let (obs_b, _) = write_tiny_obs_dataset(dir.path(), true, true);

    let mut map_a = tiny_rlv_map(dir.path(), &obs_a);
    map_a.insert("run.ablation".into(), "zero_rewards".into());
    let cfg_a = ExperimentConfig::from_map(map_a).unwrap();
    let rows_a = run_experiment(&cfg_a, 11).unwrap().rows;

    let mut map_b = tiny_rlv_map(dir.path(), &obs_b);
    map_b.insert("run.ablation".into(), "gt_rewards".into());
    let cfg_b = ExperimentConfig::from_map(map_b).unwrap();
    let rows_b = run_experiment(&cfg_b, 11).unwrap().rows;

    assert_eq!(rows_a, rows_b);
}

#[test]
fn gt_modes_demand_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (obs_path, _) = write_tiny_obs_dataset(dir.path(), false, false);
    fs::remove_file(crate::data::sidecar_path(&obs_path)).unwrap();
    let mut map = tiny_rlv_map(dir.path(), &obs_path);
    map.insert("run.ablation".into(), "gt_actions".into());
    let cfg = ExperimentConfig::from_map(map).unwrap();
    assert!(run_experiment(&cfg, 0).is_err());
}

#[test]
fn steps_to_threshold_examples() {
    let series = |vals: &[f64]| -> Vec<MetricsRow> {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| MetricsRow {
                env_step: (i as u64 + 1) * 100,
                eval_success_rate: v,
                eval_mean_return: 0.0,
                loss_q1: 0.0,
                loss_q2: 0.0,
                loss_policy: 0.0,
                loss_inv: 0.0,
                loss_discrim: 0.0,
                loss_pair: 0.0,
                alpha: 0.0,
                wall_seconds: 0.0,
            })
            .collect()
    };
    let rows = series(&[0.0, 0.0, 0.5, 1.0, 1.0]);
    assert_eq!(steps_to_threshold(&rows, 0.9, 1), Some(400));
    assert_eq!(steps_to_threshold(&rows, 2.0, 1), None);

    // Window 3 against a hand-computed rolling mean (shrinking at the start).
    // Values are binary-exact so the means are too:
    // 0.25 | 0.5 | (0.25+0.75+0.75)/3 | 0.75 | (0.75+0.75+1.0)/3 = 2.5/3.
    let noisy = series(&[0.25, 0.75, 0.75, 0.75, 1.0]);
    assert_eq!(steps_to_threshold(&noisy, 0.75, 3), Some(400));
    assert_eq!(steps_to_threshold(&noisy, 0.8, 3), Some(500));
}

#[test]
fn final_success_and_median_helpers() {
    let rows: Vec<MetricsRow> = [0.0, 0.5, 1.0]
        .iter()
        .enumerate()
        .map(|(i, &v)| MetricsRow {
            env_step: i as u64,
            eval_success_rate: v,
            eval_mean_return: 0.0,
            loss_q1: 0.0,
            loss_q2: 0.0,
            loss_policy: 0.0,
            loss_inv: 0.0,
            loss_discrim: 0.0,
            loss_pair: 0.0,
            alpha: 0.0,
            wall_seconds: 0.0,
        })
        .collect();
    assert_eq!(final_success(&rows, 2), 0.75);
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}

#[test]
fn curve_stats_band_matches_independent_standard_error() {
    let mk = |vals: &[f64]| -> Vec<Vec<MetricsRow>> {
        vals.iter()
            .map(|&v| {
                vec![MetricsRow {
                    env_step: 100,
                    eval_success_rate: v,
                    eval_mean_return: 0.0,
                    loss_q1: 0.0,
                    loss_q2: 0.0,
                    loss_policy: 0.0,
                    loss_inv: 0.0,
                    loss_discrim: 0.0,
                    loss_pair: 0.0,
                    alpha: 0.0,
                    wall_seconds: 0.0,
                }]
            })
            .collect()
    };
    // Single seed and identical seeds: zero-width band.
    assert_eq!(curve_stats(&mk(&[0.4]))[0], (100, 0.4, 0.0));
    let same = curve_stats(&mk(&[0.4, 0.4, 0.4, 0.4, 0.4]));
    assert_eq!(same[0].2, 0.0);

    // Five distinct seeds vs an independently computed standard error.
    let vals = [0.1, 0.3, 0.5, 0.7, 0.9];
    let stats = curve_stats(&mk(&vals));
    let mean: f64 = vals.iter().sum::<f64>() / 5.0;
    let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    let stderr = (var / 5.0).sqrt();
    assert!((stats[0].1 - mean).abs() < 1e-9);
    assert!((stats[0].2 - stderr).abs() < 1e-9);
}

#[test]
fn emit_plot_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.svg");
    let rows: Vec<MetricsRow> = (1..=5)
        .map(|i| MetricsRow {
            env_step: i * 100,
            eval_success_rate: i as f64 / 5.0,
            eval_mean_return: 0.0,
            loss_q1: 0.0,
            loss_q2: 0.0,
            loss_policy: 0.0,
            loss_inv: 0.0,
            loss_discrim: 0.0,
            loss_pair: 0.0,
            alpha: 0.0,
            wall_seconds: 0.0,
        })
        .collect();
    let curves = vec![PlotCurve {
        label: "sac".into(),
        seeds: vec![rows.clone(), rows],
    }];
    emit_plot(&curves, &path).unwrap();
    let svg = fs::read_to_string(&path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
    assert!(svg.contains("sac"));
    assert!(emit_plot(&[], &path).is_err());
}

#[test]
fn generate_datasets_writes_all_tiers_and_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let map = kv(&[
        ("env", "chain"),
        ("chain.cells", "5"),
        ("chain.horizon", "20"),
        ("gen.train_steps", "150"),
        ("gen.trajectories", "3"),
        ("gen.pairs", "12"),
        ("sac.hidden", "8"),
        ("sac.batch_size", "8"),
        ("out.dir", dir.path().to_str().unwrap()),
    ]);
    let mut cfg = GenDataConfig::from_map(map).unwrap();
    cfg.sac.initial_exploration_steps = 40;
    let outputs = generate_datasets(&cfg).unwrap();
    assert_eq!(outputs.len(), 4); // low, medium, high, paired
    for out in &outputs {
        assert!(out.path.exists());
        assert!(out.records > 0);
    }
    let (header, obs) = read_obs_dataset(&outputs[0].path).unwrap();
    assert_eq!(header.obs_dim, 5);
    assert_eq!(obs.len(), outputs[0].records);
    let (_, gt): (_, Vec<GtRecord>) = read_sidecar(&outputs[0].path).unwrap();
    assert_eq!(gt.len(), obs.len());
    let (_, pairs) = read_paired_dataset(&outputs[3].path).unwrap();
    assert_eq!(pairs.len(), 12);
}
