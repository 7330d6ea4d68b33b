use proptest::prelude::*;

use hkg_core::split::split_indices;
use hkg_core::train::train_model;
use hkg_core::{
    generate, random_link_split, run_repeated, HeteroSageModel, ModelConfig, RunConfig,
    SplitConfig, SynthConfig, TrainConfig,
};

fn small_graph(students: usize, seed: u64) -> hkg_core::Hkg {
    generate(&SynthConfig {
        students,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
    .built
    .hkg
}

#[test]
fn short_training_reduces_loss_and_beats_chance() {
    let hkg = small_graph(150, 2);
    let split = random_link_split(&hkg, [0.8, 0.1, 0.1], 0).unwrap();
    let tcfg = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let (_, m) = train_model(&hkg, &split, &ModelConfig::default(), &tcfg).unwrap();
    let first = m.epochs.first().unwrap().train_loss;
    let last = m.epochs.last().unwrap().train_loss;
    assert!(last < first, "loss {first} -> {last}");
    assert!(m.test_auc.unwrap() > 0.7, "{:?}", m.test_auc);
}

#[test]
fn repeated_runs_vary_seeds_and_checkpoints_reload() {
    let hkg = small_graph(40, 6);
    let tcfg = TrainConfig {
        epochs: 2,
        runs: 3,
        seed: 10,
        ..TrainConfig::default()
    };
    let split = SplitConfig {
        seed: 20,
        ..SplitConfig::default()
    };
    let mut ckpts = Vec::new();
    let (runs, agg) = run_repeated(&hkg, &split, &ModelConfig::default(), &tcfg, |_, m, _| {
        ckpts.push(m.to_checkpoint())
    })
    .unwrap();
    assert_eq!(agg.runs, 3);
    let seeds: Vec<(u64, u64)> = runs.iter().map(|r| (r.seed, r.split_seed)).collect();
    assert_eq!(seeds, [(10, 20), (11, 21), (12, 22)]);
    for bytes in &ckpts {
        let back = HeteroSageModel::from_checkpoint(bytes, &hkg).unwrap();
        assert_eq!(&back.to_checkpoint(), bytes);
    }
    assert_ne!(ckpts[0], ckpts[1]);
}

#[test]
fn config_file_drives_training_config() {
    let cfg = RunConfig::from_toml_str("[sample]\nbatch_size = 8\n[model]\nhidden_dim = 16\n")
        .unwrap()
        .with_seed(5);
    let t = cfg.train_config();
    assert_eq!((t.batch_size, t.seed, cfg.split.seed), (8, 5, 5));
    assert!(t.validate(&cfg.model).is_ok());
    assert_eq!(cfg.model.hidden_dim, 16);
}

proptest! {
    #[test]
    fn split_is_an_exact_partition(n in 10usize..5000, seed in any::<u64>(), a in 0.05f64..0.9) {
        let b = (1.0 - a) / 2.0;
        let s = split_indices(n, [a, b, 1.0 - a - b], seed).unwrap();
        prop_assert_eq!(s.train.len(), (a * n as f64 + 1e-9 * n as f64).floor() as usize);
        let mut seen = vec![false; n];
        for &e in s.train.iter().chain(&s.val).chain(&s.test) {
            prop_assert!(!seen[e]);
            seen[e] = true;
        }
        prop_assert!(seen.into_iter().all(|x| x));
    }
}
