use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparc::model::Checkpoint;
use sparc::store::{contiguous_batch_order, StoreHandle};
use sparc::synth::{generate, SynthConfig};
use sparc::train::{init_params, run_sweep, split_indices, train, SweepAxis, Trainer, METRICS_HEADER};
use sparc::{SelectionMode, TrainConfig};

fn store(dir: &std::path::Path, cfg: SynthConfig) -> StoreHandle {
    let out = generate(&cfg, dir).unwrap();
    StoreHandle::open(&out.manifest_path).unwrap()
}

fn small_synth() -> SynthConfig {
    SynthConfig {
        stream_dims: vec![16, 24, 32],
        n_samples: 4000,
        true_latents: 48,
        true_sparsity: 3,
        noise_std: 0.01,
        n_label_classes: 4,
        seed: 1,
        ..SynthConfig::default()
    }
}

fn small_train() -> TrainConfig {
    TrainConfig {
        latent_dim: 96,
        k: 6,
        epochs: 20,
        batch_size: 64,
        lr: 3e-3,
        auxk_k: 16,
        dead_steps_threshold: 200,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_writes_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(&dir.path().join("store"), small_synth());
    let cfg = TrainConfig { epochs: 0, ..small_train() };
    let run = dir.path().join("run");
    let out = train(&s, &cfg, Some(&run)).unwrap();
    assert_eq!(out.steps, 0);
    let streams: Vec<(String, usize)> = s.streams().iter().map(|x| (x.name.clone(), x.dim)).collect();
    let init = init_params(&streams, cfg.latent_dim, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
    assert_eq!(out.params, init);
    let loaded = Checkpoint::load(&run).unwrap();
    for (a, b) in loaded.params.streams.iter().zip(&init.streams) {
        assert_eq!(a.w_dec, b.w_dec.mapv(|v| v as f32 as f64));
    }
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(csv.trim_end(), METRICS_HEADER);
}

#[test]
fn cross_terms_do_not_move_parameters_at_lambda_zero() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), small_synth());
    let cfg = TrainConfig { lambda: 0.0, ..small_train() };
    let streams: Vec<(String, usize)> = s.streams().iter().map(|x| (x.name.clone(), x.dim)).collect();
    let data = s.read_all().unwrap();
    let mut plain = Trainer::new(&streams, cfg.clone()).unwrap();
    let mut with_cross = Trainer::new(&streams, cfg.clone()).unwrap();
    with_cross.always_cross = true;
    for range in contiguous_batch_order(data.len(), cfg.batch_size, 3).unwrap().into_iter().take(40) {
        let batch = data.slice(range);
        let a = plain.step(&batch).unwrap();
        let b = with_cross.step(&batch).unwrap();
        assert!(a.loss.cross_terms.is_empty());
        assert_eq!(b.loss.cross_terms.len(), 6);
        assert_eq!(a.loss.total, b.loss.total);
    }
    assert_eq!(plain.params, with_cross.params);
}

#[test]
fn training_reduces_validation_nmse_tenfold() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), small_synth());
    let out = train(&s, &small_train(), None).unwrap();
    let (before, after) = (out.initial.mean_self(), out.last.mean_self());
    assert!(after * 10.0 <= before, "self NMSE {before} -> {after}");
    assert!(out.params.max_norm_deviation() <= 1e-6);
    assert_eq!(out.split, split_indices(4000, 0.8, 42));
}

#[test]
fn dead_latents_are_revived_without_breaking_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), small_synth());
    let cfg = TrainConfig {
        latent_dim: 256,
        dead_steps_threshold: 5,
        auxk_gamma: 0.5,
        ..small_train()
    };
    let streams: Vec<(String, usize)> = s.streams().iter().map(|x| (x.name.clone(), x.dim)).collect();
    let data = s.read_all().unwrap();
    let mut t = Trainer::new(&streams, cfg.clone()).unwrap();
    let (mut reinit, mut aux_seen) = (0, false);
    for range in contiguous_batch_order(data.len(), cfg.batch_size, 4).unwrap() {
        let r = t.step(&data.slice(range)).unwrap();
        reinit += r.reinitialized;
        aux_seen |= r.loss.aux_loss() > 0.0;
        assert!(r.loss.is_finite());
        assert!(t.params.max_norm_deviation() <= 1e-6);
    }
    assert!(reinit > 0, "no latent was reinitialized");
    assert!(aux_seen, "auxiliary loss never engaged");
}

#[test]
fn self_nmse_is_non_increasing_in_k() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), SynthConfig { true_sparsity: 16, ..small_synth() });
    let base = TrainConfig { epochs: 10, ..small_train() };
    let modes = [SelectionMode::Global, SelectionMode::Local];
    let rows = run_sweep(&s, &base, SweepAxis::K, &[2.0, 4.0, 8.0, 16.0], &modes).unwrap();
    assert_eq!(rows.len(), 8);
    for mode in modes {
        let series: Vec<f64> = rows.iter().filter(|r| r.mode == mode).map(|r| r.self_nmse).collect();
        assert!(series.windows(2).all(|w| w[1] <= w[0]), "{mode}: {series:?}");
    }
}

#[test]
fn identical_configs_train_identically() {
    let dir = tempfile::tempdir().unwrap();
    let s = store(dir.path(), small_synth());
    let cfg = TrainConfig { epochs: 2, ..small_train() };
    let a = train(&s, &cfg, None).unwrap();
    let b = train(&s, &cfg, None).unwrap();
    assert_eq!(a.params, b.params);
    let c = train(&s, &TrainConfig { seed: 7, ..cfg }, None).unwrap();
    assert_ne!(a.params, c.params);
}
