use flashcards_core::autoencoder::{
    build_ae, joint_loss_and_grad, load_checkpoint, save_checkpoint, train_ae, AeConfig, Replay, TrainData, TrainHyper,
};
use flashcards_core::data::synthetic_blobs;
use flashcards_core::nn::loss::Penalty;
use flashcards_core::seed;
use rand::Rng;

#[test]
fn parameter_counts_match_the_architecture_table() {
    let table = [
        ("Blk_4_fil_16", 24_083),
        ("Blk_4_fil_32", 94_243),
        ("Blk_4_fil_64", 372_803),
        ("Blk_4_fil_128", 1_482_883),
        ("Blk_3_fil_64", 298_947),
        ("Blk_2_fil_32", 57_251),
    ];
    for (name, count) in table {
        let cfg = AeConfig::parse(name).unwrap();
        assert_eq!(cfg.param_count(), count, "{name}");
        assert_eq!(build_ae(&cfg, 0).unwrap().param_count(), count, "{name}");
    }
}

#[test]
fn joint_gradient_matches_finite_differences() {
    let model = build_ae(&AeConfig::new(4, 2), 3).unwrap().cast::<f64>();
    let (current, _) = synthetic_blobs(2, 1);
    let (replay, _) = synthetic_blobs(2, 2);
    let loss = |m: &mut flashcards_core::autoencoder::Autoencoder<f64>| {
        joint_loss_and_grad(m, &current, Some((&replay, 0.7)), Penalty::L1).unwrap()
    };
    let mut m = model.clone();
    let (_, grad) = loss(&mut m);
    let params = model.params_flat();
    let mut rng = seed::rng(0);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(0..params.len());
        let mut p = params.clone();
        p[k] += h;
        m.set_params_flat(&p);
        let up = loss(&mut m).0;
        p[k] -= 2.0 * h;
        m.set_params_flat(&p);
        let down = loss(&mut m).0;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let (x, _) = synthetic_blobs(80, 4);
    let (train, val) = (x.slice(0, 64), x.slice(64, 80));
    let hyper = TrainHyper { epochs: 5, batch_size: 16, seed: 2, ..Default::default() };
    let cfg = AeConfig::new(2, 4);
    let a = train_ae(build_ae(&cfg, 1).unwrap(), &TrainData::plain(&train, &val), &hyper).unwrap();
    assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
    let b = train_ae(build_ae(&cfg, 1).unwrap(), &TrainData::plain(&train, &val), &hyper).unwrap();
    assert_eq!(a.model.params_flat(), b.model.params_flat());
    assert_eq!(a.history, b.history);
    assert!(a.recon_bounds.0 <= a.recon_bounds.1);
}

#[test]
fn zero_lambda_replay_matches_plain_training() {
    let (x, _) = synthetic_blobs(48, 6);
    let (train, val) = (x.slice(0, 32), x.slice(32, 48));
    let (f, _) = synthetic_blobs(10, 7);
    let hyper = TrainHyper { epochs: 2, batch_size: 8, ..Default::default() };
    let cfg = AeConfig::new(1, 4);
    let plain = train_ae(build_ae(&cfg, 0).unwrap(), &TrainData::plain(&train, &val), &hyper).unwrap();
    let data = TrainData { replay: Some(Replay { images: &f, lambda: 0.0 }), ..TrainData::plain(&train, &val) };
    let zero = train_ae(build_ae(&cfg, 0).unwrap(), &data, &hyper).unwrap();
    assert_eq!(plain.model.params_flat(), zero.model.params_flat());
}

#[test]
fn checkpoint_roundtrip_preserves_model_and_id() {
    let (x, _) = synthetic_blobs(24, 1);
    let hyper = TrainHyper { epochs: 1, batch_size: 8, ..Default::default() };
    let rep = train_ae(build_ae(&AeConfig::parse("Blk_1_fil_4_bn").unwrap(), 0).unwrap(), &TrainData::plain(&x.slice(0, 16), &x.slice(16, 24)), &hyper).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &rep.model, Some(&rep.record())).unwrap();
    let (back, record) = load_checkpoint(&path).unwrap();
    assert_eq!(back.id(), rep.model.id());
    assert_eq!(back.forward(&x).unwrap(), rep.model.forward(&x).unwrap());
    assert_eq!(record.unwrap().history, rep.history);
}
