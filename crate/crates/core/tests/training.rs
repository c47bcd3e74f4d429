use deepconn_core::kernel::HasParams;
use deepconn_core::model::{DeepConn, HeadKind, TowerKind};
use deepconn_core::synthetic::{micro_config, micro_dataset};
use deepconn_core::train::{fit, DocumentBank, FitConfig};

#[test]
fn micro_dataset_overfits_with_smoothed_monotone_loss() {
    let data = micro_dataset(3).unwrap();
    let bank = DocumentBank::build(&data.records, data.table.clone(), data.doc_len).unwrap();
    let mut model = DeepConn::new(micro_config(TowerKind::Cnn, HeadKind::Dp, 0.0)).unwrap();
    let cfg = FitConfig {
        epochs: 200,
        seed: 3,
        ..FitConfig::default()
    };
    let out = fit(&mut model, &bank, &data.records, &[], &cfg).unwrap();
    let losses = out.train_losses();
    assert_eq!(losses.len(), 200);
    assert!(losses[199] < losses[0] / 100.0);
    let windows: Vec<f64> = losses
        .chunks(10)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    assert!(windows.windows(2).all(|w| w[1] <= w[0]), "{windows:?}");
    assert!(model.params().iter().all(|p| p.value.is_finite()));
}

#[test]
fn recurrent_towers_reduce_training_loss() {
    let data = micro_dataset(4).unwrap();
    let bank = DocumentBank::build(&data.records, data.table.clone(), data.doc_len).unwrap();
    for kind in [TowerKind::Gru, TowerKind::Lstm] {
        let mut model = DeepConn::new(micro_config(kind, HeadKind::Fm, 0.1)).unwrap();
        let cfg = FitConfig {
            epochs: 8,
            seed: 4,
            ..FitConfig::default()
        };
        let out = fit(&mut model, &bank, &data.records, &data.records, &cfg).unwrap();
        let losses = out.train_losses();
        assert!(losses[7] < losses[0], "{kind}: {losses:?}");
        assert!(out.best.is_some());
    }
}
