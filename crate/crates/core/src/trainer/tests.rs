use super::*;
use crate::eventstore::{simulate_hawkes, HawkesConfig};
use crate::models::{DecoderFamily, ModelSpec, Setting, Widths};

fn small(family: DecoderFamily, setting: Setting) -> ModelSpec {
    ModelSpec::new(family, setting, 2).with_widths(Widths {
        time_encoding: 4,
        mark_embedding: 2,
        hidden: 4,
        mlp: 4,
        mixtures: 2,
        channels: 3,
    })
}

fn data(n: usize, seed: u64) -> Dataset {
    let cfg = HawkesConfig::new(
        vec![0.5, 0.3],
        vec![vec![0.3, 0.2], vec![0.1, 0.4]],
        vec![vec![1.5; 2]; 2],
        5.0,
    )
    .unwrap();
    simulate_hawkes(&cfg, n, seed).unwrap()
}

fn cfg(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        batch_size: 4,
        max_epochs,
        patience: 2,
        seed: 3,
        quadrature: QuadratureConfig {
            nodes: 8,
            ..QuadratureConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = [
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            patience: 500,
            ..TrainConfig::default()
        },
        TrainConfig {
            capture_stride: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            loss_scale: 0.0,
            ..TrainConfig::default()
        },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn batches_cover_every_sequence_once() {
    let b = epoch_batches(10, 3, 1, 1);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), [3, 3, 3, 1]);
    let mut all: Vec<usize> = b.concat();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(b, epoch_batches(10, 3, 1, 1));
    assert_ne!(b, epoch_batches(10, 3, 1, 2));
}

#[test]
fn per_task_protocol_trace() {
    let model = Model::new(small(DecoderFamily::Rmtpp, Setting::PlusPlus), 0).unwrap();
    let mut store = model.store.clone();
    let mut es = EarlyStopState::for_model(&model);
    // time keeps improving, mark worsens after epoch 1
    let trace = [(5.0, 1.0), (4.0, 1.1), (3.0, 1.2), (2.0, 1.3)];
    let mut frozen = Vec::new();
    for (i, (t, m)) in trace.iter().enumerate() {
        assert!(!es.observe(i + 1, *t, *m, &mut store, 2));
        frozen.push(es.frozen());
    }
    assert_eq!(
        frozen,
        [(false, false), (false, false), (false, true), (false, true)]
    );
    for id in store.ids() {
        let b = store.block(id);
        assert_eq!(b.trainable, b.owner != OwnerTag::Mark, "{}", b.name);
    }
}

#[test]
fn joint_protocol_for_shared_settings() {
    for setting in [Setting::Base, Setting::Plus, Setting::Dup] {
        let model = Model::new(small(DecoderFamily::Lnm, setting), 0).unwrap();
        assert!(matches!(
            EarlyStopState::for_model(&model),
            EarlyStopState::Joint(_)
        ));
    }
    let model = Model::new(small(DecoderFamily::Lnm, Setting::Base), 0).unwrap();
    let mut store = model.store.clone();
    let mut es = EarlyStopState::for_model(&model);
    assert!(!es.observe(1, 1.0, 1.0, &mut store, 2));
    // time improves but the total does not
    assert!(!es.observe(2, 0.5, 1.6, &mut store, 2));
    assert!(es.observe(3, 0.4, 1.7, &mut store, 2));
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let (train, val) = (data(8, 1), data(4, 2));
    let model = Model::new(small(DecoderFamily::Thp, Setting::Base), 1).unwrap();
    let c = TrainConfig {
        lr: 0.0,
        max_epochs: 3,
        ..cfg(3)
    };
    let fit = fit(model.clone(), &train, &val, &c).unwrap();
    let values = |s: &ParamStore| {
        s.blocks()
            .iter()
            .map(|b| b.values.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(values(&fit.model.store), values(&model.store));
    let first = &fit.history[0];
    assert!(fit
        .history
        .iter()
        .all(|r| r.val_time == first.val_time && r.val_mark == first.val_mark));
}

#[test]
fn training_is_deterministic_and_capture_does_not_perturb_it() {
    let (train, val) = (data(12, 1), data(4, 2));
    let model = Model::new(small(DecoderFamily::Rmtpp, Setting::Base), 1).unwrap();
    let a = fit(model.clone(), &train, &val, &cfg(4)).unwrap();
    let b = fit(model.clone(), &train, &val, &cfg(4)).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.store, b.model.store);
    assert_eq!(a.conflicts, b.conflicts);
    let off = fit(
        model,
        &train,
        &val,
        &TrainConfig {
            capture: false,
            ..cfg(4)
        },
    )
    .unwrap();
    assert_eq!(off.history, a.history);
    assert_eq!(off.model.store, a.model.store);
    assert!(off.conflicts.is_empty());
}

#[test]
fn capture_counts_shared_blocks() {
    let train = data(4, 1);
    let mut model = Model::new(small(DecoderFamily::Sahp, Setting::Plus), 1).unwrap();
    let objective = Objective::new(NllForm::Density, QuadratureConfig::default()).unwrap();
    let mut stats = ConflictStats::new();
    let batches = vec![(0..4).collect::<Vec<_>>()];
    let c = cfg(3);
    train_epoch(
        &mut model,
        &train,
        &batches,
        &objective,
        &c,
        &mut TrainerState::new(),
        &mut stats,
        1,
    )
    .unwrap();
    let blocks = stats.records.iter().filter(|r| r.is_block()).count();
    assert_eq!(blocks, model.shared_blocks().len());

    let mut pp = Model::new(small(DecoderFamily::Sahp, Setting::PlusPlus), 1).unwrap();
    let mut stats = ConflictStats::new();
    train_epoch(
        &mut pp,
        &train,
        &batches,
        &objective,
        &c,
        &mut TrainerState::new(),
        &mut stats,
        1,
    )
    .unwrap();
    assert!(stats.is_empty());
}

#[test]
fn frozen_blocks_get_gradients_but_no_update() {
    let train = data(4, 1);
    let mut model = Model::new(small(DecoderFamily::Fnn, Setting::PlusPlus), 1).unwrap();
    let before = model.store.clone();
    model.store.set_trainable_by_owner(OwnerTag::Time, false);
    let objective = Objective::new(NllForm::Density, QuadratureConfig::default()).unwrap();
    let batches = vec![(0..4).collect::<Vec<_>>()];
    train_epoch(
        &mut model,
        &train,
        &batches,
        &objective,
        &cfg(3),
        &mut TrainerState::new(),
        &mut ConflictStats::new(),
        1,
    )
    .unwrap();
    for id in model.store.ids() {
        let (now, was) = (model.store.block(id), before.block(id));
        match now.owner {
            OwnerTag::Time => {
                assert_eq!(now.values, was.values);
                assert!(now.grad.iter().any(|g| *g != 0.0));
            }
            _ => assert_ne!(now.values, was.values, "{}", now.name),
        }
    }
}

#[test]
fn restored_state_reproduces_best_validation() {
    let (train, val) = (data(12, 1), data(6, 2));
    let val_seqs: Vec<&EventSequence> = val.sequences.iter().collect();
    let c = TrainConfig { lr: 5e-2, ..cfg(6) };
    let objective = Objective::new(c.form, c.quadrature).unwrap();

    let model = Model::new(small(DecoderFamily::Rmtpp, Setting::Base), 1).unwrap();
    let f = fit(model, &train, &val, &c).unwrap();
    let best = f
        .history
        .iter()
        .map(|r| r.val_time + r.val_mark)
        .fold(f64::INFINITY, f64::min);
    let now = objective.evaluate(&f.model, &val_seqs).unwrap();
    assert_eq!(now.time_loss + now.mark_loss, best);

    let model = Model::new(small(DecoderFamily::Rmtpp, Setting::PlusPlus), 1).unwrap();
    let f = fit(model, &train, &val, &c).unwrap();
    let now = objective.evaluate(&f.model, &val_seqs).unwrap();
    let min = |g: fn(&EpochRecord) -> f64| f.history.iter().map(g).fold(f64::INFINITY, f64::min);
    assert_eq!(now.time_loss, min(|r| r.val_time));
    assert_eq!(now.mark_loss, min(|r| r.val_mark));
    assert!(f.model.store.blocks().iter().all(|b| b.trainable));
}

#[test]
fn freezing_one_task_leaves_the_other_trajectory_alone() {
    let (train, val) = (data(8, 1), data(4, 2));
    let val_seqs: Vec<&EventSequence> = val.sequences.iter().collect();
    let c = cfg(3);
    let objective = Objective::new(c.form, c.quadrature).unwrap();
    let run = |freeze_mark: bool| -> Vec<f64> {
        let mut model = Model::new(small(DecoderFamily::Lnm, Setting::PlusPlus), 4).unwrap();
        model
            .store
            .set_trainable_by_owner(OwnerTag::Mark, !freeze_mark);
        let mut state = TrainerState::new();
        (1..=3)
            .map(|epoch| {
                let batches = epoch_batches(train.len(), c.batch_size, c.seed, epoch);
                train_epoch(
                    &mut model,
                    &train,
                    &batches,
                    &objective,
                    &c,
                    &mut state,
                    &mut ConflictStats::new(),
                    epoch,
                )
                .unwrap();
                objective.evaluate(&model, &val_seqs).unwrap().time_loss
            })
            .collect()
    };
    assert_eq!(run(false), run(true));
}

#[test]
fn history_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    let rows = [EpochRecord {
        epoch: 1,
        train_time: 1.5,
        train_mark: 0.5,
        val_time: 1.25,
        val_mark: 0.75,
        frozen_time: false,
        frozen_mark: true,
    }];
    write_history(&rows, &path, "mtpp 0.1.0 config=abc").unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        "# mtpp 0.1.0 config=abc\nepoch,train_LT,train_LM,val_LT,val_LM,frozen_T,frozen_M\n1,1.5,0.5,1.25,0.75,false,true\n"
    );
}

#[test]
fn training_errors_carry_context() {
    let mut spec = small(DecoderFamily::Lnm, Setting::Plus);
    spec.num_marks = 2;
    let model = Model::new(spec, 0).unwrap();
    let bad = Dataset::new(
        "zero",
        2,
        vec![
            EventSequence::new("z", 1.0, vec![crate::eventstore::Event { t: 0.0, k: 0 }], 2)
                .unwrap(),
        ],
    )
    .unwrap();
    let err = fit(model, &bad, &bad, &cfg(3)).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Training {
                epoch: 1,
                step: 0,
                ..
            }
        ),
        "{err}"
    );
}
