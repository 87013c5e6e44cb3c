use super::*;
use crate::diffgraph::{grad_check, OwnerTag};
use crate::error::Error;
use crate::eventstore::{Dataset, Event, EventSequence};
use crate::models::{DecoderFamily, Model, ModelSpec, Setting, Widths};

fn small(family: DecoderFamily, setting: Setting, num_marks: usize) -> ModelSpec {
    ModelSpec::new(family, setting, num_marks).with_widths(Widths {
        time_encoding: 4,
        mark_embedding: 2,
        hidden: 3,
        mlp: 4,
        mixtures: 2,
        channels: 3,
    })
}

fn set(model: &mut Model, name: &str, value: f64) {
    let id = model.store.id_of(name).unwrap();
    model.store.block_mut(id).values.fill(value);
}

fn zero_all(model: &mut Model) {
    for id in model.store.ids().collect::<Vec<_>>() {
        model.store.block_mut(id).values.fill(0.0);
    }
}

fn seq(id: &str, horizon: f64, events: &[(f64, usize)], num_marks: usize) -> EventSequence {
    let events = events.iter().map(|&(t, k)| Event { t, k }).collect();
    EventSequence::new(id, horizon, events, num_marks).unwrap()
}

fn data(num_marks: usize) -> Dataset {
    Dataset::new(
        "toy",
        num_marks,
        vec![
            seq(
                "a",
                3.0,
                &[(0.4, 0), (0.9, 1), (1.7, 2 % num_marks), (2.1, 0)],
                num_marks,
            ),
            seq("b", 2.5, &[(0.2, 1), (1.3, 0)], num_marks),
            seq("c", 1.0, &[], num_marks),
        ],
    )
    .unwrap()
}

fn gl(nodes: usize) -> QuadratureConfig {
    QuadratureConfig {
        method: QuadratureMethod::GaussLegendre,
        nodes,
        seed: 0,
    }
}

fn inv_softplus(y: f64) -> f64 {
    y.exp_m1().ln()
}

#[test]
fn standard_lognormal_single_event() {
    let mut spec = small(DecoderFamily::Lnm, Setting::Plus, 2);
    spec.widths.mixtures = 1;
    let mut m = Model::new(spec, 0).unwrap();
    zero_all(&mut m);
    let ds = Dataset::new("one", 2, vec![seq("x", 1.0, &[(1.0, 0)], 2)]).unwrap();
    let b = nll_density(&m, &ds, gl(32)).unwrap();
    assert!((b.time_loss - 0.918_938_533_204_672_7).abs() < 1e-12);
    // zero mark head is uniform over two marks
    assert!((b.mark_loss - 2f64.ln()).abs() < 1e-12);
    assert_eq!(b.total, b.time_loss + b.mark_loss);
}

#[test]
fn empty_sequence_is_pure_survival() {
    let m = Model::new(small(DecoderFamily::Rmtpp, Setting::Plus, 2), 3).unwrap();
    let ds = Dataset::new("e", 2, vec![seq("x", 1.7, &[], 2)]).unwrap();
    let b = nll_density(&m, &ds, gl(32)).unwrap();
    let state = &m.history_states(&ds.sequences[0]).unwrap()[0];
    let quad = Quadrature::new(gl(32)).unwrap();
    assert!((b.time_loss + m.log_survival(state, 1.7, &quad).unwrap()).abs() < 1e-14);
    assert_eq!(b.mark_loss, 0.0);
}

#[test]
fn uniform_marks_give_log_k_per_event() {
    for (family, setting) in [
        (DecoderFamily::Rmtpp, Setting::Base),
        (DecoderFamily::Lnm, Setting::Plus),
    ] {
        let mut m = Model::new(small(family, setting, 4), 3).unwrap();
        for name in ["W_1", "b_1", "W_2", "b_2"] {
            let prefix = if setting == Setting::Base {
                "mark"
            } else {
                "mark_m"
            };
            set(&mut m, &format!("{prefix}.{name}"), 0.0);
        }
        let ds = data(4);
        let b = nll_density(&m, &ds, gl(32)).unwrap();
        let n = ds.num_events() as f64;
        assert!((b.mark_loss - n * 4f64.ln() / 3.0).abs() < 1e-12);
    }
}

fn constant_rate_two() -> Model {
    let mut spec = small(DecoderFamily::Thp, Setting::Plus, 2);
    spec.widths.channels = 1;
    let mut m = Model::new(spec, 0).unwrap();
    zero_all(&mut m);
    set(&mut m, "dec_t.w_t", -60.0);
    set(&mut m, "dec_t.b", inv_softplus(2.0));
    m
}

#[test]
fn constant_rate_hand_integral() {
    let m = constant_rate_two();
    let ds = Dataset::new("c", 2, vec![seq("x", 1.0, &[(0.5, 0)], 2)]).unwrap();
    let want = 2.0 - 2f64.ln();
    for b in [
        nll_intensity(&m, &ds, gl(32)).unwrap(),
        nll_density(&m, &ds, gl(32)).unwrap(),
    ] {
        assert!((b.time_loss - want).abs() < 1e-12, "{}", b.time_loss);
    }
}

#[test]
fn rmtpp_density_and_intensity_forms_agree() {
    let m = Model::new(small(DecoderFamily::Rmtpp, Setting::Plus, 3), 4).unwrap();
    let ds = data(3);
    let d = nll_density(&m, &ds, gl(32)).unwrap();
    let i = nll_intensity(&m, &ds, gl(32)).unwrap();
    assert!((d.time_loss - i.time_loss).abs() < 1e-9);
    assert_eq!(d.mark_loss, i.mark_loss);
}

#[test]
fn lnm_density_and_intensity_forms_agree() {
    let m = Model::new(small(DecoderFamily::Lnm, Setting::Plus, 3), 4).unwrap();
    let ds = data(3);
    let d = nll_density(&m, &ds, gl(32)).unwrap();
    let i = nll_intensity(&m, &ds, gl(128)).unwrap();
    assert!(
        (d.time_loss - i.time_loss).abs() < 1e-6,
        "{} {}",
        d.time_loss,
        i.time_loss
    );
}

#[test]
fn thp_quadrature_converges() {
    let m = Model::new(small(DecoderFamily::Thp, Setting::Plus, 3), 4).unwrap();
    let ds = data(3);
    let a = nll_intensity(&m, &ds, gl(64)).unwrap();
    let b = nll_intensity(&m, &ds, gl(128)).unwrap();
    assert!((a.time_loss - b.time_loss).abs() < 1e-6);
}

#[test]
fn fnn_compensator_form_matches_intensity_form() {
    let m = Model::new(small(DecoderFamily::Fnn, Setting::Plus, 3), 4).unwrap();
    let ds = data(3);
    let c = nll_compensator(&m, &ds, gl(32)).unwrap();
    let i = nll_intensity(&m, &ds, gl(64)).unwrap();
    assert!(
        (c.time_loss - i.time_loss).abs() < 1e-8,
        "{} {}",
        c.time_loss,
        i.time_loss
    );
}

#[test]
fn unit_rate_compensator() {
    let mut m = Model::new(small(DecoderFamily::Rmtpp, Setting::Plus, 2), 0).unwrap();
    zero_all(&mut m);
    set(&mut m, "dec_t.w_t", -80.0);
    let ds = Dataset::new("u", 2, vec![seq("x", 1.0, &[(1.0, 0)], 2)]).unwrap();
    let b = nll_compensator(&m, &ds, gl(32)).unwrap();
    assert!((b.time_loss - 1.0).abs() < 1e-12);
}

#[test]
fn flat_compensator_is_rejected() {
    let mut m = Model::new(small(DecoderFamily::Fnn, Setting::Plus, 2), 0).unwrap();
    set(&mut m, "dec_t.W", -1000.0);
    let err = nll_compensator(&m, &data(2), gl(32)).unwrap_err();
    assert_eq!(
        err,
        Error::NonMonotoneCompensator {
            sequence: 0,
            event: 0
        }
    );
}

#[test]
fn compensator_form_needs_closed_form() {
    let m = Model::new(small(DecoderFamily::Thp, Setting::Plus, 2), 0).unwrap();
    let err = nll_compensator(&m, &data(2), gl(32)).unwrap_err();
    assert!(matches!(err, Error::UnsupportedForm { family: "thp", .. }));
}

#[test]
fn zero_gap_event_is_reported() {
    let m = Model::new(small(DecoderFamily::Lnm, Setting::Plus, 2), 0).unwrap();
    let ds = Dataset::new("z", 2, vec![seq("x", 1.0, &[(0.0, 0)], 2)]).unwrap();
    assert_eq!(
        nll_density(&m, &ds, gl(8)).unwrap_err(),
        Error::NonPositiveTau(0.0)
    );
}

#[test]
fn split_gradients_sum_to_combined() {
    let ds = data(3);
    let seqs: Vec<&EventSequence> = ds.sequences.iter().collect();
    let obj = Objective::new(NllForm::Density, gl(16)).unwrap();
    for family in DecoderFamily::ALL {
        for setting in Setting::ALL {
            let m = Model::new(small(family, setting, 3), 7).unwrap();
            let split = obj
                .evaluate_store(&m.arch, &m.store, &seqs, GradMode::Split)
                .unwrap();
            let comb = obj
                .evaluate_store(&m.arch, &m.store, &seqs, GradMode::Combined)
                .unwrap();
            assert_eq!(split.breakdown, comb.breakdown);
            let sum = split.time_grad.unwrap().sum(&split.mark_grad.unwrap());
            let total = comb.total_grad.unwrap();
            let mut diff = sum.clone();
            diff.add_scaled(&total, -1.0);
            assert!(diff.norm() <= 1e-10 * total.norm(), "{family} {setting}");
        }
    }
}

#[test]
fn disjoint_settings_have_no_cross_task_gradients() {
    let ds = data(3);
    let seqs: Vec<&EventSequence> = ds.sequences.iter().collect();
    let obj = Objective::new(NllForm::Density, gl(16)).unwrap();
    for family in DecoderFamily::ALL {
        for setting in [Setting::PlusPlus, Setting::DupDisjoint] {
            let m = Model::new(small(family, setting, 3), 7).unwrap();
            let e = obj
                .evaluate_store(&m.arch, &m.store, &seqs, GradMode::Split)
                .unwrap();
            let (gt, gm) = (e.time_grad.unwrap(), e.mark_grad.unwrap());
            for id in m.store.ids() {
                match m.store.block(id).owner {
                    OwnerTag::Mark => assert!(gt.block(id).iter().all(|g| *g == 0.0)),
                    OwnerTag::Time => assert!(gm.block(id).iter().all(|g| *g == 0.0)),
                    OwnerTag::Shared => unreachable!("no shared blocks in {setting}"),
                }
            }
        }
    }
}

#[test]
fn split_gradients_pass_grad_check() {
    let ds = data(3);
    let seqs: Vec<&EventSequence> = ds.sequences.iter().collect();
    let obj = Objective::new(NllForm::Density, gl(16)).unwrap();
    let m = Model::new(small(DecoderFamily::Sahp, Setting::Plus, 3), 2).unwrap();
    for part in [0, 1] {
        let report = grad_check(
            &m.store,
            |s| {
                let e = obj.evaluate_store(&m.arch, s, &seqs, GradMode::Split)?;
                Ok(if part == 0 {
                    (e.breakdown.time_loss, e.time_grad.unwrap())
                } else {
                    (e.breakdown.mark_loss, e.mark_grad.unwrap())
                })
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn evaluation_is_deterministic() {
    let m = Model::new(small(DecoderFamily::Thp, Setting::Base, 3), 1).unwrap();
    let mc = QuadratureConfig {
        method: QuadratureMethod::MonteCarlo,
        nodes: 16,
        seed: 9,
    };
    let a = nll_intensity(&m, &data(3), mc).unwrap();
    let b = nll_intensity(&m, &data(3), mc).unwrap();
    assert_eq!(a, b);
    assert!(a.mc_stderr > 0.0);
    assert_eq!(nll_intensity(&m, &data(3), gl(16)).unwrap().mc_stderr, 0.0);
}

#[test]
fn per_sequence_terms_average_to_losses() {
    let m = Model::new(small(DecoderFamily::Fnn, Setting::Dup, 3), 1).unwrap();
    let b = nll_density(&m, &data(3), gl(16)).unwrap();
    let t: f64 = b.per_sequence.iter().map(|p| p.0).sum::<f64>() / 3.0;
    assert_eq!(t, b.time_loss);
    assert_eq!(b.per_sequence[2].1, 0.0);
}
