use neures_core::engine::{
    engine, render_offline, sweep_position, ControlMessage, EngineConfig, ModulationSchedule,
    ScheduleParam, SweepAxis, SweepSpec,
};
use neures_core::excitation::{kaiser_impulse, ImpulseSpec, ScrapeState};
use neures_core::material::MaterialParams;
use neures_core::modal::{random_shape, ShapeGrid};
use neures_core::neural::{Model, ModelConfig};
use neures_core::resonator::{map_raw_to_bank, RawCoefficients};
use neures_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_model() -> Model {
    Model::new(
        ModelConfig {
            latent_dim: 8,
            branches: 4,
            hidden_width: 16,
            hidden_layers: 2,
            channels: vec![2, 3, 4, 4],
            ..ModelConfig::default()
        },
        11,
    )
    .unwrap()
}

fn small_config(crossfade_blocks: usize) -> EngineConfig {
    EngineConfig {
        branches: 4,
        crossfade_blocks,
        ..EngineConfig::default()
    }
}

fn hit(x: f64, y: f64) -> ControlMessage {
    ControlMessage::Hit {
        x,
        y,
        beta_k: 6.0,
        amplitude: 1.0,
    }
}

#[test]
fn silence_in_silence_out() {
    let (mut ctl, mut rend) = engine(Some(small_model()), small_config(1)).unwrap();
    ctl.control_step(ControlMessage::SetMaterial(MaterialParams::default()))
        .unwrap();
    let mut out = vec![1.0; 256];
    rend.render(&mut out);
    assert!(out.iter().all(|v| *v == 0.0));
}

#[test]
fn without_a_model_messages_are_rejected() {
    let (mut ctl, _rend) = engine(None, small_config(1)).unwrap();
    assert!(matches!(
        ctl.control_step(hit(0.5, 0.5)),
        Err(Error::NoModel)
    ));
    assert!(matches!(
        ctl.control_step(ControlMessage::SetMaterial(MaterialParams::default())),
        Err(Error::NoModel)
    ));
    ctl.load_model(small_model()).unwrap();
    assert!(ctl.control_step(hit(0.5, 0.5)).is_ok());
}

#[test]
fn mismatched_model_is_refused() {
    assert!(engine(Some(small_model()), EngineConfig::default()).is_err());
}

#[test]
fn hit_rings_and_decays() {
    let (mut ctl, mut rend) = engine(Some(small_model()), small_config(1)).unwrap();
    ctl.control_step(hit(0.4, 0.6)).unwrap();
    let mut out = vec![0.0; 44_100];
    rend.render(&mut out);
    assert!(out.iter().all(|v| v.is_finite()));
    let energy: Vec<f64> = out
        .chunks(4096)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    assert!(energy[0] > 0.0);
    for w in energy.windows(2).skip(1) {
        assert!(w[1] <= w[0], "{energy:?}");
    }
}

#[test]
fn caching_contract() {
    let (mut ctl, _rend) = engine(Some(small_model()), small_config(1)).unwrap();
    assert_eq!(ctl.encode_calls(), 1);
    ctl.control_step(ControlMessage::SetShape(random_shape(2)))
        .unwrap();
    assert_eq!(ctl.encode_calls(), 2);
    ctl.control_step(hit(0.45, 0.5)).unwrap();
    let first = ctl.bank().unwrap().clone();
    ctl.control_step(hit(0.45, 0.5)).unwrap();
    assert_eq!(ctl.bank().unwrap(), &first);
    let mut mat = MaterialParams::default();
    mat.youngs_modulus = 2e10;
    ctl.control_step(ControlMessage::SetMaterial(mat)).unwrap();
    assert_eq!(ctl.encode_calls(), 2);
    assert_eq!(ctl.predict_calls(), 4);
}

#[test]
fn one_second_of_scrape_at_control_rate_predicts_a_thousand_times() {
    let (mut ctl, mut rend) = engine(Some(small_model()), small_config(1)).unwrap();
    let before = ctl.predict_calls();
    let mut out = vec![0.0; 256];
    let mut rendered = 0usize;
    for k in 0..1000 {
        let t = k as f64 / 1000.0;
        let s = ScrapeState::at(t, [0.3 + 0.4 * t, 0.5]);
        ctl.control_step(ControlMessage::Scrape(s)).unwrap();
        while rendered < ((k + 1) * 441 / 10) {
            rend.render(&mut out);
            rendered += 256;
        }
    }
    assert_eq!(ctl.predict_calls() - before, 1000);
    assert_eq!(ctl.dropped_chunks(), 0);
}

#[test]
fn scrape_force_reaches_the_output() {
    let (mut ctl, mut rend) = engine(Some(small_model()), small_config(0)).unwrap();
    let mut out = vec![0.0; 441];
    let mut energy = 0.0;
    for k in 0..100 {
        let t = k as f64 / 1000.0;
        let n = ctl
            .control_step(ControlMessage::Scrape(ScrapeState::at(t, [0.2 + t, 0.5])))
            .unwrap();
        assert_eq!(
            n.excitation,
            if k == 0 {
                0
            } else {
                44 + (k % 10 == 0) as usize
            }
        );
        rend.render(&mut out[..44]);
        energy += out[..44].iter().map(|v| v * v).sum::<f64>();
    }
    assert!(energy > 0.0);
}

#[test]
fn random_swaps_stay_finite() {
    let cfg = EngineConfig {
        branches: 8,
        depth: 2,
        crossfade_blocks: 0,
        block_size: 64,
        ..EngineConfig::default()
    };
    let (mut ctl, mut rend) = engine(None, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut noise = vec![0.0; 64];
    let mut out = vec![0.0; 64];
    for _ in 0..10_000 {
        let raw: Vec<f64> = (0..5 * 16).map(|_| rng.random_range(-8.0..8.0)).collect();
        let bank = map_raw_to_bank(&RawCoefficients::new(raw, 8, 2).unwrap(), 44_100.0).unwrap();
        ctl.publish_bank(&bank).unwrap();
        noise
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-1.0..1.0));
        ctl.push_excitation(&noise, true);
        rend.render(&mut out);
        assert!(out.iter().all(|v| v.is_finite()));
    }
    assert!(rend.state_is_finite());
    assert_eq!(rend.swaps(), 10_000);
}

#[test]
fn crossfade_is_bounded_and_ends_on_the_new_bank() {
    let (mut ctl, mut rend) = engine(Some(small_model()), small_config(1)).unwrap();
    ctl.control_step(hit(0.5, 0.5)).unwrap();
    let mut out = vec![0.0; 256];
    for k in 0..50 {
        ctl.update(MaterialParams::default(), [0.3 + 0.01 * k as f64, 0.5])
            .unwrap();
        rend.render(&mut out);
        assert!(out.iter().all(|v| v.is_finite()));
    }
    assert_eq!(rend.bank(), ctl.bank().unwrap());
}

#[test]
fn offline_constant_schedule_matches_online_events() {
    let model = small_model();
    let cfg = small_config(0);
    let shape = random_shape(3);
    let mat = MaterialParams::default();
    let pos = shape.centroid();
    let impulse = kaiser_impulse(&ImpulseSpec::default()).unwrap();
    let offline = render_offline(
        &model,
        &cfg,
        &shape,
        mat,
        pos,
        &ModulationSchedule::constant(),
        &impulse,
        0.25,
    )
    .unwrap();
    let again = render_offline(
        &model,
        &cfg,
        &shape,
        mat,
        pos,
        &ModulationSchedule::constant(),
        &impulse,
        0.25,
    )
    .unwrap();
    assert_eq!(offline.audio, again.audio);
    assert_eq!(offline.log.len(), 250 * 4);

    let (mut ctl, mut rend) = engine(Some(model), cfg).unwrap();
    ctl.control_step(ControlMessage::SetShape(shape)).unwrap();
    ctl.control_step(ControlMessage::SetMaterial(mat)).unwrap();
    ctl.control_step(ControlMessage::Hit {
        x: pos[0],
        y: pos[1],
        beta_k: 6.0,
        amplitude: 1.0,
    })
    .unwrap();
    let mut online = vec![0.0; offline.audio.len()];
    rend.render(&mut online);
    assert_eq!(online, offline.audio);
    assert!(online.iter().any(|v| *v != 0.0));
}

#[test]
fn offline_schedule_errors() {
    let model = small_model();
    let cfg = small_config(0);
    let shape = ShapeGrid::full();
    let late = ModulationSchedule::constant()
        .with(ScheduleParam::YoungsModulus, vec![[0.0, 1e10], [2.0, 2e10]]);
    let res = render_offline(
        &model,
        &cfg,
        &shape,
        MaterialParams::default(),
        [0.5; 2],
        &late,
        &[1.0],
        1.0,
    );
    assert!(res.is_err());
    let res = render_offline(
        &model,
        &cfg,
        &shape,
        MaterialParams::default(),
        [0.5; 2],
        &ModulationSchedule::constant(),
        &[1.0],
        0.0,
    );
    assert!(res.is_err());
}

#[test]
fn sweep_rows_and_boundary_flags() {
    let model = small_model();
    let shape = ShapeGrid::rectangle(16, 16, 32, 32).unwrap();
    let latent = model.encode(&shape);
    let mat = MaterialParams::default();
    let same = SweepSpec {
        axis: SweepAxis::Y,
        fixed: 0.5,
        start: 0.3,
        end: 0.3,
        steps: 2,
    };
    let t = sweep_position(&model, &latent, &shape, &mat, &same).unwrap();
    assert_eq!(t.rows[0], t.rows[1]);
    let t = sweep_position(
        &model,
        &latent,
        &shape,
        &mat,
        &SweepSpec::unit(SweepAxis::Y, 0.5, 257),
    )
    .unwrap();
    assert_eq!(t.rows.len(), 257);
    assert!(t.rows.windows(2).all(|w| w[1].coord > w[0].coord));
    assert_eq!(t.boundary_crossings().len(), 2);
    for s in t.smoothness() {
        assert!(s.max_step.is_finite() && s.interior_median.is_finite());
    }
    assert_eq!(t.to_csv().lines().count(), 258);
}

/// Same control events at the same sample positions, different render-call
/// splits: the output must not change, crossfade or not.
#[test]
fn output_does_not_depend_on_render_call_sizes() {
    let shape = random_shape(3);
    for crossfade in [0, 1, 2] {
        let run = |splits: &[usize]| {
            let (mut ctl, mut rend) = engine(Some(small_model()), small_config(crossfade)).unwrap();
            ctl.control_step(ControlMessage::SetShape(shape.clone()))
                .unwrap();
            let mut out = vec![0.0; 4410];
            let mut pos = 0;
            for &n in splits {
                // an event every 441 samples, always on a call boundary
                if pos % 441 == 0 {
                    let x = 0.3 + 0.04 * (pos / 441) as f64;
                    ctl.control_step(hit(x, 0.5)).unwrap();
                }
                let n = n.min(out.len() - pos);
                rend.render(&mut out[pos..pos + n]);
                pos += n;
            }
            assert_eq!(pos, out.len());
            out
        };
        let whole = run(&[441; 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(crossfade as u64);
        let mut ragged = Vec::new();
        for _ in 0..10 {
            let mut left = 441;
            while left > 0 {
                let n = rng.random_range(1..=left.min(300));
                ragged.push(n);
                left -= n;
            }
        }
        assert_eq!(whole, run(&ragged), "crossfade {crossfade}");
    }
}
