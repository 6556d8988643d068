use neures::protocol::{
    decode_audio, encode_audio, Frame, TextureKind, AUDIO_HEADER_LEN, PROTOCOL_VERSION, SCHEMA,
};
use neures_core::engine::{ControlMessage, TextureSpec};
use neures_core::material::MaterialParams;
use neures_core::modal::{random_shape, ShapeGrid};
use serde_json::{json, Value};

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn every_frame() -> Vec<Frame> {
    vec![
        Frame::status(44100.0, 256, 3),
        Frame::Status {
            version: PROTOCOL_VERSION,
            sample_rate: None,
            block_size: None,
            dropped_frames: None,
        },
        Frame::shape(&random_shape(4)),
        Frame::material(&MaterialParams::default()),
        Frame::Hit {
            x: 0.25,
            y: 0.75,
            beta_k: 4.0,
            amplitude: 0.5,
        },
        Frame::Scrape {
            x: 0.1,
            y: 0.2,
            t: 12.5,
            mass: 0.02,
            mix_v: 1.0,
            mix_h: 0.0,
        },
        Frame::Texture {
            kind: TextureKind::Fractal,
            roughness: 0.3,
            size: 64,
            seed: 9,
        },
        Frame::Texture {
            kind: TextureKind::Flat,
            roughness: 0.5,
            size: 16,
            seed: 0,
        },
        Frame::ImpulseCustom {
            samples: vec![0.0, 1.0, -0.5],
        },
        Frame::error("bad_message", "nope"),
    ]
}

#[test]
fn frames_round_trip_and_validate() {
    let v = validator();
    for f in every_frame() {
        let text = f.to_json();
        let value: Value = serde_json::from_str(&text).unwrap();
        assert!(v.is_valid(&value), "{text} fails the schema");
        assert_eq!(Frame::parse(&text).unwrap(), f);
    }
}

#[test]
fn minimal_client_frames_take_defaults() {
    let v = validator();
    let hit = json!({"type": "hit", "x": 0.5, "y": 0.5});
    assert!(v.is_valid(&hit));
    match Frame::parse(&hit.to_string()).unwrap() {
        Frame::Hit {
            beta_k, amplitude, ..
        } => assert_eq!((beta_k, amplitude), (6.0, 1.0)),
        f => panic!("{f:?}"),
    }
    let scrape = json!({"type": "scrape", "x": 0.5, "y": 0.5, "t": 0.0});
    assert!(v.is_valid(&scrape));
    assert!(Frame::parse(&scrape.to_string()).is_ok());
}

#[test]
fn schema_and_parser_agree_on_rejects() {
    let v = validator();
    let bad = [
        json!({"type": "hit", "x": 0.5}),
        json!({"type": "hit", "x": 0.5, "y": 0.5, "force": 2}),
        json!({"type": "shout"}),
        json!({"x": 1}),
        json!({"type": "shape", "data": "AAAA"}),
        json!({"type": "texture", "kind": "plaid"}),
        json!({"type": "status"}),
    ];
    for b in bad {
        assert!(!v.is_valid(&b), "schema accepts {b}");
        assert!(Frame::parse(&b.to_string()).is_err(), "parser accepts {b}");
    }
    assert!(Frame::parse("{not json").is_err());
}

#[test]
fn shape_payload_is_bottom_row_first_lsb_first() {
    let grid = ShapeGrid::rectangle(0, 0, 4, 4).unwrap();
    let Frame::Shape { data } = Frame::shape(&grid) else {
        unreachable!()
    };
    assert_eq!(data.len(), 684);
    use base64::Engine as _;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(&data)
        .unwrap();
    assert_eq!(bytes.len(), 512);
    // rows 0..4 (bottom) hold cells x = 0..4 in the low bits of their first byte
    for row in 0..4 {
        assert_eq!(bytes[8 * row], 0x0F);
    }
    assert!(bytes[32..].iter().all(|b| *b == 0));
    match Frame::shape(&grid).to_control().unwrap() {
        Some(ControlMessage::SetShape(g)) => assert_eq!(g, grid),
        m => panic!("{m:?}"),
    }
}

#[test]
fn frames_map_to_engine_messages() {
    let m = MaterialParams::default();
    assert!(matches!(
        Frame::material(&m).to_control().unwrap(),
        Some(ControlMessage::SetMaterial(p)) if p == m
    ));
    let tex = Frame::Texture {
        kind: TextureKind::Flat,
        roughness: 0.5,
        size: 32,
        seed: 0,
    };
    assert!(matches!(
        tex.to_control().unwrap(),
        Some(ControlMessage::SetTexture(TextureSpec::Flat { size: 32 }))
    ));
    match (Frame::Scrape {
        x: 0.1,
        y: 0.9,
        t: 2.0,
        mass: 0.01,
        mix_v: 1.0,
        mix_h: 1.0,
    })
    .to_control()
    .unwrap()
    {
        Some(ControlMessage::Scrape(s)) => {
            assert_eq!(s.pos, [0.1, 0.9]);
            assert_eq!(s.time, 2.0);
        }
        m => panic!("{m:?}"),
    }
    assert!(Frame::status(44100.0, 256, 0)
        .to_control()
        .unwrap()
        .is_none());
    let broken = Frame::Shape { data: "!!".into() };
    assert!(broken.to_control().is_err());
}

#[test]
fn audio_frames_round_trip() {
    let samples = [0.0f32, 1.0, -0.25, f32::MIN_POSITIVE, 1e-30];
    let bytes = encode_audio(7, &samples);
    assert_eq!(bytes.len(), AUDIO_HEADER_LEN + 4 * samples.len());
    assert_eq!(&bytes[..8], &[7, 0, 0, 0, 5, 0, 0, 0]);
    assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
    let (seq, back) = decode_audio(&bytes).unwrap();
    assert_eq!(seq, 7);
    assert_eq!(back, samples);
    assert!(decode_audio(&bytes[..6]).is_err());
    assert!(decode_audio(&bytes[..bytes.len() - 1]).is_err());
    let (_, empty) = decode_audio(&encode_audio(u32::MAX, &[])).unwrap();
    assert!(empty.is_empty());
}
