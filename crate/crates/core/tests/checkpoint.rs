mod common;

use perturb_detect::trainer::{load_checkpoint, save_checkpoint, train, Checkpoint, Regime, CHECKPOINT_VERSION};
use perturb_detect::Error;

fn trained(regime: Regime) -> Checkpoint {
    let (source, _) = common::tiny_corpora();
    train(&common::tiny_config(regime, 5), &source).unwrap()
}

#[test]
fn roundtrip_every_regime() {
    let dir = tempfile::tempdir().unwrap();
    for regime in Regime::ALL {
        let ckpt = trained(regime);
        let path = dir.path().join(format!("{regime}.bin"));
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt, "{regime}");
        assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());
        assert_eq!(back.agent.is_some(), matches!(regime, Regime::Dpnet | Regime::TwoStep));
    }
}

#[test]
fn every_truncation_is_rejected() {
    let bytes = trained(Regime::Dpnet).to_bytes().unwrap();
    // all short prefixes, then a stride through the rest
    let cuts = (0..64).chain((64..bytes.len()).step_by(97)).chain([bytes.len() - 1]);
    for cut in cuts {
        match Checkpoint::from_bytes(&bytes[..cut]) {
            Err(Error::CorruptCheckpoint(_)) => {}
            other => panic!("prefix of {cut} bytes gave {other:?}"),
        }
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut bytes = trained(Regime::Baseline).to_bytes().unwrap();
    bytes.push(0);
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::CorruptCheckpoint(_))));
}

#[test]
fn bad_magic_is_rejected() {
    let mut bytes = trained(Regime::Baseline).to_bytes().unwrap();
    bytes[0] ^= 0xFF;
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::CorruptCheckpoint(_))));
}

#[test]
fn version_bump_is_unsupported() {
    let mut bytes = trained(Regime::Baseline).to_bytes().unwrap();
    bytes[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    match Checkpoint::from_bytes(&bytes) {
        Err(Error::UnsupportedVersion { found, expected }) => {
            assert_eq!((found, expected), (CHECKPOINT_VERSION + 1, CHECKPOINT_VERSION));
        }
        other => panic!("expected UnsupportedVersion, got {other:?}"),
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_checkpoint(std::path::Path::new("/nonexistent/ckpt.bin")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}
