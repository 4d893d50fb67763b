use ambient_lab::fuzzing::TARGETS;
use std::path::Path;

#[test]
fn corpus_seeds_replay_without_panics() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    for (name, entry) in TARGETS {
        let dir = root.join(name);
        let mut seeds = 0;
        for e in std::fs::read_dir(&dir).unwrap_or_else(|e| panic!("{}: {e}", dir.display())) {
            let bytes = std::fs::read(e.unwrap().path()).unwrap();
            entry(&bytes);
            for cut in [0, bytes.len() / 2, bytes.len().saturating_sub(1)] {
                entry(&bytes[..cut]);
            }
            seeds += 1;
        }
        assert!(seeds >= 2, "{name}: only {seeds} seeds");
    }
}

#[test]
fn every_target_has_a_fuzz_binary() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/fuzz_targets");
    for (name, _) in TARGETS {
        assert!(root.join(format!("{name}.rs")).exists(), "{name}");
    }
}

#[test]
fn valid_seeds_are_accepted() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let read = |p: &str| std::fs::read_to_string(root.join(p)).unwrap();
    assert!(ambient_core::densities::Density1D::from_json_str(&read("density_json/tent.json")).is_ok());
    assert!(ambient_core::train::Denoiser::from_json_str(&read("denoiser_json/mlp.json")).is_ok());
    assert!(ambient_core::train::Denoiser::from_json_str(&read("denoiser_json/short_params.json")).is_err());
    assert!(ambient_core::annotate::NoiseClassifier::from_json_str(&read("classifier_json/logistic.json")).is_ok());
    assert!(ambient_core::fields::GaussianField::from_json_str(&read("field_json/not_psd.json")).is_err());
}

// A fixed-seed stand-in for a fuzzing session: byte-level mutations of every
// seed, biased toward JSON punctuation and numerals.
#[test]
fn mutated_seeds_do_not_panic() {
    use rand::Rng;
    const ALPHABET: &[u8] = b"{}[],:\"-+.0123456789eE naltrufs";
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut rng = ambient_core::rng::child_rng(0xF022, 0, 0);
    for (name, entry) in TARGETS {
        for e in std::fs::read_dir(root.join(name)).unwrap() {
            let seed = std::fs::read(e.unwrap().path()).unwrap();
            for _ in 0..300 {
                let mut b = seed.clone();
                for _ in 0..rng.random_range(1..4) {
                    let i = rng.random_range(0..=b.len());
                    match rng.random_range(0..4) {
                        0 if i < b.len() => b[i] = ALPHABET[rng.random_range(0..ALPHABET.len())],
                        1 if i < b.len() => {
                            b.remove(i);
                        }
                        2 => b.insert(i, ALPHABET[rng.random_range(0..ALPHABET.len())]),
                        _ => b.insert(i, rng.random()),
                    }
                }
                entry(&b);
            }
        }
    }
}
