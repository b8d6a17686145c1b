use std::path::Path;
use std::process::{Command, Output};

use fdlp_core::fdlp::{EnvelopeMatrix, Grid};
use fdlp_core::io::{self, WavEncoding};
use fdlp_core::{synth, Signal};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdlp-dereverb"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn write_tone(path: &Path, seconds: f64, amplitude: f64) {
    let n = (seconds * 16000.0) as usize;
    let s = Signal::new(synth::tone(1000.0, amplitude, n, 16000), 16000).unwrap();
    io::write_wav(path, &s, WavEncoding::Pcm16).unwrap();
}

#[test]
fn simulate_writes_an_exhaustive_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_tone(&d.join("a.wav"), 1.0, 0.3);
    write_tone(&d.join("b.wav"), 1.5, 0.2);
    std::fs::write(
        d.join("run.toml"),
        "seed = 4\n[simulate]\nt60 = [0.3, 0.5, 0.7]\n",
    )
    .unwrap();
    for out in ["one", "two"] {
        let o = cli(
            &[
                "simulate", "--config", "run.toml", "--output", out, "a.wav", "b.wav",
            ],
            d,
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let one = std::fs::read_to_string(d.join("one/manifest.tsv")).unwrap();
    let two = std::fs::read_to_string(d.join("two/manifest.tsv")).unwrap();
    assert_eq!(one, two);
    let lines: Vec<&str> = one.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines.iter().all(|l| l.split('\t').count() == 5));
    assert_eq!(
        std::fs::read(d.join("one/reverb/0005.wav")).unwrap(),
        std::fs::read(d.join("two/reverb/0005.wav")).unwrap()
    );
}

#[test]
fn simulate_without_clean_inputs_is_an_invalid_argument() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["simulate", "--output", "x"], dir.path())), 2);
}

#[test]
fn unknown_config_keys_and_bad_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[simulate]\nt6 = [0.3]\n").unwrap();
    assert_eq!(
        code(&cli(&["simulate", "--config", "bad.toml"], dir.path())),
        2
    );
    assert_eq!(
        code(&cli(
            &["featurize", "--format", "hdf5", "x.env"],
            dir.path()
        )),
        2
    );
    assert_eq!(code(&cli(&["verify", "--scale", "huge"], dir.path())), 2);
}

#[test]
fn extract_segments_and_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_tone(&d.join("two.wav"), 2.0, 0.3);
    write_tone(&d.join("five.wav"), 5.0, 0.3);
    write_tone(&d.join("silent.wav"), 1.0, 0.0);
    let o = cli(
        &[
            "extract",
            "--output",
            "env",
            "two.wav",
            "missing.wav",
            "five.wav",
            "silent.wav",
        ],
        d,
    );
    assert_eq!(code(&o), 6);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.wav"));

    let two = io::read_envelopes(&d.join("env/two.env")).unwrap();
    assert_eq!(two.len(), 1);
    assert_eq!(two[0].shape(), (800, 36));
    let five = io::read_envelopes(&d.join("env/five.env")).unwrap();
    let valid: Vec<usize> = five.iter().map(|e| e.valid_points()).collect();
    assert_eq!(valid, vec![800, 800, 400]);
    let silent = io::read_envelopes(&d.join("env/silent.env")).unwrap();
    assert!(silent[0]
        .values()
        .as_slice()
        .iter()
        .all(|v| *v == 1e-8f32 as f64));
}

#[test]
fn train_with_zero_epochs_writes_an_initialized_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.toml"),
        "[simulate]\nsynthetic = 2\nt60 = [0.4]\n",
    )
    .unwrap();
    assert_eq!(
        code(&cli(
            &["simulate", "--config", "run.toml", "--output", "data"],
            d
        )),
        0
    );
    let o = cli(
        &[
            "train",
            "data/manifest.tsv",
            "--epochs",
            "0",
            "--output",
            "m",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (params, config) = fdlp_core::enhancer::load_checkpoint(&d.join("m/model.ckpt")).unwrap();
    let mut fresh = config.clone();
    fresh.input_offset = 0.0;
    fresh.input_spread = 1.0;
    assert_eq!(
        params,
        fdlp_core::EnhancerParams::init(&fresh, config.seed).unwrap()
    );
    let history = fdlp_core::enhancer::read_loss_history(&d.join("m/loss_history.txt")).unwrap();
    assert_eq!(history.len(), 1);

    assert_eq!(code(&cli(&["train", "nope.tsv"], d)), 3);
    let o = cli(
        &[
            "train",
            "data/manifest.tsv",
            "--zero-final-layer",
            "--epochs",
            "2",
        ],
        d,
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn enhance_names_mismatched_dims_and_never_overwrites_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = fdlp_core::EnhancerConfig::desk();
    let params = fdlp_core::EnhancerParams::init(&config, 1).unwrap();
    fdlp_core::enhancer::save_checkpoint(&d.join("m.ckpt"), &params, &config).unwrap();
    let narrow = EnvelopeMatrix::full(Grid::filled(40, 20, 0.5)).unwrap();
    io::write_envelopes(&d.join("narrow.env"), &[narrow]).unwrap();
    let o = cli(
        &[
            "enhance",
            "--checkpoint",
            "m.ckpt",
            "--output",
            "out",
            "narrow.env",
        ],
        d,
    );
    assert_ne!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("36 bands") && err.contains("20 bands"),
        "{err}"
    );

    let ok = EnvelopeMatrix::full(Grid::filled(40, 36, 0.5)).unwrap();
    io::write_envelopes(&d.join("ok.env"), &[ok]).unwrap();
    let before = std::fs::read(d.join("ok.env")).unwrap();
    let o = cli(
        &[
            "enhance",
            "--checkpoint",
            "m.ckpt",
            "--output",
            ".",
            "ok.env",
        ],
        d,
    );
    assert_ne!(code(&o), 0);
    assert_eq!(std::fs::read(d.join("ok.env")).unwrap(), before);
}

#[test]
fn featurize_concatenates_segments_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let seg = |v: f64| {
        EnvelopeMatrix::full(
            Grid::from_vec(
                800,
                36,
                (0..800 * 36).map(|i| v + (i % 7) as f64 * 0.1).collect(),
            )
            .unwrap(),
        )
        .unwrap()
    };
    io::write_envelopes(&d.join("two.env"), &[seg(0.5), seg(0.7)]).unwrap();
    assert_eq!(code(&cli(&["featurize", "--output", "f", "two.env"], d)), 0);
    assert_eq!(
        code(&cli(
            &["featurize", "--format", "csv", "--output", "c", "two.env"],
            d
        )),
        0
    );
    let bin = io::read_features(&d.join("f/two.feat")).unwrap();
    let csv = io::read_features_csv(&d.join("c/two.csv")).unwrap();
    assert_eq!((bin.num_frames(), bin.num_coeffs()), (396, 36));
    let f32s = |m: &fdlp_core::FeatureMatrix| {
        m.frames
            .as_slice()
            .iter()
            .map(|v| *v as f32)
            .collect::<Vec<_>>()
    };
    assert_eq!(f32s(&bin), f32s(&csv));
}

#[test]
fn verify_with_an_identity_checkpoint_reports_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = fdlp_core::EnhancerConfig::desk();
    let mut params = fdlp_core::EnhancerParams::init(&config, 1).unwrap();
    params.zero_final_layer(&config);
    fdlp_core::enhancer::save_checkpoint(&d.join("zero.ckpt"), &params, &config).unwrap();
    std::fs::write(
        d.join("run.toml"),
        "[verify]\nheld_out_pairs = 2\ngradient_steps = 3\n",
    )
    .unwrap();
    let o = cli(
        &[
            "verify",
            "--config",
            "run.toml",
            "--checkpoint",
            "zero.ckpt",
        ],
        d,
    );
    let out = String::from_utf8_lossy(&o.stdout);
    for name in [
        "dct round trip",
        "levinson-durbin",
        "all-pole",
        "gradient check",
    ] {
        assert!(
            out.lines()
                .any(|l| l.starts_with("PASS") && l.contains(name)),
            "{out}"
        );
    }
    let line = out
        .lines()
        .find(|l| l.contains("held-out log-MSE reduction"))
        .unwrap();
    assert!(
        line.starts_with("FAIL") && line.contains("measured 0.0000e0"),
        "{line}"
    );
    assert_eq!(code(&o), 5);
}
