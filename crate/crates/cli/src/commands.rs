use std::path::{Path, PathBuf};

use fdlp_core::enhancer::{
    examples_from_pairs, examples_from_signals, forward, load_checkpoint, save_checkpoint, train,
    write_loss_history, EnhancerConfig,
};
use fdlp_core::fdlp::{apply_gain, segment};
use fdlp_core::io::{self, FeatureFormat, WavEncoding};
use fdlp_core::reverb::{make_dataset, synthetic_pairs, Pairing, RirSpec};
use fdlp_core::verify::{self, Check, ConvolutionModelSetup, VerifyReport};
use fdlp_core::{
    features, synth, EnhancerParams, EnvelopeMatrix, FdlpAnalyzer, FeatureMatrix, FrameSpec, Signal,
};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{self, Record};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn output_path(dir: &Path, input: &Path, ext: &str) -> PathBuf {
    let stem = input
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}{ext}"))
}

/// Refuses to write over an input file.
fn guard_output(input: &Path, output: &Path) -> Result<(), CliError> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        return Err(CliError::Invalid(format!(
            "output {} would overwrite its input",
            output.display()
        )));
    }
    Ok(())
}

/// Runs `job` on every input in parallel and reports in input order. One
/// failing input does not stop the others.
fn batch(
    inputs: &[PathBuf],
    job: impl Fn(&Path) -> Result<String, CliError> + Sync,
) -> Result<(), CliError> {
    let results: Vec<Result<String, CliError>> = inputs.par_iter().map(|p| job(p)).collect();
    let mut failed = 0;
    for (path, r) in inputs.iter().zip(results) {
        match r {
            Ok(msg) => println!("ok {}: {msg}", path.display()),
            Err(e) => {
                failed += 1;
                eprintln!("error {}: {e}", path.display());
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Batch {
            failed,
            total: inputs.len(),
        });
    }
    Ok(())
}

fn rir_specs(config: &RunConfig) -> Vec<RirSpec> {
    let s = &config.simulate;
    s.t60
        .iter()
        .enumerate()
        .map(|(k, &t60)| RirSpec {
            direct_delay: s.direct_delay,
            length: t60.max(0.05) + s.direct_delay,
            sample_rate: config.fdlp.sample_rate,
            tail_energy: s.tail_energy,
            ..RirSpec::new(
                t60,
                config.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64),
            )
        })
        .collect()
}

pub fn simulate(config: &RunConfig, clean_inputs: &[PathBuf]) -> Result<(), CliError> {
    let fs = config.fdlp.sample_rate;
    let out = &config.output;
    let s = &config.simulate;
    if clean_inputs.is_empty() && s.synthetic == 0 {
        return Err(CliError::Invalid(
            "no clean inputs: pass clean WAV paths or set simulate.synthetic".into(),
        ));
    }
    create_dir(&out.join("reverb"))?;
    let (clean, clean_paths): (Vec<Signal>, Vec<PathBuf>) = if clean_inputs.is_empty() {
        create_dir(&out.join("clean"))?;
        let len = (s.synthetic_seconds * fs as f64).round() as usize;
        let signals = (0..s.synthetic)
            .into_par_iter()
            .map(|i| {
                Signal::new(
                    synth::speech_like(
                        fs,
                        len,
                        config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                    ),
                    fs,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut paths = Vec::new();
        for (i, sig) in signals.iter().enumerate() {
            let rel = PathBuf::from(format!("clean/{i:04}.wav"));
            io::write_wav(&out.join(&rel), sig, WavEncoding::Float32)?;
            paths.push(rel);
        }
        (signals, paths)
    } else {
        let signals = clean_inputs
            .par_iter()
            .map(|p| io::read_wav(p, 0, fs))
            .collect::<Result<Vec<_>, _>>()?;
        let paths = clean_inputs
            .iter()
            .map(|p| p.canonicalize().map_err(|e| CliError::io(p, e)))
            .collect::<Result<Vec<_>, _>>()?;
        (signals, paths)
    };

    let specs = rir_specs(config);
    let pairing = match s.rirs_per_clean {
        0 => Pairing::Exhaustive,
        n => Pairing::Random { per_clean: n },
    };
    let pairs = make_dataset(&clean, &specs, pairing, config.seed)?;
    let mut records = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let rel = PathBuf::from(format!("reverb/{i:04}.wav"));
        io::write_wav(&out.join(&rel), &pair.reverberant, WavEncoding::Float32)?;
        records.push(Record {
            clean: clean_paths[pair.clean_index].clone(),
            reverb: rel,
            t60: pair.rir.spec.t60,
            direct_delay: pair.rir.spec.direct_delay,
            seed: pair.rir.spec.seed,
        });
    }
    let path = out.join("manifest.tsv");
    std::fs::write(&path, manifest::render(&records)).map_err(|e| CliError::io(&path, e))?;
    println!("wrote {} pairs to {}", records.len(), path.display());
    Ok(())
}

pub fn extract(config: &RunConfig, inputs: &[PathBuf]) -> Result<(), CliError> {
    create_dir(&config.output)?;
    let analyzer = FdlpAnalyzer::new(config.fdlp.clone())?;
    batch(inputs, |path| {
        let signal = io::read_wav(path, 0, config.fdlp.sample_rate)?;
        let segments = segment(&signal, &config.fdlp)?;
        let envs = segments
            .iter()
            .map(|s| analyzer.envelopes(s))
            .collect::<Result<Vec<_>, _>>()?;
        let out = output_path(&config.output, path, ".env");
        guard_output(path, &out)?;
        io::write_envelopes(&out, &envs)?;
        let partial = segments.iter().filter(|s| s.is_partial()).count();
        Ok(format!(
            "{} segments ({partial} partial) -> {}",
            envs.len(),
            out.display()
        ))
    })
}

fn read_pairs(records: &[Record], sample_rate: u32) -> Result<Vec<(Signal, Signal)>, CliError> {
    Ok(records
        .par_iter()
        .map(|r| {
            Ok((
                io::read_wav(&r.clean, 0, sample_rate)?,
                io::read_wav(&r.reverb, 0, sample_rate)?,
            ))
        })
        .collect::<Result<Vec<_>, fdlp_core::Error>>()?)
}

pub fn train_cmd(
    config: &RunConfig,
    manifest_path: &Path,
    zero_final_layer: bool,
) -> Result<(), CliError> {
    if zero_final_layer && config.epochs != 0 {
        return Err(CliError::Invalid(
            "--zero-final-layer only applies with --epochs 0".into(),
        ));
    }
    let records = manifest::read(manifest_path)?;
    let signals = read_pairs(&records, config.fdlp.sample_rate)?;
    let n = signals.len();
    let held = if n >= 2 && config.train.validation_fraction > 0.0 {
        ((n as f64 * config.train.validation_fraction).floor() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let refs: Vec<(&Signal, &Signal)> = signals.iter().map(|(c, r)| (c, r)).collect();
    let enhancer = config.enhancer();
    let train_set = examples_from_signals(&refs[..n - held], &config.fdlp, &enhancer)?;
    let val_set = examples_from_signals(&refs[n - held..], &config.fdlp, &enhancer)?;
    println!(
        "training on {} segments, validating on {} ({} epochs)",
        train_set.len(),
        val_set.len(),
        config.epochs
    );

    create_dir(&config.output)?;
    let last_path = config.output.join("last.ckpt");
    let outcome = train(&train_set, &val_set, &enhancer, |r, params, cfg| {
        println!(
            "epoch {} train {:.6} val {:.6}",
            r.epoch, r.train_loss, r.val_loss
        );
        save_checkpoint(&last_path, params, cfg)
    })?;
    let mut best = outcome.best;
    if zero_final_layer {
        best.zero_final_layer(&outcome.config);
    }
    let model_path = config.output.join("model.ckpt");
    save_checkpoint(&model_path, &best, &outcome.config)?;
    write_loss_history(&config.output.join("loss_history.txt"), &outcome.history)?;
    println!(
        "best epoch {} -> {}",
        outcome.best_epoch,
        model_path.display()
    );
    Ok(())
}

fn check_bands(env: &EnvelopeMatrix, config: &EnhancerConfig, path: &Path) -> Result<(), CliError> {
    let q = env.shape().1;
    if q != config.num_bands {
        return Err(CliError::Core(fdlp_core::Error::ShapeMismatch {
            expected: format!("{} bands (checkpoint)", config.num_bands),
            actual: format!("{q} bands in {}", path.display()),
        }));
    }
    Ok(())
}

pub fn enhance(config: &RunConfig, checkpoint: &Path, inputs: &[PathBuf]) -> Result<(), CliError> {
    let (params, enhancer) = load_checkpoint(checkpoint)?;
    create_dir(&config.output)?;
    batch(inputs, |path| {
        let segments = io::read_envelopes(path)?;
        let mut enhanced = Vec::with_capacity(segments.len());
        let mut gains = Vec::with_capacity(segments.len());
        for env in &segments {
            check_bands(env, &enhancer, path)?;
            let g = forward(env, &params, &enhancer)?;
            enhanced.push(apply_gain(env, &g)?);
            gains.push(EnvelopeMatrix::new(g.values().clone(), env.valid_points())?);
        }
        let out = output_path(&config.output, path, ".env");
        guard_output(path, &out)?;
        io::write_envelopes(&out, &enhanced)?;
        if config.gain_dump {
            let gain_out = output_path(&config.output, path, ".gain.env");
            guard_output(path, &gain_out)?;
            io::write_envelopes(&gain_out, &gains)?;
        }
        Ok(format!("{} segments -> {}", enhanced.len(), out.display()))
    })
}

pub fn featurize(config: &RunConfig, inputs: &[PathBuf]) -> Result<(), CliError> {
    let format = config.feature_format()?;
    let spec = FrameSpec::for_rate(config.fdlp.envelope_rate)?;
    create_dir(&config.output)?;
    batch(inputs, |path| {
        let segments = io::read_envelopes(path)?;
        let parts = segments
            .iter()
            .map(|env| features::integrate(env, spec, config.fdlp.envelope_floor))
            .collect::<Result<Vec<_>, _>>()?;
        let m = FeatureMatrix::concat(&parts)?;
        let ext = match format {
            FeatureFormat::Binary => ".feat",
            FeatureFormat::Csv => ".csv",
        };
        let out = output_path(&config.output, path, ext);
        guard_output(path, &out)?;
        io::write_features(&m, &out, format)?;
        Ok(format!(
            "{} frames x {} -> {}",
            m.num_frames(),
            m.num_coeffs(),
            out.display()
        ))
    })
}

pub fn verify_cmd(config: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let mut report = VerifyReport::default();
    let mut add = |c: Check| {
        println!("{c}");
        report.checks.push(c);
    };
    for c in verify::numeric_core_checks(config.seed)? {
        add(c);
    }
    add(verify::fdlp_modulation_check(&config.fdlp, config.seed)?);

    let setup = ConvolutionModelSetup {
        sample_rate: config.fdlp.sample_rate,
        seconds: config.fdlp.segment_seconds,
        seed: config.seed,
        ..ConvolutionModelSetup::default()
    };
    let points = verify::envelope_convolution_model(&setup)?;
    for c in verify::envelope_convolution_checks(&points) {
        add(c);
    }
    add(verify::early_late_additivity(&setup, 200.0)?);

    let grad = verify::gradient_check(
        &config.enhancer(),
        config.verify.gradient_steps,
        config.seed,
    )?;
    let (name, _) = grad
        .per_tensor
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap_or_default();
    add(Check::below(
        "gradient check",
        grad.worst,
        1e-4,
        format!("{} tensors, worst {name}", grad.per_tensor.len()),
    ));

    if let Some(path) = checkpoint {
        let (params, enhancer): (EnhancerParams, EnhancerConfig) = load_checkpoint(path)?;
        let v = &config.verify;
        let pairs = synthetic_pairs(
            v.held_out_pairs,
            config.fdlp.segment_seconds,
            v.t60_min,
            v.t60_max,
            config.fdlp.sample_rate,
            config.seed ^ 0x6865_6c64,
        )?;
        let examples = examples_from_pairs(&pairs, &config.fdlp, &enhancer)?;
        add(verify::enhancement_check(&examples, &params, &enhancer)?);
    }

    println!(
        "{} of {} checks passed",
        report.checks.len() - report.failures(),
        report.checks.len()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed {
            failed: report.failures(),
            total: report.checks.len(),
        })
    }
}
