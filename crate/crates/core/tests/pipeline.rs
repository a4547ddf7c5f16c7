//! Cross-module checks on the library pipeline at toy scale.

use spoofnoise::eval::{eer_table, format_scores, parse_scores, GroupBy};
use spoofnoise::features::{append_deltas, extract, read_features, write_features, FeatureKind};
use spoofnoise::mlp::{score_utterance, train, Dataset, MlpModel, TrainConfig};
use spoofnoise::noise::{measure_snr_db, mix, ActivityConfig, MixSpec};
use spoofnoise::synth::{corpus_plan, gen_noise, gen_utterance, parse_manifest, CorpusSpec, NoiseKind, Split};
use spoofnoise::{gen_corpus, read_wav, write_wav, AudioClip, LpcConfig, MgdConfig, ScoreSet, StftConfig, TrialScore, Truth};

fn stacked(clip: &AudioClip, kind: FeatureKind) -> spoofnoise::FeatureMatrix {
    let m = extract(clip, kind, &StftConfig::default(), &LpcConfig::default(), &MgdConfig::default()).unwrap();
    append_deltas(&m).unwrap()
}

#[test]
fn corpus_on_disk_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        n_per_class: 2,
        attack_variants: 2,
        seed: 21,
        ..CorpusSpec::default()
    };
    let (manifest, rows) = gen_corpus(&spec, dir.path()).unwrap();
    assert_eq!(parse_manifest(&std::fs::read_to_string(&manifest).unwrap()).unwrap(), rows);
    let plan = corpus_plan(&spec, Split::Dev);
    let (id, truth, variant, seed) = &plan[1];
    let row = rows.iter().find(|r| &r.utt_id == id).unwrap();
    let disk = read_wav(dir.path().join(&row.path)).unwrap();
    let fresh = gen_utterance(&spec, *truth, *variant, *seed).clip;
    // the WAV holds 16-bit samples
    for (a, b) in disk.samples().iter().zip(fresh.samples()) {
        assert!((a - b).abs() <= 1.0 / 32768.0);
    }
}

#[test]
fn mixed_wav_keeps_target_snr_after_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec::default();
    let clean = gen_utterance(&spec, Truth::Human, 0, 5).clip;
    let noise = gen_noise(NoiseKind::Babble, 40_000, 6, 16000);
    for snr in [20.0, 0.0, -5.0] {
        let m = mix(
            &clean,
            &noise,
            &MixSpec {
                noise_label: "babble".into(),
                target_snr_db: snr,
                seed: 1,
            },
        )
        .unwrap();
        let p = dir.path().join("m.wav");
        write_wav(&p, &m.noisy).unwrap();
        let back = read_wav(&p).unwrap();
        let speech: Vec<f64> = clean.samples().iter().map(|s| 0.5 * m.post_scale * s).collect();
        let resid: Vec<f64> = back.samples().iter().zip(&speech).map(|(y, s)| 0.5 * y - s).collect();
        let measured = measure_snr_db(
            &AudioClip::new(speech, 16000).unwrap(),
            &AudioClip::new(resid, 16000).unwrap(),
            &ActivityConfig::default(),
        )
        .unwrap();
        assert!((measured - snr).abs() < 0.1, "{snr}: {measured}");
    }
}

#[test]
fn features_survive_the_file_format() {
    let dir = tempfile::tempdir().unwrap();
    let clip = gen_utterance(&CorpusSpec::default(), Truth::Spoof, 1, 3).clip;
    for kind in FeatureKind::ALL {
        let m = stacked(&clip, kind);
        assert_eq!((m.n_frames(), m.dims()), (98, 768), "{kind}");
        let p = dir.path().join(format!("{kind}.sbft"));
        write_features(&p, &m).unwrap();
        let back = read_features(&p).unwrap();
        assert_eq!((back.kind(), back.n_frames(), back.dims()), (kind, 98, 768));
        for (a, b) in m.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }
}

#[test]
fn train_save_score_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        n_per_class: 6,
        attack_variants: 2,
        seed: 8,
        ..CorpusSpec::default()
    };
    let kind = FeatureKind::Mgd;
    let mut data = Dataset::new(768);
    for (_, truth, v, seed) in corpus_plan(&spec, Split::Train) {
        let clip = gen_utterance(&spec, truth, v, seed).clip;
        data.push_matrix(&stacked(&clip, kind), truth == Truth::Spoof, 3).unwrap();
    }
    let cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 32,
        epochs: 3,
        seed: 2,
        hidden_dim: 8,
    };
    let out = train(&data, &cfg).unwrap();
    assert_eq!(out.epoch_losses.len(), 3);
    let p = dir.path().join("m.sbml");
    out.model.save(&p).unwrap();
    let model = MlpModel::load(&p).unwrap();
    assert_eq!(model, out.model);

    let trials: Vec<TrialScore> = corpus_plan(&spec, Split::Dev)
        .into_iter()
        .map(|(id, truth, v, seed)| {
            let u = gen_utterance(&spec, truth, v, seed);
            TrialScore {
                utt_id: id,
                truth,
                attack_label: u.attack_label,
                noise_label: "clean".into(),
                snr_db: None,
                score: score_utterance(&model, &stacked(&u.clip, kind)).unwrap(),
            }
        })
        .collect();
    assert!(trials.iter().all(|t| t.score > 0.0 && t.score < 1.0));
    let set = ScoreSet::new("MGD", trials).unwrap();
    let parsed = parse_scores(&format_scores(&set), "x").unwrap();
    assert_eq!(parsed.system_id(), "MGD");
    let table = eer_table(parsed.trials(), GroupBy::ALL);
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows.iter().all(|r| r.n_human == 6 && r.n_spoof == 6));
    assert_eq!(table.undefined().count(), 0);
}
