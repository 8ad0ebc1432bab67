//! Synthetic generator, configuration and cohort-level behaviour.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use modimg::config::RunConfig;
use modimg::ingest::{CohortBuild, Exclusion};
use modimg::pipeline::{load_cohort_inputs, run_cohort, COHORT_FILE};
use modimg::synth::{generate_synthetic, oracle_auroc, Channel, LabelLink, SignalTerm, SynthSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn light_spec(n: usize, seed: u64) -> SynthSpec {
    SynthSpec { n_stays: n, seed, cxr_size: 16, ecg_duration_s: 2.0, ..SynthSpec::default() }
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn fixed_seed_regenerates_identical_bytes() {
    let spec = SynthSpec { short_stay_rate: 0.2, ..light_spec(25, 4) };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(&spec, a.path()).unwrap();
    generate_synthetic(&spec, b.path()).unwrap();
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    assert!(fa.len() > 25);
    assert_eq!(fa, fb);
}

#[test]
fn different_seeds_give_different_cohorts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = generate_synthetic(&light_spec(10, 1), a.path()).unwrap();
    let sb = generate_synthetic(&light_spec(10, 2), b.path()).unwrap();
    assert_ne!(sa.stays, sb.stays);
}

#[test]
fn zero_signal_labels_are_fair_coins() {
    let spec = SynthSpec { signal: vec![], label_noise: 0.0, ecg_missing_rate: 1.0, drug_rate: 0.0, event_rate: 1.0, ..light_spec(2000, 9) };
    let dir = tempfile::tempdir().unwrap();
    let side = generate_synthetic(&spec, dir.path()).unwrap();
    let rate = side.stays.iter().filter(|s| s.label == 1).count() as f64 / 2000.0;
    assert!((0.45..=0.55).contains(&rate), "positive rate {rate}");
    // a constant score ties every pair
    assert_eq!(oracle_auroc(&side).unwrap(), 0.5);
}

#[test]
fn noiseless_threshold_signal_is_perfectly_ranked() {
    let spec = SynthSpec { link: LabelLink::Threshold, label_noise: 0.0, ..light_spec(200, 5) };
    let dir = tempfile::tempdir().unwrap();
    let side = generate_synthetic(&spec, dir.path()).unwrap();
    assert!(side.stays.iter().all(|s| s.label == s.clean_label));
    assert_eq!(oracle_auroc(&side).unwrap(), 1.0);
}

#[test]
fn flip_noise_lowers_the_oracle() {
    let base = SynthSpec { link: LabelLink::Threshold, ..light_spec(400, 6) };
    let dir = tempfile::tempdir().unwrap();
    let noisy = generate_synthetic(&SynthSpec { label_noise: 0.2, ..base.clone() }, dir.path()).unwrap();
    let flipped = noisy.stays.iter().filter(|s| s.label != s.clean_label).count() as f64 / 400.0;
    assert!((0.13..0.27).contains(&flipped), "flip rate {flipped}");
    let o = oracle_auroc(&noisy).unwrap();
    assert!(o < 0.95 && o > 0.7, "oracle {o}");
}

#[test]
fn planted_statistics_track_latents() {
    let spec = SynthSpec {
        signal: vec![
            SignalTerm { channel: Channel::Clinical("Heart Rate".into()), weight: 1.0 },
            SignalTerm { channel: Channel::Medication("Metoprolol".into()), weight: 1.0 },
            SignalTerm { channel: Channel::Cxr, weight: 1.0 },
        ],
        ..light_spec(150, 8)
    };
    let dir = tempfile::tempdir().unwrap();
    let side = generate_synthetic(&spec, dir.path()).unwrap();
    for k in 0..3 {
        let (x, y): (Vec<f64>, Vec<f64>) = side.stays.iter().map(|s| (s.latents[k], s.stats[k])).unzip();
        let r = correlation(&x, &y);
        assert!(r > 0.8, "term {k}: correlation {r}");
    }
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn invalid_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for spec in [
        SynthSpec { label_noise: 0.5, ..light_spec(5, 0) },
        SynthSpec { event_rate: 0.0, ..light_spec(5, 0) },
        SynthSpec { n_stays: 0, ..light_spec(5, 0) },
        SynthSpec { signal: vec![SignalTerm { channel: Channel::Clinical("Nope".into()), weight: 1.0 }], ..light_spec(5, 0) },
    ] {
        assert!(generate_synthetic(&spec, dir.path()).is_err());
    }
}

#[test]
fn generated_data_passes_ingest() {
    let spec = SynthSpec { short_stay_rate: 0.3, ecg_missing_rate: 0.5, ..light_spec(60, 12) };
    let dir = tempfile::tempdir().unwrap();
    let side = generate_synthetic(&spec, dir.path()).unwrap();
    let (build, warnings) = load_cohort_inputs(dir.path(), 48.0).unwrap();
    assert_eq!(warnings, 0);
    assert_eq!(build.instances.len() + build.excluded.len(), 60);
    assert!(build.excluded.iter().all(|(_, why)| *why == Exclusion::ShortStay));
    assert!(!build.excluded.is_empty());
    let with_ecg = build.instances.iter().filter(|i| i.ecg.is_some()).count();
    let truth_ecg = side.stays.iter().filter(|s| s.has_ecg && build.instances.iter().any(|i| i.stay.stay_id == s.stay_id)).count();
    assert_eq!(with_ecg, truth_ecg);
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "data_dir = \"in\"\nout_dir = \"out\"\n[cohort]\nsplit_seed = 3\n[model]\nmodalities = \"C|X\"\n");
    let cfg = RunConfig::load(&p).unwrap();
    assert_eq!(cfg.data_dir, dir.path().join("in"));
    assert_eq!(cfg.out_dir, dir.path().join("out"));
    assert_eq!(cfg.modalities().unwrap().len(), 2);
}

#[test]
fn config_rejects_unknown_keys_and_bad_modalities() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "data_dir = \"d\"\nbogus = 1\n[cohort]\nsplit_seed = 1\n",
        "data_dir = \"d\"\n[cohort]\nsplit_seed = 1\n[model]\nmodalities = \"\"\n",
        "data_dir = \"d\"\n[cohort]\nsplit_seed = 1\n[model]\nmodalities = \"C|Q\"\n",
        "data_dir = \"d\"\n",
    ] {
        let p = write_config(dir.path(), body);
        assert!(RunConfig::load(&p).is_err(), "accepted: {body}");
    }
}

fn shuffle_rows(path: &Path, seed: u64) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = if path.extension().is_some_and(|e| e == "csv") { Some(lines.remove(0)) } else { None };
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let body = lines.join("\n");
    fs::write(path, header.map_or(format!("{body}\n"), |h| format!("{h}\n{body}\n"))).unwrap();
}

#[test]
fn cohort_ignores_input_row_order_and_round_trips() {
    let data = tempfile::tempdir().unwrap();
    generate_synthetic(&SynthSpec { short_stay_rate: 0.1, ..light_spec(40, 21) }, data.path()).unwrap();
    let run_with = |out: &Path| {
        let cfg = write_config(
            out,
            &format!("data_dir = {:?}\nout_dir = {:?}\n[cohort]\nsplit_seed = 5\n", data.path(), out.join("run")),
        );
        let cfg = RunConfig::load(&cfg).unwrap();
        run_cohort(&cfg).unwrap();
        fs::read(out.join("run").join(COHORT_FILE)).unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_with(a.path());
    for (i, f) in ["events.csv", "meds.csv", "stays.csv", "cxr_manifest.csv", "metadata.jsonl"].iter().enumerate() {
        shuffle_rows(&data.path().join(f), i as u64);
    }
    let second = run_with(b.path());
    assert_eq!(first, second);
    let parsed: CohortBuild = serde_json::from_slice(&first).unwrap();
    let again = serde_json::to_vec_pretty(&parsed).unwrap();
    assert_eq!(serde_json::from_slice::<CohortBuild>(&again).unwrap(), parsed);
}
