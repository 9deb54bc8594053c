use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use primsep::audio::{load_audio, save_audio, AudioClip, BitDepth};
use primsep::bootstrap::DatasetManifest;
use primsep::synth::{render, SceneParams};
use primsep::tfr::read_msk1;
use serde_json::Value;

fn primsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_primsep"))
        .args(args)
        .env_remove("PRIMSEP_THREADS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_scene(path: &Path, secs: f64, seed: u64) -> AudioClip {
    let scene = render(&SceneParams {
        duration_s: secs,
        seed,
        ..SceneParams::default()
    });
    save_audio(&scene.mixture, path, BitDepth::Float32).unwrap();
    load_audio(path).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("JSON error line on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn separate_writes_outputs_that_sum_to_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("mix.wav");
    let mix = write_scene(&input, 4.0, 2);
    let out = dir.path().join("out");
    let res = primsep(&["separate", p(&input), "-o", p(&out), "--dump-masks"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v = load_audio(out.join("vocals.wav")).unwrap();
    let a = load_audio(out.join("accompaniment.wav")).unwrap();
    assert_eq!(v.len(), mix.len());
    for i in 0..mix.len() {
        // float32 output quantization is the only source of error
        assert!((v.samples()[i] + a.samples()[i] - mix.samples()[i]).abs() < 1e-6);
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("confidence.json")).unwrap()).unwrap();
    for key in ["silhouette", "posterior_strength", "confidence", "n", "seed"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let frames = 1 + mix.len() / 512;
    for name in ["2dft-m", "2dft-r", "melodic", "hpss", "vocals", "accompaniment"] {
        let m = read_msk1(out.join("masks").join(format!("{name}.msk1"))).unwrap();
        assert_eq!(m.dim(), (frames, 1025), "{name}");
    }
}

#[test]
fn large_beta_gives_near_binary_masks() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("mix.wav");
    write_scene(&input, 4.0, 3);
    let out = dir.path().join("out");
    let res = primsep(&["separate", p(&input), "-o", p(&out), "--dump-masks", "--beta", "500"]);
    assert_eq!(res.status.code(), Some(0));
    let m = read_msk1(out.join("masks").join("vocals.msk1")).unwrap();
    let near = m.iter().filter(|&&v| v <= 1e-3 || v >= 1.0 - 1e-3).count();
    assert!(near as f64 > 0.95 * m.len() as f64, "{near} of {}", m.len());
}

#[test]
fn missing_input_is_a_user_error_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let res = primsep(&["separate", "/nonexistent/mix.wav", "-o", p(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr_json(&res);
    assert_eq!(err["error"], "user");
    assert_eq!(err["exit_code"], 1);
    assert!(err["message"].as_str().unwrap().contains("/nonexistent/mix.wav"));
}

#[test]
fn bad_flags_are_user_errors() {
    let res = primsep(&["separate", "x.wav", "-o", "y", "--beta", "-1"]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(stderr_json(&res)["error"], "user");
    let res = primsep(&["no-such-command"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, "beta = 3.0\n[primitives]\nhpss_time_kernel = 21\n").unwrap();
    let res = primsep(&["--config", p(&cfg_path), "--print-config", "--samples", "50", "confidence", "unused.wav"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = String::from_utf8(res.stdout).unwrap();
    let cfg = primsep::cli::RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.beta, 3.0);
    assert_eq!(cfg.primitives.hpss_time_kernel, 21);
    assert_eq!(cfg.confidence.samples, 50);

    std::fs::write(&cfg_path, "[primitives]\nhpss_time_kernel = 20\n").unwrap();
    let res = primsep(&["--config", p(&cfg_path), "--print-config", "confidence", "unused.wav"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn confidence_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("mix.wav");
    write_scene(&input, 4.0, 4);
    let run = || primsep(&["confidence", p(&input), "--seed", "7"]);
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let report: Value = serde_json::from_slice(&a.stdout).unwrap();
    let c = report["confidence"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
    assert_eq!(report["seed"], 7);
}

fn corpus(dir: &Path, secs: f64, count: u64) -> PathBuf {
    let corpus = dir.join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    for i in 0..count {
        write_scene(&corpus.join(format!("song{i}.wav")), secs, 10 + i);
    }
    corpus
}

fn manifest(out: &Path) -> (DatasetManifest, Vec<u8>) {
    let bytes = std::fs::read(out.join("dataset").join("manifest.json")).unwrap();
    (serde_json::from_slice(&bytes).unwrap(), bytes)
}

#[test]
fn bootstrap_two_minute_long_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 60.0, 2);
    let out = dir.path().join("out");
    let res = primsep(&["bootstrap-dataset", p(&corpus), "-o", p(&out), "--count", "10", "--seed", "3"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(summary["pool_size"], 6);
    assert_eq!(summary["dropped"], 1);
    assert_eq!(summary["entries"], 10);
    assert_eq!(summary["confidence_quartiles"].as_array().unwrap().len(), 3);
    let (m, _) = manifest(&out);
    assert_eq!(m.entries.len(), 10);
    for e in &m.entries {
        let origin = |id: &str| id.split('#').next().unwrap().to_string();
        assert_ne!(origin(&e.vocal_id), origin(&e.accomp_id));
        assert!((-2.5..=2.5).contains(&e.target_snr_db));
        let mix = load_audio(out.join("dataset").join(&e.mixture_path)).unwrap();
        assert_eq!(mix.len(), 15 * 44_100);
    }
}

/// Short segments keep the determinism and error-policy checks quick.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[segments]\nlength_s = 4.0\noverlap_s = 2.0\n[dataset]\nsnippet_s = 2.0\n",
    )
    .unwrap();
    path
}

#[test]
fn bootstrap_is_reproducible_and_supports_quartiles() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 8.0, 6);
    let cfg = small_config(dir.path());
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["--config", p(&cfg), "bootstrap-dataset", p(&corpus), "-o", p(&out), "--count", "6", "--seed", "9"];
        args.extend_from_slice(extra);
        let res = primsep(&args);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        out
    };
    let one = run("one", &[]);
    let two = run("two", &["--threads", "1"]);
    assert_eq!(manifest(&one).1, manifest(&two).1);

    let q1 = run("q1", &["--quartile", "Q1"]);
    let (m, _) = manifest(&q1);
    assert_eq!(m.quartile, Some(1));
    let estimates: Value = serde_json::from_slice(&std::fs::read(q1.join("estimates.json")).unwrap()).unwrap();
    let mut pool: Vec<(f64, String)> = estimates["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["confidence"].as_f64().unwrap(), e["id"].as_str().unwrap().to_string()))
        .collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let lowest: Vec<&String> = pool[..pool.len() / 4].iter().map(|(_, id)| id).collect();
    for e in &m.entries {
        assert!(lowest.contains(&&e.vocal_id) && lowest.contains(&&e.accomp_id));
    }
}

#[test]
fn corrupt_corpus_file_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 8.0, 2);
    std::fs::write(corpus.join("broken.wav"), b"not a wav file").unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let res = primsep(&["--config", p(&cfg), "bootstrap-dataset", p(&corpus), "-o", p(&out), "--count", "4"]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    let summary: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(summary["failed_files"].as_array().unwrap().len(), 1);
    assert_eq!(manifest(&out).0.entries.len(), 4);
}

#[test]
fn bootstrap_single_mixture_pool_is_too_small() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus(dir.path(), 8.0, 1);
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let res = primsep(&["--config", p(&cfg), "bootstrap-dataset", p(&corpus), "-o", p(&out), "--count", "2"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr_json(&res)["message"].as_str().unwrap().contains("pool too small"));
}

fn write_track(root: &Path, track: &str, vocals: &AudioClip, accomp: &AudioClip) {
    let d = root.join(track);
    std::fs::create_dir_all(&d).unwrap();
    save_audio(vocals, d.join("vocals.wav"), BitDepth::Float32).unwrap();
    save_audio(accomp, d.join("accompaniment.wav"), BitDepth::Float32).unwrap();
}

#[test]
fn evaluate_identical_estimates_are_infinite() {
    let dir = tempfile::tempdir().unwrap();
    let refs = dir.path().join("refs");
    for i in 0..3 {
        let s = render(&SceneParams { duration_s: 1.0, seed: i, ..SceneParams::default() });
        write_track(&refs, &format!("t{i}"), &s.vocals, &s.accompaniment);
        std::fs::write(
            refs.join(format!("t{i}")).join("confidence.json"),
            format!("{{\"silhouette\":0.5,\"posterior_strength\":0.5,\"confidence\":0.{i}5,\"n\":10,\"seed\":0}}"),
        )
        .unwrap();
    }
    let out = dir.path().join("eval");
    let res = primsep(&["evaluate", "--refs", p(&refs), "--estimates", p(&refs), "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "track_id,source,sd_sdr_db,si_sdr_db,confidence");
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(2) == Some("inf")));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["rows"][0]["sd_sdr_db"], "inf");
    let reg = &json["regression"]["vocals"];
    assert_eq!(reg["points"], 3);
    assert!(reg["error"].as_str().unwrap().contains("3 excluded"), "{reg}");
}

#[test]
fn evaluate_suite_of_thirty_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let (refs, ests) = (dir.path().join("refs"), dir.path().join("ests"));
    for i in 0..30u64 {
        let s = render(&SceneParams { duration_s: 0.5, seed: i, ..SceneParams::default() });
        let track = format!("scene{i:02}");
        write_track(&refs, &track, &s.vocals, &s.accompaniment);
        // Estimates leak a growing share of the other stem.
        let leak = i as f64 / 60.0;
        let mixed = |x: &AudioClip, y: &AudioClip| {
            let v = x.samples().iter().zip(y.samples()).map(|(a, b)| (1.0 - leak) * a + leak * b).collect();
            AudioClip::mono(v, 44_100).unwrap()
        };
        write_track(&ests, &track, &mixed(&s.vocals, &s.accompaniment), &mixed(&s.accompaniment, &s.vocals));
        std::fs::write(
            ests.join(&track).join("confidence.json"),
            format!("{{\"silhouette\":1,\"posterior_strength\":1,\"confidence\":{},\"n\":1,\"seed\":0}}", 1.0 - leak),
        )
        .unwrap();
    }
    let out = dir.path().join("eval");
    let res = primsep(&["evaluate", "--refs", p(&refs), "--estimates", p(&ests), "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 61);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    for source in ["vocals", "accompaniment"] {
        let r = json["regression"][source]["r_value"].as_f64().unwrap();
        assert!(r > 0.5, "{source}: r = {r}");
    }
}

#[test]
fn evaluate_missing_estimate_is_partial() {
    let dir = tempfile::tempdir().unwrap();
    let (refs, ests) = (dir.path().join("refs"), dir.path().join("ests"));
    for i in 0..2 {
        let s = render(&SceneParams { duration_s: 0.5, seed: i, ..SceneParams::default() });
        write_track(&refs, &format!("t{i}"), &s.vocals, &s.accompaniment);
        write_track(&ests, &format!("t{i}"), &s.accompaniment, &s.vocals);
    }
    std::fs::remove_file(ests.join("t1").join("vocals.wav")).unwrap();
    let out = dir.path().join("eval");
    let res = primsep(&["evaluate", "--refs", p(&refs), "--estimates", p(&ests), "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let err = stderr_json(&res);
    assert!(err["message"].as_str().unwrap().contains("t1/vocals"), "{err}");
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn evaluate_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let s = render(&SceneParams { duration_s: 0.5, seed: 1, ..SceneParams::default() });
    let r = dir.path().join("ref.wav");
    let e = dir.path().join("est.wav");
    save_audio(&s.vocals, &r, BitDepth::Float32).unwrap();
    save_audio(&s.mixture, &e, BitDepth::Float32).unwrap();
    let m = dir.path().join("pairs.json");
    std::fs::write(
        &m,
        serde_json::json!([{ "track_id": "x", "source": "vocals", "reference": r, "estimate": e }]).to_string(),
    )
    .unwrap();
    let out = dir.path().join("eval");
    let res = primsep(&["evaluate", "--manifest", p(&m), "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("x,vocals,") && row.ends_with(','), "{row}");
}
