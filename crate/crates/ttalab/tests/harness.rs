use std::path::PathBuf;
use std::process::Command;

use proptest::prelude::*;
use ttalab::config::KEYS;
use ttalab::io::*;
use ttalab::metrics::{MetricsRecord, SegmentMetric};
use ttalab::runner::{run, write_outputs};
use ttalab::surface::{emit_surface, grid, surface_csv, SurfaceLoss, SurfaceWhat};
use ttalab::table::emit_table;
use ttalab::{HarnessError, RunConfig};
use ttalab_core::netcore::Matrix;
use ttalab_core::prototypes::PrototypeBank;
use ttalab_core::streams::{build_gradual, generate_source, CorruptionKind, SourceSpec};

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    for (k, v) in [
        ("dataset.per_class", "30"),
        ("pretrain.epochs", "3"),
        ("stream.kinds", "contrast,impulse"),
        ("stream.batches", "2"),
        ("stream.batch_size", "16"),
        ("stream.probe_size", "100"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}

fn record(label: &str, errors: &[f64]) -> MetricsRecord {
    let segments: Vec<SegmentMetric> = errors
        .iter()
        .enumerate()
        .map(|(i, &e)| SegmentMetric { segment: i, kind: CorruptionKind::ALL[i].name().into(), severity: 5, batches: 1, error_pct: e })
        .collect();
    MetricsRecord {
        label: label.into(),
        mean_error: ttalab::metrics::mean(errors.iter().copied()),
        segments,
        batches_file: "batches.csv".into(),
        wall_clock_s: 0.0,
        config_hash: "0".into(),
    }
}

#[test]
fn config_round_trip_and_errors() {
    let text = small_config().serialize();
    let parsed = RunConfig::parse_str(&text, "mem").unwrap();
    assert_eq!(parsed, small_config());
    assert_eq!(parsed.serialize(), text);
    assert_eq!(text.lines().filter(|l| l.contains(" = ")).count(), KEYS.len());

    let err = RunConfig::parse_str("# header\n\nadapter.lr = 0.1\nadapter.nope = 3\n", "f.cfg").unwrap_err();
    assert!(matches!(&err, HarnessError::ConfigLine { line: 4, .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().starts_with("f.cfg:4:"));
    let err = RunConfig::parse_str("adapter.lr = fast\n", "f").unwrap_err();
    assert!(matches!(err, HarnessError::ConfigLine { line: 1, .. }));
    assert!(RunConfig::parse_str("adapter.lr 0.1\n", "f").is_err());
    assert!(RunConfig::parse_str("run.seed = 1\nrun.seed = 2\n", "f").is_err());
    assert!(RunConfig::parse_str("adapter.lr = inf\n", "f").is_err());

    let c = RunConfig::parse_str("adapter.method = mt_sce\n", "f").unwrap();
    assert!(!c.resolved_adapter().warmup);
    assert!(RunConfig::default().resolved_adapter().warmup);
    let bad = RunConfig::parse_str("adapter.alpha = 1.5\n", "f").unwrap();
    assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
}

fn value_for(key: &str, pick: u32) -> String {
    let choose = |opts: &[&str]| opts[pick as usize % opts.len()].to_string();
    match key {
        "dataset.csv" => choose(&["none", "data/x.csv"]),
        "model.hidden" => choose(&["64", "", "8,4"]),
        "model.activation" => choose(&["relu", "tanh"]),
        "model.batch_norm" | "adapter.predict_after_updates" => choose(&["true", "false"]),
        "stream.kinds" => choose(&["impulse", "contrast,scaling", ""]),
        "stream.order" => choose(&["continual", "gradual", "easy_to_hard", "hard_to_easy", "custom"]),
        "adapter.method" => choose(&["source_only", "bn1", "tent", "mt_ce", "mt_sce", "rmt"]),
        "adapter.teacher_bn" => choose(&["eval", "recompute"]),
        "adapter.warmup" => choose(&["auto", "true", "false"]),
        "adapter.replay_batch" | "adapter.window" => choose(&["none", "8", "32"]),
        "adapter.warmup_lr" => choose(&["none", "0.05", "1e-3"]),
        "run.out" => choose(&["out", "a/b c"]),
        k if k.ends_with("classes") || k.ends_with("dim") || k.ends_with("per_class") || k.ends_with("epochs")
            || k.ends_with("batch_size") || k.ends_with("batches") || k.ends_with("probe_size") || k.ends_with("updates")
            || k.ends_with("seed") =>
        {
            (pick % 1000).to_string()
        }
        _ => format!("{}", pick as f64 / 7.0),
    }
}

proptest! {
    #[test]
    fn any_config_round_trips(picks in proptest::collection::vec(any::<u32>(), KEYS.len())) {
        let mut c = RunConfig::default();
        for (key, pick) in KEYS.iter().zip(&picks) {
            c.set(key, &value_for(key, *pick)).unwrap();
        }
        let text = c.serialize();
        let back = RunConfig::parse_str(&text, "mem").unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.serialize(), text);
    }
}

#[test]
fn csv_formats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_source(&SourceSpec { per_class: 3, ..SourceSpec::default() }, 4).unwrap();
    let p = dir.path().join("d.csv");
    write_dataset(&p, &data).unwrap();
    assert!(std::fs::read_to_string(&p).unwrap().starts_with("y,f0,f1,"));
    assert_eq!(read_dataset(&p, Some(10)).unwrap(), data);

    let bank = PrototypeBank::from_parts(Matrix::from_rows(&[[0.1, -2.5], [0.0, 0.0]]).unwrap(), vec![4, 0]).unwrap();
    let p = dir.path().join("p.csv");
    write_prototypes(&p, &bank).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "class,count,f0,f1\n0,4,0.1,-2.5\n1,0,0,0\n");
    assert_eq!(read_prototypes(&p).unwrap(), bank);

    let manifest = build_gradual(&[CorruptionKind::Scaling], 2).manifest();
    let p = dir.path().join("m.csv");
    write_manifest(&p, &manifest).unwrap();
    let back = read_manifest(&p).unwrap();
    assert_eq!(back.len(), 9);
    assert_eq!((back[4].kind.as_str(), back[4].severity, back[4].batches), ("scaling", 5, 2));

    let r = record("rmt", &[10.0, 20.0]);
    let p = dir.path().join("metrics.csv");
    r.write_csv(&p).unwrap();
    assert_eq!(MetricsRecord::read_csv(&p).unwrap(), r);

    std::fs::write(&p, "y,f0\n1,abc\n").unwrap();
    assert!(matches!(read_dataset(&p, None), Err(HarnessError::Format { line: 2, .. })));
    std::fs::write(&p, "label,f0\n").unwrap();
    assert!(read_dataset(&p, None).is_err());
}

#[test]
fn tables() {
    let (text, csv) = emit_table(&[record("solo", &[12.5])]).unwrap();
    assert_eq!(csv, "method,gaussian_noise,Mean\nsolo,12.50,12.50\n");
    assert!(text.starts_with("method"));
    let (_, csv) = emit_table(&[record("a", &[10.0, 20.0]), record("bn1", &[1.0, 2.0])]).unwrap();
    assert_eq!(csv, "method,gaussian_noise,impulse,Mean\na,10.00,20.00,15.00\nbn1,1.00,2.00,1.50\n");
    assert!(emit_table(&[record("a", &[1.0]), record("b", &[1.0, 2.0])]).is_err());
    assert!(emit_table(&[]).is_err());
}

#[test]
fn surface_grid() {
    assert_eq!(grid(0.01).unwrap().len(), 99);
    assert_eq!(grid(0.05).unwrap(), (1..20).map(|k| k as f64 / 20.0).collect::<Vec<_>>());
    assert!(grid(0.5).is_err() && grid(0.0).is_err());
    let pts = emit_surface(SurfaceLoss::Ce, SurfaceWhat::Value, 0.01).unwrap();
    assert_eq!(pts.len(), 99 * 99);
    let csv = surface_csv(&pts);
    assert_eq!(csv.lines().count(), 99 * 99 + 1);
    assert!(csv.lines().nth(1).unwrap().starts_with("0.01,0.01,"));
    let sce = emit_surface(SurfaceLoss::Sce, SurfaceWhat::Value, 0.05).unwrap();
    let n = 19;
    for i in 0..n {
        for j in 0..n {
            assert!((sce[i * n + j].f - sce[j * n + i].f).abs() < 1e-12);
        }
    }
}

#[test]
fn runs_write_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let a = run(&cfg).unwrap();
    let b = run(&RunConfig { out: PathBuf::from("elsewhere"), ..cfg.clone() }).unwrap();
    assert_eq!(a.metrics.config_hash, b.metrics.config_hash);
    write_outputs(&dir.path().join("a"), &a).unwrap();
    write_outputs(&dir.path().join("b"), &b).unwrap();
    for f in ["metrics.csv", "batches.csv", "manifest.csv"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let mean = ttalab::metrics::mean(a.metrics.segments.iter().map(|s| s.error_pct));
    assert!((a.metrics.mean_error - mean).abs() < 1e-12);
    for batch in &a.result.batches {
        assert_eq!(batch.error_pct(), 100.0 * batch.wrong as f64 / batch.size as f64);
        assert!((0.0..=100.0).contains(&batch.error_pct()));
    }
    let resolved = RunConfig::load(&dir.path().join("a").join("config.resolved")).unwrap();
    assert_eq!(resolved, cfg);
}

#[test]
fn csv_dataset_source() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_source(&SourceSpec { per_class: 20, ..SourceSpec::default() }, 2).unwrap();
    let p = dir.path().join("source.csv");
    write_dataset(&p, &data).unwrap();
    let mut cfg = small_config();
    cfg.set("dataset.csv", p.to_str().unwrap()).unwrap();
    cfg.set("adapter.method", "source_only").unwrap();
    cfg.set("stream.kinds", "").unwrap();
    cfg.set("stream.order", "custom").unwrap();
    let out = run(&cfg).unwrap();
    assert!(out.metrics.segments.is_empty());
    cfg.set("stream.kinds", "contrast").unwrap();
    assert_eq!(run(&cfg).unwrap().metrics.segments.len(), 1);
}

#[test]
fn cli_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_ttalab");
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, small_config().serialize()).unwrap();
    let out = dir.path().join("out");
    let st = Command::new(exe).args(["run", "--config"]).arg(&cfg_path).arg("--out").arg(&out).args(["--seed", "3"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    for f in ["metrics.csv", "batches.csv", "manifest.csv", "config.resolved"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(std::fs::read_to_string(out.join("config.resolved")).unwrap().contains("run.seed = 3"));

    let table = dir.path().join("t.csv");
    let st = Command::new(exe).arg("table").arg(out.join("metrics.csv")).arg("--out").arg(&table).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(std::fs::read_to_string(&table).unwrap().starts_with("method,contrast,impulse,Mean\n"));

    let surf = dir.path().join("s.csv");
    let st = Command::new(exe).args(["surface", "--loss", "sce", "--what", "grad", "--step", "0.01", "--out"]).arg(&surf).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&surf).unwrap().lines().count(), 99 * 99 + 1);

    let st = Command::new(exe).args(["sweep", "--config"]).arg(&cfg_path).args(["--vary", "adapter.tau=0.07,0.2", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.contains("\nadapter.tau=0.07,") && sweep.contains("\nadapter.tau=0.2,"));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "adapter.unknown = 1\n").unwrap();
    let st = Command::new(exe).args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains(":1:"));
    let st = Command::new(exe).args(["surface", "--loss", "sce", "--what", "grad", "--step", "0.7", "--out"]).arg(&surf).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = Command::new(exe).args(["table", "--out"]).arg(&table).arg(dir.path().join("missing.csv")).output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    let st = Command::new(exe).arg("bogus").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}
