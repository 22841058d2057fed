//! End-to-end runs of the `cflog` binary compared with direct library calls.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cflog::ingest::fixtures;
use cflog::{
    compress_trace, generate_trace, parse_spec_set, serialize_log, write_spec_set, write_trace, AddrWidth,
    EngineConfig, LogFormat, Mode, SubPathSpec, Transfer, WorkloadProfile,
};
use cflog_cli::{MetricsReport, SimulateOutput, CSV_COLUMNS};
use tempfile::TempDir;

fn cflog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cflog")).args(args).output().expect("binary runs")
}

fn fixture_path(name: &str) -> String {
    format!("{}/../core/fixtures/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn put(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p.to_string_lossy().into_owned()
    }

    fn trace(&self, name: &str, trace: &[Transfer], mode: Mode) -> String {
        self.put(name, &write_trace(trace, mode, AddrWidth::W16))
    }

    fn key(&self) -> String {
        self.put("key", &"5a".repeat(32))
    }
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn sensor_trace(seed: u64) -> Vec<Transfer> {
    generate_trace(&fixtures::sensor(), &WorkloadProfile::sensor(seed))
}

fn select(w: &Work, policy: &str, trace: &str, extra: &[&str]) -> (Output, String) {
    let out = s(&w.path(&format!("{policy}.toml")));
    let mut args = vec!["select", "--policy", policy, "--trace", trace, "--out", &out];
    args.extend_from_slice(extra);
    (cflog(&args), out)
}

#[test]
fn compress_matches_library_and_reaches_sensor_regime() {
    let w = Work::new();
    let train = w.trace("train.trace", &sensor_trace(2), Mode::Pair);
    let (o, specs_path) = select(&w, "select", &train, &["--max-paths", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = sensor_trace(1);
    let tp = w.trace("run.trace", &trace, Mode::Pair);
    let out = s(&w.path("run.log"));
    let report = s(&w.path("run.json"));
    let o = cflog(&["compress", "--trace", &tp, "--specs", &specs_path, "--out", &out, "--report", &report]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: MetricsReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.reduction_pct >= 90.0, "{r:?}");
    assert_eq!(r, serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap());

    let specs = parse_spec_set(&std::fs::read_to_string(&specs_path).unwrap()).unwrap();
    let config = EngineConfig::default();
    let want = serialize_log(&compress_trace(&trace, &specs, &config).unwrap(), &config, LogFormat::MemoryImage);
    assert_eq!(std::fs::read(&out).unwrap(), want.unwrap());
    assert_eq!(r, MetricsReport::measure(&trace, &specs, &config).unwrap());
}

#[test]
fn empty_specs_give_zero_reduction() {
    let w = Work::new();
    let tp = w.trace("t.trace", &sensor_trace(5)[..200], Mode::Pair);
    let specs = w.put("empty.toml", "");
    let out = s(&w.path("t.log"));
    let o = cflog(&["compress", "--trace", &tp, "--specs", &specs, "--out", &out]);
    assert_eq!(code(&o), 0);
    let r: MetricsReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.reduction_pct, 0.0);
    assert_eq!(r.compressed_bytes, r.raw_bytes);
}

#[test]
fn bad_trace_fails_without_output() {
    let w = Work::new();
    let tp = w.put("bad.trace", "# trace mode=pair width=16\n0x400 zz\n");
    let specs = w.put("empty.toml", "");
    let out = w.path("never.log");
    let o = cflog(&["compress", "--trace", &tp, "--specs", &specs, "--out", &s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!out.exists());
    // contradicting header
    let tp = w.put("ok.trace", "# trace mode=pair width=16\n0x400 0x410\n");
    let o = cflog(&["compress", "--trace", &tp, "--specs", &specs, "--out", &s(&out), "--mode", "dest"]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn compress_expand_round_trip_on_fixtures() {
    let cases = [
        ("sensor", WorkloadProfile::sensor(9)),
        ("branchy", WorkloadProfile { steps: 3000, ..WorkloadProfile::branchy(9) }),
        ("analyzer", WorkloadProfile::uniform(9, 3000)),
    ];
    for (name, profile) in cases {
        let cfg = cflog::Cfg::from_toml(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap();
        let trace = generate_trace(&cfg, &profile);
        for mode in [Mode::Pair, Mode::Dest] {
            let trace: Vec<Transfer> =
                if mode == Mode::Dest { trace.iter().map(|t| Transfer::to(t.dest.0)).collect() } else { trace.clone() };
            for format in ["image", "tagged"] {
                let w = Work::new();
                let tp = w.trace("t.trace", &trace, mode);
                let (o, specs) = select(&w, "top", &tp, &[]);
                assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
                let log = s(&w.path("t.log"));
                let back = s(&w.path("back.trace"));
                let o = cflog(&["compress", "--trace", &tp, "--specs", &specs, "--out", &log, "--format", format]);
                assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
                let o = cflog(&[
                    "expand",
                    "--log",
                    &log,
                    "--specs",
                    &specs,
                    "--out",
                    &back,
                    "--format",
                    format,
                    "--mode",
                    mode.as_str(),
                ]);
                assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
                assert_eq!(std::fs::read_to_string(&back).unwrap(), std::fs::read_to_string(&tp).unwrap(), "{name}");
            }
        }
    }
}

#[test]
fn expand_rejects_unknown_symbols_and_passes_raw_logs() {
    let w = Work::new();
    let trace = vec![Transfer::new(0x400, 0x410), Transfer::new(0x414, 0x400)];
    let tp = w.trace("t.trace", &trace, Mode::Pair);
    let spec = SubPathSpec::pair(1, &trace).unwrap();
    let specs = w.put("specs.toml", &write_spec_set(&[spec]));
    let empty = w.put("empty.toml", "");
    let log = s(&w.path("t.log"));
    let back = s(&w.path("back.trace"));
    assert_eq!(code(&cflog(&["compress", "--trace", &tp, "--specs", &specs, "--out", &log])), 0);
    assert_eq!(std::fs::read(&log).unwrap(), vec![0x01, 0x00]);
    let o = cflog(&["expand", "--log", &log, "--specs", &empty, "--out", &back]);
    assert_eq!(code(&o), 1);
    assert!(!w.path("back.trace").exists());

    assert_eq!(code(&cflog(&["compress", "--trace", &tp, "--specs", &empty, "--out", &log])), 0);
    assert_eq!(code(&cflog(&["expand", "--log", &log, "--specs", &empty, "--out", &back])), 0);
    assert_eq!(std::fs::read_to_string(&back).unwrap(), std::fs::read_to_string(&tp).unwrap());
}

#[test]
fn every_policy_output_is_accepted_by_compress() {
    let w = Work::new();
    let trace = generate_trace(&fixtures::branchy(), &WorkloadProfile { steps: 4000, ..WorkloadProfile::branchy(4) });
    let tp = w.trace("b.trace", &trace, Mode::Pair);
    let cfg = fixture_path("branchy");
    for policy in ["top", "minimize", "select", "static"] {
        let (o, specs) = select(&w, policy, &tp, &["--cfg", &cfg]);
        assert_eq!(code(&o), 0, "{policy}: {}", String::from_utf8_lossy(&o.stderr));
        let n = parse_spec_set(&std::fs::read_to_string(&specs).unwrap()).unwrap().len();
        assert!(n >= 1, "{policy}");
        assert_eq!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.contains("est_savings")).count(), n);
        let log = s(&w.path("b.log"));
        let o = cflog(&["compress", "--trace", &tp, "--specs", &specs, "--out", &log]);
        assert_eq!(code(&o), 0, "{policy}");
    }
}

#[test]
fn static_policy_ranks_loop_path_first() {
    let w = Work::new();
    let out = s(&w.path("static.toml"));
    let o =
        cflog(&["select", "--policy", "static", "--cfg", &fixture_path("analyzer"), "--out", &out, "--max-paths", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let specs = parse_spec_set(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let cfg = fixtures::analyzer();
    let loops = cflog::find_loops(&cfg);
    let first = &specs[0];
    for e in first.entries() {
        let cflog::LogElement::RawPair(t) = e else { panic!("pair mode") };
        let b = cfg.blocks().find(|b| b.end == t.src).unwrap();
        assert!(loops.in_loop(b.id));
    }
}

#[test]
fn select_with_tiny_budget_fits() {
    let w = Work::new();
    let tp = w.trace("s.trace", &sensor_trace(4), Mode::Pair);
    let (o, specs) = select(&w, "select", &tp, &["--budget", "20"]);
    assert_eq!(code(&o), 0);
    let specs = parse_spec_set(&std::fs::read_to_string(&specs).unwrap()).unwrap();
    assert!(cflog::blockmem::blockmem_size_bytes(&specs, AddrWidth::W16) <= 20);
    let (o, _) = select(&w, "select", &tp, &["--budget", "20", "--threshold", "0"]);
    assert_eq!(code(&o), 1, "threshold must be positive");
}

fn simulate(w: &Work, extra: &[&str]) -> (i32, SimulateOutput) {
    let key = w.key();
    let cfg = fixture_path("sensor");
    let mut args = vec!["simulate", "--cfg", &cfg, "--profile", "sensor", "--seed", "4", "--key", &key];
    args.extend_from_slice(extra);
    let o = cflog(&args);
    let out = serde_json::from_slice(&o.stdout).unwrap_or_else(|_| panic!("{}", String::from_utf8_lossy(&o.stderr)));
    (code(&o), out)
}

#[test]
fn benign_simulation_beats_baseline() {
    let w = Work::new();
    let (c, out) = simulate(&w, &["--policy", "select", "--max-paths", "2"]);
    assert_eq!(c, 0);
    assert_eq!(out.verdict, "authentic_and_valid");
    assert_eq!(out.specs, 2);
    assert!(out.speculative.slice_count < out.baseline.slice_count, "{out:?}");
    assert!(out.rejects.is_empty());
}

#[test]
fn corrupted_slice_is_an_auth_failure() {
    let w = Work::new();
    let (c, out) = simulate(&w, &["--flip", "1"]);
    assert_eq!(c, 1);
    assert_eq!(out.verdict, "auth_failure(bad_mac)");
    let (c, out) = simulate(&w, &["--drop", "1"]);
    assert_eq!((c, out.verdict.as_str()), (1, "auth_failure(bad_seq)"));
}

#[test]
fn injected_invalid_edge_is_reported() {
    let w = Work::new();
    let (c, out) = simulate(&w, &["--policy", "top", "--inject-invalid", "5"]);
    assert_eq!(c, 2);
    assert_eq!(out.verdict, "authentic_but_invalid_path(5)");
}

#[test]
fn monitor_exit_codes() {
    let w = Work::new();
    let regions = ["--tcb", "0xe000:0xefff", "--blockmem", "0x0200:0x03ff"];
    let cases = [
        ("0xe010 W- 0x0210 -\n", 0, "ok 1 events"),
        ("0x4400 -- - -\n0x4400 W- 0x0500 -\n", 0, "ok 2 events"),
        ("0x4400 -- - -\n0x4400 W- 0x0210 -\n", 2, "reset at 1"),
        ("0xe010 -D - 0x03ff\n", 2, "reset at 0"),
    ];
    for (text, want, msg) in cases {
        let ev = w.put("e.txt", text);
        let mut args = vec!["monitor", "--events", &ev];
        args.extend_from_slice(&regions);
        let o = cflog(&args);
        assert_eq!(code(&o), want, "{text}");
        assert!(String::from_utf8_lossy(&o.stdout).starts_with(msg), "{text}");
    }
    let ev = w.put("e.txt", "0xe010 XX - -\n");
    let mut args = vec!["monitor", "--events", &ev];
    args.extend_from_slice(&regions);
    assert_eq!(code(&cflog(&args)), 1);
}

#[test]
fn stats_rows_and_header() {
    let w = Work::new();
    let o = cflog(&["stats"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), CSV_COLUMNS.join(",") + "\n");

    let tp = w.trace("t.trace", &sensor_trace(6), Mode::Pair);
    let (_, specs) = select(&w, "select", &tp, &["--max-paths", "1"]);
    let log = s(&w.path("t.log"));
    let a = s(&w.path("a.json"));
    let b = s(&w.path("b.json"));
    cflog(&["compress", "--trace", &tp, "--specs", &specs, "--out", &log, "--report", &a]);
    let empty = w.put("empty.toml", "");
    cflog(&["compress", "--trace", &tp, "--specs", &empty, "--out", &log, "--report", &b]);
    let one = cflog(&["stats", &a]);
    let text = String::from_utf8(one.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("a,"));
    let both = String::from_utf8(cflog(&["stats", &a, &b]).stdout).unwrap();
    assert_eq!(both, String::from_utf8(cflog(&["stats", &a, &b]).stdout).unwrap());
    assert_eq!(both.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert!(both.lines().nth(2).unwrap().starts_with("b,"));
    assert!(both.lines().nth(2).unwrap().contains(",0.0000,"));
}
