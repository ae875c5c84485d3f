use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowscope::capture::{parse_headers, read_pcap_file, ParsedHeaders};
use flowscope::parameters::{sample, Aggregator, ParameterId};
use flowscope::signatures::{builtin_catalog, frequency_table, scan_stream, write_alerts_jsonl, ScanConfig};
use flowscope::synthgen::{generate_file, AttackEpisode, TrafficProfile};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowscope")).args(args).current_dir(dir).output().expect("spawn")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn corpus(dir: &Path) -> Vec<(u64, ParsedHeaders)> {
    let profile = TrafficProfile { seed: 3, duration_s: 60.0, ..TrafficProfile::default() };
    let eps = [AttackEpisode::new("LAND", 10.0, 20.0), AttackEpisode::new("SYN_FLOOD", 30.0, 40.0)];
    generate_file(&profile, &eps, dir.join("c.pcap")).unwrap();
    let (_, records) = read_pcap_file(dir.join("c.pcap")).unwrap();
    records.iter().map(|r| (r.timestamp_us, parse_headers(r).unwrap())).collect()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["extract", "--pcap", "x.pcap"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["extract", "--pcap", "x.pcap", "--param", "NOPE"], dir.path()).status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("extract"));
}

#[test]
fn bad_input_exits_two_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.pcap"), b"definitely not a capture file").unwrap();
    let out = run(&["scan", "--pcap", "junk.pcap"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("junk.pcap"), "{err}");

    let out = run(&["scan", "--pcap", "missing.pcap"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_without_out_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out = run(&["extract", "--pcap", "c.pcap", "--param", "IP_DST", "--emit-plot", "p.gp"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("p.gp").exists());
}

#[test]
fn extract_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let pk = corpus(dir.path());
    let out = ok(
        &["extract", "--pcap", "c.pcap", "--param", "TCP_DPORT", "--tau", "0.5", "--agg", "mean", "--fill", "-1"],
        dir.path(),
    );
    let mut want = Vec::new();
    sample(&pk, ParameterId::TcpDport, 0.5, Aggregator::Mean, -1.0).unwrap().write_csv(&mut want).unwrap();
    assert_eq!(out.stdout, want);
}

#[test]
fn scan_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let pk = corpus(dir.path());
    let out = ok(&["scan", "--pcap", "c.pcap", "--syn-k", "50"], dir.path());
    let cfg = ScanConfig { syn_threshold: 50, ..ScanConfig::default() };
    let alerts = scan_stream(&builtin_catalog(), &cfg, pk.iter().map(|(t, h)| (*t, h))).unwrap();
    assert!(alerts.iter().any(|a| a.rule == "LAND") && alerts.iter().any(|a| a.rule == "SYN_FLOOD"));
    let mut want = Vec::new();
    write_alerts_jsonl(&mut want, &alerts).unwrap();
    assert_eq!(out.stdout, want);

    let csv = ok(&["scan", "--pcap", "c.pcap", "--format", "csv"], dir.path());
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("rule,ts_us,src,dst,detail\n"), "{text}");
}

#[test]
fn freq_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["freq"], dir.path());
    let mut want = Vec::new();
    frequency_table(&builtin_catalog()).write_csv(&mut want).unwrap();
    assert_eq!(out.stdout, want);
}

#[test]
fn gen_manifest_lists_injected_packets() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        &[
            "gen",
            "--seed",
            "1",
            "--duration",
            "20",
            "--episode",
            "smurf:5:6",
            "--out",
            "g.pcap",
            "--manifest",
            "m.json",
        ],
        dir.path(),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 5);
    assert!(entries.iter().all(|e| e["kind"] == "SMURF"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("5 attack packets"));
}

#[test]
fn baseline_then_monitor() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--seed", "11", "--duration", "600", "--out", "ref.pcap"], d);
    ok(&["gen", "--seed", "12", "--duration", "600", "--episode", "SYN_FLOOD:310:590", "--out", "obs.pcap"], d);
    ok(
        &[
            "baseline",
            "--pcap",
            "ref.pcap",
            "--tau",
            "5",
            "--window-len",
            "60",
            "--param",
            "IP_PROTOCOL",
            "--out",
            "b.json",
        ],
        d,
    );
    fs::write(
        d.join("plan.json"),
        r#"[{"label": "slow", "tau": 5, "window_len": 60, "parameters": ["IP_PROTOCOL"], "baseline": "b.json"},
            {"label": "fast", "tau": 0.5, "window_len": 60, "parameters": ["IP_PROTOCOL"]}]"#,
    )
    .unwrap();
    ok(
        &[
            "monitor",
            "--pcap",
            "obs.pcap",
            "--plan",
            "plan.json",
            "--out",
            "r.jsonl",
            "--alerts",
            "a.jsonl",
            "--cascade",
            "90",
        ],
        d,
    );
    let reports: Vec<serde_json::Value> =
        fs::read_to_string(d.join("r.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let slow: Vec<_> = reports.iter().filter(|r| r["label"] == "slow").collect();
    assert_eq!(slow.len(), 2);
    assert!(slow.iter().all(|r| r["scores"]["IP_PROTOCOL"].is_number()));
    assert_eq!(reports.iter().filter(|r| r["label"] == "fast").count(), 20);
    let alerts = fs::read_to_string(d.join("a.jsonl")).unwrap();
    assert!(alerts.lines().any(|l| l.contains("\"SYN_FLOOD\"")));
}

#[test]
fn monitor_rejects_unknown_plan_fields() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    fs::write(
        dir.path().join("plan.json"),
        r#"[{"label": "x", "tau": 1, "window_len": 10, "parameters": ["IP_DST"], "colour": 1}]"#,
    )
    .unwrap();
    let out = run(&["monitor", "--pcap", "c.pcap", "--plan", "plan.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan.json"));
}
