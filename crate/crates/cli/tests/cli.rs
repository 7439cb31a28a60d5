use std::path::Path;
use std::process::{Command, Output};

use infnote_core::chaincore::{generate_keypair, Block};
use infnote_core::simlab::{Profile, Topology, TopologyKind, MIB};
use infnote_core::wire::NodeKind;
use serde_json::Value;

fn infnote(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infnote"))
        .current_dir(cwd)
        .env_remove("INFNOTE_CONFIG")
        .env_remove("INFNOTE_DATA_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn json_ok(cwd: &Path, args: &[&str]) -> Value {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = infnote(cwd, &full);
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn create_chain(cwd: &Path, data: &str, label: &str) -> String {
    let v = json_ok(cwd, &["--data-dir", data, "chain", "create", "--label", label]);
    v["chain_id"].as_str().unwrap().to_string()
}

#[test]
fn created_chain_has_queryable_genesis() {
    let dir = tempfile::tempdir().unwrap();
    let id = create_chain(dir.path(), "d", "forum");
    let v = json_ok(dir.path(), &["--data-dir", "d", "block", "query", &id, "0"]);
    assert_eq!(v["height"], 0);
    assert_eq!(v["prev_hash"], "0".repeat(64));
    let block = Block::from_hex(v["hex"].as_str().unwrap()).unwrap();
    assert_eq!(block.chain_id.to_hex(), id);

    let out = infnote(dir.path(), &["--data-dir", "d", "block", "query", &id, "0"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("height    0"));
}

#[test]
fn missing_block_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let id = create_chain(dir.path(), "d", "forum");
    let out = infnote(dir.path(), &["--data-dir", "d", "block", "query", &id, "999"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));

    let out = infnote(dir.path(), &["--json", "--data-dir", "d", "block", "query", &id, "999"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["error"], "not-found");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(infnote(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(infnote(dir.path(), &["block", "query", "abc"]).status.code(), Some(2));
    assert_eq!(
        infnote(dir.path(), &["block", "query", "abc", "minus"]).status.code(),
        Some(2)
    );
    assert_eq!(infnote(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn keygen_with_seed_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let seed = "11".repeat(32);
    let v = json_ok(dir.path(), &["keygen", "--seed", &seed]);
    let expected = generate_keypair(Some([0x11; 32])).unwrap();
    assert_eq!(v["public_key"], expected.public_key().to_hex());
    assert_eq!(v["chain_id"], expected.chain_id().to_hex());

    let v = json_ok(dir.path(), &["keygen", "--seed", &seed, "--out", "k/owner.key"]);
    assert!(v.get("secret_key").is_none());
    let id = json_ok(
        dir.path(),
        &[
            "--data-dir",
            "d",
            "chain",
            "create",
            "--label",
            "x",
            "--key",
            "k/owner.key",
        ],
    );
    assert_eq!(id["chain_id"], expected.chain_id().to_hex());

    let out = infnote(dir.path(), &["keygen", "--seed", "zz"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn records_are_sealed_into_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let id = create_chain(dir.path(), "d", "forum");
    let post = infnote(
        dir.path(),
        &[
            "--data-dir",
            "d",
            "post",
            "create",
            "--chain",
            &id,
            "--content",
            "hi",
            "--time",
            "3",
        ],
    );
    assert!(post.status.success());
    let name = infnote(
        dir.path(),
        &[
            "--data-dir",
            "d",
            "identity",
            "register",
            "--chain",
            &id,
            "--name",
            "alice",
        ],
    );
    assert!(name.status.success());
    let mut lines = post.stdout.clone();
    lines.extend_from_slice(&name.stdout);
    std::fs::write(dir.path().join("records.jsonl"), lines).unwrap();

    let v = json_ok(
        dir.path(),
        &[
            "--data-dir",
            "d",
            "block",
            "create",
            "--chain",
            &id,
            "--records",
            "records.jsonl",
        ],
    );
    assert_eq!(v["height"], 1);
    assert_eq!(v["records"], 2);
    let q = json_ok(dir.path(), &["--data-dir", "d", "block", "query", &id, "1"]);
    assert_eq!(q["hash"], v["hash"]);

    let other = generate_keypair(Some([0x22; 32])).unwrap();
    std::fs::write(dir.path().join("other.key"), hex_secret(&other)).unwrap();
    let out = infnote(
        dir.path(),
        &[
            "--data-dir",
            "d",
            "block",
            "create",
            "--chain",
            &id,
            "--records",
            "records.jsonl",
            "--key",
            "other.key",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrong-owner"));
}

fn hex_secret(k: &infnote_core::chaincore::KeyPair) -> String {
    k.secret_bytes().iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn export_import_follow_and_drop() {
    let dir = tempfile::tempdir().unwrap();
    let id = create_chain(dir.path(), "a", "forum");
    let v = json_ok(dir.path(), &["--data-dir", "a", "chain", "export", &id, "chain.hex"]);
    assert_eq!(v["blocks"], 1);

    let v = json_ok(dir.path(), &["--data-dir", "b", "chain", "import", "chain.hex"]);
    assert_eq!(v["chain_id"], id);
    assert_eq!(v["appended"], 1);
    let v = json_ok(dir.path(), &["--data-dir", "b", "chain", "import", "chain.hex"]);
    assert_eq!(v["duplicates"], 1);
    let list = json_ok(dir.path(), &["--data-dir", "b", "chain", "list"]);
    assert_eq!(list[0]["chain_id"], id);
    assert_eq!(list[0]["height"], 0);
    assert_eq!(list[0]["status"], "followed");

    let log = dir.path().join("b").join("chains").join(format!("{id}.log"));
    assert!(log.exists());
    let v = json_ok(dir.path(), &["--data-dir", "b", "chain", "drop", &id]);
    assert_eq!(v["purged"], false);
    assert!(log.exists());
    let list = json_ok(dir.path(), &["--data-dir", "b", "chain", "list"]);
    assert_eq!(list[0]["status"], "dropped");
    let v = json_ok(dir.path(), &["--data-dir", "b", "chain", "drop", &id, "--purge-local"]);
    assert_eq!(v["purged"], true);
    assert!(!log.exists());

    let owner = json_ok(dir.path(), &["--data-dir", "a", "chain", "list"])[0]["owner"].clone();
    let v = json_ok(
        dir.path(),
        &[
            "--data-dir",
            "c",
            "chain",
            "follow",
            &id,
            "--owner",
            owner.as_str().unwrap(),
        ],
    );
    assert_eq!(v["status"], "followed");
    let wrong = generate_keypair(Some([0x33; 32])).unwrap().public_key().to_hex();
    let out = infnote(
        dir.path(),
        &["--data-dir", "c", "chain", "follow", &id, "--owner", &wrong],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_resolution_order() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("infnote.toml"), "data_dir = \"local\"\n").unwrap();
    std::fs::write(dir.path().join("env.toml"), "data_dir = \"from-env\"\n").unwrap();
    create_chain(dir.path(), "ignored-by-flag", "x");
    let out = infnote(dir.path(), &["chain", "create", "--label", "y"]);
    assert!(out.status.success());
    assert!(dir.path().join("local").join("owner.key").exists());

    let out = Command::new(env!("CARGO_BIN_EXE_infnote"))
        .current_dir(dir.path())
        .env("INFNOTE_CONFIG", "env.toml")
        .args(["chain", "create", "--label", "z"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env").join("owner.key").exists());

    std::fs::write(dir.path().join("broken.toml"), "nonsense = [").unwrap();
    let out = infnote(dir.path(), &["--config", "broken.toml", "chain", "list"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sim_run_matches_the_analytic_hop_sum() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/linear10.json");
    let csv = dir.path().join("receipts.csv");
    let v = json_ok(
        dir.path(),
        &["sim", "run", scenario.to_str().unwrap(), "--csv", csv.to_str().unwrap()],
    );
    let topology = Topology::build(TopologyKind::Linear, 11, Profile::Wan.params()).unwrap();
    let analytic_ms = topology.analytic_receipt_ns(MIB).into_iter().max().unwrap() as f64 / 1e6;
    let max = v["blocks"][0]["max_latency_ms"].as_f64().unwrap();
    assert!((max - analytic_ms).abs() < 1e-6, "{max} vs {analytic_ms}");
    assert_eq!(v["diameter"], 10);
    let rows = std::fs::read_to_string(csv).unwrap();
    assert_eq!(rows.lines().next(), Some("node_id,block_height,receipt_ms"));
    assert_eq!(rows.lines().count(), 12);
}

#[test]
fn sim_throughput_reports_both_passes() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(dir.path(), &["sim", "throughput", "--blocks", "2"]);
    assert_eq!(v["post_size"], 250);
    assert_eq!(v["blocks"], 2);
    assert!(v["warm"]["posts_per_second"].as_f64().unwrap() > 0.0);
    assert!(v["cold"]["posts_per_second"].as_f64().unwrap() > 0.0);
}

#[test]
fn post_submit_reaches_a_running_node() {
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let key = generate_keypair(Some([0x44; 32])).unwrap();
    let key_path = dir.path().join("owner.key");
    std::fs::write(&key_path, hex_secret(&key)).unwrap();
    let mut cfg = infnote_core::nodekit::NodeConfig {
        kind: NodeKind::Full,
        data_dir: dir.path().join("node"),
        owner_key_file: Some(key_path),
        block_interval_ms: 3_600_000,
        api_port: 0,
        ..Default::default()
    };
    cfg.peernet.listen_port = 0;
    let node = rt.block_on(infnote_node::run_node(cfg)).unwrap();
    let base = format!("http://{}", node.api_addr().unwrap());
    let chain = key.chain_id().to_hex();

    let v = json_ok(
        dir.path(),
        &[
            "post",
            "create",
            "--chain",
            &chain,
            "--content",
            "hello",
            "--key",
            "owner.key",
            "--submit",
            &base,
        ],
    );
    assert_eq!(v["submitted"]["accepted"], 1);
    assert_eq!(v["record"]["kind"], "post");
    assert_eq!(rt.block_on(node.pending(key.chain_id())).unwrap(), 1);

    let unknown = "ab".repeat(32);
    let out = infnote(
        dir.path(),
        &[
            "post",
            "create",
            "--chain",
            &unknown,
            "--content",
            "x",
            "--key",
            "owner.key",
            "--submit",
            &base,
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown-chain"));
    rt.block_on(node.stop()).unwrap();
}
