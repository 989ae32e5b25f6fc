//! Generation-loop behavior: byte-identical replay determinism, the
//! hand-traced admission rule, structural-duplicate rejection, parse-failure
//! skip, trajectory export consistency, and tamper-evident ledgers.

use std::path::Path;

use ttc_core::encoder::{EncoderProvider, ProviderConfig};
use ttc_core::fixtures::{generate, FixtureFamily, FixtureSpec};
use ttc_core::programs::Constants;
use ttc_core::search::{
    export_trajectory, run_search, verify_ledger, ProposerSpec, SearchConfig,
};
use ttc_core::task::Task;

fn fixture_task() -> Task {
    generate(&FixtureSpec {
        seed: 11,
        n_queries: 8,
        n_docs: 16,
        n_topics: 4,
        family: FixtureFamily::Needle,
        ..FixtureSpec::default()
    })
}

/// Ten replay proposals: pipelines of varying quality, one baseline
/// duplicate, one structural duplicate, one parse failure.
fn replay_files(dir: &Path) {
    let programs: Vec<(&str, &str)> = vec![
        (
            "p01",
            "# novelty: sentence maxsim\n# hypothesis: needles hide in sentences\nchannel m = maxsim(granularity=sentence)\nfuse rrf(m)\n",
        ),
        // Canonical form of the baseline already registered as p0.
        ("p02", "fuse rrf(dense)\n"),
        (
            "p03",
            "# novelty: bigram only\nchannel g = bigram()\nfuse rrf(g)\n",
        ),
        (
            "p04",
            "# novelty: lexical hybrid\n# parent: p01\nchannel d = dense()\nchannel m = maxsim(granularity=sentence)\nchannel i = idf_overlap()\nchannel g = bigram()\nfuse rrf(d, m, i, g)\n",
        ),
        ("p05", "channel broken =\n"),
        (
            "p06",
            "# novelty: dual granularity\nchannel p = maxsim(granularity=paragraph)\nchannel s = maxsim(granularity=sentence)\nfuse zmax(p, s)\n",
        ),
        // Structural duplicate of p01 written with different spacing.
        ("p07", "channel  m =  maxsim( granularity = sentence )\nfuse rrf( m )\n"),
        (
            "p08",
            "# novelty: cross-round feedback\nchannel d = dense()\nchannel m = maxsim(granularity=sentence)\nchannel i = idf_overlap()\nchannel g = bigram()\nchannel c = coverage()\nchannel r = rare_term()\nround r1 = rrf(d, m, i, g, c, r)\nround f = rocchio(r1)\nround e = residual(r1)\nfuse rrf(r1, f, e)\n",
        ),
        (
            "p09",
            "# novelty: pair windows\nchannel m = maxsim(granularity=pair)\nfuse rrf(m)\n",
        ),
        (
            "p10",
            "# novelty: averaged granularity\nchannel s = maxsim(granularity=sentence)\nchannel t = topmean(granularity=sentence)\nfuse zmean(s, t)\n",
        ),
    ];
    for (name, source) in programs {
        std::fs::write(dir.join(format!("{name}.ttc")), source).unwrap();
    }
}

fn search_config(replay_dir: &Path) -> SearchConfig {
    SearchConfig {
        generations: 10,
        proposer: ProposerSpec::Replay {
            dir: replay_dir.to_path_buf(),
        },
        seed: 3,
        constants: Constants::default(),
        inspirations: vec!["feedback".into(), "granularity".into()],
    }
}

#[test]
fn replay_search_is_byte_identical_and_admissions_trace() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay");
    std::fs::create_dir_all(&replay).unwrap();
    replay_files(&replay);
    let tasks = vec![fixture_task()];
    let provider = EncoderProvider::new(ProviderConfig::synthetic(64, 5)).unwrap();

    let ledger_a = dir.path().join("a.jsonl");
    let ledger_b = dir.path().join("b.jsonl");
    let outcome_a = run_search(&search_config(&replay), &tasks, &provider, &ledger_a).unwrap();
    let outcome_b = run_search(&search_config(&replay), &tasks, &provider, &ledger_b).unwrap();

    let bytes_a = std::fs::read(&ledger_a).unwrap();
    let bytes_b = std::fs::read(&ledger_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "reruns must reproduce the ledger bytes");
    assert_eq!(outcome_a.frontier, outcome_b.frontier);

    let records = verify_ledger(&ledger_a).unwrap();
    assert_eq!(records.len(), 10, "one record per generation");

    // Hand-trace the strict-improvement rule over the recorded means.
    let mut best = f64::NEG_INFINITY;
    for record in &records {
        if record.status != "ok" {
            assert!(!record.admitted);
            continue;
        }
        let expected = record.mean_delta > 0.0 && record.mean_delta > best.max(0.0);
        assert_eq!(
            record.admitted, expected,
            "generation {}: admission must follow strict improvement",
            record.generation
        );
        if record.admitted {
            best = record.mean_delta;
        }
    }
    // The frontier lists the baseline plus every admitted program, in order.
    let admitted: Vec<&str> = records
        .iter()
        .filter(|r| r.admitted)
        .map(|r| r.program_id.as_str())
        .collect();
    assert_eq!(outcome_a.frontier.len(), admitted.len() + 1);
    assert!(!admitted.is_empty(), "the needle fixture must admit something");

    // Structural failures land where the replay set put them.
    assert_eq!(records[1].status, "failed");
    assert!(records[1].error.as_deref().unwrap().contains("duplicate-structure"));
    assert_eq!(records[4].status, "failed");
    assert!(records[4].error.as_deref().unwrap().contains("parse"));
    assert_eq!(records[6].status, "failed");
    assert!(records[6].error.as_deref().unwrap().contains("duplicate-structure"));

    // Frontier means strictly increase over admitted records.
    let means: Vec<f64> = records
        .iter()
        .filter(|r| r.admitted)
        .map(|r| r.mean_delta)
        .collect();
    for pair in means.windows(2) {
        assert!(pair[1] > pair[0]);
    }
}

#[test]
fn trajectory_matches_ledger_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay");
    std::fs::create_dir_all(&replay).unwrap();
    replay_files(&replay);
    let tasks = vec![fixture_task()];
    let provider = EncoderProvider::new(ProviderConfig::synthetic(64, 5)).unwrap();
    let ledger = dir.path().join("ledger.jsonl");
    let outcome = run_search(&search_config(&replay), &tasks, &provider, &ledger).unwrap();

    let task_order: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
    let csv = export_trajectory(&outcome.records, &task_order);
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(header, format!("generation,program_id,cost,delta:{}", task_order[0]));
    let ok_records: Vec<_> = outcome
        .records
        .iter()
        .filter(|r| r.status == "ok")
        .collect();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), ok_records.len(), "one row per evaluated program");
    for (row, record) in rows.iter().zip(&ok_records) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], record.generation.to_string());
        assert_eq!(fields[1], record.program_id);
        let delta: f64 = fields[3].parse().unwrap();
        assert_eq!(delta, record.per_task_delta[&task_order[0]]);
    }
}

#[test]
fn tampered_ledger_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay");
    std::fs::create_dir_all(&replay).unwrap();
    replay_files(&replay);
    let tasks = vec![fixture_task()];
    let provider = EncoderProvider::new(ProviderConfig::synthetic(64, 5)).unwrap();
    let ledger = dir.path().join("ledger.jsonl");
    run_search(&search_config(&replay), &tasks, &provider, &ledger).unwrap();
    assert!(verify_ledger(&ledger).is_ok());

    let text = std::fs::read_to_string(&ledger).unwrap();
    let tampered = text.replacen("\"mean_delta\":", "\"mean_delta\": 0.99, \"x\":", 1);
    assert_ne!(text, tampered);
    std::fs::write(&ledger, tampered).unwrap();
    let err = verify_ledger(&ledger).unwrap_err();
    assert!(matches!(err, ttc_core::Error::LedgerCorrupt { .. }));
}

#[test]
fn external_command_proposer_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = vec![fixture_task()];
    let provider = EncoderProvider::new(ProviderConfig::synthetic(64, 5)).unwrap();
    // A proposer that drains stdin and emits one fixed proposal.
    let script = dir.path().join("proposer.sh");
    // printf '%s' keeps the backslash-n escapes intact; some shells' echo
    // would expand them into raw newlines and break the JSON.
    std::fs::write(
        &script,
        "#!/bin/sh\ncat > /dev/null\nprintf '%s' '{\"source\": \"channel m = maxsim(granularity=sentence)\\nfuse rrf(m)\\n\", \"novelty\": \"external\", \"hypothesis\": \"works\"}'\n",
    )
    .unwrap();
    let config = SearchConfig {
        generations: 1,
        proposer: ProposerSpec::ExternalCommand {
            command: format!("sh {}", script.display()),
            timeout_secs: 30,
        },
        seed: 3,
        constants: Constants::default(),
        inspirations: vec![],
    };
    let ledger = dir.path().join("ledger.jsonl");
    let outcome = run_search(&config, &tasks, &provider, &ledger).unwrap();
    assert_eq!(outcome.records.len(), 1);
    assert_eq!(
        outcome.records[0].status, "ok",
        "proposer failed: {:?}",
        outcome.records[0].error
    );
    assert_eq!(outcome.records[0].novelty, "external");
}

#[test]
fn http_proposer_round_trips() {
    use std::io::{Read, Write};

    // Minimal HTTP endpoint answering POST /propose with one proposal.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        if let Some(Ok(mut stream)) = listener.incoming().next() {
            let mut buf = Vec::new();
            let mut tmp = [0u8; 4096];
            let header_end = loop {
                let n = stream.read(&mut tmp).unwrap_or(0);
                if n == 0 {
                    return;
                }
                buf.extend_from_slice(&tmp[..n]);
                if let Some(p) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break p + 4;
                }
            };
            let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
            assert!(headers.starts_with("POST /propose"), "{headers}");
            let content_length: usize = headers
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse().ok())?
                })
                .unwrap_or(0);
            while buf.len() < header_end + content_length {
                let n = stream.read(&mut tmp).unwrap_or(0);
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&tmp[..n]);
            }
            let input: serde_json::Value =
                serde_json::from_slice(&buf[header_end..]).unwrap();
            assert!(input["frontier"].is_array());
            assert!(input["history"].is_array());
            let body = serde_json::to_string(&serde_json::json!({
                "source": "channel g = bigram()\nfuse rrf(g)\n",
                "novelty": "over http",
                "hypothesis": "wire works",
            }))
            .unwrap();
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });

    let dir = tempfile::tempdir().unwrap();
    let tasks = vec![fixture_task()];
    let provider = EncoderProvider::new(ProviderConfig::synthetic(64, 5)).unwrap();
    let config = SearchConfig {
        generations: 1,
        proposer: ProposerSpec::Http {
            url: format!("http://{addr}"),
        },
        seed: 3,
        constants: Constants::default(),
        inspirations: vec!["score-distribution analysis".into()],
    };
    let ledger = dir.path().join("ledger.jsonl");
    let outcome = run_search(&config, &tasks, &provider, &ledger).unwrap();
    assert_eq!(outcome.records[0].status, "ok");
    assert_eq!(outcome.records[0].novelty, "over http");
}

#[test]
fn exhausted_replay_keeps_looping_with_failure_records() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay");
    std::fs::create_dir_all(&replay).unwrap();
    std::fs::write(
        replay.join("only.ttc"),
        "channel m = maxsim(granularity=sentence)\nfuse rrf(m)\n",
    )
    .unwrap();
    let tasks = vec![fixture_task()];
    let provider = EncoderProvider::new(ProviderConfig::synthetic(64, 5)).unwrap();
    let mut config = search_config(&replay);
    config.generations = 3;
    let ledger = dir.path().join("ledger.jsonl");
    let outcome = run_search(&config, &tasks, &provider, &ledger).unwrap();
    assert_eq!(outcome.records.len(), 3);
    assert_eq!(outcome.records[0].status, "ok");
    assert_eq!(outcome.records[1].status, "failed");
    assert_eq!(outcome.records[2].status, "failed");
    assert!(outcome.records[1]
        .error
        .as_deref()
        .unwrap()
        .contains("proposer"));
}
