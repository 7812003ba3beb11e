//! End-to-end tests of the `arena` binary: the full pipeline against a
//! scripted corpus, the exit-code contract, storage locking, and the bench
//! flows.

mod common;

use std::fs;
use std::path::Path;

use common::{assert_code, assert_success, run_arena, standard_bed, stderr, stdout};

use arena_core::store::{replay, EventLogWriter};

#[test]
fn full_pipeline_runs_and_reports() {
    let bed = standard_bed(11);

    let manifest = bed.manifest.to_str().unwrap().to_string();
    let out = run_arena(&bed.config_path, &["ingest", "--manifest", &manifest]);
    assert_success(&out);
    assert!(stdout(&out).contains("registered 4 videos (0 already present)"));

    let again = run_arena(&bed.config_path, &["ingest"]);
    assert_success(&again);
    assert!(stdout(&again).contains("registered 0 videos (4 already present)"));

    let sim = run_arena(&bed.config_path, &["simulate"]);
    assert_success(&sim);
    assert!(stdout(&sim).contains("created 12 personas and 12 questions across 4 videos"));
    let sim_again = run_arena(&bed.config_path, &["simulate"]);
    assert_success(&sim_again);
    assert!(stdout(&sim_again).contains("created 0 personas and 0 questions across 4 videos"));

    let battle = run_arena(&bed.config_path, &["battle", "--target", "30"]);
    assert_success(&battle);
    let battle_out = stdout(&battle);
    assert!(
        battle_out.contains("scheduled 30 battles: 30 recorded, 0 failed"),
        "unexpected battle output:\n{battle_out}"
    );
    assert!(battle_out.contains("battles: 30 ("));

    let rank = run_arena(&bed.config_path, &["rank"]);
    assert_success(&rank);
    let table = stdout(&rank);
    let pos = |model: &str| table.find(model).unwrap_or_else(|| panic!("{model} missing:\n{table}"));
    assert!(pos("s1") < pos("s2"), "s1 must outrank s2:\n{table}");
    assert!(pos("s2") < pos("s3"), "s2 must outrank s3:\n{table}");

    let rank_again = run_arena(&bed.config_path, &["rank"]);
    assert_eq!(table, stdout(&rank_again), "ranking must be reproducible");

    let records = run_arena(&bed.config_path, &["rank", "--format", "records"]);
    assert_success(&records);
    let lines: Vec<serde_json::Value> = stdout(&records)
        .lines()
        .map(|l| serde_json::from_str(l).expect("each record line is JSON"))
        .collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|v| v.get("model").is_some() && v.get("elo").is_some()));

    let filtered = run_arena(&bed.config_path, &["rank", "--filter", "segment=gen:0"]);
    assert_success(&filtered);
    let filtered_out = stdout(&filtered);
    for model in ["s1", "s2", "s3"] {
        assert!(filtered_out.contains(model), "{model} missing:\n{filtered_out}");
    }

    let evolve = run_arena(&bed.config_path, &["evolve", "--rounds", "1"]);
    assert_success(&evolve);
    assert!(stdout(&evolve).contains("round 1:"), "got:\n{}", stdout(&evolve));

    let resume = run_arena(&bed.config_path, &["battle", "--target", "40"]);
    assert_success(&resume);
    let resume_out = stdout(&resume);
    assert!(resume_out.contains("resumed: 30 battles were already recorded"));
    assert!(resume_out.contains("scheduled 10 battles: 10 recorded, 0 failed"));

    let report = run_arena(&bed.config_path, &["report"]);
    assert_success(&report);
    let report_out = stdout(&report);
    assert!(report_out.contains("Arena leaderboard"));
    assert!(report_out.contains("battles: 40 ("));
}

#[test]
fn identical_seeds_reproduce_ratings_across_workspaces() {
    // Question ids hash workspace-local paths, so segment columns may be
    // sliced differently between two beds; the overall ratings and win
    // rates must still agree exactly.
    let run = |seed: u64| -> Vec<(String, String, String)> {
        let bed = standard_bed(seed);
        assert_success(&run_arena(&bed.config_path, &["ingest"]));
        assert_success(&run_arena(&bed.config_path, &["simulate"]));
        assert_success(&run_arena(&bed.config_path, &["battle", "--target", "24"]));
        let rank = run_arena(&bed.config_path, &["rank", "--format", "records"]);
        assert_success(&rank);
        stdout(&rank)
            .lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                (
                    v["model"].to_string(),
                    v["elo"].to_string(),
                    v["win_rate"].to_string(),
                )
            })
            .collect()
    };
    assert_eq!(run(123), run(123));
}

#[test]
fn missing_or_malformed_configs_are_usage_errors() {
    let missing = run_arena(Path::new("/definitely/not/here/arena.toml"), &["rank"]);
    assert_code(&missing, 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "storage_root = [unclosed").unwrap();
    assert_code(&run_arena(&bad, &["rank"]), 2);

    let unknown = dir.path().join("unknown.toml");
    let body = common::config_toml(&dir.path().join("store"), None, 1);
    fs::write(&unknown, format!("surprise = true\n{body}")).unwrap();
    assert_code(&run_arena(&unknown, &["rank"]), 2);
}

#[test]
fn empty_logs_and_bad_filters_are_reported() {
    let bed = standard_bed(3);

    let rank = run_arena(&bed.config_path, &["rank"]);
    assert_code(&rank, 3);
    assert!(
        stderr(&rank).contains("EMPTY_LOG"),
        "stderr was:\n{}",
        stderr(&rank)
    );

    let report = run_arena(&bed.config_path, &["report"]);
    assert_code(&report, 3);
    assert!(stderr(&report).contains("EMPTY_LOG"));

    assert_code(&run_arena(&bed.config_path, &["rank", "--filter", "bucket=8-15s"]), 2);
    assert_code(&run_arena(&bed.config_path, &["rank", "--filter", "segment="]), 2);
}

#[test]
fn pipeline_preconditions_fail_in_order() {
    let bed = standard_bed(4);

    let battle = run_arena(&bed.config_path, &["battle", "--target", "5"]);
    assert_code(&battle, 3);
    assert!(stderr(&battle).contains("run simulate first"));

    let simulate = run_arena(&bed.config_path, &["simulate"]);
    assert_code(&simulate, 3);
    assert!(stderr(&simulate).contains("run ingest first"));

    let evolve = run_arena(&bed.config_path, &["evolve"]);
    assert_code(&evolve, 3);
    assert!(stderr(&evolve).contains("run battle first"));

    assert_success(&run_arena(&bed.config_path, &["ingest"]));
    let battle = run_arena(&bed.config_path, &["battle", "--target", "5"]);
    assert_code(&battle, 3);
    assert!(stderr(&battle).contains("run simulate first"));

    let zero = run_arena(&bed.config_path, &["battle", "--target", "0"]);
    assert_code(&zero, 2);
    assert!(stderr(&zero).contains("target battle count is 0"));
}

#[test]
fn a_pool_of_one_cannot_battle() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_corpus(dir.path());
    let storage = dir.path().join("store");
    let config_path = dir.path().join("arena.toml");
    fs::write(
        &config_path,
        format!(
            r#"storage_root = {storage:?}
registry = {manifest:?}

[[pool]]
model_id = "only"
kind = "scripted"
script = {{ profile = "contestant", strength = 1 }}

[examiner]
model_id = "examiner"
kind = "scripted"
script = {{ profile = "examiner" }}

[judge]
model_id = "judge"
kind = "scripted"
script = {{ profile = "judge_prefer_longer" }}
"#,
            storage = storage.display().to_string(),
            manifest = manifest.display().to_string(),
        ),
    )
    .unwrap();

    assert_success(&run_arena(&config_path, &["ingest"]));
    assert_success(&run_arena(&config_path, &["simulate"]));
    let battle = run_arena(&config_path, &["battle", "--target", "5"]);
    assert_code(&battle, 3);
    assert!(
        stderr(&battle).contains("at least 2 contestants"),
        "stderr was:\n{}",
        stderr(&battle)
    );
}

#[test]
fn corrupt_log_lines_fail_loudly() {
    let bed = standard_bed(5);
    assert_success(&run_arena(&bed.config_path, &["ingest"]));
    assert_success(&run_arena(&bed.config_path, &["simulate"]));
    assert_success(&run_arena(&bed.config_path, &["battle", "--target", "10"]));

    let log_path = bed.storage_root.join("events.log");
    let text = fs::read_to_string(&log_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    assert!(lines.len() > 2);
    let tampered = &mut lines[1];
    let first = tampered.remove(0);
    tampered.insert(0, if first == 'a' { 'b' } else { 'a' });
    fs::write(&log_path, lines.join("\n") + "\n").unwrap();

    let rank = run_arena(&bed.config_path, &["rank"]);
    assert_code(&rank, 3);
    assert!(
        stderr(&rank).contains("corrupt record"),
        "stderr was:\n{}",
        stderr(&rank)
    );
}

#[test]
fn writers_exclude_each_other_but_readers_pass() {
    let bed = standard_bed(6);
    assert_success(&run_arena(&bed.config_path, &["ingest"]));
    assert_success(&run_arena(&bed.config_path, &["simulate"]));
    assert_success(&run_arena(&bed.config_path, &["battle", "--target", "6"]));

    let held = EventLogWriter::open(&bed.storage_root).unwrap();
    let blocked = run_arena(&bed.config_path, &["battle", "--target", "12"]);
    assert_code(&blocked, 3);
    assert!(
        stderr(&blocked).contains("locked by another process"),
        "stderr was:\n{}",
        stderr(&blocked)
    );
    assert_success(&run_arena(&bed.config_path, &["rank"]));
    drop(held);

    assert_success(&run_arena(&bed.config_path, &["battle", "--target", "12"]));
}

fn write_items(dir: &Path) -> std::path::PathBuf {
    let long_reference = "The clip opens on a wide establishing shot, then follows the main \
        subject through three distinct scenes; along the way the editing rhythm slows, the \
        lighting shifts from cool to warm, and the closing frame mirrors the opening \
        composition to signal that the journey has come full circle, which is the detail \
        most summaries miss and the one the question is really probing for."
        .to_string();
    let rows = [
        serde_json::json!({
            "item_id": "item-01",
            "video_id": "clip-short",
            "question": "What actually happens across the clip, start to finish?",
            "selected_answer": long_reference,
            "rejected_answer": "Things happen.",
            "source_battle": "human-round-1"
        }),
        serde_json::json!({
            "item_id": "item-02",
            "video_id": "clip-short",
            "question": "How does the framing change over time?",
            "selected_answer": long_reference,
            "rejected_answer": "It does not.",
            "source_battle": "human-round-2"
        }),
    ];
    let path = dir.join("items.jsonl");
    let body: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn bench_scores_items_and_resumes() {
    let bed = standard_bed(7);
    assert_success(&run_arena(&bed.config_path, &["ingest"]));
    let items = write_items(bed.dir.path());
    let items_arg = items.to_str().unwrap();

    let first = run_arena(&bed.config_path, &["bench", "--model", "s3", "--items", items_arg]);
    assert_success(&first);
    let table = stdout(&first);
    // The scripted candidate writes a mid-length answer: longer than either
    // terse rejected reference, shorter than the detailed selected one.
    assert!(table.contains("s3"), "table was:\n{table}");
    assert!(table.contains("0.00"), "table was:\n{table}");
    assert!(table.contains("100.00"), "table was:\n{table}");
    assert!(table.contains("50.00"), "table was:\n{table}");

    let second = run_arena(&bed.config_path, &["bench", "--model", "s3", "--items", items_arg]);
    assert_success(&second);
    assert_eq!(stdout(&second), table, "banked scores must reproduce the table");
    assert!(
        stderr(&second).contains("resumed: 2 items were already scored"),
        "stderr was:\n{}",
        stderr(&second)
    );

    let report = run_arena(&bed.config_path, &["report"]);
    assert_success(&report);
    let report_out = stdout(&report);
    assert!(report_out.contains("Bench scores"), "report was:\n{report_out}");
    assert!(!report_out.contains("Arena leaderboard"), "no battles were run");

    let records = run_arena(
        &bed.config_path,
        &["bench", "--model", "s3", "--items", items_arg, "--format", "records"],
    );
    assert_success(&records);
    let row: serde_json::Value = serde_json::from_str(stdout(&records).trim()).unwrap();
    assert_eq!(row["model_id"], "s3");
    assert_eq!(row["items_scored"], 2);
}

#[test]
fn bench_flag_and_model_validation() {
    let bed = standard_bed(8);
    let items = write_items(bed.dir.path());
    let items_arg = items.to_str().unwrap();

    let unknown = run_arena(&bed.config_path, &["bench", "--model", "nope", "--items", items_arg]);
    assert_code(&unknown, 2);
    assert!(stderr(&unknown).contains("not in the pool"));

    assert_code(&run_arena(&bed.config_path, &["bench", "--model", "s1"]), 2);
    assert_code(
        &run_arena(
            &bed.config_path,
            &["bench", "--model", "s1", "--items", items_arg, "--verdicts", items_arg],
        ),
        2,
    );
}

#[test]
fn bench_imports_human_verdicts_and_skips_ties() {
    let bed = standard_bed(9);
    assert_success(&run_arena(&bed.config_path, &["ingest"]));
    assert_success(&run_arena(&bed.config_path, &["simulate"]));
    assert_success(&run_arena(&bed.config_path, &["battle", "--target", "10"]));

    let state = replay(&bed.storage_root).unwrap();
    let battle_ids: Vec<&String> = state.battles.keys().take(3).collect();
    assert_eq!(battle_ids.len(), 3);
    let verdicts = bed.dir.path().join("verdicts.jsonl");
    fs::write(
        &verdicts,
        format!(
            "{}\n{}\n{}\n",
            serde_json::json!({"battle_id": battle_ids[0], "winner": "a"}),
            serde_json::json!({"battle_id": battle_ids[1], "winner": "b"}),
            serde_json::json!({"battle_id": battle_ids[2], "winner": "tie"}),
        ),
    )
    .unwrap();
    let verdicts_arg = verdicts.to_str().unwrap();

    let bench = run_arena(&bed.config_path, &["bench", "--model", "s3", "--verdicts", verdicts_arg]);
    assert_success(&bench);
    assert!(
        stderr(&bench).contains("skipped 1 tie-labeled rows"),
        "stderr was:\n{}",
        stderr(&bench)
    );
    let records = run_arena(
        &bed.config_path,
        &["bench", "--model", "s3", "--verdicts", verdicts_arg, "--format", "records"],
    );
    assert_success(&records);
    let row: serde_json::Value = serde_json::from_str(stdout(&records).trim()).unwrap();
    assert_eq!(row["items_scored"], 2, "tie rows never become items");

    let report = run_arena(&bed.config_path, &["report"]);
    assert_success(&report);
    let report_out = stdout(&report);
    assert!(report_out.contains("Arena leaderboard"));
    assert!(report_out.contains("Bench scores"));

    let bogus = bed.dir.path().join("bogus.jsonl");
    fs::write(&bogus, "{\"battle_id\": \"no-such-battle\", \"winner\": \"a\"}\n").unwrap();
    let missing = run_arena(
        &bed.config_path,
        &["bench", "--model", "s3", "--verdicts", bogus.to_str().unwrap()],
    );
    assert_code(&missing, 3);
    assert!(stderr(&missing).contains("unknown battle"));
}

#[test]
fn bench_judging_failures_are_backend_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_corpus(dir.path());
    let storage = dir.path().join("store");
    let config_path = dir.path().join("arena.toml");
    let standard = common::config_toml(&storage, Some(&manifest), 10);
    let broken_judge = standard.replace(
        "script = { profile = \"judge_prefer_longer\" }",
        "script = { profile = \"canned\", text = \"no verdict to be found here\" }",
    );
    assert_ne!(standard, broken_judge);
    fs::write(&config_path, broken_judge).unwrap();

    assert_success(&run_arena(&config_path, &["ingest"]));
    let items = write_items(dir.path());
    let bench = run_arena(
        &config_path,
        &["bench", "--model", "s1", "--items", items.to_str().unwrap()],
    );
    assert_code(&bench, 4);
    assert!(
        stderr(&bench).contains("all 2 items failed"),
        "stderr was:\n{}",
        stderr(&bench)
    );
}
