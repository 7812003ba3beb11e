//! Renders leaderboards and bench scores as plain-text tables or as
//! line-delimited JSON records. Rendering is a pure function of its inputs,
//! so identical state always yields byte-identical reports.

use serde::Serialize;

use crate::bench::BenchScore;
use crate::media::DurationBucket;
use crate::rating::{LeaderboardRow, VerdictHistogram};

/// The four duration-bucket tags in display order.
pub fn bucket_segments() -> Vec<String> {
    DurationBucket::BUCKETS.iter().filter_map(|b| b.tag()).collect()
}

fn fmt2(value: f64) -> String {
    format!("{value:.2}")
}

/// Right-aligns every column except the first, which is left-aligned.
fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut push_row = |cells: &[String]| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i == 0 {
                line.push_str(&format!("{cell:<width$}", width = widths[i]));
            } else {
                line.push_str(&format!("{cell:>width$}", width = widths[i]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    push_row(headers);
    push_row(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in rows {
        push_row(row);
    }
    out
}

/// The main leaderboard: ELO and win rate, then one ELO column per segment.
/// Models missing from a segment render as "-".
pub fn leaderboard_table(rows: &[LeaderboardRow], segments: &[String]) -> String {
    let mut headers = vec!["Model".to_string(), "ELO".to_string(), "Win Rate".to_string()];
    for segment in segments {
        headers.push(segment.strip_prefix("bucket:").unwrap_or(segment).to_string());
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![
                row.model.clone(),
                fmt2(row.elo),
                fmt2(100.0 * row.win_rate),
            ];
            for segment in segments {
                cells.push(
                    row.per_segment
                        .get(segment)
                        .map(|elo| fmt2(*elo))
                        .unwrap_or_else(|| "-".to_string()),
                );
            }
            cells
        })
        .collect();
    render_table(&headers, &body)
}

/// Three score columns per Table-style bench reporting.
pub fn bench_table(scores: &[BenchScore]) -> String {
    let headers = vec![
        "Model".to_string(),
        "vs. Selected".to_string(),
        "vs. Rejected".to_string(),
        "Avg".to_string(),
    ];
    let body: Vec<Vec<String>> = scores
        .iter()
        .map(|s| {
            vec![
                s.model_id.clone(),
                fmt2(s.vs_selected),
                fmt2(s.vs_rejected),
                fmt2(s.avg),
            ]
        })
        .collect();
    render_table(&headers, &body)
}

/// One JSON object per line, machine-readable counterpart to the tables.
pub fn records<T: Serialize>(rows: &[T]) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// One-line verdict tally, e.g. for the end of a campaign run.
pub fn histogram_line(h: &VerdictHistogram) -> String {
    format!(
        "battles: {} (A wins {}, B wins {}, ties {})",
        h.total(),
        h.a_wins,
        h.b_wins,
        h.ties
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn row(model: &str, elo: f64, win_rate: f64, segments: &[(&str, f64)]) -> LeaderboardRow {
        LeaderboardRow {
            model: model.to_string(),
            elo,
            win_rate,
            per_segment: segments
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn leaderboard_renders_two_decimal_columns() {
        let segments = vec!["bucket:8-15s".to_string(), "bucket:15-60s".to_string()];
        let rows = vec![
            row("alpha", 1505.691, 0.815, &[("bucket:8-15s", 1490.0)]),
            row("beta", 994.0, 0.5004, &[("bucket:8-15s", 1000.0), ("bucket:15-60s", 988.123)]),
        ];
        let table = leaderboard_table(&rows, &segments);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("Model"));
        assert!(lines[0].contains("ELO"));
        assert!(lines[0].contains("Win Rate"));
        assert!(lines[0].contains("8-15s"));
        assert!(!lines[0].contains("bucket:"));
        assert!(lines[2].contains("1505.69"));
        assert!(lines[2].contains("81.50"));
        assert!(lines[2].ends_with('-'), "missing segment renders as a dash: {:?}", lines[2]);
        assert!(lines[3].contains("50.04"));
        assert!(lines[3].contains("988.12"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let rows = vec![row("m", 1000.0, 0.5, &[])];
        assert_eq!(leaderboard_table(&rows, &[]), leaderboard_table(&rows, &[]));
    }

    #[test]
    fn bench_table_shows_three_score_columns() {
        let scores = vec![BenchScore {
            model_id: "cand".into(),
            vs_selected: 70.98,
            vs_rejected: 94.118,
            avg: 82.549,
            items_scored: 255,
            items_failed: 0,
        }];
        let table = bench_table(&scores);
        assert!(table.contains("vs. Selected"));
        assert!(table.contains("70.98"));
        assert!(table.contains("94.12"));
        assert!(table.contains("82.55"));
    }

    #[test]
    fn records_emit_one_json_object_per_line() {
        let rows = vec![
            row("alpha", 1204.5, 0.75, &[("bucket:8-15s", 1200.0)]),
            row("beta", 800.25, 0.25, &[]),
        ];
        let text = records(&rows).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let parsed: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(parsed["model"], "alpha");
        assert_eq!(parsed["elo"], 1204.5);
        assert_eq!(parsed["per_segment"]["bucket:8-15s"], 1200.0);
    }

    #[test]
    fn bucket_segments_cover_the_four_ranges_in_order() {
        assert_eq!(
            bucket_segments(),
            vec!["bucket:8-15s", "bucket:15-60s", "bucket:180-600s", "bucket:900-3600s"]
        );
    }

    #[test]
    fn histogram_line_totals() {
        let h = VerdictHistogram {
            a_wins: 5620,
            b_wins: 5941,
            ties: 918,
        };
        assert_eq!(
            histogram_line(&h),
            "battles: 12479 (A wins 5620, B wins 5941, ties 918)"
        );
    }
}
