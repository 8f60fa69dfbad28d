//! Report emission: one CSV row per variant with six metric columns and a
//! significance star on the best variant when it beats the second best, plus
//! full-precision JSON with per-seed arrays.

use std::path::Path;

use crate::error::Result;
use crate::eval::stats::paired_t_test;
use crate::eval::EvalReport;
use crate::pipeline::config::canonical_json;

/// Metric columns where the best row earns a star: best vs second-best paired
/// t-test at alpha = 0.05.
fn starred_cells(reports: &[EvalReport], metric: &str) -> Vec<bool> {
    let mut stars = vec![false; reports.len()];
    if reports.len() < 2 {
        return stars;
    }
    let mut ranked: Vec<(usize, f64)> = reports
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.mean(metric).map(|m| (i, m)))
        .collect();
    if ranked.len() < 2 {
        return stars;
    }
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let best = ranked[0].0;
    let second = ranked[1].0;
    let a = &reports[best].metrics[metric].per_seed;
    let b = &reports[second].metrics[metric].per_seed;
    if a.len() == b.len() {
        if let Ok(test) = paired_t_test(a, b) {
            stars[best] = test.significant;
        }
    }
    stars
}

/// CSV table: `variant,R@5,N@5,R@10,N@10,R@20,N@20`, full-precision values,
/// `*` suffix on significant best cells.
pub fn render_csv(reports: &[EvalReport]) -> Result<String> {
    let columns = EvalReport::metric_names();
    let mut out = String::from("variant");
    for c in &columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    let stars: Vec<Vec<bool>> = columns.iter().map(|c| starred_cells(reports, c)).collect();
    for (row, report) in reports.iter().enumerate() {
        out.push_str(&report.variant);
        for (ci, c) in columns.iter().enumerate() {
            out.push(',');
            match report.mean(c) {
                Some(mean) => {
                    out.push_str(&format!("{mean}"));
                    if stars[ci][row] {
                        out.push('*');
                    }
                }
                None => out.push_str("NA"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn render_json(reports: &[EvalReport]) -> Result<String> {
    canonical_json(&reports.to_vec())
}

/// Writes the CSV table; the JSON twin goes next to it with the same stem.
pub fn write_report_files(csv_path: &Path, reports: &[EvalReport]) -> Result<()> {
    if let Some(parent) = csv_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(csv_path, render_csv(reports)?)?;
    Ok(())
}

/// Parses a rendered CSV back into (variant, metric means) rows.
pub fn parse_csv(text: &str) -> Vec<(String, Vec<(String, f64, bool)>)> {
    let mut lines = text.lines();
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').collect(),
        None => return Vec::new(),
    };
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let mut metrics = Vec::new();
        for (name, cell) in header.iter().skip(1).zip(cells.iter().skip(1)) {
            let starred = cell.ends_with('*');
            let raw = cell.trim_end_matches('*');
            if let Ok(v) = raw.parse::<f64>() {
                metrics.push((name.to_string(), v, starred));
            }
        }
        rows.push((cells[0].to_string(), metrics));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::report::build_report;
    use crate::eval::{SeedMetrics, EVAL_KS};

    fn mk(r: f64) -> SeedMetrics {
        SeedMetrics {
            recall: EVAL_KS.iter().map(|k| (*k, r)).collect(),
            ndcg: EVAL_KS.iter().map(|k| (*k, r / 2.0)).collect(),
        }
    }

    #[test]
    fn single_variant_renders_header_and_one_row() {
        let seeds = [0u64, 1, 2];
        let report =
            build_report("Order6", &seeds, &[mk(0.5), mk(0.52), mk(0.48)], None).unwrap();
        let csv = render_csv(&[report]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "variant,R@5,N@5,R@10,N@10,R@20,N@20");
        assert!(lines[1].starts_with("Order6,"));
        assert!(!csv.contains('*'));
    }

    #[test]
    fn star_appears_iff_significant() {
        let seeds = [0u64, 1, 2, 3, 4];
        let base = build_report(
            "base",
            &seeds,
            &[mk(0.50), mk(0.52), mk(0.48), mk(0.50), mk(0.51)],
            None,
        )
        .unwrap();
        let better = build_report(
            "better",
            &seeds,
            &[mk(0.60), mk(0.63), mk(0.59), mk(0.61), mk(0.62)],
            None,
        )
        .unwrap();
        let csv = render_csv(&[base.clone(), better.clone()]).unwrap();
        let rows = parse_csv(&csv);
        let better_row = rows.iter().find(|(v, _)| v == "better").unwrap();
        assert!(better_row.1.iter().all(|(_, _, starred)| *starred));
        let base_row = rows.iter().find(|(v, _)| v == "base").unwrap();
        assert!(base_row.1.iter().all(|(_, _, starred)| !*starred));

        // indistinguishable variants earn no star
        let tied = build_report(
            "tied",
            &seeds,
            &[mk(0.50), mk(0.52), mk(0.48), mk(0.50), mk(0.51)],
            None,
        )
        .unwrap();
        let csv = render_csv(&[base, tied]).unwrap();
        assert!(!csv.contains('*'));
    }

    #[test]
    fn csv_values_match_json_means_exactly() {
        let seeds = [0u64, 1, 2];
        let report = build_report(
            "Order6",
            &seeds,
            &[mk(1.0 / 3.0), mk(0.7231), mk(0.5)],
            None,
        )
        .unwrap();
        let csv = render_csv(std::slice::from_ref(&report)).unwrap();
        let json = render_json(std::slice::from_ref(&report)).unwrap();
        let parsed: Vec<EvalReport> = serde_json::from_str(&json).unwrap();
        let rows = parse_csv(&csv);
        for (name, value, _) in &rows[0].1 {
            let mean = parsed[0].mean(name).unwrap();
            assert!((value - mean).abs() < 1e-9, "{name}: {value} vs {mean}");
        }
    }
}
