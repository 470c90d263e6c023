use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ranking::Mode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedQuery {
    pub query_id: String,
    pub error: String,
}

/// Aggregate metrics for one (mode, alpha, beta) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset_name: String,
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    pub query_count: usize,
    pub recall_at: BTreeMap<usize, f64>,
    pub map_at: BTreeMap<usize, f64>,
    pub recall_sub_at: BTreeMap<usize, f64>,
    /// Mean seconds per query: network time of cache misses plus scoring.
    /// `None` when timing was not recorded.
    pub per_query_infer_time_s: Option<f64>,
    /// Descriptions generated over the network (cache misses).
    pub total_mllm_calls: u64,
    /// HTTP requests behind those descriptions, retries included.
    pub http_attempts: u64,
    pub failed_queries: Vec<FailedQuery>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Named metric lookup: `recall@K`, `map@K` or `recall_sub@K`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        let (family, k) = name.split_once('@')?;
        let k: usize = k.parse().ok()?;
        match family {
            "recall" | "r" => self.recall_at.get(&k).copied(),
            "map" => self.map_at.get(&k).copied(),
            "recall_sub" | "rsub" => self.recall_sub_at.get(&k).copied(),
            _ => None,
        }
    }

    /// Every metric this report carries, in table order.
    pub fn metric_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.recall_at.keys().map(|k| format!("recall@{k}")));
        out.extend(self.map_at.keys().map(|k| format!("map@{k}")));
        out.extend(self.recall_sub_at.keys().map(|k| format!("recall_sub@{k}")));
        out
    }
}

fn short_name(metric: &str) -> String {
    metric
        .replace("recall_sub@", "Rsub@")
        .replace("recall@", "R@")
        .replace("map@", "mAP@")
}

/// Renders reports as an aligned text table; metrics are shown as percentages.
pub fn text_table(reports: &[MetricReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let metrics = first.metric_names();
    let mut header = vec![
        "dataset".to_string(),
        "mode".to_string(),
        "alpha".to_string(),
        "beta".to_string(),
    ];
    header.extend(metrics.iter().map(|m| short_name(m)));
    header.extend(["time(s)".to_string(), "calls".to_string(), "failed".to_string()]);

    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![
            r.dataset_name.clone(),
            r.mode.to_string(),
            format!("{:.3}", r.alpha),
            format!("{:.3}", r.beta),
        ];
        row.extend(
            metrics
                .iter()
                .map(|m| r.metric(m).map_or("-".into(), |v| format!("{:.2}", v * 100.0))),
        );
        row.push(r.per_query_infer_time_s.map_or("-".into(), |t| format!("{t:.4}")));
        row.push(r.total_mllm_calls.to_string());
        row.push(r.failed_queries.len().to_string());
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c < 2 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// An alpha-by-beta grid of reports, row-major in alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub dataset_name: String,
    pub mode: Mode,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub cells: Vec<MetricReport>,
}

impl SweepReport {
    pub fn cell(&self, alpha_index: usize, beta_index: usize) -> &MetricReport {
        &self.cells[alpha_index * self.betas.len() + beta_index]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn text_table(&self) -> String {
        text_table(&self.cells)
    }

    /// Heatmap of one metric over the grid: alpha down, beta across.
    pub fn heatmap_svg(&self, metric: &str) -> Option<String> {
        let values: Vec<f64> = self.cells.iter().map(|c| c.metric(metric)).collect::<Option<_>>()?;
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let span = if hi > lo { hi - lo } else { 1.0 };

        const CELL: usize = 48;
        const LEFT: usize = 64;
        const TOP: usize = 40;
        let width = LEFT + CELL * self.betas.len() + 16;
        let height = TOP + CELL * self.alphas.len() + 40;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="16" font-size="13">{} {} ({})</text>"#,
            self.dataset_name,
            short_name(metric),
            self.mode
        );
        for (bi, b) in self.betas.iter().enumerate() {
            let x = LEFT + bi * CELL + CELL / 2;
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="middle">{b:.2}</text>"#,
                TOP - 6
            );
        }
        for (ai, a) in self.alphas.iter().enumerate() {
            let y = TOP + ai * CELL + CELL / 2 + 4;
            let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{a:.2}</text>"#, LEFT - 6);
            for bi in 0..self.betas.len() {
                let v = values[ai * self.betas.len() + bi];
                let t = (v - lo) / span;
                // White to dark blue.
                let r = (255.0 - 215.0 * t) as u8;
                let g = (255.0 - 155.0 * t) as u8;
                let bl = (255.0 - 75.0 * t) as u8;
                let (x, y) = (LEFT + bi * CELL, TOP + ai * CELL);
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{r:02x}{g:02x}{bl:02x}" stroke="#ffffff"/>"##
                );
                let fill = if t > 0.6 { "#ffffff" } else { "#000000" };
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{fill}">{:.1}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4,
                    v * 100.0
                );
            }
        }
        let base = TOP + CELL * self.alphas.len();
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">beta</text>"#,
            LEFT + CELL * self.betas.len() / 2,
            base + 24
        );
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">alpha</text>"#,
            TOP + CELL * self.alphas.len() / 2,
            TOP + CELL * self.alphas.len() / 2
        );
        svg.push_str("</svg>\n");
        Some(svg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(mode: Mode, r1: f64) -> MetricReport {
        MetricReport {
            dataset_name: "toy".into(),
            mode,
            alpha: 0.1,
            beta: 0.2,
            query_count: 4,
            recall_at: BTreeMap::from([(1, r1), (5, 1.0)]),
            map_at: BTreeMap::from([(5, 0.25)]),
            recall_sub_at: BTreeMap::new(),
            per_query_infer_time_s: None,
            total_mllm_calls: 0,
            http_attempts: 0,
            failed_queries: vec![],
        }
    }

    #[test]
    fn metric_lookup() {
        let r = report(Mode::FullSdr, 0.5);
        assert_eq!(r.metric("recall@1"), Some(0.5));
        assert_eq!(r.metric("map@5"), Some(0.25));
        assert_eq!(r.metric("map@10"), None);
        assert_eq!(r.metric("bogus"), None);
        assert_eq!(r.metric_names(), ["recall@1", "recall@5", "map@5"]);
    }

    #[test]
    fn table_is_aligned() {
        let t = text_table(&[report(Mode::DescriptionOnly, 0.5), report(Mode::FullSdr, 0.75)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("R@1") && lines[0].contains("mAP@5"));
        assert!(lines[2].contains("75.00"));
        assert_eq!(lines[1].len(), lines[2].len());
    }

    #[test]
    fn heatmap_has_one_rect_per_cell() {
        let sweep = SweepReport {
            dataset_name: "toy".into(),
            mode: Mode::FullSdr,
            alphas: vec![0.0, 0.1],
            betas: vec![0.0, 0.5, 1.0],
            cells: (0..6).map(|i| report(Mode::FullSdr, i as f64 / 6.0)).collect(),
        };
        let svg = sweep.heatmap_svg("recall@1").unwrap();
        assert_eq!(svg.matches("<rect").count(), 6);
        assert!(sweep.heatmap_svg("map@50").is_none());
    }
}
