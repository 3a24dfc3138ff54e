use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::{encode_png, grouped_bars, heatmap, Series};
use super::{CauseByEmotion, ConfusionMatrix, DistanceProfile};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::f1;

/// Distances at or above this value share one bar in the distance chart.
const DISTANCE_CAP: i64 = 6;

/// Whatever analyses were computed; missing parts are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub confusion: Option<ConfusionMatrix>,
    pub cause_by_emotion: Option<CauseByEmotion>,
    pub distance: Option<DistanceProfile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub written: Vec<PathBuf>,
}

fn short(label: &str) -> String {
    label[..3].to_uppercase()
}

struct PlotBucket {
    label: String,
    gold: usize,
    predicted: usize,
    correct: usize,
}

impl PlotBucket {
    fn scores(&self) -> (f64, f64, f64) {
        let p = if self.predicted == 0 { 0.0 } else { self.correct as f64 / self.predicted as f64 };
        let r = if self.gold == 0 { 0.0 } else { self.correct as f64 / self.gold as f64 };
        (p, r, f1(p, r))
    }
}

/// Buckets for the chart: all negative distances together, 0..cap-1 one by
/// one, and everything from the cap upwards together.
fn plot_buckets(profile: &DistanceProfile) -> Vec<PlotBucket> {
    let mut out: Vec<PlotBucket> = Vec::new();
    let mut labels = Vec::new();
    if profile.buckets.iter().any(|b| b.distance < 0) {
        labels.push("<0".to_string());
    }
    labels.extend((0..DISTANCE_CAP).map(|d| d.to_string()));
    labels.push(format!("{DISTANCE_CAP}+"));
    for label in labels {
        out.push(PlotBucket {
            label,
            gold: 0,
            predicted: 0,
            correct: 0,
        });
    }
    let offset = usize::from(profile.buckets.iter().any(|b| b.distance < 0));
    for b in &profile.buckets {
        let slot = if b.distance < 0 {
            0
        } else {
            offset + b.distance.min(DISTANCE_CAP) as usize
        };
        out[slot].gold += b.gold;
        out[slot].predicted += b.predicted;
        out[slot].correct += b.correct;
    }
    out
}

fn summary(bundle: &ReportBundle) -> String {
    let mut s = String::from("# Analysis\n");
    if let Some(m) = &bundle.confusion {
        let _ = writeln!(s, "\n## Emotion confusion (rows gold, columns predicted)\n");
        let header: Vec<&str> = m.labels.iter().map(|l| l.as_str()).collect();
        let _ = writeln!(s, "| gold \\ pred | {} | total |", header.join(" | "));
        let _ = writeln!(s, "|---|{}---|", "---:|".repeat(header.len()));
        for (label, row) in m.labels.iter().zip(&m.counts) {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "| {} | {} | {} |", label.as_str(), cells.join(" | "), row.iter().sum::<usize>());
        }
        let _ = writeln!(s, "\nTotal utterances: {}", m.total());
    }
    if let Some(c) = &bundle.cause_by_emotion {
        let _ = writeln!(s, "\n## Cause extraction on correctly classified emotions\n");
        let _ = writeln!(s, "Qualifying targets: {}\n", c.qualifying_targets);
        match &c.report {
            None => {
                let _ = writeln!(s, "No target had its emotion classified correctly.");
            }
            Some(r) => {
                let _ = writeln!(s, "| emotion | predicted | gold | precision | recall | f1 |");
                let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|");
                for e in &r.per_emotion {
                    let _ = writeln!(
                        s,
                        "| {} | {} | {} | {:.4} | {:.4} | {:.4} |",
                        e.emotion.as_str(),
                        e.predicted,
                        e.support,
                        e.precision,
                        e.recall,
                        e.f1
                    );
                }
                let _ = writeln!(
                    s,
                    "| w-avg | | | {:.4} | {:.4} | {:.4} |",
                    r.weighted_precision, r.weighted_recall, r.weighted_f1
                );
            }
        }
    }
    if let Some(d) = &bundle.distance {
        let _ = writeln!(s, "\n## Cause extraction by distance (target minus cause)\n");
        let _ = writeln!(s, "| distance | gold | predicted | correct | precision | recall | f1 |");
        let _ = writeln!(s, "|---:|---:|---:|---:|---:|---:|---:|");
        for b in &d.buckets {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} |",
                b.distance, b.gold, b.predicted, b.correct, b.precision, b.recall, b.f1
            );
        }
        if let Some(mode) = d.gold_mode() {
            let _ = writeln!(s, "\nMost frequent gold distance: {mode}");
        }
    }
    s
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn bars_for(scores: &[(f64, f64, f64)]) -> [Series<'static>; 3] {
    [
        Series { name: "PRECISION", values: scores.iter().map(|s| s.0).collect() },
        Series { name: "RECALL", values: scores.iter().map(|s| s.1).collect() },
        Series { name: "F1", values: scores.iter().map(|s| s.2).collect() },
    ]
}

/// Writes JSON tables, PNG charts and `summary.md` into `dir`. Output is a
/// pure function of `bundle`.
pub fn render_report(dir: &Path, bundle: &ReportBundle) -> Result<ReportFiles> {
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();
    if let Some(m) = &bundle.confusion {
        files.push(("confusion.json", to_json(m)?));
        let labels: Vec<String> = m.labels.iter().map(|l| short(l.as_str())).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let img = heatmap("EMOTION CONFUSION (ROW-NORMALIZED)", &refs, &refs, &m.counts, &m.row_normalized);
        files.push(("confusion.png", encode_png(&img)?));
    }
    if let Some(c) = &bundle.cause_by_emotion {
        files.push(("cause_by_emotion.json", to_json(c)?));
        if let Some(r) = &c.report {
            let cats: Vec<String> = r.per_emotion.iter().map(|e| short(e.emotion.as_str())).collect();
            let notes: Vec<String> = r.per_emotion.iter().map(|e| format!("N={}", e.support)).collect();
            let scores: Vec<_> = r.per_emotion.iter().map(|e| (e.precision, e.recall, e.f1)).collect();
            let img = grouped_bars(
                "CAUSES ON CORRECT EMOTIONS",
                "EMOTION (N = GOLD PAIRS)",
                &cats,
                &notes,
                &bars_for(&scores),
            );
            files.push(("cause_by_emotion.png", encode_png(&img)?));
        }
    }
    if let Some(d) = &bundle.distance {
        files.push(("distance.json", to_json(d)?));
        let buckets = plot_buckets(d);
        let scores: Vec<_> = buckets.iter().map(PlotBucket::scores).collect();
        let cats: Vec<String> = buckets.iter().map(|b| b.label.clone()).collect();
        let notes: Vec<String> = buckets.iter().map(|b| format!("N={}", b.gold)).collect();
        let img = grouped_bars(
            "CAUSES BY DISTANCE",
            "TARGET - CAUSE (N = GOLD PAIRS)",
            &cats,
            &notes,
            &bars_for(&scores),
        );
        files.push(("distance.png", encode_png(&img)?));
    }
    files.push(("summary.md", summary(bundle).into_bytes()));
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    written.sort();
    Ok(ReportFiles { written })
}
