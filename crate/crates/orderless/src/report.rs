//! CSV renderings of logs and reports, plus the terminal tables.

use std::fmt::Write as _;

use orderless_core::metrics::MetricsReport;
use orderless_core::{LabelVocabulary, TrainLog};

use crate::bench::BenchReport;
use crate::experiment::CompareRow;

fn to_csv<R: AsRef<[u8]>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn f(x: f64) -> String {
    format!("{x}")
}

/// `iteration,loss`
pub fn loss_csv(log: &TrainLog) -> String {
    to_csv(
        &["iteration", "loss"],
        log.iteration_losses
            .iter()
            .enumerate()
            .map(|(i, l)| vec![i.to_string(), f(*l)]),
    )
}

/// `epoch,metric,value`, long format.
pub fn epochs_csv(log: &TrainLog) -> String {
    let mut rows = Vec::new();
    for e in &log.epochs {
        let mut push = |name: &str, v: f64| rows.push(vec![e.epoch.to_string(), name.to_string(), f(v)]);
        push("train_loss", e.train_loss);
        if let Some(v) = &e.validation {
            push("val_loss", v.loss);
            for (name, value) in summary_metrics(&v.report) {
                push(name, value);
            }
        }
    }
    to_csv(&["epoch", "metric", "value"], rows)
}

fn summary_metrics(r: &MetricsReport) -> [(&'static str, f64); 8] {
    [
        ("c_p", r.c_p),
        ("c_r", r.c_r),
        ("c_f1", r.c_f1),
        ("o_p", r.o_p),
        ("o_r", r.o_r),
        ("o_f1", r.o_f1),
        ("duplicate_ratio", r.duplicate_ratio),
        ("order_rigidness", r.order_rigidness),
    ]
}

/// `metric,value`
pub fn metrics_csv(r: &MetricsReport) -> String {
    let mut rows: Vec<Vec<String>> = summary_metrics(r)
        .iter()
        .map(|(n, v)| vec![n.to_string(), f(*v)])
        .collect();
    rows.push(vec!["no_cooccurrence".into(), (r.no_cooccurrence as u8).to_string()]);
    to_csv(&["metric", "value"], rows)
}

/// `class,name,tp,predicted,actual,precision,recall,f1,degenerate`
pub fn per_class_csv(r: &MetricsReport, vocab: &LabelVocabulary) -> String {
    to_csv(
        &["class", "name", "tp", "predicted", "actual", "precision", "recall", "f1", "degenerate"],
        r.per_class.iter().enumerate().map(|(i, c)| {
            vec![
                i.to_string(),
                vocab.name(i).to_string(),
                c.true_positives.to_string(),
                c.predicted.to_string(),
                c.actual.to_string(),
                f(c.precision),
                f(c.recall),
                f(c.f1),
                (c.degenerate as u8).to_string(),
            ]
        }),
    )
}

/// `strategy,c_f1,o_f1,duplicate_ratio,order_rigidness,final_loss,align_ms`
pub fn compare_csv(rows: &[CompareRow]) -> String {
    to_csv(
        &["strategy", "c_f1", "o_f1", "duplicate_ratio", "order_rigidness", "final_loss", "align_ms"],
        rows.iter().map(|r| {
            vec![
                r.strategy.name().to_string(),
                f(r.report.c_f1),
                f(r.report.o_f1),
                f(r.report.duplicate_ratio),
                f(r.report.order_rigidness),
                f(r.final_loss),
                r.align_ms.map(f).unwrap_or_default(),
            ]
        }),
    )
}

pub fn metrics_table(r: &MetricsReport) -> String {
    let mut out = String::new();
    for (name, v) in summary_metrics(r) {
        writeln!(out, "{name:>16}  {:>7.2}%", 100.0 * v).unwrap();
    }
    if r.no_cooccurrence {
        out.push_str("  (no class pair co-occurs; rigidness defaults to 100%)\n");
    }
    out
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<17} {:>8} {:>8} {:>11} {:>10} {:>10} {:>9}",
        "strategy", "C-F1", "O-F1", "duplicates", "rigidness", "loss", "align ms"
    )
    .unwrap();
    for r in rows {
        let align = r.align_ms.map_or("-".to_string(), |a| format!("{a:.4}"));
        writeln!(
            out,
            "{:<17} {:>7.2}% {:>7.2}% {:>10.2}% {:>9.2}% {:>10.4} {:>9}",
            r.strategy.name(),
            100.0 * r.report.c_f1,
            100.0 * r.report.o_f1,
            100.0 * r.report.duplicate_ratio,
            100.0 * r.report.order_rigidness,
            r.final_loss,
            align
        )
        .unwrap();
    }
    out
}

pub fn bench_table(b: &BenchReport) -> String {
    format!(
        "samples {} (best of {} passes)\n  forward   {:.5} ms\n  mla       {:.5} ms\n  pla       {:.5} ms\n  backward  {:.5} ms\n  pla solved nothing on {} samples\n",
        b.samples, b.repeats, b.forward_ms, b.mla_ms, b.pla_ms, b.backward_ms, b.fully_pinned
    )
}

/// `phase,mean_ms`
pub fn bench_csv(b: &BenchReport) -> String {
    to_csv(
        &["phase", "mean_ms"],
        [
            ("forward", b.forward_ms),
            ("mla", b.mla_ms),
            ("pla", b.pla_ms),
            ("backward", b.backward_ms),
        ]
        .iter()
        .map(|(n, v)| vec![n.to_string(), f(*v)]),
    )
}
