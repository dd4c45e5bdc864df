//! Per-run statistics: annotation and dereference tables, time and memory.

use std::time::Duration;

use serde_json::{json, Map, Value};

use crate::infer::{AnnotationCounts, Annotations, DerefReport, Solution, Tally};
use crate::ir::{DerefCategory, Program};

#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    pub instructions: usize,
    pub annotations: AnnotationCounts,
    /// One row per class that declares an annotated member, by class name.
    pub annotation_rows: Vec<(String, AnnotationCounts)>,
    pub derefs: Vec<(DerefCategory, Tally)>,
    pub wall: Duration,
    /// Peak resident set size in bytes, where the platform reports it.
    pub peak_memory: Option<u64>,
    pub iterations: u64,
}

impl RunStats {
    pub fn collect(
        program: &Program,
        solution: &Solution,
        annotations: &Annotations,
        report: &DerefReport,
        wall: Duration,
    ) -> RunStats {
        RunStats {
            instructions: program.instruction_count(),
            annotations: annotations.counts(),
            annotation_rows: annotations
                .counts_by_class(program)
                .into_iter()
                .map(|(c, n)| (program.class(c).name.clone(), n))
                .collect(),
            derefs: DerefCategory::ALL
                .iter()
                .map(|&c| (c, report.tally(c)))
                .collect(),
            wall,
            peak_memory: peak_memory(),
            iterations: solution.iterations,
        }
    }

    /// Totals over several programs, with one row per program.
    pub fn combine(runs: &[(String, RunStats)]) -> RunStats {
        let mut out = RunStats {
            instructions: 0,
            annotations: AnnotationCounts::default(),
            annotation_rows: Vec::new(),
            derefs: DerefCategory::ALL
                .iter()
                .map(|&c| (c, Tally::default()))
                .collect(),
            wall: Duration::ZERO,
            peak_memory: None,
            iterations: 0,
        };
        for (name, r) in runs {
            out.instructions += r.instructions;
            out.annotations.fields.merge(r.annotations.fields);
            out.annotations.params.merge(r.annotations.params);
            out.annotations.returns.merge(r.annotations.returns);
            out.annotation_rows.push((name.clone(), r.annotations));
            for ((_, total), (_, t)) in out.derefs.iter_mut().zip(&r.derefs) {
                total.merge(*t);
            }
            out.wall += r.wall;
            out.peak_memory = out.peak_memory.max(r.peak_memory);
            out.iterations += r.iterations;
        }
        out
    }

    pub fn deref_total(&self) -> Tally {
        let mut t = Tally::default();
        for (_, d) in &self.derefs {
            t.merge(*d);
        }
        t
    }

    /// Timing and memory are left out with `deterministic`, so identical
    /// inputs give identical output.
    pub fn to_json(&self, deterministic: bool) -> Value {
        let tally =
            |t: Tally| json!({ "total": t.total, "good": t.good, "percent": round2(t.percent()) });
        let counts = |c: &AnnotationCounts| {
            json!({
                "fields": tally(c.fields),
                "params": tally(c.params),
                "returns": tally(c.returns),
                "total": tally(c.total()),
            })
        };
        let rows: Map<String, Value> = self
            .annotation_rows
            .iter()
            .map(|(n, c)| (n.clone(), counts(c)))
            .collect();
        let mut derefs: Map<String, Value> = self
            .derefs
            .iter()
            .map(|(c, t)| (c.label().to_string(), tally(*t)))
            .collect();
        derefs.insert("total".into(), tally(self.deref_total()));
        let mut out = json!({
            "instructions": self.instructions,
            "annotations": counts(&self.annotations),
            "annotations_by_class": rows,
            "dereferences": derefs,
            "iterations": self.iterations,
        });
        if !deterministic {
            out["wall_ms"] = json!(round2(self.wall.as_secs_f64() * 1e3));
            out["peak_memory_bytes"] = json!(self.peak_memory);
        }
        out
    }

    /// [`RunStats::tables`] followed by iterations, time and memory.
    pub fn to_text(&self) -> String {
        let mut s = self.tables();
        s.push_str(&format!("iterations    {}\n", self.iterations));
        s.push_str(&format!(
            "time          {:.1} ms\n",
            self.wall.as_secs_f64() * 1e3
        ));
        if let Some(m) = self.peak_memory {
            s.push_str(&format!(
                "peak memory   {:.1} MiB\n",
                m as f64 / (1024.0 * 1024.0)
            ));
        }
        s
    }

    /// Aligned text tables, one for annotations and one for dereferences.
    pub fn tables(&self) -> String {
        let mut s = String::new();
        let cell = |t: Tally| format!("{:>6}/{:<6} {:>6.1}%", t.good, t.total, t.percent());
        s.push_str(&format!("instructions  {}\n\n", self.instructions));
        s.push_str(&format!(
            "{:<20} {:>22} {:>22} {:>22} {:>22}\n",
            "non-null", "fields", "params", "returns", "total"
        ));
        let row = |s: &mut String, name: &str, c: &AnnotationCounts| {
            s.push_str(&format!(
                "{:<20} {:>22} {:>22} {:>22} {:>22}\n",
                name,
                cell(c.fields),
                cell(c.params),
                cell(c.returns),
                cell(c.total())
            ));
        };
        for (n, c) in &self.annotation_rows {
            row(&mut s, n, c);
        }
        row(&mut s, "TOTAL", &self.annotations);
        s.push('\n');
        s.push_str(&format!("{:<20} {:>22}\n", "safe dereferences", ""));
        for (c, t) in &self.derefs {
            s.push_str(&format!("{:<20} {:>22}\n", c.label(), cell(*t)));
        }
        s.push_str(&format!(
            "{:<20} {:>22}\n",
            "TOTAL",
            cell(self.deref_total())
        ));
        s.push('\n');
        s
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// High-water resident set size of this process, from `/proc` on Linux.
pub fn peak_memory() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
