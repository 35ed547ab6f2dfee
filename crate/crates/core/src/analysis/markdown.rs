use std::fmt::Write;

use super::{AnalysisReport, Verdict};
use crate::engine::TaskStatus;

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn clock(ms: u64) -> String {
    format!("{}.{:03}s", ms / 1000, ms % 1000)
}

pub fn render_markdown(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Mission report: {} ({})", r.mission_id, r.mission_template_id);
    let _ = writeln!(out);
    let _ = writeln!(out, "{}", r.name);
    let _ = writeln!(out);
    let completed = r.totals.get(&TaskStatus::Completed).copied().unwrap_or(0);
    let _ = writeln!(
        out,
        "**{completed}/{} completed** · mission {} · correlation tolerance ±{} s",
        r.task_count,
        if r.closed { "closed" } else { "open" },
        r.tolerance_s
    );
    let _ = writeln!(out);

    let _ = writeln!(out, "## Totals");
    let _ = writeln!(out);
    let header: Vec<&str> = TaskStatus::ALL.iter().map(|s| s.as_str()).collect();
    let _ = writeln!(out, "| phase | {} |", header.join(" | "));
    let _ = writeln!(out, "|---|{}", "---:|".repeat(header.len()));
    for p in &r.per_phase {
        let counts: Vec<String> = TaskStatus::ALL.iter().map(|s| p.totals.get(s).copied().unwrap_or(0).to_string()).collect();
        let name = if p.phase.is_empty() { "(none)" } else { p.phase.as_str() };
        let _ = writeln!(out, "| {} | {} |", cell(name), counts.join(" | "));
    }
    let counts: Vec<String> = TaskStatus::ALL.iter().map(|s| r.totals.get(s).copied().unwrap_or(0).to_string()).collect();
    let _ = writeln!(out, "| **all** | {} |", counts.join(" | "));
    let _ = writeln!(out);

    let _ = writeln!(out, "## Deviations");
    let _ = writeln!(out);
    if r.deviations.is_empty() {
        let _ = writeln!(out, "None.");
    }
    for d in &r.deviations {
        let note = d.note.as_deref().map(|n| format!(" — {n}")).unwrap_or_default();
        let _ = writeln!(out, "- `{}` {} ({}){}", d.task_id, d.status, d.reasons.join(", "), note);
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "## Issues");
    let _ = writeln!(out);
    if r.issues.is_empty() {
        let _ = writeln!(out, "None.");
    }
    for e in &r.issues {
        let i = &e.issue;
        let scope = i.task_id.as_deref().map_or_else(|| "mission".to_string(), |t| format!("task `{t}`"));
        let _ = writeln!(out, "- **{}** {} [{}] {} by {}: {}", i.issue_id, i.severity, scope, clock(i.reported_at), i.reporter, i.text);
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "## Data validation");
    let _ = writeln!(out);
    let verdict = |v: Verdict| r.verdicts.get(&v).copied().unwrap_or(0);
    let _ = writeln!(
        out,
        "{} agree · {} disagree · {} unmatched",
        verdict(Verdict::Agree),
        verdict(Verdict::Disagree),
        verdict(Verdict::Unmatched)
    );
    if !r.td_validation.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "| task | field | recorded | valid | telemetry | verdict |");
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for v in &r.td_validation {
            let seen: Vec<String> = v.matches.iter().map(|s| format!("{} @{}", s.value, clock(s.timestamp))).collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {:?} |",
                cell(&v.task_id),
                cell(&v.field_name),
                cell(&v.recorded_value.to_string()),
                if v.valid { "yes" } else { "no" },
                cell(&seen.join(", ")),
                v.verdict
            );
        }
    }
    let _ = writeln!(out);

    let _ = writeln!(out, "## Timeline");
    let _ = writeln!(out);
    for t in &r.timeline {
        let _ = writeln!(out, "- {} [{}#{}] {}", clock(t.timestamp), cell(&t.source), t.seq, cell(&t.what));
    }
    out
}
