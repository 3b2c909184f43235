//! Human-readable renderings of API documents. `--json` bypasses all of this.

use std::fmt::Write;

use serde_json::Value;

fn s(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

fn table(headers: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let mut out = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                out.push_str(c);
            } else {
                let _ = write!(out, "{c:<w$}  ");
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(headers.iter().map(|h| h.to_string()).collect());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn kpis(v: &Value) -> String {
    let mut out = String::new();
    if let Some(obj) = v.as_object() {
        let width = obj.keys().map(String::len).max().unwrap_or(0);
        for (k, val) in obj {
            let shown = match val.as_f64() {
                Some(x) if val.is_f64() => format!("{x:.4}"),
                _ => s(val),
            };
            let _ = writeln!(out, "{k:<width$}  {shown}");
        }
    }
    out
}

pub fn approvals(v: &Value) -> String {
    let rows = v
        .as_array()
        .into_iter()
        .flatten()
        .map(|a| {
            let flags = a["flags"].as_array().map(|f| f.iter().map(s).collect::<Vec<_>>().join(",")).unwrap_or_default();
            vec![s(&a["id"]), s(&a["kind"]), s(&a["state"]), s(&a["created_tick"]), flags, s(&a["summary"])]
        })
        .collect();
    table(&["ID", "KIND", "STATE", "DAY", "FLAGS", "SUMMARY"], rows)
}

pub fn approval(v: &Value) -> String {
    let mut out = format!("{} {} by {}", s(&v["id"]), s(&v["state"]), s(&v["decider"]));
    if let Some(note) = v["note"].as_str() {
        let _ = write!(out, " ({note})");
    }
    out.push('\n');
    out
}

pub fn alerts(v: &Value) -> String {
    let rows = v
        .as_array()
        .into_iter()
        .flatten()
        .map(|a| {
            vec![
                s(&a["id"]),
                s(&a["kind"]),
                format!("{:.1}", a["priority_score"].as_f64().unwrap_or(0.0)),
                s(&a["state"]),
                s(&a["subject"]),
                s(&a["recommended_action"]),
            ]
        })
        .collect();
    table(&["ID", "KIND", "PRIORITY", "STATE", "SUBJECT", "ACTION"], rows)
}

pub fn alert(v: &Value) -> String {
    format!("{} {} {}\n", s(&v["id"]), s(&v["subject"]), s(&v["state"]))
}

pub fn plan(v: &Value) -> String {
    let mut out = String::new();
    let km: f64 = v["routes"].as_array().into_iter().flatten().filter_map(|r| r["total_km"].as_f64()).sum();
    let _ = writeln!(
        out,
        "{}  state {}  day {}  {:.1} km (baseline {:.1} km)",
        s(&v["id"]),
        s(&v["state"]),
        s(&v["day"]),
        km,
        v["rationale"]["baseline_km"].as_f64().unwrap_or(0.0),
    );
    let alloc = v["allocations"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|l| vec![s(&l["outlet"]), s(&l["sku"]), s(&l["qty"])])
        .collect();
    out.push('\n');
    out.push_str(&table(&["OUTLET", "SKU", "QTY"], alloc));
    for r in v["routes"].as_array().into_iter().flatten() {
        let stops: Vec<String> = r["stops"]
            .as_array()
            .into_iter()
            .flatten()
            .zip(r["eta"].as_array().into_iter().flatten())
            .map(|(stop, eta)| format!("{}@{:.0}", s(stop), eta.as_f64().unwrap_or(0.0)))
            .collect();
        let _ = writeln!(
            out,
            "\n{} ({}) {:.1} km, {:.0} L: DC -> {} -> DC",
            s(&r["vehicle_id"]),
            s(&r["temp_class"]),
            r["total_km"].as_f64().unwrap_or(0.0),
            r["total_volume"].as_f64().unwrap_or(0.0),
            stops.join(" -> ")
        );
    }
    for (label, key) in [("consolidation", "consolidation_recs"), ("contingency", "contingency_notes")] {
        for note in v[key].as_array().into_iter().flatten() {
            let _ = writeln!(out, "{label}: {}", s(note));
        }
    }
    for inf in v["infeasible"].as_array().into_iter().flatten() {
        let _ = writeln!(out, "unserved: {} {} ({})", s(&inf["outlet"]), s(&inf["temp_class"]), s(&inf["reason"]));
    }
    out
}
