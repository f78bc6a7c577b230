//! Line-oriented analysis loop over one dataset.

use std::io::{BufRead, Write};

use serde_json::Value;

use nlstat_service::session::{LoadedDataset, TranscriptEntry};
use nlstat_service::{Session, SessionSettings};

use crate::error::CliError;

pub const PROMPT: &str = "> ";
pub const QUIT: &str = ":quit";

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) => format!("{x:.3e}"),
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

fn table(out: &mut dyn Write, header: &[&str], rows: Vec<Vec<String>>) -> std::io::Result<()> {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(out, "  {}", line(header.to_vec()))?;
    for r in &rows {
        writeln!(out, "  {}", line(r.iter().map(String::as_str).collect()))?;
    }
    Ok(())
}

fn rows_of<'a>(v: &'a Value, key: &str) -> impl Iterator<Item = &'a Value> {
    v[key].as_array().into_iter().flatten()
}

/// Prints the compact table for a response payload, if it has one.
pub fn print_result(out: &mut dyn Write, result: &Value) -> std::io::Result<()> {
    match result["kind"].as_str() {
        Some("model") => {
            let s = &result["summary"];
            let rows = rows_of(s, "coefficients")
                .map(|c| vec![c["name"].as_str().unwrap_or("").to_string(), num(&c["estimate"]), num(&c["se"]), num(&c["t_stat"]), num(&c["p_value"])])
                .collect();
            table(out, &["term", "estimate", "se", "t", "p"], rows)?;
            writeln!(out, "  AIC {}  n {}", num(&s["aic"]), s["n_used"])
        }
        Some("contrasts") => {
            let rows = rows_of(&result["table"], "rows")
                .map(|r| vec![r["label"].as_str().unwrap_or("").to_string(), num(&r["estimate"]), num(&r["se"]), num(&r["p_raw"]), num(&r["p_adj"])])
                .collect();
            table(out, &["contrast", "estimate", "se", "p", "p (Bonferroni)"], rows)
        }
        Some("slopes") => {
            let c = &result["comparison"];
            let rows = rows_of(c, "slopes")
                .map(|s| {
                    vec![
                        s["level"].as_str().unwrap_or("").to_string(),
                        num(&s["slope"]),
                        num(&s["se"]),
                        format!("[{}, {}]", num(&s["ci_lower"]), num(&s["ci_upper"])),
                        num(&s["p_value"]),
                    ]
                })
                .collect();
            table(out, &["level", "slope", "se", "95% CI", "p"], rows)?;
            let t = &c["interaction_test"];
            writeln!(out, "  interaction p {}", num(&t["p_value"]))
        }
        Some("residuals") => {
            let d = &result["views"]["diagnostics"];
            writeln!(out, "  residual skewness {}", num(&d["skewness"]))
        }
        Some("hops") => {
            let c = &result["curves"];
            writeln!(
                out,
                "  {} curves over {} grid points of {}",
                c["curves"].as_array().map_or(0, Vec::len),
                c["grid"].as_array().map_or(0, Vec::len),
                c["focus_var"].as_str().unwrap_or("")
            )
        }
        _ => Ok(()),
    }
}

fn print_entry(out: &mut dyn Write, e: &TranscriptEntry) -> std::io::Result<()> {
    writeln!(out, "{}", e.text)?;
    if let Some(r) = &e.result {
        print_result(out, r)?;
    }
    if let Some(c) = e.result.as_ref().and_then(|r| r["clarification"].as_str()) {
        writeln!(out, "{c}")?;
    }
    if let Some(g) = &e.guidance {
        if g.text != e.text {
            writeln!(out, "{}", g.text)?;
        }
    }
    Ok(())
}

/// Runs the loop until end of input or `:quit`.
pub fn run(
    dataset: LoadedDataset,
    settings: SessionSettings,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<Session, CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let mut session = Session::new("repl", settings);
    let info = session.set_dataset(dataset)?;
    writeln!(out, "loaded {} ({} rows, {} columns); {QUIT} exits", info.source_name, info.n_rows, info.columns.len())
        .map_err(io)?;
    let mut line = String::new();
    loop {
        write!(out, "{PROMPT}").map_err(io)?;
        out.flush().map_err(io)?;
        line.clear();
        if input.read_line(&mut line).map_err(io)? == 0 {
            break;
        }
        let query = line.trim();
        if query.is_empty() {
            continue;
        }
        if query == QUIT {
            break;
        }
        let reply = session.handle_query(query)?;
        print_entry(out, &reply.response).map_err(io)?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nlstat_core::fixtures::{flight_synonyms, flights};
    use std::sync::Arc;

    #[test]
    fn fit_prints_coefficients_and_quit_stops() {
        let settings = SessionSettings { synonyms: Arc::new(flight_synonyms()), seed: 1, client: None };
        let mut input = "\nLonger flight results in a more expensive ticket\n:quit\nasdf\n".as_bytes();
        let mut out = Vec::new();
        let s = run(LoadedDataset::from_dataset(&flights()).unwrap(), settings, &mut input, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("(Intercept)"), "{text}");
        assert!(text.contains("duration"));
        assert_eq!(s.transcript().len(), 2);
    }
}
