use crate::CliError;
use ccsgs::closed_test::IntersectionBoundsTable;
use ccsgs::design::{DesignReport, Method, SweepRow};
use ccsgs::normal::normal_sf;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// `x` rounded to 6 significant digits, printed in shortest form.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float");
    format!("{rounded}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Input(e.to_string()))
}

fn subset_label(members: &[usize]) -> String {
    members
        .iter()
        .map(|m| (m + 1).to_string())
        .collect::<Vec<_>>()
        .join("+")
}

pub fn bounds_csv(table: &IntersectionBoundsTable) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    for s in &table.subsets {
        for (m, &label) in s.members.iter().enumerate() {
            for (k, &b) in s.bounds[m].iter().enumerate() {
                rows.push(vec![
                    subset_label(&s.members),
                    (label + 1).to_string(),
                    (k + 1).to_string(),
                    sig6(s.weights[m]),
                    sig6(b),
                    sig6(normal_sf(b)),
                    sig6(s.alpha_star[k]),
                ]);
            }
        }
    }
    csv_bytes(
        &["subset", "population", "analysis", "weight", "bound", "nominal_alpha", "alpha_star"],
        rows,
    )
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>, CliError> {
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                sig6(r.p),
                r.pop.to_string(),
                r.method.as_str().to_string(),
                sig6(r.nominal_alpha),
                sig6(r.power),
                r.n_required.to_string(),
            ]
        })
        .collect();
    csv_bytes(&["p", "pop", "method", "nominal_alpha", "power", "n_required"], rows)
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn two(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.2}")
    } else {
        "-".into()
    }
}

/// Side-by-side summary of the design report.
pub fn report_text(report: &DesignReport) -> String {
    let mut out = String::new();
    let pops = report.prevalences.len();
    let k = report.timings.len();
    let methods: Vec<Method> = [Method::Bonferroni, Method::Ccs]
        .into_iter()
        .filter(|&m| report.columns.iter().any(|c| c.method == m))
        .collect();
    let _ = writeln!(
        out,
        "{} population(s), {} analyses, alpha {}, algorithm {}",
        pops, k, report.alpha, report.algorithm
    );
    let mut header = format!("{:<26}", "");
    for m in &methods {
        let name = match (m, pops) {
            (Method::Bonferroni, 1) => "group sequential",
            (Method::Bonferroni, _) => "Bonferroni",
            (Method::Ccs, _) => "CCS",
        };
        header.push_str(&format!("{:<24}", name));
    }
    let _ = writeln!(out, "{header}");
    let mut row = |label: &str, f: &dyn Fn(&ccsgs::design::PopulationColumn) -> String| {
        let mut line = format!("{label:<26}");
        for &m in &methods {
            let mut cell = String::new();
            for p in 1..=pops {
                let v = report.column(m, p).map_or("-".to_string(), f);
                cell.push_str(&format!("{v:<12}"));
            }
            line.push_str(&format!("{cell:<24}"));
        }
        let _ = writeln!(out, "{}", line.trim_end());
    };
    row("population", &|c| format!("pop {}", c.population));
    row("nominal alpha level", &|c| pct(c.nominal_level));
    row("power at reference size", &|c| pct(c.power_at_reference));
    row("required information", &|c| c.required.to_string());
    for j in 0..k {
        row(&format!("Z bound, analysis {}", j + 1), &|c| two(c.bounds[j]));
    }
    if report.columns.iter().any(|c| c.hr_bounds.is_some()) {
        for j in 0..k {
            row(&format!("HR bound, analysis {}", j + 1), &|c| {
                c.hr_bounds.as_ref().map_or("-".into(), |h| two(h[j]))
            });
        }
    }
    for (m, n) in &report.enrollment {
        let _ = writeln!(out, "patients ({}): {:.0}", m.as_str(), n.ceil());
    }
    out
}

pub fn table_text(table: &IntersectionBoundsTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "intersection bounds (algorithm {}, {} of {} analyses finalized)",
        table.algorithm,
        table.finalized,
        table.analyses()
    );
    for s in &table.subsets {
        for (m, &label) in s.members.iter().enumerate() {
            let bounds: Vec<String> = s.bounds[m].iter().map(|&b| format!("{:>7}", two(b))).collect();
            let _ = writeln!(
                out,
                "  J={:<8} pop {}  w={:<6.3} {}",
                subset_label(&s.members),
                label + 1,
                s.weights[m],
                bounds.join(" ")
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(2.2051234567), "2.20512");
        assert_eq!(sig6(0.0153221), "0.0153221");
        assert_eq!(sig6(1234567.0), "1234570");
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(f64::INFINITY), "");
    }
}
