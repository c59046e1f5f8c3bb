use std::fmt::Write as _;

/// Aligned plain-text table: one row label column, then numeric columns
/// printed with two decimals.
pub fn render_table(title: &str, columns: &[&str], rows: &[(String, Vec<f64>)]) -> String {
    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain([6])
        .max()
        .unwrap_or(6);
    let widths: Vec<usize> = columns.iter().map(|c| c.len().max(8)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<label_width$}", "method");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {c:>w$}");
    }
    out.push('\n');
    let rule = label_width + widths.iter().map(|w| w + 2).sum::<usize>();
    let _ = writeln!(out, "{}", "-".repeat(rule));
    for (label, values) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for (v, w) in values.iter().zip(&widths) {
            let _ = write!(out, "  {v:>w$.2}");
        }
        out.push('\n');
    }
    out
}
