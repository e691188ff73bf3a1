use super::{CamMetrics, PcdMetrics};

/// Markdown table with columns padded to equal width.
pub fn markdown_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(headers.iter().map(|h| h.to_string()).collect());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect());
    for r in rows {
        out += &line(r.clone());
    }
    out
}

pub fn pcd_table(rows: &[PcdMetrics]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|m| {
            vec![
                format!("{:.6}", m.threshold),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.f1),
            ]
        })
        .collect();
    markdown_table(&["threshold", "precision", "recall", "F1"], &body)
}

/// Rotation error in degrees; translation errors in ground-truth units after
/// similarity alignment of absolute poses.
pub fn cam_table(rows: &[(String, CamMetrics)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, m)| {
            vec![
                name.clone(),
                format!("{:.6}", m.rot_err_deg),
                format!("{:.6}", m.trans_err),
                format!("{:.6}", m.ate),
            ]
        })
        .collect();
    markdown_table(
        &[
            "trajectory",
            "RotErr (deg)",
            "TransErr (aligned)",
            "ATE (aligned, RMS)",
        ],
        &body,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_columns() {
        let t = markdown_table(&["a", "long header"], &[vec!["123456".into(), "x".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines
            .iter()
            .all(|l| l.chars().count() == lines[0].chars().count()));
    }
}
