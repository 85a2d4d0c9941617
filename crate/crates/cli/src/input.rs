//! z-value file parsing.

use std::path::Path;

/// Parse one z-value per line. A non-numeric first line is taken as a header;
/// blank lines are skipped and CRLF endings are accepted.
pub fn parse_z_values(text: &str) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let first = !seen_content;
        seen_content = true;
        match line.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => return Err(format!("line {}: z-value {v} is not finite", i + 1)),
            Err(_) if first => {}
            Err(_) => return Err(format!("line {}: cannot parse {line:?} as a number", i + 1)),
        }
    }
    if values.is_empty() {
        return Err("input contains no z-values".to_string());
    }
    Ok(values)
}

pub fn read_z_file(path: &Path) -> Result<Vec<f64>, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| format!("{} is not valid UTF-8: {e}", path.display()))?;
    parse_z_values(&text).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_blank_lines_and_crlf() {
        let text = "z\r\n1.5\r\n\r\n-2\r\n  0.25  \n";
        assert_eq!(parse_z_values(text).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn only_the_first_line_may_be_a_header() {
        let err = parse_z_values("z\n1\nabc\n2\n").unwrap_err();
        assert!(err.starts_with("line 3:"), "{err}");
        let err = parse_z_values("1\nz\n").unwrap_err();
        assert!(err.starts_with("line 2:"), "{err}");
    }

    #[test]
    fn rejects_empty_and_non_finite_input() {
        assert!(parse_z_values("").is_err());
        assert!(parse_z_values("header\n\n").is_err());
        assert!(parse_z_values("1\nNaN\n")
            .unwrap_err()
            .starts_with("line 2:"));
        assert!(parse_z_values("inf\n").unwrap_err().starts_with("line 1:"));
    }
}
