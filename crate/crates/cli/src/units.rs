//! Lengths at the flag boundary carry an explicit unit suffix.

/// Parse `5mm`, `0.5 cm`, `0.005m` or `300um` into meters.
pub fn parse_length(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic() || c == 'µ')
        .ok_or_else(|| format!("'{s}' needs a unit suffix (um, mm, cm or m)"))?;
    let (num, unit) = t.split_at(split);
    let factor = match unit.trim() {
        "m" => 1.0,
        "cm" => 1e-2,
        "mm" => 1e-3,
        "um" | "µm" => 1e-6,
        other => return Err(format!("unknown length unit '{other}' in '{s}' (use um, mm, cm or m)")),
    };
    let value: f64 = num.trim().parse().map_err(|_| format!("'{s}' is not a number followed by a unit"))?;
    if !value.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(value * factor)
}

/// Point ids separated by commas or whitespace.
pub fn parse_id_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| format!("'{p}' is not a point id")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_length("5mm").unwrap(), 0.005);
        assert_eq!(parse_length("0.005m").unwrap(), 0.005);
        assert_eq!(parse_length("1.5 cm").unwrap(), 0.015);
        assert!((parse_length("300um").unwrap() - 3e-4).abs() < 1e-18);
        assert!(parse_length("5").unwrap_err().contains("suffix"));
        assert!(parse_length("5in").is_err());
        assert!(parse_length("xmm").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_id_list("1, 2 3\n4").unwrap(), vec![1, 2, 3, 4]);
        assert!(parse_id_list("1,a").is_err());
    }
}
