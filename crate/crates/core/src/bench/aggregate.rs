use super::BenchError;

/// `(acc_a * n_a + acc_b * n_b) / (n_a + n_b)` in full precision.
pub fn weighted_overall(acc_a: f64, n_a: usize, acc_b: f64, n_b: usize) -> Result<f64, BenchError> {
    if n_a + n_b == 0 {
        return Err(BenchError::Contract("weighted_overall needs at least one non-zero count".into()));
    }
    if !acc_a.is_finite() || !acc_b.is_finite() {
        return Err(BenchError::Contract("weighted_overall needs finite inputs".into()));
    }
    Ok((acc_a * n_a as f64 + acc_b * n_b as f64) / (n_a + n_b) as f64)
}

/// Round half away from zero at `decimals` places. A tolerance of 1e-9 on
/// the scaled fraction lets binary near-misses such as `3.645` round up.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x.abs() * scale;
    let floor = scaled.floor();
    let up = scaled - floor >= 0.5 - 1e-9;
    let r = if up { floor + 1.0 } else { floor };
    r.copysign(x) / scale
}

/// `x` rounded to 2 places, as integer hundredths.
pub fn hundredths(x: f64) -> i64 {
    (round_half_up(x, 2) * 100.0).round() as i64
}

/// Two-decimal presentation.
pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

/// The four severity levels as they appear in benchmark files.
pub const SEVERITY_LABELS: [&str; 4] = [
    "No offence",
    "Offence with no card",
    "Offence with yellow card",
    "Offence with possible red card",
];

/// Canonical severity label for `raw`, accepting the display names and the
/// source dataset's `Offence + X card` spellings.
pub fn map_severity_labels(raw: &str) -> Result<&'static str, BenchError> {
    let norm = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
        .replace("offense", "offence");
    let idx = match norm.as_str() {
        "no offence" | "no foul" => 0,
        "offence with no card" | "normal offence" | "offence + no card" | "offence without card" => 1,
        "offence with yellow card" | "offence + yellow card" => 2,
        "offence with possible red card" | "offence with red card" | "offence + red card" => 3,
        _ => return Err(BenchError::UnknownLabel(raw.to_string())),
    };
    Ok(SEVERITY_LABELS[idx])
}
