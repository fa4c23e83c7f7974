//! Report formatting: every floating-point value is written with exactly
//! six significant digits so that report files are diff-stable across runs
//! and machines.

/// Format with 6 significant digits, fixed notation for exponents in
/// [-4, 5] and scientific notation otherwise.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Exponent of the value after rounding to 6 significant digits.
    let sci = format!("{:.5e}", x);
    let (_, exp_str) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp_str.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        format!("{:.*}", decimals, x)
    } else {
        sci
    }
}

pub fn write_file(path: &std::path::Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)
}

/// Render a vector as a JSON array of sig6 numbers.
pub fn json_vec(values: &[f64]) -> String {
    let inner: Vec<String> = values.iter().map(|&v| sig6(v)).collect();
    format!("[{}]", inner.join(", "))
}

/// Render a matrix (list of rows) as nested JSON arrays of sig6 numbers.
pub fn json_matrix(rows: &[Vec<f64>]) -> String {
    let inner: Vec<String> = rows.iter().map(|r| json_vec(r)).collect();
    format!("[{}]", inner.join(", "))
}
