//! Fixed-precision rendering of reports.
//!
//! Machine-readable output (JSON, CSV) carries 15 significant digits and
//! human-readable tables carry 6. Field order is fixed by the caller, so
//! output is byte-stable for identical inputs.

/// Significant digits in JSON and CSV output.
pub const MACHINE_DIGITS: usize = 15;
/// Significant digits in aligned text tables.
pub const TABLE_DIGITS: usize = 6;

/// Renders `x` in plain decimal notation rounded to `digits` significant
/// digits, without trailing zeros.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // Round through scientific notation first so the exponent reflects the
    // rounded value (0.99999995 -> 1.00000).
    let sci = format!("{:.*e}", digits.saturating_sub(1), x);
    let (_, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().expect("valid float");
    let mut s = format!("{:.*}", decimals, rounded);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Minimal ordered JSON object writer for flat reports.
#[derive(Debug, Default)]
pub struct JsonObject {
    fields: Vec<(String, String)>,
}

impl JsonObject {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        let rendered = if v.is_finite() { fmt_sig(v, MACHINE_DIGITS) } else { "null".into() };
        self.fields.push((key.into(), rendered));
        self
    }

    pub fn opt_num(&mut self, key: &str, v: Option<f64>) -> &mut Self {
        match v {
            Some(v) => self.num(key, v),
            None => self.raw(key, "null"),
        }
    }

    pub fn int(&mut self, key: &str, v: u64) -> &mut Self {
        self.raw(key, &v.to_string())
    }

    pub fn str(&mut self, key: &str, v: &str) -> &mut Self {
        let quoted = serde_json::to_string(v).expect("string serialization");
        self.raw(key, &quoted)
    }

    pub fn raw(&mut self, key: &str, json: &str) -> &mut Self {
        self.fields.push((key.into(), json.into()));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::from("{\n");
        for (i, (k, v)) in self.fields.iter().enumerate() {
            let key = serde_json::to_string(k).expect("string serialization");
            out.push_str(&format!("  {key}: {v}"));
            out.push_str(if i + 1 < self.fields.len() { ",\n" } else { "\n" });
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(437.0 / 6000.0, 15), "0.0728333333333333");
        assert_eq!(fmt_sig(437.0 / 6000.0, 6), "0.0728333");
        assert_eq!(fmt_sig(0.010115, 6), "0.010115");
        assert_eq!(fmt_sig(-0.0041, 6), "-0.0041");
        assert_eq!(fmt_sig(0.99999995, 6), "1");
        assert_eq!(fmt_sig(1234567.0, 3), "1230000");
        assert_eq!(fmt_sig(0.0, 15), "0");
        assert_eq!(fmt_sig(-1e-30, 15), "-0.000000000000000000000000000001");
    }

    #[test]
    fn object_is_valid_json() {
        let mut o = JsonObject::new();
        o.num("a", 0.1).opt_num("b", None).str("c", "x\"y").int("n", 3);
        let v: serde_json::Value = serde_json::from_str(&o.render()).unwrap();
        assert_eq!(v["a"], 0.1);
        assert!(v["b"].is_null());
        assert_eq!(v["c"], "x\"y");
        assert_eq!(v["n"], 3);
    }
}
