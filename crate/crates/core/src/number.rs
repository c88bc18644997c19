//! Numeric literals accepted in model and function files.
//!
//! Entries are either JSON numbers or strings. A string holds a decimal
//! literal or a ratio `p/q` of two integers. Ratios are parsed as exact
//! integers and divided once, so `"21/60"` becomes the double nearest to
//! 21/60 rather than an accumulation of rounding steps.

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumberError {
    #[error("cannot parse `{0}` as a number or ratio")]
    Syntax(String),
    #[error("ratio `{0}` has a zero denominator")]
    ZeroDenominator(String),
    #[error("ratio `{0}` has a component too large to represent exactly")]
    Inexact(String),
    #[error("value `{0}` is not finite")]
    NotFinite(String),
}

/// A number as written in an input file.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Literal {
    Float(f64),
    Text(String),
}

impl Literal {
    pub fn value(&self) -> Result<f64, NumberError> {
        match self {
            Literal::Float(v) if v.is_finite() => Ok(*v),
            Literal::Float(v) => Err(NumberError::NotFinite(v.to_string())),
            Literal::Text(s) => parse_number(s),
        }
    }
}

const EXACT_INT_LIMIT: u64 = 1 << 53;

fn parse_integer(s: &str, whole: &str) -> Result<f64, NumberError> {
    let t = s.trim();
    let (neg, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NumberError::Syntax(whole.to_string()));
    }
    let v: u64 = digits
        .parse()
        .map_err(|_| NumberError::Inexact(whole.to_string()))?;
    if v > EXACT_INT_LIMIT {
        return Err(NumberError::Inexact(whole.to_string()));
    }
    let v = v as f64;
    Ok(if neg { -v } else { v })
}

/// Parses `"p/q"`, `"p"` or a decimal literal such as `"0.4"` or `"1e-3"`.
pub fn parse_number(s: &str) -> Result<f64, NumberError> {
    let t = s.trim();
    if let Some((num, den)) = t.split_once('/') {
        let n = parse_integer(num, s)?;
        let d = parse_integer(den, s)?;
        if d == 0.0 {
            return Err(NumberError::ZeroDenominator(s.to_string()));
        }
        return Ok(n / d);
    }
    let v: f64 = t.parse().map_err(|_| NumberError::Syntax(s.to_string()))?;
    if !v.is_finite() {
        return Err(NumberError::NotFinite(s.to_string()));
    }
    Ok(v)
}
