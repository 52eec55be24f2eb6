//! Exact text encoding of `f64` in C `%a` style, e.g. `0x1.8p+1` for 3.
//! Output is canonical: no trailing zero hex digits, `0x0p+0` for zero.

use crate::error::{Error, Result};

const FRAC_BITS: u32 = 52;
const FRAC_MASK: u64 = (1 << FRAC_BITS) - 1;

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp_bits = ((bits >> FRAC_BITS) & 0x7ff) as i32;
    let frac = bits & FRAC_MASK;
    if exp_bits == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 {
        (0, -1022)
    } else {
        (1, exp_bits - 1023)
    };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let dot = if digits.is_empty() {
        String::new()
    } else {
        format!(".{digits}")
    };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}0x{lead}{dot}p{esign}{}", exp.abs())
}

pub fn parse(s: &str) -> Result<f64> {
    let bad = || Error::InvalidParameter(format!("invalid hex float {s:?}"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let value = match body {
        "inf" => f64::INFINITY,
        "nan" if !neg => return Ok(f64::NAN),
        _ => {
            let body = body.strip_prefix("0x").ok_or_else(bad)?;
            let (mant, exp) = body.split_once('p').ok_or_else(bad)?;
            let exp: i32 = exp.parse().map_err(|_| bad())?;
            let (lead, digits) = match mant.split_once('.') {
                Some((l, d)) if !d.is_empty() => (l, d),
                Some(_) => return Err(bad()),
                None => (mant, ""),
            };
            if digits.len() > 13 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad());
            }
            let mut frac = 0u64;
            for (i, c) in digits.chars().enumerate() {
                frac |= (c.to_digit(16).ok_or_else(bad)? as u64) << (48 - 4 * i as u32);
            }
            match lead {
                "0" if frac == 0 => 0.0,
                "0" if exp == -1022 => f64::from_bits(frac),
                "1" if (-1022..=1023).contains(&exp) => f64::from_bits((((exp + 1023) as u64) << FRAC_BITS) | frac),
                _ => return Err(bad()),
            }
        }
    };
    Ok(if neg { -value } else { value })
}
