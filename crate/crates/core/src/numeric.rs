//! Exact decimal values stored as normalized strings.
//!
//! Math quantities are never floats: "5.0" and "5" must compare equal and
//! serialize identically, so every value is normalized on entry and all
//! arithmetic is done on scaled integers.

use std::cmp::Ordering;

/// Normalize a decimal literal: strip sign-preserving leading zeros and
/// trailing fractional zeros, drop an empty fraction, map "-0" to "0".
///
/// Returns `None` if the input is not a plain decimal number.
pub fn normalize_decimal(raw: &str) -> Option<String> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let mut parts = digits.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    if int_part.is_empty() && frac_part.is_none_or(str::is_empty) {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if let Some(frac) = frac_part {
        if !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
    }

    let int_trimmed = int_part.trim_start_matches('0');
    let int_norm = if int_trimmed.is_empty() { "0" } else { int_trimmed };
    let frac_norm = frac_part.unwrap_or("").trim_end_matches('0');

    let mut out = String::new();
    if neg && !(int_norm == "0" && frac_norm.is_empty()) {
        out.push('-');
    }
    out.push_str(int_norm);
    if !frac_norm.is_empty() {
        out.push('.');
        out.push_str(frac_norm);
    }
    Some(out)
}

/// True if `s` is already in the normal form produced by [`normalize_decimal`].
pub fn is_normalized_decimal(s: &str) -> bool {
    normalize_decimal(s).as_deref() == Some(s)
}

/// Numeric ordering of two normalized decimal strings.
pub fn decimal_cmp(a: &str, b: &str) -> Ordering {
    let (da, db) = match (Decimal::parse(a), Decimal::parse(b)) {
        (Some(da), Some(db)) => (da, db),
        // Fall back to text order for anything unparseable; callers only
        // hit this path on hand-built test data.
        _ => return a.cmp(b),
    };
    da.cmp_value(&db)
}

/// Exact decimal as a scaled integer: `units * 10^-scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decimal {
    units: i128,
    scale: u32,
}

impl Decimal {
    pub fn parse(s: &str) -> Option<Self> {
        let norm = normalize_decimal(s)?;
        let neg = norm.starts_with('-');
        let body = norm.trim_start_matches('-');
        let mut parts = body.splitn(2, '.');
        let int_part = parts.next().unwrap_or("0");
        let frac_part = parts.next().unwrap_or("");
        let scale = frac_part.len() as u32;
        let mut units: i128 = int_part.parse().ok()?;
        for c in frac_part.chars() {
            units = units.checked_mul(10)?.checked_add((c as u8 - b'0') as i128)?;
        }
        if neg {
            units = -units;
        }
        Some(Self { units, scale })
    }

    pub fn from_i64(v: i64) -> Self {
        Self { units: v as i128, scale: 0 }
    }

    fn rescale(&self, scale: u32) -> Option<Self> {
        debug_assert!(scale >= self.scale);
        let mut units = self.units;
        for _ in self.scale..scale {
            units = units.checked_mul(10)?;
        }
        Some(Self { units, scale })
    }

    fn cmp_value(&self, other: &Self) -> Ordering {
        let scale = self.scale.max(other.scale);
        match (self.rescale(scale), other.rescale(scale)) {
            (Some(a), Some(b)) => a.units.cmp(&b.units),
            _ => Ordering::Equal,
        }
    }

    pub fn add(&self, other: &Self) -> Option<Self> {
        let scale = self.scale.max(other.scale);
        let a = self.rescale(scale)?;
        let b = other.rescale(scale)?;
        Some(Self { units: a.units.checked_add(b.units)?, scale })
    }

    pub fn sub(&self, other: &Self) -> Option<Self> {
        let scale = self.scale.max(other.scale);
        let a = self.rescale(scale)?;
        let b = other.rescale(scale)?;
        Some(Self { units: a.units.checked_sub(b.units)?, scale })
    }

    pub fn mul(&self, other: &Self) -> Option<Self> {
        Some(Self {
            units: self.units.checked_mul(other.units)?,
            scale: self.scale.checked_add(other.scale)?,
        })
    }

    /// Exact division; `None` when the quotient does not terminate within
    /// twelve fractional digits.
    pub fn div(&self, other: &Self) -> Option<Self> {
        if other.units == 0 {
            return None;
        }
        let mut num = *self;
        let mut extra: u32 = 0;
        loop {
            if num.units % other.units == 0 {
                let units = num.units / other.units;
                let q_scale = (num.scale as i64) - (other.scale as i64);
                return Self::with_signed_scale(units, q_scale);
            }
            if extra >= 12 {
                return None;
            }
            num.units = num.units.checked_mul(10)?;
            num.scale += 1;
            extra += 1;
        }
    }

    fn with_signed_scale(units: i128, scale: i64) -> Option<Self> {
        if scale >= 0 {
            Some(Self { units, scale: scale as u32 })
        } else {
            let mut u = units;
            for _ in 0..(-scale) {
                u = u.checked_mul(10)?;
            }
            Some(Self { units: u, scale: 0 })
        }
    }

    /// Render in normalized form.
    pub fn to_normalized_string(&self) -> String {
        let neg = self.units < 0;
        let abs = self.units.unsigned_abs().to_string();
        let scale = self.scale as usize;
        let mut body = if scale == 0 {
            abs
        } else {
            let padded = format!("{:0>width$}", abs, width = scale + 1);
            let split = padded.len() - scale;
            format!("{}.{}", &padded[..split], &padded[split..])
        };
        if body.contains('.') {
            body = body.trim_end_matches('0').trim_end_matches('.').to_string();
        }
        let body = {
            let t = body.trim_start_matches('0');
            if t.is_empty() || t.starts_with('.') {
                format!("0{t}")
            } else {
                t.to_string()
            }
        };
        if neg && body != "0" {
            format!("-{body}")
        } else {
            body
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_basic_forms() {
        assert_eq!(normalize_decimal("5.0").as_deref(), Some("5"));
        assert_eq!(normalize_decimal("5").as_deref(), Some("5"));
        assert_eq!(normalize_decimal("007").as_deref(), Some("7"));
        assert_eq!(normalize_decimal("0.50").as_deref(), Some("0.5"));
        assert_eq!(normalize_decimal(".5").as_deref(), Some("0.5"));
        assert_eq!(normalize_decimal("5.").as_deref(), Some("5"));
        assert_eq!(normalize_decimal("-0").as_deref(), Some("0"));
        assert_eq!(normalize_decimal("-3.20").as_deref(), Some("-3.2"));
    }

    #[test]
    fn rejects_non_numbers() {
        assert_eq!(normalize_decimal(""), None);
        assert_eq!(normalize_decimal("."), None);
        assert_eq!(normalize_decimal("2y"), None);
        assert_eq!(normalize_decimal("1.2.3"), None);
        assert_eq!(normalize_decimal("1e5"), None);
    }

    #[test]
    fn compares_numerically() {
        assert_eq!(decimal_cmp("10", "5"), Ordering::Greater);
        assert_eq!(decimal_cmp("5", "5"), Ordering::Equal);
        assert_eq!(decimal_cmp("0.5", "0.25"), Ordering::Greater);
        assert_eq!(decimal_cmp("-3", "2"), Ordering::Less);
    }

    #[test]
    fn exact_arithmetic() {
        let a = Decimal::parse("7.5").unwrap();
        let b = Decimal::parse("2.5").unwrap();
        assert_eq!(a.add(&b).unwrap().to_normalized_string(), "10");
        assert_eq!(a.sub(&b).unwrap().to_normalized_string(), "5");
        assert_eq!(a.mul(&b).unwrap().to_normalized_string(), "18.75");
        assert_eq!(a.div(&b).unwrap().to_normalized_string(), "3");
        assert_eq!(
            Decimal::parse("15").unwrap().div(&Decimal::parse("2").unwrap()).unwrap().to_normalized_string(),
            "7.5"
        );
    }

    #[test]
    fn division_refuses_nonterminating() {
        let a = Decimal::parse("1").unwrap();
        let b = Decimal::parse("3").unwrap();
        assert!(a.div(&b).is_none());
        assert!(a.div(&Decimal::parse("0").unwrap()).is_none());
    }
}
