//! Exact conversion between cycles and decimal milliseconds.

use anyhow::{bail, Context, Result};

/// Parses a duration: a bare integer is cycles, a `ms` suffix means
/// milliseconds at `clock_hz`. Milliseconds must land on a whole cycle.
pub fn parse_duration(text: &str, clock_hz: u64) -> Result<u64> {
    let text = text.trim();
    match text.strip_suffix("ms") {
        Some(ms) => ms_to_cycles(ms.trim(), clock_hz),
        None => text
            .strip_suffix("cycles")
            .unwrap_or(text)
            .trim()
            .parse::<u64>()
            .with_context(|| format!("`{text}` is not a cycle count")),
    }
}

/// Splits a non-negative decimal into `(numerator, 10^scale)`.
fn decimal(text: &str) -> Result<(u128, u128)> {
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
        || frac.len() > 18
    {
        bail!("`{text}` is not a non-negative decimal number");
    }
    let digits = format!("{int}{frac}");
    let num: u128 = digits
        .parse()
        .with_context(|| format!("`{text}` is too large"))?;
    Ok((num, 10u128.pow(frac.len() as u32)))
}

pub fn ms_to_cycles(ms: &str, clock_hz: u64) -> Result<u64> {
    let (num, den) = decimal(ms)?;
    let scaled = num
        .checked_mul(clock_hz as u128)
        .context("duration overflows")?;
    let den = den * 1000;
    if scaled % den != 0 {
        bail!("{ms} ms is not a whole number of cycles at {clock_hz} Hz");
    }
    u64::try_from(scaled / den).context("duration overflows")
}

/// Milliseconds as an exact decimal when it terminates within 12 places,
/// rounded to 12 places otherwise.
pub fn cycles_to_ms(cycles: u64, clock_hz: u64) -> String {
    let num = cycles as u128 * 1000;
    let den = clock_hz as u128;
    let int = num / den;
    let mut rem = num % den;
    let mut frac = String::new();
    while rem != 0 && frac.len() < 12 {
        rem *= 10;
        frac.push(char::from(b'0' + (rem / den) as u8));
        rem %= den;
    }
    if frac.is_empty() {
        int.to_string()
    } else {
        format!("{int}.{frac}")
    }
}

/// Shortest decimal rendering of a float, for results that are not whole cycles.
pub fn format_ms(ms: f64) -> String {
    let s = format!("{ms:.9}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HZ: u64 = 50_000_000;

    #[test]
    fn milliseconds_to_cycles() {
        assert_eq!(parse_duration("4ms", HZ).unwrap(), 200_000);
        assert_eq!(parse_duration("16.0004ms", HZ).unwrap(), 800_020);
        assert_eq!(parse_duration("7.99926 ms", HZ).unwrap(), 399_963);
        assert_eq!(parse_duration("0.0002ms", HZ).unwrap(), 10);
        assert_eq!(parse_duration("800020", HZ).unwrap(), 800_020);
        assert!(parse_duration("0.00001ms", HZ).is_err());
        assert!(parse_duration("-4ms", HZ).is_err());
        assert!(parse_duration("ms", HZ).is_err());
    }

    #[test]
    fn cycles_to_milliseconds() {
        assert_eq!(cycles_to_ms(999_983, HZ), "19.99966");
        assert_eq!(cycles_to_ms(200_000, HZ), "4");
        assert_eq!(cycles_to_ms(1, 3_000), "0.333333333333");
        assert_eq!(format_ms(19.999660000001), "19.99966");
    }
}
