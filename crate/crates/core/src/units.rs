//! Unit-bearing config values such as `"-50 dB"`, `"60 km/h"` or `"pi/3"`.

use std::f64::consts::PI;

/// Physical dimension a config value is expected to have. Bare numbers are
/// taken in the base unit (W, Hz, m, m/s, s, rad, bit, W/Hz, linear ratio).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Plain,
    Ratio,
    Power,
    Frequency,
    Length,
    Speed,
    Time,
    Angle,
    Bits,
    NoiseDensity,
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Evaluates `[coef][*]symbol[/den]` or a plain number.
fn expression(text: &str, wavelength: Option<f64>) -> Result<f64, String> {
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => {
            let d: f64 = d
                .trim()
                .parse()
                .map_err(|_| format!("bad denominator in {text:?}"))?;
            (n.trim(), d)
        }
        None => (text.trim(), 1.0),
    };
    let symbols: [(&str, Option<f64>); 2] = [("pi", Some(PI)), ("lambda", wavelength)];
    for (name, value) in symbols {
        if let Some(coef) = num.strip_suffix(name) {
            let value = value.ok_or_else(|| format!("{name} is not allowed here"))?;
            let coef = coef.trim().trim_end_matches('*').trim();
            let coef = match coef {
                "" => 1.0,
                "-" => -1.0,
                c => c
                    .parse()
                    .map_err(|_| format!("bad coefficient in {text:?}"))?,
            };
            return Ok(coef * value / den);
        }
    }
    num.parse::<f64>()
        .map(|v| v / den)
        .map_err(|_| format!("cannot read {text:?} as a number"))
}

/// Converts one string value to base units.
pub fn parse_quantity(text: &str, dim: Dim, wavelength: Option<f64>) -> Result<f64, String> {
    let text = text.trim();
    let (value, unit) = match text.rsplit_once(char::is_whitespace) {
        Some((v, u)) => (v.trim(), u),
        None => (text, ""),
    };
    let lambda = if dim == Dim::Length { wavelength } else { None };
    let x = expression(value, lambda)?;
    let scaled = match (dim, unit) {
        (_, "") => x,
        (Dim::Ratio, "dB") => db(x),
        (Dim::Power, "W") => x,
        (Dim::Power, "mW") => x * 1e-3,
        (Dim::Power, "kW") => x * 1e3,
        (Dim::Power, "dBm") => db(x - 30.0),
        (Dim::Power, "dBW") => db(x),
        (Dim::Frequency, "Hz") => x,
        (Dim::Frequency, "kHz") => x * 1e3,
        (Dim::Frequency, "MHz") => x * 1e6,
        (Dim::Frequency, "GHz") => x * 1e9,
        (Dim::Length, "m") => x,
        (Dim::Length, "cm") => x * 1e-2,
        (Dim::Length, "mm") => x * 1e-3,
        (Dim::Length, "km") => x * 1e3,
        (Dim::Speed, "m/s") => x,
        (Dim::Speed, "km/h") => x / 3.6,
        (Dim::Time, "s") => x,
        (Dim::Time, "ms") => x * 1e-3,
        (Dim::Angle, "rad") => x,
        (Dim::Angle, "deg") => x.to_radians(),
        (Dim::Bits, "bit" | "bits") => x,
        (Dim::Bits, "kbit" | "kbits") => x * 1e3,
        (Dim::Bits, "Mbit" | "Mbits") => x * 1e6,
        (Dim::Bits, "Gbit" | "Gbits") => x * 1e9,
        (Dim::NoiseDensity, "W/Hz") => x,
        (Dim::NoiseDensity, "dBm/Hz") => db(x - 30.0),
        (Dim::NoiseDensity, "dBW/Hz") => db(x),
        (dim, unit) => return Err(format!("unit {unit:?} does not fit a {dim:?} value")),
    };
    if scaled.is_finite() {
        Ok(scaled)
    } else {
        Err(format!("{text:?} is not finite"))
    }
}
