//! Two-line element import/export under the circular-orbit approximation.
//!
//! Eccentricity, drag terms and the argument of perigee are not modelled:
//! on import the argument of perigee is folded into the mean anomaly and
//! eccentricity is read but discarded. Export writes zero for all of them.

use std::f64::consts::TAU;

use thiserror::Error;

use super::{normalize_angle, Constellation, OrbitalElements, SatId, Satellite, MU_EARTH_KM3_S2};

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TleError {
    #[error("line {line}: malformed element line: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: checksum mismatch (expected {expected}, found {found})")]
    Checksum {
        line: usize,
        expected: u32,
        found: u32,
    },
    #[error("line {line}: unsupported field: {reason}")]
    Unsupported { line: usize, reason: String },
}

/// Modulo-10 checksum over the first 68 columns: digits count their value,
/// minus signs count one.
pub fn checksum(line: &str) -> u32 {
    line.chars()
        .take(68)
        .map(|c| match c {
            '0'..='9' => c as u32 - '0' as u32,
            '-' => 1,
            _ => 0,
        })
        .sum::<u32>()
        % 10
}

fn with_checksum(body: String) -> String {
    debug_assert_eq!(body.len(), 68, "{body:?}");
    let sum = checksum(&body);
    format!("{body}{sum}")
}

fn fmt_angle(rad: f64) -> String {
    let mut deg = (normalize_angle(rad).to_degrees() * 1e4).round() / 1e4;
    if deg >= 360.0 {
        deg = 0.0;
    }
    format!("{deg:8.4}")
}

/// Exports every satellite as a three-line record. The name line carries the
/// plane and slot so that import restores the grid layout exactly.
pub fn export_tle(constellation: &Constellation) -> String {
    let mut out = String::new();
    for (i, sat) in constellation.satellites.iter().enumerate() {
        let e = &sat.elements;
        let catalog = (i + 1) % 100_000;
        let day = 1.0 + e.epoch_s / SECONDS_PER_DAY;
        let rev_per_day = e.mean_motion_rad_s() * SECONDS_PER_DAY / TAU;
        out.push_str(&format!(
            "{} P{} S{}\n",
            sat.id.to_string().to_uppercase(),
            sat.plane,
            sat.slot
        ));
        out.push_str(&with_checksum(format!(
            "1 {catalog:05}U 00000A   00{day:012.8}  .00000000  00000-0  00000-0 0 {:4}",
            (i % 10_000)
        )));
        out.push('\n');
        out.push_str(&with_checksum(format!(
            "2 {catalog:05} {} {} 0000000 {} {} {rev_per_day:11.8}{:05}",
            fmt_angle(e.inclination_rad),
            fmt_angle(e.raan_rad),
            fmt_angle(0.0),
            fmt_angle(e.mean_anomaly_at_epoch_rad),
            0
        )));
        out.push('\n');
    }
    out
}

struct Parsed {
    name: Option<String>,
    epoch_day: f64,
    elements: OrbitalElements,
}

fn field<'a>(
    line: &'a str,
    lineno: usize,
    cols: std::ops::Range<usize>,
    what: &str,
) -> Result<&'a str, TleError> {
    line.get(cols.clone()).ok_or_else(|| TleError::Malformed {
        line: lineno,
        reason: format!("missing {what} (columns {}-{})", cols.start + 1, cols.end),
    })
}

fn number(
    line: &str,
    lineno: usize,
    cols: std::ops::Range<usize>,
    what: &str,
) -> Result<f64, TleError> {
    let raw = field(line, lineno, cols, what)?.trim();
    raw.parse::<f64>().map_err(|_| TleError::Malformed {
        line: lineno,
        reason: format!("{what} `{raw}` is not a number"),
    })
}

fn check_line(line: &str, lineno: usize, expect: char) -> Result<(), TleError> {
    if line.len() != 69 || !line.is_ascii() {
        return Err(TleError::Malformed {
            line: lineno,
            reason: format!("expected 69 ASCII columns, found {}", line.chars().count()),
        });
    }
    if !line.starts_with(expect) || line.as_bytes()[1] != b' ' {
        return Err(TleError::Malformed {
            line: lineno,
            reason: format!("expected line number {expect}"),
        });
    }
    let found = line[68..69]
        .parse::<u32>()
        .map_err(|_| TleError::Malformed {
            line: lineno,
            reason: "checksum column is not a digit".into(),
        })?;
    let expected = checksum(line);
    if expected != found {
        return Err(TleError::Checksum {
            line: lineno,
            expected,
            found,
        });
    }
    Ok(())
}

/// Absolute day number (days since 1950-01-00) of a TLE epoch.
fn absolute_day(year2: u32, day_of_year: f64) -> f64 {
    let year = if year2 < 57 {
        2000 + year2
    } else {
        1900 + year2
    };
    let leap = |y: u32| (y.is_multiple_of(4) && !y.is_multiple_of(100)) || y.is_multiple_of(400);
    let days_before: u32 = (1950..year).map(|y| if leap(y) { 366 } else { 365 }).sum();
    days_before as f64 + day_of_year
}

fn parse_pair(
    name: Option<String>,
    l1: &str,
    n1: usize,
    l2: &str,
    n2: usize,
) -> Result<Parsed, TleError> {
    check_line(l1, n1, '1')?;
    check_line(l2, n2, '2')?;
    if field(l1, n1, 2..7, "catalog number")? != field(l2, n2, 2..7, "catalog number")? {
        return Err(TleError::Malformed {
            line: n2,
            reason: "catalog number differs from line 1".into(),
        });
    }
    let year2 = number(l1, n1, 18..20, "epoch year")?;
    let day = number(l1, n1, 20..32, "epoch day")?;
    if !(1.0..367.0).contains(&day) || year2 < 0.0 {
        return Err(TleError::Malformed {
            line: n1,
            reason: format!("epoch day {day} out of range"),
        });
    }
    let eph_type = field(l1, n1, 62..63, "ephemeris type")?;
    if eph_type != "0" && eph_type != " " {
        return Err(TleError::Unsupported {
            line: n1,
            reason: format!("ephemeris type {eph_type}"),
        });
    }

    let inclination = number(l2, n2, 8..16, "inclination")?;
    let raan = number(l2, n2, 17..25, "right ascension")?;
    let ecc_digits = field(l2, n2, 26..33, "eccentricity")?;
    if !ecc_digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(TleError::Malformed {
            line: n2,
            reason: format!("eccentricity `{ecc_digits}` is not a 7-digit decimal"),
        });
    }
    let arg_perigee = number(l2, n2, 34..42, "argument of perigee")?;
    let mean_anomaly = number(l2, n2, 43..51, "mean anomaly")?;
    let rev_per_day = number(l2, n2, 52..63, "mean motion")?;
    if !(0.0..=180.0).contains(&inclination) {
        return Err(TleError::Malformed {
            line: n2,
            reason: format!("inclination {inclination} out of range"),
        });
    }
    if rev_per_day <= 0.0 {
        return Err(TleError::Unsupported {
            line: n2,
            reason: format!("mean motion {rev_per_day} rev/day"),
        });
    }
    let n_rad_s = rev_per_day * TAU / SECONDS_PER_DAY;
    Ok(Parsed {
        name,
        epoch_day: absolute_day(year2 as u32, day),
        elements: OrbitalElements {
            semi_major_axis_km: (MU_EARTH_KM3_S2 / (n_rad_s * n_rad_s)).cbrt(),
            inclination_rad: inclination.to_radians(),
            raan_rad: normalize_angle(raan.to_radians()),
            mean_anomaly_at_epoch_rad: normalize_angle((arg_perigee + mean_anomaly).to_radians()),
            epoch_s: 0.0,
        },
    })
}

fn layout_from_name(name: &str) -> Option<(u32, u32)> {
    let mut plane = None;
    let mut slot = None;
    for tok in name.split_whitespace() {
        if let Some(p) = tok.strip_prefix('P').and_then(|t| t.parse().ok()) {
            plane = Some(p);
        } else if let Some(s) = tok.strip_prefix('S').and_then(|t| t.parse().ok()) {
            slot = Some(s);
        }
    }
    Some((plane?, slot?))
}

/// Groups satellites into planes by (inclination, RAAN) and orders each
/// plane by anomaly.
fn infer_layout(elements: &[OrbitalElements]) -> Vec<(u32, u32)> {
    const TOL: f64 = 1e-5;
    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&elements[a], &elements[b]);
        ea.raan_rad
            .total_cmp(&eb.raan_rad)
            .then(ea.inclination_rad.total_cmp(&eb.inclination_rad))
            .then(
                ea.mean_anomaly_at_epoch_rad
                    .total_cmp(&eb.mean_anomaly_at_epoch_rad),
            )
    });
    let mut layout = vec![(0, 0); elements.len()];
    let mut plane = 0u32;
    let mut slot = 0u32;
    let mut prev: Option<&OrbitalElements> = None;
    for &i in &order {
        let e = &elements[i];
        if let Some(p) = prev {
            if (e.raan_rad - p.raan_rad).abs() > TOL
                || (e.inclination_rad - p.inclination_rad).abs() > TOL
            {
                plane += 1;
                slot = 0;
            }
        }
        layout[i] = (plane, slot);
        slot += 1;
        prev = Some(e);
    }
    layout
}

/// Parses two-line or three-line element sets.
pub fn import_tle(text: &str) -> Result<Constellation, TleError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let mut parsed = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (n0, l0) = lines[i];
        let name = if l0.starts_with("1 ") {
            None
        } else {
            i += 1;
            Some(l0.trim().trim_start_matches("0 ").to_string())
        };
        let Some(&(n1, l1)) = lines.get(i) else {
            return Err(TleError::Malformed {
                line: n0,
                reason: "name line without element lines".into(),
            });
        };
        let Some(&(n2, l2)) = lines.get(i + 1) else {
            return Err(TleError::Malformed {
                line: n1,
                reason: "line 1 without a matching line 2".into(),
            });
        };
        parsed.push(parse_pair(name, l1, n1, l2, n2)?);
        i += 2;
    }

    let first_day = parsed
        .iter()
        .map(|p| p.epoch_day)
        .fold(f64::INFINITY, f64::min);
    for p in &mut parsed {
        p.elements.epoch_s = (p.epoch_day - first_day) * SECONDS_PER_DAY;
    }
    let named: Option<Vec<(u32, u32)>> = parsed
        .iter()
        .map(|p| p.name.as_deref().and_then(layout_from_name))
        .collect();
    let layout = match named {
        Some(l) if !l.is_empty() => l,
        _ => infer_layout(&parsed.iter().map(|p| p.elements).collect::<Vec<_>>()),
    };
    let plane_count = layout.iter().map(|&(p, _)| p + 1).max().unwrap_or(0);
    let satellites = parsed
        .into_iter()
        .zip(layout)
        .enumerate()
        .map(|(i, (p, (plane, slot)))| Satellite {
            id: SatId(i as u32),
            plane,
            slot,
            elements: p.elements,
        })
        .collect();
    Ok(Constellation {
        satellites,
        plane_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{synthesize_walker, ShellSpec};

    const ISS: &str = "ISS (ZARYA)
1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927
2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537";

    fn starlink() -> Constellation {
        synthesize_walker(&ShellSpec {
            plane_count: 72,
            sats_per_plane: 18,
            altitude_km: 550.0,
            inclination_deg: 53.2,
            phasing_offset: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn parses_reference_element_set() {
        let c = import_tle(ISS).unwrap();
        assert_eq!(c.len(), 1);
        let e = c.satellites[0].elements;
        assert!((e.inclination_rad.to_degrees() - 51.6416).abs() < 1e-9);
        let n = 15.72125391 * TAU / 86_400.0;
        let a = (MU_EARTH_KM3_S2 / (n * n)).cbrt();
        assert!((e.semi_major_axis_km - a).abs() < 1e-9);
        assert!(
            (e.mean_anomaly_at_epoch_rad.to_degrees() - (130.5360 + 325.0288 - 360.0)).abs() < 1e-9
        );
    }

    #[test]
    fn corrupted_checksum_names_line() {
        let bad = ISS.replace("563537", "563538");
        match import_tle(&bad) {
            Err(TleError::Checksum {
                line: 3,
                expected: 7,
                found: 8,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_line_is_malformed() {
        let bad = ISS.replace(" 0  2927", " 0 2927");
        assert!(matches!(
            import_tle(&bad),
            Err(TleError::Malformed { line: 2, .. })
        ));
        let missing = ISS.lines().take(2).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            import_tle(&missing),
            Err(TleError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn export_lines_are_valid() {
        let text = export_tle(&starlink());
        for line in text
            .lines()
            .filter(|l| l.starts_with("1 ") || l.starts_with("2 "))
        {
            assert_eq!(line.len(), 69, "{line}");
            assert_eq!(checksum(line), line[68..].parse::<u32>().unwrap());
        }
    }

    #[test]
    fn round_trip_starlink() {
        let c = starlink();
        let back = import_tle(&export_tle(&c)).unwrap();
        assert_eq!(back.len(), c.len());
        assert_eq!(back.plane_count, 72);
        for (a, b) in c.satellites.iter().zip(&back.satellites) {
            assert_eq!((a.plane, a.slot), (b.plane, b.slot));
            let d = |x: f64, y: f64| {
                let d = (x - y).rem_euclid(TAU);
                d.min(TAU - d)
            };
            assert!(d(a.elements.raan_rad, b.elements.raan_rad) < 1e-6);
            assert!(d(a.elements.inclination_rad, b.elements.inclination_rad) < 1e-6);
            assert!(
                d(
                    a.elements.mean_anomaly_at_epoch_rad,
                    b.elements.mean_anomaly_at_epoch_rad
                ) < 1e-6
            );
            assert!((a.elements.semi_major_axis_km - b.elements.semi_major_axis_km).abs() < 1e-3);
        }
    }

    #[test]
    fn layout_inferred_without_names() {
        let text: String = export_tle(&starlink())
            .lines()
            .filter(|l| l.starts_with("1 ") || l.starts_with("2 "))
            .map(|l| format!("{l}\n"))
            .collect();
        let back = import_tle(&text).unwrap();
        assert_eq!(back.plane_count, 72);
        assert!(back.planes().iter().all(|p| p.len() == 18));
    }
}
