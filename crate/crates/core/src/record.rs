//! Plain-text orbit records.
//!
//! ```text
//! orbit
//! space flat-torus
//! dim 2
//! period 3
//! fundamental_period 3
//! chart_radius 1.2500000000000000e-1
//! point 0 0.0000000000000000e0 5.0000000000000000e-1
//! jacobian 0 2.0000000000000000e0 1.0000000000000000e0 1.0000000000000000e0 1.0000000000000000e0
//! ...
//! end
//! ```
//!
//! Floats carry 17 significant digits so records round-trip bit-exactly.
//! Jacobians are row-major. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::orbit::PeriodicOrbit;
use crate::space::{ModelSpace, SpaceKind};

/// Upper bound on dimension and period accepted by the parser.
const MAX_DIM: usize = 64;
const MAX_PERIOD: usize = 1 << 16;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_orbits(orbits: &[PeriodicOrbit]) -> String {
    let mut out = String::new();
    for orbit in orbits {
        write_orbit(&mut out, orbit);
    }
    out
}

fn write_orbit(out: &mut String, orbit: &PeriodicOrbit) {
    let n = orbit.dim();
    out.push_str("orbit\n");
    let _ = writeln!(out, "space {}", orbit.space().kind().as_str());
    let _ = writeln!(out, "dim {n}");
    let _ = writeln!(out, "period {}", orbit.period());
    let _ = writeln!(out, "fundamental_period {}", orbit.fundamental_period());
    let _ = writeln!(out, "chart_radius {}", fmt_f64(orbit.chart_radius()));
    for (k, p) in orbit.points().iter().enumerate() {
        let _ = write!(out, "point {k}");
        for c in p.iter() {
            let _ = write!(out, " {}", fmt_f64(*c));
        }
        out.push('\n');
    }
    for (k, a) in orbit.jacobians().iter().enumerate() {
        let _ = write!(out, "jacobian {k}");
        for i in 0..n {
            for j in 0..n {
                let _ = write!(out, " {}", fmt_f64(a[(i, j)]));
            }
        }
        out.push('\n');
    }
    out.push_str("end\n");
}

#[derive(Default)]
struct Partial {
    start_line: usize,
    space: Option<SpaceKind>,
    dim: Option<usize>,
    period: Option<usize>,
    fundamental_period: Option<usize>,
    chart_radius: Option<f64>,
    points: Vec<Option<DVector<f64>>>,
    jacobians: Vec<Option<DMatrix<f64>>>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_usize(line: usize, field: &str, tok: Option<&str>) -> Result<usize> {
    let tok = tok.ok_or_else(|| err(line, format!("missing value for `{field}`")))?;
    tok.parse::<usize>()
        .map_err(|_| err(line, format!("`{field}` expects a non-negative integer, got `{tok}`")))
}

fn parse_float(line: usize, field: &str, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| err(line, format!("`{field}` expects a decimal float, got `{tok}`")))
}

/// Parses zero or more orbit records.
pub fn parse_orbits(text: &str) -> Result<Vec<PeriodicOrbit>> {
    let mut orbits = Vec::new();
    let mut current: Option<Partial> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let key = toks.next().unwrap_or_default();
        match (key, current.as_mut()) {
            ("orbit", None) => {
                current = Some(Partial {
                    start_line: line,
                    ..Partial::default()
                });
            }
            ("orbit", Some(_)) => return Err(err(line, "nested `orbit` before `end`")),
            ("end", Some(_)) => {
                let partial = current.take().expect("checked above");
                orbits.push(finish(partial, line)?);
            }
            (_, None) => return Err(err(line, format!("`{key}` outside of an orbit record"))),
            ("space", Some(p)) => {
                let tok = toks.next().ok_or_else(|| err(line, "missing space kind"))?;
                p.space = Some(SpaceKind::parse(tok).ok_or_else(|| err(line, format!("unknown space `{tok}`")))?);
            }
            ("dim", Some(p)) => {
                let n = parse_usize(line, "dim", toks.next())?;
                if n == 0 || n > MAX_DIM {
                    return Err(err(line, format!("dim must be in 1..={MAX_DIM}")));
                }
                p.dim = Some(n);
            }
            ("period", Some(p)) => {
                let m = parse_usize(line, "period", toks.next())?;
                if m == 0 || m > MAX_PERIOD {
                    return Err(err(line, format!("period must be in 1..={MAX_PERIOD}")));
                }
                p.period = Some(m);
                p.points = vec![None; m];
                p.jacobians = vec![None; m];
            }
            ("fundamental_period", Some(p)) => {
                p.fundamental_period = Some(parse_usize(line, "fundamental_period", toks.next())?);
            }
            ("chart_radius", Some(p)) => {
                let tok = toks.next().ok_or_else(|| err(line, "missing chart radius"))?;
                p.chart_radius = Some(parse_float(line, "chart_radius", tok)?);
            }
            ("point", Some(p)) | ("jacobian", Some(p)) => {
                let (n, m) = match (p.dim, p.period) {
                    (Some(n), Some(m)) => (n, m),
                    _ => return Err(err(line, format!("`{key}` before `dim` and `period`"))),
                };
                let k = parse_usize(line, key, toks.next())?;
                if k >= m {
                    return Err(err(line, format!("index {k} out of range for period {m}")));
                }
                let values = toks
                    .map(|t| parse_float(line, key, t))
                    .collect::<Result<Vec<f64>>>()?;
                if key == "point" {
                    if values.len() != n {
                        return Err(err(line, format!("point needs {n} coordinates, got {}", values.len())));
                    }
                    if p.points[k].replace(DVector::from_vec(values)).is_some() {
                        return Err(err(line, format!("duplicate point {k}")));
                    }
                } else {
                    if values.len() != n * n {
                        return Err(err(line, format!("jacobian needs {} entries, got {}", n * n, values.len())));
                    }
                    if p.jacobians[k].replace(DMatrix::from_row_slice(n, n, &values)).is_some() {
                        return Err(err(line, format!("duplicate jacobian {k}")));
                    }
                }
            }
            (other, Some(_)) => return Err(err(line, format!("unknown field `{other}`"))),
        }
    }
    if let Some(p) = current {
        return Err(err(p.start_line, "orbit record is missing `end`"));
    }
    Ok(orbits)
}

fn finish(p: Partial, line: usize) -> Result<PeriodicOrbit> {
    let kind = p.space.ok_or_else(|| err(line, "record is missing `space`"))?;
    let dim = p.dim.ok_or_else(|| err(line, "record is missing `dim`"))?;
    let period = p.period.ok_or_else(|| err(line, "record is missing `period`"))?;
    let m0 = p.fundamental_period.unwrap_or(period);
    let points = p
        .points
        .into_iter()
        .enumerate()
        .map(|(k, x)| x.ok_or_else(|| err(line, format!("missing point {k}"))))
        .collect::<Result<Vec<_>>>()?;
    let jacobians = p
        .jacobians
        .into_iter()
        .enumerate()
        .map(|(k, a)| a.ok_or_else(|| err(line, format!("missing jacobian {k}"))))
        .collect::<Result<Vec<_>>>()?;
    let space = ModelSpace::new(kind, dim);
    let orbit = match p.chart_radius {
        Some(b) => PeriodicOrbit::with_radius(space, points, jacobians, m0, b),
        None => PeriodicOrbit::from_parts(space, points, jacobians, m0),
    };
    orbit.map_err(|e| err(line, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::find_rational_periodic_orbits;
    use crate::system::ToralAutomorphism;
    use proptest::prelude::*;

    #[test]
    fn cat_orbits_round_trip_bit_exactly() {
        let cat = ToralAutomorphism::cat_map();
        let orbits = find_rational_periodic_orbits(&cat, 5).unwrap();
        let text = write_orbits(&orbits);
        let back = parse_orbits(&text).unwrap();
        assert_eq!(back, orbits);
        assert_eq!(write_orbits(&back), text);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "orbit\nspace flat-torus\ndim 2\nperiod 1\npoint 0 0.0\nend\n";
        match parse_orbits(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_orbits("dim 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_orbits("orbit\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn rejects_overlapping_balls() {
        let text = "orbit\nspace euclidean\ndim 1\nperiod 2\nchart_radius 1.0\n\
                    point 0 0.0\npoint 1 1.5\njacobian 0 1.0\njacobian 1 1.0\nend\n";
        assert!(parse_orbits(text).is_err());
    }

    proptest! {
        #[test]
        fn random_euclidean_orbits_round_trip(
            coords in proptest::collection::vec(-1e6f64..1e6, 6),
            entries in proptest::collection::vec(-1e3f64..1e3, 12),
        ) {
            let points: Vec<DVector<f64>> = coords.chunks(2).map(DVector::from_row_slice).collect();
            let distinct = (0..3).all(|i| (0..i).all(|j| (&points[i] - &points[j]).norm() > 1e-6));
            prop_assume!(distinct);
            let jacobians: Vec<DMatrix<f64>> = entries.chunks(4).map(|c| DMatrix::from_row_slice(2, 2, c)).collect();
            let orbit = PeriodicOrbit::from_parts(ModelSpace::euclidean(2), points, jacobians, 3).unwrap();
            let back = parse_orbits(&write_orbits(std::slice::from_ref(&orbit))).unwrap();
            prop_assert_eq!(back, vec![orbit]);
        }

        #[test]
        fn parser_never_panics(text in "\\PC{0,200}") {
            let _ = parse_orbits(&text);
        }
    }
}
