//! JSON payloads accepted on the command line.
//!
//! Values are pulled out field by field so that errors name the field.

use gaussrep::{Gaussian2, Obb, PointSet, Qbb, Vec2};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Representation {
    Obb,
    Qbb,
    Points,
    Gaussian,
}

#[derive(Debug, Clone)]
pub enum Payload {
    Obb(Obb),
    Qbb(Qbb),
    Points(PointSet),
    Gaussian(Gaussian2),
}

impl Payload {
    pub fn to_gaussian(&self) -> Result<Gaussian2, CliError> {
        Ok(match self {
            Payload::Obb(b) => gaussrep::geometry::obb_to_gaussian(b)?,
            Payload::Qbb(q) => gaussrep::geometry::fit_gaussian_mle(&q.corners)?,
            Payload::Points(p) => gaussrep::geometry::fit_gaussian_mle(p.points())?,
            Payload::Gaussian(g) => *g,
        })
    }
}

pub fn parse_json(text: &str, what: &str) -> Result<Value, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::usage(format!("{what}: malformed JSON: {e}")))
}

fn object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>, CliError> {
    v.as_object()
        .ok_or_else(|| CliError::usage(format!("{what}: expected a JSON object")))
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, what: &str) -> Result<&'a Value, CliError> {
    obj.get(name)
        .ok_or_else(|| CliError::usage(format!("{what}: missing field `{name}`")))
}

fn number(v: &Value, name: &str, what: &str) -> Result<f64, CliError> {
    v.as_f64()
        .ok_or_else(|| CliError::usage(format!("{what}: field `{name}` must be a number")))
}

fn pair(v: &Value, name: &str, what: &str) -> Result<Vec2, CliError> {
    match v.as_array().map(Vec::as_slice) {
        Some([x, y]) => Ok(Vec2::new(number(x, name, what)?, number(y, name, what)?)),
        _ => Err(CliError::usage(format!(
            "{what}: field `{name}` must be a pair [x, y]"
        ))),
    }
}

fn pairs(v: &Value, name: &str, what: &str) -> Result<Vec<Vec2>, CliError> {
    let items = v
        .as_array()
        .ok_or_else(|| CliError::usage(format!("{what}: field `{name}` must be an array")))?;
    items
        .iter()
        .enumerate()
        .map(|(i, p)| pair(p, &format!("{name}[{i}]"), what))
        .collect()
}

/// Guesses the representation from the keys present.
pub fn detect(v: &Value, what: &str) -> Result<Representation, CliError> {
    let obj = object(v, what)?;
    let has = |k: &str| obj.contains_key(k);
    if has("mu") || has("sigma") {
        Ok(Representation::Gaussian)
    } else if has("cx") {
        Ok(Representation::Obb)
    } else if has("corners") {
        Ok(Representation::Qbb)
    } else if has("points") {
        Ok(Representation::Points)
    } else {
        Err(CliError::usage(format!(
            "{what}: cannot tell the representation; expected one of the keys `cx`, `corners`, `points`, `mu`"
        )))
    }
}

pub fn decode(v: &Value, rep: Representation, what: &str) -> Result<Payload, CliError> {
    let obj = object(v, what)?;
    match rep {
        Representation::Obb => {
            let get = |k: &str| number(field(obj, k, what)?, k, what);
            let b = Obb {
                cx: get("cx")?,
                cy: get("cy")?,
                w: get("w")?,
                h: get("h")?,
                theta: get("theta")?,
            };
            b.validate()?;
            Ok(Payload::Obb(b))
        }
        Representation::Qbb => {
            let corners = pairs(field(obj, "corners", what)?, "corners", what)?;
            let corners: [Vec2; 4] = corners.try_into().map_err(|c: Vec<Vec2>| {
                CliError::usage(format!(
                    "{what}: field `corners` must hold 4 points, got {}",
                    c.len()
                ))
            })?;
            if corners.iter().any(|p| !p.is_finite()) {
                return Err(CliError::usage(format!("{what}: field `corners` must be finite")));
            }
            Ok(Payload::Qbb(Qbb::new(corners)))
        }
        Representation::Points => {
            let pts = pairs(field(obj, "points", what)?, "points", what)?;
            Ok(Payload::Points(PointSet::new(pts)?))
        }
        Representation::Gaussian => {
            let mu = pair(field(obj, "mu", what)?, "mu", what)?;
            let rows = pairs(field(obj, "sigma", what)?, "sigma", what)?;
            let rows: [Vec2; 2] = rows.try_into().map_err(|_| {
                CliError::usage(format!("{what}: field `sigma` must be a 2×2 matrix"))
            })?;
            let g = Gaussian2::from_rows(mu, [[rows[0].x, rows[0].y], [rows[1].x, rows[1].y]])?;
            Ok(Payload::Gaussian(g))
        }
    }
}

/// Reads `arg` as inline JSON if it starts with `{`, otherwise as a file path.
pub fn load_arg(arg: &str, what: &str) -> Result<Value, CliError> {
    if arg.trim_start().starts_with('{') {
        parse_json(arg, what)
    } else {
        let text = std::fs::read_to_string(arg)
            .map_err(|e| CliError::usage(format!("{what}: cannot read {arg}: {e}")))?;
        parse_json(&text, what)
    }
}

pub fn load_gaussian(arg: &str, what: &str) -> Result<Gaussian2, CliError> {
    let v = load_arg(arg, what)?;
    decode(&v, detect(&v, what)?, what)?.to_gaussian()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detection_by_keys() {
        let cases = [
            (r#"{"cx":0,"cy":0,"w":2,"h":1,"theta":0}"#, Representation::Obb),
            (r#"{"corners":[[0,0],[1,0],[1,1],[0,1]]}"#, Representation::Qbb),
            (r#"{"points":[[0,0],[1,0],[0,1]]}"#, Representation::Points),
            (r#"{"mu":[0,0],"sigma":[[1,0],[0,1]]}"#, Representation::Gaussian),
        ];
        for (text, rep) in cases {
            let v = parse_json(text, "t").unwrap();
            assert_eq!(detect(&v, "t").unwrap(), rep);
            decode(&v, rep, "t").unwrap().to_gaussian().unwrap();
        }
    }

    #[test]
    fn errors_name_fields() {
        let v = parse_json(r#"{"cx":0,"cy":0,"h":1,"theta":0}"#, "gt").unwrap();
        let e = decode(&v, Representation::Obb, "gt").unwrap_err();
        assert!(e.message.contains("`w`"), "{}", e.message);
        assert_eq!(e.code, 2);
        let v = parse_json(r#"{"cx":0,"cy":"a","w":1,"h":1,"theta":0}"#, "gt").unwrap();
        assert!(decode(&v, Representation::Obb, "gt").unwrap_err().message.contains("`cy`"));
        let v = parse_json(r#"{"cx":0,"cy":0,"w":-1,"h":1,"theta":0}"#, "gt").unwrap();
        assert!(decode(&v, Representation::Obb, "gt").unwrap_err().message.contains("`w`"));
    }

    #[test]
    fn degenerate_points_exit_three() {
        let v = parse_json(r#"{"points":[[1,1],[1,1],[1,1]]}"#, "p").unwrap();
        let e = decode(&v, Representation::Points, "p").unwrap().to_gaussian().unwrap_err();
        assert_eq!(e.code, 3);
    }
}
