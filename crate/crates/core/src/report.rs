//! Machine-readable reports: JSON with stable field order and CSV rows.
//!
//! Rationals are emitted as `"p/q"` strings (integers as `"p"`), floats as
//! JSON numbers with 17 significant digits, non-finite floats as `null`.

use std::io;

use num_rational::BigRational;
use serde::{Serialize, Serializer};
use serde_json::ser::Formatter;
use serde_json::{Map, Value};

pub fn rational<S: Serializer>(x: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

pub fn opt_rational<S: Serializer>(x: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(x) => s.serialize_str(&x.to_string()),
        None => s.serialize_none(),
    }
}

pub fn rationals<S: Serializer>(xs: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| x.to_string()))
}

pub fn rational_map<S: Serializer>(xs: &std::collections::BTreeMap<i64, BigRational>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_map(xs.iter().map(|(k, v)| (k.to_string(), v.to_string())))
}

pub fn bigint<S: Serializer>(x: &num_bigint::BigInt, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

/// Float text used in both JSON and CSV.
pub fn float_text(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

/// Compact JSON formatter that writes every float with 17 significant digits.
struct FixedFloats;

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(float_text(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Report header and body.
#[derive(Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub tool: &'a str,
    pub version: &'a str,
    pub command: &'a str,
    pub config: &'a C,
    pub result: &'a R,
}

pub fn envelope<'a, C: Serialize, R: Serialize>(command: &'a str, config: &'a C, result: &'a R) -> Envelope<'a, C, R> {
    Envelope { tool: "siegel", version: env!("CARGO_PKG_VERSION"), command, config, result }
}

pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloats);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("JSON is UTF-8"))
}

/// Flattens nested objects into dotted keys; arrays become JSON text.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Number(n) => {
            let text = match n.as_f64() {
                Some(f) if !n.is_i64() && !n.is_u64() => float_text(f),
                _ => n.to_string(),
            };
            out.push((prefix.to_string(), text))
        }
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Array(_) => out.push((prefix.to_string(), to_json(v).unwrap().trim_end().to_string())),
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV line per record, columns from the union of flattened keys in
/// first-seen order. A leading comment line carries the tool version.
pub fn to_csv<T: Serialize>(records: &[T]) -> serde_json::Result<String> {
    let rows: Vec<Vec<(String, String)>> = records
        .iter()
        .map(|r| {
            let v = serde_json::to_value(r)?;
            let mut out = Vec::new();
            match &v {
                Value::Object(_) => flatten("", &v, &mut out),
                other => flatten("value", other, &mut out),
            }
            Ok(out)
        })
        .collect::<serde_json::Result<_>>()?;
    let mut columns: Vec<String> = Vec::new();
    for row in &rows {
        for (k, _) in row {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    let mut text = format!("# siegel {}\n", env!("CARGO_PKG_VERSION"));
    text += &columns.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(",");
    text.push('\n');
    for row in &rows {
        let cells: Vec<String> = columns
            .iter()
            .map(|c| row.iter().find(|(k, _)| k == c).map(|(_, v)| csv_cell(v)).unwrap_or_default())
            .collect();
        text += &cells.join(",");
        text.push('\n');
    }
    Ok(text)
}

/// Converts a serializable value to a JSON object map, for assembling records.
pub fn to_map<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value) {
        Ok(Value::Object(m)) => m,
        Ok(other) => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
        Err(e) => {
            let mut m = Map::new();
            m.insert("error".into(), Value::String(e.to_string()));
            m
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[derive(Serialize)]
    struct Rec {
        #[serde(serialize_with = "rational")]
        q: BigRational,
        x: f64,
        n: u32,
    }

    #[test]
    fn rationals_and_floats() {
        let r = Rec { q: BigRational::new(BigInt::from(1), BigInt::from(3)), x: 0.1, n: 7 };
        let s = to_json(&r).unwrap();
        assert_eq!(s, "{\"q\":\"1/3\",\"x\":1.0000000000000001e-1,\"n\":7}\n");
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn csv_rows_match_records() {
        let recs: Vec<Rec> =
            (1..=4).map(|i| Rec { q: BigRational::new(BigInt::from(i), BigInt::from(2)), x: i as f64, n: i }).collect();
        let csv = to_csv(&recs).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2 + recs.len());
        assert_eq!(lines[1], "q,x,n");
        assert_eq!(lines[2], "1/2,1.0000000000000000e0,1");
        assert_eq!(lines[3], "1,2.0000000000000000e0,2");
    }

    #[test]
    fn non_finite_is_null() {
        assert_eq!(to_json(&f64::INFINITY).unwrap(), "null\n");
    }
}
