//! Canonical JSON rendering for stable artifact hashes.
//!
//! Object keys are emitted in sorted order and floating-point numbers with 17
//! significant digits (`{:.16e}`), which round-trips every finite `f64`
//! bit-exactly. Two values that compare equal therefore always render to the
//! same bytes, independent of platform or map iteration order.

use serde::Serialize;
use serde_json::Value;

/// Render any serializable value as a canonical single-line JSON string.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, &mut out);
    Ok(out)
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                out.push_str(&n.to_string());
            } else {
                // 17 significant digits: shortest count that round-trips f64.
                let f = n.as_f64().expect("JSON numbers are finite");
                out.push_str(&format!("{f:.16e}"));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("strings always serialize"));
                out.push(':');
                write_value(&map[key.as_str()], out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_floats_fixed_width() {
        let v = json!({"b": 0.5, "a": 1u64, "c": {"z": true, "y": [1.0, 2.0]}});
        let s = to_canonical_string(&v).unwrap();
        assert_eq!(
            s,
            r#"{"a":1,"b":5.0000000000000000e-1,"c":{"y":[1.0000000000000000e0,2.0000000000000000e0],"z":true}}"#
        );
    }

    #[test]
    fn float_formatting_round_trips_exactly() {
        let cases = [
            0.1,
            1.0 / 3.0,
            0.123_456_789_012_345_68,
            1e-300,
            -2.5e200,
            f64::MIN_POSITIVE,
            0.0,
        ];
        for &x in &cases {
            let rendered = format!("{x:.16e}");
            let back: f64 = rendered.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {rendered} -> {back}");
        }
    }

    #[test]
    fn rendering_is_reproducible() {
        let v = json!({"alpha": 0.1, "n": 999, "kind": "gap"});
        assert_eq!(
            to_canonical_string(&v).unwrap(),
            to_canonical_string(&v).unwrap()
        );
    }
}
