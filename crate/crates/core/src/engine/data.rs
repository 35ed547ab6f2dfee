use serde_json::Value;

use super::EngineError;
use crate::model::{DataSpec, DataType, Validation};

fn json_type(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "text",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Type-checks `value` against the data spec and returns whether it passes the
/// spec's validation. A wrong type is an error; an out-of-range value is
/// merely invalid.
pub fn check_value(spec: &DataSpec, value: &Value) -> Result<bool, EngineError> {
    let mismatch = || EngineError::TypeMismatch {
        field: spec.field_name.clone(),
        expected: spec.datatype.to_string(),
        got: json_type(value).to_string(),
    };
    let in_range = |x: f64| match &spec.validation {
        Some(Validation::Range { min, max }) => *min <= x && x <= *max,
        _ => true,
    };
    match (&spec.datatype, value) {
        (DataType::Number, Value::Number(n)) => Ok(n.as_f64().is_some_and(in_range)),
        (DataType::Integer, Value::Number(n)) => {
            let x = n.as_f64().ok_or_else(mismatch)?;
            if n.is_i64() || n.is_u64() || x.fract() == 0.0 {
                Ok(in_range(x))
            } else {
                Err(mismatch())
            }
        }
        (DataType::Boolean, Value::Bool(_)) => Ok(true),
        (DataType::Text, Value::String(s)) => Ok(match &spec.validation {
            Some(Validation::Regex(p)) => regex::Regex::new(p).map(|re| re.is_match(s)).unwrap_or(false),
            _ => true,
        }),
        (DataType::Enum(values), Value::String(s)) => Ok(values.iter().any(|v| v == s)),
        _ => Err(mismatch()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn spec(datatype: DataType, validation: Option<Validation>) -> DataSpec {
        DataSpec { field_name: "f".into(), datatype, validation, telemetry_key: None }
    }

    #[test]
    fn ranges_and_types() {
        let fixes = spec(DataType::Integer, Some(Validation::Range { min: 6.0, max: 30.0 }));
        assert_eq!(check_value(&fixes, &json!(12)), Ok(true));
        assert_eq!(check_value(&fixes, &json!(0)), Ok(false));
        assert!(check_value(&fixes, &json!(12.5)).is_err());
        assert!(check_value(&fixes, &json!("12")).is_err());
        let mode = spec(DataType::Enum(vec!["GUIDED".into(), "LOITER".into(), "RTL".into()]), None);
        assert_eq!(check_value(&mode, &json!("RTL")), Ok(true));
        assert_eq!(check_value(&mode, &json!("AUTO")), Ok(false));
        let code = spec(DataType::Text, Some(Validation::Regex("^[A-Z]{2}\\d$".into())));
        assert_eq!(check_value(&code, &json!("AB1")), Ok(true));
        assert_eq!(check_value(&code, &json!("ab1")), Ok(false));
    }
}
