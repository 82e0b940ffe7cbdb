//! Wire format: one JSON object per WebSocket text frame.

use serde::Deserialize;
use serde_json::{json, Value};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const NOT_SUSPENDED: i64 = 1001;
pub const ALREADY_RUNNING: i64 = 1002;
pub const EVAL_FAILED: i64 = 1003;
pub const NOT_RUNNING: i64 = 1004;

/// Close code sent to a client that connects while another is attached.
pub const CLOSE_BUSY: u16 = 4000;
/// Close code sent when the client falls `EVENT_QUEUE_CAPACITY` messages
/// behind.
pub const CLOSE_OVERFLOW: u16 = 4001;
pub const EVENT_QUEUE_CAPACITY: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub id: Value,
    pub method: String,
    pub params: Value,
}

#[derive(Deserialize)]
struct RawRequest {
    id: Value,
    method: String,
    #[serde(default)]
    params: Value,
}

/// Parses a request frame, or returns the error response to send back.
pub fn parse_request(text: &str) -> Result<Request, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| error(&Value::Null, PARSE_ERROR, &e.to_string()))?;
    let id = value.get("id").cloned().unwrap_or(Value::Null);
    let raw: RawRequest = serde_json::from_value(value).map_err(|e| error(&id, INVALID_REQUEST, &e.to_string()))?;
    if !raw.id.is_i64() && !raw.id.is_u64() {
        return Err(error(&raw.id, INVALID_REQUEST, "id must be an integer"));
    }
    let params = if raw.params.is_null() { json!({}) } else { raw.params };
    Ok(Request {
        id: raw.id,
        method: raw.method,
        params,
    })
}

pub fn response(id: &Value, result: Value) -> String {
    json!({"id": id, "result": result}).to_string()
}

pub fn error(id: &Value, code: i64, message: &str) -> String {
    json!({"id": id, "error": {"code": code, "message": message}}).to_string()
}

pub fn event(method: &str, params: Value) -> String {
    json!({"method": method, "params": params}).to_string()
}

#[derive(Deserialize)]
pub struct SourceGet {
    pub name: String,
}

#[derive(Deserialize)]
pub struct BpSet {
    pub source: String,
    pub line: usize,
    #[serde(default)]
    pub condition: Option<String>,
}

#[derive(Deserialize)]
pub struct BpRemove {
    pub id: u32,
}

#[derive(Deserialize)]
pub struct Run {
    pub source: String,
    #[serde(default)]
    pub args: Vec<Value>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scopes {
    pub frame_index: usize,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Eval {
    pub frame_index: usize,
    pub text: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_parsing() {
        let r = parse_request(r#"{"id":3,"method":"stack"}"#).unwrap();
        assert_eq!(r.params, json!({}));
        let e = parse_request("{").unwrap_err();
        assert!(e.contains("-32700"));
        let e = parse_request(r#"{"id":"x","method":"stack"}"#).unwrap_err();
        assert!(e.contains("-32600"));
        let e = parse_request(r#"{"id":1}"#).unwrap_err();
        assert!(e.contains(r#""id":1"#) && e.contains("-32600"));
    }

    #[test]
    fn framing() {
        assert_eq!(
            response(&json!(1), json!({"id":1,"resolved":true})),
            r#"{"id":1,"result":{"id":1,"resolved":true}}"#
        );
        assert_eq!(
            error(&json!(2), NOT_SUSPENDED, "not suspended"),
            r#"{"id":2,"error":{"code":1001,"message":"not suspended"}}"#
        );
    }
}
