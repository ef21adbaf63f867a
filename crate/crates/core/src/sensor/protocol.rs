//! Line-oriented sensor protocol.
//!
//! ```text
//! request:  MEASURE <x> <y>\n      coordinates in cm, 3 fractional digits
//! response: LIGHT <value>\n        value with 4 fractional digits
//!           ERR <token>\n          token: bad_request | out_of_range | busy
//! ```

use super::SensorError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Request {
    Measure { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorToken {
    BadRequest,
    OutOfRange,
    Busy,
}

impl ErrorToken {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorToken::BadRequest => "bad_request",
            ErrorToken::OutOfRange => "out_of_range",
            ErrorToken::Busy => "busy",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "bad_request" => Some(ErrorToken::BadRequest),
            "out_of_range" => Some(ErrorToken::OutOfRange),
            "busy" => Some(ErrorToken::Busy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Response {
    Light(f64),
    Err(ErrorToken),
}

pub fn format_coordinate(v: f64) -> String {
    format!("{v:.3}")
}

pub fn format_value(v: f64) -> String {
    format!("{v:.4}")
}

/// Request line including the trailing newline.
pub fn format_request(x: f64, y: f64) -> String {
    format!("MEASURE {} {}\n", format_coordinate(x), format_coordinate(y))
}

/// Response line including the trailing newline.
pub fn format_response(r: &Response) -> String {
    match r {
        Response::Light(v) => format!("LIGHT {}\n", format_value(*v)),
        Response::Err(t) => format!("ERR {}\n", t.as_str()),
    }
}

fn finite(tok: &str) -> Option<f64> {
    tok.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn parse_request(line: &str) -> Option<Request> {
    let mut parts = line.trim_end_matches(['\n', '\r']).split(' ');
    match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some("MEASURE"), Some(x), Some(y), None) => Some(Request::Measure {
            x: finite(x)?,
            y: finite(y)?,
        }),
        _ => None,
    }
}

pub fn parse_response(line: &str) -> Result<Response, SensorError> {
    let body = line.trim_end_matches(['\n', '\r']);
    let bad = || SensorError::Protocol(format!("{body:?}"));
    let (head, rest) = body.split_once(' ').ok_or_else(bad)?;
    match head {
        "LIGHT" => finite(rest).map(Response::Light).ok_or_else(bad),
        "ERR" => ErrorToken::parse(rest).map(Response::Err).ok_or_else(bad),
        _ => Err(bad()),
    }
}

/// Converts a parsed response into a reading value or the matching error.
pub fn response_value(r: Response, x: f64, y: f64) -> Result<f64, SensorError> {
    match r {
        Response::Light(v) => Ok(v),
        Response::Err(ErrorToken::OutOfRange) => Err(SensorError::OutOfField { x, y }),
        Response::Err(ErrorToken::Busy) => Err(SensorError::Busy),
        Response::Err(ErrorToken::BadRequest) => Err(SensorError::BadRequest),
    }
}
