//! Recorded request/response pairs in `tests/golden`, replayed against a
//! fresh recognition service. Set `RECORD_GOLDEN=1` to rewrite the expected
//! responses.

#![allow(dead_code)]

use std::path::PathBuf;

use reqwest::Method;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exchange {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advance_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pgm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

pub fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/conformance.json")
}

pub fn replay(exchanges: &mut [Exchange]) -> Vec<String> {
    let served = super::serve_faces();
    let http = super::http();
    let mut mismatches = Vec::new();
    for ex in exchanges.iter_mut() {
        if let Some(ms) = ex.advance_ms {
            served.clock.advance(ms);
            continue;
        }
        let method: Method = ex.method.as_deref().unwrap().parse().unwrap();
        let url = format!("{}{}", served.server.url(), ex.path.as_deref().unwrap());
        let mut req = http.request(method, &url);
        if ex.api_key != Some(false) {
            req = req.header("X-Api-Key", super::API_KEY);
        }
        if let Some(j) = &ex.json {
            req = req
                .header("content-type", "application/json")
                .body(j.clone());
        } else if let Some(b) = ex.pgm.as_ref().or(ex.raw.as_ref()) {
            req = req
                .header("content-type", "application/octet-stream")
                .body(b.clone());
        }
        let resp = req.send().unwrap();
        let status = resp.status().as_u16();
        let body = resp.text().unwrap();
        if ex.status != Some(status) || ex.response.as_deref() != Some(body.as_str()) {
            mismatches.push(format!(
                "{}: expected {:?} {:?}, got {} {:?}",
                ex.name, ex.status, ex.response, status, body
            ));
        }
        ex.status = Some(status);
        ex.response = Some(body);
    }
    mismatches
}

pub fn check_goldens() -> Vec<String> {
    let text = std::fs::read_to_string(golden_path()).unwrap();
    let mut exchanges: Vec<Exchange> = serde_json::from_str(&text).unwrap();
    let mismatches = replay(&mut exchanges);
    if std::env::var_os("RECORD_GOLDEN").is_some() {
        let out = serde_json::to_string_pretty(&exchanges).unwrap() + "\n";
        std::fs::write(golden_path(), out).unwrap();
    }
    mismatches
}
