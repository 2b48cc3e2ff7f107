//! Dataset loaders. Each normalizes records into [`RawRequest`]s with a
//! label, then splits them with [`LabeledCorpus::split`] unless the file
//! says otherwise.
//!
//! - `jsonl`: the ingest line format plus an optional `"split"` field
//!   (`"train"` or `"test"`). Without any `split` field the benign records
//!   are halved.
//! - `csic_csv`: the CSV export of CSIC 2010 (columns `Method`, `URL`,
//!   `content`, `classification` and one column per header). Column names
//!   are matched case-insensitively; a trailing ` HTTP/1.1` on the URL is
//!   dropped; `classification` 0 / `Normal` is benign. Benign records are
//!   halved.
//! - `atrdf_json`: a JSON array (or JSON lines) of objects with a `request`
//!   object (`method`, `url`, `headers`, `body`) and an attack tag under
//!   `request.Attack_Tag` or `Attack_Tag`. Records without a tag are benign.
//!   Benign records are halved.

use std::path::Path;

use serde_json::Value;

use super::{LabeledCorpus, BENIGN_LABEL};
use crate::error::{Error, Result};
use crate::request::RawRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    CsicCsv,
    AtrdfJson,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "csic_csv" | "csic" => Ok(DatasetFormat::CsicCsv),
            "atrdf_json" | "atrdf" => Ok(DatasetFormat::AtrdfJson),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.5;

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LabeledCorpus> {
    let text = std::fs::read_to_string(path)?;
    match format {
        DatasetFormat::Jsonl => parse_jsonl(&text),
        DatasetFormat::CsicCsv => Ok(LabeledCorpus::split(
            parse_csic_csv(&text)?,
            DEFAULT_TRAIN_FRACTION,
        )),
        DatasetFormat::AtrdfJson => Ok(LabeledCorpus::split(
            parse_atrdf(&text)?,
            DEFAULT_TRAIN_FRACTION,
        )),
    }
}

fn format_err(line: usize, detail: impl ToString) -> Error {
    Error::Format {
        line,
        detail: detail.to_string(),
    }
}

pub fn parse_jsonl(text: &str) -> Result<LabeledCorpus> {
    let mut records = Vec::new();
    let mut splits = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| format_err(i + 1, e))?;
        let split = v.get("split").and_then(Value::as_str).map(str::to_string);
        let r = RawRequest::from_json_line(line).map_err(|e| format_err(i + 1, e))?;
        records.push(r);
        splits.push(split);
    }
    if splits.iter().all(Option::is_none) {
        return Ok(LabeledCorpus::split(records, DEFAULT_TRAIN_FRACTION));
    }
    let mut c = LabeledCorpus::default();
    for (r, s) in records.into_iter().zip(splits) {
        if s.as_deref() == Some("train") {
            c.train.push(r);
        } else {
            c.test.push(r);
        }
    }
    if !c.train_is_clean() {
        return Err(format_err(
            0,
            "training split contains attack-labeled records",
        ));
    }
    Ok(c)
}

/// Header columns of the CSIC CSV export and the header names they carry.
const CSIC_HEADERS: [(&str, &str); 11] = [
    ("user-agent", "user-agent"),
    ("pragma", "pragma"),
    ("cache-control", "cache-control"),
    ("accept", "accept"),
    ("accept-encoding", "accept-encoding"),
    ("accept-charset", "accept-charset"),
    ("language", "accept-language"),
    ("host", "host"),
    ("cookie", "cookie"),
    ("content-type", "content-type"),
    ("connection", "connection"),
];

pub fn parse_csic_csv(text: &str) -> Result<Vec<RawRequest>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| format_err(1, e))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if headers.iter().all(String::is_empty) {
        return Ok(Vec::new());
    }
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.as_str()));
    let method_c = col(&["method"]).ok_or_else(|| format_err(1, "missing Method column"))?;
    let url_c = col(&["url"]).ok_or_else(|| format_err(1, "missing URL column"))?;
    let class_c = col(&["classification", "label", "class"])
        .ok_or_else(|| format_err(1, "missing classification column"))?;
    let body_c = col(&["content", "body"]);
    let header_cols: Vec<(usize, &str)> = CSIC_HEADERS
        .iter()
        .filter_map(|(c, name)| col(&[c]).map(|i| (i, *name)))
        .collect();

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format_err(line, e))?;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let mut url = field(url_c).to_string();
        for suffix in [" HTTP/1.1", " HTTP/1.0"] {
            if let Some(u) = url.strip_suffix(suffix) {
                url = u.to_string();
            }
        }
        let method = field(method_c);
        if method.is_empty() || url.is_empty() {
            return Err(format_err(line, "empty method or URL"));
        }
        let class = field(class_c).to_ascii_lowercase();
        let label = match class.as_str() {
            "0" | "normal" | "valid" => BENIGN_LABEL.to_string(),
            "1" | "anomalous" | "attack" => "anomalous".to_string(),
            other => {
                return Err(format_err(
                    line,
                    format!("unknown classification {other:?}"),
                ))
            }
        };
        let mut r = RawRequest::new(method, url).label(label);
        for (c, name) in &header_cols {
            let v = field(*c);
            if !v.is_empty() {
                r = r.header(*name, v);
            }
        }
        if let Some(c) = body_c {
            r.body = field(c).as_bytes().to_vec();
        }
        out.push(r);
    }
    Ok(out)
}

fn atrdf_record(v: &Value, line: usize) -> Result<RawRequest> {
    let req = v.get("request").unwrap_or(v);
    let method = req
        .get("method")
        .and_then(Value::as_str)
        .ok_or_else(|| format_err(line, "missing request.method"))?;
    let url = req
        .get("url")
        .and_then(Value::as_str)
        .ok_or_else(|| format_err(line, "missing request.url"))?;
    let mut r = RawRequest::new(method, url);
    match req.get("headers") {
        Some(Value::Object(m)) => {
            for (k, val) in m {
                let s = match val {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                r = r.header(k.clone(), s);
            }
        }
        Some(Value::Array(a)) => {
            for pair in a {
                if let (Some(k), Some(val)) = (
                    pair.get(0).and_then(Value::as_str),
                    pair.get(1).and_then(Value::as_str),
                ) {
                    r = r.header(k, val);
                }
            }
        }
        _ => {}
    }
    match req.get("body") {
        Some(Value::String(s)) => r.body = s.as_bytes().to_vec(),
        Some(Value::Null) | None => {}
        Some(other) => r.body = other.to_string().into_bytes(),
    }
    let tag = v
        .get("request.Attack_Tag")
        .or_else(|| v.get("Attack_Tag"))
        .or_else(|| req.get("Attack_Tag"))
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty());
    Ok(match tag {
        Some(t) => r.label(format!("attack:{t}")),
        None => r.label(BENIGN_LABEL),
    })
}

pub fn parse_atrdf(text: &str) -> Result<Vec<RawRequest>> {
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        let all: Vec<Value> = serde_json::from_str(text).map_err(|e| format_err(e.line(), e))?;
        return all
            .iter()
            .enumerate()
            .map(|(i, v)| atrdf_record(v, i + 1))
            .collect();
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| format_err(i + 1, e))?;
        out.push(atrdf_record(&v, i + 1)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{label_kind, LabelKind};

    #[test]
    fn empty_inputs_give_empty_corpora() {
        assert!(parse_jsonl("").unwrap().is_empty());
        assert!(parse_csic_csv("").unwrap().is_empty());
        assert!(parse_atrdf("  ").unwrap().is_empty());
    }

    #[test]
    fn jsonl_base64_body_round_trips() {
        let body: Vec<u8> = vec![0, 159, 146, 150, 255];
        let mut r = RawRequest::new("POST", "/upload").label("normal");
        r.body = body.clone();
        let c = parse_jsonl(&format!("{}\n", r.to_json_line())).unwrap();
        assert_eq!(c.test[0].body, body);
    }

    #[test]
    fn jsonl_split_field_and_line_numbers() {
        let text = "{\"method\":\"GET\",\"url\":\"/a\",\"split\":\"train\"}\n{\"method\":\"GET\",\"url\":\"/b\",\"label\":\"attack:XSS:url\",\"split\":\"test\"}\n";
        let c = parse_jsonl(text).unwrap();
        assert_eq!((c.train.len(), c.test.len()), (1, 1));
        match parse_jsonl("{\"method\":\"GET\",\"url\":\"/a\"}\nnot json\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csic_rows_become_records() {
        let csv = "\"\",Method,User-Agent,Pragma,Cache-Control,Accept,Accept-encoding,Accept-charset,language,host,cookie,content-type,connection,lenght,content,classification,URL\n\
0,GET,Mozilla/5.0,no-cache,no-cache,text/html,\"gzip, deflate\",utf-8,en,localhost:8080,JSESSIONID=1,,close,,,0,http://localhost:8080/tienda1/index.jsp HTTP/1.1\n\
1,POST,Mozilla/5.0,no-cache,no-cache,text/html,\"gzip, deflate\",utf-8,en,localhost:8080,JSESSIONID=2,application/x-www-form-urlencoded,close,68,id=3&nombre=Vino'+OR+1=1,1,http://localhost:8080/tienda1/anadir.jsp HTTP/1.1\n";
        let recs = parse_csic_csv(csv).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].url, "http://localhost:8080/tienda1/index.jsp");
        assert_eq!(label_kind(recs[0].label.as_deref()), LabelKind::Benign);
        assert!(matches!(
            label_kind(recs[1].label.as_deref()),
            LabelKind::Attack { .. }
        ));
        assert_eq!(recs[1].body, b"id=3&nombre=Vino'+OR+1=1");
        assert!(recs[1]
            .headers
            .iter()
            .any(|(k, v)| k == "accept-language" && v == "en"));
    }

    #[test]
    fn atrdf_array_with_tags() {
        let text = r#"[
            {"request": {"method": "GET", "url": "/api/x", "headers": {"Host": "h"}, "body": ""}},
            {"request": {"method": "POST", "url": "/api/y", "headers": {}, "body": "a=1"}, "request.Attack_Tag": "SQL Injection"}
        ]"#;
        let recs = parse_atrdf(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(label_kind(recs[0].label.as_deref()), LabelKind::Benign);
        assert_eq!(
            label_kind(recs[1].label.as_deref()),
            LabelKind::Attack {
                tag: "SQL Injection".into(),
                placement: None
            }
        );
    }
}
