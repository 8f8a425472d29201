//! The CSV row written for each (design, ε, seed) estimate.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize, Serializer};

use crate::format::{format_sig, round_sig};
use crate::Result;

fn sig<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_sig(*x))
}

fn sig_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_str(&format_sig(*v)),
        None => s.serialize_str(""),
    }
}

/// One estimate. Real fields are stored already rounded to the CSV precision,
/// so a record read back from disk compares equal to the one written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub model: String,
    pub design: String,
    pub estimator: String,
    pub robust_mode: String,
    #[serde(serialize_with = "sig")]
    pub epsilon: f64,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    #[serde(serialize_with = "sig")]
    pub value: f64,
    /// Empty when no dual solve was involved; `inf` for `ε = 0`.
    #[serde(serialize_with = "sig_opt")]
    pub lambda_star: Option<f64>,
    pub clip_count: usize,
    #[serde(serialize_with = "sig")]
    pub runtime_ms: f64,
}

impl EstimateRecord {
    /// Round real fields to the CSV precision.
    pub fn normalised(mut self) -> Self {
        self.epsilon = round_sig(self.epsilon);
        self.value = round_sig(self.value);
        self.lambda_star = self.lambda_star.map(round_sig);
        self.runtime_ms = round_sig(self.runtime_ms);
        self
    }
}

pub fn write_records<W: Write>(writer: W, records: &[EstimateRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(writer);
    if records.is_empty() {
        w.write_record([
            "model", "design", "estimator", "robust_mode", "epsilon", "N1", "N2", "M", "seed", "value",
            "lambda_star", "clip_count", "runtime_ms",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<EstimateRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EstimateRecord {
        EstimateRecord {
            model: "ab".into(),
            design: "3".into(),
            estimator: "vnmc".into(),
            robust_mode: "reig".into(),
            epsilon: 0.1,
            n1: 100,
            n2: 10,
            m: 30,
            seed: 7,
            value: 4.123456789012345,
            lambda_star: Some(0.7654321098765),
            clip_count: 0,
            runtime_ms: 12.5,
        }
        .normalised()
    }

    #[test]
    fn header_and_round_trip() {
        let mut none = sample();
        none.lambda_star = None;
        let mut inf = sample();
        inf.lambda_star = Some(f64::INFINITY);
        let records = vec![sample(), none, inf];
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "model,design,estimator,robust_mode,epsilon,N1,N2,M,seed,value,lambda_star,clip_count,runtime_ms\n"
        ));
        assert!(text.contains(",4.12345678901,0.765432109877,"));
        assert_eq!(read_records(buf.as_slice()).unwrap(), records);
    }
}
