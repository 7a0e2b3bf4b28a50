//! File formats: scan CSV, metadata sidecar, label CSV, JSON exports and
//! plot series.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{Label, ScanMeta, ScanSet, SensorFrame, SensorPoint};
use crate::segmentation::GmmModel;

/// One `key=value` entry with the line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: u64,
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k as u64 + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(Error::Parse { line, message: format!("expected key=value, got {body:?}") });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse { line, message: "empty key".into() });
        }
        if out.iter().any(|e: &Entry| e.key == key) {
            return Err(Error::Parse { line, message: format!("duplicate key {key:?}") });
        }
        out.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
    }
    Ok(out)
}

/// Parses an entry value, reporting its line on failure.
pub fn parse_value<T: std::str::FromStr>(e: &Entry) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse()
        .map_err(|err: T::Err| Error::Parse { line: e.line, message: format!("{}: {err}", e.key) })
}

pub fn read_meta(text: &str) -> Result<ScanMeta> {
    let entries = parse_key_values(text)?;
    let mut fc = None;
    let mut ppf = None;
    let mut d = None;
    let mut gamma = None;
    for e in &entries {
        match e.key.as_str() {
            "frame_count" => fc = Some(parse_value::<usize>(e)?),
            "points_per_frame" => ppf = Some(parse_value::<usize>(e)?),
            "axis_distance_D" => d = Some(parse_value::<f64>(e)?),
            "gamma" => gamma = Some(parse_value::<f64>(e)?),
            other => {
                return Err(Error::Parse { line: e.line, message: format!("unknown metadata key {other:?}") })
            }
        }
    }
    let missing = |name: &str| Error::Parse { line: 0, message: format!("metadata is missing {name}") };
    let meta = ScanMeta::new(
        fc.ok_or_else(|| missing("frame_count"))?,
        ppf.ok_or_else(|| missing("points_per_frame"))?,
        d.ok_or_else(|| missing("axis_distance_D"))?,
        gamma.ok_or_else(|| missing("gamma"))?,
    );
    meta.validate()?;
    Ok(meta)
}

pub fn write_meta(meta: &ScanMeta) -> String {
    format!(
        "frame_count={}\npoints_per_frame={}\naxis_distance_D={}\ngamma={}\n",
        meta.frame_count, meta.points_per_frame, meta.axis_distance, meta.gamma
    )
}

fn line_of(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse { line, message: format!("{kind:?}") },
    }
}

fn field<T: std::str::FromStr>(r: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = r.get(i).ok_or_else(|| Error::Parse { line: line_of(r), message: format!("missing {name}") })?;
    raw.trim().parse().map_err(|_| Error::Parse { line: line_of(r), message: format!("bad {name} value {raw:?}") })
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(csv_error)?;
    let got: Vec<&str> = h.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse { line: 1, message: format!("expected header {}, got {}", expected.join(","), got.join(",")) });
    }
    Ok(())
}

/// Reads a `frame,x,z` scan. Rows of one frame must be contiguous and
/// frames ascending; frames with no rows come back empty.
pub fn read_scan_csv(reader: impl Read, meta: &ScanMeta) -> Result<ScanSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, &["frame", "x", "z"])?;
    let mut frames: Vec<SensorFrame> = (0..meta.frame_count).map(|i| SensorFrame::new(i, Vec::new())).collect();
    let mut last: Option<usize> = None;
    for rec in rdr.records() {
        let r = rec.map_err(csv_error)?;
        let frame: usize = field(&r, 0, "frame")?;
        let x: f64 = field(&r, 1, "x")?;
        let z: f64 = field(&r, 2, "z")?;
        if !x.is_finite() || !z.is_finite() {
            return Err(Error::Parse { line: line_of(&r), message: "non-finite coordinate".into() });
        }
        if frame >= meta.frame_count {
            return Err(Error::Parse {
                line: line_of(&r),
                message: format!("frame {frame} not below frame_count {}", meta.frame_count),
            });
        }
        if let Some(l) = last {
            if frame < l {
                return Err(Error::Parse {
                    line: line_of(&r),
                    message: format!("frame {frame} after frame {l}; frames must be ascending"),
                });
            }
        }
        last = Some(frame);
        frames[frame].points.push(SensorPoint::new(x, z));
    }
    for f in frames.iter_mut() {
        f.sort_by_x();
    }
    Ok(ScanSet::new(*meta, frames))
}

pub fn write_scan_csv(writer: impl Write, scan: &ScanSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["frame", "x", "z"]).map_err(csv_error)?;
    for f in &scan.frames {
        for p in &f.points {
            w.write_record([f.index.to_string(), p.x.to_string(), p.z.to_string()]).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a scan from its CSV and metadata sidecar.
pub fn load_scan(csv_path: &Path, meta_path: &Path) -> Result<ScanSet> {
    let meta = read_meta(&std::fs::read_to_string(meta_path)?)?;
    read_scan_csv(std::fs::File::open(csv_path)?, &meta)
}

/// Writes `scan` as CSV plus sidecar.
pub fn save_scan(scan: &ScanSet, csv_path: &Path, meta_path: &Path) -> Result<()> {
    write_scan_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?), scan)?;
    std::fs::write(meta_path, write_meta(&scan.meta))?;
    Ok(())
}

/// One labelled sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRow {
    pub frame: usize,
    pub x: f64,
    pub z: f64,
    pub label: Label,
}

pub fn write_labels_csv(writer: impl Write, rows: impl IntoIterator<Item = LabelRow>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["frame", "x", "z", "label"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([r.frame.to_string(), r.x.to_string(), r.z.to_string(), r.label.as_str().to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(reader: impl Read) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(&mut rdr, &["frame", "x", "z", "label"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec.map_err(csv_error)?;
        let raw = r.get(3).unwrap_or("");
        let label = Label::parse(raw)
            .ok_or_else(|| Error::Parse { line: line_of(&r), message: format!("unknown label {raw:?}") })?;
        out.push(LabelRow { frame: field(&r, 0, "frame")?, x: field(&r, 1, "x")?, z: field(&r, 2, "z")?, label });
    }
    Ok(out)
}

/// Pairs scan samples, in scan order, with labels.
pub fn label_rows<'a>(scan: &'a ScanSet, labels: &'a [Label]) -> impl Iterator<Item = LabelRow> + 'a {
    scan.samples().zip(labels).map(|((frame, p), &label)| LabelRow { frame, x: p.x, z: p.z, label })
}

/// Fitted mixture as exported to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub iterations: usize,
    pub loglik: f64,
}

impl ModelExport {
    pub fn new(model: &GmmModel, iterations: usize, loglik: f64) -> Self {
        ModelExport { weights: model.weights(), means: model.means(), sigmas: model.sigmas(), iterations, loglik }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Writes equal-length columns as CSV.
pub fn write_series_csv(writer: impl Write, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    if headers.len() != columns.len() {
        return Err(Error::Config(format!("{} headers for {} columns", headers.len(), columns.len())));
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Config("plot columns differ in length".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(headers).map_err(csv_error)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].to_string())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ScanMeta {
        ScanMeta::new(4, 3, 150.0, 5.0)
    }

    #[test]
    fn key_values() {
        let e = parse_key_values("# c\n a = 1 \n\nb=x # tail\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("a", "1", 2));
        assert_eq!((e[1].key.as_str(), e[1].value.as_str(), e[1].line), ("b", "x", 4));
        assert!(matches!(parse_key_values("a=1\nnope\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_key_values("a=1\na=2\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn meta_round_trip() {
        let m = ScanMeta::new(1000, 1350, 150.25, 5.0);
        assert_eq!(read_meta(&write_meta(&m)).unwrap(), m);
        assert!(matches!(read_meta("frame_count=4\n"), Err(Error::Parse { .. })));
        assert!(matches!(
            read_meta("frame_count=4\npoints_per_frame=3\naxis_distance_D=abc\ngamma=1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn scan_round_trip_is_exact() {
        let frames = vec![
            SensorFrame::new(0, vec![SensorPoint::new(0.1, 145.123_456_789_012_3), SensorPoint::new(0.2, 1.0 / 3.0)]),
            SensorFrame::new(1, vec![]),
            SensorFrame::new(2, vec![SensorPoint::new(-1e-7, 144.0)]),
            SensorFrame::new(3, vec![SensorPoint::new(5.0, 146.0)]),
        ];
        let scan = ScanSet::new(meta(), frames);
        let mut buf = Vec::new();
        write_scan_csv(&mut buf, &scan).unwrap();
        let back = read_scan_csv(buf.as_slice(), &meta()).unwrap();
        assert_eq!(back, scan);
    }

    #[test]
    fn scan_errors_name_the_line() {
        let bad = "frame,x,z\n0,1,2\n0,abc,2\n";
        assert!(matches!(read_scan_csv(bad.as_bytes(), &meta()), Err(Error::Parse { line: 3, .. })));
        let back = "frame,x,z\n1,1,2\n0,1,2\n";
        assert!(matches!(read_scan_csv(back.as_bytes(), &meta()), Err(Error::Parse { line: 3, .. })));
        let big = "frame,x,z\n9,1,2\n";
        assert!(matches!(read_scan_csv(big.as_bytes(), &meta()), Err(Error::Parse { line: 2, .. })));
        let hdr = "frame,z,x\n";
        assert!(matches!(read_scan_csv(hdr.as_bytes(), &meta()), Err(Error::Parse { line: 1, .. })));
        let short = "frame,x,z\n0,1\n";
        assert!(matches!(read_scan_csv(short.as_bytes(), &meta()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn labels_round_trip() {
        let rows = vec![
            LabelRow { frame: 0, x: 1.5, z: 145.0, label: Label::BladeBack },
            LabelRow { frame: 2, x: 2.5, z: 145.3, label: Label::Outlier },
        ];
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, rows.clone()).unwrap();
        assert_eq!(read_labels_csv(buf.as_slice()).unwrap(), rows);
        let bad = "frame,x,z,label\n0,1,2,lip\n";
        assert!(matches!(read_labels_csv(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn series_csv() {
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &["x", "z"], &[&[0.0, 1.0], &[0.5, 0.25]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,z\n0,0.5\n1,0.25\n");
        assert!(write_series_csv(Vec::new(), &["x"], &[&[0.0], &[1.0]]).is_err());
    }
}
