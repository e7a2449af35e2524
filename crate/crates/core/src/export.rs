//! CSV readers and writers for batches, datasets, trajectories, comparison
//! tables, metric summaries and noise fields.
//!
//! Files may start with `#`-prefixed comment lines carrying `key=value`
//! provenance; readers skip them. Floats are written in shortest
//! round-trip form, so write → read is lossless.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::points::PointCloud;
use crate::samplers::SampleBatch;
use crate::spectral::NoiseField;
use crate::toydata::Ring;
use crate::Real;

pub fn write_comments<W: Write>(w: &mut W, pairs: &[(String, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// `key=value` pairs from the leading comment block.
pub fn read_comments<R: Read>(r: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        let Some(body) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = body.trim().split_once('=') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn point_header(d: usize) -> Vec<String> {
    (0..d).map(|k| format!("x{k}")).collect()
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Format(format!("{what}: cannot parse `{s}` as a number")))
}

pub fn write_points<T: Real, W: Write>(
    w: W,
    points: &PointCloud<T>,
    comments: &[(String, String)],
) -> Result<()> {
    let mut w = w;
    write_comments(&mut w, comments)?;
    let mut c = writer(w);
    c.write_record(point_header(points.dim()))?;
    for p in points.rows() {
        c.write_record(p.iter().map(|v| v.to_string()))?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_sample_batch<T: Real, W: Write>(w: W, batch: &SampleBatch<T>) -> Result<()> {
    let mut comments = batch.config.describe();
    comments.push((
        "schedule_fingerprint".into(),
        format!("{:016x}", batch.provenance.schedule_fingerprint),
    ));
    comments.push(("score_field".into(), batch.provenance.field_tag.clone()));
    write_points(w, &batch.points, &comments)
}

/// Reads a point CSV (`x0,x1,…`), ignoring comment lines and any trailing
/// `label` column.
pub fn read_points<T: Real, R: Read>(r: R) -> Result<PointCloud<T>> {
    Ok(read_dataset::<T, R>(r)?.0)
}

pub fn write_dataset<T: Real, W: Write>(
    w: W,
    points: &PointCloud<T>,
    labels: &[Ring],
    comments: &[(String, String)],
) -> Result<()> {
    if labels.len() != points.len() {
        return Err(Error::param("labels", "one label per point required"));
    }
    let mut w = w;
    write_comments(&mut w, comments)?;
    let mut c = writer(w);
    let mut header = point_header(points.dim());
    header.push("label".into());
    c.write_record(&header)?;
    for (p, l) in points.rows().zip(labels) {
        let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        rec.push(l.label().into());
        c.write_record(&rec)?;
    }
    c.flush()?;
    Ok(())
}

/// Reads points and, when present, the `label` column.
pub fn read_dataset<T: Real, R: Read>(r: R) -> Result<(PointCloud<T>, Option<Vec<Ring>>)> {
    let mut rd = reader(r);
    let headers = rd.headers()?.clone();
    let d = headers.iter().take_while(|h| h.starts_with('x')).count();
    if d == 0 {
        return Err(Error::Format("point CSV needs x0,x1,… columns".into()));
    }
    for (k, h) in headers.iter().take(d).enumerate() {
        if h != format!("x{k}") {
            return Err(Error::Format(format!("unexpected column `{h}`")));
        }
    }
    let label_col = headers.iter().position(|h| h == "label");
    let mut data = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for rec in rd.records() {
        let rec = rec?;
        for k in 0..d {
            data.push(T::of(parse_f64(&rec[k], "point")?));
        }
        if let (Some(col), Some(ls)) = (label_col, labels.as_mut()) {
            ls.push(match &rec[col] {
                "major" => Ring::Major,
                "minor" => Ring::Minor,
                other => return Err(Error::Format(format!("unknown label `{other}`"))),
            });
        }
    }
    Ok((PointCloud::new(d, data)?, labels))
}

/// One row of the trajectory CSV. `err` and `denoise_norm` are empty when
/// not recorded (and at index 0).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub traj_id: String,
    pub i: usize,
    pub norm: f64,
    pub err: Option<f64>,
    pub denoise_norm: Option<f64>,
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["traj_id", "i", "norm", "err", "denoise_norm"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trajectory_rows<W: Write>(
    w: W,
    rows: &[TrajectoryRow],
    comments: &[(String, String)],
) -> Result<()> {
    let mut w = w;
    write_comments(&mut w, comments)?;
    let mut c = writer(w);
    c.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        c.write_record([
            r.traj_id.clone(),
            r.i.to_string(),
            r.norm.to_string(),
            opt(r.err),
            opt(r.denoise_norm),
        ])?;
    }
    c.flush()?;
    Ok(())
}

pub fn read_trajectory_rows<R: Read>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut rd = reader(r);
    check_header(&rd.headers()?.clone(), &TRAJECTORY_HEADER)?;
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f64(s, "trajectory").map(Some)
        }
    };
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(TrajectoryRow {
                traj_id: rec[0].to_string(),
                i: rec[1]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad index `{}`", &rec[1])))?,
                norm: parse_f64(&rec[2], "norm")?,
                err: parse_opt(&rec[3])?,
                denoise_norm: parse_opt(&rec[4])?,
            })
        })
        .collect()
}

fn check_header(h: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if h.iter().ne(want.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            want.join(","),
            h.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// A predicted quantity next to its Monte Carlo estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub quantity: String,
    pub predicted: f64,
    pub empirical: f64,
    pub mc_stderr: f64,
}

impl ComparisonRow {
    pub fn new(quantity: impl Into<String>, predicted: f64, empirical: f64, mc_stderr: f64) -> Self {
        Self {
            quantity: quantity.into(),
            predicted,
            empirical,
            mc_stderr,
        }
    }

    /// `(empirical − predicted) / stderr`; 0 for an exact match with zero
    /// error, infinite for a mismatch with zero error.
    pub fn z_score(&self) -> f64 {
        let diff = self.empirical - self.predicted;
        if self.mc_stderr > 0.0 {
            diff / self.mc_stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }
}

pub const COMPARISON_HEADER: [&str; 5] = ["quantity", "predicted", "empirical", "mc_stderr", "z_score"];

pub fn write_comparison<W: Write>(
    w: W,
    rows: &[ComparisonRow],
    comments: &[(String, String)],
) -> Result<()> {
    let mut w = w;
    write_comments(&mut w, comments)?;
    let mut c = writer(w);
    c.write_record(COMPARISON_HEADER)?;
    for r in rows {
        c.write_record([
            r.quantity.clone(),
            r.predicted.to_string(),
            r.empirical.to_string(),
            r.mc_stderr.to_string(),
            r.z_score().to_string(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

pub fn read_comparison<R: Read>(r: R) -> Result<Vec<ComparisonRow>> {
    let mut rd = reader(r);
    check_header(&rd.headers()?.clone(), &COMPARISON_HEADER)?;
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ComparisonRow {
                quantity: rec[0].to_string(),
                predicted: parse_f64(&rec[1], "predicted")?,
                empirical: parse_f64(&rec[2], "empirical")?,
                mc_stderr: parse_f64(&rec[3], "mc_stderr")?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub k: Option<usize>,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub n: usize,
}

impl MetricRow {
    pub fn scalar(metric: impl Into<String>, value: f64, n: usize) -> Self {
        Self {
            metric: metric.into(),
            k: None,
            mean: value,
            p50: value,
            p90: value,
            n,
        }
    }

    pub fn from_stats(metric: impl Into<String>, s: &crate::metrics::DensityStats) -> Self {
        Self {
            metric: metric.into(),
            k: Some(s.k),
            mean: s.mean,
            p50: s.p50,
            p90: s.p90,
            n: s.values.len(),
        }
    }
}

pub const METRICS_HEADER: [&str; 6] = ["metric", "k", "mean", "p50", "p90", "n"];

pub fn write_metrics<W: Write>(w: W, rows: &[MetricRow], comments: &[(String, String)]) -> Result<()> {
    let mut w = w;
    write_comments(&mut w, comments)?;
    let mut c = writer(w);
    c.write_record(METRICS_HEADER)?;
    for r in rows {
        c.write_record([
            r.metric.clone(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.mean.to_string(),
            r.p50.to_string(),
            r.p90.to_string(),
            r.n.to_string(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricRow>> {
    let mut rd = reader(r);
    check_header(&rd.headers()?.clone(), &METRICS_HEADER)?;
    rd.records()
        .map(|rec| {
            let rec = rec?;
            Ok(MetricRow {
                metric: rec[0].to_string(),
                k: if rec[1].is_empty() {
                    None
                } else {
                    Some(rec[1].parse().map_err(|_| Error::Format(format!("bad k `{}`", &rec[1])))?)
                },
                mean: parse_f64(&rec[2], "mean")?,
                p50: parse_f64(&rec[3], "p50")?,
                p90: parse_f64(&rec[4], "p90")?,
                n: rec[5].parse().map_err(|_| Error::Format(format!("bad n `{}`", &rec[5])))?,
            })
        })
        .collect()
}

/// Headerless matrix, one CSV row per image row; `gamma` goes in a comment.
pub fn write_noise_field<W: Write>(w: W, field: &NoiseField) -> Result<()> {
    let mut w = w;
    write_comments(&mut w, &[("gamma".into(), field.gamma.to_string())])?;
    let mut c = writer(w);
    for row in field.values().chunks_exact(field.cols()) {
        c.write_record(row.iter().map(|v| v.to_string()))?;
    }
    c.flush()?;
    Ok(())
}

pub fn read_noise_field<R: Read>(r: R) -> Result<NoiseField> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    let gamma = read_comments(text.as_bytes())?
        .into_iter()
        .find(|(k, _)| k == "gamma")
        .map(|(_, v)| parse_f64(&v, "gamma"))
        .transpose()?
        .unwrap_or(1.0);
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in rd.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Format("ragged noise field rows".into()));
        }
        for s in rec.iter() {
            values.push(parse_f64(s, "noise field")?);
        }
        rows += 1;
    }
    NoiseField::new(rows, cols.unwrap_or(0), values, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn points_round_trip_with_comments() {
        let mut r = RngStream::new(1, 0);
        let pts = PointCloud::new(3, r.normal_vec::<f64>(30)).unwrap();
        let mut buf = Vec::new();
        let comments = vec![("seed".to_string(), "7".to_string())];
        write_points(&mut buf, &pts, &comments).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=7\nx0,x1,x2\n"));
        assert_eq!(read_points::<f64, _>(buf.as_slice()).unwrap(), pts);
        assert_eq!(read_comments(buf.as_slice()).unwrap(), comments);
    }

    #[test]
    fn dataset_round_trip() {
        let pts = PointCloud::new(2, vec![0.5, 0.0, 1.0, 0.25]).unwrap();
        let labels = vec![Ring::Major, Ring::Minor];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &pts, &labels, &[]).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x0,x1,label\n0.5,0,major\n"));
        let (p, l) = read_dataset::<f64, _>(buf.as_slice()).unwrap();
        assert_eq!((p, l), (pts, Some(labels)));
    }

    #[test]
    fn trajectory_round_trip() {
        let rows = vec![
            TrajectoryRow {
                traj_id: "ddpm/0".into(),
                i: 3,
                norm: 1.25,
                err: Some(0.1),
                denoise_norm: Some(0.9),
            },
            TrajectoryRow {
                traj_id: "ddpm/0".into(),
                i: 0,
                norm: 1.0,
                err: None,
                denoise_norm: None,
            },
        ];
        let mut buf = Vec::new();
        write_trajectory_rows(&mut buf, &rows, &[]).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("traj_id,i,norm,err,denoise_norm\n"));
        assert_eq!(read_trajectory_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn comparison_round_trip_and_z() {
        let rows = vec![ComparisonRow::new("var[0]", 6.9, 7.0, 0.05)];
        assert!((rows[0].z_score() - 2.0).abs() < 1e-9);
        let mut buf = Vec::new();
        write_comparison(&mut buf, &rows, &[]).unwrap();
        assert_eq!(read_comparison(buf.as_slice()).unwrap(), rows);
        assert_eq!(ComparisonRow::new("q", 1.0, 1.0, 0.0).z_score(), 0.0);
        assert!(read_comparison("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn metrics_round_trip() {
        let rows = vec![
            MetricRow::scalar("minority_fraction", 0.12, 5000),
            MetricRow {
                metric: "avg_knn".into(),
                k: Some(5),
                mean: 0.1,
                p50: 0.08,
                p90: 0.2,
                n: 5000,
            },
        ];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows, &[]).unwrap();
        assert_eq!(read_metrics(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn noise_field_round_trip() {
        let f = NoiseField::white(4, 5, 2.0, &mut RngStream::new(2, 0)).unwrap();
        let mut buf = Vec::new();
        write_noise_field(&mut buf, &f).unwrap();
        assert_eq!(read_noise_field(buf.as_slice()).unwrap(), f);
    }
}
