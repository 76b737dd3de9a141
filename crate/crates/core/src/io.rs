//! File formats: point clouds (CSV / binary), model JSON, schedule tables
//! and trajectory CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, TableSchedule};
use crate::score::{Mixture, ScoreModel};
use crate::spectrum::{spectrum_from_cloud, CompactSpectrum, PointCloud};
use crate::trajectory::{Trajectory, TrajectoryStep};

pub const CLOUD_MAGIC: &[u8; 5] = b"PCLD1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Reads a cloud, choosing the binary or CSV reader from the leading bytes.
/// `labels` selects whether the last CSV column holds integer labels.
pub fn read_cloud(path: impl AsRef<Path>, labels: bool) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut head = [0u8; 5];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(io_err(path))?;
    if n == 5 && &head == CLOUD_MAGIC {
        read_cloud_bin(path)
    } else {
        read_cloud_csv(path, labels)
    }
}

/// One sample per row. A first row that does not parse as numbers is taken
/// as a header.
pub fn read_cloud_csv(path: impl AsRef<Path>, labels: bool) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labs: Vec<i32> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(format_err(path, format!("row {} has a non-numeric field", i + 1))),
        };
        if labels {
            let (last, rest) = values
                .split_last()
                .ok_or_else(|| format_err(path, "empty row"))?;
            if last.fract() != 0.0 {
                return Err(format_err(path, format!("row {}: label {last} is not an integer", i + 1)));
            }
            labs.push(*last as i32);
            rows.push(rest.to_vec());
        } else {
            rows.push(values);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != d) {
        return Err(format_err(path, format!("row {} has {} columns, expected {d}", bad + 1, rows[bad].len())));
    }
    let data = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    PointCloud::with_labels(data, labels.then_some(labs))
}

pub fn write_cloud_csv(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for i in 0..cloud.len() {
        let mut rec: Vec<String> = cloud.data().row(i).iter().map(|v| format!("{v:e}")).collect();
        if let Some(l) = cloud.labels() {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// `PCLD1`, u32 N, u32 D, u8 has_labels, N·D f64 row-major, N i32 labels
/// (all little-endian).
pub fn read_cloud_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    if bytes.len() < 14 || &bytes[..5] != CLOUD_MAGIC {
        return Err(format_err(path, "missing PCLD1 header"));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let has_labels = match bytes[13] {
        0 => false,
        1 => true,
        b => return Err(format_err(path, format!("has_labels byte is {b}"))),
    };
    let want = 14 + n * d * 8 + if has_labels { n * 4 } else { 0 };
    if bytes.len() != want {
        return Err(format_err(path, format!("expected {want} bytes, found {}", bytes.len())));
    }
    let body = &bytes[14..];
    let data = DMatrix::from_fn(n, d, |i, j| {
        let k = (i * d + j) * 8;
        f64::from_le_bytes(body[k..k + 8].try_into().unwrap())
    });
    let labels = has_labels.then(|| {
        let lab = &body[n * d * 8..];
        (0..n)
            .map(|i| i32::from_le_bytes(lab[i * 4..i * 4 + 4].try_into().unwrap()))
            .collect()
    });
    PointCloud::with_labels(data, labels)
}

pub fn write_cloud_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let (n, d) = (cloud.len(), cloud.dim());
    let mut buf = Vec::with_capacity(14 + n * d * 8 + n * 4);
    buf.extend_from_slice(CLOUD_MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.push(cloud.labels().is_some() as u8);
    for i in 0..n {
        for j in 0..d {
            buf.extend_from_slice(&cloud.data()[(i, j)].to_le_bytes());
        }
    }
    if let Some(l) = cloud.labels() {
        for v in l {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(io_err(path))
}

/// Writes binary for `.bin`/`.pcld` extensions, CSV otherwise.
pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("pcld") => write_cloud_bin(path, cloud),
        _ => write_cloud_csv(path, cloud),
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| format_err(path, e.to_string()))
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Mixture(Mixture),
    /// Delta mixture referring to a point-cloud file.
    Delta { delta: PathBuf },
    Gaussian(CompactSpectrum),
}

/// Loads a model from `path.json`, `gaussian:<cloud>`, `delta:<cloud>`,
/// `isotropic:<cloud>` or `mixture:<path.json>`.
pub fn load_model(spec: &str) -> Result<ScoreModel> {
    if let Some((kind, rest)) = spec.split_once(':') {
        match kind {
            "gaussian" => return Ok(ScoreModel::Gaussian(spectrum_from_cloud(&read_cloud(rest, false)?, usize::MAX)?)),
            "delta" => return Ok(ScoreModel::delta(read_cloud(rest, false)?)),
            "isotropic" | "iso" => {
                let cloud = read_cloud(rest, false)?;
                return Ok(ScoreModel::isotropic(crate::spectrum::cloud_mean(&cloud)));
            }
            "mixture" | "gmm" => return load_model_file(rest),
            _ => {}
        }
    }
    load_model_file(spec)
}

fn load_model_file(path: &str) -> Result<ScoreModel> {
    let p = Path::new(path);
    match read_json::<ModelFile>(p)? {
        ModelFile::Mixture(m) => Ok(ScoreModel::Mixture(m)),
        ModelFile::Gaussian(s) => Ok(ScoreModel::Gaussian(s)),
        ModelFile::Delta { delta } => {
            let target = if delta.is_relative() {
                p.parent().unwrap_or(Path::new(".")).join(delta)
            } else {
                delta
            };
            Ok(ScoreModel::delta(read_cloud(target, false)?))
        }
    }
}

/// `t, alpha, sigma` table with a header row.
pub fn read_schedule_table(path: impl AsRef<Path>) -> Result<NoiseSchedule> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| format_err(path, format!("missing column '{name}'")))
    };
    let (ct, ca, cs) = (col("t")?, col("alpha")?, col("sigma")?);
    let (mut t, mut a, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let get = |c: usize| {
            rec.get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| format_err(path, "non-numeric schedule entry"))
        };
        t.push(get(ct)?);
        a.push(get(ca)?);
        s.push(get(cs)?);
    }
    Ok(NoiseSchedule::Table(TableSchedule::new(t, a, s)?))
}

/// Trajectory CSV layout options.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrajectoryCsv {
    /// Keep only the first `k` state components.
    pub max_components: Option<usize>,
    pub denoised: bool,
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, traj: &Trajectory, opts: TrajectoryCsv) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let k = opts.max_components.unwrap_or(usize::MAX).min(traj.dim());
    let mut header = vec!["t".to_string(), "sigma".into(), "alpha".into()];
    header.extend((0..k).map(|i| format!("x{i}")));
    if opts.denoised {
        header.extend((0..k).map(|i| format!("d{i}")));
    }
    w.write_record(&header)?;
    for s in &traj.steps {
        let mut rec = vec![fmt(s.t), fmt(s.sigma), fmt(s.alpha)];
        rec.extend(s.state.iter().take(k).map(|v| fmt(*v)));
        if opts.denoised {
            match &s.denoised {
                Some(d) => rec.extend(d.iter().take(k).map(|v| fmt(*v))),
                None => rec.extend((0..k).map(|_| String::new())),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Shortest representation that round-trips exactly.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "t" || &headers[1] != "sigma" || &headers[2] != "alpha" {
        return Err(format_err(path, "expected columns t, sigma, alpha, x0, ..."));
    }
    let xs: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with('x')).collect();
    let ds: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with('d')).collect();
    let mut traj = Trajectory::new("file");
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| format_err(path, format!("bad value in column {}", &headers[i])))
        };
        let state = DVector::from_iterator(xs.len(), xs.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?);
        let denoised = if !ds.is_empty() && rec.get(ds[0]).is_some_and(|v| !v.is_empty()) {
            Some(DVector::from_vec(ds.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?))
        } else {
            None
        };
        traj.steps.push(TrajectoryStep {
            t: num(0)?,
            sigma: num(1)?,
            alpha: num(2)?,
            state,
            denoised,
        });
    }
    if traj.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(traj)
}

/// Writes rows of `f64` under a header.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| fmt(*v)))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled() -> PointCloud {
        PointCloud::with_labels(
            DMatrix::from_row_slice(3, 2, &[1.0, -0.5, 2.25, 1e-300, -3.0, 7.0]),
            Some(vec![0, 2, -1]),
        )
        .unwrap()
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_cloud(&p, &labeled()).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..5], b"PCLD1");
        assert_eq!(bytes.len(), 14 + 6 * 8 + 3 * 4);
        assert_eq!(read_cloud(&p, false).unwrap(), labeled());
    }

    #[test]
    fn csv_roundtrip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_cloud(&p, &labeled()).unwrap();
        assert_eq!(read_cloud(&p, true).unwrap(), labeled());
        let unl = read_cloud(&p, false).unwrap();
        assert_eq!(unl.dim(), 3);
    }

    #[test]
    fn csv_header_is_skipped_and_ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        std::fs::write(&p, "a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(read_cloud_csv(&p, false).unwrap().len(), 2);
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_cloud_csv(&p, false).is_err());
        std::fs::write(&p, "1,2\n3,x\n").unwrap();
        assert!(matches!(read_cloud_csv(&p, false), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_cloud_bin(&p, &labeled()).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_cloud_bin(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_cloud("/nonexistent/cloud.csv", false).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cloud.csv"));
    }

    #[test]
    fn trajectory_roundtrip() {
        let mut t = Trajectory::new("x");
        t.push(2.0, 2.0, 1.0, DVector::from_vec(vec![0.1, 1.0 / 3.0]), Some(DVector::from_vec(vec![0.0, 1.0])));
        t.push(1.0, 1.0, 1.0, DVector::from_vec(vec![0.2, -5.0]), None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trajectory_csv(
            &p,
            &t,
            TrajectoryCsv {
                denoised: true,
                ..Default::default()
            },
        )
        .unwrap();
        let back = read_trajectory_csv(&p).unwrap();
        assert_eq!(back.steps, t.steps);
    }

    #[test]
    fn model_files() {
        let dir = tempfile::tempdir().unwrap();
        let cloud_path = dir.path().join("c.bin");
        write_cloud(&cloud_path, &labeled()).unwrap();
        let mpath = dir.path().join("delta.json");
        write_json(&mpath, &ModelFile::Delta { delta: "c.bin".into() }).unwrap();
        let m = load_model(mpath.to_str().unwrap()).unwrap();
        assert_eq!(m.variant_name(), "delta");
        let g = load_model(&format!("gaussian:{}", cloud_path.display())).unwrap();
        assert_eq!(g.variant_name(), "gaussian");
        let ScoreModel::Gaussian(spec) = &g else { unreachable!() };
        let spath = dir.path().join("g.json");
        write_json(&spath, spec).unwrap();
        assert_eq!(load_model(spath.to_str().unwrap()).unwrap(), g);
    }

    #[test]
    fn schedule_table_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "t,alpha,sigma\n0,1,0\n0.5,0.8,0.6\n1,0.6,0.8\n").unwrap();
        let s = read_schedule_table(&p).unwrap();
        assert_eq!(s.eval(0.5).unwrap(), (0.8, 0.6));
    }
}
