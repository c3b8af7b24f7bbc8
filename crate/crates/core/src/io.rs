//! Plain-CSV matrix files and manifests.
//!
//! One matrix row per line, comma separated, numbers written like C's
//! `%.17g`. Lines starting with `#` are comments.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::covariance::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;

/// Relative asymmetry tolerated when loading an SPD matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Formats like `printf("%.17g", x)`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        let fixed = format!("{x:.decimals$}");
        strip_zeros(&fixed).to_string()
    } else {
        let mant = strip_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `m` as CSV, preceded by `# header` lines when given.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, header: Option<&str>) -> Result<()> {
    fs::write(path, matrix_to_csv(m, header))?;
    Ok(())
}

pub fn matrix_to_csv(m: &DMatrix<f64>, header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        for line in h.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    parse_matrix_csv(&text).map_err(|msg| Error::Parse { path: path.to_path_buf(), msg })
}

fn parse_matrix_csv(text: &str) -> std::result::Result<DMatrix<f64>, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|e| format!("line {}: '{}': {e}", lineno + 1, c.trim())))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("line {}: expected {} columns, found {}", lineno + 1, first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

/// Loads a matrix and checks it is square, symmetric and positive definite.
pub fn read_spd_csv(path: &Path) -> Result<SpdMatrix> {
    let m = read_matrix_csv(path)?;
    let fail = |msg: String| Error::Parse { path: path.to_path_buf(), msg };
    if m.nrows() != m.ncols() {
        return Err(fail(format!("expected a square matrix, found {}x{}", m.nrows(), m.ncols())));
    }
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * m.amax().max(f64::MIN_POSITIVE) {
        return Err(fail(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    SpdMatrix::new(m).map_err(|e| fail(e.to_string()))
}

/// Loads a `p × n` data matrix (one sample per column).
pub fn read_data_csv(path: &Path) -> Result<DataMatrix> {
    let m = read_matrix_csv(path)?;
    DataMatrix::new(m).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
}

/// One manifest line: a path with an optional class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub label: Option<usize>,
    pub path: PathBuf,
}

/// Reads `path` lines or `label,path` lines. Relative paths resolve against
/// the manifest's directory. A directory input lists its `*.csv` files in
/// name order.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
        files.sort();
        if files.is_empty() {
            return Err(Error::Parse { path: path.to_path_buf(), msg: "no .csv files".into() });
        }
        return Ok(files.into_iter().map(|path| ManifestEntry { label: None, path }).collect());
    }
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let fail = |msg: String| Error::Parse { path: path.to_path_buf(), msg };
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (label, file) = match line.split_once(',') {
            Some((l, f)) => {
                let l = l.trim().parse::<usize>().map_err(|e| fail(format!("line {}: bad label: {e}", lineno + 1)))?;
                (Some(l), f.trim())
            }
            None => (None, line),
        };
        out.push(ManifestEntry { label, path: base.join(file) });
    }
    if out.is_empty() {
        return Err(fail("manifest lists no files".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.10000000000000001"),
            (-2.5, "-2.5"),
            (1e20, "1e+20"),
            (1.5e-7, "1.4999999999999999e-07"),
            (123456789.0, "123456789"),
            (0.0001, "0.0001"),
            (1e16, "10000000000000000"),
            (1e17, "1e+17"),
            (f64::NAN, "nan"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g17(x), s, "{x}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 2.0e-300, 6.02e23, -7.25e-5] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn matrix_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0 / 3.0]);
        write_matrix_csv(&path, &m, Some("version 1\nseed 3")).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# version 1\n# seed 3\n"));
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
        assert_eq!(read_spd_csv(&path).unwrap().as_matrix(), &m);
    }

    #[test]
    fn malformed_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "1,2\n3,x\n").unwrap();
        let err = read_matrix_csv(&bad).unwrap_err();
        assert!(err.to_string().contains("bad.csv"));
        fs::write(&bad, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&bad), Err(Error::Parse { .. })));
        fs::write(&bad, "1,2\n3,1\n").unwrap();
        assert!(read_spd_csv(&bad).unwrap_err().to_string().contains("symmetric"));
        fs::write(&bad, "1,2\n2,1\n").unwrap();
        assert!(read_spd_csv(&bad).is_err());
    }

    #[test]
    fn manifests() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("list.txt");
        fs::write(&m, "# comment\na.csv\nsub/b.csv\n").unwrap();
        let e = read_manifest(&m).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[1].path, dir.path().join("sub/b.csv"));
        fs::write(&m, "1,a.csv\n2, b.csv\n").unwrap();
        let e = read_manifest(&m).unwrap();
        assert_eq!(e[1].label, Some(2));
        assert_eq!(e[1].path, dir.path().join("b.csv"));
        fs::write(&m, "x,a.csv\n").unwrap();
        assert!(read_manifest(&m).is_err());

        fs::write(dir.path().join("b.csv"), "1\n").unwrap();
        fs::write(dir.path().join("a.csv"), "1\n").unwrap();
        let e = read_manifest(dir.path()).unwrap();
        assert_eq!(e.iter().map(|e| e.path.file_name().unwrap().to_str().unwrap()).collect::<Vec<_>>(), ["a.csv", "b.csv"]);
    }
}
