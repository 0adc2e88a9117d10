//! Plain-text matrix files.
//!
//! A matrix file holds one comma-separated row of numbers per line, stored
//! row-major, with an optional single header line (any line whose first
//! field does not parse as a number). Values are written in Rust's shortest
//! round-trip decimal form, so write-then-read is bit-exact. A dictionary's
//! labels live in a sidecar file next to it (`lib.csv` → `lib.labels`, one
//! label per line); without one, a header line supplies them, and failing
//! that columns are named `d0, d1, …`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::dictionary::SpectralDictionary;
use crate::error::{Error, Result};
use crate::simgen::{dmer_of, snr_of, SyntheticScene};
use crate::subspace::PixelMatrix;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Parsed matrix plus the header fields, if a header line was present.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub matrix: DMatrix<f64>,
    pub header: Option<Vec<String>>,
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<MatrixFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let lineno = record.position().map_or(0, |p| p.line() as usize);
        if rows.is_empty() && header.is_none() && record[0].parse::<f64>().is_err() {
            header = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, f)| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, lineno, format!("field {} ('{f}') is not a number", col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no numeric rows"));
    }
    let ncols = rows[0].len();
    if let Some(h) = &header {
        if h.len() != ncols {
            return Err(parse_err(path, 1, format!("header has {} fields, rows have {ncols}", h.len())));
        }
    }
    let matrix = DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten());
    Ok(MatrixFile { matrix, header })
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_matrix(&text, path)
}

pub fn format_matrix(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if let Some(h) = header {
        writer.write_record(h).expect("in-memory write");
    }
    for row in m.row_iter() {
        writer.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    fs::write(path, format_matrix(m, header)).map_err(io_err(path))
}

pub fn labels_path(dictionary_path: &Path) -> PathBuf {
    dictionary_path.with_extension("labels")
}

pub fn read_dictionary(path: &Path) -> Result<SpectralDictionary<f64>> {
    let file = read_matrix(path)?;
    let sidecar = labels_path(path);
    let labels = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
        let labels: Vec<String> = text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
        if labels.len() != file.matrix.ncols() {
            return Err(parse_err(
                &sidecar,
                labels.len().max(1),
                format!("{} labels for {} columns", labels.len(), file.matrix.ncols()),
            ));
        }
        labels
    } else if let Some(h) = file.header {
        h
    } else {
        (0..file.matrix.ncols()).map(|j| format!("d{j}")).collect()
    };
    SpectralDictionary::new(file.matrix, labels)
}

pub fn write_dictionary(path: &Path, dictionary: &SpectralDictionary<f64>) -> Result<()> {
    write_matrix(path, dictionary.spectra(), None)?;
    let sidecar = labels_path(path);
    let mut text = dictionary.labels().join("\n");
    text.push('\n');
    fs::write(&sidecar, text).map_err(io_err(&sidecar))
}

pub fn read_pixels(path: &Path) -> Result<PixelMatrix<f64>> {
    PixelMatrix::new(read_matrix(path)?.matrix)
}

/// One index per line.
pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(path, i + 1, format!("'{}' is not an index", l.trim())))
        })
        .collect()
}

pub fn write_indices(path: &Path, indices: &[usize]) -> Result<()> {
    let mut text = String::new();
    for i in indices {
        let _ = writeln!(text, "{i}");
    }
    fs::write(path, text).map_err(io_err(path))
}

fn json_number(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        // JSON has no infinities; keep the value readable and unambiguous
        serde_json::Value::String(x.to_string())
    }
}

/// Scene directory layout.
pub mod scene_files {
    pub const OBSERVATIONS: &str = "Y.csv";
    pub const DICTIONARY: &str = "D.csv";
    pub const ABUNDANCES: &str = "C_true.csv";
    pub const MIXING: &str = "S_true.csv";
    pub const TRUTH: &str = "truth.txt";
    pub const METADATA: &str = "metadata.json";
}

/// Writes `Y`, the perturbed library (with labels), `C_true`, `S_true`, the
/// truth index list and a metadata file into `dir`.
pub fn write_scene(dir: &Path, scene: &SyntheticScene<f64>) -> Result<()> {
    use scene_files::*;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_matrix(&dir.join(OBSERVATIONS), scene.y.values(), None)?;
    write_dictionary(&dir.join(DICTIONARY), &scene.dictionary)?;
    write_matrix(&dir.join(ABUNDANCES), &scene.c_true, None)?;
    write_matrix(&dir.join(MIXING), &scene.s_true, None)?;
    write_indices(&dir.join(TRUTH), &scene.truth)?;

    let spec = &scene.spec;
    let meta = serde_json::json!({
        "seed": spec.seed,
        "materials": spec.materials,
        "pixels": spec.pixels,
        "bands": scene.y.bands(),
        "library_size": scene.dictionary.len(),
        "truth_indices": scene.truth,
        "dmer_db_requested": json_number(spec.dmer_db),
        "dmer_db_realized": json_number(dmer_of(scene)),
        "delta": json_number(scene.delta),
        "clean_min_norm": json_number(scene.clean_min_norm),
        "snr_db_requested": json_number(spec.snr_db),
        "snr_db_realized": json_number(snr_of(scene)),
        "sigma2": json_number(scene.sigma2),
        "signal_energy": json_number(scene.signal_energy),
        "noise_energy": json_number(scene.noise_energy),
    });
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    let path = dir.join(METADATA);
    fs::write(&path, text).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_optional() {
        let p = Path::new("m.csv");
        let a = parse_matrix("a,b\n1,2\n3,4\n", p).unwrap();
        assert_eq!(a.header, Some(vec!["a".to_string(), "b".to_string()]));
        assert_eq!(a.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = parse_matrix("1,2\n\n3,4\n", p).unwrap();
        assert_eq!(b.header, None);
        assert_eq!(b.matrix, a.matrix);
    }

    #[test]
    fn ragged_rows_report_line() {
        let err = parse_matrix("1,2\n3,4\n5\n", Path::new("x.csv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_matrix("1,2\n3,oops\n", Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_matrix("", Path::new("x.csv")).is_err());
    }

    #[test]
    fn dictionary_labels_from_sidecar_or_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        fs::write(&path, "x,y\n1,2\n3,4\n").unwrap();
        assert_eq!(read_dictionary(&path).unwrap().labels(), &["x".to_string(), "y".to_string()]);
        fs::write(labels_path(&path), "alunite\nkaolinite\n").unwrap();
        assert_eq!(read_dictionary(&path).unwrap().labels()[1], "kaolinite");
        fs::write(labels_path(&path), "only-one\n").unwrap();
        assert!(read_dictionary(&path).is_err());
    }

    proptest! {
        #[test]
        fn matrix_text_round_trip_is_bit_exact(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 12)) {
            let m = DMatrix::from_row_slice(3, 4, &values);
            let back = parse_matrix(&format_matrix(&m, None), Path::new("p.csv")).unwrap().matrix;
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
