//! Text formats: complex numbers as `re+imj`, codebook export files, CSV
//! tables with a header row and JSON-lines trial records.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::CMatrix;

/// Formats `z` as `re+imj` or `re-imj` with round-trip precision.
pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}j", z.re, sign, z.im.abs())
}

/// Parses the output of [`format_complex`].
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let bad = || Error::Config(format!("malformed complex number {s:?}"));
    let body = s.trim().strip_suffix('j').ok_or_else(bad)?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let re: f64 = body[..split].parse().map_err(|_| bad())?;
    let im: f64 = body[split + 1..].parse().map_err(|_| bad())?;
    Ok(Complex64::new(re, if bytes[split] == b'-' { -im } else { im }))
}

/// Serde adapter storing a complex number as its `re+imj` string.
pub mod complex_text {
    use super::{format_complex, parse_complex};
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_complex(*z))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let s = String::deserialize(d)?;
        parse_complex(&s).map_err(serde::de::Error::custom)
    }
}

/// One stage's beamforming matrix as exported.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookFile {
    pub stage: usize,
    pub gain: f64,
    /// `N×M`, one beam per column.
    pub beams: CMatrix,
}

/// Header line `N M stage C_s`, then one line per antenna with the `M`
/// complex weights separated by spaces.
pub fn write_codebook<W: Write>(mut out: W, file: &CodebookFile) -> Result<()> {
    let (n, m) = file.beams.dim();
    writeln!(out, "{n} {m} {} {}", file.stage, file.gain)?;
    let mut line = String::new();
    for row in file.beams.rows() {
        line.clear();
        for (j, z) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{}", format_complex(*z));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_codebook<R: Read>(input: R) -> Result<CodebookFile> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty codebook file".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || Error::Config(format!("malformed codebook header {header:?}"));
    if fields.len() != 4 {
        return Err(bad_header());
    }
    let n: usize = fields[0].parse().map_err(|_| bad_header())?;
    let m: usize = fields[1].parse().map_err(|_| bad_header())?;
    let stage: usize = fields[2].parse().map_err(|_| bad_header())?;
    let gain: f64 = fields[3].parse().map_err(|_| bad_header())?;
    let mut cells = Vec::with_capacity(n * m);
    for line in lines {
        let line = line?;
        for cell in line.split_whitespace() {
            cells.push(parse_complex(cell)?);
        }
    }
    if cells.len() != n * m {
        return Err(Error::Config(format!("expected {} cells, found {}", n * m, cells.len())));
    }
    let beams = Array2::from_shape_vec((n, m), cells).map_err(|e| Error::Config(e.to_string()))?;
    Ok(CodebookFile { stage, gain, beams })
}

/// Writes `rows` as CSV with a header row taken from the field names.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), rows)
}

/// Writes a header row and string records.
pub fn write_csv_records<W: Write>(out: W, header: &[String], records: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[test]
    fn complex_format() {
        assert_eq!(format_complex(Complex64::new(1.5, -2.0)), "1.5-2j");
        assert_eq!(format_complex(Complex64::new(-0.25, 0.0)), "-0.25+0j");
        assert_eq!(format_complex(Complex64::new(0.0, -0.0)), "0-0j");
    }

    #[test]
    fn complex_parse() {
        assert_eq!(parse_complex("1.5-2j").unwrap(), Complex64::new(1.5, -2.0));
        assert_eq!(parse_complex("-1e-5+3E+2j").unwrap(), Complex64::new(-1e-5, 300.0));
        assert!(parse_complex("1.5").is_err());
        assert!(parse_complex("abc+j").is_err());
    }

    #[test]
    fn codebook_example() {
        let beams = Array2::from_shape_vec(
            (2, 1),
            vec![Complex64::new(0.5, 0.5), Complex64::new(0.5, -0.5)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_codebook(&mut buf, &CodebookFile { stage: 1, gain: 2.0, beams }).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "2 1 1 2\n0.5+0.5j\n0.5-0.5j\n");
    }

    #[test]
    fn codebook_rejects_truncated_file() {
        assert!(read_codebook("3 2 1 1.0\n1+0j 0+1j\n".as_bytes()).is_err());
        assert!(read_codebook("3 2 1\n".as_bytes()).is_err());
        assert!(read_codebook("".as_bytes()).is_err());
    }

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Rec {
        a: usize,
        #[serde(with = "complex_text")]
        z: Complex64,
    }

    #[test]
    fn csv_has_header() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[Rec { a: 1, z: Complex64::new(1.0, -1.0) }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,z\n1,1-1j\n");
    }

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![Rec { a: 1, z: Complex64::new(0.1, 0.2) }, Rec { a: 2, z: Complex64::new(-3.0, 0.0) }];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: Vec<Rec> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, recs);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn complex_round_trip(re in proptest::num::f64::ANY, im in proptest::num::f64::ANY) {
                prop_assume!(re.is_finite() && im.is_finite());
                let z = Complex64::new(re, im);
                prop_assert_eq!(parse_complex(&format_complex(z)).unwrap(), z);
            }

            #[test]
            fn codebook_round_trip(
                n in 1usize..12,
                m in 1usize..5,
                stage in 1usize..6,
                gain in 0.1f64..100.0,
                seed in any::<u64>(),
            ) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let beams = Array2::from_shape_fn((n, m), |_| {
                    Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                });
                let file = CodebookFile { stage, gain, beams };
                let mut buf = Vec::new();
                write_codebook(&mut buf, &file).unwrap();
                prop_assert_eq!(read_codebook(buf.as_slice()).unwrap(), file);
            }
        }
    }
}
