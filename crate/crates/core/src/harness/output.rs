//! CSV output: a header row, comma separators, `\n` terminators, and reals
//! printed with 17 significant digits so they parse back bit-exactly.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

/// Shortest fixed-width rendering that round-trips every finite double.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvSink {
    writer: csv::Writer<Box<dyn Write>>,
}

impl CsvSink {
    /// Writes to `path`, or to standard output when `path` is `None`.
    pub fn create(path: Option<&Path>, header: &[&str]) -> io::Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
            None => Box::new(io::stdout().lock()),
        };
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer.write_record(header).map_err(io::Error::other)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(io::Error::other)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [1.0 / 3.0, 1e-300, -2.5e17, 0.1 + 0.2, 5.772_156_649e-7, 0.0] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_real(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn writes_lf_terminated_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut sink = CsvSink::create(Some(&path), &["a", "b"]).unwrap();
        sink.row(["1", "x"]).unwrap();
        sink.finish().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,x\n");
    }
}
