//! Headered, unquoted TSV: the interchange format for datasets, memory
//! metadata and caption tables. Fields may not contain tabs or newlines.

use std::io::{Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum TsvError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("tsv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: field {field:?}: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
    #[error("field contains a tab or newline: {0:?}")]
    Unencodable(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn read<R: Read>(source: R) -> Result<Self, TsvError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .has_headers(true)
            .from_reader(source);
        let headers = reader.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            rows.push((line, record.iter().map(str::to_owned).collect()));
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, TsvError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TsvError::MissingColumn(name.to_owned()))
    }

    pub fn rows(&self) -> impl Iterator<Item = &Vec<String>> {
        self.rows.iter().map(|(_, r)| r)
    }

    /// Rows with their 1-based source line numbers.
    pub fn rows_with_lines(&self) -> impl Iterator<Item = (usize, &Vec<String>)> {
        self.rows.iter().map(|(l, r)| (*l, r))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn check_field(field: &str) -> Result<(), TsvError> {
    if field.contains(['\t', '\n', '\r']) {
        return Err(TsvError::Unencodable(field.to_owned()));
    }
    Ok(())
}

/// Replaces tabs and line breaks with spaces.
pub fn sanitize(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

pub struct TsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TsvWriter<W> {
    pub fn new(sink: W) -> Self {
        Self {
            inner: csv::WriterBuilder::new()
                .delimiter(b'\t')
                .quote_style(csv::QuoteStyle::Never)
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(sink),
        }
    }

    pub fn write_row<I, S>(&mut self, fields: I) -> Result<(), TsvError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fields: Vec<S> = fields.into_iter().collect();
        for f in &fields {
            check_field(f.as_ref())?;
        }
        self.inner.write_record(fields.iter().map(|f| f.as_ref()))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, TsvError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| TsvError::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn write_table<W, I>(sink: W, headers: &[&str], rows: I) -> Result<W, TsvError>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = TsvWriter::new(sink);
    w.write_row(headers)?;
    for row in rows {
        w.write_row(row)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_exact() {
        let text = "a\tb\tc\n1\t\"quoted\" x\t\n2\ty\tz\n";
        let table = Table::read(text.as_bytes()).unwrap();
        assert_eq!(table.len(), 2);
        let out = write_table(Vec::new(), &["a", "b", "c"], table.rows().cloned()).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn missing_column_and_bad_field() {
        let table = Table::read("a\tb\n1\t2\n".as_bytes()).unwrap();
        assert!(matches!(table.column("c"), Err(TsvError::MissingColumn(_))));
        assert_eq!(table.rows_with_lines().next().unwrap().0, 2);
        let mut w = TsvWriter::new(Vec::new());
        assert!(w.write_row(["x\ty"]).is_err());
        assert_eq!(sanitize("x\ty\nz"), "x y z");
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Table::read("a\tb\n1\n".as_bytes()).is_err());
    }
}
