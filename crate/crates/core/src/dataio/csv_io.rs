//! Corpus CSV format.
//!
//! Header `id,label,t0,…,t{d_T−1},i0,…,i{d_I−1}`. An empty label cell marks
//! an unlabeled record; a row whose image cells are all empty has no image
//! vector. UTF-8, LF line endings, floats written as `{:.16e}` (17
//! significant digits, exact round trip).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::corpus::{Corpus, EmbeddingRecord, RiskClass};
use crate::{Error, Result};

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(f)
}

pub fn save_corpus(c: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_corpus(c, &mut buf)?;
    crate::fsutil::write_atomic(path.as_ref(), &buf)
}

fn parse_header(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::format(1, "header must start with `id,label`"));
    }
    let mut d_text = 0;
    let mut d_image = 0;
    for name in &cols[2..] {
        if d_image == 0 && *name == format!("t{d_text}") {
            d_text += 1;
        } else if *name == format!("i{d_image}") {
            d_image += 1;
        } else {
            return Err(Error::format(1, format!("unexpected column {name:?}; expected t{d_text} or i{d_image}")));
        }
    }
    Ok((d_text, d_image))
}

fn parse_float(cell: &str, line: usize, column: &str) -> Result<f64> {
    let x: f64 =
        cell.trim().parse().map_err(|_| Error::format(line, format!("malformed float {cell:?} in column {column}")))?;
    if !x.is_finite() {
        return Err(Error::format(line, format!("non-finite value in column {column}")));
    }
    Ok(x)
}

pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| Error::format(1, e.to_string()))?,
        None => return Err(Error::format(1, "missing header")),
    };
    let (d_text, d_image) = parse_header(&header)?;
    let width = 2 + d_text + d_image;

    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::format(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != width {
            return Err(Error::format(line, format!("expected {width} fields, found {}", row.len())));
        }
        let id = row[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::format(line, format!("duplicate id {id:?}")));
        }
        let label = match row[1].trim() {
            "" => None,
            s => {
                let v: u8 = s.parse().map_err(|_| Error::format(line, format!("label {s:?} is not 1, 2 or 3")))?;
                Some(RiskClass::new(v).map_err(|_| Error::format(line, format!("label {v} outside {{1,2,3}}")))?)
            }
        };
        let text = (0..d_text).map(|j| parse_float(&row[2 + j], line, &format!("t{j}"))).collect::<Result<Vec<_>>>()?;
        let image_cells: Vec<&str> = (0..d_image).map(|j| &row[2 + d_text + j]).collect();
        let empty = image_cells.iter().filter(|c| c.trim().is_empty()).count();
        let image = if d_image == 0 || empty == d_image {
            None
        } else if empty == 0 {
            Some(
                image_cells
                    .iter()
                    .enumerate()
                    .map(|(j, c)| parse_float(c, line, &format!("i{j}")))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            return Err(Error::format(
                line,
                format!("image vector partially present ({empty} of {d_image} cells empty)"),
            ));
        };
        records.push(EmbeddingRecord::new(id, label, text, image));
    }
    Corpus::new(records, d_text, d_image).map_err(|e| Error::format(0, e.to_string()))
}

pub fn write_corpus<W: Write>(c: &Corpus, writer: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::format(0, e.to_string());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..c.d_text()).map(|j| format!("t{j}")));
    header.extend((0..c.d_image()).map(|j| format!("i{j}")));
    w.write_record(&header).map_err(to_err)?;
    for r in c.records() {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.id.clone());
        row.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        row.extend(r.text.iter().map(|x| format!("{x:.16e}")));
        match &r.image {
            Some(img) => row.extend(img.iter().map(|x| format!("{x:.16e}"))),
            None => row.extend(std::iter::repeat_n(String::new(), c.d_image())),
        }
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::format(0, e.to_string()))
}
