//! File formats: binary PGM masks and maps, clinical, waveform and WSS CSVs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, WallMask};
use crate::hemodynamics::{FlowWaveform, WssSeries};
use crate::riskmodel::Features;

/// Fixed six-decimal rendering used in every CSV output; NaN prints as `nan`.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.6}")
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_bytes(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// A decoded binary greymap.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub maxval: u16,
    pub pixels: Grid<u16>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let (h, w) = self.pixels.shape();
        let mut out = format!("P5\n{w} {h}\n{}\n", self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.pixels.data().iter().map(|&v| v as u8));
        } else {
            for &v in self.pixels.data() {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], origin: &str) -> Result<Self> {
        let bad = |reason: &str| Error::format(origin, reason);
        let mut pos = 0;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated PGM header"));
            }
            header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if header[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad {what}")));
        let width = num(header[1], "width")?;
        let height = num(header[2], "height")?;
        let maxval = num(header[3], "maxval")?;
        if !(1..=65535).contains(&maxval) || width == 0 || height == 0 {
            return Err(bad("header values out of range"));
        }
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(bad("missing whitespace after header"));
        }
        pos += 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        let body = &bytes[pos..];
        if body.len() < width * height * depth {
            return Err(bad("pixel data shorter than header promises"));
        }
        let data: Vec<u16> = if depth == 1 {
            body[..width * height].iter().map(|&b| b as u16).collect()
        } else {
            body[..width * height * 2]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        if data.iter().any(|&v| v as usize > maxval) {
            return Err(bad("pixel value exceeds maxval"));
        }
        Ok(Pgm {
            maxval: maxval as u16,
            pixels: Grid::from_vec(height, width, data)?,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode())
    }

    /// Foreground where `value / maxval >= threshold`.
    pub fn to_mask(&self, threshold: f64) -> WallMask {
        let max = self.maxval as f64;
        self.pixels.map(|&v| v as f64 / max >= threshold)
    }
}

pub fn mask_to_pgm(mask: &WallMask) -> Pgm {
    Pgm {
        maxval: 255,
        pixels: mask.map(|&b| if b { 255 } else { 0 }),
    }
}

pub fn write_mask(path: &Path, mask: &WallMask) -> Result<()> {
    mask_to_pgm(mask).write(path)
}

/// Reads an 8-bit mask; any non-zero pixel is foreground.
pub fn read_mask(path: &Path) -> Result<WallMask> {
    let pgm = Pgm::read(path)?;
    Ok(pgm.pixels.map(|&v| v != 0))
}

/// 16-bit encoding of a map with values in `[0, full_scale]`.
pub fn map_to_pgm16(map: &Grid<f64>, full_scale: f64) -> Pgm {
    Pgm {
        maxval: 65535,
        pixels: map.map(|&v| ((v / full_scale).clamp(0.0, 1.0) * 65535.0).round() as u16),
    }
}

/// Variance maps are stored relative to the Bernoulli maximum of 0.25.
pub fn write_variance_map(path: &Path, var: &Grid<f64>) -> Result<()> {
    map_to_pgm16(var, 0.25).write(path)
}

pub fn write_mean_map(path: &Path, mean: &Grid<f64>) -> Result<()> {
    map_to_pgm16(mean, 1.0).write(path)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

/// Parses a CSV with a header into rows keyed by the requested columns.
/// Missing optional columns yield `None` cells.
pub(crate) struct CsvTable {
    pub rows: Vec<Vec<Option<String>>>,
    pub lines: Vec<usize>,
}

pub(crate) fn read_csv_columns(text: &str, origin: &str, required: &[&str], optional: &[&str]) -> Result<CsvTable> {
    let mut rdr = csv_reader(text);
    let headers = rdr.headers().map_err(|e| Error::format(origin, e.to_string()))?.clone();
    let mut idx = Vec::new();
    for name in required {
        let i = header_index(&headers, name)
            .ok_or_else(|| Error::format(origin, format!("missing column {name:?}")))?;
        idx.push(Some(i));
    }
    idx.extend(optional.iter().map(|n| header_index(&headers, n)));
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        lines.push(rec.position().map(|p| p.line() as usize).unwrap_or(0));
        rows.push(
            idx.iter()
                .map(|i| i.and_then(|i| rec.get(i)).filter(|c| !c.is_empty()).map(str::to_string))
                .collect(),
        );
    }
    Ok(CsvTable { rows, lines })
}

pub(crate) fn parse_f64(cell: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::MalformedLine {
        line,
        reason: format!("{what}: not a number: {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedLine {
            line,
            reason: format!("{what}: non-finite value"),
        });
    }
    Ok(v)
}

fn parse_flag(cell: &str, line: usize, what: &str) -> Result<u8> {
    match cell.to_ascii_lowercase().as_str() {
        "0" | "false" | "no" => Ok(0),
        "1" | "true" | "yes" => Ok(1),
        _ => Err(Error::MalformedLine {
            line,
            reason: format!("{what}: expected 0 or 1, got {cell:?}"),
        }),
    }
}

fn parse_sex(cell: &str, line: usize) -> Result<f64> {
    match cell.to_ascii_lowercase().as_str() {
        "m" | "male" => Ok(1.0),
        "f" | "female" => Ok(0.0),
        _ => parse_flag(cell, line, "sex").map(f64::from),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalRow {
    pub patient_id: String,
    /// age, sex, hypertension, diabetes, bmi
    pub features: Features,
    pub label: Option<u8>,
    /// False whenever the label is absent.
    pub avail: bool,
}

pub fn parse_clinical_csv(text: &str, origin: &str) -> Result<Vec<ClinicalRow>> {
    let table = read_csv_columns(
        text,
        origin,
        &["patient_id", "age", "sex", "hypertension", "diabetes", "bmi"],
        &["label", "avail"],
    )?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let cell = |i: usize, what: &str| {
            row[i].as_deref().ok_or_else(|| Error::MalformedLine {
                line,
                reason: format!("{what} is empty"),
            })
        };
        let features = [
            parse_f64(cell(1, "age")?, line, "age")?,
            parse_sex(cell(2, "sex")?, line)?,
            parse_flag(cell(3, "hypertension")?, line, "hypertension")? as f64,
            parse_flag(cell(4, "diabetes")?, line, "diabetes")? as f64,
            parse_f64(cell(5, "bmi")?, line, "bmi")?,
        ];
        let label = row[6].as_deref().map(|c| parse_flag(c, line, "label")).transpose()?;
        let avail_col = row[7].as_deref().map(|c| parse_flag(c, line, "avail")).transpose()?;
        let avail = label.is_some() && avail_col.is_none_or(|a| a == 1);
        out.push(ClinicalRow {
            patient_id: cell(0, "patient_id")?.to_string(),
            features,
            label,
            avail,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("clinical table has no rows"));
    }
    Ok(out)
}

pub fn read_clinical_csv(path: &Path) -> Result<Vec<ClinicalRow>> {
    parse_clinical_csv(&read_text(path)?, &path.display().to_string())
}

pub fn parse_waveform_csv(text: &str, origin: &str) -> Result<FlowWaveform> {
    let table = read_csv_columns(text, origin, &["t", "q"], &[])?;
    let mut t = Vec::new();
    let mut q = Vec::new();
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let get = |i: usize, what: &str| {
            row[i]
                .as_deref()
                .ok_or_else(|| Error::MalformedLine {
                    line,
                    reason: format!("{what} is empty"),
                })
                .and_then(|c| parse_f64(c, line, what))
        };
        t.push(get(0, "t")?);
        q.push(get(1, "q")?);
    }
    FlowWaveform::new(t, q)
}

pub fn parse_wss_csv(text: &str, origin: &str) -> Result<WssSeries> {
    let table = read_csv_columns(text, origin, &["t", "tau_x"], &["tau_y", "tau_z"])?;
    let components = if table.rows.iter().any(|r| r[3].is_some()) {
        3
    } else if table.rows.iter().any(|r| r[2].is_some()) {
        2
    } else {
        1
    };
    let mut t = Vec::with_capacity(table.rows.len());
    let mut tau = Vec::with_capacity(table.rows.len());
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let get = |i: usize, what: &str| -> Result<f64> {
            match row[i].as_deref() {
                Some(c) => parse_f64(c, line, what),
                None => Err(Error::MalformedLine {
                    line,
                    reason: format!("{what} is empty"),
                }),
            }
        };
        t.push(get(0, "t")?);
        let mut v = [0.0; 3];
        for (c, name) in ["tau_x", "tau_y", "tau_z"].iter().enumerate().take(components) {
            v[c] = get(c + 1, name)?;
        }
        tau.push(v);
    }
    WssSeries::new(t, tau, components)
}

pub fn wss_to_csv(s: &WssSeries) -> String {
    let names = ["tau_x", "tau_y", "tau_z"];
    let mut out = format!("t,{}\n", names[..s.components()].join(","));
    for (t, v) in s.t().iter().zip(s.tau()) {
        out.push_str(&fmt6(*t));
        for c in &v[..s.components()] {
            out.push(',');
            out.push_str(&format!("{c:.6e}"));
        }
        out.push('\n');
    }
    out
}

pub fn waveform_to_csv(w: &FlowWaveform) -> String {
    let mut out = String::from("t,q\n");
    for (t, q) in w.t().iter().zip(w.q()) {
        out.push_str(&format!("{},{q:.6e}\n", fmt6(*t)));
    }
    out
}
