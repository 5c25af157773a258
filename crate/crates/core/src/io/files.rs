use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{io_error, CsvTable};
use crate::charge::Spectrum;
use crate::error::{Error, Result};
use crate::ramsey::RamseySignal;
use crate::sensitivity::{IntensityRow, IntensityTable};
use crate::strainmap::{NvAxis, StrainMap};

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn reader(path: &Path, has_headers: bool) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(!has_headers)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn cell(path: &Path, line: u64, column: &str, text: &str) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    let v: f64 = text.parse().map_err(|_| {
        format_err(
            path,
            format!("line {line}: column {column}: '{text}' is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(format_err(
            path,
            format!("line {line}: column {column}: non-finite value"),
        ));
    }
    Ok(Some(v))
}

/// Named numeric columns; `None` marks an empty cell.
struct Columns {
    names: Vec<String>,
    lines: Vec<u64>,
    data: Vec<Vec<Option<f64>>>,
}

impl Columns {
    fn read(path: &Path, required: &[&str], optional: &[&str]) -> Result<Columns> {
        let mut rdr = reader(path, true)?;
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| format_err(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        for n in &names {
            if !required.contains(&n.as_str()) && !optional.contains(&n.as_str()) {
                return Err(format_err(path, format!("unexpected column '{n}'")));
            }
        }
        for r in required {
            if !names.iter().any(|n| n == r) {
                return Err(format_err(
                    path,
                    format!("missing column '{r}' (found: {})", names.join(", ")),
                ));
            }
        }
        let mut cols = Columns {
            data: vec![Vec::new(); names.len()],
            names,
            lines: Vec::new(),
        };
        for record in rdr.records() {
            let record = record.map_err(|e| format_err(path, e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            for (j, text) in record.iter().enumerate() {
                cols.data[j].push(cell(path, line, &cols.names[j], text)?);
            }
            cols.lines.push(line);
        }
        if cols.lines.is_empty() {
            return Err(format_err(path, "no data rows"));
        }
        Ok(cols)
    }

    fn optional(&self, name: &str) -> Option<&[Option<f64>]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.data[j].as_slice())
    }

    fn required(&self, path: &Path, name: &str) -> Result<Vec<f64>> {
        let col = self
            .optional(name)
            .expect("required column checked on read");
        col.iter()
            .zip(&self.lines)
            .map(|(v, line)| {
                v.ok_or_else(|| {
                    format_err(path, format!("line {line}: empty cell in column {name}"))
                })
            })
            .collect()
    }
}

const TABLE_REQUIRED: [&str; 4] = ["intensity_mw_um2", "contrast", "psi", "overhead_us"];
const TABLE_OPTIONAL: [&str; 4] = ["photon_rate_kcps", "readout_us", "t2_sq_us", "t2_dq_us"];

/// Reads an intensity table. Rows must be strictly increasing in
/// intensity; optional columns are `photon_rate_kcps`, `readout_us`,
/// `t2_sq_us` and `t2_dq_us`.
pub fn read_intensity_table(path: &Path) -> Result<IntensityTable> {
    let cols = Columns::read(path, &TABLE_REQUIRED, &TABLE_OPTIONAL)?;
    let [intensity, contrast, psi, overhead] = TABLE_REQUIRED.map(|n| cols.required(path, n));
    let (intensity, contrast, psi, overhead) = (intensity?, contrast?, psi?, overhead?);
    let opt = TABLE_OPTIONAL.map(|n| cols.optional(n));
    let rows = (0..intensity.len())
        .map(|i| {
            let get = |k: usize| opt[k].and_then(|c| c[i]);
            IntensityRow {
                photon_rate_kcps: get(0),
                readout_us: get(1),
                t2_sq_us: get(2),
                t2_dq_us: get(3),
                ..IntensityRow::new(intensity[i], contrast[i], psi[i], overhead[i])
            }
        })
        .collect();
    IntensityTable::new(rows).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_intensity_table(path: &Path, table: &IntensityTable) -> Result<()> {
    let rows = table.rows();
    let first = rows[0];
    let optional = [
        first.photon_rate_kcps,
        first.readout_us,
        first.t2_sq_us,
        first.t2_dq_us,
    ];
    let mut headers: Vec<&str> = TABLE_REQUIRED.to_vec();
    headers.extend(
        TABLE_OPTIONAL
            .iter()
            .zip(optional)
            .filter(|(_, v)| v.is_some())
            .map(|(n, _)| *n),
    );
    let mut t = CsvTable::new(headers);
    for r in rows {
        let mut row = vec![r.intensity, r.contrast, r.psi, r.t_overhead_us];
        row.extend(
            [r.photon_rate_kcps, r.readout_us, r.t2_sq_us, r.t2_dq_us]
                .into_iter()
                .flatten(),
        );
        t.push(row);
    }
    std::fs::write(path, t.to_csv()).map_err(|e| io_error(path, e))
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let cols = Columns::read(path, &["wavelength_nm", "counts"], &[])?;
    Spectrum::new(
        cols.required(path, "wavelength_nm")?,
        cols.required(path, "counts")?,
    )
    .map_err(|e| format_err(path, e.to_string()))
}

/// Reads a Ramsey signal (`tau_us`, `contrast`).
pub fn read_ramsey_signal(path: &Path) -> Result<RamseySignal> {
    let cols = Columns::read(path, &["tau_us", "contrast"], &[])?;
    Ok(RamseySignal {
        tau_us: cols.required(path, "tau_us")?,
        signal: cols.required(path, "contrast")?,
        noise_sigma: 0.0,
        seed: None,
    })
}

/// JSON metadata stored next to a strain-map grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainSidecar {
    pub pixel_pitch_um: f64,
    pub orientation: NvAxis,
    pub units: String,
}

/// `map.csv` → `map.json`.
pub fn sidecar_path(map: &Path) -> PathBuf {
    map.with_extension("json")
}

/// Reads a headerless numeric grid in kHz; empty or `NaN` cells are
/// masked. Metadata comes from `sidecar`, or `<map>.json` by default.
pub fn read_strain_map(path: &Path, sidecar: Option<&Path>) -> Result<StrainMap> {
    let meta_path = sidecar
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sidecar_path(path));
    let text = std::fs::read_to_string(&meta_path).map_err(|e| io_error(&meta_path, e))?;
    let meta: StrainSidecar =
        serde_json::from_str(&text).map_err(|e| format_err(&meta_path, e.to_string()))?;
    if meta.units != "kHz" {
        return Err(format_err(
            &meta_path,
            format!("units must be \"kHz\", got {:?}", meta.units),
        ));
    }
    let mut rdr = reader(path, false)?;
    let (mut values, mut cols) = (Vec::new(), None);
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(format_err(
                    path,
                    format!("line {line}: {} cells, expected {c}", record.len()),
                ))
            }
            _ => {}
        }
        for text in record.iter() {
            let v = if text.is_empty() || text.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                text.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        format_err(path, format!("line {line}: '{text}' is not a number"))
                    })?
            };
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| format_err(path, "empty strain map"))?;
    let mask = values.iter().map(|v| v.is_finite()).collect();
    StrainMap::new(
        rows,
        cols,
        values,
        mask,
        meta.pixel_pitch_um,
        meta.orientation,
    )
    .map_err(|e| format_err(path, e.to_string()))
}

/// The grid of a strain map as a headerless table; masked pixels are NaN.
pub fn strain_map_csv(map: &StrainMap) -> CsvTable {
    let mut t = CsvTable::new(Vec::<String>::new());
    for r in 0..map.rows() {
        t.rows.push(
            (0..map.cols())
                .map(|c| map.get(r, c).unwrap_or(f64::NAN))
                .collect(),
        );
    }
    t
}

/// Writes the grid to `path` and its metadata to the sidecar; returns the
/// sidecar path.
pub fn write_strain_map(path: &Path, map: &StrainMap) -> Result<PathBuf> {
    std::fs::write(path, strain_map_csv(map).to_csv()).map_err(|e| io_error(path, e))?;
    let meta = StrainSidecar {
        pixel_pitch_um: map.pixel_pitch_um,
        orientation: map.orientation,
        units: "kHz".into(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes") + "\n";
    std::fs::write(&side, text).map_err(|e| io_error(&side, e))?;
    Ok(side)
}
