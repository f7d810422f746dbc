//! Field ingestion and serialization: long-format CSV and a compact binary
//! grid format.
//!
//! CSV layout: header `year,lat,lon,rain_mm`, one row per (year, cell),
//! LF line endings on write, lenient about trailing `\r` on read. Every
//! listed cell must appear in every year (no gaps), years must be
//! contiguous, and rainfall must be non-negative.
//!
//! A monthly table (header `year,month,lat,lon,rain_mm`, months 1-12) is
//! also accepted on read; months are summed into annual totals, and every
//! (year, cell) must carry the same month set. Writing always produces
//! the annual layout.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic  b"RGRD"
//! u8     version = 1
//! u32    n_locations
//! u32    n_years
//! i32    first_year
//! f64    grid_step
//! f64 x2 per location: lat, lon
//! f64    values, year-major ([year][location])
//! ```

use crate::grid::{FieldError, GridError, GridSpec, RainfallField};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

const MAGIC: [u8; 4] = *b"RGRD";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cell ({lat}, {lon}) is missing in year {year}")]
    MissingCell { year: i32, lat: f64, lon: f64 },
    #[error("line {line}: duplicate entry for year {year}, cell ({lat}, {lon})")]
    DuplicateCell {
        line: usize,
        year: i32,
        lat: f64,
        lon: f64,
    },
    #[error("line {line}: duplicate entry for year {year} month {month}, cell ({lat}, {lon})")]
    DuplicateMonth {
        line: usize,
        year: i32,
        month: u8,
        lat: f64,
        lon: f64,
    },
    #[error(
        "cell ({lat}, {lon}) has months {found:?} in year {year}, \
         but the table otherwise carries {expected:?}"
    )]
    InconsistentMonths {
        year: i32,
        lat: f64,
        lon: f64,
        found: Vec<u8>,
        expected: Vec<u8>,
    },
    #[error("line {line}: negative rainfall {value} in year {year} at ({lat}, {lon})")]
    NegativeRainfall {
        line: usize,
        year: i32,
        lat: f64,
        lon: f64,
        value: f64,
    },
    #[error("years are not contiguous: {missing_year} is absent")]
    NonContiguousYears { missing_year: i32 },
    #[error("bad magic bytes {found:?}, expected \"RGRD\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("file ends before the declared payload")]
    TruncatedFile,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn eof_as_truncation(e: io::Error) -> IngestError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        IngestError::TruncatedFile
    } else {
        IngestError::Io(e)
    }
}

/// Reads a long-format CSV field, annual or monthly (the header decides;
/// monthly rows are summed into annual totals). The grid step is inferred
/// as the smallest positive coordinate gap on either axis (1.0 when only
/// one cell exists).
pub fn read_csv<R: Read>(reader: R) -> Result<RainfallField, IngestError> {
    let reader = BufReader::new(reader);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(IngestError::Parse {
                line: 1,
                msg: "empty input, expected a header row".into(),
            })
        }
    };
    let monthly = match header.trim_end_matches('\r') {
        "year,lat,lon,rain_mm" => false,
        "year,month,lat,lon,rain_mm" => true,
        other => {
            return Err(IngestError::Parse {
                line: 1,
                msg: format!(
                    "bad header {other:?}, expected \"year,lat,lon,rain_mm\" or \
                     \"year,month,lat,lon,rain_mm\""
                ),
            })
        }
    };

    // (year, lat-bits, lon-bits) -> value; bit keys give exact float identity.
    let mut cells: BTreeMap<(i32, u64, u64), f64> = BTreeMap::new();
    let mut months: BTreeMap<(i32, u64, u64), BTreeMap<u8, f64>> = BTreeMap::new();
    let mut coords: BTreeMap<(u64, u64), (f64, f64)> = BTreeMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next_field = |name: &str| {
            parts.next().ok_or_else(|| IngestError::Parse {
                line: line_no,
                msg: format!("missing {name} column"),
            })
        };
        let year: i32 = parse_field(next_field("year")?, "year", line_no)?;
        let month: Option<u8> = if monthly {
            let m: u8 = parse_field(next_field("month")?, "month", line_no)?;
            if !(1..=12).contains(&m) {
                return Err(IngestError::Parse {
                    line: line_no,
                    msg: format!("month {m} out of range 1..=12"),
                });
            }
            Some(m)
        } else {
            None
        };
        let lat: f64 = parse_field(next_field("lat")?, "lat", line_no)?;
        let lon: f64 = parse_field(next_field("lon")?, "lon", line_no)?;
        let value: f64 = parse_field(next_field("rain_mm")?, "rain_mm", line_no)?;
        if parts.next().is_some() {
            return Err(IngestError::Parse {
                line: line_no,
                msg: format!("too many columns, expected {}", if monthly { 5 } else { 4 }),
            });
        }
        if !value.is_finite() || value < 0.0 {
            return Err(IngestError::NegativeRainfall {
                line: line_no,
                year,
                lat,
                lon,
                value,
            });
        }
        let key = (year, lat.to_bits(), lon.to_bits());
        match month {
            None => {
                if cells.insert(key, value).is_some() {
                    return Err(IngestError::DuplicateCell {
                        line: line_no,
                        year,
                        lat,
                        lon,
                    });
                }
            }
            Some(m) => {
                if months.entry(key).or_default().insert(m, value).is_some() {
                    return Err(IngestError::DuplicateMonth {
                        line: line_no,
                        year,
                        month: m,
                        lat,
                        lon,
                    });
                }
            }
        }
        coords.insert((lat.to_bits(), lon.to_bits()), (lat, lon));
    }
    if monthly {
        // Partial years would silently deflate annual totals, so the month
        // set must be uniform across the table (complete or not).
        let expected: Vec<u8> = months
            .values()
            .next()
            .map(|set| set.keys().copied().collect())
            .unwrap_or_default();
        for (&(year, latb, lonb), set) in &months {
            let found: Vec<u8> = set.keys().copied().collect();
            if found != expected {
                let (lat, lon) = coords[&(latb, lonb)];
                return Err(IngestError::InconsistentMonths {
                    year,
                    lat,
                    lon,
                    found,
                    expected,
                });
            }
            cells.insert((year, latb, lonb), set.values().sum());
        }
    }
    if cells.is_empty() {
        return Err(IngestError::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }

    let years: Vec<i32> = {
        let mut ys: Vec<i32> = cells.keys().map(|k| k.0).collect();
        ys.dedup();
        ys
    };
    let first_year = years[0];
    for (offset, &year) in years.iter().enumerate() {
        let expected = first_year + offset as i32;
        if year != expected {
            return Err(IngestError::NonContiguousYears {
                missing_year: expected,
            });
        }
    }

    let points: Vec<(f64, f64)> = coords.values().copied().collect();
    let grid_step = infer_grid_step(&points);
    let grid = Arc::new(GridSpec::new(points, grid_step)?);

    let n_years = years.len();
    let n = grid.len();
    let mut values = Array2::zeros((n_years, n));
    for (t, &year) in years.iter().enumerate() {
        for s in 0..n {
            let (lat, lon) = grid.point(s);
            let key = (year, lat.to_bits(), lon.to_bits());
            match cells.get(&key) {
                Some(&v) => values[(t, s)] = v,
                None => return Err(IngestError::MissingCell { year, lat, lon }),
            }
        }
        let per_year = cells
            .range((year, 0, 0)..=(year, u64::MAX, u64::MAX))
            .count();
        if per_year != n {
            // More cells in this year than the grid knows: some location is
            // absent from another year, find it for the error message.
            for (&(_, latb, lonb), _) in cells.range((year, 0, 0)..=(year, u64::MAX, u64::MAX)) {
                let (lat, lon) = coords[&(latb, lonb)];
                if grid.position_of(lat, lon).is_none() {
                    return Err(IngestError::MissingCell { year, lat, lon });
                }
            }
        }
    }
    // A location listed only in later years would have tripped MissingCell in
    // year 0 already; the loop above covers the converse.

    Ok(RainfallField::new(grid, first_year, values)?)
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: usize) -> Result<T, IngestError> {
    raw.trim().parse().map_err(|_| IngestError::Parse {
        line,
        msg: format!("cannot parse {name} from {raw:?}"),
    })
}

/// Smallest positive gap between successive distinct coordinates on either
/// axis; 1.0 when every point shares both coordinates (single cell).
fn infer_grid_step(points: &[(f64, f64)]) -> f64 {
    let mut step = f64::INFINITY;
    for extract in [|p: &(f64, f64)| p.0, |p: &(f64, f64)| p.1] {
        let mut axis: Vec<f64> = points.iter().map(extract).collect();
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        for pair in axis.windows(2) {
            let gap = pair[1] - pair[0];
            if gap > 0.0 && gap < step {
                step = gap;
            }
        }
    }
    if step.is_finite() {
        step
    } else {
        1.0
    }
}

pub fn read_csv_path(path: &Path) -> Result<RainfallField, IngestError> {
    read_csv(File::open(path)?)
}

/// Writes the long-format CSV with LF endings and floats trimmed to at most
/// 6 fractional digits. Rows are emitted year-major, locations ascending.
pub fn write_csv<W: Write>(writer: W, field: &RainfallField) -> Result<(), io::Error> {
    let mut w = BufWriter::new(writer);
    w.write_all(b"year,lat,lon,rain_mm\n")?;
    for t in 0..field.n_years() {
        let year = field.year_at(t);
        for s in 0..field.n_locations() {
            let (lat, lon) = field.grid().point(s);
            writeln!(
                w,
                "{year},{},{},{}",
                crate::fmt::trim6(lat),
                crate::fmt::trim6(lon),
                crate::fmt::trim6(field.value(t, s))
            )?;
        }
    }
    w.flush()
}

pub fn write_csv_path(path: &Path, field: &RainfallField) -> Result<(), io::Error> {
    write_csv(File::create(path)?, field)
}

/// Reads the binary grid format. Stored location order need not be sorted;
/// value columns are permuted to the canonical id order on load.
pub fn read_binary<R: Read>(reader: R) -> Result<RainfallField, IngestError> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof_as_truncation)?;
    if magic != MAGIC {
        return Err(IngestError::BadMagic { found: magic });
    }
    let version = r.read_u8().map_err(eof_as_truncation)?;
    if version != FORMAT_VERSION {
        return Err(IngestError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = r.read_u32::<LittleEndian>().map_err(eof_as_truncation)? as usize;
    let n_years = r.read_u32::<LittleEndian>().map_err(eof_as_truncation)? as usize;
    let first_year = r.read_i32::<LittleEndian>().map_err(eof_as_truncation)?;
    let grid_step = r.read_f64::<LittleEndian>().map_err(eof_as_truncation)?;

    let mut stored_points = Vec::with_capacity(n);
    for _ in 0..n {
        let lat = r.read_f64::<LittleEndian>().map_err(eof_as_truncation)?;
        let lon = r.read_f64::<LittleEndian>().map_err(eof_as_truncation)?;
        stored_points.push((lat, lon));
    }
    let grid = Arc::new(GridSpec::new(stored_points.clone(), grid_step)?);
    // Column permutation: stored order -> canonical sorted order.
    let canonical: Vec<usize> = stored_points
        .iter()
        .map(|&(lat, lon)| {
            grid.position_of(lat, lon)
                .expect("stored point must exist in its own grid")
        })
        .collect();

    let mut values = Array2::zeros((n_years, n));
    for t in 0..n_years {
        for stored in 0..n {
            let v = r.read_f64::<LittleEndian>().map_err(eof_as_truncation)?;
            values[(t, canonical[stored])] = v;
        }
    }
    Ok(RainfallField::new(grid, first_year, values)?)
}

pub fn read_binary_path(path: &Path) -> Result<RainfallField, IngestError> {
    read_binary(File::open(path)?)
}

/// Writes the binary grid format with locations in canonical id order.
pub fn write_binary<W: Write>(writer: W, field: &RainfallField) -> Result<(), io::Error> {
    let mut w = BufWriter::new(writer);
    w.write_all(&MAGIC)?;
    w.write_u8(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(field.n_locations() as u32)?;
    w.write_u32::<LittleEndian>(field.n_years() as u32)?;
    w.write_i32::<LittleEndian>(field.first_year())?;
    w.write_f64::<LittleEndian>(field.grid().grid_step())?;
    for s in 0..field.n_locations() {
        let (lat, lon) = field.grid().point(s);
        w.write_f64::<LittleEndian>(lat)?;
        w.write_f64::<LittleEndian>(lon)?;
    }
    for t in 0..field.n_years() {
        for s in 0..field.n_locations() {
            w.write_f64::<LittleEndian>(field.value(t, s))?;
        }
    }
    w.flush()
}

pub fn write_binary_path(path: &Path, field: &RainfallField) -> Result<(), io::Error> {
    write_binary(File::create(path)?, field)
}

/// In-memory binary serialization, used for content digests.
pub fn binary_bytes(field: &RainfallField) -> Vec<u8> {
    let mut buf = Vec::new();
    write_binary(&mut buf, field).expect("writing to a Vec cannot fail");
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_field() -> RainfallField {
        let grid = Arc::new(GridSpec::new(vec![(10.0, 70.0), (10.0, 70.25)], 0.25).unwrap());
        let values = Array2::from_shape_vec((2, 2), vec![812.5, 1030.125, 700.0, 650.25]).unwrap();
        RainfallField::new(grid, 1901, values).unwrap()
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let field = tiny_field();
        let mut buf = Vec::new();
        write_csv(&mut buf, &field).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back.values(), field.values());
        assert_eq!(back.first_year(), 1901);
        assert_eq!(back.grid().points(), field.grid().points());
    }

    #[test]
    fn csv_writer_uses_lf_and_trimmed_floats() {
        let field = tiny_field();
        let mut buf = Vec::new();
        write_csv(&mut buf, &field).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("year,lat,lon,rain_mm"));
        assert_eq!(lines.next(), Some("1901,10,70,812.5"));
        assert_eq!(lines.next(), Some("1901,10,70.25,1030.125"));
    }

    #[test]
    fn csv_rejects_missing_cell() {
        let text = "year,lat,lon,rain_mm\n1901,0,0,5\n1901,0,1,6\n1902,0,0,7\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::MissingCell { year: 1902, .. }));
    }

    #[test]
    fn csv_rejects_gap_in_years() {
        let text = "year,lat,lon,rain_mm\n1901,0,0,5\n1903,0,0,7\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            IngestError::NonContiguousYears { missing_year: 1902 }
        ));
    }

    #[test]
    fn csv_rejects_negative_rainfall() {
        let text = "year,lat,lon,rain_mm\n1901,0,0,-3\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::NegativeRainfall { line: 2, .. }));
    }

    #[test]
    fn csv_rejects_duplicate_cell() {
        let text = "year,lat,lon,rain_mm\n1901,0,0,5\n1901,0,0,6\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateCell { line: 3, .. }));
    }

    #[test]
    fn csv_accepts_crlf_input() {
        let text = "year,lat,lon,rain_mm\r\n1901,0,0,5\r\n1902,0,0,6\r\n";
        let field = read_csv(text.as_bytes()).unwrap();
        assert_eq!(field.n_years(), 2);
        assert_eq!(field.value(0, 0), 5.0);
    }

    #[test]
    fn csv_infers_quarter_degree_step() {
        let text = "year,lat,lon,rain_mm\n\
                    1901,10,70,1\n1901,10,70.25,2\n\
                    1902,10,70,3\n1902,10,70.25,4\n";
        let field = read_csv(text.as_bytes()).unwrap();
        assert_eq!(field.grid().grid_step(), 0.25);
    }

    #[test]
    fn monthly_csv_sums_into_annual_totals() {
        let mut text = String::from("year,month,lat,lon,rain_mm\n");
        for year in [1901, 1902] {
            for month in 1..=12 {
                text.push_str(&format!("{year},{month},10,70,{}\n", month as f64 * 0.5));
                text.push_str(&format!("{year},{month},10,71,100\n"));
            }
        }
        let field = read_csv(text.as_bytes()).unwrap();
        assert_eq!(field.n_years(), 2);
        // 0.5 + 1.0 + ... + 6.0 = 39; twelve months of 100 = 1200.
        assert_eq!(field.value(0, 0), 39.0);
        assert_eq!(field.value(0, 1), 1200.0);
        assert_eq!(field.value(1, 0), 39.0);
    }

    #[test]
    fn monthly_csv_accepts_a_uniform_partial_season() {
        // Only June-September everywhere: legal, totals are seasonal sums.
        let mut text = String::from("year,month,lat,lon,rain_mm\n");
        for year in [1901, 1902] {
            for month in 6..=9 {
                text.push_str(&format!("{year},{month},10,70,50\n"));
            }
        }
        let field = read_csv(text.as_bytes()).unwrap();
        assert_eq!(field.value(0, 0), 200.0);
    }

    #[test]
    fn monthly_csv_rejects_out_of_range_month() {
        let text = "year,month,lat,lon,rain_mm\n1901,13,10,70,5\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 2, .. }));
    }

    #[test]
    fn monthly_csv_rejects_duplicate_month() {
        let text = "year,month,lat,lon,rain_mm\n\
                    1901,4,10,70,5\n1901,4,10,70,6\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            IngestError::DuplicateMonth {
                line: 3,
                year: 1901,
                month: 4,
                ..
            }
        ));
    }

    #[test]
    fn monthly_csv_rejects_ragged_month_sets() {
        let text = "year,month,lat,lon,rain_mm\n\
                    1901,1,10,70,5\n1901,2,10,70,6\n\
                    1902,1,10,70,7\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        match err {
            IngestError::InconsistentMonths {
                year,
                found,
                expected,
                ..
            } => {
                assert_eq!(year, 1902);
                assert_eq!(found, vec![1]);
                assert_eq!(expected, vec![1, 2]);
            }
            other => panic!("expected InconsistentMonths, got {other:?}"),
        }
    }

    #[test]
    fn monthly_csv_round_trips_through_annual_writer() {
        let mut text = String::from("year,month,lat,lon,rain_mm\n");
        for year in [1901, 1902, 1903] {
            for month in 1..=12 {
                for (lat, lon) in [(10.0, 70.0), (10.0, 71.0)] {
                    text.push_str(&format!(
                        "{year},{month},{lat},{lon},{}\n",
                        f64::from(month) * 10.0
                    ));
                }
            }
        }
        let field = read_csv(text.as_bytes()).unwrap();
        let mut annual = Vec::new();
        write_csv(&mut annual, &field).unwrap();
        let back = read_csv(annual.as_slice()).unwrap();
        assert_eq!(back.values(), field.values());
        assert_eq!(back.values()[(0, 0)], 780.0);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let field = tiny_field();
        let bytes = binary_bytes(&field);
        let back = read_binary(&bytes[..]).unwrap();
        assert_eq!(back.values(), field.values());
        assert_eq!(back.grid().grid_step(), field.grid().grid_step());
        assert_eq!(back.first_year(), field.first_year());
    }

    #[test]
    fn binary_rejects_bad_magic() {
        let mut bytes = binary_bytes(&tiny_field());
        bytes[0] = b'X';
        let err = read_binary(&bytes[..]).unwrap_err();
        assert!(matches!(err, IngestError::BadMagic { .. }));
    }

    #[test]
    fn binary_rejects_future_version() {
        let mut bytes = binary_bytes(&tiny_field());
        bytes[4] = 9;
        let err = read_binary(&bytes[..]).unwrap_err();
        assert!(matches!(
            err,
            IngestError::VersionMismatch {
                found: 9,
                expected: 1
            }
        ));
    }

    #[test]
    fn binary_rejects_truncation() {
        let bytes = binary_bytes(&tiny_field());
        let err = read_binary(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, IngestError::TruncatedFile));
        let err = read_binary(&bytes[..2]).unwrap_err();
        assert!(matches!(err, IngestError::TruncatedFile));
    }

    #[test]
    fn binary_reader_sorts_unordered_points() {
        // Hand-build a file whose two points are stored in reverse order and
        // check the values follow their coordinates, not their slots.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RGRD");
        bytes.push(1);
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1901i32.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        for &(lat, lon) in &[(0.0f64, 1.0f64), (0.0, 0.0)] {
            bytes.extend_from_slice(&lat.to_le_bytes());
            bytes.extend_from_slice(&lon.to_le_bytes());
        }
        for v in [10.0f64, 20.0, 30.0, 40.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let field = read_binary(&bytes[..]).unwrap();
        // Canonical id 0 is (0,0), which was stored second.
        assert_eq!(field.grid().point(0), (0.0, 0.0));
        assert_eq!(field.value(0, 0), 20.0);
        assert_eq!(field.value(0, 1), 10.0);
        assert_eq!(field.value(1, 0), 40.0);
        assert_eq!(field.value(1, 1), 30.0);
    }
}
