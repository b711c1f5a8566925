//! Observed or simulated event times and the `component,time` CSV format.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{HawkesError, Result};

/// Per-component sorted event times observed on a window `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventData {
    start: f64,
    end: f64,
    times: Vec<Vec<f64>>,
}

impl EventData {
    pub fn new(start: f64, end: f64, times: Vec<Vec<f64>>) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || end < start {
            return Err(HawkesError::InvalidParameter(format!(
                "invalid event window [{start}, {end}]"
            )));
        }
        for (k, ts) in times.iter().enumerate() {
            if let Some(w) = ts.windows(2).find(|w| !(w[0] < w[1])) {
                return Err(HawkesError::InvalidParameter(format!(
                    "times of component {k} are not strictly increasing near {}",
                    w[0]
                )));
            }
            if let (Some(first), Some(last)) = (ts.first(), ts.last()) {
                if *first < start || *last > end {
                    return Err(HawkesError::InvalidParameter(format!(
                        "times of component {k} leave the window [{start}, {end}]"
                    )));
                }
            }
        }
        Ok(Self { start, end, times })
    }

    /// No events at all on `[start, end]`.
    pub fn empty(dimension: usize, start: f64, end: f64) -> Result<Self> {
        Self::new(start, end, vec![Vec::new(); dimension])
    }

    pub fn dimension(&self) -> usize {
        self.times.len()
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn times(&self, k: usize) -> &[f64] {
        &self.times[k]
    }

    pub fn all_times(&self) -> &[Vec<f64>] {
        &self.times
    }

    pub fn total(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }

    /// Events of component `k` in `[a, b)`.
    pub fn in_half_open(&self, k: usize, a: f64, b: f64) -> &[f64] {
        let ts = &self.times[k];
        let lo = ts.partition_point(|t| *t < a);
        let hi = ts.partition_point(|t| *t < b);
        &ts[lo..hi.max(lo)]
    }

    /// Events of component `k` in `[a, b]`.
    pub fn in_closed(&self, k: usize, a: f64, b: f64) -> &[f64] {
        let ts = &self.times[k];
        let lo = ts.partition_point(|t| *t < a);
        let hi = ts.partition_point(|t| *t <= b);
        &ts[lo..hi.max(lo)]
    }

    /// `N^k[a, b]`.
    pub fn count(&self, k: usize, a: f64, b: f64) -> usize {
        self.in_closed(k, a, b).len()
    }

    /// Restriction to the window `[start, end]`.
    pub fn restrict(&self, start: f64, end: f64) -> Result<Self> {
        let times = (0..self.dimension())
            .map(|k| self.in_closed(k, start, end).to_vec())
            .collect();
        Self::new(start, end, times)
    }

    /// Copy with every event of the listed components deleted.
    pub fn without_components(&self, drop: &[usize]) -> Self {
        let mut out = self.clone();
        for &k in drop {
            out.times[k].clear();
        }
        out
    }

    /// Writes the `component,time` CSV: rows sorted by time then component,
    /// times with 15 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut rows: Vec<(f64, usize)> = self
            .times
            .iter()
            .enumerate()
            .flat_map(|(k, ts)| ts.iter().map(move |t| (*t, k)))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        writeln!(out, "component,time")?;
        for (t, k) in rows {
            writeln!(out, "{k},{}", format_significant(t, 15))?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the `component,time` CSV. Rows must be sorted by time then
    /// component; times outside `[start, end]` are dropped.
    pub fn read_csv<R: BufRead>(input: R, dimension: usize, start: f64, end: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let headers = reader.headers().map_err(|e| HawkesError::Parse(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "component" || &headers[1] != "time" {
            return Err(HawkesError::Parse(format!(
                "expected header `component,time`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut times = vec![Vec::new(); dimension];
        let mut previous: Option<(f64, usize)> = None;
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| HawkesError::Parse(e.to_string()))?;
            let row = line + 2;
            let k: usize = record[0]
                .parse()
                .map_err(|_| HawkesError::Parse(format!("row {row}: bad component `{}`", &record[0])))?;
            let t: f64 = record[1]
                .parse()
                .map_err(|_| HawkesError::Parse(format!("row {row}: bad time `{}`", &record[1])))?;
            if !t.is_finite() {
                return Err(HawkesError::Parse(format!("row {row}: non-finite time")));
            }
            if k >= dimension {
                return Err(HawkesError::Parse(format!(
                    "row {row}: component {k} outside dimension {dimension}"
                )));
            }
            if let Some((pt, pk)) = previous {
                if t < pt || (t == pt && k <= pk) {
                    return Err(HawkesError::Parse(format!(
                        "row {row}: rows not sorted by time then component"
                    )));
                }
            }
            previous = Some((t, k));
            if t >= start && t <= end {
                times[k].push(t);
            }
        }
        Self::new(start, end, times)
    }

    pub fn read_csv_file(path: &Path, dimension: usize, start: f64, end: f64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), dimension, start, end)
    }
}

/// Plain decimal rendering of `x` with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.99.. -> 10.0)
    let significant = s.chars().filter(char::is_ascii_digit).skip_while(|c| *c == '0').count();
    if significant > digits && decimals > 0 {
        format!("{:.*}", decimals - 1, x)
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_or_out_of_window() {
        assert!(EventData::new(0.0, 1.0, vec![vec![0.5, 0.4]]).is_err());
        assert!(EventData::new(0.0, 1.0, vec![vec![0.5, 0.5]]).is_err());
        assert!(EventData::new(0.0, 1.0, vec![vec![1.5]]).is_err());
        assert!(EventData::new(1.0, 0.0, vec![]).is_err());
    }

    #[test]
    fn window_queries() {
        let ev = EventData::new(-1.0, 3.0, vec![vec![-0.5, 0.0, 1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(ev.in_half_open(0, 0.0, 2.0), &[0.0, 1.0]);
        assert_eq!(ev.in_closed(0, 0.0, 2.0), &[0.0, 1.0, 2.0]);
        assert_eq!(ev.count(0, 0.0, 3.0), 4);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let ev = EventData::new(-1.0, 10.0, vec![vec![-0.25, 1.5, 9.12345678901234], vec![0.75, 1.5]]).unwrap();
        let mut buf = Vec::new();
        ev.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("component,time\n0,-0.250000000000000\n"));
        assert!(text.contains("0,1.50000000000000\n1,1.50000000000000\n"));
        let back = EventData::read_csv(&buf[..], 2, -1.0, 10.0).unwrap();
        assert_eq!(back, ev);

        let bad = "component,time\n0,2.0\n1,1.0\n";
        assert!(EventData::read_csv(bad.as_bytes(), 2, 0.0, 5.0).is_err());
        let bad_header = "k,t\n0,1.0\n";
        assert!(EventData::read_csv(bad_header.as_bytes(), 1, 0.0, 5.0).is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(1234.5678901234567, 15), "1234.56789012346");
        assert_eq!(format_significant(0.001, 3), "0.00100");
        assert_eq!(format_significant(9.9999, 3), "10.0");
    }
}
