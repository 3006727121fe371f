//! Monthly demand series ingestion.
//!
//! Input is a long-format CSV with header `series_id,year,month,value`. Rows
//! may arrive in any order; each series is sorted by calendar month, checked
//! for gaps, duplicates and non-positive values, and then trimmed to whole
//! January-December years.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

pub const MONTHS_PER_YEAR: usize = 12;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv at record {record}: {message}")]
    Csv { record: u64, message: String },
    #[error("series '{series}': month {month} out of range 1..=12 (year {year})")]
    MonthOutOfRange {
        series: String,
        year: i32,
        month: u32,
    },
    #[error("series '{series}': duplicate row for {year}-{month:02}")]
    Duplicate {
        series: String,
        year: i32,
        month: u32,
    },
    #[error("series '{series}': non-positive value {value} at {year}-{month:02}")]
    NonPositive {
        series: String,
        year: i32,
        month: u32,
        value: f64,
    },
    #[error("series '{series}': missing month {year}-{month:02}")]
    MissingMonth {
        series: String,
        year: i32,
        month: u32,
    },
    #[error("series '{series}': no complete January-December year")]
    NoWholeYear { series: String },
    #[error("series '{series}': length {len} is not a positive multiple of 12")]
    NotWholeYears { series: String, len: usize },
    #[error("duplicate series id '{0}'")]
    DuplicateSeries(String),
    #[error("corpus is empty")]
    Empty,
}

/// One country's monthly demand history, starting in January and ending in
/// December.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyDemandSeries {
    pub series_id: String,
    pub start_year: i32,
    values: Vec<f64>,
}

impl MonthlyDemandSeries {
    pub fn new(
        series_id: impl Into<String>,
        start_year: i32,
        values: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        let series_id = series_id.into();
        if values.is_empty() || !values.len().is_multiple_of(MONTHS_PER_YEAR) {
            return Err(DatasetError::NotWholeYears {
                series: series_id,
                len: values.len(),
            });
        }
        if let Some((idx, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(DatasetError::NonPositive {
                series: series_id,
                year: start_year + (idx / MONTHS_PER_YEAR) as i32,
                month: (idx % MONTHS_PER_YEAR) as u32 + 1,
                value,
            });
        }
        Ok(Self {
            series_id,
            start_year,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn year_count(&self) -> usize {
        self.values.len() / MONTHS_PER_YEAR
    }

    /// Calendar year of the last observation.
    pub fn end_year(&self) -> i32 {
        self.start_year + self.year_count() as i32 - 1
    }

    /// The series with its last `years` whole years removed, or `None` when
    /// nothing would remain.
    pub fn drop_last_years(&self, years: usize) -> Option<Self> {
        let keep = self.year_count().checked_sub(years)?;
        if keep == 0 {
            return None;
        }
        Some(Self {
            series_id: self.series_id.clone(),
            start_year: self.start_year,
            values: self.values[..keep * MONTHS_PER_YEAR].to_vec(),
        })
    }

    /// The `index`-th calendar year (0-based) as a yearly vector.
    pub fn year(&self, index: usize) -> Option<YearlyVector> {
        let start = index * MONTHS_PER_YEAR;
        let block = self.values.get(start..start + MONTHS_PER_YEAR)?;
        Some(YearlyVector {
            year_index: index,
            values: block.try_into().expect("block has 12 entries"),
        })
    }
}

/// Twelve monthly values of one calendar year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearlyVector {
    /// 0-based position of the year inside its series.
    pub year_index: usize,
    pub values: [f64; MONTHS_PER_YEAR],
}

/// Splits a series into its consecutive calendar years.
pub fn split_yearly(series: &MonthlyDemandSeries) -> Vec<YearlyVector> {
    (0..series.year_count())
        .map(|i| series.year(i).expect("index within year count"))
        .collect()
}

/// Concatenates yearly vectors back into a flat monthly sequence.
pub fn concat_yearly(years: &[YearlyVector]) -> Vec<f64> {
    years.iter().flat_map(|y| y.values).collect()
}

/// A collection of series with unique ids, in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    series: Vec<MonthlyDemandSeries>,
}

impl Corpus {
    pub fn new(mut series: Vec<MonthlyDemandSeries>) -> Result<Self, DatasetError> {
        if series.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashSet::new();
        for s in &series {
            if !seen.insert(s.series_id.clone()) {
                return Err(DatasetError::DuplicateSeries(s.series_id.clone()));
            }
        }
        series.sort_by(|a, b| a.series_id.cmp(&b.series_id));
        Ok(Self { series })
    }

    pub fn series(&self) -> &[MonthlyDemandSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn get(&self, series_id: &str) -> Option<&MonthlyDemandSeries> {
        self.series
            .binary_search_by(|s| s.series_id.as_str().cmp(series_id))
            .ok()
            .map(|i| &self.series[i])
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    series_id: String,
    year: i32,
    month: u32,
    value: f64,
}

/// Reads a corpus from a long-format CSV file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(file)
}

/// Reads a corpus from any CSV source. See [`load_corpus`].
pub fn read_corpus<R: std::io::Read>(reader: R) -> Result<Corpus, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut grouped: BTreeMap<String, BTreeMap<(i32, u32), f64>> = BTreeMap::new();
    for (idx, record) in rdr.deserialize::<Row>().enumerate() {
        let row = record.map_err(|e| DatasetError::Csv {
            record: e.position().map(|p| p.record()).unwrap_or(idx as u64 + 1),
            message: e.to_string(),
        })?;
        if !(1..=12).contains(&row.month) {
            return Err(DatasetError::MonthOutOfRange {
                series: row.series_id,
                year: row.year,
                month: row.month,
            });
        }
        if !(row.value.is_finite() && row.value > 0.0) {
            return Err(DatasetError::NonPositive {
                series: row.series_id,
                year: row.year,
                month: row.month,
                value: row.value,
            });
        }
        let months = grouped.entry(row.series_id.clone()).or_default();
        if months.insert((row.year, row.month), row.value).is_some() {
            return Err(DatasetError::Duplicate {
                series: row.series_id,
                year: row.year,
                month: row.month,
            });
        }
    }
    let series = grouped
        .into_iter()
        .map(|(id, months)| assemble_series(id, months))
        .collect::<Result<Vec<_>, _>>()?;
    Corpus::new(series)
}

/// Writes `corpus` in the long format read by [`read_corpus`]. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_corpus<W: std::io::Write>(corpus: &Corpus, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series_id", "year", "month", "value"])?;
    for s in corpus.series() {
        for (t, v) in s.values().iter().enumerate() {
            let year = s.start_year + (t / MONTHS_PER_YEAR) as i32;
            let month = t % MONTHS_PER_YEAR + 1;
            w.write_record([
                s.series_id.clone(),
                year.to_string(),
                month.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn assemble_series(
    id: String,
    months: BTreeMap<(i32, u32), f64>,
) -> Result<MonthlyDemandSeries, DatasetError> {
    let mut iter = months.iter();
    let (&(mut year, mut month), _) = iter.next().expect("group has at least one row");
    for (&(y, m), _) in iter {
        let (ny, nm) = if month == 12 {
            (year + 1, 1)
        } else {
            (year, month + 1)
        };
        if (y, m) != (ny, nm) {
            return Err(DatasetError::MissingMonth {
                series: id,
                year: ny,
                month: nm,
            });
        }
        year = y;
        month = m;
    }

    let (&(first_year, first_month), _) = months.first_key_value().expect("non-empty");
    let (&(last_year, last_month), _) = months.last_key_value().expect("non-empty");
    let start_year = if first_month == 1 {
        first_year
    } else {
        first_year + 1
    };
    let end_year = if last_month == 12 {
        last_year
    } else {
        last_year - 1
    };
    if end_year < start_year {
        return Err(DatasetError::NoWholeYear { series: id });
    }
    if first_month != 1 || last_month != 12 {
        log::warn!(
            "series '{id}': truncated {first_year}-{first_month:02}..{last_year}-{last_month:02} \
             to whole years {start_year}..{end_year}"
        );
    }
    let values = months
        .range((start_year, 1)..=(end_year, 12))
        .map(|(_, &v)| v)
        .collect();
    MonthlyDemandSeries::new(id, start_year, values)
}
