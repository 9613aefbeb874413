//! Half-hourly meter data ingestion.
//!
//! Parses utility CSV exports into [`MeterRecord`]s and carves them into
//! calendar-filtered [`SlotMatrix`] values with one column per half-hour
//! slot. Readings cover the preceding half hour, so slot 0 is labelled
//! `00:30` and slot 47 is `24:00`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SLOTS_PER_DAY: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    GeneralConsumption,
    ControlledLoad,
    GrossGeneration,
}

impl Category {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "gc" | "general_consumption" => Some(Category::GeneralConsumption),
            "cl" | "controlled_load" => Some(Category::ControlledLoad),
            "gg" | "gross_generation" => Some(Category::GrossGeneration),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Category::GeneralConsumption => "GC",
            Category::ControlledLoad => "CL",
            Category::GrossGeneration => "GG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterRecord {
    pub customer_id: u64,
    pub category: Category,
    pub date: NaiveDate,
    pub readings: Vec<f64>,
}

/// Date column encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateFormat {
    /// Try ISO, then `d-mmm-yy`, then `d/mm/yyyy`.
    Auto,
    /// `yyyy-mm-dd`
    Iso,
    /// `d-mmm-yy`, e.g. `1-Jul-10`
    DayMonthAbbrYear,
    /// Any chrono format string.
    Custom(String),
}

impl DateFormat {
    fn parse(&self, s: &str) -> Option<NaiveDate> {
        let s = s.trim();
        let try_fmt = |f: &str| NaiveDate::parse_from_str(s, f).ok();
        match self {
            DateFormat::Iso => try_fmt("%Y-%m-%d"),
            DateFormat::DayMonthAbbrYear => try_fmt("%d-%b-%y"),
            DateFormat::Custom(f) => try_fmt(f),
            DateFormat::Auto => try_fmt("%Y-%m-%d")
                .or_else(|| try_fmt("%d-%b-%y"))
                .or_else(|| try_fmt("%d/%m/%Y")),
        }
    }
}

/// Column-name configuration for [`parse_meter_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date_column: String,
    /// When absent every row gets `default_customer`.
    pub customer_column: Option<String>,
    /// When absent every row gets `default_category`.
    pub category_column: Option<String>,
    /// Explicit reading columns; when absent the 48 columns following the
    /// date column are used.
    pub reading_columns: Option<Vec<String>>,
    pub date_format: DateFormat,
    pub default_customer: u64,
    pub default_category: Category,
}

impl CsvSchema {
    /// Layout of the Ausgrid solar home electricity exports.
    pub fn ausgrid() -> Self {
        CsvSchema {
            date_column: "date".into(),
            customer_column: Some("Customer".into()),
            category_column: Some("Consumption Category".into()),
            reading_columns: None,
            date_format: DateFormat::Auto,
            default_customer: 0,
            default_category: Category::GeneralConsumption,
        }
    }

    /// A `date` column followed by 48 reading columns, ISO dates.
    pub fn simple(customer_id: u64) -> Self {
        CsvSchema {
            date_column: "date".into(),
            customer_column: None,
            category_column: None,
            reading_columns: None,
            date_format: DateFormat::Iso,
            default_customer: customer_id,
            default_category: Category::GeneralConsumption,
        }
    }
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema::ausgrid()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the input.
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<MeterRecord>,
    pub row_errors: Vec<RowError>,
    pub warnings: Vec<String>,
}

struct ColumnMap {
    date: usize,
    customer: Option<usize>,
    category: Option<usize>,
    readings: Vec<usize>,
}

fn find_column(header: &csv::StringRecord, name: &str) -> Option<usize> {
    let want = name.trim().to_ascii_lowercase();
    header.iter().position(|h| h.trim().trim_start_matches('\u{feff}').to_ascii_lowercase() == want)
}

fn map_columns(header: &csv::StringRecord, schema: &CsvSchema) -> Result<ColumnMap> {
    let date = find_column(header, &schema.date_column)
        .ok_or_else(|| Error::Format(format!("missing header: no '{}' column", schema.date_column)))?;
    let lookup = |name: &Option<String>| -> Result<Option<usize>> {
        match name {
            None => Ok(None),
            Some(n) => find_column(header, n)
                .map(Some)
                .ok_or_else(|| Error::Format(format!("missing header column '{n}'"))),
        }
    };
    let customer = lookup(&schema.customer_column)?;
    let category = lookup(&schema.category_column)?;
    let readings = match &schema.reading_columns {
        Some(cols) => {
            if cols.len() != SLOTS_PER_DAY {
                return Err(Error::Format(format!(
                    "schema lists {} reading columns, expected {SLOTS_PER_DAY}",
                    cols.len()
                )));
            }
            cols.iter()
                .map(|c| find_column(header, c).ok_or_else(|| Error::Format(format!("missing header column '{c}'"))))
                .collect::<Result<Vec<_>>>()?
        }
        None => {
            let available = header.len().saturating_sub(date + 1);
            if available < SLOTS_PER_DAY {
                return Err(Error::Format(format!(
                    "header has {available} columns after '{}', expected {SLOTS_PER_DAY}",
                    schema.date_column
                )));
            }
            (date + 1..date + 1 + SLOTS_PER_DAY).collect()
        }
    };
    Ok(ColumnMap { date, customer, category, readings })
}

fn parse_row(rec: &csv::StringRecord, cols: &ColumnMap, schema: &CsvSchema) -> std::result::Result<MeterRecord, String> {
    let field = |i: usize| rec.get(i).ok_or_else(|| format!("row has {} fields, column {} missing", rec.len(), i + 1));
    let date_raw = field(cols.date)?;
    let date = schema
        .date_format
        .parse(date_raw)
        .ok_or_else(|| format!("unparseable date '{date_raw}'"))?;
    let customer_id = match cols.customer {
        Some(i) => {
            let raw = field(i)?;
            raw.trim().parse::<u64>().map_err(|_| format!("bad customer id '{raw}'"))?
        }
        None => schema.default_customer,
    };
    let category = match cols.category {
        Some(i) => {
            let raw = field(i)?;
            Category::parse(raw).ok_or_else(|| format!("unknown category '{raw}'"))?
        }
        None => schema.default_category,
    };
    let present = cols.readings.iter().filter(|&&i| i < rec.len()).count();
    if present != SLOTS_PER_DAY {
        return Err(format!("expected {SLOTS_PER_DAY} readings, found {present}"));
    }
    let mut readings = Vec::with_capacity(SLOTS_PER_DAY);
    for (slot, &i) in cols.readings.iter().enumerate() {
        let raw = rec[i].trim();
        if raw.is_empty() {
            return Err(format!("blank reading in slot {slot}"));
        }
        let v: f64 = raw.parse().map_err(|_| format!("non-numeric reading '{raw}' in slot {slot}"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("invalid reading {v} in slot {slot}"));
        }
        readings.push(v);
    }
    Ok(MeterRecord { customer_id, category, date, readings })
}

/// Parses a header-bearing meter CSV. Lines before the header (title rows)
/// are skipped. Malformed rows are collected rather than aborting the parse
/// unless every data row fails.
pub fn parse_meter_csv<R: Read>(stream: R, schema: &CsvSchema) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(stream);
    let mut rows = reader.records();

    let mut columns = None;
    for row in rows.by_ref() {
        let row = row?;
        if find_column(&row, &schema.date_column).is_some() {
            columns = Some(map_columns(&row, schema)?);
            break;
        }
    }
    let columns = columns.ok_or_else(|| Error::Format(format!("missing header: no '{}' column", schema.date_column)))?;

    let mut out = ParseOutcome::default();
    let mut index: HashMap<(u64, Category, NaiveDate), usize> = HashMap::new();
    let mut data_rows = 0usize;
    for row in rows {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        data_rows += 1;
        match parse_row(&row, &columns, schema) {
            Ok(rec) => {
                let key = (rec.customer_id, rec.category, rec.date);
                if let Some(&pos) = index.get(&key) {
                    out.warnings.push(format!(
                        "line {line}: duplicate row for customer {} {} {}; keeping the later one",
                        rec.customer_id,
                        rec.category.code(),
                        rec.date
                    ));
                    out.records[pos] = rec;
                } else {
                    index.insert(key, out.records.len());
                    out.records.push(rec);
                }
            }
            Err(message) => out.row_errors.push(RowError { line, message }),
        }
    }
    if data_rows == 0 {
        out.warnings.push("no data rows".into());
    } else if out.records.is_empty() {
        return Err(Error::AllRowsFailed {
            failed: out.row_errors.len(),
            first: out.row_errors[0].to_string(),
        });
    }
    for e in &out.row_errors {
        log::warn!("{e}");
    }
    Ok(out)
}

/// Writes records in the Ausgrid column layout with ISO dates.
pub fn write_records_csv<W: Write>(records: &[MeterRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["Customer".to_string(), "Consumption Category".to_string(), "date".to_string()];
    header.extend(slot_labels());
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.customer_id.to_string(), r.category.code().to_string(), r.date.to_string()];
        row.extend(r.readings.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Clock-time labels of the 48 slots, `00:30` … `24:00`.
pub fn slot_labels() -> Vec<String> {
    (1..=SLOTS_PER_DAY)
        .map(|k| format!("{:02}:{:02}", k / 2, (k % 2) * 30))
        .collect()
}

/// Hex SHA-256 of a byte buffer, used for provenance.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFilter {
    pub months: BTreeSet<u32>,
    pub weekdays: BTreeSet<WeekdayId>,
    pub category: Category,
    pub customer_id: u64,
}

/// Weekday as ISO number, Monday = 1 … Sunday = 7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeekdayId(pub u32);

impl WeekdayId {
    pub fn of(day: Weekday) -> Self {
        WeekdayId(day.number_from_monday())
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Ok(n) = s.parse::<u32>() {
            return (1..=7).contains(&n).then_some(WeekdayId(n));
        }
        s.parse::<Weekday>().ok().map(WeekdayId::of)
    }
}

impl CalendarFilter {
    pub fn new(months: impl IntoIterator<Item = u32>, weekdays: impl IntoIterator<Item = Weekday>, category: Category, customer_id: u64) -> Result<Self> {
        let f = CalendarFilter {
            months: months.into_iter().collect(),
            weekdays: weekdays.into_iter().map(WeekdayId::of).collect(),
            category,
            customer_id,
        };
        f.validate()?;
        Ok(f)
    }

    /// Southern-hemisphere winter (June to August), Monday to Thursday,
    /// household consumption.
    pub fn winter_workdays(customer_id: u64) -> Self {
        use Weekday::*;
        CalendarFilter::new([6, 7, 8], [Mon, Tue, Wed, Thu], Category::GeneralConsumption, customer_id)
            .expect("static filter is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.months.is_empty() || self.weekdays.is_empty() {
            return Err(Error::Domain("calendar filter needs at least one month and one weekday".into()));
        }
        if self.months.iter().any(|m| !(1..=12).contains(m)) || self.weekdays.iter().any(|d| !(1..=7).contains(&d.0)) {
            return Err(Error::Domain("calendar filter has out-of-range month or weekday".into()));
        }
        Ok(())
    }

    pub fn matches(&self, r: &MeterRecord) -> bool {
        r.customer_id == self.customer_id
            && r.category == self.category
            && self.months.contains(&r.date.month())
            && self.weekdays.contains(&WeekdayId::of(r.date.weekday()))
    }
}

impl fmt::Display for CalendarFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let months: Vec<String> = self.months.iter().map(u32::to_string).collect();
        let days: Vec<String> = self.weekdays.iter().map(|d| d.0.to_string()).collect();
        write!(
            f,
            "customer={} category={} months=[{}] weekdays=[{}]",
            self.customer_id,
            self.category.code(),
            months.join(","),
            days.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub filter: String,
    pub source_digest: Option<String>,
}

/// `N` observed days by 48 half-hour slots, in kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMatrix {
    dates: Vec<NaiveDate>,
    values: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl SlotMatrix {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooFewObservations { needed: 1, got: 0 });
        }
        if dates.len() != values.len() {
            return Err(Error::Mismatch(format!("{} dates for {} rows", dates.len(), values.len())));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != SLOTS_PER_DAY {
                return Err(Error::Format(format!("row {i} has {} columns, expected {SLOTS_PER_DAY}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Domain(format!("row {i} has a negative or non-finite value")));
            }
        }
        Ok(SlotMatrix { dates, values, provenance })
    }

    /// Builds a matrix from bare rows, dating them consecutively from
    /// 2000-01-01.
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..values.len()).map(|i| start + chrono::Days::new(i as u64)).collect();
        SlotMatrix::new(dates, values, Provenance::default())
    }

    pub fn n_days(&self) -> usize {
        self.values.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn slot_labels(&self) -> Vec<String> {
        slot_labels()
    }

    pub fn slot_column(&self, slot: usize) -> Result<Vec<f64>> {
        if slot >= SLOTS_PER_DAY {
            return Err(Error::SlotIndex { index: slot, len: SLOTS_PER_DAY });
        }
        Ok(self.values.iter().map(|r| r[slot]).collect())
    }

    /// Writes `date` plus the 48 slot columns with shortest round-trip
    /// float formatting.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["date".to_string()];
        header.extend(slot_labels());
        w.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`SlotMatrix::write_csv`].
    pub fn read_csv<R: Read>(stream: R) -> Result<Self> {
        let parsed = parse_meter_csv(stream, &CsvSchema::simple(0))?;
        if let Some(e) = parsed.row_errors.first() {
            return Err(Error::Format(e.to_string()));
        }
        let (dates, values) = parsed.records.into_iter().map(|r| (r.date, r.readings)).unzip();
        SlotMatrix::new(dates, values, Provenance::default())
    }
}

/// Selects the records matching `filter`, in input order.
pub fn filter_calendar(records: &[MeterRecord], filter: &CalendarFilter) -> Result<SlotMatrix> {
    filter.validate()?;
    if records.is_empty() {
        return Err(Error::EmptySelection(format!("{filter} (no input records)")));
    }
    let (dates, values): (Vec<_>, Vec<_>) = records
        .iter()
        .filter(|r| filter.matches(r))
        .map(|r| (r.date, r.readings.clone()))
        .unzip();
    if values.is_empty() {
        return Err(Error::EmptySelection(filter.to_string()));
    }
    SlotMatrix::new(dates, values, Provenance { filter: filter.to_string(), source_digest: None })
}

pub fn slot_column(matrix: &SlotMatrix, slot: usize) -> Result<Vec<f64>> {
    matrix.slot_column(slot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple_csv(rows: &[(&str, Vec<f64>)]) -> String {
        let mut s = String::from("date");
        for l in slot_labels() {
            s.push(',');
            s.push_str(&l);
        }
        s.push('\n');
        for (d, vals) in rows {
            s.push_str(d);
            for v in vals {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    #[test]
    fn zero_row_parses() {
        let csv = simple_csv(&[("2012-06-04", vec![0.0; 48])]);
        let out = parse_meter_csv(csv.as_bytes(), &CsvSchema::simple(1)).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.records[0].readings.iter().all(|&v| v == 0.0));
        assert!(out.row_errors.is_empty());
    }

    #[test]
    fn header_only_warns() {
        let csv = simple_csv(&[]);
        let out = parse_meter_csv(csv.as_bytes(), &CsvSchema::simple(1)).unwrap();
        assert!(out.records.is_empty());
        assert!(out.warnings.iter().any(|w| w.contains("no data rows")));
    }

    #[test]
    fn missing_header_is_format_error() {
        let err = parse_meter_csv("a,b,c\n1,2,3\n".as_bytes(), &CsvSchema::simple(1)).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn row_errors_are_collected_with_lines() {
        let mut short = vec![0.5; 47];
        short.truncate(47);
        let mut csv = simple_csv(&[("2012-06-04", vec![0.1; 48]), ("2012-06-05", short)]);
        // blank reading and text reading
        csv.push_str(&format!("2012-06-06,{}\n", vec!["0.1"; 47].join(",") + ","));
        csv.push_str(&format!("2012-06-07,abc,{}\n", vec!["0.1"; 47].join(",")));
        let out = parse_meter_csv(csv.as_bytes(), &CsvSchema::simple(1)).unwrap();
        assert_eq!(out.records.len(), 1);
        let lines: Vec<u64> = out.row_errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 4, 5]);
        assert!(out.row_errors[1].message.contains("blank"));
        assert!(out.row_errors[2].message.contains("non-numeric"));
    }

    #[test]
    fn all_rows_failing_is_fatal() {
        let csv = simple_csv(&[("2012-06-04", vec![0.1; 10])]);
        assert!(matches!(
            parse_meter_csv(csv.as_bytes(), &CsvSchema::simple(1)),
            Err(Error::AllRowsFailed { failed: 1, .. })
        ));
    }

    #[test]
    fn ausgrid_layout_with_title_line_and_duplicates() {
        let mut s = String::from("Solar home electricity data,,,\n");
        s.push_str("Customer,Generator Capacity,Postcode,Consumption Category,date");
        for l in slot_labels() {
            s.push(',');
            s.push_str(&l);
        }
        s.push_str(",Row Quality\n");
        let row = |cust: u32, cat: &str, date: &str, v: f64| {
            format!("{cust},1.5,2076,{cat},{date},{},\n", vec![v.to_string(); 48].join(","))
        };
        s.push_str(&row(1, "GC", "1-Jul-10", 0.2));
        s.push_str(&row(1, "CL", "1-Jul-10", 0.9));
        s.push_str(&row(1, "GC", "2-Jul-10", 0.3));
        s.push_str(&row(1, "GC", "1-Jul-10", 0.4));
        let out = parse_meter_csv(s.as_bytes(), &CsvSchema::ausgrid()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.records[0].date, NaiveDate::from_ymd_opt(2010, 7, 1).unwrap());
        assert_eq!(out.records[0].readings[0], 0.4);
        assert_eq!(out.records[1].category, Category::ControlledLoad);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn filter_selects_and_errors_on_empty() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let rec = |date: &str, v: f64| MeterRecord {
            customer_id: 1,
            category: Category::GeneralConsumption,
            date: d(date),
            readings: vec![v; 48],
        };
        // 2012-06-04 is a Monday, 2012-06-08 a Friday
        let records = vec![rec("2012-06-04", 1.0), rec("2012-06-08", 2.0), rec("2012-03-05", 3.0)];
        let m = filter_calendar(&records, &CalendarFilter::winter_workdays(1)).unwrap();
        assert_eq!(m.n_days(), 1);
        assert_eq!(m.rows()[0], vec![1.0; 48]);
        let err = filter_calendar(&records, &CalendarFilter::winter_workdays(2)).unwrap_err();
        assert!(matches!(err, Error::EmptySelection(ref s) if s.contains("customer=2")));
    }

    #[test]
    fn slot_column_bounds() {
        let m = SlotMatrix::from_rows(vec![(0..48).map(f64::from).collect()]).unwrap();
        assert_eq!(m.slot_column(0).unwrap(), vec![0.0]);
        assert!(matches!(m.slot_column(48), Err(Error::SlotIndex { index: 48, .. })));
        let c = SlotMatrix::from_rows(vec![vec![2.5; 48]; 7]).unwrap();
        assert_eq!(crate::stats::mean(&c.slot_column(13).unwrap()), 2.5);
    }

    #[test]
    fn slot_labels_cover_the_day() {
        let l = slot_labels();
        assert_eq!(l[0], "00:30");
        assert_eq!(l[11], "06:00");
        assert_eq!(l[47], "24:00");
    }

    proptest! {
        #[test]
        fn slot_matrix_csv_round_trip(rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1e3, 48), 1..6)) {
            let m = SlotMatrix::from_rows(rows).unwrap();
            let mut buf = Vec::new();
            m.write_csv(&mut buf).unwrap();
            let back = SlotMatrix::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.rows(), m.rows());
            prop_assert_eq!(back.dates(), m.dates());
        }

        #[test]
        fn parse_is_idempotent_on_own_output(vals in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 48), 1..5)) {
            let start = NaiveDate::from_ymd_opt(2011, 6, 1).unwrap();
            let records: Vec<MeterRecord> = vals.into_iter().enumerate().map(|(i, readings)| MeterRecord {
                customer_id: 3, category: Category::GeneralConsumption,
                date: start + chrono::Days::new(i as u64), readings,
            }).collect();
            let mut buf = Vec::new();
            write_records_csv(&records, &mut buf).unwrap();
            let once = parse_meter_csv(buf.as_slice(), &CsvSchema::ausgrid()).unwrap().records;
            prop_assert_eq!(&once, &records);
            let mut buf2 = Vec::new();
            write_records_csv(&once, &mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }

        #[test]
        fn disjoint_weekday_filters_partition(days in proptest::collection::vec(0u64..1000, 1..40)) {
            use std::collections::BTreeSet;
            let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
            let uniq: BTreeSet<u64> = days.into_iter().collect();
            let records: Vec<MeterRecord> = uniq.iter().map(|&o| MeterRecord {
                customer_id: 1, category: Category::GeneralConsumption,
                date: start + chrono::Days::new(o), readings: vec![0.1; 48],
            }).collect();
            use Weekday::*;
            let count = |w: Vec<Weekday>| {
                let f = CalendarFilter::new(1..=12, w, Category::GeneralConsumption, 1).unwrap();
                filter_calendar(&records, &f).map(|m| m.n_days()).unwrap_or(0)
            };
            let total = count(vec![Mon, Tue, Wed]) + count(vec![Thu, Fri]) + count(vec![Sat, Sun]);
            prop_assert_eq!(total, records.len());
        }
    }
}
