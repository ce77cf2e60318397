//! Integer-indexed value tables read from disk: two-column CSV `x,value`
//! (an optional header row is skipped) or a JSON object `{"x": value}`.
//! The keys must form a contiguous integer range.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// A contiguous table `values[i] = v(x_min + i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub x_min: i64,
    pub values: Vec<f64>,
}

impl Table {
    pub fn x_max(&self) -> i64 {
        self.x_min + self.values.len() as i64 - 1
    }

    pub fn get(&self, x: i64) -> Option<f64> {
        if x < self.x_min {
            return None;
        }
        self.values.get((x - self.x_min) as usize).copied()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| ((self.x_min + i as i64) as f64, *v))
            .collect()
    }
}

fn from_map(map: BTreeMap<i64, f64>) -> Result<Table> {
    let (&x_min, _) = map
        .iter()
        .next()
        .ok_or_else(|| Error::Config("empty table".into()))?;
    let mut values = Vec::with_capacity(map.len());
    for (i, (x, v)) in map.into_iter().enumerate() {
        if x != x_min + i as i64 {
            return Err(Error::Config(format!("table has a gap before x = {x}")));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("table value at x = {x}")));
        }
        values.push(v);
    }
    Ok(Table { x_min, values })
}

fn insert(map: &mut BTreeMap<i64, f64>, x: i64, v: f64) -> Result<()> {
    if map.insert(x, v).is_some() {
        return Err(Error::Config(format!("duplicate key x = {x}")));
    }
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut map = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("csv: {e}")))?;
        if rec.len() != 2 {
            return Err(Error::Config(format!("csv row {} needs two columns", row + 1)));
        }
        let x = rec[0].parse::<i64>();
        let v = rec[1].parse::<f64>();
        match (x, v) {
            (Ok(x), Ok(v)) => insert(&mut map, x, v)?,
            _ if row == 0 => continue,
            _ => {
                return Err(Error::Config(format!(
                    "csv row {}: cannot parse {:?}",
                    row + 1,
                    rec
                )))
            }
        }
    }
    from_map(map)
}

pub fn parse_json(text: &str) -> Result<Table> {
    let raw: BTreeMap<String, f64> =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("json: {e}")))?;
    let mut map = BTreeMap::new();
    for (k, v) in raw {
        let x = k
            .trim()
            .parse::<i64>()
            .map_err(|_| Error::Config(format!("json key {k:?} is not an integer")))?;
        insert(&mut map, x, v)?;
    }
    from_map(map)
}

/// Read a table, choosing the format by extension (`.json`, else CSV).
pub fn load_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => parse_json(&text),
        _ => parse_csv(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_header() {
        let t = parse_csv("x,value\n0, 0\n1,1.5\n2,2\n").unwrap();
        assert_eq!(t.x_min, 0);
        assert_eq!(t.values, vec![0.0, 1.5, 2.0]);
        assert_eq!(t.x_max(), 2);
        assert_eq!(t.get(1), Some(1.5));
        assert_eq!(t.get(3), None);
    }

    #[test]
    fn csv_unordered_and_negative() {
        let t = parse_csv("1,2\n-1,0.5\n0,1\n").unwrap();
        assert_eq!(t.x_min, -1);
        assert_eq!(t.values, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn gaps_and_duplicates_rejected() {
        assert!(parse_csv("0,1\n2,3\n").is_err());
        assert!(parse_csv("0,1\n0,3\n").is_err());
        assert!(parse_json(r#"{"0": 1, "2": 3}"#).is_err());
        assert!(parse_csv("").is_err());
        assert!(parse_csv("0,1\nfoo,2\n").is_err());
    }

    #[test]
    fn json_table() {
        let t = parse_json(r#"{"-2": 4, "-1": 1, "0": 0, "1": 1}"#).unwrap();
        assert_eq!(t.x_min, -2);
        assert_eq!(t.values, vec![4.0, 1.0, 0.0, 1.0]);
        assert!(parse_json(r#"{"a": 1}"#).is_err());
    }
}
