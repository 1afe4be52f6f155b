//! Cohort tables: survey counts (employed / unemployed) and register totals.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    Istat,
    Almalaurea,
    #[serde(rename = "ANS")]
    Ans,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Istat => "Istat",
            Source::Almalaurea => "Almalaurea",
            Source::Ans => "ANS",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "Istat" | "ISTAT" | "istat" => Ok(Source::Istat),
            "Almalaurea" | "AlmaLaurea" | "almalaurea" => Ok(Source::Almalaurea),
            "ANS" | "ans" => Ok(Source::Ans),
            other => Err(format!("unknown source '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "M",
            Gender::F => "F",
        })
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "M" | "m" => Ok(Gender::M),
            "F" | "f" => Ok(Gender::F),
            other => Err(format!("unknown gender '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    Survey { employed: u64, unemployed: u64 },
    Register { total: u64 },
}

/// One (source, gender, program, year) row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortCell {
    pub source: Source,
    pub gender: Gender,
    pub program: String,
    pub year: i32,
    pub counts: Counts,
}

impl CohortCell {
    pub fn survey(&self) -> Option<(u64, u64)> {
        match self.counts {
            Counts::Survey { employed, unemployed } => Some((employed, unemployed)),
            Counts::Register { .. } => None,
        }
    }

    /// Sample size for survey rows, population total for register rows.
    pub fn n(&self) -> u64 {
        match self.counts {
            Counts::Survey { employed, unemployed } => employed + unemployed,
            Counts::Register { total } => total,
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            program: self.program.clone(),
            gender: self.gender,
        }
    }
}

/// (program, gender) identifier shared across sources and years.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub program: String,
    pub gender: Gender,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.program, self.gender)
    }
}

/// Reference totals of the bundled survey tables.
pub const ISTAT_2011_TOTAL: u64 = 2717;
pub const ALMALAUREA_2012_TOTAL: u64 = 53015;

pub const BUNDLED_FILES: [(&str, &str); 3] = [
    ("ans.csv", include_str!("../../../data/ans.csv")),
    ("istat.csv", include_str!("../../../data/istat.csv")),
    ("almalaurea.csv", include_str!("../../../data/almalaurea.csv")),
];

pub const BUNDLED_CHECKSUMS: &str = include_str!("../../../data/SHA256SUMS");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortTables {
    pub cells: Vec<CohortCell>,
}

impl CohortTables {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Survey rows of one source and year, sorted by (program, gender).
    pub fn survey(&self, source: Source, year: i32) -> BTreeMap<CellKey, (u64, u64)> {
        self.cells
            .iter()
            .filter(|c| c.source == source && c.year == year)
            .filter_map(|c| c.survey().map(|s| (c.key(), s)))
            .collect()
    }

    pub fn register(&self, year: i32) -> BTreeMap<CellKey, u64> {
        self.cells
            .iter()
            .filter(|c| c.source == Source::Ans && c.year == year)
            .map(|c| (c.key(), c.n()))
            .collect()
    }

    pub fn years(&self, source: Source) -> Vec<i32> {
        let mut y: Vec<i32> = self
            .cells
            .iter()
            .filter(|c| c.source == source)
            .map(|c| c.year)
            .collect();
        y.sort_unstable();
        y.dedup();
        y
    }

    pub fn sample_total(&self, source: Source, year: i32) -> u64 {
        self.survey(source, year).values().map(|(e, u)| e + u).sum()
    }

    /// Mismatches against the published sample totals, for tables that carry
    /// the 2011 Istat or 2012 Almalaurea rows.
    pub fn reference_total_mismatches(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (source, year, expected) in [
            (Source::Istat, 2011, ISTAT_2011_TOTAL),
            (Source::Almalaurea, 2012, ALMALAUREA_2012_TOTAL),
        ] {
            if self.years(source).contains(&year) {
                let got = self.sample_total(source, year);
                if got != expected {
                    out.push(format!("{source} {year} sample total {got}, expected {expected}"));
                }
            }
        }
        out
    }

    fn merge(&mut self, other: CohortTables) -> Result<()> {
        self.cells.extend(other.cells);
        check_duplicates(&self.cells)
    }
}

fn check_duplicates(cells: &[CohortCell]) -> Result<()> {
    let mut seen = BTreeMap::new();
    let mut dups = Vec::new();
    for c in cells {
        let k = (c.source, c.gender, c.program.clone(), c.year);
        if seen.insert(k, ()).is_some() {
            dups.push(format!("{},{},{},{}", c.source, c.gender, c.program, c.year));
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!("duplicate keys: {}", dups.join("; "))))
    }
}

/// Parses one CSV table. `label` names the input in error messages.
pub fn parse_cohort_csv(text: &str, label: &str) -> Result<CohortTables> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("{label}: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let survey = ["source", "gender", "program", "year", "employed", "unemployed"];
    let register = ["source", "gender", "program", "year", "total"];
    let is_survey = if cols == survey {
        true
    } else if cols == register {
        false
    } else {
        return Err(Error::Data(format!(
            "{label}: header must be '{}' or '{}', got '{}'",
            survey.join(","),
            register.join(","),
            cols.join(",")
        )));
    };

    let mut cells = Vec::new();
    let mut bad = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("line {line}: {e}"));
                continue;
            }
        };
        match parse_row(&rec, is_survey) {
            Ok(c) => cells.push(c),
            Err(e) => bad.push(format!("line {line}: {e}")),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Data(format!("{label}: {}", bad.join("; "))));
    }
    if cells.is_empty() {
        return Err(Error::Data(format!("{label}: no data rows")));
    }
    check_duplicates(&cells).map_err(|e| Error::Data(format!("{label}: {e}")))?;
    Ok(CohortTables { cells })
}

fn parse_count(field: &str, name: &str) -> std::result::Result<u64, String> {
    field
        .parse::<i64>()
        .map_err(|_| format!("{name} '{field}' is not an integer"))
        .and_then(|v| u64::try_from(v).map_err(|_| format!("{name} {v} is negative")))
}

fn parse_row(rec: &csv::StringRecord, is_survey: bool) -> std::result::Result<CohortCell, String> {
    let source: Source = rec[0].parse()?;
    let gender: Gender = rec[1].parse()?;
    let program = rec[2].to_string();
    if program.is_empty() {
        return Err("empty program".into());
    }
    let year: i32 = rec[3]
        .parse()
        .map_err(|_| format!("year '{}' is not an integer", &rec[3]))?;
    let counts = if is_survey {
        if source == Source::Ans {
            return Err("ANS rows need the 'total' column layout".into());
        }
        Counts::Survey {
            employed: parse_count(&rec[4], "employed")?,
            unemployed: parse_count(&rec[5], "unemployed")?,
        }
    } else {
        if source != Source::Ans {
            return Err(format!("{source} rows need employed/unemployed columns"));
        }
        Counts::Register {
            total: parse_count(&rec[4], "total")?,
        }
    };
    Ok(CohortCell {
        source,
        gender,
        program,
        year,
        counts,
    })
}

/// Loads a single CSV file, or every `*.csv` in a directory (sorted by name).
pub fn load_cohort_tables(path: &Path) -> Result<CohortTables> {
    let files = if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Data(format!("{}: no CSV files", path.display())));
        }
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut tables = CohortTables::default();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        tables.merge(parse_cohort_csv(&text, &f.display().to_string())?)?;
    }
    for m in tables.reference_total_mismatches() {
        warn!("{m}");
    }
    Ok(tables)
}

/// The tables shipped with the crate.
pub fn bundled() -> Result<CohortTables> {
    let mut tables = CohortTables::default();
    for (name, text) in BUNDLED_FILES {
        tables.merge(parse_cohort_csv(text, name)?)?;
    }
    Ok(tables)
}

/// Writes the bundled CSVs and checksum file into `dir`.
pub fn write_bundled(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in BUNDLED_FILES.iter().chain([("SHA256SUMS", BUNDLED_CHECKSUMS)].iter()) {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
