//! Event-log tables, concept sets and the concept ontology.
//!
//! All stores are immutable once built. Tables keep their input row order so
//! that a load followed by an export reproduces the files; per-person indexes
//! give chronologically sorted views.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ConceptId = String;

pub const COMORBIDITIES: [&str; 6] = ["DM", "HTN", "CAD_MI", "CHF", "PV", "LD"];
pub const MEDICATION_CLASSES: [&str; 3] = ["loop_thiazide", "RAS", "NSAID"];

const DATE_FMT: &str = "%Y-%m-%d";
const DATETIME_FMT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
    #[serde(rename = "unknown")]
    Unknown,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::M => "M",
            Sex::F => "F",
            Sex::Unknown => "unknown",
        })
    }
}

impl FromStr for Sex {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "M" | "m" => Ok(Sex::M),
            "F" | "f" => Ok(Sex::F),
            "unknown" | "Unknown" | "" => Ok(Sex::Unknown),
            other => Err(format!("unknown sex token {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Condition,
    Drug,
    Procedure,
    Observation,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Condition => "condition",
            Domain::Drug => "drug",
            Domain::Procedure => "procedure",
            Domain::Observation => "observation",
        })
    }
}

impl FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "condition" => Ok(Domain::Condition),
            "drug" => Ok(Domain::Drug),
            "procedure" => Ok(Domain::Procedure),
            "observation" => Ok(Domain::Observation),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub person_id: String,
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub race: String,
    pub ethnicity: String,
    pub death_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub visit_id: String,
    pub person_id: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub person_id: String,
    pub date: NaiveDate,
    pub domain: Domain,
    pub concept_id: ConceptId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub person_id: String,
    pub datetime: NaiveDateTime,
    pub concept_id: ConceptId,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct PersonIndex {
    visits: Vec<usize>,
    events: Vec<usize>,
    measurements: Vec<usize>,
}

/// Row counts per table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCounts {
    pub persons: usize,
    pub visits: usize,
    pub events: usize,
    pub measurements: usize,
}

/// Validated longitudinal record store.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    persons: Vec<Person>,
    visits: Vec<Visit>,
    events: Vec<Event>,
    measurements: Vec<Measurement>,
    person_pos: BTreeMap<String, usize>,
    index: BTreeMap<String, PersonIndex>,
}

impl EventLog {
    /// Validates the tables and builds the per-person indexes. Row numbers
    /// in errors are 1-based data rows.
    pub fn new(
        persons: Vec<Person>,
        visits: Vec<Visit>,
        events: Vec<Event>,
        measurements: Vec<Measurement>,
    ) -> Result<Self> {
        let mut person_pos = BTreeMap::new();
        let mut index: BTreeMap<String, PersonIndex> = BTreeMap::new();
        for (i, p) in persons.iter().enumerate() {
            if person_pos.insert(p.person_id.clone(), i).is_some() {
                return Err(Error::schema(
                    "persons",
                    i + 1,
                    format!("duplicate person_id {}", p.person_id),
                ));
            }
            if let Some(d) = p.death_date {
                if d < p.birth_date {
                    return Err(Error::schema("persons", i + 1, "death_date before birth_date"));
                }
            }
            index.insert(p.person_id.clone(), PersonIndex::default());
        }
        for (i, v) in visits.iter().enumerate() {
            let Some(ix) = index.get_mut(&v.person_id) else {
                return Err(Error::schema(
                    "visits",
                    i + 1,
                    format!("unknown person_id {}", v.person_id),
                ));
            };
            if v.end_date < v.start_date {
                return Err(Error::schema("visits", i + 1, "end_date before start_date"));
            }
            ix.visits.push(i);
        }
        for (i, e) in events.iter().enumerate() {
            let Some(ix) = index.get_mut(&e.person_id) else {
                return Err(Error::schema(
                    "events",
                    i + 1,
                    format!("unknown person_id {}", e.person_id),
                ));
            };
            ix.events.push(i);
        }
        for (i, m) in measurements.iter().enumerate() {
            let Some(ix) = index.get_mut(&m.person_id) else {
                return Err(Error::schema(
                    "measurements",
                    i + 1,
                    format!("unknown person_id {}", m.person_id),
                ));
            };
            if !m.value.is_finite() {
                return Err(Error::schema("measurements", i + 1, "non-finite value"));
            }
            ix.measurements.push(i);
        }
        for ix in index.values_mut() {
            ix.visits
                .sort_by_key(|&i| (visits[i].start_date, visits[i].end_date, i));
            ix.events.sort_by_key(|&i| (events[i].date, i));
            ix.measurements.sort_by_key(|&i| (measurements[i].datetime, i));
        }
        Ok(Self {
            persons,
            visits,
            events,
            measurements,
            person_pos,
            index,
        })
    }

    pub fn counts(&self) -> TableCounts {
        TableCounts {
            persons: self.persons.len(),
            visits: self.visits.len(),
            events: self.events.len(),
            measurements: self.measurements.len(),
        }
    }

    /// Persons in input order.
    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn visits(&self) -> &[Visit] {
        &self.visits
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    /// Person ids in lexicographic order.
    pub fn person_ids(&self) -> impl Iterator<Item = &str> {
        self.person_pos.keys().map(String::as_str)
    }

    pub fn person(&self, person_id: &str) -> Option<&Person> {
        self.person_pos.get(person_id).map(|&i| &self.persons[i])
    }

    /// Visits of one person, by start date.
    pub fn visits_of<'a>(&'a self, person_id: &str) -> impl Iterator<Item = &'a Visit> + 'a {
        self.index
            .get(person_id)
            .into_iter()
            .flat_map(move |ix| ix.visits.iter().map(move |&i| &self.visits[i]))
    }

    /// Events of one person, by date.
    pub fn events_of<'a>(&'a self, person_id: &str) -> impl Iterator<Item = &'a Event> + 'a {
        self.index
            .get(person_id)
            .into_iter()
            .flat_map(move |ix| ix.events.iter().map(move |&i| &self.events[i]))
    }

    /// Measurements of one person, by datetime.
    pub fn measurements_of<'a>(
        &'a self,
        person_id: &str,
    ) -> impl Iterator<Item = &'a Measurement> + 'a {
        self.index
            .get(person_id)
            .into_iter()
            .flat_map(move |ix| ix.measurements.iter().map(move |&i| &self.measurements[i]))
    }

    /// Latest calendar day carrying any record of the person.
    pub fn last_record_date(&self, person_id: &str) -> Option<NaiveDate> {
        let v = self.visits_of(person_id).map(|v| v.end_date).max();
        let e = self.events_of(person_id).map(|e| e.date).max();
        let m = self.measurements_of(person_id).map(|m| m.datetime.date()).max();
        [v, e, m].into_iter().flatten().max()
    }
}

/// File locations of the four event-log tables.
#[derive(Debug, Clone)]
pub struct EventLogPaths {
    pub persons: PathBuf,
    pub visits: PathBuf,
    pub events: PathBuf,
    pub measurements: PathBuf,
}

impl EventLogPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            persons: d.join("persons.csv"),
            visits: d.join("visits.csv"),
            events: d.join("events.csv"),
            measurements: d.join("measurements.csv"),
        }
    }
}

pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, chrono::ParseError> {
    NaiveDate::parse_from_str(s.trim(), DATE_FMT)
}

/// Accepts `YYYY-MM-DD`, optionally followed by `T` or a space and
/// `HH:MM[:SS]`. A bare date means midnight.
pub fn parse_datetime(s: &str) -> std::result::Result<NaiveDateTime, String> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    parse_date(s)
        .map(|d| d.and_time(NaiveTime::MIN))
        .map_err(|e| e.to_string())
}

pub fn format_date(d: NaiveDate) -> String {
    d.format(DATE_FMT).to_string()
}

pub fn format_datetime(d: NaiveDateTime) -> String {
    d.format(DATETIME_FMT).to_string()
}

struct TableReader {
    table: &'static str,
    reader: csv::Reader<std::fs::File>,
    columns: Vec<usize>,
}

impl TableReader {
    fn open(path: &Path, table: &'static str, expected: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(path, table, e))?;
        let headers = reader
            .headers()
            .map_err(|e| csv_err(path, table, e))?
            .clone();
        let mut columns = Vec::with_capacity(expected.len());
        for name in expected {
            let pos = headers.iter().position(|h| h == *name).ok_or_else(|| {
                Error::schema(table, 0, format!("missing column {name:?}"))
            })?;
            columns.push(pos);
        }
        Ok(Self {
            table,
            reader,
            columns,
        })
    }

    fn rows(&mut self) -> Result<Vec<(usize, Vec<String>)>> {
        let mut out = Vec::new();
        for (i, rec) in self.reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::parse(self.table, row, "record", e))?;
            let fields = self
                .columns
                .iter()
                .map(|&c| rec.get(c).unwrap_or("").to_string())
                .collect();
            out.push((row, fields));
        }
        Ok(out)
    }
}

fn csv_err(path: &Path, table: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(table, 0, "header", format!("{other:?}")),
    }
}

fn req_date(table: &str, row: usize, field: &str, s: &str) -> Result<NaiveDate> {
    parse_date(s).map_err(|e| Error::parse(table, row, field, format!("{s:?}: {e}")))
}

/// Reads and validates the four event-log tables.
pub fn load_event_log(paths: &EventLogPaths) -> Result<EventLog> {
    let mut persons = Vec::new();
    let mut r = TableReader::open(
        &paths.persons,
        "persons",
        &["person_id", "birth_date", "sex", "race", "ethnicity", "death_date"],
    )?;
    for (row, f) in r.rows()? {
        let sex = f[2]
            .parse::<Sex>()
            .map_err(|e| Error::parse("persons", row, "sex", e))?;
        let death_date = if f[5].is_empty() {
            None
        } else {
            Some(req_date("persons", row, "death_date", &f[5])?)
        };
        persons.push(Person {
            person_id: f[0].clone(),
            birth_date: req_date("persons", row, "birth_date", &f[1])?,
            sex,
            race: non_empty_or_unknown(&f[3]),
            ethnicity: non_empty_or_unknown(&f[4]),
            death_date,
        });
    }

    let mut visits = Vec::new();
    let mut r = TableReader::open(
        &paths.visits,
        "visits",
        &["visit_id", "person_id", "start_date", "end_date"],
    )?;
    for (row, f) in r.rows()? {
        visits.push(Visit {
            visit_id: f[0].clone(),
            person_id: f[1].clone(),
            start_date: req_date("visits", row, "start_date", &f[2])?,
            end_date: req_date("visits", row, "end_date", &f[3])?,
        });
    }

    let mut events = Vec::new();
    let mut r = TableReader::open(
        &paths.events,
        "events",
        &["person_id", "date", "domain", "concept_id"],
    )?;
    for (row, f) in r.rows()? {
        events.push(Event {
            person_id: f[0].clone(),
            date: req_date("events", row, "date", &f[1])?,
            domain: f[2]
                .parse()
                .map_err(|e| Error::parse("events", row, "domain", e))?,
            concept_id: f[3].clone(),
        });
    }

    let mut measurements = Vec::new();
    let mut r = TableReader::open(
        &paths.measurements,
        "measurements",
        &["person_id", "datetime", "concept_id", "value", "unit"],
    )?;
    for (row, f) in r.rows()? {
        let datetime = parse_datetime(&f[1])
            .map_err(|e| Error::parse("measurements", row, "datetime", format!("{:?}: {e}", f[1])))?;
        let value: f64 = f[3]
            .parse()
            .map_err(|e| Error::parse("measurements", row, "value", format!("{:?}: {e}", f[3])))?;
        measurements.push(Measurement {
            person_id: f[0].clone(),
            datetime,
            concept_id: f[2].clone(),
            value,
            unit: f[4].clone(),
        });
    }

    EventLog::new(persons, visits, events, measurements)
}

fn non_empty_or_unknown(s: &str) -> String {
    if s.is_empty() {
        "unknown".to_string()
    } else {
        s.to_string()
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the event log in the ingest CSV schemas, in stored row order.
pub fn write_event_log(log: &EventLog, paths: &EventLogPaths) -> Result<()> {
    let p = &paths.persons;
    let mut w = writer(p)?;
    w.write_record(["person_id", "birth_date", "sex", "race", "ethnicity", "death_date"])
        .map_err(write_err(p))?;
    for r in &log.persons {
        w.write_record([
            r.person_id.as_str(),
            &format_date(r.birth_date),
            &r.sex.to_string(),
            &r.race,
            &r.ethnicity,
            &r.death_date.map(format_date).unwrap_or_default(),
        ])
        .map_err(write_err(p))?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;

    let p = &paths.visits;
    let mut w = writer(p)?;
    w.write_record(["visit_id", "person_id", "start_date", "end_date"])
        .map_err(write_err(p))?;
    for r in &log.visits {
        w.write_record([
            r.visit_id.as_str(),
            &r.person_id,
            &format_date(r.start_date),
            &format_date(r.end_date),
        ])
        .map_err(write_err(p))?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;

    let p = &paths.events;
    let mut w = writer(p)?;
    w.write_record(["person_id", "date", "domain", "concept_id"])
        .map_err(write_err(p))?;
    for r in &log.events {
        w.write_record([
            r.person_id.as_str(),
            &format_date(r.date),
            &r.domain.to_string(),
            &r.concept_id,
        ])
        .map_err(write_err(p))?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;

    let p = &paths.measurements;
    let mut w = writer(p)?;
    w.write_record(["person_id", "datetime", "concept_id", "value", "unit"])
        .map_err(write_err(p))?;
    for r in &log.measurements {
        w.write_record([
            r.person_id.as_str(),
            &format_datetime(r.datetime),
            &r.concept_id,
            &r.value.to_string(),
            &r.unit,
        ])
        .map_err(write_err(p))?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;
    Ok(())
}

/// Biologically reasonable measurement range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidRange {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub unit: String,
}

impl ValidRange {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptSets {
    pub aki: BTreeSet<ConceptId>,
    pub ckd: BTreeSet<ConceptId>,
    pub sepsis: BTreeSet<ConceptId>,
    /// Keyed by the names in [`COMORBIDITIES`].
    pub comorbidities: BTreeMap<String, BTreeSet<ConceptId>>,
    /// Keyed by the names in [`MEDICATION_CLASSES`].
    pub medications: BTreeMap<String, BTreeSet<ConceptId>>,
    /// Severity-panel map: measurement concept to panel variable name.
    pub panel: BTreeMap<ConceptId, String>,
    pub ranges: BTreeMap<String, ValidRange>,
    /// Condition concept to disease group (organ system) membership.
    pub disease_groups: BTreeMap<String, BTreeSet<ConceptId>>,
}

impl ConceptSets {
    /// Measurement concepts mapped to a panel variable.
    pub fn panel_concepts(&self, variable: &str) -> BTreeSet<ConceptId> {
        self.panel
            .iter()
            .filter(|(_, v)| v.as_str() == variable)
            .map(|(c, _)| c.clone())
            .collect()
    }

    pub fn comorbidity(&self, name: &str) -> Option<&BTreeSet<ConceptId>> {
        self.comorbidities.get(name)
    }

    pub fn medication(&self, name: &str) -> Option<&BTreeSet<ConceptId>> {
        self.medications.get(name)
    }
}

/// On-disk layout of the concept configuration (TOML or JSON).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConceptConfig {
    #[serde(default)]
    pub sets: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub comorbidities: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub medications: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub panel: BTreeMap<String, String>,
    #[serde(default)]
    pub ranges: BTreeMap<String, ValidRange>,
    #[serde(default)]
    pub disease_groups: BTreeMap<String, Vec<String>>,
    /// Inline ontology edges `[child, parent]`.
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    /// Optional `child_concept,parent_concept` CSV, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ontology: Option<String>,
}

impl ConceptConfig {
    pub fn into_stores(self, base_dir: Option<&Path>) -> Result<(ConceptSets, Ontology)> {
        let mut names = BTreeSet::new();
        let mut claim = |name: &str| -> Result<()> {
            if names.insert(name.to_string()) {
                Ok(())
            } else {
                Err(Error::Config(format!("concept set name {name:?} used twice")))
            }
        };
        for k in self.sets.keys() {
            claim(k)?;
        }
        for k in self.comorbidities.keys() {
            if !COMORBIDITIES.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown comorbidity set {k:?}")));
            }
            claim(k)?;
        }
        for k in self.medications.keys() {
            if !MEDICATION_CLASSES.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown medication class {k:?}")));
            }
            claim(k)?;
        }
        for k in self.disease_groups.keys() {
            claim(&format!("group:{k}"))?;
        }
        let set = |name: &str, required: bool| -> Result<BTreeSet<ConceptId>> {
            match self.sets.get(name) {
                Some(v) => Ok(v.iter().cloned().collect()),
                None if required => Err(Error::Config(format!(
                    "required concept set {name:?} is missing"
                ))),
                None => Ok(BTreeSet::new()),
            }
        };
        let aki = set("aki", true)?;
        let ckd = set("ckd", true)?;
        let sepsis = set("sepsis", false)?;
        for (var, r) in &self.ranges {
            if !(r.lo < r.hi) {
                return Err(Error::Config(format!(
                    "range for {var}: lo {} must be < hi {}",
                    r.lo, r.hi
                )));
            }
        }
        let to_sets = |m: &BTreeMap<String, Vec<String>>| {
            m.iter()
                .map(|(k, v)| (k.clone(), v.iter().cloned().collect::<BTreeSet<_>>()))
                .collect::<BTreeMap<_, _>>()
        };
        let sets = ConceptSets {
            aki,
            ckd,
            sepsis,
            comorbidities: to_sets(&self.comorbidities),
            medications: to_sets(&self.medications),
            panel: self.panel.clone(),
            ranges: self.ranges.clone(),
            disease_groups: to_sets(&self.disease_groups),
        };
        let mut edges = self.edges.clone();
        if let Some(rel) = &self.ontology {
            let path = match base_dir {
                Some(b) => b.join(rel),
                None => PathBuf::from(rel),
            };
            edges.extend(read_ontology_edges(&path)?);
        }
        Ok((sets, Ontology::from_edges(edges)?))
    }
}

/// Loads concept sets and the ontology from a `.toml` or `.json` file.
pub fn load_concept_sets(path: &Path) -> Result<(ConceptSets, Ontology)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: ConceptConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    cfg.into_stores(path.parent())
}

pub fn read_ontology_edges(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = TableReader::open(path, "ontology", &["child_concept", "parent_concept"])?;
    Ok(r.rows()?
        .into_iter()
        .map(|(_, f)| (f[0].clone(), f[1].clone()))
        .collect())
}

pub fn write_ontology_edges(ontology: &Ontology, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["child_concept", "parent_concept"])
        .map_err(write_err(path))?;
    for (child, parents) in &ontology.parents {
        for p in parents {
            w.write_record([child, p]).map_err(write_err(path))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Directed acyclic child → parent concept graph with precomputed ancestor
/// closures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ontology {
    parents: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    closure: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    empty: BTreeSet<ConceptId>,
}

impl Ontology {
    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut parents: BTreeMap<ConceptId, BTreeSet<ConceptId>> = BTreeMap::new();
        for (child, parent) in edges {
            if child == parent {
                return Err(Error::Cycle(vec![child.clone(), child]));
            }
            parents.entry(parent.clone()).or_default();
            parents.entry(child).or_default().insert(parent);
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
        let mut closure: BTreeMap<ConceptId, BTreeSet<ConceptId>> = BTreeMap::new();
        // iterative post-order DFS; the explicit path doubles as cycle witness
        for root in parents.keys() {
            if marks.contains_key(root.as_str()) {
                continue;
            }
            let mut stack: Vec<(&str, Vec<&str>)> = Vec::new();
            marks.insert(root, Mark::Open);
            stack.push((root, parents[root].iter().map(String::as_str).collect()));
            loop {
                let step = match stack.last_mut() {
                    None => break,
                    Some((_, pending)) => pending.pop(),
                };
                if let Some(next) = step {
                    match marks.get(next) {
                        Some(Mark::Done) => {}
                        Some(Mark::Open) => {
                            let start = stack.iter().position(|(n, _)| *n == next).unwrap_or(0);
                            let mut cyc: Vec<String> =
                                stack[start..].iter().map(|(n, _)| n.to_string()).collect();
                            cyc.push(next.to_string());
                            return Err(Error::Cycle(cyc));
                        }
                        None => {
                            marks.insert(next, Mark::Open);
                            let ps = parents[next].iter().map(String::as_str).collect();
                            stack.push((next, ps));
                        }
                    }
                } else {
                    let (node, _) = stack.pop().expect("non-empty stack");
                    let mut anc = BTreeSet::new();
                    for p in &parents[node] {
                        anc.insert(p.clone());
                        anc.extend(closure[p.as_str()].iter().cloned());
                    }
                    closure.insert(node.to_string(), anc);
                    marks.insert(node, Mark::Done);
                }
            }
        }
        Ok(Self {
            parents,
            closure,
            empty: BTreeSet::new(),
        })
    }

    /// All ancestors of `concept`, excluding itself. Unknown concepts have none.
    pub fn ancestors(&self, concept: &str) -> &BTreeSet<ConceptId> {
        self.closure.get(concept).unwrap_or(&self.empty)
    }

    pub fn parents(&self, concept: &str) -> &BTreeSet<ConceptId> {
        self.parents.get(concept).unwrap_or(&self.empty)
    }

    /// The concept together with its ancestors.
    pub fn expand<'a>(&'a self, concept: &'a str) -> impl Iterator<Item = &'a str> {
        std::iter::once(concept).chain(self.ancestors(concept).iter().map(String::as_str))
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn edges(xs: &[(&str, &str)]) -> Ontology {
        Ontology::from_edges(xs.iter().map(|(a, b)| (a.to_string(), b.to_string()))).unwrap()
    }

    #[test]
    fn ancestors_of_chain_root_and_diamond() {
        let o = edges(&[("a", "b"), ("b", "c")]);
        assert_eq!(o.ancestors("a"), &set(&["b", "c"]));
        assert!(o.ancestors("c").is_empty());
        assert!(o.ancestors("zzz").is_empty());

        let d = edges(&[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]);
        assert_eq!(d.ancestors("a"), &set(&["b", "c", "d"]));
    }

    #[test]
    fn cycle_is_reported_with_witness() {
        let err = Ontology::from_edges(vec![
            ("C1".to_string(), "C2".to_string()),
            ("C2".to_string(), "C1".to_string()),
        ])
        .unwrap_err();
        match err {
            Error::Cycle(c) => {
                assert!(c.len() >= 3);
                assert_eq!(c.first(), c.last());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn concept_config_requires_aki_and_ckd() {
        let ok: ConceptConfig =
            toml::from_str("edges = [[\"C1\", \"C9\"]]\n[sets]\naki = [\"C1\"]\nckd = [\"C2\"]\n")
                .unwrap();
        let (sets, onto) = ok.into_stores(None).unwrap();
        assert!(sets.aki.contains("C1"));
        assert_eq!(onto.ancestors("C1"), &set(&["C9"]));

        let missing: ConceptConfig = toml::from_str("[sets]\naki = [\"C1\"]\n").unwrap();
        assert!(matches!(missing.into_stores(None), Err(Error::Config(_))));
    }

    #[test]
    fn concept_config_rejects_bad_ranges() {
        let bad: ConceptConfig = toml::from_str(
            "[sets]\naki = [\"C1\"]\nckd = [\"C2\"]\n[ranges]\nHR = { lo = 300.0, hi = 20.0 }\n",
        )
        .unwrap();
        assert!(matches!(bad.into_stores(None), Err(Error::Config(_))));
    }

    #[test]
    fn datetime_parsing_accepts_dates_and_hours() {
        assert_eq!(
            parse_datetime("2020-01-02T05:00:00").unwrap(),
            parse_datetime("2020-01-02 05:00").unwrap()
        );
        assert_eq!(
            parse_datetime("2020-01-02").unwrap().time(),
            NaiveTime::MIN
        );
        assert!(parse_datetime("2020-13-40").is_err());
    }

    #[test]
    fn unknown_person_reference_is_a_schema_error() {
        let p = Person {
            person_id: "p1".into(),
            birth_date: parse_date("1970-01-01").unwrap(),
            sex: Sex::F,
            race: "unknown".into(),
            ethnicity: "unknown".into(),
            death_date: None,
        };
        let m = Measurement {
            person_id: "p2".into(),
            datetime: parse_datetime("2020-01-01").unwrap(),
            concept_id: "CR".into(),
            value: 1.0,
            unit: "mg/dL".into(),
        };
        let err = EventLog::new(vec![p], vec![], vec![], vec![m]).unwrap_err();
        assert!(matches!(err, Error::Schema { ref table, row: 1, .. } if table == "measurements"));
    }
}
