//! Heart-failure clinical records: loading, validation, normalization,
//! stratified splitting and the cumulative death-event series.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, LoadError, Result};
use crate::numerics::Rng;

/// The thirteen columns of the cohort file, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Age,
    Anaemia,
    CreatininePhosphokinase,
    Diabetes,
    EjectionFraction,
    HighBloodPressure,
    Platelets,
    SerumCreatinine,
    SerumSodium,
    Sex,
    Smoking,
    Time,
    DeathEvent,
}

impl Feature {
    pub const ALL: [Feature; 13] = [
        Feature::Age,
        Feature::Anaemia,
        Feature::CreatininePhosphokinase,
        Feature::Diabetes,
        Feature::EjectionFraction,
        Feature::HighBloodPressure,
        Feature::Platelets,
        Feature::SerumCreatinine,
        Feature::SerumSodium,
        Feature::Sex,
        Feature::Smoking,
        Feature::Time,
        Feature::DeathEvent,
    ];

    /// Column name as used in the public file.
    pub fn name(self) -> &'static str {
        match self {
            Feature::Age => "age",
            Feature::Anaemia => "anaemia",
            Feature::CreatininePhosphokinase => "creatinine_phosphokinase",
            Feature::Diabetes => "diabetes",
            Feature::EjectionFraction => "ejection_fraction",
            Feature::HighBloodPressure => "high_blood_pressure",
            Feature::Platelets => "platelets",
            Feature::SerumCreatinine => "serum_creatinine",
            Feature::SerumSodium => "serum_sodium",
            Feature::Sex => "sex",
            Feature::Smoking => "smoking",
            Feature::Time => "time",
            Feature::DeathEvent => "DEATH_EVENT",
        }
    }

    /// Case-insensitive lookup; spaces, hyphens and underscores are
    /// interchangeable.
    pub fn from_name(raw: &str) -> Option<Feature> {
        let key = normalize_header(raw);
        Feature::ALL
            .into_iter()
            .find(|f| normalize_header(f.name()) == key)
    }

    pub fn is_boolean(self) -> bool {
        matches!(
            self,
            Feature::Anaemia
                | Feature::Diabetes
                | Feature::HighBloodPressure
                | Feature::Sex
                | Feature::Smoking
                | Feature::DeathEvent
        )
    }

    /// Documented interval for continuous features.
    pub fn interval(self) -> Option<(f64, f64)> {
        match self {
            Feature::Age => Some((40.0, 95.0)),
            Feature::CreatininePhosphokinase => Some((23.0, 7861.0)),
            Feature::EjectionFraction => Some((14.0, 80.0)),
            Feature::Platelets => Some((25.01, 850.00)),
            Feature::SerumCreatinine => Some((0.50, 9.40)),
            Feature::SerumSodium => Some((114.0, 148.0)),
            Feature::Time => Some((4.0, 285.0)),
            _ => None,
        }
    }

    pub fn value(self, r: &PatientRecord) -> f64 {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        match self {
            Feature::Age => r.age,
            Feature::Anaemia => b(r.anaemia),
            Feature::CreatininePhosphokinase => r.creatinine_phosphokinase,
            Feature::Diabetes => b(r.diabetes),
            Feature::EjectionFraction => r.ejection_fraction,
            Feature::HighBloodPressure => b(r.high_blood_pressure),
            Feature::Platelets => r.platelets,
            Feature::SerumCreatinine => r.serum_creatinine,
            Feature::SerumSodium => r.serum_sodium,
            Feature::Sex => b(r.sex == Sex::Man),
            Feature::Smoking => b(r.smoking),
            Feature::Time => f64::from(r.time),
            Feature::DeathEvent => b(r.death_event),
        }
    }

    /// Model inputs: every column except the outcome, optionally without
    /// follow-up time.
    pub fn model_inputs(include_time: bool) -> Vec<Feature> {
        Feature::ALL
            .into_iter()
            .filter(|&f| f != Feature::DeathEvent && (include_time || f != Feature::Time))
            .collect()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize_header(raw: &str) -> String {
    raw.trim()
        .trim_start_matches('\u{feff}')
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sex {
    Woman,
    Man,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub age: f64,
    pub anaemia: bool,
    /// mcg/L
    pub creatinine_phosphokinase: f64,
    pub diabetes: bool,
    /// percent
    pub ejection_fraction: f64,
    pub high_blood_pressure: bool,
    /// Stored exactly as it appears in the source file.
    pub platelets: f64,
    /// mg/dL
    pub serum_creatinine: f64,
    /// mEq/L
    pub serum_sodium: f64,
    pub sex: Sex,
    pub smoking: bool,
    /// Follow-up period in days.
    pub time: u32,
    pub death_event: bool,
}

impl PatientRecord {
    fn from_values(values: &[f64; 13]) -> std::result::Result<Self, String> {
        let flag = |f: Feature| -> std::result::Result<bool, String> {
            match values[f as usize] {
                0.0 => Ok(false),
                1.0 => Ok(true),
                v => Err(format!("{f} must be 0 or 1, got {v}")),
            }
        };
        let t = values[Feature::Time as usize];
        if t < 0.0 || t.fract() != 0.0 || t > f64::from(u32::MAX) {
            return Err(format!("time must be a whole number of days, got {t}"));
        }
        Ok(Self {
            age: values[Feature::Age as usize],
            anaemia: flag(Feature::Anaemia)?,
            creatinine_phosphokinase: values[Feature::CreatininePhosphokinase as usize],
            diabetes: flag(Feature::Diabetes)?,
            ejection_fraction: values[Feature::EjectionFraction as usize],
            high_blood_pressure: flag(Feature::HighBloodPressure)?,
            platelets: values[Feature::Platelets as usize],
            serum_creatinine: values[Feature::SerumCreatinine as usize],
            serum_sodium: values[Feature::SerumSodium as usize],
            sex: if flag(Feature::Sex)? { Sex::Man } else { Sex::Woman },
            smoking: flag(Feature::Smoking)?,
            time: t as u32,
            death_event: flag(Feature::DeathEvent)?,
        })
    }
}

/// A value outside its documented interval that was kept rather than
/// rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeWarning {
    pub row: usize,
    pub feature: Feature,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for RangeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row {}: {} = {} outside interval [{}, {}]",
            self.row, self.feature, self.value, self.lo, self.hi
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub provenance: Provenance,
    pub warnings: Vec<RangeWarning>,
}

impl Cohort {
    pub fn from_records(records: Vec<PatientRecord>, source: impl Into<String>) -> Self {
        let rows = records.len();
        Self {
            records,
            provenance: Provenance {
                source: source.into(),
                rows,
            },
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn deaths(&self) -> usize {
        self.records.iter().filter(|r| r.death_event).count()
    }

    /// Sub-cohort holding `indices`, in the given order.
    pub fn subset(&self, indices: &[usize], label: &str) -> Cohort {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Cohort::from_records(records, format!("{}#{label}", self.provenance.source))
    }
}

/// Reads a cohort file. In strict mode any value outside its documented
/// interval fails the load; in lenient mode the row is kept and a warning
/// recorded. Platelets are never rejected: their documented unit and the
/// unit used in the file disagree, so out-of-interval platelet counts only
/// produce warnings.
pub fn load_cohort(path: &Path, strict: bool) -> Result<Cohort> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Load(LoadError {
            path: display.clone(),
            row: None,
            message: format!("cannot open: {e}"),
        })
    })?;
    read_cohort(file, &display, strict)
}

/// Same as [`load_cohort`] for an arbitrary reader; `source` names it in
/// diagnostics.
pub fn read_cohort(reader: impl Read, source: &str, strict: bool) -> Result<Cohort> {
    let load_err = |row: Option<usize>, message: String| {
        Error::Load(LoadError {
            path: source.to_string(),
            row,
            message,
        })
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();

    let header = match rows.next() {
        Some(h) => h.map_err(|e| load_err(Some(1), e.to_string()))?,
        None => return Err(load_err(None, "empty file (no header row)".into())),
    };
    // column position → feature
    let mut columns = Vec::with_capacity(13);
    for cell in header.iter() {
        let feature = Feature::from_name(cell).ok_or_else(|| {
            load_err(
                Some(1),
                format!(
                    "unknown column {cell:?}; expected {}",
                    Feature::ALL.map(Feature::name).join(", ")
                ),
            )
        })?;
        if columns.contains(&feature) {
            return Err(load_err(Some(1), format!("duplicate column {cell:?}")));
        }
        columns.push(feature);
    }
    if columns.len() != 13 {
        let missing: Vec<_> = Feature::ALL
            .into_iter()
            .filter(|f| !columns.contains(f))
            .map(Feature::name)
            .collect();
        return Err(load_err(Some(1), format!("missing columns: {}", missing.join(", "))));
    }

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for row in rows {
        let row = row.map_err(|e| load_err(None, e.to_string()))?;
        let line = row.position().map_or(records.len() + 2, |p| p.line() as usize);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 13 {
            return Err(load_err(Some(line), format!("expected 13 columns, found {}", row.len())));
        }
        let mut values = [0.0; 13];
        for (cell, &feature) in row.iter().zip(&columns) {
            if cell.is_empty() {
                return Err(load_err(Some(line), format!("empty cell for {feature}")));
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| load_err(Some(line), format!("{feature}: not a number: {cell:?}")))?;
            values[feature as usize] = v;
        }
        let record = PatientRecord::from_values(&values).map_err(|m| load_err(Some(line), m))?;
        for feature in Feature::ALL {
            let Some((lo, hi)) = feature.interval() else { continue };
            let value = feature.value(&record);
            if value >= lo && value <= hi {
                continue;
            }
            if strict && feature != Feature::Platelets {
                let feature = feature.name();
                return Err(Error::Range {
                    row: line,
                    feature,
                    value,
                    lo,
                    hi,
                });
            }
            warnings.push(RangeWarning {
                row: line,
                feature,
                value,
                lo,
                hi,
            });
        }
        records.push(record);
    }
    let mut cohort = Cohort::from_records(records, source);
    cohort.warnings = warnings;
    Ok(cohort)
}

/// Writes `cohort` in the canonical 13-column layout.
pub fn write_cohort(cohort: &Cohort, mut out: impl Write) -> Result<()> {
    let header: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
    writeln!(out, "{}", header.join(","))?;
    for r in &cohort.records {
        let cells: Vec<String> = Feature::ALL.iter().map(|f| f.value(r).to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub feature: Feature,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CohortStats {
    pub records: usize,
    pub women: usize,
    pub men: usize,
    pub deaths: usize,
    pub survivors: usize,
    pub features: Vec<FeatureStats>,
}

impl CohortStats {
    pub fn feature(&self, f: Feature) -> &FeatureStats {
        &self.features[f as usize]
    }
}

pub fn cohort_stats(c: &Cohort) -> Result<CohortStats> {
    if c.is_empty() {
        return Err(Error::Usage("cohort statistics need at least one record".into()));
    }
    let n = c.len() as f64;
    let features = Feature::ALL
        .into_iter()
        .map(|feature| {
            let values = c.records.iter().map(|r| feature.value(r));
            let (min, max, sum) = values.fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), v| {
                (lo.min(v), hi.max(v), s + v)
            });
            // A singleton's mean is its value exactly.
            let mean = if c.len() == 1 { min } else { sum / n };
            FeatureStats {
                feature,
                min,
                max,
                mean,
            }
        })
        .collect();
    let men = c.records.iter().filter(|r| r.sex == Sex::Man).count();
    let deaths = c.deaths();
    Ok(CohortStats {
        records: c.len(),
        women: c.len() - men,
        men,
        deaths,
        survivors: c.len() - deaths,
        features,
    })
}

/// Per-feature min-max scaling fitted on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationSpec {
    pub features: Vec<Feature>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl NormalizationSpec {
    pub fn fit(train: &Cohort, features: &[Feature]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Usage("normalization needs at least one training record".into()));
        }
        let (mut mins, mut maxs) = (Vec::new(), Vec::new());
        for &f in features {
            let values = train.records.iter().map(|r| f.value(r));
            mins.push(values.clone().fold(f64::INFINITY, f64::min));
            maxs.push(values.fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(Self {
            features: features.to_vec(),
            mins,
            maxs,
        })
    }

    /// `(x − min) / (max − min)`; features with zero span map to 0.
    pub fn apply(&self, r: &PatientRecord) -> Vec<f64> {
        self.features
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(f, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    (f.value(r) - lo) / span
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Inverse of [`apply`](Self::apply); zero-span features return their min.
    pub fn invert(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&x, (&lo, &hi))| lo + x * (hi - lo))
            .collect()
    }
}

/// One scaled feature row per record.
pub fn normalize(c: &Cohort, spec: &NormalizationSpec) -> Vec<Vec<f64>> {
    c.records.iter().map(|r| spec.apply(r)).collect()
}

/// Shuffled index lists per outcome class: (survivors, deaths).
fn shuffled_classes(c: &Cohort, rng: &mut Rng) -> [Vec<usize>; 2] {
    let (mut neg, mut pos): (Vec<usize>, Vec<usize>) =
        (0..c.len()).partition(|&i| !c.records[i].death_event);
    rng.shuffle(&mut neg);
    rng.shuffle(&mut pos);
    [neg, pos]
}

/// Deterministic split stratified on `death_event`. Each class contributes
/// `round(n_class · test_fraction)` records to the test part; both parts
/// keep the original record order.
pub fn split(c: &Cohort, test_fraction: f64, seed: u64) -> Result<(Cohort, Cohort)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Param(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = Rng::new(seed);
    let mut test = Vec::new();
    let mut train = Vec::new();
    for class in shuffled_classes(c, &mut rng) {
        let n_test = (class.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    if test.is_empty() || train.is_empty() {
        return Err(Error::Param(format!(
            "test fraction {test_fraction} leaves an empty part for {} records",
            c.len()
        )));
    }
    test.sort_unstable();
    train.sort_unstable();
    Ok((c.subset(&train, "train"), c.subset(&test, "test")))
}

/// Stratified k-fold assignment: returns `k` disjoint, exhaustive lists of
/// record indices, each sorted.
pub fn stratified_folds(c: &Cohort, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > c.len() {
        return Err(Error::Param(format!("fold count must lie in 2..={}, got {k}", c.len())));
    }
    let mut rng = Rng::new(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in shuffled_classes(c, &mut rng) {
        for idx in class {
            folds[next % k].push(idx);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Deaths so far, indexed by follow-up day `0..=max(time)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeEventSeries {
    pub counts: Vec<u32>,
}

impl CumulativeEventSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn at(&self, day: usize) -> u32 {
        self.counts[day]
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }
}

pub fn build_cumulative_series(c: &Cohort) -> Result<CumulativeEventSeries> {
    let max_time = c
        .records
        .iter()
        .map(|r| r.time)
        .max()
        .ok_or_else(|| Error::Usage("cumulative series needs at least one record".into()))?;
    let mut per_day = vec![0u32; max_time as usize + 1];
    for r in c.records.iter().filter(|r| r.death_event) {
        per_day[r.time as usize] += 1;
    }
    let mut total = 0;
    let counts = per_day
        .into_iter()
        .map(|n| {
            total += n;
            total
        })
        .collect();
    Ok(CumulativeEventSeries { counts })
}
