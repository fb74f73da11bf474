use std::fmt::Write as _;

use crate::dataset::{Cohort, Feature};
use crate::error::{Error, Result};

/// The five exploratory pairings, each with its hue feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    AgeVsCpk,
    AgeVsDiabetes,
    AgeVsHbp,
    AgeVsPlatelets,
    AgeVsSodium,
}

pub const HISTOGRAM_NAME: &str = "age-histogram";

impl Pairing {
    pub const ALL: [Pairing; 5] = [
        Pairing::AgeVsCpk,
        Pairing::AgeVsDiabetes,
        Pairing::AgeVsHbp,
        Pairing::AgeVsPlatelets,
        Pairing::AgeVsSodium,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pairing::AgeVsCpk => "age-vs-cpk",
            Pairing::AgeVsDiabetes => "age-vs-diabetes",
            Pairing::AgeVsHbp => "age-vs-hbp",
            Pairing::AgeVsPlatelets => "age-vs-platelets",
            Pairing::AgeVsSodium => "age-vs-sodium",
        }
    }

    pub fn from_name(name: &str) -> Option<Pairing> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// `(x, y, hue)`
    pub fn features(self) -> (Feature, Feature, Feature) {
        use Feature::*;
        match self {
            Pairing::AgeVsCpk => (Age, CreatininePhosphokinase, Anaemia),
            Pairing::AgeVsDiabetes => (Age, Diabetes, Anaemia),
            Pairing::AgeVsHbp => (Age, HighBloodPressure, Diabetes),
            Pairing::AgeVsPlatelets => (Age, Platelets, Diabetes),
            Pairing::AgeVsSodium => (Age, SerumSodium, Sex),
        }
    }

    /// Every accepted exploration name, histogram included.
    pub fn valid_names() -> Vec<&'static str> {
        let mut names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
        names.push(HISTOGRAM_NAME);
        names
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterTable {
    pub x: Feature,
    pub y: Feature,
    pub hue: Feature,
    pub rows: Vec<[f64; 3]>,
}

impl ScatterTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},{}\n", self.x, self.y, self.hue);
        for [x, y, h] in &self.rows {
            let _ = writeln!(out, "{x},{y},{h}");
        }
        out
    }
}

fn feature(name: &str) -> Result<Feature> {
    Feature::from_name(name).ok_or_else(|| {
        let valid: Vec<&str> = Feature::ALL.iter().map(|f| f.name()).collect();
        Error::Param(format!("unknown feature {name:?}; valid names: {}", valid.join(", ")))
    })
}

/// One `(x, y, hue)` row per record, in cohort order.
pub fn explore_export(cohort: &Cohort, x: &str, y: &str, hue: &str) -> Result<ScatterTable> {
    let (x, y, hue) = (feature(x)?, feature(y)?, feature(hue)?);
    Ok(scatter(cohort, x, y, hue))
}

pub fn scatter(cohort: &Cohort, x: Feature, y: Feature, hue: Feature) -> ScatterTable {
    let rows = cohort
        .records
        .iter()
        .map(|r| [x.value(r), y.value(r), hue.value(r)])
        .collect();
    ScatterTable { x, y, hue, rows }
}

pub fn pairing_table(cohort: &Cohort, p: Pairing) -> ScatterTable {
    let (x, y, hue) = p.features();
    scatter(cohort, x, y, hue)
}

/// Half-open age bin `[lo, hi)` with its death count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgeBin {
    pub lo: f64,
    pub hi: f64,
    pub records: usize,
    pub deaths: usize,
}

/// Bins start at the largest multiple of `width` not above the youngest age
/// and continue until the oldest age is covered.
pub fn age_histogram(cohort: &Cohort, width: f64) -> Result<Vec<AgeBin>> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::Param(format!("bin width must be positive, got {width}")));
    }
    if cohort.is_empty() {
        return Ok(Vec::new());
    }
    let ages = cohort.records.iter().map(|r| r.age);
    let min = ages.clone().fold(f64::INFINITY, f64::min);
    let max = ages.fold(f64::NEG_INFINITY, f64::max);
    let start = (min / width).floor();
    let n = ((max / width).floor() - start) as usize + 1;
    let mut bins: Vec<AgeBin> = (0..n)
        .map(|k| AgeBin {
            lo: (start + k as f64) * width,
            hi: (start + k as f64 + 1.0) * width,
            records: 0,
            deaths: 0,
        })
        .collect();
    for r in &cohort.records {
        let k = ((r.age / width).floor() - start) as usize;
        bins[k].records += 1;
        if r.death_event {
            bins[k].deaths += 1;
        }
    }
    Ok(bins)
}

pub fn histogram_csv(bins: &[AgeBin]) -> String {
    let mut out = String::from("bin_start,bin_end,records,deaths\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{},{}", b.lo, b.hi, b.records, b.deaths);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_cohort;
    use crate::numerics::Rng;
    use crate::tasks::classify::tests::separable_cohort;
    use proptest::prelude::*;

    const FIRST_ROWS: &str = "\
age,anaemia,creatinine_phosphokinase,diabetes,ejection_fraction,high_blood_pressure,platelets,serum_creatinine,serum_sodium,sex,smoking,time,DEATH_EVENT
75,0,582,0,20,1,265000,1.9,130,1,0,4,1
55,0,7861,0,38,0,263358.03,1.1,136,1,0,6,1
65,0,146,0,20,0,162000,1.3,129,1,1,7,1
50,1,111,0,20,0,210000,1.9,137,1,0,7,1
65,1,160,1,20,0,327000,2.7,116,0,0,8,1
90,1,47,0,40,1,204000,2.1,132,1,1,8,1
75,1,246,0,15,0,127000,1.2,137,1,0,10,1
60,1,315,1,60,0,454000,1.1,131,1,1,10,1
";

    fn first_rows() -> Cohort {
        read_cohort(FIRST_ROWS.as_bytes(), "first_rows", false).unwrap()
    }

    #[test]
    fn first_rows_age_vs_cpk() {
        let t = explore_export(&first_rows(), "age", "creatinine_phosphokinase", "anaemia").unwrap();
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.rows[0][..2], [75.0, 582.0]);
        assert!(t.rows.iter().all(|r| r[2] == 0.0 || r[2] == 1.0));
        assert!(t.to_csv().starts_with("age,creatinine_phosphokinase,anaemia\n75,582,0\n"));
    }

    #[test]
    fn unknown_feature_lists_names() {
        let err = explore_export(&first_rows(), "age", "cholesterol", "sex").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Param(_)));
        assert!(msg.contains("serum_sodium") && msg.contains("DEATH_EVENT"), "{msg}");
    }

    #[test]
    fn pairings_round_trip_names() {
        for p in Pairing::ALL {
            assert_eq!(Pairing::from_name(p.name()), Some(p));
            let t = pairing_table(&first_rows(), p);
            assert_eq!(t.rows.len(), 8);
            assert_eq!(t.x, Feature::Age);
        }
        assert_eq!(Pairing::AgeVsSodium.features().2, Feature::Sex);
        assert_eq!(Pairing::valid_names().len(), 6);
        assert!(Pairing::from_name("age-vs-height").is_none());
    }

    #[test]
    fn first_rows_histogram() {
        let bins = age_histogram(&first_rows(), 10.0).unwrap();
        let find = |lo: f64| bins.iter().find(|b| b.lo == lo).unwrap().deaths;
        assert_eq!(bins.first().unwrap().lo, 50.0);
        assert_eq!(bins.last().unwrap().hi, 100.0);
        assert_eq!(find(50.0), 2);
        assert_eq!(find(90.0), 1);
        assert_eq!(bins.iter().map(|b| b.deaths).sum::<usize>(), 8);
        assert!(histogram_csv(&bins).starts_with("bin_start,bin_end,records,deaths\n50,60,2,2\n"));
        assert!(age_histogram(&first_rows(), 0.0).is_err());
    }

    #[test]
    fn zero_death_histogram() {
        let mut c = first_rows();
        c.records.iter_mut().for_each(|r| r.death_event = false);
        let bins = age_histogram(&c, 5.0).unwrap();
        assert!(bins.iter().all(|b| b.deaths == 0));
        assert_eq!(bins.iter().map(|b| b.records).sum::<usize>(), 8);
    }

    proptest! {
        #[test]
        fn export_is_a_projection(seed in 0u64..1000, n in 1usize..40) {
            let c = separable_cohort(n, seed);
            let mut order: Vec<usize> = (0..n).collect();
            Rng::new(seed ^ 0xabc).shuffle(&mut order);
            let permuted = c.subset(&order, "perm");
            let a = pairing_table(&c, Pairing::AgeVsSodium);
            let b = pairing_table(&permuted, Pairing::AgeVsSodium);
            prop_assert_eq!(a.rows.len(), n);
            for (k, &i) in order.iter().enumerate() {
                prop_assert_eq!(b.rows[k], a.rows[i]);
            }
        }

        #[test]
        fn histogram_partitions_deaths(seed in 0u64..1000, n in 1usize..60, width in 1.0f64..30.0) {
            let c = separable_cohort(n, seed);
            let bins = age_histogram(&c, width).unwrap();
            prop_assert_eq!(bins.iter().map(|b| b.deaths).sum::<usize>(), c.deaths());
            prop_assert_eq!(bins.iter().map(|b| b.records).sum::<usize>(), n);
        }
    }
}
