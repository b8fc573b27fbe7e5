//! Twelve hand-built patients through the full cohort funnel.

use std::path::PathBuf;

use chrono::NaiveDate;
use trajekt_core::cohort::{build_cohort, BaselineRule, CohortConfig, Fate, Outcome};
use trajekt_core::ingest::{load_concept_sets, load_event_log, EventLogPaths};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cohort12")
}

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

#[test]
fn twelve_patient_funnel() {
    let dir = fixture();
    let log = load_event_log(&EventLogPaths::in_dir(&dir)).unwrap();
    let (sets, _) = load_concept_sets(&dir.join("concepts.toml")).unwrap();
    let build = build_cohort(&log, &sets, &CohortConfig::default());

    let fates = [
        ("P01", Fate::NoAkiVisit),
        ("P02", Fate::NoCreatinine),
        ("P03", Fate::TooFewMeasurements),
        ("P04", Fate::NoRiseIn48h),
        ("P05", Fate::PriorCkd),
        ("P06", Fate::BaselineAtLeastThreshold),
        ("P07", Fate::Included),
        ("P08", Fate::Included),
        ("P09", Fate::Included),
        ("P10", Fate::Included),
        ("P11", Fate::TooFewMeasurements),
        ("P12", Fate::Included),
    ];
    for (id, want) in fates {
        assert_eq!(build.fates[id], want, "{id}");
    }

    // (id, visit, baseline, rule, t_end, outcome)
    let included = [
        ("P07", "V07", 0.8, BaselineRule::Median365To7, "2021-03-28", Outcome::Ckd),
        ("P08", "V08", 0.9, BaselineRule::Min7To0, "2020-12-18", Outcome::Death),
        ("P09", "V09", 1.0, BaselineRule::MinInVisit, "2021-07-16", Outcome::Censored),
        ("P10", "V10", 1.19, BaselineRule::Median365To7, "2021-02-06", Outcome::Ckd),
        ("P12", "V12", 1.0, BaselineRule::Median365To7, "2020-07-01", Outcome::Censored),
    ];
    assert_eq!(build.patients.len(), included.len());
    for (p, (id, visit, baseline, rule, t_end, outcome)) in build.patients.iter().zip(included) {
        assert_eq!(p.person_id, id);
        assert_eq!(p.visit_id, visit);
        assert!((p.baseline.value - baseline).abs() < 1e-12, "{id}: {}", p.baseline.value);
        assert_eq!(p.baseline.rule, rule, "{id}");
        assert_eq!(p.window.t_start, date("2020-06-01"));
        assert_eq!(p.window.t_end, date(t_end), "{id}");
        assert_eq!(p.window.outcome, outcome, "{id}");
    }

    let steps: Vec<(&str, usize)> = build.attrition.steps.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    assert_eq!(
        steps,
        [
            ("persons", 12),
            ("aki_visit", 11),
            ("has_creatinine", 10),
            ("two_cr_within_48h", 8),
            ("cr_rise_50pct_within_48h", 7),
            ("no_prior_ckd", 6),
            ("baseline_cr_below_1.2", 5),
            ("valid_window", 5),
        ]
    );
}
