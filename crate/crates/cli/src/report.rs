//! Report bundle assembled from upstream artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use trajekt_core::cohort::{read_cohort_csv, CohortPatient, Outcome, DAY1_VARIABLES};
use trajekt_core::ingest::{Sex, COMORBIDITIES, MEDICATION_CLASSES};
use trajekt_core::msm::{quantile_sorted, state_label};
use trajekt_core::survival::{chi2_independence, ks_two_sample};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, StageContext};
use crate::stages::{artifact, csv_err, read_json, write_rows, write_text, Selection};

const S: &str = "report";

pub const COHORT_CHARACTERISTICS: &str = "report/cohort_characteristics.csv";
pub const STATE_CHARACTERIZATION: &str = "report/state_characterization.csv";
pub const RISK_FACTORS: &str = "report/risk_factors.csv";
pub const TRANSITION_CURVES: &str = "report/transition_curves.csv";
pub const ATTRITION: &str = "report/attrition.csv";
pub const SUMMARY: &str = "report/summary.txt";

pub const CHARACTERISTICS_COLUMNS: [&str; 8] = ["variable", "level", "type", "ckd", "no_ckd", "test", "statistic", "p_value"];
pub const CURVE_COLUMNS: [&str; 6] = ["from", "to", "time_days", "estimate", "lower", "upper"];

type Row = BTreeMap<String, String>;

fn read_table(path: &Path) -> CliResult<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(S, path, e))?;
    let headers = r.headers().map_err(|e| csv_err(S, path, e))?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err(S, path, e))?;
            Ok(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn field<'a>(row: &'a Row, name: &str, path: &Path) -> CliResult<&'a str> {
    row.get(name).map(String::as_str).ok_or_else(|| CliError::Stage {
        stage: S,
        source: trajekt_core::Error::schema(&path.display().to_string(), 0, format!("missing column {name:?}")),
    })
}

fn num(row: &Row, name: &str, path: &Path) -> CliResult<f64> {
    let s = field(row, name, path)?;
    s.parse().map_err(|_| CliError::Stage {
        stage: S,
        source: trajekt_core::Error::schema(&path.display().to_string(), 0, format!("{name}: not a number: {s:?}")),
    })
}

/// `6m`, `1y`, `2.5y`.
pub fn horizon_key(years: f64) -> String {
    if years < 1.0 {
        format!("{}m", (years * 12.0).round())
    } else {
        format!("{years}y")
    }
}

fn quartiles(mut v: Vec<f64>) -> Option<[f64; 3]> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some([0.25, 0.5, 0.75].map(|q| quantile_sorted(&v, q)))
}

fn median_iqr(v: &[f64]) -> String {
    match quartiles(v.to_vec()) {
        Some([a, b, c]) => format!("{b:.2} [{a:.2}, {c:.2}]"),
        None => "NA".into(),
    }
}

fn count_pct(n: usize, total: usize) -> String {
    if total == 0 {
        return format!("{n} (NA)");
    }
    format!("{n} ({:.1}%)", 100.0 * n as f64 / total as f64)
}

fn opt_num(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "NA".into(), |v| format!("{v:.digits$}"))
}

/// Median [IQR] and KS p for continuous rows; n (%) and chi-square p for
/// categorical rows; CKD versus no CKD.
pub fn cohort_characteristics(patients: &[CohortPatient]) -> Vec<Vec<String>> {
    let (ckd, rest): (Vec<&CohortPatient>, Vec<&CohortPatient>) =
        patients.iter().partition(|p| p.window.outcome == Outcome::Ckd);
    let mut rows = vec![vec![
        "patients".into(),
        String::new(),
        "count".into(),
        ckd.len().to_string(),
        rest.len().to_string(),
        String::new(),
        String::new(),
        String::new(),
    ]];

    let mut continuous: Vec<(String, Box<dyn Fn(&CohortPatient) -> Option<f64>>)> = vec![
        ("age_at_encounter".into(), Box::new(|p| Some(p.covariates.age_at_encounter))),
        ("baseline_cr".into(), Box::new(|p| Some(p.baseline.value))),
        ("baseline_egfr".into(), Box::new(|p| p.covariates.baseline_egfr)),
        ("follow_up_days".into(), Box::new(|p| Some(p.window.length_days() as f64))),
    ];
    for v in DAY1_VARIABLES {
        continuous.push((format!("day1_{v}"), Box::new(move |p| p.covariates.day1.get(v).copied())));
    }
    for (name, get) in &continuous {
        let a: Vec<f64> = ckd.iter().filter_map(|p| get(p)).collect();
        let b: Vec<f64> = rest.iter().filter_map(|p| get(p)).collect();
        if a.is_empty() && b.is_empty() {
            continue;
        }
        let test = ks_two_sample(&a, &b).ok();
        rows.push(vec![
            name.clone(),
            String::new(),
            "continuous".into(),
            median_iqr(&a),
            median_iqr(&b),
            "ks".into(),
            opt_num(test.map(|t| t.statistic), 4),
            opt_num(test.map(|t| t.p_value), 6),
        ]);
    }

    let mut categorical: Vec<(String, Vec<String>, Box<dyn Fn(&CohortPatient) -> String>)> = vec![(
        "sex".into(),
        [Sex::F, Sex::M, Sex::Unknown].map(|s| s.to_string()).to_vec(),
        Box::new(|p| p.covariates.sex.to_string()),
    )];
    let yes_no = || vec!["yes".to_string(), "no".to_string()];
    let flag = |x: u8| if x == 1 { "yes".to_string() } else { "no".to_string() };
    for c in COMORBIDITIES {
        categorical.push((c.into(), yes_no(), Box::new(move |p| flag(p.covariates.comorbidities[c]))));
    }
    for m in MEDICATION_CLASSES {
        categorical.push((m.into(), yes_no(), Box::new(move |p| flag(p.covariates.medications[m]))));
    }
    categorical.push(("sepsis_day1".into(), yes_no(), Box::new(move |p| flag(p.covariates.sepsis_day1))));
    for (name, levels, get) in &categorical {
        let counts = |group: &[&CohortPatient]| -> Vec<usize> {
            levels.iter().map(|l| group.iter().filter(|p| &get(p) == l).count()).collect()
        };
        let (a, b) = (counts(&ckd), counts(&rest));
        // levels absent from both groups carry no information
        let table: Vec<Vec<f64>> = vec![a.iter().map(|&x| x as f64).collect(), b.iter().map(|&x| x as f64).collect()];
        let keep: Vec<usize> = (0..levels.len()).filter(|&j| a[j] + b[j] > 0).collect();
        let table: Vec<Vec<f64>> = table.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
        let test = chi2_independence(&table).ok();
        for (j, level) in levels.iter().enumerate() {
            if name != "sex" && level == "no" {
                continue;
            }
            let first = j == 0;
            rows.push(vec![
                name.clone(),
                level.clone(),
                "categorical".into(),
                count_pct(a[j], ckd.len()),
                count_pct(b[j], rest.len()),
                if first { "chi2".into() } else { String::new() },
                if first { opt_num(test.map(|t| t.statistic), 4) } else { String::new() },
                if first { opt_num(test.map(|t| t.p_value), 6) } else { String::new() },
            ]);
        }
    }
    rows
}

struct StateTables {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    curves: Vec<Vec<String>>,
    one_year: Vec<(String, f64)>,
}

fn state_tables(cfg: &PipelineConfig, k: usize) -> CliResult<StateTables> {
    let out = |rel: &str| cfg.output_dir.join(rel);
    let profiles_path = out(artifact::PROFILES);
    let profiles = read_table(&profiles_path)?;
    let prev_path = out(artifact::PREVALENCE);
    let prevalence = read_table(&prev_path)?;
    let bands_path = out(artifact::BANDS);
    let bands = read_table(&bands_path)?;
    let term_path = out(artifact::TERMINAL);
    let terminal = read_table(&term_path)?;
    let ci_path = out(artifact::CI);
    let ci = read_table(&ci_path)?;

    let mut groups: Vec<String> = Vec::new();
    let mut band: BTreeMap<(String, String), String> = BTreeMap::new();
    for r in &bands {
        let g = field(r, "disease_group", &bands_path)?.to_string();
        if !groups.contains(&g) {
            groups.push(g.clone());
        }
        band.insert((field(r, "state", &bands_path)?.to_string(), g), field(r, "band", &bands_path)?.to_string());
    }
    let mut top: BTreeMap<String, Vec<(f64, String)>> = BTreeMap::new();
    for r in &prevalence {
        top.entry(field(r, "state", &prev_path)?.to_string())
            .or_default()
            .push((num(r, "prevalence", &prev_path)?, field(r, "concept_id", &prev_path)?.to_string()));
    }
    let horizons = &cfg.msm.horizons_years;
    let mut point: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in &terminal {
        let key = horizon_key(num(r, "horizon_years", &term_path)?);
        point.insert((field(r, "state", &term_path)?.to_string(), key), num(r, "p_ckd", &term_path)?);
    }
    let ckd = state_label(k, k);
    let death = state_label(k + 1, k);
    let mut bounds: BTreeMap<(String, u64), (f64, f64)> = BTreeMap::new();
    let mut curves = Vec::new();
    for r in &ci {
        let (from, to) = (field(r, "from", &ci_path)?, field(r, "to", &ci_path)?);
        if to != ckd && to != death || from == ckd || from == death {
            continue;
        }
        let t = num(r, "horizon_days", &ci_path)?;
        if to == ckd {
            bounds.insert((from.to_string(), t.to_bits()), (num(r, "lower", &ci_path)?, num(r, "upper", &ci_path)?));
        }
        curves.push(CURVE_COLUMNS.iter().map(|c| r.get(match *c {
            "time_days" => "horizon_days",
            other => other,
        }).cloned().unwrap_or_default()).collect());
    }

    let mut header: Vec<String> =
        ["state", "vectors", "patients", "age_q1", "age_median", "age_q3", "predominant_diseases"].map(String::from).to_vec();
    header.extend(groups.iter().map(|g| format!("band_{g}")));
    for &h in horizons {
        let key = horizon_key(h);
        header.extend([format!("p_ckd_{key}"), format!("p_ckd_{key}_lower"), format!("p_ckd_{key}_upper")]);
    }
    let mut rows = Vec::new();
    let mut one_year = Vec::new();
    for p in &profiles {
        let state = field(p, "state", &profiles_path)?.to_string();
        let mut row: Vec<String> = ["state", "vectors", "patients", "age_q1", "age_median", "age_q3"]
            .iter()
            .map(|c| field(p, c, &profiles_path).map(str::to_string))
            .collect::<CliResult<_>>()?;
        let mut conds = top.remove(&state).unwrap_or_default();
        conds.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let desc: Vec<String> = conds
            .iter()
            .filter(|c| c.0 > cfg.cluster.prevalence_threshold)
            .take(3)
            .map(|(p, c)| format!("{c} ({:.0}%)", 100.0 * p))
            .collect();
        row.push(desc.join("; "));
        for g in &groups {
            row.push(band.get(&(state.clone(), g.clone())).cloned().unwrap_or_default());
        }
        for &h in horizons {
            let key = horizon_key(h);
            let p = point.get(&(state.clone(), key)).copied();
            let (lo, hi) = bounds
                .get(&(state.clone(), (h * trajekt_core::cohort::DAYS_PER_YEAR).to_bits()))
                .copied()
                .map_or((None, None), |(a, b)| (Some(a), Some(b)));
            row.extend([opt_num(p, 4), opt_num(lo, 4), opt_num(hi, 4)]);
            if h == 1.0 {
                one_year.extend(p.map(|v| (state.clone(), v)));
            }
        }
        rows.push(row);
    }
    Ok(StateTables { header, rows, curves, one_year })
}

fn copy(from: &Path, to: &Path) -> CliResult<()> {
    std::fs::copy(from, to).map(|_| ()).map_err(|e| CliError::Stage {
        stage: S,
        source: trajekt_core::Error::Io { path: from.to_path_buf(), source: e },
    })
}

/// Writes the report bundle and returns the paths written, relative to
/// the output directory.
pub fn emit_report(cfg: &PipelineConfig) -> CliResult<Vec<String>> {
    let out = |rel: &str| cfg.output_dir.join(rel);
    let patients = read_cohort_csv(&out(artifact::COHORT)).stage(S)?;
    let selection: Selection = read_json(S, &out(artifact::SELECTION))?;
    let k = selection.k;

    write_rows(S, &out(COHORT_CHARACTERISTICS), &CHARACTERISTICS_COLUMNS, &cohort_characteristics(&patients))?;
    let st = state_tables(cfg, k)?;
    let header: Vec<&str> = st.header.iter().map(String::as_str).collect();
    write_rows(S, &out(STATE_CHARACTERIZATION), &header, &st.rows)?;
    write_rows(S, &out(TRANSITION_CURVES), &CURVE_COLUMNS, &st.curves)?;
    copy(&out(artifact::RISK), &out(RISK_FACTORS))?;
    copy(&out(artifact::ATTRITION), &out(ATTRITION))?;

    let risk_path = out(artifact::RISK);
    let risk = read_table(&risk_path)?;
    let significant = risk.iter().filter(|r| r.get("significant").is_some_and(|s| s == "true")).count();
    let notices = std::fs::read_to_string(out(artifact::NOTICES)).unwrap_or_default();
    let count = |o: Outcome| patients.iter().filter(|p| p.window.outcome == o).count();

    let mut s = String::new();
    let _ = writeln!(s, "patients: {}", patients.len());
    let _ = writeln!(
        s,
        "outcomes: ckd {}, death {}, censored {}",
        count(Outcome::Ckd),
        count(Outcome::Death),
        count(Outcome::Censored)
    );
    match selection.knee {
        Some(knee) if !selection.overridden => {
            let _ = writeln!(s, "states: {k} (WCSS knee)");
            debug_assert_eq!(knee, k);
        }
        Some(knee) => {
            let _ = writeln!(s, "states: {k} (set explicitly; WCSS knee at {knee})");
        }
        None => {
            let _ = writeln!(s, "states: {k} (set explicitly; no WCSS knee)");
        }
    }
    let _ = writeln!(s, "vectors: {}", selection.vectors);
    if !st.one_year.is_empty() {
        let _ = writeln!(s, "1-year probability of CKD by state:");
        for (state, p) in &st.one_year {
            let _ = writeln!(s, "  {state}: {p:.4}");
        }
    }
    let _ = writeln!(s, "risk factor rows: {}, significant: {significant}", risk.len());
    if !notices.is_empty() {
        let _ = writeln!(s, "notices:");
        for n in notices.lines() {
            let _ = writeln!(s, "  {n}");
        }
    }
    write_text(S, &out(SUMMARY), &s)?;

    Ok([COHORT_CHARACTERISTICS, STATE_CHARACTERIZATION, RISK_FACTORS, TRANSITION_CURVES, ATTRITION, SUMMARY]
        .map(String::from)
        .to_vec())
}
