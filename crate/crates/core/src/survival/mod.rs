//! Kaplan-Meier, Cox models, proportional-hazards diagnostics and
//! the descriptive tests used by the report.

mod cox;
mod km;
mod risk;
mod screen;
mod stats;

pub use cox::{
    ahr_weights, cox_fit, ph_test, weighted_cox_fit, weighted_score, Competing, CoxOptions, HazardFit,
    PhTest, Status, SurvivalData, Ties, WeightTemplate,
};
pub use km::KaplanMeier;
pub use screen::{
    pearson, screen_covariates, CovariateKind, CovariateTable, DropReason, ScreenConfig, ScreeningReport,
};
pub use stats::{bh_adjust, chi2_independence, ks_two_sample, Chi2Result, KsResult};
pub use risk::{
    covariate_table, risk_factor_analysis, select_subpopulations, ModelDiagnostics, RiskConfig, RiskReport, RiskRow,
    Subpopulation, RISK_COLUMNS,
};
