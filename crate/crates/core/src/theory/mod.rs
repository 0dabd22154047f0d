//! Numerical checks of the regularization decomposition, the Rademacher
//! bound and the generalization bound for generalized linear models.

pub mod bound;
pub mod family;
pub mod harness;
pub mod rademacher;
pub mod risk;
pub mod scan;

pub use bound::{generalization_bound, radius_and_C, BoundConstants};
pub use family::GlmFamily;
pub use harness::{
    coverage_csv, coverage_study, embedding, fit_latent_mle, rademacher_study, CoverageRow, CoverageStudy,
    LowRankTask, RademacherStudy, COVERAGE_CSV_HEADER,
};
pub use rademacher::{
    constraint_value, empirical_rademacher, estimate_rho, estimate_rho_seeded, lowest_nonzero_singular_value,
    numeric_rank, second_moment_matrix, RademacherEstimate, RhoConfig, RhoEstimate,
};
pub use risk::{
    aug_risk_cubic_1d_mc, aug_risk_mc, glm_nll, one_step_ld, reg_glm, reg_terms_cubic_1d, reg_terms_general,
    std_risk, RegTerms, ScoredData,
};
pub use scan::{
    loglog_slope, scan_rows, taylor_remainder_scan, BoundInputs, RademacherRow, ScanConfig, ScanRow, ScanStatus,
    TheoryReport, REPORT_CSV_HEADER,
};
