//! Evaluation kit: metrics, cross-domain and attack evaluation, domain-shift
//! analysis, the bias-variance probe, a planted-optimum control environment,
//! regime comparisons, timing and feature export.

mod biasvar;
mod desk;
mod metrics;
mod shift;
mod synthetic;
mod timing;

pub use metrics::{
    attack_corpus, attack_eval, auroc, cross_domain_eval, evaluate, metrics_row, score_samples, thread_cap, AttackReport,
    CrossDomainReport, Metrics, DEFAULT_THRESHOLD, METRICS_HEADER, THREADS_ENV,
};
pub use synthetic::{run_env_bench, EnvBenchConfig, EnvBenchResult, SyntheticEnv};
pub use desk::{desk_mean, run_desk, write_desk_csv, DeskConfig, DeskRow, DESK_HEADER};
pub use biasvar::{bias_variance_probe, decompose, BiasVarianceReport, Resampling};
pub use shift::{corpus_features, kl_diag, kl_shift, shift_report, DiagGaussian, DomainShiftReport, FeatureSpace, ShiftRow, ShiftSide, VARIANCE_FLOOR};
pub use timing::{export_features, timing_bench, TimingResult, TIMING_HEADER};
