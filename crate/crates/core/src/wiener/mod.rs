//! Wiener-filter topology detection: non-causal and causal rows, the Granger predictor,
//! spectral factorization, thresholding and robustness bounds for corrupted outputs.

mod causal;
mod decide;
mod factor;
mod noncausal;
mod oracle;
mod robust;
mod row;

pub use causal::{
    causal_rows, causal_wiener_row, causal_wiener_row_with, granger_row, granger_row_with,
    granger_rows, CausalConfig,
};
pub use decide::{decide_edges, score_matrix, scores_to_csv, EdgeDecision, ThresholdRule};
pub use factor::{
    cepstral_factorize, spectral_factorize, wilson_factorize, FactorConfig, SpectralFactor,
};
pub use noncausal::{inverse_psd_kin_matrix, noncausal_rows, noncausal_wiener_row};
pub use oracle::{ckp_decomposition, detect_cancellation, CkpRows, CANCELLATION_TOL};
pub use robust::{perturbed_inverse_difference, robust_detect, robustness_bound};
pub use row::{WienerMode, WienerRow};
