//! Thin DFT wrappers over `rustfft` with a per-thread planner cache.
//!
//! Forward: `X[k] = sum_t x[t] e^{-2 pi i k t / m}`. Inverse is normalized by `1/m`, so a
//! sequence of taps placed at lag `l mod m` maps to the frequency response of `sum_l h_l z^-l`.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn forward_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

pub fn inverse_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

pub fn forward(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    forward_in_place(&mut buf);
    buf
}

pub fn inverse(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    inverse_in_place(&mut buf);
    buf
}

/// Lag index in `[-m/2, m/2)` of circular position `k` on a length-`m` grid.
pub fn signed_lag(k: usize, m: usize) -> i64 {
    if k < m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}
