//! The scalar functions appearing in the moments of the force-free Gaussian
//! process: `Phi1`, `Phi2`, their determinant combination `phi`, and the
//! impulse integral used by the splitting integrator.
//!
//! Each function switches to a power series for `|rho| < SERIES_THRESHOLD`.
//! Above the threshold the closed forms are written with `expm1` so that the
//! remaining cancellation costs at most a factor `~1/rho^2` in relative error.

/// Branch switch between the power series and the closed forms.
pub const SERIES_THRESHOLD: f64 = 0.5;

// 0.5^N / (N+3)! < 1e-40 for N = 26.
const SERIES_TERMS: usize = 26;

/// `Phi1(rho) = (1 - e^{-rho}) / rho`, `Phi1(0) = 1`.
pub fn phi1(rho: f64) -> f64 {
    if rho.abs() < SERIES_THRESHOLD {
        phi1_series(rho)
    } else {
        -(-rho).exp_m1() / rho
    }
}

/// `Phi2(rho) = 3 / (2 rho^3) [2 rho - 3 + 4 e^{-rho} - e^{-2 rho}]`, `Phi2(0) = 1`.
pub fn phi2(rho: f64) -> f64 {
    if rho.abs() < SERIES_THRESHOLD {
        phi2_series(rho)
    } else {
        let bracket = 2.0 * rho + 4.0 * (-rho).exp_m1() - (-2.0 * rho).exp_m1();
        1.5 * bracket / (rho * rho * rho)
    }
}

/// `phi(rho) = 4 Phi2(rho) Phi1(2 rho) - 3 Phi1(rho)^4`, evaluated through the
/// factorised form `6 Phi1(rho) [-2 + rho + (2 + rho) e^{-rho}] / rho^3`.
pub fn phi_det(rho: f64) -> f64 {
    6.0 * phi1(rho) * det_factor(rho)
}

/// `[-2 + rho + (2 + rho) e^{-rho}] / rho^3`, equal to `1/6` at zero.
fn det_factor(rho: f64) -> f64 {
    if rho.abs() < SERIES_THRESHOLD {
        det_factor_series(rho)
    } else {
        (2.0 * rho + (2.0 + rho) * (-rho).exp_m1()) / (rho * rho * rho)
    }
}

fn det_factor_series(rho: f64) -> f64 {
    // coefficient (-1)^m (m+1)/(m+3)!
    let mut sum = 0.0;
    let mut pow = 1.0;
    let mut inv_fact = 1.0 / 6.0;
    for m in 0..SERIES_TERMS {
        sum += pow * (m as f64 + 1.0) * inv_fact;
        pow *= -rho;
        inv_fact /= m as f64 + 4.0;
    }
    sum
}

/// `(rho - 1 + e^{-rho}) / rho^2`, equal to `1/2` at zero.
///
/// `dt^2` times this is the position response to a unit force held constant
/// over a step of length `dt` with friction `gamma = rho / dt`.
pub fn impulse_q(rho: f64) -> f64 {
    if rho.abs() < SERIES_THRESHOLD {
        let mut sum = 0.0;
        let mut term = 0.5;
        for k in 0..SERIES_TERMS {
            sum += term;
            term *= -rho / (k as f64 + 3.0);
        }
        sum
    } else {
        (rho + (-rho).exp_m1()) / (rho * rho)
    }
}

fn phi1_series(rho: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 0..SERIES_TERMS {
        sum += term;
        term *= -rho / (k as f64 + 2.0);
    }
    sum
}

fn phi2_series(rho: f64) -> f64 {
    // (3/2) sum_m (-1)^m (2^{m+3} - 4) rho^m / (m+3)!
    let mut sum = 0.0;
    let mut pow = 1.0;
    let mut two_pow = 8.0;
    let mut inv_fact = 1.0 / 6.0;
    for m in 0..SERIES_TERMS {
        sum += pow * (two_pow - 4.0) * inv_fact;
        pow *= -rho;
        two_pow *= 2.0;
        inv_fact /= m as f64 + 4.0;
    }
    1.5 * sum
}

/// Closed-form branches evaluated regardless of `rho`; used to compare the
/// two branches at the switch point.
pub mod closed_form {
    pub fn phi1(rho: f64) -> f64 {
        -(-rho).exp_m1() / rho
    }

    pub fn phi2(rho: f64) -> f64 {
        let bracket = 2.0 * rho + 4.0 * (-rho).exp_m1() - (-2.0 * rho).exp_m1();
        1.5 * bracket / (rho * rho * rho)
    }

    pub fn phi_det(rho: f64) -> f64 {
        6.0 * phi1(rho) * (2.0 * rho + (2.0 + rho) * (-rho).exp_m1()) / (rho * rho * rho)
    }
}

/// Series branches evaluated regardless of `rho`.
pub mod series {
    pub fn phi1(rho: f64) -> f64 {
        super::phi1_series(rho)
    }

    pub fn phi2(rho: f64) -> f64 {
        super::phi2_series(rho)
    }

    pub fn phi_det(rho: f64) -> f64 {
        6.0 * super::phi1_series(rho) * super::det_factor_series(rho)
    }
}
