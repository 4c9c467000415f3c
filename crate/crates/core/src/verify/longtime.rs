use rand::Rng;

use super::shared::interval;
use super::{CheckReport, ReportBuilder};
use crate::config::RunConfig;
use crate::error::Result;
use crate::rng::{derive_seed, RngStream};
use crate::spectral::eigen::principal_mode;
use crate::spectral::{build_generator, spectral_gap, EigenOptions, OperatorMatrix, Semigroup};
use crate::stats::weighted_line_fit;

fn dot(x: &[f64], y: &[f64], free: &[usize]) -> f64 {
    free.iter().map(|&k| x[k] * y[k]).sum()
}

fn sup(x: &[f64], free: &[usize]) -> f64 {
    free.iter().map(|&k| x[k].abs()).fold(0.0, f64::max)
}

/// Decay exponent of `errors(t)` from a least-squares fit of `log err`,
/// ignoring points at the rounding floor.
fn decay_exponent(times: &[f64], errors: &[f64], floor: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = times.iter().zip(errors).filter(|(_, e)| **e > floor).map(|(t, e)| (*t, e.ln())).unzip();
    if x.len() < 3 {
        return None;
    }
    weighted_line_fit(&x, &y, &vec![1.0; x.len()]).ok().map(|f| -f.slope)
}

/// Rank-one limit of `e^{lambda0 t} P_t` on the dense grid and the uniform
/// survival bound.
pub fn check_longtime(config: &RunConfig) -> Result<CheckReport> {
    let seed = derive_seed(config.seed, "longtime");
    let mut rb = ReportBuilder::new("longtime", config, seed);
    interval(config)?;
    let params = config.params()?;
    let n = config.spectral.dense_n;
    let grid = config.grid(n, n)?;
    let a = build_generator(&grid, &params)?;
    let gap = spectral_gap(&a)?;
    rb.measure("gap", &gap);
    rb.at_least("alpha_star", gap.alpha_star, f64::MIN_POSITIVE);
    rb.holds("top_eigenvalue_simple", gap.top_multiplicity == 1, gap.top_multiplicity as f64, 1.0);

    let opts = EigenOptions { tol: 1e-12, ..EigenOptions::default() };
    let right = principal_mode(&a, &opts)?;
    // left eigenvector of the same reduced matrix
    let a_t = OperatorMatrix { matrix: a.matrix.transpose(), ..a.clone() };
    let left = principal_mode(&a_t, &opts)?;
    let lambda0 = right.lambda;
    let free = a.free_nodes();
    let (phi, ell) = (&right.vector, &left.vector);
    let project = |f: &[f64]| -> Vec<f64> {
        let c = dot(ell, f, &free) / dot(ell, phi, &free);
        phi.iter().map(|p| c * p).collect()
    };

    let mut rng = RngStream::new(seed, 0);
    let ones = vec![1.0; grid.len()];
    let random: Vec<Vec<f64>> = (0..2).map(|_| (0..grid.len()).map(|_| rng.random::<f64>()).collect()).collect();
    let limit_one = project(&ones);
    let orthogonal: Vec<f64> = random[0].iter().zip(project(&random[0])).map(|(f, p)| f - p).collect();
    let tests: Vec<(&str, &[f64])> = vec![
        ("one", &ones),
        ("random_a", &random[0]),
        ("random_b", &random[1]),
        ("phi", phi),
        ("orthogonal", &orthogonal),
    ];
    let times = &config.verify.longtime_times;
    let mut errors = vec![Vec::new(); tests.len()];
    let mut survival = Vec::new();
    for &t in times {
        let sg = Semigroup::new(&a, t)?;
        let fs: Vec<Vec<f64>> = tests.iter().map(|(_, f)| f.to_vec()).collect();
        let out = sg.apply_many(&fs);
        let growth = (lambda0 * t).exp();
        for (k, ((name, f), pf)) in tests.iter().zip(&out).enumerate() {
            let scaled: Vec<f64> = pf.iter().map(|v| v * growth).collect();
            let err = if *name == "orthogonal" {
                sup(&scaled, &free) / sup(f, &free)
            } else {
                let lim = project(f);
                let diff: Vec<f64> = scaled.iter().zip(&lim).map(|(s, l)| s - l).collect();
                sup(&diff, &free) / sup(&lim, &free)
            };
            errors[k].push(err);
        }
        survival.push((t, sup(&out[0], &free) * growth));
    }
    let floor = 1e-11;
    let target = 0.9 * gap.alpha_star;
    for (k, (name, _)) in tests.iter().enumerate() {
        rb.measure(&format!("{name}_errors"), &errors[k]);
        if *name == "phi" {
            let worst = errors[k].iter().copied().fold(0.0, f64::max);
            rb.at_most("phi_fixed_direction_error", worst, 1e-8);
            continue;
        }
        match decay_exponent(times, &errors[k], floor) {
            Some(rate) => {
                rb.measure(&format!("{name}_decay_exponent"), rate);
                rb.at_least(&format!("{name}_decay_exponent_vs_gap"), rate, target);
            }
            // already at the rounding floor from the first time on
            None => rb.holds(&format!("{name}_decay_exponent_vs_gap"), true, 0.0, target),
        }
    }
    // P_x(tau > t) <= C e^{-lambda0 t} on the nodes, with C the sup over the sampled times
    let constant = survival.iter().map(|s| s.1).fold(0.0, f64::max);
    rb.measure("survival_scaled", &survival);
    rb.measure("survival_constant", constant);
    rb.measure("limit_sup", sup(&limit_one, &free));
    rb.holds("survival_constant_finite", constant.is_finite() && constant > 0.0, constant, 0.0);
    Ok(rb.finish())
}
