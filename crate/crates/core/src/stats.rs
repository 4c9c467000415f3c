//! Summation, goodness-of-fit tests and regression helpers.

use rand::seq::SliceRandom;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{domain_err, Error, Result};
use crate::rng::RngStream;

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() as f64 - 1.0)
}

/// Sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let prod: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    pairwise_sum(&prod) / (xs.len() as f64 - 1.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided Student-t critical value at confidence `level`.
pub fn t_quantile(level: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(0.5 + level / 2.0)
}

/// Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

impl TestOutcome {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestOutcome> {
    if samples.is_empty() {
        return domain_err("KS test needs at least one sample");
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok(TestOutcome { statistic: d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.is_empty() || b.is_empty() {
        return domain_err("KS test needs nonempty samples");
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    Ok(TestOutcome { statistic: d, p_value: kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d) })
}

/// Pearson chi-square goodness of fit of `observed` counts against expected
/// probabilities `probs` (renormalized over the supplied bins).
///
/// Bins with expected count below `min_expected` are pooled into one bin.
pub fn chi_square_gof(observed: &[f64], probs: &[f64], min_expected: f64) -> Result<(TestOutcome, usize)> {
    if observed.len() != probs.len() {
        return Err(Error::Mismatch("observed and expected bin counts differ".into()));
    }
    let total: f64 = observed.iter().sum();
    let psum: f64 = probs.iter().sum();
    if !(total > 0.0 && psum > 0.0) {
        return domain_err("chi-square test needs positive totals");
    }
    let mut stat = 0.0;
    let mut bins = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (o, p) in observed.iter().zip(probs) {
        let e = total * p / psum;
        if e < min_expected {
            pool_o += o;
            pool_e += e;
        } else {
            stat += (o - e) * (o - e) / e;
            bins += 1;
        }
    }
    // a pooled bin still below the threshold is dropped
    if pool_e >= min_expected {
        stat += (pool_o - pool_e) * (pool_o - pool_e) / pool_e;
        bins += 1;
    }
    if bins < 2 {
        return domain_err("chi-square test needs at least two populated bins");
    }
    let dof = (bins - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat);
    Ok((TestOutcome { statistic: stat, p_value: p }, bins))
}

/// Two-sided p-value of a chi-square statistic with `dof` degrees of freedom.
pub fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    1.0 - ChiSquared::new(dof).expect("positive dof").cdf(stat)
}

/// Weighted least squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n || w.len() != n {
        return domain_err("line fit needs at least three matched points");
    }
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let syy: f64 = y.iter().zip(w).map(|(y, w)| w * (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return domain_err("line fit needs distinct abscissae");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    // inverse-variance weights: the slope variance is 1/sxx, inflated by the
    // reduced chi-square when the residual scatter exceeds the weights
    let scale = (rss / (n as f64 - 2.0)).max(1.0);
    Ok(LineFit { intercept, slope, slope_se: (scale / sxx).sqrt(), r2, n })
}

/// Mean and 95% half-width from independent batch values.
pub fn batch_means_ci(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return domain_err("batch means need at least two batches");
    }
    let m = mean(values);
    let se = (variance(values) / values.len() as f64).sqrt();
    Ok((m, t_quantile(0.95, values.len() as f64 - 1.0) * se))
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    covariance(x, y) / (variance(x) * variance(y)).sqrt()
}

/// Permutation test of independence between a real variable and a label,
/// using the between-label spread of means (Kruskal-type statistic on values).
///
/// Returns the fraction of label permutations whose statistic is at least the
/// observed one (with the usual +1 correction).
pub fn permutation_test(
    values: &[f64],
    labels: &[usize],
    n_perm: usize,
    seed: u64,
) -> Result<TestOutcome> {
    if values.len() != labels.len() || values.len() < 2 {
        return Err(Error::Mismatch("values and labels must have equal length >= 2".into()));
    }
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    let grand = mean(values);
    let stat = |lab: &[usize]| {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in values.iter().zip(lab) {
            sums[l] += v - grand;
            counts[l] += 1;
        }
        sums.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(s, &c)| s * s / c as f64).sum::<f64>()
    };
    let observed = stat(labels);
    let mut rng = RngStream::new(seed, 0);
    let mut perm = labels.to_vec();
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if stat(&perm) >= observed {
            exceed += 1;
        }
    }
    Ok(TestOutcome { statistic: observed, p_value: (exceed + 1) as f64 / (n_perm + 1) as f64 })
}

/// Plug-in mutual information (nats) between two discrete labelings.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().copied().max().unwrap_or(0) + 1;
    let kb = b.iter().copied().max().unwrap_or(0) + 1;
    let n = a.len() as f64;
    let mut joint = vec![0.0; ka * kb];
    let mut pa = vec![0.0; ka];
    let mut pb = vec![0.0; kb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * kb + j] += 1.0 / n;
        pa[i] += 1.0 / n;
        pb[j] += 1.0 / n;
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let pij = joint[i * kb + j];
            if pij > 0.0 {
                mi += pij * (pij / (pa[i] * pb[j])).ln();
            }
        }
    }
    mi
}
