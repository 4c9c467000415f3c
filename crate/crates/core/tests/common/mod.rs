//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use dashu_float::FBig;

/// Working precision of the oracle, in bits.
pub const BITS: usize = 320;

pub type Big = FBig;

pub fn big(x: f64) -> Big {
    Big::try_from(x).expect("finite").with_precision(BITS).value()
}

pub fn to_f64(x: &Big) -> f64 {
    x.to_f64().value()
}

fn exp_neg(r: &Big) -> Big {
    (-r.clone()).exp()
}

/// `(1 - e^{-r}) / r` straight from its definition.
pub fn phi1(rho: f64) -> f64 {
    if rho == 0.0 {
        return 1.0;
    }
    let r = big(rho);
    to_f64(&((big(1.0) - exp_neg(&r)) / r))
}

/// `3 / (2 r^3) (2 r - 3 + 4 e^{-r} - e^{-2r})`.
pub fn phi2(rho: f64) -> f64 {
    if rho == 0.0 {
        return 1.0;
    }
    let r = big(rho);
    let e = exp_neg(&r);
    let bracket = big(2.0) * r.clone() - big(3.0) + big(4.0) * e.clone() - e.clone() * e;
    to_f64(&(big(1.5) * bracket / (r.clone() * r.clone() * r)))
}

/// `4 Phi2(r) Phi1(2r) - 3 Phi1(r)^4`, both factors in extended precision.
pub fn phi_det(rho: f64) -> f64 {
    if rho == 0.0 {
        return 1.0;
    }
    let r = big(rho);
    let e = exp_neg(&r);
    let r3 = r.clone() * r.clone() * r.clone();
    let p1 = (big(1.0) - e.clone()) / r.clone();
    let p1_2 = (big(1.0) - e.clone() * e.clone()) / (big(2.0) * r.clone());
    let p2 = big(1.5) * (big(2.0) * r.clone() - big(3.0) + big(4.0) * e.clone() - e.clone() * e) / r3;
    let p1_sq = p1.clone() * p1;
    to_f64(&(big(4.0) * p2 * p1_2 - big(3.0) * p1_sq.clone() * p1_sq))
}

/// `c_qq c_pp - c_qp^2` of the force-free process, every entry built in
/// extended precision from its integral form.
pub fn moment_det(gamma: f64, sigma: f64, t: f64) -> f64 {
    let s2 = big(sigma) * big(sigma);
    let tt = big(t);
    let (qq, qp, pp) = if gamma == 0.0 {
        let t2 = tt.clone() * tt.clone();
        (s2.clone() * t2.clone() * tt.clone() / big(3.0), s2.clone() * t2 / big(2.0), s2 * tt)
    } else {
        let g = big(gamma);
        let e = exp_neg(&(g.clone() * tt.clone()));
        let one = big(1.0);
        let g2 = g.clone() * g.clone();
        // int_0^t of (1 - e^{-g s})^2 / g^2, (1 - e^{-g s}) e^{-g s} / g and e^{-2 g s}
        let qq = s2.clone() / g2.clone()
            * (tt.clone() - big(2.0) * (one.clone() - e.clone()) / g.clone()
                + (one.clone() - e.clone() * e.clone()) / (big(2.0) * g.clone()));
        let qp = s2.clone() * (one.clone() - e.clone()) * (one.clone() - e.clone()) / (big(2.0) * g2);
        let pp = s2 * (one - e.clone() * e) / (big(2.0) * g);
        (qq, qp, pp)
    };
    to_f64(&(qq * pp - qp.clone() * qp))
}

pub fn rel_err(x: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        x.abs()
    } else {
        ((x - reference) / reference).abs()
    }
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Composite 8-point Gauss-Legendre rule on `panels` equal panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .map(|k| {
            let c = lo + (k as f64 + 0.5) * h;
            GL8.iter().map(|(x, w)| w * f(c + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}
