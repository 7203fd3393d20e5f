//! Adaptive Gauss–Kronrod (7/15) quadrature and a helper for integrals of
//! `exp(h(u))` with a sharply peaked log-integrand.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 2000;

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`, bisecting
/// the interval with the largest error estimate.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<Integral> {
    let mut pieces = vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integral on [{a}, {b}]")));
        }
        if error <= rel_tol * value.abs() || error < f64::MIN_POSITIVE {
            return Ok(Integral {
                value,
                error,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "{} subintervals on [{a}, {b}]: value {value:e}, error estimate {error:e}, tolerance {rel_tol:e}",
                pieces.len()
            )));
        }
        let worst = (0..pieces.len())
            .max_by(|&i, &j| pieces[i].3.total_cmp(&pieces[j].3))
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// `log ∫ exp(h(u)) du` over `[lo, hi]` for a log-integrand with one
/// dominant peak.
///
/// The peak is located on a coarse grid over the range plus a fine grid of
/// width `scale_hint` around `center_hint`, refined by golden-section
/// search, and the integration window is grown from the peak until `h`
/// drops 45 nats below its maximum.
pub fn log_integrate_exp(
    h: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    center_hint: f64,
    scale_hint: f64,
    rel_tol: f64,
) -> Result<f64> {
    let coarse = 400;
    let mut candidates: Vec<f64> = (0..=coarse)
        .map(|i| lo + (hi - lo) * i as f64 / coarse as f64)
        .collect();
    if center_hint.is_finite() && scale_hint > 0.0 {
        candidates.extend((-40..=40).map(|i| center_hint + scale_hint * i as f64 * 0.25));
    }
    candidates.retain(|u| *u >= lo && *u <= hi);
    candidates.sort_by(f64::total_cmp);
    let vals: Vec<f64> = candidates.iter().map(|&u| h(u)).collect();
    let best = (0..vals.len())
        .filter(|&i| vals[i].is_finite())
        .max_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .ok_or_else(|| Error::Quadrature("log-integrand is nowhere finite".into()))?;
    let left = candidates[best.saturating_sub(1)];
    let right = candidates[(best + 1).min(candidates.len() - 1)];
    let peak = golden_max(&h, left, right);
    let hmax = h(peak);
    if !hmax.is_finite() {
        return Err(Error::Quadrature(format!(
            "log-integrand not finite at its peak u = {peak}"
        )));
    }

    // local width from curvature, used as the first step when expanding
    let step0 = {
        let d = (right - left).max(1e-12) * 1e-3;
        let curv = (h(peak + d) - 2.0 * hmax + h(peak - d)) / (d * d);
        if curv < 0.0 && curv.is_finite() {
            (1.0 / (-curv).sqrt()).min(hi - lo)
        } else {
            (right - left).max(1e-6)
        }
    };
    let threshold = hmax - 45.0;
    let expand = |dir: f64| -> f64 {
        let mut step = step0;
        let mut u = peak;
        loop {
            let next = (u + dir * step).clamp(lo, hi);
            if next == u || h(next) < threshold || !h(next).is_finite() {
                return next;
            }
            u = next;
            step *= 1.6;
        }
    };
    let a = expand(-1.0);
    let b = expand(1.0);
    let f = |u: f64| {
        let v = h(u) - hmax;
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    };
    let left_part = integrate(f, a, peak, rel_tol)?;
    let right_part = integrate(f, peak, b, rel_tol)?;
    Ok(hmax + (left_part.value + right_part.value).ln())
}

fn golden_max(h: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = h(d);
        }
    }
    0.5 * (a + b)
}
