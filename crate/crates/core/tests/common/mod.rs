//! Reference implementations used as oracles by the integration tests.
//!
//! Nothing here calls into the estimator code paths it checks: the Dempster
//! oracle works on dense mass vectors, the EM oracle in plain linear
//! arithmetic, and the M-step oracle maximizes Q numerically.
#![allow(dead_code)]

use e2m_core::censoring::{run_life_test, CensoringScheme};
use e2m_core::{CensoredDataset, ContourFunction, MixtureParams, SoftLabeledDataset};
use rand::Rng;

/// Adaptive Simpson quadrature of `f` over [a, b].
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// The Rayleigh density written out independently of the library.
pub fn rayleigh_pdf(xi: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    xi * xi * x * (-0.5 * xi * xi * x * x).exp()
}

/// ∫_y^∞ g(x) dx for integrands with Rayleigh-like tails of parameter ξ.
pub fn tail_integral(g: &dyn Fn(f64) -> f64, y: f64, xi: f64, tol: f64) -> f64 {
    // exp(−ξ²x²/2) is negligible beyond y + 40/ξ.
    let upper = y + 40.0 / xi;
    // Split the range so the adaptive rule sees the mass near y.
    let mid = y + 4.0 / xi;
    integrate(g, y, mid, tol) + integrate(g, mid, upper, tol)
}

/// Dense mass vector indexed by bitmask over a frame of `p` labels.
pub type DenseMass = Vec<f64>;

/// Conjunctive combination over the full power set, then normalization.
pub fn power_set_dempster(m1: &DenseMass, m2: &DenseMass) -> (DenseMass, f64) {
    let size = m1.len();
    let mut out = vec![0.0; size];
    for a in 0..size {
        for b in 0..size {
            out[a & b] += m1[a] * m2[b];
        }
    }
    let k = out[0];
    out[0] = 0.0;
    for v in out.iter_mut() {
        *v /= 1.0 - k;
    }
    (out, k)
}

pub fn dense_contour(m: &DenseMass, p: usize) -> Vec<f64> {
    (0..p)
        .map(|z| {
            (0..m.len())
                .filter(|a| a >> z & 1 == 1)
                .map(|a| m[a])
                .sum()
        })
        .collect()
}

/// A random bba on 2^p with a handful of nonempty focal sets.
pub fn random_dense_mass<R: Rng>(p: usize, rng: &mut R) -> DenseMass {
    let size = 1usize << p;
    let mut m = vec![0.0; size];
    let focal = rng.random_range(1..=size - 1);
    for _ in 0..focal {
        let a = rng.random_range(1..size);
        m[a] += rng.random::<f64>() + 1e-3;
    }
    let total: f64 = m.iter().sum();
    m.iter_mut().for_each(|v| *v /= total);
    m
}

pub fn random_probability<R: Rng>(p: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// One E/M iteration of classical censored-mixture EM, in linear arithmetic,
/// without any belief-function machinery.
pub fn classical_em_step(times: &[f64], observed: &[bool], lambdas: &[f64], xis: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = lambdas.len();
    let n = times.len();
    let mut mass = vec![0.0; p];
    let mut denom = vec![0.0; p];
    for (&y, &obs) in times.iter().zip(observed) {
        let weights: Vec<f64> = (0..p)
            .map(|z| {
                let g = if obs {
                    rayleigh_pdf(xis[z], y)
                } else {
                    (-0.5 * xis[z] * xis[z] * y * y).exp()
                };
                lambdas[z] * g
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for z in 0..p {
            let w = weights[z] / total;
            mass[z] += w;
            denom[z] += if obs {
                w * y * y
            } else {
                w * (y * y + 2.0 / (xis[z] * xis[z]))
            };
        }
    }
    let new_l = mass.iter().map(|m| m / n as f64).collect();
    let new_x = (0..p).map(|z| (2.0 * mass[z] / denom[z]).sqrt()).collect();
    (new_l, new_x)
}

/// Golden-section search for the maximum of a unimodal `f` on [lo, hi].
pub fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
        if (hi - lo) <= 1e-15 * (lo.abs() + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Maximizes Σ_z a_z ln λ_z over the simplex by projected gradient ascent
/// with backtracking.
pub fn maximize_weights_on_simplex(a: &[f64]) -> Vec<f64> {
    let objective = |l: &[f64]| -> f64 {
        a.iter()
            .zip(l)
            .map(|(&ai, &li)| if li > 0.0 { ai * li.ln() } else { f64::NEG_INFINITY })
            .sum()
    };
    let p = a.len();
    let mut lambda = vec![1.0 / p as f64; p];
    let mut value = objective(&lambda);
    let mut step = 1e-3;
    for _ in 0..200_000 {
        let grad: Vec<f64> = a.iter().zip(&lambda).map(|(ai, li)| ai / li).collect();
        let mut accepted = false;
        let mut trial_step = step;
        for _ in 0..60 {
            let cand: Vec<f64> = lambda
                .iter()
                .zip(&grad)
                .map(|(l, g)| l + trial_step * g)
                .collect();
            let cand = project_simplex(&cand);
            let v = objective(&cand);
            if v > value {
                let moved: f64 = cand.iter().zip(&lambda).map(|(x, y)| (x - y).abs()).sum();
                lambda = cand;
                value = v;
                accepted = true;
                step = trial_step * 2.0;
                if moved < 1e-16 {
                    return lambda;
                }
                break;
            }
            trial_step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    lambda
}

/// The parts of Q(θ, θᵏ) that depend on ξ_z for a fixed posterior column.
///
/// Observed records contribute W·ln f(y; ξ); censored ones contribute
/// W·E_k[ln f(X; ξ) | X > y] = W·(2 ln ξ + E_k[ln X | X > y] − ξ²/2 · E_k[X² | X > y]),
/// whose middle term does not depend on ξ and is dropped.
pub fn q_component(
    xi: f64,
    xi_current: f64,
    times: &[f64],
    observed: &[bool],
    weights: &[f64],
) -> f64 {
    let mut total = 0.0;
    for ((&y, &obs), &w) in times.iter().zip(observed).zip(weights) {
        if obs {
            total += w * (2.0 * xi.ln() + y.ln() - 0.5 * xi * xi * y * y);
        } else {
            let second = y * y + 2.0 / (xi_current * xi_current);
            total += w * (2.0 * xi.ln() - 0.5 * xi * xi * second);
        }
    }
    total
}

/// A random soft-labeled censored sample for property checks.
pub struct Instance {
    pub ds: SoftLabeledDataset,
    pub truth: MixtureParams,
}

pub fn random_params<R: Rng>(p: usize, rng: &mut R) -> MixtureParams {
    let lambdas = random_probability(p, rng);
    let xis = (0..p).map(|_| rng.random_range(0.4..3.0)).collect();
    MixtureParams::new(lambdas, xis).unwrap()
}

pub fn random_dataset<R: Rng>(truth: &MixtureParams, n: usize, censor_frac: f64, rng: &mut R) -> CensoredDataset {
    let scheme = if censor_frac == 0.0 {
        CensoringScheme::new(n, n, vec![0; n]).unwrap()
    } else {
        // Spread the withdrawals over the plan rather than only at the end.
        let j = ((n as f64) * (1.0 - censor_frac)).ceil() as usize;
        let mut removals = vec![0usize; j];
        for _ in 0..(n - j) {
            removals[rng.random_range(0..j)] += 1;
        }
        CensoringScheme::new(n, j, removals).unwrap()
    };
    let units = truth.sample_labeled(n, rng);
    run_life_test(&units, &scheme, rng).unwrap()
}

pub fn random_contours<R: Rng>(n: usize, p: usize, rng: &mut R) -> Vec<ContourFunction> {
    (0..n)
        .map(|_| {
            let mut pl: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let top = rng.random_range(0..p);
            pl[top] = pl[top].max(0.05);
            ContourFunction::new(pl).unwrap()
        })
        .collect()
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let p = rng.random_range(2..=3);
    let n = rng.random_range(20..=200);
    let censor = if rng.random::<bool>() { 0.0 } else { 0.4 };
    let truth = random_params(p, rng);
    let data = random_dataset(&truth, n, censor, rng);
    let labels = random_contours(n, p, rng);
    Instance {
        ds: SoftLabeledDataset::new(data, labels).unwrap(),
        truth,
    }
}

pub fn times_and_status(data: &CensoredDataset) -> (Vec<f64>, Vec<bool>) {
    data.records()
        .iter()
        .map(|r| (r.y_star, r.is_observed()))
        .unzip()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
