//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. `ACCEPTANCE_ONLY=5,7` runs a subset.

use std::time::{Duration, Instant};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use hrflow_core::events::{decluster, madogram_theta, DailyPanel};
use hrflow_core::fit::{bootstrap_se, fit_dependence, FitConfig, FitMethod};
use hrflow_core::hr_core::{exponent_measure_v, CensoredTerm, HrEvaluator};
use hrflow_core::kernels::{hr_structure, HrStructure, KernelVariant};
use hrflow_core::margins::{fit_station, GevParams};
use hrflow_core::mvn::MvnOptions;
use hrflow_core::risk::{joint_exceedance, joint_measure_exact, Level, RiskOptions, RiskQuery, SiteMargin};
use hrflow_core::simulate::{sample_hr, sample_pareto, sample_tail_events};
use hrflow_core::stats::{ks_one_sample, ks_two_sample};
use hrflow_core::toy::{toy_basin, toy_params};

type Check = Result<String, String>;

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn biv_v(g: f64, x: f64, y: f64) -> f64 {
    let a = g.sqrt();
    phi(a / 2.0 + (y / x).ln() / a) / x + phi(a / 2.0 + (x / y).ln() / a) / y
}

/// Γ_ij = λ‖p_i − p_j‖^α for random planar points.
fn fractal_gamma(m: usize, rng: &mut ChaCha8Rng) -> HrStructure {
    let lam = 0.3 + 2.0 * rng.random::<f64>();
    let alpha = 0.5 + 1.4 * rng.random::<f64>();
    let pts: Vec<[f64; 2]> = (0..m).map(|_| [rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0]).collect();
    let g = DMatrix::from_fn(m, m, |i, j| {
        let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
        lam * d.powf(alpha)
    });
    HrStructure::from_gamma(g).unwrap()
}

/// Three stations at least 0.5 apart, so that no pair is nearly
/// coincident and the finite differences stay well conditioned.
fn separated_gamma(rng: &mut ChaCha8Rng) -> HrStructure {
    loop {
        let pts: Vec<[f64; 2]> = (0..3).map(|_| [rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0]).collect();
        let d = |i: usize, j: usize| ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
        if d(0, 1).min(d(0, 2)).min(d(1, 2)) < 0.5 {
            continue;
        }
        let lam = 0.5 + 1.5 * rng.random::<f64>();
        let alpha = 0.5 + 1.4 * rng.random::<f64>();
        let g = DMatrix::from_fn(3, 3, |i, j| lam * d(i, j).powf(alpha));
        return HrStructure::from_gamma(g).unwrap();
    }
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn criterion_1() -> Check {
    let mut worst = 0.0_f64;
    for g in [0.1, 1.0, 4.0, 25.0] {
        let hr = HrStructure::from_gamma(DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0])).unwrap();
        for x in [0.5, 1.0, 5.0] {
            for y in [0.5, 1.0, 5.0] {
                let v = exponent_measure_v(&hr, &[x, y]).map_err(|e| e.to_string())?;
                let oracle = -(-biv_v(g, x, y)).exp().ln();
                worst = worst.max((v - oracle).abs());
            }
        }
    }
    ensure(worst <= 1e-10, format!("bivariate max error {worst:.2e}"))?;

    // m = 3: V(x) = E max_j exp(W_j − Γ_j1/2)/x_j with W ~ N(0, Σ^{(1)}), W_1 = 0.
    let g = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.2, 1.0, 0.0, 0.7, 2.2, 0.7, 0.0]);
    let hr = HrStructure::from_gamma(g.clone()).unwrap();
    let s = DMatrix::from_fn(2, 2, |i, j| 0.5 * (g[(i + 1, 0)] + g[(j + 1, 0)] - g[(i + 1, j + 1)]));
    let l = s.cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 1_000_000;
    let mut report = Vec::new();
    for x in [[1.0, 1.0, 1.0], [0.5, 2.0, 3.0]] {
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let z1: f64 = rng.sample(rand_distr::StandardNormal);
            let z2: f64 = rng.sample(rand_distr::StandardNormal);
            let w = [0.0, l[(0, 0)] * z1, l[(1, 0)] * z1 + l[(1, 1)] * z2];
            let v = (0..3)
                .map(|j| (w[j] - g[(j, 0)] / 2.0).exp() / x[j])
                .fold(0.0, f64::max);
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        let v = exponent_measure_v(&hr, &x).map_err(|e| e.to_string())?;
        ensure((v - mean).abs() <= 3.0 * se, format!("m=3 at {x:?}: V {v:.6} vs MC {mean:.6} ± {se:.1e}"))?;
        report.push(format!("{:.2}se", (v - mean).abs() / se));
    }
    Ok(format!("bivariate max error {worst:.1e}; trivariate MC deviations {}", report.join(", ")))
}

fn fd_step(ev: &HrEvaluator, x: &[f64], u: &[f64], k: &[usize], rel: f64) -> f64 {
    let hs: Vec<f64> = k.iter().map(|&j| rel * x[j]).collect();
    let mut total = 0.0;
    for mask in 0..(1u32 << k.len()) {
        let mut z: Vec<f64> = (0..x.len()).map(|j| if k.contains(&j) { x[j] } else { u[j] }).collect();
        let mut sign = 1.0;
        for (i, &j) in k.iter().enumerate() {
            if mask & (1 << i) != 0 {
                z[j] += hs[i];
            } else {
                z[j] -= hs[i];
                sign = -sign;
            }
        }
        total += sign * ev.exponent_measure(&z).unwrap();
    }
    -total / hs.iter().map(|h| 2.0 * h).product::<f64>()
}

/// Mixed central differences with two Richardson steps.
fn fd_density(ev: &HrEvaluator, x: &[f64], u: &[f64], k: &[usize]) -> f64 {
    let d: Vec<f64> = [4e-2, 2e-2, 1e-2].iter().map(|r| fd_step(ev, x, u, k, *r)).collect();
    let r1 = (4.0 * d[1] - d[0]) / 3.0;
    let r2 = (4.0 * d[2] - d[1]) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let ev = HrEvaluator::with_defaults(separated_gamma(&mut rng));
        let u: Vec<f64> = (0..3).map(|_| 1.0 + 4.0 * rng.random::<f64>()).collect();
        let hi: Vec<f64> = u.iter().map(|v| v * (1.1 + 1.4 * rng.random::<f64>())).collect();
        let lo: Vec<f64> = u.iter().map(|v| v * (0.2 + 0.6 * rng.random::<f64>())).collect();
        for mask in 1u32..8 {
            let k: Vec<usize> = (0..3).filter(|j| mask & (1 << j) != 0).collect();
            let x: Vec<f64> = (0..3).map(|j| if k.contains(&j) { hi[j] } else { lo[j] }).collect();
            let term = CensoredTerm::new(x.clone(), u.clone()).map_err(|e| e.to_string())?;
            let c = ev.censored_density(&term).map_err(|e| e.to_string())?;
            let fd = fd_density(&ev, &x, &u, &k);
            let rel = (c - fd).abs() / fd.abs();
            worst = worst.max(rel);
            ensure(rel <= 1e-4, format!("K={k:?}: density {c:.6e} vs FD {fd:.6e} (rel {rel:.1e})"))?;
        }
    }
    Ok(format!("140 cases, worst relative error {worst:.1e}"))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut hom, mut marg, mut perm, mut anchor) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for m in [2, 3, 5, 10] {
        for _ in 0..3 {
            let hr = fractal_gamma(m, &mut rng);
            let ev = HrEvaluator::with_defaults(hr.clone());
            let x: Vec<f64> = (0..m).map(|_| 0.3 + 5.0 * rng.random::<f64>()).collect();
            let v = ev.exponent_measure(&x).map_err(|e| e.to_string())?;
            for lam in [0.1, 3.0, 40.0] {
                let xs: Vec<f64> = x.iter().map(|a| a * lam).collect();
                let vs = ev.exponent_measure(&xs).map_err(|e| e.to_string())?;
                hom = hom.max((vs - v / lam).abs() / (v / lam));
            }
            for j in 0..m {
                let mut z = vec![f64::INFINITY; m];
                z[j] = x[j];
                marg = marg.max((ev.exponent_measure(&z).map_err(|e| e.to_string())? - 1.0 / x[j]).abs());
            }
            let mut p: Vec<usize> = (0..m).collect();
            p.rotate_left(1 + m / 2);
            p.swap(0, m - 1);
            let xp: Vec<f64> = p.iter().map(|&i| x[i]).collect();
            let vp = exponent_measure_v(&hr.restrict(&p), &xp).map_err(|e| e.to_string())?;
            perm = perm.max((v - vp).abs());
            let w: Vec<f64> = x.iter().map(|a| a / x.iter().sum::<f64>()).collect();
            let l0 = ev.log_spectral_density_anchored(&w, 0).map_err(|e| e.to_string())?;
            for k in 1..m {
                let lk = ev.log_spectral_density_anchored(&w, k).map_err(|e| e.to_string())?;
                anchor = anchor.max(((lk - l0).exp() - 1.0).abs());
            }
        }
    }
    ensure(hom <= 1e-9, format!("homogeneity error {hom:.1e}"))?;
    ensure(marg <= 1e-9, format!("marginal error {marg:.1e}"))?;
    ensure(perm <= 1e-8, format!("permutation error {perm:.1e}"))?;
    ensure(anchor <= 1e-8, format!("anchor error {anchor:.1e}"))?;
    Ok(format!(
        "homogeneity {hom:.1e}, margins {marg:.1e}, permutation {perm:.1e}, anchor {anchor:.1e}"
    ))
}

fn criterion_4() -> Check {
    let frechet = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hr = fractal_gamma(3, &mut rng);
    let draws = sample_hr(&hr, 100_000, 41).map_err(|e| e.to_string())?;
    let mut ks_min = 1.0_f64;
    for j in 0..3 {
        let col: Vec<f64> = draws.iter().map(|r| r[j]).collect();
        let ks = ks_one_sample(&col, frechet).map_err(|e| e.to_string())?;
        ks_min = ks_min.min(ks.p_value);
    }
    ensure(ks_min > 0.01, format!("Fréchet KS p = {ks_min:.3}"))?;

    let mut worst = 0.0_f64;
    for (i, g) in [0.25, 1.0, 4.0, 9.0].into_iter().enumerate() {
        let hr = HrStructure::from_gamma(DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0])).unwrap();
        let d = sample_hr(&hr, 100_000, 400 + i as u64).map_err(|e| e.to_string())?;
        let a: Vec<f64> = d.iter().map(|r| r[0]).collect();
        let b: Vec<f64> = d.iter().map(|r| r[1]).collect();
        let th = madogram_theta(&a, &b, 20).map_err(|e| e.to_string())?;
        let model = 2.0 * phi(g.sqrt() / 2.0);
        worst = worst.max((th - model).abs());
    }
    ensure(worst <= 0.02, format!("madogram deviation {worst:.3}"))?;

    // Max-stability: componentwise maxima of k draws divided by k have the
    // law of a single draw; compare min_j of both.
    let k = 5;
    let blocks = 20_000;
    let many = sample_hr(&hr, blocks * k, 42).map_err(|e| e.to_string())?;
    let single = sample_hr(&hr, blocks, 43).map_err(|e| e.to_string())?;
    let a: Vec<f64> = many
        .chunks(k)
        .map(|c| (0..3).map(|j| c.iter().map(|r| r[j]).fold(0.0, f64::max) / k as f64).fold(f64::INFINITY, f64::min))
        .collect();
    let b: Vec<f64> = single.iter().map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
    let ks = ks_two_sample(&a, &b).map_err(|e| e.to_string())?;
    ensure(ks.p_value > 0.01, format!("max-stability KS p = {:.3}", ks.p_value))?;
    Ok(format!(
        "min margin KS p {ks_min:.3}, max madogram deviation {worst:.4}, max-stability KS p {:.3}",
        ks.p_value
    ))
}

fn criterion_5() -> Check {
    let (net, st) = toy_basin();
    let truth = toy_params();
    let hr = hr_structure(&truth, &net, &st).map_err(|e| e.to_string())?;
    let events = sample_tail_events(&hr, 500, 8.0, 2024).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for method in [FitMethod::Spectral, FitMethod::Censored] {
        let cfg = FitConfig {
            method,
            ..FitConfig::default()
        };
        let fit = fit_dependence(&cfg, &events, &net, &st, KernelVariant::Full).map_err(|e| e.to_string())?;
        let bs = bootstrap_se(&cfg, &events, &net, &st, &fit, 100, 7).map_err(|e| e.to_string())?;
        let mut parts = Vec::new();
        for (p, se) in fit.free_parameters().iter().zip(&bs.se) {
            let est = fit.estimate.get(*p);
            let t = truth.get(*p);
            let z = (est - t).abs() / se;
            parts.push(format!("{}={est:.3e}({z:.1}se)", p.name()));
            ensure(
                z <= 3.0,
                format!("{method:?}: {} = {est:.4e} vs {t:.4e}, SE {se:.2e}", p.name()),
            )?;
        }
        lines.push(format!("{method:?} [{}] failed {}", parts.join(" "), bs.failed));
    }
    Ok(lines.join("; "))
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let per_year = 92;
    let years = 50;
    let mut parts = Vec::new();
    for xi in [-0.1, 0.0, 0.03, 0.15, 0.3] {
        let truth = GevParams::new(100.0, 25.0, xi).map_err(|e| e.to_string())?;
        // Daily values whose annual maximum is GEV: F = G^{1/92}.
        let vals: Vec<f64> = (0..years * per_year)
            .map(|_| {
                let u: f64 = rng.random::<f64>().max(1e-300);
                truth.quantile(u.powi(per_year).max(1e-300)).unwrap()
            })
            .collect();
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        let q = sorted[(0.9 * sorted.len() as f64) as usize];
        let ex: Vec<f64> = vals.into_iter().filter(|v| *v > q).collect();
        let fit = fit_station(&ex, q, years as f64).map_err(|e| e.to_string())?;
        let z = [
            (fit.gev.loc - truth.loc).abs() / fit.se[0],
            (fit.gev.scale - truth.scale).abs() / fit.se[1],
            (fit.gev.shape - truth.shape).abs() / fit.se[2],
        ];
        ensure(z.iter().all(|v| *v <= 3.0), format!("ξ = {xi}: {:?} with SEs {:?}", fit.gev, fit.se))?;
        parts.push(format!("ξ={xi}: {:.1}/{:.1}/{:.1}se", z[0], z[1], z[2]));
    }
    Ok(parts.join(", "))
}

fn criterion_7() -> Check {
    let mvn = MvnOptions {
        abs_tol: 1e-9,
        ..MvnOptions::default()
    };
    let mut worst = 0.0_f64;
    for g in [0.1, 1.0, 4.0, 25.0] {
        let hr = HrStructure::from_gamma(DMatrix::from_row_slice(2, 2, &[0.0, g, g, 0.0])).unwrap();
        for (x, y) in [(1.0, 1.0), (2.0, 7.0), (30.0, 4.0), (100.0, 100.0)] {
            let (v, _) = joint_measure_exact(&hr, &[x, y], &mvn).map_err(|e| e.to_string())?;
            worst = worst.max((v - (1.0 / x + 1.0 / y - biv_v(g, x, y))).abs());
        }
    }
    ensure(worst <= 1e-8, format!("k=2 deviation {worst:.1e}"))?;

    let (net, st) = toy_basin();
    let hr = hr_structure(&toy_params(), &net, &st).map_err(|e| e.to_string())?;
    let opts = RiskOptions::default();
    let unit = GevParams::new(1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for (t, trip) in [[0usize, 2, 5], [3, 4, 6], [1, 7, 9]].iter().enumerate() {
        let sub = hr.restrict(trip);
        let v1 = HrEvaluator::new(sub.clone(), mvn.clone())
            .exponent_measure(&[1.0; 3])
            .map_err(|e| e.to_string())?;
        let draws = sample_pareto(&sub, 100_000, 70 + t as u64).map_err(|e| e.to_string())?;
        for p in [0.9, 0.95] {
            let q = RiskQuery {
                sites: trip
                    .iter()
                    .map(|&i| SiteMargin {
                        id: st.get(i).id.clone(),
                        gev: unit,
                        threshold: None,
                    })
                    .collect(),
                levels: vec![Level::Quantile(p); 3],
                events_per_year: v1,
            };
            let r = joint_exceedance(&sub, &q, &opts).map_err(|e| e.to_string())?;
            let u = 1.0 / ((1.0 - p) * v1);
            let hits = draws.iter().filter(|x| x.iter().all(|v| *v > u)).count();
            let emp = hits as f64 / draws.len() as f64;
            let se = (r.per_event * (1.0 - r.per_event) / draws.len() as f64).sqrt();
            ensure(
                (emp - r.per_event).abs() <= 3.0 * se,
                format!("triplet {trip:?} p={p}: model {:.5} vs empirical {emp:.5}", r.per_event),
            )?;
            parts.push(format!("{:.1}se", (emp - r.per_event).abs() / se));
        }
    }
    Ok(format!("k=2 deviation {worst:.1e}; k=3 deviations {}", parts.join(" ")))
}

fn criterion_8() -> Check {
    let (net, st) = toy_basin();
    let truth = toy_params();
    let hr = hr_structure(&truth, &net, &st).map_err(|e| e.to_string())?;
    let events = sample_tail_events(&hr, 500, 8.0, 88).map_err(|e| e.to_string())?;
    let cfg = FitConfig::default();
    let mut ll = Vec::new();
    for v in KernelVariant::ALL {
        let fit = fit_dependence(&cfg, &events, &net, &st, v).map_err(|e| e.to_string())?;
        ll.push(fit.loglik);
    }
    let msg = format!("Γ1 {:.2}, Γ2 {:.2}, Γ3 {:.2}, Γ4 {:.2}", ll[0], ll[1], ll[2], ll[3]);
    ensure(ll[2] > ll[3] && ll[2] > ll[1] && ll[1] > ll[0], msg.clone())?;
    Ok(msg)
}

fn panel(columns: &[Vec<f64>], block_len: usize) -> DailyPanel {
    let n = columns[0].len();
    let mut dates = Vec::new();
    let mut blocks = Vec::new();
    for i in 0..n {
        let b = (i / block_len) as i32;
        dates.push(NaiveDate::from_ymd_opt(2000 + b, 6, 1).unwrap() + chrono::Days::new((i % block_len) as u64));
        blocks.push(2000 + b);
    }
    let values = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let ids = (0..columns.len()).map(|j| format!("S{j}")).collect();
    DailyPanel::new(ids, dates, blocks, values).unwrap()
}

fn criterion_9() -> Check {
    // Isolated spike.
    let mut a = vec![1.0; 30];
    a[12] = 50.0;
    let b: Vec<f64> = (0..30).map(|i| 1.0 + 0.001 * i as f64).collect();
    let ev = decluster(&panel(&[a, b], 30), 9, 1).map_err(|e| e.to_string())?;
    let spikes: Vec<_> = ev.events.iter().filter(|e| e.values[0] == 50.0).collect();
    ensure(
        spikes.len() == 1 && (spikes[0].start, spikes[0].len, spikes[0].center) == (8, 9, 12),
        format!("spike windows {:?}", spikes.iter().map(|e| (e.start, e.len)).collect::<Vec<_>>()),
    )?;

    // Two spikes on a decreasing background, one block of 40 days, p = 9.
    let mut a: Vec<f64> = (0..40).map(|i| 100.0 - i as f64).collect();
    a[5] = 500.0;
    a[23] = 400.0;
    let ev = decluster(&panel(&[a], 40), 9, 7).map_err(|e| e.to_string())?;
    let w: Vec<(usize, usize, usize, f64)> = ev.events.iter().map(|e| (e.start, e.len, e.center, e.values[0])).collect();
    let expected = vec![(1, 9, 5, 500.0), (10, 5, 10, 90.0), (19, 9, 23, 400.0), (28, 5, 28, 72.0)];
    ensure(w == expected, format!("windows {w:?}"))?;

    // Ties: a fixed seed reproduces, another seed differs.
    let flat = panel(&[vec![1.0; 60], vec![1.0; 60]], 60);
    let e1 = decluster(&flat, 7, 11).map_err(|e| e.to_string())?;
    let e2 = decluster(&flat, 7, 11).map_err(|e| e.to_string())?;
    let e3 = decluster(&flat, 7, 12).map_err(|e| e.to_string())?;
    ensure(e1 == e2, "same seed gave different events".into())?;
    ensure(e1.events != e3.events, "tie-breaking ignores the seed".into())?;
    Ok("spike, two-spike and tie cases reproduced".into())
}

type Criterion = (usize, &'static str, Duration, fn() -> Check);

fn main() {
    let all: [Criterion; 9] = [
        (1, "HR closed form", Duration::from_secs(60), criterion_1),
        (2, "censored density derivative", Duration::from_secs(60), criterion_2),
        (3, "homogeneity and margins", Duration::MAX, criterion_3),
        (4, "simulation fidelity", Duration::from_secs(300), criterion_4),
        (5, "estimator recovery", Duration::from_secs(1800), criterion_5),
        (6, "marginal recovery", Duration::from_secs(120), criterion_6),
        (7, "risk chain", Duration::from_secs(300), criterion_7),
        (8, "model ordering", Duration::from_secs(3600), criterion_8),
        (9, "declustering", Duration::from_secs(1), criterion_9),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, budget, f) in all {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let res = f();
        let el = t.elapsed();
        let res = match res {
            Ok(m) if el > budget => Err(format!("{m}; over the time budget")),
            r => r,
        };
        match res {
            Ok(m) => println!("PASS {id} {name} ({:.1}s): {m}", el.as_secs_f64()),
            Err(m) => {
                failed += 1;
                println!("FAIL {id} {name} ({:.1}s): {m}", el.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
