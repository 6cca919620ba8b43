//! Acceptance runner: one PASS/FAIL line per criterion and a summary line.
//! A FAIL is reported, not fatal, so that the rest of `cargo test` still
//! runs; set `ACCEPTANCE_STRICT=1` to exit nonzero on any FAIL. Runs without
//! the libtest harness so the lines print in order and the heavy criteria
//! run one after another.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use copreg::asymptotics::{
    enumerate_cases_with_tail, limiting_hrmle, limiting_mle, limiting_msle, CovariateDesign, LimitOptions, TailRule,
};
use copreg::correlation::{CorrelationStructure, StructureKind};
use copreg::datagen::{simulate, CovariateScheme, SimDesign};
use copreg::estimate::{fit_sl, FitOptions, FitResult};
use copreg::harness::asymlimit::msle_lattice_size;
use copreg::harness::{cmd_simstudy, Config, Table};
use copreg::likelihood::{ModelSpec, ProbEngine, Theta};
use copreg::marginals::MarginalFamily;
use copreg::rectprob::{exchangeable_1d, mf_importance, GenzBretz, Rectangle, RqmcConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(n: usize, title: &str, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let t = Instant::now();
    let out = f().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
    println!(
        "criterion {n}: {} {title} [{:.1}s] {}",
        if out.pass { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64(),
        out.detail
    );
    out.pass
}

fn e<T>(r: copreg::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// Printed GB column of the equicorrelated rectangle table, indexed by
// (d, a, rho) in row order.
const RECT_TABLE: [(usize, f64, f64, f64); 27] = [
    (5, 1.0, 0.3, 0.176),
    (5, 1.0, 0.6, 0.266),
    (5, 1.0, 0.8, 0.391),
    (5, 2.0, 0.3, 0.808),
    (5, 2.0, 0.6, 0.847),
    (5, 2.0, 0.8, 0.883),
    (5, 4.0, 0.3, 1.000),
    (5, 4.0, 0.6, 1.000),
    (5, 4.0, 0.8, 1.000),
    (10, 1.0, 0.3, 0.038),
    (10, 1.0, 0.6, 0.110),
    (10, 1.0, 0.8, 0.267),
    (10, 2.0, 0.3, 0.674),
    (10, 2.0, 0.6, 0.768),
    (10, 2.0, 0.8, 0.840),
    (10, 4.0, 0.3, 0.999),
    (10, 4.0, 0.6, 0.999),
    (10, 4.0, 0.8, 1.000),
    (20, 1.0, 0.3, 0.002),
    (20, 1.0, 0.6, 0.024),
    (20, 1.0, 0.8, 0.156),
    (20, 2.0, 0.3, 0.493),
    (20, 2.0, 0.6, 0.670),
    (20, 2.0, 0.8, 0.792),
    (20, 4.0, 0.3, 0.999),
    (20, 4.0, 0.6, 0.999),
    (20, 4.0, 0.8, 0.999),
];

fn exch_chol(rho: f64, d: usize) -> Result<copreg::correlation::CholeskyFactor, String> {
    e(CorrelationStructure::scalar(StructureKind::Exchangeable, rho, d, None).and_then(|s| s.cholesky()))
}

fn criterion_1() -> Result<Outcome, String> {
    let start = Instant::now();
    let gb = e(GenzBretz::new(RqmcConfig { lattice_size: 1021, ..RqmcConfig::with_seed(2013) }, 20))?;
    let mut worst_gb = 0.0f64;
    let mut worst_exact = 0.0f64;
    let mut bad = Vec::new();
    for &(d, a, rho, printed) in &RECT_TABLE {
        let rect = Rectangle::symmetric(a, d);
        let p = e(gb.probability(&rect, &exch_chol(rho, d)?))?;
        let exact = e(exchangeable_1d(&rect, rho))?.value;
        let tol = (3.0 * p.std_error).max(0.002);
        worst_gb = worst_gb.max((p.value - printed).abs());
        worst_exact = worst_exact.max((exact - printed).abs());
        if (p.value - printed).abs() > tol || (exact - printed).abs() > 5e-4 {
            bad.push(format!("(d={d}, a={a}, rho={rho}: gb {:.4}, exact {exact:.5}, printed {printed})", p.value));
        }
    }
    let elapsed = start.elapsed();
    Ok(Outcome {
        pass: bad.is_empty() && elapsed < Duration::from_secs(60),
        detail: format!(
            "27 cells; max |gb - printed| = {worst_gb:.4}, max |exact - printed| = {worst_exact:.5}{}",
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join(" ")) }
        ),
    })
}

fn criterion_2() -> Result<Outcome, String> {
    let (d, a, rho, m) = (20, 4.0, 0.8, 1000);
    let rect = Rectangle::symmetric(a, d);
    let structure = e(CorrelationStructure::scalar(StructureKind::Exchangeable, rho, d, None))?;
    let r = e(structure.build_matrix())?;
    let exact = e(exchangeable_1d(&rect, rho))?.value;
    let mut wide = 0;
    let mut ratio_ok = 0;
    let mut sds = Vec::new();
    for seed in 0..10u64 {
        let mf = e(mf_importance(&rect, &r, m, seed))?;
        let chol = exch_chol(rho, d)?;
        let gb = e(GenzBretz::new(RqmcConfig::with_seed(seed), d).and_then(|g| g.probability(&rect, &chol)))?;
        let (err_mf, err_gb) = ((mf.value - exact).abs(), (gb.value - exact).abs());
        wide += (mf.std_error >= 0.1) as usize;
        ratio_ok += (err_mf >= 20.0 * err_gb) as usize;
        sds.push(format!("{:.3}", mf.std_error));
    }
    Ok(Outcome {
        pass: wide >= 8 && ratio_ok == 10,
        detail: format!("exact {exact:.5}; MF SD >= 0.1 in {wide}/10 seeds; MF error >= 20x GB error in {ratio_ok}/10; SDs [{}]", sds.join(", ")),
    })
}

// Limiting HR estimates by row: (rho^HR, beta0^HR, beta1^HR, gamma^HR).
const HR_LOGISTIC: [(usize, f64, [f64; 3]); 9] = [
    (2, 0.3, [0.120, -0.499, 0.499]),
    (2, 0.6, [0.255, -0.497, 0.497]),
    (2, 0.8, [0.368, -0.493, 0.493]),
    (5, 0.3, [0.120, -0.498, 0.498]),
    (5, 0.6, [0.255, -0.491, 0.491]),
    (5, 0.8, [0.368, -0.479, 0.479]),
    (10, 0.3, [0.120, -0.496, 0.496]),
    (10, 0.6, [0.255, -0.484, 0.484]),
    (10, 0.8, [0.369, -0.467, 0.467]),
];

const HR_NB2: [(usize, f64, [f64; 4]); 6] = [
    (2, 0.3, [0.191, -0.498, 0.495, 0.480]),
    (2, 0.6, [0.397, -0.492, 0.483, 0.410]),
    (2, 0.8, [0.550, -0.481, 0.466, 0.302]),
    (3, 0.3, [0.191, -0.497, 0.492, 0.468]),
    (3, 0.6, [0.394, -0.484, 0.472, 0.361]),
    (3, 0.8, [0.545, -0.466, 0.446, 0.214]),
];

// Limiting standard errors at n = 100, (ML, HR) pairs per parameter in
// layout order: beta0, beta1, [gamma,] rho.
const SE_LOGISTIC: [(usize, f64, [f64; 6]); 9] = [
    (2, 0.3, [0.16, 0.15, 0.22, 0.21, 0.11, 0.07]),
    (2, 0.6, [0.17, 0.16, 0.24, 0.22, 0.08, 0.06]),
    (2, 0.8, [0.18, 0.16, 0.26, 0.22, 0.05, 0.06]),
    (5, 0.3, [0.12, 0.10, 0.17, 0.14, 0.05, 0.03]),
    (5, 0.6, [0.15, 0.11, 0.21, 0.16, 0.05, 0.03]),
    (5, 0.8, [0.17, 0.12, 0.23, 0.17, 0.03, 0.03]),
    (10, 0.3, [0.11, 0.08, 0.15, 0.11, 0.03, 0.02]),
    (10, 0.6, [0.14, 0.09, 0.19, 0.12, 0.04, 0.02]),
    (10, 0.8, [0.16, 0.09, 0.22, 0.13, 0.03, 0.02]),
];

const SE_NB2: [(usize, f64, [f64; 8]); 6] = [
    (2, 0.3, [0.11, 0.11, 0.15, 0.14, 0.15, 0.14, 0.08, 0.07]),
    (2, 0.6, [0.13, 0.11, 0.16, 0.15, 0.15, 0.13, 0.06, 0.06]),
    (2, 0.8, [0.13, 0.12, 0.17, 0.15, 0.17, 0.12, 0.04, 0.04]),
    (3, 0.3, [0.10, 0.09, 0.13, 0.12, 0.12, 0.11, 0.06, 0.04]),
    (3, 0.6, [0.12, 0.10, 0.15, 0.13, 0.13, 0.10, 0.05, 0.04]),
    (3, 0.8, [0.13, 0.10, 0.16, 0.13, 0.15, 0.09, 0.03, 0.03]),
];

const NB2_TRUNCATION: i64 = 10;

fn truth(family: MarginalFamily, rho: f64) -> Theta {
    Theta::new(vec![-0.5, 0.5], family.has_gamma().then_some(0.5), rho)
}

fn limit_rows() -> Vec<(MarginalFamily, usize, f64)> {
    let mut rows: Vec<_> = HR_LOGISTIC.iter().map(|r| (MarginalFamily::BernoulliLogit, r.0, r.1)).collect();
    rows.extend(HR_NB2.iter().map(|r| (MarginalFamily::Nb2Log, r.0, r.1)));
    rows
}

fn criterion_3() -> Result<Outcome, String> {
    let design = CovariateDesign::binary_conditional();
    let mut worst = [0.0f64; 4];
    let mut worst_msle = 0.0f64;
    let mut bad = Vec::new();
    for (family, d, rho) in limit_rows() {
        let spec = ModelSpec::new(family, StructureKind::Exchangeable);
        let th = truth(family, rho);
        let trunc = family.has_gamma().then_some(NB2_TRUNCATION);
        let cases = e(enumerate_cases_with_tail(&spec, &th, d, &design, trunc, TailRule::Drop))?;
        let hr = e(limiting_hrmle(&cases, &LimitOptions { n_ref: None, ..LimitOptions::default() }))?;
        // printed order rho, beta0, beta1, gamma; tolerances to match
        let (printed, got): (Vec<f64>, Vec<f64>) = if family.has_gamma() {
            let p = HR_NB2.iter().find(|r| r.0 == d && r.1 == rho).unwrap().2;
            (p.to_vec(), vec![hr.estimates[3], hr.estimates[0], hr.estimates[1], hr.estimates[2]])
        } else {
            let p = HR_LOGISTIC.iter().find(|r| r.0 == d && r.1 == rho).unwrap().2;
            (p.to_vec(), vec![hr.estimates[2], hr.estimates[0], hr.estimates[1]])
        };
        let tol = [0.01, 0.005, 0.005, 0.01];
        for k in 0..printed.len() {
            let diff = (got[k] - printed[k]).abs();
            worst[k] = worst[k].max(diff);
            if diff > tol[k] {
                bad.push(format!("({} d={d} rho={rho} HR #{k}: {:.4} vs {})", family.name(), got[k], printed[k]));
            }
        }

        // Simulated likelihood limit: the truncated tail is lumped into the
        // top category so that the exact limit is the truth itself.
        let lumped = e(enumerate_cases_with_tail(&spec, &th, d, &design, trunc, TailRule::Lump))?;
        let cfg = RqmcConfig { lattice_size: msle_lattice_size(d), ..RqmcConfig::with_seed(17) };
        let engine = e(ProbEngine::for_fitting(cfg, d))?;
        let mut start = th.clone();
        start.beta = vec![-0.45, 0.45];
        start.gamma = th.gamma.map(|g| g + 0.05);
        start.rho = rho - 0.05;
        let opts = LimitOptions { start: Some(start), n_ref: None, ..LimitOptions::default() };
        let ms = e(limiting_msle(&lumped, &engine, &opts))?;
        let mut true_v = th.beta.clone();
        true_v.extend(th.gamma);
        true_v.push(rho);
        let dev = ms.estimates.iter().zip(&true_v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst_msle = worst_msle.max(dev);
        if dev > 1e-3 {
            bad.push(format!("({} d={d} rho={rho} MSLE {:?})", family.name(), ms.estimates));
        }
    }
    Ok(Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "15 rows; max HR deviation rho {:.4}, beta0 {:.4}, beta1 {:.4}, gamma {:.4}; max MSLE deviation {worst_msle:.5}{}",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join(" ")) }
        ),
    })
}

fn criterion_4() -> Result<Outcome, String> {
    let design = CovariateDesign::binary_conditional();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut entries = 0;
    for (family, d, rho) in limit_rows() {
        let spec = ModelSpec::new(family, StructureKind::Exchangeable);
        let th = truth(family, rho);
        let trunc = family.has_gamma().then_some(NB2_TRUNCATION);
        let cases = e(enumerate_cases_with_tail(&spec, &th, d, &design, trunc, TailRule::Drop))?;
        let opts = LimitOptions::default();
        let ml = e(limiting_mle(&cases, &opts))?.std_errors.ok_or("ML Hessian not negative definite")?;
        let hr = e(limiting_hrmle(&cases, &opts))?.std_errors.ok_or("HR Hessian not negative definite")?;
        let printed: Vec<f64> = if family.has_gamma() {
            SE_NB2.iter().find(|r| r.0 == d && r.1 == rho).unwrap().2.to_vec()
        } else {
            SE_LOGISTIC.iter().find(|r| r.0 == d && r.1 == rho).unwrap().2.to_vec()
        };
        for k in 0..ml.len() {
            for (which, got) in [("ML", ml[k]), ("HR", hr[k])] {
                let want = printed[2 * k + (which == "HR") as usize];
                let diff = (got - want).abs();
                entries += 1;
                worst = worst.max(diff);
                if diff > 0.015 {
                    bad.push(format!("({} d={d} rho={rho} {which} #{k}: {got:.3} vs {want})", family.name()));
                }
            }
        }
    }
    Ok(Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{entries} entries; max |se - printed| = {worst:.4}{}",
            if bad.is_empty() { String::new() } else { format!("; off: {}", bad.join(" ")) }
        ),
    })
}

fn mean_of(t: &Table, method: &str, parameter: &str) -> Result<f64, String> {
    (0..t.rows.len())
        .find(|&r| t.cell(r, "method") == Some(method) && t.cell(r, "parameter") == Some(parameter))
        .and_then(|r| t.cell(r, "mean"))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("no mean for {method} {parameter}"))
}

fn criterion_5() -> Result<Outcome, String> {
    let start = Instant::now();
    let t6 = e(Config::parse(
        "family = bernoulli-logit\nstructure = exchangeable\nd = 2\nn = 100\nrho = 0.5\n\
         methods = ml, hr\nm = 100\nreplications = 500\nstd_errors = false\nseed = 6",
    )
    .and_then(|c| cmd_simstudy(&c)))?;
    let t7 = e(Config::parse(
        "family = nb2\nstructure = ar1\nd = 5\nn = 100\ngamma = 2\nrho = 0.8\n\
         methods = sl, hr\nm = 10\nlattice_size = 13\nrandomizations = 5\n\
         replications = 500\nstd_errors = false\nseed = 7",
    )
    .and_then(|c| cmd_simstudy(&c)))?;
    let checks = [
        ("ML rho", mean_of(&t6, "ML", "rho")?, 0.4927, 0.02),
        ("HR rho", mean_of(&t6, "HR", "rho")?, 0.1960, 0.03),
        ("SL rho", mean_of(&t7, "SL", "rho")?, 0.8, 0.02),
        ("SL gamma", mean_of(&t7, "SL", "gamma")?, 2.0, 0.15),
        ("HR gamma", mean_of(&t7, "HR", "gamma")?, 1.2276, 0.15),
    ];
    let elapsed = start.elapsed();
    let pass = checks.iter().all(|(_, got, want, tol)| (got - want).abs() <= *tol) && elapsed < Duration::from_secs(1800);
    let detail = checks.iter().map(|(n, got, want, tol)| format!("{n} {got:.4} (target {want} +/- {tol})")).collect::<Vec<_>>();
    Ok(Outcome { pass, detail: format!("R = 500; {}", detail.join(", ")) })
}

fn criterion_6() -> Result<Outcome, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures: Vec<String> = Vec::new();
    let mut record = |r: common::Check| {
        if let Err(m) = r {
            failures.push(m);
        }
    };
    for _ in 0..200 {
        record(common::quantile_inverts_cdf(10f64.powf(rng.random_range(-300.0..0.0))));
        record(common::cdf_inverts_quantile(rng.random_range(-37.0..5.0)));
        let lo = rng.random_range(-6.0..5.0);
        let hi = lo + rng.random_range(0.05..8.0);
        record(common::truncated_moments(if rng.random_bool(0.2) { f64::NEG_INFINITY } else { lo }, if rng.random_bool(0.2) { f64::INFINITY } else { hi }));
        record(common::nb2_tends_to_poisson(rng.random_range(0.1..20.0), rng.random_range(0..40)));
    }
    for _ in 0..50 {
        let d = rng.random_range(2..9);
        let rho = rng.random_range(0.0..0.9);
        let lower: Vec<f64> = (0..d).map(|_| if rng.random_bool(0.25) { f64::NEG_INFINITY } else { rng.random_range(-3.0..1.0) }).collect();
        let upper: Vec<f64> = lower
            .iter()
            .map(|&l| if rng.random_bool(0.25) { f64::INFINITY } else { l.max(-3.0) + rng.random_range(0.2..4.0) })
            .collect();
        record(common::engines_agree(&lower, &upper, rho, rng.random()));
    }
    record(common::crn_fits_identical());
    record(common::identity_reduces_to_margins());
    record(common::mf_matches_direct_evaluation());
    let elapsed = start.elapsed();
    Ok(Outcome {
        pass: failures.is_empty() && elapsed < Duration::from_secs(300),
        detail: format!(
            "1053 checks, {} failed{}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!("; first: {f}"))
        ),
    })
}

fn criterion_7() -> Result<Outcome, String> {
    let t = e(Config::parse(
        "mode = jitter\nfamily = bernoulli-logit\nd = 2\nn = 100\nrho = 0.5\n\
         methods = hr, mf\nm = 100\njitter_sets = 5\nseed = 5",
    )
    .and_then(|c| cmd_simstudy(&c)))?;
    let span = |method: &str| -> Result<Vec<f64>, String> {
        let r = (0..t.rows.len())
            .find(|&r| t.cell(r, "method") == Some(method) && t.cell(r, "set") == Some("span"))
            .ok_or_else(|| format!("no span row for {method}"))?;
        Ok(t.rows[r][3..].iter().map(|v| v.parse().unwrap_or(f64::NAN)).collect())
    };
    let (hr, mf) = (span("HR")?, span("MF")?);
    let rho_mf = *mf.last().unwrap();
    Ok(Outcome {
        pass: hr.iter().all(|s| *s <= 0.02) && rho_mf >= 0.05,
        detail: format!("HR spans {hr:?} (<= 0.02), MF rho span {rho_mf} (>= 0.05)"),
    })
}

fn criterion_8() -> Result<Outcome, String> {
    let times = vec![0.0, 1.0, 2.0, 3.0, 6.0, 9.0, 12.0];
    let truth = Theta::new(vec![-0.6, 0.1, -0.15, -0.05], None, 0.8);
    let design = SimDesign {
        n: 224,
        d: 7,
        spec: ModelSpec::new(MarginalFamily::BernoulliLogit, StructureKind::Markov),
        theta: truth.clone(),
        covariates: CovariateScheme::Longitudinal { times },
        seed: 8,
    };
    let data = e(simulate(&design))?;
    let cfg = RqmcConfig { lattice_size: 61, randomizations: 5, ..RqmcConfig::with_seed(88) };
    let fit = |structure| -> Result<FitResult, String> {
        let engine = e(ProbEngine::for_fitting(cfg, 7))?;
        e(fit_sl(&data, &ModelSpec::new(MarginalFamily::BernoulliLogit, structure), &engine, &FitOptions::default()))
    };
    let markov = fit(StructureKind::Markov)?;
    let ar1 = fit(StructureKind::Ar1)?;
    let exch = fit(StructureKind::Exchangeable)?;
    let se = markov.std_errors.clone().ok_or("Markov fit has no standard errors")?;
    let mut true_v = truth.beta.clone();
    true_v.push(truth.rho);
    let z: Vec<f64> = markov.estimates.iter().zip(&true_v).zip(&se).map(|((e, t), s)| (e - t) / s).collect();
    let recovered = z.iter().all(|v| v.abs() <= 3.0);
    let ordered = markov.loglik >= ar1.loglik && ar1.loglik >= exch.loglik;
    Ok(Outcome {
        pass: recovered && ordered,
        detail: format!(
            "max |est - true| / se = {:.2}; loglik Markov {:.2} >= AR1 {:.2} >= exch {:.2}",
            z.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            markov.loglik,
            ar1.loglik,
            exch.loglik
        ),
    })
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, fn() -> Result<Outcome, String>); 8] = [
        ("rectangle probabilities", criterion_1),
        ("importance sampler inefficiency", criterion_2),
        ("limiting estimators", criterion_3),
        ("limiting standard errors", criterion_4),
        ("simulation study at desk scale", criterion_5),
        ("property suites", criterion_6),
        ("jitter variability", criterion_7),
        ("fit self-consistency", criterion_8),
    ];
    let mut ran = 0;
    let mut failed = Vec::new();
    for (i, (title, f)) in criteria.into_iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        if !run(i + 1, title, f) {
            failed.push((i + 1).to_string());
        }
    }
    if failed.is_empty() {
        println!("acceptance: {ran} of {ran} criteria PASS");
        return;
    }
    println!("acceptance: {} of {ran} criteria FAIL ({})", failed.len(), failed.join(", "));
    if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        std::process::exit(1);
    }
}
