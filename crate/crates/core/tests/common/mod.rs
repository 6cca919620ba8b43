//! Oracle checks shared by the property suite and the acceptance runner.
//! Every check returns `Err` with a message instead of panicking.
#![allow(dead_code)]

use copreg::correlation::{CorrelationStructure, StructureKind};
use copreg::datagen::{simulate, CovariateScheme, SimDesign};
use copreg::estimate::{fit_sl, FitOptions};
use copreg::likelihood::{
    hr_surrogate_loglik, mf_loglik, sl_loglik, Cluster, Dataset, JitterSet, ModelSpec, ProbEngine, Theta,
};
use copreg::marginals::{Margin, MarginalFamily};
use copreg::rectprob::{exchangeable_1d, mf_importance, naive_mc, GenzBretz, Rectangle, RqmcConfig};
use copreg::special::{norm_cdf, norm_pdf, norm_quantile, trunc_norm_mean, trunc_norm_second_moment, Interval};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn quantile_inverts_cdf(p: f64) -> Check {
    let z = norm_quantile(p).map_err(|e| e.to_string())?;
    let back = norm_cdf(z);
    ensure(((back - p) / p).abs() < 1e-12, || format!("p = {p}: z = {z}, back = {back}"))
}

// above 5 the cdf is within a few ulps of 1 and z is not recoverable
pub fn cdf_inverts_quantile(z: f64) -> Check {
    assert!(z <= 5.0);
    let back = norm_quantile(norm_cdf(z)).map_err(|e| e.to_string())?;
    ensure((back - z).abs() < 1e-9 * z.abs().max(1.0), || format!("{z} -> {back}"))
}

// Composite Simpson with 20k panels; ~1e-12 for these integrands.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Closed-form truncated moments against quadrature, to 1e-6.
pub fn truncated_moments(lo: f64, hi: f64) -> Check {
    let iv = Interval::new(lo, hi).map_err(|e| e.to_string())?;
    let (a, b) = (lo.max(-12.0), hi.min(12.0));
    let mass = simpson(norm_pdf, a, b);
    let m1 = simpson(|z| z * norm_pdf(z), a, b) / mass;
    let m2 = simpson(|z| z * z * norm_pdf(z), a, b) / mass;
    let got1 = trunc_norm_mean(&iv).map_err(|e| e.to_string())?;
    let got2 = trunc_norm_second_moment(&iv).map_err(|e| e.to_string())?;
    ensure((got1 - m1).abs() < 1e-6 && (got2 - m2).abs() < 1e-6, || {
        format!("({lo}, {hi}): mean {got1} vs {m1}, second {got2} vs {m2}")
    })
}

pub fn nb2_tends_to_poisson(mu: f64, y: i64) -> Check {
    let nb = Margin::new(MarginalFamily::Nb2Log, mu, 1e-9);
    let po = Margin::new(MarginalFamily::PoissonLog, mu, 0.0);
    ensure((nb.pmf(y) - po.pmf(y)).abs() < 1e-6 && (nb.cdf(y) - po.cdf(y)).abs() < 1e-6, || {
        format!("mu = {mu}, y = {y}: {} vs {}", nb.pmf(y), po.pmf(y))
    })
}

/// Lattice rule and naive Monte Carlo agree with the one-dimensional
/// reduction within their own error estimates; the importance sampler
/// returns a finite non-negative value.
pub fn engines_agree(lower: &[f64], upper: &[f64], rho: f64, seed: u64) -> Check {
    let d = lower.len();
    let rect = Rectangle::from_limits(lower, upper).map_err(|e| e.to_string())?;
    let structure = CorrelationStructure::scalar(StructureKind::Exchangeable, rho, d, None).map_err(|e| e.to_string())?;
    let chol = structure.cholesky().map_err(|e| e.to_string())?;
    let exact = exchangeable_1d(&rect, rho).map_err(|e| e.to_string())?.value;
    let gb = GenzBretz::new(RqmcConfig::with_seed(seed), d)
        .and_then(|g| g.probability(&rect, &chol))
        .map_err(|e| e.to_string())?;
    ensure((gb.value - exact).abs() <= (4.0 * gb.std_error).max(5e-4), || format!("gb {gb:?} vs {exact}"))?;
    let nv = naive_mc(&rect, &chol, 20_000, seed).map_err(|e| e.to_string())?;
    ensure((nv.value - exact).abs() <= 5.0 * nv.std_error + 1e-3, || format!("naive {nv:?} vs {exact}"))?;
    let r = structure.build_matrix().map_err(|e| e.to_string())?;
    let mf = mf_importance(&rect, &r, 20_000, seed).map_err(|e| e.to_string())?;
    ensure(mf.value.is_finite() && mf.value >= 0.0, || format!("mf {mf:?}"))
}

/// Two simulated likelihood fits with the same lattice are bit-identical.
pub fn crn_fits_identical() -> Check {
    let spec = ModelSpec::new(MarginalFamily::BernoulliProbit, StructureKind::Ar1);
    let design = SimDesign {
        n: 60,
        d: 4,
        spec,
        theta: Theta::new(vec![0.2, -0.4], None, 0.5),
        covariates: CovariateScheme::UniformContinuous,
        seed: 21,
    };
    let data = simulate(&design).map_err(|e| e.to_string())?;
    let fit = || {
        let cfg = RqmcConfig { lattice_size: 31, randomizations: 4, ..RqmcConfig::with_seed(5) };
        let engine = ProbEngine::for_fitting(cfg, 4).unwrap();
        fit_sl(&data, &spec, &engine, &FitOptions::default()).map_err(|e| e.to_string())
    };
    let (a, b) = (fit()?, fit()?);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(
        bits(&a.estimates) == bits(&b.estimates)
            && a.loglik.to_bits() == b.loglik.to_bits()
            && a.std_errors.as_deref().map(bits) == b.std_errors.as_deref().map(bits),
        || format!("{:?} vs {:?}", a.estimates, b.estimates),
    )
}

/// With `R = I` every likelihood is the sum of marginal log pmfs.
pub fn identity_reduces_to_margins() -> Check {
    let rows = [[1, 0, 1], [0, 0, 0], [1, 1, 0], [0, 1, 1]];
    let xs = [0.3, -0.8, 1.0, 0.0];
    let clusters =
        rows.iter().zip(xs).map(|(y, x)| Cluster::new(y.to_vec(), vec![vec![1.0, x]; 3], None).unwrap()).collect();
    let data = Dataset::new(clusters, Dataset::default_names(2)).unwrap();
    let close = |what: &str, got: f64, want: f64, tol: f64| ensure((got - want).abs() < tol, || format!("{what}: {got} vs {want}"));
    for family in [MarginalFamily::BernoulliLogit, MarginalFamily::BernoulliProbit] {
        let spec = ModelSpec::new(family, StructureKind::Exchangeable);
        let theta = Theta::new(vec![-0.1, 0.7], None, 0.0);
        let params = theta.marginal().unwrap();
        let marg: f64 = data
            .clusters()
            .iter()
            .flat_map(|c| c.y.iter().zip(&c.x).map(|(&y, x)| family.pmf(&params, y, x).unwrap().ln()))
            .sum();
        let jit = JitterSet::for_data(3, &data, 8).unwrap();
        let gb = ProbEngine::for_fitting(RqmcConfig::with_seed(2), 3).unwrap();
        let e = |r: copreg::Result<f64>| r.map_err(|e| e.to_string());
        close("exact", e(sl_loglik(&data, &spec, &theta, &ProbEngine::Exchangeable1d).map(|l| l.value))?, marg, 1e-9)?;
        close("lattice", e(sl_loglik(&data, &spec, &theta, &gb).map(|l| l.value))?, marg, 1e-12)?;
        close("surrogate", e(hr_surrogate_loglik(&data, &spec, &theta, &jit, 1))?, marg, 1e-12)?;
        close("jittered", e(mf_loglik(&data, &spec, &theta, &jit, false))?, marg, 1e-12)?;
        close("jittered per cluster", e(mf_loglik(&data, &spec, &theta, &jit, true))?, marg, 1e-12)?;
    }
    let spec = ModelSpec::new(MarginalFamily::PoissonLog, StructureKind::Ar1);
    let c = Cluster::new(vec![3, 0, 5], vec![vec![1.0]; 3], None).unwrap();
    let data = Dataset::new(vec![c], Dataset::default_names(1)).unwrap();
    let theta = Theta::new(vec![0.9], None, 0.0);
    let m = Margin::new(MarginalFamily::PoissonLog, 0.9f64.exp(), 0.0);
    let marg = m.ln_pmf(3) + m.ln_pmf(0) + m.ln_pmf(5);
    let jit = JitterSet::for_data(2, &data, 1).unwrap();
    close("poisson surrogate", hr_surrogate_loglik(&data, &spec, &theta, &jit, 0).map_err(|e| e.to_string())?, marg, 1e-12)
}

/// The jittered simulated likelihood on `n = 2, d = 2, m = 3` against a
/// direct evaluation in double-double arithmetic: products over clusters
/// and averages over draws are formed without logarithms.
pub fn mf_matches_direct_evaluation() -> Check {
    let family = MarginalFamily::BernoulliLogit;
    let spec = ModelSpec::new(family, StructureKind::Exchangeable);
    let ys = [[1i64, 1], [0, 1]];
    let xs = [0.4, -1.2];
    let clusters: Vec<Cluster> =
        ys.iter().zip(xs).map(|(y, x)| Cluster::new(y.to_vec(), vec![vec![1.0, x]; 2], None).unwrap()).collect();
    let data = Dataset::new(clusters, Dataset::default_names(2)).unwrap();
    let v = vec![0.11, 0.93, 0.52, 0.27, 0.999, 0.004, 0.61, 0.38, 0.02, 0.97, 0.45, 0.73];
    let jit = JitterSet::from_values(v.clone(), 3, 2, 2).unwrap();

    for rho in [0.0, 0.35, 0.9, 0.995] {
        let theta = Theta::new(vec![0.3, 0.8], None, rho);
        let params = theta.marginal().unwrap();
        let mut ln_f = 0.0;
        let mut q = [[[0.0; 2]; 2]; 3];
        for (i, (y, &x)) in ys.iter().zip(&xs).enumerate() {
            for j in 0..2 {
                let pmf = family.pmf(&params, y[j], &[1.0, x]).unwrap();
                let below = if y[j] == 0 { 0.0 } else { family.cdf(&params, y[j] - 1, &[1.0, x]) };
                ln_f += pmf.ln();
                for k in 0..3 {
                    q[k][i][j] = norm_quantile(below + v[(k * 2 + i) * 2 + j] * pmf).unwrap();
                }
            }
        }
        let copula = |a: f64, b: f64| -> DD {
            let det = 1.0 - rho * rho;
            let e = -(rho * rho * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * det);
            DD::from(e.exp()).mul(DD::from(1.0 / det.sqrt()))
        };
        let mut pooled = DD::from(0.0);
        let mut per_cluster_ln = 0.0;
        for i in 0..2 {
            let mut s = DD::from(0.0);
            for row in &q {
                s = s.add(copula(row[i][0], row[i][1]));
            }
            per_cluster_ln += (s.hi / 3.0).ln();
        }
        for row in &q {
            pooled = pooled.add(copula(row[0][0], row[0][1]).mul(copula(row[1][0], row[1][1])));
        }
        let want_pooled = ln_f + (pooled.hi / 3.0).ln();
        let want_cluster = ln_f + per_cluster_ln;
        let got_pooled = mf_loglik(&data, &spec, &theta, &jit, false).map_err(|e| e.to_string())?;
        let got_cluster = mf_loglik(&data, &spec, &theta, &jit, true).map_err(|e| e.to_string())?;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        ensure(rel(got_pooled, want_pooled) < 1e-10 && rel(got_cluster, want_cluster) < 1e-10, || {
            format!("rho {rho}: pooled {got_pooled} vs {want_pooled}, per cluster {got_cluster} vs {want_cluster}")
        })?;
    }
    Ok(())
}

/// Unevaluated sum `hi + lo` built from error-free transformations.
#[derive(Clone, Copy)]
struct DD {
    hi: f64,
    lo: f64,
}

impl From<f64> for DD {
    fn from(x: f64) -> Self {
        DD { hi: x, lo: 0.0 }
    }
}

impl DD {
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn add(self, o: DD) -> DD {
        let (s, e) = Self::two_sum(self.hi, o.hi);
        let (hi, lo) = Self::two_sum(s, e + self.lo + o.lo);
        DD { hi, lo }
    }

    fn mul(self, o: DD) -> DD {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let (hi, lo) = Self::two_sum(p, e + self.hi * o.lo + self.lo * o.hi);
        DD { hi, lo }
    }
}
