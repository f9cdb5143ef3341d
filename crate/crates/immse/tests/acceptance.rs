//! Acceptance checks. Prints one PASS/FAIL line per criterion (with detail
//! lines below it) and exits non-zero if any criterion fails.

use std::time::Instant;

use immse::catalog;
use immse::config::{LoadedConfig, Scenario};
use immse::run::{cmd_verify, Overrides, VerifyOptions};
use immse_core::estimate::{self, quadrature};
use immse_core::expr::Func;
use immse_core::identity::{
    verify_at_steps, verify_identity, Backend, FdOrder, Parameter, SystemRef,
};
use immse_core::oracle::{self, LinearGaussianModel};
use immse_core::rng::{self, Domain};
use immse_core::system::LinearCoefficients;
use immse_core::{
    Binding, ChannelExpr, DiscreteSystemSpec, Ensemble, IdentityKind, IdentityReport, MessagePrior, MmseForm,
    ScenarioConfig, Var,
};
use nalgebra::DMatrix;
use rand::Rng;

struct Criterion {
    id: &'static str,
    title: &'static str,
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn new(id: &'static str, title: &'static str) -> Self {
        Self {
            id,
            title,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((ok, detail.into()));
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.0)
    }

    fn print(&self) {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        println!("criterion {:<2} {tag}  {}", self.id, self.title);
        for (ok, d) in &self.checks {
            println!("    [{}] {d}", if *ok { "ok" } else { "x " });
        }
    }
}

fn builtin(name: &str) -> Scenario {
    let value = catalog::lookup(name).unwrap_or_else(|| panic!("builtin {name}"));
    LoadedConfig::from_value(name, value).unwrap().scenarios().unwrap().remove(0)
}

fn gaussian_scalar(label: &str, snr: f64) -> ScenarioConfig {
    let spec = DiscreteSystemSpec::parse(label, MessagePrior::gaussian(0.0, 1.0), &["w"]).unwrap();
    ScenarioConfig::new(label, SystemRef::Discrete(spec), Parameter::Snr(snr))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1() -> Criterion {
    let mut c = Criterion::new("1", "memoryless I-MMSE, Gaussian input, nested MC and oracle");
    for snr in [0.5, 1.0, 2.0] {
        let target = 0.5 / (1.0 + snr);
        let mut s = gaussian_scalar("gaussian", snr);
        s.backend = Backend::MonteCarlo;
        s.budgets.n_outer = 20_000;
        s.budgets.k_inner = 10_000;
        s.seed = 101;
        let start = Instant::now();
        let r = verify_identity(IdentityKind::ImmseMemoryless, &s).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let f = r.snr_form.unwrap();
        let lhs_ok = (f.lhs - target).abs() <= 4.0 * f.lhs_se && rel(f.lhs, target) <= 0.02;
        let rhs_ok = (f.rhs_total - target).abs() <= 4.0 * f.rhs_mmse_se && rel(f.rhs_total, target) <= 0.02;
        c.check(
            lhs_ok && rhs_ok && r.passed(),
            format!(
                "MC snr={snr}: target {target:.6}, lhs {:.6} (se {:.1e}, {:.2}%), rhs {:.6} (se {:.1e}, {:.2}%), identity gap {:.1e} vs {:.1e}",
                f.lhs,
                f.lhs_se,
                100.0 * rel(f.lhs, target),
                f.rhs_total,
                f.rhs_mmse_se,
                100.0 * rel(f.rhs_total, target),
                r.gap,
                r.threshold
            ),
        );
        c.check(secs < 60.0, format!("MC snr={snr}: {secs:.1} s (< 60 s)"));

        s.backend = Backend::Oracle;
        let r = verify_identity(IdentityKind::ImmseMemoryless, &s).unwrap();
        let f = r.snr_form.unwrap();
        let err = (f.lhs - target).abs().max((f.rhs_total - target).abs());
        c.check(err <= 1e-7, format!("oracle snr={snr}: max |side - target| = {err:.2e} (<= 1e-7)"));
    }
    c
}

fn criterion_2() -> Criterion {
    let mut c = Criterion::new("2", "memoryless I-MMSE, BPSK input, exact inner enumeration");
    let s = builtin("bpsk-memoryless");
    let r = verify_identity(s.kind, &s.config).unwrap();
    let f = r.snr_form.unwrap();
    c.check(
        r.gap.abs() <= 4.0 * r.combined_se,
        format!("snr=1, N={}: lhs {:.6}, rhs {:.6}, gap {:.2e}, 4 SE {:.2e}", s.config.budgets.n_outer, f.lhs, f.rhs_total, r.gap, 4.0 * r.combined_se),
    );
    let snr: f64 = 1.0;
    let mmse_quad = 1.0
        - quadrature::integrate(
            |z| (snr + snr.sqrt() * z).tanh(),
            quadrature::QuadratureRule::GaussHermite { nodes: 200 },
        )
        .unwrap();
    let mmse_mc = 2.0 * f.rhs_mmse;
    c.check(
        (mmse_mc - mmse_quad).abs() <= 1e-3,
        format!("mmse: MC {mmse_mc:.6} vs 200-node quadrature {mmse_quad:.7}, diff {:.2e} (<= 1e-3)", (mmse_mc - mmse_quad).abs()),
    );
    c
}

fn criterion_3() -> Criterion {
    let mut c = Criterion::new("3", "de Bruijn identity by quadrature");
    let start = Instant::now();
    let gaussian = builtin("debruijn-gaussian");
    for t in [0.25, 1.0, 4.0] {
        let mut s = gaussian.config.clone();
        s.parameter = Parameter::T(t);
        let r = verify_identity(IdentityKind::DeBruijn, &s).unwrap();
        let exact = 1.0 / (2.0 * (1.0 + t));
        let err = (r.lhs.value - exact).abs().max((r.rhs_total - exact).abs());
        c.check(err <= 1e-6, format!("gaussian t={t}: dH/dt {:.9}, J/2 {:.9}, exact {exact:.9}, max err {err:.1e} (<= 1e-6)", r.lhs.value, r.rhs_total));
    }
    let mixture = builtin("debruijn-mixture");
    for t in [0.25, 1.0, 4.0] {
        let mut s = mixture.config.clone();
        s.parameter = Parameter::T(t);
        let r = verify_identity(IdentityKind::DeBruijn, &s).unwrap();
        c.check(r.gap.abs() <= 1e-4, format!("mixture t={t}: dH/dt {:.9} vs J/2 {:.9}, gap {:.1e} (<= 1e-4)", r.lhs.value, r.rhs_total, r.gap));
        let alt = r.diagnostics["fisher_alt_gap"].abs();
        c.check(alt <= 1e-5, format!("mixture t={t}: alternate Fisher form differs by {alt:.1e} (<= 1e-5)"));
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 30.0, format!("runtime {secs:.2} s"));
    c
}

struct RandomLinear {
    coefficients: LinearCoefficients,
    variance: f64,
    rho: f64,
}

fn random_linear_models(count: usize, seed: u64) -> Vec<RandomLinear> {
    let mut rng = rng::stream(seed, Domain::Outer, 0);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=6usize);
            let a: Vec<f64> = (0..n)
                .map(|_| {
                    let mag = rng.random_range(0.3..1.5);
                    if rng.random_bool(0.5) { mag } else { -mag }
                })
                .collect();
            let mut b = DMatrix::zeros(n, n);
            for i in 1..n {
                for j in 0..i {
                    b[(i, j)] = rng.random_range(-0.8..0.8);
                }
            }
            RandomLinear {
                coefficients: LinearCoefficients::new(a, b).unwrap(),
                variance: rng.random_range(0.5..2.0),
                rho: rng.random_range(0.2..2.0),
            }
        })
        .collect()
}

fn criterion_4() -> Criterion {
    let mut c = Criterion::new("4", "feedback extension, 50 random linear-Gaussian models, exact oracle");
    let models = random_linear_models(50, 0x5eed);
    let tol = 1e-7;
    let mut max_gap: f64 = 0.0;
    let mut max_nc_gap: f64 = 0.0;
    let mut significant = 0;
    for (k, m) in models.iter().enumerate() {
        let spec = DiscreteSystemSpec::from_linear(
            format!("lg-{k}"),
            MessagePrior::gaussian(0.0, m.variance),
            &m.coefficients,
        );
        let mut s = ScenarioConfig::new(format!("lg-{k}"), SystemRef::Discrete(spec), Parameter::Rho(m.rho));
        s.backend = Backend::Oracle;
        s.budgets.h = Some(1e-4);
        s.budgets.fd_order = Some(FdOrder::Fourth);
        let r = verify_identity(IdentityKind::FeedbackExt, &s).unwrap();
        max_gap = max_gap.max(r.gap.abs());
        let nc = r.diagnostics["gap_without_correction"].abs();
        max_nc_gap = max_nc_gap.max(nc);
        if nc >= 10.0 * tol {
            significant += 1;
        }
    }
    c.check(
        max_gap <= tol,
        format!("max |dI/drho - (rho*mmse_sum + rho^2*correction_sum)| = {max_gap:.3e} (<= 1e-7)"),
    );
    c.check(
        significant >= 45,
        format!(
            "gap without the correction term >= 1e-6 on {significant}/50 models (need >= 45); largest such gap {max_nc_gap:.3e}"
        ),
    );
    c
}

fn criterion_5() -> Criterion {
    let mut c = Criterion::new("5", "feedback extension, tanh feedback, nested MC");
    let s = builtin("tanh-feedback-n4");
    let start = Instant::now();
    let r = verify_identity(s.kind, &s.config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    c.check(
        r.gap.abs() <= 4.0 * r.combined_se,
        format!(
            "rho=1, N={}, K={}: lhs {:.5}, rhs {:.5} (mmse {:.5} + correction {:.5}), gap {:.3e}, 4 SE {:.3e}",
            s.config.budgets.n_outer,
            s.config.budgets.k_inner,
            r.lhs.value,
            r.rhs_total,
            r.rhs_mmse.value,
            r.rhs_correction.value,
            r.gap,
            4.0 * r.combined_se
        ),
    );
    let corr = r.rhs_correction;
    c.check(
        corr.value.abs() >= 4.0 * corr.std_error,
        format!("correction {:.5} +- {:.1e} ({:.1} SE from zero, need >= 4)", corr.value, corr.std_error, corr.value.abs() / corr.std_error),
    );
    c.check(secs < 600.0, format!("runtime {secs:.1} s (< 600 s)"));
    let nc = r.diagnostics["gap_without_correction"];
    let nc_se = r.diagnostics["gap_without_correction_se"];
    println!("    info: criterion 5 gap with the correction term dropped: {nc:.3e} (se {nc_se:.1e})");
    c
}

fn criterion_6() -> Criterion {
    let mut c = Criterion::new("6", "output-memory extension, independent per-step inputs");
    let s = builtin("memory-channel-n4");
    let r = verify_identity(s.kind, &s.config).unwrap();
    c.check(
        r.gap.abs() <= 4.0 * r.combined_se && r.passed(),
        format!(
            "rho=1, N={}: lhs {:.5}, rhs {:.5} (mmse {:.5} + correction {:.5}), gap {:.3e}, 4 SE {:.3e}",
            s.config.budgets.n_outer,
            r.lhs.value,
            r.rhs_total,
            r.rhs_mmse.value,
            r.rhs_correction.value,
            r.gap,
            4.0 * r.combined_se
        ),
    );
    c
}

fn criterion_7a() -> Criterion {
    let mut a = Criterion::new("7a", "continuous time, constant message, Euler m=256");
    let s = builtin("ct-constant-message");
    let (rho, horizon) = (1.0, 1.0);
    let target = rho * horizon / (1.0 + rho * rho * horizon);
    let r = verify_at_steps(s.kind, &s.config, 256).unwrap();
    a.check(
        rel(r.lhs.value, target) <= 0.02 && rel(r.rhs_total, target) <= 0.02,
        format!(
            "target {target:.4}: lhs {:.5} ({:.2}%), rhs {:.5} ({:.2}%)",
            r.lhs.value,
            100.0 * rel(r.lhs.value, target),
            r.rhs_total,
            100.0 * rel(r.rhs_total, target)
        ),
    );

    a
}

fn criterion_7b() -> Criterion {
    let mut b = Criterion::new("7b", "continuous time, linear feedback, Euler consistency and oracle gap");
    let s = builtin("ct-linear-feedback");
    let ms = [64usize, 128, 256, 512];
    let reports: Vec<IdentityReport> = ms.iter().map(|&m| verify_at_steps(s.kind, &s.config, m).unwrap()).collect();
    let delta: Vec<f64> = reports.windows(2).map(|p| (p[1].gap - p[0].gap).abs()).collect();
    for k in 0..2 {
        let ratio = delta[k] / delta[k + 1];
        b.check(
            ratio >= 1.5,
            format!(
                "|gap(2m) - gap(m)| at m={} is {:.3e}, at m={} is {:.3e}: shrink factor {ratio:.2} (>= 1.5)",
                ms[k],
                delta[k],
                ms[k + 1],
                delta[k + 1]
            ),
        );
    }
    for (m, r) in ms.iter().zip(&reports).take(3) {
        b.check(
            r.gap.abs() <= 1e-6,
            format!("m={m}: oracle lhs {:.9}, rhs {:.9}, gap {:.3e} (<= 1e-6)", r.lhs.value, r.rhs_total, r.gap),
        );
    }
    b
}

fn random_expr(rng: &mut impl Rng, depth: usize) -> ChannelExpr {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..5) {
            0 => ChannelExpr::var(Var::W),
            1 => ChannelExpr::var(Var::Y(rng.random_range(1..=3))),
            2 => ChannelExpr::var(Var::T),
            _ => ChannelExpr::constant(rng.random_range(-2.0..2.0)),
        };
    }
    let op = rng.random_range(0..7);
    let mut sub = || Box::new(random_expr(rng, depth - 1));
    match op {
        0 => ChannelExpr::Add(sub(), sub()),
        1 => ChannelExpr::Sub(sub(), sub()),
        2 => ChannelExpr::Mul(sub(), sub()),
        3 => ChannelExpr::Neg(sub()),
        4 => ChannelExpr::Call(Func::Tanh, sub()),
        5 => ChannelExpr::Call(Func::Sin, sub()),
        _ => ChannelExpr::Call(Func::Exp, sub()),
    }
}

/// Numerical partial of `e` in `var` with its error estimate.
fn numeric_partial(e: &ChannelExpr, var: Var, w: f64, y: &[f64], t: f64) -> (f64, f64) {
    let f = |x: f64| {
        let mut yy = y.to_vec();
        let mut ww = w;
        let mut tt = t;
        match var {
            Var::W => ww = x,
            Var::Y(j) => yy[j - 1] = x,
            Var::T => tt = x,
        }
        e.eval(&Binding::new(ww, &yy).with_time(tt)).unwrap()
    };
    let x0 = match var {
        Var::W => w,
        Var::Y(j) => y[j - 1],
        Var::T => t,
    };
    ridders(f, x0, 0.1)
}

/// Ridders' extrapolation of central differences: shrinks the step until
/// the tableau's error estimate stops improving.
fn ridders(f: impl Fn(f64) -> f64, x: f64, h0: f64) -> (f64, f64) {
    const NTAB: usize = 20;
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    a[0][0] = (f(x + h) - f(x - h)) / (2.0 * h);
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        a[0][i] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[j][i] - a[j - 1][i]).abs().max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

fn criterion_8() -> Criterion {
    let mut c = Criterion::new("8", "property suites");

    // SNIS with psi = 1
    let sys = DiscreteSystemSpec::parse(
        "tanh",
        MessagePrior::gaussian(0.0, 1.0),
        &["w", "w + 0.5*tanh(y[1])", "w + 0.5*tanh(y[2])"],
    )
    .unwrap()
    .validate()
    .unwrap();
    let mut exact = true;
    for k in 0..20u64 {
        let p = Ensemble::new(&sys, 1.3, 20, 9).unwrap().path(k as usize);
        let est = estimate::snis_conditional(&sys, 1.3, &p.y, |_, _| 1.0, 257, k).unwrap();
        exact &= est.value == 1.0;
    }
    c.check(exact, "SNIS estimate of E[1 | Y] is exactly 1.0 on 20 paths");

    // no feedback: correction bitwise zero
    let plain = DiscreteSystemSpec::parse("plain", MessagePrior::gaussian(0.0, 1.0), &["w", "0.5*w", "tanh(w)"])
        .unwrap()
        .validate()
        .unwrap();
    let ens = Ensemble::new(&plain, 0.8, 500, 4).unwrap();
    let corr = estimate::correction_term(&ens, 64, 4).unwrap();
    let zero_paths = ens.iter().all(|p| p.d.iter().all(|d| d.to_bits() == 0));
    c.check(
        corr.unscaled.value.to_bits() == 0 && corr.rho_scaled.value.to_bits() == 0 && zero_paths,
        "no-feedback correction term and every D_i are +0.0 bitwise",
    );

    // symbolic vs finite-difference derivatives
    let mut rng = rng::stream(8, Domain::Outer, 8);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut unresolved = 0;
    'draw: while checked < 1000 {
        let e = random_expr(&mut rng, 6);
        let w = rng.random_range(-1.0..1.0);
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = rng.random_range(0.0..1.0);
        let value = e.eval(&Binding::new(w, &y).with_time(t)).unwrap();
        if !value.is_finite() || value.abs() > 1e6 {
            continue;
        }
        let mut pairs = Vec::new();
        for var in [Var::W, Var::Y(1), Var::Y(2), Var::Y(3), Var::T] {
            let sym = e.derivative(var).eval(&Binding::new(w, &y).with_time(t)).unwrap();
            let (num, num_err) = numeric_partial(&e, var, w, &y, t);
            // the reference itself must be resolved far below the tolerance
            if !(num_err <= 1e-9 * (1.0 + num.abs())) {
                unresolved += 1;
                continue 'draw;
            }
            pairs.push((var, sym, num));
        }
        for (var, sym, num) in pairs {
            let err = (sym - num).abs() / (1.0 + sym.abs());
            if err > 1e-6 && std::env::var("ACCEPTANCE_DEBUG").is_ok() {
                println!("    debug: {e} d/d{var} at w={w} y={y:?} t={t}: symbolic {sym} vs FD {num}");
            }
            worst = worst.max(err);
        }
        checked += 1;
    }
    c.check(worst <= 1e-6, format!("symbolic vs FD partials on 1000 random depth-6 expressions: worst scaled error {worst:.2e} (<= 1e-6); {unresolved} draws skipped where the FD reference did not resolve"));

    // Gauss-Hermite exactness up to degree 2n-1
    let mut gh_err: f64 = 0.0;
    for n in [3usize, 6, 10] {
        let (x, wts) = quadrature::gauss_hermite(n).unwrap();
        let mut double_factorial = 1.0;
        for p in 0..2 * n {
            let q: f64 = x.iter().zip(&wts).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
            // rounding scale of the sum: odd moments cancel terms of size E|Z|^p
            let scale: f64 = x.iter().zip(&wts).map(|(xi, wi)| wi * xi.abs().powi(p as i32)).sum();
            let exact = if p % 2 == 1 {
                0.0
            } else {
                if p >= 2 {
                    double_factorial *= (p - 1) as f64;
                }
                double_factorial
            };
            gh_err = gh_err.max((q - exact).abs() / scale);
        }
    }
    c.check(gh_err <= 1e-12, format!("Gauss-Hermite moments exact through degree 2n-1, n in 3,6,10: worst error relative to E|Z|^p {gh_err:.1e} (<= 1e-12)"));

    // joint covariance symmetric and PSD
    let all_psd = random_linear_models(50, 0xc0ffee).iter().all(|m| {
        let model = LinearGaussianModel::new(m.coefficients.clone(), m.variance, m.rho).unwrap();
        let j = oracle::lg_propagate(&model);
        j.is_symmetric(1e-12) && j.is_psd()
    });
    c.check(all_psd, "joint (M, Y, g, S) covariance symmetric and PSD on 50 random models");

    // byte-identical reports
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let opts = VerifyOptions {
            source: "tanh-feedback-n4",
            overrides: Overrides {
                n: Some(400),
                k: Some(200),
                seed: Some(21),
                ..Overrides::default()
            },
            jobs: 1,
            out: &out,
            dump_paths: None,
        };
        cmd_verify(&opts, &mut std::io::sink()).unwrap();
        std::fs::read(out.join("report.json")).unwrap()
    };
    c.check(run("a") == run("b"), "same config and seed give byte-identical report.json");

    // rho / snr chain rule
    let mut chain: f64 = 0.0;
    for (kind, name, backend) in [
        (IdentityKind::FeedbackExt, "linear-feedback-n4", Backend::Oracle),
        (IdentityKind::FeedbackExt, "tanh-feedback-n4", Backend::MonteCarlo),
    ] {
        let mut s = builtin(name).config;
        s.backend = backend;
        s.budgets.n_outer = 500;
        s.budgets.k_inner = 200;
        s.mmse_form = MmseForm::PosteriorVariance;
        let r = verify_identity(kind, &s).unwrap();
        let (rf, sf) = (r.rho_form.unwrap(), r.snr_form.unwrap());
        let rho = r.rho.unwrap();
        for (a, b) in [
            (rf.lhs, sf.lhs),
            (rf.rhs_mmse, sf.rhs_mmse),
            (rf.rhs_correction, sf.rhs_correction),
            (rf.gap, sf.gap),
        ] {
            chain = chain.max((a - 2.0 * rho * b).abs());
        }
    }
    c.check(chain <= 1e-10, format!("rho-form = 2*rho * snr-form for every reported quantity: worst {chain:.1e} (<= 1e-10)"));
    c
}

type Entry = (&'static str, fn() -> Criterion);

fn main() {
    // `cargo test` passes harness flags such as --nocapture; they are ignored.
    // ACCEPTANCE_ONLY=4,7b restricts the run to the listed criteria.
    let only: Option<Vec<String>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').map(|x| x.trim().to_string()).collect());
    let all: [Entry; 9] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
        ("7a", criterion_7a),
        ("7b", criterion_7b),
        ("8", criterion_8),
    ];
    let start = Instant::now();
    let criteria: Vec<Criterion> = all
        .iter()
        .filter(|(id, _)| only.as_ref().map_or(true, |o| o.iter().any(|x| x == id)))
        .map(|(_, run)| run())
        .collect();
    println!();
    for c in &criteria {
        c.print();
    }
    let failed: Vec<&str> = criteria.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    println!(
        "\nacceptance: {}/{} criteria pass ({:.0} s)",
        criteria.len() - failed.len(),
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("acceptance: failing criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
