//! The experiments behind each subcommand.
//!
//! Every `run_*` function fills a typed report and never touches the file
//! system; [`execute`] wraps it with output files. Reports are filled in
//! place so that a run failing midway still leaves its completed entries.

use anyhow::{Context, Result};
use num_complex::Complex64;
use polymerlab_core::fredholm::{
    contour_diagnostics, fgue_classical, fgue_contour, laplace_transform, DiagnosticsReport, KernelParams,
    LaplaceOptions, LogU, Resolution, AIRY_ORDER, CLASSICAL_NODES,
};
use polymerlab_core::polymer::{scaled_h, simulate_log_partitions, FreeEnergyScale};
use polymerlab_core::rng::{stream, Lane};
use polymerlab_core::stats::{ks_critical_one_sample, ks_critical_two_sample, ks_one_sample, ks_two_sample, MeanEstimate};
use polymerlab_core::weights::WeightFamily;
use serde::Serialize;
use std::path::PathBuf;

use crate::config::{Command, ExperimentConfig, ShapeRule};
use crate::output::{csv_header, json_report, write_atomic, write_partial};
use crate::table::FgueTable;

/// Self-convergence required of the contour-form `F_GUE`.
pub const FGUE_SELF_TOL: f64 = 1e-8;
/// Allowed `|z|` between Monte Carlo and analytic weight moments.
pub const MOMENT_Z_MAX: f64 = 4.0;
/// Allowed drift of `|mu_k| theta^{ceil(k/2)}` across the theta grid.
pub const MOMENT_SCALING_FACTOR: f64 = 2.0;

/// Pass/fail summary shared by all reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub failures: Vec<String>,
}

impl Check {
    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(&mut self) {
        self.passed = self.failures.is_empty();
    }
}

fn theta_for(cfg: &ExperimentConfig, n: usize) -> f64 {
    cfg.shape.theta(n)
}

// ---------------------------------------------------------------- fgue

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FgueRow {
    pub t: f64,
    pub contour: f64,
    /// `|det_m - det_{m/2}|` of the contour form
    pub self_gap: f64,
    pub oracle: Option<f64>,
    pub diff: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FgueReport {
    pub rows: Vec<FgueRow>,
    pub check: Check,
}

pub fn run_fgue(cfg: &ExperimentConfig, report: &mut FgueReport) -> Result<()> {
    let order = cfg.order.unwrap_or(AIRY_ORDER);
    for &t in &cfg.t_grid {
        let r = fgue_contour(t, order, cfg.workers)?;
        let contour = r.real_value()?;
        let oracle = if cfg.dual { Some(fgue_classical(t, CLASSICAL_NODES)?) } else { None };
        report.rows.push(FgueRow { t, contour, self_gap: r.gap, oracle, diff: oracle.map(|o| (o - contour).abs()) });
    }
    let check = &mut report.check;
    for row in &report.rows {
        check.require(row.self_gap <= FGUE_SELF_TOL, || format!("t = {}: self-convergence gap {:e}", row.t, row.self_gap));
        if let Some(d) = row.diff {
            check.require(d <= cfg.dual_tol, || format!("t = {}: representations differ by {d:e}", row.t));
        }
    }
    let mut sorted: Vec<&FgueRow> = report.rows.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    for w in sorted.windows(2) {
        if w[1].t > w[0].t {
            check.require(w[1].contour >= w[0].contour, || format!("not monotone between t = {} and {}", w[0].t, w[1].t));
        }
    }
    check.finish();
    Ok(())
}

fn fgue_csv(cfg: &ExperimentConfig, report: &FgueReport) -> Result<String> {
    let mut s = csv_header(cfg)?;
    s.push_str("t,contour,self_gap,oracle,diff\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in &report.rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.t, r.contour, r.self_gap, opt(r.oracle), opt(r.diff)));
    }
    Ok(s)
}

// ---------------------------------------------------------------- laplace

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacePoint {
    pub t: Option<f64>,
    pub log_u: Complex64,
    pub det: Complex64,
    pub det_gap: f64,
    pub nodes: usize,
    pub truncation: f64,
    /// Monte Carlo estimate of `E[exp(-u Z)]` (real and imaginary parts)
    pub mc_re: MeanEstimate,
    pub mc_im: MeanEstimate,
    /// `(mc - det) / se`, worst of the two parts
    pub z: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LaplaceReport {
    pub n: usize,
    pub theta: f64,
    pub replicas: usize,
    pub points: Vec<LaplacePoint>,
    pub check: Check,
}

fn resolution(cfg: &ExperimentConfig) -> Resolution {
    let mut res = Resolution { phi: cfg.phi, truncation: cfg.truncation, ..Resolution::default() };
    if let Some(order) = cfg.order {
        res.order = order;
    }
    res
}

pub fn run_laplace(cfg: &ExperimentConfig, report: &mut LaplaceReport) -> Result<()> {
    let n = cfg.n[0];
    let theta = theta_for(cfg, n);
    *report = LaplaceReport { n, theta, replicas: cfg.replicas, ..Default::default() };
    let params: Vec<KernelParams> = match cfg.u {
        Some([re, im]) => vec![KernelParams::new(n, theta, LogU::from_u(Complex64::new(re, im)))?],
        None => cfg.t_grid.iter().map(|&t| KernelParams::at_t(n, theta, t)).collect::<Result<_, _>>()?,
    };
    let params = match cfg.delta {
        Some(d) => params.into_iter().map(|p| p.with_delta(d)).collect::<Result<_, _>>()?,
        None => params,
    };
    let opts = LaplaceOptions { resolution: resolution(cfg), force: cfg.force, workers: cfg.workers };
    // determinants first: they fail fast on bad parameters
    let dets = params.iter().map(|p| laplace_transform(p, &opts)).collect::<Result<Vec<_>, _>>()?;
    // one ensemble shared by every u
    let log_z = simulate_log_partitions(n, &WeightFamily::exp_gamma(theta), cfg.replicas, cfg.seed, cfg.workers)?;
    for (p, det) in params.iter().zip(dets) {
        let u = p.log_u.u();
        let (re, im): (Vec<f64>, Vec<f64>) = log_z
            .iter()
            .map(|l| {
                let e = (-u * l.exp()).exp();
                (e.re, e.im)
            })
            .unzip();
        let mc_re = MeanEstimate::from_samples(&re);
        let mc_im = MeanEstimate::from_samples(&im);
        let z_of = |m: &MeanEstimate, d: f64| {
            let diff = m.mean - d;
            if m.std_error > 0.0 {
                diff / m.std_error
            } else if diff.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        let (zr, zi) = (z_of(&mc_re, det.value.re), z_of(&mc_im, det.value.im));
        let z = if zr.abs() >= zi.abs() { zr } else { zi };
        report.points.push(LaplacePoint {
            t: p.t,
            log_u: p.log_u.ln,
            det: det.value,
            det_gap: det.gap,
            nodes: det.nodes,
            truncation: det.truncation,
            mc_re,
            mc_im,
            z,
            warnings: det.warnings,
        });
    }
    let check = &mut report.check;
    for pt in &report.points {
        check.require(pt.z.abs() <= cfg.z_max, || format!("log u = {}: |z| = {:.3}", pt.log_u, pt.z.abs()));
        let se = pt.mc_re.std_error.max(pt.mc_im.std_error);
        check.require(se <= cfg.se_max, || format!("log u = {}: standard error {se:e}", pt.log_u));
    }
    check.finish();
    Ok(())
}

// ---------------------------------------------------------------- tw

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwPoint {
    pub n: usize,
    pub theta: f64,
    pub scale: FreeEnergyScale,
    pub mean: MeanEstimate,
    pub ks: f64,
    /// one-sample critical value at `ks_alpha`
    pub ks_critical: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TwReport {
    pub replicas: usize,
    pub points: Vec<TwPoint>,
    pub check: Check,
}

/// Sorted `h_N` samples for `family` with the given scale.
fn h_samples(n: usize, family: &WeightFamily, scale: &FreeEnergyScale, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let log_z = simulate_log_partitions(n, family, cfg.replicas, cfg.seed, cfg.workers)?;
    let mut h: Vec<f64> = log_z.iter().map(|l| scaled_h(*l, scale)).collect();
    h.sort_by(f64::total_cmp);
    Ok(h)
}

pub fn run_tw(cfg: &ExperimentConfig, table: &FgueTable, report: &mut TwReport) -> Result<()> {
    report.replicas = cfg.replicas;
    for &n in &cfg.n {
        let theta = theta_for(cfg, n);
        let family = WeightFamily::exp_gamma(theta);
        let scale = FreeEnergyScale::for_family(&family, n)?;
        let samples = h_samples(n, &family, &scale, cfg)?;
        let ks = ks_one_sample(&samples, |x| table.cdf(x));
        report.points.push(TwPoint {
            n,
            theta,
            scale,
            mean: MeanEstimate::from_samples(&samples),
            ks,
            ks_critical: ks_critical_one_sample(cfg.ks_alpha, samples.len()),
            samples,
        });
    }
    let check = &mut report.check;
    let mut by_n: Vec<&TwPoint> = report.points.iter().collect();
    by_n.sort_by_key(|p| p.n);
    for w in by_n.windows(2) {
        check.require(w[1].ks < w[0].ks, || format!("KS does not decrease from N = {} to N = {}", w[0].n, w[1].n));
    }
    if let Some(last) = by_n.last() {
        check.require(last.ks <= cfg.ks_max, || format!("KS {:.4} at N = {} exceeds {}", last.ks, last.n, cfg.ks_max));
    }
    check.finish();
    Ok(())
}

// ---------------------------------------------------------------- perturb

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbPoint {
    pub n: usize,
    pub theta: f64,
    pub k: u32,
    /// `beta_N^k`, the relative size of the perturbation
    pub epsilon: f64,
    pub ks_two_sample: f64,
    pub ks_critical: f64,
    /// one-sample KS of the base ensemble against `F_GUE`, for context
    pub ks_base_vs_fgue: f64,
    /// same comparison at `contrast_k` (reported, not checked)
    pub contrast: Option<(u32, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PerturbReport {
    pub replicas: usize,
    pub points: Vec<PerturbPoint>,
    pub check: Check,
}

/// Base and perturbed ensembles read the same disorder streams, so the
/// two-sample distance measures the effect of the perturbation alone.
pub fn run_perturb(cfg: &ExperimentConfig, table: &FgueTable, report: &mut PerturbReport) -> Result<()> {
    report.replicas = cfg.replicas;
    let k = cfg.perturbation_order()?;
    for &n in &cfg.n {
        let theta = theta_for(cfg, n);
        let base = WeightFamily::exp_gamma(theta).centered();
        let scale = FreeEnergyScale::for_family(&base, n)?;
        let h_base = h_samples(n, &base, &scale, cfg)?;
        let perturbed = WeightFamily::perturbed(base.clone(), k, cfg.perturbation);
        let h_pert = h_samples(n, &perturbed, &scale, cfg)?;
        let contrast = match cfg.contrast_k {
            Some(ck) => {
                let fam = WeightFamily::perturbed(base.clone(), ck, cfg.perturbation);
                Some((ck, ks_two_sample(&h_base, &h_samples(n, &fam, &scale, cfg)?)))
            }
            None => None,
        };
        report.points.push(PerturbPoint {
            n,
            theta,
            k,
            epsilon: base.beta().powi(k as i32),
            ks_two_sample: ks_two_sample(&h_base, &h_pert),
            ks_critical: ks_critical_two_sample(cfg.ks_alpha, h_base.len(), h_pert.len()),
            ks_base_vs_fgue: ks_one_sample(&h_base, |x| table.cdf(x)),
            contrast,
        });
    }
    let check = &mut report.check;
    for p in &report.points {
        check.require(p.ks_two_sample < p.ks_critical, || {
            format!("N = {}: two-sample KS {:.4} >= {:.4}", p.n, p.ks_two_sample, p.ks_critical)
        });
    }
    check.finish();
    Ok(())
}

// ---------------------------------------------------------------- diag

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagReport {
    pub reports: Vec<DiagnosticsReport>,
    pub check: Check,
}

pub fn run_diag(cfg: &ExperimentConfig, report: &mut DiagReport) -> Result<()> {
    let n = cfg.n[0];
    for &theta in &cfg.theta_grid {
        report.reports.push(contour_diagnostics(theta, n)?);
    }
    let check = &mut report.check;
    for r in &report.reports {
        for c in r.checks.iter().filter(|c| !c.passed) {
            check.failures.push(format!("theta = {}: {} ({:?})", r.theta, c.name, c.violations.first()));
        }
    }
    check.finish();
    Ok(())
}

// ---------------------------------------------------------------- moments

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub theta: f64,
    /// central moments `mu_1..mu_K` from the cumulants
    pub analytic: Vec<f64>,
    pub monte_carlo: Vec<MeanEstimate>,
    pub z: Vec<f64>,
    /// `|mu_k| theta^{ceil(k/2)}`
    pub scaled: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MomentsReport {
    pub samples: usize,
    pub rows: Vec<MomentRow>,
    pub check: Check,
}

pub fn run_moments(cfg: &ExperimentConfig, report: &mut MomentsReport) -> Result<()> {
    let order = cfg.moment_order;
    report.samples = cfg.mc_samples;
    for (index, &theta) in cfg.theta_grid.iter().enumerate() {
        let family = WeightFamily::exp_gamma(theta).centered();
        let analytic = family.analytic_moments(order)?.map(|m| m.moments).unwrap_or_default();
        let sampler = family.sampler()?;
        let mut rng = stream(cfg.seed, index as u64, Lane::Auxiliary);
        let mut powers = vec![Vec::with_capacity(cfg.mc_samples); order];
        for _ in 0..cfg.mc_samples {
            let x = sampler.sample(&mut rng);
            let mut p = 1.0;
            for column in powers.iter_mut() {
                p *= x;
                column.push(p);
            }
        }
        let monte_carlo: Vec<MeanEstimate> = powers.iter().map(|c| MeanEstimate::from_samples(c)).collect();
        let z = monte_carlo.iter().zip(&analytic).map(|(m, a)| (m.mean - a) / m.std_error).collect();
        let scaled =
            analytic.iter().enumerate().map(|(i, m)| m.abs() * theta.powi((i as i32 + 2) / 2)).collect();
        report.rows.push(MomentRow { theta, analytic, monte_carlo, z, scaled });
    }
    let check = &mut report.check;
    for row in &report.rows {
        for (i, z) in row.z.iter().enumerate() {
            check.require(z.abs() <= MOMENT_Z_MAX, || format!("theta = {}: mu_{} off by {z:.2} SE", row.theta, i + 1));
        }
    }
    if let Some(first) = report.rows.first() {
        for row in &report.rows[1..] {
            for i in 1..order {
                let ratio = row.scaled[i] / first.scaled[i];
                check.require(
                    (1.0 / MOMENT_SCALING_FACTOR..=MOMENT_SCALING_FACTOR).contains(&ratio),
                    || format!("theta = {}: mu_{} scaling ratio {ratio:.3}", row.theta, i + 1),
                );
            }
        }
    }
    check.finish();
    Ok(())
}

// ---------------------------------------------------------------- files

/// What a finished command reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub check: Check,
    pub warnings: Vec<String>,
}

fn finish<T: Serialize>(
    cfg: &ExperimentConfig,
    name: &str,
    report: &T,
    result: Result<()>,
) -> Result<PathBuf> {
    let path = cfg.out.join(name);
    let bytes = json_report(cfg, report)?;
    match result {
        Ok(()) => {
            write_atomic(&path, &bytes)?;
            Ok(path)
        }
        Err(e) => {
            // keep what finished, under a name nothing downstream reads
            let _ = write_partial(&path, &bytes);
            Err(e)
        }
    }
}

/// Runs the configured command and writes its outputs under `cfg.out`.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let table = || FgueTable::load_or_build(&cfg.fgue_cache_path(), cfg.workers);
    match cfg.command {
        Command::Fgue => {
            let mut report = FgueReport::default();
            let result = run_fgue(cfg, &mut report);
            let path = cfg.out.join("fgue.csv");
            let text = fgue_csv(cfg, &report)?;
            if let Err(e) = result {
                let _ = write_partial(&path, text.as_bytes());
                return Err(e);
            }
            write_atomic(&path, text.as_bytes())?;
            Ok(Outcome { files: vec![path], check: report.check, warnings: vec![] })
        }
        Command::Laplace => {
            let mut report = LaplaceReport::default();
            let result = run_laplace(cfg, &mut report);
            let path = finish(cfg, "laplace.json", &report, result)?;
            let warnings = report.points.iter().flat_map(|p| p.warnings.clone()).collect();
            Ok(Outcome { files: vec![path], check: report.check, warnings })
        }
        Command::Tw => {
            let table = table()?;
            let mut report = TwReport::default();
            let result = run_tw(cfg, &table, &mut report);
            let mut files = Vec::new();
            for p in &report.points {
                let path = cfg.out.join(format!("tw_h_n{}.csv", p.n));
                let mut text = csv_header(cfg)?;
                text.push_str(&format!("# n: {}, theta: {}\nh\n", p.n, p.theta));
                for h in &p.samples {
                    text.push_str(&format!("{h}\n"));
                }
                write_atomic(&path, text.as_bytes())?;
                files.push(path);
            }
            files.push(finish(cfg, "tw.json", &report, result)?);
            Ok(Outcome { files, check: report.check, warnings: vec![] })
        }
        Command::Perturb => {
            let table = table()?;
            let mut report = PerturbReport::default();
            let result = run_perturb(cfg, &table, &mut report);
            let path = finish(cfg, "perturb.json", &report, result)?;
            let mut warnings = vec![];
            if let ShapeRule::Fixed { .. } = cfg.shape {
                warnings.push("perturbation run at fixed theta".to_string());
            }
            Ok(Outcome { files: vec![path], check: report.check, warnings })
        }
        Command::Diag => {
            let mut report = DiagReport::default();
            let result = run_diag(cfg, &mut report);
            let path = finish(cfg, "diag.json", &report, result)?;
            Ok(Outcome { files: vec![path], check: report.check, warnings: vec![] })
        }
        Command::Moments => {
            let mut report = MomentsReport::default();
            let result = run_moments(cfg, &mut report);
            let path = finish(cfg, "moments.json", &report, result)?;
            Ok(Outcome { files: vec![path], check: report.check, warnings: vec![] })
        }
    }
}
