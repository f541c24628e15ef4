//! Subcommand drivers. Each writes its data files into `out` and returns
//! their names in the order written.

use std::path::Path;

use anyhow::{bail, Result};
use floquet_flow::dynamics::{flowed_static, quasienergy_error_from, stroboscopic_series_from, StroboscopicSample};
use floquet_flow::hilbert::SpinChainParams;
use floquet_flow::io::{write_csv, write_json, write_real_csv};
use floquet_flow::oscillator::{count_crossings, find_freezing_points, run_oscillator, OscillatorState, CROSSING_FLOOR};
use floquet_flow::scan::{
    chain_flow, count_dips, frequency_scaling, scan_freezing, thermalize, trajectory_rows, PPoint, ScalingPoint,
    TRAJECTORY_HEADER,
};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

#[derive(Default)]
pub struct Outputs(pub Vec<String>);

impl Outputs {
    fn add(&mut self, name: impl Into<String>) -> String {
        let name = name.into();
        self.0.push(name.clone());
        name
    }

    fn csv<R: AsRef<[f64]>>(&mut self, out: &Path, name: &str, header: &[&str], rows: &[R]) -> Result<()> {
        write_real_csv(out.join(self.add(name)), header, rows)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, out: &Path, name: &str, value: &T) -> Result<()> {
        write_json(out.join(self.add(name)), value)?;
        Ok(())
    }
}

/// Compact tag for a parameter value in a file name.
fn tag(x: f64) -> String {
    format!("{x}")
}

pub fn oscillator(cfg: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let p = cfg.oscillator()?;
    let grid = cfg.ratios()?;
    let scan = find_freezing_points(&p, &grid, &cfg.freezing)?;
    let mut files = Outputs::default();
    let rows: Vec<[f64; 2]> = scan.grid.iter().map(|s| [s.ratio, s.residual]).collect();
    files.csv(out, "freezing_scan.csv", &["ratio", "residual"], &rows)?;
    let rows: Vec<[f64; 2]> = scan.minima.iter().map(|s| [s.ratio, s.residual]).collect();
    files.csv(out, "freezing_points.csv", &["ratio", "residual"], &rows)?;

    let mut points = Vec::new();
    for (n, m) in scan.minima.iter().enumerate() {
        let traj = run_oscillator(&p.with_ratio(m.ratio), &cfg.flow)?;
        let rows: Vec<[f64; 9]> = traj.states.iter().map(OscillatorState::csv_row).collect();
        files.csv(out, &format!("trajectory_fp{}.csv", n + 1), &OscillatorState::CSV_HEADER, &rows)?;
        points.push(json!({
            "ratio": m.ratio,
            "residual": m.residual,
            "crossings": count_crossings(&traj, CROSSING_FLOOR),
        }));
    }
    files.json(out, "report.json", &json!({ "degenerate": scan.degenerate, "freezing_points": points }))?;
    Ok(files)
}

pub fn scan_freezing_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let template = cfg.chain()?;
    let grid = cfg.ratios()?;
    let flow = cfg.scan.flow;
    let mut files = Outputs::default();
    let mut sizes = Vec::new();
    for l in cfg.sizes()? {
        let t = SpinChainParams { length: l, ..template };
        t.validate()?;
        let report = scan_freezing(&t, &grid, &flow, cfg.scan.refine_tol)?;
        let rows: Vec<[f64; 3]> = report.points.iter().map(PPoint::csv_row).collect();
        files.csv(out, &format!("p_scan_L{l}.csv"), &PPoint::CSV_HEADER, &rows)?;
        let rows: Vec<[f64; 3]> = report.minima.iter().map(PPoint::csv_row).collect();
        files.csv(out, &format!("minima_L{l}.csv"), &PPoint::CSV_HEADER, &rows)?;

        let mut minima = Vec::new();
        for (n, m) in report.minima.iter().enumerate() {
            let p = t.with_ratio(m.ratio);
            let traj = chain_flow(&p, &flow.config(p.omega, cfg.scan.curve_stride))?;
            files.csv(
                out,
                &format!("p_curve_L{l}_min{}.csv", n + 1),
                &TRAJECTORY_HEADER,
                &trajectory_rows(&traj),
            )?;
            let p0 = traj.samples[0].p;
            minima.push(json!({
                "ratio": m.ratio,
                "P": m.p,
                "Q": m.q,
                "P0": p0,
                "suppression": p0 / m.p,
                "dips": count_dips(&traj, flow.lambda_c, &cfg.scan.dips),
            }));
        }
        sizes.push(json!({ "L": l, "minima": minima }));
    }
    files.json(out, "report.json", &json!({ "sizes": sizes }))?;
    Ok(files)
}

pub fn frequency_scaling_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let template = cfg.chain()?;
    let omegas = cfg.omegas()?;
    let Some([lo, hi]) = cfg.scan.bracket else {
        bail!("missing scan.bracket");
    };
    let tol = cfg.scan.refine_tol.unwrap_or(1e-4);
    let report = frequency_scaling(&template, &omegas, (lo, hi), &cfg.scan.flow, tol)?;
    let mut files = Outputs::default();
    let rows: Vec<[f64; 5]> = report.points.iter().map(ScalingPoint::csv_row).collect();
    files.csv(out, "frequency_scaling.csv", &ScalingPoint::CSV_HEADER, &rows)?;
    files.json(
        out,
        "fit.json",
        &json!({
            "P_loglog": report.p_loglog,
            "Q_semilog": report.q_semilog,
            "magnus_loglog": report.magnus_loglog,
        }),
    )?;
    Ok(files)
}

pub fn thermalize_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let template = cfg.chain()?;
    let ratios = match cfg.scan.ratios {
        Some(_) => cfg.ratios()?,
        None => vec![template.ratio()],
    };
    let j2s = cfg.scan.j2_values.clone().unwrap_or_else(|| vec![template.j2]);
    if j2s.is_empty() {
        bail!("scan.j2_values is empty");
    }
    let mut files = Outputs::default();
    let mut mins = Vec::new();
    let mut reports = Vec::new();
    for &j2 in &j2s {
        for &ratio in &ratios {
            let p = SpinChainParams { j2, ..template.with_ratio(ratio) };
            p.validate()?;
            let mut report = thermalize(&p, &cfg.flow, true)?;
            let traj = report.trajectory.take().expect("trajectory requested");
            files.csv(
                out,
                &format!("norms_J2_{}_r{}.csv", tag(j2), tag(ratio)),
                &TRAJECTORY_HEADER,
                &trajectory_rows(&traj),
            )?;
            let (lm, n1) = report.lambda_min.unwrap_or((f64::NAN, f64::NAN));
            mins.push([j2, ratio, lm, n1]);
            reports.push(report);
        }
    }
    files.csv(out, "lambda_min.csv", &["J2", "ratio", "lambda_min", "normH1_min"], &mins)?;
    files.json(out, "instantons.json", &reports)?;
    Ok(files)
}

pub fn dynamics_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Outputs> {
    let template = cfg.chain()?;
    let d = &cfg.dynamics;
    if d.ratios.is_empty() {
        bail!("dynamics.ratios is empty");
    }
    let mut files = Outputs::default();
    for (k, &ratio) in d.ratios.iter().enumerate() {
        let p = template.with_ratio(ratio);
        p.validate()?;
        let name = format!("series_r{}.csv", tag(ratio));
        let want_eps = d.quasienergies && k == 0;
        if d.n_periods == 0 && !want_eps {
            files.csv::<[f64; 4]>(out, &name, &StroboscopicSample::CSV_HEADER, &[])?;
            continue;
        }
        let (h0, q) = flowed_static(&p, &cfg.flow)?;
        let rows: Vec<[f64; 4]> = if d.n_periods == 0 {
            Vec::new()
        } else {
            stroboscopic_series_from(&p, h0.as_ref(), d.n_periods, d.substeps)?
                .iter()
                .map(StroboscopicSample::csv_row)
                .collect()
        };
        files.csv(out, &name, &StroboscopicSample::CSV_HEADER, &rows)?;
        if want_eps {
            let report = quasienergy_error_from(&p, h0.as_ref(), q, d.substeps)?;
            let rows: Vec<[f64; 3]> = report
                .eps_exact
                .iter()
                .zip(&report.eps_flow)
                .enumerate()
                .map(|(i, (&e, &f))| [i as f64, e, f])
                .collect();
            files.csv(out, "quasienergies.csv", &["index", "eps_exact", "eps_flow"], &rows)?;
            let hist: Vec<Vec<String>> = report
                .histogram
                .csv_rows()
                .iter()
                .map(|[edge, count]| vec![floquet_flow::io::fmt_real(*edge), format!("{}", *count as u64)])
                .collect();
            let name = files.add("quasienergy_histogram.csv");
            write_csv(out.join(name), &["log10_delta_bin", "count"], hist)?;
            files.json(out, "quasienergy.json", &report)?;
        }
    }
    Ok(files)
}
