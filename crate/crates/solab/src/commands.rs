use serde::Serialize;
use serde_json::json;
use solab_core::coding::MarkovPartition;
use solab_core::decay::{estimate_correlations, fit_decay, theoretical_interval, CorrelationOptions, DecayInterval};
use solab_core::model::{ConditionReport, Constants};
use solab_core::norms::{
    ly_ratio_track, smoothed_indicator, sobolev_norm, sobolev_norm_dq, DictionarySpec, DqOptions, LeafDictionary, LyOptions,
    SobolevOptions,
};
use solab_core::transfer::{
    build_ulam, spectral_gap_estimate, srb_density_ulam, srb_histogram_mc, ArnoldiOptions, BoxGrid, McOptions,
};
use solab_core::transversality::{random_f_scan, tau_upper_bound, ScanSpec, TauOptions, TransversalityReport};
use solab_core::{Error as CoreError, SkewModel};

use crate::config::{axis_resolution, contraction_from_rows, ExperimentConfig};
use crate::error::{CliResult, ExitStatus};
use crate::output::{num, OutputDir, Stages};

/// Result of one subcommand: the exit status and a short JSON summary.
#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub status: ExitStatus,
    pub summary: serde_json::Value,
}

fn tau_options(cfg: &ExperimentConfig) -> TauOptions {
    let c = &cfg.certify;
    TauOptions {
        certify: solab_core::transversality::CertifyOptions { initial_cells: c.initial_cells, max_cells: c.max_cells },
        max_triples: c.max_triples,
        keep_certificates: c.keep_certificates,
    }
}

fn grid_for(model: &SkewModel, res: &[usize]) -> CliResult<BoxGrid> {
    let (nx, ny) = axis_resolution(res, model.u(), model.d());
    Ok(BoxGrid::new(nx, ny, model.k0())?)
}

#[derive(Serialize)]
struct ConditionsFile<'a> {
    constants: &'a Constants,
    conditions: &'a ConditionReport,
}

#[derive(Serialize)]
struct CertifySummary {
    q: usize,
    s: f64,
    status: &'static str,
    certified: bool,
    volume_clause: bool,
    s_star: f64,
    tau_upper: Option<usize>,
    trivial_bound: Option<usize>,
    margin: Option<f64>,
    budget_limited: bool,
    partition_level: Option<usize>,
    letters: Option<usize>,
    reason: Option<String>,
}

pub fn certify(cfg: &ExperimentConfig, out: &mut OutputDir, stages: &mut Stages) -> CliResult<CommandOutcome> {
    let mut model_cfg = cfg.model.clone();
    if let Some(s) = cfg.certify.s {
        model_cfg.s = s;
    }
    let model = model_cfg.build()?;
    let s = model.s();
    let cond = model.check_conditions_at(s);
    out.write_json("conditions.json", &ConditionsFile { constants: model.constants(), conditions: &cond })?;
    let q = cfg.certify.q;
    if !cond.volume_clause {
        let summary = CertifySummary {
            q,
            s,
            status: "not-certified",
            certified: false,
            volume_clause: false,
            s_star: cond.s_star,
            tau_upper: None,
            trivial_bound: None,
            margin: None,
            budget_limited: false,
            partition_level: None,
            letters: None,
            reason: Some(format!("volume clause fails at s = {s} (s* = {})", cond.s_star)),
        };
        out.write_json("certify.json", &summary)?;
        return Ok(CommandOutcome { status: ExitStatus::NotCertified, summary: serde_json::to_value(&summary).unwrap_or_default() });
    }
    let partition = stages.run("partition", || MarkovPartition::build(model.e(), cfg.certify.gamma))?;
    let report: TransversalityReport =
        stages.run("tau", || tau_upper_bound(&model, &partition, q, &cfg.certify.p_list, &tau_options(cfg)))?;
    let trivial = solab_core::coding::enumerate_words(&partition, q, Some(&solab_core::coding::Word(vec![0])))?.len();
    let certified = report.margin > 0.0;
    let status = if certified {
        ExitStatus::Success
    } else if report.budget_limited {
        ExitStatus::BudgetLimited
    } else {
        ExitStatus::NotCertified
    };
    out.write_json("transversality.json", &report)?;
    out.write_csv(
        "depths.csv",
        &["p", "max_count", "pairs", "transversal", "non_transversal", "undecided", "budget_limited"],
        report.rows.iter().map(|r| {
            vec![
                r.p.to_string(),
                r.max_count.to_string(),
                r.pairs.to_string(),
                r.transversal.to_string(),
                r.non_transversal.to_string(),
                r.undecided.to_string(),
                r.budget_limited.to_string(),
            ]
        }),
    )?;
    let summary = CertifySummary {
        q,
        s,
        status: crate::manifest::status_label(status),
        certified,
        volume_clause: true,
        s_star: cond.s_star,
        tau_upper: Some(report.tau_upper),
        trivial_bound: Some(trivial),
        margin: Some(report.margin),
        budget_limited: report.budget_limited,
        partition_level: Some(partition.level()),
        letters: Some(partition.n_letters()),
        reason: None,
    };
    out.write_json("certify.json", &summary)?;
    Ok(CommandOutcome { status, summary: serde_json::to_value(&summary).unwrap_or_default() })
}

pub fn density(cfg: &ExperimentConfig, out: &mut OutputDir, stages: &mut Stages) -> CliResult<CommandOutcome> {
    let model = cfg.model.build()?;
    let dc = &cfg.density;
    let grid = grid_for(&model, &dc.resolution)?;
    let op = stages.run("ulam-assembly", || build_ulam(&model, &grid, dc.sampling))?;
    let solve = stages.run("ulam-solve", || srb_density_ulam(&op, dc.tol, dc.max_iters))?;
    let mc_opts = McOptions {
        n_orbits: dc.mc.n_orbits,
        burn_in: dc.mc.burn_in,
        orbit_len: dc.mc.orbit_len,
        seed: dc.mc.seed.unwrap_or(cfg.seed),
        noise_bits: dc.mc.noise_bits,
    };
    let mc = stages.run("monte-carlo", || srb_histogram_mc(&model, &grid, &mc_opts))?;
    let tv = solve.density.tv_distance(&mc.density)?;
    let spectrum = if dc.eigenvalues >= 2 {
        let opts = ArnoldiOptions { krylov_dim: dc.krylov_dim.min(op.dim()), seed: cfg.seed };
        Some(stages.run("spectrum", || spectral_gap_estimate(&op, dc.eigenvalues, &opts))?)
    } else {
        None
    };
    let leak = op.leak_flagged(dc.leak_tol);
    let mc_degenerate = mc.escaped > 0 || mc.samples == 0;
    let status = if leak || mc_degenerate { ExitStatus::GuardTripped } else { ExitStatus::Success };
    out.write_density("ulam", &solve.density)?;
    out.write_density("mc", &mc.density)?;
    let (uv, mv) = (solve.density.values(), mc.density.values());
    out.write_csv(
        "density.csv",
        &["cell", "x", "y", "ulam", "mc"],
        (0..grid.n_cells()).map(|i| {
            let (x, y) = grid.cell_center(i);
            let join = |v: &[f64]| v.iter().map(|a| num(*a)).collect::<Vec<_>>().join(" ");
            vec![i.to_string(), join(&x), join(&y), num(uv[i]), num(mv[i])]
        }),
    )?;
    if let Some(sp) = &spectrum {
        out.write_json("spectrum.json", sp)?;
    }
    let summary = json!({
        "grid": grid,
        "ulam": op.summary(),
        "ulam_solve": solve,
        "mc": mc,
        "mc_options": mc_opts,
        "tv_distance": tv,
        "leak_flagged": leak,
        "mc_degenerate": mc_degenerate,
        "sup_ulam": solve.density.sup(),
        "sup_mc": mc.density.sup(),
        "second_modulus": spectrum.as_ref().and_then(|s| s.second()),
    });
    out.write_json("summary.json", &summary)?;
    Ok(CommandOutcome { status, summary })
}

pub fn sobolev(cfg: &ExperimentConfig, out: &mut OutputDir, stages: &mut Stages) -> CliResult<CommandOutcome> {
    let model = cfg.model.build()?;
    let sc = &cfg.sobolev;
    let grid = grid_for(&model, &sc.resolution)?;
    let op = stages.run("ulam-assembly", || build_ulam(&model, &grid, cfg.density.sampling))?;
    let start = smoothed_indicator(&grid, sc.start_fraction, sc.start_ramp)?;
    let sob = SobolevOptions { pad: sc.pad, boundary_tol: sc.boundary_tol };
    let dict = match &sc.dagger {
        Some(dg) => {
            let partition = MarkovPartition::build(model.e(), cfg.certify.gamma)?;
            let spec = DictionarySpec {
                base_points: dg.base_points,
                slope_steps: dg.slope_steps,
                plateaus: dg.plateaus.clone(),
                local_splits: dg.local_splits,
                quad_points: dg.quad_points,
            };
            Some(LeafDictionary::build(&model, &partition, spec)?)
        }
        None => None,
    };
    let mut reports = Vec::new();
    for (i, &s) in sc.s_values.iter().enumerate() {
        let opts = LyOptions {
            s,
            rho: sc.dagger.as_ref().map_or(0, |d| d.rho),
            iterations: sc.iterations,
            mollify_cells: sc.dagger.as_ref().map_or(2.0, |d| d.mollify_cells),
            sobolev: sob,
        };
        // leaf norms do not depend on s
        let d = if i == 0 { dict.as_ref() } else { None };
        reports.push(stages.run("iterates", || ly_ratio_track(&op, &start, d, &opts))?);
    }
    let plateau: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            let base = r.rows[sc.plateau_start].hs;
            let peak = r.rows[sc.plateau_start..].iter().map(|row| row.hs).fold(0.0, f64::max);
            let ratio = if base > 0.0 { peak / base } else { f64::INFINITY };
            json!({ "s": r.s, "base": base, "max": peak, "ratio": ratio, "plateau": ratio <= sc.plateau_factor, "asymptotic_ratio": r.asymptotic_ratio })
        })
        .collect();
    let fixed = stages.run("fixed-density", || srb_density_ulam(&op, sc.ulam_tol, sc.ulam_max_iters))?;
    let mut fixed_rows = Vec::new();
    for &s in &sc.s_values {
        fixed_rows.push(json!({ "s": s, "fourier": sobolev_norm(&fixed.density, s, &sob)? }));
    }
    let mut dq_rows = Vec::new();
    for &s in &sc.dq_s_values {
        let dq = sobolev_norm_dq(&fixed.density, s, &DqOptions { radius: sc.dq_radius })?;
        let fourier = sobolev_norm(&fixed.density, s, &sob)?;
        dq_rows.push(json!({ "s": s, "difference_quotient": dq, "fourier": fourier, "ratio": dq / fourier }));
    }
    let mut rows = Vec::new();
    for r in &reports {
        for row in &r.rows {
            rows.push(vec![
                row.n.to_string(),
                num(r.s),
                num(row.hs),
                row.hs_ratio.map(num).unwrap_or_default(),
                row.dagger.map(num).unwrap_or_default(),
            ]);
        }
    }
    out.write_csv("sobolev.csv", &["n", "s", "hs", "hs_ratio", "dagger_lower"], rows)?;
    let summary = json!({
        "grid": grid,
        "plateau": plateau,
        "fixed_density": { "solve": fixed, "norms": fixed_rows, "difference_quotient": dq_rows, "sup": fixed.density.sup() },
        "reports": reports,
    });
    out.write_json("sobolev.json", &summary)?;
    let short = json!({ "plateau": summary["plateau"], "fixed_density": summary["fixed_density"]["norms"] });
    Ok(CommandOutcome { status: ExitStatus::Success, summary: short })
}

pub fn decay(cfg: &ExperimentConfig, out: &mut OutputDir, stages: &mut Stages) -> CliResult<CommandOutcome> {
    let model = cfg.model.build()?;
    let dc = &cfg.decay;
    let opts = CorrelationOptions {
        n_orbits: dc.n_orbits,
        burn_in: dc.burn_in,
        orbit_len: dc.orbit_len,
        max_lag: dc.max_lag,
        seed: dc.seed.unwrap_or(cfg.seed),
        noise_bits: dc.noise_bits,
    };
    let table = stages.run("correlations", || estimate_correlations(&model, &dc.phi, &dc.psi, &opts))?;
    let (fit, refusal) = match fit_decay(&table, &dc.fit) {
        Ok(f) => (Some(f), None),
        Err(CoreError::FitRefused(m)) => (None, Some(m)),
        Err(e) => return Err(e.into()),
    };
    let interval: Option<DecayInterval> = if dc.interval {
        let partition = MarkovPartition::build(model.e(), cfg.certify.gamma)?;
        let rep = stages.run("tau", || tau_upper_bound(&model, &partition, cfg.certify.q, &cfg.certify.p_list, &tau_options(cfg)))?;
        Some(theoretical_interval(&model, cfg.certify.q, rep.tau_upper)?)
    } else {
        None
    };
    out.write_csv(
        "correlations.csv",
        &["n", "c", "sigma"],
        table.lags.iter().map(|&n| vec![n.to_string(), num(table.c[n]), num(table.sigma[n])]),
    )?;
    let summary = json!({
        "options": opts,
        "table": table,
        "fit": fit,
        "fit_refused": refusal,
        "interval": interval,
    });
    out.write_json("decay.json", &summary)?;
    let short = json!({ "fit": summary["fit"], "fit_refused": summary["fit_refused"], "interval": summary["interval"] });
    Ok(CommandOutcome { status: ExitStatus::Success, summary: short })
}

pub fn scan(cfg: &ExperimentConfig, out: &mut OutputDir, stages: &mut Stages) -> CliResult<CommandOutcome> {
    let sc = &cfg.scan;
    let e = cfg.model.expanding()?;
    let contractions = if sc.contractions.is_empty() {
        vec![cfg.model.contraction()?]
    } else {
        sc.contractions
            .iter()
            .map(|rows| contraction_from_rows(rows).map_err(|m| crate::error::CliError::schema("scan.contractions", m)))
            .collect::<CliResult<Vec<_>>>()?
    };
    let spec = ScanSpec {
        amplitudes: sc.amplitudes.clone(),
        seeds: sc.seeds.clone(),
        q: sc.q,
        depths: sc.depths.clone(),
        kmax: sc.kmax,
        r: cfg.model.r,
        s: cfg.model.s,
        gamma: sc.gamma,
    };
    let opts = TauOptions {
        certify: solab_core::transversality::CertifyOptions { initial_cells: sc.initial_cells, max_cells: sc.max_cells },
        max_triples: sc.max_triples,
        keep_certificates: false,
    };
    let mut rows = Vec::new();
    for (ci, c) in contractions.iter().enumerate() {
        let part = stages.run("scan", || random_f_scan(&e, c, &spec, cfg.model.trap(), &opts))?;
        rows.extend(part.into_iter().map(|r| (ci, r)));
    }
    out.write_csv(
        "scan.csv",
        &["contraction", "amplitude", "seed", "q", "tau_upper", "margin", "growth", "budget_limited", "certified"],
        rows.iter().map(|(ci, r)| {
            vec![
                ci.to_string(),
                num(r.amplitude),
                r.seed.to_string(),
                r.q.to_string(),
                r.tau_upper.to_string(),
                num(r.margin),
                num(r.growth),
                r.budget_limited.to_string(),
                (r.margin > 0.0).to_string(),
            ]
        }),
    )?;
    let table: Vec<serde_json::Value> =
        rows.iter().map(|(ci, r)| json!({ "contraction": ci, "row": r, "certified": r.margin > 0.0 })).collect();
    let certified = rows.iter().filter(|(_, r)| r.margin > 0.0).count();
    let budget = rows.iter().filter(|(_, r)| r.budget_limited).count();
    out.write_json("scan.json", &json!({ "spec": spec, "rows": table }))?;
    Ok(CommandOutcome { status: ExitStatus::Success, summary: json!({ "points": rows.len(), "certified": certified, "budget_limited": budget }) })
}
