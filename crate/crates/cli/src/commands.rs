use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use robgasp::bench::{
    calibration_benchmark, default_sample_size, emulation_benchmark, ex4_computer_model, ex4_eval_points,
    ex4_field_data, TestFunction, EX4_THETA_BOUNDS,
};
use robgasp::calibrate::{
    calibration_metrics, fit_emulator_modular, predict_calibrated, run_mcmc, CalibrationProblem, ComputerModel,
    McmcConfig, PredictionMode, ThetaPrior,
};
use robgasp::screen::{inverse_range_shares, screening_benchmark, ScreeningMethod};
use robgasp::{
    fit_mode, jr_default_params, CorrelationSpec, DesignMatrix, FitConfig, FitResult, GaspModel, JrContext, JrParams,
    Parameterization, PriorKind, PriorSpec,
};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::table::{format_table, load_table, write_text, Table};

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::config(format!("missing {what} (flag or config key)")))
}

fn load_xy(cfg: &RunConfig) -> CliResult<(Table, Vec<f64>)> {
    let design = load_table(require(&cfg.design, "--design")?)?;
    let out = load_table(require(&cfg.output, "--output")?)?;
    if out.ncols() != 1 {
        return Err(CliError::data(format!("output file has {} columns, expected 1", out.ncols())));
    }
    if out.nrows() != design.nrows() {
        return Err(CliError::data(format!(
            "design has {} rows but output has {} rows",
            design.nrows(),
            out.nrows()
        )));
    }
    let y = out.column(0);
    Ok((design, y))
}

fn jr_params(cfg: &RunConfig, design: &DesignMatrix, context: JrContext) -> CliResult<JrParams> {
    let d = jr_default_params(design, context)?;
    Ok(JrParams::new(cfg.prior_a.unwrap_or(d.a), cfg.prior_b.unwrap_or(d.b), d.c)?)
}

fn build_model(cfg: &RunConfig, design: &Table, y: Vec<f64>, nugget: bool) -> CliResult<GaspModel> {
    let d = DesignMatrix::new(design.data.clone())?;
    let spec = CorrelationSpec::uniform(cfg.kernel, d.dim())?;
    Ok(GaspModel::new(d, y, cfg.mean.clone(), spec, nugget)?)
}

fn warn_robustness(fit: &FitResult) {
    if fit.robustness.flag_near_identity {
        eprintln!(
            "WARNING: fitted correlation matrix is near the identity (max off-diagonal {:e})",
            fit.robustness.max_offdiag_corr
        );
    }
    if fit.robustness.flag_near_ones {
        eprintln!(
            "WARNING: fitted correlation matrix is near all ones (min off-diagonal {:e})",
            fit.robustness.min_offdiag_corr
        );
    }
}

fn fit_summary(fit: &FitResult, names: &[String], shares: &[f64]) -> String {
    let mut s = String::from("input,name,gamma,xi,beta,p\n");
    for l in 0..fit.gamma.len() {
        s += &format!(
            "{},{},{:?},{:?},{:?},{:?}\n",
            l + 1,
            names[l],
            fit.gamma[l],
            fit.xi[l],
            fit.beta[l],
            shares[l]
        );
    }
    s
}

fn fit_scalars(fit: &FitResult) -> String {
    let mut s = String::from("key,value\n");
    s += &format!("parameterization,{}\n", fit.parameterization.name());
    s += &format!("eta,{:?}\n", fit.eta);
    s += &format!("sigma2,{:?}\n", fit.sigma2);
    for (k, v) in fit.theta_m.iter().enumerate() {
        s += &format!("theta_m_{},{v:?}\n", k + 1);
    }
    s += &format!("log_post,{:?}\n", fit.log_post);
    s += &format!("min_offdiag_corr,{:?}\n", fit.robustness.min_offdiag_corr);
    s += &format!("max_offdiag_corr,{:?}\n", fit.robustness.max_offdiag_corr);
    s += &format!("flag_near_identity,{}\n", fit.robustness.flag_near_identity);
    s += &format!("flag_near_ones,{}\n", fit.robustness.flag_near_ones);
    s += &format!("iterations,{}\n", fit.trace.iterations);
    s += &format!("converged,{}\n", fit.trace.converged);
    s += &format!("grad_norm,{:?}\n", fit.trace.grad_norm);
    s
}

pub fn cmd_emulate(cfg: &RunConfig) -> CliResult<()> {
    let (design, y) = load_xy(cfg)?;
    let model = build_model(cfg, &design, y, cfg.nugget)?;
    let jr = jr_params(cfg, model.design(), JrContext::Emulation)?;
    let prior = match cfg.prior {
        PriorKind::Jr => PriorSpec::jr(jr.clone(), cfg.nugget),
        PriorKind::Reference => PriorSpec::reference(cfg.nugget),
    };
    let mut fc = FitConfig::new(cfg.parameterization, prior);
    fc.tol = cfg.tol;
    fc.max_iter = cfg.max_iter;
    fc.multistart = cfg.multistart;
    fc.seed = cfg.seed;
    fc.validate()?;
    let fit = fit_mode(&model, &fc)?;
    warn_robustness(&fit);
    let shares = inverse_range_shares(&fit.beta, &jr.c, cfg.p0)?;
    write_text(&cfg.out.join("fit.csv"), &fit_summary(&fit, &design.names, &shares.p))?;
    write_text(&cfg.out.join("fit_summary.csv"), &fit_scalars(&fit))?;

    let (names, x) = match &cfg.predict {
        Some(p) => {
            let t = load_table(p)?;
            if t.ncols() != design.ncols() {
                return Err(CliError::data(format!(
                    "prediction inputs have {} columns, design has {}",
                    t.ncols(),
                    design.ncols()
                )));
            }
            (t.names, t.data)
        }
        None => (design.names.clone(), design.data.clone()),
    };
    let pd = fit.predict(&model, &x)?;
    let (lo, hi) = pd.interval(0.95);
    let m = x.nrows();
    let mut cols = names;
    cols.extend(["mean", "lower", "upper", "extrapolated"].map(String::from));
    let mut out = DMatrix::zeros(m, cols.len());
    let p = x.ncols();
    for i in 0..m {
        for j in 0..p {
            out[(i, j)] = x[(i, j)];
        }
        out[(i, p)] = pd.mean[i];
        out[(i, p + 1)] = lo[i];
        out[(i, p + 2)] = hi[i];
        out[(i, p + 3)] = pd.extrapolated[i] as u8 as f64;
    }
    write_text(&cfg.out.join("predictions.csv"), &format_table(&cols, &out))?;
    eprintln!("fit written to {}", cfg.out.display());
    Ok(())
}

pub fn cmd_screen(cfg: &RunConfig) -> CliResult<()> {
    if cfg.prior_given && cfg.prior != PriorKind::Jr {
        return Err(CliError::config("screening uses the JR prior"));
    }
    let (design, y) = load_xy(cfg)?;
    let model = build_model(cfg, &design, y, cfg.nugget)?;
    let jr = jr_params(cfg, model.design(), JrContext::Emulation)?;
    let mut fc = FitConfig::new(Parameterization::Beta, PriorSpec::jr(jr.clone(), cfg.nugget));
    fc.tol = cfg.tol;
    fc.max_iter = cfg.max_iter;
    fc.multistart = cfg.multistart;
    fc.seed = cfg.seed;
    fc.validate()?;
    let fit = fit_mode(&model, &fc)?;
    warn_robustness(&fit);
    let res = inverse_range_shares(&fit.beta, &jr.c, cfg.p0)?;
    let mut s = String::from("input,name,p,selected\n");
    for l in 0..res.p.len() {
        s += &format!("{},{},{:?},{}\n", l + 1, design.names[l], res.p[l], res.selected[l]);
    }
    write_text(&cfg.out.join("screen.csv"), &s)?;
    write_text(&cfg.out.join("fit_summary.csv"), &fit_scalars(&fit))?;
    eprintln!("screening written to {}", cfg.out.display());
    Ok(())
}

pub fn cmd_calibrate(cfg: &RunConfig) -> CliResult<()> {
    let example = match cfg.example.as_deref() {
        None => false,
        Some("ex4") => true,
        Some(other) => return Err(CliError::config(format!("unknown built-in example '{other}' (known: ex4)"))),
    };
    let (field, y) = if cfg.design.is_some() || cfg.output.is_some() {
        let (t, y) = load_xy(cfg)?;
        (DesignMatrix::new(t.data)?, y)
    } else if example {
        ex4_field_data(cfg.seed)?
    } else {
        return Err(CliError::config("calibrate needs --design/--output or --example ex4"));
    };
    let (computer, default_bounds) = if example {
        if field.dim() != 1 {
            return Err(CliError::data(format!("example ex4 has 1 field input, data has {}", field.dim())));
        }
        let f: robgasp::calibrate::ModelFn = Arc::new(ex4_computer_model);
        (ComputerModel::Function(f), vec![EX4_THETA_BOUNDS])
    } else {
        let rd = load_table(require(&cfg.runs_design, "--runs-design")?)?;
        let ro = load_table(require(&cfg.runs_output, "--runs-output")?)?;
        if ro.ncols() != 1 || ro.nrows() != rd.nrows() {
            return Err(CliError::data(format!(
                "model runs: design has {} rows, output has {} rows and {} columns",
                rd.nrows(),
                ro.nrows(),
                ro.ncols()
            )));
        }
        let runs = DesignMatrix::new(rd.data)?;
        let bounds = runs.bounds()[field.dim()..].to_vec();
        let em = fit_emulator_modular(runs, ro.column(0), field.dim())?;
        (ComputerModel::Emulator(Arc::new(em)), bounds)
    };
    let bounds = cfg.theta_bounds.clone().unwrap_or(default_bounds);
    let nugget = cfg.calibrate_nugget;
    let prior = match cfg.prior {
        PriorKind::Jr => PriorSpec::jr(jr_params(cfg, &field, JrContext::Calibration)?, nugget),
        PriorKind::Reference => PriorSpec::reference(nugget),
    };
    let spec = CorrelationSpec::uniform(cfg.kernel, field.dim())?;
    let prob = CalibrationProblem::new(
        field.clone(),
        y.clone(),
        computer,
        ThetaPrior::uniform(bounds),
        cfg.mean.clone(),
        spec,
        prior,
    )?;
    let chain = run_mcmc(&prob, &McmcConfig::new(cfg.s, cfg.s0, cfg.seed))?;
    write_text(&cfg.out.join("chain.csv"), &chain.to_csv())?;

    let x = match &cfg.predict {
        Some(p) => load_table(p)?.data,
        None if example => ex4_eval_points(),
        None => field.matrix().clone(),
    };
    if x.ncols() != field.dim() {
        return Err(CliError::data(format!(
            "prediction inputs have {} columns, field inputs have {}",
            x.ncols(),
            field.dim()
        )));
    }
    let mut pred_csv = String::new();
    let mut metrics = String::from("mode,nrmse,p_ci95,l_ci95\n");
    let truth: Option<Vec<f64>> =
        example.then(|| (0..x.nrows()).map(|i| TestFunction::Ex4.eval(&[x[(i, 0)]])).collect());
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    for mode in [PredictionMode::ModelOnly, PredictionMode::ModelPlusDiscrepancy] {
        let pred = predict_calibrated(&prob, &chain, &x, mode, cfg.seed)?;
        if pred.extrapolated.iter().any(|e| *e) {
            eprintln!(
                "WARNING: {} prediction inputs lie outside the emulator training box",
                pred.extrapolated.iter().filter(|e| **e).count()
            );
        }
        let body = pred.to_csv(&x);
        let mut lines = body.lines();
        let head = lines.next().unwrap_or("");
        if pred_csv.is_empty() {
            pred_csv = format!("mode,{head}\n");
        }
        for l in lines {
            pred_csv += &format!("{mode:?},{l}\n");
        }
        if let Some(t) = &truth {
            let m = calibration_metrics(&pred, t, ybar)?;
            metrics += &format!("{mode:?},{:?},{:?},{:?}\n", m.nrmse, m.p_ci, m.l_ci);
        }
    }
    write_text(&cfg.out.join("predictions.csv"), &pred_csv)?;
    if truth.is_some() {
        write_text(&cfg.out.join("metrics.csv"), &metrics)?;
    }
    let mut summary = String::from("key,value\n");
    summary += &format!("accept_theta,{:?}\naccept_cov,{:?}\n", chain.accept_theta, chain.accept_cov);
    for l in 0..prob.p_theta() {
        summary += &format!("median_theta_{},{:?}\n", l + 1, chain.median_theta(l));
    }
    for l in 0..field.dim() {
        summary += &format!("median_xi_{},{:?}\n", l + 1, chain.median_xi(l));
    }
    write_text(&cfg.out.join("summary.csv"), &summary)?;
    eprintln!("calibration written to {}", cfg.out.display());
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig) -> CliResult<()> {
    let case_id = cfg
        .case
        .as_deref()
        .ok_or_else(|| CliError::config("bench needs --case"))?;
    let case: TestFunction = case_id.parse()?;
    let dir = &cfg.out;
    match case {
        TestFunction::Ex4 => {
            let (s, s0) = if cfg.paper_scale { (100_000, 20_000) } else { (cfg.s, cfg.s0) };
            let r = calibration_benchmark(cfg.seed, s, s0)?;
            write_text(&dir.join("ex4_table.csv"), &r.to_csv())?;
            write_text(&dir.join("ex4_curves.csv"), &r.curves_csv())?;
            write_text(&dir.join("ex4_xi.csv"), &r.xi_csv())?;
            write_text(&dir.join("ex4_timings.csv"), &r.timings_csv())?;
        }
        TestFunction::Ex1I | TestFunction::Ex1II | TestFunction::Ex1III | TestFunction::Ex1IV | TestFunction::Ex1V => {
            let reps = cfg.replicates.unwrap_or(if cfg.paper_scale { 200 } else { 20 });
            let n_star = cfg.n_star.unwrap_or(if cfg.paper_scale { 10_000 } else { 2_000 });
            let n = cfg.n.unwrap_or(default_sample_size(case));
            let priors = if cfg.prior_given {
                vec![cfg.prior]
            } else {
                vec![PriorKind::Jr, PriorKind::Reference]
            };
            let mut table = String::from("case,prior,n,replicates,avg_nrmse\n");
            for prior in priors {
                let r = emulation_benchmark(case, n, reps, prior, n_star, cfg.seed)?;
                let tag = format!("{}_{}", case.id(), format!("{prior:?}").to_ascii_lowercase());
                write_text(&dir.join(format!("{tag}_replicates.csv")), &r.to_csv())?;
                write_text(&dir.join(format!("{tag}_timings.csv")), &r.timings_csv())?;
                table += &format!("{},{:?},{},{},{:?}\n", case.id(), prior, n, reps, r.avg_nrmse);
            }
            write_text(&dir.join(format!("{}_table.csv", case.id())), &table)?;
        }
        _ => {
            let method = match cfg.method.as_str() {
                "inverse-range" => ScreeningMethod::InverseRange,
                "sobol" => ScreeningMethod::SobolEmulator,
                other => return Err(CliError::config(format!("unknown screening method '{other}'"))),
            };
            let reps = cfg.replicates.unwrap_or(if cfg.paper_scale { 1000 } else { 100 });
            let n = cfg.n.unwrap_or(default_sample_size(case));
            let r = screening_benchmark(case, n, method, reps, cfg.p0, cfg.seed)?;
            write_text(&dir.join(format!("{}_screening.csv", case.id())), &r.to_csv())?;
            write_text(&dir.join(format!("{}_summary.csv", case.id())), &r.summary_csv())?;
        }
    }
    eprintln!("benchmark {} written to {}", case.id(), dir.display());
    Ok(())
}
