use serde_json::json;

use wtpgmr::dataio::{
    self, frames_from_json, gaussians_json, step_gaussians_json, AlphaSearchJson, DatasetFile, EmTraceJson, FrameJson,
    ModelFile, TargetLayout, TrainingMeta, TraySpec,
};
use wtpgmr::evalx::{
    fit_constraint_boxes, grid_eval, loo_cross_validate, GridSpec, LooConfig, OrientationRule, Trained,
};
use wtpgmr::optimize::optimize_alpha_with;
use wtpgmr::relevance::{default_window, fit_step_gaussians, frame_weights, relevance_profile};
use wtpgmr::tpmodel::fit_em;
use wtpgmr::{Dataset, Method, TaskFrame};

use crate::args::*;
use crate::output::{sibling, write_csv, write_text, Input, Meta};
use crate::CliError;

pub fn run(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::OptimizeAlpha(a) => optimize_alpha(a),
        Command::Reproduce(a) => reproduce(a),
        Command::CrossValidate(a) => cross_validate(a),
        Command::GridEval(a) => grid(a),
        Command::Weights(a) => weights(a),
    }
}

fn load_dataset(input: &Input) -> Result<Dataset, CliError> {
    Ok(dataio::dataset_from_json(&input.text)?)
}

fn load_model(input: &Input) -> Result<ModelFile, CliError> {
    Ok(ModelFile::from_json(&input.text)?)
}

fn check_window(window: Option<usize>, steps: usize) -> Result<usize, CliError> {
    match window {
        None => Ok(default_window(steps)),
        Some(w) if w % 2 == 1 && w <= steps => Ok(w),
        Some(w) => Err(CliError::Usage(format!("--window must be odd and at most T={steps}, got {w}"))),
    }
}

fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let ds = match a.kind {
        DataKind::Reaching => dataio::gen_reaching(a.m, a.t, a.seed, a.noise)?,
        DataKind::Pickplace => {
            let tray = TraySpec {
                layout: match a.layout {
                    Layout::Uniform => TargetLayout::Uniform,
                    Layout::Clustered => TargetLayout::Clustered,
                },
                noise: a.noise,
                ..TraySpec::default()
            };
            dataio::gen_pickplace(a.m, a.t, a.seed, &tray)?
        }
    };
    let mut file = DatasetFile::from_dataset(&ds);
    file.meta = Meta::new("gen-data", a)?.to_value();
    write_text(&a.out, &dataio::to_canonical_json(&file)?)
}

fn train(a: &TrainArgs) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::Usage("--K must be at least 1".into()));
    }
    let input = Input::read(&a.data)?;
    let ds = load_dataset(&input)?;
    let times = ds.require_aligned()?;
    let window = check_window(a.window, times.len())?;
    let fit = fit_em(&ds, a.k, &a.em.config())?;
    let sg = fit_step_gaussians(&ds)?;
    let boxes = if ds.num_frames() >= 2 {
        Some(fit_constraint_boxes(&ds, a.box_points, a.box_margin, 0, 1)?)
    } else {
        None
    };
    let model = &fit.model;
    let file = ModelFile {
        schema_version: dataio::SCHEMA_VERSION,
        k: model.num_components(),
        p: model.num_frames(),
        d: model.dim(),
        priors: model.priors().to_vec(),
        frames_models: (0..model.num_frames()).map(|j| gaussians_json(model.frame_components(j))).collect(),
        step_gaussians: Some(step_gaussians_json(&sg)),
        times,
        alpha: None,
        window,
        training_meta: TrainingMeta {
            dataset_name: ds.meta.name.clone(),
            channel_names: ds.meta.channel_names.clone(),
            em: EmTraceJson {
                log_likelihood: fit.log_likelihood.clone(),
                iterations: fit.iterations,
                converged: fit.converged,
                restarts: fit.restarts,
            },
            demo_frames: ds
                .demos()
                .iter()
                .map(|d| d.frames.iter().map(FrameJson::from_frame).collect())
                .collect(),
            constraint_boxes: boxes,
            alpha_search: None,
        },
        meta: Meta::new("train", a)?.input("data", &input).resolved("window", window).to_value(),
    };
    if !fit.converged {
        log::warn!("EM stopped after {} iterations without converging", fit.iterations);
    }
    write_text(&a.out, &file.to_json()?)
}

fn optimize_alpha(a: &OptimizeAlphaArgs) -> Result<(), CliError> {
    let model_in = Input::read(&a.model)?;
    let data_in = Input::read(&a.data)?;
    let mut file = load_model(&model_in)?;
    let ds = load_dataset(&data_in)?;
    let model = file.model()?;
    if ds.dim() != model.dim() || ds.num_frames() != model.num_frames() {
        return Err(CliError::Usage(format!(
            "data has D={} P={}, model has D={} P={}",
            ds.dim(),
            ds.num_frames(),
            model.dim(),
            model.num_frames()
        )));
    }
    let times = ds.require_aligned()?;
    let sg = match file.step_gaussians()? {
        Some(sg) if sg.num_steps() == times.len() => sg,
        _ => fit_step_gaussians(&ds)?,
    };
    let mut cfg = a.search.config();
    cfg.window = Some(check_window(a.search.window.or(Some(file.window)), times.len())?);
    let res = optimize_alpha_with(&model, &ds, &sg, &cfg)?;
    let meta = Meta::new("optimize-alpha", a)?
        .input("model", &model_in)
        .input("data", &data_in)
        .resolved("window", res.window);
    file.alpha = Some(res.alpha_star);
    file.window = res.window;
    file.training_meta.alpha_search = Some(AlphaSearchJson {
        bounds: cfg.bounds,
        scan_points: cfg.scan_points,
        loss_mode: cfg.loss.weight_mode,
        loss_star: res.loss_star,
        evaluations: res.evaluations.len(),
    });
    let previous = std::mem::take(&mut file.meta);
    let mut value = meta.to_value();
    value["previous"] = previous;
    file.meta = value;
    if let Some(trace) = &a.trace {
        write_csv(trace, &meta, |w| dataio::write_alpha_trace_csv(&res.evaluations, w))?;
    }
    write_text(&a.out, &file.to_json()?)
}

/// Rebuilds a fitted pipeline from a model file.
fn trained_from(file: &ModelFile, method: Method, alpha_override: Option<f64>) -> Result<Trained, CliError> {
    let model = file.model()?;
    let profile = match method {
        Method::Tpgmr => None,
        Method::Wtpgmr => {
            let alpha = alpha_override.or(file.alpha).ok_or_else(|| {
                CliError::Usage("model has no alpha; run optimize-alpha or pass --alpha".into())
            })?;
            let sg = file
                .step_gaussians()?
                .ok_or_else(|| CliError::Usage("model carries no step Gaussians".into()))?;
            Some(relevance_profile(&sg, alpha, file.window)?)
        }
    };
    Ok(Trained {
        model,
        times: file.times.clone(),
        profile,
    })
}

fn reproduce(a: &ReproduceArgs) -> Result<(), CliError> {
    let method = match a.method {
        MethodArg::Tpgmr => Method::Tpgmr,
        MethodArg::Wtpgmr => Method::Wtpgmr,
        MethodArg::Both => return Err(CliError::Usage("reproduce takes a single --method".into())),
    };
    let model_in = Input::read(&a.model)?;
    let frames_in = Input::read(&a.frames)?;
    let file = load_model(&model_in)?;
    let frames = frames_from_json(&frames_in.text)?;
    let trained = trained_from(&file, method, a.alpha)?;
    let traj = trained.generate(&frames)?;
    let meta = Meta::new("reproduce", a)?
        .input("model", &model_in)
        .input("frames", &frames_in)
        .resolved("alpha", trained.profile.as_ref().and_then(|p| p.alpha()));
    let channels: Vec<String> = file.training_meta.channel_names.iter().skip(1).cloned().collect();
    write_csv(&a.out, &meta, |w| dataio::write_trajectory_csv(&traj, &channels, w))
}

fn cross_validate(a: &CrossValidateArgs) -> Result<(), CliError> {
    let input = Input::read(&a.data)?;
    let ds = load_dataset(&input)?;
    let cfg = LooConfig {
        em: a.em.config(),
        alpha: a.search.config(),
    };
    let meta = Meta::new("cross-validate", a)?.input("data", &input);
    let mut methods = serde_json::Map::new();
    for method in a.method.methods() {
        let rep = loo_cross_validate(&ds, method, a.k, &cfg)?;
        write_csv(&sibling(&a.report, method.name()), &meta, |w| dataio::write_folds_csv(&rep.folds, w))?;
        methods.insert(
            method.name().into(),
            json!({
                "rmse_mean": rep.rmse_mean,
                "rmse_std": rep.rmse_std,
                "folds": rep.folds,
            }),
        );
    }
    let report = json!({
        "schema_version": dataio::SCHEMA_VERSION,
        "K": a.k,
        "demos": ds.num_demos(),
        "methods": methods,
        "meta": meta.to_value(),
    });
    write_text(&a.report, &dataio::to_canonical_json(&report)?)
}

fn parse_orientation(s: &str) -> Result<OrientationRule, CliError> {
    if s == "demo-mean" {
        return Ok(OrientationRule::DemoMean);
    }
    s.parse::<f64>()
        .ok()
        .filter(|a| a.is_finite())
        .map(OrientationRule::Fixed)
        .ok_or_else(|| CliError::Usage(format!("--orientation takes demo-mean or an angle in radians, got {s:?}")))
}

fn grid(a: &GridEvalArgs) -> Result<(), CliError> {
    if !(a.grid_extent.is_finite() && a.grid_extent >= 0.0) || a.cells == 0 {
        return Err(CliError::Usage("--grid-extent must be finite and non-negative, --cells at least 1".into()));
    }
    let rule = parse_orientation(&a.orientation)?;
    let model_in = Input::read(&a.model)?;
    let file = load_model(&model_in)?;
    let boxes = file
        .training_meta
        .constraint_boxes
        .clone()
        .ok_or_else(|| CliError::Usage("model carries no constraint boxes".into()))?;
    let demo_frames = file.demo_frames()?;
    let starts: Vec<TaskFrame> = demo_frames.iter().map(|fs| fs[boxes.start_frame].clone()).collect();
    let goal = demo_frames[0][boxes.goal_frame].clone();
    let spec = GridSpec::centered(a.grid_extent, a.cells, rule, goal.clone());
    let meta = Meta::new("grid-eval", a)?.input("model", &model_in);
    let mut methods = serde_json::Map::new();
    for method in a.method.methods() {
        let trained = trained_from(&file, method, None)?;
        let rep = grid_eval(&trained, &starts, &spec, &boxes)?;
        write_csv(&sibling(&a.report, method.name()), &meta, |w| dataio::write_grid_csv(&rep.rows, w))?;
        methods.insert(
            method.name().into(),
            json!({
                "alpha": trained.profile.as_ref().and_then(|p| p.alpha()),
                "start_angle": rep.start_angle,
                "summary": rep.summary,
            }),
        );
    }
    let report = json!({
        "schema_version": dataio::SCHEMA_VERSION,
        "cells": a.cells * a.cells,
        "goal": FrameJson::from_frame(&goal),
        "methods": methods,
        "meta": meta.to_value(),
    });
    write_text(&a.report, &dataio::to_canonical_json(&report)?)
}

fn weights(a: &WeightsArgs) -> Result<(), CliError> {
    let model_in = Input::read(&a.model)?;
    let file = load_model(&model_in)?;
    let sg = file
        .step_gaussians()?
        .ok_or_else(|| CliError::Usage("model carries no step Gaussians".into()))?;
    let alpha = a
        .alpha
        .or(file.alpha)
        .ok_or_else(|| CliError::Usage("model has no alpha; pass --alpha".into()))?;
    if !alpha.is_finite() {
        return Err(CliError::Usage(format!("--alpha must be finite, got {alpha}")));
    }
    let window = check_window(a.window.or(Some(file.window)), sg.num_steps())?;
    let profile = if a.raw {
        frame_weights(&sg, alpha)?
    } else {
        relevance_profile(&sg, alpha, window)?
    };
    let meta = Meta::new("weights", a)?
        .input("model", &model_in)
        .resolved("alpha", alpha)
        .resolved("window", if a.raw { 1 } else { window });
    write_csv(&a.out, &meta, |w| dataio::write_profile_csv(&profile, w))
}
