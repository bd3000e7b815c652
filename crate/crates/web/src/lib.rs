//! Browser demo. Every cover here is a net of points along one long Lorenz
//! orbit, so the cells sit on the attractor and orbits rarely escape. Each
//! exported function returns a JSON string for the page to draw.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use segdyn::cover::{calibrate_centers, cell_measure, metric_entropy, minimal_cover};
use segdyn::flow::{advance, sample_trajectory};
use segdyn::segments::{build_segments, max_difference};
use segdyn::symbolic::{encode_orbit, ks_entropy, reconstruct_pseudo_orbit, shadowing_profile, true_orbit_windows};
use segdyn::transitions::estimate_transitions;
use segdyn::{CalibrationConfig, Cover, FlowModel, IntegratorConfig, Partition, StateVector};

const STEP: f64 = 1e-3;
/// Points per time unit along the reference orbit.
const ORBIT_DENSITY: f64 = 100.0;
const ORBIT_SPAN: f64 = 60.0;

fn reference_orbit(
    model: &FlowModel,
    cfg: &IntegratorConfig,
    skip: f64,
    span: f64,
) -> segdyn::Result<Vec<StateVector>> {
    let x = advance(model, &vec![1.0, 1.0, 20.0].into(), skip, cfg)?;
    Ok(sample_trajectory(model, &x, span, (span * ORBIT_DENSITY) as usize + 1, cfg)?.states)
}

/// Greedy net: keeps every orbit point farther than `spacing` from all kept points.
fn net(points: &[StateVector], spacing: f64) -> Vec<StateVector> {
    let mut kept: Vec<StateVector> = Vec::new();
    for p in points {
        if kept.iter().all(|c| c.distance(p) > spacing) {
            kept.push(p.clone());
        }
    }
    kept
}

fn check(name: &str, v: f64, lo: f64, hi: f64) -> Result<(), String> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(format!("{name} must lie in [{lo}, {hi}], got {v}"))
    }
}

fn points(xs: &[StateVector]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| x.to_vec()).collect()
}

/// Segments from a net of the given spacing, plus their `M_d` curve.
pub fn segments_value(spacing: f64, horizon: f64) -> Result<Value, String> {
    check("spacing", spacing, 1.0, 20.0)?;
    check("horizon", horizon, 0.05, 2.0)?;
    let model = FlowModel::lorenz();
    let cfg = IntegratorConfig::rk4(STEP);
    let centers = net(
        &reference_orbit(&model, &cfg, 20.0, ORBIT_SPAN).map_err(|e| e.to_string())?,
        spacing,
    );
    let radii = vec![spacing; centers.len()];
    let cover = Cover::from_centers(centers, &radii).map_err(|e| e.to_string())?;
    let lib = build_segments(&model, &cover, horizon, 41, 2.0 * spacing, &cfg).map_err(|e| e.to_string())?;
    let md = max_difference(&lib);
    Ok(json!({
        "cells": lib.n_cells(),
        "times": lib.times(),
        "md": md,
        "segments": lib.segments.iter().map(|s| points(&s.samples.states)).collect::<Vec<_>>(),
    }))
}

/// Sampled Markov matrix on a net cover, with the metric entropy of the
/// orbit's cell frequencies and both entropy-rate variants.
pub fn transitions_value(spacing: f64, horizon: f64, samples_per_cell: usize, seed: u64) -> Result<Value, String> {
    check("spacing", spacing, 2.0, 20.0)?;
    check("horizon", horizon, 0.05, 2.0)?;
    check("samples_per_cell", samples_per_cell as f64, 1.0, 500.0)?;
    let model = FlowModel::lorenz();
    let cfg = IntegratorConfig::rk4(STEP);
    let orbit = reference_orbit(&model, &cfg, 20.0, ORBIT_SPAN).map_err(|e| e.to_string())?;
    let centers = net(&orbit, spacing);
    let radii = vec![spacing; centers.len()];
    let partition = Partition::new(Cover::from_centers(centers, &radii).map_err(|e| e.to_string())?);
    let (gamma, p) =
        estimate_transitions(&model, &partition, horizon, samples_per_cell, &cfg, seed).map_err(|e| e.to_string())?;
    let measure = cell_measure(&partition, &orbit).map_err(|e| e.to_string())?;
    let entropy = ks_entropy(&p);
    let n = p.n_cells();
    let dense: Vec<Vec<f64>> = p
        .rows()
        .iter()
        .map(|row| {
            let mut r = vec![0.0; n];
            for (to, v) in row {
                r[to.slot()] = *v;
            }
            r
        })
        .collect();
    Ok(json!({
        "cells": n,
        "p": dense,
        "admissible": gamma.n_admissible(),
        "escape": gamma.cells().map(|c| gamma.escape_fraction(c)).collect::<Vec<_>>(),
        "metric_entropy": metric_entropy(&measure).map_err(|e| e.to_string())?,
        "ks_unweighted_sum": entropy.unweighted_sum,
        "ks_stationary_weighted": entropy.stationary_weighted,
    }))
}

/// True orbit against the pseudo-orbit of its encoding, on a calibrated
/// cover whose radii keep every segment within `epsilon` of nearby orbits.
pub fn shadow_value(epsilon: f64, horizon: f64, word_length: usize, start: f64) -> Result<Value, String> {
    check("epsilon", epsilon, 0.5, 10.0)?;
    check("horizon", horizon, 0.05, 0.5)?;
    check("word_length", word_length as f64, 2.0, 100.0)?;
    check("start", start, 0.0, 100.0)?;
    let model = FlowModel::lorenz();
    let cfg = IntegratorConfig::rk4(STEP);
    let err = |e: segdyn::Error| e.to_string();
    let centers = net(
        &reference_orbit(&model, &cfg, 20.0, ORBIT_SPAN).map_err(err)?,
        epsilon / 2.0,
    );
    let n_t = 11;
    let mut calib = CalibrationConfig::new(epsilon / 2.0);
    calib.time_samples = n_t;
    calib.boundary_samples = 8;
    let radii = calibrate_centers(&model, &centers, horizon, epsilon, &cfg, &calib).map_err(err)?;
    let cover = minimal_cover(&centers, &radii, &centers).map_err(err)?;
    let lib = build_segments(&model, &cover, horizon, n_t, epsilon, &cfg).map_err(err)?;
    let partition = Partition::new(cover);
    // a start further along the reference orbit, so it is not a centre
    let x0 = advance(&model, &vec![1.0, 1.0, 20.0].into(), 20.0 + ORBIT_SPAN + start, &cfg).map_err(err)?;
    let word = encode_orbit(&model, &partition, &x0, word_length, horizon, &cfg).map_err(err)?;
    let pseudo = reconstruct_pseudo_orbit(&lib, &word).map_err(err)?;
    let profile = shadowing_profile(&model, &x0, &pseudo, &cfg).map_err(err)?;
    let truth = true_orbit_windows(&model, &x0, word.len(), horizon, n_t, &cfg).map_err(err)?;
    let times: Vec<f64> = pseudo.samples().map(|(_, t, _)| t).collect();
    Ok(json!({
        "cells": lib.n_cells(),
        "epsilon": epsilon,
        "word": word.word.iter().map(|c| c.get()).collect::<Vec<_>>(),
        "complete": word.complete,
        "times": times,
        "pseudo": pseudo.samples().map(|(_, _, x)| x.to_vec()).collect::<Vec<_>>(),
        "truth": truth.iter().flatten().map(|x| x.to_vec()).collect::<Vec<_>>(),
        // largest error in each window, plotted at the window's end
        "window_ends": (1..=word.len()).map(|j| j as f64 * horizon).collect::<Vec<_>>(),
        "errors": profile,
        "max_error": profile.iter().copied().fold(0.0, f64::max),
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn lorenz_segments(spacing: f64, horizon: f64) -> Result<String, JsError> {
    to_js(segments_value(spacing, horizon))
}

#[wasm_bindgen]
pub fn transition_heatmap(spacing: f64, horizon: f64, samples_per_cell: usize, seed: u32) -> Result<String, JsError> {
    to_js(transitions_value(spacing, horizon, samples_per_cell, seed as u64))
}

#[wasm_bindgen]
pub fn shadowed_orbit(epsilon: f64, horizon: f64, word_length: usize, start: f64) -> Result<String, JsError> {
    to_js(shadow_value(epsilon, horizon, word_length, start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_share_the_time_grid() {
        let v = segments_value(6.0, 0.5).unwrap();
        let cells = v["cells"].as_u64().unwrap() as usize;
        assert!(cells > 5);
        assert_eq!(v["segments"].as_array().unwrap().len(), cells);
        let md = v["md"].as_array().unwrap();
        assert_eq!(md.len(), v["times"].as_array().unwrap().len());
        assert!(md.iter().all(|x| x.as_f64().unwrap() > 0.0));
    }

    #[test]
    fn heatmap_rows_are_stochastic_or_empty() {
        let v = transitions_value(8.0, 0.2, 20, 1).unwrap();
        for row in v["p"].as_array().unwrap() {
            let s: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
        }
        assert!(v["metric_entropy"].as_f64().unwrap() > 0.0);
        assert!(v["ks_stationary_weighted"].as_f64().unwrap() >= 0.0);
        assert_eq!(transitions_value(8.0, 0.2, 20, 1).unwrap(), v);
    }

    #[test]
    fn shadow_stays_within_epsilon() {
        let v = shadow_value(2.0, 0.1, 10, 3.0).unwrap();
        assert!(v["max_error"].as_f64().unwrap() <= 2.0 + 1e-6);
        let n = v["pseudo"].as_array().unwrap().len();
        assert_eq!(v["truth"].as_array().unwrap().len(), n);
        assert_eq!(v["times"].as_array().unwrap().len(), n);
        let windows = v["word"].as_array().unwrap().len();
        assert_eq!(v["errors"].as_array().unwrap().len(), windows);
        assert_eq!(v["window_ends"].as_array().unwrap().len(), windows);
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        assert!(segments_value(0.0, 0.5).is_err());
        assert!(transitions_value(8.0, 0.2, 0, 1).is_err());
        assert!(shadow_value(2.0, 0.1, 1, 0.0).is_err());
    }
}
