//! Browser bindings for the static demo page in `www/`.
//!
//! Every export takes plain values and returns JSON text or a flat `Vec<f64>`,
//! so the same functions run natively in tests.

use delaystab_core::charmat::CharMatrix;
use delaystab_core::io::parse_system;
use delaystab_core::model::HistoryFunction;
use delaystab_core::spectrum::{default_window, find_roots, Rect, ROOT_RESIDUAL_TOL};
use delaystab_core::timedomain::{build_modal_history, default_step, simulate};
use num_complex::Complex64;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn error_json(e: impl std::fmt::Display) -> String {
    json!({ "error": e.to_string() }).to_string()
}

/// Default search window `[x_min, x_max, y_max]` for a spec document.
#[wasm_bindgen]
pub fn default_window_json(spec_json: &str) -> String {
    match parse_system(spec_json) {
        Ok(f) => {
            let w = default_window(&f.spec);
            json!({ "x_min": w.x_min, "x_max": w.x_max, "y_max": w.y_max }).to_string()
        }
        Err(e) => error_json(e),
    }
}

/// Zeros of `det Delta` in `[x_min, x_max] x [0, y_max]` with the windowed abscissa.
#[wasm_bindgen]
pub fn roots_json(spec_json: &str, x_min: f64, x_max: f64, y_max: f64) -> String {
    let file = match parse_system(spec_json) {
        Ok(f) => f,
        Err(e) => return error_json(e),
    };
    match find_roots(&file.spec, &Rect::new(x_min, x_max, 0.0, y_max), ROOT_RESIDUAL_TOL) {
        Ok(r) => {
            let roots: Vec<_> = r
                .roots
                .iter()
                .map(|e| json!({ "re": e.z.re, "im": e.z.im, "residual": e.residual, "count": e.cluster_count }))
                .collect();
            json!({
                "abscissa": r.abscissa,
                "total_winding": r.total_winding,
                "roots": roots,
                "note": r.truncation_note,
            })
            .to_string()
        }
        Err(e) => error_json(e),
    }
}

/// `log10 |det Delta|` on an `nx x ny` grid, row by row from `y_min` upward.
/// Returns an empty vector when the document does not parse.
#[wasm_bindgen]
pub fn det_field(spec_json: &str, x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Vec<f64> {
    let Ok(file) = parse_system(spec_json) else {
        return Vec::new();
    };
    let cm = CharMatrix::new(&file.spec);
    let dx = (x_max - x_min) / (nx.max(2) - 1) as f64;
    let dy = (y_max - y_min) / (ny.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let z = Complex64::new(x_min + i as f64 * dx, y_min + j as f64 * dy);
            out.push(cm.det(z).norm().max(1e-300).log10());
        }
    }
    out
}

/// Simulated first component as interleaved `[t0, x0, t1, x1, ...]` on `[-tau_star, horizon]`.
///
/// `history` is `"constant"`, `"spec"` (initial data from the document) or
/// `"modal"` (mode of the rightmost zero in the default window).
#[wasm_bindgen]
pub fn trajectory(spec_json: &str, horizon: f64, history: &str) -> Vec<f64> {
    let Ok(file) = parse_system(spec_json) else {
        return Vec::new();
    };
    let spec = &file.spec;
    let h = match history {
        "spec" => match &file.history {
            Some(hist) => hist.step,
            None => return Vec::new(),
        },
        _ => match default_step(spec) {
            Ok(h) => h,
            Err(_) => return Vec::new(),
        },
    };
    let hist = match history {
        "spec" => file.history.clone(),
        "modal" => find_roots(spec, &default_window(spec), ROOT_RESIDUAL_TOL)
            .ok()
            .and_then(|r| {
                r.roots
                    .iter()
                    .filter(|e| e.z.im >= 0.0)
                    .max_by(|a, b| a.z.re.total_cmp(&b.z.re))
                    .map(|e| e.z)
            })
            .and_then(|z| build_modal_history(spec, z, h).ok()),
        _ => HistoryFunction::constant(spec, h, 1.0).ok(),
    };
    let Some(hist) = hist else {
        return Vec::new();
    };
    match simulate(spec, &hist, horizon.max(spec.tau_star), h) {
        Ok(traj) => traj
            .values
            .iter()
            .enumerate()
            .flat_map(|(i, v)| [traj.time(i), v[(0, 0)]])
            .collect(),
        Err(_) => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"{"kind": "ide", "dimension": 1, "tau_star": 1.0,
        "delay_terms": [{"tau": 1.0, "A": [[0.5]]}]}"#;

    #[test]
    fn roots_of_scalar_ide() {
        let v: serde_json::Value = serde_json::from_str(&roots_json(SPEC, -2.0, 1.0, 10.0)).unwrap();
        assert_eq!(v["roots"].as_array().unwrap().len(), 2);
        assert!((v["abscissa"].as_f64().unwrap() - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bad_spec_reports_error() {
        let v: serde_json::Value = serde_json::from_str(&roots_json("{", -2.0, 1.0, 10.0)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("parse error"));
        assert!(det_field("{", 0.0, 1.0, 0.0, 1.0, 4, 4).is_empty());
    }

    #[test]
    fn field_has_requested_shape() {
        let f = det_field(SPEC, -2.0, 1.0, 0.0, 10.0, 30, 20);
        assert_eq!(f.len(), 600);
        // far right: det -> 1
        assert!(f[29].abs() < 0.2);
    }

    #[test]
    fn constant_history_trajectory() {
        let t = trajectory(SPEC, 3.0, "constant");
        assert_eq!(t.len() % 2, 0);
        let at = |time: f64| {
            t.chunks(2)
                .find(|p| (p[0] - time).abs() < 1e-9)
                .map(|p| p[1])
                .unwrap()
        };
        assert_eq!(at(-0.5), 1.0);
        assert_eq!(at(0.5), -0.5);
        assert_eq!(at(1.5), 0.25);
        assert!(!trajectory(SPEC, 3.0, "modal").is_empty());
    }
}
