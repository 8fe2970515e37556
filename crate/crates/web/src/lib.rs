//! Browser bindings for the static demo page in `www/`. Every export returns
//! a JSON string; the `*_json` functions are the same operations callable
//! from native code and tests.

use chanshape::metrics::{effective_rank, w_offdiag, ChannelMatrix, Shape};
use chanshape::objective::ObjectiveSpec;
use chanshape::optimizer::{climb, OptimizerConfig};
use chanshape::rmt::{closed_form_means, pdf_reff, pdf_w1};
use chanshape::room::{ArmConfiguration, ResonatorModel, RoomSpec, VirtualRoom};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Densities {
    reff: Vec<[f64; 2]>,
    w1: Vec<[f64; 2]>,
    mean_reff: f64,
    mean_w1: f64,
}

pub fn densities_json(points: usize, w_max: f64) -> Result<String, String> {
    if points < 2 || !(w_max > 0.0) {
        return Err("need at least 2 points and a positive w range".into());
    }
    let grid = |lo: f64, hi: f64| (0..points).map(move |i| lo + (hi - lo) * i as f64 / (points - 1) as f64);
    let reff = grid(1.0, 2.0)
        .map(|r| Ok([r, pdf_reff(r)?]))
        .collect::<chanshape::error::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let w1 = grid(0.0, w_max)
        .map(|w| Ok([w, pdf_w1(w)?]))
        .collect::<chanshape::error::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let (mean_reff, mean_w1) = closed_form_means();
    serde_json::to_string(&Densities {
        reff,
        w1,
        mean_reff,
        mean_w1,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PhasePoint {
    frequency: f64,
    open_deg: f64,
    closed_deg: f64,
    contrast_deg: f64,
}

pub fn resonator_phase_json(quality_factor: f64, f_lo: f64, f_hi: f64, points: usize) -> Result<String, String> {
    let model = ResonatorModel {
        quality_factor,
        ..Default::default()
    };
    model.validate().map_err(|e| e.to_string())?;
    if !(f_lo > 0.0 && f_hi > f_lo) || points < 2 {
        return Err("need 0 < f_lo < f_hi and at least 2 points".into());
    }
    let rows: Vec<PhasePoint> = (0..points)
        .map(|i| {
            let f = f_lo + (f_hi - f_lo) * i as f64 / (points - 1) as f64;
            PhasePoint {
                frequency: f,
                open_deg: model.phase(false, f).to_degrees(),
                closed_deg: model.phase(true, f).to_degrees(),
                contrast_deg: model.phase_contrast_degrees(f),
            }
        })
        .collect();
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Snapshot {
    effective_rank: f64,
    w1: f64,
    magnitudes: Vec<Vec<f64>>,
}

impl Snapshot {
    fn of(h: &ChannelMatrix) -> Result<Self, String> {
        let magnitudes = (0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| h.get(i, j).norm()).collect())
            .collect();
        Ok(Snapshot {
            effective_rank: effective_rank(h).map_err(|e| e.to_string())?,
            w1: w_offdiag(h, Shape::Diagonal).map_err(|e| e.to_string())?,
            magnitudes,
        })
    }
}

#[derive(Serialize)]
struct ClimbDemo {
    incumbent: Vec<f64>,
    measurements: u64,
    stop_reason: String,
    before: Snapshot,
    after: Snapshot,
}

/// Builds a small noise-free room and climbs towards a diagonal channel at
/// `frequency`.
pub fn climb_json(seed: u64, units: usize, frequency: f64, budget: u64) -> Result<String, String> {
    let room = VirtualRoom::build(&RoomSpec {
        seed,
        units,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let obj = ObjectiveSpec::g1(frequency);
    let cfg = OptimizerConfig {
        max_flips_per_step: 15,
        max_measurements: Some(budget),
        target_value: Some(0.02),
        stall_limit: None,
        rng_seed: seed.wrapping_add(1),
    };
    let mut failure = None;
    let trace = climb(
        |c: &ArmConfiguration| match room.measure(c, &obj) {
            Ok(h) => obj.value(&h),
            Err(e) => {
                failure.get_or_insert(e.to_string());
                f64::INFINITY
            }
        },
        units,
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    if let Some(e) = failure {
        return Err(e);
    }
    let at = |c: &ArmConfiguration| room.true_channel_at(c, frequency).map_err(|e| e.to_string());
    let demo = ClimbDemo {
        incumbent: trace.incumbent_curve(),
        measurements: trace.measurement_count,
        stop_reason: format!("{:?}", trace.stop_reason),
        before: Snapshot::of(&at(&ArmConfiguration::zeros(units))?)?,
        after: Snapshot::of(&at(&trace.best_config)?)?,
    };
    serde_json::to_string(&demo).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn densities(points: usize, w_max: f64) -> Result<String, JsValue> {
    densities_json(points, w_max).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn resonator_phase(quality_factor: f64, f_lo: f64, f_hi: f64, points: usize) -> Result<String, JsValue> {
    resonator_phase_json(quality_factor, f_lo, f_hi, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn climb_demo(seed: u32, units: usize, frequency: f64, budget: u32) -> Result<String, JsValue> {
    climb_json(seed as u64, units, frequency, budget as u64).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn densities_cover_both_supports() {
        let v: Value = serde_json::from_str(&densities_json(21, 5.0).unwrap()).unwrap();
        assert_eq!(v["reff"].as_array().unwrap().len(), 21);
        assert_eq!(v["w1"][20][0], 5.0);
        assert!((v["mean_w1"].as_f64().unwrap() - 1.1837).abs() < 1e-3);
        assert!(densities_json(1, 5.0).is_err());
    }

    #[test]
    fn phase_contrast_is_bounded() {
        let v: Value = serde_json::from_str(&resonator_phase_json(2.7, 500.0, 2500.0, 11).unwrap()).unwrap();
        for p in v.as_array().unwrap() {
            let c = p["contrast_deg"].as_f64().unwrap();
            assert!((0.0..=180.0).contains(&c));
        }
        assert!(resonator_phase_json(-1.0, 500.0, 2500.0, 11).is_err());
    }

    #[test]
    fn climb_improves_and_repeats() {
        let a = climb_json(3, 40, 1300.0, 400).unwrap();
        assert_eq!(a, climb_json(3, 40, 1300.0, 400).unwrap());
        let v: Value = serde_json::from_str(&a).unwrap();
        let curve = v["incumbent"].as_array().unwrap();
        assert!(curve.last().unwrap().as_f64() <= curve[0].as_f64());
    }
}
