//! WebAssembly bindings for the demo page. Each function returns a JSON
//! string the page draws from.

use afa_core::analytics::{pelt_changepoints, Penalty};
use afa_core::consensus::{consensus_spans, token_agreement, AnnotatorLabeling, ConsensusConfig, Task};
use afa_core::fixtures::{timeseries, TimeseriesParams};
use afa_core::sampler::{mmr_select, MmrCandidate};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Angles of the demo candidates: three bunches of unequal width on the
/// unit circle, spread by a golden-ratio sequence.
pub fn demo_angles() -> Vec<f64> {
    const BUNCHES: [(f64, f64, usize); 3] = [(-0.8, 0.35, 18), (0.25, 0.9, 14), (1.1, 0.2, 8)];
    let mut out = Vec::new();
    let mut u = 0.5f64;
    for (centre, width, n) in BUNCHES {
        for _ in 0..n {
            u = (u + 0.618_033_988_75).fract();
            out.push(centre + width * (u - 0.5));
        }
    }
    out
}

pub fn mmr_json(lambda: f64, quota: usize) -> Result<String, String> {
    let angles = demo_angles();
    let ids: Vec<String> = (0..angles.len()).map(|i| format!("p{i:02}")).collect();
    let vectors: Vec<Vec<f64>> = angles.iter().map(|a| vec![a.cos(), a.sin()]).collect();
    let candidates = MmrCandidate::from_cluster(&ids, &vectors);
    let picks = mmr_select(&candidates, quota, lambda).map_err(|e| e.to_string())?;
    let points: Vec<_> = candidates
        .iter()
        .zip(&angles)
        .map(|(c, a)| {
            let rank = picks.iter().find(|p| p.id == c.id).map(|p| p.rank);
            json!({"id": c.id, "angle": a, "centrality": c.centrality, "rank": rank})
        })
        .collect();
    Ok(json!({"lambda": lambda, "points": points}).to_string())
}

pub fn pelt_json(penalty: f64, seed: u64) -> Result<String, String> {
    let series = timeseries(&TimeseriesParams::default(), seed).map_err(|e| e.to_string())?;
    let bic = Penalty::Bic.resolve(&series);
    let result = pelt_changepoints(&series, Penalty::Value(penalty)).map_err(|e| e.to_string())?;
    Ok(json!({
        "periods": series.periods,
        "categories": series.categories,
        "shares": series.shares(),
        "changepoints": result.changepoints,
        "segments": result.segments,
        "penalty": penalty,
        "bic": bic,
    })
    .to_string())
}

/// Tokens and annotator masks of the worked consensus example.
pub fn consensus_example() -> (Vec<&'static str>, Vec<AnnotatorLabeling>) {
    let tokens = vec!["BlackRock", "Inc.", "stated", "that", "climate-focused", "portfolios", "will", "drive", "growth."];
    let masks: [[u8; 9]; 3] = [
        [1, 0, 0, 0, 1, 1, 1, 1, 1],
        [1, 1, 0, 0, 1, 1, 1, 1, 1],
        [1, 0, 0, 0, 0, 1, 1, 1, 1],
    ];
    let labelings = masks
        .iter()
        .enumerate()
        .map(|(i, m)| AnnotatorLabeling {
            annotator_id: format!("A{}", i + 1),
            article_id: "example".into(),
            task: Task::ActorSpan,
            token_mask: Some(m.to_vec()),
            label: None,
        })
        .collect();
    (tokens, labelings)
}

pub fn consensus_json(tau: f64, f1_threshold: f64) -> Result<String, String> {
    let (tokens, labelings) = consensus_example();
    let agreement = token_agreement(&labelings).map_err(|e| e.to_string())?;
    let spans = consensus_spans(&labelings, ConsensusConfig { tau, f1_threshold }).map_err(|e| e.to_string())?;
    let masks: Vec<_> = labelings.iter().map(|l| &l.token_mask).collect();
    Ok(json!({
        "tokens": tokens,
        "masks": masks,
        "agreement": agreement,
        "spans": spans.iter().map(|s| json!({"start": s.start_token, "end": s.end_token, "support": s.support})).collect::<Vec<_>>(),
        "tau": tau,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn mmr(lambda: f64, quota: usize) -> Result<String, JsError> {
    mmr_json(lambda, quota).map_err(js_err)
}

#[wasm_bindgen]
pub fn pelt(penalty: f64, seed: u32) -> Result<String, JsError> {
    pelt_json(penalty, u64::from(seed)).map_err(js_err)
}

#[wasm_bindgen]
pub fn consensus(tau: f64, f1_threshold: f64) -> Result<String, JsError> {
    consensus_json(tau, f1_threshold).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn mmr_ranks_quota_points() {
        let v: Value = serde_json::from_str(&mmr_json(0.5, 6).unwrap()).unwrap();
        let ranked = v["points"].as_array().unwrap().iter().filter(|p| !p["rank"].is_null()).count();
        assert_eq!(ranked, 6);
        assert!(mmr_json(1.5, 3).is_err());
    }

    #[test]
    fn pelt_finds_planted_break_at_bic() {
        let v: Value = serde_json::from_str(&pelt_json(0.0, 7).unwrap()).unwrap();
        let bic = v["bic"].as_f64().unwrap();
        let v: Value = serde_json::from_str(&pelt_json(bic, 7).unwrap()).unwrap();
        let cps: Vec<u64> = v["changepoints"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
        assert!(cps.iter().any(|&c| (9..=11).contains(&c)), "{cps:?}");
    }

    #[test]
    fn consensus_example_spans() {
        let v: Value = serde_json::from_str(&consensus_json(0.5, 0.7).unwrap()).unwrap();
        let spans: Vec<(u64, u64)> = v["spans"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| (s["start"].as_u64().unwrap(), s["end"].as_u64().unwrap()))
            .collect();
        assert_eq!(spans, [(0, 0), (4, 8)]);
    }
}
