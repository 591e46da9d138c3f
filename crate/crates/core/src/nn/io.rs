//! JSON model files.
//!
//! ```text
//! {"order": N, "widths": [...], "activation": "relu", "head": "bound",
//!  "gamma": 0.1, "layers": [{"w": [[...], ...], "b": [...]}, ...]}
//! ```
//!
//! `density_normalized`, `input_shift` and `input_scale` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Head, MlpModel, ModelSpec};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct LayerJson {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    order: usize,
    widths: Vec<usize>,
    activation: String,
    head: String,
    gamma: f64,
    layers: Vec<LayerJson>,
    #[serde(default)]
    density_normalized: bool,
    #[serde(default)]
    input_shift: Option<Vec<f64>>,
    #[serde(default)]
    input_scale: Option<Vec<f64>>,
}

pub fn model_to_json(model: &MlpModel) -> String {
    let layers = (0..model.n_layers())
        .map(|l| {
            let slot = model.slots[l];
            LayerJson {
                w: model.layer_weights(l).chunks_exact(slot.n_in).map(<[f64]>::to_vec).collect(),
                b: model.layer_bias(l).to_vec(),
            }
        })
        .collect();
    let doc = ModelJson {
        order: model.order,
        widths: model.widths.clone(),
        activation: model.activation.as_str().into(),
        head: model.head.as_str().into(),
        gamma: model.gamma,
        layers,
        density_normalized: model.density_normalized,
        input_shift: Some(model.input_shift.clone()),
        input_scale: Some(model.input_scale.clone()),
    };
    // f64 values round-trip exactly through serde_json
    serde_json::to_string(&doc).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<MlpModel> {
    let doc: ModelJson = serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
    let head = Head::parse(&doc.head)?;
    let activation = Activation::parse(&doc.activation)?;
    let n = doc.order + 1;
    if doc.widths.len() < 2 || doc.widths[0] != n || *doc.widths.last().unwrap() != n {
        return Err(Error::Parse(format!(
            "widths {:?} must start and end with order + 1 = {n}",
            doc.widths
        )));
    }
    let spec = ModelSpec {
        order: doc.order,
        hidden: doc.widths[1..doc.widths.len() - 1].to_vec(),
        activation,
        head,
        gamma: doc.gamma,
    };
    let mut model = MlpModel::zeros(&spec)?;
    if doc.layers.len() != model.n_layers() {
        return Err(Error::Parse(format!(
            "expected {} layers, found {}",
            model.n_layers(),
            doc.layers.len()
        )));
    }
    for (l, layer) in doc.layers.iter().enumerate() {
        let slot = model.slots[l];
        if layer.b.len() != slot.n_out
            || layer.w.len() != slot.n_out
            || layer.w.iter().any(|row| row.len() != slot.n_in)
        {
            return Err(Error::Parse(format!(
                "layer {l} must be {} x {} with {} biases",
                slot.n_out, slot.n_in, slot.n_out
            )));
        }
        let flat: Vec<f64> = layer.w.iter().flatten().copied().collect();
        model.params[slot.w_range()].copy_from_slice(&flat);
        model.params[slot.b_range()].copy_from_slice(&layer.b);
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Parse("non-finite parameter".into()));
    }
    let shift = doc.input_shift.unwrap_or_else(|| vec![0.0; n]);
    let scale = doc.input_scale.unwrap_or_else(|| vec![1.0; n]);
    model
        .set_input_transform(doc.density_normalized, shift, scale)
        .map_err(|e| Error::Parse(format!("input transform: {e}")))?;
    Ok(model)
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(head: Head) -> ModelSpec {
        ModelSpec {
            order: 6,
            hidden: vec![8, 5, 8],
            activation: Activation::Tanh,
            head,
            gamma: 0.1,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        for head in [Head::Bound, Head::Distinct] {
            let mut model = MlpModel::init(&spec(head), 9).unwrap();
            model
                .set_input_transform(true, vec![1.0, 0.1, 0.2, 0.0, 0.1, 0.0, 0.1], vec![0.3; 7])
                .unwrap();
            let back = model_from_json(&model_to_json(&model)).unwrap();
            assert_eq!(back, model);
            let m = [1.3, 0.2, 0.1, -0.05, 0.02, 0.01, 0.0];
            assert_eq!(back.closure_weights(&m).unwrap(), model.closure_weights(&m).unwrap());
        }
    }

    #[test]
    fn file_round_trip() {
        let model = MlpModel::init(&spec(Head::Bound), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn unknown_head_is_a_version_error() {
        let model = MlpModel::init(&spec(Head::Bound), 2).unwrap();
        let text = model_to_json(&model).replace("\"bound\"", "\"uniform\"");
        assert!(matches!(model_from_json(&text), Err(Error::Version(_))));
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        assert!(matches!(model_from_json("{\"order\": 3,"), Err(Error::Parse(_))));
        let model = MlpModel::init(&spec(Head::Bound), 2).unwrap();
        let text = model_to_json(&model).replacen("\"widths\":[7,", "\"widths\":[6,", 1);
        assert!(matches!(model_from_json(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn minimal_document_loads() {
        let text = r#"{"order":1,"widths":[2,2],"activation":"relu","head":"distinct","gamma":0.1,
                      "layers":[{"w":[[0,0],[0,0]],"b":[0,0]}]}"#;
        let model = model_from_json(text).unwrap();
        let r = model.speeds(&[1.0, 0.0]).unwrap();
        assert!((r[1] - (2f64.ln() + 0.1)).abs() < 1e-15);
    }
}
