//! Versioned model files.
//!
//! Nets are stored as their config plus a flat parameter array in layer
//! order (weights row-major, then biases, per layer). Parameters are encoded
//! as 16-digit hex of the IEEE-754 bits, so a save/load round trip is
//! bit-exact. A ranker file bundles every constituent net, the variant tag,
//! and the widths.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{net_init, FeedForwardNet, LinearMap, NetConfig};
use crate::rankers::{
    AllPairwiseRanker, AttentionRanker, PairwiseRanker, RankerVariant, TruePairwiseRanker,
    VariantKind,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn encode_params(params: &[f64]) -> Vec<String> {
    params.iter().map(|p| format!("{:016x}", p.to_bits())).collect()
}

fn decode_params(hex: &[String]) -> Result<Vec<f64>> {
    hex.iter()
        .map(|h| {
            u64::from_str_radix(h, 16)
                .map(f64::from_bits)
                .map_err(|e| Error::Serialize(format!("bad parameter encoding {h:?}: {e}")))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct NetFile {
    config: NetConfig,
    params: Vec<String>,
}

fn net_to_file(net: &FeedForwardNet) -> NetFile {
    let mut flat = Vec::with_capacity(net.parameter_count());
    net.flatten_params_into(&mut flat);
    NetFile {
        config: net.config().clone(),
        params: encode_params(&flat),
    }
}

fn net_from_file(file: &NetFile) -> Result<FeedForwardNet> {
    let mut net = net_init(file.config.clone())?;
    let flat = decode_params(&file.params)?;
    if flat.len() != net.parameter_count() {
        return Err(Error::Serialize(format!(
            "net file has {} parameters, config implies {}",
            flat.len(),
            net.parameter_count()
        )));
    }
    net.unflatten_params_from(&flat, 0)?;
    Ok(net)
}

#[derive(Serialize, Deserialize)]
struct LinearMapFile {
    rows: usize,
    cols: usize,
    weights: Vec<String>,
}

fn linear_map_to_file(map: &LinearMap) -> LinearMapFile {
    LinearMapFile {
        rows: map.rows,
        cols: map.cols,
        weights: encode_params(&map.weights),
    }
}

fn linear_map_from_file(file: &LinearMapFile) -> Result<LinearMap> {
    let weights = decode_params(&file.weights)?;
    if weights.len() != file.rows * file.cols {
        return Err(Error::Serialize(format!(
            "linear map file has {} weights for shape {}x{}",
            weights.len(),
            file.rows,
            file.cols
        )));
    }
    Ok(LinearMap { rows: file.rows, cols: file.cols, weights })
}

/// Serialized net with its config; round trips bit-exactly.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    version: u32,
    variant: String,
    feature_width: usize,
    query_width: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<bool>,
    nets: std::collections::BTreeMap<String, NetFile>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    vectors: std::collections::BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    linear_maps: std::collections::BTreeMap<String, LinearMapFile>,
}

fn ranker_to_file(ranker: &RankerVariant) -> ModelFile {
    let mut nets = std::collections::BTreeMap::new();
    let mut vectors = std::collections::BTreeMap::new();
    let mut linear_maps = std::collections::BTreeMap::new();
    let (feature_width, query_width, k_width, e_width, residual) = match ranker {
        RankerVariant::Pairwise(r) => {
            nets.insert("f".to_string(), net_to_file(&r.f));
            (r.feature_width, r.query_width, None, None, None)
        }
        RankerVariant::TruePairwiseAvg(r) | RankerVariant::TruePairwiseGbt(r) => {
            nets.insert("h".to_string(), net_to_file(&r.h));
            (r.feature_width, r.query_width, None, None, None)
        }
        RankerVariant::AllPairwiseApfn(r) => {
            nets.insert("f".to_string(), net_to_file(&r.base.f));
            nets.insert("phi_sup".to_string(), net_to_file(&r.phi_sup));
            nets.insert("psi_embed".to_string(), net_to_file(&r.psi_embed));
            nets.insert("phi_sim".to_string(), net_to_file(&r.phi_sim));
            nets.insert("apln".to_string(), net_to_file(&r.apln));
            vectors.insert("beta_sup".to_string(), encode_params(&r.beta_sup));
            vectors.insert("beta_sim".to_string(), encode_params(&r.beta_sim));
            (
                r.base.feature_width,
                r.base.query_width,
                Some(r.k_width),
                Some(r.e_width),
                Some(r.residual),
            )
        }
        RankerVariant::AllPairwiseAttn(r) => {
            nets.insert("f".to_string(), net_to_file(&r.base.f));
            nets.insert("embed".to_string(), net_to_file(&r.embed));
            nets.insert("apln".to_string(), net_to_file(&r.apln));
            linear_maps.insert("proj_query".to_string(), linear_map_to_file(&r.proj_query));
            linear_maps.insert("proj_key".to_string(), linear_map_to_file(&r.proj_key));
            linear_maps.insert("proj_value".to_string(), linear_map_to_file(&r.proj_value));
            (
                r.base.feature_width,
                r.base.query_width,
                None,
                Some(r.e_width),
                Some(r.residual),
            )
        }
    };
    ModelFile {
        version: MODEL_FORMAT_VERSION,
        variant: ranker.kind().as_str().to_string(),
        feature_width,
        query_width,
        k_width,
        e_width,
        residual,
        nets,
        vectors,
        linear_maps,
    }
}

fn take_net(file: &ModelFile, name: &str) -> Result<FeedForwardNet> {
    let net = file
        .nets
        .get(name)
        .ok_or_else(|| Error::Serialize(format!("model file is missing net {name:?}")))?;
    net_from_file(net)
}

fn take_vector(file: &ModelFile, name: &str) -> Result<Vec<f64>> {
    let hex = file
        .vectors
        .get(name)
        .ok_or_else(|| Error::Serialize(format!("model file is missing vector {name:?}")))?;
    decode_params(hex)
}

fn take_linear_map(file: &ModelFile, name: &str) -> Result<LinearMap> {
    let map = file
        .linear_maps
        .get(name)
        .ok_or_else(|| Error::Serialize(format!("model file is missing projection {name:?}")))?;
    linear_map_from_file(map)
}

fn ranker_from_file(file: &ModelFile) -> Result<RankerVariant> {
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::Serialize(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            file.version
        )));
    }
    let kind: VariantKind = file.variant.parse()?;
    let base = |net: FeedForwardNet| PairwiseRanker {
        f: net,
        feature_width: file.feature_width,
        query_width: file.query_width,
    };
    match kind {
        VariantKind::Pairwise => Ok(RankerVariant::Pairwise(base(take_net(file, "f")?))),
        VariantKind::TruePairwiseAvg | VariantKind::TruePairwiseGbt => {
            let ranker = TruePairwiseRanker {
                h: take_net(file, "h")?,
                feature_width: file.feature_width,
                query_width: file.query_width,
            };
            Ok(match kind {
                VariantKind::TruePairwiseAvg => RankerVariant::TruePairwiseAvg(ranker),
                _ => RankerVariant::TruePairwiseGbt(ranker),
            })
        }
        VariantKind::AllPairwiseApfn => {
            let k_width = file
                .k_width
                .ok_or_else(|| Error::Serialize("missing k_width".to_string()))?;
            let e_width = file
                .e_width
                .ok_or_else(|| Error::Serialize("missing e_width".to_string()))?;
            let ranker = AllPairwiseRanker {
                base: base(take_net(file, "f")?),
                phi_sup: take_net(file, "phi_sup")?,
                psi_embed: take_net(file, "psi_embed")?,
                phi_sim: take_net(file, "phi_sim")?,
                beta_sup: take_vector(file, "beta_sup")?,
                beta_sim: take_vector(file, "beta_sim")?,
                apln: take_net(file, "apln")?,
                k_width,
                e_width,
                residual: file.residual.unwrap_or(true),
            };
            if ranker.beta_sup.len() != k_width || ranker.beta_sim.len() != k_width {
                return Err(Error::Serialize("bias vector width mismatch".to_string()));
            }
            Ok(RankerVariant::AllPairwiseApfn(ranker))
        }
        VariantKind::AllPairwiseAttn => {
            let e_width = file
                .e_width
                .ok_or_else(|| Error::Serialize("missing e_width".to_string()))?;
            Ok(RankerVariant::AllPairwiseAttn(AttentionRanker {
                base: base(take_net(file, "f")?),
                embed: take_net(file, "embed")?,
                proj_query: take_linear_map(file, "proj_query")?,
                proj_key: take_linear_map(file, "proj_key")?,
                proj_value: take_linear_map(file, "proj_value")?,
                apln: take_net(file, "apln")?,
                e_width,
                residual: file.residual.unwrap_or(true),
            }))
        }
    }
}

/// Writes a ranker bundle as JSON.
pub fn save_ranker(path: &Path, ranker: &RankerVariant) -> Result<()> {
    let file = ranker_to_file(ranker);
    let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Reads a ranker bundle back, bit-exactly.
pub fn load_ranker(path: &Path) -> Result<RankerVariant> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::Serialize(e.to_string()))?;
    ranker_from_file(&file)
}

/// Human-readable metadata for a ranker file (the `inspect` surface).
pub fn ranker_metadata(ranker: &RankerVariant) -> serde_json::Value {
    let mut nets = serde_json::Map::new();
    let mut push = |name: &str, net: &FeedForwardNet| {
        nets.insert(
            name.to_string(),
            serde_json::json!({
                "layer_widths": net.config().layer_widths,
                "parameters": net.parameter_count(),
            }),
        );
    };
    match ranker {
        RankerVariant::Pairwise(r) => push("f", &r.f),
        RankerVariant::TruePairwiseAvg(r) | RankerVariant::TruePairwiseGbt(r) => push("h", &r.h),
        RankerVariant::AllPairwiseApfn(r) => {
            push("f", &r.base.f);
            push("phi_sup", &r.phi_sup);
            push("psi_embed", &r.psi_embed);
            push("phi_sim", &r.phi_sim);
            push("apln", &r.apln);
        }
        RankerVariant::AllPairwiseAttn(r) => {
            push("f", &r.base.f);
            push("embed", &r.embed);
            push("apln", &r.apln);
        }
    }
    serde_json::json!({
        "format_version": MODEL_FORMAT_VERSION,
        "variant": ranker.kind().as_str(),
        "total_parameters": ranker.parameter_count(),
        "nets": serde_json::Value::Object(nets),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use crate::rankers::MultivariateConfig;

    fn sample_variants() -> Vec<RankerVariant> {
        let base = PairwiseRanker::init(8, 2, &[6], Activation::Relu, 1).unwrap();
        let mv = MultivariateConfig {
            k_width: 4,
            e_width: 4,
            feature_net_hidden: vec![5],
            head_hidden: vec![5],
            activation: Activation::Relu,
            seed: 2,
            residual: true,
        };
        vec![
            RankerVariant::Pairwise(base.clone()),
            RankerVariant::TruePairwiseAvg(
                TruePairwiseRanker::init(8, 2, &[6], Activation::Tanh, 3).unwrap(),
            ),
            RankerVariant::TruePairwiseGbt(
                TruePairwiseRanker::init(8, 2, &[6], Activation::Relu, 4).unwrap(),
            ),
            RankerVariant::AllPairwiseApfn(
                AllPairwiseRanker::init(base.clone(), &mv).unwrap(),
            ),
            RankerVariant::AllPairwiseAttn(AttentionRanker::init(base, &mv).unwrap()),
        ]
    }

    #[test]
    fn every_variant_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for (i, variant) in sample_variants().into_iter().enumerate() {
            let path = dir.path().join(format!("model_{i}.json"));
            save_ranker(&path, &variant).unwrap();
            let loaded = load_ranker(&path).unwrap();
            assert_eq!(variant, loaded, "variant {i} changed across the round trip");
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let variant = sample_variants().remove(0);
        save_ranker(&path, &variant).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_ranker(&path).unwrap_err(), Error::Serialize(_)));
    }

    #[test]
    fn hex_encoding_handles_special_values() {
        let values = [0.0, -0.0, 1.5, -2.25e-300, f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0];
        let decoded = decode_params(&encode_params(&values)).unwrap();
        for (a, b) in values.iter().zip(&decoded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn metadata_reports_counts() {
        let variant = sample_variants().remove(3);
        let meta = ranker_metadata(&variant);
        assert_eq!(meta["variant"], "all-pairwise-apfn");
        assert_eq!(
            meta["total_parameters"].as_u64().unwrap() as usize,
            variant.parameter_count()
        );
    }
}
