//! Adapter shape configurations for whole models and trainable-parameter
//! accounting.
//!
//! Presets attach adapters to the query and value projections of every
//! transformer layer. The dense variant uses ten pairs per projection (five
//! filter shapes, each twice). The identity variant fixes `A_i = I` and
//! uses one square `p × p` block `B_i` per prime `p ≤ 97`, with
//! `n_a = ⌈n / p⌉` so the padded input covers the layer.

use std::fmt;
use std::str::FromStr;

use crate::adapter::PairShape;
use crate::error::MokaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelPreset {
    Llama2_7b,
    Llama3_8b,
    Custom,
}

impl ModelPreset {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelPreset::Llama2_7b => "llama2-7b",
            ModelPreset::Llama3_8b => "llama3-8b",
            ModelPreset::Custom => "custom",
        }
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelPreset {
    type Err = MokaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llama2-7b" => Ok(ModelPreset::Llama2_7b),
            "llama3-8b" => Ok(ModelPreset::Llama3_8b),
            "custom" => Ok(ModelPreset::Custom),
            other => Err(MokaError::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Dense `A_i`, ten pairs per projection.
    Moka,
    /// Identity `A_i`, prime-sized `B_i` on both projections.
    MokaS,
    /// Identity variant on the query projection only.
    MokaSQueryOnly,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Moka => "moka",
            Variant::MokaS => "moka_s",
            Variant::MokaSQueryOnly => "moka_s-qonly",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = MokaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moka" => Ok(Variant::Moka),
            "moka_s" => Ok(Variant::MokaS),
            "moka_s-qonly" => Ok(Variant::MokaSQueryOnly),
            other => Err(MokaError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Adapters attached to one projection matrix of shape `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionShape {
    pub name: String,
    pub out_dim: usize,
    pub in_dim: usize,
    pub pairs: Vec<PairShape>,
}

impl ProjectionShape {
    /// Factor parameters plus one gate logit per pair.
    pub fn trainable_params(&self) -> usize {
        self.pairs.iter().map(PairShape::trainable_params).sum::<usize>() + self.pairs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeConfig {
    pub model: ModelPreset,
    pub variant: Variant,
    pub layers: usize,
    pub projections: Vec<ProjectionShape>,
}

/// One failed dimension constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub projection: String,
    pub pair: usize,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} pair {}: {}", self.projection, self.pair, self.reason)
    }
}

pub const HIDDEN: usize = 4096;
pub const LLAMA_LAYERS: usize = 32;
/// Value projection output width of the grouped-query model (8 KV heads × 128).
pub const LLAMA3_KV_DIM: usize = 1024;

/// Primes in `2..=97`.
pub fn small_primes() -> Vec<usize> {
    (2..=97usize)
        .filter(|&p| (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0))
        .collect()
}

/// `(A, B)` shapes used for square `4096 × 4096` projections.
pub fn square_filter_shapes() -> [PairShape; 5] {
    [
        PairShape::new((64, 64), (64, 64)),
        PairShape::new((32, 128), (128, 32)),
        PairShape::new((128, 32), (32, 128)),
        PairShape::new((16, 256), (256, 16)),
        PairShape::new((256, 16), (16, 256)),
    ]
}

/// `(A, B)` shapes for the `1024 × 4096` value projection.
pub fn kv_filter_shapes() -> [PairShape; 5] {
    [
        PairShape::new((32, 64), (32, 64)),
        PairShape::new((16, 128), (64, 32)),
        PairShape::new((64, 32), (16, 128)),
        PairShape::new((8, 256), (128, 16)),
        PairShape::new((128, 16), (8, 256)),
    ]
}

fn twice(shapes: [PairShape; 5]) -> Vec<PairShape> {
    shapes.iter().chain(shapes.iter()).copied().collect()
}

/// Identity-`A` pairs with `B_i: p × (ratio·p)` for every small prime.
pub fn prime_identity_pairs(in_dim: usize, ratio: usize) -> Vec<PairShape> {
    small_primes()
        .into_iter()
        .map(|p| {
            let n_b = ratio * p;
            PairShape::identity(in_dim.div_ceil(n_b), (p, n_b))
        })
        .collect()
}

impl ShapeConfig {
    pub fn preset(model: ModelPreset, variant: Variant) -> Result<Self, MokaError> {
        let proj = |name: &str, out_dim, in_dim, pairs| ProjectionShape {
            name: name.to_string(),
            out_dim,
            in_dim,
            pairs,
        };
        let v_out = match model {
            ModelPreset::Llama2_7b => HIDDEN,
            ModelPreset::Llama3_8b => LLAMA3_KV_DIM,
            ModelPreset::Custom => {
                return Err(MokaError::Config(
                    "custom models are loaded from a config file".into(),
                ))
            }
        };
        // B_i for the narrow value projection is p × 4p so that m_a·m_b
        // still reaches the output width.
        let v_ratio = HIDDEN / v_out;
        let projections = match variant {
            Variant::Moka => {
                let v_shapes = if v_out == HIDDEN {
                    square_filter_shapes()
                } else {
                    kv_filter_shapes()
                };
                vec![
                    proj("q", HIDDEN, HIDDEN, twice(square_filter_shapes())),
                    proj("v", v_out, HIDDEN, twice(v_shapes)),
                ]
            }
            Variant::MokaS => vec![
                proj("q", HIDDEN, HIDDEN, prime_identity_pairs(HIDDEN, 1)),
                proj("v", v_out, HIDDEN, prime_identity_pairs(HIDDEN, v_ratio)),
            ],
            Variant::MokaSQueryOnly => {
                vec![proj("q", HIDDEN, HIDDEN, prime_identity_pairs(HIDDEN, 1))]
            }
        };
        Ok(Self {
            model,
            variant,
            layers: LLAMA_LAYERS,
            projections,
        })
    }
}

/// `layers × Σ_projections [Σ_i (|A_i| + |B_i|) + r]`, with identity `A_i`
/// contributing nothing.
pub fn count_trainable_params(config: &ShapeConfig) -> usize {
    config.layers
        * config
            .projections
            .iter()
            .map(ProjectionShape::trainable_params)
            .sum::<usize>()
}

/// Every pair that cannot serve its projection.
pub fn validate_config(config: &ShapeConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.layers == 0 {
        out.push(Violation {
            projection: "<model>".into(),
            pair: 0,
            reason: "layer count must be positive".into(),
        });
    }
    for proj in &config.projections {
        if proj.pairs.is_empty() {
            out.push(Violation {
                projection: proj.name.clone(),
                pair: 0,
                reason: "no pairs".into(),
            });
        }
        for (i, pair) in proj.pairs.iter().enumerate() {
            for reason in pair.violations(proj.out_dim, proj.in_dim) {
                out.push(Violation {
                    projection: proj.name.clone(),
                    pair: i,
                    reason,
                });
            }
        }
    }
    out
}

/// `5243520` → `"5.2M"`.
pub fn format_millions(count: usize) -> String {
    format!("{:.1}M", count as f64 / 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes_up_to_97() {
        let p = small_primes();
        assert_eq!(p.len(), 25);
        assert_eq!(p.first(), Some(&2));
        assert_eq!(p.last(), Some(&97));
        assert_eq!(p.iter().map(|p| p * p).sum::<usize>(), 65_796);
    }

    #[test]
    fn preset_counts() {
        let count = |m, v| count_trainable_params(&ShapeConfig::preset(m, v).unwrap());
        assert_eq!(count(ModelPreset::Llama2_7b, Variant::Moka), 5_243_520);
        assert_eq!(count(ModelPreset::Llama2_7b, Variant::MokaS), 4_212_544);
        assert_eq!(count(ModelPreset::Llama3_8b, Variant::Moka), 3_932_800);
        assert_eq!(count(ModelPreset::Llama3_8b, Variant::MokaSQueryOnly), 2_106_272);
        // 32 * (65_821 + 4 * 65_796 + 25)
        assert_eq!(count(ModelPreset::Llama3_8b, Variant::MokaS), 10_528_960);
    }

    #[test]
    fn rounding() {
        assert_eq!(format_millions(5_243_520), "5.2M");
        assert_eq!(format_millions(4_212_544), "4.2M");
        assert_eq!(format_millions(3_932_800), "3.9M");
        assert_eq!(format_millions(2_106_272), "2.1M");
    }

    #[test]
    fn presets_are_valid() {
        for m in [ModelPreset::Llama2_7b, ModelPreset::Llama3_8b] {
            for v in [Variant::Moka, Variant::MokaS, Variant::MokaSQueryOnly] {
                let cfg = ShapeConfig::preset(m, v).unwrap();
                assert!(validate_config(&cfg).is_empty(), "{m} {v}: {:?}", validate_config(&cfg));
            }
        }
    }

    #[test]
    fn prime_blocks_cover_the_input() {
        let pairs = prime_identity_pairs(HIDDEN, 1);
        for (pair, p) in pairs.iter().zip(small_primes()) {
            let n_a = (HIDDEN - 1) / p + 1;
            assert_eq!(pair.a_cols, n_a);
            assert!(n_a * p >= HIDDEN && (n_a - 1) * p < HIDDEN);
            assert!(pair.violations(HIDDEN, HIDDEN).is_empty());
        }
    }

    #[test]
    fn undersized_pair_is_reported() {
        let cfg = ShapeConfig {
            model: ModelPreset::Custom,
            variant: Variant::Moka,
            layers: 1,
            projections: vec![ProjectionShape {
                name: "q".into(),
                out_dim: 4,
                in_dim: 5,
                pairs: vec![PairShape::new((2, 2), (2, 2))],
            }],
        };
        let v = validate_config(&cfg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].pair, 0);
        assert!(v[0].to_string().contains("n_a*n_b = 2*2 = 4 < n = 5"), "{}", v[0]);
    }

    #[test]
    fn parse_names() {
        assert_eq!("llama3-8b".parse::<ModelPreset>().unwrap(), ModelPreset::Llama3_8b);
        assert_eq!("moka_s-qonly".parse::<Variant>().unwrap(), Variant::MokaSQueryOnly);
        assert!("gpt".parse::<ModelPreset>().is_err());
        assert!(ShapeConfig::preset(ModelPreset::Custom, Variant::Moka).is_err());
    }
}
