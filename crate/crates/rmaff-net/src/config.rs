use serde::{Deserialize, Serialize};

use crate::error::{NetError, NetResult};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoRmaff,
    SingleRmaff,
    NoAttention,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::Full, Variant::NoRmaff, Variant::SingleRmaff, Variant::NoAttention];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRmaff => "no_rmaff",
            Variant::SingleRmaff => "single_rmaff",
            Variant::NoAttention => "no_attention",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, NetError> {
        match s {
            "full" => Ok(Variant::Full),
            "no_rmaff" => Ok(Variant::NoRmaff),
            "single_rmaff" => Ok(Variant::SingleRmaff),
            "no_attention" => Ok(Variant::NoAttention),
            other => Err(NetError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// Where the feature-enhancement modules sit: one per path before the
/// shallow-deep concat (the default reading), or a single module after it.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmaffPlacement {
    PerBranch,
    PostConcat,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downsample {
    /// Learnable stride-2 3x3 convolution.
    Conv,
    /// 2x2 max-pool followed by a 3x3 convolution.
    Pool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

/// Architecture hyperparameters; fully determines the network given the
/// input channel count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "d_shallow")]
    pub c_shallow: usize,
    #[serde(default = "d_deep")]
    pub c_deep: usize,
    #[serde(default = "d_branch")]
    pub c_branch: usize,
    #[serde(default = "d_fused")]
    pub c_fused: usize,
    #[serde(default = "d_reduction")]
    pub attention_reduction: usize,
    #[serde(default = "d_spatial_kernel")]
    pub spatial_kernel: usize,
    #[serde(default = "d_dense_layers")]
    pub dense_layers: usize,
    #[serde(default = "d_dense_growth")]
    pub dense_growth: usize,
    #[serde(default = "d_variant")]
    pub variant: Variant,
    #[serde(default = "d_placement")]
    pub rmaff_placement: RmaffPlacement,
    #[serde(default = "d_downsample")]
    pub downsample: Downsample,
    #[serde(default = "d_slope")]
    pub lrelu_slope: f64,
    #[serde(default = "d_precision")]
    pub precision: Precision,
}

fn d_shallow() -> usize {
    32
}
fn d_deep() -> usize {
    64
}
fn d_branch() -> usize {
    16
}
fn d_fused() -> usize {
    128
}
fn d_reduction() -> usize {
    4
}
fn d_spatial_kernel() -> usize {
    7
}
fn d_dense_layers() -> usize {
    4
}
fn d_dense_growth() -> usize {
    16
}
fn d_variant() -> Variant {
    Variant::Full
}
fn d_placement() -> RmaffPlacement {
    RmaffPlacement::PerBranch
}
fn d_downsample() -> Downsample {
    Downsample::Conv
}
fn d_slope() -> f64 {
    0.1
}
fn d_precision() -> Precision {
    Precision::F32
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            c_shallow: d_shallow(),
            c_deep: d_deep(),
            c_branch: d_branch(),
            c_fused: d_fused(),
            attention_reduction: d_reduction(),
            spatial_kernel: d_spatial_kernel(),
            dense_layers: d_dense_layers(),
            dense_growth: d_dense_growth(),
            variant: d_variant(),
            rmaff_placement: d_placement(),
            downsample: d_downsample(),
            lrelu_slope: d_slope(),
            precision: d_precision(),
        }
    }
}

impl NetworkConfig {
    /// Small widths for gradient checking and fast tests.
    pub fn tiny() -> Self {
        NetworkConfig {
            c_shallow: 4,
            c_deep: 4,
            c_branch: 4,
            c_fused: 8,
            attention_reduction: 4,
            spatial_kernel: 3,
            dense_layers: 2,
            dense_growth: 4,
            ..NetworkConfig::default()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> NetResult<()> {
        for (name, v) in [
            ("c_shallow", self.c_shallow),
            ("c_deep", self.c_deep),
            ("c_branch", self.c_branch),
            ("c_fused", self.c_fused),
            ("dense_layers", self.dense_layers),
            ("dense_growth", self.dense_growth),
        ] {
            if v == 0 {
                return Err(NetError::Config(format!("{name} must be positive")));
            }
        }
        let cat = 4 * self.c_branch;
        if self.attention_reduction == 0 || self.attention_reduction > cat {
            return Err(NetError::Config(format!(
                "attention_reduction must lie in 1..={cat}, got {}",
                self.attention_reduction
            )));
        }
        if cat % self.attention_reduction != 0 {
            return Err(NetError::Config(format!(
                "attention_reduction {} must divide the concatenated width {cat}",
                self.attention_reduction
            )));
        }
        if self.spatial_kernel % 2 == 0 {
            return Err(NetError::Config(format!(
                "spatial_kernel must be odd, got {}",
                self.spatial_kernel
            )));
        }
        if self.c_fused < 2 {
            return Err(NetError::Config("c_fused must be at least 2".into()));
        }
        if !self.lrelu_slope.is_finite() {
            return Err(NetError::Config("lrelu_slope must be finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_strings_are_exact() {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        assert_eq!(names, ["full", "no_rmaff", "single_rmaff", "no_attention"]);
        assert_eq!("single_rmaff".parse::<Variant>().unwrap(), Variant::SingleRmaff);
        assert!("rmaff+aff".parse::<Variant>().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let cfg = NetworkConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"variant\":\"full\""));
        let back: NetworkConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn reduction_must_divide_cat_width() {
        let cfg = NetworkConfig { attention_reduction: 7, ..NetworkConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
