//! The eight covariate sets of the model comparison and the model names
//! built from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateSet {
    None,
    Factors,
    FactorsGdelt,
    FactorsGdeltHierarc,
    FactorsGdeltPca,
    Gdelt,
    GdeltHierarc,
    GdeltPca,
}

/// Which form of the news features a covariate set uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewsView {
    Selected,
    Hierarc,
    Pca,
}

impl CovariateSet {
    pub const ALL: [CovariateSet; 8] = [
        CovariateSet::None,
        CovariateSet::Factors,
        CovariateSet::FactorsGdelt,
        CovariateSet::FactorsGdeltHierarc,
        CovariateSet::FactorsGdeltPca,
        CovariateSet::Gdelt,
        CovariateSet::GdeltHierarc,
        CovariateSet::GdeltPca,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            CovariateSet::None => "none",
            CovariateSet::Factors => "factors",
            CovariateSet::FactorsGdelt => "factors-gdelt",
            CovariateSet::FactorsGdeltHierarc => "factors-gdelt-hierarc",
            CovariateSet::FactorsGdeltPca => "factors-gdelt-pca",
            CovariateSet::Gdelt => "gdelt",
            CovariateSet::GdeltHierarc => "gdelt-hierarc",
            CovariateSet::GdeltPca => "gdelt-pca",
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            CovariateSet::None => "NoCov",
            CovariateSet::Factors => "Factors",
            CovariateSet::FactorsGdelt => "Factors-GDELT",
            CovariateSet::FactorsGdeltHierarc => "Factors-GDELT-hierarc",
            CovariateSet::FactorsGdeltPca => "Factors-GDELT-PCA",
            CovariateSet::Gdelt => "GDELT",
            CovariateSet::GdeltHierarc => "GDELT-hierarc",
            CovariateSet::GdeltPca => "GDELT-PCA",
        }
    }

    pub fn uses_factors(self) -> bool {
        matches!(
            self,
            CovariateSet::Factors
                | CovariateSet::FactorsGdelt
                | CovariateSet::FactorsGdeltHierarc
                | CovariateSet::FactorsGdeltPca
        )
    }

    pub fn news(self) -> Option<NewsView> {
        match self {
            CovariateSet::None | CovariateSet::Factors => None,
            CovariateSet::FactorsGdelt | CovariateSet::Gdelt => Some(NewsView::Selected),
            CovariateSet::FactorsGdeltHierarc | CovariateSet::GdeltHierarc => Some(NewsView::Hierarc),
            CovariateSet::FactorsGdeltPca | CovariateSet::GdeltPca => Some(NewsView::Pca),
        }
    }
}

impl FromStr for CovariateSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        CovariateSet::ALL
            .into_iter()
            .find(|c| c.slug() == s)
            .ok_or_else(|| Error::Config(format!("unknown covariate set {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    DeepAR,
    GB,
}

/// A forecasting model: a family paired with a covariate set, named like
/// `DeepAR-Factors-GDELT-PCA` or `GB-NoCov`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelSpec {
    pub family: Family,
    pub covariates: CovariateSet,
}

impl ModelSpec {
    pub fn deepar(covariates: CovariateSet) -> Self {
        Self {
            family: Family::DeepAR,
            covariates,
        }
    }

    pub fn gb(covariates: CovariateSet) -> Self {
        Self {
            family: Family::GB,
            covariates,
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = match self.family {
            Family::DeepAR => "DeepAR",
            Family::GB => "GB",
        };
        write!(f, "{family}-{}", self.covariates.suffix())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (family, rest) = if let Some(rest) = s.strip_prefix("DeepAR-") {
            (Family::DeepAR, rest)
        } else if let Some(rest) = s.strip_prefix("GB-") {
            (Family::GB, rest)
        } else {
            return Err(Error::Config(format!("model {s:?} must start with DeepAR- or GB-")));
        };
        let covariates = CovariateSet::ALL
            .into_iter()
            .find(|c| c.suffix() == rest)
            .ok_or_else(|| Error::Config(format!("unknown model {s:?}")))?;
        Ok(Self { family, covariates })
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
