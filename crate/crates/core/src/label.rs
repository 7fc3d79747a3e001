//! The eight-topic coding scheme.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

/// Number of classes in the topic scheme.
pub const N_CLASSES: usize = 8;

/// One of the eight top-level topics of the manifesto coding scheme.
///
/// The discriminant is the class index used for weight rows, confusion
/// matrix axes and every rendered table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TopicLabel {
    NoTopic = 0,
    FreedomDemocracy = 1,
    ExternalRelations = 2,
    SocialGroups = 3,
    PoliticalSystem = 4,
    FabricOfSociety = 5,
    Economy = 6,
    WelfareQualityOfLife = 7,
}

impl TopicLabel {
    pub const ALL: [TopicLabel; N_CLASSES] = [
        TopicLabel::NoTopic,
        TopicLabel::FreedomDemocracy,
        TopicLabel::ExternalRelations,
        TopicLabel::SocialGroups,
        TopicLabel::PoliticalSystem,
        TopicLabel::FabricOfSociety,
        TopicLabel::Economy,
        TopicLabel::WelfareQualityOfLife,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<TopicLabel> {
        Self::ALL.get(index).copied()
    }

    /// Canonical snake_case name, used in every file this crate writes.
    pub fn as_str(self) -> &'static str {
        match self {
            TopicLabel::NoTopic => "no_topic",
            TopicLabel::FreedomDemocracy => "freedom_democracy",
            TopicLabel::ExternalRelations => "external_relations",
            TopicLabel::SocialGroups => "social_groups",
            TopicLabel::PoliticalSystem => "political_system",
            TopicLabel::FabricOfSociety => "fabric_of_society",
            TopicLabel::Economy => "economy",
            TopicLabel::WelfareQualityOfLife => "welfare_quality_of_life",
        }
    }

    /// Human-readable name as it appears in published tables.
    pub fn display_name(self) -> &'static str {
        match self {
            TopicLabel::NoTopic => "No Topic",
            TopicLabel::FreedomDemocracy => "Freedom / Democracy",
            TopicLabel::ExternalRelations => "External Relations",
            TopicLabel::SocialGroups => "Social Groups",
            TopicLabel::PoliticalSystem => "Political System",
            TopicLabel::FabricOfSociety => "Fabric of Society",
            TopicLabel::Economy => "Economy",
            TopicLabel::WelfareQualityOfLife => "Welfare / Quality of Life",
        }
    }

    /// Resolve a label string from an export.
    ///
    /// Matching is case-insensitive after trimming; runs of non-alphanumeric
    /// characters collapse to `_`, so display names such as
    /// `"Welfare / Quality of Life"` resolve alongside the canonical names.
    pub fn parse_label(raw: &str) -> Option<TopicLabel> {
        let key = normalize_key(raw);
        if key.is_empty() {
            return None;
        }
        if let Some(label) = Self::ALL.iter().copied().find(|l| l.as_str() == key) {
            return Some(label);
        }
        ALIASES
            .iter()
            .find(|(alias, _)| *alias == key)
            .map(|(_, label)| *label)
    }
}

const ALIASES: &[(&str, TopicLabel)] = &[
    ("none", TopicLabel::NoTopic),
    ("notopic", TopicLabel::NoTopic),
    ("freedom_and_democracy", TopicLabel::FreedomDemocracy),
    ("welfare_and_quality_of_life", TopicLabel::WelfareQualityOfLife),
    ("welfare", TopicLabel::WelfareQualityOfLife),
    ("fabric", TopicLabel::FabricOfSociety),
];

fn normalize_key(raw: &str) -> String {
    let mut key = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for ch in raw.trim().chars() {
        if ch.is_alphanumeric() {
            if pending_sep && !key.is_empty() {
                key.push('_');
            }
            pending_sep = false;
            key.extend(ch.to_lowercase());
        } else {
            pending_sep = true;
        }
    }
    key
}

impl fmt::Display for TopicLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown topic label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for TopicLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TopicLabel::parse_label(s).ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for TopicLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TopicLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_fixed() {
        for (i, label) in TopicLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(TopicLabel::from_index(i), Some(*label));
        }
        assert_eq!(TopicLabel::from_index(8), None);
    }

    #[test]
    fn parses_canonical_display_and_padded_forms() {
        for label in TopicLabel::ALL {
            assert_eq!(TopicLabel::parse_label(label.as_str()), Some(label));
            assert_eq!(TopicLabel::parse_label(label.display_name()), Some(label));
            let shouted = format!("  {}  ", label.display_name().to_uppercase());
            assert_eq!(TopicLabel::parse_label(&shouted), Some(label));
        }
        assert_eq!(TopicLabel::parse_label("economy "), Some(TopicLabel::Economy));
        assert_eq!(
            TopicLabel::parse_label("Freedom and Democracy"),
            Some(TopicLabel::FreedomDemocracy)
        );
    }

    #[test]
    fn rejects_unknown() {
        assert_eq!(TopicLabel::parse_label("defence"), None);
        assert_eq!(TopicLabel::parse_label(""), None);
        assert!("defence".parse::<TopicLabel>().is_err());
    }
}
