use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Response emotion label. The order is fixed and doubles as the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmotionCategory {
    Angry,
    Disgust,
    Happy,
    Like,
    Sad,
    Other,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; 6] = [
        EmotionCategory::Angry,
        EmotionCategory::Disgust,
        EmotionCategory::Happy,
        EmotionCategory::Like,
        EmotionCategory::Sad,
        EmotionCategory::Other,
    ];

    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionCategory::Angry => "Angry",
            EmotionCategory::Disgust => "Disgust",
            EmotionCategory::Happy => "Happy",
            EmotionCategory::Like => "Like",
            EmotionCategory::Sad => "Sad",
            EmotionCategory::Other => "Other",
        }
    }

    pub fn names() -> [&'static str; 6] {
        Self::ALL.map(Self::name)
    }
}

impl fmt::Display for EmotionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown emotion category {0:?}; expected one of Angry, Disgust, Happy, Like, Sad, Other")]
pub struct UnknownEmotion(pub String);

impl FromStr for EmotionCategory {
    type Err = UnknownEmotion;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownEmotion(s.to_string()))
    }
}
