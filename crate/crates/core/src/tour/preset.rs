use std::fmt;
use std::str::FromStr;

use super::TourError;

/// Planned tours over named class pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TourPreset {
    /// Vehicle classes of CIFAR-10.
    Mechanical,
    /// FashionMNIST classes that are almost never mistaken for each other.
    RarelyConfused,
    /// FashionMNIST upper-body garments, the most confused group.
    UpperBody,
}

impl TourPreset {
    pub const ALL: [TourPreset; 3] = [TourPreset::Mechanical, TourPreset::RarelyConfused, TourPreset::UpperBody];

    pub fn pairs(self) -> &'static [(&'static str, &'static str)] {
        match self {
            TourPreset::Mechanical => &[("plane", "truck"), ("car", "truck"), ("car", "ship"), ("plane", "ship")],
            TourPreset::RarelyConfused => &[
                ("t-shirt/top", "ankle boot"),
                ("trouser", "ankle boot"),
                ("trouser", "bag"),
                ("t-shirt/top", "bag"),
            ],
            TourPreset::UpperBody => &[
                ("t-shirt/top", "shirt"),
                ("pullover", "shirt"),
                ("pullover", "coat"),
                ("t-shirt/top", "coat"),
            ],
        }
    }

    /// Maps the preset's class names onto indices into `class_names`.
    pub fn resolve(self, class_names: &[String]) -> Result<Vec<(usize, usize)>, TourError> {
        self.pairs()
            .iter()
            .map(|(a, b)| Ok((find_class(class_names, a)?, find_class(class_names, b)?)))
            .collect()
    }
}

impl FromStr for TourPreset {
    type Err = TourError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize(s).as_str() {
            "mechanical" => Ok(TourPreset::Mechanical),
            "rarelyconfused" => Ok(TourPreset::RarelyConfused),
            "upperbody" => Ok(TourPreset::UpperBody),
            _ => Err(TourError::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for TourPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TourPreset::Mechanical => "mechanical",
            TourPreset::RarelyConfused => "rarely-confused",
            TourPreset::UpperBody => "upper-body",
        })
    }
}

fn normalize(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

// common spellings across dataset releases
const ALIASES: &[&[&str]] = &[
    &["plane", "airplane", "aeroplane"],
    &["car", "automobile"],
    &["tshirttop", "tshirt", "top"],
    &["ankleboot", "boot"],
    &["trouser", "trousers"],
    &["pullover", "sweater"],
];

fn find_class(class_names: &[String], wanted: &str) -> Result<usize, TourError> {
    let key = normalize(wanted);
    let group = ALIASES.iter().find(|g| g.contains(&key.as_str()));
    class_names
        .iter()
        .position(|c| {
            let c = normalize(c);
            c == key || group.is_some_and(|g| g.contains(&c.as_str()))
        })
        .ok_or_else(|| TourError::MissingClass(wanted.to_string()))
}
