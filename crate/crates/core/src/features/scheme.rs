use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The fixed transaction-category vocabulary: three stratum labels followed by
/// seventeen life labels.
pub const CATEGORY_LABELS: [&str; 20] = [
    "BASIC",
    "SOCIAL",
    "SELF",
    "RESTAURANT",
    "ENTERTAINMENT",
    "SERVICE",
    "TRAVEL",
    "SHOP",
    "HEALTH",
    "WORK",
    "CREDIT",
    "HOME",
    "DAILY",
    "INVESTMENT",
    "BILL",
    "GAMBLING",
    "EDUCATION",
    "CHARITY",
    "FASHION",
    "TAX",
];

pub const LIFE_DIMS: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Category(u8);

impl Category {
    pub fn from_index(i: usize) -> Option<Self> {
        (i < CATEGORY_LABELS.len()).then_some(Category(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> &'static str {
        CATEGORY_LABELS[self.index()]
    }

    pub fn all() -> impl Iterator<Item = Category> {
        (0..CATEGORY_LABELS.len()).map(|i| Category(i as u8))
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        CATEGORY_LABELS
            .iter()
            .position(|l| l.eq_ignore_ascii_case(s))
            .map(|i| Category(i as u8))
            .ok_or_else(|| Error::Data(format!("unknown transaction category {s:?}")))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stratum {
    Basic,
    Social,
    SelfActualization,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Basic, Stratum::Social, Stratum::SelfActualization];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        CATEGORY_LABELS[self.index()]
    }
}

/// Where a category's transactions are counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    /// Expense counts toward a stratum ratio.
    Stratum(Stratum),
    /// Transaction count toward life dimension `0..17`.
    Life(usize),
}

/// Category → stratum / life-dimension assignment.
///
/// Text form, one line per category, `#` comments allowed:
///
/// ```text
/// BASIC = BASIC
/// TRAVEL = life:TRAVEL
/// ```
///
/// A stratum value may also be written `stratum:SOCIAL`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryScheme {
    targets: [Target; 20],
}

impl Default for CategoryScheme {
    /// Each stratum label feeds its own stratum; each life label its own
    /// life dimension.
    fn default() -> Self {
        let mut targets = [Target::Life(0); 20];
        for (i, t) in targets.iter_mut().enumerate() {
            *t = if i < 3 {
                Target::Stratum(Stratum::ALL[i])
            } else {
                Target::Life(i - 3)
            };
        }
        CategoryScheme { targets }
    }
}

impl CategoryScheme {
    pub fn target(&self, c: Category) -> Target {
        self.targets[c.index()]
    }

    /// Index of a life dimension by label.
    pub fn life_index(&self, label: &str) -> Option<usize> {
        life_label_index(label)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut targets: [Option<Target>; 20] = [None; 20];
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("category scheme line {}: expected `category = target`", n + 1))
            })?;
            let cat: Category = key.trim().parse()?;
            let value = value.trim();
            let target = if let Some(life) = value.strip_prefix("life:") {
                Target::Life(
                    life_label_index(life.trim())
                        .ok_or_else(|| Error::Config(format!("line {}: unknown life label {life:?}", n + 1)))?,
                )
            } else {
                let s = value.strip_prefix("stratum:").unwrap_or(value).trim();
                let idx = Stratum::ALL
                    .iter()
                    .position(|st| st.label().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Config(format!("line {}: unknown stratum {s:?}", n + 1)))?;
                Target::Stratum(Stratum::ALL[idx])
            };
            if targets[cat.index()].replace(target).is_some() {
                return Err(Error::Config(format!("line {}: category {cat} assigned twice", n + 1)));
            }
        }
        let mut out = [Target::Life(0); 20];
        for (i, t) in targets.iter().enumerate() {
            out[i] = t.ok_or_else(|| Error::Config(format!("category {} has no assignment", CATEGORY_LABELS[i])))?;
        }
        Ok(CategoryScheme { targets: out })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# transaction category = stratum | life:<label>\n");
        for c in Category::all() {
            let v = match self.target(c) {
                Target::Stratum(st) => st.label().to_string(),
                Target::Life(d) => format!("life:{}", CATEGORY_LABELS[3 + d]),
            };
            s.push_str(&format!("{} = {}\n", c.label(), v));
        }
        s
    }
}

fn life_label_index(label: &str) -> Option<usize> {
    CATEGORY_LABELS[3..].iter().position(|l| l.eq_ignore_ascii_case(label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_text() {
        let scheme = CategoryScheme::default();
        let parsed = CategoryScheme::parse(&scheme.to_text()).unwrap();
        assert_eq!(parsed, scheme);
    }

    #[test]
    fn parse_custom_and_errors() {
        let mut text = CategoryScheme::default().to_text();
        text = text.replace("RESTAURANT = life:RESTAURANT", "RESTAURANT = stratum:SOCIAL");
        let scheme = CategoryScheme::parse(&text).unwrap();
        let r: Category = "restaurant".parse().unwrap();
        assert_eq!(scheme.target(r), Target::Stratum(Stratum::Social));

        let missing = text.replace("TAX = life:TAX\n", "");
        assert!(CategoryScheme::parse(&missing).is_err());
        let dup = format!("{text}TAX = BASIC\n");
        assert!(CategoryScheme::parse(&dup).is_err());
        assert!(CategoryScheme::parse("NOPE = BASIC").is_err());
        assert!(CategoryScheme::parse("TAX = life:NOPE").is_err());
    }
}
