use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the eight AMR-NB codec modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Bitrate {
    Kbps4_75,
    Kbps5_15,
    Kbps5_90,
    Kbps6_70,
    Kbps7_40,
    Kbps7_95,
    Kbps10_20,
    Kbps12_20,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unsupported AMR bitrate {0:?}; legal values are 4.75, 5.15, 5.90, 6.70, 7.40, 7.95, 10.20, 12.20 kbit/s")]
pub struct BitrateParseError(pub String);

impl Bitrate {
    /// Ascending order.
    pub const ALL: [Bitrate; 8] = [
        Bitrate::Kbps4_75,
        Bitrate::Kbps5_15,
        Bitrate::Kbps5_90,
        Bitrate::Kbps6_70,
        Bitrate::Kbps7_40,
        Bitrate::Kbps7_95,
        Bitrate::Kbps10_20,
        Bitrate::Kbps12_20,
    ];

    pub fn kbps(self) -> f64 {
        match self {
            Bitrate::Kbps4_75 => 4.75,
            Bitrate::Kbps5_15 => 5.15,
            Bitrate::Kbps5_90 => 5.90,
            Bitrate::Kbps6_70 => 6.70,
            Bitrate::Kbps7_40 => 7.40,
            Bitrate::Kbps7_95 => 7.95,
            Bitrate::Kbps10_20 => 10.20,
            Bitrate::Kbps12_20 => 12.20,
        }
    }

    /// Short form such as `4.75k` or `12.2k`, used in file names.
    pub fn label(self) -> String {
        let s = format!("{:.2}", self.kbps());
        let s = s.trim_end_matches('0').trim_end_matches('.');
        format!("{s}k")
    }
}

impl fmt::Display for Bitrate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.kbps())
    }
}

impl FromStr for Bitrate {
    type Err = BitrateParseError;

    /// Accepts `4.75`, `4.75k`, `12.2`, `12.20`, `12.2k`, `12200`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_end_matches(['k', 'K']);
        let v: f64 = t.parse().map_err(|_| BitrateParseError(s.to_string()))?;
        let v = if v >= 1000.0 { v / 1000.0 } else { v };
        Bitrate::ALL
            .into_iter()
            .find(|b| (b.kbps() - v).abs() < 1e-6)
            .ok_or_else(|| BitrateParseError(s.to_string()))
    }
}

impl TryFrom<String> for Bitrate {
    type Error = BitrateParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Bitrate> for String {
    fn from(b: Bitrate) -> String {
        b.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_legal_set_only() {
        assert_eq!("4.75".parse(), Ok(Bitrate::Kbps4_75));
        assert_eq!("12.2k".parse(), Ok(Bitrate::Kbps12_20));
        assert_eq!("12200".parse(), Ok(Bitrate::Kbps12_20));
        assert_eq!("5.9".parse(), Ok(Bitrate::Kbps5_90));
        let err = "9.6".parse::<Bitrate>().unwrap_err();
        assert!(err.to_string().contains("4.75, 5.15"));
        for b in Bitrate::ALL {
            assert_eq!(b.to_string().parse(), Ok(b));
            assert_eq!(b.label().parse(), Ok(b));
        }
    }

    #[test]
    fn labels() {
        assert_eq!(Bitrate::Kbps4_75.label(), "4.75k");
        assert_eq!(Bitrate::Kbps12_20.label(), "12.2k");
        assert_eq!(Bitrate::Kbps5_90.label(), "5.9k");
        assert_eq!(Bitrate::Kbps12_20.to_string(), "12.20");
    }
}
