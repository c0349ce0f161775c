//! Per-sequence challenge attributes.
//!
//! The attribute file lists one sequence per line followed by its codes,
//! separated by whitespace or commas; `#` starts a comment:
//!
//! ```text
//! bear   HO OCC OUT
//! office IN, SO
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribute {
    HO,
    OCC,
    OV,
    FM,
    MB,
    DEF,
    SC,
    SV,
    AC,
    BC,
    BO,
    SO,
    IN,
    OUT,
}

impl Attribute {
    pub const ALL: [Attribute; 14] = [
        Attribute::HO,
        Attribute::OCC,
        Attribute::OV,
        Attribute::FM,
        Attribute::MB,
        Attribute::DEF,
        Attribute::SC,
        Attribute::SV,
        Attribute::AC,
        Attribute::BC,
        Attribute::BO,
        Attribute::SO,
        Attribute::IN,
        Attribute::OUT,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Attribute::HO => "HO",
            Attribute::OCC => "OCC",
            Attribute::OV => "OV",
            Attribute::FM => "FM",
            Attribute::MB => "MB",
            Attribute::DEF => "DEF",
            Attribute::SC => "SC",
            Attribute::SV => "SV",
            Attribute::AC => "AC",
            Attribute::BC => "BC",
            Attribute::BO => "BO",
            Attribute::SO => "SO",
            Attribute::IN => "IN",
            Attribute::OUT => "OUT",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Attribute::HO => "heterogeneous object",
            Attribute::OCC => "occlusion",
            Attribute::OV => "out-of-view",
            Attribute::FM => "fast motion",
            Attribute::MB => "motion blur",
            Attribute::DEF => "deformation",
            Attribute::SC => "shape complexity",
            Attribute::SV => "scale variation",
            Attribute::AC => "appearance change",
            Attribute::BC => "background clutter",
            Attribute::BO => "big object",
            Attribute::SO => "small object",
            Attribute::IN => "indoor scene",
            Attribute::OUT => "outdoor scene",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.code() == s)
            .ok_or_else(|| Error::Attribute(format!("unknown attribute code `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeRecord {
    pub sequence_id: String,
    pub attributes: BTreeSet<Attribute>,
}

impl AttributeRecord {
    pub fn new(sequence_id: impl Into<String>, attributes: impl IntoIterator<Item = Attribute>) -> Result<Self> {
        let record = Self {
            sequence_id: sequence_id.into(),
            attributes: attributes.into_iter().collect(),
        };
        if record.attributes.contains(&Attribute::IN) && record.attributes.contains(&Attribute::OUT) {
            return Err(Error::Attribute(format!(
                "sequence `{}` is marked both IN and OUT",
                record.sequence_id
            )));
        }
        Ok(record)
    }
}

pub fn parse_attributes(text: &str) -> Result<Vec<AttributeRecord>> {
    let at_line = |n: usize, e: Error| match e {
        Error::Attribute(m) => Error::Attribute(format!("line {}: {m}", n + 1)),
        other => other,
    };
    let mut out: Vec<AttributeRecord> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty());
        let seq = tokens.next().expect("non-empty line has a token").trim_end_matches(':');
        let attrs = tokens
            .map(Attribute::from_str)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| at_line(lineno, e))?;
        if out.iter().any(|r| r.sequence_id == seq) {
            return Err(Error::Attribute(format!("line {}: duplicate sequence `{seq}`", lineno + 1)));
        }
        out.push(AttributeRecord::new(seq, attrs).map_err(|e| at_line(lineno, e))?);
    }
    Ok(out)
}
