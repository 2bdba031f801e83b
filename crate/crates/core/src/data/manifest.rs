//! Dataset manifests: which frame belongs to which class, attack medium,
//! split and source video.
//!
//! On disk a manifest is UTF-8 CSV with the header
//! `path,label,attack_type,split,video_id`; paths are relative to the
//! manifest file's directory.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["path", "label", "attack_type", "split", "video_id"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Attack,
}

impl Label {
    /// Class index used by the model: real access is class 0.
    pub fn class_index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Attack => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Attack => "attack",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackType {
    None,
    Print,
    Phone,
    Table,
}

impl AttackType {
    pub const ALL: [AttackType; 4] = [
        AttackType::None,
        AttackType::Print,
        AttackType::Phone,
        AttackType::Table,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackType::None => "none",
            AttackType::Print => "print",
            AttackType::Phone => "phone",
            AttackType::Table => "table",
        }
    }

    fn table_label(self) -> &'static str {
        match self {
            AttackType::None => "Real-access",
            AttackType::Print => "Print-attack",
            AttackType::Phone => "Phone-attack",
            AttackType::Table => "Table-attack",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

macro_rules! parse_str_enum {
    ($ty:ty, $what:literal, [$($v:expr),+]) => {
        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                [$($v),+]
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!(concat!("unknown ", $what, " '{}'"), s))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

parse_str_enum!(Label, "label", [Label::Real, Label::Attack]);
parse_str_enum!(
    AttackType,
    "attack_type",
    [
        AttackType::None,
        AttackType::Print,
        AttackType::Phone,
        AttackType::Table
    ]
);
parse_str_enum!(Split, "split", [Split::Train, Split::Dev, Split::Test]);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
    pub attack_type: AttackType,
    pub split: Split,
    pub video_id: String,
}

/// Validated, immutable dataset index.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl SampleManifest {
    /// Validates `entries`; every rule violation is collected into one error.
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Result<Self> {
        validate(&entries, None)?;
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    /// Parses manifest CSV text whose paths resolve against `root`.
    pub fn parse(root: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Manifest(vec![format!("header: {e}")]))?
            .clone();
        if !header.iter().eq(MANIFEST_HEADER) {
            return Err(Error::Manifest(vec![format!(
                "header must be '{}', got '{}'",
                MANIFEST_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )]));
        }
        let mut entries = Vec::new();
        let mut lines = Vec::new();
        let mut problems = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Manifest(vec![e.to_string()]))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| record.get(i).unwrap_or_default();
            let label = field(1).parse::<Label>();
            let attack = field(2).parse::<AttackType>();
            let split = field(3).parse::<Split>();
            match (label, attack, split) {
                (Ok(label), Ok(attack_type), Ok(split)) => {
                    entries.push(ManifestEntry {
                        path: field(0).to_string(),
                        label,
                        attack_type,
                        split,
                        video_id: field(4).to_string(),
                    });
                    lines.push(line);
                }
                (l, a, s) => {
                    for e in [l.err(), a.err(), s.err()].into_iter().flatten() {
                        problems.push(format!("line {line}: {e}"));
                    }
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Manifest(problems));
        }
        validate(&entries, Some(&lines))?;
        Ok(Self {
            root: root.into(),
            entries,
        })
    }

    /// Reads a manifest file; entry paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(root, &text)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.split(split).next().is_some()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn find(&self, path: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.path == path)
    }

    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.path, e.label, e.attack_type, e.split, e.video_id
            ));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Entry counts by attack type and split.
    pub fn summary(&self) -> ManifestSummary {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry((e.attack_type, e.split)).or_insert(0) += 1;
        }
        ManifestSummary { counts }
    }
}

fn validate(entries: &[ManifestEntry], lines: Option<&[usize]>) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Manifest(vec!["empty manifest".into()]));
    }
    let at = |i: usize| match lines {
        Some(l) => format!("line {}", l[i]),
        None => format!("entry {i}"),
    };
    let mut problems = Vec::new();
    let mut seen_paths: HashMap<&str, usize> = HashMap::new();
    let mut video_splits: BTreeMap<&str, Vec<Split>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        if e.path.is_empty() {
            problems.push(format!("{}: empty path", at(i)));
        }
        if e.video_id.is_empty() {
            problems.push(format!("{}: empty video_id", at(i)));
        }
        if (e.label == Label::Real) != (e.attack_type == AttackType::None) {
            problems.push(format!(
                "{}: label {} inconsistent with attack_type {}",
                at(i),
                e.label,
                e.attack_type
            ));
        }
        if let Some(first) = seen_paths.insert(&e.path, i) {
            problems.push(format!("duplicate path {} ({} and {})", e.path, at(first), at(i)));
        }
        let splits = video_splits.entry(&e.video_id).or_default();
        if !splits.contains(&e.split) {
            splits.push(e.split);
        }
    }
    for (video, splits) in video_splits {
        if splits.len() > 1 {
            let names: Vec<&str> = splits.iter().map(|s| s.as_str()).collect();
            problems.push(format!("video_id {video} appears in splits {}", names.join(" and ")));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Manifest(problems))
    }
}

/// Per attack type and split counts, printed as a corpus summary table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestSummary {
    counts: BTreeMap<(AttackType, Split), usize>,
}

impl ManifestSummary {
    pub fn count(&self, attack: AttackType, split: Split) -> usize {
        self.counts.get(&(attack, split)).copied().unwrap_or(0)
    }

    pub fn split_total(&self, split: Split) -> usize {
        AttackType::ALL.iter().map(|&a| self.count(a, split)).sum()
    }

    /// The table row for one attack type, e.g. `Real-access 60 60 80`.
    pub fn row(&self, attack: AttackType) -> String {
        let cells: Vec<String> = Split::ALL.iter().map(|&s| self.count(attack, s).to_string()).collect();
        format!("{} {}", attack.table_label(), cells.join(" "))
    }
}

impl fmt::Display for ManifestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14}{:>14}{:>17}{:>10}",
            "Type", "Training (#)", "Development (#)", "Test (#)"
        )?;
        let mut line =
            |name: &str, cells: [usize; 3]| writeln!(f, "{:<14}{:>14}{:>17}{:>10}", name, cells[0], cells[1], cells[2]);
        for a in AttackType::ALL {
            line(a.table_label(), Split::ALL.map(|s| self.count(a, s)))?;
        }
        line("Total", Split::ALL.map(|s| self.split_total(s)))
    }
}
