//! CoNLL-U ingestion: POS tag alphabet, sentence parsing, the language
//! registry and the tag-sequence cache.
//!
//! Only column 4 (UPOS) of a treebank is consumed. The 17 UPOS labels are
//! merged down to 15 by folding SYM and X into PUNCT, and tags are indexed
//! by the alphabetical order of the remaining labels.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of distinct POS tags after merging the "others" class into PUNCT.
pub const ALPHABET: usize = 15;

/// Tag names in index order (alphabetical).
pub const TAG_NAMES: [&str; ALPHABET] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "VERB",
];

/// One of the 15 merged POS categories, identified by its alphabetical index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PosTag(u8);

impl PosTag {
    pub fn from_index(index: u8) -> Option<Self> {
        ((index as usize) < ALPHABET).then_some(PosTag(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        TAG_NAMES[self.0 as usize]
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Map one of the 17 UPOS labels onto the merged 15-tag alphabet.
/// SYM and X fold into PUNCT.
pub fn map_upos(upos_label: &str) -> Result<PosTag> {
    if upos_label == "SYM" || upos_label == "X" {
        return map_upos("PUNCT");
    }
    TAG_NAMES
        .iter()
        .position(|&n| n == upos_label)
        .map(|i| PosTag(i as u8))
        .ok_or_else(|| Error::UnknownTag(upos_label.to_string()))
}

/// One sentence as an ordered list of POS tag indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSequence {
    tags: Vec<u8>,
}

impl TagSequence {
    pub fn new(tags: Vec<u8>) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::InsufficientData("empty tag sequence".into()));
        }
        if let Some(&bad) = tags.iter().find(|&&t| (t as usize) >= ALPHABET) {
            return Err(Error::DigitOutOfRange {
                digit: bad as usize,
                alphabet: ALPHABET,
            });
        }
        Ok(TagSequence { tags })
    }

    pub fn tags(&self) -> &[u8] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// All tagged sentences of one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub language_id: String,
    pub sentences: Vec<TagSequence>,
}

impl Corpus {
    pub fn new(language_id: impl Into<String>, sentences: Vec<TagSequence>) -> Self {
        Corpus {
            language_id: language_id.into(),
            sentences,
        }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    /// Append another corpus's sentences (several treebanks per language
    /// are pooled into one corpus).
    pub fn extend(&mut self, other: Corpus) {
        self.sentences.extend(other.sentences);
    }

    /// Drop a trailing PUNCT tag from every sentence. Sentences that become
    /// empty are removed.
    pub fn strip_final_punct(&mut self) {
        let punct = map_upos("PUNCT").unwrap().index();
        for s in &mut self.sentences {
            if *s.tags.last().unwrap() == punct {
                s.tags.pop();
            }
        }
        self.sentences.retain(|s| !s.is_empty());
    }
}

/// Counters reported alongside a parsed corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Sentences dropped because they contained an untagged (`_`) token.
    pub dropped_untagged: usize,
}

/// Parse CoNLL-U text into a corpus of tag sequences.
///
/// Comment lines, multiword-token ranges (ID contains `-`) and empty nodes
/// (ID contains `.`) are skipped; a sentence containing a `_` UPOS is dropped
/// entirely. `source` is only used in error positions.
pub fn parse_conllu<R: Read>(
    reader: R,
    source: &str,
    language_id: &str,
) -> Result<(Corpus, ParseStats)> {
    let reader = BufReader::new(reader);
    let mut sentences = Vec::new();
    let mut current: Vec<u8> = Vec::new();
    let mut current_untagged = false;
    let mut stats = ParseStats::default();

    let mut flush = |current: &mut Vec<u8>, untagged: &mut bool, stats: &mut ParseStats| {
        if *untagged {
            stats.dropped_untagged += 1;
        } else if !current.is_empty() {
            sentences.push(TagSequence {
                tags: std::mem::take(current),
            });
        }
        current.clear();
        *untagged = false;
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            flush(&mut current, &mut current_untagged, &mut stats);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::MalformedLine {
                file: source.to_string(),
                line: lineno + 1,
                found: cols.len(),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let upos = cols[3];
        if upos == "_" {
            current_untagged = true;
            continue;
        }
        current.push(map_upos(upos)?.index());
    }
    flush(&mut current, &mut current_untagged, &mut stats);

    Ok((Corpus::new(language_id, sentences), stats))
}

/// Keep only corpora with at least `threshold` tokens.
pub fn filter_min_tokens(corpora: Vec<Corpus>, threshold: usize) -> Vec<Corpus> {
    corpora
        .into_iter()
        .filter(|c| c.token_count() >= threshold)
        .collect()
}

/// Morphological type, a coarse typological label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MorphType {
    Fusional,
    Agglutinative,
    Isolating,
    IsolatingFusional,
    FusionalAgglutinative,
}

impl FromStr for MorphType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusional" => Ok(MorphType::Fusional),
            "agglutinative" => Ok(MorphType::Agglutinative),
            "isolating" => Ok(MorphType::Isolating),
            "isolating-fusional" => Ok(MorphType::IsolatingFusional),
            "fusional-agglutinative" => Ok(MorphType::FusionalAgglutinative),
            other => Err(Error::Config(format!("unknown morph type `{other}`"))),
        }
    }
}

impl fmt::Display for MorphType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MorphType::Fusional => "fusional",
            MorphType::Agglutinative => "agglutinative",
            MorphType::Isolating => "isolating",
            MorphType::IsolatingFusional => "isolating-fusional",
            MorphType::FusionalAgglutinative => "fusional-agglutinative",
        };
        f.write_str(s)
    }
}

/// One language's metadata: family, group, type and its WALS location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRecord {
    pub language_id: String,
    pub name: String,
    pub family: String,
    pub group: String,
    pub morph_type: MorphType,
    pub latitude: f64,
    pub longitude: f64,
}

/// The registry bundled with the crate: 67 languages with family, group,
/// type and WALS coordinates.
pub const BUNDLED_REGISTRY: &str = include_str!("../data/languages.csv");

/// Parse a registry CSV (`language_id,name,family,group,morph_type,latitude,longitude`).
pub fn parse_registry<R: Read>(reader: R) -> Result<Vec<LanguageRecord>> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in csv_reader.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let latitude: f64 = get(5)
            .parse()
            .map_err(|_| Error::Config(format!("bad latitude `{}`", get(5))))?;
        let longitude: f64 = get(6)
            .parse()
            .map_err(|_| Error::Config(format!("bad longitude `{}`", get(6))))?;
        let record = LanguageRecord {
            language_id: get(0),
            name: get(1),
            family: get(2),
            group: get(3),
            morph_type: get(4).parse()?,
            latitude,
            longitude,
        };
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::CoordinateOutOfRange {
                id: record.language_id,
                lat: latitude,
                lon: longitude,
            });
        }
        if !seen.insert(record.language_id.clone()) {
            return Err(Error::DuplicateLanguage(record.language_id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_registry(path: &Path) -> Result<Vec<LanguageRecord>> {
    parse_registry(File::open(path)?)
}

pub fn bundled_registry() -> Vec<LanguageRecord> {
    parse_registry(BUNDLED_REGISTRY.as_bytes()).expect("bundled registry is valid")
}

/// Write the compact tag-sequence cache: one sentence per line,
/// space-separated tag indices.
pub fn write_cache(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in &corpus.sentences {
        let line: Vec<String> = s.tags().iter().map(|t| t.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path, language_id: &str) -> Result<Corpus> {
    let reader = BufReader::new(File::open(path)?);
    let mut sentences = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let tags: Vec<u8> = line
            .split(' ')
            .map(|t| {
                t.parse::<u8>()
                    .map_err(|_| Error::Config(format!("bad cache token `{t}`")))
            })
            .collect::<Result<_>>()?;
        sentences.push(TagSequence::new(tags)?);
    }
    Ok(Corpus::new(language_id, sentences))
}

/// Load every `<lang>.tags` file in a cache directory, keyed by file stem.
pub fn read_cache_dir(dir: &Path) -> Result<Vec<Corpus>> {
    let mut by_lang = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("tags") {
            continue;
        }
        let lang = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("bad cache file name {path:?}")))?
            .to_string();
        by_lang.insert(lang.clone(), read_cache(&path, &lang)?);
    }
    Ok(by_lang.into_values().collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The 18-token example sentence, as CoNLL-U.
    pub(crate) fn example_conllu() -> String {
        let tags = [
            ("Launching", "VERB"),
            ("this", "DET"),
            ("way", "NOUN"),
            ("will", "AUX"),
            ("hopefully", "ADV"),
            ("avoid", "VERB"),
            ("future", "ADJ"),
            ("disasters", "NOUN"),
            (",", "PUNCT"),
            ("giving", "VERB"),
            ("more", "ADJ"),
            ("support", "NOUN"),
            ("towards", "SCONJ"),
            ("NASA", "PROPN"),
            ("revisiting", "VERB"),
            ("the", "DET"),
            ("stars", "NOUN"),
            (".", "PUNCT"),
        ];
        let mut out = String::from("# sent_id = 1\n");
        for (i, (form, upos)) in tags.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t_\t_\t_\t_\n",
                i + 1,
                form,
                upos
            ));
        }
        out.push('\n');
        out
    }

    #[test]
    fn fifteen_tags_alphabetical() {
        assert_eq!(TAG_NAMES.len(), 15);
        let mut sorted = TAG_NAMES;
        sorted.sort_unstable();
        assert_eq!(sorted, TAG_NAMES);
        for (i, name) in TAG_NAMES.iter().enumerate() {
            let tag = map_upos(name).unwrap();
            assert_eq!(tag.index() as usize, i);
            assert_eq!(tag.name(), *name);
        }
    }

    #[test]
    fn map_upos_merges_others_class() {
        assert_eq!(map_upos("NOUN").unwrap().index(), 7);
        assert_eq!(map_upos("SYM").unwrap().name(), "PUNCT");
        assert_eq!(map_upos("SYM").unwrap().index(), 12);
        assert_eq!(map_upos("X").unwrap().name(), "PUNCT");
        assert!(matches!(map_upos("FOO"), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn map_upos_total_on_upos_and_surjective() {
        let upos17 = [
            "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON",
            "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
        ];
        let mut hit = [false; ALPHABET];
        for label in upos17 {
            hit[map_upos(label).unwrap().index() as usize] = true;
        }
        assert!(hit.iter().all(|&h| h));
    }

    #[test]
    fn parses_example_sentence_to_expected_tags() {
        let (corpus, stats) = parse_conllu(example_conllu().as_bytes(), "ex", "en").unwrap();
        assert_eq!(stats.dropped_untagged, 0);
        assert_eq!(corpus.sentences.len(), 1);
        let expected = [
            "VERB", "DET", "NOUN", "AUX", "ADV", "VERB", "ADJ", "NOUN", "PUNCT", "VERB", "ADJ",
            "NOUN", "SCONJ", "PROPN", "VERB", "DET", "NOUN", "PUNCT",
        ];
        let got: Vec<&str> = corpus.sentences[0]
            .tags()
            .iter()
            .map(|&t| TAG_NAMES[t as usize])
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn skips_comments_ranges_and_empty_nodes() {
        let text = "# comment\n\
                    1\ta\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\
                    3-4\tbc\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    3\tb\t_\tVERB\t_\t_\t_\t_\t_\t_\n\
                    3.1\tel\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\
                    4\tc\t_\tDET\t_\t_\t_\t_\t_\t_\n\
                    \n\
                    1\td\t_\tADJ\t_\t_\t_\t_\t_\t_\n\
                    2\te\t_\tADV\t_\t_\t_\t_\t_\t_\n";
        let (corpus, _) = parse_conllu(text.as_bytes(), "t", "xx").unwrap();
        let lengths: Vec<usize> = corpus.sentences.iter().map(|s| s.len()).collect();
        assert_eq!(lengths, vec![3, 2]);
        assert_eq!(corpus.token_count(), 5);
    }

    #[test]
    fn untagged_token_drops_sentence() {
        let text = "1\ta\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\
                    2\tb\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    \n\
                    1\tc\t_\tVERB\t_\t_\t_\t_\t_\t_\n";
        let (corpus, stats) = parse_conllu(text.as_bytes(), "t", "xx").unwrap();
        assert_eq!(stats.dropped_untagged, 1);
        assert_eq!(corpus.sentences.len(), 1);
    }

    #[test]
    fn malformed_line_carries_position() {
        let text = "1\ta\tNOUN\n";
        match parse_conllu(text.as_bytes(), "bad.conllu", "xx") {
            Err(Error::MalformedLine { file, line, found }) => {
                assert_eq!(file, "bad.conllu");
                assert_eq!(line, 1);
                assert_eq!(found, 3);
            }
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn filter_min_tokens_boundary() {
        let mk = |id: &str, n: usize| Corpus::new(id, vec![TagSequence::new(vec![0; n]).unwrap()]);
        let corpora = vec![mk("a", 9999), mk("b", 10000)];
        let kept = filter_min_tokens(corpora.clone(), 10000);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].language_id, "b");
        assert_eq!(filter_min_tokens(corpora, 0).len(), 2);
    }

    #[test]
    fn bundled_registry_has_67_languages() {
        let registry = bundled_registry();
        assert_eq!(registry.len(), 67);
        let basque = registry.iter().find(|r| r.name == "Basque").unwrap();
        assert_eq!(basque.family, "Basque");
        assert_eq!(basque.morph_type, MorphType::Agglutinative);
        let arabic = registry.iter().find(|r| r.name == "Arabic").unwrap();
        assert_eq!(arabic.morph_type, MorphType::IsolatingFusional);
    }

    #[test]
    fn registry_rejects_bad_rows() {
        let header = "language_id,name,family,group,morph_type,latitude,longitude\n";
        let dup = format!("{header}xx,A,F,G,fusional,0,0\nxx,B,F,G,fusional,0,0\n");
        assert!(matches!(
            parse_registry(dup.as_bytes()),
            Err(Error::DuplicateLanguage(_))
        ));
        let oob = format!("{header}xx,A,F,G,fusional,91,0\n");
        assert!(matches!(
            parse_registry(oob.as_bytes()),
            Err(Error::CoordinateOutOfRange { .. })
        ));
    }

    #[test]
    fn cache_round_trip() {
        let (corpus, _) = parse_conllu(example_conllu().as_bytes(), "ex", "en").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("en.tags");
        write_cache(&corpus, &path).unwrap();
        let back = read_cache(&path, "en").unwrap();
        assert_eq!(back, corpus);
    }

    #[test]
    fn strip_final_punct_matches_worked_example() {
        let (mut corpus, _) = parse_conllu(example_conllu().as_bytes(), "ex", "en").unwrap();
        corpus.strip_final_punct();
        assert_eq!(corpus.sentences[0].len(), 17);
        // The comma inside the sentence is retained.
        let punct = map_upos("PUNCT").unwrap().index();
        assert_eq!(corpus.sentences[0].tags()[8], punct);
    }
}
