//! OPUS corpus XML documents and XCES `cesAlign` standoff alignments.
//!
//! Both readers are streaming: a corpus document is held in memory one at a
//! time, and [`AlignmentReader`] yields one `linkGrp` at a time.

use std::collections::HashMap;
use std::io::BufRead;
use std::str::FromStr;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::io::decompress;
use crate::model::{AlignedUnit, Bitext, LanguageTag, Segment};
use crate::text;

/// Sentences of one corpus document, keyed by their `id` attribute.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusDocument {
    pub path: String,
    sentences: HashMap<String, String>,
    order: Vec<String>,
}

impl CorpusDocument {
    pub fn get(&self, id: &str) -> Option<&str> {
        self.sentences.get(id).map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.sentences.contains_key(id)
    }

    /// Sentence IDs in document order.
    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.order
            .iter()
            .map(move |id| (id.as_str(), self.sentences[id].as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    xtargets: String,
    split: usize,
    pub certainty: Option<f64>,
    pub id: Option<String>,
}

impl Link {
    pub fn new(
        xtargets: impl Into<String>,
        certainty: Option<f64>,
        id: Option<String>,
    ) -> Result<Self> {
        let xtargets = xtargets.into();
        let mut semis = xtargets.match_indices(';');
        let split = match (semis.next(), semis.next()) {
            (Some((pos, _)), None) => pos,
            _ => {
                return Err(Error::Structure(format!(
                    "link {}: xtargets `{xtargets}` must contain exactly one ';'",
                    id.as_deref().unwrap_or("<no id>")
                )))
            }
        };
        Ok(Link {
            xtargets,
            split,
            certainty,
            id,
        })
    }

    pub fn xtargets(&self) -> &str {
        &self.xtargets
    }

    pub fn src_ids(&self) -> impl Iterator<Item = &str> {
        self.xtargets[..self.split].split_whitespace()
    }

    pub fn trg_ids(&self) -> impl Iterator<Item = &str> {
        self.xtargets[self.split + 1..].split_whitespace()
    }

    fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.xtargets.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkGroup {
    pub from_doc: String,
    pub to_doc: String,
    pub links: Vec<Link>,
}

fn position<R>(reader: &Reader<R>) -> u64 {
    reader.buffer_position()
}

fn check_decl<R>(reader: &Reader<R>, decl: &quick_xml::events::BytesDecl<'_>) -> Result<()> {
    if let Some(enc) = decl.encoding() {
        let enc = enc.map_err(|e| Error::xml(position(reader), e))?;
        let enc = String::from_utf8_lossy(&enc).to_ascii_lowercase();
        if enc != "utf-8" && enc != "utf8" {
            return Err(Error::Encoding(enc));
        }
    }
    Ok(())
}

fn attribute<R>(reader: &Reader<R>, e: &BytesStart<'_>, name: &[u8]) -> Result<Option<String>> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| Error::xml(position(reader), err))?;
        if attr.key.as_ref() == name {
            let value = attr
                .unescape_value()
                .map_err(|err| Error::xml(position(reader), err))?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

/// Parses an OPUS corpus document (plain or gzipped XML).
///
/// Every `<s id="..">` element contributes its text content with inner markup
/// stripped and whitespace collapsed.
pub fn parse_document<R: BufRead>(input: R, path: &str) -> Result<CorpusDocument> {
    let mut reader = Reader::from_reader(decompress(input)?);
    let mut buf = Vec::new();
    let mut doc = CorpusDocument {
        path: path.to_owned(),
        ..Default::default()
    };
    // (id, text, nesting depth inside <s>)
    let mut current: Option<(String, String, usize)> = None;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| Error::xml(position(&reader), e))?;
        match event {
            Event::Decl(decl) => check_decl(&reader, &decl)?,
            Event::Start(e) if e.name().as_ref() == b"s" && current.is_none() => {
                let id = attribute(&reader, &e, b"id")?.ok_or_else(|| {
                    Error::Structure(format!(
                        "<s> element without id at byte {}",
                        position(&reader)
                    ))
                })?;
                current = Some((id, String::new(), 0));
            }
            Event::Empty(e) if e.name().as_ref() == b"s" && current.is_none() => {
                if let Some(id) = attribute(&reader, &e, b"id")? {
                    insert_sentence(&mut doc, id, String::new())?;
                }
            }
            Event::Start(e) => {
                if let Some((_, text, depth)) = current.as_mut() {
                    *depth += 1;
                    if e.name().as_ref() == b"w" {
                        text.push(' ');
                    }
                }
            }
            Event::End(e) => {
                if let Some((_, text, depth)) = current.as_mut() {
                    if *depth == 0 {
                        let (id, text, _) = current.take().expect("inside <s>");
                        insert_sentence(&mut doc, id, text::collapse_whitespace(&text))?;
                    } else {
                        *depth -= 1;
                        if e.name().as_ref() == b"w" {
                            text.push(' ');
                        }
                    }
                }
            }
            Event::Text(t) => {
                if let Some((_, text, _)) = current.as_mut() {
                    let unescaped = t.unescape().map_err(|e| Error::xml(position(&reader), e))?;
                    text.push_str(&unescaped);
                }
            }
            Event::CData(t) => {
                if let Some((_, text, _)) = current.as_mut() {
                    text.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if let Some((id, _, _)) = current {
        return Err(Error::xml(
            position(&reader),
            format!("document ended inside sentence `{id}`"),
        ));
    }
    Ok(doc)
}

fn insert_sentence(doc: &mut CorpusDocument, id: String, text: String) -> Result<()> {
    let text = text::nfc(&text);
    if doc.sentences.insert(id.clone(), text).is_some() {
        return Err(Error::Structure(format!(
            "duplicate sentence id `{id}` in {}",
            doc.path
        )));
    }
    doc.order.push(id);
    Ok(())
}

/// Streams `linkGrp` elements out of a cesAlign file.
pub struct AlignmentReader<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    done: bool,
}

impl<'a> AlignmentReader<Box<dyn BufRead + 'a>> {
    pub fn new<R: BufRead + 'a>(input: R) -> Result<Self> {
        Ok(AlignmentReader {
            reader: Reader::from_reader(decompress(input)?),
            buf: Vec::new(),
            done: false,
        })
    }
}

impl<R: BufRead> AlignmentReader<R> {
    fn next_group(&mut self) -> Result<Option<LinkGroup>> {
        let mut group: Option<LinkGroup> = None;
        loop {
            self.buf.clear();
            let event = self
                .reader
                .read_event_into(&mut self.buf)
                .map_err(|e| Error::xml(position(&self.reader), e))?;
            match event {
                Event::Decl(decl) => check_decl(&self.reader, &decl)?,
                Event::Start(e) if e.name().as_ref() == b"linkGrp" => {
                    group = Some(Self::open_group(&self.reader, &e.into_owned())?);
                }
                Event::Empty(e) if e.name().as_ref() == b"linkGrp" => {
                    return Self::open_group(&self.reader, &e.into_owned()).map(Some);
                }
                Event::End(e) if e.name().as_ref() == b"linkGrp" => {
                    return Ok(group);
                }
                Event::Empty(e) | Event::Start(e) if e.name().as_ref() == b"link" => {
                    let e = e.into_owned();
                    let link = Self::parse_link(&self.reader, &e)?;
                    match group.as_mut() {
                        Some(g) => g.links.push(link),
                        None => {
                            return Err(Error::Structure(format!(
                                "<link> outside of <linkGrp> at byte {}",
                                position(&self.reader)
                            )))
                        }
                    }
                }
                Event::Eof => {
                    if group.is_some() {
                        return Err(Error::xml(position(&self.reader), "unterminated <linkGrp>"));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }

    fn open_group(reader: &Reader<R>, e: &BytesStart<'_>) -> Result<LinkGroup> {
        let from_doc = attribute(reader, e, b"fromDoc")?;
        let to_doc = attribute(reader, e, b"toDoc")?;
        let (from_doc, to_doc) = match (from_doc, to_doc) {
            (Some(f), Some(t)) => (f, t),
            _ => {
                return Err(Error::Structure(format!(
                    "<linkGrp> without fromDoc/toDoc at byte {}",
                    position(reader)
                )))
            }
        };
        for doc in [&from_doc, &to_doc] {
            if !(doc.ends_with(".xml") || doc.ends_with(".xml.gz")) {
                return Err(Error::Structure(format!(
                    "document reference `{doc}` is not an .xml or .xml.gz path"
                )));
            }
        }
        Ok(LinkGroup {
            from_doc,
            to_doc,
            links: Vec::new(),
        })
    }

    fn parse_link(reader: &Reader<R>, e: &BytesStart<'_>) -> Result<Link> {
        let id = attribute(reader, e, b"id")?;
        let xtargets = attribute(reader, e, b"xtargets")?.ok_or_else(|| {
            Error::Structure(format!(
                "link {} has no xtargets",
                id.as_deref().unwrap_or("<no id>")
            ))
        })?;
        let certainty = match attribute(reader, e, b"certainty")? {
            Some(v) => Some(v.trim().parse::<f64>().map_err(|_| {
                Error::Structure(format!(
                    "link {}: certainty `{v}` is not a number",
                    id.as_deref().unwrap_or(&xtargets)
                ))
            })?),
            None => None,
        };
        Link::new(xtargets, certainty, id)
    }
}

impl<R: BufRead> Iterator for AlignmentReader<R> {
    type Item = Result<LinkGroup>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_group() {
            Ok(Some(g)) => Some(Ok(g)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Parses a whole cesAlign file into its link groups.
pub fn parse_alignment<R: BufRead>(input: R) -> Result<Vec<LinkGroup>> {
    AlignmentReader::new(input)?.collect()
}

/// What [`resolve`] does with links that reference unknown sentence IDs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DanglingIds {
    #[default]
    Error,
    Skip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResolveStats {
    pub resolved: usize,
    pub skipped_dangling: usize,
}

/// Turns every link of `group` into an [`AlignedUnit`] by looking up its
/// sentences. Multi-sentence sides are joined with single spaces.
pub fn resolve(
    group: &LinkGroup,
    from: &CorpusDocument,
    to: &CorpusDocument,
    src_lang: &LanguageTag,
    trg_lang: &LanguageTag,
    dangling: DanglingIds,
) -> Result<(Bitext, ResolveStats)> {
    let mut bitext = Bitext::new(src_lang.clone(), trg_lang.clone());
    let mut stats = ResolveStats::default();
    for link in &group.links {
        let side = |ids: Vec<&str>, doc: &CorpusDocument, lang: &LanguageTag, name| {
            let mut text = String::new();
            for id in &ids {
                let sentence = doc.get(id).ok_or_else(|| Error::DanglingId {
                    link: link.label(),
                    id: id.to_string(),
                    side: name,
                })?;
                if !text.is_empty() && !sentence.is_empty() {
                    text.push(' ');
                }
                text.push_str(sentence);
            }
            Segment::ingest(
                lang.clone(),
                &text,
                ids.into_iter().map(str::to_owned).collect(),
            )
        };
        let sides = side(link.src_ids().collect(), from, src_lang, "source").and_then(|src| {
            side(link.trg_ids().collect(), to, trg_lang, "target").map(|trg| (src, trg))
        });
        let (src, trg) = match sides {
            Ok(pair) => pair,
            Err(Error::DanglingId { .. }) if dangling == DanglingIds::Skip => {
                stats.skipped_dangling += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        bitext.push(AlignedUnit {
            src,
            trg,
            certainty: link.certainty,
            link_id: link.id.clone(),
        })?;
        stats.resolved += 1;
    }
    Ok((bitext, stats))
}

/// Which side of the threshold a certainty value must fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// certainty >= threshold
    Min,
    /// certainty <= threshold
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertaintyPredicate {
    pub threshold: f64,
    pub bound: Bound,
}

impl CertaintyPredicate {
    pub fn accepts(&self, certainty: Option<f64>) -> bool {
        match (certainty, self.bound) {
            (None, _) => false,
            (Some(c), Bound::Min) => c >= self.threshold,
            (Some(c), Bound::Max) => c <= self.threshold,
        }
    }
}

/// Link-level selection: allowed (m, n) shapes and/or a certainty predicate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkFilter {
    pub shapes: Option<Vec<(usize, usize)>>,
    pub certainty: Option<CertaintyPredicate>,
}

impl LinkFilter {
    pub fn one_to_one() -> Self {
        LinkFilter {
            shapes: Some(vec![(1, 1)]),
            certainty: None,
        }
    }

    pub fn accepts(&self, unit: &AlignedUnit) -> bool {
        let shape_ok = self
            .shapes
            .as_ref()
            .is_none_or(|shapes| shapes.contains(&unit.shape()));
        shape_ok && self.certainty.is_none_or(|p| p.accepts(unit.certainty))
    }
}

/// Parses a comma-separated shape list such as `1-1,2-1`.
pub fn parse_shapes(spec: &str) -> Result<Vec<(usize, usize)>> {
    spec.split(',')
        .map(|part| {
            let (m, n) = part
                .trim()
                .split_once('-')
                .ok_or_else(|| Error::Invalid(format!("link shape `{part}`")))?;
            let parse = |s: &str| {
                usize::from_str(s.trim())
                    .map_err(|_| Error::Invalid(format!("link shape `{part}`")))
            };
            Ok((parse(m)?, parse(n)?))
        })
        .collect()
}

pub fn filter_links(bitext: Bitext, filter: &LinkFilter) -> Bitext {
    bitext.retain(|u| filter.accepts(u))
}
