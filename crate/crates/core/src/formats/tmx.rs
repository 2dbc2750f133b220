use std::io::{BufRead, Write};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::KeySet;
use crate::io::decompress;
use crate::model::{AlignedUnit, Bitext, LanguageTag, Segment};

const CREATION_TOOL: &str = env!("CARGO_PKG_NAME");
const CREATION_TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TmxCounts {
    pub written: usize,
    pub skipped_empty: usize,
    pub skipped_duplicate: usize,
}

/// Escapes markup characters and drops code points XML 1.0 cannot carry.
fn escape(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' | '\n' | '\r' => out.push(c),
            c if (c as u32) < 0x20 || c == '\u{fffe}' || c == '\u{ffff}' => {}
            c => out.push(c),
        }
    }
}

/// Writes a TMX 1.4 document with one `<tu>` per distinct (source, target)
/// pair. First occurrence wins; empty links are skipped.
pub fn write_tmx<W: Write>(bitext: &Bitext, sink: &mut W) -> Result<TmxCounts> {
    let mut counts = TmxCounts::default();
    let src_lang = bitext.src_lang().as_str();
    let trg_lang = bitext.trg_lang().as_str();
    let io_err = |written| move |source| Error::PartialWrite { written, source };

    let mut head = String::new();
    head.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    head.push_str("<!DOCTYPE tmx SYSTEM \"tmx14.dtd\">\n");
    head.push_str("<tmx version=\"1.4\">\n");
    head.push_str(&format!(
        "  <header creationtool=\"{CREATION_TOOL}\" creationtoolversion=\"{CREATION_TOOL_VERSION}\" \
         datatype=\"plaintext\" segtype=\"sentence\" adminlang=\"en\" srclang=\"{src_lang}\" \
         o-tmf=\"{CREATION_TOOL}\"/>\n"
    ));
    head.push_str("  <body>\n");
    sink.write_all(head.as_bytes()).map_err(io_err(0))?;

    let mut seen = KeySet::new();
    let mut key = String::new();
    let mut tu = String::new();
    for unit in bitext.units() {
        if unit.is_empty_link() {
            counts.skipped_empty += 1;
            continue;
        }
        key.clear();
        key.push_str(unit.src.text());
        key.push('\t');
        key.push_str(unit.trg.text());
        if !seen.insert(&key) {
            counts.skipped_duplicate += 1;
            continue;
        }
        tu.clear();
        tu.push_str("    <tu>\n");
        for (lang, text) in [(src_lang, unit.src.text()), (trg_lang, unit.trg.text())] {
            tu.push_str("      <tuv xml:lang=\"");
            tu.push_str(lang);
            tu.push_str("\"><seg>");
            escape(text, &mut tu);
            tu.push_str("</seg></tuv>\n");
        }
        tu.push_str("    </tu>\n");
        sink.write_all(tu.as_bytes())
            .map_err(io_err(counts.written))?;
        counts.written += 1;
    }
    sink.write_all(b"  </body>\n</tmx>\n")
        .and_then(|_| sink.flush())
        .map_err(io_err(counts.written))?;
    Ok(counts)
}

fn lang_matches(attr: &str, tag: &LanguageTag) -> bool {
    attr.to_ascii_lowercase().replace('-', "_") == tag.as_str().to_ascii_lowercase()
}

fn lang_attr(e: &BytesStart<'_>) -> Option<String> {
    e.attributes().flatten().find_map(|a| {
        matches!(a.key.as_ref(), b"xml:lang" | b"lang")
            .then(|| a.unescape_value().ok().map(|v| v.into_owned()))
            .flatten()
    })
}

/// Reads the two requested languages out of a TMX file. Translation units
/// lacking either language are ignored; attributes other than the language
/// are not preserved.
pub fn read_tmx<R: BufRead>(
    input: R,
    src_lang: LanguageTag,
    trg_lang: LanguageTag,
) -> Result<Bitext> {
    let mut reader = Reader::from_reader(decompress(input)?);
    let mut buf = Vec::new();
    let mut bitext = Bitext::new(src_lang.clone(), trg_lang.clone());
    let mut src: Option<String> = None;
    let mut trg: Option<String> = None;
    let mut lang: Option<String> = None;
    let mut seg: Option<String> = None;
    loop {
        let pos = reader.buffer_position() as u64;
        match reader
            .read_event_into(&mut buf)
            .map_err(|e| Error::xml(pos, e))?
        {
            Event::Start(e) => match e.name().as_ref() {
                b"tu" => (src, trg) = (None, None),
                b"tuv" => lang = lang_attr(&e),
                b"seg" => seg = Some(String::new()),
                _ => {}
            },
            Event::Text(t) => {
                if let Some(s) = seg.as_mut() {
                    s.push_str(&t.unescape().map_err(|e| Error::xml(pos, e))?);
                }
            }
            Event::CData(t) => {
                if let Some(s) = seg.as_mut() {
                    s.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(e) => match e.name().as_ref() {
                b"seg" => {
                    if let (Some(text), Some(l)) = (seg.take(), lang.as_deref()) {
                        if lang_matches(l, &src_lang) && src.is_none() {
                            src = Some(text);
                        } else if lang_matches(l, &trg_lang) && trg.is_none() {
                            trg = Some(text);
                        }
                    }
                }
                b"tu" => {
                    if let (Some(s), Some(t)) = (src.take(), trg.take()) {
                        bitext.push(AlignedUnit::new(
                            Segment::ingest(src_lang.clone(), &s, Vec::new())?,
                            Segment::ingest(trg_lang.clone(), &t, Vec::new())?,
                        ))?;
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    Ok(bitext)
}

const SEGTYPES: [&str; 4] = ["block", "paragraph", "sentence", "phrase"];
const HEADER_REQUIRED: [&str; 7] = [
    "creationtool",
    "creationtoolversion",
    "segtype",
    "o-tmf",
    "adminlang",
    "srclang",
    "datatype",
];
const INLINE: [&[u8]; 7] = [b"bpt", b"ept", b"it", b"ph", b"hi", b"ut", b"sub"];

/// Checks a document against the TMX 1.4 content model for the elements
/// this crate reads and writes (`tmx`, `header`, `body`, `tu`, `tuv`, `seg`
/// plus `note`/`prop`/`ude` metadata and inline codes inside `seg`).
/// Returns the number of `<tu>` elements.
pub fn validate_tmx14<R: BufRead>(input: R) -> Result<usize> {
    let mut reader = Reader::from_reader(decompress(input)?);
    let mut buf = Vec::new();
    let mut stack: Vec<Vec<u8>> = Vec::new();
    // children seen so far for each open element
    let mut children: Vec<Vec<Vec<u8>>> = Vec::new();
    let mut tu_count = 0;
    let mut saw_root = false;
    let invalid = |msg: String| Error::Structure(format!("TMX 1.4: {msg}"));

    loop {
        let pos = reader.buffer_position() as u64;
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| Error::xml(pos, e))?;
        let (start, empty) = match &event {
            Event::Start(e) => (Some(e.clone().into_owned()), false),
            Event::Empty(e) => (Some(e.clone().into_owned()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            let name = e.name().as_ref().to_vec();
            let in_seg = stack.iter().any(|n| n == b"seg");
            let parent = stack.last().map(Vec::as_slice);
            let allowed = match (parent, name.as_slice()) {
                (None, b"tmx") => !saw_root,
                (Some(b"tmx"), b"header" | b"body") => true,
                (Some(b"header"), b"note" | b"prop" | b"ude") => true,
                (Some(b"ude"), b"map") => true,
                (Some(b"body"), b"tu") => true,
                (Some(b"tu"), b"note" | b"prop" | b"tuv") => true,
                (Some(b"tuv"), b"note" | b"prop" | b"seg") => true,
                (Some(_), n) if in_seg && INLINE.contains(&n) => true,
                _ => false,
            };
            if !allowed {
                return Err(invalid(format!(
                    "<{}> not allowed inside <{}>",
                    String::from_utf8_lossy(&name),
                    parent.map(String::from_utf8_lossy).unwrap_or_default()
                )));
            }
            let attr = |key: &str| -> Option<String> {
                e.attributes()
                    .flatten()
                    .find(|a| a.key.as_ref() == key.as_bytes())
                    .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
            };
            match name.as_slice() {
                b"tmx" => {
                    saw_root = true;
                    if attr("version").as_deref() != Some("1.4") {
                        return Err(invalid("root must carry version=\"1.4\"".into()));
                    }
                }
                b"header" => {
                    for key in HEADER_REQUIRED {
                        if attr(key).is_none() {
                            return Err(invalid(format!("<header> lacks required `{key}`")));
                        }
                    }
                    let segtype = attr("segtype").unwrap_or_default();
                    if !SEGTYPES.contains(&segtype.as_str()) {
                        return Err(invalid(format!("segtype `{segtype}`")));
                    }
                }
                b"tuv" => {
                    if attr("xml:lang").or_else(|| attr("lang")).is_none() {
                        return Err(invalid("<tuv> without xml:lang".into()));
                    }
                }
                b"prop" if attr("type").is_none() => {
                    return Err(invalid("<prop> without type".into()));
                }
                b"tu" => tu_count += 1,
                _ => {}
            }
            if let Some(siblings) = children.last_mut() {
                siblings.push(name.clone());
            }
            if empty {
                check_children(&name, &[]).map_err(invalid)?;
            } else {
                stack.push(name);
                children.push(Vec::new());
            }
        } else {
            match event {
                Event::End(_) => {
                    let name = stack.pop().expect("reader checks tag balance");
                    let kids = children.pop().unwrap_or_default();
                    check_children(&name, &kids).map_err(invalid)?;
                }
                Event::Text(t) => {
                    let parent = stack.last().map(Vec::as_slice);
                    let text_ok = matches!(parent, Some(b"seg" | b"note" | b"prop"))
                        || stack.iter().any(|n| n == b"seg")
                        || t.iter().all(u8::is_ascii_whitespace);
                    if !text_ok {
                        return Err(invalid("character data outside <seg>/<note>/<prop>".into()));
                    }
                }
                Event::Eof => break,
                _ => {}
            }
        }
        buf.clear();
    }
    if !saw_root {
        return Err(invalid("missing <tmx> root".into()));
    }
    Ok(tu_count)
}

fn check_children(name: &[u8], kids: &[Vec<u8>]) -> std::result::Result<(), String> {
    let count = |n: &[u8]| kids.iter().filter(|k| k.as_slice() == n).count();
    match name {
        b"tmx" => {
            if kids != [b"header".to_vec(), b"body".to_vec()] {
                return Err("<tmx> must contain exactly (header, body)".into());
            }
        }
        b"tu" => {
            if count(b"tuv") == 0 {
                return Err("<tu> needs at least one <tuv>".into());
            }
            let first_tuv = kids.iter().position(|k| k == b"tuv").unwrap_or(0);
            if kids[first_tuv..].iter().any(|k| k != b"tuv") {
                return Err("<tu> metadata must precede its <tuv> elements".into());
            }
        }
        b"tuv" if (count(b"seg") != 1 || kids.last().map(Vec::as_slice) != Some(b"seg")) => {
            return Err("<tuv> must end with exactly one <seg>".into());
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(s: &str) -> LanguageTag {
        s.parse().unwrap()
    }

    fn write(pairs: &[(&str, &str)]) -> (String, TmxCounts) {
        let b = Bitext::from_pairs(tag("en"), tag("fi"), pairs.iter().copied()).unwrap();
        let mut out = Vec::new();
        let counts = write_tmx(&b, &mut out).unwrap();
        (String::from_utf8(out).unwrap(), counts)
    }

    #[test]
    fn dedup_and_empty_links() {
        let (xml, counts) = write(&[("a", "b"), ("a", "b"), ("c", "d"), ("e", "")]);
        assert_eq!(
            counts,
            TmxCounts {
                written: 2,
                skipped_empty: 1,
                skipped_duplicate: 1
            }
        );
        assert_eq!(xml.matches("<tu>").count(), 2);
        assert_eq!(validate_tmx14(xml.as_bytes()).unwrap(), 2);
    }

    #[test]
    fn empty_bitext_is_valid() {
        let (xml, counts) = write(&[]);
        assert_eq!(counts, TmxCounts::default());
        assert!(xml.contains("<body>\n  </body>"));
        assert_eq!(validate_tmx14(xml.as_bytes()).unwrap(), 0);
    }

    #[test]
    fn escaping_round_trips() {
        let (xml, _) = write(&[("a < b & \"c\"", "x > y\u{7}")]);
        let back = read_tmx(xml.as_bytes(), tag("en"), tag("fi")).unwrap();
        assert_eq!(
            back.text_pairs().collect::<Vec<_>>(),
            [("a < b & \"c\"", "x > y")]
        );
    }

    #[test]
    fn normalization_applies_before_dedup() {
        let (_, counts) = write(&[("\u{e4}", "x"), ("a\u{308}", "x")]);
        assert_eq!(counts.skipped_duplicate, 1);
    }

    #[test]
    fn validator_rejects_broken_documents() {
        let cases = [
            r#"<tmx version="1.3"><header creationtool="a" creationtoolversion="1" segtype="sentence" o-tmf="x" adminlang="en" srclang="en" datatype="plaintext"/><body/></tmx>"#,
            r#"<tmx version="1.4"><header creationtool="a" segtype="sentence" o-tmf="x" adminlang="en" srclang="en" datatype="plaintext"/><body/></tmx>"#,
            r#"<tmx version="1.4"><body/></tmx>"#,
            r#"<tmx version="1.4"><header creationtool="a" creationtoolversion="1" segtype="sentence" o-tmf="x" adminlang="en" srclang="en" datatype="plaintext"/><body><tu></tu></body></tmx>"#,
            r#"<tmx version="1.4"><header creationtool="a" creationtoolversion="1" segtype="sentence" o-tmf="x" adminlang="en" srclang="en" datatype="plaintext"/><body><tu><tuv><seg>x</seg></tuv></tu></body></tmx>"#,
            r#"<tmx version="1.4"><header creationtool="a" creationtoolversion="1" segtype="sentence" o-tmf="x" adminlang="en" srclang="en" datatype="plaintext"/><body><tu><tuv xml:lang="en">x<seg>x</seg></tuv></tu></body></tmx>"#,
        ];
        for case in cases {
            assert!(validate_tmx14(case.as_bytes()).is_err(), "{case}");
        }
        let ok = r#"<tmx version="1.4"><header creationtool="a" creationtoolversion="1" segtype="sentence" o-tmf="x" adminlang="en" srclang="en" datatype="plaintext"/><body><tu><prop type="x">p</prop><tuv xml:lang="en"><seg>a <ph>1</ph> b</seg></tuv></tu></body></tmx>"#;
        assert_eq!(validate_tmx14(ok.as_bytes()).unwrap(), 1);
    }
}
