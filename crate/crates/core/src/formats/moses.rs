use std::io::{self, BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::lines;
use crate::model::{AlignedUnit, Bitext, LanguageTag, Segment};
use crate::text::escape_controls;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MosesCounts {
    pub written: usize,
    pub skipped_empty: usize,
}

fn write_units(
    bitext: &Bitext,
    mut emit: impl FnMut(&str, &str) -> io::Result<()>,
) -> Result<MosesCounts> {
    let mut counts = MosesCounts::default();
    for unit in bitext.units() {
        if unit.is_empty_link() {
            counts.skipped_empty += 1;
            continue;
        }
        emit(
            &escape_controls(unit.src.text()),
            &escape_controls(unit.trg.text()),
        )
        .map_err(|source| Error::PartialWrite {
            written: counts.written,
            source,
        })?;
        counts.written += 1;
    }
    Ok(counts)
}

/// Writes line-aligned source and target files. Line i of each sink belongs
/// to the same unit.
pub fn write_moses<W1: Write, W2: Write>(
    bitext: &Bitext,
    src_sink: &mut W1,
    trg_sink: &mut W2,
) -> Result<MosesCounts> {
    let counts = write_units(bitext, |s, t| {
        writeln!(src_sink, "{s}")?;
        writeln!(trg_sink, "{t}")
    })?;
    let flushed = src_sink.flush().and_then(|_| trg_sink.flush());
    flushed.map_err(|source| Error::PartialWrite {
        written: counts.written,
        source,
    })?;
    Ok(counts)
}

/// Single-file variant: `source<TAB>target` per line.
pub fn write_moses_tsv<W: Write>(bitext: &Bitext, sink: &mut W) -> Result<MosesCounts> {
    let counts = write_units(bitext, |s, t| writeln!(sink, "{s}\t{t}"))?;
    sink.flush().map_err(|source| Error::PartialWrite {
        written: counts.written,
        source,
    })?;
    Ok(counts)
}

fn unit(src_lang: &LanguageTag, trg_lang: &LanguageTag, s: &str, t: &str) -> Result<AlignedUnit> {
    Ok(AlignedUnit::new(
        Segment::ingest(src_lang.clone(), s, Vec::new())?,
        Segment::ingest(trg_lang.clone(), t, Vec::new())?,
    ))
}

pub fn read_moses<R1: BufRead, R2: BufRead>(
    src_source: R1,
    trg_source: R2,
    src_lang: LanguageTag,
    trg_lang: LanguageTag,
) -> Result<Bitext> {
    let mut bitext = Bitext::new(src_lang.clone(), trg_lang.clone());
    let mut src = lines(src_source);
    let mut trg = lines(trg_source);
    loop {
        match (src.next().transpose()?, trg.next().transpose()?) {
            (Some(s), Some(t)) => bitext.push(unit(&src_lang, &trg_lang, &s, &t)?)?,
            (None, None) => return Ok(bitext),
            (Some(_), None) => {
                let rest = src.try_fold(0usize, |n, l| l.map(|_| n + 1))?;
                return Err(Error::LineCountMismatch {
                    left: bitext.len() + 1 + rest,
                    right: bitext.len(),
                });
            }
            (None, Some(_)) => {
                let rest = trg.try_fold(0usize, |n, l| l.map(|_| n + 1))?;
                return Err(Error::LineCountMismatch {
                    left: bitext.len(),
                    right: bitext.len() + 1 + rest,
                });
            }
        }
    }
}

pub fn read_moses_tsv<R: BufRead>(
    source: R,
    src_lang: LanguageTag,
    trg_lang: LanguageTag,
) -> Result<Bitext> {
    let mut bitext = Bitext::new(src_lang.clone(), trg_lang.clone());
    for (n, line) in lines(source).enumerate() {
        let line = line?;
        let (s, t) = line
            .split_once('\t')
            .ok_or_else(|| Error::Invalid(format!("line {} has no tab separator", n + 1)))?;
        bitext.push(unit(&src_lang, &trg_lang, s, t)?)?;
    }
    Ok(bitext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tag(s: &str) -> LanguageTag {
        s.parse().unwrap()
    }

    fn bitext(pairs: &[(&str, &str)]) -> Bitext {
        Bitext::from_pairs(tag("en"), tag("fi"), pairs.iter().copied()).unwrap()
    }

    #[test]
    fn empty_links_are_skipped() {
        let b = bitext(&[("a", "b"), ("", "c"), ("d", "e")]);
        let (mut s, mut t) = (Vec::new(), Vec::new());
        let counts = write_moses(&b, &mut s, &mut t).unwrap();
        assert_eq!(
            counts,
            MosesCounts {
                written: 2,
                skipped_empty: 1
            }
        );
        assert_eq!(String::from_utf8(s).unwrap(), "a\nd\n");
        assert_eq!(String::from_utf8(t).unwrap(), "b\ne\n");
    }

    #[test]
    fn empty_bitext() {
        let (mut s, mut t) = (Vec::new(), Vec::new());
        assert_eq!(
            write_moses(&bitext(&[]), &mut s, &mut t).unwrap(),
            MosesCounts::default()
        );
        assert!(s.is_empty() && t.is_empty());
    }

    #[test]
    fn tabs_become_spaces() {
        let b = bitext(&[("a\tb", "c")]);
        let (mut s, mut t) = (Vec::new(), Vec::new());
        write_moses(&b, &mut s, &mut t).unwrap();
        assert_eq!(s, b"a b\n");
        let mut tsv = Vec::new();
        write_moses_tsv(&b, &mut tsv).unwrap();
        assert_eq!(tsv, b"a b\tc\n");
    }

    #[test]
    fn unequal_line_counts() {
        let err = read_moses(&b"1\n2\n3\n"[..], &b"1\n2\n"[..], tag("en"), tag("fi")).unwrap_err();
        assert!(matches!(
            err,
            Error::LineCountMismatch { left: 3, right: 2 }
        ));
        let err = read_moses(&b"1\n"[..], &b"1\n2\n3\n"[..], tag("en"), tag("fi")).unwrap_err();
        assert!(matches!(
            err,
            Error::LineCountMismatch { left: 1, right: 3 }
        ));
        let ok = read_moses(&b"a\nb\n"[..], &b"c\nd\n"[..], tag("en"), tag("fi")).unwrap();
        assert_eq!(ok.len(), 2);
    }

    struct Broken(usize);
    impl Write for Broken {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            if self.0 == 0 {
                return Err(io::Error::other("disk full"));
            }
            self.0 -= 1;
            Ok(buf.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn io_failure_reports_partial_count() {
        let b = bitext(&[("a", "b"), ("c", "d"), ("e", "f")]);
        // each writeln! issues two writes (text + newline)
        let err = write_moses(&b, &mut Broken(4), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, Error::PartialWrite { written: 2, .. }));
    }

    proptest! {
        #[test]
        fn round_trip(pairs in proptest::collection::vec(("[a-zäö ,.]{1,12}", "[a-z!?]{1,12}"), 0..30)) {
            let b = Bitext::from_pairs(tag("en"), tag("fi"), pairs.iter().map(|(a, b)| (a.as_str(), b.as_str()))).unwrap();
            let (mut s, mut t) = (Vec::new(), Vec::new());
            let counts = write_moses(&b, &mut s, &mut t).unwrap();
            prop_assert_eq!(counts.written + counts.skipped_empty, b.len());
            let back = read_moses(&s[..], &t[..], tag("en"), tag("fi")).unwrap();
            let texts: Vec<_> = back.text_pairs().collect();
            let orig: Vec<_> = b.text_pairs().collect();
            prop_assert_eq!(texts, orig);
        }
    }
}
