use std::io::{self, BufRead, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use bitextkit::filters::LanguageProfiles;
use bitextkit::{io as kio, LanguageTag};
use clap::Subcommand;

use crate::Global;

#[derive(Subcommand, Debug)]
pub enum LangidCommand {
    /// Build profiles from `lang=file` training samples.
    Train {
        #[arg(required = true, value_name = "LANG=FILE")]
        samples: Vec<String>,
        /// Profile file; stdout if omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the best language and its confidence for each input line.
    Classify {
        /// Profiles from `train`; the bundled ones if omitted.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Input file; stdin if omitted.
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// Number of candidates per line.
        #[arg(long, default_value_t = 1)]
        top: usize,
    },
}

pub fn run(g: &Global, command: LangidCommand) -> anyhow::Result<()> {
    let workdir = g.workdir();
    let at = |p: &PathBuf| {
        if p.is_absolute() {
            p.clone()
        } else {
            workdir.join(p)
        }
    };
    match command {
        LangidCommand::Train { samples, output } => {
            let mut training = Vec::new();
            for spec in &samples {
                let (lang, file) = spec
                    .split_once('=')
                    .ok_or_else(|| anyhow!("expected LANG=FILE, got `{spec}`"))?;
                let lang: LanguageTag = lang.parse()?;
                let path = at(&PathBuf::from(file));
                let text = kio::read_lines(&path)
                    .with_context(|| format!("reading {}", path.display()))?
                    .join("\n");
                training.push((lang, text));
            }
            let profiles = LanguageProfiles::train(training)?;
            let json = profiles.to_json();
            match output {
                Some(p) => std::fs::write(at(&p), json + "\n")?,
                None => println!("{json}"),
            }
            g.note(format!("trained {} profiles", samples.len()));
            g.write_report(
                &serde_json::json!({ "languages": profiles.languages().collect::<Vec<_>>() }),
            )
        }
        LangidCommand::Classify {
            profiles,
            input,
            top,
        } => {
            let profiles = match profiles {
                Some(p) => {
                    let path = at(&p);
                    LanguageProfiles::from_json(
                        &std::fs::read_to_string(&path)
                            .with_context(|| format!("reading {}", path.display()))?,
                    )?
                }
                None => LanguageProfiles::bundled(),
            };
            let reader: Box<dyn BufRead> = match input {
                Some(p) => kio::open(at(&p))?,
                None => Box::new(io::stdin().lock()),
            };
            let mut out = BufWriter::new(io::stdout().lock());
            let mut n = 0;
            for line in reader.lines() {
                let line = line?;
                let ranked = profiles.classify(&line);
                let cells: Vec<String> = ranked
                    .iter()
                    .take(top.max(1))
                    .map(|(l, c)| format!("{l}\t{c:.4}"))
                    .collect();
                writeln!(out, "{}", cells.join("\t"))?;
                n += 1;
            }
            out.flush()?;
            g.write_report(&serde_json::json!({ "lines": n }))
        }
    }
}
