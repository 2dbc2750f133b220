//! Pipeline configuration files and their static validation.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{FilterRegistry, FilterSpec, KeyParams};
use crate::model::{LanguagePairKey, LanguageTag};
use crate::pipeline::ops::{CombineMode, Preprocessor, PreprocessorSpec};
use crate::pipeline::triangulate::PivotMatch;
use crate::xces::{parse_shapes, Bound, CertaintyPredicate, DanglingIds, LinkFilter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    #[serde(default)]
    pub overwrite: bool,
}

fn default_workdir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for Common {
    fn default() -> Self {
        Common {
            seed: 0,
            workdir: default_workdir(),
            overwrite: false,
        }
    }
}

/// One dataset: a single file or a list of line-parallel files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    File(PathBuf),
    Parallel(Vec<PathBuf>),
}

impl DatasetRef {
    pub fn files(&self) -> &[PathBuf] {
        match self {
            DatasetRef::File(p) => std::slice::from_ref(p),
            DatasetRef::Parallel(ps) => ps,
        }
    }

    pub fn arity(&self) -> usize {
        self.files().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub name: String,
    pub op: String,
    #[serde(default)]
    pub inputs: Vec<DatasetRef>,
    #[serde(default)]
    pub outputs: Vec<DatasetRef>,
    #[serde(default = "empty_params")]
    pub params: serde_yaml::Value,
}

fn empty_params() -> serde_yaml::Value {
    serde_yaml::Value::Mapping(Default::default())
}

impl StepSpec {
    /// A step whose parameters are given as JSON.
    pub fn new(
        name: impl Into<String>,
        op: impl Into<String>,
        inputs: Vec<DatasetRef>,
        outputs: Vec<DatasetRef>,
        params: serde_json::Value,
    ) -> Result<Self> {
        Ok(StepSpec {
            name: name.into(),
            op: op.into(),
            inputs,
            outputs,
            params: serde_yaml::to_value(params).map_err(|e| Error::Config(e.to_string()))?,
        })
    }

    pub fn input_files(&self) -> impl Iterator<Item = &PathBuf> {
        self.inputs.iter().flat_map(DatasetRef::files)
    }

    pub fn output_files(&self) -> impl Iterator<Item = &PathBuf> {
        self.outputs.iter().flat_map(DatasetRef::files)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub common: Common,
    pub steps: Vec<StepSpec>,
}

impl PipelineConfig {
    pub fn from_yaml(text: &str) -> Result<Self> {
        serde_yaml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; a relative `workdir` is taken relative to the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_yaml(&text)?;
        if config.common.workdir.is_relative() {
            if let Some(dir) = path.parent() {
                config.common.workdir = dir.join(&config.common.workdir);
            }
        }
        Ok(config)
    }

    /// Checks names, operations, parameters and step wiring without touching
    /// the file system.
    pub fn validate(&self) -> Result<Vec<Plan>> {
        let registry = FilterRegistry::default();
        let mut names: HashMap<&str, usize> = HashMap::new();
        let mut producers: HashMap<&Path, &str> = HashMap::new();
        let mut plans = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            let invalid = |message: String| Error::Validation {
                step: step.name.clone(),
                message,
            };
            if step.name.is_empty() || step.name.contains(['/', '\\']) {
                return Err(invalid(
                    "step names must be non-empty and contain no path separators".into(),
                ));
            }
            if names.insert(&step.name, i).is_some() {
                return Err(invalid("duplicate step name".into()));
            }
            for file in step.input_files() {
                if step.output_files().any(|o| o == file) {
                    return Err(invalid(format!(
                        "`{}` is both input and output",
                        file.display()
                    )));
                }
            }
            let op = Op::plan(step, &registry).map_err(|e| match e {
                Error::Validation { .. } => e,
                other => invalid(other.to_string()),
            })?;
            let mut depends_on = Vec::new();
            for file in step.input_files() {
                if let Some(&producer) = producers.get(file.as_path()) {
                    let idx = names[producer];
                    if !depends_on.contains(&idx) {
                        depends_on.push(idx);
                    }
                }
            }
            for file in step.output_files() {
                if let Some(other) = producers.insert(file.as_path(), &step.name) {
                    return Err(invalid(format!(
                        "output `{}` is also written by step `{other}`",
                        file.display()
                    )));
                }
            }
            depends_on.sort_unstable();
            plans.push(Plan { op, depends_on });
        }
        Ok(plans)
    }
}

/// A validated step: its typed operation and the earlier steps it reads from.
#[derive(Debug, Clone)]
pub struct Plan {
    pub op: Op,
    pub depends_on: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountParams {
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceParams {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetParams {
    pub size: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitParams {
    pub proportion: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductParams {
    #[serde(default)]
    sample: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreprocessParams {
    steps: Vec<PreprocessorSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    pub languages: Vec<LanguageTag>,
    pub filters: Vec<FilterSpec>,
}

impl FilterParams {
    /// Filter specs with the step's languages filled in and relative paths
    /// resolved against `workdir`.
    pub fn specs(&self, workdir: &Path) -> Vec<FilterSpec> {
        self.filters
            .iter()
            .map(|f| {
                let mut f = f.clone();
                if f.side_languages.is_empty() {
                    f.side_languages = self.languages.clone();
                }
                for key in ["path", "profiles"] {
                    if let Some(serde_json::Value::String(p)) = f.params.get_mut(key) {
                        if Path::new(p.as_str()).is_relative() {
                            *p = workdir.join(&*p).to_string_lossy().into_owned();
                        }
                    }
                }
                f
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RetainParams {
    fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriangulateParams {
    #[serde(default)]
    pivot_match: PivotMatch,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleParams {
    alpha: f64,
    max_size: u64,
    pairs: Vec<LanguagePairKey>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertaintyParams {
    threshold: f64,
    bound: Bound,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlignmentParams {
    src_lang: LanguageTag,
    trg_lang: LanguageTag,
    #[serde(default)]
    root: Option<PathBuf>,
    #[serde(default)]
    shapes: Option<String>,
    #[serde(default)]
    certainty: Option<CertaintyParams>,
    #[serde(default)]
    skip_dangling: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TmxParams {
    src_lang: LanguageTag,
    trg_lang: LanguageTag,
}

/// A step's operation with parsed parameters.
#[derive(Debug, Clone)]
pub enum Op {
    Concatenate,
    Head(usize),
    Tail(usize),
    Slice {
        start: usize,
        end: usize,
    },
    Subset(usize),
    Split(f64),
    Product(CombineMode),
    Preprocess(Vec<Preprocessor>),
    Filter(FilterParams),
    Score(FilterParams),
    Dedup(KeyParams),
    RemoveOverlap(KeyParams),
    CeRetain(f64),
    Triangulate(PivotMatch),
    Sample {
        alpha: f64,
        max_size: u64,
        pairs: Vec<LanguagePairKey>,
    },
    ReadAlignment {
        src_lang: LanguageTag,
        trg_lang: LanguageTag,
        root: Option<PathBuf>,
        links: LinkFilter,
        dangling: DanglingIds,
    },
    Tmx {
        src_lang: LanguageTag,
        trg_lang: LanguageTag,
    },
}

/// Names accepted in the `op` field.
pub const OPERATIONS: &[&str] = &[
    "concatenate",
    "head",
    "tail",
    "slice",
    "subset",
    "split",
    "product",
    "preprocess",
    "filter",
    "score",
    "dedup",
    "remove_overlap",
    "ce_retain",
    "triangulate",
    "sample",
    "read_alignment",
    "tmx",
];

fn params<T: DeserializeOwned>(step: &StepSpec) -> Result<T> {
    let value = match &step.params {
        serde_yaml::Value::Null => empty_params(),
        v => v.clone(),
    };
    let fail = |e: String| Error::Validation {
        step: step.name.clone(),
        message: format!("params: {e}"),
    };
    let json = serde_json::to_value(&value).map_err(|e| fail(e.to_string()))?;
    serde_json::from_value(json).map_err(|e| fail(e.to_string()))
}

struct Shape<'a> {
    step: &'a StepSpec,
}

impl Shape<'_> {
    fn fail(&self, message: String) -> Error {
        Error::Validation {
            step: self.step.name.clone(),
            message,
        }
    }

    fn inputs(&self, n: usize) -> Result<&Self> {
        if self.step.inputs.len() != n {
            return Err(self.fail(format!(
                "`{}` takes {n} input dataset(s), got {}",
                self.step.op,
                self.step.inputs.len()
            )));
        }
        Ok(self)
    }

    fn outputs(&self, n: usize) -> Result<&Self> {
        if self.step.outputs.len() != n {
            return Err(self.fail(format!(
                "`{}` writes {n} output dataset(s), got {}",
                self.step.op,
                self.step.outputs.len()
            )));
        }
        Ok(self)
    }

    fn at_least_one_input(&self) -> Result<&Self> {
        if self.step.inputs.is_empty() {
            return Err(self.fail(format!("`{}` needs at least one input", self.step.op)));
        }
        Ok(self)
    }

    /// Every input and output dataset has the same number of files.
    fn same_arity(&self) -> Result<usize> {
        let mut all = self.step.inputs.iter().chain(&self.step.outputs);
        let arity = all.next().map_or(0, DatasetRef::arity);
        if all.any(|d| d.arity() != arity) {
            return Err(
                self.fail("all datasets must have the same number of parallel files".into())
            );
        }
        Ok(arity)
    }

    fn arity_of(&self, dataset: &DatasetRef, n: usize, what: &str) -> Result<()> {
        if dataset.arity() != n {
            return Err(self.fail(format!(
                "{what} must have {n} file(s), got {}",
                dataset.arity()
            )));
        }
        Ok(())
    }
}

impl Op {
    pub fn plan(step: &StepSpec, registry: &FilterRegistry) -> Result<Op> {
        let shape = Shape { step };
        let op = match step.op.as_str() {
            "concatenate" => {
                shape.at_least_one_input()?.outputs(1)?.same_arity()?;
                let _: serde::de::IgnoredAny = params(step)?;
                Op::Concatenate
            }
            "head" | "tail" => {
                shape.inputs(1)?.outputs(1)?.same_arity()?;
                let p: CountParams = params(step)?;
                if step.op == "head" {
                    Op::Head(p.n)
                } else {
                    Op::Tail(p.n)
                }
            }
            "slice" => {
                shape.inputs(1)?.outputs(1)?.same_arity()?;
                let p: SliceParams = params(step)?;
                if p.start == 0 || p.end < p.start {
                    return Err(shape.fail(format!(
                        "slice range {}..{} must satisfy 1 <= start <= end",
                        p.start, p.end
                    )));
                }
                Op::Slice {
                    start: p.start,
                    end: p.end,
                }
            }
            "subset" => {
                shape.inputs(1)?.outputs(1)?.same_arity()?;
                Op::Subset(params::<SubsetParams>(step)?.size)
            }
            "split" => {
                shape.inputs(1)?.outputs(2)?.same_arity()?;
                let p: SplitParams = params(step)?;
                if !(p.proportion > 0.0 && p.proportion < 1.0) {
                    return Err(
                        shape.fail(format!("proportion {} is outside (0, 1)", p.proportion))
                    );
                }
                Op::Split(p.proportion)
            }
            "product" => {
                shape.at_least_one_input()?.outputs(1)?;
                shape.arity_of(&step.outputs[0], step.inputs.len(), "the output")?;
                let p: ProductParams = params(step)?;
                Op::Product(match p.sample {
                    None => CombineMode::All,
                    Some(0) => return Err(shape.fail("sample must be positive".into())),
                    Some(k) => CombineMode::Sample(k),
                })
            }
            "preprocess" => {
                shape.inputs(1)?.outputs(1)?;
                let arity = shape.same_arity()?;
                let p: PreprocessParams = params(step)?;
                let pre = p
                    .steps
                    .iter()
                    .map(Preprocessor::from_spec)
                    .collect::<Result<Vec<_>>>()?;
                for spec in &p.steps {
                    let sides = match spec {
                        PreprocessorSpec::WhitespaceNormalize { sides }
                        | PreprocessorSpec::RegexSub { sides, .. }
                        | PreprocessorSpec::Tokenize { sides } => sides,
                    };
                    if let Some(bad) = sides.iter().flatten().find(|&&s| s >= arity) {
                        return Err(
                            shape.fail(format!("side {bad} out of range for {arity} files"))
                        );
                    }
                }
                Op::Preprocess(pre)
            }
            "filter" | "score" => {
                shape.inputs(1)?;
                let p: FilterParams = params(step)?;
                shape.arity_of(&step.inputs[0], p.languages.len(), "the input")?;
                // building checks kinds and parameters; file-backed filters
                // are only checked for their parameter shape here
                for spec in p.specs(Path::new(".")) {
                    if spec.kind == "external" || spec.params.get("profiles").is_some() {
                        continue;
                    }
                    registry.build(&spec)?;
                }
                let mut names: Vec<&str> = p.filters.iter().map(FilterSpec::display_name).collect();
                names.sort_unstable();
                if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
                    return Err(shape.fail(format!("duplicate filter name `{}`", w[0])));
                }
                if step.op == "filter" {
                    shape.outputs(1)?;
                    shape.arity_of(&step.outputs[0], p.languages.len(), "the output")?;
                    Op::Filter(p)
                } else {
                    shape.outputs(1)?;
                    shape.arity_of(&step.outputs[0], 1, "the score output")?;
                    Op::Score(p)
                }
            }
            "dedup" => {
                shape.inputs(1)?.outputs(1)?;
                let arity = shape.same_arity()?;
                let p: KeyParams = params(step)?;
                p.validate(arity)?;
                Op::Dedup(p)
            }
            "remove_overlap" => {
                shape.inputs(2)?.outputs(1)?;
                let arity = shape.same_arity()?;
                let p: KeyParams = params(step)?;
                p.validate(arity)?;
                Op::RemoveOverlap(p)
            }
            "ce_retain" => {
                shape.inputs(2)?.outputs(1)?;
                shape.arity_of(&step.inputs[1], 1, "the score input")?;
                shape.arity_of(&step.outputs[0], step.inputs[0].arity(), "the output")?;
                let p: RetainParams = params(step)?;
                if !(p.fraction > 0.0 && p.fraction <= 1.0) {
                    return Err(shape.fail(format!("fraction {} is outside (0, 1]", p.fraction)));
                }
                Op::CeRetain(p.fraction)
            }
            "triangulate" => {
                shape.inputs(2)?.outputs(1)?;
                let arity = shape.same_arity()?;
                if arity != 2 {
                    return Err(shape.fail("triangulate works on bilingual datasets".into()));
                }
                Op::Triangulate(params::<TriangulateParams>(step)?.pivot_match)
            }
            "sample" => {
                shape.at_least_one_input()?;
                shape.outputs(step.inputs.len())?;
                shape.same_arity()?;
                let p: SampleParams = params(step)?;
                if p.pairs.len() != step.inputs.len() {
                    return Err(shape.fail(format!(
                        "{} pairs listed for {} inputs",
                        p.pairs.len(),
                        step.inputs.len()
                    )));
                }
                if !(0.0..=1.0).contains(&p.alpha) {
                    return Err(shape.fail(format!("alpha {} is outside [0, 1]", p.alpha)));
                }
                if p.max_size == 0 {
                    return Err(shape.fail("max_size must be positive".into()));
                }
                let mut sorted = p.pairs.clone();
                sorted.sort();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(shape.fail("language pairs must be distinct".into()));
                }
                Op::Sample {
                    alpha: p.alpha,
                    max_size: p.max_size,
                    pairs: p.pairs,
                }
            }
            "read_alignment" => {
                shape.inputs(1)?.outputs(1)?;
                shape.arity_of(&step.inputs[0], 1, "the alignment input")?;
                shape.arity_of(&step.outputs[0], 2, "the output")?;
                let p: AlignmentParams = params(step)?;
                let links = LinkFilter {
                    shapes: p.shapes.as_deref().map(parse_shapes).transpose()?,
                    certainty: p.certainty.map(|c| CertaintyPredicate {
                        threshold: c.threshold,
                        bound: c.bound,
                    }),
                };
                Op::ReadAlignment {
                    src_lang: p.src_lang,
                    trg_lang: p.trg_lang,
                    root: p.root,
                    links,
                    dangling: if p.skip_dangling {
                        DanglingIds::Skip
                    } else {
                        DanglingIds::Error
                    },
                }
            }
            "tmx" => {
                shape.inputs(1)?.outputs(1)?;
                shape.arity_of(&step.inputs[0], 2, "the input")?;
                shape.arity_of(&step.outputs[0], 1, "the output")?;
                let p: TmxParams = params(step)?;
                Op::Tmx {
                    src_lang: p.src_lang,
                    trg_lang: p.trg_lang,
                }
            }
            other => {
                return Err(shape.fail(format!(
                    "unknown operation `{other}` (known: {})",
                    OPERATIONS.join(", ")
                )))
            }
        };
        Ok(op)
    }

    /// Whether the operation draws from the step's random generator.
    pub fn is_random(&self) -> bool {
        matches!(
            self,
            Op::Subset(_) | Op::Split(_) | Op::Product(CombineMode::Sample(_)) | Op::Sample { .. }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(steps: &str) -> PipelineConfig {
        PipelineConfig::from_yaml(&format!("common: {{seed: 1}}\nsteps:\n{steps}")).unwrap()
    }

    #[test]
    fn dataset_refs() {
        let c = config("  - {name: a, op: concatenate, inputs: [[x.en, x.fi], y.txt], outputs: [[o.en, o.fi]]}\n");
        assert_eq!(c.steps[0].inputs[0].arity(), 2);
        assert_eq!(c.steps[0].inputs[1].arity(), 1);
        let err = c.validate().unwrap_err();
        assert!(
            matches!(err, Error::Validation { ref step, .. } if step == "a"),
            "{err}"
        );
    }

    #[test]
    fn unknown_op_names_the_step() {
        let c = config("  - {name: first, op: frobnicate, inputs: [a], outputs: [b]}\n");
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("first") && err.contains("frobnicate"), "{err}");
    }

    #[test]
    fn missing_and_unknown_params() {
        let c = config("  - {name: h, op: head, inputs: [a], outputs: [b]}\n");
        assert!(c.validate().is_err());
        let c =
            config("  - {name: h, op: head, inputs: [a], outputs: [b], params: {n: 2, m: 3}}\n");
        assert!(c.validate().is_err());
        let c = config("  - {name: h, op: head, inputs: [a], outputs: [b], params: {n: 2}}\n");
        assert!(c.validate().is_ok());
    }

    #[test]
    fn dependencies_and_duplicates() {
        let c = config(
            "  - {name: a, op: head, inputs: [[x, y]], outputs: [[a1, a2]], params: {n: 2}}\n\
             \x20 - {name: b, op: tail, inputs: [[p, q]], outputs: [[b1, b2]], params: {n: 2}}\n\
             \x20 - {name: c, op: concatenate, inputs: [[b1, b2], [a1, a2]], outputs: [[c1, c2]]}\n",
        );
        let plans = c.validate().unwrap();
        assert_eq!(plans[2].depends_on, vec![0, 1]);
        assert!(plans[0].depends_on.is_empty());

        let dup = config(
            "  - {name: a, op: head, inputs: [x], outputs: [o], params: {n: 2}}\n\
             \x20 - {name: a, op: head, inputs: [y], outputs: [p], params: {n: 2}}\n",
        );
        assert!(dup
            .validate()
            .unwrap_err()
            .to_string()
            .contains("duplicate step name"));

        let clash = config(
            "  - {name: a, op: head, inputs: [x], outputs: [o], params: {n: 2}}\n\
             \x20 - {name: b, op: head, inputs: [y], outputs: [o], params: {n: 2}}\n",
        );
        assert!(clash.validate().is_err());
    }

    #[test]
    fn filter_params_are_checked_up_front() {
        let ok = config(
            "  - name: f\n    op: filter\n    inputs: [[a, b]]\n    outputs: [[c, d]]\n    params:\n      languages: [en, fi]\n      filters:\n        - {kind: length, params: {unit: word, min_length: 1, max_length: 10}}\n",
        );
        assert!(ok.validate().is_ok());
        let missing = config(
            "  - name: f\n    op: filter\n    inputs: [[a, b]]\n    outputs: [[c, d]]\n    params:\n      languages: [en, fi]\n      filters:\n        - {kind: length, params: {unit: word}}\n",
        );
        assert!(missing.validate().is_err());
    }

    #[test]
    fn sample_requires_pairs() {
        let c = config("  - {name: s, op: sample, inputs: [[a, b]], outputs: [[c, d]], params: {alpha: 0.2, max_size: 10}}\n");
        assert!(c.validate().is_err());
        let c = config("  - {name: s, op: sample, inputs: [[a, b]], outputs: [[c, d]], params: {alpha: 0.2, max_size: 10, pairs: [en-fi]}}\n");
        assert!(c.validate().is_ok());
    }
}
