use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use lexsimp_core::corpus::{load_parallel_corpus, operation_distribution, split_corpus, OperationStats};
use lexsimp_core::cwi::{analyze_sentence, identify_complex, TargetQueue};
use lexsimp_core::evaluation::{
    aggregate_manual, changed_words_by_variant, evaluate_classification, evaluate_generative, f1_distribution,
    parse_manual_labels, render_changed_words_csv, render_histogram_csv, render_report_csv, render_report_json,
    ClassificationInstance, EvaluationError, GenerativeInstance, ManualScheme, ReportRow,
};
use lexsimp_core::providers::{
    EncoderClient, MlmClient, MorphAnalysis, MorphologyClient, MorphologyProvider, ProviderError,
};
use lexsimp_core::selection::{
    simplify_sentence, PipelineContext, SelectionContext, VariantOutput, VariantStatus,
};
use lexsimp_core::{tokenize, CefrLevel, CefrLexicon, EditKind, EmbeddingStore, SentencePair, SimplificationResult, Token, Variant};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{pick_path, Global, RunConfig};
use crate::output::{in_dir, jsonl, pretty_json, write_atomic};
use crate::{CorpusArgs, CwiArgs, EvaluateArgs, Failure, ManualArgs, SimplifyArgs, SplitArgs, StatsArgs};

const DEFAULT_K: usize = 10;
const DEFAULT_SPLIT: f64 = 0.8;

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("starting worker pool")
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_corpus(args: &CorpusArgs, config: &RunConfig, g: &Global) -> anyhow::Result<Vec<SentencePair>> {
    let pairs = pick_path(&args.pairs, config, &config.pairs, "pair file")?;
    let alignments = pick_path(&args.alignments, config, &config.alignments, "alignment file")?;
    let corpus = load_parallel_corpus(&pairs, &alignments)?;
    if corpus.is_empty() {
        bail!("empty corpus: {} has no pairs", pairs.display());
    }
    let normalize = args.normalize || config.normalize;
    let labeled = pool(g.jobs)?.install(|| corpus.into_par_iter().map(|p| p.labeled(normalize)).collect());
    Ok(labeled)
}

fn write_stats(stats: &OperationStats, g: &Global) -> anyhow::Result<()> {
    write_atomic(&in_dir(&g.output_dir, "stats.csv"), stats.to_csv().as_bytes())?;
    write_atomic(&in_dir(&g.output_dir, "stats.json"), &pretty_json(&stats.to_json())?)?;
    println!("operation\tcount\tpercent");
    for kind in EditKind::ALL {
        let pct = stats.percentage(kind).map(|p| format!("{:.2}%", p * 100.0)).unwrap_or_default();
        println!("{kind}\t{}\t{pct}", stats.count(kind));
    }
    println!("total\t{}", stats.total());
    Ok(())
}

pub fn annotate(args: &CorpusArgs, config: &RunConfig, g: &Global) -> Result<(), Failure> {
    let corpus = load_corpus(args, config, g)?;
    write_atomic(&in_dir(&g.output_dir, "edit_ops.jsonl"), &jsonl(&corpus)?)?;
    write_stats(&operation_distribution(&corpus), g)?;
    Ok(())
}

pub fn stats(args: &StatsArgs, config: &RunConfig, g: &Global) -> Result<(), Failure> {
    let corpus = match &args.ops {
        Some(path) => {
            let pairs = read_text(path)?
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
                .collect::<anyhow::Result<Vec<SentencePair>>>()?;
            if pairs.is_empty() {
                return Err(anyhow!("empty corpus: {} has no pairs", path.display()).into());
            }
            pairs
        }
        None => load_corpus(&args.corpus, config, g)?,
    };
    write_stats(&operation_distribution(&corpus), g)?;
    Ok(())
}

/// Input sentences as `(id, text)`; ids default to the 1-based line number.
fn read_sentences(path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let sentences: Vec<(String, String)> = read_text(path)?
        .trim_start_matches('\u{FEFF}')
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.split_once('\t') {
            Some((id, text)) => (id.trim().to_string(), text.to_string()),
            None => ((i + 1).to_string(), l.to_string()),
        })
        .collect();
    if sentences.is_empty() {
        bail!("empty input: {} has no sentences", path.display());
    }
    Ok(sentences)
}

/// Stand-in analyzer when no morphology provider is configured: levels then
/// come from surface forms alone.
struct NoMorphology;

impl MorphologyProvider for NoMorphology {
    fn id(&self) -> &str {
        "none"
    }

    fn analyze(&self, tokens: &[String]) -> Result<Vec<MorphAnalysis>, ProviderError> {
        Ok(vec![MorphAnalysis::unknown(); tokens.len()])
    }
}

struct CwiSetup {
    sentences: Vec<(String, String)>,
    lexicon: CefrLexicon,
    threshold: CefrLevel,
}

fn cwi_setup(args: &CwiArgs, config: &RunConfig) -> anyhow::Result<CwiSetup> {
    let input = pick_path(&args.input, config, &config.input, "input file")?;
    let lexicon_path = pick_path(&args.lexicon, config, &config.lexicon, "CEFR lexicon")?;
    let threshold = args
        .cefr_threshold
        .or(config.level(&config.cefr_threshold, "cefr_threshold")?)
        .unwrap_or(CefrLevel::C1);
    let default = args
        .cefr_default
        .or(config.level(&config.cefr_default, "cefr_default")?)
        .unwrap_or(CefrLevel::C2);
    if !threshold.is_known() || !default.is_known() {
        bail!("CEFR threshold and default must be named levels");
    }
    let lexicon = CefrLexicon::load(&lexicon_path, default)?.with_normalization(args.normalize || config.normalize);
    Ok(CwiSetup {
        sentences: read_sentences(&input)?,
        lexicon,
        threshold,
    })
}

#[derive(Serialize)]
struct IdentifiedSentence {
    sentence_id: String,
    tokens: Vec<Token>,
    queue: TargetQueue,
}

pub fn identify(args: &CwiArgs, config: &RunConfig, g: &Global) -> Result<(), Failure> {
    let setup = cwi_setup(args, config)?;
    let morph: Box<dyn MorphologyProvider> = match config.morphology()? {
        Some(desc) => Box::new(MorphologyClient::open(desc)?),
        None => {
            log::warn!("no morphology provider configured; lemma lookups disabled");
            Box::new(NoMorphology)
        }
    };
    let rows: Vec<Result<IdentifiedSentence, ProviderError>> = pool(g.jobs)?.install(|| {
        setup
            .sentences
            .par_iter()
            .map(|(id, text)| {
                let tokens = analyze_sentence(&tokenize(text, false), morph.as_ref(), &setup.lexicon)?;
                Ok(IdentifiedSentence {
                    sentence_id: id.clone(),
                    queue: identify_complex(&tokens, setup.threshold),
                    tokens,
                })
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_atomic(&in_dir(&g.output_dir, "targets.jsonl"), &jsonl(&rows)?)?;
    let targets: usize = rows.iter().map(|r| r.queue.len()).sum();
    println!("{} sentences, {targets} targets", rows.len());
    Ok(())
}

fn parse_variants(spec: &str) -> anyhow::Result<Vec<Variant>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(Variant::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<Variant>().map_err(|e| anyhow!(e)))
        .collect()
}

/// A sentence the analyzer could not process: every variant keeps the input
/// and is marked partial.
fn unprocessed(id: &str, words: Vec<String>, variants: &[Variant], error: &ProviderError) -> SimplificationResult {
    let out = variants
        .iter()
        .map(|v| {
            (
                *v,
                VariantOutput {
                    tokens: words.clone(),
                    replacements: Vec::new(),
                    traces: Vec::new(),
                    readability: None,
                    status: VariantStatus::Partial,
                    error: Some(error.to_string()),
                },
            )
        })
        .collect();
    SimplificationResult {
        sentence_id: id.to_string(),
        input: words,
        variants: out,
    }
}

pub fn simplify(args: &SimplifyArgs, config: &RunConfig, g: &Global) -> Result<(), Failure> {
    let setup = cwi_setup(&args.cwi, config)?;
    let variants = parse_variants(args.variant.as_deref().or(config.variant.as_deref()).unwrap_or("all"))?;
    let k = args.k.or(config.k).unwrap_or(DEFAULT_K);
    if k == 0 {
        return Err(anyhow!("--k must be at least 1").into());
    }
    let vectors = pick_path(&args.vectors, config, &config.vectors, "vector file")?;
    let store = EmbeddingStore::load(&vectors).with_context(|| format!("loading {}", vectors.display()))?;
    let morph_desc = config.morphology()?.ok_or_else(|| anyhow!("simplify needs a morphology provider"))?;
    let mlm_desc = config.mlm()?.ok_or_else(|| anyhow!("simplify needs a masked-LM provider"))?;
    let morph = MorphologyClient::open(morph_desc)?;
    let mlm = MlmClient::open(mlm_desc)?;
    let ctx = PipelineContext {
        selection: SelectionContext {
            morph: &morph,
            lexicon: &setup.lexicon,
            store: &store,
            require_gloss: args.require_gloss || config.require_gloss,
        },
        mlm: &mlm,
        k,
    };

    let mut results: Vec<SimplificationResult> = pool(g.jobs)?.install(|| {
        setup
            .sentences
            .par_iter()
            .map(|(id, text)| {
                let words = tokenize(text, false);
                match analyze_sentence(&words, &morph, &setup.lexicon) {
                    Ok(tokens) => {
                        let queue = identify_complex(&tokens, setup.threshold);
                        simplify_sentence(id, &tokens, &queue, &ctx, &variants)
                    }
                    Err(e) => {
                        log::warn!("sentence {id}: {e}");
                        unprocessed(id, words, &variants, &e)
                    }
                }
            })
            .collect()
    });
    if !args.trace {
        for variant in results.iter_mut().flat_map(|r| r.variants.values_mut()) {
            variant.traces.clear();
        }
    }

    let out = in_dir(&g.output_dir, "simplified.jsonl");
    write_atomic(&out, &jsonl(&results)?)?;
    let changed = changed_words_by_variant(&results).context("counting changed words")?;
    write_atomic(&in_dir(&g.output_dir, "changed_words.csv"), render_changed_words_csv(&changed).as_bytes())?;

    let partial = results.iter().filter(|r| r.is_partial()).count();
    println!("{} sentences, {partial} partial", results.len());
    if partial > 0 {
        return Err(Failure::Provider(anyhow!(
            "{partial} of {} sentences are partial after provider failures; results kept in {}",
            results.len(),
            out.display()
        )));
    }
    Ok(())
}

fn eval_failure(e: EvaluationError) -> Failure {
    match e {
        EvaluationError::Provider { sentence_id, source } => {
            let inner = Failure::from(source);
            let wrap = |err: anyhow::Error| err.context(format!("sentence {sentence_id}"));
            match inner {
                Failure::Input(err) => Failure::Input(wrap(err)),
                Failure::Provider(err) => Failure::Provider(wrap(err)),
            }
        }
        other => Failure::Input(other.into()),
    }
}

fn read_results(path: &Path) -> anyhow::Result<Vec<SimplificationResult>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn classification_instances(results: &[SimplificationResult], targets: &Path) -> anyhow::Result<Vec<ClassificationInstance>> {
    let gold: Vec<String> = read_text(targets)?
        .trim_start_matches('\u{FEFF}')
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    if gold.len() != results.len() {
        bail!(
            "{} has {} sentences but the system output has {}",
            targets.display(),
            gold.len(),
            results.len()
        );
    }
    Ok(results
        .iter()
        .zip(&gold)
        .map(|(r, t)| ClassificationInstance {
            sentence_id: r.sentence_id.clone(),
            target: tokenize(t, false),
            // an interrupted variant does not count as output
            outputs: r
                .variants
                .iter()
                .filter(|(_, o)| o.status == VariantStatus::Complete)
                .map(|(v, o)| (*v, o.tokens.clone()))
                .collect(),
        })
        .collect())
}

fn generative_instances(path: &Path) -> anyhow::Result<Vec<GenerativeInstance>> {
    read_text(path)?
        .trim_start_matches('\u{FEFF}')
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split('\t').collect();
            let (id, original, generated, target) = match cells.as_slice() {
                [o, gen, t] => ((i + 1).to_string(), *o, *gen, *t),
                [id, o, gen, t] => (id.trim().to_string(), *o, *gen, *t),
                _ => bail!("{} line {}: expected 3 or 4 tab-separated fields", path.display(), i + 1),
            };
            Ok(GenerativeInstance {
                sentence_id: id,
                original: tokenize(original, false),
                generated: tokenize(generated, false),
                target: tokenize(target, false),
            })
        })
        .collect()
}

fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

pub fn evaluate(args: &EvaluateArgs, config: &RunConfig, g: &Global) -> Result<(), Failure> {
    if args.idf {
        return Err(anyhow!("IDF-weighted matching is not implemented").into());
    }
    let encoders = config.encoders()?;
    if encoders.is_empty() {
        return Err(anyhow!("no encoders configured").into());
    }
    let simplified = args.simplified.clone().or_else(|| config.path(&config.simplified));
    let generative = args.generative.clone().or_else(|| config.path(&config.generative));
    if simplified.is_none() && generative.is_none() {
        return Err(anyhow!("nothing to evaluate: give --simplified and/or --generative").into());
    }

    let results = simplified.as_deref().map(read_results).transpose()?;
    let classification = match &results {
        Some(results) => {
            let targets = pick_path(&args.targets, config, &config.targets, "gold target file")?;
            Some(classification_instances(results, &targets)?)
        }
        None => None,
    };
    let generative = generative.as_deref().map(generative_instances).transpose()?;

    let mut rows: Vec<ReportRow> = Vec::new();
    for entry in &encoders {
        let encoder = EncoderClient::open(entry.descriptor.clone())?;
        if let Some(instances) = &classification {
            rows.extend(evaluate_classification(instances, &encoder, entry.baseline).map_err(eval_failure)?);
        }
        if let Some(instances) = &generative {
            rows.extend(evaluate_generative(instances, &encoder, entry.baseline).map_err(eval_failure)?);
        }
    }

    let csv = render_report_csv(&rows, args.decimals);
    write_atomic(&in_dir(&g.output_dir, "report.csv"), csv.as_bytes())?;
    write_atomic(&in_dir(&g.output_dir, "report.json"), &pretty_json(&render_report_json(&rows))?)?;
    for row in &rows {
        if let Some(dist) = f1_distribution(&row.per_sentence) {
            let name = format!("{}_{}.csv", slug(&row.encoder), slug(row.comparison.label()));
            write_atomic(&g.output_dir.join("histograms").join(name), render_histogram_csv(&dist).as_bytes())?;
        }
    }
    if let Some(results) = &results {
        let changed = changed_words_by_variant(results).context("counting changed words")?;
        write_atomic(&in_dir(&g.output_dir, "changed_words.csv"), render_changed_words_csv(&changed).as_bytes())?;
    }
    print!("{csv}");
    Ok(())
}

pub fn manual_report(args: &ManualArgs, config: &RunConfig, g: &Global) -> Result<(), Failure> {
    let path = pick_path(&args.labels, config, &config.labels, "label file")?;
    let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let labels = parse_manual_labels(file)
        .map_err(|e| anyhow!(e).context(format!("reading labels from {}", path.display())))?;
    let schemes: Vec<ManualScheme> = match (args.scheme, labels.first()) {
        (Some(s), _) => vec![s],
        (None, Some(first)) => vec![first.scheme],
        (None, None) => ManualScheme::ALL.to_vec(),
    };
    let distributions = schemes
        .iter()
        .map(|s| aggregate_manual(*s, &labels))
        .collect::<Result<Vec<_>, _>>()
        .map_err(anyhow::Error::from)?;

    let mut csv = String::from("scheme,value,count,percentage\n");
    for d in &distributions {
        csv.extend(d.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    write_atomic(&in_dir(&g.output_dir, "manual_report.csv"), csv.as_bytes())?;
    write_atomic(&in_dir(&g.output_dir, "manual_report.json"), &pretty_json(&distributions)?)?;
    print!("{csv}");
    Ok(())
}

/// `pairs.tsv` becomes `pairs.train.tsv` / `pairs.test.tsv`.
fn part_name(path: &Path, part: &str) -> anyhow::Result<String> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("cannot name split output for {}", path.display()))?;
    Ok(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.{part}.{ext}"),
        None => format!("{stem}.{part}"),
    })
}

pub fn split(args: &SplitArgs, config: &RunConfig, g: &Global) -> Result<(), Failure> {
    let seed = g.seed.ok_or_else(|| anyhow!("split needs a seed (--seed or config `seed`)"))?;
    let fraction = args.fraction.or(config.split_fraction).unwrap_or(DEFAULT_SPLIT);
    let files: Vec<PathBuf> = if args.files.is_empty() {
        [config.path(&config.pairs), config.path(&config.alignments)]
            .into_iter()
            .flatten()
            .collect()
    } else {
        args.files.clone()
    };
    if files.is_empty() {
        return Err(anyhow!("no files to split").into());
    }

    let contents = files.iter().map(|f| read_text(f)).collect::<anyhow::Result<Vec<_>>>()?;
    let lines: Vec<Vec<&str>> = contents.iter().map(|c| c.lines().collect()).collect();
    let n = lines[0].len();
    if n == 0 {
        return Err(anyhow!("empty corpus: {} has no lines", files[0].display()).into());
    }
    if let Some((f, l)) = files.iter().zip(&lines).find(|(_, l)| l.len() != n) {
        return Err(anyhow!("{} has {} lines, expected {n}", f.display(), l.len()).into());
    }
    let indices: Vec<usize> = (0..n).collect();
    let (train, test) = split_corpus(&indices, fraction, seed).map_err(anyhow::Error::from)?;

    let mut counts = BTreeMap::new();
    for (file, lines) in files.iter().zip(&lines) {
        for (part, picked) in [("train", &train), ("test", &test)] {
            let mut text = String::new();
            for &i in picked.iter() {
                text.push_str(lines[i]);
                text.push('\n');
            }
            write_atomic(&in_dir(&g.output_dir, &part_name(file, part)?), text.as_bytes())?;
            counts.insert(part, picked.len());
        }
    }
    println!("train\t{}\ntest\t{}", counts["train"], counts["test"]);
    Ok(())
}
