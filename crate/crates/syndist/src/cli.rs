//! Command-line pipeline: ingest treebanks into a tag cache, then run each
//! experiment as a subcommand writing deterministic report files plus a
//! `run.json` provenance record.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis;
use crate::config::RunConfig;
use crate::distance::{self, Metric};
use crate::entropy::Estimator;
use crate::error::{Error, Result};
use crate::ingest::{self, Corpus, LanguageRecord};
use crate::markov;
use crate::memory;
use crate::ngram;

#[derive(Debug, Parser)]
#[command(
    name = "syndist",
    version,
    about = "Syntactic distances between languages from POS n-gram statistics"
)]
pub struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override the corresponding config-file keys.
#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Block size for distance matrices.
    #[arg(long, global = true)]
    pub r: Option<usize>,
    #[arg(long, global = true)]
    pub metric: Option<Metric>,
    #[arg(long, global = true)]
    pub estimator: Option<Estimator>,
    #[arg(long, global = true)]
    pub min_tokens: Option<usize>,
    /// Worker threads; 0 = all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse .conllu treebanks into the tag-sequence cache and manifest.
    Ingest,
    /// Predictability-gain curves per language.
    Gain {
        /// Restrict to these language ids (default: all cached).
        #[arg(long, value_delimiter = ',')]
        languages: Vec<String>,
    },
    /// Surrogate test of the memory order.
    Memtest {
        #[arg(long, value_delimiter = ',')]
        languages: Vec<String>,
        /// Memory order under test.
        #[arg(long)]
        m: Option<usize>,
        /// Number of surrogates.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Language identification accuracy from short sentences.
    Identify {
        #[arg(long, value_delimiter = ',')]
        languages: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        orders: Vec<usize>,
    },
    /// Pairwise distance matrix over all cached languages.
    Distances,
    /// Dendrogram, PAM partition, silhouette sweep, and spanning tree.
    Cluster,
    /// Correlation of linguistic and geographic distances.
    Geo,
    /// Distance matrix between whole-sentence samples within one group.
    GroupSamples {
        /// Group name from the language registry.
        #[arg(long)]
        group: String,
    },
}

impl Cli {
    /// Merge config file and command-line overrides.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let o = &self.overrides;
        if o.data_dir.is_some() {
            config.data_dir = o.data_dir.clone();
        }
        if o.registry.is_some() {
            config.registry_path = o.registry.clone();
        }
        if let Some(dir) = &o.cache_dir {
            config.cache_dir = dir.clone();
        }
        if let Some(dir) = &o.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(seed) = o.seed {
            config.seed = seed;
        }
        if let Some(r) = o.r {
            config.r = r;
        }
        if let Some(metric) = o.metric {
            config.metric = metric;
        }
        if let Some(estimator) = o.estimator {
            config.estimator = estimator;
        }
        if let Some(min_tokens) = o.min_tokens {
            config.min_tokens = min_tokens;
        }
        if let Some(threads) = o.threads {
            config.threads = threads;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Language id of a treebank file: the stem up to the first underscore
/// (`de_gsd-ud-train.conllu` -> `de`).
pub fn language_id_of(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let id = stem.split('_').next()?;
    if id.is_empty() {
        None
    } else {
        Some(id.to_string())
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    language_id: String,
    sentences: usize,
    tokens: usize,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Provenance {
    command: String,
    version: String,
    seed: u64,
    config_sha256: String,
    manifest_sha256: Option<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn write_provenance(config: &RunConfig, command: &str) -> Result<()> {
    let manifest_path = config.cache_dir.join("manifest.json");
    let manifest_sha256 = match std::fs::read(&manifest_path) {
        Ok(bytes) => Some(sha256_hex(&bytes)),
        Err(_) => None,
    };
    let record = Provenance {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_sha256: sha256_hex(config.to_toml().as_bytes()),
        manifest_sha256,
    };
    std::fs::create_dir_all(&config.output_dir)?;
    let file = std::fs::File::create(config.output_dir.join("run.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &record)?;
    Ok(())
}

fn load_registry(config: &RunConfig) -> Result<Vec<LanguageRecord>> {
    match &config.registry_path {
        Some(path) => ingest::load_registry(path),
        None => Ok(ingest::bundled_registry()),
    }
}

fn load_corpora(config: &RunConfig, languages: &[String]) -> Result<Vec<Corpus>> {
    let mut corpora = ingest::read_cache_dir(&config.cache_dir)?;
    if config.strip_final_punct {
        for corpus in &mut corpora {
            corpus.strip_final_punct();
        }
    }
    if !languages.is_empty() {
        for wanted in languages {
            if !corpora.iter().any(|c| &c.language_id == wanted) {
                return Err(Error::UnknownLanguage(wanted.clone()));
            }
        }
        corpora.retain(|c| languages.contains(&c.language_id));
    }
    if corpora.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no cached languages in {}",
            config.cache_dir.display()
        )));
    }
    Ok(corpora)
}

fn cmd_ingest(config: &RunConfig) -> Result<()> {
    let data_dir = config
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::Config("ingest requires data_dir".into()))?;
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(data_dir)
        .into_iter()
        .filter_map(|e| e.ok())
        .map(|e| e.into_path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("conllu"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "zero treebanks found under {}",
            data_dir.display()
        )));
    }
    let mut merged: BTreeMap<String, (Corpus, Vec<String>)> = BTreeMap::new();
    for path in &files {
        let Some(id) = language_id_of(path) else {
            continue;
        };
        let file = std::fs::File::open(path)?;
        let (corpus, _stats) = ingest::parse_conllu(file, &path.display().to_string(), &id)?;
        match merged.get_mut(&id) {
            Some((existing, sources)) => {
                existing.extend(corpus);
                sources.push(path.display().to_string());
            }
            None => {
                merged.insert(id, (corpus, vec![path.display().to_string()]));
            }
        }
    }
    std::fs::create_dir_all(&config.cache_dir)?;
    let mut manifest = Vec::new();
    for (id, (corpus, sources)) in &merged {
        if corpus.token_count() < config.min_tokens {
            continue;
        }
        ingest::write_cache(corpus, &config.cache_dir.join(format!("{id}.tags")))?;
        manifest.push(ManifestEntry {
            language_id: id.clone(),
            sentences: corpus.sentences.len(),
            tokens: corpus.token_count(),
            files: sources.clone(),
        });
    }
    if manifest.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no language reached {} tokens",
            config.min_tokens
        )));
    }
    let file = std::fs::File::create(config.cache_dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)?;
    Ok(())
}

fn cmd_gain(config: &RunConfig, languages: &[String]) -> Result<()> {
    let corpora = load_corpora(config, languages)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(
        config.output_dir.join("gain_curves.csv"),
    )?);
    writeln!(w, "language_id,u,gain_bits,estimator")?;
    for corpus in &corpora {
        let curve = memory::gain_curve(corpus, config.estimator)?;
        for (u, gain) in curve.values.iter().enumerate() {
            writeln!(w, "{},{u},{gain},{}", corpus.language_id, config.estimator)?;
        }
    }
    Ok(())
}

fn cmd_memtest(
    config: &RunConfig,
    languages: &[String],
    m: Option<usize>,
    k: Option<usize>,
) -> Result<()> {
    let corpora = load_corpora(config, languages)?;
    let m = m.unwrap_or(config.memtest.m);
    let k = k.unwrap_or(config.memtest.k);
    let mut results = BTreeMap::new();
    for corpus in &corpora {
        let result = memory::memory_test(corpus, m, k, config.seed, config.estimator)?;
        results.insert(corpus.language_id.clone(), result);
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let file = std::fs::File::create(config.output_dir.join("memtest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &results)?;
    Ok(())
}

fn cmd_identify(config: &RunConfig, languages: &[String], orders: &[usize]) -> Result<()> {
    let corpora = load_corpora(config, languages)?;
    let orders = if orders.is_empty() {
        config.identify.orders.clone()
    } else {
        orders.to_vec()
    };
    let reports = markov::run_identification_experiment(
        &corpora,
        &orders,
        config.identify.k,
        config.identify.repetitions,
        (config.identify.min_length, config.identify.max_length),
        config.seed,
    )?;
    std::fs::create_dir_all(&config.output_dir)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(
        config.output_dir.join("identify_accuracy.csv"),
    )?);
    writeln!(
        w,
        "language_id,order,mean_accuracy,std_accuracy,repetitions,k"
    )?;
    for r in &reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.language_id, r.order, r.mean_accuracy, r.std_accuracy, r.repetitions, r.k
        )?;
    }
    Ok(())
}

fn build_matrix(config: &RunConfig) -> Result<distance::DistanceMatrix> {
    let corpora = load_corpora(config, &[])?;
    if corpora.len() < 2 {
        return Err(Error::InsufficientData(
            "distance matrix needs at least two languages".into(),
        ));
    }
    let dists = corpora
        .iter()
        .map(|c| {
            Ok((
                c.language_id.clone(),
                ngram::estimate_distribution(&ngram::count_blocks(c, config.r))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    distance::build_distance_matrix(&dists, config.metric)
}

fn cmd_distances(config: &RunConfig) -> Result<()> {
    let matrix = build_matrix(config)?;
    std::fs::create_dir_all(&config.output_dir)?;
    distance::write_matrix_csv(&matrix, &config.output_dir.join("distances.csv"))?;
    distance::write_matrix_json(&matrix, &config.output_dir.join("distances.json"))?;
    Ok(())
}

fn cmd_cluster(config: &RunConfig) -> Result<()> {
    let matrix = build_matrix(config)?;
    let registry = load_registry(config)?;
    std::fs::create_dir_all(&config.output_dir)?;

    let dendrogram = analysis::complete_linkage(&matrix);
    std::fs::write(
        config.output_dir.join("dendrogram.newick"),
        dendrogram.to_newick() + "\n",
    )?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(
        config.output_dir.join("leaf_order.csv"),
    )?);
    writeln!(w, "position,language_id")?;
    for (pos, &leaf) in dendrogram.leaf_order.iter().enumerate() {
        writeln!(w, "{pos},{}", matrix.labels[leaf])?;
    }

    let k_max = config.cluster.k_max.min(matrix.len() - 1);
    let sweep = analysis::silhouette_sweep(&matrix, config.cluster.k_min, k_max, config.seed)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(
        config.output_dir.join("silhouette.csv"),
    )?);
    writeln!(w, "k,mean_silhouette")?;
    for (k, s) in &sweep.scores {
        writeln!(w, "{k},{s}")?;
    }

    let assignment = analysis::pam(&matrix, sweep.best_k, config.seed)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(
        config.output_dir.join("pam_assignment.csv"),
    )?);
    writeln!(w, "language_id,cluster,is_medoid")?;
    for (i, label) in matrix.labels.iter().enumerate() {
        writeln!(
            w,
            "{label},{},{}",
            assignment.assignment[i],
            assignment.medoids.contains(&i)
        )?;
    }

    let tree = analysis::minimum_spanning_tree(&matrix);
    let mut attrs = BTreeMap::new();
    for (i, label) in matrix.labels.iter().enumerate() {
        let mut pairs = vec![("cluster".to_string(), assignment.assignment[i].to_string())];
        if let Some(rec) = registry.iter().find(|r| &r.language_id == label) {
            pairs.push(("family".to_string(), rec.family.clone()));
            pairs.push(("group".to_string(), rec.group.clone()));
            pairs.push(("morph_type".to_string(), rec.morph_type.to_string()));
        }
        attrs.insert(label.clone(), pairs);
    }
    analysis::write_mst_dot(&tree, &attrs, &config.output_dir.join("mst.dot"))?;
    analysis::write_mst_csv(&tree, &config.output_dir.join("mst_edges.csv"))?;
    Ok(())
}

fn cmd_geo(config: &RunConfig) -> Result<()> {
    let matrix = build_matrix(config)?;
    let registry = load_registry(config)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let correlation = analysis::correlate(
        &matrix,
        &registry,
        &config.geo.exclude,
        config.geo.permutations,
        config.geo.log_geo,
        config.seed,
    )?;
    analysis::write_scatter_csv(&correlation, &config.output_dir.join("geo_pairs.csv"))?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(
        config.output_dir.join("geo_per_language.csv"),
    )?);
    writeln!(w, "language_id,pearson_r")?;
    for label in &matrix.labels {
        if config.geo.exclude.contains(label) {
            continue;
        }
        let per =
            analysis::per_language_correlation(&matrix, &registry, label, &config.geo.exclude)?;
        writeln!(w, "{label},{}", per.pearson_r)?;
    }

    #[derive(Serialize)]
    struct GeoSummary {
        pearson_r_log10_km: f64,
        distance_correlation: f64,
        p_value: f64,
        permutations: usize,
        pairs: usize,
        excluded: Vec<String>,
    }
    let summary = GeoSummary {
        pearson_r_log10_km: correlation.pearson_r,
        distance_correlation: correlation.distance_correlation,
        p_value: correlation.p_value,
        permutations: correlation.permutations,
        pairs: correlation.pairs.len(),
        excluded: config.geo.exclude.clone(),
    };
    let file = std::fs::File::create(config.output_dir.join("geo_summary.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &summary)?;
    Ok(())
}

fn cmd_group_samples(config: &RunConfig, group: &str) -> Result<()> {
    let registry = load_registry(config)?;
    let member_ids: Vec<String> = registry
        .iter()
        .filter(|r| r.group == group)
        .map(|r| r.language_id.clone())
        .collect();
    if member_ids.is_empty() {
        return Err(Error::Config(format!("unknown group `{group}`")));
    }
    let corpora: Vec<Corpus> = load_corpora(config, &[])?
        .into_iter()
        .filter(|c| member_ids.contains(&c.language_id))
        .collect();
    if corpora.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "group `{group}` has fewer than two cached languages"
        )));
    }
    let matrix = distance::sample_distance_matrix(
        &corpora,
        config.samples.target_tokens,
        config.samples.max_samples,
        config.r,
        config.metric,
        config.seed,
    )?;
    std::fs::create_dir_all(&config.output_dir)?;
    distance::write_matrix_csv(
        &matrix,
        &config.output_dir.join(format!("samples_{group}.csv")),
    )?;
    Ok(())
}

/// Execute one parsed invocation. The caller maps errors to exit codes.
pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.resolve_config()?;
    if config.threads > 0 {
        // Ignore failure: the global pool may already exist (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
    let command_name = match &cli.command {
        Command::Ingest => "ingest",
        Command::Gain { .. } => "gain",
        Command::Memtest { .. } => "memtest",
        Command::Identify { .. } => "identify",
        Command::Distances => "distances",
        Command::Cluster => "cluster",
        Command::Geo => "geo",
        Command::GroupSamples { .. } => "group-samples",
    };
    match &cli.command {
        Command::Ingest => cmd_ingest(&config)?,
        Command::Gain { languages } => cmd_gain(&config, languages)?,
        Command::Memtest { languages, m, k } => cmd_memtest(&config, languages, *m, *k)?,
        Command::Identify { languages, orders } => cmd_identify(&config, languages, orders)?,
        Command::Distances => cmd_distances(&config)?,
        Command::Cluster => cmd_cluster(&config)?,
        Command::Geo => cmd_geo(&config)?,
        Command::GroupSamples { group } => cmd_group_samples(&config, group)?,
    }
    write_provenance(&config, command_name)?;
    Ok(())
}

impl clap::ValueEnum for Metric {
    fn value_variants<'a>() -> &'a [Self] {
        &[Metric::JensenShannon, Metric::Hellinger]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(match self {
            Metric::JensenShannon => clap::builder::PossibleValue::new("jensen_shannon"),
            Metric::Hellinger => clap::builder::PossibleValue::new("hellinger"),
        })
    }
}

impl clap::ValueEnum for Estimator {
    fn value_variants<'a>() -> &'a [Self] {
        &[Estimator::Plugin, Estimator::Nsb]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(match self {
            Estimator::Plugin => clap::builder::PossibleValue::new("plugin"),
            Estimator::Nsb => clap::builder::PossibleValue::new("nsb"),
        })
    }
}
