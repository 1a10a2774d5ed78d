//! End-to-end analysis: load and score responses, then run CTT,
//! factorability, CFA, IRT and shortening per configuration, and write a
//! JSON report with CSV sidecars.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cfa::{
    factor_correlations, fit_indices, fit_model, modification_indices, CfaFit, CfaInput, CfaModel,
    CfaOptions, CorrelationEstimate, FitIndices, LoadingEstimate, ModificationIndex, RobustStatistic,
};
use crate::ctt::{
    block_alphas, cronbach_alpha, group_compare, item_analysis, score_summary, CttItemStats,
    GroupComparison, Grouping, PointBiserial, ScoreSummary,
};
use crate::dataset::{
    cctt_answer_key, cctt_factor_spec, parse_answer_key, parse_factor_spec, parse_responses, FactorSpec,
    Grade, ItemId, ParseMode, ScoredMatrix, SubsetName,
};
use crate::error::{Error, Result};
use crate::irt::{emit_curves, fit_irt, lrt_compare, AbilityGrid, CurvePoint, IrtFit, IrtModel, IrtOptions, Lrt, TifPoint};
use crate::latentcorr::{
    bartlett, bootstrap_covariance, kmo, phi_matrix, smooth_psd, tetrachoric_matrix, Bartlett, Kmo,
    TetraMatrix, TetraOptions,
};
use crate::par::{map_range, Execution};
use crate::shorten::{replay_shortening, ShorteningPlan, StageResult};
use crate::stats::fmt6;

/// Which analysis stages to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Stages {
    pub ctt: bool,
    pub corr: bool,
    pub cfa: bool,
    pub irt: bool,
    pub shorten: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { ctt: true, corr: true, cfa: true, irt: true, shorten: true };
    pub const NONE: Stages = Stages { ctt: false, corr: false, cfa: false, irt: false, shorten: false };
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    /// Answer key file; the built-in key when absent.
    pub key: Option<PathBuf>,
    /// Factor structure file; the built-in structure when absent.
    pub factors: Option<PathBuf>,
    /// Blocks for block-wise alphas; the factor structure when absent.
    pub blocks: Option<FactorSpec>,
    pub mode: ParseMode,
    pub subsets: Vec<SubsetName>,
    pub bootstrap: usize,
    pub quadrature: usize,
    pub seed: u64,
    /// `builtin:<name>` or a plan file.
    pub plan: Option<String>,
    pub point_biserial: PointBiserial,
    pub stages: Stages,
    pub execution: Execution,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            key: None,
            factors: None,
            blocks: None,
            mode: ParseMode::Auto,
            subsets: vec![SubsetName::All, SubsetName::G3, SubsetName::G4],
            bootstrap: 200,
            quadrature: 49,
            seed: 0,
            plan: Some("builtin:cctt".into()),
            point_biserial: PointBiserial::Uncorrected,
            stages: Stages::ALL,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    /// SHA-256 of each input file, keyed by role.
    pub input_digests: BTreeMap<String, String>,
    pub seed: u64,
    pub bootstrap: usize,
    pub quadrature: usize,
    pub subsets: Vec<&'static str>,
    pub point_biserial: PointBiserial,
    pub stages: Stages,
    pub respondents: usize,
    pub items: Vec<ItemId>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Factorability {
    pub kmo_tetrachoric: Kmo,
    pub bartlett_tetrachoric: Bartlett,
    pub kmo_pearson: Option<Kmo>,
    pub bartlett_pearson: Option<Bartlett>,
    pub smoothing_applied: bool,
    pub min_eigenvalue: f64,
    pub capped_pairs: Vec<(ItemId, ItemId)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadingRow {
    pub factor: String,
    pub item: ItemId,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub standardized: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorCorrelationRow {
    pub a: String,
    pub b: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CfaReport {
    pub fit_indices: FitIndices,
    pub robust: Option<RobustStatistic>,
    pub discrepancy: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub loadings: Vec<LoadingRow>,
    pub factor_correlations: Vec<FactorCorrelationRow>,
    pub heywood: Vec<ItemId>,
    /// Largest modification indices (at most 20).
    pub modification_indices: Vec<ModificationIndex>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetReport {
    pub subset: &'static str,
    pub n: usize,
    pub score_summary: Option<ScoreSummary>,
    pub alpha: Option<f64>,
    pub block_alphas: Vec<(String, Option<f64>)>,
    pub items: Vec<CttItemStats>,
    pub grade_comparison: Option<GroupComparison>,
    pub gender_comparison: Option<GroupComparison>,
    pub factorability: Option<Factorability>,
    pub cfa: Option<CfaReport>,
    #[serde(skip)]
    pub tetrachoric: Option<TetraMatrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IrtReport {
    pub one_pl: IrtFit,
    pub two_pl: IrtFit,
    pub lrt: Lrt,
    #[serde(skip)]
    pub curves: Vec<CurvePoint>,
    #[serde(skip)]
    pub tif: Vec<TifPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShorteningReport {
    pub plan: ShorteningPlan,
    pub stages: Vec<StageResult>,
    pub variants: Vec<(String, Vec<ItemId>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub metadata: Metadata,
    pub subsets: Vec<SubsetReport>,
    pub irt: Option<IrtReport>,
    pub shortening: Option<ShorteningReport>,
    pub warnings: Vec<String>,
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn digest(path: &Path) -> Result<(Vec<u8>, String)> {
    let bytes = fs::read(path)?;
    let hex = hex::encode(Sha256::digest(&bytes));
    Ok((bytes, hex))
}

/// Reads, scores and attaches the factor structure. Returns the dataset,
/// the structure and input digests.
pub fn load_dataset(config: &PipelineConfig) -> Result<(ScoredMatrix, FactorSpec, BTreeMap<String, String>)> {
    let mut digests = BTreeMap::new();
    let (bytes, h) = digest(&config.input)?;
    digests.insert("responses".to_string(), h);
    let key = match &config.key {
        Some(p) => {
            let (b, h) = digest(p)?;
            digests.insert("key".to_string(), h);
            parse_answer_key(b.as_slice())?
        }
        None => cctt_answer_key(),
    };
    let spec = match &config.factors {
        Some(p) => {
            let (b, h) = digest(p)?;
            digests.insert("factors".to_string(), h);
            parse_factor_spec(b.as_slice())?
        }
        None => cctt_factor_spec(),
    };
    let ds = parse_responses(bytes.as_slice(), config.mode)?.into_scored(&key, &spec)?;
    Ok((ds, spec, digests))
}

/// Runs the configured stages. Nothing is written to disk.
pub fn run_pipeline(config: &PipelineConfig) -> Result<AnalysisReport> {
    let (ds, spec, digests) = load_dataset(config).map_err(|e| e.in_stage("dataset"))?;
    analyse(&ds, &spec, digests, config)
}

/// Runs the configured stages on an already scored dataset.
pub fn analyse(
    ds: &ScoredMatrix,
    spec: &FactorSpec,
    input_digests: BTreeMap<String, String>,
    config: &PipelineConfig,
) -> Result<AnalysisReport> {
    let mut warnings = Vec::new();
    let mixed = ds.demographics().iter().filter(|d| d.grade == Grade::Mixed).count();
    if mixed > 0 && config.subsets.iter().any(|s| *s != SubsetName::All) {
        warnings.push(format!("{mixed} respondents from mixed-grade classes enter only the full sample"));
    }
    let blocks = config.blocks.clone().unwrap_or_else(|| spec.clone());

    let subsets = map_range(config.execution, config.subsets.len(), |k| {
        let name = config.subsets[k];
        subset_report(ds, spec, &blocks, name, config)
            .map_err(|e| e.in_stage(format!("subset {}", name.label())))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    for s in &subsets {
        if let Some(f) = &s.factorability {
            if f.smoothing_applied {
                warnings.push(format!(
                    "{}: tetrachoric matrix not positive definite (min eigenvalue {:.3e}); smoothed for KMO/Bartlett",
                    s.subset, f.min_eigenvalue
                ));
            }
            if !f.capped_pairs.is_empty() {
                warnings.push(format!("{}: {} tetrachoric estimates capped at |0.999|", s.subset, f.capped_pairs.len()));
            }
        }
        if let Some(c) = &s.cfa {
            if !c.heywood.is_empty() {
                warnings.push(format!("{}: Heywood case for items {:?}", s.subset, c.heywood));
            }
        }
    }

    let irt = if config.stages.irt {
        let r = irt_report(ds, config).map_err(|e| e.in_stage("irt"))?;
        for f in [&r.one_pl, &r.two_pl] {
            if !f.monotone {
                warnings.push(format!("{} EM log-likelihood decreased in some iteration", f.model.label()));
            }
        }
        Some(r)
    } else {
        None
    };

    let shortening = match (&config.plan, config.stages.shorten) {
        (Some(source), true) => {
            let r = shortening_report(ds, spec, source, config).map_err(|e| e.in_stage("shorten"))?;
            for st in &r.stages {
                if !st.heywood.is_empty() {
                    warnings.push(format!("shorten step {}: Heywood case for items {:?}", st.step, st.heywood));
                }
            }
            Some(r)
        }
        _ => None,
    };

    Ok(AnalysisReport {
        metadata: Metadata {
            tool: "psychfit",
            version: env!("CARGO_PKG_VERSION"),
            input_digests,
            seed: config.seed,
            bootstrap: config.bootstrap,
            quadrature: config.quadrature,
            subsets: config.subsets.iter().map(|s| s.label()).collect(),
            point_biserial: config.point_biserial,
            stages: config.stages,
            respondents: ds.n(),
            items: ds.item_ids().to_vec(),
        },
        subsets,
        irt,
        shortening,
        warnings,
    })
}

fn subset_report(
    ds: &ScoredMatrix,
    spec: &FactorSpec,
    blocks: &FactorSpec,
    name: SubsetName,
    config: &PipelineConfig,
) -> Result<SubsetReport> {
    let sub = name.apply(ds)?;
    let mut rep = SubsetReport {
        subset: name.label(),
        n: sub.n(),
        score_summary: None,
        alpha: None,
        block_alphas: Vec::new(),
        items: Vec::new(),
        grade_comparison: None,
        gender_comparison: None,
        factorability: None,
        cfa: None,
        tetrachoric: None,
    };
    if config.stages.ctt {
        rep.score_summary = Some(score_summary(&sub)?);
        rep.alpha = cronbach_alpha(&sub, sub.item_ids()).ok();
        rep.block_alphas = block_alphas(&sub, blocks);
        rep.items = item_analysis(&sub)?;
        if name == SubsetName::All {
            rep.grade_comparison = group_compare(&sub, Grouping::Grade).ok();
        }
        rep.gender_comparison = group_compare(&sub, Grouping::Gender).ok();
    }
    if config.stages.corr || config.stages.cfa {
        let tetra = tetrachoric_matrix(&sub, &TetraOptions { execution: config.execution })?;
        if config.stages.corr {
            let smoothed = smooth_psd(&tetra.rho);
            let pearson = phi_matrix(&sub);
            rep.factorability = Some(Factorability {
                kmo_tetrachoric: kmo(&smoothed.matrix)?,
                bartlett_tetrachoric: bartlett(&smoothed.matrix, sub.n())?,
                kmo_pearson: kmo(&pearson).ok(),
                bartlett_pearson: bartlett(&pearson, sub.n()).ok(),
                smoothing_applied: smoothed.applied,
                min_eigenvalue: smoothed.min_eigenvalue_before,
                capped_pairs: tetra.capped_pairs.clone(),
            });
        }
        if config.stages.cfa {
            let model = CfaModel::from_spec(spec)?;
            let t = tetra.select(&model.items)?;
            let boot = cfa_bootstrap(&sub, &model.items, config)?;
            let input = CfaInput::from_tetra(&t, boot.as_ref())?;
            let fit = fit_model(&model, &input, &cfa_options(config))?;
            rep.cfa = Some(cfa_report(&fit));
        }
        rep.tetrachoric = Some(tetra);
    }
    Ok(rep)
}

fn cfa_options(config: &PipelineConfig) -> CfaOptions {
    CfaOptions { bootstrap: config.bootstrap, seed: config.seed, execution: config.execution, ..CfaOptions::default() }
}

fn cfa_bootstrap(
    ds: &ScoredMatrix,
    items: &[ItemId],
    config: &PipelineConfig,
) -> Result<Option<crate::latentcorr::BootstrapCovariance>> {
    if config.bootstrap == 0 {
        return Ok(None);
    }
    let sub = ds.select_items(items)?;
    Ok(Some(bootstrap_covariance(&sub, config.bootstrap, config.seed, config.execution)?))
}

pub fn cfa_report(fit: &CfaFit) -> CfaReport {
    let loadings = fit
        .loadings
        .iter()
        .map(|l: &LoadingEstimate| LoadingRow {
            factor: l.factor.clone(),
            item: l.item,
            estimate: l.estimate,
            se: l.se,
            z: l.z,
            p_value: l.p_value,
            standardized: l.standardized,
            stars: stars(l.p_value),
        })
        .collect();
    let factor_correlations = factor_correlations(fit)
        .into_iter()
        .map(|c: CorrelationEstimate| FactorCorrelationRow {
            stars: stars(c.p_value),
            a: c.a,
            b: c.b,
            estimate: c.estimate,
            se: c.se,
            z: c.z,
            p_value: c.p_value,
        })
        .collect();
    let mut mis = modification_indices(fit);
    mis.truncate(20);
    CfaReport {
        fit_indices: fit_indices(fit),
        robust: fit.robust,
        discrepancy: fit.discrepancy,
        iterations: fit.iterations,
        gradient_norm: fit.gradient_norm,
        loadings,
        factor_correlations,
        heywood: fit.heywood.clone(),
        modification_indices: mis,
    }
}

fn irt_report(ds: &ScoredMatrix, config: &PipelineConfig) -> Result<IrtReport> {
    let opts = IrtOptions { quadrature: config.quadrature, execution: config.execution, ..IrtOptions::default() };
    let one_pl = fit_irt(ds, IrtModel::OnePl, &opts)?;
    let two_pl = fit_irt(ds, IrtModel::TwoPl, &opts)?;
    let lrt = lrt_compare(&one_pl, &two_pl)?;
    let (curves, tif) = emit_curves(&two_pl, &AbilityGrid::default());
    Ok(IrtReport { one_pl, two_pl, lrt, curves, tif })
}

fn shortening_report(
    ds: &ScoredMatrix,
    spec: &FactorSpec,
    source: &str,
    config: &PipelineConfig,
) -> Result<ShorteningReport> {
    let plan = ShorteningPlan::load(source)?;
    let items = spec.items();
    let sub = ds.select_items(&items)?;
    let tetra = tetrachoric_matrix(&sub, &TetraOptions { execution: config.execution })?;
    let boot = cfa_bootstrap(&sub, &items, config)?;
    let input = CfaInput::from_tetra(&tetra, boot.as_ref())?;
    let stages = replay_shortening(&input, spec, &plan, &cfa_options(config))?;
    let variants = plan.variant_items(spec)?;
    Ok(ShorteningReport { plan, stages, variants })
}

/// Output formats to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { json: true, csv: true }
    }
}

type Table = (Vec<&'static str>, Vec<Vec<String>>);

fn opt(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

/// CSV sidecars keyed by file name. Numbers carry 6 significant digits.
pub fn csv_tables(report: &AnalysisReport) -> BTreeMap<&'static str, Table> {
    let mut out = BTreeMap::new();
    let subs = &report.subsets;

    if subs.iter().any(|s| !s.items.is_empty()) {
        let mut rows = Vec::new();
        for s in subs {
            for it in &s.items {
                rows.push(vec![
                    s.subset.to_string(),
                    it.item.to_string(),
                    fmt6(it.difficulty),
                    fmt6(it.sd),
                    opt(it.point_biserial),
                    opt(it.point_biserial_corrected),
                    opt(it.drop_alpha),
                ]);
            }
        }
        out.insert(
            "item_stats.csv",
            (
                vec!["subset", "item", "difficulty", "sd", "point_biserial", "point_biserial_corrected", "drop_alpha"],
                rows,
            ),
        );
        let mut rows = Vec::new();
        for s in subs {
            if let Some(sum) = &s.score_summary {
                for (score, count) in sum.histogram.iter().enumerate() {
                    rows.push(vec![s.subset.to_string(), score.to_string(), count.to_string()]);
                }
            }
        }
        out.insert("score_histogram.csv", (vec!["subset", "score", "count"], rows));
    }

    let fit_header = vec![
        "model", "chi2", "df", "p_value", "chi2_over_df", "cfi", "tli", "rmsea", "srmr", "chi2_unadjusted",
        "baseline_chi2", "baseline_df",
    ];
    let fit_row = |label: String, f: &FitIndices| {
        vec![
            label,
            fmt6(f.chi2),
            f.df.to_string(),
            fmt6(f.p_value),
            fmt6(f.chi2_over_df),
            fmt6(f.cfi),
            fmt6(f.tli),
            opt(f.rmsea),
            fmt6(f.srmr),
            fmt6(f.chi2_unadjusted),
            fmt6(f.baseline_chi2),
            f.baseline_df.to_string(),
        ]
    };
    let mut fit_rows = Vec::new();
    if subs.iter().any(|s| s.cfa.is_some()) {
        let mut loadings = Vec::new();
        let mut corrs = Vec::new();
        for s in subs {
            if let Some(c) = &s.cfa {
                fit_rows.push(fit_row(s.subset.to_string(), &c.fit_indices));
                for l in &c.loadings {
                    loadings.push(vec![
                        s.subset.to_string(),
                        l.factor.clone(),
                        l.item.to_string(),
                        fmt6(l.estimate),
                        fmt6(l.se),
                        fmt6(l.z),
                        fmt6(l.p_value),
                        fmt6(l.standardized),
                        l.stars.to_string(),
                    ]);
                }
                for r in &c.factor_correlations {
                    corrs.push(vec![
                        s.subset.to_string(),
                        r.a.clone(),
                        r.b.clone(),
                        fmt6(r.estimate),
                        fmt6(r.se),
                        fmt6(r.z),
                        fmt6(r.p_value),
                        r.stars.to_string(),
                    ]);
                }
            }
        }
        out.insert(
            "loadings.csv",
            (vec!["subset", "factor", "item", "estimate", "se", "z", "p_value", "standardized", "stars"], loadings),
        );
        out.insert(
            "factor_correlations.csv",
            (vec!["subset", "factor_a", "factor_b", "estimate", "se", "z", "p_value", "stars"], corrs),
        );
    }
    if let Some(sh) = &report.shortening {
        for st in &sh.stages {
            fit_rows.push(fit_row(format!("shorten_step_{}", st.step), &st.fit_indices));
        }
    }
    if !fit_rows.is_empty() {
        out.insert("fit_indices.csv", (fit_header, fit_rows));
    }

    if let Some(irt) = &report.irt {
        let mut rows = Vec::new();
        for f in [&irt.one_pl, &irt.two_pl] {
            for p in &f.items {
                rows.push(vec![f.model.label().to_string(), p.item.to_string(), fmt6(p.a), fmt6(p.b)]);
            }
        }
        out.insert("irt_params.csv", (vec!["model", "item", "a", "b"], rows));
        let rows = irt
            .curves
            .iter()
            .map(|c| vec![c.item.to_string(), fmt6(c.theta), fmt6(c.icc), fmt6(c.iic)])
            .collect();
        out.insert("irt_curves.csv", (vec!["item", "theta", "icc", "iic"], rows));
        let rows = irt.tif.iter().map(|t| vec![fmt6(t.theta), fmt6(t.tif)]).collect();
        out.insert("irt_tif.csv", (vec!["theta", "tif"], rows));
    }
    out
}

/// Writes `report.json` and the CSV sidecars into `dir`. Files are staged
/// under temporary names and only renamed once all were written.
pub fn write_outputs(report: &AnalysisReport, dir: &Path, formats: Formats) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let mut stage = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let final_path = dir.join(name);
        let tmp = dir.join(format!(".{name}.partial"));
        fs::write(&tmp, bytes)?;
        staged.push((tmp, final_path));
        Ok(())
    };
    let result = (|| -> Result<()> {
        if formats.json {
            let mut bytes = serde_json::to_vec_pretty(report)?;
            bytes.push(b'\n');
            stage("report.json", bytes)?;
        }
        if formats.csv {
            for (name, (header, rows)) in csv_tables(report) {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&header)?;
                for r in rows {
                    w.write_record(&r)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
                stage(name, bytes)?;
            }
            for s in &report.subsets {
                if let Some(t) = &s.tetrachoric {
                    let mut buf = Vec::new();
                    t.write_csv(&mut buf)?;
                    stage(&format!("tetrachoric_{}.csv", s.subset), buf)?;
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    let mut written = Vec::new();
    for (tmp, fin) in staged {
        fs::rename(&tmp, &fin)?;
        written.push(fin);
    }
    Ok(written)
}
