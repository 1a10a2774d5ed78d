use std::fs;

use psychfit_core::dataset::{write_raw, SubsetName};
use psychfit_core::pipeline::{csv_tables, run_pipeline, write_outputs, Formats, PipelineConfig, Stages};
use psychfit_core::simulate::synthetic_cctt_sheets;
use psychfit_core::stats::round_sig;
use psychfit_core::Error;

fn fixture(dir: &std::path::Path, n: usize) -> std::path::PathBuf {
    let path = dir.join("responses.csv");
    let mut buf = Vec::new();
    write_raw(&synthetic_cctt_sheets(n, 5), &mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

fn quick(input: std::path::PathBuf) -> PipelineConfig {
    PipelineConfig { bootstrap: 20, ..PipelineConfig::new(input) }
}

#[test]
fn full_report_and_sidecars() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick(fixture(tmp.path(), 800));
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.subsets.len(), 3);
    assert!(report.subsets.iter().all(|s| s.cfa.is_some()));
    let all = &report.subsets[0];
    assert_eq!(all.n, 800);
    assert_eq!(report.subsets[1].n + report.subsets[2].n + 40, 800);
    assert!(all.grade_comparison.as_ref().unwrap().mean_difference > 0.0);
    assert!(report.warnings.iter().any(|w| w.contains("mixed-grade")));
    let sh = report.shortening.as_ref().unwrap();
    let dfs: Vec<usize> = sh.stages.iter().map(|s| s.fit_indices.df).collect();
    assert_eq!(dfs, [260, 237, 215, 194, 174, 155, 137, 120, 104, 80]);
    let irt = report.irt.as_ref().unwrap();
    assert_eq!(irt.lrt.df, 24);
    assert_eq!(report.metadata.input_digests["responses"].len(), 64);

    let out = tmp.path().join("out");
    let files = write_outputs(&report, &out, Formats::default()).unwrap();
    for name in ["report.json", "loadings.csv", "fit_indices.csv", "item_stats.csv", "irt_params.csv", "irt_curves.csv", "score_histogram.csv", "factor_correlations.csv", "tetrachoric_all.csv"] {
        assert!(files.contains(&out.join(name)), "{name} missing");
    }
    assert!(fs::read_dir(&out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));

    // loadings round-trip at 6 significant digits
    let mut rdr = csv::Reader::from_path(out.join("loadings.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let mut k = 0;
    for s in &report.subsets {
        for l in &s.cfa.as_ref().unwrap().loadings {
            let r = &rows[k];
            assert_eq!(&r[0], s.subset);
            assert_eq!(r[2].parse::<u32>().unwrap(), l.item);
            assert_eq!(r[3].parse::<f64>().unwrap(), round_sig(l.estimate, 6));
            assert_eq!(r[4].parse::<f64>().unwrap(), round_sig(l.se, 6));
            k += 1;
        }
    }
    assert_eq!(k, rows.len());
    let mut rdr = csv::Reader::from_path(out.join("fit_indices.csv")).unwrap();
    let first = rdr.records().next().unwrap().unwrap();
    let fi = &all.cfa.as_ref().unwrap().fit_indices;
    assert_eq!(&first[0], "all");
    assert_eq!(first[1].parse::<f64>().unwrap(), round_sig(fi.chi2, 6));
    assert_eq!(first[5].parse::<f64>().unwrap(), round_sig(fi.cfi, 6));
    let mut rdr = csv::Reader::from_path(out.join("item_stats.csv")).unwrap();
    for (r, it) in rdr.records().zip(&all.items) {
        let r = r.unwrap();
        assert_eq!(r[2].parse::<f64>().unwrap(), round_sig(it.difficulty, 6));
        assert_eq!(r[4].parse::<f64>().unwrap(), round_sig(it.point_biserial.unwrap(), 6));
    }
}

#[test]
fn deterministic_report() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick(fixture(tmp.path(), 400));
    cfg.subsets = vec![SubsetName::All];
    cfg.plan = None;
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    write_outputs(&a, &tmp.path().join("a"), Formats::default()).unwrap();
    write_outputs(&b, &tmp.path().join("b"), Formats::default()).unwrap();
    for name in ["report.json", "loadings.csv", "irt_params.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(name)).unwrap(),
            fs::read(tmp.path().join("b").join(name)).unwrap(),
            "{name} differs"
        );
    }
    cfg.seed = 1;
    let c = run_pipeline(&cfg).unwrap();
    let ca = a.subsets[0].cfa.as_ref().unwrap().fit_indices.chi2;
    let cc = c.subsets[0].cfa.as_ref().unwrap().fit_indices.chi2;
    assert_ne!(ca, cc, "seed should change the bootstrap");
}

#[test]
fn stage_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick(fixture(tmp.path(), 300));
    cfg.stages = Stages { ctt: true, ..Stages::NONE };
    let r = run_pipeline(&cfg).unwrap();
    assert!(r.irt.is_none() && r.shortening.is_none());
    assert!(r.subsets.iter().all(|s| s.cfa.is_none() && s.alpha.is_some()));
    let tables = csv_tables(&r);
    assert!(tables.contains_key("item_stats.csv"));
    assert!(!tables.contains_key("loadings.csv"));
}

#[test]
fn errors_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "student_id,grade,gender,q1\ns1,5,f,A\n").unwrap();
    let err = run_pipeline(&PipelineConfig::new(&bad)).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "dataset"), "{err}");
    assert!(err.to_string().starts_with("stage dataset:"));

    // a subset with no grade-3 respondents cannot be analysed
    let path = fixture(tmp.path(), 300);
    let text = fs::read_to_string(&path).unwrap().replace(",3,", ",4,");
    fs::write(&path, text).unwrap();
    let mut cfg = quick(path);
    cfg.stages = Stages { ctt: true, ..Stages::NONE };
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "subset g3"), "{err}");
}
