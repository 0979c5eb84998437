//! CSV and JSON emission for sweep results.

use std::path::Path;

use crate::error::{Error, Result};
use crate::koopman::{KoopmanModel, Method};

use super::{abs_entries, DictKind, SweepResult};

fn num(v: f64) -> String {
    if v.is_finite() && v != 0.0 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn level(v: f64) -> String {
    format!("{v}")
}

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn nmse_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "snr_db", "dict", "split", "state", "mean_nmse", "ci95", "n_ok", "n_fail"])?;
    for r in &result.nmse {
        w.write_record([
            r.method.to_string(),
            level(r.snr_db),
            r.dict.to_string(),
            r.split.to_string(),
            r.state.clone(),
            num(r.mean_nmse),
            num(r.ci95),
            r.n_ok.to_string(),
            r.n_fail.to_string(),
        ])?;
    }
    to_string(w)
}

pub fn sizes_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["snr_db", "epsilon", "run", "reduced_size"])?;
    for r in &result.sizes {
        w.write_record([level(r.snr_db), level(r.epsilon), r.run.to_string(), r.reduced_size.to_string()])?;
    }
    to_string(w)
}

pub fn runs_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "snr_db", "dict", "split", "state", "run", "nmse"])?;
    for r in &result.runs {
        w.write_record([
            r.method.to_string(),
            level(r.snr_db),
            r.dict.to_string(),
            r.split.to_string(),
            r.state.clone(),
            r.run.to_string(),
            r.nmse.map_or_else(String::new, num),
        ])?;
    }
    to_string(w)
}

/// `|K̂|` entries of a model with regressor/target labels and an exact-zero flag.
pub fn heatmap_csv(model: &KoopmanModel) -> Result<String> {
    let rows = model.dictionary.regressor_labels();
    let cols = model.dictionary.labels();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", "col", "row_label", "col_label", "abs_value", "is_exact_zero"])?;
    for (r, c, v, zero) in abs_entries(&model.k_f_hat) {
        w.write_record([
            r.to_string(),
            c.to_string(),
            rows[r].clone(),
            cols[c].clone(),
            num(v),
            u8::from(zero).to_string(),
        ])?;
    }
    to_string(w)
}

/// Heatmap of the saved run-0 model for `method` on the given dictionary,
/// at `snr_db` or the first SNR level.
pub fn heatmap_export(result: &SweepResult, method: Method, dict: DictKind, snr_db: Option<f64>) -> Result<String> {
    let model = result
        .model(method, dict, snr_db)
        .ok_or_else(|| Error::Lookup(format!("no saved model for method {method}, {dict} dictionary")))?;
    heatmap_csv(model)
}

fn model_file_name(method: Method, dict: DictKind, snr_db: f64, run: usize) -> String {
    format!("{}_{}_snr{}_run{}.json", method, dict, level(snr_db), run)
}

/// Load a model written by [`write_outputs`] from `dir/models`, picking the
/// lowest run at `snr_db` (or at any level when `None`).
pub fn find_saved_model(dir: impl AsRef<Path>, method: Method, dict: DictKind, snr_db: Option<f64>) -> Result<KoopmanModel> {
    let models = dir.as_ref().join("models");
    let prefix = format!("{method}_{dict}_snr");
    let mut hits: Vec<String> = std::fs::read_dir(&models)
        .map_err(|e| Error::Lookup(format!("{}: {e}", models.display())))?
        .filter_map(|entry| entry.ok()?.file_name().into_string().ok())
        .filter(|name| name.starts_with(&prefix) && name.ends_with(".json"))
        .filter(|name| match snr_db {
            Some(s) => name.starts_with(&format!("{prefix}{}_run", level(s))),
            None => true,
        })
        .collect();
    hits.sort();
    let name = hits
        .first()
        .ok_or_else(|| Error::Lookup(format!("no saved model for method {method}, {dict} dictionary in {}", models.display())))?;
    KoopmanModel::load(models.join(name))
}

/// Write `nmse.csv`, `sizes.csv`, `runs.csv` and `models/*.json` into `dir`.
pub fn write_outputs(result: &SweepResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("nmse.csv"), nmse_csv(result)?)?;
    std::fs::write(dir.join("sizes.csv"), sizes_csv(result)?)?;
    std::fs::write(dir.join("runs.csv"), runs_csv(result)?)?;
    if !result.models.is_empty() {
        let models = dir.join("models");
        std::fs::create_dir_all(&models)?;
        for m in &result.models {
            m.model.save(models.join(model_file_name(m.method, m.dict, m.snr_db, m.run)))?;
        }
    }
    if !result.failures.is_empty() {
        std::fs::write(dir.join("failures.txt"), result.failures.join("\n") + "\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Dictionary;
    use nalgebra::DMatrix;

    #[test]
    fn zero_matrix_all_flagged() {
        let m = KoopmanModel::new(Dictionary::identity(2, 1), DMatrix::zeros(3, 2), Method::I).unwrap();
        let text = heatmap_csv(&m).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1..].iter().all(|l| l.ends_with(",1")));
        assert_eq!(lines[0], "row,col,row_label,col_label,abs_value,is_exact_zero");
    }

    #[test]
    fn missing_model_is_lookup_error() {
        let r = SweepResult {
            nmse: vec![],
            sizes: vec![],
            runs: vec![],
            models: vec![],
            full_size: 0,
            failures: vec![],
        };
        assert!(matches!(heatmap_export(&r, Method::IV, DictKind::Full, None), Err(Error::Lookup(_))));
    }

    #[test]
    fn model_names() {
        assert_eq!(model_file_name(Method::III, DictKind::Reduced, f64::INFINITY, 0), "III_reduced_snrinf_run0.json");
        assert_eq!(model_file_name(Method::I, DictKind::Full, 30.0, 0), "I_full_snr30_run0.json");
    }
}
