//! The three-phase spoofing experiment: Setup (two disjoint reference
//! patterns per camera), Spoofing (filter every target image, then inject
//! every camera's attacker pattern) and Comparing (correlate every output
//! against every investigator pattern), plus aggregation and file output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{inject_fingerprint, remove_fingerprint, AttackConfig};
use crate::correlate::{
    expected_signal, rank_scores, Correlator, RankedScore, DEFAULT_EXCLUSION_RADIUS,
    DEFAULT_THRESHOLD,
};
use crate::denoise::{residual, DenoiseParams, DEFAULT_LEVELS, DEFAULT_SIGMA0};
use crate::error::{Error, Result};
use crate::fingerprint::{estimate_fingerprint, Fingerprint};
use crate::imaging::{adapt, load_image, save_pgm, AdaptMode, ImagePlane, NormalizeMode};

/// Label of the filtered-only row.
pub const FILTR: &str = "FILTR";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    pub adapt_mode: AdaptMode,
    pub alpha: f64,
    pub exclusion_radius: usize,
    pub sigma0: f64,
    pub levels: usize,
    pub normalize_mode: NormalizeMode,
    pub threshold: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            adapt_mode: AdaptMode::Crop,
            alpha: 1.0,
            exclusion_radius: DEFAULT_EXCLUSION_RADIUS,
            sigma0: DEFAULT_SIGMA0,
            levels: DEFAULT_LEVELS,
            normalize_mode: NormalizeMode::Clamp,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl ExperimentOptions {
    pub fn denoise_params(&self) -> DenoiseParams {
        DenoiseParams {
            sigma0: self.sigma0,
            levels: self.levels,
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            injection_strength: self.alpha,
            normalize_mode: self.normalize_mode,
            adapt_mode: Some(self.adapt_mode),
            denoise: self.denoise_params(),
            exclusion_radius: self.exclusion_radius,
            ..AttackConfig::default()
        }
    }
}

/// Decoded images of one camera.
#[derive(Clone, Debug)]
pub struct CameraImages {
    pub camera_id: String,
    /// Enrollment set for the attacker's pattern.
    pub enroll_inject: Vec<ImagePlane>,
    /// Disjoint enrollment set for the investigator's pattern.
    pub enroll_compare: Vec<ImagePlane>,
    pub spoofable: Vec<ImagePlane>,
}

/// Attacker (`inject`) and investigator (`compare`) patterns of one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePair {
    pub inject: Fingerprint,
    pub compare: Fingerprint,
}

fn check_unique_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Manifest(format!("duplicate camera id {id:?}")));
        }
    }
    Ok(())
}

fn estimate_from(
    images: &[ImagePlane],
    camera_id: &str,
    opts: &ExperimentOptions,
) -> Result<Fingerprint> {
    let params = opts.denoise_params();
    let residuals = images
        .par_iter()
        .map(|p| residual(p, params))
        .collect::<Result<Vec<_>>>()?;
    estimate_fingerprint(images, &residuals, camera_id)
}

/// Setup phase: one pattern pair per camera, in input order.
pub fn run_setup(cameras: &[CameraImages], opts: &ExperimentOptions) -> Result<Vec<ReferencePair>> {
    check_unique_ids(cameras.iter().map(|c| c.camera_id.as_str()))?;
    cameras
        .iter()
        .map(|cam| {
            if cam.enroll_inject.is_empty() || cam.enroll_compare.is_empty() {
                return Err(Error::Manifest(format!(
                    "camera {}: enrollment lists must be nonempty",
                    cam.camera_id
                )));
            }
            Ok(ReferencePair {
                inject: estimate_from(&cam.enroll_inject, &cam.camera_id, opts)?,
                compare: estimate_from(&cam.enroll_compare, &cam.camera_id, opts)?,
            })
        })
        .collect()
}

/// One output of the spoofing phase.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackedImage {
    pub origin_id: String,
    pub image_index: usize,
    /// Camera whose attacker pattern was injected; `None` for filtered-only images.
    pub spoof_id: Option<String>,
    pub plane: ImagePlane,
}

fn spoof_source(
    origin_id: &str,
    image_index: usize,
    image: &ImagePlane,
    rps: &[ReferencePair],
    cfg: &AttackConfig,
) -> Result<Vec<AttackedImage>> {
    let filtered = remove_fingerprint(image, cfg)?;
    let mut out = Vec::with_capacity(rps.len() + 1);
    for rp in rps {
        out.push(AttackedImage {
            origin_id: origin_id.to_string(),
            image_index,
            spoof_id: Some(rp.inject.camera_id().to_string()),
            plane: inject_fingerprint(&filtered, &rp.inject, cfg)?,
        });
    }
    out.insert(
        0,
        AttackedImage {
            origin_id: origin_id.to_string(),
            image_index,
            spoof_id: None,
            plane: filtered,
        },
    );
    Ok(out)
}

fn sources(cameras: &[CameraImages]) -> Vec<(&str, usize, &ImagePlane)> {
    cameras
        .iter()
        .flat_map(|c| {
            c.spoofable
                .iter()
                .enumerate()
                .map(move |(i, p)| (c.camera_id.as_str(), i, p))
        })
        .collect()
}

/// Spoofing phase: per target image, the filtered image followed by one
/// injected image per camera (self-injection included).
pub fn run_spoofing(
    cameras: &[CameraImages],
    rps: &[ReferencePair],
    opts: &ExperimentOptions,
) -> Result<Vec<AttackedImage>> {
    let cfg = opts.attack_config();
    cfg.validate()?;
    let nested = sources(cameras)
        .into_par_iter()
        .map(|(id, i, p)| {
            spoof_source(id, i, p, rps, &cfg)
                .map_err(|e| e.with_context(id, format!("spoofable[{i}]")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Correlation outcome for one attacked image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub origin_id: String,
    pub image_index: usize,
    pub spoof_id: Option<String>,
    /// Descending by ccn; excluded comparisons are absent.
    pub scores: Vec<RankedScore>,
    /// Comparison cameras whose correlation was degenerate.
    pub excluded: Vec<String>,
    /// Injected camera strictly first; `None` for filtered-only images.
    pub success: Option<bool>,
}

/// Investigator side of the comparison. Patterns stay at their native sensor
/// geometry; a questioned image is cropped/resized onto each distinct pattern
/// size before its residual is extracted.
struct ComparisonBank<'a> {
    rps: &'a [ReferencePair],
    /// Distinct pattern sizes, with the indices of the patterns of that size.
    groups: Vec<((usize, usize), Vec<usize>)>,
}

impl<'a> ComparisonBank<'a> {
    fn new(rps: &'a [ReferencePair]) -> Self {
        let mut groups: Vec<((usize, usize), Vec<usize>)> = Vec::new();
        for (i, rp) in rps.iter().enumerate() {
            let d = rp.compare.dims();
            match groups.iter_mut().find(|g| g.0 == d) {
                Some(g) => g.1.push(i),
                None => groups.push((d, vec![i])),
            }
        }
        Self { rps, groups }
    }

    fn score(&self, img: &AttackedImage, opts: &ExperimentOptions) -> Result<ImageRecord> {
        let mut scores = Vec::with_capacity(self.rps.len());
        let mut excluded = Vec::new();
        for ((w, h), members) in &self.groups {
            let plane = adapt(&img.plane, *w, *h, opts.adapt_mode)?;
            let x = residual(&plane, opts.denoise_params())?;
            let corr = Correlator::new(x.data());
            for &i in members {
                let k = &self.rps[i].compare;
                let y = expected_signal(k, &plane)?;
                match corr.ccn(&y, opts.exclusion_radius) {
                    Ok(r) => scores.push(RankedScore {
                        camera_id: k.camera_id().to_string(),
                        ccn: r.ccn,
                    }),
                    Err(Error::DegenerateEnergy) => excluded.push(k.camera_id().to_string()),
                    Err(e) => return Err(e),
                }
            }
        }
        rank_scores(&mut scores);
        let success = img.spoof_id.as_ref().map(|target| {
            scores.first().is_some_and(|top| {
                &top.camera_id == target && scores.get(1).is_none_or(|next| top.ccn > next.ccn)
            })
        });
        Ok(ImageRecord {
            origin_id: img.origin_id.clone(),
            image_index: img.image_index,
            spoof_id: img.spoof_id.clone(),
            scores,
            excluded,
            success,
        })
    }
}

/// Mean ccn per (row group, comparison camera).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `None` where no comparison contributed.
    pub means: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    fn accumulate(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        entries: &[(usize, &ImageRecord)],
    ) -> Self {
        let col_index: BTreeMap<&str, usize> = col_labels
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let (r, c) = (row_labels.len(), col_labels.len());
        let mut sums = vec![vec![0.0; c]; r];
        let mut counts = vec![vec![0usize; c]; r];
        for &(row, rec) in entries {
            for s in &rec.scores {
                let col = col_index[s.camera_id.as_str()];
                sums[row][col] += s.ccn;
                counts[row][col] += 1;
            }
        }
        let means = sums
            .iter()
            .zip(&counts)
            .map(|(s, n)| {
                s.iter()
                    .zip(n)
                    .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
                    .collect()
            })
            .collect();
        Self {
            row_labels,
            col_labels,
            means,
            counts,
        }
    }

    pub fn mean(&self, row: &str, col: &str) -> Option<f64> {
        let r = self.row_labels.iter().position(|l| l == row)?;
        let c = self.col_labels.iter().position(|l| l == col)?;
        self.means[r][c]
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    fn to_csv(&self, cell: impl Fn(usize, usize) -> String) -> String {
        let mut out = String::from("row");
        for c in &self.col_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (r, label) in self.row_labels.iter().enumerate() {
            out.push_str(label);
            for c in 0..self.col_labels.len() {
                out.push(',');
                out.push_str(&cell(r, c));
            }
            out.push('\n');
        }
        out
    }

    /// Means with six decimals; empty cells are left blank.
    pub fn means_csv(&self) -> String {
        self.to_csv(|r, c| {
            self.means[r][c]
                .map(|m| format!("{m:.6}"))
                .unwrap_or_default()
        })
    }

    pub fn counts_csv(&self) -> String {
        self.to_csv(|r, c| self.counts[r][c].to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpoofReport {
    /// Every injected image, self-injection included.
    pub records: Vec<ImageRecord>,
    /// Filtered-only images.
    pub filtered_records: Vec<ImageRecord>,
    pub success_count: usize,
    pub failure_count: usize,
    pub success_rate: f64,
    /// Same counts restricted to injections of a camera other than the origin.
    pub cross_success_count: usize,
    pub cross_failure_count: usize,
    pub cross_success_rate: f64,
    /// Per origin: which camera ranked second in successful cross-injections.
    pub second_rank_histogram: BTreeMap<String, BTreeMap<String, usize>>,
    /// Filtered-only images grouped by origin (rows) against comparison patterns.
    pub filtr_by_origin: CorrelationMatrix,
    /// Comparisons dropped for degenerate correlation energy.
    pub exclusions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub matrix: CorrelationMatrix,
    pub report: SpoofReport,
}

fn rate(ok: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        ok as f64 / total as f64
    }
}

fn aggregate(records: Vec<ImageRecord>, rps: &[ReferencePair]) -> ExperimentOutcome {
    let col_labels: Vec<String> = rps
        .iter()
        .map(|r| r.compare.camera_id().to_string())
        .collect();
    let spoof_ids: Vec<String> = rps
        .iter()
        .map(|r| r.inject.camera_id().to_string())
        .collect();
    let mut row_labels = vec![FILTR.to_string()];
    row_labels.extend(spoof_ids.iter().cloned());
    let row_of: BTreeMap<&str, usize> = spoof_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i + 1))
        .collect();

    let grouped: Vec<(usize, &ImageRecord)> = records
        .iter()
        .map(|r| (r.spoof_id.as_deref().map_or(0, |s| row_of[s]), r))
        .collect();
    let matrix = CorrelationMatrix::accumulate(row_labels, col_labels.clone(), &grouped);

    let mut origins: Vec<String> = Vec::new();
    for r in &records {
        if !origins.contains(&r.origin_id) {
            origins.push(r.origin_id.clone());
        }
    }
    let filtr_entries: Vec<(usize, &ImageRecord)> = records
        .iter()
        .filter(|r| r.spoof_id.is_none())
        .map(|r| (origins.iter().position(|o| o == &r.origin_id).unwrap(), r))
        .collect();
    let filtr_by_origin =
        CorrelationMatrix::accumulate(origins.clone(), col_labels, &filtr_entries);

    let exclusions = records.iter().map(|r| r.excluded.len()).sum();
    let (filtered_records, spoofed): (Vec<_>, Vec<_>) =
        records.into_iter().partition(|r| r.spoof_id.is_none());
    let success_count = spoofed.iter().filter(|r| r.success == Some(true)).count();
    let cross: Vec<&ImageRecord> = spoofed
        .iter()
        .filter(|r| r.spoof_id.as_deref() != Some(r.origin_id.as_str()))
        .collect();
    let cross_success_count = cross.iter().filter(|r| r.success == Some(true)).count();
    let mut second_rank_histogram: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for r in cross.iter().filter(|r| r.success == Some(true)) {
        if let Some(second) = r.scores.get(1) {
            *second_rank_histogram
                .entry(r.origin_id.clone())
                .or_default()
                .entry(second.camera_id.clone())
                .or_default() += 1;
        }
    }
    ExperimentOutcome {
        matrix,
        report: SpoofReport {
            success_count,
            failure_count: spoofed.len() - success_count,
            success_rate: rate(success_count, spoofed.len()),
            cross_success_count,
            cross_failure_count: cross.len() - cross_success_count,
            cross_success_rate: rate(cross_success_count, cross.len()),
            second_rank_histogram,
            filtr_by_origin,
            exclusions,
            filtered_records,
            records: spoofed,
        },
    }
}

/// Comparing phase over already attacked images.
pub fn run_comparing(
    images: &[AttackedImage],
    rps: &[ReferencePair],
    opts: &ExperimentOptions,
) -> Result<ExperimentOutcome> {
    let bank = ComparisonBank::new(rps);
    let records = images
        .par_iter()
        .map(|img| bank.score(img, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(records, rps))
}

/// Runs all three phases, scoring each target's outputs as soon as they are
/// produced. Equivalent to `run_comparing(run_spoofing(..))` without holding
/// every attacked image in memory.
pub fn run_experiment(
    cameras: &[CameraImages],
    opts: &ExperimentOptions,
) -> Result<(Vec<ReferencePair>, ExperimentOutcome)> {
    let rps = run_setup(cameras, opts)?;
    let cfg = opts.attack_config();
    cfg.validate()?;
    let targets = sources(cameras);
    let bank = ComparisonBank::new(&rps);
    let nested = targets
        .into_par_iter()
        .map(|(id, i, p)| {
            spoof_source(id, i, p, &rps, &cfg)?
                .iter()
                .map(|img| bank.score(img, opts))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.with_context(id, format!("spoofable[{i}]")))
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = aggregate(nested.into_iter().flatten().collect(), &rps);
    Ok((rps, outcome))
}

/// One camera's entry in a manifest; paths are relative to the manifest file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub camera_id: String,
    pub enroll_inject: Vec<PathBuf>,
    pub enroll_compare: Vec<PathBuf>,
    pub spoofable: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub cameras: Vec<CameraEntry>,
    #[serde(default)]
    pub options: ExperimentOptions,
    /// Free-form metadata (e.g. simulator seeds), echoed into `run_config.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Manifest("no cameras".into()));
        }
        check_unique_ids(self.cameras.iter().map(|c| c.camera_id.as_str()))?;
        for cam in &self.cameras {
            for (name, list) in [
                ("enroll_inject", &cam.enroll_inject),
                ("enroll_compare", &cam.enroll_compare),
                ("spoofable", &cam.spoofable),
            ] {
                if list.is_empty() {
                    return Err(Error::Manifest(format!(
                        "camera {}: {name} is empty",
                        cam.camera_id
                    )));
                }
            }
            let inject: BTreeSet<&PathBuf> = cam.enroll_inject.iter().collect();
            if let Some(p) = cam.enroll_compare.iter().find(|p| inject.contains(p)) {
                return Err(Error::Manifest(format!(
                    "camera {}: {} is in both enrollment sets",
                    cam.camera_id,
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let m: DatasetManifest = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    /// Decodes every referenced image, resolving paths against `base_dir`.
    pub fn load_images(&self, base_dir: &Path) -> Result<Vec<CameraImages>> {
        self.validate()?;
        let load_all = |id: &str, list: &[PathBuf]| -> Result<Vec<ImagePlane>> {
            list.par_iter()
                .map(|rel| {
                    let path = base_dir.join(rel);
                    load_image(&path)
                        .map(|img| img.into_luminance())
                        .map_err(|e| e.with_context(id, path))
                })
                .collect()
        };
        self.cameras
            .iter()
            .map(|c| {
                let cam = CameraImages {
                    camera_id: c.camera_id.clone(),
                    enroll_inject: load_all(&c.camera_id, &c.enroll_inject)?,
                    enroll_compare: load_all(&c.camera_id, &c.enroll_compare)?,
                    spoofable: load_all(&c.camera_id, &c.spoofable)?,
                };
                let dims = cam.enroll_inject[0].dims();
                let paths = c.enroll_inject.iter().chain(&c.enroll_compare);
                for (p, img) in paths.zip(cam.enroll_inject.iter().chain(&cam.enroll_compare)) {
                    if img.dims() != dims {
                        return Err(Error::DimensionMismatch(format!(
                            "enrollment image is {:?}, expected {:?}",
                            img.dims(),
                            dims
                        ))
                        .with_context(&c.camera_id, base_dir.join(p)));
                    }
                }
                Ok(cam)
            })
            .collect()
    }
}

/// Everything needed to reproduce a run, written as `run_config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool_version: String,
    pub manifest: Option<String>,
    pub options: ExperimentOptions,
    pub provenance: Option<serde_json::Value>,
}

/// Writes `matrix.csv`, `counts.csv`, `report.json` and `run_config.json`.
pub fn emit(
    outcome: &ExperimentOutcome,
    config: &RunConfig,
    out_dir: impl AsRef<Path>,
) -> Result<()> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("matrix.csv"), outcome.matrix.means_csv())?;
    fs::write(out_dir.join("counts.csv"), outcome.matrix.counts_csv())?;
    let mut report = serde_json::to_string_pretty(&outcome.report)?;
    report.push('\n');
    fs::write(out_dir.join("report.json"), report)?;
    let mut cfg = serde_json::to_string_pretty(config)?;
    cfg.push('\n');
    fs::write(out_dir.join("run_config.json"), cfg)?;
    Ok(())
}

/// Dumps attacked images as `<origin>_<index>_<spoof|FILTR>.pgm`.
pub fn dump_images(images: &[AttackedImage], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for img in images {
        let mut name = String::new();
        let _ = write!(
            name,
            "{}_{:03}_{}.pgm",
            img.origin_id,
            img.image_index,
            img.spoof_id.as_deref().unwrap_or(FILTR)
        );
        save_pgm(&img.plane, dir.join(name))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensorsim::{make_camera, make_scene, shoot, SceneKind, SensorParams};

    fn tiny_fleet(n_cams: usize, enroll: usize, spoofable: usize) -> Vec<CameraImages> {
        let flat = make_scene(SceneKind::Flat { level: 128.0 }, 32, 32).unwrap();
        let chart = make_scene(SceneKind::Testchart, 32, 32).unwrap();
        (0..n_cams)
            .map(|c| {
                let cam = make_camera(
                    100 + c as u64,
                    32,
                    32,
                    SensorParams::default(),
                    format!("c{c}"),
                )
                .unwrap();
                let shots = |scene: &crate::sensorsim::Scene, base: u64, n: usize| {
                    (0..n)
                        .map(|i| shoot(&cam, scene, base + i as u64).unwrap())
                        .collect()
                };
                CameraImages {
                    camera_id: cam.camera_id.clone(),
                    enroll_inject: shots(&flat, 0, enroll),
                    enroll_compare: shots(&flat, 1000, enroll),
                    spoofable: shots(&chart, 2000, spoofable),
                }
            })
            .collect()
    }

    fn opts() -> ExperimentOptions {
        ExperimentOptions {
            levels: 3,
            ..ExperimentOptions::default()
        }
    }

    #[test]
    fn spoofing_bookkeeping() {
        let cams = tiny_fleet(2, 3, 3);
        let rps = run_setup(&cams, &opts()).unwrap();
        assert_eq!(rps.len(), 2);
        assert_eq!(rps[0].inject.dims(), (32, 32));
        let out = run_spoofing(&cams, &rps, &opts()).unwrap();
        assert_eq!(out.iter().filter(|o| o.spoof_id.is_none()).count(), 6);
        assert_eq!(out.iter().filter(|o| o.spoof_id.is_some()).count(), 12);

        let single = run_spoofing(&cams[..1], &rps[..1], &opts()).unwrap();
        assert!(single
            .iter()
            .filter_map(|o| o.spoof_id.as_deref())
            .all(|s| s == "c0"));
    }

    #[test]
    fn fused_run_matches_phased_run() {
        let cams = tiny_fleet(3, 4, 2);
        let o = opts();
        let (rps, fused) = run_experiment(&cams, &o).unwrap();
        let phased = run_comparing(&run_spoofing(&cams, &rps, &o).unwrap(), &rps, &o).unwrap();
        assert_eq!(fused, phased);
        let m = &fused.matrix;
        assert_eq!(m.row_labels[0], FILTR);
        assert_eq!(m.row_labels.len(), 4);
        // conservation
        let images = 3 * 2 * (1 + 3);
        assert_eq!(m.total_count() + fused.report.exclusions, images * 3);
        let r = &fused.report;
        assert_eq!(r.success_count + r.failure_count, r.records.len());
        assert_eq!(r.records.len(), 18);
        assert_eq!(r.filtered_records.len(), 6);
    }

    #[test]
    fn success_requires_strict_top() {
        let rps: Vec<ReferencePair> = ["a", "b"]
            .iter()
            .map(|id| {
                let f = Fingerprint::new(
                    8,
                    8,
                    (0..64).map(|i| (i % 7) as f64 * 0.01 - 0.03).collect(),
                    *id,
                    1,
                )
                .unwrap();
                ReferencePair {
                    inject: f.clone(),
                    compare: f,
                }
            })
            .collect();
        let bank = ComparisonBank::new(&rps);
        let plane =
            ImagePlane::from_fn(8, 8, |x, y| ((x * 31 + y * 17) % 40) as f64 + 100.0).unwrap();
        let img = AttackedImage {
            origin_id: "a".into(),
            image_index: 0,
            spoof_id: Some("a".into()),
            plane,
        };
        let o = ExperimentOptions {
            levels: 1,
            ..ExperimentOptions::default()
        };
        let rec = bank.score(&img, &o).unwrap();
        // identical comparison patterns tie, which is a failure
        assert_eq!(rec.scores[0].ccn, rec.scores[1].ccn);
        assert_eq!(rec.success, Some(false));
    }

    #[test]
    fn csv_layout() {
        let m = CorrelationMatrix {
            row_labels: vec![FILTR.into(), "a".into(), "b".into()],
            col_labels: vec!["a".into(), "b".into()],
            means: vec![
                vec![Some(1.0), Some(-0.5)],
                vec![Some(2.25), None],
                vec![Some(0.0), Some(1.0 / 3.0)],
            ],
            counts: vec![vec![1, 1], vec![2, 0], vec![3, 3]],
        };
        assert_eq!(
            m.means_csv(),
            "row,a,b\nFILTR,1.000000,-0.500000\na,2.250000,\nb,0.000000,0.333333\n"
        );
        assert_eq!(m.counts_csv(), "row,a,b\nFILTR,1,1\na,2,0\nb,3,3\n");
    }

    #[test]
    fn manifest_validation() {
        let entry = |inj: &[&str], cmp: &[&str]| CameraEntry {
            camera_id: "c".into(),
            enroll_inject: inj.iter().map(PathBuf::from).collect(),
            enroll_compare: cmp.iter().map(PathBuf::from).collect(),
            spoofable: vec!["s.pgm".into()],
        };
        let ok = DatasetManifest {
            cameras: vec![entry(&["a.pgm"], &["b.pgm"])],
            options: ExperimentOptions::default(),
            provenance: None,
        };
        assert!(ok.validate().is_ok());
        let overlap = DatasetManifest {
            cameras: vec![entry(&["a.pgm", "x.pgm"], &["x.pgm"])],
            ..ok.clone()
        };
        assert!(matches!(overlap.validate(), Err(Error::Manifest(_))));
        let empty = DatasetManifest {
            cameras: vec![entry(&[], &["x.pgm"])],
            ..ok.clone()
        };
        assert!(matches!(empty.validate(), Err(Error::Manifest(_))));
        let dup = DatasetManifest {
            cameras: vec![entry(&["a.pgm"], &["b.pgm"]), entry(&["c.pgm"], &["d.pgm"])],
            ..ok
        };
        assert!(matches!(dup.validate(), Err(Error::Manifest(_))));
    }

    #[test]
    fn manifest_json_defaults() {
        let m: DatasetManifest = serde_json::from_str(
            r#"{"cameras":[{"camera_id":"a","enroll_inject":["1.pgm"],"enroll_compare":["2.pgm"],"spoofable":["3.pgm"]}],
                "options":{"alpha":0.5,"adapt_mode":"resize"}}"#,
        )
        .unwrap();
        assert_eq!(m.options.alpha, 0.5);
        assert_eq!(m.options.adapt_mode, AdaptMode::Resize);
        assert_eq!(m.options.sigma0, DEFAULT_SIGMA0);
        assert!(serde_json::from_str::<DatasetManifest>(r#"{"cameras":[],"bogus":1}"#).is_err());
    }
}
