//! Volumetric IoU, contact accuracy and force/torque RMSE, plus the ablation
//! suite over the domain and force/torque loss switches.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_split, LabeledFrame, PressureBinning, CONTACT_THRESHOLD_KPA};
use crate::error::{Error, Result};
use crate::model::{predict_pressure, ViperNet};
use crate::synthworld::{Manifest, Split, World};
use crate::training::{train, TrainConfig};
use crate::types::{Domain, PressureImage, Wrench};

/// Weakly labeled frames count as in contact above this wrist force.
pub const WEAK_CONTACT_FORCE_N: f64 = 3.0;

/// `Σ min(P, P̂) / Σ max(P, P̂)`, with two empty maps scoring 1.
pub fn volumetric_iou(p: &PressureImage, q: &PressureImage) -> Result<f64> {
    if p.width() != q.width() || p.height() != q.height() {
        return Err(Error::shape(
            format!("{}x{}", p.height(), p.width()),
            format!("{}x{}", q.height(), q.width()),
        ));
    }
    let mut inter = 0.0f64;
    let mut union = 0.0f64;
    for (&a, &b) in p.data().iter().zip(q.data()) {
        if a < 0.0 || b < 0.0 {
            return Err(Error::InvalidInput("pressure maps must be nonnegative".into()));
        }
        inter += a.min(b) as f64;
        union += a.max(b) as f64;
    }
    Ok(if union == 0.0 { 1.0 } else { inter / union })
}

/// Any pixel above 1 kPa for fully labeled frames, wrist force above 3 N
/// for weakly labeled ones.
pub fn contact_truth(frame: &LabeledFrame) -> bool {
    match (&frame.domain, &frame.pressure) {
        (Domain::FullyLabeled, Some(p)) => p.any_above(CONTACT_THRESHOLD_KPA as f32),
        _ => frame.wrench.force_norm() > WEAK_CONTACT_FORCE_N,
    }
}

pub fn contact_accuracy(predicted: &[bool], truth: &[bool]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::InvalidInput("contact accuracy of an empty set".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::shape(truth.len(), predicted.len()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Root-mean-square error with the three force components pooled, and the
/// three torque components pooled.
pub fn ft_rmse(pred: &[Wrench], truth: &[Wrench]) -> Result<(f64, f64)> {
    if pred.is_empty() {
        return Err(Error::InvalidInput("RMSE of an empty set".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::shape(truth.len(), pred.len()));
    }
    let mut sf = 0.0;
    let mut st = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        for i in 0..3 {
            sf += (p.0[i] - t.0[i]).powi(2);
            st += (p.0[i + 3] - t.0[i + 3]).powi(2);
        }
    }
    let n = 3.0 * pred.len() as f64;
    Ok(((sf / n).sqrt(), (st / n).sqrt()))
}

/// A test frame paired with its true pressure map. Weakly labeled records
/// carry no pressure on disk, so theirs is regenerated by the simulator.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    pub frame: LabeledFrame,
    pub truth_pressure: PressureImage,
}

/// Loads a stored split and attaches the true pressure of every record.
pub fn load_eval_split(root: &Path, manifest: &Manifest, split: Split, domain: Domain) -> Result<Vec<EvalFrame>> {
    let frames = load_split(root, manifest, split, domain)?;
    let world = World::new(manifest.world.clone())?;
    frames
        .into_iter()
        .enumerate()
        .map(|(index, frame)| {
            let truth_pressure = match &frame.pressure {
                Some(p) => p.clone(),
                None => {
                    let sample = world.sample(manifest.seed, split, domain, index)?;
                    if sample.wrench != frame.wrench {
                        return Err(Error::InvalidInput(format!(
                            "record {index} of {split:?}/{domain} does not match its regenerated sample"
                        )));
                    }
                    sample.pressure
                }
            };
            Ok(EvalFrame { frame, truth_pressure })
        })
        .collect()
}

/// Renders an evaluation set directly from the simulator.
pub fn eval_frames_from_world(
    world: &World,
    seed: u64,
    split: Split,
    domain: Domain,
    count: usize,
    binning: &PressureBinning,
) -> Result<Vec<EvalFrame>> {
    (0..count)
        .map(|i| {
            let sample = world.sample(seed, split, domain, i)?;
            Ok(EvalFrame {
                frame: LabeledFrame::from_sample(&sample, binning)?,
                truth_pressure: sample.pressure,
            })
        })
        .collect()
}

/// What a pressure/wrench estimator said about one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pressure: PressureImage,
    pub contact: bool,
    pub wrench: Wrench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub domain: Domain,
    pub frames: usize,
    /// Frames whose true pressure exceeds the contact threshold somewhere.
    pub pressure_contact_frames: usize,
    pub contact_accuracy: f64,
    /// Per-frame IoU averaged over every frame.
    pub iou_all: f64,
    /// Per-frame IoU averaged over frames with true contact pressure.
    pub iou_contact: f64,
    /// Intersection and union pooled over every pixel of the set.
    pub iou_pooled: f64,
    pub rmse_force: f64,
    pub rmse_torque: f64,
}

pub fn score(predictions: &[Prediction], frames: &[EvalFrame]) -> Result<MetricReport> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("empty evaluation set".into()));
    }
    if predictions.len() != frames.len() {
        return Err(Error::shape(frames.len(), predictions.len()));
    }
    let predicted: Vec<bool> = predictions.iter().map(|p| p.contact).collect();
    let truth: Vec<bool> = frames.iter().map(|f| contact_truth(&f.frame)).collect();
    let contact_accuracy = contact_accuracy(&predicted, &truth)?;
    let mut iou_sum = 0.0;
    let mut iou_contact_sum = 0.0;
    let mut contact_frames = 0;
    let mut inter = 0.0f64;
    let mut union = 0.0f64;
    for (p, f) in predictions.iter().zip(frames) {
        let iou = volumetric_iou(&f.truth_pressure, &p.pressure)?;
        iou_sum += iou;
        if f.truth_pressure.any_above(CONTACT_THRESHOLD_KPA as f32) {
            iou_contact_sum += iou;
            contact_frames += 1;
        }
        for (&a, &b) in f.truth_pressure.data().iter().zip(p.pressure.data()) {
            inter += a.min(b) as f64;
            union += a.max(b) as f64;
        }
    }
    let pred_w: Vec<Wrench> = predictions.iter().map(|p| p.wrench).collect();
    let true_w: Vec<Wrench> = frames.iter().map(|f| f.frame.wrench).collect();
    let (rmse_force, rmse_torque) = ft_rmse(&pred_w, &true_w)?;
    Ok(MetricReport {
        domain: frames[0].frame.domain,
        frames: frames.len(),
        pressure_contact_frames: contact_frames,
        contact_accuracy,
        iou_all: iou_sum / frames.len() as f64,
        iou_contact: if contact_frames == 0 {
            f64::NAN
        } else {
            iou_contact_sum / contact_frames as f64
        },
        iou_pooled: if union == 0.0 { 1.0 } else { inter / union },
        rmse_force,
        rmse_torque,
    })
}

pub fn predict_frames(model: &ViperNet<f32>, binning: &PressureBinning, frames: &[EvalFrame]) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(32) {
        let images: Vec<_> = chunk.iter().map(|f| &f.frame.image).collect();
        for o in model.predict_batch(&images)? {
            let decoded = predict_pressure(&o, binning)?;
            out.push(Prediction {
                pressure: decoded.pressure,
                contact: decoded.contact,
                wrench: o.wrench,
            });
        }
    }
    Ok(out)
}

/// Predictions that repeat the ground truth: the ceiling every metric reaches.
pub fn oracle_predictions(frames: &[EvalFrame]) -> Vec<Prediction> {
    frames
        .iter()
        .map(|f| Prediction {
            pressure: f.truth_pressure.clone(),
            contact: contact_truth(&f.frame),
            wrench: f.frame.wrench,
        })
        .collect()
}

pub fn evaluate(model: &ViperNet<f32>, binning: &PressureBinning, frames: &[EvalFrame]) -> Result<MetricReport> {
    score(&predict_frames(model, binning, frames)?, frames)
}

/// `(use_domain_loss, use_ft_loss)` in table order.
pub const ABLATION_FLAGS: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

pub fn ablation_name(use_domain_loss: bool, use_ft_loss: bool) -> &'static str {
    match (use_domain_loss, use_ft_loss) {
        (false, false) => "fully-supervised",
        (true, false) => "domain-only",
        (false, true) => "ft-only",
        (true, true) => "full",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub use_domain_loss: bool,
    pub use_ft_loss: bool,
    pub seed: u64,
    pub full: MetricReport,
    pub weak: MetricReport,
}

impl AblationRow {
    pub fn name(&self) -> &'static str {
        ablation_name(self.use_domain_loss, self.use_ft_loss)
    }
}

pub struct AblationData<'a> {
    pub train_full: &'a [LabeledFrame],
    pub train_weak: &'a [LabeledFrame],
    pub test_full: &'a [EvalFrame],
    pub test_weak: &'a [EvalFrame],
}

/// Trains and scores every flag combination for every seed.
pub fn run_ablation_suite(
    data: &AblationData<'_>,
    base: &TrainConfig,
    seeds: &[u64],
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &(use_domain_loss, use_ft_loss) in &ABLATION_FLAGS {
        for &seed in seeds {
            let mut config = base.clone();
            config.seed = seed;
            config.weights.use_domain_loss = use_domain_loss;
            config.weights.use_ft_loss = use_ft_loss;
            let outcome = train(data.train_full, data.train_weak, &config)?;
            let binning = PressureBinning::default();
            let row = AblationRow {
                use_domain_loss,
                use_ft_loss,
                seed,
                full: evaluate(&outcome.model, &binning, data.test_full)?,
                weak: evaluate(&outcome.model, &binning, data.test_weak)?,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median weak-domain contact-frame IoU per flag combination, table order.
pub fn median_weak_iou(rows: &[AblationRow]) -> Vec<((bool, bool), f64)> {
    ABLATION_FLAGS
        .iter()
        .map(|&flags| {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| (r.use_domain_loss, r.use_ft_loss) == flags)
                .map(|r| r.weak.iou_contact)
                .collect();
            (flags, median(&mut v))
        })
        .collect()
}

pub fn reports_csv(reports: &[(String, MetricReport)]) -> String {
    let mut out = String::from(
        "name,domain,frames,contact_frames,contact_accuracy,iou_all,iou_contact,iou_pooled,rmse_force,rmse_torque\n",
    );
    for (name, r) in reports {
        let _ = writeln!(
            out,
            "{name},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.domain,
            r.frames,
            r.pressure_contact_frames,
            r.contact_accuracy,
            r.iou_all,
            r.iou_contact,
            r.iou_pooled,
            r.rmse_force,
            r.rmse_torque
        );
    }
    out
}

pub fn reports_table(reports: &[(String, MetricReport)]) -> String {
    let mut out = format!(
        "{:<24} {:<15} {:>7} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}\n",
        "name", "domain", "frames", "contact%", "IoU%", "IoUc%", "IoUp%", "RMSE_F", "RMSE_T"
    );
    for (name, r) in reports {
        let _ = writeln!(
            out,
            "{:<24} {:<15} {:>7} {:>9.1} {:>9.1} {:>9.1} {:>9.1} {:>8.3} {:>8.4}",
            name,
            r.domain.as_str(),
            r.frames,
            100.0 * r.contact_accuracy,
            100.0 * r.iou_all,
            100.0 * r.iou_contact,
            100.0 * r.iou_pooled,
            r.rmse_force,
            r.rmse_torque
        );
    }
    out
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(
        "config,use_domain_loss,use_ft_loss,seed,full_contact_accuracy,full_iou_contact,weak_contact_accuracy,weak_iou_all,weak_iou_contact,weak_iou_pooled,weak_rmse_force,weak_rmse_torque\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.name(),
            r.use_domain_loss,
            r.use_ft_loss,
            r.seed,
            r.full.contact_accuracy,
            r.full.iou_contact,
            r.weak.contact_accuracy,
            r.weak.iou_all,
            r.weak.iou_contact,
            r.weak.iou_pooled,
            r.weak.rmse_force,
            r.weak.rmse_torque
        );
    }
    out
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<18} {:>6} {:>4} {:>12} {:>12} {:>10} {:>10}\n",
        "config", "domain", "ft", "weak IoUc%", "weak cont%", "RMSE_F", "RMSE_T"
    );
    for &(d, f) in &ABLATION_FLAGS {
        let sel: Vec<&AblationRow> = rows.iter().filter(|r| (r.use_domain_loss, r.use_ft_loss) == (d, f)).collect();
        if sel.is_empty() {
            continue;
        }
        let med = |get: &dyn Fn(&AblationRow) -> f64| median(&mut sel.iter().map(|r| get(r)).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "{:<18} {:>6} {:>4} {:>12.1} {:>12.1} {:>10.3} {:>10.4}",
            ablation_name(d, f),
            if d { "on" } else { "off" },
            if f { "on" } else { "off" },
            100.0 * med(&|r| r.weak.iou_contact),
            100.0 * med(&|r| r.weak.contact_accuracy),
            med(&|r| r.weak.rmse_force),
            med(&|r| r.weak.rmse_torque)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(values: &[f32]) -> PressureImage {
        PressureImage::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn iou_examples() {
        let p = img(&[1.0, 0.0, 3.5, 2.0]);
        assert_eq!(volumetric_iou(&p, &p).unwrap(), 1.0);
        let double = img(&[2.0, 0.0, 7.0, 4.0]);
        assert_eq!(volumetric_iou(&p, &double).unwrap(), 0.5);
        let z = img(&[0.0; 4]);
        assert_eq!(volumetric_iou(&z, &z).unwrap(), 1.0);
        assert_eq!(volumetric_iou(&p, &z).unwrap(), 0.0);
        assert!(volumetric_iou(&p, &img(&[1.0])).is_err());
        assert!(volumetric_iou(&p, &img(&[-1.0, 0.0, 0.0, 0.0])).is_err());
    }

    fn weak(force: [f64; 3]) -> LabeledFrame {
        LabeledFrame {
            image: image::RgbImage::new(1, 1),
            pressure: None,
            bins: None,
            wrench: Wrench::new(force, [0.0; 3]),
            domain: Domain::WeaklyLabeled,
        }
    }

    #[test]
    fn contact_truth_examples() {
        let mut p = PressureImage::zeros(2, 2);
        p.set(1, 1, 0.5);
        let full = LabeledFrame {
            image: image::RgbImage::new(2, 2),
            pressure: Some(p),
            bins: Some(vec![0; 4]),
            wrench: Wrench::new([0.0, 0.0, 9.0], [0.0; 3]),
            domain: Domain::FullyLabeled,
        };
        assert!(!contact_truth(&full));
        assert!(contact_truth(&weak([0.0, 0.0, 3.1])));
        assert!(!contact_truth(&weak([1.0, 1.0, 1.0])));
    }

    #[test]
    fn accuracy_and_rmse_examples() {
        assert_eq!(contact_accuracy(&[false; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(contact_accuracy(&[], &[]).is_err());
        let t = vec![Wrench::new([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]); 5];
        assert_eq!(ft_rmse(&t, &t).unwrap(), (0.0, 0.0));
        let shifted: Vec<Wrench> = t.iter().map(|w| Wrench::new([w.0[0] + 1.0, w.0[1], w.0[2]], w.torque())).collect();
        let (f, tq) = ft_rmse(&shifted, &t).unwrap();
        assert!((f - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(tq, 0.0);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
