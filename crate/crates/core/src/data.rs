//! Dataset files and seeded synthetic generators.
//!
//! Sample files are CSV, one sample per line: `label,v1,...,vD`. Labels may be
//! `-1`/`+1` or `0`/`1`; they are always `-1`/`+1` in memory.
//!
//! Bag files hold one JSON record per line:
//! `{"bag_id": "b0", "label": 1, "instances": [[...], ...]}`, optionally with
//! `"instance_labels": [true, false, ...]` carrying generator ground truth.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, write_file, Error, Result};
use crate::kernels::{check_dim, Histogram};
use crate::region_select::Bag;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleDataset {
    pub x: Vec<Histogram>,
    pub y: Vec<f64>,
}

impl SampleDataset {
    pub fn new(x: Vec<Histogram>, y: Vec<f64>) -> Result<Self> {
        check_dim(x.len(), y.len())?;
        if let Some(first) = x.first() {
            for h in &x {
                check_dim(first.dim(), h.dim())?;
            }
        }
        if let Some(v) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::Input(format!("labels must be +1 or -1 (got {v})")));
        }
        Ok(SampleDataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, |h| h.dim())
    }

    /// Copy keeping only the listed bins, in order.
    pub fn select_bins(&self, bins: &[usize]) -> Result<Self> {
        let x = self
            .x
            .iter()
            .map(|h| Histogram::new(bins.iter().map(|&k| h[k]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleDataset { x, y: self.y.clone() })
    }
}

fn parse_label(field: &str) -> Option<f64> {
    let v: f64 = field.trim().parse().ok()?;
    if v == 1.0 {
        Some(1.0)
    } else if v == -1.0 || v == 0.0 {
        Some(-1.0)
    } else {
        None
    }
}

/// Parses sample CSV text; `origin` is used in error messages.
pub fn parse_samples(text: &str, origin: &Path) -> Result<SampleDataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dim = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split(',');
        let label_field = fields.next().unwrap_or_default();
        let label = parse_label(label_field)
            .ok_or_else(|| err(line, format!("invalid label '{}'", label_field.trim())))?;
        let mut values = Vec::new();
        for (k, f) in fields.enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| err(line, format!("value {} is not numeric: '{}'", k + 1, f.trim())))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(err(line, format!("value {} is negative or not finite: {v}", k + 1)));
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(err(line, "row has no histogram values".into()));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(err(line, format!("expected {d} values, found {}", values.len())));
            }
            _ => {}
        }
        x.push(Histogram::new(values).map_err(|e| err(line, e.to_string()))?);
        y.push(label);
    }
    Ok(SampleDataset { x, y })
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<SampleDataset> {
    let path = path.as_ref();
    let text = read_file(path.as_ref())?;
    parse_samples(&text, path)
}

/// CSV text for a dataset; values print in shortest round-trip form.
pub fn format_samples(data: &SampleDataset) -> String {
    let mut out = String::new();
    for (h, &l) in data.x.iter().zip(&data.y) {
        out.push_str(if l > 0.0 { "1" } else { "-1" });
        for v in h.iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_samples(path: impl AsRef<Path>, data: &SampleDataset) -> Result<()> {
    write_file(path.as_ref(), format_samples(data))?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BagId {
    Text(String),
    Int(i64),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BagRecordIn {
    bag_id: BagId,
    label: f64,
    instances: Vec<Vec<f64>>,
    #[serde(default)]
    instance_labels: Option<Vec<bool>>,
}

#[derive(Serialize)]
struct BagRecordOut<'a> {
    bag_id: &'a str,
    label: i8,
    instances: Vec<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    instance_labels: Option<&'a [bool]>,
}

/// Bags plus the per-instance ground truth when the file carries it.
#[derive(Debug, Clone, PartialEq)]
pub struct BagFile {
    pub bags: Vec<Bag>,
    pub truth: Option<Vec<Vec<bool>>>,
}

pub fn parse_bags(text: &str, origin: &Path) -> Result<BagFile> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut bags = Vec::new();
    let mut truth = Vec::new();
    let mut all_truth = true;
    let mut ids = HashSet::new();
    let mut dim = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: BagRecordIn = serde_json::from_str(raw).map_err(|e| err(line, e.to_string()))?;
        let id = match rec.bag_id {
            BagId::Text(s) => s,
            BagId::Int(i) => i.to_string(),
        };
        if !ids.insert(id.clone()) {
            return Err(err(line, format!("duplicate bag_id '{id}'")));
        }
        let label = parse_label(&rec.label.to_string())
            .ok_or_else(|| err(line, format!("invalid label {}", rec.label)))?;
        if rec.instances.is_empty() {
            return Err(err(line, format!("bag '{id}' has no instances")));
        }
        let mut instances = Vec::with_capacity(rec.instances.len());
        for v in rec.instances {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(err(line, format!("expected {d} values per instance, found {}", v.len())));
                }
                _ => {}
            }
            instances.push(Histogram::new(v).map_err(|e| err(line, e.to_string()))?);
        }
        match rec.instance_labels {
            Some(t) if t.len() == instances.len() => truth.push(t),
            Some(t) => {
                return Err(err(
                    line,
                    format!("{} instance labels for {} instances", t.len(), instances.len()),
                ))
            }
            None => all_truth = false,
        }
        bags.push(Bag::new(id, label, instances).map_err(|e| err(line, e.to_string()))?);
    }
    Ok(BagFile {
        truth: (all_truth && !bags.is_empty()).then_some(truth),
        bags,
    })
}

pub fn load_bags(path: impl AsRef<Path>) -> Result<Vec<Bag>> {
    Ok(load_bag_file(path)?.bags)
}

pub fn load_bag_file(path: impl AsRef<Path>) -> Result<BagFile> {
    let path = path.as_ref();
    let text = read_file(path.as_ref())?;
    parse_bags(&text, path)
}

pub fn format_bags(bags: &[Bag], truth: Option<&[Vec<bool>]>) -> Result<String> {
    if let Some(t) = truth {
        check_dim(bags.len(), t.len())?;
    }
    let mut out = String::new();
    for (i, bag) in bags.iter().enumerate() {
        let rec = BagRecordOut {
            bag_id: &bag.bag_id,
            label: if bag.label > 0.0 { 1 } else { -1 },
            instances: bag.instances.iter().map(|h| h.as_slice()).collect(),
            instance_labels: truth.map(|t| t[i].as_slice()),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_bags(path: impl AsRef<Path>, bags: &[Bag], truth: Option<&[Vec<bool>]>) -> Result<()> {
    write_file(path.as_ref(), format_bags(bags, truth)?)?;
    Ok(())
}

/// Scales a histogram to unit L1 mass; all-zero histograms are left alone.
pub fn normalize_l1(h: &Histogram) -> Histogram {
    let total: f64 = h.iter().sum();
    if total > 0.0 {
        Histogram::new(h.iter().map(|v| v / total).collect()).expect("scaled histogram stays valid")
    } else {
        h.clone()
    }
}

/// Planted-signal generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_pos: usize,
    pub n_neg: usize,
    pub dim: usize,
    pub informative_bins: Vec<usize>,
    /// Mean shift of informative bins for the positive class.
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
    pub normalize_l1: bool,
}

impl SyntheticSpec {
    /// Spec with `n_informative` bins drawn uniformly (and sorted) from the seed.
    pub fn planted(
        n_pos: usize,
        n_neg: usize,
        dim: usize,
        n_informative: usize,
        separation: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b1a5);
        let mut bins = rand::seq::index::sample(&mut rng, dim, n_informative.min(dim)).into_vec();
        bins.sort_unstable();
        SyntheticSpec {
            n_pos,
            n_neg,
            dim,
            informative_bins: bins,
            separation,
            noise_scale: 1.0,
            seed,
            normalize_l1: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        if let Some(k) = self.informative_bins.iter().find(|k| **k >= self.dim) {
            return Err(Error::Input(format!("informative bin {k} outside [0, {})", self.dim)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Input("separation must be finite and non-negative".into()));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Input("noise scale must be positive".into()));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, noise: &Normal<f64>, signal: bool) -> Histogram {
        let mut v: Vec<f64> = (0..self.dim).map(|_| noise.sample(rng).abs()).collect();
        if signal {
            for &k in &self.informative_bins {
                v[k] += self.separation;
            }
        }
        let h = Histogram::new(v).expect("generated values are non-negative");
        if self.normalize_l1 {
            normalize_l1(&h)
        } else {
            h
        }
    }
}

/// Samples whose informative bins carry a class-conditional mean shift; every
/// other bin has the same distribution in both classes. Rows are shuffled.
pub fn generate_planted_features(spec: &SyntheticSpec) -> Result<SampleDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_scale).expect("positive scale");
    let mut rows: Vec<(Histogram, f64)> = Vec::with_capacity(spec.n_pos + spec.n_neg);
    for _ in 0..spec.n_pos {
        rows.push((spec.draw(&mut rng, &noise, true), 1.0));
    }
    for _ in 0..spec.n_neg {
        rows.push((spec.draw(&mut rng, &noise, false), -1.0));
    }
    rows.shuffle(&mut rng);
    let (x, y) = rows.into_iter().unzip();
    Ok(SampleDataset { x, y })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    /// `n_pos`/`n_neg` count bags here.
    pub base: SyntheticSpec,
    pub m_per_bag: usize,
    pub signal_per_pos: usize,
}

/// Bags plus per-instance ground truth (`true` = signal instance).
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBags {
    pub bags: Vec<Bag>,
    pub truth: Vec<Vec<bool>>,
}

/// Positive bags hold `signal_per_pos` shifted instances at random positions,
/// the rest drawn from the negative distribution; negative bags are all
/// negative-distribution instances. Bags are emitted positives first.
pub fn generate_planted_instances(spec: &InstanceSpec) -> Result<PlantedBags> {
    let base = &spec.base;
    base.validate()?;
    if spec.m_per_bag == 0 {
        return Err(Error::Input("bags need at least one instance".into()));
    }
    if spec.signal_per_pos > spec.m_per_bag {
        return Err(Error::Input("signal_per_pos exceeds m_per_bag".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let noise = Normal::new(0.0, base.noise_scale).expect("positive scale");
    let mut bags = Vec::with_capacity(base.n_pos + base.n_neg);
    let mut truth = Vec::with_capacity(base.n_pos + base.n_neg);
    for b in 0..base.n_pos {
        let mut flags: Vec<bool> = (0..spec.m_per_bag).map(|k| k < spec.signal_per_pos).collect();
        flags.shuffle(&mut rng);
        let instances = flags
            .iter()
            .map(|&sig| base.draw(&mut rng, &noise, sig))
            .collect();
        bags.push(Bag::new(format!("pos{b}"), 1.0, instances)?);
        truth.push(flags);
    }
    for b in 0..base.n_neg {
        let instances = (0..spec.m_per_bag)
            .map(|_| base.draw(&mut rng, &noise, false))
            .collect();
        bags.push(Bag::new(format!("neg{b}"), -1.0, instances)?);
        truth.push(vec![false; spec.m_per_bag]);
    }
    Ok(PlantedBags { bags, truth })
}
