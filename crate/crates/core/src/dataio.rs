//! Dataset ingestion (LIBSVM text), synthetic classification data, node
//! partitioning and CSV trace serialization.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::{Trace, TraceRecord};
use crate::error::{Error, Result};

/// Probability that a synthetic label is flipped.
pub const LABEL_NOISE: f64 = 0.05;

/// CSV header of a trace file.
pub const TRACE_HEADER: &str = "iter,grad_evals,comm_rounds,sq_dist,lyapunov";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `+1.0` or `-1.0`.
    pub label: f64,
    /// 0-based `(index, value)` pairs, strictly increasing in index.
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    d: usize,
}

impl Dataset {
    /// Feature dimension is one past the largest index used.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut d = 0;
        for (k, s) in samples.iter().enumerate() {
            if s.label != 1.0 && s.label != -1.0 {
                return Err(Error::InvalidData(format!("sample {k} has label {} (expected ±1)", s.label)));
            }
            if s.features.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::InvalidData(format!("sample {k} has non-increasing indices")));
            }
            if let Some(&(idx, _)) = s.features.last() {
                d = d.max(idx + 1);
            }
        }
        Ok(Self { samples, d })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

/// Parses LIBSVM text: `<label> <idx>:<val> ...` with 1-based indices.
///
/// Labels `> 0` map to `+1`, everything else to `-1`. Blank lines and `#`
/// comments are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("non-numeric label {label_tok:?}") })?;
        let mut features = Vec::new();
        let mut last: Option<usize> = None;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: lineno, msg: format!("missing colon in {tok:?}") })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("bad index in {tok:?}") })?;
            if idx == 0 {
                return Err(Error::Parse { line: lineno, msg: "indices are 1-based; got 0".into() });
            }
            let val: f64 = val
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("bad value in {tok:?}") })?;
            if last.is_some_and(|p| idx <= p) {
                return Err(Error::Parse { line: lineno, msg: "non-increasing index".into() });
            }
            last = Some(idx);
            features.push((idx - 1, val));
        }
        samples.push(Sample { label: if label > 0.0 { 1.0 } else { -1.0 }, features });
    }
    Dataset::new(samples)
}

/// Writes a dataset back as LIBSVM text.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for s in ds.samples() {
        write!(out, "{}", if s.label > 0.0 { "+1" } else { "-1" })?;
        for &(idx, val) in &s.features {
            write!(out, " {}:{}", idx + 1, fmt_float(val))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Gaussian features with labels from a planted unit-norm hyperplane,
/// flipped at rate [`LABEL_NOISE`].
pub fn synth_classification(n_samples: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 || d == 0 {
        return Err(Error::InvalidData("need at least one sample and one feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = planted_direction(&mut rng, d);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let a: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let margin: f64 = a.iter().zip(&direction).map(|(x, w)| x * w).sum();
        let mut label = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < LABEL_NOISE {
            label = -label;
        }
        samples.push(Sample { label, features: a.into_iter().enumerate().collect() });
    }
    Dataset::new(samples)
}

/// The hyperplane normal used by [`synth_classification`] for this seed.
pub fn synth_direction(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    planted_direction(&mut rng, d)
}

fn planted_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= norm);
    w
}

/// Dense samples held by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeShard {
    m: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl NodeShard {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} labels", rows.len()),
                got: format!("{}", labels.len()),
            });
        }
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidData("ragged feature rows".into()));
        }
        Ok(Self { m: rows.len(), d, features: rows.concat(), labels })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.d..(j + 1) * self.d]
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }
}

/// Shuffles samples with `seed` and deals them into `n` contiguous shards
/// whose sizes differ by at most one (larger shards first).
pub fn partition(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<NodeShard>> {
    if n == 0 || ds.len() < n {
        return Err(Error::InvalidData(format!("cannot split {} samples over {n} nodes", ds.len())));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ds.len() / n, ds.len() % n);
    let d = ds.d();
    let mut shards = Vec::with_capacity(n);
    let mut cursor = 0;
    for i in 0..n {
        let size = base + usize::from(i < extra);
        let mut rows = Vec::with_capacity(size);
        let mut labels = Vec::with_capacity(size);
        for &k in &order[cursor..cursor + size] {
            let s = &ds.samples()[k];
            let mut dense = vec![0.0; d];
            for &(idx, v) in &s.features {
                dense[idx] = v;
            }
            rows.push(dense);
            labels.push(s.label);
        }
        cursor += size;
        let mut shard = NodeShard::new(rows, labels)?;
        shard.d = d;
        shards.push(shard);
    }
    Ok(shards)
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes a trace as CSV with header [`TRACE_HEADER`].
pub fn write_trace<W: Write>(t: &Trace, mut sink: W) -> Result<()> {
    writeln!(sink, "{TRACE_HEADER}")?;
    for r in &t.records {
        let lyap = r.lyapunov.map(fmt_float).unwrap_or_default();
        writeln!(sink, "{},{},{},{},{}", r.iter, r.grad_evals, r.comm_rounds, fmt_float(r.sq_dist), lyap)?;
    }
    Ok(())
}

/// Reads back the records written by [`write_trace`].
pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>> {
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim_end) != Some(TRACE_HEADER) {
        return Err(Error::Parse { line: 1, msg: "missing trace header".into() });
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        let err = |msg: &str| Error::Parse { line: lineno, msg: msg.to_string() };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        out.push(TraceRecord {
            iter: fields[0].parse().map_err(|_| err("bad iter"))?,
            grad_evals: fields[1].parse().map_err(|_| err("bad grad_evals"))?,
            comm_rounds: fields[2].parse().map_err(|_| err("bad comm_rounds"))?,
            sq_dist: fields[3].parse().map_err(|_| err("bad sq_dist"))?,
            lyapunov: if fields[4].is_empty() {
                None
            } else {
                Some(fields[4].parse().map_err(|_| err("bad lyapunov"))?)
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_libsvm(text.as_bytes())
    }

    #[test]
    fn parses_basic_line() {
        let ds = parse("+1 1:0.5 3:-2\n").unwrap();
        assert_eq!(ds.samples()[0].label, 1.0);
        assert_eq!(ds.samples()[0].features, vec![(0, 0.5), (2, -2.0)]);
        assert!(ds.d() >= 3);
    }

    #[test]
    fn label_mapping_and_comments() {
        let ds = parse("# header\n\n0 2:1\n  \n-1 1:1 # trailing\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples()[0].label, -1.0);
        assert_eq!(ds.samples()[1].features, vec![(0, 1.0)]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse("+1 1:1\n1 3:1 2:1\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("non-increasing index"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("abc 1:1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("1 2"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("1 0:1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_classification(10, 3, 7).unwrap();
        let b = synth_classification(10, 3, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|s| s.label == 1.0 || s.label == -1.0));
        assert_ne!(a, synth_classification(10, 3, 8).unwrap());
    }

    #[test]
    fn synth_planted_accuracy() {
        let ds = synth_classification(2000, 40, 1).unwrap();
        let w = synth_direction(40, 1);
        let correct = ds
            .samples()
            .iter()
            .filter(|s| {
                let m: f64 = s.features.iter().map(|&(i, v)| v * w[i]).sum();
                (m >= 0.0) == (s.label > 0.0)
            })
            .count();
        assert!(correct as f64 / 2000.0 >= 0.9);
    }

    #[test]
    fn partition_sizes() {
        let ds = synth_classification(10, 2, 0).unwrap();
        let sizes: Vec<usize> = partition(&ds, 5, 1).unwrap().iter().map(NodeShard::m).collect();
        assert_eq!(sizes, vec![2; 5]);
        let sizes: Vec<usize> = partition(&ds, 3, 1).unwrap().iter().map(NodeShard::m).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(partition(&ds, 3, 9).unwrap(), partition(&ds, 3, 9).unwrap());
        assert!(partition(&ds, 11, 1).is_err());
    }

    #[test]
    fn partition_densifies_to_global_dimension() {
        let ds = parse("1 1:1\n-1 4:2\n").unwrap();
        let shards = partition(&ds, 2, 0).unwrap();
        assert!(shards.iter().all(|s| s.d() == 4));
    }

    #[test]
    fn trace_csv_shapes() {
        let mut buf = Vec::new();
        write_trace(&Trace::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{TRACE_HEADER}\n"));

        let mut t = Trace::default();
        t.records.push(TraceRecord { iter: 0, grad_evals: 1, comm_rounds: 1, sq_dist: 2.5, lyapunov: None });
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{TRACE_HEADER}\n0,1,1,2.5,\n"));
        assert_eq!(read_trace(text.as_bytes()).unwrap(), t.records);
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.0, 1.0, -2.5, 1e-20, std::f64::consts::PI, 1.2345e-7, 6.02e23, f64::MIN_POSITIVE] {
            let s = fmt_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_float(1e-20), "1e-20");
    }
}
