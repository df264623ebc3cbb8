//! Samples, batches, and sources of fresh batches.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::KernelSpec;

/// One `(x, y)` pair: a context vector and an outcome in the kernel's domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Sample { x, y }
    }
}

/// A batch of samples with an identifier recorded in patch provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub id: u64,
    pub samples: Vec<Sample>,
}

impl Batch {
    pub fn new(id: u64, samples: Vec<Sample>) -> Self {
        Batch { id, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Something that hands out fresh, disjoint batches.
pub trait SampleSource {
    fn next_batch(&mut self, n: usize) -> Result<Batch>;
}

/// A finite dataset consumed front to back in disjoint chunks.
#[derive(Debug, Clone)]
pub struct VecSource {
    samples: Vec<Sample>,
    cursor: usize,
    next_id: u64,
}

impl VecSource {
    pub fn new(samples: Vec<Sample>) -> Self {
        VecSource { samples, cursor: 0, next_id: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.samples.len() - self.cursor
    }
}

impl SampleSource for VecSource {
    fn next_batch(&mut self, n: usize) -> Result<Batch> {
        if n > self.remaining() {
            return Err(Error::DataExhausted { requested: n, available: self.remaining() });
        }
        let samples = self.samples[self.cursor..self.cursor + n].to_vec();
        self.cursor += n;
        let id = self.next_id;
        self.next_id += 1;
        Ok(Batch::new(id, samples))
    }
}

pub fn validate_samples(kernel: &KernelSpec, samples: &[Sample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        kernel
            .check_outcome(&s.y)
            .map_err(|e| invalid(format!("sample {i}: {e}")))?;
        if s.x.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("sample {i}: non-finite context")));
        }
    }
    Ok(())
}

/// Writes samples as CSV with columns `x0..x{p-1}, y0..y{d-1}`.
pub fn write_csv<W: Write>(writer: W, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let (p, d) = samples.first().map(|s| (s.x.len(), s.y.len())).unwrap_or((0, 0));
    let header: Vec<String> = (0..p).map(|i| format!("x{i}")).chain((0..d).map(|i| format!("y{i}"))).collect();
    w.write_record(&header)?;
    for s in samples {
        if s.x.len() != p || s.y.len() != d {
            return Err(invalid("samples have inconsistent dimensions"));
        }
        w.write_record(s.x.iter().chain(&s.y).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format produced by [`write_csv`].
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let p = header.iter().filter(|h| h.starts_with('x')).count();
    let d = header.iter().filter(|h| h.starts_with('y')).count();
    if p + d != header.len() {
        return Err(invalid("dataset header must contain only x<i> and y<j> columns"));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let vals = record
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| invalid(format!("bad number {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(Sample::new(vals[..p].to_vec(), vals[p..].to_vec()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_source_hands_out_disjoint_batches() {
        let samples: Vec<Sample> = (0..5).map(|i| Sample::new(vec![i as f64], vec![0.1])).collect();
        let mut src = VecSource::new(samples);
        let a = src.next_batch(2).unwrap();
        let b = src.next_batch(2).unwrap();
        assert_eq!(a.samples[0].x, vec![0.0]);
        assert_eq!(b.samples[0].x, vec![2.0]);
        assert_ne!(a.id, b.id);
        assert!(matches!(src.next_batch(2), Err(Error::DataExhausted { requested: 2, available: 1 })));
    }

    #[test]
    fn csv_round_trip() {
        let samples = vec![
            Sample::new(vec![0.25, 1.0], vec![0.1]),
            Sample::new(vec![0.5, -3.5], vec![0.123456789012345]),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &samples).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, samples);
    }
}
