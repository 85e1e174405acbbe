//! Dataset ingestion, label scaling, normalization, partitioning and
//! synthetic generation.
//!
//! A dataset is an immutable CSR block of sparse rows plus labels. Rows are
//! numbered `0..len`; feature indices are 0-based internally and 1-based in
//! the text format. Training code expects datasets in *scaled* form: each
//! feature vector multiplied by its label and shrunk so the Euclidean norm is
//! at most 1. [`load_sparse_text`] returns raw data and
//! [`normalize_and_scale`] produces the scaled form; synthetic generators
//! emit scaled data directly.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, salt};

/// One sparse labeled example. Feature indices are 0-based, strictly
/// increasing, with no explicit zeros stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub label: i8,
    pub features: Vec<(u32, f64)>,
}

impl Example {
    pub fn new(label: i8, features: Vec<(u32, f64)>) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::InvalidArgument(format!(
                "label must be +1 or -1, got {label}"
            )));
        }
        for w in features.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidArgument(
                    "feature indices must be strictly increasing".into(),
                ));
            }
        }
        if features.iter().any(|&(_, v)| v == 0.0) {
            return Err(Error::InvalidArgument("zero feature values are not stored".into()));
        }
        Ok(Self { label, features })
    }

    pub fn norm(&self) -> f64 {
        self.features.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }
}

/// Borrowed view of one dataset row.
#[derive(Debug, Clone, Copy)]
pub struct ExampleRef<'a> {
    pub label: i8,
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl ExampleRef<'_> {
    /// Inner product with a dense vector.
    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&j, &v) in self.indices.iter().zip(self.values) {
            acc += v * w[j as usize];
        }
        acc
    }

    /// `out += coeff * x`.
    #[inline]
    pub fn add_scaled(&self, coeff: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j as usize] += coeff * v;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Inner product of two sparse rows (merge join on sorted indices).
pub fn sparse_dot(a: ExampleRef<'_>, b: ExampleRef<'_>) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a.values[i] * b.values[j];
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Immutable sparse dataset in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<i8>,
}

impl Dataset {
    /// Assembles a dataset from rows. `dim_override` must cover the largest
    /// stored index; `None` infers the dimension from the data.
    pub fn from_examples(examples: &[Example], dim_override: Option<usize>) -> Result<Self> {
        let max_dim = examples
            .iter()
            .flat_map(|e| e.features.last())
            .map(|&(j, _)| j as usize + 1)
            .max()
            .unwrap_or(0);
        let dim = match dim_override {
            Some(d) if d < max_dim => {
                return Err(Error::InvalidArgument(format!(
                    "dim override {d} is below the largest stored index ({max_dim})"
                )))
            }
            Some(d) => d,
            None => max_dim,
        };
        let mut offsets = Vec::with_capacity(examples.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::with_capacity(examples.len());
        offsets.push(0);
        for e in examples {
            for &(j, v) in &e.features {
                indices.push(j);
                values.push(v);
            }
            offsets.push(indices.len());
            labels.push(e.label);
        }
        Ok(Self { dim, offsets, indices, values, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn example(&self, i: usize) -> ExampleRef<'_> {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        ExampleRef {
            label: self.labels[i],
            indices: &self.indices[lo..hi],
            values: &self.values[lo..hi],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ExampleRef<'_>> {
        (0..self.len()).map(|i| self.example(i))
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.len()).map(|i| self.example(i).norm()).fold(0.0, f64::max)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Fraction of stored entries over `len * dim`.
    pub fn density(&self) -> f64 {
        if self.is_empty() || self.dim == 0 {
            0.0
        } else {
            self.nnz() as f64 / (self.len() as f64 * self.dim as f64)
        }
    }

    /// Serializes in the sparse text format (1-based indices). Values print
    /// as the shortest decimal that parses back to the same bits, so a
    /// write/read round trip is exact.
    pub fn to_sparse_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let e = self.example(i);
            let _ = write!(out, "{:+}", e.label);
            for (&j, &v) in e.indices.iter().zip(e.values) {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_sparse_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_sparse_text())?;
        Ok(())
    }

    /// Stable content hash (used to key cached reference optima).
    pub fn content_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for i in 0..self.len() {
            let e = self.example(i);
            h.update([e.label as u8]);
            for (&j, &v) in e.indices.iter().zip(e.values) {
                h.update(j.to_le_bytes());
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Options for [`load_sparse_text`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Map labels 0/1 to -1/+1 (common in public binary datasets).
    pub map_binary_aliases: bool,
    /// Force the dimension instead of inferring it from the largest index.
    pub dim_override: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { map_binary_aliases: true, dim_override: None }
    }
}

/// Parses "<label> <idx>:<val> ..." lines; 1-based, strictly increasing
/// indices. Explicit zero values are dropped. Blank lines are ignored.
pub fn parse_sparse_text(text: &str, opts: &LoadOptions) -> Result<Dataset> {
    let mut examples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let raw: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("unparseable label {label_tok:?}"),
        })?;
        let label = if raw == 1.0 {
            1
        } else if raw == -1.0 || (raw == 0.0 && opts.map_binary_aliases) {
            -1
        } else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("label {label_tok} is not in {{-1,+1}}"),
            });
        };
        let mut features: Vec<(u32, f64)> = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: u64 = idx_s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index {idx_s:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature value {val_s:?}"),
            })?;
            let idx = (idx - 1) as u32;
            if let Some(&(prev, _)) = features.last() {
                if idx <= prev {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("indices not strictly increasing at {}", idx + 1),
                    });
                }
            }
            if val != 0.0 {
                features.push((idx, val));
            }
        }
        examples.push(Example { label, features });
    }
    Dataset::from_examples(&examples, opts.dim_override)
}

pub fn load_sparse_text(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_sparse_text(&text, opts)
}

/// Multiplies each feature vector by its label and divides by
/// `max(1, norm)`, so every scaled row has Euclidean norm at most 1.
/// Already-compliant rows are left untouched; zero rows stay zero. Labels
/// are retained for evaluation.
pub fn normalize_and_scale(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    for i in 0..out.len() {
        let (lo, hi) = (out.offsets[i], out.offsets[i + 1]);
        let norm = out.values[lo..hi].iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = f64::from(out.labels[i]) / norm.max(1.0);
        for v in &mut out.values[lo..hi] {
            *v *= scale;
        }
    }
    out
}

/// Disjoint assignment of row indices to nodes. Every block has exactly
/// `floor(N/m)` entries; the remainder rows are unassigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<u32>>,
}

impl Partition {
    /// One block holding `0..n` in natural order (the single-node case).
    pub fn trivial(n: usize) -> Self {
        Self { blocks: vec![(0..n as u32).collect()] }
    }

    pub fn nodes(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, node: usize) -> &[u32] {
        &self.blocks[node]
    }

    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.blocks
    }

    pub fn block_len(&self) -> usize {
        self.blocks.first().map_or(0, Vec::len)
    }
}

/// Chunks a seeded uniform permutation of `0..N` into `m` blocks of
/// `floor(N/m)`; surplus rows are dropped so node loads are identical.
/// Blocks are sorted ascending (sampling within a node treats the block as a
/// set, and sorted blocks make the m=1 case coincide with the unpartitioned
/// dataset).
pub fn partition_uniform(dataset: &Dataset, m: usize, seed: u64) -> Result<Partition> {
    let n = dataset.len();
    if m == 0 {
        return Err(Error::InvalidArgument("node count must be at least 1".into()));
    }
    if m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot partition {n} examples across {m} nodes"
        )));
    }
    let mut perm: Vec<u32> = (0..n as u32).collect();
    let mut rng = rng::stream(&[seed, salt::PARTITION]);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let per = n / m;
    let blocks = (0..m)
        .map(|b| {
            let mut block: Vec<u32> = perm[b * per..(b + 1) * per].to_vec();
            block.sort_unstable();
            block
        })
        .collect();
    Ok(Partition { blocks })
}

/// What a synthetic generator produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Isotropic Gaussian vectors labeled by a random separating hyperplane,
    /// then scaled and normalized. Low covariance spectral norm (~1/d).
    GaussianHyperplane,
    /// Cycles through `base` random unit vectors; every emitted point is a
    /// copy of one of them. Rank-deficient, high covariance spectral norm.
    DuplicatedSample { base: usize },
    /// Cycles through the first `support` standard basis vectors. The
    /// empirical covariance is exactly `I/support` on the support whenever
    /// `support` divides N, so the spectral norm is exactly `1/support`.
    OrthogonalBlock { support: usize },
    /// Sparse rows sharing a common direction of weight `alpha` plus an
    /// individual sparse component of weight `1 - alpha` on a disjoint
    /// support of `nnz` coordinates. Covariance spectral norm ~ alpha with a
    /// dominant eigendirection, mimicking sparse text corpora.
    SpikedSparse { alpha: f64, nnz: usize },
}

/// Recipe for a synthetic dataset or an unbounded sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    /// `None` selects streaming mode.
    pub size: Option<usize>,
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub seed: u64,
}

/// Result of [`synth`].
pub enum SynthOutput {
    Finite(Dataset),
    Stream(SampleStream),
}

/// Generates the dataset described by `spec`, or a deterministic unbounded
/// stream when `spec.size` is `None`.
pub fn synth(spec: &SyntheticSpec) -> Result<SynthOutput> {
    let stream = SampleStream::new(spec)?;
    match spec.size {
        Some(n) => Ok(SynthOutput::Finite(stream.prefix(n)?)),
        None => Ok(SynthOutput::Stream(stream)),
    }
}

/// Materializes `spec` (which must be finite).
pub fn synth_finite(spec: &SyntheticSpec) -> Result<Dataset> {
    match synth(spec)? {
        SynthOutput::Finite(d) => Ok(d),
        SynthOutput::Stream(_) => {
            Err(Error::InvalidArgument("spec is streaming, expected a finite size".into()))
        }
    }
}

/// Counter-based deterministic sample source: `example(i)` is a pure
/// function of `(spec.seed, salt, i)`, so any prefix replays exactly and
/// parallel consumers can draw disjoint index ranges without coordination.
#[derive(Debug, Clone)]
pub struct SampleStream {
    dim: usize,
    kind: GeneratorKind,
    seed: u64,
    hyperplane: Vec<f64>,
    /// Pre-built deterministic pieces: duplicated-sample base points or the
    /// spiked common direction.
    fixed: Vec<Example>,
}

impl SampleStream {
    pub fn new(spec: &SyntheticSpec) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        match spec.kind {
            GeneratorKind::DuplicatedSample { base: 0 } => {
                return Err(Error::InvalidArgument("base point count must be positive".into()))
            }
            GeneratorKind::OrthogonalBlock { support } if support == 0 || support > spec.dim => {
                return Err(Error::InvalidArgument(
                    "support must be in 1..=dim for orthogonal-block".into(),
                ))
            }
            GeneratorKind::SpikedSparse { alpha, nnz } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidArgument("alpha must be in [0,1]".into()));
                }
                if nnz == 0 || 2 * nnz > spec.dim {
                    return Err(Error::InvalidArgument(
                        "spiked-sparse needs 0 < nnz and 2*nnz <= dim".into(),
                    ));
                }
            }
            _ => {}
        }

        let mut this = Self {
            dim: spec.dim,
            kind: spec.kind,
            seed: spec.seed,
            hyperplane: Vec::new(),
            fixed: Vec::new(),
        };

        match spec.kind {
            GeneratorKind::GaussianHyperplane
            | GeneratorKind::DuplicatedSample { .. }
            | GeneratorKind::SpikedSparse { .. } => {
                let mut r = rng::stream(&[spec.seed, salt::SYNTH, 0xb1a5]);
                let mut h: Vec<f64> =
                    (0..spec.dim).map(|_| r.sample(StandardNormal)).collect();
                let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in &mut h {
                    *v /= norm;
                }
                this.hyperplane = h;
            }
            GeneratorKind::OrthogonalBlock { .. } => {}
        }

        match spec.kind {
            GeneratorKind::DuplicatedSample { base } => {
                this.fixed =
                    (0..base as u64).map(|j| this.gaussian_example(0xba5e, j)).collect();
            }
            GeneratorKind::SpikedSparse { nnz, .. } => {
                // Common direction on coordinates 0..nnz; per-example noise
                // lives on the remaining coordinates, so the two parts are
                // exactly orthogonal and every row has unit norm.
                let mut r = rng::stream(&[spec.seed, salt::SYNTH, 0x5b1c]);
                let mut feats: Vec<(u32, f64)> = (0..nnz as u32)
                    .map(|c| {
                        let v: f64 = r.sample(StandardNormal);
                        (c, v)
                    })
                    .collect();
                let norm = feats.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
                for (_, v) in &mut feats {
                    *v /= norm;
                }
                this.fixed = vec![Example { label: 1, features: feats }];
            }
            _ => {}
        }
        Ok(this)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Random sparse unit vector: `nnz` distinct coordinates drawn from
    /// `reserve..dim`, Gaussian values, normalized. Coordinates below
    /// `reserve` are excluded (used to keep noise disjoint from the spike).
    fn sparse_unit(&self, tag: u64, index: u64, nnz: usize, reserve: usize) -> Example {
        let mut r = rng::stream(&[self.seed, salt::SYNTH, tag, index]);
        let range = self.dim - reserve;
        debug_assert!(nnz <= range);
        let mut coords = Vec::with_capacity(nnz);
        while coords.len() < nnz {
            let c = (reserve + r.gen_range(0..range)) as u32;
            if !coords.contains(&c) {
                coords.push(c);
            }
        }
        coords.sort_unstable();
        let mut feats: Vec<(u32, f64)> = coords
            .into_iter()
            .map(|c| {
                let v: f64 = r.sample(StandardNormal);
                (c, v)
            })
            .collect();
        let norm = feats.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut feats {
                *v /= norm;
            }
        }
        Example { label: 1, features: feats }
    }

    /// Dense Gaussian example labeled by the hyperplane, scaled + normalized.
    fn gaussian_example(&self, tag: u64, index: u64) -> Example {
        let mut r = rng::stream(&[self.seed, salt::SYNTH, tag, index]);
        let g: Vec<f64> = (0..self.dim).map(|_| r.sample(StandardNormal)).collect();
        let margin: f64 = g.iter().zip(&self.hyperplane).map(|(a, b)| a * b).sum();
        let label: i8 = if margin >= 0.0 { 1 } else { -1 };
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = f64::from(label) / norm.max(1.0);
        let features = g
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0)
            .map(|(j, &v)| (j as u32, v * scale))
            .collect();
        Example { label, features }
    }

    /// The `i`-th example of the stream (salt 0).
    pub fn example(&self, i: u64) -> Example {
        self.example_salted(0, i)
    }

    /// The `i`-th example of the sub-stream identified by `extra_salt`.
    /// Distinct salts give independent streams from the same seed (training
    /// draws vs. a held-out evaluation prefix).
    pub fn example_salted(&self, extra_salt: u64, i: u64) -> Example {
        let key = rng::mix(&[extra_salt, i]);
        match self.kind {
            GeneratorKind::GaussianHyperplane => self.gaussian_example(0x6a55, key),
            GeneratorKind::DuplicatedSample { base } => {
                self.fixed[(i % base as u64) as usize].clone()
            }
            GeneratorKind::OrthogonalBlock { support } => {
                let j = (i % support as u64) as u32;
                Example { label: 1, features: vec![(j, 1.0)] }
            }
            GeneratorKind::SpikedSparse { alpha, nnz } => {
                let spike = &self.fixed[0];
                let noise = self.sparse_unit(0xd1f5, key, nnz, nnz);
                let mut feats: Vec<(u32, f64)> = Vec::with_capacity(spike.features.len() + nnz);
                let (sa, sb) = (alpha.sqrt(), (1.0 - alpha).sqrt());
                let (mut p, mut q) = (0, 0);
                while p < spike.features.len() || q < noise.features.len() {
                    let take_spike = match (spike.features.get(p), noise.features.get(q)) {
                        (Some(&(a, _)), Some(&(b, _))) => {
                            if a == b {
                                feats.push((a, sa * spike.features[p].1 + sb * noise.features[q].1));
                                p += 1;
                                q += 1;
                                continue;
                            }
                            a < b
                        }
                        (Some(_), None) => true,
                        (None, Some(_)) => false,
                        (None, None) => break,
                    };
                    if take_spike {
                        feats.push((spike.features[p].0, sa * spike.features[p].1));
                        p += 1;
                    } else {
                        feats.push((noise.features[q].0, sb * noise.features[q].1));
                        q += 1;
                    }
                }
                let norm = feats.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
                let margin: f64 =
                    feats.iter().map(|&(j, v)| v * self.hyperplane[j as usize]).sum();
                let label: i8 = if margin >= 0.0 { 1 } else { -1 };
                let scale = f64::from(label) / norm.max(1.0);
                let feats = feats
                    .into_iter()
                    .filter(|&(_, v)| v != 0.0)
                    .map(|(j, v)| (j, v * scale))
                    .collect();
                Example { label, features: feats }
            }
        }
    }

    /// Materializes examples `0..n` (salt 0) into a dataset.
    pub fn prefix(&self, n: usize) -> Result<Dataset> {
        self.prefix_salted(0, n)
    }

    pub fn prefix_salted(&self, extra_salt: u64, n: usize) -> Result<Dataset> {
        let examples: Vec<Example> =
            (0..n as u64).map(|i| self.example_salted(extra_salt, i)).collect();
        Dataset::from_examples(&examples, Some(self.dim))
    }
}

impl std::str::FromStr for SyntheticSpec {
    type Err = Error;

    /// Compact CLI syntax: `kind:key=value,...`, e.g.
    /// `gaussian:d=100,n=10000,seed=7`,
    /// `orthoblock:d=100,support=50,n=10000`,
    /// `dup:d=50,base=5,n=2000,seed=1`,
    /// `spiked:d=20000,nnz=20,alpha=0.015,n=2000`.
    /// `n=stream` (or omitting `n`) selects streaming mode.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(msg);
        let (kind_s, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut dim = None;
        let mut size: Option<usize> = None;
        let mut streaming = true;
        let mut seed = 0u64;
        let mut alpha = None;
        let mut nnz = None;
        let mut base = None;
        let mut support = None;
        for kv in rest.split(',').filter(|t| !t.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {kv:?}")))?;
            match k {
                "d" | "dim" => dim = Some(v.parse().map_err(|_| bad(format!("bad dim {v:?}")))?),
                "n" | "size" => {
                    if v == "stream" {
                        streaming = true;
                    } else {
                        size = Some(v.parse().map_err(|_| bad(format!("bad size {v:?}")))?);
                        streaming = false;
                    }
                }
                "seed" => seed = v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?,
                "alpha" => alpha = Some(v.parse().map_err(|_| bad(format!("bad alpha {v:?}")))?),
                "nnz" => nnz = Some(v.parse().map_err(|_| bad(format!("bad nnz {v:?}")))?),
                "base" => base = Some(v.parse().map_err(|_| bad(format!("bad base {v:?}")))?),
                "support" => {
                    support = Some(v.parse().map_err(|_| bad(format!("bad support {v:?}")))?)
                }
                _ => return Err(bad(format!("unknown synth key {k:?}"))),
            }
        }
        let dim = dim.ok_or_else(|| bad("synth spec needs d=<dim>".into()))?;
        let kind = match kind_s {
            "gaussian" => GeneratorKind::GaussianHyperplane,
            "dup" | "duplicated" => GeneratorKind::DuplicatedSample {
                base: base.ok_or_else(|| bad("dup needs base=<count>".into()))?,
            },
            "orthoblock" | "orthogonal-block" => GeneratorKind::OrthogonalBlock {
                support: support.unwrap_or(dim),
            },
            "spiked" => GeneratorKind::SpikedSparse {
                alpha: alpha.ok_or_else(|| bad("spiked needs alpha=<mass>".into()))?,
                nnz: nnz.ok_or_else(|| bad("spiked needs nnz=<count>".into()))?,
            },
            other => return Err(bad(format!("unknown generator kind {other:?}"))),
        };
        Ok(SyntheticSpec { dim, size: if streaming { None } else { size }, kind, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        parse_sparse_text("+1 3:0.5\n-1 1:1.0\n", &LoadOptions::default()).unwrap()
    }

    #[test]
    fn parses_basic_file() {
        let d = toy();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 3);
        assert_eq!(d.example(0).label, 1);
        assert_eq!(d.example(0).indices, &[2]);
        assert_eq!(d.example(1).values, &[1.0]);
    }

    #[test]
    fn empty_file_is_a_valid_empty_dataset() {
        let d = parse_sparse_text("", &LoadOptions::default()).unwrap();
        assert_eq!(d.len(), 0);
        assert_eq!(d.dim(), 0);
    }

    #[test]
    fn zero_one_labels_map_to_signs() {
        let d = parse_sparse_text("0 1:2.0\n1 1:3.0\n", &LoadOptions::default()).unwrap();
        assert_eq!(d.example(0).label, -1);
        assert_eq!(d.example(1).label, 1);

        let strict = LoadOptions { map_binary_aliases: false, ..Default::default() };
        assert!(parse_sparse_text("0 1:2.0\n", &strict).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_sparse_text("+1 1:0.5\n-1 oops\n", &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_sparse_text("+1 2:0.5 2:0.3\n", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_sparse_text("+3 1:0.5\n", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = SyntheticSpec {
            dim: 40,
            size: Some(25),
            kind: GeneratorKind::GaussianHyperplane,
            seed: 11,
        };
        let d = synth_finite(&spec).unwrap();
        let text = d.to_sparse_text();
        let opts = LoadOptions { map_binary_aliases: false, dim_override: Some(40) };
        let back = parse_sparse_text(&text, &opts).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn scaling_flips_sign_and_caps_norm() {
        let d = parse_sparse_text("-1 2:2.0\n", &LoadOptions::default()).unwrap();
        let s = normalize_and_scale(&d);
        assert_eq!(s.example(0).values, &[-1.0]);
        assert!((s.example(0).norm() - 1.0).abs() < 1e-15);

        // Unit-norm positive example is untouched.
        let d = parse_sparse_text("+1 1:0.6 2:0.8\n", &LoadOptions::default()).unwrap();
        let s = normalize_and_scale(&d);
        assert_eq!(s.example(0).values, &[0.6, 0.8]);
    }

    #[test]
    fn all_norms_bounded_after_scaling() {
        let spec = SyntheticSpec {
            dim: 30,
            size: Some(200),
            kind: GeneratorKind::GaussianHyperplane,
            seed: 3,
        };
        let d = synth_finite(&spec).unwrap();
        assert!(d.max_norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn label_scaling_twice_restores_signs() {
        let text = "+1 1:0.3 4:-0.2\n-1 2:0.9 3:0.1\n";
        let raw = parse_sparse_text(text, &LoadOptions::default()).unwrap();
        let twice = normalize_and_scale(&normalize_and_scale(&raw));
        for i in 0..raw.len() {
            for (a, b) in raw.example(i).values.iter().zip(twice.example(i).values) {
                assert_eq!(a.signum(), b.signum());
            }
        }
    }

    #[test]
    fn partition_shapes_and_determinism() {
        let spec = SyntheticSpec {
            dim: 5,
            size: Some(6),
            kind: GeneratorKind::GaussianHyperplane,
            seed: 1,
        };
        let d = synth_finite(&spec).unwrap();
        let p = partition_uniform(&d, 3, 7).unwrap();
        assert_eq!(p.nodes(), 3);
        let mut all: Vec<u32> = p.blocks().iter().flatten().copied().collect();
        assert_eq!(all.len(), 6);
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 6, "blocks must be disjoint");
        for b in p.blocks() {
            assert_eq!(b.len(), 2);
        }

        let p2 = partition_uniform(&d, 3, 7).unwrap();
        assert_eq!(p, p2);

        let single = partition_uniform(&d, 1, 9).unwrap();
        assert_eq!(single.block(0), &[0, 1, 2, 3, 4, 5]);

        assert!(partition_uniform(&d, 7, 0).is_err());
    }

    #[test]
    fn surplus_rows_are_dropped() {
        let spec = SyntheticSpec {
            dim: 4,
            size: Some(10),
            kind: GeneratorKind::OrthogonalBlock { support: 4 },
            seed: 0,
        };
        let d = synth_finite(&spec).unwrap();
        let p = partition_uniform(&d, 3, 1).unwrap();
        assert_eq!(p.blocks().iter().map(Vec::len).sum::<usize>(), 9);
    }

    #[test]
    fn duplicated_sample_repeats_base_points() {
        let spec = SyntheticSpec {
            dim: 8,
            size: Some(9),
            kind: GeneratorKind::DuplicatedSample { base: 3 },
            seed: 5,
        };
        let d = synth_finite(&spec).unwrap();
        for i in 0..d.len() {
            let twin = d.example(i % 3);
            let e = d.example(i);
            assert_eq!(e.indices, twin.indices);
            assert_eq!(e.values, twin.values);
        }
    }

    #[test]
    fn stream_prefixes_replay_exactly() {
        let spec = SyntheticSpec {
            dim: 16,
            size: None,
            kind: GeneratorKind::GaussianHyperplane,
            seed: 21,
        };
        let s = match synth(&spec).unwrap() {
            SynthOutput::Stream(s) => s,
            SynthOutput::Finite(_) => panic!("expected stream"),
        };
        let a = s.prefix(100).unwrap();
        let b = s.prefix(100).unwrap();
        assert_eq!(a, b);
        let short = s.prefix(50).unwrap();
        for i in 0..50 {
            assert_eq!(a.example(i).values, short.example(i).values);
        }
        // Distinct salts give distinct streams.
        let c = s.prefix_salted(1, 10).unwrap();
        assert_ne!(a.example(0).values, c.example(0).values);
    }

    #[test]
    fn spiked_rows_share_the_common_direction() {
        let spec = SyntheticSpec {
            dim: 400,
            size: Some(50),
            kind: GeneratorKind::SpikedSparse { alpha: 0.5, nnz: 5 },
            seed: 2,
        };
        let d = synth_finite(&spec).unwrap();
        assert!(d.max_norm() <= 1.0 + 1e-12);
        // Spike and noise supports are disjoint, so |<x_i, x_j>| is alpha
        // plus a small noise-overlap term.
        let mut min_corr: f64 = f64::INFINITY;
        let mut max_corr: f64 = 0.0;
        for i in 0..10 {
            for j in (i + 1)..10 {
                let dot = sparse_dot(d.example(i), d.example(j)).abs();
                min_corr = min_corr.min(dot);
                max_corr = max_corr.max(dot);
            }
        }
        assert!(min_corr > 0.3, "spike correlation missing: {min_corr}");
        assert!(max_corr < 0.9, "rows collapsed onto the spike: {max_corr}");
    }

    #[test]
    fn synth_spec_parses_from_cli_syntax() {
        let s: SyntheticSpec = "gaussian:d=100,n=1000,seed=7".parse().unwrap();
        assert_eq!(s.dim, 100);
        assert_eq!(s.size, Some(1000));
        assert_eq!(s.seed, 7);
        let s: SyntheticSpec = "orthoblock:d=100,support=50,n=stream".parse().unwrap();
        assert_eq!(s.size, None);
        assert!(matches!(s.kind, GeneratorKind::OrthogonalBlock { support: 50 }));
        assert!("spiked:d=10".parse::<SyntheticSpec>().is_err());
    }
}
