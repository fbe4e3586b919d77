use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("malformed encoding: segment {segment} ({gene}) has {ones} ones")]
    MalformedEncoding {
        segment: usize,
        gene: &'static str,
        ones: usize,
    },
    #[error("encoding length must be {expected}, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("invalid option {value:?} for gene {gene}")]
    InvalidOption { gene: &'static str, value: String },
}

macro_rules! gene_enum {
    ($name:ident, $($variant:ident => $label:literal),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|&v| v == self).unwrap()
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn from_label(s: &str) -> Option<Self> {
                match s {
                    $($label => Some($name::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

gene_enum!(Fsm, NoFilter => "no_filter", Mrmr => "mrmr", Pearson => "pearson");
gene_enum!(Fst, T03 => "0.3", T04 => "0.4", T05 => "0.5");
gene_enum!(Dgm, None => "none", Gaussian => "gaussian");
gene_enum!(Sm, None => "none", RevIn => "revin", Dain => "dain");
gene_enum!(Fam, None => "none", TimeFeatures => "time_features");
gene_enum!(
    Fem,
    None => "none",
    LinearEmbed => "linear_embed",
    Decomp => "decomp",
    MultiScaleDecomp => "multi_scale_decomp",
    TimeFeatureMix => "time_feature_mix",
    FreqMix => "freq_mix",
);
gene_enum!(Cps, Lstm => "lstm", Mlp => "mlp", Cnn => "cnn", Tcn => "tcn");
gene_enum!(Ln, L1 => "1", L2 => "2", L3 => "3");
gene_enum!(Hs, H64 => "64", H128 => "128", H256 => "256", H512 => "512");
gene_enum!(Lr, R0005 => "0.0005", R001 => "0.001");
gene_enum!(Of, Adam => "adam", Sgd => "sgd");
gene_enum!(Bs, B32 => "32", B64 => "64");

impl Fst {
    pub fn value(self) -> f64 {
        match self {
            Fst::T03 => 0.3,
            Fst::T04 => 0.4,
            Fst::T05 => 0.5,
        }
    }
}

impl Ln {
    pub fn value(self) -> usize {
        self.index() + 1
    }
}

impl Hs {
    pub fn value(self) -> usize {
        64 << self.index()
    }
}

impl Lr {
    pub fn value(self) -> f64 {
        match self {
            Lr::R0005 => 0.0005,
            Lr::R001 => 0.001,
        }
    }
}

impl Bs {
    pub fn value(self) -> usize {
        match self {
            Bs::B32 => 32,
            Bs::B64 => 64,
        }
    }
}

pub const GENE_COUNT: usize = 12;
pub const GENE_NAMES: [&str; GENE_COUNT] = [
    "fsm", "fst", "dgm", "sm", "fam", "fem", "cps", "ln", "hs", "lr", "of", "bs",
];
pub const OPTION_COUNTS: [usize; GENE_COUNT] = [3, 3, 2, 3, 2, 6, 4, 3, 4, 2, 2, 2];
/// Total one-hot encoding length: 3+3+2+3+2+6+4+3+4+2+2+2.
pub const ENCODING_LEN: usize = 36;

/// The 12-gene architecture description (Table-style search space).
///
/// Canonical form pins `fst` to its first option when `fsm` is `NoFilter`,
/// so equality and hashing ignore the inert threshold gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genotype {
    pub fsm: Fsm,
    pub fst: Fst,
    pub dgm: Dgm,
    pub sm: Sm,
    pub fam: Fam,
    pub fem: Fem,
    pub cps: Cps,
    pub ln: Ln,
    pub hs: Hs,
    pub lr: Lr,
    pub of: Of,
    pub bs: Bs,
}

/// Fixed-length one-hot encoding of a genotype (exactly one 1 per segment).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedGenotype {
    pub bits: [u8; ENCODING_LEN],
}

impl Genotype {
    pub fn to_indices(self) -> [usize; GENE_COUNT] {
        [
            self.fsm.index(),
            self.fst.index(),
            self.dgm.index(),
            self.sm.index(),
            self.fam.index(),
            self.fem.index(),
            self.cps.index(),
            self.ln.index(),
            self.hs.index(),
            self.lr.index(),
            self.of.index(),
            self.bs.index(),
        ]
    }

    pub fn from_indices(idx: [usize; GENE_COUNT]) -> Option<Self> {
        Some(Self {
            fsm: Fsm::from_index(idx[0])?,
            fst: Fst::from_index(idx[1])?,
            dgm: Dgm::from_index(idx[2])?,
            sm: Sm::from_index(idx[3])?,
            fam: Fam::from_index(idx[4])?,
            fem: Fem::from_index(idx[5])?,
            cps: Cps::from_index(idx[6])?,
            ln: Ln::from_index(idx[7])?,
            hs: Hs::from_index(idx[8])?,
            lr: Lr::from_index(idx[9])?,
            of: Of::from_index(idx[10])?,
            bs: Bs::from_index(idx[11])?,
        })
    }

    /// Normalize inert genes so behaviorally identical genotypes compare equal.
    pub fn canonical(mut self) -> Self {
        if self.fsm == Fsm::NoFilter {
            self.fst = Fst::T03;
        }
        self
    }

    pub fn is_canonical(self) -> bool {
        self == self.canonical()
    }

    /// Stable 36-bit key packing the canonical gene indices (3 bits each).
    pub fn key(self) -> u64 {
        let c = self.canonical();
        c.to_indices()
            .iter()
            .fold(0u64, |acc, &i| (acc << 3) | i as u64)
    }

    pub fn encode(self) -> EncodedGenotype {
        let mut bits = [0u8; ENCODING_LEN];
        let mut off = 0;
        for (g, &n) in self.to_indices().iter().zip(&OPTION_COUNTS) {
            bits[off + g] = 1;
            off += n;
        }
        EncodedGenotype { bits }
    }

    pub fn decode(enc: &EncodedGenotype) -> Result<Self, SpaceError> {
        let mut idx = [0usize; GENE_COUNT];
        let mut off = 0;
        for (seg, &n) in OPTION_COUNTS.iter().enumerate() {
            let segment = &enc.bits[off..off + n];
            let ones = segment.iter().filter(|&&b| b == 1).count();
            if ones != 1 {
                return Err(SpaceError::MalformedEncoding {
                    segment: seg,
                    gene: GENE_NAMES[seg],
                    ones,
                });
            }
            idx[seg] = segment.iter().position(|&b| b == 1).unwrap();
            off += n;
        }
        Ok(Self::from_indices(idx).expect("indices validated"))
    }

    /// Encoding as f64 features for the surrogate predictor.
    pub fn features(self) -> [f64; ENCODING_LEN] {
        let enc = self.encode();
        let mut out = [0.0; ENCODING_LEN];
        for (o, &b) in out.iter_mut().zip(&enc.bits) {
            *o = b as f64;
        }
        out
    }
}

/// Subset of the full space: allowed option indices per gene. Used to pin
/// genes for restricted experiments; the full space allows everything.
#[derive(Debug, Clone)]
pub struct SpaceSpec {
    allowed: [Vec<usize>; GENE_COUNT],
}

impl Default for SpaceSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl SpaceSpec {
    pub fn full() -> Self {
        let allowed = std::array::from_fn(|g| (0..OPTION_COUNTS[g]).collect());
        Self { allowed }
    }

    pub fn allowed(&self, gene: usize) -> &[usize] {
        &self.allowed[gene]
    }

    pub fn restrict(&mut self, gene: usize, options: Vec<usize>) {
        assert!(!options.is_empty());
        assert!(options.iter().all(|&o| o < OPTION_COUNTS[gene]));
        self.allowed[gene] = options;
    }

    /// Restrict a gene by name to the given option labels.
    pub fn restrict_labels(&mut self, gene: &str, labels: &[&str]) -> Result<(), SpaceError> {
        let g = GENE_NAMES
            .iter()
            .position(|&n| n == gene)
            .ok_or_else(|| SpaceError::InvalidOption {
                gene: "unknown",
                value: gene.to_string(),
            })?;
        let mut opts = Vec::new();
        for label in labels {
            let idx = gene_label_index(g, label).ok_or_else(|| SpaceError::InvalidOption {
                gene: GENE_NAMES[g],
                value: label.to_string(),
            })?;
            opts.push(idx);
        }
        opts.sort_unstable();
        opts.dedup();
        self.restrict(g, opts);
        Ok(())
    }

    pub fn contains(&self, g: Genotype) -> bool {
        g.to_indices()
            .iter()
            .enumerate()
            .all(|(gene, idx)| self.allowed[gene].contains(idx))
    }

    /// Raw product of allowed option counts (no canonicalization).
    pub fn raw_size(&self) -> u64 {
        self.allowed.iter().map(|a| a.len() as u64).product()
    }

    /// Number of distinct canonical genotypes.
    pub fn canonical_size(&self) -> u64 {
        let fsm = &self.allowed[0];
        let fst_count = self.allowed[1].len() as u64;
        let rest: u64 = self.allowed[2..].iter().map(|a| a.len() as u64).product();
        let filterless = fsm.contains(&0) as u64;
        let filtered = fsm.iter().filter(|&&i| i != 0).count() as u64;
        (filterless + filtered * fst_count) * rest
    }

    /// Enumerate every canonical genotype in the subspace.
    pub fn enumerate(&self) -> Vec<Genotype> {
        let mut out = Vec::new();
        let mut idx = [0usize; GENE_COUNT];
        self.enumerate_rec(0, &mut idx, &mut out);
        out
    }

    fn enumerate_rec(&self, gene: usize, idx: &mut [usize; GENE_COUNT], out: &mut Vec<Genotype>) {
        if gene == GENE_COUNT {
            let g = Genotype::from_indices(*idx).unwrap();
            if g.is_canonical() {
                out.push(g);
            }
            return;
        }
        for &opt in &self.allowed[gene] {
            idx[gene] = opt;
            self.enumerate_rec(gene + 1, idx, out);
        }
    }
}

fn gene_label_index(gene: usize, label: &str) -> Option<usize> {
    match gene {
        0 => Fsm::from_label(label).map(Fsm::index),
        1 => Fst::from_label(label).map(Fst::index),
        2 => Dgm::from_label(label).map(Dgm::index),
        3 => Sm::from_label(label).map(Sm::index),
        4 => Fam::from_label(label).map(Fam::index),
        5 => Fem::from_label(label).map(Fem::index),
        6 => Cps::from_label(label).map(Cps::index),
        7 => Ln::from_label(label).map(Ln::index),
        8 => Hs::from_label(label).map(Hs::index),
        9 => Lr::from_label(label).map(Lr::index),
        10 => Of::from_label(label).map(Of::index),
        11 => Bs::from_label(label).map(Bs::index),
        _ => None,
    }
}

/// Uniform independent choice per gene, canonicalized.
pub fn random_genotype<R: Rng>(space: &SpaceSpec, rng: &mut R) -> Genotype {
    let mut idx = [0usize; GENE_COUNT];
    for g in 0..GENE_COUNT {
        let allowed = space.allowed(g);
        idx[g] = allowed[rng.gen_range(0..allowed.len())];
    }
    Genotype::from_indices(idx).unwrap().canonical()
}

/// Independently resample each gene with probability `p_m` to a uniformly
/// random different allowed option; the result is canonicalized.
pub fn mutate<R: Rng>(g: Genotype, space: &SpaceSpec, p_m: f64, rng: &mut R) -> Genotype {
    assert!((0.0..=1.0).contains(&p_m));
    let mut idx = g.to_indices();
    for gene in 0..GENE_COUNT {
        if rng.gen::<f64>() >= p_m {
            continue;
        }
        let allowed = space.allowed(gene);
        let others: Vec<usize> = allowed.iter().copied().filter(|&o| o != idx[gene]).collect();
        if others.is_empty() {
            continue;
        }
        idx[gene] = others[rng.gen_range(0..others.len())];
    }
    Genotype::from_indices(idx).unwrap().canonical()
}

/// Raw product of Table-space option counts.
pub fn space_size_raw() -> u64 {
    SpaceSpec::full().raw_size()
}

/// Distinct canonical genotypes in the full space.
pub fn space_size_canonical() -> u64 {
    SpaceSpec::full().canonical_size()
}
