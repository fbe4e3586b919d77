//! The 12-gene architecture space: genotypes, one-hot encoding, sampling,
//! mutation, and assembly of a genotype into a trainable model.

mod assemble;
mod genotype;

pub use assemble::{assemble, assemble_with_mask, AssembledModel, TaskSpec};
pub use genotype::{
    mutate, random_genotype, space_size_canonical, space_size_raw, Bs, Cps, Dgm, EncodedGenotype,
    Fam, Fem, Fsm, Fst, Genotype, Hs, Ln, Lr, Of, Sm, SpaceError, SpaceSpec, ENCODING_LEN,
    GENE_COUNT, GENE_NAMES, OPTION_COUNTS,
};
