"""Clinical note search: chunking, vector index, note store and statistics."""

from ._core import (
    AnnIndex,
    Engine,
    Error,
    FormatError,
    InvalidArgument,
    NotFound,
    NoteStore,
    UndefinedStatistic,
    chunk_note,
    cohens_kappa,
    count_chunks,
    decode_row_key,
    fleiss_kappa,
    krippendorff_alpha_interval,
    majority_vote,
    make_chunk_id,
    make_row_key,
    mann_whitney_u,
    reference_embed,
    tokenize,
    wilson_ci,
)

__all__ = [
    "AnnIndex",
    "Engine",
    "Error",
    "FormatError",
    "InvalidArgument",
    "NotFound",
    "NoteStore",
    "UndefinedStatistic",
    "chunk_note",
    "cohens_kappa",
    "count_chunks",
    "decode_row_key",
    "fleiss_kappa",
    "krippendorff_alpha_interval",
    "majority_vote",
    "make_chunk_id",
    "make_row_key",
    "mann_whitney_u",
    "reference_embed",
    "tokenize",
    "wilson_ci",
]
