from .cascade import (
    RATIO,
    TOP_K,
    MatchCandidate,
    PairMatches,
    brute_force_match,
    candidate_mask,
    euclidean_rows,
    match_pair,
    rank_candidates,
)
from .lsh import HashCodeSet, HashFunctions, compute_codes, hamming, make_hash_functions, pack_bits
from .matchio import (
    matches_bytes,
    matches_text,
    parse_matches_bytes,
    read_matches_binary,
    read_matches_text,
    write_matches_binary,
    write_matches_text,
)

__all__ = [
    "RATIO",
    "TOP_K",
    "HashCodeSet",
    "HashFunctions",
    "MatchCandidate",
    "PairMatches",
    "brute_force_match",
    "candidate_mask",
    "compute_codes",
    "euclidean_rows",
    "hamming",
    "make_hash_functions",
    "match_pair",
    "matches_bytes",
    "matches_text",
    "pack_bits",
    "parse_matches_bytes",
    "rank_candidates",
    "read_matches_binary",
    "read_matches_text",
    "write_matches_binary",
    "write_matches_text",
]
