"""Secrecy analysis for running-key ciphers with imperfect key streams.

Models plaintext and key as stationary ergodic Markov sources, applies a
symbol-wise running-key cipher, and quantifies what the ciphertext reveals:
exact posteriors over all plaintexts, equivocation-rate brackets, typical
deciphering sets with their mass and growth exponents, concentration
experiments, and certified closed-form secrecy lower bounds.
"""

from .cipher import CipherSpec, additive_cipher, decrypt, encrypt, encrypt_stream
from .errors import (
    CertificationError,
    ConvergenceError,
    EnumerationCapError,
    InvalidDistributionError,
    ModelFormatError,
    NotErgodicError,
    RunkeyError,
    StateCapError,
    UnsupportedCipherError,
)
from .inference import (
    DEFAULT_STATE_CAP,
    DEFAULT_WORD_CAP,
    EntropyBracket,
    PosteriorTable,
    hm_conditional,
    hxz_bracket,
    hz_bracket,
    joint_log2_table,
    log2sumexp,
    log_marginal_forward,
    posterior,
    z_block_entropies,
)
from .secrecy import (
    ConcentrationReport,
    DEFAULT_MEMBER_CAP,
    GrowthPoint,
    SecrecyReport,
    TypicalSet,
    build_typical_set,
    certify_bounds,
    concentration_experiment,
    robustness_sweep,
    typical_set_growth,
)
from .sources import (
    DEFAULT_BLOCK_CAP,
    SourceModel,
    entropy_bits,
    load_model,
    make_bernoulli,
    make_markov,
    make_uniform,
    save_model,
    stationary_distribution,
    train_markov,
    xlog2x,
)
from .words import (
    as_word,
    bytes_to_symbols,
    index_to_word,
    symbols_to_bytes,
    text_to_word,
    word_to_index,
    word_to_text,
)

__version__ = "0.1.0"

__all__ = [
    "CipherSpec",
    "CertificationError",
    "ConcentrationReport",
    "ConvergenceError",
    "DEFAULT_BLOCK_CAP",
    "DEFAULT_MEMBER_CAP",
    "DEFAULT_STATE_CAP",
    "DEFAULT_WORD_CAP",
    "EntropyBracket",
    "EnumerationCapError",
    "GrowthPoint",
    "InvalidDistributionError",
    "ModelFormatError",
    "NotErgodicError",
    "PosteriorTable",
    "RunkeyError",
    "SecrecyReport",
    "SourceModel",
    "StateCapError",
    "TypicalSet",
    "UnsupportedCipherError",
    "additive_cipher",
    "as_word",
    "build_typical_set",
    "bytes_to_symbols",
    "certify_bounds",
    "concentration_experiment",
    "decrypt",
    "encrypt",
    "encrypt_stream",
    "entropy_bits",
    "hm_conditional",
    "hxz_bracket",
    "hz_bracket",
    "index_to_word",
    "joint_log2_table",
    "load_model",
    "log2sumexp",
    "log_marginal_forward",
    "make_bernoulli",
    "make_markov",
    "make_uniform",
    "posterior",
    "robustness_sweep",
    "save_model",
    "stationary_distribution",
    "symbols_to_bytes",
    "text_to_word",
    "train_markov",
    "typical_set_growth",
    "word_to_index",
    "word_to_text",
    "xlog2x",
    "z_block_entropies",
]
