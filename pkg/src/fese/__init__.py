"""Error-tolerant searchable encryption over binary templates.

Near-match retrieval on an encrypted index: bit-sampling LSH composed
with tag-storing Bloom buckets, ElGamal-encrypted bucket contents,
privacy-graded transports, and a biometric identification layer on top.
"""

from .bloom import (
    BucketedFilter,
    CompositeFamily,
    bfs_add,
    bfs_lookup,
    bucket_hash,
    element_indices,
    full_threshold,
    group_threshold,
    intersection_bounds,
    membership_fp_probability,
)
from .crypto import (
    Ciphertext,
    DlogTable,
    PrimeOrderGroup,
    SecretShares,
    combine_shares,
    discrete_log_small,
    eg_decrypt,
    eg_encrypt,
    eg_mul,
    eg_pow,
    eg_rerandomize,
    get_group,
    payload_decrypt,
    payload_encrypt,
    split_secret,
)
from .identification import (
    Candidate,
    EnrolledUser,
    ExperimentConfig,
    ExperimentReport,
    IdentificationResult,
    IdentityRegistry,
    enroll,
    identify,
    run_experiment,
)
from .lsh import (
    BitSamplingFamily,
    SeparationEstimate,
    analytic_collision_prob,
    build_family,
    estimate_eps,
)
from .protocol import (
    PublicBundle,
    SchemeClient,
    SchemeFrameHandler,
    SchemeParams,
    SecretBundle,
    ServerState,
    capture_view,
    local_client,
    scheme_keygen,
)
from .templates import (
    BinaryTemplate,
    MatchThresholds,
    hamming_distance,
    perturb_bsc,
    perturb_exact,
    random_template,
)

__version__ = "0.1.0"
