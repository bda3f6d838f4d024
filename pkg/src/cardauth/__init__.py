"""Card-based authentication model at desk scale.

A study artifact, not a security product: MD5 hashing, a hand-rolled RC4
variant and unpadded small-prime RSA are all deliberately period-faithful
and unsafe for real use.
"""

from .authmsg import (
    AuthMessage,
    FreshnessWindow,
    SignatureBlock,
    build_auth_message,
    compute_outh_code,
    derive_message_key,
    derive_secret_key,
    hash_h,
    open_signature,
    seal_auth_message,
    sign_message,
    verify_auth_message,
    verify_freshness,
)
from .cards import (
    PrivateCard,
    PublicCard,
    decrypt_private_card,
    encrypt_private_card,
    generate_pin,
    parse_card,
    serialize_card,
)
from .errors import AuthRejected, CardauthError, UnreadableSignature
from .protocol import AuthServer, ClientActor, Envelope, ServerConfig
from .rc4pr import (
    StateTable,
    count_subkeys,
    ksa,
    keystream,
    pr_permute,
    rc4_apply,
    rc4pr_apply,
    subkey_at,
)
from .rsa import (
    RsaKeyBundle,
    RsaPrivateKey,
    RsaPublicKey,
    decrypt_bytes,
    decrypt_int,
    encrypt_bytes,
    encrypt_int,
    generate_keypair,
    generate_keypair_random,
    is_prime,
    mod_inverse,
    mod_pow,
)
from .simnet import EventLog, Network, Scenario, SimClock, World, run_scenario

__version__ = "0.1.0"
