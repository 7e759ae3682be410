"""Leveled RNS-CKKS over real slot vectors.

Exactly the operations the split-training protocol needs: encode/encrypt,
ciphertext and plaintext addition/subtraction, plaintext multiplication
with rescale, level drops, slot rotation, and slot sums.
"""

from .params import CkksParams, make_params, generate_prime_chain, find_ntt_prime
from .ring import RingContext
from .encoder import SlotEncoder
from .keys import SecretKey, PublicKey, RotationKeySet, keygen
from .cipher import (
    Ciphertext,
    Plaintext,
    add,
    add_plain,
    decode,
    decrypt,
    decrypt_coeffs,
    encode,
    encode_constant,
    encrypt,
    mod_switch,
    mul_const,
    mul_plain,
    mul_plain_rescale,
    rescale,
    rotate,
    slot_sum,
    sub,
    sub_plain,
)
from .context import CkksContext
from .serialize import (
    ct_byte_size,
    deserialize_ct,
    deserialize_public_context,
    serialize_ct,
    serialize_public_context,
    serialize_secret_key,
)

__all__ = [
    "CkksParams",
    "make_params",
    "generate_prime_chain",
    "find_ntt_prime",
    "RingContext",
    "SlotEncoder",
    "SecretKey",
    "PublicKey",
    "RotationKeySet",
    "keygen",
    "Ciphertext",
    "Plaintext",
    "CkksContext",
    "add",
    "add_plain",
    "sub",
    "sub_plain",
    "mul_plain",
    "mul_const",
    "mul_plain_rescale",
    "rescale",
    "mod_switch",
    "rotate",
    "slot_sum",
    "encode",
    "encode_constant",
    "decode",
    "encrypt",
    "decrypt",
    "decrypt_coeffs",
    "serialize_ct",
    "deserialize_ct",
    "ct_byte_size",
    "serialize_public_context",
    "deserialize_public_context",
    "serialize_secret_key",
]
