"""Context facade bundling params, ring tables, encoder, and keys.

A context created with ``CkksContext.generate`` holds the secret key; its
``public()`` projection drops it and is what travels to the server. Params,
tables, and keys are immutable after creation; only the encryption RNG
advances, and it is owned by whoever drives the context.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContextError
from . import cipher
from .encoder import SlotEncoder
from .keys import PublicKey, RotationKeySet, SecretKey, keygen
from .params import CkksParams
from .ring import RingContext


@dataclass
class CkksContext:
    params: CkksParams
    ring: RingContext = field(repr=False)
    encoder: SlotEncoder = field(repr=False)
    pk: PublicKey = field(repr=False)
    rotation_keys: RotationKeySet = field(repr=False)
    sk: SecretKey | None = field(repr=False, default=None)

    @classmethod
    def generate(cls, params: CkksParams, seed: int) -> "CkksContext":
        ring = RingContext(params)
        sk, pk, rot = keygen(params, seed, ring=ring)
        return cls(
            params=params,
            ring=ring,
            encoder=SlotEncoder(params.ring_degree),
            pk=pk,
            rotation_keys=rot,
            sk=sk,
        )

    @property
    def is_private(self) -> bool:
        return self.sk is not None

    def public(self) -> "CkksContext":
        """Projection safe to ship: same params and keys, no secret key."""
        return CkksContext(
            params=self.params,
            ring=self.ring,
            encoder=self.encoder,
            pk=self.pk,
            rotation_keys=self.rotation_keys,
            sk=None,
        )

    def seed_encryption(self, rng: np.random.Generator) -> None:
        self.pk.rng = rng

    # --- convenience wrappers (free functions carry the real contracts) ---

    def encode(self, values, level: int = 0, scale: float | None = None) -> cipher.Plaintext:
        return cipher.encode(self.ring, self.encoder, values, level, scale or self.params.scale)

    def encode_constant(self, value: float, level: int = 0, scale: float | None = None):
        return cipher.encode_constant(self.ring, value, level, scale or self.params.scale)

    def encrypt(self, values, level: int = 0, scale: float | None = None) -> cipher.Ciphertext:
        return cipher.encrypt(self.pk, self.encode(values, level, scale))

    def decrypt(self, ct: cipher.Ciphertext, count: int | None = None) -> np.ndarray:
        if self.sk is None:
            raise ContextError("public context cannot decrypt")
        return cipher.decrypt(self.sk, ct, self.encoder, count)
