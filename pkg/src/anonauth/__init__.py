"""Group-based zero-knowledge authentication toolkit.

Implements the round-based quadratic-residue identification protocol,
the group key ceremony, the two-way anonymous authentication session,
distributed revocation, the executable attack models, and the hardened
polynomial variant, plus the probability analysis and a deterministic
discrete-event road-network simulation.
"""

__version__ = "0.1.0"
