"""GF(2) polarization transform and successive-cancellation machinery.

The transform is multiplication by the m-fold Kronecker power of
``[[1,0],[1,1]]`` **without** bit reversal; in this convention the transform
is its own inverse and the recursion splits a block into the sub-systems
attached to the odd- and even-indexed leaves:

    bits   (b_1, ..., b_n)        leaves (x_1, ..., x_n)
    v_i = b_{2i-1} ^ b_{2i}   polarizes the odd-indexed leaves
    w_i = b_{2i}              polarizes the even-indexed leaves

Given independent per-leaf distributions (the "evidence": a prior or a
per-symbol posterior), the conditional law P(b_j | b^{j-1}, evidence) is
computed exactly by the standard pairwise combine rules.  Two drivers are
provided: a sequential one that interleaves probability queries with bit
decisions (for encoding/decoding), and a batched vectorized one that runs
along known bit paths (for Monte-Carlo entropy estimation).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "polar_transform",
    "SuccessiveCancellation",
    "true_path_conditionals",
    "sc_probability_x",
    "sc_probability_w",
]

_CLIP = 1e-20


def _require_power_of_two(n: int):
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"length must be a power of 2, got {n}")


def polar_transform(bits) -> np.ndarray:
    """Multiply the trailing axis by the Kronecker-power kernel over GF(2).

    Accepts any integer array whose last axis is a power of 2; the
    transform is an involution and GF(2)-linear.
    """
    x = np.array(bits, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    _require_power_of_two(n)
    shape = x.shape
    x = x.reshape(-1, n)
    span = n
    while span > 1:
        v = x.reshape(x.shape[0], n // span, span)
        v[..., : span // 2] ^= v[..., span // 2 :]
        span //= 2
    return x.reshape(shape)


def _combine_odd(pv, pw):
    # P(v ^ w = 1) for independent bits with P(=1) = pv, pw
    return pv * (1.0 - pw) + (1.0 - pv) * pw


def _combine_even(pv, pw, odd_bit):
    # P(w = 1 | v ^ w = odd_bit) up to normalization
    pv_match1 = pv if odd_bit == 0 else 1.0 - pv  # P(v = odd_bit ^ 1)
    num = pv_match1 * pw
    den = num + (1.0 - pv_match1) * (1.0 - pw)
    return num / den


class _Node:
    """One sub-system of the SC recursion: knows P(next bit | pushed prefix)."""

    __slots__ = ("size", "p1", "odd_child", "even_child", "_pv", "_pw", "_odd_bit", "_parity")

    def __init__(self, p1: np.ndarray):
        self.size = len(p1)
        if self.size == 1:
            self.p1 = float(p1[0])
            self.odd_child = self.even_child = None
        else:
            self.p1 = 0.0
            self.odd_child = _Node(p1[0::2])
            self.even_child = _Node(p1[1::2])
        self._pv = None
        self._pw = None
        self._odd_bit = 0
        self._parity = 0  # 0: next bit is the odd member of its pair

    def _fetch_pair(self):
        if self._pv is None:
            self._pv = self.odd_child.next_probability()
            self._pw = self.even_child.next_probability()

    def next_probability(self) -> float:
        if self.size == 1:
            return self.p1
        self._fetch_pair()
        if self._parity == 0:
            return _combine_odd(self._pv, self._pw)
        return _combine_even(self._pv, self._pw, self._odd_bit)

    def push(self, bit: int):
        if self.size == 1:
            return
        if self._parity == 0:
            self._odd_bit = bit
            self._parity = 1
        else:
            self._fetch_pair()  # children must advance even when never queried
            self.odd_child.push(self._odd_bit ^ bit)
            self.even_child.push(bit)
            self._pv = self._pw = None
            self._parity = 0


class SuccessiveCancellation:
    """Sequential successive-cancellation pass over one block.

    ``leaf_p1[i]`` is P(leaf_i = 1) under the per-symbol evidence.  Call
    :meth:`next_probability` for P(next bit = 1 | bits pushed so far), then
    :meth:`push` with the chosen bit; frozen positions may be pushed without
    querying.
    """

    def __init__(self, leaf_p1):
        p1 = np.clip(np.asarray(leaf_p1, dtype=np.float64), _CLIP, 1.0 - _CLIP)
        _require_power_of_two(len(p1))
        self.n = len(p1)
        self._root = _Node(p1)
        self._consumed = 0

    def next_probability(self) -> float:
        if self._consumed >= self.n:
            raise IndexError("all bits already pushed")
        p = self._root.next_probability()
        return min(max(p, _CLIP), 1.0 - _CLIP)

    def push(self, bit: int):
        if self._consumed >= self.n:
            raise IndexError("all bits already pushed")
        self._root.push(int(bit) & 1)
        self._consumed += 1


def true_path_conditionals(leaf_p1: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Vectorized P(bit_j = 1 | true prefix, evidence) for whole blocks.

    leaf_p1, bits: arrays of shape (batch, n); returns the same shape.
    Equivalent to running :class:`SuccessiveCancellation` along each row's
    known bit path, but batched.
    """
    p1 = np.clip(np.asarray(leaf_p1, dtype=np.float64), _CLIP, 1.0 - _CLIP)
    bits = np.asarray(bits, dtype=np.uint8)
    if p1.shape != bits.shape:
        raise ValueError(f"shape mismatch: {p1.shape} vs {bits.shape}")
    _require_power_of_two(p1.shape[-1])
    return _true_path(p1, bits)


def _true_path(p1, bits):
    n = p1.shape[-1]
    if n == 1:
        return p1.copy()
    odd = bits[:, 0::2]
    even = bits[:, 1::2]
    pv = _true_path(p1[:, 0::2], odd ^ even)
    pw = _true_path(p1[:, 1::2], even)
    out = np.empty_like(p1)
    out[:, 0::2] = pv * (1.0 - pw) + (1.0 - pv) * pw
    pv_match1 = np.where(odd == 0, pv, 1.0 - pv)
    num = pv_match1 * pw
    out[:, 1::2] = num / (num + (1.0 - pv_match1) * (1.0 - pw))
    return np.clip(out, _CLIP, 1.0 - _CLIP)


# ---------------------------------------------------------------------------
# single-index conditional queries on a source model


def _prefix_probability(leaf_p1, prefix) -> float:
    sc = SuccessiveCancellation(leaf_p1)
    for b in prefix:
        sc.push(b)
    return sc.next_probability()


def sc_probability_x(j: int, s_prefix, model, n: int | None = None, y_obs=None) -> float:
    """P(S_j = 1 | S^{j-1} = s_prefix [, Y^n = y_obs]) for the polarized
    signal chain of ``model`` (a :class:`coordsim.construction.SourceModel`).

    Without an observation the per-leaf evidence is the signal prior (and
    the block length ``n`` must be given); with one it is the per-symbol
    posterior through the channel.  ``j`` is the 1-based bit index and must
    equal ``len(s_prefix) + 1``.
    """
    if j != len(s_prefix) + 1:
        raise ValueError("j must point just past the supplied prefix")
    if y_obs is None:
        if n is None:
            raise ValueError("block length n is required when no observation is given")
        leaf = np.full(n, model.x_prior.table[1])
    else:
        leaf = model.x_posterior_given_y()[np.asarray(y_obs, dtype=np.intp)]
    return _prefix_probability(leaf, s_prefix)


def sc_probability_w(j: int, z_prefix, model, x, u=None, y=None, v=None) -> float:
    """P(Z_j = 1 | Z^{j-1} = z_prefix, side information) for the polarized
    auxiliary chain of ``model``.

    Side information forms: ``x`` alone (evidence P(w|x)); ``x`` and ``u``
    (evidence P(w|x,u)); ``x, u, y, v`` all present (full posterior).
    """
    x = np.asarray(x, dtype=np.intp)
    n = len(x)
    _require_power_of_two(n)
    if j != len(z_prefix) + 1:
        raise ValueError("j must point just past the supplied prefix")
    if u is None:
        leaf = model.w_given_x()[x]
    elif y is None and v is None:
        leaf = model.w_given_xu()[x, np.asarray(u, dtype=np.intp)]
    elif y is not None and v is not None:
        leaf = model.w_posterior_full()[
            np.asarray(u, dtype=np.intp), x, np.asarray(y, dtype=np.intp), np.asarray(v, dtype=np.intp)
        ]
    else:
        raise ValueError("side information must be x | (x,u) | (x,u,y,v)")
    return _prefix_probability(leaf, z_prefix)
