"""Block-Markov coordination codec.

The encoder processes k blocks of length n.  In each block it builds the
polarized signal vector S (frozen common-randomness fill on a1, local
randomness on the free part of a2, chained pad-encrypted bits from the
previous block on ap3/bp3, successive-cancellation draws elsewhere), sends
x = transform(S) through the channel, then builds the polarized auxiliary
vector Z with evidence (x of this block, source block of the previous
index).  The strictly causal contract holds by data flow: x of block i
depends only on randomness and source blocks 0..i-1.

The decoder works in reverse block order: chained positions of block i are
recovered from the already-decoded block i+1 (the final block's arrive over
a lossless side channel), the rest by hard successive-cancellation
decisions, and the action V is sampled symbol by symbol from the action
rule applied to the reconstructed auxiliary and the channel output.

Coordination statistics pair the source block of index i-1 with the signal
block i: that tuple follows the single-letter model when the scheme works,
and only the first signal block (driven by the dummy uniform source block)
plus the final source block fall outside the guarantee, a vanishing
fraction as k grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .construction import PolarIndexSets, SourceModel, rate_report
from .polar import SuccessiveCancellation, polar_transform
from .probability import Alphabet, JointPMF, marginalize, mutual_information

__all__ = [
    "CommonRandomness",
    "BlockTranscript",
    "SideChannelPayload",
    "EncodedBlock",
    "DecodedBlock",
    "TrialResult",
    "one_time_pad",
    "encode",
    "transmit",
    "decode",
    "run_end_to_end",
    "empirical_mutual_information",
    "chi_square_conditional",
]


def one_time_pad(bits, key) -> np.ndarray:
    """Bitwise XOR; involutive, uniform output for a uniform key."""
    bits = np.asarray(bits, dtype=np.uint8)
    key = np.asarray(key, dtype=np.uint8)
    if bits.shape != key.shape:
        raise ValueError(f"pad length mismatch: {bits.shape} vs {key.shape}")
    return bits ^ key


@dataclass(frozen=True)
class CommonRandomness:
    """Shared uniform randomness: per-block frozen fills c (a1-sized) and
    c_prime (b1 minus bp1), the block-reused fill c_bar (bp1-sized), and the
    k-1 pad keys keys_s (a3-sized) / keys_z (b3-sized) linking consecutive
    blocks."""

    c: np.ndarray
    c_prime: np.ndarray
    c_bar: np.ndarray
    keys_s: np.ndarray
    keys_z: np.ndarray

    @classmethod
    def draw(cls, sets: PolarIndexSets, k: int, rng: np.random.Generator) -> "CommonRandomness":
        if k < 2:
            raise ValueError("the chaining construction needs k >= 2 blocks")
        n_rest = len(sets.b1) - len(sets.bp1)
        return cls(
            c=rng.integers(0, 2, (k, len(sets.a1)), dtype=np.uint8),
            c_prime=rng.integers(0, 2, (k, n_rest), dtype=np.uint8),
            c_bar=rng.integers(0, 2, len(sets.bp1), dtype=np.uint8),
            keys_s=rng.integers(0, 2, (k - 1, len(sets.a3)), dtype=np.uint8),
            keys_z=rng.integers(0, 2, (k - 1, len(sets.b3)), dtype=np.uint8),
        )

    def validate(self, sets: PolarIndexSets, k: int):
        expect = {
            "c": (k, len(sets.a1)),
            "c_prime": (k, len(sets.b1) - len(sets.bp1)),
            "c_bar": (len(sets.bp1),),
            "keys_s": (k - 1, len(sets.a3)),
            "keys_z": (k - 1, len(sets.b3)),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"common randomness field {name} has shape {got}, expected {shape}")

    @property
    def total_bits(self) -> int:
        return self.c.size + self.c_prime.size + self.c_bar.size + self.keys_s.size + self.keys_z.size


@dataclass(frozen=True)
class SideChannelPayload:
    """Final-block chained bits delivered over the lossless side channel."""

    s_last_a3: np.ndarray
    z_last_b3: np.ndarray


@dataclass(frozen=True)
class EncodedBlock:
    s: np.ndarray
    z: np.ndarray
    x: np.ndarray
    w: np.ndarray


@dataclass(frozen=True)
class DecodedBlock:
    s_hat: np.ndarray
    z_hat: np.ndarray
    x_hat: np.ndarray
    w_hat: np.ndarray
    v: np.ndarray
    flags: dict


@dataclass(frozen=True)
class BlockTranscript:
    """Everything about one signal block; ``u`` is the source block paired
    with it for coordination (the block of the previous index)."""

    u: np.ndarray
    s: np.ndarray
    z: np.ndarray
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    v: np.ndarray
    flags: dict

    def __post_init__(self):
        if not np.array_equal(self.x, polar_transform(self.s)):
            raise ValueError("x must be the transform of s")
        if not np.array_equal(self.w, polar_transform(self.z)):
            raise ValueError("w must be the transform of z")


# role codes for the per-bit fill maps
_DRAW, _THRESH, _SRC = 0, 1, 2


def _fill_map(n: int, sources: dict[int, np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """role[j]: _DRAW or an offset into the concatenated source list;
    sources maps a source id to the (sorted) index array it fills."""
    role = np.full(n, -1, dtype=np.int64)
    src = np.full(n, -1, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    for sid, idx in sources.items():
        role[idx] = _SRC
        src[idx] = sid
        pos[idx] = np.arange(len(idx))
    return role, src, pos


def _sc_pass(leaf_p1, role, src, pos, tables, decide):
    """One successive-cancellation pass: known positions are pushed from
    ``tables[src]``, the rest produced by ``decide(p1)``."""
    n = len(leaf_p1)
    sc = SuccessiveCancellation(leaf_p1)
    out = np.empty(n, dtype=np.uint8)
    for j in range(n):
        if role[j] == _SRC:
            bit = int(tables[src[j]][pos[j]])
        else:
            bit = decide(sc.next_probability())
        sc.push(bit)
        out[j] = bit
    return out


class _Maps:
    """Precomputed fill maps for the four pass kinds."""

    def __init__(self, sets: PolarIndexSets):
        n = sets.n
        self.b1_rest = np.setdiff1d(sets.b1, sets.bp1)
        self.s_first = _fill_map(n, {0: sets.a1, 1: sets.a2})
        self.s_rest = _fill_map(n, {0: sets.a1, 1: sets.ap2, 2: sets.ap3, 3: sets.bp3})
        self.z_enc = _fill_map(n, {0: sets.bp1, 1: self.b1_rest})
        self.s_dec = _fill_map(n, {0: sets.a1, 1: sets.a3})
        self.z_dec = _fill_map(n, {0: sets.bp1, 1: self.b1_rest, 2: sets.b3})


def encode(
    u_blocks: np.ndarray,
    sets: PolarIndexSets,
    cr: CommonRandomness,
    model: SourceModel,
    rng: np.random.Generator,
) -> tuple[list[EncodedBlock], SideChannelPayload]:
    """Run the chaining encoder over k blocks.

    ``u_blocks`` has shape (k+1, n): row 0 is the uniform dummy source
    block, rows 1..k the source.  Returns the per-block polarized vectors
    and the final-block side-channel payload.
    """
    u_blocks = np.asarray(u_blocks, dtype=np.uint8)
    k = u_blocks.shape[0] - 1
    n = sets.n
    if k < 2:
        raise ValueError("the chaining construction needs k >= 2 blocks (plus the dummy)")
    if u_blocks.shape[1] != n:
        raise ValueError(f"u blocks must have length {n}")
    cr.validate(sets, k)
    maps = _Maps(sets)
    p_x1 = float(model.x_prior.table[1])
    leaf_prior = np.full(n, p_x1)
    wxu = model.w_given_xu()

    def draw(p1: float) -> int:
        return int(rng.random() < p1)

    blocks: list[EncodedBlock] = []
    pad_s = pad_z = None
    for i in range(1, k + 1):
        if i == 1:
            local = rng.integers(0, 2, len(sets.a2), dtype=np.uint8)
            role, src, pos = maps.s_first
            tables = [cr.c[0], local]
        else:
            local = rng.integers(0, 2, len(sets.ap2), dtype=np.uint8)
            role, src, pos = maps.s_rest
            tables = [cr.c[i - 1], local, pad_s, pad_z]
        s = _sc_pass(leaf_prior, role, src, pos, tables, draw)
        x = polar_transform(s)

        leaf_z = wxu[x, u_blocks[i - 1]]
        role, src, pos = maps.z_enc
        z = _sc_pass(leaf_z, role, src, pos, [cr.c_bar, cr.c_prime[i - 1]], draw)
        w = polar_transform(z)
        blocks.append(EncodedBlock(s=s, z=z, x=x, w=w))

        if i < k:
            pad_s = one_time_pad(s[sets.a3], cr.keys_s[i - 1])
            pad_z = one_time_pad(z[sets.b3], cr.keys_z[i - 1])

    payload = SideChannelPayload(
        s_last_a3=blocks[-1].s[sets.a3].copy(), z_last_b3=blocks[-1].z[sets.b3].copy()
    )
    return blocks, payload


def transmit(x: np.ndarray, channel, rng: np.random.Generator) -> np.ndarray:
    """Memoryless per-symbol transmission of one block."""
    x = np.asarray(x, dtype=np.intp)
    cdf = np.cumsum(channel.table, axis=-1)
    cdf[..., -1] = 1.0
    u = rng.random(len(x))
    return (u[:, None] > cdf[x]).sum(axis=1).astype(np.uint8)


def decode(
    y_blocks: np.ndarray,
    payload: SideChannelPayload,
    sets: PolarIndexSets,
    cr: CommonRandomness,
    model: SourceModel,
    rng: np.random.Generator,
    truth: list[EncodedBlock] | None = None,
) -> list[DecodedBlock]:
    """Reverse-order decoder; per-block success flags are filled against
    ``truth`` when available (instrumentation only)."""
    y_blocks = np.asarray(y_blocks, dtype=np.uint8)
    k = y_blocks.shape[0]
    cr.validate(sets, k)
    if payload.s_last_a3.shape != (len(sets.a3),) or payload.z_last_b3.shape != (len(sets.b3),):
        raise ValueError(
            f"payload sizes {payload.s_last_a3.shape}/{payload.z_last_b3.shape} do not "
            f"match |a3|={len(sets.a3)}, |b3|={len(sets.b3)}"
        )
    maps = _Maps(sets)
    xpost = model.x_posterior_given_y()
    wx = model.w_given_x()
    v_cdf = np.cumsum(model.v_rule.aligned_table(("W", "Y")), axis=-1)
    v_cdf[..., -1] = 1.0

    def hard(p1: float) -> int:
        return 0 if p1 <= 0.5 else 1  # likelihood ratio >= 1 decides 0

    out: list[DecodedBlock | None] = [None] * k
    next_s_hat = None
    for i in range(k, 0, -1):
        if i == k:
            s_chain = payload.s_last_a3
            z_chain = payload.z_last_b3
        else:
            s_chain = one_time_pad(next_s_hat[sets.ap3], cr.keys_s[i - 1])
            z_chain = one_time_pad(next_s_hat[sets.bp3], cr.keys_z[i - 1])

        role, src, pos = maps.s_dec
        s_hat = _sc_pass(xpost[y_blocks[i - 1]], role, src, pos, [cr.c[i - 1], s_chain], hard)
        x_hat = polar_transform(s_hat)

        role, src, pos = maps.z_dec
        z_hat = _sc_pass(wx[x_hat], role, src, pos, [cr.c_bar, cr.c_prime[i - 1], z_chain], hard)
        w_hat = polar_transform(z_hat)

        v = (rng.random(sets.n)[:, None] > v_cdf[w_hat, y_blocks[i - 1]]).sum(axis=1).astype(np.uint8)

        flags = {}
        if truth is not None:
            flags["s_ok"] = bool(np.array_equal(s_hat, truth[i - 1].s))
            flags["z_ok"] = bool(np.array_equal(z_hat, truth[i - 1].z))
        out[i - 1] = DecodedBlock(s_hat=s_hat, z_hat=z_hat, x_hat=x_hat, w_hat=w_hat, v=v, flags=flags)
        next_s_hat = s_hat
    return out


# ---------------------------------------------------------------------------
# statistics helpers


def empirical_mutual_information(
    codes_a: np.ndarray, codes_b: np.ndarray, size_a: int, size_b: int, corrected: bool = True
) -> float:
    """Plug-in mutual information (bits) of two paired integer code arrays,
    with the first-order (Miller-Madow) bias correction subtracted by
    default and the result clamped at zero."""
    counts = np.zeros((size_a, size_b))
    np.add.at(counts, (np.asarray(codes_a, dtype=np.intp), np.asarray(codes_b, dtype=np.intp)), 1.0)
    total = counts.sum()
    if total == 0:
        return 0.0
    joint = JointPMF((Alphabet("A", size_a), Alphabet("B", size_b)), counts / total)
    value = mutual_information(joint, ["A"], ["B"])
    if corrected:
        occ_a = int((counts.sum(axis=1) > 0).sum())
        occ_b = int((counts.sum(axis=0) > 0).sum())
        occ_ab = int((counts > 0).sum())
        value -= max(occ_ab - occ_a - occ_b + 1, 0) / (2.0 * float(total) * math.log(2.0))
    return max(float(value), 0.0)


def chi_square_conditional(
    given_codes: np.ndarray, out_codes: np.ndarray, rule: np.ndarray
) -> tuple[float, int]:
    """Goodness-of-fit statistic of empirical out|given samples against the
    conditional ``rule`` (shape: given-cells x out-size).

    Returns (statistic, degrees of freedom); zero-probability cells must be
    empty (they contribute +inf otherwise), deterministic rows contribute
    no degrees of freedom.
    """
    cells, out_size = rule.shape
    counts = np.zeros((cells, out_size))
    np.add.at(counts, (np.asarray(given_codes, dtype=np.intp), np.asarray(out_codes, dtype=np.intp)), 1.0)
    stat = 0.0
    dof = 0
    for c in range(cells):
        m = counts[c].sum()
        if m == 0:
            continue
        for v in range(out_size):
            p = rule[c, v]
            if p == 0.0:
                if counts[c, v] > 0:
                    return float("inf"), dof
                continue
            stat += (counts[c, v] - m * p) ** 2 / (m * p)
        free = int((rule[c] > 0).sum()) - 1
        dof += max(free, 0)
    return float(stat), dof


# ---------------------------------------------------------------------------
# end-to-end runs


@dataclass(frozen=True)
class TrialResult:
    """One seeded end-to-end run; spec'd CSV columns plus the transcripts."""

    n: int
    k: int
    seed: int
    s_error_rate: float
    w_error_rate: float
    tv_estimate: float
    mi_consecutive: float
    cr_rate: float
    side_rate: float
    transcripts: list[BlockTranscript] = field(repr=False)

    CSV_FIELDS = (
        "n", "k", "seed", "s_error_rate", "w_error_rate",
        "tv_estimate", "mi_consecutive", "cr_rate", "side_rate",
    )

    def csv_row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]


def _tuple_codes(u, x, y, v, sizes) -> np.ndarray:
    code = u.astype(np.intp)
    for arr, s in ((x, sizes["X"]), (y, sizes["Y"]), (v, sizes["V"])):
        code = code * s + arr.astype(np.intp)
    return code


def run_end_to_end(
    model: SourceModel,
    sets: PolarIndexSets,
    k: int,
    seed: int,
) -> TrialResult:
    """Full pipeline for one seed: draw randomness, encode, transmit,
    decode, and collect coordination statistics over the k-1 guaranteed
    block pairings."""
    n = sets.n
    ss = np.random.SeedSequence(seed).spawn(4)
    rng_cr, rng_enc, rng_ch, rng_dec = (np.random.default_rng(s) for s in ss)

    cr = CommonRandomness.draw(sets, k, rng_cr)
    u_blocks = np.empty((k + 1, n), dtype=np.uint8)
    u_size = model.sizes["U"]
    u_blocks[0] = rng_enc.integers(0, u_size, n)  # uniform dummy block
    cdf_u = np.cumsum(model.u_prior.table)
    cdf_u[-1] = 1.0
    u_blocks[1:] = (rng_enc.random((k, n))[:, :, None] > cdf_u[None, None, :]).sum(axis=2)

    enc, payload = encode(u_blocks, sets, cr, model, rng_enc)
    y_blocks = np.stack([transmit(b.x, model.channel, rng_ch) for b in enc])
    dec = decode(y_blocks, payload, sets, cr, model, rng_dec, truth=enc)

    transcripts = [
        BlockTranscript(
            u=u_blocks[i], s=enc[i].s, z=enc[i].z, x=enc[i].x, w=enc[i].w,
            y=y_blocks[i], v=dec[i].v, flags=dict(dec[i].flags),
        )
        for i in range(k)
    ]

    s_err = float(np.mean([0.0 if d.flags["s_ok"] else 1.0 for d in dec]))
    w_err = float(np.mean([0.0 if d.flags["z_ok"] else 1.0 for d in dec]))

    sizes = model.sizes
    tuple_size = sizes["U"] * sizes["X"] * sizes["Y"] * sizes["V"]
    # coordinated single letters: source block i-1 with signal block i, i = 2..k
    codes = [
        _tuple_codes(u_blocks[i - 1], enc[i - 1].x, y_blocks[i - 1], dec[i - 1].v, sizes)
        for i in range(2, k + 1)
    ]
    counts = np.zeros(tuple_size)
    np.add.at(counts, np.concatenate(codes), 1.0)
    hist = counts / counts.sum()
    target = marginalize(model.single_letter_joint(), ["U", "X", "Y", "V"]).table.reshape(-1)
    tv = float(np.abs(hist - target).sum())

    if len(codes) >= 2:
        a = np.concatenate(codes[:-1])
        b = np.concatenate(codes[1:])
        mi = empirical_mutual_information(a, b, tuple_size, tuple_size)
    else:
        mi = 0.0

    rates = rate_report(sets, k)
    return TrialResult(
        n=n, k=k, seed=seed,
        s_error_rate=s_err, w_error_rate=w_err,
        tv_estimate=tv, mi_consecutive=mi,
        cr_rate=rates.common_randomness_rate, side_rate=rates.side_channel_rate,
        transcripts=transcripts,
    )
