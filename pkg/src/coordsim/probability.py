"""Exact probability arithmetic on labeled finite-alphabet dense tables.

Conventions used throughout the package:

* All logarithms are base 2; every information quantity is in bits.
* ``0 * log 0 == 0``.
* Total variation is the **unnormalized** L1 distance ``sum(|p - q|)`` with
  range [0, 2].  This is the convention under which the coupling inequality
  ``V(P_A, P_A') <= 2 P{A != A'}`` and the entropy-continuity bound
  ``|H(P) - H(P')| <= eps * log2(|A| / eps)`` (valid for eps <= 1/2) hold
  simultaneously.  Use :func:`tv_halved` for the [0, 1] convention.
* KL divergence returns ``math.inf`` when the support of ``p`` is not
  contained in the support of ``q``.

Tables are dense; the product of alphabet sizes is capped at ``CELL_CAP``
cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CELL_CAP",
    "NORMALIZATION_TOL",
    "Alphabet",
    "JointPMF",
    "ConditionalPMF",
    "marginalize",
    "compose",
    "condition",
    "entropy",
    "conditional_entropy",
    "mutual_information",
    "total_variation",
    "tv_halved",
    "kl_divergence",
    "sample",
    "binary_entropy",
]

CELL_CAP = 10**6
NORMALIZATION_TOL = 1e-12

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class Alphabet:
    """A named finite alphabet; symbols are the indices 0..size-1."""

    name: str
    size: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("alphabet name must be nonempty")
        if self.size < 1:
            raise ValueError(f"alphabet {self.name!r} must have size >= 1, got {self.size}")


def _check_cells(axes: Sequence[Alphabet]):
    cells = math.prod(a.size for a in axes) if axes else 1
    if cells > CELL_CAP:
        raise ValueError(f"table would have {cells} cells, exceeding the cap of {CELL_CAP}")


def _check_unique(names: Iterable[str]):
    names = list(names)
    if len(set(names)) != len(names):
        raise ValueError(f"axis labels must be unique, got {names}")


class JointPMF:
    """A joint pmf over an ordered product of labeled alphabets."""

    def __init__(self, axes: Sequence[Alphabet], table: np.ndarray):
        axes = tuple(axes)
        _check_unique(a.name for a in axes)
        _check_cells(axes)
        table = np.asarray(table, dtype=np.float64)
        if table.shape != tuple(a.size for a in axes):
            raise ValueError(
                f"table shape {table.shape} does not match axes {[(a.name, a.size) for a in axes]}"
            )
        if np.any(table < 0):
            raise ValueError("pmf entries must be nonnegative")
        total = float(table.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"pmf must sum to 1 within {NORMALIZATION_TOL}, got {total!r}")
        self.axes = axes
        self.table = table
        self.table.flags.writeable = False

    # -- constructors ------------------------------------------------------

    @classmethod
    def uniform(cls, axes: Sequence[Alphabet]) -> "JointPMF":
        shape = tuple(a.size for a in axes)
        return cls(axes, np.full(shape, 1.0 / math.prod(shape)))

    @classmethod
    def product(cls, *factors: "JointPMF") -> "JointPMF":
        """Independent product of joint pmfs over disjoint axis sets."""
        axes = tuple(a for f in factors for a in f.axes)
        table = factors[0].table
        for f in factors[1:]:
            table = np.multiply.outer(table, f.table)
        return cls(axes, table)

    # -- helpers -----------------------------------------------------------

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis_index(self, name: str) -> int:
        try:
            return self.axis_names.index(name)
        except ValueError:
            raise KeyError(f"unknown axis label {name!r}; have {self.axis_names}") from None

    def _resolve(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.axis_index(n) for n in names)

    def __repr__(self):
        spec = ", ".join(f"{a.name}:{a.size}" for a in self.axes)
        return f"JointPMF({spec})"

    def allclose(self, other: "JointPMF", atol: float = 1e-12) -> bool:
        return self.axis_names == other.axis_names and np.allclose(
            self.table, other.table, rtol=0.0, atol=atol
        )

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "axes": [{"name": a.name, "size": a.size} for a in self.axes],
            "table": self.table.reshape(-1).tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "JointPMF":
        axes = tuple(Alphabet(a["name"], int(a["size"])) for a in d["axes"])
        shape = tuple(a.size for a in axes)
        return cls(axes, np.array(d["table"], dtype=np.float64).reshape(shape))

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def loads(cls, s: str) -> "JointPMF":
        return cls.from_json_dict(json.loads(s))


class ConditionalPMF:
    """A conditional pmf: one unit-normalized row over ``out_axes`` per
    assignment of ``given_axes``.

    Rows whose conditioning assignment had zero mass in the source joint are
    filled uniformly and recorded in ``zero_rows`` (tuples of given-axis
    symbols) so that downstream composition stays well-defined.
    """

    def __init__(
        self,
        given_axes: Sequence[Alphabet],
        out_axes: Sequence[Alphabet],
        table: np.ndarray,
        zero_rows: frozenset[tuple[int, ...]] = frozenset(),
    ):
        given_axes = tuple(given_axes)
        out_axes = tuple(out_axes)
        _check_unique([a.name for a in given_axes] + [a.name for a in out_axes])
        _check_cells(given_axes + out_axes)
        table = np.asarray(table, dtype=np.float64)
        shape = tuple(a.size for a in given_axes) + tuple(a.size for a in out_axes)
        if table.shape != shape:
            raise ValueError(f"table shape {table.shape} does not match {shape}")
        if np.any(table < 0):
            raise ValueError("conditional pmf entries must be nonnegative")
        out_dims = tuple(range(len(given_axes), len(shape)))
        sums = table.sum(axis=out_dims)
        if not np.allclose(sums, 1.0, rtol=0.0, atol=NORMALIZATION_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"conditional rows must sum to 1 within {NORMALIZATION_TOL}; worst |err|={worst!r}")
        self.given_axes = given_axes
        self.out_axes = out_axes
        self.table = table
        self.table.flags.writeable = False
        self.zero_rows = frozenset(zero_rows)

    @property
    def given_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.given_axes)

    @property
    def out_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.out_axes)

    def __repr__(self):
        g = ",".join(self.given_names)
        o = ",".join(self.out_names)
        return f"ConditionalPMF({o}|{g})"

    def row(self, assignment) -> JointPMF:
        """The conditional row for a given assignment, as a JointPMF over
        the out axes.  ``assignment`` is a dict name->symbol or a tuple in
        given-axis order."""
        if isinstance(assignment, dict):
            idx = tuple(assignment[n] for n in self.given_names)
        else:
            idx = tuple(int(v) for v in assignment)
        return JointPMF(self.out_axes, self.table[idx])

    def aligned_table(self, given_order: Sequence[str]) -> np.ndarray:
        """Table transposed so the given axes appear in ``given_order``
        (out axes keep their order, trailing)."""
        if set(given_order) != set(self.given_names):
            raise ValueError(f"given_order {given_order} does not match {self.given_names}")
        perm = [self.given_names.index(n) for n in given_order]
        perm += [len(self.given_axes) + i for i in range(len(self.out_axes))]
        return self.table.transpose(perm)

    def allclose(self, other: "ConditionalPMF", atol: float = 1e-12) -> bool:
        return (
            self.given_names == other.given_names
            and self.out_names == other.out_names
            and np.allclose(self.table, other.table, rtol=0.0, atol=atol)
        )

    def to_json_dict(self) -> dict:
        return {
            "given_axes": [{"name": a.name, "size": a.size} for a in self.given_axes],
            "out_axes": [{"name": a.name, "size": a.size} for a in self.out_axes],
            "table": self.table.reshape(-1).tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ConditionalPMF":
        given = tuple(Alphabet(a["name"], int(a["size"])) for a in d["given_axes"])
        out = tuple(Alphabet(a["name"], int(a["size"])) for a in d["out_axes"])
        shape = tuple(a.size for a in given) + tuple(a.size for a in out)
        return cls(given, out, np.array(d["table"], dtype=np.float64).reshape(shape))

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def loads(cls, s: str) -> "ConditionalPMF":
        return cls.from_json_dict(json.loads(s))


# ---------------------------------------------------------------------------
# operations


def marginalize(p: JointPMF, keep: Sequence[str]) -> JointPMF:
    """Sum out every axis not in ``keep``; kept axes stay in their original
    order."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must be a nonempty axis set")
    keep_idx = set(p._resolve(keep))
    drop = tuple(i for i in range(len(p.axes)) if i not in keep_idx)
    table = p.table.sum(axis=drop) if drop else p.table
    axes = tuple(a for i, a in enumerate(p.axes) if i in keep_idx)
    return JointPMF(axes, table)


def compose(p: JointPMF, c: ConditionalPMF) -> JointPMF:
    """Chain-rule product ``result(a, b) = p(a) * c(b | a|given)``.

    Requires ``c.given_axes`` to be a subset of ``p.axes`` and ``c.out_axes``
    to be disjoint from them; the result's axes are p's followed by c's out
    axes.
    """
    for name in c.given_names:
        p.axis_index(name)  # raises KeyError on unknown axis
    collision = set(c.out_names) & set(p.axis_names)
    if collision:
        raise ValueError(f"axis collision: {sorted(collision)} already present in the joint")
    for name in c.given_names:
        ga = c.given_axes[c.given_names.index(name)]
        pa = p.axes[p.axis_index(name)]
        if ga.size != pa.size:
            raise ValueError(f"shape mismatch on axis {name!r}: {pa.size} vs {ga.size}")
    n_p = len(p.axes)
    letters_p = _LETTERS[:n_p]
    letters_out = _LETTERS[n_p : n_p + len(c.out_axes)]
    letters_given = "".join(letters_p[p.axis_index(n)] for n in c.given_names)
    sub = f"{letters_p},{letters_given}{letters_out}->{letters_p}{letters_out}"
    table = np.einsum(sub, p.table, c.table)
    return JointPMF(p.axes + c.out_axes, table)


def condition(p: JointPMF, out: Sequence[str], given: Sequence[str]) -> ConditionalPMF:
    """Conditional pmf p(out | given).  Zero-mass conditioning rows are
    filled uniformly and flagged, never fatal."""
    out = list(out)
    given = list(given)
    if set(out) & set(given):
        raise ValueError("out and given must be disjoint")
    m = marginalize(p, given + out)
    order = m._resolve(given + out)
    table = m.table.transpose(order)
    given_axes = tuple(m.axes[i] for i in order[: len(given)])
    out_axes = tuple(m.axes[i] for i in order[len(given) :])
    out_dims = tuple(range(len(given), len(given) + len(out)))
    mass = table.sum(axis=out_dims, keepdims=True)
    zero = mass == 0.0
    n_out = math.prod(a.size for a in out_axes)
    rows = np.where(zero, 1.0 / n_out, table / np.where(zero, 1.0, mass))
    zero_rows = frozenset(map(tuple, np.argwhere(zero.reshape(tuple(a.size for a in given_axes)))))
    return ConditionalPMF(given_axes, out_axes, rows, zero_rows)


def _entropy_of_table(table: np.ndarray) -> float:
    t = table[table > 0]
    return float(-(t * np.log2(t)).sum())


def entropy(p: JointPMF, axes: Sequence[str] | None = None) -> float:
    """Shannon entropy in bits, of the whole joint or of a marginal."""
    if axes is not None:
        p = marginalize(p, axes)
    return _entropy_of_table(p.table)


def conditional_entropy(p: JointPMF, out: Sequence[str], given: Sequence[str]) -> float:
    """H(out | given) = H(out, given) - H(given), in bits."""
    out = list(out)
    given = list(given)
    if not given:
        return entropy(p, out)
    return entropy(p, out + given) - entropy(p, given)


def mutual_information(
    p: JointPMF, a: Sequence[str], b: Sequence[str], given: Sequence[str] | None = None
) -> float:
    """I(a; b | given) in bits; tiny negative float residue is clamped to 0."""
    g = list(given) if given else []
    value = conditional_entropy(p, list(a), g) - conditional_entropy(p, list(a), list(b) + g)
    return max(value, 0.0)


def _align(p: JointPMF, q: JointPMF) -> np.ndarray:
    """q's table transposed to p's axis order; axes must match as sets."""
    if p.axis_names == q.axis_names:
        pass
    elif set(p.axis_names) == set(q.axis_names):
        q = JointPMF(
            tuple(q.axes[q.axis_index(n)] for n in p.axis_names),
            q.table.transpose(q._resolve(p.axis_names)),
        )
    else:
        raise ValueError(f"axis mismatch: {p.axis_names} vs {q.axis_names}")
    for pa, qa in zip(p.axes, q.axes):
        if pa.size != qa.size:
            raise ValueError(f"axis {pa.name!r} size mismatch: {pa.size} vs {qa.size}")
    return q.table


def total_variation(p: JointPMF, q: JointPMF) -> float:
    """Unnormalized L1 distance sum(|p - q|), in [0, 2]."""
    return float(np.abs(p.table - _align(p, q)).sum())


def tv_halved(p: JointPMF, q: JointPMF) -> float:
    """Total variation in the [0, 1] convention."""
    return 0.5 * total_variation(p, q)


def kl_divergence(p: JointPMF, q: JointPMF) -> float:
    """D(p || q) in bits; +inf when support(p) is not within support(q)."""
    qt = _align(p, q)
    mask = p.table > 0
    if np.any(qt[mask] == 0.0):
        return math.inf
    pm = p.table[mask]
    return float((pm * np.log2(pm / qt[mask])).sum())


def sample(p: JointPMF, rng: np.random.Generator, size: int | None = None):
    """Inverse-CDF sampling.  Returns a tuple of symbols, or an
    (size, n_axes) int array when ``size`` is given."""
    cdf = np.cumsum(p.table.reshape(-1))
    cdf[-1] = 1.0
    if size is None:
        flat = int(np.searchsorted(cdf, rng.random(), side="right"))
        return tuple(int(v) for v in np.unravel_index(flat, p.table.shape))
    flat = np.searchsorted(cdf, rng.random(size), side="right")
    return np.stack(np.unravel_index(flat, p.table.shape), axis=-1)


def binary_entropy(p) -> np.ndarray | float:
    """h(p) = -p log2 p - (1-p) log2 (1-p), elementwise, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    a = np.where(p > 0, p, 1.0)
    b = np.where(p < 1, 1.0 - p, 1.0)
    out = -(p * np.log2(a) + (1.0 - p) * np.log2(b))
    return out if out.shape else float(out)
