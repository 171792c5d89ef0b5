"""Coordination rate-region membership: evaluation, search, and rate ledger.

A coordination problem is the tuple (P_U, P_X, P_{Y|X}, P_{V|UXY}); a
candidate auxiliary decomposition is a pair (P_{W|UX}, P_{V|WY}).  The
decomposition witnesses membership in the inner/outer regions when the
induced joint P_U P_X P_{W|UX} P_{Y|X} P_{V|WY} reproduces the target over
(U, X, Y, V) and the information constraint I(WX;U) <= I(WX;Y) holds.  The
two regions share those constraints and differ only in the common-randomness
bound:

    inner:  R0 >= I(W; UXV | Y) + H(X | WY)
    outer:  R0 >= I(W; UXV | Y)

"infeasible" from the search means "no witness found within budget"; global
optimality of the bilinear search is not claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .probability import (
    Alphabet,
    ConditionalPMF,
    JointPMF,
    compose,
    condition,
    conditional_entropy,
    entropy,
    marginalize,
    mutual_information,
    total_variation,
)

__all__ = [
    "AXES_UXYV",
    "CoordinationTarget",
    "AuxiliaryDecomposition",
    "RegionVerdict",
    "RateLedger",
    "FactorizationError",
    "EmptyWindow",
    "check_target_factorization",
    "induced_joint",
    "evaluate",
    "equivalent_constraint_check",
    "empirical_region_check",
    "search_auxiliary",
    "binning_rate_ledger",
    "cardinality_bound",
]

AXES_UXYV = ("U", "X", "Y", "V")

DEFAULT_TOL = 1e-6
INFO_SLACK_TOL = 1e-9  # closure of the region


class FactorizationError(ValueError):
    """A joint distribution fails the required factorization; carries the
    violated condition and its magnitude."""

    def __init__(self, condition_name: str, magnitude: float):
        self.condition_name = condition_name
        self.magnitude = magnitude
        super().__init__(f"factorization violated: {condition_name} (magnitude {magnitude:.3g})")


class EmptyWindow(ValueError):
    """A strict rate window required by the binning scheme is empty."""


@dataclass(frozen=True)
class CoordinationTarget:
    """The coordination problem (P_U, P_X, P_{Y|X}, P_{V|UXY})."""

    p_u: JointPMF
    p_x: JointPMF
    channel: ConditionalPMF
    action_rule: ConditionalPMF

    def __post_init__(self):
        if self.p_u.axis_names != ("U",) or self.p_x.axis_names != ("X",):
            raise ValueError("p_u / p_x must be single-axis pmfs over axes 'U' / 'X'")
        if self.channel.given_names != ("X",) or self.channel.out_names != ("Y",):
            raise ValueError("channel must be Y|X")
        if set(self.action_rule.given_names) != {"U", "X", "Y"} or self.action_rule.out_names != ("V",):
            raise ValueError("action_rule must be V|UXY")

    def joint(self) -> JointPMF:
        """The target joint over (U, X, Y, V)."""
        j = compose(compose(JointPMF.product(self.p_u, self.p_x), self.channel), self.action_rule)
        return j

    @property
    def sizes(self) -> dict[str, int]:
        j = {"U": self.p_u.axes[0].size, "X": self.p_x.axes[0].size}
        j["Y"] = self.channel.out_axes[0].size
        j["V"] = self.action_rule.out_axes[0].size
        return j

    def to_json_dict(self) -> dict:
        return {
            "p_u": self.p_u.to_json_dict(),
            "p_x": self.p_x.to_json_dict(),
            "channel": self.channel.to_json_dict(),
            "action_rule": self.action_rule.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CoordinationTarget":
        return cls(
            JointPMF.from_json_dict(d["p_u"]),
            JointPMF.from_json_dict(d["p_x"]),
            ConditionalPMF.from_json_dict(d["channel"]),
            ConditionalPMF.from_json_dict(d["action_rule"]),
        )


def cardinality_bound(target: CoordinationTarget) -> int:
    s = target.sizes
    return s["U"] * s["X"] * s["Y"] * s["V"] + 4


@dataclass(frozen=True)
class AuxiliaryDecomposition:
    """A candidate witness (P_{W|UX}, P_{V|WY}) with |W| = w_size."""

    w_size: int
    p_w_given_ux: ConditionalPMF
    p_v_given_wy: ConditionalPMF

    def __post_init__(self):
        if set(self.p_w_given_ux.given_names) != {"U", "X"} or self.p_w_given_ux.out_names != ("W",):
            raise ValueError("p_w_given_ux must be W|UX")
        if set(self.p_v_given_wy.given_names) != {"W", "Y"} or self.p_v_given_wy.out_names != ("V",):
            raise ValueError("p_v_given_wy must be V|WY")
        if self.p_w_given_ux.out_axes[0].size != self.w_size:
            raise ValueError("w_size does not match the W axis of p_w_given_ux")

    def to_json_dict(self) -> dict:
        return {
            "w_size": self.w_size,
            "p_w_given_ux": self.p_w_given_ux.to_json_dict(),
            "p_v_given_wy": self.p_v_given_wy.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AuxiliaryDecomposition":
        return cls(
            int(d["w_size"]),
            ConditionalPMF.from_json_dict(d["p_w_given_ux"]),
            ConditionalPMF.from_json_dict(d["p_v_given_wy"]),
        )


@dataclass(frozen=True)
class RegionVerdict:
    feasible: bool
    residual: float
    info_slack: float
    inner_rate: float
    outer_rate: float
    witness: AuxiliaryDecomposition

    def to_json_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "residual": self.residual,
            "info_slack": self.info_slack,
            "inner_rate": self.inner_rate,
            "outer_rate": self.outer_rate,
            "witness": self.witness.to_json_dict(),
        }


def check_target_factorization(
    joint: JointPMF, channel: ConditionalPMF, tol: float = 1e-9
) -> CoordinationTarget:
    """Verify that a joint over (U,X,Y,V) factors as required and extract
    the four factors.

    Checks (i) I(U;X) = 0 within tol and (ii) the conditional Y|X of the
    joint matches ``channel`` within tol in per-row total variation on
    positive-mass rows.
    """
    if set(joint.axis_names) != set(AXES_UXYV):
        raise ValueError(f"joint must have axes {AXES_UXYV}, got {joint.axis_names}")
    i_ux = mutual_information(joint, ["U"], ["X"])
    if i_ux > tol:
        raise FactorizationError("independence I(U;X)=0", i_ux)
    got = condition(joint, ["Y"], ["X"])
    p_x = marginalize(joint, ["X"])
    worst = 0.0
    for x in range(p_x.axes[0].size):
        if p_x.table[x] <= 0:
            continue
        worst = max(worst, float(np.abs(got.table[x] - channel.table[x]).sum()))
    if worst > tol:
        raise FactorizationError("channel Y|X mismatch", worst)
    return CoordinationTarget(
        p_u=marginalize(joint, ["U"]),
        p_x=p_x,
        channel=channel,
        action_rule=condition(joint, ["V"], ["U", "X", "Y"]),
    )


def induced_joint(target: CoordinationTarget, aux: AuxiliaryDecomposition) -> JointPMF:
    """P_U P_X P_{W|UX} P_{Y|X} P_{V|WY} over axes (U, X, W, Y, V)."""
    j = JointPMF.product(target.p_u, target.p_x)
    j = compose(j, aux.p_w_given_ux)
    j = compose(j, target.channel)
    j = compose(j, aux.p_v_given_wy)
    return j


def _rates(ind: JointPMF) -> tuple[float, float]:
    outer = mutual_information(ind, ["W"], ["U", "X", "V"], ["Y"])
    inner = outer + conditional_entropy(ind, ["X"], ["W", "Y"])
    return inner, outer


def evaluate(
    target: CoordinationTarget, aux: AuxiliaryDecomposition, tol: float = DEFAULT_TOL
) -> RegionVerdict:
    """Score a candidate witness against the target.

    residual  -- total variation between the induced (U,X,Y,V) marginal and
                 the target joint
    info_slack-- I(WX;Y) - I(WX;U) on the induced joint
    """
    ind = induced_joint(target, aux)
    residual = total_variation(marginalize(ind, AXES_UXYV), target.joint())
    info_slack = mutual_information(ind, ["W", "X"], ["Y"]) - mutual_information(
        ind, ["W", "X"], ["U"]
    )
    inner, outer = _rates(ind)
    feasible = residual <= tol and info_slack >= -INFO_SLACK_TOL
    return RegionVerdict(feasible, residual, info_slack, inner, outer, aux)


def equivalent_constraint_check(ind: JointPMF) -> tuple[float, float]:
    """Return (I(W;U|X), I(X;Y)) on an induced joint and assert that the
    sign of I(WX;Y) - I(WX;U) matches the sign of the difference."""
    lhs = mutual_information(ind, ["W"], ["U"], ["X"])
    rhs = mutual_information(ind, ["X"], ["Y"])
    direct = mutual_information(ind, ["W", "X"], ["Y"]) - mutual_information(ind, ["W", "X"], ["U"])
    if abs(direct - (rhs - lhs)) > 1e-9:
        raise AssertionError(
            f"constraint forms disagree: I(WX;Y)-I(WX;U)={direct!r} vs I(X;Y)-I(W;U|X)={rhs - lhs!r}"
        )
    return lhs, rhs


def empirical_region_check(
    target: CoordinationTarget, aux: AuxiliaryDecomposition, tol: float = DEFAULT_TOL
) -> bool:
    """Membership test for the empirical-coordination region: identical to
    :func:`evaluate` feasibility but with no common-randomness bound."""
    v = evaluate(target, aux, tol)
    return v.residual <= tol and v.info_slack >= -INFO_SLACK_TOL


# ---------------------------------------------------------------------------
# search


def _raw_factors(target: CoordinationTarget):
    pu = target.p_u.table
    px = target.p_x.table
    ch = target.channel.table  # [x, y]
    tgt = target.joint().table  # [u, x, y, v]
    return pu, px, ch, tgt


def _induced_table(pu, px, ch, q, r):
    # q: [u, x, w], r: [w, y, v]
    return np.einsum("u,x,xy,uxw,wyv->uxyv", pu, px, ch, q, r)


def _project_rows(mat: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    flat = mat.reshape(-1, mat.shape[-1])
    srt = -np.sort(-flat, axis=1)
    css = np.cumsum(srt, axis=1) - 1.0
    denom = np.arange(1, flat.shape[1] + 1)
    cond = srt - css / denom > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(flat.shape[0]), rho] / (rho + 1)
    out = np.maximum(flat - theta[:, None], 0.0)
    return out.reshape(mat.shape)


def _block_descent(pu, px, ch, tgt, q, r, which: str, steps: int, base_step: float):
    """Projected gradient steps on 0.5*||induced - target||^2 for one block,
    with exact line search along the feasible direction (the objective is
    quadratic in each block)."""
    for _ in range(steps):
        m = _induced_table(pu, px, ch, q, r)
        resid = m - tgt
        if which == "q":
            grad = np.einsum("uxyv,u,x,xy,wyv->uxw", resid, pu, px, ch, r)
            cand = _project_rows(q - base_step * grad)
            direction = cand - q
            dm = _induced_table(pu, px, ch, direction, r)
        else:
            grad = np.einsum("uxyv,u,x,xy,uxw->wyv", resid, pu, px, ch, q)
            cand = _project_rows(r - base_step * grad)
            direction = cand - r
            dm = _induced_table(pu, px, ch, q, direction)
        denom = float((dm * dm).sum())
        if denom <= 0.0:
            break
        t = float(-(resid * dm).sum() / denom)
        t = min(max(t, 0.0), 1.0)
        if t == 0.0:
            break
        if which == "q":
            q = q + t * direction
        else:
            r = r + t * direction
    return q, r


def _as_aux(target: CoordinationTarget, w_size: int, q: np.ndarray, r: np.ndarray) -> AuxiliaryDecomposition:
    s = target.sizes
    W = Alphabet("W", w_size)
    U = Alphabet("U", s["U"])
    X = Alphabet("X", s["X"])
    Y = Alphabet("Y", s["Y"])
    V = Alphabet("V", s["V"])
    # renormalize rows exactly (projection keeps them on the simplex up to fp error)
    q = q / q.sum(axis=-1, keepdims=True)
    r = r / r.sum(axis=-1, keepdims=True)
    return AuxiliaryDecomposition(
        w_size,
        ConditionalPMF((U, X), (W,), q),
        ConditionalPMF((W, Y), (V,), r),
    )


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    # z holds k-1 free logits per row; the first logit is pinned to 0
    full = np.concatenate([np.zeros(z.shape[:-1] + (1,)), z], axis=-1)
    e = np.exp(full - full.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _logits(rows: np.ndarray) -> np.ndarray:
    p = np.clip(rows, 1e-12, 1.0)
    return np.log(p[..., 1:]) - np.log(p[..., :1])


def _polish(pu, px, ch, tgt, q, r):
    """Joint Gauss-Newton refinement of both blocks in logit space; the
    simplex constraints disappear under the row-softmax parameterization."""
    qshape, rshape = q.shape, r.shape
    nq = q[..., 1:].size

    def unpack(theta):
        zq = theta[:nq].reshape(qshape[:-1] + (qshape[-1] - 1,))
        zr = theta[nq:].reshape(rshape[:-1] + (rshape[-1] - 1,))
        return _softmax_rows(zq), _softmax_rows(zr)

    def resid(theta):
        qq, rr = unpack(theta)
        return (_induced_table(pu, px, ch, qq, rr) - tgt).reshape(-1)

    theta0 = np.concatenate([_logits(q).reshape(-1), _logits(r).reshape(-1)])
    sol = least_squares(resid, theta0, method="trf", max_nfev=400)
    return unpack(sol.x)


def search_auxiliary(
    target: CoordinationTarget,
    w_size: int,
    restarts: int = 32,
    iterations: int = 30,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> RegionVerdict:
    """Search for a witness at fixed |W| with random restarts, each running
    alternating projected-gradient descent on the two conditional blocks
    followed by a joint least-squares polish.

    Returns the best verdict found: among feasible witnesses the one with
    the smallest inner rate, otherwise the one with the smallest residual.
    An infeasible verdict means "not found within budget".
    """
    if w_size < 1:
        raise ValueError("w_size must be >= 1")
    if w_size > cardinality_bound(target):
        raise ValueError(f"w_size {w_size} exceeds the cardinality bound {cardinality_bound(target)}")
    pu, px, ch, tgt = _raw_factors(target)
    s = target.sizes
    verdicts = []
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        q = rng.dirichlet(np.ones(w_size), size=(s["U"], s["X"]))
        r = rng.dirichlet(np.ones(s["V"]), size=(w_size, s["Y"]))
        for _ in range(iterations):
            q, r = _block_descent(pu, px, ch, tgt, q, r, "q", 6, 4.0)
            q, r = _block_descent(pu, px, ch, tgt, q, r, "r", 6, 4.0)
            m = _induced_table(pu, px, ch, q, r)
            if float(np.abs(m - tgt).sum()) <= 0.05 * tol:
                break
        q, r = _polish(pu, px, ch, tgt, q, r)
        verdicts.append(evaluate(target, _as_aux(target, w_size, q, r), tol))
    feasible = [v for v in verdicts if v.feasible]
    if feasible:
        return min(feasible, key=lambda v: (v.inner_rate, v.residual))
    return min(verdicts, key=lambda v: (v.residual, v.inner_rate))


# ---------------------------------------------------------------------------
# rate ledger


@dataclass(frozen=True)
class RateLedger:
    """Single-letter entropy accounting for the random-binning scheme.

    ``windows`` maps each rate name to an admissible (lo, hi) interval
    computed with the other rates fixed at the canonical assignment
    ``assignment``.  Strict inequality endpoints carry a 1e-9 margin; an
    extraction-side bound of exactly zero collapses the window to {0}.
    """

    entropies: dict[str, float]
    windows: dict[str, tuple[float, float]]
    assignment: dict[str, float]
    r0_bound: float
    r0_formula_check: float = field(repr=False, default=0.0)

    def to_json_dict(self) -> dict:
        return {
            "entropies": dict(self.entropies),
            "windows": {k: list(v) for k, v in self.windows.items()},
            "assignment": dict(self.assignment),
            "r0_bound": self.r0_bound,
        }

    def table(self) -> str:
        lines = [f"{'quantity':<14}{'value':>12}"]
        for k, v in self.entropies.items():
            lines.append(f"{k:<14}{v:>12.6f}")
        lines.append("")
        lines.append(f"{'rate':<8}{'window low':>14}{'window high':>14}{'chosen':>12}")
        for k, (lo, hi) in self.windows.items():
            lines.append(f"{k:<8}{lo:>14.6f}{hi:>14.6f}{self.assignment[k]:>12.6f}")
        lines.append("")
        lines.append(f"R0 lower bound: {self.r0_bound:.6f}")
        return "\n".join(lines)


_STRICT = 1e-9


def binning_rate_ledger(target: CoordinationTarget, aux: AuxiliaryDecomposition) -> RateLedger:
    """Entropy ledger and admissible rate windows for the binning scheme.

    The constraints are

        R1 > H(X|Y)              (reconstruct X from Y and its bin)
        R1 + R2 <= H(X)          (bin indices of X near-uniform)
        R3 + Rf <= H(W|XU)       (bins of W near-independent of X, U)
        R3 + R4 + Rf > H(W|X)    (reconstruct W from X and its bins)
        Rf <= H(W|UXYV)          (shared-instance reduction)
        R4 <= R2                 (pad embedding)

    with R0 = R1 + R3 + R4 bounded below by
    H(X|Y) + H(W|X) - H(W|UXYV) = I(W;UXV|Y) + H(X|WY); the identity
    H(WX|Y) = H(X|Y) + H(W|X) is verified on the induced joint.
    """
    ind = induced_joint(target, aux)
    h_x = entropy(ind, ["X"])
    h_x_y = conditional_entropy(ind, ["X"], ["Y"])
    h_w_xu = conditional_entropy(ind, ["W"], ["X", "U"])
    h_w_x = conditional_entropy(ind, ["W"], ["X"])
    h_w_all = conditional_entropy(ind, ["W"], ["U", "X", "Y", "V"])
    h_wx_y = conditional_entropy(ind, ["W", "X"], ["Y"])
    if abs(h_wx_y - (h_x_y + h_w_x)) > 1e-9:
        raise AssertionError(
            f"H(WX|Y) != H(X|Y) + H(W|X): {h_wx_y!r} vs {h_x_y + h_w_x!r}; "
            "the induced joint lost its Markov structure"
        )
    entropies = {
        "H(X)": h_x,
        "H(X|Y)": h_x_y,
        "H(W|XU)": h_w_xu,
        "H(W|X)": h_w_x,
        "H(W|UXYV)": h_w_all,
    }
    r0_bound = h_x_y + h_w_x - h_w_all
    inner, _ = _rates(ind)

    # canonical assignment: fill the W-extraction budget (R3 + Rf = H(W|XU),
    # Rf at its own cap) so the pad R4 is minimal, R4 = I(W;U|X) + margin
    rf = h_w_all
    r3 = h_w_xu - rf
    r4_lo = h_w_x - h_w_xu  # = I(W;U|X)
    r4 = r4_lo + _STRICT
    r1 = h_x_y + _STRICT
    r2_hi = h_x - r1
    if r4 > r2_hi:
        raise EmptyWindow(
            f"no admissible R2: need R4 <= R2 <= H(X) - R1 but "
            f"I(W;U|X)={r4_lo!r} >= I(X;Y)={h_x - h_x_y!r}"
        )
    r2 = 0.5 * (r4 + r2_hi)
    assignment = {"R1": r1, "R2": r2, "R3": r3, "R4": r4, "Rf": rf}
    windows = {
        "R1": (h_x_y + _STRICT, h_x - r2),
        "R2": (r4, r2_hi),
        "R3": (max(h_w_x - r4 - rf, 0.0), h_w_xu - rf),
        "R4": (r4_lo + _STRICT, r2),
        "Rf": (max(h_w_x - r3 - r4, 0.0), min(h_w_xu - r3, h_w_all)),
    }
    for name, (lo, hi) in windows.items():
        if hi < lo - 1e-12:
            raise EmptyWindow(f"rate window for {name} is empty: ({lo!r}, {hi!r})")
    ledger = RateLedger(entropies, windows, assignment, r0_bound, r0_formula_check=inner)
    if abs(r0_bound - inner) > 1e-9:
        raise AssertionError(
            f"ledger R0 bound {r0_bound!r} disagrees with I(W;UXV|Y)+H(X|WY) = {inner!r}"
        )
    return ledger
