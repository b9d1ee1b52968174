"""Scattering moments: iterated wavelet-modulus averages of a time series.

The first-order moment at scale ``j1`` is the average of ``|x * psi_j1|``;
second order iterates the wavelet-modulus once more before averaging.  The
estimator averages every sample that is far enough from block edges, and
averages per-block estimates across independent blocks, which keeps it
unbiased for stationary-increment inputs while lowering its variance
compared to reading the low-passed field at a single point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signal import TimeSeries
from .wavelet import FilterBank, _psi_hat

__all__ = [
    "ScatteringVector",
    "NormalizedScattering",
    "scatter",
    "normalize",
    "error_bound",
    "per_block_scatter",
    "vector_to_json",
    "vector_from_json",
    "vector_to_csv",
]


@dataclass(frozen=True)
class ScatteringVector:
    """Estimated scattering moments with their scale bookkeeping.

    ``order1[j1]`` and ``order2[(j1, j2)]`` hold the retained moment
    entries for ``j0 < j1 <= j_max`` and ``j1 < j2 <= j_max``; ``order3``
    is populated only on request.  ``per_block`` holds one vector per
    independent block whose entrywise mean reproduces the aggregate
    exactly.
    """

    order1: dict[int, float]
    order2: dict[tuple[int, int], float]
    order3: dict[tuple[int, int, int], float] | None
    j0: int
    j_max: int
    m_scale: int
    n_blocks: int
    per_block: tuple["ScatteringVector", ...] | None = None

    def __post_init__(self):
        for d in (self.order1, self.order2, self.order3 or {}):
            for key, v in d.items():
                if not (np.isfinite(v) and v >= 0):
                    raise ValueError(f"moment {key} is not finite and nonnegative: {v}")

    def moment_labels(self) -> list[tuple]:
        """Fixed flattening order: first order ascending, then pairs."""
        labels = [(j,) for j in sorted(self.order1)]
        labels += sorted(self.order2)
        return labels

    def as_array(self) -> np.ndarray:
        vals = [self.order1[lab[0]] if len(lab) == 1 else self.order2[lab]
                for lab in self.moment_labels()]
        return np.asarray(vals, dtype=float)

    @property
    def n_moments(self) -> int:
        return len(self.order1) + len(self.order2)


@dataclass(frozen=True)
class NormalizedScattering:
    """Scale-free moments: each entry divided by its parent-order moment.

    First order is referenced to the finest retained scale ``ref_j``;
    second order to the first-order moment at its own ``j1``.  Entries
    whose denominator sits below the configured floor are listed in
    ``omitted`` instead.
    """

    order1_norm: dict[int, float]
    order2_norm: dict[tuple[int, int], float]
    ref_j: int
    omitted: tuple[tuple[int, int], ...] = ()


def _path_margin(path: tuple[int, ...], block_len: int) -> int:
    m = sum(2**j for j in path)
    return min(m, block_len // 2 - 1)


def _detrend_blocks(blocks: np.ndarray) -> np.ndarray:
    """Subtract the line through each block's endpoints.

    Makes the periodic extension of a stationary-increment path continuous
    at the block seam, which would otherwise leak into every scale through
    the wavelet tails.  The subtracted line itself is invisible to the
    moments (the wavelets have vanishing moments).
    """
    n = blocks.shape[1]
    ramp = np.arange(n) / (n - 1)
    first = blocks[:, :1]
    last = blocks[:, -1:]
    return blocks - first - (last - first) * ramp


def _interior_mean(field: np.ndarray, margin: int) -> np.ndarray:
    """Per-row mean away from the periodic wrap; field is (n_blocks, B)."""
    B = field.shape[1]
    return field[:, margin : B - margin].mean(axis=1)


def scatter(
    ts: TimeSeries,
    bank: FilterBank,
    max_order: int = 2,
    j0: int = 0,
    j_max: int | None = None,
    j1_values=None,
    keep_per_block: bool = True,
    detrend: bool = True,
) -> ScatteringVector:
    """Estimate scattering moments of ``ts`` up to ``max_order``.

    Parameters
    ----------
    ts : TimeSeries
        Input; blocks are treated as independent realizations.
    bank : FilterBank
        Supplies the filters and the averaging scale ``m_scale``.
    j0, j_max : int
        Retained scales are ``j0 < j1 <= j_max`` (and ``j1 < j2 <= j_max``
        for second order).  ``j_max`` defaults to ``bank.m_scale - 1`` and
        must stay below ``bank.m_scale``.
    j1_values : iterable of int, optional
        Restrict the starting scales of higher-order paths (first-order
        entries are always computed for the whole range).  Diagnostic use;
        the default keeps the full triangle.
    keep_per_block : bool
        Record one vector per block when the series has several blocks.
    detrend : bool
        Subtract each block's endpoint line before filtering (default).
        Keep enabled for path-like inputs; it removes the periodic seam
        without touching the moments.

    Raises
    ------
    ValueError
        Bad order, empty index set, scale range not covered by the bank,
        or a block too short for the requested scales.
    """
    if max_order not in (1, 2, 3):
        raise ValueError("max_order must be 1, 2 or 3")
    M = bank.m_scale
    if j_max is None:
        j_max = M - 1
    if j_max >= M:
        raise ValueError(f"j_max {j_max} must be below the averaging scale {M}")
    if j0 >= j_max:
        raise ValueError(f"empty scale range: j0 {j0} >= j_max {j_max}")
    if bank.j_min > j0 + 1:
        raise ValueError(f"bank starts at scale {bank.j_min}, need {j0 + 1}")
    B = ts.block_len
    if M > math.log2(B):
        raise ValueError(f"averaging scale {M} exceeds block length {B}")
    if B < 2 ** (j_max + 2):
        raise ValueError(f"insufficient block length {B} for scale {j_max}")

    j1_all = list(range(j0 + 1, j_max + 1))
    j1_paths = sorted(set(j1_all if j1_values is None else j1_values))
    if not set(j1_paths) <= set(j1_all):
        raise ValueError("j1_values must lie inside the retained range")

    blocks = ts.blocks.astype(float)
    if detrend:
        blocks = _detrend_blocks(blocks)
    spec = np.fft.fft(blocks.astype(complex), axis=1)

    o1 = {}
    o2 = {}
    o3 = {} if max_order >= 3 else None
    for j1 in j1_all:
        u1 = np.abs(np.fft.ifft(spec * _psi_hat(bank.family, B, j1), axis=1))
        o1[j1] = _interior_mean(u1, _path_margin((j1,), B))
        if max_order < 2 or j1 not in j1_paths:
            continue
        spec1 = np.fft.fft(u1, axis=1)
        for j2 in range(j1 + 1, j_max + 1):
            u2 = np.abs(np.fft.ifft(spec1 * _psi_hat(bank.family, B, j2), axis=1))
            o2[(j1, j2)] = _interior_mean(u2, _path_margin((j1, j2), B))
            if max_order < 3:
                continue
            spec2 = np.fft.fft(u2, axis=1)
            for j3 in range(j2 + 1, j_max + 1):
                u3 = np.abs(np.fft.ifft(spec2 * _psi_hat(bank.family, B, j3), axis=1))
                o3[(j1, j2, j3)] = _interior_mean(u3, _path_margin((j1, j2, j3), B))

    def collapse(stats: dict, k: int | None) -> dict:
        pick = (lambda v: float(v.mean())) if k is None else (lambda v: float(v[k]))
        return {key: pick(v) for key, v in stats.items()}

    per_block = None
    if keep_per_block and ts.n_blocks > 1:
        per_block = tuple(
            ScatteringVector(
                order1=collapse(o1, k),
                order2=collapse(o2, k),
                order3=collapse(o3, k) if o3 is not None else None,
                j0=j0,
                j_max=j_max,
                m_scale=M,
                n_blocks=1,
            )
            for k in range(ts.n_blocks)
        )
    return ScatteringVector(
        order1=collapse(o1, None),
        order2=collapse(o2, None),
        order3=collapse(o3, None) if o3 is not None else None,
        j0=j0,
        j_max=j_max,
        m_scale=M,
        n_blocks=ts.n_blocks,
        per_block=per_block,
    )


def normalize(
    sv: ScatteringVector,
    ref_j: int | None = None,
    floor_rel: float = 1e-12,
) -> NormalizedScattering:
    """Divide each moment by its parent-order moment.

    The first-order reference defaults to the finest retained scale.
    Second-order entries whose first-order denominator falls below
    ``floor_rel`` times the largest first-order entry are omitted and
    listed; if the reference itself is below the floor the whole
    normalization is refused.
    """
    if not sv.order1:
        raise ValueError("no first-order entries to normalize by")
    if ref_j is None:
        ref_j = min(sv.order1)
    if ref_j not in sv.order1:
        raise ValueError(f"reference scale {ref_j} not present")
    floor = floor_rel * max(sv.order1.values())
    ref = sv.order1[ref_j]
    if ref < floor or ref <= 0.0:
        raise ValueError("reference first-order moment is numerically zero")
    o1n = {j: v / ref for j, v in sv.order1.items()}
    o2n = {}
    omitted = []
    for (j1, j2), v in sv.order2.items():
        den = sv.order1[j1]
        if den < floor or den <= 0.0:
            omitted.append((j1, j2))
        else:
            o2n[(j1, j2)] = v / den
    return NormalizedScattering(
        order1_norm=o1n, order2_norm=o2n, ref_j=ref_j, omitted=tuple(omitted)
    )


def error_bound(
    ts: TimeSeries,
    bank: FilterBank,
    j1: int,
    sv: ScatteringVector,
    detrend: bool = True,
) -> float:
    """Plug-in upper bound on the mean squared estimation error at ``j1``.

    Computes the empirical variance of ``|x * psi_j1|`` minus the squared
    higher-order moments of paths starting at ``j1`` (all scales bounded
    by the averaging scale), clamped at zero.  Truncating the path sum at
    the orders present in ``sv`` only loosens the bound.  A diagnostic
    built from plug-in estimates, not a guarantee.
    """
    B = ts.block_len
    blocks = ts.blocks.astype(float)
    if detrend:
        blocks = _detrend_blocks(blocks)
    spec = np.fft.fft(blocks.astype(complex), axis=1)
    u1 = np.abs(np.fft.ifft(spec * _psi_hat(bank.family, B, j1), axis=1))
    margin = _path_margin((j1,), B)
    interior = u1[:, margin : B - margin].reshape(-1)
    var = float(np.var(interior))
    tail = sum(v**2 for (a, _b), v in sv.order2.items() if a == j1)
    if sv.order3:
        tail += sum(v**2 for (a, _b, _c), v in sv.order3.items() if a == j1)
    return max(0.0, var - tail)


def per_block_scatter(
    ts: TimeSeries,
    bank: FilterBank,
    j0: int,
    j_max: int,
    delta: int = 1,
    max_order: int = 2,
    detrend: bool = True,
) -> tuple[ScatteringVector, ...]:
    """Per-realization moment estimates for covariance work.

    With several blocks, returns one vector per block (identical to the
    ``per_block`` attribute of :func:`scatter`); their mean equals the
    aggregate entrywise.  With a single block, the low-passed scattering
    fields are sampled at positions spaced ``delta`` averaging windows
    (``delta * 2**m_scale`` samples) apart, which yields correlated
    estimates unless ``delta`` is large.

    Raises
    ------
    ValueError
        Fewer than 2 windows fit, or ``delta < 1``.
    """
    if delta < 1:
        raise ValueError("delta must be at least 1")
    if ts.n_blocks > 1:
        agg = scatter(ts, bank, max_order=max_order, j0=j0, j_max=j_max,
                      detrend=detrend)
        return agg.per_block
    B = ts.block_len
    M = bank.m_scale
    agg = scatter(ts, bank, max_order=max_order, j0=j0, j_max=j_max,
                  keep_per_block=False, detrend=detrend)
    phi = bank.render_phi(B)
    blocks = ts.blocks.astype(float)
    if detrend:
        blocks = _detrend_blocks(blocks)
    spec = np.fft.fft(blocks.astype(complex), axis=1)

    hop = delta * 2**M
    values: dict[tuple, np.ndarray] = {}
    positions = None
    for j1 in sorted(agg.order1):
        u1 = np.abs(np.fft.ifft(spec * _psi_hat(bank.family, B, j1), axis=1))
        a1 = np.fft.ifft(np.fft.fft(u1, axis=1) * phi, axis=1).real[0]
        margin = _path_margin((j1,), B) + 2**M
        pos = np.arange(margin, B - margin, hop)
        positions = pos if positions is None or pos.size < positions.size else positions
        values[(j1,)] = a1
        if max_order < 2:
            continue
        spec1 = np.fft.fft(u1, axis=1)
        for j2 in range(j1 + 1, j_max + 1):
            u2 = np.abs(np.fft.ifft(spec1 * _psi_hat(bank.family, B, j2), axis=1))
            a2 = np.fft.ifft(np.fft.fft(u2, axis=1) * phi, axis=1).real[0]
            values[(j1, j2)] = a2
    if positions is None or positions.size < 2:
        raise ValueError("fewer than 2 averaging windows fit in the block")
    out = []
    for p in positions:
        o1 = {lab[0]: max(0.0, float(vals[p])) for lab, vals in values.items()
              if len(lab) == 1}
        o2 = {lab: max(0.0, float(vals[p])) for lab, vals in values.items()
              if len(lab) == 2}
        out.append(
            ScatteringVector(order1=o1, order2=o2, order3=None, j0=j0,
                             j_max=j_max, m_scale=M, n_blocks=1)
        )
    return tuple(out)


def vector_to_json(sv: ScatteringVector, path=None) -> str:
    doc = {
        "j0": sv.j0,
        "j_max": sv.j_max,
        "m_scale": sv.m_scale,
        "n_blocks": sv.n_blocks,
        "order1": {str(j): v for j, v in sorted(sv.order1.items())},
        "order2": {f"{a},{b}": v for (a, b), v in sorted(sv.order2.items())},
    }
    if sv.order3:
        doc["order3"] = {f"{a},{b},{c}": v for (a, b, c), v in sorted(sv.order3.items())}
    if sv.per_block:
        doc["per_block"] = [json.loads(vector_to_json(b)) for b in sv.per_block]
    text = json.dumps(doc)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def vector_from_json(source) -> ScatteringVector:
    if isinstance(source, (str, Path)) and Path(str(source)).exists():
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    doc = json.loads(text) if isinstance(text, str) else text

    def build(d):
        per_block = None
        if d.get("per_block"):
            per_block = tuple(build(b) for b in d["per_block"])
        order3 = None
        if d.get("order3"):
            order3 = {tuple(int(x) for x in k.split(",")): float(v)
                      for k, v in d["order3"].items()}
        return ScatteringVector(
            order1={int(j): float(v) for j, v in d["order1"].items()},
            order2={tuple(int(x) for x in k.split(",")): float(v)
                    for k, v in d["order2"].items()},
            order3=order3,
            j0=int(d["j0"]),
            j_max=int(d["j_max"]),
            m_scale=int(d["m_scale"]),
            n_blocks=int(d["n_blocks"]),
            per_block=per_block,
        )

    return build(doc)


def vector_to_csv(sv: ScatteringVector, path) -> None:
    """Flat ``order,j1,j2,value,log2_value`` table for plotting."""
    lines = ["order,j1,j2,value,log2_value"]
    for j, v in sorted(sv.order1.items()):
        lg = np.log2(v) if v > 0 else float("nan")
        lines.append(f"1,{j},,{v:.17g},{lg:.17g}")
    for (a, b), v in sorted(sv.order2.items()):
        lg = np.log2(v) if v > 0 else float("nan")
        lines.append(f"2,{a},{b},{v:.17g},{lg:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
