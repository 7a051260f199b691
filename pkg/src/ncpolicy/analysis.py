"""Quantitative interpretability of trained circuits.

Three lenses over a rollout trace:

* contribution classification — per (source, target) neuron pair, the
  histogram of slope angles between consecutive points of the two
  potential series in cross-correlation space, summarized into a verdict:
  the source drives the target (positive), opposes it (negative), or
  alternates between the two (phase-switching);
* adaptive time-constant ranges — the instantaneous relaxation time of
  each neuron, membrane capacitance over total instantaneous conductance,
  tracked over the episode;
* activity projection — per-neuron min-max normalized potential paired
  with the 2-D pose, for plotting activation along a trajectory.

All functions are pure; rendering lives elsewhere.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import SIGMOID_MIDPOINT_MV
from .trace import RolloutTrace
from .wiring import CircuitParams, CircuitSpec, Role, SynapseKind

DEFAULT_BIN_SIZE = math.pi / 36
DEFAULT_DELTA_EPS = 1e-9


class Contribution(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    PHASE_SWITCHING = "phase_switching"


def slope_angles(series_src: np.ndarray, series_dst: np.ndarray,
                 eps: float = DEFAULT_DELTA_EPS) -> np.ndarray:
    """Angles of consecutive-point slopes in the (src, dst) plane, folded
    into [-pi/2, pi/2] so the sign encodes the slope's sign.

    Steps where both series move by less than `eps` are skipped; the
    caller can recover the skip count as (len-1) - len(angles).
    """
    src = np.asarray(series_src, dtype=np.float64)
    dst = np.asarray(series_dst, dtype=np.float64)
    if src.shape != dst.shape:
        raise ValueError(f"series lengths differ: {src.shape} vs {dst.shape}")
    if src.ndim != 1 or len(src) < 2:
        raise ValueError("need two 1-D series of length >= 2")
    dx = np.diff(src)
    dy = np.diff(dst)
    keep = (np.abs(dx) >= eps) | (np.abs(dy) >= eps)
    angles = np.arctan2(dy[keep], dx[keep])
    # fold direction mod pi: a line pointing into the left half-plane has
    # the same slope as its mirror in the right half-plane
    angles = np.where(angles > math.pi / 2, angles - math.pi, angles)
    angles = np.where(angles < -math.pi / 2, angles + math.pi, angles)
    return angles


@dataclass(frozen=True)
class PairVerdict:
    source: str
    target: str
    verdict: Contribution
    positive_count: int
    negative_count: int
    zero_count: int
    skipped: int
    bin_edges: np.ndarray
    counts: np.ndarray


def classify_contribution(angles: np.ndarray,
                          bin_size: float = DEFAULT_BIN_SIZE,
                          ) -> tuple[np.ndarray, np.ndarray, Contribution]:
    """Histogram the slope angles and decide the contribution verdict.

    Verdict rule: with P angles above zero and Q below, the pair is
    positive when P >= 2Q, negative when Q >= 2P, and phase-switching
    otherwise (including the all-flat case P = Q = 0).  Returns
    (bin_edges, counts, verdict).
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.size == 0:
        raise ValueError("cannot classify an empty angle set")
    n_bins = round(math.pi / bin_size)
    if n_bins < 1 or abs(n_bins * bin_size - math.pi) > 1e-9:
        raise ValueError(f"bin size {bin_size} does not divide pi evenly")
    edges = np.linspace(-math.pi / 2, math.pi / 2, n_bins + 1)
    counts, _ = np.histogram(angles, bins=edges)

    p = int(np.sum(angles > 0))
    q = int(np.sum(angles < 0))
    if p == 0 and q == 0:
        verdict = Contribution.PHASE_SWITCHING
    elif p >= 2 * q:
        verdict = Contribution.POSITIVE
    elif q >= 2 * p:
        verdict = Contribution.NEGATIVE
    else:
        verdict = Contribution.PHASE_SWITCHING
    return edges, counts, verdict


def classify_pair(trace: RolloutTrace, source: str, target: str,
                  bin_size: float = DEFAULT_BIN_SIZE,
                  eps: float = DEFAULT_DELTA_EPS) -> PairVerdict:
    names = list(trace.neuron_names)
    src = trace.potentials[:, names.index(source)]
    dst = trace.potentials[:, names.index(target)]
    angles = slope_angles(src, dst, eps)
    skipped = (len(src) - 1) - len(angles)
    if angles.size == 0:
        # every step was flat on both series; nothing to histogram
        raise ValueError(f"pair ({source}, {target}): all steps degenerate")
    edges, counts, verdict = classify_contribution(angles, bin_size)
    return PairVerdict(
        source=source, target=target, verdict=verdict,
        positive_count=int(np.sum(angles > 0)),
        negative_count=int(np.sum(angles < 0)),
        zero_count=int(np.sum(angles == 0)),
        skipped=skipped, bin_edges=edges, counts=counts)


@dataclass
class ContributionReport:
    """Verdicts of every source neuron against one or more targets."""

    pairs: list[PairVerdict]

    def verdict_of(self, source: str, target: str) -> Contribution:
        for p in self.pairs:
            if p.source == source and p.target == target:
                return p.verdict
        raise KeyError(f"no pair ({source}, {target}) in report")


def contribution_report(trace: RolloutTrace, targets: list[str],
                        sources: Optional[list[str]] = None,
                        bin_size: float = DEFAULT_BIN_SIZE,
                        eps: float = DEFAULT_DELTA_EPS) -> ContributionReport:
    """Classify every (source, target) pair on the trace.

    Pairs whose series never move (fully degenerate) are dropped with a
    note rather than failing the whole report.
    """
    names = list(trace.neuron_names)
    for t in targets:
        if t not in names:
            raise ValueError(f"target neuron {t!r} not in trace")
    pairs: list[PairVerdict] = []
    for target in targets:
        for source in (sources if sources is not None else names):
            if source == target:
                continue
            try:
                pairs.append(classify_pair(trace, source, target, bin_size, eps))
            except ValueError:
                continue
    return ContributionReport(pairs)


def motor_targets(spec: CircuitSpec) -> list[str]:
    return [n.name for n in spec.neurons if n.role is Role.MOTOR]


def report_to_csv(report: ContributionReport, path: str | Path) -> None:
    if not report.pairs:
        raise ValueError("empty report")
    edges = report.pairs[0].bin_edges
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        bin_headers = [f"bin_{edges[i]:.6f}" for i in range(len(edges) - 1)]
        writer.writerow(["source", "target", "verdict", "positive", "negative",
                         "zero", "skipped"] + bin_headers)
        for p in report.pairs:
            writer.writerow([p.source, p.target, p.verdict.value,
                             p.positive_count, p.negative_count, p.zero_count,
                             p.skipped] + [int(c) for c in p.counts])


def report_to_json(report: ContributionReport, path: str | Path) -> None:
    payload = []
    for p in report.pairs:
        payload.append({
            "source": p.source, "target": p.target, "verdict": p.verdict.value,
            "positive": p.positive_count, "negative": p.negative_count,
            "zero": p.zero_count, "skipped": p.skipped,
            "bin_edges": [float(e) for e in p.bin_edges],
            "counts": [int(c) for c in p.counts],
        })
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Adaptive time constants
# ---------------------------------------------------------------------------

def time_constant_series(trace: RolloutTrace, spec: CircuitSpec,
                         params: CircuitParams) -> np.ndarray:
    """Instantaneous per-neuron time constant at every recorded step,
    shape (T, n): capacitance over the sum of leak conductance, gated
    chemical conductances and gap conductances touching the neuron."""
    if tuple(trace.neuron_names) != tuple(spec.neuron_names()):
        raise ValueError("trace neuron names do not match the circuit spec")
    v = trace.potentials  # (T, n)
    den = np.tile(params.gleak, (v.shape[0], 1))
    for i, e in enumerate(spec.edges):
        if e.kind is SynapseKind.GAP:
            den[:, e.post] += params.weight[i]
            den[:, e.pre] += params.weight[i]
        else:
            gate = 1.0 / (1.0 + np.exp(-params.sigma[i]
                                       * (v[:, e.pre] - SIGMOID_MIDPOINT_MV)))
            den[:, e.post] += params.weight[i] * gate
    return params.cm / den


def time_constant_range(trace: RolloutTrace, spec: CircuitSpec,
                        params: CircuitParams) -> dict[str, tuple[float, float]]:
    """Per-neuron (tau_min, tau_max) in seconds over the trace."""
    tau = time_constant_series(trace, spec, params)
    names = spec.neuron_names()
    return {name: (float(tau[:, i].min()), float(tau[:, i].max()))
            for i, name in enumerate(names)}


def tau_range_to_csv(ranges: dict[str, tuple[float, float]],
                     path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["neuron", "tau_min", "tau_max"])
        for name, (lo, hi) in ranges.items():
            writer.writerow([name, repr(lo), repr(hi)])


# ---------------------------------------------------------------------------
# Activity projection
# ---------------------------------------------------------------------------

def normalized_activity(trace: RolloutTrace) -> np.ndarray:
    """Min-max normalized potential per neuron, shape (T, n); neurons
    with a flat series normalize to all zeros."""
    v = trace.potentials
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    span = hi - lo
    flat = span == 0
    span = np.where(flat, 1.0, span)
    out = (v - lo) / span
    out[:, flat] = 0.0
    return out


def activity_projection(trace: RolloutTrace) -> tuple[np.ndarray, np.ndarray]:
    """(pose (T,2), normalized activity (T,n)) for trajectory plots."""
    if trace.pose is None:
        raise ValueError("trace has no pose series to project onto")
    return trace.pose, normalized_activity(trace)


def projection_to_csv(trace: RolloutTrace, path: str | Path) -> None:
    pose, act = activity_projection(trace)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pose_x", "pose_y"]
                        + [f"act_{n}" for n in trace.neuron_names])
        for t in range(len(pose)):
            writer.writerow([repr(float(pose[t, 0])), repr(float(pose[t, 1]))]
                            + [repr(float(a)) for a in act[t]])
