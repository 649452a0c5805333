"""Navigation metrics (SR, SPL) and map-comparison scores.

The map losses score predicted potential maps against ground truth on
frontier pixels: an L1 photometric term and a structural (SSIM) term, each
scaled by a per-task uncertainty ``sigma`` with a ``log sigma`` penalty.
Nothing here computes gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy import ndimage

TASKS = ("o", "a", "r")
C1 = 0.01 ** 2
C2 = 0.03 ** 2
SSIM_WINDOW = 7


def _triple(r):
    if hasattr(r, "success"):
        return bool(r.success), float(r.path_length), float(r.optimal_length)
    if isinstance(r, Mapping):
        return bool(r["success"]), float(r["path_length"]), float(r["optimal_length"])
    s, p, l = r
    return bool(s), float(p), float(l)


def spl_term(success: bool, path_length: float, optimal_length: float) -> float:
    if not success:
        return 0.0
    if not optimal_length > 0:
        raise ValueError("optimal path length must be positive")
    return optimal_length / max(path_length, optimal_length)


def success_rate(results: Iterable) -> float | None:
    """Mean success flag; ``None`` (undefined) for an empty batch."""
    flags = [_triple(r)[0] for r in results]
    if not flags:
        return None
    return sum(flags) / len(flags)


def spl(results: Iterable) -> float | None:
    terms = [spl_term(*_triple(r)) for r in results]
    if not terms:
        return None
    return math.fsum(terms) / len(terms)


def summarize(results) -> dict:
    results = list(results)
    out = {"n": len(results), "sr": success_rate(results), "spl": spl(results)}
    if results:
        reasons: dict[str, int] = {}
        for r in results:
            reason = getattr(r, "failure_reason", None)
            if reason:
                reasons[reason] = reasons.get(reason, 0) + 1
        out["failures"] = dict(sorted(reasons.items()))
        out["mean_steps"] = math.fsum(getattr(r, "steps", 0) for r in results) / len(results)
    return out


def fmt(value) -> str:
    return "n/a" if value is None else f"{value:.3f}"


# ------------------------------------------------------------------ SSIM


def ssim_map(a, b, window: int = SSIM_WINDOW, c1: float = C1, c2: float = C2) -> np.ndarray:
    """Local SSIM with a uniform ``window`` x ``window`` box and reflected borders.

    Inputs are expected on a unit dynamic range; moments are population
    (biased) estimates.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"maps differ in shape: {a.shape} vs {b.shape}")
    if window < 1:
        raise ValueError("window must be >= 1")
    f = lambda x: ndimage.uniform_filter(x, size=window, mode="reflect")
    mu_a, mu_b = f(a), f(b)
    var_a = f(a * a) - mu_a ** 2
    var_b = f(b * b) - mu_b ** 2
    cov = f(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    # for a == b the numerator and denominator are bitwise equal, so the
    # self-similarity is exactly 1
    return num / den


def ssim(a, b, window: int = SSIM_WINDOW, c1: float = C1, c2: float = C2) -> float:
    return float(ssim_map(a, b, window, c1, c2).mean())


# ------------------------------------------------------------------ map losses


def _mask(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != shape:
        raise ValueError("mask shape does not match the maps")
    if not m.any():
        raise ValueError("mask selects no pixels")
    return m


def photometric_loss(pred, gt, sigma: float = 1.0, mask=None) -> float:
    """Mean over masked pixels of ``|pred - gt| / sigma + log sigma``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"maps differ in shape: {pred.shape} vs {gt.shape}")
    m = _mask(mask, pred.shape)
    return float(np.abs(pred - gt)[m].mean() / sigma + math.log(sigma))


def ssim_loss(pred, gt, sigma: float = 1.0, mask=None, window: int = SSIM_WINDOW) -> float:
    """Mean over masked pixels of ``|(1 - SSIM_local) / 2| / sigma + log sigma``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    local = ssim_map(pred, gt, window)
    m = _mask(mask, local.shape)
    return float(np.abs((1.0 - local[m]) / 2.0).mean() / sigma + math.log(sigma))


@dataclass(frozen=True)
class LossWeights:
    """Per-task uncertainties, stored as log sigma so sigma > 0 always."""

    log_sigma_p: tuple[float, float, float] = (0.0, 0.0, 0.0)
    log_sigma_s: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("log_sigma_p", "log_sigma_s"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 3 or not all(math.isfinite(x) for x in v):
                raise ValueError(f"{name} needs three finite values (tasks o, a, r)")
            object.__setattr__(self, name, v)

    def sigma_p(self, task: str) -> float:
        return math.exp(self.log_sigma_p[TASKS.index(task)])

    def sigma_s(self, task: str) -> float:
        return math.exp(self.log_sigma_s[TASKS.index(task)])

    @classmethod
    def from_sigmas(cls, sigma_p, sigma_s) -> "LossWeights":
        return cls(tuple(math.log(s) for s in sigma_p), tuple(math.log(s) for s in sigma_s))


def _unit(task: str, m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    # signed room affinities live in [-1, 1]; SSIM expects [0, 1]
    return (m + 1.0) / 2.0 if task == "r" else m


def task_terms(preds: Mapping, gts: Mapping, weights: LossWeights | None = None, mask=None) -> dict:
    """The six individual terms keyed ``(task, "photometric"|"ssim")``."""
    weights = weights or LossWeights()
    if set(preds) != set(TASKS) or set(gts) != set(TASKS):
        raise ValueError(f"preds and gts need exactly the tasks {TASKS}")
    out = {}
    for t in TASKS:
        out[(t, "photometric")] = photometric_loss(preds[t], gts[t], weights.sigma_p(t), mask)
        out[(t, "ssim")] = ssim_loss(_unit(t, preds[t]), _unit(t, gts[t]), weights.sigma_s(t), mask)
    return out


def joint_loss(preds: Mapping, gts: Mapping, weights: LossWeights | None = None, mask=None) -> float:
    """Sum of the photometric and SSIM terms over the object, area and room tasks."""
    terms = task_terms(preds, gts, weights, mask)
    return math.fsum(terms[k] for k in sorted(terms))
