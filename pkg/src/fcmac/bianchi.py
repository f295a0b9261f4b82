"""Bianchi saturation model: per-slot transmission probability ``tau`` and
conditional collision probability ``p`` for ``n`` BEB stations."""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class BianchiSolution:
    tau: float
    p: float
    iterations: int
    residual: float


def tau_of_p(p: float, w: int, max_stage: int) -> float:
    # 1 - (2p)^m factored by (1 - 2p) to remove the removable singularity at p = 1/2
    geom = sum((2.0 * p) ** k for k in range(max_stage))
    return 2.0 / ((w + 1) + p * w * geom)


def p_of_tau(tau: float, n: int) -> float:
    return 1.0 - (1.0 - tau) ** (n - 1)


def residuals(tau: float, p: float, n: int, w: int, max_stage: int) -> tuple[float, float]:
    return abs(tau - tau_of_p(p, w, max_stage)), abs(p - p_of_tau(tau, n))


def bianchi_fixed_point(n: int, w: int = 16, max_stage: int = 6, tol: float = 1e-10,
                        max_iter: int = 200) -> BianchiSolution:
    """Solve the coupled tau/p equations by bisection on ``p``.

    ``w`` is the minimum window size (``cw_min + 1``); ``max_stage`` is the
    number of doublings until ``cw_max``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if w < 2:
        raise ValueError(f"w must be >= 2, got {w}")
    if max_stage < 0:
        raise ValueError(f"max_stage must be >= 0, got {max_stage}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n == 1:
        tau = tau_of_p(0.0, w, max_stage)
        return BianchiSolution(tau=tau, p=0.0, iterations=0, residual=0.0)

    def gap(p: float) -> float:
        return p - p_of_tau(tau_of_p(p, w, max_stage), n)

    lo, hi = 0.0, 1.0
    residual = float("inf")
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        p = 0.5 * (lo + hi)
        tau = tau_of_p(p, w, max_stage)
        residual = max(residuals(tau, p, n, w, max_stage))
        if residual < tol and hi - lo < tol:
            return BianchiSolution(tau=tau, p=p, iterations=it, residual=residual)
    raise ConvergenceError(f"bisection did not converge in {max_iter} iterations", residual)


def saturation_collision_probability(n: int, w: int = 16, max_stage: int = 6) -> float:
    return bianchi_fixed_point(n, w, max_stage).p


def write_table(n_values, w: int, max_stage: int, out=None) -> None:
    out = out or sys.stdout
    out.write("n,tau,p\n")
    for n in n_values:
        sol = bianchi_fixed_point(n, w, max_stage)
        out.write(f"{n},{sol.tau:.12f},{sol.p:.12f}\n")


if __name__ == "__main__":  # pragma: no cover
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-max", type=int, default=10)
    args = ap.parse_args()
    write_table(range(1, args.n_max + 1), 16, 6)
