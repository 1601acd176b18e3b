"""State-evolution covariances and Onsager coefficients.

The solvers evaluate the defining expectations by Monte Carlo over Gaussian
surrogates drawn at the problem's own dimension: nested covariances
Sigma_1 in Sigma_2 in ... (and Omega_t for the asymmetric recursion), with
coefficients b_ts (and a_ts) given by normalized expected divergences.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .denoisers import Denoiser
from .exceptions import NumericError, ParameterError, ScheduleError
from .rng import RngStream

logger = logging.getLogger(__name__)

PSD_TOL = 1e-8
CHOL_JITTER = 1e-8


@dataclass
class OnsagerSchedule:
    """Coefficient maps: b[(t, s)] for s < t, and a[(t, s)] for s <= t in the
    asymmetric recursion. Entries pinned to zero for columns a denoiser
    declares it never reads."""

    b: Dict[Tuple[int, int], float] = field(default_factory=dict)
    a: Dict[Tuple[int, int], float] = field(default_factory=dict)
    provenance: str = "analytic"

    def b_coeff(self, t: int, s: int) -> float:
        try:
            return self.b[(t, s)]
        except KeyError:
            raise ScheduleError(f"missing Onsager coefficient b[{t},{s}]")

    def a_coeff(self, t: int, s: int) -> float:
        try:
            return self.a[(t, s)]
        except KeyError:
            raise ScheduleError(f"missing Onsager coefficient a[{t},{s}]")


@dataclass
class SECovarianceSequence:
    """Nested covariance iterates of the Gaussian surrogate sequence."""

    sigma: List[np.ndarray]
    omega: Optional[List[np.ndarray]] = None
    mc_samples: int = 0
    n: int = 0
    m: int = 0

    def validate(self):
        for name, seq in (("sigma", self.sigma), ("omega", self.omega or [])):
            for t, cov in enumerate(seq, start=1):
                if not np.allclose(cov, cov.T, atol=PSD_TOL):
                    raise NumericError(f"{name}_{t} is not symmetric")
                w = np.linalg.eigvalsh(cov)
                if w.min() < -PSD_TOL * max(w.max(), 1.0):
                    raise NumericError(
                        f"{name}_{t} lost positive semidefiniteness "
                        f"(min eig {w.min():.3e}); consider diagonal jitter"
                    )
                if t > 1 and not np.array_equal(seq[t - 2], cov[: t - 1, : t - 1]):
                    raise NumericError(f"{name}_{t} does not nest {name}_{t-1}")


def _chol_sample(cov: np.ndarray, rows: int, gen: np.random.Generator) -> np.ndarray:
    """rows x t draw with i.i.d. rows N(0, cov); lower Cholesky, jitter fallback."""
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        logger.warning("covariance near-singular; adding diagonal jitter %g", CHOL_JITTER)
        try:
            chol = np.linalg.cholesky(cov + CHOL_JITTER * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                "covariance not positive definite even after jitter; "
                "increase jitter or perturb the denoisers"
            ) from exc
    return gen.standard_normal((rows, cov.shape[0])) @ chol.T


def _divergences(den: Denoiser, stack: np.ndarray, rng: RngStream) -> Tuple[np.ndarray, bool]:
    """Per-column divergence sums at stack; (values, used_analytic)."""
    if den.has_analytic_divergence:
        return den.divergence(stack), True
    return den.divergence_mc(stack, rng=rng), False


def se_symmetric(
    f_seq: Sequence[Denoiser],
    u1: np.ndarray,
    T: int,
    mc_samples: int = 200,
    rng: Optional[RngStream] = None,
) -> Tuple[SECovarianceSequence, OnsagerSchedule]:
    """Covariances Sigma_1..Sigma_T and coefficients b_ts for the symmetric
    recursion driven by f_1, ..., f_(T-1) from initialization u1.

    Sigma_(t+1)[r+1, s+1] averages (1/n) f_r^T f_s over mc_samples surrogate
    draws Z_(1:t) with i.i.d. rows N(0, Sigma_t); earlier blocks are reused so
    the sequence nests exactly. b_(t+1, s) averages (1/n) div_s f_t, using the
    analytic divergence when the denoiser declares one.
    """
    if mc_samples < 1:
        raise ParameterError("mc_samples must be >= 1")
    if len(f_seq) < T - 1:
        raise ScheduleError(f"need {T - 1} denoisers for T={T}, got {len(f_seq)}")
    rng = rng or RngStream(0)
    u1 = np.asarray(u1, dtype=np.float64)
    n = u1.size
    sigma = [np.array([[u1 @ u1 / n]])]
    b: Dict[Tuple[int, int], float] = {}
    all_analytic = True
    for t in range(1, T):
        gen = rng.derive(t).generator()
        f_t = f_seq[t - 1]
        col = np.zeros(t + 1)  # entries Sigma_(t+1)[r+1, t+1] for r = 0..t
        divs = np.zeros(t)
        for rep in range(mc_samples):
            z = _chol_sample(sigma[t - 1], n, gen)
            ft_val = f_t.apply(z)
            col[0] += u1 @ ft_val / n
            for r in range(1, t):
                col[r] += f_seq[r - 1].apply(z[:, :r]) @ ft_val / n
            col[t] += ft_val @ ft_val / n
            d, analytic = _divergences(f_t, z, rng.derive(10_000 + t).derive(rep))
            all_analytic &= analytic
            divs += d / n
        col /= mc_samples
        divs /= mc_samples
        nxt = np.zeros((t + 1, t + 1))
        nxt[:t, :t] = sigma[t - 1]
        nxt[t, :] = col
        nxt[:, t] = col
        sigma.append(nxt)
        for s in range(1, t + 1):
            b[(t + 1, s)] = float(divs[s - 1])
    cov = SECovarianceSequence(sigma=sigma, mc_samples=mc_samples, n=n)
    cov.validate()
    sched = OnsagerSchedule(b=b, provenance="analytic" if all_analytic else "monte_carlo")
    return cov, sched


def se_asymmetric(
    f_seq: Sequence[Denoiser],
    g_seq: Sequence[Denoiser],
    u1: np.ndarray,
    T: int,
    m: int,
    mc_samples: int = 200,
    rng: Optional[RngStream] = None,
) -> Tuple[SECovarianceSequence, OnsagerSchedule]:
    """Covariances (Omega_t, Sigma_t) and coefficients (b, a) for the
    asymmetric recursion z/v on the m side and y/u on the n side.

    Omega_1 = |u1|^2 / m; Sigma_t[r, s] = (1/m) E f_r^T f_s over Z with rows
    N(0, Omega_t); Omega_(t+1)[r+1, s+1] = (1/m) E g_r^T g_s over Y with rows
    N(0, Sigma_t); a_ts = (1/m) E div_s f_t and b_(t+1)s = (1/m) E div_s g_t.
    """
    if mc_samples < 1:
        raise ParameterError("mc_samples must be >= 1")
    rng = rng or RngStream(0)
    u1 = np.asarray(u1, dtype=np.float64)
    n = u1.size
    omega = [np.array([[u1 @ u1 / m]])]
    sigma: List[np.ndarray] = []
    a: Dict[Tuple[int, int], float] = {}
    b: Dict[Tuple[int, int], float] = {}
    all_analytic = True
    for t in range(1, T + 1):
        # f side: new column of Sigma_t from Z ~ N(0, Omega_t x I_m)
        gen = rng.derive(2 * t).generator()
        f_t = f_seq[t - 1]
        col = np.zeros(t)
        divs = np.zeros(t)
        for rep in range(mc_samples):
            z = _chol_sample(omega[t - 1], m, gen)
            ft_val = f_t.apply(z)
            for r in range(1, t):
                col[r - 1] += f_seq[r - 1].apply(z[:, :r]) @ ft_val / m
            col[t - 1] += ft_val @ ft_val / m
            d, analytic = _divergences(f_t, z, rng.derive(20_000 + t).derive(rep))
            all_analytic &= analytic
            divs += d / m
        col /= mc_samples
        divs /= mc_samples
        nxt = np.zeros((t, t))
        if t > 1:
            nxt[: t - 1, : t - 1] = sigma[t - 2]
        nxt[t - 1, :] = col
        nxt[:, t - 1] = col
        sigma.append(nxt)
        for s in range(1, t + 1):
            a[(t, s)] = float(divs[s - 1])
        # g side: new column of Omega_(t+1) from Y ~ N(0, Sigma_t x I_n)
        if t - 1 < len(g_seq):
            gen = rng.derive(2 * t + 1).generator()
            g_t = g_seq[t - 1]
            col = np.zeros(t + 1)
            divs = np.zeros(t)
            for rep in range(mc_samples):
                y = _chol_sample(sigma[t - 1], n, gen)
                gt_val = g_t.apply(y)
                col[0] += u1 @ gt_val / m
                for r in range(1, t):
                    col[r] += g_seq[r - 1].apply(y[:, :r]) @ gt_val / m
                col[t] += gt_val @ gt_val / m
                d, analytic = _divergences(g_t, y, rng.derive(30_000 + t).derive(rep))
                all_analytic &= analytic
                divs += d / m
            col /= mc_samples
            divs /= mc_samples
            nxt = np.zeros((t + 1, t + 1))
            nxt[:t, :t] = omega[t - 1]
            nxt[t, :] = col
            nxt[:, t] = col
            omega.append(nxt)
            for s in range(1, t + 1):
                b[(t + 1, s)] = float(divs[s - 1])
    cov = SECovarianceSequence(sigma=sigma, omega=omega, mc_samples=mc_samples, n=n, m=m)
    cov.validate()
    sched = OnsagerSchedule(b=b, a=a, provenance="analytic" if all_analytic else "monte_carlo")
    return cov, sched


@dataclass
class ScalarSE:
    """Scalar variance recursion of the sensing model and its MSE prediction."""

    sigma_sq: List[float]
    omega_sq: List[float]
    predicted_mse: List[float]


def se_scalar_sensing(
    theta_star: np.ndarray,
    e: np.ndarray,
    eta_seq: Sequence[Denoiser],
    T: int,
    mc_draws: int = 50,
    rng: Optional[RngStream] = None,
    K: Optional[np.ndarray] = None,
) -> ScalarSE:
    """Variance recursion for the sensing recursion with denoisers eta_t.

    omega_1^2 = |u1|^2/m with u1 = K theta_star (K = identity when absent);
    sigma_t^2 = omega_t^2 + |e|^2/m exactly (the shift map adds an independent
    offset); omega_(t+1)^2 and the predicted MSE are Monte-Carlo averages over
    Y ~ N(0, sigma_t^2 I_n) of (1/m)|K(theta - eta_t(arg))|^2 and
    (1/n)|theta - eta_t(arg)|^2, where arg = (K^T K)^(-1) K^T Y + theta.
    """
    if mc_draws < 1:
        raise ParameterError("mc_draws must be >= 1")
    rng = rng or RngStream(0)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    n, m = theta_star.size, e.size
    if K is not None:
        K = np.asarray(K, dtype=np.float64)
        ktk = K.T @ K
        u1 = K @ theta_star
    else:
        u1 = theta_star
    noise_sq = e @ e / m
    omega = [float(u1 @ u1 / m)]
    sigma: List[float] = []
    pred: List[float] = []
    gen = rng.generator()
    for t in range(1, T + 1):
        sig_t = omega[-1] + noise_sq
        sigma.append(sig_t)
        acc_omega = 0.0
        acc_mse = 0.0
        eta_t = eta_seq[t - 1]
        std = np.sqrt(max(sig_t, 0.0))
        for _ in range(mc_draws):
            y = std * gen.standard_normal(n)
            back = np.linalg.solve(ktk, K.T @ y) if K is not None else y
            diff = theta_star - eta_t.apply(back + theta_star)
            acc_mse += diff @ diff / n
            gu = K @ diff if K is not None else diff
            acc_omega += gu @ gu / m
        omega.append(acc_omega / mc_draws)
        pred.append(acc_mse / mc_draws)
    return ScalarSE(sigma_sq=sigma, omega_sq=omega, predicted_mse=pred)


def test_function_gap(
    z_stack,
    phi1,
    phi2,
    se: SECovarianceSequence,
    mc_draws: int = 200,
    rng: Optional[RngStream] = None,
) -> float:
    """|(1/n) phi1(z)^T phi2(z) - MC E (1/n) phi1(Z)^T phi2(Z)| with the
    surrogate Z drawn from the final covariance of se."""
    z = np.asarray(getattr(z_stack, "z", z_stack), dtype=np.float64)
    n = z.shape[0]
    emp = phi1(z) @ phi2(z) / n
    cov = se.sigma[-1]
    gen = (rng or RngStream(0)).generator()
    acc = 0.0
    for _ in range(mc_draws):
        zz = _chol_sample(cov, n, gen)
        acc += phi1(zz) @ phi2(zz) / n
    return float(abs(emp - acc / mc_draws))


def estimate_onsager_from_data(
    stack,
    denoisers: Sequence[Denoiser],
    denominator: int,
    eps: Optional[float] = None,
    reps: int = 100,
    rng: Optional[RngStream] = None,
) -> OnsagerSchedule:
    """Monte-Carlo probe divergences at the realized iterates.

    stack holds the iterates the denoisers were applied to (columns 1..T);
    the schedule entry b[(t+1, s)] is the probe estimate of div_s f_t divided
    by the given denominator (n for symmetric runs, m for sensing runs).
    """
    z = np.asarray(getattr(stack, "z", stack), dtype=np.float64)
    rng = rng or RngStream(0)
    b: Dict[Tuple[int, int], float] = {}
    for t in range(1, min(len(denoisers), z.shape[1]) + 1):
        den = denoisers[t - 1]
        divs = den.divergence_mc(z[:, :t], eps=eps, reps=reps, rng=rng.derive(t))
        for s in range(1, t + 1):
            b[(t + 1, s)] = float(divs[s - 1] / denominator)
    return OnsagerSchedule(b=b, provenance="estimated_from_data")


def export_se_csv(path, se: SECovarianceSequence, sched: OnsagerSchedule,
                  scalar: Optional[ScalarSE] = None) -> None:
    """Columns: t, sigma_tt, omega_tt, b_(t,t-1), a_(t,t), predicted_mse."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "sigma_tt", "omega_tt", "b_t_tminus1", "a_tt", "predicted_mse"])
        for t in range(1, len(se.sigma) + 1):
            omega_tt = ""
            if se.omega is not None and t <= len(se.omega):
                omega_tt = f"{se.omega[t - 1][t - 1, t - 1]:.17g}"
            b_val = sched.b.get((t, t - 1))
            a_val = sched.a.get((t, t))
            mse = ""
            if scalar is not None and t <= len(scalar.predicted_mse):
                mse = f"{scalar.predicted_mse[t - 1]:.17g}"
            writer.writerow([
                t,
                f"{se.sigma[t - 1][t - 1, t - 1]:.17g}",
                omega_tt,
                "" if b_val is None else f"{b_val:.17g}",
                "" if a_val is None else f"{a_val:.17g}",
                mse,
            ])
