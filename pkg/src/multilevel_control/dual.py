"""Dual functionals over the adjoint datum p_T and their minimization.

Five functional kinds are supported, all of the form

    integral term over [0, T]  +  <e^{TA} x0, p_T>:

* ``plain``              penalized integral of the channel penalizations
* ``scaled``             the same integral amplified by a factor beta > 1
* ``squared``            one half of the squared penalized integral
* ``quadratic``          integral of |B^T p|^2
* ``quadratic_squared``  one half of that integral squared

The first three have piecewise-linear integrands, so the quadrature
subgradient has a resolution floor at the optimizer's scale: the solver
therefore finishes on an exact piecewise evaluation whose switching times
are refined by bisection, which drives the true stationarity residual to
the requested tolerance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .lti import AdjointPropagator, LtiSystem, adjoint_rows, exp_action_integral, kalman_rank, mat_exp
from .pwl import PwlConvex

__all__ = [
    "FunctionalKind",
    "QuadratureGrid",
    "OptimizerSettings",
    "DualProblem",
    "SolveStatus",
    "SolveReport",
    "eval_functional",
    "eval_subgradient",
    "subgradient_box",
    "minimize",
]


class FunctionalKind(enum.Enum):
    PLAIN = "plain"
    SCALED = "scaled"
    SQUARED = "squared"
    QUADRATIC = "quadratic"
    QUADRATIC_SQUARED = "quadratic_squared"

    @property
    def penalized(self) -> bool:
        return self in (FunctionalKind.PLAIN, FunctionalKind.SCALED, FunctionalKind.SQUARED)


@dataclass(frozen=True)
class QuadratureGrid:
    """Composite-trapezoid nodes and weights on [0, T]."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.size != weights.size or nodes.size < 2:
            raise ValueError("grid needs matching nodes and weights (>= 2)")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        T = nodes[-1] - nodes[0]
        if abs(weights.sum() - T) > 1e-10 * max(1.0, T):
            raise ValueError("quadrature weights must sum to the horizon length")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def trapezoid(cls, T: float, n: int = 4000) -> "QuadratureGrid":
        if n < 2:
            raise ValueError("need at least 2 quadrature nodes")
        nodes = np.linspace(0.0, T, n)
        w = np.full(n, T / (n - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return cls(nodes, w)

    @property
    def n(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class OptimizerSettings:
    """Descent configuration.

    ``step_rule``: "adaptive" grows/shrinks a multiplicative step with a
    monotone acceptance test, "polyak" uses (J - lower_bound)/|g|^2 and
    needs ``lower_bound``, "diminishing" uses c/sqrt(k) along -g/|g|.
    """

    max_iterations: int = 50_000
    gtol: float = 1e-6
    flat_tol: float = 1e-12
    flat_window: int = 200
    divergence_threshold: float = 1e6
    divergence_window: int = 100
    step_rule: str = "adaptive"
    step_c: float = 1.0
    lower_bound: Optional[float] = None
    exact_refinement: bool = True
    bracket_multiplier: int = 8

    def __post_init__(self):
        if self.step_rule not in ("adaptive", "polyak", "diminishing"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == "polyak" and self.lower_bound is None:
            raise ValueError("polyak steps need a lower bound on the optimal value")


class DualProblem:
    """An LTI system, one penalization per control channel, a functional
    kind and a quadrature grid.

    Node rows B^T e^{(T-t_i)A^T} are precomputed once; functional values and
    subgradients are then matrix products.
    """

    def __init__(
        self,
        sys: LtiSystem,
        penalizations,
        kind: FunctionalKind | str = FunctionalKind.PLAIN,
        beta: float = 1.0,
        grid: Optional[QuadratureGrid] = None,
        settings: Optional[OptimizerSettings] = None,
    ):
        self.sys = sys
        if isinstance(penalizations, PwlConvex):
            penalizations = [penalizations]
        self.penalizations = list(penalizations)
        kind = FunctionalKind(kind) if not isinstance(kind, FunctionalKind) else kind
        self.kind = kind
        self.beta = float(beta)
        if kind == FunctionalKind.SCALED and not self.beta > 1.0:
            raise ValueError("the scaled kind needs beta > 1")
        if kind.penalized and len(self.penalizations) != sys.channels:
            raise ValueError(
                f"need one penalization per channel: got {len(self.penalizations)} "
                f"for {sys.channels} channels"
            )
        self.grid = grid if grid is not None else QuadratureGrid.trapezoid(sys.T)
        if abs(self.grid.nodes[0]) > 1e-12 or abs(self.grid.nodes[-1] - sys.T) > 1e-9:
            raise ValueError("quadrature grid must cover [0, T]")
        self.settings = settings if settings is not None else OptimizerSettings()
        # (n, K, N) adjoint rows and the exact terminal drift e^{TA} x0
        self.rows = adjoint_rows(sys.A, sys.B, sys.T, self.grid.nodes)
        self.drift = mat_exp(sys.A, sys.T) @ sys.x0
        self.propagator = AdjointPropagator(sys.A, sys.B, sys.T)
        self._bracket = None

    # -- basic maps ---------------------------------------------------------

    @property
    def channels(self) -> int:
        return self.sys.channels

    def adjoint_observations(self, p_T) -> np.ndarray:
        """B^T p(t_i) at the quadrature nodes, shape (n, K)."""
        p_T = self._check_p(p_T)
        return self.rows @ p_T

    def _check_p(self, p_T) -> np.ndarray:
        p_T = np.asarray(p_T, dtype=float).reshape(-1)
        if p_T.shape[0] != self.sys.dim:
            raise ValueError(f"p_T has length {p_T.shape[0]}, expected {self.sys.dim}")
        return p_T

    def penalized_integral(self, p_T) -> float:
        q = self.adjoint_observations(p_T)
        w = self.grid.weights
        return float(sum(w @ self.penalizations[ch].value(q[:, ch]) for ch in range(self.channels)))

    def bracket_grid(self):
        """Denser uniform grid used to bracket level crossings."""
        if self._bracket is None:
            mult = self.settings.bracket_multiplier
            nb = (self.grid.n - 1) * mult + 1
            tb = np.linspace(0.0, self.sys.T, nb)
            self._bracket = (tb, adjoint_rows(self.sys.A, self.sys.B, self.sys.T, tb))
        return self._bracket


# -- functional / subgradient ------------------------------------------------


def eval_functional(prob: DualProblem, p_T) -> float:
    """Quadrature value of the selected dual functional at p_T."""
    p_T = prob._check_p(p_T)
    lin = float(prob.drift @ p_T)
    if prob.kind.penalized:
        I = prob.penalized_integral(p_T)
        if prob.kind == FunctionalKind.PLAIN:
            return I + lin
        if prob.kind == FunctionalKind.SCALED:
            return prob.beta * I + lin
        return 0.5 * I * I + lin
    q = prob.adjoint_observations(p_T)
    I2 = float(prob.grid.weights @ (q * q).sum(axis=1))
    if prob.kind == FunctionalKind.QUADRATIC:
        return I2 + lin
    return 0.5 * I2 * I2 + lin


def _selection_matrix(prob: DualProblem, q: np.ndarray) -> np.ndarray:
    return np.stack(
        [prob.penalizations[ch].selection(q[:, ch]) for ch in range(prob.channels)], axis=1
    )


def eval_subgradient(prob: DualProblem, p_T) -> np.ndarray:
    """A subgradient of the functional at p_T (the gradient wherever the
    integrand avoids breakpoints at the nodes)."""
    p_T = prob._check_p(p_T)
    q = prob.adjoint_observations(p_T)
    w = prob.grid.weights
    if prob.kind.penalized:
        s = _selection_matrix(prob, q)
        base = np.einsum("i,ikn,ik->n", w, prob.rows, s)
        if prob.kind == FunctionalKind.PLAIN:
            return base + prob.drift
        if prob.kind == FunctionalKind.SCALED:
            return prob.beta * base + prob.drift
        return prob.penalized_integral(p_T) * base + prob.drift
    base = 2.0 * np.einsum("i,ikn,ik->n", w, prob.rows, q)
    if prob.kind == FunctionalKind.QUADRATIC:
        return base + prob.drift
    I2 = float(w @ (q * q).sum(axis=1))
    return I2 * base + prob.drift


def subgradient_box(prob: DualProblem, p_T, tol: float = 1e-12):
    """Coordinatewise interval hull of the subdifferential at p_T.

    Nodes within ``tol`` of a penalization breakpoint contribute their full
    slope interval; all other nodes contribute their single slope.  Only
    meaningful for the plain/scaled kinds (the squared kind multiplies the
    interval by the current integral value).
    """
    if not prob.kind.penalized:
        g = eval_subgradient(prob, p_T)
        return g.copy(), g.copy()
    p_T = prob._check_p(p_T)
    q = prob.adjoint_observations(p_T)
    w = prob.grid.weights
    factor = prob.beta if prob.kind == FunctionalKind.SCALED else 1.0
    if prob.kind == FunctionalKind.SQUARED:
        factor = prob.penalized_integral(p_T)
    lo = prob.drift.copy()
    hi = prob.drift.copy()
    for ch in range(prob.channels):
        pen = prob.penalizations[ch]
        u = q[:, ch]
        k = pen.segment_index(u)
        s_lo = pen.slopes[k].astype(float).copy()
        s_hi = s_lo.copy()
        if pen.breakpoints.size:
            d = np.abs(u[:, None] - pen.breakpoints)
            j = np.argmin(d, axis=1)
            on = d[np.arange(u.size), j] <= tol
            s_lo[on] = pen.slopes[j[on]]
            s_hi[on] = pen.slopes[j[on] + 1]
        contrib = factor * w[:, None] * prob.rows[:, ch, :]
        a = contrib * s_lo[:, None]
        b = contrib * s_hi[:, None]
        lo += np.minimum(a, b).sum(axis=0)
        hi += np.maximum(a, b).sum(axis=0)
    return lo, hi


# -- exact piecewise evaluation ----------------------------------------------


class ExactEvaluator:
    """Evaluate the penalized functional and its gradient exactly by
    locating all level crossings of B^T p(t) and integrating the affine
    integrand per switching interval in closed form."""

    def __init__(self, prob: DualProblem):
        if not prob.kind.penalized:
            raise ValueError("exact evaluation applies to the penalized kinds")
        self.prob = prob

    def _psi(self, tau: float) -> np.ndarray:
        return exp_action_integral(self.prob.sys.A, self.prob.sys.B, tau)

    def pieces(self, p_T):
        """Per channel: list of (a, b, segment index) covering (0, T)."""
        from .extract import find_switchings

        prob = self.prob
        tb, rows_b = prob.bracket_grid()
        qb = rows_b @ p_T
        out = []
        for ch in range(prob.channels):
            pen = prob.penalizations[ch]

            def qfun(t, ch=ch):
                return prob.propagator(t, p_T)[:, ch]

            crossings, _ = find_switchings(
                qfun, pen.breakpoints, tb, samples=qb[:, ch], midpoint_guard=False
            )
            ts = np.concatenate([[0.0], crossings, [prob.sys.T]])
            mids = 0.5 * (ts[:-1] + ts[1:])
            ks = pen.segment_index(qfun(mids))
            out.append([(ts[i], ts[i + 1], int(ks[i])) for i in range(ts.size - 1)])
        return out

    def value_and_grad(self, p_T):
        prob = self.prob
        p_T = prob._check_p(p_T)
        T = prob.sys.T
        base = np.zeros_like(p_T)
        integral = 0.0
        for ch, segs in enumerate(self.pieces(p_T)):
            pen = prob.penalizations[ch]
            psi_hi = self._psi(T)[:, ch]
            for a, b, k in segs:
                psi_lo = self._psi(T - b)[:, ch]
                F = psi_hi - psi_lo  # integral of e^{(T-t)A} B_ch over [a, b]
                base += pen.slopes[k] * F
                integral += pen.slopes[k] * float(F @ p_T) + pen.intercepts[k] * (b - a)
                psi_hi = psi_lo
        lin = float(prob.drift @ p_T)
        if prob.kind == FunctionalKind.PLAIN:
            return integral + lin, base + prob.drift
        if prob.kind == FunctionalKind.SCALED:
            return prob.beta * integral + lin, prob.beta * base + prob.drift
        return 0.5 * integral * integral + lin, integral * base + prob.drift

    def penalized_integral(self, p_T) -> float:
        prob = self.prob
        lin = float(prob.drift @ prob._check_p(p_T))
        value, _ = self.value_and_grad(p_T)
        if prob.kind == FunctionalKind.PLAIN:
            return value - lin
        if prob.kind == FunctionalKind.SCALED:
            return (value - lin) / prob.beta
        return float(np.sqrt(max(2.0 * (value - lin), 0.0)))


# -- solver -------------------------------------------------------------------


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    ITERATION_CAP = "iteration_cap_reached"


@dataclass
class SolveReport:
    status: SolveStatus
    p_T_star: Optional[np.ndarray]
    value: float
    iterations: int
    grad_norm: float
    trace: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED


def _stationary_at_origin(prob: DualProblem, gtol: float) -> Optional[float]:
    """Residual of the stationarity certificate at p_T = 0, or None.

    For the penalized kinds the certificate is the distance from 0 to the
    coordinate-interval hull of the subdifferential; zero is a frequent exact
    minimizer because the penalization is kinked at its minimum.
    """
    zero = np.zeros(prob.sys.dim)
    if prob.kind in (FunctionalKind.PLAIN, FunctionalKind.SCALED):
        lo, hi = subgradient_box(prob, zero)
        res = float(np.linalg.norm(np.clip(0.0, lo, hi)))
        return res if res <= gtol else None
    if prob.kind in (FunctionalKind.SQUARED, FunctionalKind.QUADRATIC_SQUARED):
        # the integral factor vanishes at 0, so the gradient there is the drift
        res = float(np.linalg.norm(prob.drift))
        return res if res <= gtol else None
    res = float(np.linalg.norm(eval_subgradient(prob, zero)))
    return res if res <= gtol else None


def _snap_to_active_kinks(prob: DualProblem, p: np.ndarray, loose: float = 1e-6):
    """Project p onto the manifold where near-active node observations sit
    exactly on their penalization breakpoints.

    Systems with a singular A^T admit constant adjoint observations, so a
    minimizer can pin B^T p(t) to a kink over the whole window (not just at
    isolated crossings); the interval-subgradient certificate only fires
    once those nodes are exactly active.  Returns None when nothing is
    nearly active or the projection moves p by more than ``loose``-scale.
    """
    if not prob.kind.penalized:
        return None
    q = prob.adjoint_observations(p)
    rows = []
    targets = []
    for ch in range(prob.channels):
        pen = prob.penalizations[ch]
        if not pen.breakpoints.size:
            continue
        d = np.abs(q[:, ch][:, None] - pen.breakpoints)
        j = np.argmin(d, axis=1)
        near = d[np.arange(q.shape[0]), j] <= loose * (1.0 + np.abs(q[:, ch]))
        if np.any(near):
            rows.append(prob.rows[near, ch, :])
            targets.append(pen.breakpoints[j[near]])
    if not rows:
        return None
    A = np.vstack(rows)
    b = np.concatenate(targets)
    delta, *_ = np.linalg.lstsq(A, b - A @ p, rcond=None)
    if float(np.linalg.norm(delta)) > 10.0 * loose * (1.0 + float(np.linalg.norm(p))):
        return None
    return p + delta


def minimize(prob: DualProblem, p0=None) -> SolveReport:
    """Minimize the dual functional over p_T.

    Monotone descent with the configured step rule on the quadrature
    functional; for the penalized kinds a second phase repeats the descent
    on the exact piecewise evaluation, which removes the quadrature floor of
    the subgradient and certifies stationarity at ``gtol``.  Divergence is
    certified when the iterate norm passes the threshold while the accepted
    values are still strictly decreasing.
    """
    st = prob.settings
    if kalman_rank(prob.sys.A, prob.sys.B) < prob.sys.dim:
        import warnings

        warnings.warn("system is not controllable: the dual functional may have no minimizer")

    n_dim = prob.sys.dim
    p = np.zeros(n_dim) if p0 is None else np.asarray(p0, dtype=float).reshape(-1).copy()

    value_fn = lambda x: eval_functional(prob, x)
    grad_fn = lambda x: eval_subgradient(prob, x)
    exact = ExactEvaluator(prob) if (st.exact_refinement and prob.kind.penalized) else None
    phase = 1

    J = value_fn(p)
    g = grad_fn(p)
    if not np.isfinite(J) or not np.all(np.isfinite(g)):
        raise FloatingPointError(f"functional not finite at the initial point p={p}")
    step = st.step_c / (1.0 + float(np.linalg.norm(g)))
    best_J, best_p = J, p.copy()
    since_improve = 0
    accepted: list[float] = [J]
    trace_rows = [(J, float(np.linalg.norm(p)), float(np.linalg.norm(g)))]
    it = 0

    def report(status, p_star, value, gnorm, message=""):
        return SolveReport(
            status=status,
            p_T_star=p_star,
            value=value,
            iterations=it,
            grad_norm=gnorm,
            trace=np.asarray(trace_rows),
            message=message,
        )

    def finish_at_best():
        g_best = grad_fn(best_p)
        gn = float(np.linalg.norm(g_best))
        if gn <= st.gtol:
            return report(SolveStatus.CONVERGED, best_p, best_J, gn)
        res = _stationary_at_origin(prob, st.gtol)
        if res is not None and value_fn(np.zeros(n_dim)) <= best_J + st.flat_tol:
            return report(
                SolveStatus.CONVERGED,
                np.zeros(n_dim),
                value_fn(np.zeros(n_dim)),
                res,
                "stationary at the origin (interval-subgradient certificate)",
            )
        snapped = _snap_to_active_kinks(prob, best_p)
        if snapped is not None and value_fn(snapped) <= best_J + st.flat_tol:
            lo, hi = subgradient_box(prob, snapped)
            res = float(np.linalg.norm(np.clip(0.0, lo, hi)))
            if res <= st.gtol:
                return report(
                    SolveStatus.CONVERGED,
                    snapped,
                    value_fn(snapped),
                    res,
                    "stationary on active breakpoints (interval-subgradient certificate)",
                )
        return report(
            SolveStatus.ITERATION_CAP,
            best_p,
            best_J,
            gn,
            "descent stalled before reaching the stationarity tolerance",
        )

    while it < st.max_iterations:
        it += 1
        gn = float(np.linalg.norm(g))
        if gn <= st.gtol:
            return report(SolveStatus.CONVERGED, p, J, gn)

        if st.step_rule == "polyak":
            alpha = max(J - st.lower_bound, st.flat_tol) / (gn * gn)
        elif st.step_rule == "diminishing":
            alpha = st.step_c / (np.sqrt(it) * gn)
        else:
            alpha = step
        cand = p - alpha * g
        J_cand = value_fn(cand)
        if not np.isfinite(J_cand):
            raise FloatingPointError(
                f"functional overflowed at iterate {it} (|p| = {np.linalg.norm(cand):.3e})"
            )

        if J_cand < J:
            p, J = cand, J_cand
            g = grad_fn(p)
            accepted.append(J)
            if st.step_rule == "adaptive":
                step *= 1.3
            if J < best_J - st.flat_tol:
                best_J, best_p, since_improve = J, p.copy(), 0
            else:
                if J < best_J:
                    best_J, best_p = J, p.copy()
                since_improve += 1
        else:
            since_improve += 1
            if st.step_rule == "adaptive":
                step *= 0.5
                if step < 1e-17 * (1.0 + float(np.linalg.norm(p))):
                    since_improve = max(since_improve, st.flat_window)

        trace_rows.append((J, float(np.linalg.norm(p)), float(np.linalg.norm(g))))

        if (
            float(np.linalg.norm(p)) > st.divergence_threshold
            and len(accepted) > st.divergence_window
        ):
            window = accepted[-st.divergence_window :]
            if all(b < a for a, b in zip(window[:-1], window[1:])):
                return report(
                    SolveStatus.DIVERGED,
                    None,
                    J,
                    gn,
                    "iterate norm passed the divergence threshold with strictly "
                    "decreasing values (non-coercive functional)",
                )

        if since_improve >= st.flat_window:
            res = _stationary_at_origin(prob, st.gtol)
            if res is not None and value_fn(np.zeros(n_dim)) <= best_J + st.flat_tol:
                return report(
                    SolveStatus.CONVERGED,
                    np.zeros(n_dim),
                    value_fn(np.zeros(n_dim)),
                    res,
                    "stationary at the origin (interval-subgradient certificate)",
                )
            if phase == 1 and exact is not None:
                phase = 2
                cache: dict[bytes, tuple[float, np.ndarray]] = {}

                def exact_pair(x):
                    key = x.tobytes()
                    if key not in cache:
                        if len(cache) > 64:
                            cache.clear()
                        cache[key] = exact.value_and_grad(x)
                    return cache[key]

                value_fn = lambda x: exact_pair(x)[0]
                grad_fn = lambda x: exact_pair(x)[1]
                p = best_p.copy()
                J = value_fn(p)
                g = grad_fn(p)
                best_J, best_p = J, p.copy()
                step = max(step, 1e-6)
                since_improve = 0
                continue
            return finish_at_best()

    return finish_at_best()


def quadratic_minimizer(prob: DualProblem) -> np.ndarray:
    """Closed-form minimizer of the quadratic kind via the normal equations
    2 G p = -drift with G the quadrature Gram matrix (oracle path)."""
    w = prob.grid.weights
    G = np.einsum("i,ikm,ikn->mn", w, prob.rows, prob.rows)
    return sla.solve(2.0 * G, -prob.drift, assume_a="pos")
