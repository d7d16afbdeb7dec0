"""Ornstein-Uhlenbeck operator layer for the pre-limiting targets.

Given a target law D (one of the two pre-limit samplers), the transition
operator of the associated stationary evolution is the Gaussian
interpolation

    (T_u g)(w) = E g(w e^{-u} + sqrt(1 - e^{-2u}) D),

its generator on cylinder test functionals is

    A f(w) = -Df(w)[w] + E D^2 f(w)[D, D],

and the centered equation A f = g - E g(D) is solved by
f = -int_0^inf T_u (g - E g(D)) du, computed after substituting
v = e^{-u} by fixed-order quadrature on (0, 1].

Everything here touches the target only through its values at the test
functional's finitely many times, so the expectation in the generator's
second term is the exact trace contraction of the Hessian blocks against
the closed-form grid covariance: no Monte Carlo enters the second term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import combinatorial as comb
from . import graph as gr
from .functionals import CylinderFunctional, numeric_cylinder
from .mc import CHUNK, McEstimate, SeedSpec, from_values, mc_run, merge
from .paths import PiecewiseConstantPath, lin_comb, sup_norm

__all__ = [
    "TargetLaw",
    "combinatorial_law",
    "graph_law",
    "mehler_apply",
    "mehler_two_step",
    "generator_apply",
    "stein_identity_residual",
    "solve_phi",
    "make_phi_cylinder",
    "stein_selfconsistency",
    "epsilon1_estimate",
    "epsilon1_combinatorial",
    "epsilon1_graph",
    "epsilon3_estimate",
]


@dataclass
class TargetLaw:
    """A pre-limit target: grid sampler plus closed-form grid covariance."""

    dim: int
    n: int
    label: str
    sample_grid: Callable[[np.random.Generator, int], np.ndarray]
    cov: Callable[[Fraction, Fraction], np.ndarray]
    _mean_cache: dict = field(default_factory=dict, repr=False)

    def cuts(self, times: Sequence[Fraction]) -> np.ndarray:
        return np.array([int(self.n * t) for t in times])

    def sample_at(
        self, rng: np.random.Generator, size: int, times: Sequence[Fraction]
    ) -> np.ndarray:
        """(size, k, dim) draws of D at the given times."""
        grid = self.sample_grid(rng, size)
        if grid.ndim == 2:
            grid = grid[:, :, None]
        return grid[:, self.cuts(times), :]

    def cov_matrix(self, times: Sequence[Fraction]) -> np.ndarray:
        """(k*dim, k*dim) covariance of the stacked evaluations."""
        k, d = len(times), self.dim
        out = np.zeros((k * d, k * d))
        for a, t in enumerate(times):
            for b, u in enumerate(times):
                out[a * d : (a + 1) * d, b * d : (b + 1) * d] = np.atleast_2d(
                    self.cov(t, u)
                )
        return out

    def mean_g(
        self, g: CylinderFunctional, samples: int, seed: SeedSpec, workers: int = 1
    ) -> McEstimate:
        """Cached Monte Carlo estimate of E g(D)."""
        key = (g.label, samples, seed.root, seed.path)
        if key not in self._mean_cache:

            def sampler(rng, size):
                d = self.sample_at(rng, size, g.times)
                return g.value_stacked(d.reshape(size, -1))

            self._mean_cache[key] = mc_run(
                sampler, samples, seed, workers=workers, name="mean_g"
            )
        return self._mean_cache[key]


def combinatorial_law(model: comb.ArrayModel) -> TargetLaw:
    zc = comb.zhat_cov_matrix(model)
    prefix = np.zeros((model.n + 1, model.n + 1))
    prefix[1:, 1:] = zc.cumsum(axis=0).cumsum(axis=1)
    s2 = comb.s_n_squared(model)
    n = model.n

    def cov(s, t):
        return np.array([[prefix[int(n * s), int(n * t)] / s2]])

    return TargetLaw(
        dim=1,
        n=n,
        label="combinatorial(n=%d)" % n,
        sample_grid=lambda rng, size: comb.sample_dn_values(model, rng, size),
        cov=cov,
    )


def graph_law(model: gr.GraphModel) -> TargetLaw:
    pc = gr.prelimit_cov(model)
    return TargetLaw(
        dim=2,
        n=model.n,
        label="graph(n=%d,p=%g)" % (model.n, model.p),
        sample_grid=lambda rng, size: gr.sample_dn_values(model, rng, size),
        cov=pc.block,
    )


# ---------------------------------------------------------------------------
# semigroup and generator


def mehler_apply(
    g: CylinderFunctional,
    w: PiecewiseConstantPath,
    u: float,
    law: TargetLaw,
    inner_samples: int,
    seed: SeedSpec,
    workers: int = 1,
) -> McEstimate:
    """Monte Carlo estimate of (T_u g)(w).

    At u = 0 the mixing factor vanishes identically, so every draw
    evaluates g(w) and the estimator is exact with zero variance.
    """
    if u < 0:
        raise ValueError("the semigroup parameter must be nonnegative")
    x = g.stack(w)
    if u == 0.0:
        # the mixing factor is identically zero: exact, zero variance
        return McEstimate(count=inner_samples, mean=g(w), m2=0.0, name="mehler")
    decay = math.exp(-u)
    beta = math.sqrt(max(0.0, 1.0 - math.exp(-2.0 * u)))

    def sampler(rng, size):
        d = law.sample_at(rng, size, g.times).reshape(size, -1)
        return g.value_stacked(decay * x + beta * d)

    return mc_run(sampler, inner_samples, seed, workers=workers, name="mehler")


def mehler_two_step(
    g: CylinderFunctional,
    w: PiecewiseConstantPath,
    u: float,
    v: float,
    law: TargetLaw,
    inner_samples: int,
    seed: SeedSpec,
) -> McEstimate:
    """Unbiased estimator of (T_u T_v g)(w) with one fresh inner draw per
    outer draw; its mean equals (T_{u+v} g)(w) by the semigroup property."""
    x = g.stack(w)
    du, dv = math.exp(-u), math.exp(-v)
    bu = math.sqrt(max(0.0, 1.0 - du * du))
    bv = math.sqrt(max(0.0, 1.0 - dv * dv))

    def sampler(rng, size):
        d1 = law.sample_at(rng, size, g.times).reshape(size, -1)
        d2 = law.sample_at(rng, size, g.times).reshape(size, -1)
        return g.value_stacked(du * dv * x + dv * bu * d1 + bv * d2)

    return mc_run(sampler, inner_samples, seed, name="mehler2")


def generator_apply(
    f: CylinderFunctional, w: PiecewiseConstantPath, law: TargetLaw
) -> float:
    """A f(w) = -Df(w)[w] + sum_ab trace(H_ab(w)^T Cov(D(t_a), D(t_b))).

    Deterministic: the second term contracts the Hessian against the
    closed-form covariance matrix of the stacked evaluations.
    """
    x = f.stack(w)
    grad = f.grad_stacked(x)
    hess = f.hess_stacked(x)
    cov = law.cov_matrix(f.times)
    return float(-grad @ x + np.sum(hess * cov))


def stein_identity_residual(
    f: CylinderFunctional,
    law: TargetLaw,
    samples: int,
    seed: SeedSpec,
    scale: float = 1.0,
    workers: int = 1,
) -> McEstimate:
    """Monte Carlo mean of A f(scale * D); zero in expectation when
    scale = 1 (stationarity).  scale != 1 is the negative control."""
    cov = law.cov_matrix(f.times)

    def sampler(rng, size):
        d = scale * law.sample_at(rng, size, f.times).reshape(size, -1)
        grads = f.grad_stacked(d)
        first = -np.einsum("si,si->s", grads, d)
        hess = f.hess_stacked(d)
        second = np.einsum("sij,ij->s", hess, cov)
        return first + second

    return mc_run(sampler, samples, seed, workers=workers, name="stein_residual")


# ---------------------------------------------------------------------------
# Stein-equation solution


def _gauss_legendre_01(n_nodes: int, panels: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on (0, 1] with n_nodes total nodes."""
    per = max(1, n_nodes // panels)
    base_x, base_w = np.polynomial.legendre.leggauss(per)
    nodes, weights = [], []
    edges = np.linspace(0.0, 1.0, panels + 1)
    for lo, hi in zip(edges, edges[1:]):
        nodes.append(0.5 * (hi - lo) * base_x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * base_w)
    return np.concatenate(nodes), np.concatenate(weights)


def _phi_sample_values(
    g: CylinderFunctional,
    x: np.ndarray,
    d_flat: np.ndarray,
    nodes: np.ndarray,
    weights: np.ndarray,
) -> np.ndarray:
    """Per-sample values of -sum_q (w_q/v_q)(g(x v_q + b_q D_s) - g(D_s)).

    Centering with the same draw D_s (instead of a separately estimated
    E g(D)) keeps every summand bounded as v_q -> 0: the difference
    vanishes exactly at v = 0, so no 1/v amplification of sampling noise
    enters.  The estimator stays unbiased by linearity.
    """
    g_at_d = g.value_stacked(d_flat)
    out = np.zeros(d_flat.shape[0])
    for v, wt in zip(nodes, weights):
        b = math.sqrt(max(0.0, 1.0 - v * v))
        out -= (wt / v) * (g.value_stacked(v * x + b * d_flat) - g_at_d)
    return out


def solve_phi(
    g: CylinderFunctional,
    w: PiecewiseConstantPath,
    law: TargetLaw,
    quad_points: int = 64,
    inner_samples: int = 4096,
    seed: SeedSpec = SeedSpec(0),
) -> tuple[McEstimate, float]:
    """Estimate phi(g)(w) = -int_0^1 E[(g - E g(D))(w v + sqrt(1-v^2) D)] dv/v.

    Returns (estimate, quadrature_error_estimate); the latter is a
    node-halving comparison on the same draws.
    """
    nodes, weights = _gauss_legendre_01(quad_points)
    half_nodes, half_weights = _gauss_legendre_01(max(8, quad_points // 2))
    x = g.stack(w)

    est = McEstimate(name="phi")
    est_half = McEstimate()
    done = 0
    chunk_idx = 1
    while done < inner_samples:
        size = min(CHUNK, inner_samples - done)
        rng = seed.child(chunk_idx).rng()
        d_flat = law.sample_at(rng, size, g.times).reshape(size, -1)
        vals = _phi_sample_values(g, x, d_flat, nodes, weights)
        vals_half = _phi_sample_values(g, x, d_flat, half_nodes, half_weights)
        est = merge(est, from_values(vals))
        est_half = merge(est_half, from_values(vals_half))
        done += size
        chunk_idx += 1
    est.name = "phi"
    return est, abs(est.mean - est_half.mean)


def make_phi_cylinder(
    g: CylinderFunctional,
    law: TargetLaw,
    quad_points: int = 64,
    inner_samples: int = 4096,
    seed: SeedSpec = SeedSpec(0),
    fd_step: float = 1e-3,
) -> CylinderFunctional:
    """phi(g) as a numeric cylinder functional on g's own times.

    The semigroup maps cylinders to cylinders over the same time set, so
    the solution is psi(x) = -sum_q (w_q/v_q) mean_s [g(x v_q + b_q D_s)
    - g(D_s)] with one frozen set of target draws shared by every
    evaluation point (common random numbers keep finite differences of
    the Monte Carlo average smooth, and the per-draw centering keeps the
    v -> 0 nodes noise-free).
    """
    nodes, weights = _gauss_legendre_01(quad_points)
    d_flat = law.sample_at(seed.child(1).rng(), inner_samples, g.times).reshape(
        inner_samples, -1
    )
    g_at_d = np.asarray(g.value_stacked(d_flat))
    betas = np.sqrt(np.clip(1.0 - nodes**2, 0.0, None))

    def value_fn(x):
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        flat = x.reshape(-1, x.shape[-1])
        out = np.zeros(flat.shape[0])
        for v, b, wt in zip(nodes, betas, weights):
            args = v * flat[:, None, :] + b * d_flat[None, :, :]
            out -= (wt / v) * (
                g.value_stacked(args) - g_at_d[None, :]
            ).mean(axis=1)
        return out.reshape(lead)

    return numeric_cylinder(
        value_fn, g.times, dim=g.dim, step=fd_step, label="phi(%s)" % g.label
    )


def stein_selfconsistency(
    g: CylinderFunctional,
    w: PiecewiseConstantPath,
    law: TargetLaw,
    quad_points: int = 64,
    inner_samples: int = 32768,
    seed: SeedSpec = SeedSpec(0),
    groups: int = 8,
) -> dict:
    """Check A phi(g)(w) against g(w) - E g(D).

    phi is rebuilt on independent sample groups; the spread of the group
    generator values gives the Monte Carlo part of the tolerance, and a
    node-halving run on the first group gives the quadrature part.
    """
    per_group = inner_samples // groups
    lhs_vals = []
    for grp in range(groups):
        phi_hat = make_phi_cylinder(
            g, law, quad_points, per_group, seed.child(10 + grp)
        )
        lhs_vals.append(generator_apply(phi_hat, w, law))
    phi_half = make_phi_cylinder(
        g, law, max(8, quad_points // 2), per_group, seed.child(10)
    )
    quad_err = abs(generator_apply(phi_half, w, law) - lhs_vals[0])
    lhs = from_values(np.array(lhs_vals))
    gbar = law.mean_g(g, max(inner_samples, 4096), seed.child(0))
    rhs = g(w) - gbar.mean
    tolerance = 5.0 * lhs.stderr + 5.0 * gbar.stderr + quad_err + 1e-4
    return {
        "lhs": lhs.mean,
        "rhs": rhs,
        "gap": abs(lhs.mean - rhs),
        "tolerance": tolerance,
        "quad_error": quad_err,
        "pass": abs(lhs.mean - rhs) <= tolerance,
    }


# ---------------------------------------------------------------------------
# epsilon estimators for the abstract bound


def epsilon1_estimate(
    pair_sampler: Callable[[np.random.Generator], tuple],
    lambda_action: Callable[[PiecewiseConstantPath], PiecewiseConstantPath],
    gnorm: float,
    samples: int,
    rng: np.random.Generator,
) -> McEstimate:
    """(|g|/6) E ||(Y-Y') Lambda|| ||Y-Y'||^2 over object-layer pairs."""
    vals = np.empty(samples)
    for s in range(samples):
        y, y_prime = pair_sampler(rng)
        diff = lin_comb(1.0, y, -1.0, y_prime)
        vals[s] = sup_norm(lambda_action(diff)) * sup_norm(diff) ** 2
    est = from_values(gnorm / 6.0 * vals, name="epsilon1")
    return est


def _scaled_mc(stat_fn, samples, seed, scale, name):
    def sampler(rng, size):
        return scale * stat_fn(rng, size)

    return mc_run(sampler, samples, seed, name=name)


def epsilon1_combinatorial(
    model: comb.ArrayModel, gnorm: float, samples: int, seed: SeedSpec
) -> McEstimate:
    return _scaled_mc(
        lambda rng, size: comb.pair_norm_stats(model, rng, size),
        samples,
        seed,
        gnorm / 6.0,
        "epsilon1",
    )


def epsilon1_graph(
    model: gr.GraphModel, gnorm: float, samples: int, seed: SeedSpec
) -> McEstimate:
    return _scaled_mc(
        lambda rng, size: gr.pair_norm_stats(model, rng, size),
        samples,
        seed,
        gnorm / 6.0,
        "epsilon1",
    )


def epsilon3_estimate(model, f: CylinderFunctional, samples: int, seed: SeedSpec) -> McEstimate:
    """E R_f.  Zero identically for the graph pair; for the array model,
    the tower property turns the conditional means into plain draws of
    (1/(n s_n)) sum_ij Df(Y)[X_{i,pi(j)} 1_[i/n,1]]."""
    if isinstance(model, gr.GraphModel):
        return McEstimate(count=samples, mean=0.0, m2=0.0, name="epsilon3")
    if isinstance(model, comb.ArrayModel):
        return mc_run(
            lambda rng, size: comb.eps3_values(model, f, rng, size),
            samples,
            seed,
            name="epsilon3",
        )
    raise TypeError("unsupported model type %r" % type(model).__name__)
