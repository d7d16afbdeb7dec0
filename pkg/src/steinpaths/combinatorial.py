"""Random-array permutation statistics and their Gaussian pre-limit.

The model is an n x n array of independent entries X_ij with means c_ij
(vanishing row and column means), variances sigma_ij^2 and finite third
absolute moments.  A uniform random permutation pi turns the array into
the step process

    Y_n(t) = (1/s_n) sum_{i <= floor(nt)} X_{i,pi(i)},
    s_n^2  = (1/n) sum sigma_ij^2 + (1/(n-1)) sum c_ij^2,

whose exchangeable pair swaps the images of two uniformly chosen rows.
The matching pre-limit is D_n(t) = (1/s_n) sum_{i <= floor(nt)} Zhat_i
with Zhat_i = (1/sqrt(n-1)) sum_l X''_il (Z_il - mean_j Z_jl) built from
an independent array copy and iid standard normals; its covariance is

    E Zhat_i^2      = (1/n) sum_l (sigma_il^2 + c_il^2),
    E Zhat_i Zhat_j = -(1/(n(n-1))) sum_k c_ik c_jk      (i != j).

The distance bound evaluator implements the five-index moment sum
(factorized to O(n^2) aggregates, with the naive O(n^5) loop kept as an
oracle) plus the 2/sqrt(n) remainder term and a final variance term; a
third-moment variant of the final term is reported alongside.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .functionals import CylinderFunctional
from .paths import PiecewiseConstantPath, as_time, grid_path

__all__ = [
    "ModelError",
    "DegenerateModelError",
    "EntrySpec",
    "constant_entry",
    "gaussian_entry",
    "rademacher_entry",
    "two_point_entry",
    "ArrayModel",
    "double_center",
    "DETERMINISTIC_3X3",
    "s_n_squared",
    "CombinatorialRealization",
    "sample_y",
    "sample_pair",
    "apply_swap",
    "regression_residual",
    "zhat_cov",
    "zhat_cov_matrix",
    "cov_d",
    "sample_dn",
    "sample_y_values",
    "sample_zhat_values",
    "sample_dn_values",
    "pair_norm_stats",
    "eps3_values",
    "bound_prelimit_distance",
    "bound_prelimit_distance_report",
    "bound_beta3",
    "assumption_diagnostic",
]

_FAM_CONSTANT, _FAM_GAUSSIAN, _FAM_RADEMACHER, _FAM_TWO_POINT = range(4)

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class ModelError(ValueError):
    pass


class DegenerateModelError(ModelError):
    pass


def _std_normal_cdf(a: float) -> float:
    return 0.5 * (1.0 + math.erf(a / math.sqrt(2.0)))


def _std_normal_pdf(a: float) -> float:
    return math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)


def _abs_moments_gaussian(mean: float, sd: float) -> tuple[float, float]:
    """(E|X|, E|X|^3) for X ~ N(mean, sd^2), sd > 0."""
    a = mean / sd
    phi, Phi = _std_normal_pdf(a), _std_normal_cdf(a)
    m1 = sd * (2.0 * phi + a * (2.0 * Phi - 1.0))
    m3 = sd**3 * ((a**3 + 3.0 * a) * (2.0 * Phi - 1.0) + (a * a + 2.0) * 2.0 * phi)
    return m1, m3


@dataclass(frozen=True)
class EntrySpec:
    """One array entry: distribution family plus closed-form moments."""

    family: int
    p0: float
    p1: float = 0.0
    p2: float = 0.0
    mean: float = 0.0
    var: float = 0.0
    abs1: float = 0.0  # E|X|
    abs3: float = 0.0  # E|X|^3

    @property
    def abs2(self) -> float:
        return self.var + self.mean**2


def constant_entry(value: float) -> EntrySpec:
    v = float(value)
    return EntrySpec(_FAM_CONSTANT, v, mean=v, var=0.0, abs1=abs(v), abs3=abs(v) ** 3)


def gaussian_entry(mean: float, var: float) -> EntrySpec:
    mean, var = float(mean), float(var)
    if var < 0:
        raise ModelError("variance must be nonnegative")
    if var == 0:
        return constant_entry(mean)
    sd = math.sqrt(var)
    m1, m3 = _abs_moments_gaussian(mean, sd)
    return EntrySpec(_FAM_GAUSSIAN, mean, sd, mean=mean, var=var, abs1=m1, abs3=m3)


def rademacher_entry(mean: float, scale: float) -> EntrySpec:
    """X = mean + scale * R with R = +-1 equally likely."""
    mean, scale = float(mean), float(scale)
    m1 = 0.5 * (abs(mean + scale) + abs(mean - scale))
    m3 = 0.5 * (abs(mean + scale) ** 3 + abs(mean - scale) ** 3)
    return EntrySpec(
        _FAM_RADEMACHER, mean, scale, mean=mean, var=scale**2, abs1=m1, abs3=m3
    )


def two_point_entry(x1: float, p1: float, x2: float) -> EntrySpec:
    x1, p1, x2 = float(x1), float(p1), float(x2)
    if not 0.0 <= p1 <= 1.0:
        raise ModelError("two-point probability outside [0,1]")
    mean = p1 * x1 + (1 - p1) * x2
    var = p1 * x1**2 + (1 - p1) * x2**2 - mean**2
    m1 = p1 * abs(x1) + (1 - p1) * abs(x2)
    m3 = p1 * abs(x1) ** 3 + (1 - p1) * abs(x2) ** 3
    return EntrySpec(_FAM_TWO_POINT, x1, p1, x2, mean=mean, var=var, abs1=m1, abs3=m3)


DETERMINISTIC_3X3 = [[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]


def double_center(matrix) -> np.ndarray:
    """c - rowmean - colmean + grandmean: exact vanishing row/col means."""
    c = np.asarray(matrix, dtype=float)
    return c - c.mean(axis=1, keepdims=True) - c.mean(axis=0, keepdims=True) + c.mean()


class ArrayModel:
    """n x n array of independent entries with certified moment data."""

    def __init__(self, entries: Sequence[Sequence[EntrySpec]]) -> None:
        n = len(entries)
        if n < 2 or any(len(row) != n for row in entries):
            raise ModelError("entries must form an n x n grid with n >= 2")
        self.n = n
        self.entries = tuple(tuple(row) for row in entries)
        get = np.vectorize(lambda e, attr: getattr(e, attr), otypes=[float])
        flat = np.array(self.entries, dtype=object)
        self.family = np.array([[e.family for e in row] for row in entries])
        self.c = get(flat, "mean")
        self.sigma2 = get(flat, "var")
        self.abs1 = get(flat, "abs1")
        self.abs2 = self.sigma2 + self.c**2
        self.abs3 = get(flat, "abs3")
        self.p0 = get(flat, "p0")
        self.p1 = get(flat, "p1")
        self.p2 = get(flat, "p2")
        self._validate()

    def _validate(self) -> None:
        n = self.n
        row = np.abs(self.c.mean(axis=1))
        col = np.abs(self.c.mean(axis=0))
        if row.max() > 1e-12 or col.max() > 1e-12:
            raise ModelError(
                "row/column means of the entry means must vanish "
                "(max |rowmean|=%.2e, |colmean|=%.2e); see double_center"
                % (row.max(), col.max())
            )
        # Lyapunov consistency E|X|^3 >= (E X^2)^(3/2) >= sigma^3
        if np.any(self.abs3 < self.sigma2**1.5 - 1e-9):
            raise ModelError("third absolute moments inconsistent with variances")
        if s_n_squared(self) <= 0:
            raise DegenerateModelError("s_n^2 must be positive")

    @property
    def s_n(self) -> float:
        return math.sqrt(s_n_squared(self))

    # -- constructors -----------------------------------------------------

    @classmethod
    def iid_gaussian(cls, n: int) -> "ArrayModel":
        e = gaussian_entry(0.0, 1.0)
        return cls([[e] * n for _ in range(n)])

    @classmethod
    def deterministic(cls, matrix=None) -> "ArrayModel":
        matrix = DETERMINISTIC_3X3 if matrix is None else matrix
        c = np.asarray(matrix, dtype=float)
        return cls([[constant_entry(v) for v in row] for row in c])

    @classmethod
    def iid_rademacher(cls, n: int, scale: float = 1.0) -> "ArrayModel":
        e = rademacher_entry(0.0, scale)
        return cls([[e] * n for _ in range(n)])

    @classmethod
    def from_json_dict(cls, d: dict) -> "ArrayModel":
        preset = d.get("preset")
        if preset == "iid-gaussian":
            return cls.iid_gaussian(int(d["n"]))
        if preset == "iid-rademacher":
            return cls.iid_rademacher(int(d["n"]), float(d.get("scale", 1.0)))
        if preset == "deterministic":
            return cls.deterministic(d.get("matrix"))
        if preset is not None:
            raise ModelError("unknown preset %r" % preset)
        n = int(d["n"])
        grid = [[constant_entry(0.0)] * n for _ in range(n)]
        for item in d["entries"]:
            i, j = int(item["i"]) - 1, int(item["j"]) - 1
            dist = item["dist"]
            if dist == "constant":
                e = constant_entry(item["value"])
            elif dist == "gaussian":
                e = gaussian_entry(item.get("mean", 0.0), item["var"])
            elif dist == "rademacher-shifted":
                e = rademacher_entry(item.get("mean", 0.0), item["scale"])
            elif dist == "two-point":
                e = two_point_entry(item["x1"], item["p1"], item["x2"])
            else:
                raise ModelError("unknown dist %r" % dist)
            grid[i][j] = e
        return cls(grid)


def s_n_squared(model: ArrayModel) -> float:
    """(1/n) sum sigma_ij^2 + (1/(n-1)) sum c_ij^2; the variance of the
    full permutation sum."""
    n = model.n
    s2 = float(model.sigma2.sum()) / n + float((model.c**2).sum()) / (n - 1)
    if s2 <= 0:
        raise DegenerateModelError("s_n^2 = %g is not positive" % s2)
    return s2


def _sample_full(model: ArrayModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, n, n) array draws; two variate planes per entry, fixed order."""
    n = model.n
    normals = rng.standard_normal((size, n, n))
    uniforms = rng.random((size, n, n))
    fam = model.family
    x = np.broadcast_to(model.p0, (size, n, n)).copy()
    g = fam == _FAM_GAUSSIAN
    if g.any():
        x[:, g] = model.p0[g] + model.p1[g] * normals[:, g]
    r = fam == _FAM_RADEMACHER
    if r.any():
        signs = np.where(uniforms[:, r] < 0.5, -1.0, 1.0)
        x[:, r] = model.p0[r] + model.p1[r] * signs
    t = fam == _FAM_TWO_POINT
    if t.any():
        x[:, t] = np.where(uniforms[:, t] < model.p1[t], model.p0[t], model.p2[t])
    return x


def _sample_at(model, rng, rows, cols) -> np.ndarray:
    """Independent draws from the entry laws at index arrays (rows, cols)."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    normals = rng.standard_normal(rows.shape)
    uniforms = rng.random(rows.shape)
    fam = model.family[rows, cols]
    p0 = model.p0[rows, cols]
    p1 = model.p1[rows, cols]
    p2 = model.p2[rows, cols]
    x = p0.copy()
    g = fam == _FAM_GAUSSIAN
    x[g] = p0[g] + p1[g] * normals[g]
    r = fam == _FAM_RADEMACHER
    x[r] = p0[r] + p1[r] * np.where(uniforms[r] < 0.5, -1.0, 1.0)
    t = fam == _FAM_TWO_POINT
    x[t] = np.where(uniforms[t] < p1[t], p0[t], p2[t])
    return x


def _path_from_diag(model: ArrayModel, x: np.ndarray, pi: np.ndarray) -> PiecewiseConstantPath:
    picks = x[np.arange(model.n), pi]
    vals = np.concatenate([[0.0], np.cumsum(picks) / model.s_n])
    return grid_path(vals, model.n)


@dataclass
class CombinatorialRealization:
    """One (X, pi) draw together with the assembled step path."""

    model: ArrayModel
    x: np.ndarray            # (n, n) realized array
    pi: np.ndarray           # permutation, 0-based
    path: PiecewiseConstantPath

    @property
    def n(self) -> int:
        return self.model.n


def sample_y(model: ArrayModel, rng: np.random.Generator) -> CombinatorialRealization:
    """Sample X entrywise, pi uniform (Fisher-Yates), assemble the path."""
    x = _sample_full(model, rng, 1)[0]
    pi = rng.permutation(model.n)
    return CombinatorialRealization(model, x, pi, _path_from_diag(model, x, pi))


def apply_swap(real: CombinatorialRealization, i: int, j: int) -> CombinatorialRealization:
    """Swap the permutation images of rows i and j (1-based); X unchanged."""
    pi = real.pi.copy()
    pi[[i - 1, j - 1]] = pi[[j - 1, i - 1]]
    return CombinatorialRealization(real.model, real.x, pi, _path_from_diag(real.model, real.x, pi))


def sample_pair(model: ArrayModel, rng: np.random.Generator):
    """Exchangeable pair: resample (I,J) uniform among ordered distinct rows
    and swap their permutation images."""
    real = sample_y(model, rng)
    i, j = (rng.permutation(model.n)[:2] + 1).tolist()
    return real, apply_swap(real, i, j), (i, j)


def regression_residual(real: CombinatorialRealization, f: CylinderFunctional) -> float:
    """|LHS - RHS| of the exchangeable-pair linear regression identity.

    LHS averages Df(Y)[Y - Y'_(i,j)] over all ordered pairs i != j; RHS is
    (2/(n-1)) (Df(Y)[Y] - (1/(n s_n)) sum_{i,j} Df(Y)[X_{i,pi(j)} 1_[i/n,1]]).
    Both sides are exact given the realization (the (I,J)-average is a
    finite sum and Df(Y)[.] is linear), so the residual is roundoff only.
    """
    model, n, s = real.model, real.n, real.model.s_n
    grads = f.grad_stacked(f.stack(real.path)).reshape(f.k, f.dim)[:, 0]
    cuts = np.array([int(n * t) for t in f.times])  # floor(n t_a), exact

    picks = real.x[np.arange(n), real.pi]  # X_{i, pi(i)}
    lhs = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            u = picks[i] - real.x[i, real.pi[j]]
            v = picks[j] - real.x[j, real.pi[i]]
            h_at = (u * (i + 1 <= cuts) + v * (j + 1 <= cuts)) / s
            lhs += float(grads @ h_at)
    lhs /= n * (n - 1)

    df_y = float(grads @ np.array([real.path(t)[0] for t in f.times]))
    row_prefix = np.concatenate([[0.0], np.cumsum(real.x.sum(axis=1))])
    correction = float(grads @ row_prefix[cuts]) / (n * s)
    rhs = 2.0 / (n - 1) * (df_y - correction)
    return abs(lhs - rhs)


def zhat_cov(model: ArrayModel, i: int, j: int) -> float:
    """Closed-form Cov(Zhat_i, Zhat_j); i, j are 1-based."""
    n = model.n
    if not (1 <= i <= n and 1 <= j <= n):
        raise ModelError("indices outside 1..n")
    if i == j:
        return float(model.abs2[i - 1].sum()) / n
    return -float((model.c[i - 1] * model.c[j - 1]).sum()) / (n * (n - 1))


def zhat_cov_matrix(model: ArrayModel) -> np.ndarray:
    n = model.n
    out = -(model.c @ model.c.T) / (n * (n - 1))
    np.fill_diagonal(out, model.abs2.sum(axis=1) / n)
    return out


def cov_d(model: ArrayModel, s, t) -> float:
    """Closed-form Cov(D_n(s), D_n(t)) = sum of Zhat covariances over the
    index box, divided by s_n^2."""
    ks = int(model.n * as_time(s))
    kt = int(model.n * as_time(t))
    zc = zhat_cov_matrix(model)
    return float(zc[:ks, :kt].sum()) / s_n_squared(model)


def sample_zhat_values(model: ArrayModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, n) draws of (Zhat_1, ..., Zhat_n)."""
    n = model.n
    x2 = _sample_full(model, rng, size)
    z = rng.standard_normal((size, n, n))
    z_centered = z - z.mean(axis=1, keepdims=True)  # subtract column means
    return np.einsum("sil,sil->si", x2, z_centered) / math.sqrt(n - 1)


def sample_dn_values(model: ArrayModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, n+1) grid values of D_n at t = k/n."""
    zhat = sample_zhat_values(model, rng, size)
    out = np.zeros((size, model.n + 1))
    out[:, 1:] = np.cumsum(zhat, axis=1) / model.s_n
    return out


def sample_dn(model: ArrayModel, rng: np.random.Generator) -> PiecewiseConstantPath:
    return grid_path(sample_dn_values(model, rng, 1)[0], model.n)


def sample_y_values(model: ArrayModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """(size, n+1) grid values of Y_n at t = k/n."""
    n = model.n
    pi = np.argsort(rng.random((size, n)), axis=1)
    rows = np.broadcast_to(np.arange(n), (size, n))
    picks = _sample_at(model, rng, rows, pi)
    out = np.zeros((size, n + 1))
    out[:, 1:] = np.cumsum(picks, axis=1) / model.s_n
    return out


def pair_norm_stats(model: ArrayModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draws of ||(Y-Y') Lambda_n|| * ||Y-Y'||^2 with Lambda_n = (n-1)/4.

    Only the four affected entries matter: with rows (I,J) and columns
    (pi(I), pi(J)) uniform ordered distinct pairs, Y-Y' jumps by
    u = X_{I pi(I)} - X_{I pi(J)} at I/n and v = X_{J pi(J)} - X_{J pi(I)}
    at J/n, so the sup norm is max(|first jump alone|, |u+v|)/s_n.
    """
    n = model.n
    ij = np.argsort(rng.random((size, n)), axis=1)[:, :2]
    kl = np.argsort(rng.random((size, n)), axis=1)[:, :2]
    i_, j_ = ij[:, 0], ij[:, 1]
    k_, l_ = kl[:, 0], kl[:, 1]
    x_ik = _sample_at(model, rng, i_, k_)
    x_jl = _sample_at(model, rng, j_, l_)
    x_il = _sample_at(model, rng, i_, l_)
    x_jk = _sample_at(model, rng, j_, k_)
    u = x_ik - x_il
    v = x_jl - x_jk
    first = np.where(i_ < j_, u, v)
    sup = np.maximum(np.abs(first), np.abs(u + v)) / model.s_n
    return (n - 1) / 4.0 * sup**3


def eps3_values(
    model: ArrayModel, f: CylinderFunctional, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Draws of the regression remainder R_f via the tower property:
    (1/(n s_n)) sum_{i,j} Df(Y)[X_{i,pi(j)} 1_[i/n,1]]."""
    n, s = model.n, model.s_n
    x = _sample_full(model, rng, size)
    pi = np.argsort(rng.random((size, n)), axis=1)
    picks = x[np.arange(size)[:, None], np.arange(n)[None, :], pi]
    y_grid = np.zeros((size, n + 1))
    y_grid[:, 1:] = np.cumsum(picks, axis=1) / s
    cuts = np.array([int(n * t) for t in f.times])
    stacked = y_grid[:, cuts]  # (size, k); dim 1
    grads = f.grad_stacked(stacked)  # (size, k)
    row_prefix = np.concatenate(
        [np.zeros((size, 1)), np.cumsum(x.sum(axis=2), axis=1)], axis=1
    )
    return np.einsum("sk,sk->s", grads, row_prefix[:, cuts]) / (n * s)


# ---------------------------------------------------------------------------
# distance bound evaluators


def _five_index_sum_factorized(model: ArrayModel) -> float:
    """The five-index moment sum, factorized over independent indices.

    Writing a = E|X|, b = E|X|^2, m = E|X|^3 and Q_ij = sum_r |c_ir c_jr|,
    each of the ten summand families depends on at most four of the five
    indices, so free indices contribute powers of n and the rest collapse
    to row/column aggregates; everything is O(n^2).
    """
    n = float(model.n)
    a, b, m = model.abs1, model.abs2, model.abs3
    a_row = a.sum(axis=1)
    a_col = a.sum(axis=0)
    b_row = b.sum(axis=1)
    b_col = b.sum(axis=0)
    a_tot = float(a.sum())
    b_tot = float(b.sum())
    absc = np.abs(model.c)
    v_col = absc.sum(axis=0)                  # column sums of |c|
    w_col = a_row @ absc                      # w_r = sum_i a_row_i |c_ir|
    sum_q = float(v_col @ v_col)              # sum_ij Q_ij
    sum_arow_q = float(w_col @ v_col)         # sum_ij a_row_i Q_ij

    total = 3.0 * n**3 * float(m.sum())
    total += 5.0 * n**2 * float(a_row @ b_row)
    total += 7.0 * n * b_tot * a_tot
    total += 5.0 * n**2 * float(b_col @ a_col)
    total += 16.0 * n * float(a_row @ a @ a_col)
    total += 2.0 * n * float((a_row**3).sum())
    total += 4.0 * float((a_row**2).sum()) * a_tot
    total += 6.0 * float((a_col**2).sum()) * a_tot
    total += 2.0 * n * float((a_col**3).sum())
    # family with the inner (1/n) sum over r of (E|X_ir|^2 + |c_ir c_jr|)
    total += (2.0 / n) * (
        n**3 * float(a_row @ b_row)
        + 2.0 * n**2 * sum_arow_q
        + 3.0 * n**2 * a_tot * b_tot
        + 2.0 * n * a_tot * sum_q
    )
    return total


def _five_index_sum_naive(model: ArrayModel) -> float:
    """Literal five nested loops over the ten summand families; oracle only."""
    n = model.n
    a, b, m = model.abs1, model.abs2, model.abs3
    absc = np.abs(model.c)
    q = absc @ absc.T  # Q_ij = sum_r |c_ir||c_jr|
    b_row = b.sum(axis=1)
    total = 0.0
    for i, j, k, l, u in itertools.product(range(n), repeat=5):
        total += (
            3.0 * m[i, k]
            + 5.0 * a[i, k] * b[i, l]
            + 7.0 * b[i, k] * a[j, l]
            + 5.0 * b[i, k] * a[j, k]
            + 16.0 * a[i, k] * a[i, l] * a[j, l]
            + 2.0 * a[i, u] * a[i, k] * a[i, l]
            + 4.0 * a[i, u] * a[i, l] * a[j, k]
            + 6.0 * a[u, k] * a[i, k] * a[j, l]
            + 2.0 * a[u, k] * a[i, k] * a[j, k]
            + (1.0 / n)
            * (2.0 * a[i, k] + 2.0 * a[j, l] + 2.0 * a[u, k] + 2.0 * a[u, l])
            * (b_row[i] + q[i, j])
        )
    return total


def bound_prelimit_distance_report(model: ArrayModel, gnorm_m1: float, naive: bool = False) -> dict:
    """All terms of the pre-limit distance bound, scaled by gnorm_m1.

    ``total`` uses the variance form of the final term;
    ``total_third_moment_variant`` replaces it by the pair-distance moment
    expression 4 |g| sum E|X|^3 / (3 n s^3).
    """
    if gnorm_m1 < 0:
        raise ModelError("gnorm must be nonnegative")
    n = model.n
    s2 = s_n_squared(model)
    s3 = s2**1.5
    big = _five_index_sum_naive(model) if naive else _five_index_sum_factorized(model)
    sum_term = gnorm_m1 * big / (n**3 * (n - 1) * s3)
    sqrt_term = 2.0 * gnorm_m1 / math.sqrt(n)
    final_var = 4.0 * gnorm_m1 * float(model.sigma2.sum()) / (3.0 * n * s2)
    final_third = 4.0 * gnorm_m1 * float(model.abs3.sum()) / (3.0 * n * s3)
    return {
        "five_index_term": sum_term,
        "sqrt_term": sqrt_term,
        "final_term_variance": final_var,
        "final_term_third_moment": final_third,
        "total": sum_term + sqrt_term + final_var,
        "total_third_moment_variant": sum_term + sqrt_term + final_third,
    }


def bound_prelimit_distance(model: ArrayModel, gnorm_m1: float, naive: bool = False) -> float:
    """Pre-limit distance bound: five-index sum + 2|g|/sqrt(n) + final
    variance term."""
    return bound_prelimit_distance_report(model, gnorm_m1, naive=naive)["total"]


def bound_beta3(
    n: int, s_n: float, beta3: float, c, sigma_sq_total: float, gnorm_m1: float
) -> float:
    """Simplified bound under E|X_ik|^3 <= beta3 for all entries:

    |g| ( 58 b3 n^2 / ((n-1) s^3) + 8 b3^(1/3) sum|c_ir c_jr| / (n(n-1)s^3)
          + 2/sqrt(n) + 4 sum sigma^2 / (3 n s^2) ).
    """
    if beta3 < 0 or s_n <= 0:
        raise ModelError("need beta3 >= 0 and s_n > 0")
    absc = np.abs(np.asarray(c, dtype=float))
    v_col = absc.sum(axis=0)
    c_term_sum = float(v_col @ v_col)  # sum_{i,j,r} |c_ir c_jr|
    s3 = s_n**3
    return gnorm_m1 * (
        58.0 * beta3 * n**2 / ((n - 1) * s3)
        + 8.0 * beta3 ** (1.0 / 3.0) * c_term_sum / (n * (n - 1) * s3)
        + 2.0 / math.sqrt(n)
        + 4.0 * sigma_sq_total / (3.0 * n * s_n**2)
    )


def assumption_diagnostic(model: ArrayModel, grid: Sequence) -> list[dict]:
    """Finite-n left-hand sides of the two continuous-limit conditions on
    a (t, u) grid; diagnostic only, no pass/fail.

    lhs1(t,u) = (1/(s^2 (n-1))) sum_{i<=floor(nt), j<=floor(nu), k}
                    E[X_ik X_jk] (delta_ij - 1/n)
    lhs2(t,u) = (1/s^2) sum_{i<=floor(nt), j<=floor(nu), l} E[X_il X_jl]
    """
    n = model.n
    s2 = s_n_squared(model)
    times = [as_time(t) for t in grid]
    b2_prefix = np.concatenate([[0.0], np.cumsum(model.abs2.sum(axis=1))])
    c_prefix = np.concatenate(
        [np.zeros((1, n)), np.cumsum(model.c, axis=0)], axis=0
    )
    c2_prefix = np.concatenate([[0.0], np.cumsum((model.c**2).sum(axis=1))])
    rows = []
    for t in times:
        for u in times:
            kt, ku = int(n * t), int(n * u)
            km = min(kt, ku)
            cross = float(c_prefix[kt] @ c_prefix[ku])  # includes i = j
            off_diag = cross - c2_prefix[km]
            lhs1 = (b2_prefix[km] * (1.0 - 1.0 / n) - off_diag / n) / (s2 * (n - 1))
            lhs2 = (b2_prefix[km] + off_diag) / s2
            rows.append(
                {
                    "t": str(t),
                    "u": str(u),
                    "assumption1": lhs1,
                    "assumption2": lhs2,
                }
            )
    return rows
