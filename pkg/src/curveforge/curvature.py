r"""Curvature of the volume-preserving deformation :math:`K = \rho^n g + \rho^{-m} h`.

Two independent routes to the scalar curvature of ``K``:

* a brute-force route that builds ``K`` on a grid, differentiates it with
  second-order finite differences and applies the general coordinate
  formulas for Christoffel symbols, Ricci and scalar curvature;
* closed forms in terms of ``u = log(rho)/2`` and its derivatives.

The base ``M`` is the flat torus ``T^m``.  The fibre is the interval
``[0, T]`` when ``n == 1`` (non-periodic, one-sided stencils at the ends)
and the flat torus ``T^n`` otherwise.  Grid axes are ordered base first,
then fibre.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class MetricError(ValueError):
    """Singular, indefinite or otherwise invalid metric samples."""


@dataclass(frozen=True)
class FDAxes:
    """Uniform axes with second-order central differences."""

    spacings: tuple[float, ...]
    periodic: tuple[bool, ...]

    def d(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """First derivative along grid ``axis`` (leading axes of ``arr``)."""
        h = self.spacings[axis]
        if self.periodic[axis]:
            return (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) / (2.0 * h)
        return np.gradient(arr, h, axis=axis, edge_order=2)

    def d2(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """Second derivative with the compact three-point stencil."""
        h = self.spacings[axis]
        if self.periodic[axis]:
            return (np.roll(arr, -1, axis=axis) - 2.0 * arr + np.roll(arr, 1, axis=axis)) / h**2
        return _fd_second(arr, axis, h)

    def dd(self, arr: np.ndarray, a: int, b: int) -> np.ndarray:
        """Mixed or pure second partial ``d_a d_b``."""
        if a == b:
            return self.d2(arr, a)
        return self.d(self.d(arr, a), b)


def _spectral_diff(arr: np.ndarray, axis: int, length: float, order: int) -> np.ndarray:
    n = arr.shape[axis]
    k = np.fft.fftfreq(n, d=length / (TWO_PI * n))
    if order % 2:
        k = np.where(np.abs(k) == np.abs(k).max(), 0.0, k) if n % 2 == 0 else k
    shape = [1] * arr.ndim
    shape[axis] = n
    mult = ((1j * k) ** order).reshape(shape)
    return np.fft.ifft(np.fft.fft(arr, axis=axis) * mult, axis=axis).real


def _fd_second(arr: np.ndarray, axis: int, h: float) -> np.ndarray:
    a = np.moveaxis(arr, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / h**2
    out[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / h**2
    out[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class ProductManifoldSpec:
    """Grid description of ``T^m x N`` with base and fibre metrics.

    ``x_points``/``y_points`` give the points per axis (an int applies to
    every axis of that factor).  ``g`` has shape ``(*x_shape, m, m)`` and
    ``h`` shape ``(*y_shape, n, n)``; ``None`` means the identity.  For
    ``n == 1`` the fibre is ``[0, T]`` sampled at ``y_points`` nodes
    including both ends.
    """

    m: int
    n: int
    x_points: int | tuple[int, ...] = 32
    y_points: int | tuple[int, ...] = 33
    T: float = 1.0
    g: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive")
        xp = self.x_points
        yp = self.y_points
        xp = (xp,) * self.m if np.isscalar(xp) else tuple(int(p) for p in xp)
        yp = (yp,) * self.n if np.isscalar(yp) else tuple(int(p) for p in yp)
        if len(xp) != self.m or len(yp) != self.n:
            raise ValueError("one point count per axis required")
        if min(xp + yp) < 4:
            raise ValueError("need at least 4 points per axis")
        object.__setattr__(self, "x_points", xp)
        object.__setattr__(self, "y_points", yp)
        for name, mat, dim, shape in (("g", self.g, self.m, xp), ("h", self.h, self.n, yp)):
            if mat is None:
                continue
            mat = np.asarray(mat, dtype=float)
            if mat.shape != (*shape, dim, dim):
                raise ValueError(f"{name} must have shape {(*shape, dim, dim)}")
            if not np.allclose(mat, np.swapaxes(mat, -1, -2), atol=1e-14):
                raise MetricError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(mat).min() <= 1e-10:
                raise MetricError(f"{name} is not positive definite")
            object.__setattr__(self, name, mat)

    @property
    def dim(self) -> int:
        return self.m + self.n

    @property
    def fiber_periodic(self) -> bool:
        return self.n > 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.x_points + self.y_points

    @property
    def periodic(self) -> tuple[bool, ...]:
        return (True,) * self.m + (self.fiber_periodic,) * self.n

    @property
    def lengths(self) -> tuple[float, ...]:
        fib = TWO_PI if self.fiber_periodic else self.T
        return (TWO_PI,) * self.m + (fib,) * self.n

    @property
    def spacings(self) -> tuple[float, ...]:
        out = []
        for L, p, per in zip(self.lengths, self.shape, self.periodic):
            out.append(L / p if per else L / (p - 1))
        return tuple(out)

    @property
    def axes(self) -> FDAxes:
        return FDAxes(self.spacings, self.periodic)

    def coordinates(self) -> list[np.ndarray]:
        return [np.arange(p) * h for p, h in zip(self.shape, self.spacings)]

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Sparse broadcastable coordinate arrays, base axes first."""
        return tuple(np.meshgrid(*self.coordinates(), indexing="ij", sparse=True))

    def sample(self, fn: Callable[..., np.ndarray]) -> np.ndarray:
        return np.array(np.broadcast_to(fn(*self.mesh()), self.shape), dtype=float)

    def interior(self, width: int = 2) -> tuple[slice, ...]:
        """Index excluding ``width`` nodes at each non-periodic end."""
        return tuple(slice(None) if per else slice(width, -width) for per in self.periodic)

    def base_metric(self) -> np.ndarray:
        """``g`` broadcast to the product grid, shape ``(*shape, m, m)``."""
        g = np.eye(self.m) if self.g is None else self.g
        if self.g is not None:
            g = g.reshape(self.x_points + (1,) * self.n + (self.m, self.m))
        return np.broadcast_to(g, self.shape + (self.m, self.m))

    def fiber_metric(self) -> np.ndarray:
        h = np.eye(self.n) if self.h is None else self.h
        if self.h is not None:
            h = h.reshape((1,) * self.m + self.y_points + (self.n, self.n))
        return np.broadcast_to(h, self.shape + (self.n, self.n))

    @property
    def is_flat(self) -> bool:
        return self.g is None and self.h is None


@dataclass(frozen=True)
class DeformationField:
    """Samples of ``u`` on the product grid; ``rho = exp(2u)``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("deformation field contains NaN or Inf")
        object.__setattr__(self, "values", vals)

    @property
    def rho(self) -> np.ndarray:
        return np.exp(2.0 * self.values)


def _as_u(spec: ProductManifoldSpec, u) -> np.ndarray:
    vals = u.values if isinstance(u, DeformationField) else DeformationField(u).values
    if vals.ndim == 0:
        return np.full(spec.shape, float(vals))
    if vals.shape != spec.shape:
        raise ValueError(f"u has shape {vals.shape}, grid is {spec.shape}")
    return vals


@dataclass(frozen=True)
class DeformedMetric:
    spec: ProductManifoldSpec
    K: np.ndarray
    K_inv: np.ndarray
    det: np.ndarray


def assemble_deformed_metric(spec: ProductManifoldSpec, u) -> DeformedMetric:
    """Build ``K_ij = rho^n g_ij``, ``K_ab = rho^-m h_ab``, ``K_ia = 0``."""
    u = _as_u(spec, u)
    m, n = spec.m, spec.n
    K = np.zeros(spec.shape + (spec.dim, spec.dim))
    K[..., :m, :m] = np.exp(2.0 * n * u)[..., None, None] * spec.base_metric()
    K[..., m:, m:] = np.exp(-2.0 * m * u)[..., None, None] * spec.fiber_metric()
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise MetricError("deformed metric is not positive definite") from exc
    det = np.linalg.det(K)
    ref = np.linalg.det(spec.base_metric()) * np.linalg.det(spec.fiber_metric())
    if np.max(np.abs(det - ref) / np.abs(ref)) > 1e-10:
        raise MetricError("volume element not preserved")
    K_inv = np.linalg.inv(K)
    return DeformedMetric(spec, K, K_inv, det)


# --- brute-force geometry ---------------------------------------------------


def christoffel_from_metric(K: np.ndarray, K_inv: np.ndarray, axes: FDAxes) -> np.ndarray:
    """``Gamma[..., a, b, c] = Gamma^a_{bc}`` by finite differences of ``K``."""
    d = K.shape[-1]
    if len(axes.spacings) != d:
        raise ValueError("metric rank does not match number of axes")
    dK = np.stack([axes.d(K, c) for c in range(d)], axis=-3)  # [..., c, a, b] = d_c K_ab
    low = 0.5 * (np.swapaxes(dK, -3, -2) + np.moveaxis(dK, -3, -1) - dK)
    del dK
    gam = np.matmul(K_inv, low.reshape(low.shape[:-2] + (d * d,)))
    gam = gam.reshape(low.shape)
    # symmetrise the lower pair to remove rounding asymmetry
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


def christoffel_fd(metric: DeformedMetric) -> np.ndarray:
    return christoffel_from_metric(metric.K, metric.K_inv, metric.spec.axes)


def lowered_christoffel(K: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """First-kind symbols with the contracted index last: ``[..., b, c, a] = K_ad Gamma^d_bc``."""
    return np.einsum("...ad,...dbc->...bca", K, gamma)


def ricci_from_christoffel(gamma: np.ndarray, axes: FDAxes) -> np.ndarray:
    """``R_ab = d_c G^c_ab - d_b G^c_ac + G^d_ab G^c_dc - G^d_ac G^c_bd``."""
    d = gamma.shape[-1]
    ric = np.zeros(gamma.shape[:-1])
    for c in range(d):
        ric += axes.d(gamma[..., c, :, :], c)
    trace = np.einsum("...cac->...a", gamma)
    for b in range(d):
        ric[..., :, b] -= axes.d(trace, b)
    ric += np.einsum("...dab,...d->...ab", gamma, trace)
    ric -= np.einsum("...dac,...cbd->...ab", gamma, gamma, optimize=True)
    return ric


def riemann_from_christoffel(gamma: np.ndarray, axes: FDAxes) -> np.ndarray:
    """``R[..., r, s, p, q] = R^r_{spq}`` with ``[D_p, D_q] B_s = -R^r_{spq} B_r``."""
    d = gamma.shape[-1]
    dG = np.stack([axes.d(gamma, p) for p in range(d)], axis=-4)  # [..., p, r, q, s]
    riem = np.einsum("...prqs->...rspq", dG) - np.einsum("...qrps->...rspq", dG)
    riem += np.einsum("...rpl,...lqs->...rspq", gamma, gamma)
    riem -= np.einsum("...rql,...lps->...rspq", gamma, gamma)
    return riem


def ricci_from_metric(K: np.ndarray, K_inv: np.ndarray, axes: FDAxes) -> np.ndarray:
    """Ricci tensor in general coordinates from first and second differences of ``K``.

    ``R_ab = d_c G^c_ab - d_b G^c_ac + G^d_ab G^c_dc - G^d_ac G^c_bd`` with the
    Christoffel derivatives expanded as
    ``d_e G^c_ab = (d_e K^cd) G_dab + K^cd d_e G_dab`` and
    ``d_e K^-1 = -K^-1 (d_e K) K^-1``, so that every second derivative of the
    metric uses a compact stencil rather than two nested first differences.
    """
    d = K.shape[-1]
    dK = [axes.d(K, e) for e in range(d)]
    low = np.stack(
        [0.5 * (dK[a][..., :, b] + dK[b][..., :, a] - dK_c_ab(dK, a, b)) for a in range(d) for b in range(d)],
        axis=-1,
    ).reshape(K.shape[:-2] + (d, d, d))  # [..., dd, a, b] = G_{dd a b}
    gamma = np.einsum("...cd,...dab->...cab", K_inv, low)
    ric = np.einsum("...dab,...cdc->...ab", gamma, gamma)
    ric -= np.einsum("...dac,...cbd->...ab", gamma, gamma, optimize=True)
    for e in range(d):
        dKinv = -K_inv @ dK[e] @ K_inv
        H = [axes.d2(K, e) if f == e else axes.d(dK[e], f) for f in range(d)]  # d_e d_f K
        dlow = np.empty_like(low)
        for a in range(d):
            for b in range(d):
                dlow[..., :, a, b] = 0.5 * (H[a][..., :, b] + H[b][..., :, a] - H_c_ab(H, a, b))
        dgam = np.einsum("...cd,...dab->...cab", dKinv, low) + np.einsum(
            "...cd,...dab->...cab", K_inv, dlow
        )
        ric += dgam[..., e, :, :]
        ric[..., :, e] -= np.einsum("...cac->...a", dgam)
    return ric


def dK_c_ab(dK: list[np.ndarray], a: int, b: int) -> np.ndarray:
    """Vector over ``c`` of ``d_c K_ab``."""
    return np.stack([dk[..., a, b] for dk in dK], axis=-1)


H_c_ab = dK_c_ab


def ricci_fd(metric: DeformedMetric) -> np.ndarray:
    return ricci_from_metric(metric.K, metric.K_inv, metric.spec.axes)


def scalar_curvature_fd(metric: DeformedMetric) -> np.ndarray:
    """Full scalar curvature field; only ``spec.interior()`` carries full accuracy."""
    ric = ricci_fd(metric)
    return np.einsum("...ab,...ab->...", metric.K_inv, ric)


def partial_traces_fd(metric: DeformedMetric) -> tuple[np.ndarray, np.ndarray]:
    """``(K^ij R_ij, K^ab R_ab)`` from the brute-force Ricci tensor."""
    m = metric.spec.m
    ric = ricci_fd(metric)
    base = np.einsum("...ij,...ij->...", metric.K_inv[..., :m, :m], ric[..., :m, :m])
    fib = np.einsum("...ij,...ij->...", metric.K_inv[..., m:, m:], ric[..., m:, m:])
    return base, fib


def ricci_identity_check(metric: np.ndarray, covector: np.ndarray, axes: FDAxes) -> float:
    """Max defect of ``[D_p, D_q] B_i = -R^n_{ipq} B_n`` for a covector field.

    Both sides are built from finite differences of the sampled metric; the
    defect vanishes at second order under refinement.
    """
    metric = np.asarray(metric, dtype=float)
    B = np.asarray(covector, dtype=float)
    d = metric.shape[-1]
    if B.shape != metric.shape[:-1]:
        raise ValueError("covector must have shape (*grid, d)")
    try:
        K_inv = np.linalg.inv(metric)
    except np.linalg.LinAlgError as exc:
        raise MetricError("singular metric") from exc
    gam = christoffel_from_metric(metric, K_inv, axes)
    dB = np.stack([axes.d(B, q) for q in range(d)], axis=-2)  # [..., q, i]
    T = dB - np.einsum("...nqi,...n->...qi", gam, B)
    dT = np.stack([axes.d(T, p) for p in range(d)], axis=-3)  # [..., p, q, i]
    S = dT - np.einsum("...npq,...ni->...pqi", gam, T) - np.einsum("...npi,...qn->...pqi", gam, T)
    lhs = S - np.swapaxes(S, -3, -2)
    riem = riemann_from_christoffel(gam, axes)
    rhs = -np.einsum("...nipq,...n->...pqi", riem, B)
    return float(np.abs(lhs - rhs).max())


def conformal_metric(phi: np.ndarray, dim: int) -> np.ndarray:
    """Samples of ``exp(2 phi) * identity``, shape ``(*phi.shape, dim, dim)``."""
    phi = np.asarray(phi, dtype=float)
    return np.exp(2.0 * phi)[..., None, None] * np.eye(dim)


# --- closed forms ---------------------------------------------------------------


class _Derivs:
    """Derivatives of a product-grid array: spectral on periodic axes,
    second-order differences on the interval axis."""

    def __init__(self, spec: ProductManifoldSpec):
        self.spec = spec

    def d1(self, arr: np.ndarray, axis: int) -> np.ndarray:
        s = self.spec
        if s.periodic[axis]:
            return _spectral_diff(arr, axis, s.lengths[axis], 1)
        return np.gradient(arr, s.spacings[axis], axis=axis, edge_order=2)

    def d2(self, arr: np.ndarray, axis: int) -> np.ndarray:
        s = self.spec
        if s.periodic[axis]:
            return _spectral_diff(arr, axis, s.lengths[axis], 2)
        return _fd_second(arr, axis, s.spacings[axis])

    def grad(self, arr, axes) -> list[np.ndarray]:
        return [self.d1(arr, a) for a in axes]

    def lap(self, arr, axes) -> np.ndarray:
        return sum(self.d2(arr, a) for a in axes)


SECOND_KIND = ("k_ij", "a_ij", "k_aj", "c_ib", "c_ab", "k_ab")
FIRST_KIND = ("ijk", "ija", "ajk", "ibc", "abk")


def family_blocks(m: int, n: int) -> dict[str, tuple[slice, slice, slice]]:
    """Index blocks of each Christoffel family inside the full tensor.

    Latin letters index the base, ``a, b, c`` the fibre.  Second-kind names
    read ``upper_lowerlower``; first-kind names list the two symmetric
    indices first and the contracted index last.
    """
    X, Y = slice(0, m), slice(m, m + n)
    return {
        "k_ij": (X, X, X),
        "a_ij": (Y, X, X),
        "k_aj": (X, Y, X),
        "c_ib": (Y, X, Y),
        "c_ab": (Y, Y, Y),
        "k_ab": (X, Y, Y),
        "ijk": (X, X, X),
        "ija": (X, X, Y),
        "ajk": (Y, X, X),
        "ibc": (X, Y, Y),
        "abk": (Y, Y, X),
    }


def christoffel_closed_form(
    spec: ProductManifoldSpec, u, point: Sequence[int] | None = None
) -> dict[str, np.ndarray]:
    """Closed-form Christoffel families of ``K`` for flat ``g`` and ``h``.

    With flat factors the coordinates are normal at every point, so the
    formulas hold on the whole grid.  Each family is returned with its
    indices trailing, e.g. ``out["k_ij"][..., k, i, j]``.
    """
    if not spec.is_flat:
        raise MetricError("closed forms are only valid for flat g and h")
    u = _as_u(spec, u)
    m, n = spec.m, spec.n
    D = _Derivs(spec)
    gx = np.stack(D.grad(u, range(m)), axis=-1)
    gy = np.stack(D.grad(u, range(m, m + n)), axis=-1)
    if point is not None:
        idx = tuple(point)
        u, gx, gy = u[idx], gx[idx], gy[idx]
    Im, In = np.eye(m), np.eye(n)
    en = np.exp(2.0 * n * u)[..., None, None, None]
    em = np.exp(-2.0 * m * u)[..., None, None, None]

    def outer(vec, eye, pattern):
        return np.einsum(pattern, vec, eye)

    # n (u_j d_ik + u_i d_jk - u_k d_ij) indexed [k, i, j]
    k_ij = n * (
        np.einsum("...j,ik->...kij", gx, Im)
        + np.einsum("...i,jk->...kij", gx, Im)
        - np.einsum("...k,ij->...kij", gx, Im)
    )
    c_ab = -m * (
        np.einsum("...b,ac->...cab", gy, In)
        + np.einsum("...a,bc->...cab", gy, In)
        - np.einsum("...c,ab->...cab", gy, In)
    )
    out = {
        "k_ij": k_ij,
        "a_ij": -n * np.exp(2.0 * (m + n) * u)[..., None, None, None]
        * outer(gy, Im, "...a,ij->...aij"),
        "k_aj": n * outer(gy, Im, "...a,jk->...kaj"),
        "c_ib": -m * outer(gx, In, "...i,cb->...cib"),
        "c_ab": c_ab,
        "k_ab": m * np.exp(-2.0 * (m + n) * u)[..., None, None, None]
        * outer(gx, In, "...k,ab->...kab"),
        "ijk": en * np.moveaxis(k_ij, -3, -1),
        "ija": -n * en * outer(gy, Im, "...a,ij->...ija"),
        "ajk": n * en * outer(gy, Im, "...a,jk->...ajk"),
        "ibc": -m * em * outer(gx, In, "...i,bc->...ibc"),
        "abk": m * em * outer(gx, In, "...k,ab->...abk"),
    }
    return out


def families_from_tensor(
    spec: ProductManifoldSpec, gamma: np.ndarray, K: np.ndarray
) -> dict[str, np.ndarray]:
    """Cut a full Christoffel tensor into the named families."""
    low = lowered_christoffel(K, gamma)
    out = {}
    for name, (s0, s1, s2) in family_blocks(spec.m, spec.n).items():
        src = gamma if name in SECOND_KIND else low
        out[name] = src[..., s0, s1, s2]
    return out


def trace_identities(spec: ProductManifoldSpec, fam: dict[str, np.ndarray]) -> tuple[float, float]:
    """Max of ``|sum_A G^A_{iA}|`` and ``|sum_A G^A_{aA}|`` over the grid."""
    base = np.einsum("...kik->...i", fam["k_ij"]) + np.einsum("...cic->...i", fam["c_ib"])
    fib = np.einsum("...kak->...a", fam["k_aj"]) + np.einsum("...cac->...a", fam["c_ab"])
    return float(np.abs(base).max()), float(np.abs(fib).max())


def conformal_scalar_curvature(phi: np.ndarray, grad_phi, lap_phi, dim: int) -> np.ndarray:
    """Scalar curvature of ``exp(2 phi) delta`` on a flat ``dim``-torus."""
    grad_sq = sum(g * g for g in grad_phi)
    return -np.exp(-2.0 * phi) * (2.0 * (dim - 1) * lap_phi + (dim - 2) * (dim - 1) * grad_sq)


def scalar_curvature_formula(
    spec: ProductManifoldSpec,
    u,
    R_g: np.ndarray | float | None = None,
    R_h: np.ndarray | float | None = None,
    base_conformal_factor: np.ndarray | None = None,
) -> np.ndarray:
    r"""Closed-form scalar curvature of :math:`e^{2nu}g + e^{-2mu}h`.

    .. math::

        \tilde R = e^{-2nu}R_g + e^{2mu}R_h + 2n e^{-2nu}\Delta_g u
                   - 2m e^{2mu}\Delta_h u
                   - n(nm+2n+m^2) e^{-2nu}|\nabla_g u|_g^2
                   - m(nm+2m+n^2) e^{2mu}|\nabla_h u|_h^2

    ``h`` must be flat.  A curved base is supported when it is conformally
    flat, ``g = exp(2 phi) delta``, with ``phi`` given on the base grid as
    ``base_conformal_factor``; ``R_g`` is then computed unless supplied.
    """
    u = _as_u(spec, u)
    m, n = spec.m, spec.n
    if spec.h is not None:
        raise MetricError("the fibre metric must be flat")
    D = _Derivs(spec)
    xs, ys = range(m), range(m, m + n)
    gx = D.grad(u, xs)
    lap_x = D.lap(u, xs)
    grad_x_sq = sum(g * g for g in gx)
    if spec.g is not None:
        if base_conformal_factor is None:
            raise MetricError("curved base needs its conformal factor")
        phi = np.asarray(base_conformal_factor, dtype=float).reshape(
            spec.x_points + (1,) * n
        )
        phi = np.broadcast_to(phi, spec.shape)
        gphi = D.grad(phi, xs)
        conf = np.exp(-2.0 * phi)
        lap_x = conf * (lap_x + (m - 2) * sum(a * b for a, b in zip(gphi, gx)))
        grad_x_sq = conf * grad_x_sq
        if R_g is None:
            R_g = conformal_scalar_curvature(phi, gphi, D.lap(phi, xs), m)
    R_g = 0.0 if R_g is None else R_g
    R_h = 0.0 if R_h is None else R_h
    lap_y = D.lap(u, ys)
    grad_y_sq = sum(g * g for g in D.grad(u, ys))
    e_n = np.exp(-2.0 * n * u)
    e_m = np.exp(2.0 * m * u)
    return (
        e_n * R_g
        + e_m * R_h
        + 2 * n * e_n * lap_x
        - 2 * m * e_m * lap_y
        - n * (n * m + 2 * n + m * m) * e_n * grad_x_sq
        - m * (n * m + 2 * m + n * n) * e_m * grad_y_sq
    )


def base_partial_trace(
    m: int, n: int, rho, lap_base_log, lap_fiber_log, grad_base_log_sq, grad_fiber_log_sq
):
    r"""``K^{ij} R_ij`` for flat factors in terms of :math:`\log\rho`.

    ``lap_*_log`` and ``grad_*_log_sq`` are Laplacians and squared
    gradients of ``log(rho)`` on the base and fibre.  Interchanging the
    factors (``rho -> 1/rho``, ``m <-> n``, base <-> fibre) gives the fibre
    trace.
    """
    return (
        (2 - m) / 2 * rho ** (-n) * n * lap_base_log
        - m / 2 * rho**m * n * lap_fiber_log
        - n / 4 * (-n * m + 2 * n + m * m) * rho ** (-n) * grad_base_log_sq
        - m * m * n / 2 * rho**m * grad_fiber_log_sq
    )


def partial_traces_formula(spec: ProductManifoldSpec, u) -> tuple[np.ndarray, np.ndarray]:
    """Base and fibre traces; the fibre one comes from the swapped base formula."""
    if not spec.is_flat:
        raise MetricError("partial-trace formulas need flat g and h")
    u = _as_u(spec, u)
    m, n = spec.m, spec.n
    D = _Derivs(spec)
    xs, ys = range(m), range(m, m + n)
    logrho = 2.0 * u
    lb, lf = D.lap(logrho, xs), D.lap(logrho, ys)
    gb = sum(g * g for g in D.grad(logrho, xs))
    gf = sum(g * g for g in D.grad(logrho, ys))
    rho = np.exp(logrho)
    base = base_partial_trace(m, n, rho, lb, lf, gb, gf)
    # swap: rho -> 1/rho flips log(rho), squared gradients are unchanged
    fiber = base_partial_trace(n, m, 1.0 / rho, -lf, -lb, gf, gb)
    return base, fiber


# --- convergence studies --------------------------------------------------------


@dataclass
class ConvergenceRow:
    resolution: int
    identity: str
    max_error: float
    ratio: float | None


@dataclass
class ConvergenceStudy:
    identity: str
    rows: list[ConvergenceRow] = field(default_factory=list)

    @property
    def errors(self) -> list[float]:
        return [r.max_error for r in self.rows]

    @property
    def ratios(self) -> list[float]:
        return [r.ratio for r in self.rows if r.ratio is not None]


def halving_ratios(errors: Sequence[float]) -> list[float | None]:
    out: list[float | None] = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(a / b if b > 0 else float("inf"))
    return out


def convergence_study(
    identity: str, resolutions: Sequence[int], error_at: Callable[[int], float]
) -> ConvergenceStudy:
    errs = [float(error_at(N)) for N in resolutions]
    rows = [
        ConvergenceRow(N, identity, e, r)
        for N, e, r in zip(resolutions, errs, halving_ratios(errs))
    ]
    return ConvergenceStudy(identity, rows)
