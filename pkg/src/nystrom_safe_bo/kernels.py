"""Additive kernels built from one-dimensional squared-exponential bases.

An order-``n`` additive kernel sums, over every size-``n`` subset of the
active dimensions, the product of the per-dimension base kernels ``z_i``.
That sum is the elementary symmetric polynomial ``e_n(z)``, so every order up
to ``n_max`` comes out of one ``O(D * n_max)`` recurrence instead of an
exponential enumeration.

All inputs are expected in normalized ``[0, 1]^D`` coordinates.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_LENGTHSCALE = 0.2
DEFAULT_SIGNAL_VARIANCE = 1.0


@dataclass(frozen=True)
class BaseKernelParams:
    """Per-dimension lengthscales and signal variances of the base kernels."""

    lengthscale: tuple
    signal_variance: tuple

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscale))
        sv = tuple(float(v) for v in np.atleast_1d(self.signal_variance))
        if len(ls) != len(sv):
            raise ValueError("lengthscale and signal_variance lengths differ")
        if not all(v > 0 for v in ls):
            raise ValueError("lengthscales must be positive")
        if not all(v > 0 for v in sv):
            raise ValueError("signal variances must be positive")
        object.__setattr__(self, "lengthscale", ls)
        object.__setattr__(self, "signal_variance", sv)

    @classmethod
    def isotropic(cls, D: int, lengthscale: float = DEFAULT_LENGTHSCALE,
                  signal_variance: float = DEFAULT_SIGNAL_VARIANCE) -> "BaseKernelParams":
        return cls((lengthscale,) * D, (signal_variance,) * D)

    @property
    def n_dims(self) -> int:
        return len(self.lengthscale)


@dataclass(frozen=True)
class KernelSpec:
    """A weighted sum of additive kernels over a set of active dimensions.

    Parameters
    ----------
    dims : tuple of int
        Active dimension indices; other coordinates are ignored.
    orders : tuple of int
        Interaction orders to include, each in ``1..len(dims)``.
    base : BaseKernelParams
        Base-kernel hyperparameters, indexed by the *global* dimension.
    order_weights : tuple of float, optional
        One positive weight per order.  Defaults to
        ``variance / C(len(dims), n)`` so that each order has the same prior
        variance at unit signal variance.
    variance : float
        Scale folded into the default weights; ignored when weights are given.
    extra : tuple of KernelSpec
        Further additive terms summed into this kernel (e.g. a first-order
        term over all dimensions next to a reduced high-order term).
    """

    dims: tuple
    orders: tuple
    base: BaseKernelParams
    order_weights: tuple | None = None
    variance: float = 1.0
    extra: tuple = field(default=())

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        orders = tuple(sorted({int(n) for n in self.orders}))
        if len(set(dims)) != len(dims) or not dims:
            raise ValueError("dims must be a nonempty set of distinct indices")
        if min(dims) < 0 or max(dims) >= self.base.n_dims:
            raise ValueError("dims outside the base-kernel dimensionality")
        if not orders:
            raise ValueError("orders must be nonempty")
        if orders[0] < 1 or orders[-1] > len(dims):
            raise ValueError(f"orders must lie in 1..{len(dims)}, got {orders}")
        if self.order_weights is None:
            if not self.variance > 0:
                raise ValueError("variance must be positive")
            weights = tuple(self.variance / math.comb(len(dims), n) for n in orders)
        else:
            weights = tuple(float(w) for w in self.order_weights)
            if len(weights) != len(orders):
                raise ValueError("need one weight per order")
            if not all(w > 0 for w in weights):
                raise ValueError("order weights must be positive")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "order_weights", weights)
        object.__setattr__(self, "extra", tuple(self.extra))

    @classmethod
    def full(cls, D: int, orders, base: BaseKernelParams | None = None, **kw) -> "KernelSpec":
        """All ``D`` dimensions active."""
        base = base or BaseKernelParams.isotropic(D)
        return cls(tuple(range(D)), tuple(orders), base, **kw)

    @property
    def n_dims(self) -> int:
        return self.base.n_dims

    @property
    def all_orders(self) -> tuple:
        found = set(self.orders)
        for term in self.extra:
            found.update(term.all_orders)
        return tuple(sorted(found))

    def terms(self):
        """Yield this group and every extra group, flattened."""
        yield replace(self, extra=())
        for term in self.extra:
            yield from term.terms()

    def scaled(self, factor: float) -> "KernelSpec":
        """Same kernel with every weight multiplied by ``factor``."""
        return replace(
            self,
            order_weights=tuple(w * factor for w in self.order_weights),
            extra=tuple(t.scaled(factor) for t in self.extra),
        )

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "orders": list(self.orders),
            "order_weights": list(self.order_weights),
            "variance": self.variance,
            "lengthscale": list(self.base.lengthscale),
            "signal_variance": list(self.base.signal_variance),
            "extra": [t.to_dict() for t in self.extra],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        base = BaseKernelParams(tuple(d["lengthscale"]), tuple(d["signal_variance"]))
        return cls(
            tuple(d["dims"]), tuple(d["orders"]), base,
            order_weights=tuple(d["order_weights"]),
            variance=d.get("variance", 1.0),
            extra=tuple(cls.from_dict(t) for t in d.get("extra", [])),
        )


def base_kernel_eval(x, y, params: BaseKernelParams, dim: int):
    """Squared-exponential covariance of coordinate ``dim``; broadcasts."""
    ell = params.lengthscale[dim]
    diff = np.subtract(x, y)
    return params.signal_variance[dim] * np.exp(-0.5 * (diff / ell) ** 2)


def _check_order(n_max: int, D: int) -> None:
    if not 1 <= n_max <= D:
        raise ValueError(f"order {n_max} outside 1..{D}")


def elementary_symmetric(z, n_max: int) -> np.ndarray:
    """``e_1 .. e_{n_max}`` of the last axis of ``z``.

    Uses the summation recurrence ``e_n <- e_n + z_i * e_{n-1}`` over the
    entries of ``z``.  For nonnegative ``z`` every step adds nonnegative
    terms, so the result keeps full relative precision at every order.
    """
    z = np.asarray(z, dtype=float)
    D = z.shape[-1]
    _check_order(n_max, D)
    return np.moveaxis(_esp_stack(np.moveaxis(z, -1, 0), n_max)[1:], 0, -1)


def newton_girard(z, n_max: int) -> np.ndarray:
    """``e_1 .. e_{n_max}`` via power sums and the Newton identities.

    ``e_n = (1/n) sum_{k=1..n} (-1)^(k-1) e_{n-k} p_k`` with
    ``p_k = sum_i z_i^k``.  The alternating sum cancels badly when the
    ``z_i`` span several orders of magnitude, so kernels use
    :func:`elementary_symmetric`; this form is kept for comparison.
    """
    z = np.asarray(z, dtype=float)
    D = z.shape[-1]
    _check_order(n_max, D)
    p = [None] + [np.sum(z ** k, axis=-1) for k in range(1, n_max + 1)]
    e = [np.ones(z.shape[:-1])]
    for n in range(1, n_max + 1):
        acc = np.zeros(z.shape[:-1])
        for k in range(1, n + 1):
            acc = acc + (-1) ** (k - 1) * e[n - k] * p[k]
        e.append(acc / n)
    return np.stack(e[1:], axis=-1)


def elementary_symmetric_bruteforce(z, n: int) -> float:
    """Sum of products over all size-``n`` subsets (test oracle)."""
    return math.fsum(math.prod(c) for c in itertools.combinations(list(z), n))


def _esp_stack(zs, n_max):
    """Recurrence over an iterable of equally shaped arrays; returns e_0..e_n_max."""
    e = buf = None
    for i, zi in enumerate(zs):
        if e is None:
            e = np.zeros((n_max + 1,) + np.shape(zi))
            e[0] = 1.0
            buf = np.empty(np.shape(zi))
        for n in range(min(i + 1, n_max), 1, -1):
            np.multiply(zi, e[n - 1], out=buf)
            e[n] += buf
        e[1] += zi
    return e


def _base_cross(a, b, params: BaseKernelParams, dim: int) -> np.ndarray:
    # same values as base_kernel_eval on an outer grid, computed in place
    z = np.subtract.outer(a, b)
    z *= 1.0 / params.lengthscale[dim]
    np.square(z, out=z)
    z *= -0.5
    np.exp(z, out=z)
    if params.signal_variance[dim] != 1.0:
        z *= params.signal_variance[dim]
    return z


def _group_cross(A, B, spec: KernelSpec) -> np.ndarray:
    n_max = spec.orders[-1]
    zs = (_base_cross(A[:, d], B[:, d], spec.base, d) for d in spec.dims)
    e = _esp_stack(zs, n_max)
    out = np.zeros((A.shape[0], B.shape[0]))
    for n, w in zip(spec.orders, spec.order_weights):
        out += w * e[n]
    return out


def _as_points(points, D) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.ndim != 2 or P.shape[1] != D:
        raise ValueError(f"points must have shape (n, {D}), got {np.shape(points)}")
    return P


def kernel_matrix(points, spec: KernelSpec, other=None) -> np.ndarray:
    """Covariance between the rows of ``points`` and ``other`` (default: itself)."""
    A = _as_points(points, spec.n_dims)
    B = A if other is None else _as_points(other, spec.n_dims)
    return sum(_group_cross(A, B, term) for term in spec.terms())


def kernel_diag(points, spec: KernelSpec) -> np.ndarray:
    """``k(x, x)`` for every row."""
    A = _as_points(points, spec.n_dims)
    out = np.zeros(A.shape[0])
    for term in spec.terms():
        n_max = term.orders[-1]
        e = _esp_stack(
            (np.full(A.shape[0], term.base.signal_variance[d]) for d in term.dims), n_max
        )
        for n, w in zip(term.orders, term.order_weights):
            out += w * e[n]
    return out


def additive_kernel_eval(a, b, spec: KernelSpec) -> float:
    """Covariance between two single points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (spec.n_dims,) or b.shape != (spec.n_dims,):
        raise ValueError(
            f"points must have shape ({spec.n_dims},), got {a.shape} and {b.shape}"
        )
    total = 0.0
    for term in spec.terms():
        z = [float(base_kernel_eval(a[d], b[d], term.base, d)) for d in term.dims]
        e = _esp_stack(z, term.orders[-1])
        total += sum(w * e[n] for n, w in zip(term.orders, term.order_weights))
    return float(total)


def additive_kernel_bruteforce(a, b, spec: KernelSpec) -> float:
    """Explicit subset enumeration of the same kernel (test oracle)."""
    total = 0.0
    for term in spec.terms():
        z = [float(base_kernel_eval(a[d], b[d], term.base, d)) for d in term.dims]
        total += sum(w * elementary_symmetric_bruteforce(z, n)
                     for n, w in zip(term.orders, term.order_weights))
    return total
