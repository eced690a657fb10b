"""Pressure laws for the two-phase solver.

Supported law kinds:
  - ``isentropic``: P(r) = K r^gamma (monotone, single phase)
  - ``vdw-cubic``:  P(r) = Phat(r/s) with Phat(x) = (x-a)^3 - (x-a)^2 + k0,
    the classic cubic Van-der-Waals shape with a spinodal interval
  - ``tabulated``:  monotone cubic spline through (r, P) samples with an
    analytic power-law tail

Every law carries its growth rate ``gamma``, the asymptotic coefficient
``p_inf`` with P'(r)/r^(gamma-1) -> p_inf, and the coupling coefficient
``alpha`` that defines the artificial pressure

    Peff(r) = P(r) + (alpha/2) r^2.

The pressure potential W(r) = r * int_1^r P(z)/z^2 dz satisfies
P = W'(r) r - W(r); closed forms are used for polynomial laws and adaptive
quadrature otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import DomainError, QuadratureError, UnsupportedLawError, ValidationError

_QUAD_ABS_TOL = 1e-10


@dataclass(frozen=True)
class PressureLaw:
    """Immutable evaluator bundle for one pressure law.

    Instances are safe to share across threads. Use the ``isentropic``,
    ``vdw_cubic`` or ``tabulated`` constructors rather than building
    directly.
    """

    kind: str
    coefficients: tuple
    gamma: float
    p_inf: float
    alpha: float
    # tabulated laws carry their spline here; excluded from equality
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("isentropic", "vdw-cubic", "tabulated"):
            raise ValidationError(f"unknown pressure law kind {self.kind!r}")
        if not self.gamma > 1.0:
            raise ValidationError("pressure gamma must exceed 1")
        if not self.p_inf > 0.0:
            raise ValidationError("pressure p_inf must be positive")
        if not self.alpha > 0.0:
            raise ValidationError("pressure alpha must be positive")

    @property
    def gamma_tilde(self):
        """Effective growth rate max{2, gamma}; always derived."""
        return max(2.0, self.gamma)


@dataclass(frozen=True)
class SpinodalInfo:
    """Spinodal interval (r1, r2) where P' < 0, if the law has one."""

    r1: float
    r2: float
    exists: bool


def isentropic(k=1.0, gamma=2.0, alpha=1.0):
    """P(r) = k r^gamma; p_inf = k*gamma follows from the closed form."""
    if k <= 0.0:
        raise ValidationError("isentropic coefficient k must be positive")
    return PressureLaw("isentropic", (float(k),), float(gamma), float(k) * float(gamma), float(alpha))


def vdw_cubic(a=0.55, scale=3.234, offset=None, alpha=0.0478):
    """Cubic Van-der-Waals law P(r) = (u^3 - u^2 + k0) with u = r/scale - a.

    ``offset`` defaults to a^2 + a^3, the unique constant with P(0) = 0.
    The growth rate is 3 and p_inf = 3/scale^3.
    """
    a = float(a)
    s = float(scale)
    if s <= 0.0:
        raise ValidationError("vdw-cubic scale must be positive")
    k0 = a * a + a ** 3 if offset is None else float(offset)
    return PressureLaw("vdw-cubic", (a, s, k0), 3.0, 3.0 / s ** 3, float(alpha))


def tabulated(r_nodes, p_nodes, gamma, alpha, p_inf=None):
    """Monotone-cubic (PCHIP) interpolant through (r, P) samples.

    Beyond the last node the law continues with the analytic tail
    P(r_hi) + p_inf (r^gamma - r_hi^gamma)/gamma so the admissibility
    asymptotics hold by construction. ``p_inf`` defaults to the finite
    difference slope estimate at the last node.
    """
    r_nodes = np.asarray(r_nodes, dtype=float)
    p_nodes = np.asarray(p_nodes, dtype=float)
    if r_nodes.ndim != 1 or r_nodes.shape != p_nodes.shape or r_nodes.size < 4:
        raise ValidationError("tabulated law needs >= 4 matching (r, P) samples")
    if r_nodes[0] != 0.0 or p_nodes[0] != 0.0:
        raise ValidationError("tabulated law must start at (0, 0)")
    if np.any(np.diff(r_nodes) <= 0.0):
        raise ValidationError("tabulated r nodes must be strictly increasing")
    spline = interpolate.PchipInterpolator(r_nodes, p_nodes, extrapolate=False)
    if p_inf is None:
        r_hi = r_nodes[-1]
        d_hi = float(spline.derivative()(r_hi))
        p_inf = d_hi / r_hi ** (gamma - 1.0)
    return PressureLaw(
        "tabulated",
        (float(r_nodes[-1]), float(p_nodes[-1])),
        float(gamma),
        float(p_inf),
        float(alpha),
        _spline=spline,
    )


def _check_domain(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise DomainError("density must be non-negative")
    return r


def _cubic_power_coeffs(law):
    """Power-basis coefficients (c3, c2, c1, c0) of the vdw cubic in r."""
    a, s, k0 = law.coefficients
    c3 = 1.0 / s ** 3
    c2 = -(3.0 * a + 1.0) / s ** 2
    c1 = (3.0 * a * a + 2.0 * a) / s
    c0 = k0 - a ** 3 - a * a
    return c3, c2, c1, c0


def _eval_p(law, r):
    if law.kind == "isentropic":
        (k,) = law.coefficients
        return k * r ** law.gamma
    if law.kind == "vdw-cubic":
        a, s, k0 = law.coefficients
        u = r / s - a
        return u ** 3 - u * u + k0
    # tabulated: spline inside the data range, analytic tail outside
    r_hi, p_hi = law.coefficients
    inside = law._spline(np.minimum(r, r_hi))
    tail = p_hi + law.p_inf * (np.maximum(r, r_hi) ** law.gamma - r_hi ** law.gamma) / law.gamma
    return np.where(r <= r_hi, inside, tail)


def _eval_dp(law, r):
    if law.kind == "isentropic":
        (k,) = law.coefficients
        return k * law.gamma * r ** (law.gamma - 1.0)
    if law.kind == "vdw-cubic":
        a, s, _ = law.coefficients
        u = r / s - a
        return (3.0 * u * u - 2.0 * u) / s
    r_hi, _ = law.coefficients
    inside = law._spline.derivative()(np.minimum(r, r_hi))
    tail = law.p_inf * np.maximum(r, r_hi) ** (law.gamma - 1.0)
    return np.where(r <= r_hi, inside, tail)


def evaluate(law, r, which):
    """Evaluate P, P', Peff or Peff' at density r (scalar or array).

    ``which`` is one of ``"P"``, ``"dP"``, ``"Peff"``, ``"dPeff"``.
    Raises ``DomainError`` for negative densities.
    """
    r = _check_domain(r)
    if which == "P":
        out = _eval_p(law, r)
    elif which == "dP":
        out = _eval_dp(law, r)
    elif which == "Peff":
        out = _eval_p(law, r) + 0.5 * law.alpha * r * r
    elif which == "dPeff":
        out = _eval_dp(law, r) + law.alpha * r
    else:
        raise ValidationError(f"unknown evaluation target {which!r}")
    return out if np.ndim(r) else float(out)


def potential(law, r):
    """Pressure potential W(r) = r * int_1^r P(z)/z^2 dz.

    Closed forms for the polynomial kinds, adaptive quadrature (abs tol
    1e-10) for tabulated laws. Vectorized over r. The integrand behaves as
    z^(gamma-2) near z = 0, integrable for gamma > 1.
    """
    r = _check_domain(r)
    scalar = np.ndim(r) == 0
    rv = np.atleast_1d(r)
    if law.kind == "isentropic":
        (k,) = law.coefficients
        g = law.gamma
        out = k * (rv ** g - rv) / (g - 1.0)
    elif law.kind == "vdw-cubic":
        c3, c2, c1, c0 = _cubic_power_coeffs(law)
        if abs(c0) > 0.0:
            # nonzero P(0) makes the potential integral divergent at 0
            raise UnsupportedLawError("vdw-cubic potential requires P(0) = 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            log_r = np.where(rv > 0.0, np.log(np.maximum(rv, 1e-300)), 0.0)
        prim = 0.5 * c3 * (rv * rv - 1.0) + c2 * (rv - 1.0) + c1 * log_r
        out = rv * prim
        out = np.where(rv == 0.0, 0.0, out)  # r*log r -> 0
    else:
        out = np.empty_like(rv)
        for i, ri in enumerate(rv):
            out[i] = _potential_quadrature(law, ri)
    out = np.asarray(out)
    return float(out[0]) if scalar else out


def _potential_quadrature(law, r):
    if r == 0.0:
        # limit r * int_1^r P/z^2 -> 0 for gamma > 1
        return 0.0
    if r == 1.0:
        return 0.0

    def integrand(z):
        return evaluate(law, z, "P") / (z * z)

    lo, hi = (r, 1.0) if r < 1.0 else (1.0, r)
    val, err = integrate.quad(integrand, lo, hi, epsabs=_QUAD_ABS_TOL, limit=200)
    # the reported bound is conservative for C^1 spline integrands
    if err > max(1e-7, 1e-7 * abs(val)):
        raise QuadratureError(
            f"potential quadrature did not converge at r={r} (residual {err:.3e})",
            residual=err,
        )
    sign = 1.0 if r > 1.0 else -1.0
    return r * sign * val


def validate_law(law, r_max=50.0, n_samples=2000):
    """Admissibility checks: P(0) = 0, P >= 0 on a dense sample grid, and
    P'(r)/r^(gamma-1) within 5% of p_inf at r = 1e3 and 1e4.

    The asymptotic condition is checked at finite sample points; there is
    no finite-r criterion that certifies the true limit.
    """
    p0 = evaluate(law, 0.0, "P")
    if abs(p0) > 1e-12:
        raise ValidationError(f"P(0) = {p0:.3e}, expected 0")
    rs = np.linspace(0.0, r_max, n_samples)
    ps = evaluate(law, rs, "P")
    if np.any(ps < -1e-12):
        raise ValidationError("P takes negative values on the sample grid")
    for r_probe in (1e3, 1e4):
        ratio = evaluate(law, r_probe, "dP") / r_probe ** (law.gamma - 1.0)
        if abs(ratio - law.p_inf) > 0.05 * law.p_inf:
            raise ValidationError(
                f"P'(r)/r^(gamma-1) = {ratio:.4g} at r={r_probe:g}, "
                f"not within 5% of p_inf = {law.p_inf:.4g}"
            )
    return law


def _default_scan_range(law):
    if law.kind == "vdw-cubic":
        a, s, _ = law.coefficients
        # upper spinodal root of the cubic sits at (a + 2/3) s
        return 10.0 * (a + 2.0 / 3.0) * s
    return 50.0


def spinodal(law, r_scan=None, n_scan=20000):
    """Locate the interval (r1, r2) where P' < 0 by dense scan + bisection.

    Roots are refined to 1e-10 relative. Laws whose derivative changes sign
    more than twice on the scan range are rejected.
    """
    if r_scan is None:
        r_scan = _default_scan_range(law)
    rs = np.linspace(0.0, r_scan, n_scan + 1)
    dps = evaluate(law, rs, "dP")
    # exact zeros at samples are roots; carry the previous sign across them
    # so they register as exactly one change
    signs = np.sign(dps)
    filled = signs.copy()
    for i in range(1, filled.size):
        if filled[i] == 0.0:
            filled[i] = filled[i - 1]
    sign_flip = np.nonzero(filled[:-1] * filled[1:] < 0.0)[0]
    if len(sign_flip) == 0:
        return SpinodalInfo(0.0, 0.0, False)
    if len(sign_flip) != 2:
        raise UnsupportedLawError(
            f"P' changes sign {len(sign_flip)} times on [0, {r_scan:g}]; "
            "expected exactly one decreasing interval"
        )
    roots = []
    for i in sign_flip:
        # the left bracket may sit on an exact zero; back up to a strict sign
        lo = i
        while signs[lo] == 0.0 and lo > 0:
            lo -= 1
        root = optimize.bisect(
            lambda r: evaluate(law, r, "dP"),
            rs[lo],
            rs[i + 1],
            rtol=1e-10,
            xtol=1e-14,
        )
        roots.append(root)
    r1, r2 = roots
    return SpinodalInfo(r1, r2, True)


def monotonization_alpha(law, r_scan=None, n_scan=20000):
    """Smallest coupling alpha* with Peff' = P' + alpha r >= 0 on the scan range.

    Computed as sup over r > 0 of -P'(r)/r (clamped below at 0) by dense
    scan followed by golden-section refinement of the sup.
    """
    if r_scan is None:
        r_scan = _default_scan_range(law)
    rs = np.linspace(0.0, r_scan, n_scan + 1)[1:]
    neg_slope = -evaluate(law, rs, "dP") / rs
    i = int(np.argmax(neg_slope))
    if neg_slope[i] <= 0.0:
        return 0.0
    lo = rs[max(i - 1, 0)]
    hi = rs[min(i + 1, len(rs) - 1)]

    def slope_over_r(r):
        return evaluate(law, r, "dP") / r

    if lo < rs[i] < hi and slope_over_r(rs[i]) < min(slope_over_r(lo), slope_over_r(hi)):
        res = optimize.minimize_scalar(
            slope_over_r, bracket=(lo, rs[i], hi), method="golden", options={"xtol": 1e-13}
        )
    else:
        res = optimize.minimize_scalar(
            slope_over_r, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13}
        )
    return max(0.0, -float(res.fun))


def law_from_config(block, default_alpha=None):
    """Build a validated law from a config ``pressure`` block.

    Expected keys: kind, plus kind-specific fields. ``alpha`` defaults to
    the physics coupling coefficient when omitted.
    """
    if not isinstance(block, dict):
        raise ValidationError("pressure block must be a table/object")
    known = {"kind", "coefficients", "gamma", "p_inf", "alpha"}
    unknown = set(block) - known
    if unknown:
        raise ValidationError(f"pressure block has unknown key {sorted(unknown)[0]!r}")
    kind = block.get("kind")
    alpha = block.get("alpha", default_alpha)
    if alpha is None:
        raise ValidationError("pressure.alpha missing and no physics.alpha to inherit")
    coeffs = block.get("coefficients", [])
    if kind == "isentropic":
        k = coeffs[0] if coeffs else 1.0
        law = isentropic(k=k, gamma=block.get("gamma", 2.0), alpha=alpha)
    elif kind == "vdw-cubic":
        a = coeffs[0] if len(coeffs) > 0 else 0.55
        scale = coeffs[1] if len(coeffs) > 1 else 3.234
        offset = coeffs[2] if len(coeffs) > 2 else None
        law = vdw_cubic(a=a, scale=scale, offset=offset, alpha=alpha)
    elif kind == "tabulated":
        half = len(coeffs) // 2
        law = tabulated(
            coeffs[:half],
            coeffs[half:],
            gamma=block.get("gamma", 2.0),
            alpha=alpha,
            p_inf=block.get("p_inf"),
        )
    else:
        raise ValidationError(f"pressure.kind must be one of isentropic, vdw-cubic, tabulated (got {kind!r})")
    if "gamma" in block and law.gamma != float(block["gamma"]) and kind == "vdw-cubic":
        raise ValidationError("vdw-cubic growth rate is fixed at 3; remove pressure.gamma")
    if "p_inf" in block and kind != "tabulated":
        expected = law.p_inf
        if abs(float(block["p_inf"]) - expected) > 0.05 * expected:
            raise ValidationError(
                f"pressure.p_inf = {block['p_inf']} inconsistent with closed form {expected:.6g}"
            )
    return validate_law(law)
