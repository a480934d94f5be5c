"""Coefficient triples (phi, sigma, nu), cutoff regularizers, and assumption checks.

The diffusion nonlinearity phi, noise coefficient sigma, and flux nu come in
two built-in flavours (classical: identity/square-root, porous: powers) plus a
fully custom variant.  Everything downstream (solver, measurement harness)
consumes the triple through this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericsError

__all__ = [
    "CutoffParams",
    "NonlinearTriple",
    "classical_triple",
    "porous_triple",
    "custom_triple",
    "low_cutoff",
    "high_cutoff",
    "gap_functional",
    "psi_sigma_reg",
    "psi_reg_values",
    "psi_reg_prime",
    "sigma_sigma_prime_values",
    "sigma_sigma_prime",
    "theta_phi2",
    "check_assumptions",
    "AssumptionReport",
    "CheckResult",
    "scalar_function_from_spec",
]


@dataclass(frozen=True)
class CutoffParams:
    """Velocity cutoff scales: ramp up over [beta/2, beta], down over [M_cap, M_cap+1]."""

    beta: float = 1e-4
    M_cap: float = 1e4

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0 <= self.M_cap):
            raise ValueError(f"cutoffs require 0 < beta < 1 <= M_cap, got {self}")


def low_cutoff(xi, beta):
    """Piecewise-linear ramp: 0 below beta/2, 1 above beta."""
    return np.clip((np.asarray(xi, dtype=float) - beta / 2.0) * (2.0 / beta), 0.0, 1.0)


def high_cutoff(xi, m_cap):
    """Piecewise-linear cap: 1 below M_cap, 0 above M_cap + 1."""
    return np.clip(m_cap + 1.0 - np.asarray(xi, dtype=float), 0.0, 1.0)


@dataclass(frozen=True)
class NonlinearTriple:
    """Bundle of the nonlinearities with derivatives and the gap exponent.

    All callables accept nonnegative floats or numpy arrays.  ``q0`` and
    ``c_q0`` quantify the lower bound on the gap functional; ``m`` is the
    growth exponent used in growth-constant reporting.
    """

    regime: str
    phi: Callable
    phi_prime: Callable
    sigma: Callable
    sigma_prime: Callable
    nu: Callable
    nu_prime: Callable
    q0: float
    c_q0: float
    m: float = 1.0
    nu_is_zero: bool = False


def _nu_pair(nu_spec):
    """Resolve a nu specification into (nu, nu_prime, is_zero)."""
    if isinstance(nu_spec, tuple):
        return nu_spec[0], nu_spec[1], False
    if nu_spec == "zero":
        return (lambda xi: np.zeros_like(np.asarray(xi, dtype=float)),
                lambda xi: np.zeros_like(np.asarray(xi, dtype=float)),
                True)
    if nu_spec == "linear":
        return (lambda xi: np.asarray(xi, dtype=float),
                lambda xi: np.ones_like(np.asarray(xi, dtype=float)),
                False)
    if isinstance(nu_spec, str) and nu_spec.startswith("custom:"):
        fn = scalar_function_from_spec(nu_spec)
        return fn, _central_difference(fn), False
    raise ValueError(f"unrecognized nu specification {nu_spec!r}")


def _central_difference(fn, rel_h=1e-6):
    def deriv(xi):
        xi = np.asarray(xi, dtype=float)
        h = rel_h * np.maximum(1.0, np.abs(xi))
        lo = np.maximum(xi - h, 0.0)
        return (fn(xi + h) - fn(lo)) / (xi + h - lo)

    return deriv


def _check_basic_invariants(triple, grid=None):
    if abs(float(triple.phi(0.0))) > 1e-12:
        raise ValueError("phi(0) must vanish")
    if abs(float(triple.sigma(0.0))) > 1e-12:
        raise ValueError("sigma(0) must vanish")
    if grid is None:
        grid = np.linspace(0.0, 10.0, 201)
    vals = triple.phi(grid)
    if not np.all(np.diff(vals) > 0):
        raise ValueError("phi must be strictly increasing on the sample grid")


def classical_triple(nu="zero") -> NonlinearTriple:
    """phi = identity, sigma = square root, gap exponent 0."""
    nu_fn, nu_prime_fn, nu_zero = _nu_pair(nu)

    def sigma_prime(xi):
        xi = np.asarray(xi, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(xi > 0.0, 0.5 / np.sqrt(np.where(xi > 0.0, xi, 1.0)), np.inf)

    triple = NonlinearTriple(
        regime="classical",
        phi=lambda xi: np.asarray(xi, dtype=float),
        phi_prime=lambda xi: np.ones_like(np.asarray(xi, dtype=float)),
        sigma=lambda xi: np.sqrt(np.asarray(xi, dtype=float)),
        sigma_prime=sigma_prime,
        nu=nu_fn,
        nu_prime=nu_prime_fn,
        q0=0.0,
        c_q0=1.0,
        m=1.0,
        nu_is_zero=nu_zero,
    )
    _check_basic_invariants(triple)
    return triple


def porous_triple(m: float, nu="zero") -> NonlinearTriple:
    """phi = xi^m, sigma = xi^(m/2) for m > 1; gap exponent m - 1."""
    if not m > 1.0:
        raise ValueError(f"porous regime requires m > 1, got {m}")
    nu_fn, nu_prime_fn, nu_zero = _nu_pair(nu)

    def sigma_prime(xi):
        xi = np.asarray(xi, dtype=float)
        expo = m / 2.0 - 1.0
        if expo >= 0.0:
            return (m / 2.0) * xi**expo
        with np.errstate(divide="ignore"):
            return np.where(xi > 0.0, (m / 2.0) * np.where(xi > 0.0, xi, 1.0) ** expo, np.inf)

    triple = NonlinearTriple(
        regime="porous",
        phi=lambda xi: np.asarray(xi, dtype=float) ** m,
        phi_prime=lambda xi: m * np.asarray(xi, dtype=float) ** (m - 1.0),
        sigma=lambda xi: np.asarray(xi, dtype=float) ** (m / 2.0),
        sigma_prime=sigma_prime,
        nu=nu_fn,
        nu_prime=nu_prime_fn,
        q0=m - 1.0,
        c_q0=1.0,
        m=m,
        nu_is_zero=nu_zero,
    )
    _check_basic_invariants(triple)
    return triple


def custom_triple(phi, phi_prime, sigma, sigma_prime, nu, nu_prime=None,
                  q0: float = 0.0, c_q0: float = 1.0, m: float = 1.0,
                  skip_checks: bool = False) -> NonlinearTriple:
    """User-supplied coefficients; q0 and c_q0 must be declared explicitly.

    ``nu`` may be a spec string ("zero" | "linear" | "custom:<expr>"), in which
    case the derivative is resolved automatically.
    """
    if q0 < 0 or c_q0 <= 0:
        raise ValueError("custom regime needs q0 >= 0 and c_q0 > 0")
    nu_zero = False
    if isinstance(nu, str):
        nu, nu_prime, nu_zero = _nu_pair(nu)
    elif nu_prime is None:
        nu_prime = _central_difference(nu)
    triple = NonlinearTriple("custom", phi, phi_prime, sigma, sigma_prime,
                             nu, nu_prime, q0, c_q0, m, nu_zero)
    if not skip_checks:
        _check_basic_invariants(triple)
    return triple


# ---------------------------------------------------------------------------
# gap functional and derived scalar functions


def gap_functional(triple: NonlinearTriple, xi1: float, xi2: float) -> float:
    """|phi(xi1) - phi(xi2)| + |nu(xi1) - nu(xi2)|; zero iff the arguments agree."""
    if not (np.isfinite(xi1) and np.isfinite(xi2)):
        raise ValueError("gap functional needs finite arguments")
    if xi1 < 0 or xi2 < 0:
        raise ValueError("gap functional is defined on nonnegative arguments")
    return float(abs(triple.phi(xi1) - triple.phi(xi2)) + abs(triple.nu(xi1) - triple.nu(xi2)))


def gap_values(triple: NonlinearTriple, a, b):
    """Vectorized gap functional on arrays (no domain checks)."""
    return np.abs(triple.phi(a) - triple.phi(b)) + np.abs(triple.nu(a) - triple.nu(b))


def sigma_sigma_prime(triple: NonlinearTriple, xi: float) -> float:
    """sigma(xi) * sigma'(xi), with the classical value pinned to 1/2 at zero."""
    if xi < 0:
        raise ValueError("sigma*sigma' is defined on nonnegative arguments")
    return float(sigma_sigma_prime_values(triple, np.asarray(xi, dtype=float)))


def sigma_sigma_prime_values(triple: NonlinearTriple, xi):
    xi = np.asarray(xi, dtype=float)
    if triple.regime == "classical":
        # sqrt(xi) * 1/(2 sqrt(xi)) is identically 1/2; keep the limit at 0
        return np.full_like(xi, 0.5)
    if triple.regime == "porous":
        return (triple.m / 2.0) * xi ** (triple.m - 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = triple.sigma(xi) * triple.sigma_prime(xi)
    return np.where(np.isnan(vals), 0.0, vals)


# ---------------------------------------------------------------------------
# quadrature


_TOL_FLOOR = 2.5e-16  # per-interval tolerance never drops below machine scale


def _adaptive_simpson(f, a, b, tol, max_depth):
    """Recursive adaptive Simpson; raises NumericsError at the depth limit."""
    if b <= a:
        return 0.0

    def recurse(x0, x2, f0, f1, f2, whole, tol, depth):
        x1l = 0.5 * (x0 + 0.5 * (x0 + x2))
        x1r = 0.5 * (0.5 * (x0 + x2) + x2)
        fl, fr = f(x1l), f(x1r)
        xm = 0.5 * (x0 + x2)
        left = (xm - x0) / 6.0 * (f0 + 4.0 * fl + f1)
        right = (x2 - xm) / 6.0 * (f1 + 4.0 * fr + f2)
        if abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        if depth <= 0:
            raise NumericsError(
                f"adaptive Simpson hit max depth on [{x0:.3g}, {x2:.3g}] "
                f"with error estimate {abs(left + right - whole):.3g}")
        child_tol = max(tol / 2.0, _TOL_FLOOR)
        return (recurse(x0, xm, f0, fl, f1, left, child_tol, depth - 1)
                + recurse(xm, x2, f1, fr, f2, right, child_tol, depth - 1))

    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return recurse(a, b, fa, fm, fb, whole, tol, max_depth)


_QUAD_TOL = 1e-10
_QUAD_DEPTH = 40


def psi_sigma_reg(triple: NonlinearTriple, xi: float, cut: CutoffParams) -> float:
    """Integral of (sigma')^2 against both velocity cutoffs from 0 to xi.

    Integrated piecewise between the cutoff breakpoints so the adaptive rule
    never straddles a kink.
    """
    if xi < 0:
        raise ValueError("psi_sigma_reg is defined on nonnegative arguments")
    beta, m_cap = cut.beta, cut.M_cap
    lo = beta / 2.0
    if xi <= lo:
        return 0.0

    def integrand(s):
        sp = float(triple.sigma_prime(s))
        return sp * sp * float(low_cutoff(s, beta)) * float(high_cutoff(s, m_cap))

    # split at the cutoff kinks, and geometrically in between so no single
    # adaptive call spans many decades (matters for singular sigma')
    breaks = [beta]
    decade = beta * 10.0
    while decade < m_cap:
        breaks.append(decade)
        decade *= 10.0
    breaks += [m_cap, m_cap + 1.0, float("inf")]

    total = 0.0
    left = lo
    for br in breaks:
        right = min(xi, br)
        if right > left:
            total += _adaptive_simpson(integrand, left, right, _QUAD_TOL, _QUAD_DEPTH)
        if xi <= br:
            break
        left = br
    return total


def _power_integral(q, u, v):
    # antiderivative of s^q between u and v, with the log branch at q = -1
    if abs(q + 1.0) < 1e-14:
        return np.log(v / u)
    return (v ** (q + 1.0) - u ** (q + 1.0)) / (q + 1.0)


_PIECE_CACHE: dict = {}


def _psi_pieces(coef, p, beta, m_cap):
    """Cumulative closed-form values at the cutoff breakpoints (memoized)."""
    key = (coef, p, beta, m_cap)
    hit = _PIECE_CACHE.get(key)
    if hit is None:
        b2, b, mc, mc1 = beta / 2.0, beta, m_cap, m_cap + 1.0
        p_ramp = (2.0 * coef / beta) * (_power_integral(p + 1.0, b2, b)
                                        - b2 * _power_integral(p, b2, b))
        p_main = p_ramp + coef * _power_integral(p, b, mc)
        p_full = p_main + coef * (mc1 * _power_integral(p, mc, mc1)
                                  - _power_integral(p + 1.0, mc, mc1))
        hit = (p_ramp, p_main, p_full)
        if len(_PIECE_CACHE) < 256:
            _PIECE_CACHE[key] = hit
    return hit


def psi_reg_values(triple: NonlinearTriple, xi, cut: CutoffParams):
    """Vectorized regularized Psi; closed form for built-in regimes.

    Custom regimes fall back to per-entry quadrature, which is exact but slow;
    the solver's hot loop only ever sees the built-ins.
    """
    xi = np.asarray(xi, dtype=float)
    if triple.regime == "classical":
        coef, p = 0.25, -1.0
    elif triple.regime == "porous":
        coef, p = triple.m**2 / 4.0, triple.m - 2.0
    else:
        flat = np.array([psi_sigma_reg(triple, float(v), cut) for v in np.ravel(xi)])
        return flat.reshape(np.shape(xi))

    beta, m_cap = cut.beta, cut.M_cap
    b2, b, mc, mc1 = beta / 2.0, beta, m_cap, m_cap + 1.0
    p_ramp, p_main, p_full = _psi_pieces(coef, p, beta, m_cap)

    # main branch everywhere, then patch the (rare) cutoff regions
    out = p_ramp + coef * _power_integral(p, b, np.maximum(xi, b))
    low = xi <= b
    if np.any(low):
        x = np.clip(xi, b2, b)
        ramp = (2.0 * coef / beta) * (_power_integral(p + 1.0, b2, x)
                                      - b2 * _power_integral(p, b2, x))
        out = np.where(low, np.where(xi <= b2, 0.0, ramp), out)
    high = xi > mc
    if np.any(high):
        x = np.clip(xi, mc, mc1)
        cap = p_main + coef * (mc1 * _power_integral(p, mc, x)
                               - _power_integral(p + 1.0, mc, x))
        out = np.where(high, np.where(xi >= mc1, p_full, cap), out)
    return out


def psi_reg_prime(triple: NonlinearTriple, xi, cut: CutoffParams):
    """(sigma')^2 * cutoffs, evaluated safely (zero below beta/2)."""
    xi = np.asarray(xi, dtype=float)
    mask = xi > cut.beta / 2.0
    out = np.zeros_like(xi)
    if np.any(mask):
        safe = np.where(mask, xi, 1.0)
        sp = triple.sigma_prime(safe)
        out = np.where(mask,
                       sp * sp * low_cutoff(safe, cut.beta) * high_cutoff(safe, cut.M_cap),
                       0.0)
    return out


def theta_phi2(triple: NonlinearTriple, xi: float) -> float:
    """Integral of sqrt(phi') from 0 to xi."""
    if xi < 0:
        raise ValueError("theta_phi2 is defined on nonnegative arguments")
    if xi == 0.0:
        return 0.0
    return _adaptive_simpson(lambda s: math.sqrt(float(triple.phi_prime(s))),
                             0.0, xi, _QUAD_TOL, _QUAD_DEPTH)


# ---------------------------------------------------------------------------
# assumption checking


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    constant: float | None = None
    witness: tuple | None = None


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def check_assumptions(triple: NonlinearTriple, sample_grid, cut: CutoffParams) -> AssumptionReport:
    """Empirically test the coefficient assumptions on a sample grid.

    Growth-type assumptions cannot fail on a finite grid, so for those the
    report carries the best empirical constant.  Falsifiable checks
    (monotonicity, vanishing at zero, the gap lower bound with the declared
    (q0, c_q0)) report a witness pair on failure.
    """
    grid = np.asarray(sample_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("sample grid must be non-empty")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("sample grid must be ascending and nonnegative")

    checks = []

    def first_violation(values, tol=0.0):
        bad = np.nonzero(np.diff(values) < -tol)[0]
        return None if bad.size == 0 else int(bad[0])

    phi_vals = np.asarray(triple.phi(grid), dtype=float)
    idx = np.nonzero(np.diff(phi_vals) <= 0)[0]
    checks.append(CheckResult(
        "phi_strictly_increasing", idx.size == 0,
        witness=None if idx.size == 0 else (float(grid[idx[0]]), float(grid[idx[0] + 1]))))

    checks.append(CheckResult("phi_zero_at_zero", abs(float(triple.phi(0.0))) <= 1e-12,
                              constant=abs(float(triple.phi(0.0)))))
    checks.append(CheckResult("sigma_zero_at_zero", abs(float(triple.sigma(0.0))) <= 1e-12,
                              constant=abs(float(triple.sigma(0.0)))))

    growth = phi_vals / (1.0 + grid**triple.m)
    checks.append(CheckResult("phi_growth_constant", bool(np.all(np.isfinite(growth))),
                              constant=float(np.max(growth))))

    sig_sq = np.asarray(triple.sigma(grid), dtype=float) ** 2
    osc = np.maximum.accumulate(sig_sq) / (1.0 + grid + sig_sq)
    checks.append(CheckResult("sigma_sq_oscillation_constant", bool(np.all(np.isfinite(osc))),
                              constant=float(np.max(osc))))

    ssp = np.asarray(sigma_sigma_prime_values(triple, grid), dtype=float)
    i = first_violation(ssp, tol=1e-12)
    checks.append(CheckResult(
        "sigma_sigma_prime_monotone", i is None,
        witness=None if i is None else (float(grid[i]), float(grid[i + 1]))))

    # Lipschitz link |d(sigma sigma')| <= c |d(Psi_sigma)|, beta -> 0 limit
    tiny = CutoffParams(beta=1e-12, M_cap=max(1.0, 10.0 * float(grid[-1])))
    psi = np.asarray(psi_reg_values(triple, grid, tiny), dtype=float)
    dssp = np.abs(np.subtract.outer(ssp, ssp))
    dpsi = np.abs(np.subtract.outer(psi, psi))
    sep = dpsi > 1e-14
    link = float(np.max(dssp[sep] / dpsi[sep])) if np.any(sep) else 0.0
    checks.append(CheckResult("sigma_link_lipschitz_constant", np.isfinite(link), constant=link))

    nu_vals = np.asarray(triple.nu(grid), dtype=float)
    i = first_violation(nu_vals, tol=1e-12)
    checks.append(CheckResult(
        "nu_monotone", i is None,
        witness=None if i is None else (float(grid[i]), float(grid[i + 1]))))

    nu_growth = np.abs(nu_vals) / (1.0 + grid + np.abs(phi_vals))
    checks.append(CheckResult("nu_growth_constant", bool(np.all(np.isfinite(nu_growth))),
                              constant=float(np.max(nu_growth))))

    # gap lower bound over all grid pairs with the declared (q0, c_q0)
    diff = np.abs(np.subtract.outer(grid, grid))
    gaps = np.abs(np.subtract.outer(phi_vals, phi_vals)) + np.abs(np.subtract.outer(nu_vals, nu_vals))
    distinct = diff > 0
    ratios = gaps[distinct] / diff[distinct] ** (triple.q0 + 1.0)
    empirical = float(np.min(ratios)) if ratios.size else math.inf
    ok = empirical >= triple.c_q0 * (1.0 - 1e-12)
    witness = None
    if not ok:
        flat = np.where(distinct, gaps / np.where(distinct, diff, 1.0) ** (triple.q0 + 1.0), math.inf)
        i, j = np.unravel_index(np.argmin(flat), flat.shape)
        witness = (float(grid[i]), float(grid[j]))
    checks.append(CheckResult("gap_lower_bound", ok, constant=empirical, witness=witness))

    return AssumptionReport(tuple(checks))


# ---------------------------------------------------------------------------
# minimal expression grammar for custom scalar functions of xi


_TOKEN_NAMES = ("min", "max", "xi", "x")


def _tokenize(text):
    tokens, i = [], 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*/^(),":
            tokens.append(ch)
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < len(text) and (text[j].isdigit() or text[j] in ".eE"
                                     or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            tokens.append(float(text[i:j]))
            i = j
        elif ch.isalpha():
            j = i
            while j < len(text) and text[j].isalpha():
                j += 1
            name = text[i:j]
            if name not in _TOKEN_NAMES:
                raise ValueError(f"unknown name {name!r} in expression")
            tokens.append(name)
            i = j
        else:
            raise ValueError(f"unexpected character {ch!r} in expression")
    return tokens


def _parse(tokens):
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take(expected=None):
        tok = peek()
        if tok is None or (expected is not None and tok != expected):
            raise ValueError(f"malformed expression near token {tok!r}")
        pos[0] += 1
        return tok

    def atom():
        tok = peek()
        if tok == "-":
            take()
            inner = atom()
            return lambda v: -inner(v)
        if isinstance(tok, float):
            take()
            return lambda v, c=tok: np.full_like(np.asarray(v, dtype=float), c)
        if tok in ("xi", "x"):
            take()
            return lambda v: np.asarray(v, dtype=float)
        if tok in ("min", "max"):
            take()
            take("(")
            a = expr()
            take(",")
            b = expr()
            take(")")
            op = np.minimum if tok == "min" else np.maximum
            return lambda v, a=a, b=b, op=op: op(a(v), b(v))
        if tok == "(":
            take()
            inner = expr()
            take(")")
            return inner
        raise ValueError(f"malformed expression near token {tok!r}")

    def power():
        base = atom()
        if peek() == "^":
            take()
            expo = power()  # right-associative
            return lambda v, b=base, e=expo: b(v) ** e(v)
        return base

    def term():
        out = power()
        while peek() in ("*", "/"):
            op = take()
            rhs = power()
            if op == "*":
                out = (lambda v, a=out, b=rhs: a(v) * b(v))
            else:
                out = (lambda v, a=out, b=rhs: a(v) / b(v))
        return out

    def expr():
        out = term()
        while peek() in ("+", "-"):
            op = take()
            rhs = term()
            if op == "+":
                out = (lambda v, a=out, b=rhs: a(v) + b(v))
            else:
                out = (lambda v, a=out, b=rhs: a(v) - b(v))
        return out

    result = expr()
    if pos[0] != len(tokens):
        raise ValueError("trailing tokens in expression")
    return result


def scalar_function_from_spec(spec: str):
    """Compile ``custom:<expr>`` (grammar: + - * / ^ min max over xi) to a callable."""
    if not spec.startswith("custom:"):
        raise ValueError(f"expected 'custom:<expression>', got {spec!r}")
    return _parse(_tokenize(spec[len("custom:"):]))
