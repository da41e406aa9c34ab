"""Problem data: periodic coefficients, decaying perturbations, normalization.

The operator is ``H = c d^n/dt^n + sum_k (a_k(t) + q_k(t)) d^k/dt^k`` with
1-periodic ``a_k`` given as finite Fourier series and ``q_k`` drawn from a
closed set of decaying families.  After :func:`normalize` the leading
coefficient is 1 and eigenvalues relate by ``lambda_raw = c * lambda``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from floquet_spec.errors import SpecError

FAMILIES = ("exp_decay", "sech_sq", "gaussian", "compact_bump")

# Decay certificate used for families that beat every exponential rate.
TAU_CAP = 4.0


@dataclass(frozen=True)
class FourierCoefficient:
    index: int
    value: complex

    def __post_init__(self):
        object.__setattr__(self, "index", int(self.index))
        object.__setattr__(self, "value", complex(self.value))


def eval_fourier(coeffs: Sequence[FourierCoefficient], t):
    """Evaluate ``sum value * exp(2 pi i index t)``; exactly 1-periodic."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for c in coeffs:
        if c.index == 0:
            out += c.value
        else:
            # reduce the phase first so that a(t+1) == a(t) bit for bit
            out += c.value * np.exp(2j * np.pi * c.index * (t - np.floor(t)))
    return out


def integrate_fourier(coeffs: Sequence[FourierCoefficient], t):
    """Exact ``int_0^t a(s) ds``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for c in coeffs:
        if c.index == 0:
            out += c.value * t
        else:
            w = 2j * np.pi * c.index
            out += c.value * (np.exp(w * t) - 1.0) / w
    return out


@dataclass(frozen=True)
class PerturbationTerm:
    """One decaying coefficient ``q_order(t)``.

    Families (``x = t - center``):

    * ``exp_decay``: ``amplitude * exp(-rate |x|)``
    * ``sech_sq``: ``amplitude * sech(rate x)**2``
    * ``gaussian``: ``amplitude * exp(-rate x**2)``
    * ``compact_bump``: ``amplitude`` on ``|x| <= width`` (``profile="box"``)
      or ``amplitude * exp(1 - 1/(1 - (x/width)**2))`` (``profile="smooth"``)
    """

    order: int
    family: str
    amplitude: complex
    rate: float = 1.0
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"unknown family {self.family!r}", "family")
        if not self.rate > 0:
            raise SpecError("rate must be positive", "rate")
        if int(self.order) < 0:
            raise SpecError("order must be >= 0", "order")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "extra", dict(self.extra))
        if self.family == "compact_bump":
            if self.width <= 0:
                raise SpecError("compact_bump width must be positive", "extra.width")
            if self.profile not in ("box", "smooth"):
                raise SpecError(f"unknown profile {self.profile!r}", "extra.profile")

    @property
    def center(self) -> float:
        return float(self.extra.get("center", 0.0))

    @property
    def width(self) -> float:
        return float(self.extra.get("width", 1.0))

    @property
    def profile(self) -> str:
        return str(self.extra.get("profile", "box"))

    @property
    def tau_eff(self) -> float:
        """Certified rate with ``|q(t)| exp(tau_eff |t|)`` bounded."""
        if self.family == "exp_decay":
            return self.rate
        if self.family == "sech_sq":
            return 2.0 * self.rate
        return TAU_CAP

    @property
    def sup_bound(self) -> float:
        """Upper bound for ``sup_t |q(t)| exp(tau_eff |t|)``."""
        amp, c, tau = abs(self.amplitude), abs(self.center), self.tau_eff
        if self.family == "exp_decay":
            return amp * math.exp(tau * c)
        if self.family == "sech_sq":
            return 4.0 * amp * math.exp(tau * c)
        if self.family == "gaussian":
            return amp * math.exp(tau * c + tau * tau / (4.0 * self.rate))
        return amp * math.exp(tau * (c + self.width))

    @property
    def breakpoints(self) -> tuple:
        """Points where the term is not smooth (quadrature panels split here)."""
        c = self.center
        if self.family == "exp_decay":
            return (c,)
        if self.family == "compact_bump":
            return (c - self.width, c + self.width)
        return ()

    def truncation_radius(self, delta: float, tol: float = 1e-12) -> float:
        """Radius beyond which ``|q(t)| exp(delta |t|)`` is below ``tol`` (relative)."""
        c = abs(self.center)
        if self.family == "compact_bump":
            return c + self.width
        if self.family == "gaussian":
            # exp(-r x^2 + delta x) <= tol
            r = self.rate
            x = (delta + math.sqrt(delta * delta + 4 * r * math.log(1 / tol))) / (2 * r)
            return c + x
        if self.tau_eff <= delta:
            raise SpecError(
                f"delta={delta} must be below the decay rate {self.tau_eff}", "delta"
            )
        return c + math.log(1 / tol) / (self.tau_eff - delta)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        x = t - self.center
        if self.family == "exp_decay":
            shape = np.exp(-self.rate * np.abs(x))
        elif self.family == "sech_sq":
            e = np.exp(-2.0 * self.rate * np.abs(x))
            shape = 4.0 * e / (1.0 + e) ** 2
        elif self.family == "gaussian":
            shape = np.exp(-self.rate * x * x)
        elif self.profile == "box":
            shape = (np.abs(x) <= self.width).astype(float)
        else:
            y = np.clip(np.abs(x) / self.width, 0.0, 1.0)
            with np.errstate(divide="ignore", over="ignore"):
                shape = np.where(y < 1.0, np.exp(1.0 - 1.0 / (1.0 - y * y + 0.0)), 0.0)
        return self.amplitude * shape

    def scaled(self, factor) -> "PerturbationTerm":
        return replace(self, amplitude=self.amplitude * factor)


@dataclass(frozen=True)
class LambdaMap:
    """Affine eigenvalue map ``lambda_raw = scale * lambda_normalized``."""

    scale: float = 1.0

    def to_raw(self, lam):
        return self.scale * np.asarray(lam) if np.ndim(lam) else self.scale * lam

    def to_normalized(self, lam_raw):
        return np.asarray(lam_raw) / self.scale if np.ndim(lam_raw) else lam_raw / self.scale

    def rect_to_normalized(self, rect):
        from floquet_spec.regions import Rectangle

        corners = [self.to_normalized(complex(x, y)) for x in rect.re for y in rect.im]
        return Rectangle.bounding(corners)

    def rect_to_raw(self, rect):
        from floquet_spec.regions import Rectangle

        corners = [self.to_raw(complex(x, y)) for x in rect.re for y in rect.im]
        return Rectangle.bounding(corners)


@dataclass(frozen=True)
class OperatorSpec:
    """Operator data.  ``periodic_coeffs[k]`` holds ``a_k`` for k = 0..order-1.

    ``leading_sign`` is the constant leading coefficient (``+-1`` in JSON; any
    nonzero constant, or a Fourier list for validation, is accepted here).
    """

    order: int
    periodic_coeffs: tuple
    leading_sign: Any = 1.0
    perturbations: tuple = ()
    lambda_map: LambdaMap = LambdaMap()

    def __post_init__(self):
        n = int(self.order)
        if n < 1:
            raise SpecError("order must be >= 1", "order")
        object.__setattr__(self, "order", n)
        coeffs = [tuple(_as_fourier(c) for c in lst) for lst in self.periodic_coeffs]
        if len(coeffs) > n:
            raise SpecError(f"expected at most {n} coefficient lists, got {len(coeffs)}",
                            "periodic_coeffs")
        coeffs += [()] * (n - len(coeffs))
        object.__setattr__(self, "periodic_coeffs", tuple(coeffs))
        terms = tuple(self.perturbations)
        for i, term in enumerate(terms):
            if term.order >= n:
                raise SpecError(
                    f"perturbation order {term.order} must be below the operator order {n}",
                    f"perturbations[{i}].order",
                )
        object.__setattr__(self, "perturbations", terms)

    # --- derived data -----------------------------------------------------
    @property
    def is_normalized(self) -> bool:
        return not isinstance(self.leading_sign, (list, tuple)) and self.leading_sign == 1

    @property
    def tau(self) -> float:
        """Minimum certified decay rate over all perturbation terms."""
        if not self.perturbations:
            return TAU_CAP
        return min(term.tau_eff for term in self.perturbations)

    @property
    def has_perturbation(self) -> bool:
        return any(term.amplitude != 0 for term in self.perturbations)

    @property
    def perturbation_orders(self) -> tuple:
        return tuple(sorted({t.order for t in self.perturbations if t.amplitude != 0}))

    @property
    def is_constant_coefficient(self) -> bool:
        return all(c.index == 0 or c.value == 0 for lst in self.periodic_coeffs for c in lst)

    @property
    def max_harmonic(self) -> int:
        return max((abs(c.index) for lst in self.periodic_coeffs for c in lst if c.value != 0),
                   default=0)

    @property
    def breakpoints(self) -> tuple:
        pts = {0.0}
        for term in self.perturbations:
            pts.update(term.breakpoints)
        return tuple(sorted(pts))

    def a(self, k: int, t):
        return eval_fourier(self.periodic_coeffs[k], t)

    def q(self, k: int, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for term in self.perturbations:
            if term.order == k:
                out += term(t)
        return out

    def trace_integral(self, lam, t):
        """``int_0^t trace A(s, lam) ds`` for the normalized companion matrix."""
        n = self.order
        if n == 1:
            return lam * np.asarray(t, dtype=float) - integrate_fourier(self.periodic_coeffs[0], t)
        return -integrate_fourier(self.periodic_coeffs[n - 1], t)

    def coefficient_arrays(self):
        """Zero-padded ``(harm, coef)`` arrays of shape ``(n, J)`` for the kernels."""
        n = self.order
        J = max(1, max(len(lst) for lst in self.periodic_coeffs))
        harm = np.zeros((n, J), dtype=np.int64)
        coef = np.zeros((n, J), dtype=complex)
        for k, lst in enumerate(self.periodic_coeffs):
            for j, c in enumerate(lst):
                harm[k, j] = c.index
                coef[k, j] = c.value
        return harm, coef

    def periodic_part(self) -> "OperatorSpec":
        return replace(self, perturbations=())

    def with_perturbation_scale(self, factor) -> "OperatorSpec":
        return replace(self, perturbations=tuple(t.scaled(factor) for t in self.perturbations))

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "leading_sign": _leading_constant(self.leading_sign).real
            if not isinstance(self.leading_sign, (list, tuple)) else
            [{"index": c.index, "re": c.value.real, "im": c.value.imag}
             for c in map(_as_fourier, self.leading_sign)],
            "periodic_coeffs": [
                [{"index": c.index, "re": c.value.real, "im": c.value.imag} for c in lst]
                for lst in self.periodic_coeffs
            ],
            "perturbations": [
                {
                    "order": t.order,
                    "family": t.family,
                    "amplitude": {"re": t.amplitude.real, "im": t.amplitude.imag},
                    "rate": t.rate,
                    **({"extra": dict(t.extra)} if t.extra else {}),
                }
                for t in self.perturbations
            ],
        }


def _as_fourier(c) -> FourierCoefficient:
    if isinstance(c, FourierCoefficient):
        return c
    if isinstance(c, Mapping):
        return FourierCoefficient(c["index"], complex(c.get("re", 0.0), c.get("im", 0.0)))
    index, value = c
    return FourierCoefficient(index, value)


def _leading_constant(leading) -> complex:
    if isinstance(leading, (list, tuple)):
        coeffs = [_as_fourier(c) for c in leading]
        if any(c.index != 0 and c.value != 0 for c in coeffs):
            raise SpecError("leading coefficient must be a nonzero constant "
                            "(found nonzero harmonics)", "leading_sign")
        value = sum((c.value for c in coeffs), 0j)
    else:
        value = complex(leading)
    if value == 0:
        raise SpecError("leading coefficient must be nonzero", "leading_sign")
    return value


def normalize(spec_raw: OperatorSpec):
    """Divide through by the constant leading coefficient.

    Returns ``(spec, lambda_map)`` where the returned spec has leading
    coefficient 1 and ``lambda_map.to_raw`` turns its eigenvalues back into
    eigenvalues of ``spec_raw``.
    """
    c = _leading_constant(spec_raw.leading_sign)
    if c.imag != 0:
        raise SpecError("complex leading coefficients are not supported", "leading_sign")
    c = c.real
    coeffs = tuple(
        tuple(FourierCoefficient(f.index, f.value / c) for f in lst)
        for lst in spec_raw.periodic_coeffs
    )
    terms = tuple(t.scaled(1.0 / c) for t in spec_raw.perturbations)
    lam_map = LambdaMap(spec_raw.lambda_map.scale * c)
    spec = OperatorSpec(spec_raw.order, coeffs, 1.0, terms, lam_map)
    return spec, lam_map


def companion_matrix(spec: OperatorSpec, lam: complex, t: float) -> np.ndarray:
    """Companion matrix of ``H0 phi = lam phi``: superdiagonal ones, last row
    ``(lam - a_0(t), -a_1(t), ..., -a_{n-1}(t))``."""
    if not spec.is_normalized:
        raise SpecError("spec must be normalized (leading coefficient 1)", "leading_sign")
    n = spec.order
    A = np.zeros((n, n), dtype=complex)
    A[np.arange(n - 1), np.arange(1, n)] = 1.0
    A[n - 1] = [-complex(spec.a(k, t)) for k in range(n)]
    A[n - 1, 0] += lam
    return A


def perturbation_matrix(spec: OperatorSpec, t: float) -> np.ndarray:
    """Matrix with last row ``(q_0(t), ..., q_{n-1}(t))``, zero elsewhere."""
    n = spec.order
    B = np.zeros((n, n), dtype=complex)
    B[n - 1] = [complex(spec.q(k, t)) for k in range(n)]
    return B


# --- JSON --------------------------------------------------------------------

_TOP_KEYS = {"order", "leading_sign", "periodic_coeffs", "perturbations"}
_TERM_KEYS = {"order", "family", "amplitude", "rate", "extra"}


def _complex_field(obj, where) -> complex:
    if isinstance(obj, (int, float)):
        return complex(obj)
    if not isinstance(obj, Mapping):
        raise SpecError("expected {\"re\": .., \"im\": ..}", where)
    unknown = set(obj) - {"re", "im"}
    if unknown:
        raise SpecError(f"unknown keys {sorted(unknown)}", where)
    try:
        return complex(float(obj.get("re", 0.0)), float(obj.get("im", 0.0)))
    except (TypeError, ValueError) as exc:
        raise SpecError(f"non-numeric component ({exc})", where) from None


def spec_from_dict(doc: Mapping) -> OperatorSpec:
    """Build a raw (unnormalized) spec from the JSON document layout."""
    if not isinstance(doc, Mapping):
        raise SpecError("top level must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SpecError(f"unknown keys {sorted(unknown)}", sorted(unknown)[0])
    if "order" not in doc:
        raise SpecError("missing required field", "order")
    order = doc["order"]
    if not isinstance(order, int) or isinstance(order, bool) or order < 1:
        raise SpecError("must be a positive integer", "order")

    lead = doc.get("leading_sign", 1)
    if isinstance(lead, list):
        lead = [_fourier_entry(e, f"leading_sign[{j}]") for j, e in enumerate(lead)]
    elif not isinstance(lead, (int, float)) or isinstance(lead, bool) or lead == 0:
        raise SpecError("must be a nonzero number", "leading_sign")

    raw_coeffs = doc.get("periodic_coeffs", [])
    if not isinstance(raw_coeffs, list):
        raise SpecError("must be a list of coefficient lists", "periodic_coeffs")
    if len(raw_coeffs) > order:
        raise SpecError(f"expected at most {order} lists", "periodic_coeffs")
    coeffs = []
    for k, lst in enumerate(raw_coeffs):
        if not isinstance(lst, list):
            raise SpecError("must be a list", f"periodic_coeffs[{k}]")
        coeffs.append(tuple(_fourier_entry(e, f"periodic_coeffs[{k}][{j}]")
                            for j, e in enumerate(lst)))

    terms = []
    raw_terms = doc.get("perturbations", [])
    if not isinstance(raw_terms, list):
        raise SpecError("must be a list", "perturbations")
    for i, e in enumerate(raw_terms):
        where = f"perturbations[{i}]"
        if not isinstance(e, Mapping):
            raise SpecError("must be an object", where)
        unknown = set(e) - _TERM_KEYS
        if unknown:
            raise SpecError(f"unknown keys {sorted(unknown)}", where)
        for key in ("order", "family", "amplitude"):
            if key not in e:
                raise SpecError("missing required field", f"{where}.{key}")
        try:
            terms.append(PerturbationTerm(
                order=e["order"],
                family=e["family"],
                amplitude=_complex_field(e["amplitude"], f"{where}.amplitude"),
                rate=float(e.get("rate", 1.0)),
                extra=e.get("extra", {}),
            ))
        except SpecError as exc:
            raise SpecError(str(exc), where) from None
    return OperatorSpec(order, tuple(coeffs), lead, tuple(terms))


def _fourier_entry(e, where) -> FourierCoefficient:
    if not isinstance(e, Mapping) or "index" not in e:
        raise SpecError("expected {\"index\": m, \"re\": .., \"im\": ..}", where)
    unknown = set(e) - {"index", "re", "im"}
    if unknown:
        raise SpecError(f"unknown keys {sorted(unknown)}", where)
    if not isinstance(e["index"], int) or isinstance(e["index"], bool):
        raise SpecError("index must be an integer", f"{where}.index")
    return FourierCoefficient(e["index"], _complex_field(
        {k: e[k] for k in ("re", "im") if k in e}, where))


def load_spec(source) -> OperatorSpec:
    """Read a raw spec from a path, a JSON string, or a mapping."""
    if isinstance(source, Mapping):
        return spec_from_dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return spec_from_dict(doc)


def free_operator(order: int = 2, sign: float = 1.0, perturbations: Iterable = ()) -> OperatorSpec:
    """``sign * d^n/dt^n`` plus optional perturbation terms (raw form)."""
    return OperatorSpec(order, (), sign, tuple(perturbations))


def hill_operator(potential: Sequence[FourierCoefficient], perturbations: Iterable = ()) -> OperatorSpec:
    """Raw Hill operator ``-u'' + p(t) u`` (leading coefficient -1)."""
    return OperatorSpec(2, (tuple(potential), ()), -1.0, tuple(perturbations))
