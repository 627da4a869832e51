"""Built-in parametrized models with closed-form oracle data.

All built-ins share the same skeleton: an asymptotically constant (or
periodic) linear part that switches character at t = 0, an optional
polynomial or saturating nonlinearity, and a scalar parameter entering
linearly.  The two-dimensional family uses the triangular coefficients

    b_t = 1/alpha (t < 0), alpha (t >= 0),
    c_t = alpha   (t < 0), 1/alpha (t >= 0),

with alpha in (-1, 1) \\ {0}; its decaying solutions admit closed branch
formulas that serve as test oracles for the solver and the continuation
engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .sequences import TruncatedSequence, Window
from .solver import Box, LimitRhs, ParametricModel

__all__ = [
    "BUILTIN_NAMES",
    "BuiltinModel",
    "NoRealBranchError",
    "build",
    "default_parameters",
    "oracle_branch",
    "oracle_solution",
    "seed_homoclinic",
    "from_config",
    "load_config",
]

BUILTIN_NAMES = (
    "pw_linear",
    "transcritical",
    "pitchfork",
    "semilinear_demo",
    "beverton_holt",
    "scalar_affine",
)


class NoRealBranchError(ValueError):
    """The requested closed-form branch does not exist for these values."""


@dataclass(frozen=True)
class BuiltinModel:
    name: str
    parameters: dict
    model: ParametricModel


def default_parameters(name: str) -> dict:
    if name in ("pw_linear", "transcritical", "pitchfork"):
        p = {"alpha": 0.5, "lambda_star": 0.5}
        if name == "transcritical":
            p["delta"] = 1.0
        elif name == "pitchfork":
            p["delta"] = -1.0
        return p
    if name == "scalar_affine":
        return {"a": 0.5, "lambda_star": 0.0}
    if name == "semilinear_demo":
        return {"a": 0.5, "beta": 0.4, "b_rate": 0.5, "lambda_star": 0.0}
    if name == "beverton_holt":
        return {"a_minus": (0.8,), "a_plus": (0.8,), "b_rate": 0.5, "lambda_star": 0.0}
    raise ValueError(f"unknown model {name!r}; builtins: {', '.join(BUILTIN_NAMES)}")


def _pw_coeffs(alpha: float):
    def b(t: int) -> float:
        return 1.0 / alpha if t < 0 else alpha

    def c(t: int) -> float:
        return alpha if t < 0 else 1.0 / alpha

    return b, c


def _pw_family(alpha: float, delta: float, power: int, lambda_star: float, name: str) -> ParametricModel:
    if not (-1.0 < alpha < 1.0) or alpha == 0.0:
        raise ValueError("alpha must be a nonzero real in (-1, 1)")
    if power and delta == 0.0:
        raise ValueError("delta must be nonzero")
    b, c = _pw_coeffs(alpha)

    def nonlin(x1: float) -> float:
        return delta * x1**power if power else 0.0

    def dnonlin(x1: float) -> float:
        return delta * power * x1 ** (power - 1) if power else 0.0

    def f(t, x, lam):
        return np.array([b(t) * x[0], lam * x[0] + c(t) * x[1] + nonlin(x[0])])

    def df(t, x, lam):
        return np.array([[b(t), 0.0], [lam + dnonlin(x[0]), c(t)]])

    def f_lambda(t, x, lam):
        return np.array([0.0, x[0]])

    def limit(sign: int) -> LimitRhs:
        bb = alpha if sign > 0 else 1.0 / alpha
        cc = 1.0 / alpha if sign > 0 else alpha

        def lf(t, x, lam):
            return np.array([bb * x[0], lam * x[0] + cc * x[1] + nonlin(x[0])])

        def ldf(t, x, lam):
            return np.array([[bb, 0.0], [lam + dnonlin(x[0]), cc]])

        return LimitRhs(
            period=1,
            f=lf,
            df=ldf,
            linear_table=lambda lam: np.array([[[bb, 0.0], [lam, cc]]]),
            admissibility_hint="triangular",
            strictly_lower_coupling=True,
        )

    return ParametricModel(
        dim=2,
        f=f,
        df=df,
        omega=Box.full(2),
        lambda_interval=(-np.inf, np.inf),
        limit_minus=limit(-1),
        limit_plus=limit(+1),
        reference_lambda=lambda_star,
        f_lambda=f_lambda,
        name=name,
    )


def _scalar_affine(a: float, lambda_star: float) -> ParametricModel:
    def forcing(t: int) -> float:
        return 1.0 if t == 0 else 0.0

    def f(t, x, lam):
        return np.array([a * x[0] + lam * forcing(t)])

    def df(t, x, lam):
        return np.array([[a]])

    def limit(_sign):
        return LimitRhs(
            period=1,
            f=lambda t, x, lam: np.array([a * x[0]]),
            df=lambda t, x, lam: np.array([[a]]),
            linear_table=lambda lam: np.array([[[a]]]),
            lip_residual=lambda lam: 0.0,
            admissibility_hint="semilinear",
        )

    return ParametricModel(
        dim=1,
        f=f,
        df=df,
        reference_lambda=lambda_star,
        limit_minus=limit(-1),
        limit_plus=limit(+1),
        f_lambda=lambda t, x, lam: np.array([forcing(t)]),
        name="scalar_affine",
    )


_TANH_SLOPE_MAX = 4.0 / (3.0 * np.sqrt(3.0))  # max of d/dx tanh(x)^2


def _semilinear_demo(a: float, beta: float, b_rate: float, lambda_star: float) -> ParametricModel:
    def b(t: int) -> float:
        return b_rate ** abs(t)

    def f(t, x, lam):
        return np.array([a * x[0] + lam * (b(t) + beta * np.tanh(x[0]) ** 2)])

    def df(t, x, lam):
        th = np.tanh(x[0])
        return np.array([[a + lam * beta * 2.0 * th * (1.0 - th**2)]])

    def f_lambda(t, x, lam):
        return np.array([b(t) + beta * np.tanh(x[0]) ** 2])

    def limit(_sign):
        def lf(t, x, lam):
            return np.array([a * x[0] + lam * beta * np.tanh(x[0]) ** 2])

        def ldf(t, x, lam):
            th = np.tanh(x[0])
            return np.array([[a + lam * beta * 2.0 * th * (1.0 - th**2)]])

        return LimitRhs(
            period=1,
            f=lf,
            df=ldf,
            linear_table=lambda lam: np.array([[[a]]]),
            lip_residual=lambda lam: abs(lam) * beta * _TANH_SLOPE_MAX,
            admissibility_hint="semilinear",
        )

    return ParametricModel(
        dim=1,
        f=f,
        df=df,
        reference_lambda=lambda_star,
        limit_minus=limit(-1),
        limit_plus=limit(+1),
        f_lambda=f_lambda,
        name="semilinear_demo",
    )


def _beverton_holt(a_minus, a_plus, b_rate: float, lambda_star: float) -> ParametricModel:
    am = np.atleast_1d(np.asarray(a_minus, dtype=float))
    ap = np.atleast_1d(np.asarray(a_plus, dtype=float))
    if np.any(am <= 0) or np.any(ap <= 0):
        raise ValueError("growth tables must be positive")

    def a(t: int) -> float:
        return ap[t % len(ap)] if t >= 0 else am[t % len(am)]

    def b(t: int) -> float:
        return b_rate ** abs(t)

    def f(t, x, lam):
        return np.array([a(t) * x[0] / (1.0 + abs(x[0])) + lam * b(t)])

    def df(t, x, lam):
        return np.array([[a(t) / (1.0 + abs(x[0])) ** 2]])

    def limit(table):
        p = len(table)

        def lf(t, x, lam):
            return np.array([table[t % p] * x[0] / (1.0 + abs(x[0]))])

        def ldf(t, x, lam):
            return np.array([[table[t % p] / (1.0 + abs(x[0])) ** 2]])

        return LimitRhs(
            period=p,
            f=lf,
            df=ldf,
            lip_table=lambda lam: np.asarray(table, dtype=float),
            admissibility_hint="contractive",
        )

    return ParametricModel(
        dim=1,
        f=f,
        df=df,
        reference_lambda=lambda_star,
        limit_minus=limit(am),
        limit_plus=limit(ap),
        f_lambda=lambda t, x, lam: np.array([b(t)]),
        name="beverton_holt",
    )


def build(name: str, **params) -> BuiltinModel:
    """Assemble a built-in model; unknown names raise with the builtin list."""
    if name not in BUILTIN_NAMES:
        raise ValueError(f"unknown model {name!r}; builtins: {', '.join(BUILTIN_NAMES)}")
    full = default_parameters(name)
    unknown = set(params) - set(full)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    full.update(params)
    if name == "pw_linear":
        model = _pw_family(full["alpha"], 0.0, 0, full["lambda_star"], name)
    elif name == "transcritical":
        model = _pw_family(full["alpha"], full["delta"], 2, full["lambda_star"], name)
    elif name == "pitchfork":
        model = _pw_family(full["alpha"], full["delta"], 3, full["lambda_star"], name)
    elif name == "scalar_affine":
        model = _scalar_affine(full["a"], full["lambda_star"])
    elif name == "semilinear_demo":
        model = _semilinear_demo(full["a"], full["beta"], full["b_rate"], full["lambda_star"])
    else:
        model = _beverton_holt(
            full["a_minus"], full["a_plus"], full["b_rate"], full["lambda_star"]
        )
    return BuiltinModel(name, full, model)


# ---------------------------------------------------------------------------
# closed-form oracles


def oracle_branch(name: str, params: dict, lam: float, sign: int = 1) -> tuple[float, float]:
    """Initial value (xi1, xi2) at t = 0 of the nontrivial decaying branch.

    For the pitchfork both signs exist; `sign` picks one.  Raises
    NoRealBranchError when the branch is absent for the requested parameter.
    """
    alpha = params["alpha"]
    delta = params["delta"]
    if name == "transcritical":
        xi1 = -2.0 * (alpha**2 + alpha + 1.0) / (delta * (alpha + 1.0) ** 2) * lam
        xi2 = -2.0 * alpha * (alpha**2 + alpha + 1.0) / (delta * (alpha + 1.0) ** 4) * lam**2
        return xi1, xi2
    if name == "pitchfork":
        disc = -2.0 * lam / delta
        if disc < 0:
            raise NoRealBranchError(
                f"no real branch: lambda/delta = {lam / delta} must be <= 0"
            )
        xi1 = float(np.copysign(np.sqrt(disc), sign))
        # from the two asymptotic vanishing conditions: odd in xi1, so the
        # mirrored arm carries the opposite second component
        xi2 = -delta * alpha * xi1**3 / (2.0 * (alpha**2 + 1.0))
        return xi1, float(xi2)
    raise ValueError(f"no closed-form branch for model {name!r}")


def oracle_solution(params: dict, xi, lam: float, t: int) -> np.ndarray:
    """General solution of the two-dimensional linear model through xi at 0,
    evaluated by direct recursion (backward steps use the explicit triangular
    inverse)."""
    alpha = params["alpha"]
    b, c = _pw_coeffs(alpha)
    x = np.asarray(xi, dtype=float).copy()
    if t >= 0:
        for s in range(0, t):
            x = np.array([b(s) * x[0], lam * x[0] + c(s) * x[1]])
    else:
        for s in range(0, t, -1):
            x1 = x[0] / b(s - 1)
            x2 = (x[1] - lam * x1) / c(s - 1)
            x = np.array([x1, x2])
    return x


def seed_homoclinic(
    name: str, params: dict, lam: float, window: Window, sign: int = 1
) -> TruncatedSequence:
    """Materialize the nontrivial closed-form homoclinic on a window.

    The first component is alpha^{|t|} xi1 exactly.  The second component is
    built by two sweeps that both run in their stable direction (forward on
    t < 0, backward on t > 0, starting from zero tails), so roundoff is
    damped instead of amplified.
    """
    alpha = params["alpha"]
    delta = params["delta"]
    power = 2 if name == "transcritical" else 3
    xi1, _ = oracle_branch(name, params, lam, sign)
    b, c = _pw_coeffs(alpha)
    ts = window.indices()
    x1 = alpha ** np.abs(ts) * xi1
    x2 = np.zeros_like(x1)

    def drive(t, v1):
        return lam * v1 + delta * v1**power

    i0 = window.offset(0)
    for i in range(i0):  # forward sweep on [t_minus, 0], contraction rate alpha
        t = int(ts[i])
        x2[i + 1] = drive(t, x1[i]) + c(t) * x2[i]
    right = np.zeros_like(x1)
    for i in range(len(ts) - 2, i0 - 1, -1):  # backward sweep on [0, t_plus]
        t = int(ts[i])
        right[i] = (right[i + 1] - drive(t, x1[i])) / c(t)
    x2[i0:] = right[i0:]
    return TruncatedSequence(window, np.column_stack([x1, x2]))


# ---------------------------------------------------------------------------
# config files and custom models


def load_config(path) -> dict:
    text = open(path, "rb").read()
    if str(path).endswith((".toml", ".tml")):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib

        return tomllib.loads(text.decode())
    return json.loads(text.decode())


def from_config(cfg: dict) -> BuiltinModel:
    """Model from a config mapping: {"model": <builtin>, ...params} or the
    tabulated custom schema (see `custom_model`)."""
    cfg = dict(cfg)
    name = cfg.pop("model", None)
    if name is None:
        raise ValueError("config needs a 'model' entry")
    if name in BUILTIN_NAMES:
        for key in ("a_minus", "a_plus"):
            if key in cfg and isinstance(cfg[key], list):
                cfg[key] = tuple(cfg[key])
        return build(name, **cfg)
    if name == "custom":
        return custom_model(cfg)
    raise ValueError(f"unknown model {name!r}; builtins: {', '.join(BUILTIN_NAMES)}")


def custom_model(cfg: dict) -> BuiltinModel:
    """Custom model from tabulated coefficients plus polynomial terms.

    Schema::

        {
          "dim": 2,
          "linear_minus":   [[[...]], ...],   # p- matrices, used for t < 0
          "linear_plus":    [[[...]], ...],   # p+ matrices, used for t >= 0
          "coupling_minus": [[[...]], ...],   # optional, added with factor lambda
          "coupling_plus":  [[[...]], ...],
          "nonlinear": [{"row": 1, "powers": [2, 0], "coeff": 1.0,
                         "lambda_power": 0}],
          "lambda_star": 0.5,
        }

    Coefficients are A_t(lambda) = base_t + lambda * coupling_t with the
    minus tables active for t < 0; each nonlinear term adds
    coeff * lambda**lambda_power * prod_i x_i**powers_i to one row.
    """
    d = int(cfg["dim"])
    lin_m = np.asarray(cfg["linear_minus"], dtype=float).reshape(-1, d, d)
    lin_p = np.asarray(cfg["linear_plus"], dtype=float).reshape(-1, d, d)
    cpl_m = np.asarray(cfg.get("coupling_minus", np.zeros_like(lin_m)), dtype=float).reshape(-1, d, d)
    cpl_p = np.asarray(cfg.get("coupling_plus", np.zeros_like(lin_p)), dtype=float).reshape(-1, d, d)
    terms = [
        (int(term["row"]), np.asarray(term["powers"], dtype=int), float(term["coeff"]),
         int(term.get("lambda_power", 0)))
        for term in cfg.get("nonlinear", [])
    ]
    lambda_star = float(cfg.get("lambda_star", 0.0))

    def tables(t: int):
        if t < 0:
            return lin_m[t % len(lin_m)], cpl_m[t % len(cpl_m)]
        return lin_p[t % len(lin_p)], cpl_p[t % len(cpl_p)]

    def nonlin(x, lam):
        out = np.zeros(d)
        for row, powers, coeff, lpow in terms:
            out[row] += coeff * lam**lpow * np.prod(x**powers)
        return out

    def dnonlin(x, lam):
        out = np.zeros((d, d))
        for row, powers, coeff, lpow in terms:
            for j in range(d):
                if powers[j] == 0:
                    continue
                rest = powers.copy()
                rest[j] -= 1
                out[row, j] += coeff * lam**lpow * powers[j] * np.prod(x**rest)
        return out

    def f(t, x, lam):
        A, C = tables(t)
        return (A + lam * C) @ x + nonlin(x, lam)

    def df(t, x, lam):
        A, C = tables(t)
        return A + lam * C + dnonlin(x, lam)

    def f_lambda(t, x, lam):
        _, C = tables(t)
        out = C @ x
        for row, powers, coeff, lpow in terms:
            if lpow:
                out[row] += coeff * lpow * lam ** (lpow - 1) * np.prod(x**powers)
        return out

    def limit(base, cpl):
        p = base.shape[0]

        def lf(t, x, lam):
            return (base[t % p] + lam * cpl[t % p]) @ x + nonlin(x, lam)

        def ldf(t, x, lam):
            return base[t % p] + lam * cpl[t % p] + dnonlin(x, lam)

        lower = all(np.all(powers[row:] == 0) for row, powers, _, _ in terms)
        return LimitRhs(
            period=p,
            f=lf,
            df=ldf,
            linear_table=lambda lam: base + lam * cpl,
            admissibility_hint=cfg.get("admissibility_hint"),
            strictly_lower_coupling=lower,
        )

    model = ParametricModel(
        dim=d,
        f=f,
        df=df,
        reference_lambda=lambda_star,
        limit_minus=limit(lin_m, cpl_m),
        limit_plus=limit(lin_p, cpl_p),
        f_lambda=f_lambda,
        name="custom",
    )
    return BuiltinModel("custom", dict(cfg, model="custom"), model)
