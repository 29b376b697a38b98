"""Problem instances for finite-horizon entropy-regularized LQ games.

A game couples ``num_agents`` players through shared linear dynamics
``x_{t+1} = A_t x_t + sum_i B^i_t u^i_t + w_t`` over ``horizon`` stages.
Each agent pays quadratic state/action costs plus a KL penalty of its
stage policy against a standard-normal prior, weighted by ``tau``.
This module owns the instance container, its validation, the JSON
file format, and a seeded random-instance generator.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GameSpecError",
    "GameSpec",
    "LinearGaussianPolicy",
    "JointPolicy",
    "load_game_spec",
    "dump_game_spec",
    "validate_game_spec",
    "random_game",
    "specs_equal",
    "joint_policy_from_arrays",
    "stack_gains",
    "stack_covs",
    "load_joint_policy",
    "dump_joint_policy",
]

# File round-trips introduce tiny asymmetries; accept and repair them.
SYMMETRY_RTOL = 1e-9
PSD_RTOL = 1e-10

_TOP_KEYS = (
    "num_agents",
    "horizon",
    "state_dim",
    "action_dim",
    "tau",
    "A",
    "B",
    "Q",
    "R",
    "noise_cov",
    "init_mean",
    "init_cov",
)


class GameSpecError(ValueError):
    """Parse or validation failure, tagged with the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Validated game instance.

    Shapes (``N`` agents, ``T`` stages, state dim ``m``, action dim ``p``):

    - ``A``: ``(T, m, m)`` drift matrices
    - ``B``: ``(N, T, m, p)`` per-agent input matrices
    - ``Q``: ``(N, T+1, m, m)`` symmetric PSD state costs (incl. terminal)
    - ``R``: ``(N, T, p, p)`` symmetric PD action costs
    - ``noise_cov``: ``(m, m)`` symmetric PSD process-noise covariance
    - ``init_mean``: ``(m,)``; ``init_cov``: ``(m, m)`` symmetric PSD

    Instances are immutable after validation (arrays are read-only) and
    safe to share across workers.
    """

    num_agents: int
    horizon: int
    state_dim: int
    action_dim: int
    tau: float
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    noise_cov: np.ndarray
    init_mean: np.ndarray
    init_cov: np.ndarray

    def with_tau(self, tau: float) -> "GameSpec":
        """Copy of this instance with a different regularization weight."""
        return validate_game_spec(dataclasses.replace(self, tau=float(tau)))


@dataclass(frozen=True, eq=False)
class LinearGaussianPolicy:
    """Per-stage linear Gaussian policy ``u ~ N(gains[t] @ x, covs[t])``.

    ``gains``: ``(T, p, m)``; ``covs``: ``(T, p, p)``.  Covariances must be
    symmetric PD whenever the policy is sampled or evaluated; all-zero
    covariances are tolerated only as solver-internal iterates.
    """

    gains: np.ndarray
    covs: np.ndarray


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """One :class:`LinearGaussianPolicy` per agent, over the same horizon."""

    policies: tuple[LinearGaussianPolicy, ...]

    @property
    def num_agents(self) -> int:
        return len(self.policies)

    @property
    def horizon(self) -> int:
        return self.policies[0].gains.shape[0]


def _as_float_array(value, field: str) -> np.ndarray:
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise GameSpecError(field, "not a (rectangular) numeric array") from None


def _time_matrices(value, steps: int, rows: int, cols: int, field: str) -> np.ndarray:
    """Coerce a field into a ``(steps, rows, cols)`` stack.

    Accepted shorthands: a single matrix (broadcast over time); for 1x1
    matrices, a bare scalar (broadcast) or a flat list of ``steps`` scalars.
    """
    arr = _as_float_array(value, field)
    if arr.ndim == 0 and rows == 1 and cols == 1:
        return np.full((steps, 1, 1), float(arr))
    if arr.ndim == 1 and rows == 1 and cols == 1 and arr.shape[0] == steps:
        return arr.reshape(steps, 1, 1).copy()
    if arr.ndim == 2 and arr.shape == (rows, cols):
        return np.repeat(arr[None], steps, axis=0)
    if arr.ndim == 3 and arr.shape == (steps, rows, cols):
        return arr.copy()
    raise GameSpecError(
        field,
        f"dimension mismatch: expected {steps} matrices of shape "
        f"({rows}, {cols}) or one matrix to broadcast, got data of shape {arr.shape}",
    )


def _agent_time_matrices(value, n: int, steps: int, rows: int, cols: int, field: str) -> np.ndarray:
    if isinstance(value, list) and len(value) == n:
        try:
            return np.stack(
                [_time_matrices(v, steps, rows, cols, f"{field}[{i}]") for i, v in enumerate(value)]
            )
        except GameSpecError:
            if n != 1:
                raise
    if n == 1:
        # single-agent documents may omit the agent nesting
        return _time_matrices(value, steps, rows, cols, field)[None]
    raise GameSpecError(field, f"expected a list of {n} per-agent entries")


def _single_matrix(value, dim: int, field: str) -> np.ndarray:
    arr = _as_float_array(value, field)
    if arr.ndim == 0 and dim == 1:
        return arr.reshape(1, 1).copy()
    if arr.ndim == 2 and arr.shape == (dim, dim):
        return arr.copy()
    raise GameSpecError(field, f"dimension mismatch: expected shape ({dim}, {dim}), got {arr.shape}")


def _vector(value, dim: int, field: str) -> np.ndarray:
    arr = _as_float_array(value, field)
    if arr.ndim == 0 and dim == 1:
        return arr.reshape(1).copy()
    if arr.ndim == 1 and arr.shape == (dim,):
        return arr.copy()
    raise GameSpecError(field, f"dimension mismatch: expected shape ({dim},), got {arr.shape}")


def _positive_int(doc: dict, key: str) -> int:
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise GameSpecError(key, "must be an integer")
    if value < 1:
        raise GameSpecError(key, "must be a positive integer")
    return value


def _reject_constant(name: str):
    raise GameSpecError("", f"non-finite constant {name!r} not permitted")


def load_game_spec(text: str) -> GameSpec:
    """Parse and validate a JSON game document.

    Raises :class:`GameSpecError` naming the offending field on malformed
    documents, dimension mismatches, PSD/PD violations, or nonpositive tau.
    """
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise GameSpecError("", f"malformed JSON document: {exc}") from None
    if not isinstance(doc, dict):
        raise GameSpecError("", "top level must be a JSON object")
    missing = [k for k in _TOP_KEYS if k not in doc]
    if missing:
        raise GameSpecError(missing[0], "missing required key")

    n = _positive_int(doc, "num_agents")
    horizon = _positive_int(doc, "horizon")
    m = _positive_int(doc, "state_dim")
    p = _positive_int(doc, "action_dim")
    tau = doc["tau"]
    if isinstance(tau, bool) or not isinstance(tau, (int, float)):
        raise GameSpecError("tau", "must be a real number")

    spec = GameSpec(
        num_agents=n,
        horizon=horizon,
        state_dim=m,
        action_dim=p,
        tau=float(tau),
        A=_time_matrices(doc["A"], horizon, m, m, "A"),
        B=_agent_time_matrices(doc["B"], n, horizon, m, p, "B"),
        Q=_agent_time_matrices(doc["Q"], n, horizon + 1, m, m, "Q"),
        R=_agent_time_matrices(doc["R"], n, horizon, p, p, "R"),
        noise_cov=_single_matrix(doc["noise_cov"], m, "noise_cov"),
        init_mean=_vector(doc["init_mean"], m, "init_mean"),
        init_cov=_single_matrix(doc["init_cov"], m, "init_cov"),
    )
    return validate_game_spec(spec)


def dump_game_spec(spec: GameSpec) -> str:
    """Serialize to the canonical JSON document (exact float round-trip)."""
    doc = {
        "num_agents": spec.num_agents,
        "horizon": spec.horizon,
        "state_dim": spec.state_dim,
        "action_dim": spec.action_dim,
        "tau": float(spec.tau),
        "A": spec.A.tolist(),
        "B": spec.B.tolist(),
        "Q": spec.Q.tolist(),
        "R": spec.R.tolist(),
        "noise_cov": spec.noise_cov.tolist(),
        "init_mean": spec.init_mean.tolist(),
        "init_cov": spec.init_cov.tolist(),
    }
    return json.dumps(doc, indent=2) + "\n"


def _symmetrized(x: np.ndarray, field: str) -> np.ndarray:
    skew = np.linalg.norm(x - x.swapaxes(-1, -2))
    if skew > SYMMETRY_RTOL * (1.0 + np.linalg.norm(x)):
        raise GameSpecError(field, f"not symmetric (skew norm {skew:.3e})")
    return 0.5 * (x + x.swapaxes(-1, -2))


def _check_psd(x: np.ndarray, field: str) -> None:
    lo = float(np.linalg.eigvalsh(x)[0])
    if lo < -PSD_RTOL * (1.0 + float(np.linalg.norm(x))):
        raise GameSpecError(field, f"not positive semidefinite (min eigenvalue {lo:.3e})")


def _check_pd(x: np.ndarray, field: str) -> None:
    lo = float(np.linalg.eigvalsh(x)[0])
    if lo <= 0.0:
        raise GameSpecError(field, f"not positive definite (min eigenvalue {lo:.3e})")


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.setflags(write=False)
    return out


def validate_game_spec(spec: GameSpec) -> GameSpec:
    """Check dimensions, symmetry, definiteness, and tau; symmetrize.

    Symmetrization is ``(X + X^T)/2`` after a skew-tolerance check, so
    validating an already-validated instance is a no-op.
    """
    n, horizon = spec.num_agents, spec.horizon
    m, p = spec.state_dim, spec.action_dim
    for key in ("num_agents", "horizon", "state_dim", "action_dim"):
        value = getattr(spec, key)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
            raise GameSpecError(key, "must be a positive integer")
    if not (isinstance(spec.tau, (int, float, np.floating)) and np.isfinite(spec.tau)):
        raise GameSpecError("tau", "must be a finite real")
    if spec.tau <= 0:
        raise GameSpecError("tau", f"must be positive, got {spec.tau}")

    shapes = {
        "A": (spec.A, (horizon, m, m)),
        "B": (spec.B, (n, horizon, m, p)),
        "Q": (spec.Q, (n, horizon + 1, m, m)),
        "R": (spec.R, (n, horizon, p, p)),
        "noise_cov": (spec.noise_cov, (m, m)),
        "init_mean": (spec.init_mean, (m,)),
        "init_cov": (spec.init_cov, (m, m)),
    }
    arrays = {}
    for field, (arr, shape) in shapes.items():
        arr = _as_float_array(arr, field)
        if arr.shape != shape:
            raise GameSpecError(field, f"dimension mismatch: expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise GameSpecError(field, "contains non-finite entries")
        arrays[field] = arr

    Q = _symmetrized(arrays["Q"], "Q")
    R = _symmetrized(arrays["R"], "R")
    noise_cov = _symmetrized(arrays["noise_cov"], "noise_cov")
    init_cov = _symmetrized(arrays["init_cov"], "init_cov")
    for i in range(n):
        for t in range(horizon + 1):
            _check_psd(Q[i, t], f"Q[{i}][{t}]")
        for t in range(horizon):
            _check_pd(R[i, t], f"R[{i}][{t}]")
    _check_psd(noise_cov, "noise_cov")
    _check_psd(init_cov, "init_cov")

    return GameSpec(
        num_agents=n,
        horizon=horizon,
        state_dim=m,
        action_dim=p,
        tau=float(spec.tau),
        A=_frozen(arrays["A"]),
        B=_frozen(arrays["B"]),
        Q=_frozen(Q),
        R=_frozen(R),
        noise_cov=_frozen(noise_cov),
        init_mean=_frozen(arrays["init_mean"]),
        init_cov=_frozen(init_cov),
    )


def random_game(
    num_agents: int,
    horizon: int,
    state_dim: int,
    action_dim: int,
    seed: int,
    scale: float = 1.0,
) -> GameSpec:
    """Seeded random instance; identical seeds give identical specs.

    ``A``/``B`` entries are uniform in ``[-scale, scale]``; ``Q`` and the
    covariances are Gram matrices ``G^T G`` (PSD), ``R`` is ``G^T G + I``
    (PD).  ``tau`` is initialized to 1; adjust via :meth:`GameSpec.with_tau`.
    """
    if min(num_agents, horizon, state_dim, action_dim) < 1:
        raise GameSpecError("dims", "all dimensions must be >= 1")
    if not scale > 0:
        raise GameSpecError("scale", "must be positive")
    rng = np.random.default_rng(seed)
    n, T, m, p = num_agents, horizon, state_dim, action_dim

    def gram(*shape):
        g = rng.uniform(-scale, scale, shape)
        return np.einsum("...ji,...jk->...ik", g, g)

    spec = GameSpec(
        num_agents=n,
        horizon=T,
        state_dim=m,
        action_dim=p,
        tau=1.0,
        A=rng.uniform(-scale, scale, (T, m, m)),
        B=rng.uniform(-scale, scale, (n, T, m, p)),
        Q=gram(n, T + 1, m, m),
        R=gram(n, T, p, p) + np.eye(p),
        noise_cov=gram(m, m),
        init_mean=rng.uniform(-scale, scale, m),
        init_cov=gram(m, m),
    )
    return validate_game_spec(spec)


def specs_equal(a: GameSpec, b: GameSpec) -> bool:
    """Exact field-wise equality (used for round-trip checks)."""
    if (a.num_agents, a.horizon, a.state_dim, a.action_dim, a.tau) != (
        b.num_agents,
        b.horizon,
        b.state_dim,
        b.action_dim,
        b.tau,
    ):
        return False
    return all(
        np.array_equal(getattr(a, f), getattr(b, f))
        for f in ("A", "B", "Q", "R", "noise_cov", "init_mean", "init_cov")
    )


def joint_policy_from_arrays(gains: np.ndarray, covs: np.ndarray) -> JointPolicy:
    """Build a :class:`JointPolicy` from stacked ``(N, T, p, m)``/``(N, T, p, p)`` arrays."""
    gains = np.asarray(gains, dtype=float)
    covs = np.asarray(covs, dtype=float)
    if gains.ndim != 4 or covs.ndim != 4 or gains.shape[:2] != covs.shape[:2]:
        raise ValueError(f"inconsistent policy arrays: {gains.shape} vs {covs.shape}")
    return JointPolicy(
        tuple(LinearGaussianPolicy(gains[i].copy(), covs[i].copy()) for i in range(gains.shape[0]))
    )


def stack_gains(joint: JointPolicy) -> np.ndarray:
    return np.stack([pol.gains for pol in joint.policies])


def stack_covs(joint: JointPolicy) -> np.ndarray:
    return np.stack([pol.covs for pol in joint.policies])


def check_policy_shape(spec: GameSpec, joint: JointPolicy) -> None:
    """Reject joint policies whose agent count, horizon, or dims differ from the game's."""
    expected = (spec.num_agents, spec.horizon, spec.action_dim, spec.state_dim)
    got = stack_gains(joint).shape
    if got != expected:
        raise ValueError(
            f"policy does not match game: gains shaped {got}, expected "
            f"(agents, horizon, action_dim, state_dim) = {expected}"
        )


def dump_joint_policy(joint: JointPolicy) -> str:
    """Serialize a joint policy to JSON (same conventions as the game file)."""
    gains = stack_gains(joint)
    covs = stack_covs(joint)
    doc = {
        "num_agents": joint.num_agents,
        "horizon": joint.horizon,
        "state_dim": gains.shape[3],
        "action_dim": gains.shape[2],
        "gains": gains.tolist(),
        "covs": covs.tolist(),
    }
    return json.dumps(doc, indent=2) + "\n"


def load_joint_policy(text: str) -> JointPolicy:
    """Parse a policy document produced by :func:`dump_joint_policy`."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise GameSpecError("", f"malformed JSON document: {exc}") from None
    for key in ("num_agents", "horizon", "state_dim", "action_dim", "gains", "covs"):
        if key not in doc:
            raise GameSpecError(key, "missing required key")
    n = _positive_int(doc, "num_agents")
    T = _positive_int(doc, "horizon")
    m = _positive_int(doc, "state_dim")
    p = _positive_int(doc, "action_dim")
    gains = _as_float_array(doc["gains"], "gains")
    covs = _as_float_array(doc["covs"], "covs")
    if gains.shape != (n, T, p, m):
        raise GameSpecError("gains", f"dimension mismatch: expected {(n, T, p, m)}, got {gains.shape}")
    if covs.shape != (n, T, p, p):
        raise GameSpecError("covs", f"dimension mismatch: expected {(n, T, p, p)}, got {covs.shape}")
    if not (np.all(np.isfinite(gains)) and np.all(np.isfinite(covs))):
        raise GameSpecError("gains", "contains non-finite entries")
    return joint_policy_from_arrays(gains, covs)
