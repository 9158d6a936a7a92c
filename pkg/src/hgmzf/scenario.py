"""System configuration, derived fading parameters and transmit correlation.

Everything downstream works in linear units; the dB quantities held by
:class:`ScenarioConfig` are converted exactly once, in :func:`derive_params`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

__all__ = [
    "ConfigError",
    "CorrelationSpec",
    "ScenarioConfig",
    "DerivedParams",
    "CorrelationMatrix",
    "build_correlation",
    "derive_params",
    "db_to_linear",
    "linear_to_db",
    "read_correlation_file",
    "write_correlation_file",
]

EIG_RTOL = 1e-12
TRACE_RTOL = 1e-9


class ConfigError(ValueError):
    """Invalid scenario, correlation matrix or derived-parameter request."""


def db_to_linear(x_db: float) -> float:
    if x_db == -math.inf:
        return 0.0
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    if x == 0.0:
        return -math.inf
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class CorrelationSpec:
    """How to obtain the transmit correlation matrix.

    ``kind`` is one of ``"identity"``, ``"file"`` (with ``path``) or
    ``"laplacian_ula"`` (with ``spacing`` in wavelengths).
    """

    kind: str = "identity"
    path: str | None = None
    spacing: float = 0.5

    def __post_init__(self):
        if self.kind not in ("identity", "file", "laplacian_ula"):
            raise ConfigError(f"unknown correlation kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ConfigError("file correlation needs a path")
        if self.kind == "laplacian_ula" and not self.spacing > 0:
            raise ConfigError("antenna spacing must be positive")

    @classmethod
    def parse(cls, text: str) -> "CorrelationSpec":
        """Parse ``identity``, ``file:PATH``, ``laplacian`` or ``laplacian:SPACING``."""
        text = text.strip()
        if text == "identity":
            return cls("identity")
        if text.startswith("file:"):
            return cls("file", path=text[5:])
        if text in ("laplacian", "laplacian_ula"):
            return cls("laplacian_ula")
        for prefix in ("laplacian:", "laplacian_ula:"):
            if text.startswith(prefix):
                try:
                    return cls("laplacian_ula", spacing=float(text[len(prefix):]))
                except ValueError as exc:
                    raise ConfigError(f"bad antenna spacing in {text!r}") from exc
        raise ConfigError(f"cannot parse correlation spec {text!r}")

    def __str__(self) -> str:
        if self.kind == "file":
            return f"file:{self.path}"
        if self.kind == "laplacian_ula":
            return f"laplacian:{self.spacing:g}"
        return "identity"


@dataclass(frozen=True)
class ScenarioConfig:
    """Antenna counts, fading parameters and input SNR of one MIMO link.

    ``k_factor_db = -inf`` is accepted and means Rayleigh-only fading (K = 0).
    """

    n_rx: int = 6
    n_tx: int = 2
    k_factor_db: float = 7.0
    azimuth_spread_deg: float = 51.0
    gamma_s_db: float = 5.0
    constellation_size: int = 4
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)

    def __post_init__(self):
        if not (isinstance(self.n_tx, (int, np.integer)) and isinstance(self.n_rx, (int, np.integer))):
            raise ConfigError("antenna counts must be integers")
        if not 1 <= self.n_tx <= self.n_rx:
            raise ConfigError(f"need 1 <= n_tx <= n_rx, got n_tx={self.n_tx}, n_rx={self.n_rx}")
        if math.isnan(self.k_factor_db) or self.k_factor_db == math.inf:
            raise ConfigError("k_factor_db must be finite or -inf")
        if not math.isfinite(self.gamma_s_db):
            raise ConfigError("gamma_s_db must be finite")
        if not math.isfinite(self.azimuth_spread_deg) or self.azimuth_spread_deg < 0:
            raise ConfigError("azimuth spread must be a finite non-negative angle")
        m = self.constellation_size
        if m < 2 or m & (m - 1):
            raise ConfigError(f"constellation size must be a power of two >= 2, got {m}")

    @property
    def dof(self) -> int:
        return self.n_rx - self.n_tx + 1

    def with_gamma_b_db(self, gamma_b_db: float) -> "ScenarioConfig":
        """Copy with the per-symbol SNR set from a per-bit SNR."""
        gs = gamma_b_db + linear_to_db(math.log2(self.constellation_size))
        return self.replace(gamma_s_db=gs)

    def replace(self, **changes) -> "ScenarioConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ScenarioConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["correlation"] = str(self.correlation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__) - {"correlation_spec"}
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        corr = d.pop("correlation", d.pop("correlation_spec", "identity"))
        if isinstance(corr, str):
            corr = CorrelationSpec.parse(corr)
        elif isinstance(corr, dict):
            corr = CorrelationSpec(**corr)
        for key in ("k_factor_db", "azimuth_spread_deg", "gamma_s_db"):
            if key in d:
                d[key] = float(d[key])
        return cls(correlation=corr, **d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class DerivedParams:
    """Quantities the SNR law actually depends on.

    Attributes
    ----------
    dof : int
        Degrees of freedom ``N = n_rx - n_tx + 1``.
    k_linear : float
        Rician K-factor as a power ratio.
    gamma1 : float
        SNR scale ``Gamma_s / ((K+1) [R_T^{-1}]_{11})`` (linear).
    noncentrality : float
        ``a = K [R_T^{-1}]_{11} * n_rx * n_tx``.
    gamma_b_db : float
        Per-bit input SNR in dB.
    n_rx, n_tx : int
        Antenna counts (``n_rx`` is the lower parameter of 1F1).
    """

    dof: int
    k_linear: float
    gamma1: float
    noncentrality: float
    gamma_b_db: float
    n_rx: int
    n_tx: int

    def __post_init__(self):
        if self.dof != self.n_rx - self.n_tx + 1 or self.dof < 1:
            raise ConfigError("inconsistent degrees of freedom")
        if not self.gamma1 > 0:
            raise ConfigError("gamma1 must be positive")
        if self.noncentrality < 0:
            raise ConfigError("noncentrality must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Hermitian PSD transmit correlation matrix with trace ``n_tx``."""

    entries: np.ndarray

    def __post_init__(self):
        r = np.array(self.entries, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] < 1:
            raise ConfigError(f"correlation matrix must be square, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ConfigError("correlation matrix has non-finite entries")
        scale = max(np.max(np.abs(r)), 1.0)
        if np.max(np.abs(r - r.conj().T)) > 1e-12 * scale:
            raise ConfigError("correlation matrix is not Hermitian")
        r = 0.5 * (r + r.conj().T)
        eig = np.linalg.eigvalsh(r)
        if eig[0] < -EIG_RTOL * max(eig[-1], 0.0) or eig[-1] <= 0:
            raise ConfigError(f"correlation matrix is not positive semi-definite (min eig {eig[0]:.3g})")
        n = r.shape[0]
        if abs(np.trace(r).real - n) > TRACE_RTOL * n:
            raise ConfigError(f"correlation trace {np.trace(r).real!r} differs from n_tx={n}")
        r.setflags(write=False)
        object.__setattr__(self, "entries", r)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def inverse_11(self) -> float:
        """``[R_T^{-1}]_{11}``; raises :class:`ConfigError` when R_T is singular."""
        eig = np.linalg.eigvalsh(self.entries)
        if eig[0] <= EIG_RTOL * eig[-1]:
            raise ConfigError("correlation matrix is singular")
        e1 = np.zeros(self.order)
        e1[0] = 1.0
        return float(np.linalg.solve(self.entries, e1)[0].real)

    def __eq__(self, other):
        return isinstance(other, CorrelationMatrix) and np.array_equal(self.entries, other.entries)

    __hash__ = None


def _laplacian_ula(n_tx: int, as_deg: float, spacing: float) -> np.ndarray:
    """Correlation of a ULA under a Laplacian power azimuth spectrum centred at broadside.

    The spectrum ``exp(-sqrt(2)|theta|/sigma)`` is truncated to ``[-pi, pi]``
    and normalised to unit mass, so the diagonal is exactly one.
    """
    if n_tx == 1:
        return np.eye(1, dtype=complex)
    if as_deg == 0:
        return np.ones((n_tx, n_tx), dtype=complex)
    sigma = math.radians(as_deg)
    lam = math.sqrt(2.0) / sigma

    def pas(theta):
        return math.exp(-lam * abs(theta))

    mass = 2 * integrate.quad(pas, 0, math.pi, epsabs=0, epsrel=1e-13, limit=200)[0]
    r = np.eye(n_tx, dtype=complex)
    for k in range(1, n_tx):
        w = 2 * math.pi * spacing * k
        # imaginary part vanishes: the spectrum is even and sin is odd
        re = 2 * integrate.quad(lambda th: math.cos(w * math.sin(th)) * pas(th), 0, math.pi,
                                epsabs=0, epsrel=1e-13, limit=400)[0] / mass
        for p in range(n_tx - k):
            r[p, p + k] = r[p + k, p] = re
    return r


def read_correlation_file(path: str | Path) -> np.ndarray:
    """Read a whitespace/comma separated complex matrix, one row per line."""
    rows = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read correlation file {path}: {exc}") from exc
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([complex(tok.replace("i", "j")) for tok in line.replace(",", " ").split()])
        except ValueError as exc:
            raise ConfigError(f"bad entry in correlation file {path}: {line!r}") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"correlation file {path} is not a square matrix")
    return np.array(rows, dtype=complex)


def write_correlation_file(path: str | Path, r: np.ndarray) -> None:
    lines = [" ".join(f"{z.real:.17g}{z.imag:+.17g}j" for z in row) for row in np.asarray(r, complex)]
    Path(path).write_text("\n".join(lines) + "\n")


def build_correlation(spec: CorrelationSpec, n_tx: int, as_deg: float = 0.0) -> CorrelationMatrix:
    """Transmit correlation matrix for ``spec``.

    Raises
    ------
    ConfigError
        If a file matrix has the wrong order, is not Hermitian PSD, or its
        trace differs from ``n_tx``.
    """
    if n_tx < 1:
        raise ConfigError("n_tx must be >= 1")
    if spec.kind == "identity":
        r = np.eye(n_tx, dtype=complex)
    elif spec.kind == "laplacian_ula":
        r = _laplacian_ula(n_tx, as_deg, spec.spacing)
    else:
        r = read_correlation_file(spec.path)
        if r.shape != (n_tx, n_tx):
            raise ConfigError(f"correlation file is {r.shape[0]}x{r.shape[1]}, expected {n_tx}x{n_tx}")
    return CorrelationMatrix(r)


def derive_params(cfg: ScenarioConfig, rt: CorrelationMatrix) -> DerivedParams:
    """Map a scenario onto ``(N, K, Gamma_1, a, Gamma_b)``."""
    if rt.order != cfg.n_tx:
        raise ConfigError(f"correlation order {rt.order} does not match n_tx={cfg.n_tx}")
    k = db_to_linear(cfg.k_factor_db)
    # [R_K^{-1}]_11 for the scattered-part covariance R_K = R_T / (K + 1)
    r11 = (k + 1.0) * rt.inverse_11()
    gs = db_to_linear(cfg.gamma_s_db)
    a = r11 * (k / (k + 1.0)) * cfg.n_rx * cfg.n_tx
    gb_db = cfg.gamma_s_db - linear_to_db(math.log2(cfg.constellation_size))
    return DerivedParams(
        dof=cfg.dof,
        k_linear=k,
        gamma1=gs / r11,
        noncentrality=a,
        gamma_b_db=gb_db,
        n_rx=cfg.n_rx,
        n_tx=cfg.n_tx,
    )
