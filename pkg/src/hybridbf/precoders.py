"""Hybrid precoder and combiner constructions.

All schemes factor the transmit side as ``f_a @ f_d`` where ``f_a`` is a
phase-shifter matrix (unit-modulus entries on its support) and ``f_d`` is
a small digital matrix scaled so that ``||f_a @ f_d||_F^2 == n_s``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .channel import ArrayGeometry, ChannelRealization, ClusterSet, array_response
from .exceptions import ConfigError, DegenerateError, DimensionError, RankDeficiencyError
from .linalg import MultiplicationCounter, herm, least_squares, matmul_counted, svd
from .validation import as_complex_matrix, as_real_vector, check_positive_int

#: Entries with magnitude below this stay zero under modulus normalization.
_SUPPORT_TOL = 1e-12


class AnalogStructure(enum.Enum):
    FULLY_CONNECTED = "fully_connected"
    SUB_CONNECTED = "sub_connected"


@dataclass(frozen=True)
class HybridPrecoder:
    """Analog ``f_a`` (n_t x n_rf) and digital ``f_d`` (n_rf x n_s) factors."""

    f_a: np.ndarray
    f_d: np.ndarray
    structure: AnalogStructure = AnalogStructure.FULLY_CONNECTED

    @property
    def matrix(self) -> np.ndarray:
        return self.f_a @ self.f_d

    @property
    def n_t(self) -> int:
        return self.f_a.shape[0]

    @property
    def n_rf(self) -> int:
        return self.f_a.shape[1]

    @property
    def n_s(self) -> int:
        return self.f_d.shape[1]


@dataclass(frozen=True)
class CombinerPair:
    """Receive-side analog ``w_a`` (n_r x n_rf) and digital ``w_d`` (n_rf x n_s)."""

    w_a: np.ndarray
    w_d: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return self.w_a @ self.w_d


@dataclass(frozen=True)
class PrecoderDictionary:
    """Candidate steering-vector atoms, one unit-norm column each."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = as_complex_matrix(self.atoms, "atoms")
        norms = np.linalg.norm(atoms, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-10):
            raise DimensionError("dictionary atoms must have unit norm")
        object.__setattr__(self, "atoms", atoms)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def from_rays(cls, geom: ArrayGeometry, clusters: ClusterSet,
                  side: str = "tx") -> "PrecoderDictionary":
        """Genie-aided atoms at the realization's true departure/arrival angles."""
        if side == "tx":
            cols = [array_response(geom, r.aod_azimuth, r.aod_elevation)
                    for r in clusters.rays]
        elif side == "rx":
            cols = [array_response(geom, r.aoa_azimuth, r.aoa_elevation)
                    for r in clusters.rays]
        else:
            raise ConfigError(f"side must be 'tx' or 'rx', got {side!r}")
        return cls(atoms=np.column_stack(cols))

    @classmethod
    def from_grid(cls, geom: ArrayGeometry, n_az: int = 64, n_el: int = 16) -> "PrecoderDictionary":
        """CSI-free oversampled angle grid: n_az x n_el atoms."""
        az = np.linspace(0.0, 2.0 * np.pi, n_az, endpoint=False)
        el = np.linspace(0.0, np.pi, n_el, endpoint=False)
        cols = [array_response(geom, a, e) for a in az for e in el]
        return cls(atoms=np.column_stack(cols))


def unit_modulus(a: np.ndarray) -> np.ndarray:
    """Project nonzero entries onto the unit circle; zero entries stay zero.

    Zeros only arise from structured inputs (identity atoms, sub-connected
    blocks); steering-vector atoms are dense so the result is fully
    unit-modulus there.
    """
    mag = np.abs(a)
    out = np.zeros_like(a)
    support = mag > _SUPPORT_TOL
    out[support] = a[support] / mag[support]
    return out


def enforce_power(p: HybridPrecoder, n_s: int) -> HybridPrecoder:
    """Rescale ``f_d`` so ``||f_a @ f_d||_F^2 == n_s``; ``f_a`` is untouched."""
    norm = np.linalg.norm(p.f_a @ p.f_d)
    if norm == 0.0:
        raise DegenerateError("precoder product is zero; cannot normalize power")
    return replace(p, f_d=p.f_d * (np.sqrt(n_s) / norm))


def optimal_precoder(ch: ChannelRealization, n_s: int) -> np.ndarray:
    """Unconstrained optimum: top-``n_s`` right singular vectors, ``||.||_F^2 = n_s``."""
    n_s = check_positive_int(n_s, "n_s")
    if n_s > min(ch.n_r, ch.n_t):
        raise DimensionError(f"n_s={n_s} exceeds min(n_r, n_t)={min(ch.n_r, ch.n_t)}")
    result = svd(ch.h)
    if result.sigma[n_s - 1] <= 1e-12 * result.sigma[0]:
        warnings.warn(f"channel rank below n_s={n_s}; returning top singular vectors anyway",
                      RuntimeWarning, stacklevel=2)
    f = result.v[:, :n_s]
    return f * (np.sqrt(n_s) / np.linalg.norm(f))


def optimal_combiner(ch: ChannelRealization, n_s: int) -> np.ndarray:
    """Unconstrained receive side: top-``n_s`` left singular vectors."""
    n_s = check_positive_int(n_s, "n_s")
    return svd(ch.h).u[:, :n_s]


def mmse_combiner(ch: ChannelRealization, precoder_matrix: np.ndarray,
                  snr: float) -> np.ndarray:
    """MMSE receive matrix for the effective channel ``h @ f`` at linear SNR.

    Singular receive covariance (noiseless, rank-deficient case) falls back
    to diagonal loading with ``1e-9 * trace / n_r``.
    """
    f = as_complex_matrix(precoder_matrix, "precoder_matrix")
    n_s = f.shape[1]
    hf = ch.h @ f
    cov = (snr / n_s) * (hf @ herm(hf)) + np.eye(ch.n_r)
    # snr is rho / sigma^2 with sigma^2 = 1; for the noiseless limit pass
    # snr -> inf via a pre-scaled matrix instead.
    try:
        return np.linalg.solve(cov, hf)
    except np.linalg.LinAlgError:
        eps = 1e-9 * np.trace(cov).real / ch.n_r
        return np.linalg.solve(cov + eps * np.eye(ch.n_r), hf)


def _omp_greedy(target: np.ndarray, dictionary: PrecoderDictionary, n_stages: int,
                counter: MultiplicationCounter | None = None):
    """Greedy atom selection against ``target``.

    Returns the per-entry unit-modulus analog matrix, the least-squares
    digital matrix, the per-iteration residual norms
    ``||target - analog @ digital||_F``, and the selected atom indices.
    Duplicate picks are skipped to the next-best atom; ties break toward
    the lowest atom index.  Selection stops early only when every atom has
    been used.
    """
    atoms = dictionary.atoms
    n_s = target.shape[1]
    residual = target
    selected: list[int] = []
    analog = None
    digital = None
    residual_norms: list[float] = []
    scratch = counter if counter is not None else None

    for _ in range(n_stages):
        if len(selected) == atoms.shape[1]:
            break
        if scratch is not None:
            corr = matmul_counted(herm(atoms), residual, scratch)
        else:
            corr = herm(atoms) @ residual
        energy = np.sum(np.abs(corr) ** 2, axis=1)
        energy[selected] = -np.inf
        pick = int(np.argmax(energy))
        selected.append(pick)

        analog = unit_modulus(atoms[:, selected])
        digital = least_squares(analog, target, counter=scratch).x
        if scratch is not None:
            approx = matmul_counted(analog, digital, scratch)
        else:
            approx = analog @ digital
        residual = target - approx
        residual_norms.append(float(np.linalg.norm(residual)))
        norm = residual_norms[-1]
        if norm > _SUPPORT_TOL:
            residual = residual / norm
            if scratch is not None:
                scratch.add(target.shape[0] * n_s)

    return analog, digital, residual_norms, selected


def omp_hybrid_precoder(f_opt: np.ndarray, dictionary: PrecoderDictionary, n_rf: int,
                        counter: MultiplicationCounter | None = None,
                        return_residuals: bool = False):
    """Orthogonal-matching-pursuit hybrid factorization of ``f_opt``.

    Runs ``n_rf`` greedy stages (fewer only if the dictionary is smaller),
    refits the digital stage by least squares after each pick, and finally
    rescales to the transmit power budget.
    """
    f_opt = as_complex_matrix(f_opt, "f_opt")
    n_rf = check_positive_int(n_rf, "n_rf")
    if n_rf < f_opt.shape[1]:
        raise DimensionError(f"n_rf={n_rf} must be >= n_s={f_opt.shape[1]}")
    analog, digital, residual_norms, _ = _omp_greedy(f_opt, dictionary, n_rf, counter)
    precoder = enforce_power(
        HybridPrecoder(f_a=analog, f_d=digital), f_opt.shape[1])
    if counter is not None:
        counter.add(analog.shape[0] * analog.shape[1] * digital.shape[1]
                    + digital.size)
    if return_residuals:
        return precoder, residual_norms
    return precoder


def omp_hybrid_combiner(ch: ChannelRealization, precoder: HybridPrecoder,
                        dict_rx: PrecoderDictionary, n_rf: int, snr: float) -> CombinerPair:
    """Hybrid combiner: OMP against the MMSE target for ``h @ f_a @ f_d``."""
    n_rf = check_positive_int(n_rf, "n_rf")
    target = mmse_combiner(ch, precoder.matrix, snr)
    analog, digital, _, _ = _omp_greedy(target, dict_rx, n_rf)
    return CombinerPair(w_a=analog, w_d=digital)


def zf_hybrid_precoder(ch: ChannelRealization, n_rf: int, n_s: int) -> HybridPrecoder:
    """Zero-forcing hybrid baseline.

    Analog stage: per-entry phase extraction from the top-``n_rf`` right
    singular vectors.  Digital stage: pseudo-inverse of the effective
    channel restricted to the first ``n_s`` receive antennas, then power
    normalization.
    """
    n_rf = check_positive_int(n_rf, "n_rf")
    n_s = check_positive_int(n_s, "n_s")
    if n_rf < n_s:
        raise DimensionError(f"n_rf={n_rf} must be >= n_s={n_s}")
    result = svd(ch.h)
    g = result.v[:, :n_rf].copy()
    # Fix the SVD phase ambiguity: rotate each pair so the left vector's
    # dominant entry is real positive.  Scalar case then yields a real
    # positive digital stage.
    for k in range(n_rf):
        anchor = result.u[np.argmax(np.abs(result.u[:, k])), k]
        g[:, k] *= np.conj(anchor) / abs(anchor)
    f_a = np.exp(1j * np.angle(g))
    h_eff = (ch.h @ f_a)[:n_s, :]
    if np.linalg.matrix_rank(h_eff) < n_s:
        raise RankDeficiencyError(
            f"effective channel rank below n_s={n_s}; cannot zero-force")
    f_d = np.linalg.pinv(h_eff)
    return enforce_power(HybridPrecoder(f_a=f_a, f_d=f_d), n_s)


def make_subconnected(phases, n_rf: int) -> np.ndarray:
    """Block-diagonal analog matrix from per-antenna phases.

    Block k holds antennas ``[k*m, (k+1)*m)`` with ``m = n_t / n_rf``;
    off-block entries are exactly zero.
    """
    phases = as_real_vector(phases, "phases")
    n_rf = check_positive_int(n_rf, "n_rf")
    n_t = phases.size
    if n_t % n_rf != 0:
        raise ConfigError(
            f"n_t={n_t} is not divisible by n_rf={n_rf}; sub-connected blocks must be equal")
    m = n_t // n_rf
    f_a = np.zeros((n_t, n_rf), dtype=np.complex128)
    for k in range(n_rf):
        f_a[k * m:(k + 1) * m, k] = np.exp(1j * phases[k * m:(k + 1) * m])
    return f_a


def subconnected_hybrid_precoder(ch: ChannelRealization, n_rf: int, n_s: int) -> HybridPrecoder:
    """Sub-connected baseline: per-block phase extraction plus least-squares digital.

    Block k takes its phases from right singular vector ``k mod n_s`` so
    every subarray points at one of the dominant channel directions.
    """
    n_rf = check_positive_int(n_rf, "n_rf")
    n_s = check_positive_int(n_s, "n_s")
    if ch.n_t % n_rf != 0:
        raise ConfigError(f"n_t={ch.n_t} is not divisible by n_rf={n_rf}")
    f_opt = optimal_precoder(ch, n_s)
    m = ch.n_t // n_rf
    phases = np.empty(ch.n_t)
    for k in range(n_rf):
        col = f_opt[k * m:(k + 1) * m, k % n_s]
        phases[k * m:(k + 1) * m] = np.angle(col)
    f_a = make_subconnected(phases, n_rf)
    f_d = least_squares(f_a, f_opt).x
    return enforce_power(
        HybridPrecoder(f_a=f_a, f_d=f_d, structure=AnalogStructure.SUB_CONNECTED), n_s)
