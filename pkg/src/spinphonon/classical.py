"""Classical (zero transverse field) ground states of the effective Ising model.

Energies use the double sum ``E = sum_{j != l} J_{j,l} s_j s_l``; the
diagonal of ``J`` is a spin-independent constant and is ignored here.
"""

from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np

from ._validation import check_spins, check_square
from .couplings import couplings_for
from .errors import CapacityError

MAX_SITES = 24
CHECK_EVERY = 1 << 10
_CHUNK_BITS = 14
_MAX_TIES = 64


class Pattern(str, Enum):
    AF = "AF"
    F = "F"
    HOPF_C = "HOPF_C"
    HOPF_S = "HOPF_S"


class PhaseLabel(str, Enum):
    AF = "AF"
    F = "F"
    HOPFIELD = "HOPFIELD"
    FRUSTRATED = "FRUSTRATED"
    OTHER = "OTHER"


def ising_energy(s, J):
    s = np.asarray(s, dtype=float)
    J = check_square("J", J)
    if s.shape != (J.shape[0],):
        raise ValueError(f"spin vector length {s.size} does not match J of size {J.shape[0]}")
    return float(s @ J @ s - np.dot(np.diag(J), s * s))


def pattern_values(pattern, N, dk_d0=0.0):
    """Real-valued pattern ``p_j`` for ``j = 0 .. N-1`` before taking signs."""
    j = np.arange(N)
    stagger = (-1.0) ** j
    pattern = Pattern(pattern)
    if pattern is Pattern.AF:
        return stagger
    if pattern is Pattern.F:
        return np.ones(N)
    if pattern is Pattern.HOPF_C:
        return stagger * np.cos(dk_d0 * j)
    return stagger * np.sin(dk_d0 * j)


def pattern_signs(pattern, N, dk_d0=0.0, zero_tol=1e-12):
    """Sign sequence of a pattern; sites where it vanishes get 0."""
    p = pattern_values(pattern, N, dk_d0)
    return np.where(np.abs(p) < zero_tol, 0.0, np.sign(p))


def pattern_overlap(s, pattern, dk_d0=0.0, return_excluded=False):
    """``|sum_j p_j s_j| / N_eff`` over the sites where the pattern is nonzero.

    With ``return_excluded=True`` the excluded site indices are returned as
    a second value.
    """
    s = np.asarray(s, dtype=float)
    p = pattern_signs(pattern, s.size, dk_d0)
    excluded = np.flatnonzero(p == 0)
    n_eff = s.size - excluded.size
    ov = float(abs(np.dot(p, s)) / n_eff) if n_eff else 0.0
    return (ov, excluded) if return_excluded else ov


def all_overlaps(s, dk_d0=0.0):
    return {p.value: pattern_overlap(s, p, dk_d0) for p in Pattern}


@dataclass(frozen=True)
class SpinConfiguration:
    s: np.ndarray
    energy: float
    overlaps: dict = field(default_factory=dict)

    @classmethod
    def from_spins(cls, s, J, dk_d0=0.0):
        s = check_spins(s, np.shape(J)[0])
        return cls(s=s, energy=ising_energy(s, J), overlaps=all_overlaps(s, dk_d0))

    def label(self):
        return "".join("+" if x > 0 else "-" for x in self.s)


@dataclass(frozen=True)
class GroundStateReport:
    ground: SpinConfiguration
    degeneracy_count: int
    window: float
    phase_label: PhaseLabel


@numba.njit(cache=True)
def _trailing_zeros(i):
    b = 0
    while (i & 1) == 0:
        i >>= 1
        b += 1
    return b


@numba.njit(cache=True)
def _gray_spins(i, N):
    # Site 0 is pinned to +1; bit b of the Gray code flips site b + 1.
    g = i ^ (i >> 1)
    s = np.ones(N)
    for b in range(N - 1):
        if (g >> b) & 1:
            s[b + 1] = -1.0
    return s


@numba.njit(cache=True)
def _scratch_energy(s, J):
    N = s.size
    E = 0.0
    for j in range(N):
        for l in range(N):
            if j != l:
                E += J[j, l] * s[j] * s[l]
    return E


@numba.njit(cache=True)
def _scan_chunk(J, start, stop, E_cut, tie_cut, check_every, ties, ntie_cap):
    """Walk Gray-code indices ``start .. stop-1``.

    Returns (min energy, argmin, count with E <= E_cut, number of ties
    stored, max |incremental - scratch| at checkpoints).
    """
    N = J.shape[0]
    s = _gray_spins(start, N)
    h = np.zeros(N)
    for j in range(N):
        for l in range(N):
            if l != j:
                h[j] += J[j, l] * s[l]
    E = 0.0
    for j in range(N):
        E += s[j] * h[j]
    best = E
    best_i = start
    count = 0
    nties = 0
    drift = 0.0
    i = start
    while True:
        if E <= E_cut:
            count += 1
        if E <= tie_cut and nties < ntie_cap:
            ties[nties] = i
            nties += 1
        if E < best:
            best = E
            best_i = i
        if check_every > 0 and i % check_every == 0:
            d = abs(E - _scratch_energy(s, J))
            if d > drift:
                drift = d
        i += 1
        if i >= stop:
            break
        k = _trailing_zeros(i) + 1
        sk = s[k]
        E -= 4.0 * sk * h[k]
        s[k] = -sk
        for j in range(N):
            h[j] -= 2.0 * sk * J[j, k]
    return best, best_i, count, nties, drift


def _chunks(total):
    size = min(total, 1 << _CHUNK_BITS)
    return [(a, min(a + size, total)) for a in range(0, total, size)]


def _enumerate(J, E_cut, tie_cut, check_every=0):
    total = 1 << (J.shape[0] - 1)
    best, best_i, count, drift = np.inf, -1, 0, 0.0
    ties = []
    buf = np.zeros(_MAX_TIES, dtype=np.int64)
    for a, b in _chunks(total):
        e, i, c, nt, d = _scan_chunk(J, a, b, E_cut, tie_cut, check_every, buf, _MAX_TIES)
        if e < best:
            best, best_i = e, i
        count += c
        drift = max(drift, d)
        ties.extend(buf[:nt].tolist())
    return best, best_i, count, ties, drift


def gray_code_drift(J, check_every=CHECK_EVERY):
    """Largest gap between incremental and from-scratch energies at checkpoints."""
    J = np.array(check_square("J", J, symmetric=True), dtype=float)
    np.fill_diagonal(J, 0.0)
    return _enumerate(J, -np.inf, -np.inf, check_every)[4]


def classify(ground, degeneracy_count, N, threshold=None, min_overlap=0.9):
    if threshold is None:
        threshold = 2 * N
    ov = ground.overlaps
    hopf = max(ov[Pattern.HOPF_C.value], ov[Pattern.HOPF_S.value])
    best = max(ov[Pattern.AF.value], ov[Pattern.F.value], hopf)
    if degeneracy_count > threshold and best < min_overlap:
        return PhaseLabel.FRUSTRATED
    # AF and F take precedence where a Hopfield pattern coincides with them
    if ov[Pattern.AF.value] >= min_overlap and ov[Pattern.AF.value] >= hopf:
        return PhaseLabel.AF
    if ov[Pattern.F.value] >= min_overlap and ov[Pattern.F.value] >= hopf:
        return PhaseLabel.F
    if hopf >= min_overlap:
        return PhaseLabel.HOPFIELD
    return PhaseLabel.OTHER


def exact_ground_state(J, dk_d0=0.0, window=1e-3, max_sites=MAX_SITES, threshold=None):
    """Exhaustive minimum over the ``2^(N-1)`` states with ``s_0 = +1``.

    ``degeneracy_count`` counts states of the full space (both Z2 partners)
    within ``window * |E0|`` of the minimum.  Exact ties, up to rounding of
    the incremental updates, resolve to the lexicographically smallest spin
    vector.
    """
    J = np.array(check_square("J", J, symmetric=True), dtype=float)
    N = J.shape[0]
    if N > max_sites:
        raise CapacityError(f"exact enumeration supports N <= {max_sites}, got N = {N}")
    np.fill_diagonal(J, 0.0)
    E0 = _enumerate(J, -np.inf, -np.inf)[0]
    tol = 1e-9 * max(abs(E0), np.abs(J).sum())
    _, _, count, ties, _ = _enumerate(J, E0 + window * abs(E0) + tol, E0 + tol)
    candidates = [_gray_spins(i, N) for i in ties]
    s = min(candidates, key=tuple)
    ground = SpinConfiguration.from_spins(s, J, dk_d0)
    count = 2 * count
    return GroundStateReport(ground=ground, degeneracy_count=count, window=window,
                             phase_label=classify(ground, count, N, threshold))


@dataclass(frozen=True)
class ScanRow:
    t_C: float
    energy: float
    degeneracy_count: int
    phase_label: PhaseLabel
    configuration: str
    overlaps: dict


def frustration_scan(base_cfg, t_C_values, window=1e-3, threshold=None, provenance="EXACT_MODE_SUM"):
    rows = []
    for t_C in t_C_values:
        cfg = base_cfg.replace(t_C=float(t_C))
        J = couplings_for(cfg, provenance).J
        rep = exact_ground_state(J, cfg.dk_d0, window=window, threshold=threshold)
        rows.append(ScanRow(t_C=float(t_C), energy=rep.ground.energy,
                            degeneracy_count=rep.degeneracy_count, phase_label=rep.phase_label,
                            configuration=rep.ground.label(), overlaps=rep.ground.overlaps))
    return rows


def oaf(C):
    """Staggered two-point order parameter of a ``<s^z_j s^z_l>`` matrix."""
    C = check_square("correlation_matrix", C)
    N = C.shape[0]
    j = np.arange(N)
    sign = (-1.0) ** np.abs(j[:, None] - j[None, :])
    np.fill_diagonal(sign, 0.0)
    return float((sign * C).sum() / (N * (N - 1)))


def local_search(J, restarts=100, rng=None):
    """Best of random-restart single-flip descents (sanity oracle)."""
    J = np.array(check_square("J", J, symmetric=True), dtype=float)
    np.fill_diagonal(J, 0.0)
    rng = np.random.default_rng(rng)
    N = J.shape[0]
    best_s, best_E = None, np.inf
    for _ in range(restarts):
        s = rng.choice([-1.0, 1.0], size=N)
        h = J @ s
        while True:
            gain = -4.0 * s * h
            k = int(np.argmin(gain))
            if gain[k] >= -1e-14:
                break
            h -= 2.0 * s[k] * J[:, k]
            s[k] = -s[k]
        E = float(s @ J @ s)
        if E < best_E:
            best_s, best_E = s.copy(), E
    if best_s[0] < 0:
        best_s = -best_s
    return best_s, best_E
