"""Exact diagonalization of the spin-phonon chain with truncated phonons.

The Hamiltonian is written in the collective-mode basis,

    H = sum_n delta_n a_n^dag a_n + (Omega_x/2) sum_j sigma^x_j
        + g sum_j sigma^z_j sum_n (M_{j,n} e^{-i phi j} a_n + h.c.),

with ``phi = dk_d0``.  Basis states are spin-major: the flat index is
``spin * D_ph + phonon``, spin bit ``j`` set meaning ``sigma^z_j = -1``,
and the phonon index is row-major over modes.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.sparse.linalg import norm as sparse_norm
from scipy.stats import poisson

from .classical import exact_ground_state, oaf
from .errors import CapacityError, NumericalError
from .lattice import chain_modes

MAX_DIMENSION = 2_000_000
DENSE_LIMIT = 400


@dataclass(frozen=True)
class TruncatedHilbert:
    """Spin-1/2 sites times truncated phonon modes.

    ``n_max`` is a single cutoff for all modes or one cutoff per mode.
    """

    N: int
    n_max: object = 6
    max_dimension: int = MAX_DIMENSION

    def __post_init__(self):
        cut = np.broadcast_to(np.asarray(self.n_max, dtype=int), (self.N,)).copy()
        if self.N < 1:
            raise ValueError("need at least one site")
        if np.any(cut < 1):
            raise ValueError(f"n_max must be >= 1, got {self.n_max!r}")
        object.__setattr__(self, "n_max", tuple(int(c) for c in cut))
        if self.dimension > self.max_dimension:
            raise CapacityError(
                f"Hilbert space dimension {self.dimension} exceeds the limit {self.max_dimension}"
            )

    @property
    def mode_dims(self):
        return tuple(c + 1 for c in self.n_max)

    @property
    def phonon_dimension(self):
        return int(np.prod(self.mode_dims))

    @property
    def spin_dimension(self):
        return 1 << self.N

    @property
    def dimension(self):
        return self.spin_dimension * self.phonon_dimension

    def spins(self):
        """``(2^N, N)`` array of sigma^z values for every spin index."""
        idx = np.arange(self.spin_dimension)
        bits = (idx[:, None] >> np.arange(self.N)[None, :]) & 1
        return 1.0 - 2.0 * bits


def _lowering(d):
    return sp.diags(np.sqrt(np.arange(1, d)), 1, shape=(d, d), format="csr")


def _embed(op, k, dims):
    out = sp.identity(1, format="csr")
    for m, d in enumerate(dims):
        out = sp.kron(out, op if m == k else sp.identity(d, format="csr"), format="csr")
    return out


def _phonon_parts(hilbert, modes):
    dims = hilbert.mode_dims
    a = [_embed(_lowering(d), n, dims) for n, d in enumerate(dims)]
    number = [_embed(sp.diags(np.arange(d, dtype=float)), n, dims) for n, d in enumerate(dims)]
    H_ph = sum(w * n_op for w, n_op in zip(modes.frequencies, number))
    return a, number, H_ph


def _spin_flip(N, j):
    idx = np.arange(1 << N)
    return sp.csr_matrix((np.ones(1 << N), (idx ^ (1 << j), idx)), shape=(1 << N, 1 << N))


def hamiltonian_from_modes(modes, g, dk_d0, hilbert, omega_x):
    """Sparse Hamiltonian for explicit mode data (works for a single site)."""
    N = modes.N
    if hilbert.N != N:
        raise ValueError(f"Hilbert space has {hilbert.N} sites, modes have {N}")
    if np.any(modes.frequencies <= 0):
        raise NumericalError("all mode frequencies must be positive")
    a, _, H_ph = _phonon_parts(hilbert, modes)
    Ds, Dp = hilbert.spin_dimension, hilbert.phonon_dimension
    z = hilbert.spins()
    H = sp.kron(sp.identity(Ds), H_ph, format="csr").astype(complex)
    if omega_x:
        X = sum(_spin_flip(N, j) for j in range(N))
        H = H + 0.5 * omega_x * sp.kron(X, sp.identity(Dp), format="csr")
    phase = np.exp(-1j * dk_d0 * np.arange(N))
    M = modes.wavefunctions * phase[:, None]
    for j in range(N):
        B = sum(M[j, n] * a[n] for n in range(N))
        B = B + B.conj().T
        H = H + g * sp.kron(sp.diags(z[:, j]), B, format="csr")
    return H.tocsr()


def build_hamiltonian(cfg, hilbert, omega_x, modes=None):
    if modes is None:
        modes = chain_modes(cfg)
    return hamiltonian_from_modes(modes, cfg.g, cfg.dk_d0, hilbert, omega_x)


def parity_operator(hilbert):
    """Flip of every spin times ``(-1)^(total phonon number)``."""
    Ds = hilbert.spin_dimension
    idx = np.arange(Ds)
    flip = sp.csr_matrix((np.ones(Ds), (idx ^ (Ds - 1), idx)), shape=(Ds, Ds))
    return sp.kron(flip, sp.diags(_phonon_parity(hilbert)), format="csr")


def _phonon_parity(hilbert):
    total = np.zeros(1, dtype=int)
    for d in hilbert.mode_dims:
        total = (total[:, None] + np.arange(d)[None, :]).reshape(-1)
    return 1.0 - 2.0 * (total % 2)


def parity_isometry(hilbert, sign):
    """Columns spanning the ``P = sign`` sector."""
    Ds, Dp = hilbert.spin_dimension, hilbert.phonon_dimension
    par = _phonon_parity(hilbert)
    reps = np.arange(Ds // 2)  # spin indices with site N-1 up
    partners = reps ^ (Ds - 1)
    cols = np.arange(reps.size * Dp)
    rows_a = (reps[:, None] * Dp + np.arange(Dp)[None, :]).reshape(-1)
    rows_b = (partners[:, None] * Dp + np.arange(Dp)[None, :]).reshape(-1)
    vals_b = sign * np.tile(par, reps.size)
    r = np.sqrt(0.5)
    V = sp.csr_matrix(
        (np.concatenate([np.full(cols.size, r), r * vals_b]),
         (np.concatenate([rows_a, rows_b]), np.concatenate([cols, cols]))),
        shape=(Ds * Dp, cols.size),
    )
    return V


def _start_vector(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def ground_state(H, seed=0, tol=1e-12, maxiter=None):
    """Lowest eigenpair of a Hermitian matrix.

    Small matrices are diagonalised densely; larger ones with Lanczos from a
    seeded start vector.
    """
    n = H.shape[0]
    if n <= DENSE_LIMIT:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H)
        w, v = np.linalg.eigh(dense)
        E, psi = float(w[0]), v[:, 0]
    else:
        try:
            w, v = eigsh(H, k=1, which="SA", v0=_start_vector(n, seed), tol=tol, maxiter=maxiter)
        except ArpackNoConvergence as exc:
            raise NumericalError(f"eigensolver did not converge: {exc}") from exc
        E, psi = float(w[0]), v[:, 0]
    psi = psi / np.linalg.norm(psi)
    scale = sparse_norm(H, 1) if sp.issparse(H) else np.linalg.norm(H, 1)
    residual = np.linalg.norm(H @ psi - E * psi)
    if residual > 1e-9 * max(scale, 1.0):
        raise NumericalError(f"ground state residual {residual:.3e} too large")
    return E, psi


@dataclass(frozen=True)
class SectorGround:
    energy: float
    state: np.ndarray
    parity: int
    sector_energies: dict = field(default_factory=dict)


def parity_ground_state(H, hilbert, seed=0):
    """Ground state found separately in both parity sectors."""
    found = {}
    for sign in (1, -1):
        V = parity_isometry(hilbert, sign)
        E, phi = ground_state((V.conj().T @ H @ V).tocsr(), seed=seed)
        found[sign] = (E, V @ phi)
    sign = min(found, key=lambda s: found[s][0])
    E, psi = found[sign]
    return SectorGround(energy=E, state=psi, parity=sign,
                        sector_energies={s: found[s][0] for s in found})


@dataclass(frozen=True)
class QuantumObservables:
    energy: float
    oaf: float
    mean_phonons: float
    zz_correlations: np.ndarray
    xx_connected: np.ndarray
    parity_z: np.ndarray
    mode_displacements: np.ndarray

    def as_dict(self):
        return {
            "energy": self.energy,
            "oaf": self.oaf,
            "mean_phonons": self.mean_phonons,
            "zz_correlations": self.zz_correlations.tolist(),
            "xx_connected": self.xx_connected.tolist(),
            "sigma_z": self.parity_z.tolist(),
            "mode_displacements_re": self.mode_displacements.real.tolist(),
            "mode_displacements_im": self.mode_displacements.imag.tolist(),
        }


def observables(state, hilbert, H=None, energy=None):
    """Expectation values in a normalised state; ``energy`` is taken from
    ``H`` when given."""
    N = hilbert.N
    psi = np.asarray(state).reshape(hilbert.spin_dimension, hilbert.phonon_dimension)
    norm = np.vdot(psi, psi).real
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"state is not normalised (norm^2 = {norm:.12g})")
    z = hilbert.spins()
    prob = np.sum(np.abs(psi) ** 2, axis=1)
    sz = prob @ z
    zz = (z * prob[:, None]).T @ z
    idx = np.arange(hilbert.spin_dimension)
    sx = np.array([np.vdot(psi, psi[idx ^ (1 << j)]).real for j in range(N)])
    xx = np.ones((N, N))
    for j in range(N):
        for l in range(j + 1, N):
            xx[j, l] = xx[l, j] = np.vdot(psi, psi[idx ^ (1 << j) ^ (1 << l)]).real
    cxx = xx - np.outer(sx, sx)
    ph = psi.reshape((hilbert.spin_dimension,) + hilbert.mode_dims)
    nbar, disp = 0.0, np.zeros(N, dtype=complex)
    for n, d in enumerate(hilbert.mode_dims):
        amp = np.moveaxis(ph, n + 1, -1)
        nbar += float(np.sum(np.abs(amp) ** 2 * np.arange(d)))
        disp[n] = np.sum(amp[..., :-1].conj() * np.sqrt(np.arange(1, d)) * amp[..., 1:])
    if energy is None and H is not None:
        v = np.asarray(state)
        energy = float(np.vdot(v, H @ v).real)
    return QuantumObservables(energy=float("nan") if energy is None else float(energy),
                              oaf=oaf(zz) if N > 1 else float("nan"),
                              mean_phonons=nbar / N, zz_correlations=zz, xx_connected=cxx,
                              parity_z=sz, mode_displacements=disp)


def critical_field_estimate(nbar, cfg):
    """``(g^2/delta) exp(-2 nbar)``."""
    if nbar < 0:
        raise ValueError("mean phonon number must be >= 0")
    return cfg.g**2 / cfg.delta_target * np.exp(-2.0 * nbar)


def _displaced_mode_ground(delta, c, n_max):
    """Lowest level of ``delta a^dag a + c a + c* a^dag`` in ``n_max + 1`` levels."""
    d = n_max + 1
    off = abs(c) * np.sqrt(np.arange(1, d))
    # the phase of c is removed by a gauge change of the number states
    w, v = eigh_tridiagonal(delta * np.arange(d, dtype=float), off, select="i", select_range=(0, 0))
    vec = v[:, 0] * np.exp(-1j * np.angle(c) * np.arange(d)) if c != 0 else v[:, 0].astype(complex)
    return float(w[0]), vec


def zero_field_spectrum(modes, g, dk_d0, n_max):
    """Truncated ground energy of every spin block at ``Omega_x = 0``.

    Without a transverse field each ``sigma^z`` configuration is conserved
    and the phonon modes decouple, so the truncated Hamiltonian splits into
    one displaced oscillator per mode and block.  Returns spin configurations
    and block energies.
    """
    N = modes.N
    cut = np.broadcast_to(np.asarray(n_max, dtype=int), (N,))
    phase = np.exp(-1j * dk_d0 * np.arange(N))
    M = modes.wavefunctions * phase[:, None]
    spins = np.array(list(product((1.0, -1.0), repeat=N)))
    energies = np.empty(len(spins))
    for k, s in enumerate(spins):
        c = g * (s @ M)
        energies[k] = sum(_displaced_mode_ground(modes.frequencies[n], c[n], cut[n])[0] for n in range(N))
    return spins, energies


def zero_field_displacements(modes, g, dk_d0, n_max, s):
    """``<a_n>`` in the truncated ground state of spin block ``s``."""
    N = modes.N
    cut = np.broadcast_to(np.asarray(n_max, dtype=int), (N,))
    phase = np.exp(-1j * dk_d0 * np.arange(N))
    c = g * (np.asarray(s, dtype=float) @ (modes.wavefunctions * phase[:, None]))
    out = np.empty(N, dtype=complex)
    for n in range(N):
        _, v = _displaced_mode_ground(modes.frequencies[n], c[n], cut[n])
        out[n] = np.sum(v[:-1].conj() * np.sqrt(np.arange(1, v.size)) * v[1:])
    return out


def coherent_displacements(modes, g, dk_d0, s):
    """Displacements implied by the polaron shift for spin configuration ``s``."""
    phase = np.exp(1j * dk_d0 * np.arange(modes.N))
    s = np.asarray(s, dtype=float)
    return -(g / modes.frequencies) * ((modes.wavefunctions.conj() * phase[:, None]).T @ s)


def poisson_cutoffs(modes, g, dk_d0, tail=1e-4, floor=2):
    """Per-mode cutoffs from the largest polaron displacement over spin states.

    Mode ``n`` keeps levels up to the point where a coherent state with the
    worst-case ``|<a_n>|^2`` leaves less than ``tail`` of its weight above.
    """
    spins = np.array(list(product((1.0, -1.0), repeat=modes.N)))
    max_alpha2 = np.zeros(modes.N)
    for s in spins:
        max_alpha2 = np.maximum(max_alpha2, np.abs(coherent_displacements(modes, g, dk_d0, s)) ** 2)
    return tuple(max(floor, int(poisson.isf(tail, a))) for a in max_alpha2)


@dataclass(frozen=True)
class PolaronReport:
    n_max: int
    energy_exact: float
    energy_classical: float
    energy_error: float
    energy_history: list
    spins: np.ndarray
    displacements_exact: np.ndarray
    displacements_polaron: np.ndarray
    displacement_error: float
    converged: bool


def polaron_check(cfg, n_start=4, n_step=2, n_cap=80, tol=1e-8, modes=None):
    """Zero-field exact energy against the classical Ising minimum.

    ``n_max`` grows until successive truncated energies differ by less than
    ``tol / 10``.
    """
    from .couplings import exact_couplings

    if modes is None:
        modes = chain_modes(cfg)
    J = exact_couplings(modes, cfg).J
    rep = exact_ground_state(J, cfg.dk_d0)
    E_cl = rep.ground.energy + float(np.trace(J))
    history = []
    n_max = n_start
    converged = False
    while n_max <= n_cap:
        spins, blocks = zero_field_spectrum(modes, cfg.g, cfg.dk_d0, n_max)
        history.append((n_max, float(blocks.min())))
        if len(history) > 1 and abs(history[-1][1] - history[-2][1]) < tol / 10:
            converged = True
            break
        n_max += n_step
    if not converged:
        raise NumericalError(f"zero-field energy not converged up to n_max = {n_cap}")
    E_ex = history[-1][1]
    s = rep.ground.s
    d_ex = zero_field_displacements(modes, cfg.g, cfg.dk_d0, n_max, s)
    d_pol = coherent_displacements(modes, cfg.g, cfg.dk_d0, s)
    return PolaronReport(n_max=n_max, energy_exact=E_ex, energy_classical=E_cl,
                         energy_error=abs(E_ex - E_cl), energy_history=history, spins=s,
                         displacements_exact=d_ex, displacements_polaron=d_pol,
                         displacement_error=float(np.abs(d_ex - d_pol).max()), converged=converged)


def default_field_grid(cfg, points=41, low=1e-2, high=20.0):
    """Log-spaced ``Omega_x`` values in units of ``g^2/delta``."""
    return np.logspace(np.log10(low), np.log10(high), points) * cfg.g**2 / cfg.delta_target


@dataclass(frozen=True)
class FieldSweep:
    omega_x: np.ndarray
    energy: np.ndarray
    oaf: np.ndarray
    mean_phonons: np.ndarray
    max_abs_sigma_z: np.ndarray
    parity: np.ndarray
    crossover: float
    critical_estimate: float


def crossover_location(omega_x, oaf_values):
    """``Omega_x`` where ``|dOAF/dOmega_x|`` peaks on the grid."""
    omega_x = np.asarray(omega_x, dtype=float)
    if omega_x.size < 2:
        return float(omega_x[0]) if omega_x.size else float("nan")
    slope = np.abs(np.gradient(np.asarray(oaf_values), omega_x))
    return float(omega_x[int(np.argmax(slope))])


def omega_x_sweep(cfg, hilbert, omega_values=None, seed=0):
    if omega_values is None:
        omega_values = default_field_grid(cfg)
    modes = chain_modes(cfg)
    rows = []
    for ox in omega_values:
        H = build_hamiltonian(cfg, hilbert, float(ox), modes=modes)
        gs = parity_ground_state(H, hilbert, seed=seed)
        obs = observables(gs.state, hilbert, energy=gs.energy)
        rows.append((gs.energy, obs.oaf, obs.mean_phonons, np.abs(obs.parity_z).max(), gs.parity))
    E, O, nb, mz, par = (np.array(c) for c in zip(*rows))
    ox = np.asarray(omega_values, dtype=float)
    # nbar at the weakest field stands in for the ordered-phase phonon number
    return FieldSweep(omega_x=ox, energy=E, oaf=O, mean_phonons=nb, max_abs_sigma_z=mz, parity=par,
                      crossover=crossover_location(ox, O), critical_estimate=critical_field_estimate(nb[0], cfg))
