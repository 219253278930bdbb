"""Static and slowly moving mirrors as quantum-Brownian-motion coefficient sets.

The field is expanded in the plane-wave modes of a periodic box
[-V/2, V/2): k_n = 2 pi n / V for n = 1..K, each with a cosine (sigma = 1)
and a sine (sigma = 2) member.  The coupling of mirosc a to mode (k, sigma)
is C = lam_a u_k^sigma(L_a); for a trapped mirror the first-order
displacement coupling is lam_a d/dx u_k^sigma(L_a).

Row order in every matrix: all sigma = 1 modes with k ascending, then all
sigma = 2 modes with k ascending.  Columns are mirrors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np

from mofsim.core import MiroscParams, MirrorConfig, ParameterError

FREQUENCY = "frequency"
CANONICAL = "canonical"
FORMAT_VERSION = 1


def _amplitude(V: float, k, normalization: str):
    if normalization == FREQUENCY:
        return (2.0 * V * np.asarray(k, dtype=float)) ** -0.5
    if normalization == CANONICAL:
        return math.sqrt(2.0 / V) * np.ones_like(np.asarray(k, dtype=float))
    raise ParameterError(f"unknown normalization {normalization!r}")


def mode_function(V: float, k, sigma: int, x, normalization: str = FREQUENCY):
    """u_k^sigma(x): (2 V w_k)^{-1/2} cos kx for sigma 1, sin kx for sigma 2 (w_k = k).

    ``normalization="canonical"`` uses sqrt(2/V) instead, which makes the
    mode amplitudes canonical coordinates of the field energy.
    """
    if not V > 0:
        raise ParameterError("box size V must be > 0")
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ParameterError("mode wavenumbers must be > 0")
    x = np.asarray(x, dtype=float)
    if sigma == 1:
        return _amplitude(V, k, normalization) * np.cos(k * x)
    if sigma == 2:
        return _amplitude(V, k, normalization) * np.sin(k * x)
    raise ParameterError("sigma must be 1 or 2")


def mode_derivative(V: float, k, sigma: int, x, normalization: str = FREQUENCY):
    k = np.asarray(k, dtype=float)
    x = np.asarray(x, dtype=float)
    if sigma == 1:
        return -k * _amplitude(V, k, normalization) * np.sin(k * x)
    if sigma == 2:
        return k * _amplitude(V, k, normalization) * np.cos(k * x)
    raise ParameterError("sigma must be 1 or 2")


def mode_ladder(V: float, cutoff: float, n_modes: int) -> np.ndarray:
    """First ``n_modes`` box wavenumbers 2 pi n / V; all must lie at or below the cutoff."""
    if not (V > 0 and math.isfinite(V)):
        raise ParameterError("box size V must be finite and > 0")
    if not (cutoff > 0 and math.isfinite(cutoff)):
        raise ParameterError("cutoff must be finite and > 0")
    if n_modes < 1:
        raise ParameterError("need at least one mode")
    k = 2.0 * math.pi * np.arange(1, n_modes + 1) / V
    if k[-1] > cutoff * (1 + 1e-12):
        allowed = int(math.floor(cutoff * V / (2 * math.pi) * (1 + 1e-12)))
        raise ParameterError(f"{n_modes} modes exceed the cutoff {cutoff}; at most {allowed} fit")
    return k


@dataclass(frozen=True)
class QbmExport:
    system: List[Tuple[float, float]]  # (m_a, Omega_a)
    lams: np.ndarray
    positions: np.ndarray
    k: np.ndarray  # K wavenumbers, ascending
    couplings: np.ndarray  # (2K, N)
    cutoff: float
    box: float
    normalization: str = FREQUENCY
    displacement_couplings: Optional[np.ndarray] = None  # (2K, N)
    traps: Optional[List[Tuple[float, float]]] = None  # (M_a, Omega0_a)
    notes: List[str] = field(default_factory=list)

    @property
    def n_mirrors(self) -> int:
        return len(self.system)

    @property
    def n_modes(self) -> int:
        return self.k.size

    @property
    def bath(self) -> List[Tuple[int, float, int]]:
        """(row, w_k, sigma) in row order."""
        rows = [(i, float(w), 1) for i, w in enumerate(self.k)]
        rows += [(self.n_modes + i, float(w), 2) for i, w in enumerate(self.k)]
        return rows

    @property
    def frequencies(self) -> np.ndarray:
        return np.concatenate([self.k, self.k])

    def hamiltonian(self, phi, pi, q, p, Z=None, P=None) -> float:
        """Mode-space Hamiltonian: bath + mirosc + bilinear coupling (+ displacement term and trap).

        ``phi`` and ``pi`` are length-2K vectors in row order; ``q`` and ``p``
        have one entry per mirror.  Z and P (displacements from L_a and their
        momenta) require a slow-motion export.
        """
        phi, pi = np.asarray(phi, float), np.asarray(pi, float)
        q, p = np.asarray(q, float), np.asarray(p, float)
        w = self.frequencies
        H = 0.5 * np.sum(pi**2 + w**2 * phi**2)
        m = np.array([s[0] for s in self.system])
        Om = np.array([s[1] for s in self.system])
        H += np.sum(p**2 / (2 * m) + 0.5 * m * Om**2 * q**2)
        H -= phi @ self.couplings @ q
        if Z is not None:
            if self.displacement_couplings is None or self.traps is None:
                raise ParameterError("displacement terms need a slow-motion export")
            Z = np.asarray(Z, float)
            P = np.zeros_like(Z) if P is None else np.asarray(P, float)
            M = np.array([t[0] for t in self.traps])
            W0 = np.array([t[1] for t in self.traps])
            H += np.sum(P**2 / (2 * M) + 0.5 * M * W0**2 * Z**2)
            H -= phi @ self.displacement_couplings @ (Z * q)
        return float(H)

    def extend(self, n_modes: int) -> "QbmExport":
        """Same export with a longer mode ladder; existing entries are unchanged."""
        mirrors = [MirrorConfig(MiroscParams(m, Om, lam), M=1.0 if self.traps is None else self.traps[a][0],
                                trap_omega0=None if self.traps is None else self.traps[a][1])
                   for a, ((m, Om), lam) in enumerate(zip(self.system, self.lams))]
        fn = export_static if self.displacement_couplings is None else export_slow_motion
        return fn(mirrors, self.positions, self.box, self.cutoff, n_modes, normalization=self.normalization)


def _coupling_matrix(fun, V, k, lams, positions, normalization):
    K, N = k.size, len(lams)
    C = np.empty((2 * K, N))
    for a in range(N):
        C[:K, a] = lams[a] * fun(V, k, 1, positions[a], normalization)
        C[K:, a] = lams[a] * fun(V, k, 2, positions[a], normalization)
    return C


def _validate(mirrors: Sequence[MirrorConfig], positions: Sequence[float], V: float):
    if len(mirrors) == 0:
        raise ParameterError("need at least one mirror")
    if len(positions) != len(mirrors):
        raise ParameterError("one position per mirror required")
    pos = np.asarray(positions, dtype=float)
    if not np.all(np.isfinite(pos)):
        raise ParameterError("mirror positions must be finite")
    for a, L in enumerate(pos):
        if not (-0.5 * V <= L < 0.5 * V):
            raise ParameterError(f"mirror {a} at L = {L} lies outside the box [-V/2, V/2)")
    return pos


def export_static(mirrors: Sequence[MirrorConfig], positions: Sequence[float], V: float, cutoff: float,
                  n_modes: int, normalization: str = FREQUENCY) -> QbmExport:
    """Bilinear mirosc-bath couplings for mirrors held at ``positions``."""
    pos = _validate(mirrors, positions, V)
    k = mode_ladder(V, cutoff, n_modes)
    lams = np.array([c.mirosc.lam for c in mirrors])
    C = _coupling_matrix(mode_function, V, k, lams, pos, normalization)
    return QbmExport([(c.mirosc.m, c.mirosc.omega) for c in mirrors], lams, pos, k, C, cutoff, V,
                     normalization)


def export_slow_motion(mirrors: Sequence[MirrorConfig], positions: Sequence[float], V: float, cutoff: float,
                       n_modes: int, normalization: str = FREQUENCY) -> QbmExport:
    """Static couplings plus the first-order displacement couplings lam d/dx u(L_a).

    The interaction is expanded to first order in the displacement Z_a;
    O(Z^2) terms are dropped and the export says so in ``notes``.
    """
    for a, c in enumerate(mirrors):
        if c.trap_omega0 is None:
            raise ParameterError(f"mirror {a} has no trap; slow-motion export needs a confining potential")
    base = export_static(mirrors, positions, V, cutoff, n_modes, normalization)
    D = _coupling_matrix(mode_derivative, V, base.k, base.lams, base.positions, normalization)
    traps = [(c.M, c.trap_omega0) for c in mirrors]
    return QbmExport(base.system, base.lams, base.positions, base.k, base.couplings, cutoff, V,
                     normalization, D, traps, ["interaction truncated at first order in Z; O(Z^2) dropped"])


# ---------------------------------------------------------------------------
# Text serialization
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_export(e: QbmExport, fh: TextIO) -> None:
    """Key-value header, then whitespace-separated numeric blocks.

    Blocks: [system] rows (m, Omega, lam, L[, M, Omega0]); [bath] rows
    (row, n, k, sigma); [couplings] 2K rows of N columns; optionally
    [displacement_couplings] in the same shape.
    """
    fh.write(f"# mofsim qbm export v{FORMAT_VERSION}\n")
    fh.write(f"V = {_fmt(e.box)}\n")
    fh.write(f"Lambda = {_fmt(e.cutoff)}\n")
    fh.write(f"N = {e.n_mirrors}\n")
    fh.write(f"K = {e.n_modes}\n")
    fh.write(f"normalization = {e.normalization}\n")
    fh.write("row_order = sigma1 k ascending, then sigma2 k ascending\n")
    for note in e.notes:
        fh.write(f"note = {note}\n")
    fh.write("[system]\n")
    for a, ((m, Om), lam, L) in enumerate(zip(e.system, e.lams, e.positions)):
        cols = [m, Om, lam, L]
        if e.traps is not None:
            cols += list(e.traps[a])
        fh.write(" ".join(_fmt(c) for c in cols) + "\n")
    fh.write("[bath]\n")
    for row, w, sigma in e.bath:
        n = row % e.n_modes + 1
        fh.write(f"{row} {n} {_fmt(w)} {sigma}\n")
    blocks = [("couplings", e.couplings)]
    if e.displacement_couplings is not None:
        blocks.append(("displacement_couplings", e.displacement_couplings))
    for name, mat in blocks:
        fh.write(f"[{name}]\n")
        for row in mat:
            fh.write(" ".join(_fmt(c) for c in row) + "\n")


def read_export(fh: TextIO) -> QbmExport:
    header = {}
    notes: List[str] = []
    sections = {}
    current = None
    for raw in fh:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "note":
                notes.append(val)
            else:
                header[key] = val
        else:
            sections[current].append([float(t) for t in line.split()])
    try:
        V, cutoff = float(header["V"]), float(header["Lambda"])
        N, K = int(header["N"]), int(header["K"])
        sys_rows = np.array(sections["system"])
        bath = np.array(sections["bath"])
        C = np.array(sections["couplings"])
    except KeyError as exc:
        raise ParameterError(f"export is missing {exc.args[0]!r}") from None
    if sys_rows.shape[0] != N or C.shape != (2 * K, N) or bath.shape[0] != 2 * K:
        raise ParameterError("export block shapes do not match the header")
    D = np.array(sections["displacement_couplings"]) if "displacement_couplings" in sections else None
    traps = [(r[4], r[5]) for r in sys_rows] if sys_rows.shape[1] >= 6 else None
    return QbmExport([(r[0], r[1]) for r in sys_rows], sys_rows[:, 2].copy(), sys_rows[:, 3].copy(),
                     bath[:K, 2].copy(), C, cutoff, V, header.get("normalization", FREQUENCY), D, traps, notes)
