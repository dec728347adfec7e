"""Spectrum sampling, integrated density of states, gaps and their labels,
Thouless formula and Hölder exponents."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import _kernels
from .arithmetic import Frequency, torus_distance
from .cocycles import rotation_number, schrodinger_cocycle, uh_test
from .errors import FlatWindow, Inconclusive, ValidationError
from .operators import Potential

CLOUD = "eigenvalue-cloud"
UH_SCAN = "uh-complement scan"
STURM = "sturm"

EDGE_LAYER = 0.1
EDGE_MASS = 0.5


def spectrum_bound(pot: Potential) -> float:
    """Radius of an interval containing the spectrum."""
    return 2.0 + abs(pot.coupling) * pot.sup_bound


def phase_grid(phases: int) -> np.ndarray:
    return (np.arange(phases) + 0.5) / phases


def direct_diagonals(pot: Potential, freq: Frequency, size: int, phases: int) -> np.ndarray:
    """λ v(θ_j + nα) for the phase grid, shape (phases, size)."""
    th = phase_grid(phases)
    n = np.arange(size)
    x = np.mod(th[:, None] + n[None, :] * freq.value, 1.0)
    return pot.coupling * pot(x)


@lru_cache(maxsize=16)
def _cloud(pot: Potential, freq: Frequency, size: int, phases: int, edge_filter: bool):
    diags = direct_diagonals(pot, freq, size, phases)
    off = np.ones(size - 1)
    layer = max(1, int(EDGE_LAYER * size))
    keep = []
    for d in diags:
        if edge_filter:
            w, v = eigh_tridiagonal(d, off, lapack_driver="stemr")
            mass = np.sum(v[:layer] ** 2, axis=0) + np.sum(v[-layer:] ** 2, axis=0)
            keep.append(w[mass <= EDGE_MASS])
        else:
            keep.append(eigh_tridiagonal(d, off, eigvals_only=True, lapack_driver="stemr"))
    ev = np.sort(np.concatenate(keep))
    ev.setflags(write=False)
    return ev


@dataclass(frozen=True, eq=False)
class IDSModel:
    """Counting function of a (filtered) eigenvalue cloud."""

    eigenvalues: np.ndarray
    size: int
    phases: int

    def __call__(self, E):
        out = np.searchsorted(self.eigenvalues, np.asarray(E, dtype=float), side="right") / len(self.eigenvalues)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def resolution(self) -> float:
        return 1.0 / len(self.eigenvalues)

    def gap_edges(self, E_left: float, E_right: float):
        """Nearest cloud points bracketing the gap (E_left, E_right)."""
        mid = 0.5 * (E_left + E_right)
        i = np.searchsorted(self.eigenvalues, mid)
        return float(self.eigenvalues[i - 1]), float(self.eigenvalues[i])


def ids_model(pot: Potential, freq: Frequency, size: int = 2000, phases: int = 32,
              edge_filter: bool = True) -> IDSModel:
    """Eigenvalue cloud of size×size Dirichlet restrictions of H over a phase grid.

    With ``edge_filter`` eigenvectors carrying more than half of their mass in
    the outer 10% of the box are dropped: these are boundary states living
    inside spectral gaps.
    """
    if size > 20000:
        raise ValidationError("size too large for the eigenvalue cloud")
    return IDSModel(_cloud(pot, freq, int(size), int(phases), bool(edge_filter)), int(size), int(phases))


# ---------------------------------------------------------------------------
# Spectrum


@dataclass(frozen=True, eq=False)
class SpectralSample:
    energies: np.ndarray
    method: str
    resolution: float


def spectrum_sample(pot: Potential, freq: Frequency, size: int = 500, phases: int = 32,
                    resolution: float = 1e-4, method: str = CLOUD, horizon: int = 1000) -> SpectralSample:
    """Approximate spectrum points, deduplicated to the resolution mesh."""
    if size > 5000:
        raise ValidationError("size must be <= 5000")
    if method == CLOUD:
        # boxes of two consecutive lengths interlace and halve the sampling gaps
        ev = np.concatenate([ids_model(pot, freq, size, phases).eigenvalues,
                             ids_model(pot, freq, size - 1, phases).eigenvalues])
    elif method == UH_SCAN:
        R = spectrum_bound(pot)
        grid = np.arange(-R, R + resolution, resolution)
        ev = []
        for E in grid:
            try:
                if not uh_test(schrodinger_cocycle(pot, E, freq), horizon).is_uh:
                    ev.append(E)
            except Inconclusive:
                ev.append(E)
        ev = np.array(ev)
    else:
        raise ValidationError(f"unknown method {method!r}")
    pts = np.unique(np.round(np.asarray(ev) / resolution)) * resolution
    return SpectralSample(pts, method, resolution)


def hausdorff_distance(a, b) -> float:
    """Hausdorff distance between two finite point sets on the line."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))

    def one_sided(p, q):
        i = np.clip(np.searchsorted(q, p), 1, len(q) - 1)
        return float(np.max(np.minimum(np.abs(p - q[i - 1]), np.abs(p - q[i]))))

    if len(a) == 1 or len(b) == 1:
        return float(max(np.max(np.min(np.abs(a[:, None] - b[None, :]), axis=1)),
                         np.max(np.min(np.abs(b[:, None] - a[None, :]), axis=1))))
    return max(one_sided(a, b), one_sided(b, a))


# ---------------------------------------------------------------------------
# IDS


@dataclass(frozen=True, eq=False)
class IDSTable:
    energies: np.ndarray
    values: np.ndarray
    method: str
    size: int
    phases: int
    method_gap: Optional[np.ndarray] = None

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.energies))) if len(self.energies) > 1 else 0.0

    def rows(self):
        gap = self.method_gap if self.method_gap is not None else np.full(len(self.energies), np.nan)
        return list(zip(self.energies.tolist(), self.values.tolist(), gap.tolist()))


def sturm_ids(pot: Potential, freq: Frequency, energies, size: int = 2000, phases: int = 32) -> np.ndarray:
    """Fraction of eigenvalues below E, averaged over phases (Sturm sequences)."""
    e = np.atleast_1d(np.asarray(energies, dtype=float))
    diags = direct_diagonals(pot, freq, size, phases)
    counts = _kernels.sturm_counts(np.ascontiguousarray(diags), np.ones(size - 1), e)
    return counts / (size * phases)


def ids_table(pot: Potential, freq: Frequency, emin: float, emax: float, cells: Optional[int] = None,
              mesh: Optional[float] = None, size: int = 2000, phases: int = 32,
              method: str = CLOUD) -> IDSTable:
    """N(E) on a uniform grid of [emin, emax] (``cells`` intervals or spacing ``mesh``)."""
    if emax <= emin:
        raise ValidationError("emax must exceed emin")
    if cells is None:
        if mesh is None:
            raise ValidationError("give cells or mesh")
        cells = int(np.ceil((emax - emin) / mesh - 1e-9))
    energies = np.linspace(emin, emax, int(cells) + 1)
    if method == CLOUD:
        vals = ids_model(pot, freq, size, phases)(energies)
    elif method == STURM:
        vals = sturm_ids(pot, freq, energies, size, phases)
    else:
        raise ValidationError(f"unknown IDS method {method!r}")
    return IDSTable(energies, np.asarray(vals, dtype=float), method, size, phases)


def with_method_gap(table: IDSTable, pot: Potential, freq: Frequency, stride: int = 1,
                    iterates: int = 2000, samples: int = 4, y_grid: int = 16) -> IDSTable:
    """Attach |N(E) − (1 − 2ρ(E))| at every ``stride``-th energy (NaN elsewhere)."""
    gap = np.full(len(table.energies), np.nan)
    for i in range(0, len(table.energies), max(1, stride)):
        E = table.energies[i]
        rho = rotation_number(schrodinger_cocycle(pot, E, freq), iterates, samples, y_grid,
                              check_degree=False).value
        gap[i] = abs(table.values[i] - (1 - 2 * _fold_half(rho)))
    return IDSTable(table.energies, table.values, table.method, table.size, table.phases, gap)


def _fold_half(rho: float) -> float:
    # Schrödinger cocycles have ρ ∈ [0, 1/2]; values just below 1 are round-off of 0
    return 0.0 if rho > 0.75 else rho


@dataclass(frozen=True)
class IDSValue:
    counting: float
    rotation: float
    mesh: float
    disagreement: bool

    @property
    def value(self) -> float:
        return self.counting


def ids_value(pot: Potential, freq: Frequency, E: float, size: int = 2000, phases: int = 32,
              rotation_iterates: int = 10_000) -> IDSValue:
    """N(E) by Sturm counting and by 1 − 2ρ; flags disagreement above 10·mesh."""
    n = float(sturm_ids(pot, freq, [E], size, phases)[0])
    rho = rotation_number(schrodinger_cocycle(pot, E, freq), rotation_iterates, check_degree=False).value
    r = 1 - 2 * _fold_half(rho)
    mesh = 1.0 / size
    return IDSValue(n, r, mesh, abs(n - r) > 10 * mesh)


# ---------------------------------------------------------------------------
# Gaps


@dataclass(frozen=True)
class GapRecord:
    E_left: float
    E_right: float
    N_gap: float
    k: Optional[int]
    width: float

    def row(self):
        return (self.E_left, self.E_right, self.N_gap, self.k, self.width)


def gap_label(N_gap: float, freq: Frequency, k_max: int = 50, label_tol: float = 1e-2):
    """argmin_{|k| ≤ k_max} ‖N − kα‖ if below ``label_tol`` (else None) and the distance."""
    ks = np.arange(-k_max, k_max + 1)
    d = torus_distance(N_gap - ks * freq.value)
    i = int(np.argmin(d))
    return (int(ks[i]) if d[i] < label_tol else None), float(d[i])


def bulk_states(pot: Potential, freq: Frequency, a: float, b: float, size: int, phases: int = 16,
                stop_at: Optional[int] = None) -> int:
    """Number of bulk (non-boundary) eigenvalues in (a, b) of boxes with lengths
    spread over [size, 1.5 size), one length per phase, summed over phases."""
    count = 0
    th = phase_grid(phases)
    for j in range(phases):
        n = size + j * (size // (2 * phases))
        x = np.mod(th[j] + np.arange(n) * freq.value, 1.0)
        d = pot.coupling * pot(x)
        w, v = eigh_tridiagonal(d, np.ones(n - 1), select="v", select_range=(a, b), lapack_driver="stebz")
        if len(w):
            layer = max(1, int(EDGE_LAYER * n))
            mass = np.sum(v[:layer] ** 2, axis=0) + np.sum(v[-layer:] ** 2, axis=0)
            count += int(np.count_nonzero(mass <= EDGE_MASS))
            if stop_at is not None and count >= stop_at:
                break
    return count


def find_gaps(table: IDSTable, freq: Frequency, min_width: float = 1e-3, k_max: int = 50,
              label_tol: float = 1e-2, flat_tol: Optional[float] = None,
              pot: Optional[Potential] = None, confirm_phases: int = 16) -> list:
    """Maximal plateaus of N inside (0, 1) of width ≥ ``min_width``, with labels.

    With ``pot`` each plateau is re-examined with longer boxes of varying
    length: a plateau whose middle half then contains bulk states is a
    finite-size artifact of the table and is dropped.
    """
    if flat_tol is None:
        flat_tol = 0.0 if table.method == CLOUD else 2.5 / table.size
    E, N = table.energies, table.values
    flat = np.diff(N) <= flat_tol
    out = []
    i = 0
    n = len(flat)
    while i < n:
        if not flat[i]:
            i += 1
            continue
        j = i
        while j < n and flat[j]:
            j += 1
        # cells i .. j-1 are flat: plateau spans E[i] .. E[j]
        lo, hi = E[i], E[j]
        val = float(np.mean(N[i:j + 1]))
        if hi - lo >= min_width and 0 < val < 1 and N[i] > 0 and N[j] < 1:
            q = 0.25 * (hi - lo)
            if pot is not None and bulk_states(pot, freq, lo + q, hi - q, 2 * table.size, confirm_phases, stop_at=1):
                i = j
                continue
            k, _ = gap_label(val, freq, k_max, label_tol)
            out.append(GapRecord(float(lo), float(hi), val, k, float(hi - lo)))
        i = j
    return out


# ---------------------------------------------------------------------------
# Thouless formula


def thouless_integral(table: IDSTable, E: float) -> float:
    """∫ ln|E' − E| dN(E') by Stieltjes sums over the table.

    The cell containing E is integrated exactly against a linear interpolant.
    """
    e, N = table.energies, table.values
    dN = np.diff(N)
    a, b = e[:-1], e[1:]
    mid = 0.5 * (a + b)
    with np.errstate(divide="ignore"):
        terms = np.log(np.abs(mid - E)) * dN
    inside = (a <= E) & (E <= b)

    def F(t):
        t = np.abs(t)
        return np.where(t > 0, t * np.log(np.where(t > 0, t, 1)) - t, 0.0)

    for i in np.nonzero(inside)[0]:
        # ∫_a^b ln|t − E| dt / (b − a)
        avg = (F(b[i] - E) + F(E - a[i])) / (b[i] - a[i])
        terms[i] = avg * dN[i]
    return float(np.sum(terms))


def thouless_residual(pot: Potential, freq: Frequency, E: float, table: IDSTable, lyap: float) -> float:
    if table.values[0] > 1e-12 or table.values[-1] < 1 - 1e-12:
        raise ValidationError("IDS table must cover the whole spectrum")
    return abs(thouless_integral(table, E) - lyap)


# ---------------------------------------------------------------------------
# Hölder exponent


@dataclass(frozen=True)
class HolderFit:
    exponent: float
    intercept: float
    scales: tuple
    increments: tuple
    used: int


def holder_exponent(pot: Potential, freq: Frequency, E0: float, scales, size: int = 2000,
                    phases: int = 32, model: Optional[IDSModel] = None) -> HolderFit:
    """Slope of log(N(E0+ε) − N(E0−ε)) against log ε."""
    scales = np.sort(np.asarray(scales, dtype=float))
    if len(scales) < 2 or scales[-1] / scales[0] < 100 * (1 - 1e-9):
        raise ValidationError("scales must span at least two decades")
    if model is None:
        model = ids_model(pot, freq, size, phases)
    inc = np.asarray(model(E0 + scales)) - np.asarray(model(E0 - scales))
    res = model.resolution
    ok = inc > 2 * res
    if ok.sum() < 2:
        raise FlatWindow(f"IDS increments at E0={E0} below counting resolution")
    slope, icpt = np.polyfit(np.log(scales[ok]), np.log(inc[ok]), 1)
    return HolderFit(float(slope), float(icpt), tuple(scales.tolist()), tuple(inc.tolist()), int(ok.sum()))
