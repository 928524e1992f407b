"""Error norms, n-width decay bounds and the resonance scan."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .assemble import AssembledForms, assemble_forms
from .coeffs import ProblemSpec
from .grid import Grid


def energy_norm(v: np.ndarray, K, M, k: float) -> float:
    """``sqrt(v^H K v + k^2 v^H M v)``."""
    a = np.vdot(v, K @ v)
    b = np.vdot(v, M @ v)
    total = a + k**2 * b
    mag = abs(a) + k**2 * abs(b)
    if mag > 0 and abs(total.imag) > 1e-10 * mag:
        raise ArithmeticError(f"energy form is not Hermitian (imaginary part {total.imag:.3e})")
    if total.real < -1e-12 * max(mag, 1e-300):
        raise ArithmeticError(f"negative energy {total.real:.3e}")
    return math.sqrt(max(total.real, 0.0))


@dataclass
class ErrorReport:
    err_fine: float
    err_exact: Optional[float]
    norm_diff_fine: float
    norm_fine: float
    norm_diff_exact: Optional[float] = None
    norm_exact: Optional[float] = None


def relative_errors(u_G, u_fine, u_exact_nodal, K, M, k: float) -> ErrorReport:
    """Relative energy errors of ``u_G`` against the fine solution and, when
    given, a nodal exact solution."""
    if len(u_G) != len(u_fine):
        raise ValueError("length mismatch")
    nf = energy_norm(u_fine, K, M, k)
    if nf == 0:
        raise ZeroDivisionError("fine solution has zero energy")
    df = energy_norm(u_fine - u_G, K, M, k)
    rep = ErrorReport(df / nf, None, df, nf)
    if u_exact_nodal is not None:
        ne = energy_norm(u_exact_nodal, K, M, k)
        if ne == 0:
            raise ZeroDivisionError("exact solution has zero energy")
        de = energy_norm(u_exact_nodal - u_G, K, M, k)
        rep.err_exact, rep.norm_diff_exact, rep.norm_exact = de / ne, de, ne
    return rep


def exact_energy_error(u_h: np.ndarray, grid: Grid, a_values, v_values, k: float,
                       u_exact: Callable, grad_exact: Callable, order: int = 4):
    """``(||u - u_h||_{A,k}, ||u||_{A,k})`` for an analytic ``u`` by tensor Gauss
    quadrature of the given order on every cell."""
    pts, wts = np.polynomial.legendre.leggauss(order)
    pts = 0.5 * (pts + 1.0)
    wts = 0.5 * wts
    h = grid.h
    cn = grid.cell_nodes()
    uc = u_h[cn]  # (cells, 4) SW SE NE NW
    sw = grid.node_coords(cn[:, 0])
    a = np.asarray(a_values)
    v2 = np.asarray(v_values) ** 2
    err2 = 0.0
    ref2 = 0.0
    for s, ws in zip(pts, wts):
        for t, wt in zip(pts, wts):
            N = np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
            dNs = np.array([-(1 - t), 1 - t, t, -t]) / h
            dNt = np.array([-(1 - s), -s, s, 1 - s]) / h
            x, y = sw[:, 0] + s * h, sw[:, 1] + t * h
            ue = u_exact(x, y)
            gx, gy = grad_exact(x, y)
            e = ue - uc @ N
            ex, ey = gx - uc @ dNs, gy - uc @ dNt
            w = ws * wt * h * h
            err2 += w * np.sum(a * (abs(ex) ** 2 + abs(ey) ** 2) + k**2 * v2 * abs(e) ** 2)
            ref2 += w * np.sum(a * (abs(gx) ** 2 + abs(gy) ** 2) + k**2 * v2 * abs(ue) ** 2)
    return math.sqrt(err2), math.sqrt(ref2)


# -- decay bounds ------------------------------------------------------------------


def rho(s: float) -> float:
    """``1 + s log(s) / (1 - s)`` continued by its limits at 0 and 1."""
    if s <= 0.0:
        return 1.0
    if s >= 1.0:
        return 0.0
    return 1.0 + s * math.log(s) / (1.0 - s)


@dataclass(frozen=True)
class DecayBound:
    """Constants of the wavenumber-explicit n-width bound.

    ``C`` is the dimension-dependent constant inside ``Theta``; it has no
    computable value, so the bound is a reference curve only.
    """

    k: float
    delta_star: float
    H_star: float
    a_min: float = 1.0
    a_max: float = 1.0
    v_max: float = 1.0
    C: float = 1.0
    d: int = 2

    @property
    def sigma(self) -> float:
        return self.k * self.delta_star * self.v_max / (2.0 * math.sqrt(self.a_max))

    @property
    def theta(self) -> float:
        return self.C * math.sqrt(self.a_max / self.a_min) * self.H_star / self.delta_star

    @property
    def b(self) -> float:
        return (2 * math.e * self.theta + 0.5) ** (-self.d / (self.d + 1))

    @property
    def n0(self) -> float:
        return 2 * (4 * math.e * self.theta) ** self.d

    def prefactor(self, discrete: bool = False) -> float:
        """``e^sigma`` (continuous) or ``e^{sqrt(2) sigma}`` (discrete)."""
        return math.exp(math.sqrt(2) * self.sigma if discrete else self.sigma)


def theory_bound(db: DecayBound, n: float, H_over_Hstar: Optional[float] = None,
                 discrete: bool = False) -> float:
    """Upper bound on ``d_n``; ``inf`` for ``n <= n0`` where it does not apply."""
    if n <= db.n0:
        return math.inf
    decay = db.b * n ** (1.0 / (db.d + 1))
    extra = 0.0 if H_over_Hstar is None else rho(H_over_Hstar) * decay
    return db.prefactor(discrete) * math.exp(-decay - extra)


# -- resonance scan ----------------------------------------------------------------


@dataclass
class ScanRow:
    n_loc: int
    ell: int
    H_over_Hstar: float
    err_fine: float
    err_exact: Optional[float]
    flag: bool = False


def stagnation_flags(table: dict, ells, slow: float = 1.5, fast: float = 4.0) -> dict:
    """Flag ``n_loc`` values whose error stagnates over the last two ``ell``
    increments (each improving by less than ``slow``) while some larger
    ``n_loc`` improves by more than ``fast`` over the same increments.

    ``table[n_loc]`` holds errors ordered like ``ells``.
    """
    ells = list(ells)
    flags = {n: False for n in table}
    if len(ells) < 3:
        return flags
    for n, errs in table.items():
        e = np.asarray(errs, float)
        stalls = e[-3] / e[-2] < slow and e[-2] / e[-1] < slow
        others = [np.asarray(table[m], float) for m in table if m > n]
        if stalls and any(o[-3] / o[-1] > fast for o in others):
            flags[n] = True
    return flags


def resonance_scan(spec: ProblemSpec, n_loc_list, ell_list, m: int, overlap: int = 2,
                   tol: float = 1e-8, seed: int = 0, exact=None,
                   forms: Optional[AssembledForms] = None, u_fine=None) -> list:
    """Errors over the ``n_loc x ell`` grid with stagnation flags.

    Local bases are computed once per ``ell`` at the largest ``n_loc`` and
    truncated.  ``exact`` is an optional ``(u, grad)`` pair of callables.
    """
    from .gfem import compute_local_bases, msgfem_pipeline, solve_fine
    from .decomp import build_pou, decompose

    forms = forms or assemble_forms(spec)
    if u_fine is None:
        u_fine = solve_fine(forms).u
    n_loc_list = sorted(n_loc_list)
    ell_list = sorted(ell_list)
    errors = {n: [] for n in n_loc_list}
    rows = []
    for ell in ell_list:
        sset = decompose(spec.grid, m, m, overlap, ell)
        pou = build_pou(sset)
        bases = compute_local_bases(spec, sset, pou, max(n_loc_list), tol=tol, seed=seed)
        ratio = sset.interior_ratio()
        for n in n_loc_list:
            sol, _ = msgfem_pipeline(spec, m, m, overlap, ell, n, tol=tol, seed=seed,
                                     forms=forms, bases=bases)
            rep = relative_errors(sol.u, u_fine, None, forms.K, forms.M, spec.k)
            err_exact = None
            if exact is not None:
                num, den = exact_energy_error(sol.u, spec.grid, spec.a.values, spec.v.values,
                                              spec.k, *exact)
                err_exact = num / den
            errors[n].append(rep.err_fine)
            rows.append(ScanRow(n, ell, ratio if ratio is not None else float("nan"),
                                rep.err_fine, err_exact))
    flags = stagnation_flags(errors, ell_list)
    for r in rows:
        r.flag = flags[r.n_loc]
    return rows


def write_scan_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_loc", "ell", "H_over_Hstar", "err_fine", "err_exact", "flag"])
        for r in rows:
            w.writerow([r.n_loc, r.ell, repr(float(r.H_over_Hstar)), repr(float(r.err_fine)),
                        "" if r.err_exact is None else repr(float(r.err_exact)), int(r.flag)])


def write_bound_csv(path, bases, subdomains, spec: ProblemSpec, C: float = 1.0) -> None:
    """CSV ``subdomain,n,lambda,d_n,bound`` with the discrete-bound reference curve."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subdomain", "n", "lambda", "d_n", "bound"])
        for b in bases:
            sub = subdomains[b.subdomain]
            ds = sub.delta_star
            db = None
            if 0 < ds < math.inf:
                db = DecayBound(spec.k, ds, sub.H_star, spec.a.min, spec.a.max, spec.v.max, C)
            d = b.d_n
            for n, lam in enumerate(b.lambdas, start=1):
                dn = float(d[n]) if n < len(d) else float("nan")
                bound = theory_bound(db, n, sub.H / sub.H_star, discrete=True) if db else math.inf
                w.writerow([b.subdomain, n, repr(float(lam)), repr(dn), repr(bound)])
