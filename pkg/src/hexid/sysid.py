"""Frequency response matrix estimation from periodic records and mass/damping extraction.

Inputs are the commanded datum accelerations, outputs the measured wrench
translated to the motion datum. With ``P`` periods in the steady segment the
full-record DFT carries the excitation on bins ``P k`` only; the other bins
hold noise and any transient leakage. At each excited bin a degree-``R``
polynomial is fitted through the ``2n`` nearest non-excited bins, its value at
the excited bin is removed as transient, and the residuals give the noise
covariance (robust local polynomial method for periodic excitation).

The FRM is estimated as force per acceleration, ``H = F / a``. The
acceleration-per-force matrix ``G_hat = H^{-1}`` is the form whose inverse
gives ``M' = Re(G_hat^{-1})`` and ``C = -w Im(G_hat^{-1})``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridMismatch, PhaseUnwrapAmbiguous, RankDeficientWindow, SingularFrm, TooFewPeriods
from .plant import translate_series

DEFAULT_DEGREE = 2


def default_half_window(degree=DEFAULT_DEGREE, min_dof=2):
    """Smallest ``n`` whose 2n-bin fit leaves ``min_dof`` residual degrees of freedom."""
    return max(1, math.ceil((degree + 1 + min_dof) / 2))


@dataclass
class DftLines:
    """Spectra of one record's steady segment (amplitude-scaled: a cosine of amplitude A gives |X| = A)."""

    freqs: np.ndarray  # excited frequencies, Hz
    harmonics: np.ndarray
    periods: int
    U: np.ndarray  # (n_u, F) acceleration lines of the excited DOFs
    Y: np.ndarray  # (n_y, F) output lines
    Y_full: np.ndarray  # (n_y, n_bins) full-record output spectrum
    U_period: np.ndarray  # (P, n_u, F)
    Y_period: np.ndarray  # (P, n_y, F)
    stripped: tuple  # samples removed before and after the steady segment


def _steady_bounds(record):
    idx = np.flatnonzero(record.segments == 1)
    if len(idx) == 0:
        raise TooFewPeriods("record has no steady segment")
    return int(idx[0]), int(idx[-1]) + 1


def output_wrench(record, motion_datum=None, rescale=None):
    """Measured wrench moved to the motion datum; ``rescale`` multiplies the raw Fx/Fy channels first."""
    w = np.array(record.wrench_meas, dtype=float)
    if rescale is not None and rescale != 1.0:
        w[:, :2] *= rescale
    cell = record.metadata.get("cell", {}).get("datum", [0.0, 0.0, 0.0])
    if motion_datum is None:
        motion_datum = record.metadata.get("motion_datum", [0.0, 0.0, 0.0])
    return translate_series(w, cell, motion_datum)


def periodize_and_dft(record, harmonics, dofs, T0=None, outputs=None, rescale=None, motion_datum=None,
                      measured_accel=None) -> DftLines:
    """Strip ramps and transform the steady segment of one record.

    Input lines are the commanded displacement lines times ``-w^2``; pass
    ``measured_accel`` (N x 6) to use measured accelerations instead.
    """
    fs = record.fs
    T0 = float(record.metadata["T0"]) if T0 is None else float(T0)
    n_per = int(round(fs * T0))
    a, b = _steady_bounds(record)
    N = b - a
    P = N // n_per
    if P < 2:
        raise TooFewPeriods(f"steady segment holds {N / n_per:.2f} periods; at least 2 are required")
    if N != P * n_per:
        raise TooFewPeriods("steady segment is not an integer number of periods")
    harmonics = np.asarray(harmonics, dtype=int)
    dofs = list(dofs)
    w = 2 * np.pi * harmonics / T0
    y = output_wrench(record, motion_datum, rescale)[a:b]
    if outputs is not None:
        y = y[:, list(outputs)]
    if measured_accel is None:
        x = record.disp_cmd[a:b][:, dofs]
        scale = -(w ** 2)
    else:
        x = np.asarray(measured_accel, dtype=float)[a:b][:, dofs]
        scale = np.ones_like(w)
    X = np.fft.rfft(x, axis=0).T * (2.0 / N)
    Yf = np.fft.rfft(y, axis=0).T * (2.0 / N)
    bins = P * harmonics
    Xp = np.fft.rfft(x.reshape(P, n_per, -1), axis=1)[:, harmonics, :].transpose(0, 2, 1) * (2.0 / n_per)
    Yp = np.fft.rfft(y.reshape(P, n_per, -1), axis=1)[:, harmonics, :].transpose(0, 2, 1) * (2.0 / n_per)
    return DftLines(harmonics / T0, harmonics, P, X[:, bins] * scale, Yf[:, bins], Yf, Xp * scale, Yp,
                    (a, len(record.t) - b))


@dataclass
class FrmEstimate:
    """FRM estimate on the excited lines.

    ``H`` is force per acceleration ``(F, n_y, n_u)`` with entry variances
    ``H_var``; ``G_hat`` is the square acceleration-per-force matrix
    ``(F, n_u, n_u)``; ``C_v`` the output noise covariance of one DFT line.
    """

    freqs: np.ndarray
    H: np.ndarray
    H_var: np.ndarray
    C_v: np.ndarray
    G_hat: np.ndarray
    dofs: tuple
    outputs: tuple
    realization_count: int = 1
    period_count: int = 0
    delay: float = 0.0
    residual_trend: float = 0.0
    trend_flag: bool = False
    valid: np.ndarray = None

    def __post_init__(self):
        if self.valid is None:
            self.valid = np.ones(len(self.freqs), dtype=bool)

    @property
    def omega(self):
        return 2 * np.pi * self.freqs

    @property
    def H_std(self):
        return np.sqrt(self.H_var)


def _square_block(H, dofs, outputs):
    rows = [outputs.index(d) for d in dofs]
    return H[:, rows, :]


def _invert_lines(A):
    out = np.full_like(A, np.nan)
    valid = np.ones(len(A), dtype=bool)
    for i, a in enumerate(A):
        if not np.all(np.isfinite(a)) or np.linalg.cond(a) > 1e12:
            valid[i] = False
            continue
        out[i] = np.linalg.inv(a)
    return out, valid


def _window_bins(K, excited, n_bins, n):
    """The 2n bins nearest to K that carry no excitation and are not DC."""
    cand = []
    r = 1
    while len(cand) < 2 * n and r < n_bins:
        for b in (K - r, K + r):
            if 0 < b < n_bins and b not in excited:
                cand.append(b)
        r += 1
    return np.array(cand[: 2 * n])


def _lpm_design(offsets, degree):
    A = np.vander(offsets.astype(float), degree + 1, increasing=True)
    if np.linalg.matrix_rank(A) < degree + 1 or len(offsets) <= degree + 1:
        raise RankDeficientWindow("too few non-excited bins for the transient polynomial")
    pinv = np.linalg.pinv(A)
    return A, pinv


def local_polynomial_frm(lines, n=None, degree=DEFAULT_DEGREE, dofs=None, outputs=None) -> FrmEstimate:
    """Joint FRM estimate from the ``n_u`` experiments of one realization.

    ``lines`` is a list of :class:`DftLines`, one per experiment, sharing the
    same harmonics and period count.
    """
    n = default_half_window(degree) if n is None else int(n)
    first = lines[0]
    n_u = first.U.shape[0]
    n_y = first.Y.shape[0]
    if len(lines) != n_u:
        raise RankDeficientWindow(f"{len(lines)} experiments for {n_u} inputs")
    P = first.periods
    bins = P * first.harmonics
    excited = set(bins.tolist())
    n_bins = first.Y_full.shape[1]
    F = len(bins)
    H = np.zeros((F, n_y, n_u), dtype=complex)
    H_var = np.zeros((F, n_y, n_u))
    C_v = np.zeros((F, n_y, n_y), dtype=complex)
    for i, K in enumerate(bins):
        nb = _window_bins(int(K), excited, n_bins, n)
        A, pinv = _lpm_design(nb - K, degree)
        dof = len(nb) - (degree + 1)
        h = pinv[0]  # transient value at the excited bin as a combination of window bins
        gain = 1.0 + float(np.sum(np.abs(h) ** 2))
        Yc = np.empty((n_y, n_u), dtype=complex)
        Ucol = np.empty((n_u, n_u), dtype=complex)
        Cv = np.zeros((n_y, n_y), dtype=complex)
        for e, ln in enumerate(lines):
            Ynb = ln.Y_full[:, nb]  # (n_y, 2n)
            coef = Ynb @ pinv.T
            res = Ynb - coef @ A.T
            Cv += res @ res.conj().T / dof
            Yc[:, e] = ln.Y[:, i] - coef[:, 0]
            Ucol[:, e] = ln.U[:, i]
        Cv /= n_u
        if np.linalg.cond(Ucol) > 1e12:
            raise RankDeficientWindow(f"input matrix singular at {first.freqs[i]:.4g} Hz")
        Uinv = np.linalg.inv(Ucol)
        H[i] = Yc @ Uinv
        H_var[i] = gain * np.real(np.diag(Cv))[:, None] * np.sum(np.abs(Uinv) ** 2, axis=0)[None, :]
        C_v[i] = Cv
    dofs = tuple(range(n_u)) if dofs is None else tuple(dofs)
    outputs = tuple(range(n_y)) if outputs is None else tuple(outputs)
    G_hat, valid = _invert_lines(_square_block(H, dofs, outputs))
    return FrmEstimate(first.freqs, H, H_var, C_v, G_hat, dofs, outputs, 1, P, valid=valid)


def average_frm(estimates) -> FrmEstimate:
    """Inverse-variance weighted mean over realizations (equal weights when noise-free)."""
    estimates = list(estimates)
    if len(estimates) == 1:
        warnings.warn("averaging a single realization; at least two are recommended", RuntimeWarning)
        return estimates[0]
    f0 = estimates[0].freqs
    for e in estimates[1:]:
        if e.freqs.shape != f0.shape or not np.allclose(e.freqs, f0, rtol=0, atol=1e-12) or e.H.shape != estimates[0].H.shape:
            raise GridMismatch("realizations do not share a frequency grid")
    H = np.stack([e.H for e in estimates])
    V = np.stack([e.H_var for e in estimates])
    M = len(estimates)
    if np.all(V > 0):
        wts = 1.0 / V
        Hm = np.sum(wts * H, axis=0) / np.sum(wts, axis=0)
        Vm = 1.0 / np.sum(wts, axis=0)
    else:
        Hm = H.mean(axis=0)
        Vm = V.mean(axis=0) / M
    Cm = np.mean([e.C_v for e in estimates], axis=0) / M
    base = estimates[0]
    G_hat, valid = _invert_lines(_square_block(Hm, base.dofs, base.outputs))
    return replace(base, H=Hm, H_var=Vm, C_v=Cm, G_hat=G_hat, valid=valid,
                   realization_count=sum(e.realization_count for e in estimates))


def _wls_line(x, y, w, groups):
    """Weighted fit of y = slope * x + intercept[group]; returns slope, intercepts, residuals."""
    ng = groups.max() + 1
    A = np.zeros((len(x), 1 + ng))
    A[:, 0] = x
    A[np.arange(len(x)), 1 + groups] = 1.0
    sw = np.sqrt(w)
    sol, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    return sol[0], sol[1:], y - A @ sol


def estimate_delay(frm: FrmEstimate, max_step=math.pi / 2, trend_sigma=5.0):
    """Common delay of the diagonal FRM entries from their phase slope.

    Force lagging acceleration by ``tau`` makes the force-per-acceleration
    phase fall as ``-w tau``; the fit allows a separate intercept per entry.
    Returns ``(tau, corrected)`` where ``corrected`` has ``H`` multiplied by
    ``exp(+i w tau)``. A significant quadratic trend in the fit residuals sets
    ``trend_flag``.
    """
    w = frm.omega
    if len(w) < 3:
        raise ValueError("at least three lines are needed")
    xs, ys, ws, gs = [], [], [], []
    for g, d in enumerate(frm.dofs):
        r = frm.outputs.index(d)
        h = frm.H[:, r, g]
        raw = np.angle(h)
        step = np.angle(np.exp(1j * np.diff(raw)))
        if np.any(np.abs(step) > max_step):
            raise PhaseUnwrapAmbiguous("phase changes by more than the unwrap tolerance between adjacent lines")
        ph = raw[0] + np.concatenate([[0.0], np.cumsum(step)])
        var = frm.H_var[:, r, g]
        mag2 = np.abs(h) ** 2
        if np.all(var > 0):
            wt = mag2 / var
        else:
            wt = mag2
        xs.append(w)
        ys.append(ph)
        ws.append(wt / np.max(wt))
        gs.append(np.full(len(w), g))
    x, y, wt, grp = (np.concatenate(v) for v in (xs, ys, ws, gs))
    slope, _, res = _wls_line(x, y, wt, grp)
    tau = -slope
    # quadratic trend test on the residual phase
    xc = x - np.average(x, weights=wt)
    A = np.column_stack([xc ** 2, xc, np.ones_like(x)])
    sw = np.sqrt(wt)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], res * sw, rcond=None)
    fit_res = res - A @ coef
    dof = max(len(x) - 3, 1)
    s2 = float(np.sum(wt * fit_res ** 2) / dof)
    cov = np.linalg.pinv((A * sw[:, None]).T @ (A * sw[:, None])) * s2
    se = math.sqrt(max(cov[0, 0], 0.0))
    trend = float(coef[0] * np.ptp(x) ** 2 / 4)
    flag = bool(abs(trend) > 1e-6 and (se == 0 or abs(coef[0]) > trend_sigma * se))
    corr = np.exp(1j * w * tau)
    H = frm.H * corr[:, None, None]
    G_hat, valid = _invert_lines(_square_block(H, frm.dofs, frm.outputs))
    return float(tau), replace(frm, H=H, G_hat=G_hat, valid=valid, delay=frm.delay + float(tau),
                               residual_trend=trend, trend_flag=flag)


@dataclass
class IdentifiedMatrices:
    freqs: np.ndarray
    M_total: np.ndarray  # (F, n, n)
    M_added: np.ndarray
    C_added: np.ndarray
    M_std: np.ndarray
    C_std: np.ndarray
    valid: np.ndarray
    dofs: tuple

    def to_dict(self):
        return dict(freqs=self.freqs.tolist(), dofs=list(self.dofs), valid=self.valid.tolist(),
                    M_total=np.nan_to_num(self.M_total).tolist(), M_added=np.nan_to_num(self.M_added).tolist(),
                    C_added=np.nan_to_num(self.C_added).tolist(), M_std=self.M_std.tolist(), C_std=self.C_std.tolist())


def extract_mass_damping(frm: FrmEstimate, M_s=None) -> IdentifiedMatrices:
    """Total mass ``Re(G_hat^-1)``, damping ``-w Im(G_hat^-1)`` and added mass per line.

    Lines where ``G_hat`` is singular are marked invalid (NaN) rather than raising.
    """
    n = len(frm.dofs)
    Minv = np.full((len(frm.freqs), n, n), np.nan + 0j)
    valid = frm.valid.copy()
    for i, G in enumerate(frm.G_hat):
        try:
            if not np.all(np.isfinite(G)) or np.linalg.cond(G) > 1e12:
                raise SingularFrm(f"FRM singular at {frm.freqs[i]:.4g} Hz")
            Minv[i] = np.linalg.inv(G)
        except SingularFrm:
            valid[i] = False
    w = frm.omega[:, None, None]
    M_total = Minv.real
    C = -w * Minv.imag
    if M_s is None:
        M_s = np.zeros((n, n))
    else:
        M_s = np.asarray(M_s, dtype=float)
        if M_s.shape == (6, 6) and n != 6:
            M_s = M_s[np.ix_(frm.dofs, frm.dofs)]
    var = _square_block(frm.H_var, frm.dofs, frm.outputs)
    M_std = np.sqrt(var / 2)
    C_std = w * M_std
    return IdentifiedMatrices(frm.freqs, M_total, M_total - M_s, C, M_std, C_std, valid, frm.dofs)


def group_records(records, n_u):
    """Records grouped by realization, each list ordered by experiment."""
    groups = {}
    for rec in records:
        r, m = divmod(int(rec.metadata["experiment"]), n_u)
        groups.setdefault(r, {})[m] = rec
    out = []
    for r in sorted(groups):
        g = groups[r]
        if sorted(g) != list(range(n_u)):
            raise ValueError(f"realization {r} is missing experiments")
        out.append([g[m] for m in range(n_u)])
    return out


def identify(records, design, M_s=None, rescale=None, n=None, degree=DEFAULT_DEGREE, remove_delay=False,
             motion_datum=None):
    """Full pipeline: per-realization LPM, averaging, optional delay removal, extraction.

    Returns ``(frm, matrices)``. Output channels are the wrench components
    matching the excited DOFs.
    """
    dofs = tuple(design.dofs)
    outputs = tuple(range(6))
    ests = []
    for group in group_records(records, design.n_u):
        lines = [periodize_and_dft(rec, design.harmonics, dofs, design.T0, outputs, rescale, motion_datum)
                 for rec in group]
        ests.append(local_polynomial_frm(lines, n, degree, dofs, outputs))
    frm = average_frm(ests) if len(ests) > 1 else ests[0]
    if remove_delay:
        _, frm = estimate_delay(frm)
    return frm, extract_mass_damping(frm, M_s)


def window_gain(n=None, degree=DEFAULT_DEGREE):
    """Noise variance inflation ``1 + |h|^2`` of transient removal for a symmetric window."""
    n = default_half_window(degree) if n is None else n
    offs = np.concatenate([-np.arange(n, 0, -1), np.arange(1, n + 1)])
    _, pinv = _lpm_design(offs, degree)
    return 1.0 + float(np.sum(pinv[0] ** 2))


def noise_for_mass_rmse(design, target_rmse, dof=0, n=None, degree=DEFAULT_DEGREE):
    """Per-sample force noise std giving an expected diagonal-mass RMSE of ``target_rmse`` (kg).

    For white noise of std ``s`` the amplitude-scaled full-record line has
    ``E|dY|^2 = 4 s^2 / N``; transient removal inflates it by the window gain,
    the real part carries half of it, and ``M`` realizations average it down.
    """
    N = design.periods * design.samples_per_period
    w = 2 * np.pi * design.frequencies
    A = design.amplitudes[dof]
    U2 = (w ** 2 * A) ** 2
    # orthogonal set: each DOF's column of U^-1 has squared norm 1 / (n_u A^2)
    per_unit = window_gain(n, degree) * (4.0 / N) / 2 / design.realizations / (design.n_u * U2)
    return float(target_rmse / math.sqrt(np.mean(per_unit)))


def report_dict(frm: FrmEstimate, mats: IdentifiedMatrices, settings=None):
    return dict(settings=settings or {}, delay=frm.delay, residual_trend=frm.residual_trend,
                trend_flag=frm.trend_flag, realizations=frm.realization_count, periods=frm.period_count,
                matrices=mats.to_dict())


def save_report(frm, mats, path, settings=None):
    with open(path, "w") as f:
        json.dump(report_dict(frm, mats, settings), f, indent=1)
