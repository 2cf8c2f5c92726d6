"""Batch front-end: ``hexid design | simulate | identify | report | clearance-table | handeye-demo``.

Exit codes: 0 ok, 1 report tolerance failure, 2 usage or design failure,
3 safety-check failure, 4 missing input/fixture, 5 identification error.
The default output directory is taken from ``HEXID_OUTPUT_DIR``.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import excitation, handeye, joints, kinematics, plant, sysid
from .dynamics import Payload, check_limits, cylinder_payload
from .errors import GridMismatch, HexidError, OptimizerStalled, WorkspaceViolation
from .kinematics import DOF_NAMES, AXIS_LABELS

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SAFETY, EXIT_MISSING, EXIT_SYSID = 0, 1, 2, 3, 4, 5
ENV_OUTPUT = "HEXID_OUTPUT_DIR"
FIXTURES = ("dry", "wet", "point")


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# -- configuration -----------------------------------------------------------

@dataclass
class SessionConfig:
    """Everything one batch session needs; JSON-loadable, CLI flags override."""

    geometry: str | None = None
    model: str = "dry"
    noise: float = 0.0
    noise_moment: float | None = None
    delay: float = 0.0
    fault: tuple = (1.0, 0.0)
    static_fz: float = 0.0
    cell_datum: tuple | None = None
    f_min: float = 0.4
    f_max: float = 2.35
    df: float = 0.05
    periods: int = 10
    realizations: int = 2
    dofs: tuple = (0,)
    amplitude: float = 0.01
    rotation_scale: float = 1.0
    fs: float = 200.0
    ramp: float = 1.0
    seed: int = 0
    output_dir: str | None = None

    def validate(self):
        if not self.df > 0:
            raise ValueError("resolution must be positive")
        if self.f_min < self.df - 1e-12:
            raise ValueError("band low edge must be at least the frequency resolution")
        if self.f_max < self.f_min:
            raise ValueError("band high edge below low edge")
        for f in (self.f_min, self.f_max):
            k = f / self.df
            if abs(k - round(k)) > 1e-6:
                raise ValueError(f"{f} Hz is not a multiple of the {self.df} Hz resolution")
        n = self.fs / self.df
        if abs(n - round(n)) > 1e-6:
            raise ValueError("fs / df must be an integer")
        if self.periods < 2:
            raise ValueError("at least two periods are needed")
        if self.realizations < 1:
            raise ValueError("at least one realization is needed")
        if len(set(self.dofs)) != len(self.dofs) or any(not 0 <= d < 6 for d in self.dofs):
            raise ValueError("DOFs must be distinct indices in 0..5")
        return self

    @classmethod
    def load(cls, path):
        with open(path) as f:
            d = json.load(f)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "dofs" in d:
            d["dofs"] = parse_dofs(d["dofs"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["dofs"] = list(self.dofs)
        d["fault"] = list(self.fault)
        return d


def parse_dofs(spec):
    """``"x,y,psi"``, ``"all"``, ``"X,Rz"`` or a list of ints -> tuple of indices."""
    if isinstance(spec, (list, tuple)):
        items = list(spec)
    elif spec == "all":
        return tuple(range(6))
    else:
        items = [s.strip() for s in str(spec).split(",") if s.strip()]
    out = []
    for s in items:
        if isinstance(s, int) or str(s).isdigit():
            out.append(int(s))
        elif s in DOF_NAMES:
            out.append(DOF_NAMES.index(s))
        elif s in AXIS_LABELS:
            out.append(AXIS_LABELS.index(s))
        else:
            raise ValueError(f"unknown DOF {s!r}")
    return tuple(out)


def _config_from_args(args):
    cfg = SessionConfig.load(args.config) if getattr(args, "config", None) else SessionConfig()
    over = dict(geometry=args.geometry, seed=args.seed)
    for name in ("model", "noise", "noise_moment", "delay", "static_fz", "df", "periods", "realizations",
                 "amplitude", "rotation_scale", "fs", "ramp"):
        if hasattr(args, name):
            over[name] = getattr(args, name)
    if getattr(args, "band", None):
        over["f_min"], over["f_max"] = args.band
    if getattr(args, "dofs", None):
        over["dofs"] = parse_dofs(args.dofs)
    if getattr(args, "fault", None):
        over["fault"] = tuple(args.fault) if len(args.fault) == 2 else (args.fault[0], 0.0)
    if getattr(args, "cell_datum", None):
        over["cell_datum"] = tuple(args.cell_datum)
    for k, v in over.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.output_dir = output_dir(args)
    return cfg


def output_dir(args):
    out = getattr(args, "out", None) or os.environ.get(ENV_OUTPUT) or "hexid-out"
    os.makedirs(out, exist_ok=True)
    return out


# -- file helpers -------------------------------------------------------------

def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _geometry(cfg):
    if cfg.geometry is None:
        return kinematics.default_geometry()
    if not os.path.exists(cfg.geometry):
        raise CliError(EXIT_MISSING, f"geometry file not found: {cfg.geometry}")
    return kinematics.HexapodGeometry.load(cfg.geometry)


def load_model(name) -> plant.HydroModel:
    """Fixture by name (``dry``, ``wet``, ``point``) or a model JSON path."""
    if name == "dry":
        return plant.dry_cylinder()
    if name == "wet":
        return plant.wet_cylinder()
    if name == "point":
        return plant.point_mass()
    if not os.path.exists(name):
        raise CliError(EXIT_MISSING, f"hydro-model fixture not found: {name}")
    return plant.HydroModel.load(name)


def _load_design(path):
    if not os.path.exists(path):
        raise CliError(EXIT_MISSING, f"design file not found: {path}")
    return excitation.MultisineDesign.load(path)


# -- design -------------------------------------------------------------------

def design_session(cfg: SessionConfig, optimize=True, maxiter=200, table=None, threshold=2.0,
                   payload: Payload | None = None):
    """Design, build and safety-check every trajectory. Nothing is written here.

    Returns ``(design, trajectories, safety_reports)``; raises CliError with
    the design or safety exit code.
    """
    try:
        cfg.validate()
        design = excitation.design_multisine(cfg.dofs, cfg.f_min, cfg.f_max, cfg.df, cfg.fs, cfg.amplitude,
                                             cfg.rotation_scale, cfg.periods, cfg.realizations, cfg.ramp,
                                             cfg.seed, optimize, maxiter)
    except (ValueError, OptimizerStalled) as e:
        raise CliError(EXIT_USAGE, f"design failed: {e}") from e
    geom = _geometry(cfg)
    table = joints.default_table(0.5) if table is None else table
    payload = cylinder_payload() if payload is None else payload
    trajs, reports = [], []
    for e in range(design.n_experiments):
        try:
            traj = excitation.build_trajectory(design, e, geom, table, threshold)
        except WorkspaceViolation as err:
            raise CliError(EXIT_SAFETY, f"experiment {e}: {err}") from err
        rep = check_limits(traj, payload, geom)
        if not rep["ok"]:
            v = rep["violations"][0]
            raise CliError(EXIT_SAFETY, f"experiment {e}: actuator {v['kind']} {v['value']:.4g} exceeds "
                                        f"{v['limit']:.4g} on leg {v['leg']}")
        trajs.append(traj)
        reports.append(rep)
    return design, trajs, reports


def cmd_design(args):
    cfg = _config_from_args(args)
    table = joints.load_or_build(args.table, step=0.5) if args.table else None
    payload = cylinder_payload(mass=args.payload_mass)
    design, trajs, reports = design_session(cfg, not args.no_optimize, args.maxiter, table, args.threshold, payload)
    out = cfg.output_dir
    # all checks passed: write
    _atomic_write(os.path.join(out, "design.json"), _dumps(design.to_dict()))
    for traj in trajs:
        path = os.path.join(out, f"traj_{traj.experiment:02d}.csv")
        traj.to_csv(path + ".tmp")
        os.replace(path + ".tmp", path)
    summary = dict(config=cfg.to_dict(), experiments=design.n_experiments,
                   experiment_duration=design.duration, session_duration=excitation.session_duration(design),
                   safety=reports)
    _atomic_write(os.path.join(out, "safety.json"), _dumps(summary))
    print(f"{design.n_experiments} trajectories of {design.duration:g} s "
          f"({excitation.session_duration(design):g} s total) -> {out}")
    return EXIT_OK


# -- simulate -----------------------------------------------------------------

def _cell(cfg, model):
    std = np.full(6, cfg.noise)
    if cfg.noise_moment is not None:
        std[3:] = cfg.noise_moment
    datum = model.datum if cfg.cell_datum is None else cfg.cell_datum
    return plant.LoadCellModel(std, cfg.delay, cfg.fault, datum, cfg.static_fz)


def experiment_seeds(seed, n):
    """Independent per-experiment integer seeds, fixed by the session seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _simulate_one(job):
    design_dict, model_dict, cell_dict, e, seed, path = job
    design = excitation.MultisineDesign.from_dict(design_dict)
    traj = excitation.build_trajectory(design, e)
    rec = plant.simulate_experiment(traj, plant.HydroModel.from_dict(model_dict),
                                    plant.LoadCellModel.from_dict(cell_dict), seed=seed)
    rec.save(path)
    return path


def simulate_session(design, model, cell, seed, out, jobs=1):
    seeds = experiment_seeds(seed, design.n_experiments)
    jobs_list = [(design.to_dict(), model.to_dict(), cell.to_dict(), e, seeds[e],
                  os.path.join(out, f"record_{e:02d}.csv")) for e in range(design.n_experiments)]
    if jobs > 1 and model.residual is None:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_simulate_one, jobs_list))
    if model.residual is not None:  # callables are not shipped to workers
        paths = []
        for d, _, c, e, s, p in jobs_list:
            traj = excitation.build_trajectory(design, e)
            plant.simulate_experiment(traj, model, cell, seed=s).save(p)
            paths.append(p)
        return paths
    return [_simulate_one(j) for j in jobs_list]


def cmd_simulate(args):
    cfg = _config_from_args(args)
    out = cfg.output_dir
    design = _load_design(args.design or os.path.join(out, "design.json"))
    model = load_model(cfg.model)
    cell = _cell(cfg, model)
    paths = simulate_session(design, model, cell, cfg.seed, out, args.jobs)
    total = design.n_experiments * design.duration
    print(f"{len(paths)} records, {total:g} s simulated -> {out}")
    return EXIT_OK


# -- identify -----------------------------------------------------------------

def _record_paths(items):
    paths = []
    for it in items:
        if os.path.isdir(it):
            paths += sorted(glob.glob(os.path.join(it, "record_*.csv")))
        else:
            paths.append(it)
    return paths


def summary_stats(values, truth=None):
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    v = v[ok]
    out = dict(mean=float(np.mean(v)), median=float(np.median(v)), std=float(np.std(v)))
    if truth is not None:
        t = np.broadcast_to(np.asarray(truth, dtype=float), ok.shape)[ok]
        out["rmse"] = float(np.sqrt(np.mean((v - t) ** 2)))
    else:
        out["rmse"] = float(np.sqrt(np.mean((v - out["mean"]) ** 2)))
    out["rmse_reference"] = "truth" if truth is not None else "mean"
    return out


def identify_records(records, names, design, M_s=None, rescale=None, remove_delay=False, n=None,
                     degree=sysid.DEFAULT_DEGREE):
    """Like :func:`sysid.identify`, but errors name the record file that caused them."""
    dofs = tuple(design.dofs)
    outputs = tuple(range(6))
    lookup = {id(r): nm for r, nm in zip(records, names)}
    ests = []
    try:
        groups = sysid.group_records(records, design.n_u)
    except ValueError as e:
        raise CliError(EXIT_SYSID, str(e)) from e
    for group in groups:
        lines = []
        for rec in group:
            try:
                lines.append(sysid.periodize_and_dft(rec, design.harmonics, dofs, design.T0, outputs, rescale))
            except (HexidError, ValueError) as e:
                raise CliError(EXIT_SYSID, f"{lookup[id(rec)]}: {type(e).__name__}: {e}") from e
        try:
            ests.append(sysid.local_polynomial_frm(lines, n, degree, dofs, outputs))
        except HexidError as e:
            raise CliError(EXIT_SYSID, f"{lookup[id(group[0])]}..: {type(e).__name__}: {e}") from e
    try:
        frm = sysid.average_frm(ests)
        if remove_delay:
            _, frm = sysid.estimate_delay(frm)
        mats = sysid.extract_mass_damping(frm, M_s)
    except HexidError as e:
        raise CliError(EXIT_SYSID, f"{type(e).__name__}: {e}") from e
    return frm, mats


def _truth_matrices(model, freqs, dofs):
    idx = np.ix_(dofs, dofs)
    M = np.array([model.total_mass(2 * np.pi * f)[idx] for f in freqs])
    C = np.array([model.fluid(2 * np.pi * f)[1][idx] for f in freqs])
    return M, C


def _matrix_csv(path, freqs, mats, std, dofs):
    names = [AXIS_LABELS[d] for d in dofs]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    cols = [f"{a}{b}" for a in names for b in names]
    wr.writerow(["freq_hz"] + cols + [c + "_std" for c in cols])
    for k, f in enumerate(freqs):
        wr.writerow([f"{f:.6g}"] + [f"{v:.10g}" for v in mats[k].ravel()] + [f"{v:.6g}" for v in std[k].ravel()])
    _atomic_write(path, buf.getvalue())


def cmd_identify(args):
    out = output_dir(args)
    paths = _record_paths(args.records)
    if not paths:
        raise CliError(EXIT_USAGE, "no measurement records given")
    for p in paths:
        if not os.path.exists(p) or not os.path.exists(p + ".json"):
            raise CliError(EXIT_MISSING, f"record or metadata missing: {p}")
    design_path = args.design or os.path.join(os.path.dirname(paths[0]), "design.json")
    design = _load_design(design_path)
    records = [plant.MeasurementRecord.load(p) for p in paths]
    model = load_model(args.model) if args.model else None
    M_s = model.M_s if model is not None else None
    if design.realizations < 2 or len(records) < 2 * design.n_u:
        print("warning: fewer than two realizations; noise covariance is extrapolated", file=sys.stderr)
    frm, mats = identify_records(records, [os.path.basename(p) for p in paths], design, M_s, args.rescale,
                                 args.remove_delay, args.half_window, args.degree)

    dofs = list(design.dofs)
    n = len(dofs)
    diag = {}
    truth_M = truth_C = None
    if model is not None:
        try:
            truth_M, truth_C = _truth_matrices(model, frm.freqs, dofs)
        except HexidError:
            truth_M = truth_C = None
    for j, d in enumerate(dofs):
        tm = truth_M[:, j, j] if truth_M is not None else None
        tc = truth_C[:, j, j] if truth_C is not None else None
        diag[AXIS_LABELS[d]] = dict(mass=summary_stats(mats.M_total[:, j, j], tm),
                                     added_mass=summary_stats(mats.M_added[:, j, j]),
                                     damping=summary_stats(mats.C_added[:, j, j], tc))
    settings = dict(design=os.path.basename(design_path), records=[os.path.basename(p) for p in paths],
                    rescale=args.rescale, remove_delay=args.remove_delay, model=args.model,
                    motion_datum=records[0].metadata.get("motion_datum"),
                    half_window=args.half_window or sysid.default_half_window(args.degree), degree=args.degree)
    report = sysid.report_dict(frm, mats, settings)
    report["summary"] = diag
    _atomic_write(os.path.join(out, "report.json"), _dumps(report))

    from . import plots
    files = dict(mass="mass", added_mass="added_mass", damping="damping")
    series = dict(mass=(mats.M_total, mats.M_std, truth_M), added_mass=(mats.M_added, mats.M_std, None),
                  damping=(mats.C_added, mats.C_std, truth_C))
    for key, stem in files.items():
        vals, std, truth = series[key]
        _matrix_csv(os.path.join(out, f"{stem}.csv"), frm.freqs, vals, std, dofs)
        label = "damping [N s/m]" if key == "damping" else "mass [kg]"
        if n == 1:
            plots.diagonal_plot(frm.freqs, vals[:, 0, 0], os.path.join(out, f"{stem}.svg"), label,
                                truth=None if truth is None else truth[:, 0, 0], std=std[:, 0, 0],
                                labels=[AXIS_LABELS[dofs[0]]])
        else:
            plots.matrix_grid_plot(frm.freqs, vals, os.path.join(out, f"{stem}_grid.svg"), label, truth,
                                   names=[AXIS_LABELS[d] for d in dofs])
    for name, s in diag.items():
        m = s["mass"]
        print(f"{name}: mass mean {m['mean']:.4f} median {m['median']:.4f} rmse {m['rmse']:.4f} "
              f"({m['rmse_reference']})")
    if args.remove_delay and frm.delay is not None:
        print(f"estimated delay {frm.delay * 1e3:.3f} ms")
    return EXIT_OK


# -- report -------------------------------------------------------------------

def compare_report(report, model, tol=0.02, interpolate=False):
    """Per-entry errors of an identified report against a fixture.

    Diagonal mass errors are relative; off-diagonal mass errors and all damping
    errors are normalized by ``sqrt(M_ii M_jj)`` (damping also by ``w``) so
    zero-valued truth entries stay well defined.
    """
    mats = report["matrices"]
    freqs = np.asarray(mats["freqs"], dtype=float)
    dofs = list(mats["dofs"])
    if model.omega is not None and not interpolate:
        nodes = model.omega / (2 * np.pi)
        off = [f for f in freqs if np.min(np.abs(nodes - f)) > 1e-9 * max(1.0, f)]
        if off:
            raise GridMismatch(f"{len(off)} identified frequencies are not fixture table nodes "
                               f"(first {off[0]:.6g} Hz); pass --interpolate")
    try:
        M_true, C_true = _truth_matrices(model, freqs, dofs)
    except HexidError as e:
        raise GridMismatch(str(e)) from e
    M = np.asarray(mats["M_total"], dtype=float)
    C = np.asarray(mats["C_added"], dtype=float)
    valid = np.asarray(mats["valid"], dtype=bool)
    d = np.sqrt(np.abs(np.einsum("fii->fi", M_true)))
    scale = d[:, :, None] * d[:, None, :]
    M_err = (M - M_true) / scale
    C_err = (C - C_true) / (scale * (2 * np.pi * freqs)[:, None, None])
    entries = []
    ok = True
    names = [AXIS_LABELS[x] for x in dofs]
    for i in range(len(dofs)):
        for j in range(len(dofs)):
            for kind, err in (("mass", M_err), ("damping", C_err)):
                e = err[valid, i, j]
                mean = float(np.mean(e))
                flagged = abs(mean) > tol
                ok &= not flagged
                entries.append(dict(entry=f"{names[i]}{names[j]}", kind=kind, mean_error=mean,
                                    median_error=float(np.median(e)), max_abs_error=float(np.max(np.abs(e))),
                                    flagged=bool(flagged)))
    return dict(model=model.name, tolerance=tol, interpolated=bool(interpolate), lines=int(valid.sum()),
                passed=bool(ok), entries=entries)


def cmd_report(args):
    out = output_dir(args)
    if not os.path.exists(args.report):
        raise CliError(EXIT_MISSING, f"report not found: {args.report}")
    with open(args.report) as f:
        report = json.load(f)
    model = load_model(args.model)
    try:
        cmp = compare_report(report, model, args.tol, args.interpolate)
    except GridMismatch as e:
        raise CliError(EXIT_USAGE, f"GridMismatch: {e}") from e
    _atomic_write(os.path.join(out, "comparison.json"), _dumps(cmp))
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["entry", "kind", "mean_error", "median_error", "max_abs_error", "flagged"])
    for e in cmp["entries"]:
        wr.writerow([e["entry"], e["kind"], f"{e['mean_error']:.6g}", f"{e['median_error']:.6g}",
                     f"{e['max_abs_error']:.6g}", int(e["flagged"])])
    _atomic_write(os.path.join(out, "comparison.csv"), buf.getvalue())
    for e in cmp["entries"]:
        if e["flagged"] or e["entry"][: len(e["entry"]) // 2] == e["entry"][len(e["entry"]) // 2:]:
            mark = "FLAG" if e["flagged"] else "ok"
            print(f"{e['entry']:>6} {e['kind']:<8} mean {100 * e['mean_error']:+8.3f} %  {mark}")
    print("PASS" if cmp["passed"] else "FAIL")
    return EXIT_OK if cmp["passed"] else EXIT_FAIL


# -- clearance table ----------------------------------------------------------

def cmd_clearance_table(args):
    out = output_dir(args)
    yoke = joints.YokeModel(*args.yoke) if args.yoke else joints.YokeModel()
    table = joints.build_clearance_table(yoke, args.step, args.max_angle)
    path = args.file or os.path.join(out, "clearance.hxct")
    table.save(path)
    if args.csv:
        joints.contour_csv(table, os.path.join(out, "clearance.csv"), stride=args.stride)
    if args.svg:
        from . import plots
        plots.contour_plot(table, os.path.join(out, "clearance.svg"))
    print(f"{len(table.angles)}^2 table, step {table.step:g} deg -> {path}")
    return EXIT_OK


# -- hand-eye demo ------------------------------------------------------------

def handeye_demo(seed=0, n_poses=20, rot_noise=0.0, trans_noise=0.0):
    """Synthetic calibration round: returns (truth, estimate, errors) as a dict."""
    rng = np.random.default_rng(seed)
    true_X = handeye.RigidTransform.from_pose([0.5, -0.2, 0.25, 0.0, 0.3, 2.8])  # camera in base
    true_Z = handeye.RigidTransform.from_pose([0.05, -0.03, 0.02, 0.1, -0.05, 0.4])  # board on platform
    span = np.array([0.1, 0.1, 0.08, 0.25, 0.25, 0.4])
    poses = rng.uniform(-1, 1, (n_poses, 6)) * span
    poses[:, 2] += kinematics.default_geometry().home_height
    ds = handeye.synthesize_tracking_data(true_X, true_Z, poses, rot_noise, trans_noise, rng)
    X, Z = handeye.calibrate(ds)
    recon = [handeye.platform_pose_from_camera(O, X, Z).as_array() for O in ds.board_poses]
    err = np.array([np.r_[r[:3] - p[:3], kinematics.wrap_angle(r[3:] - p[3:])] for r, p in zip(recon, poses)])
    return dict(
        seed=seed, poses=n_poses, rot_noise=rot_noise, trans_noise=trans_noise,
        X_true=true_X.matrix.tolist(), X_est=X.matrix.tolist(), Z_true=true_Z.matrix.tolist(), Z_est=Z.matrix.tolist(),
        X_rotation_error=handeye.rotation_error(true_X.rotation, X.rotation),
        X_translation_error=float(np.linalg.norm(true_X.translation - X.translation)),
        Z_rotation_error=handeye.rotation_error(true_Z.rotation, Z.rotation),
        Z_translation_error=float(np.linalg.norm(true_Z.translation - Z.translation)),
        pose_max_translation_error=float(np.max(np.abs(err[:, :3]))),
        pose_max_rotation_error=float(np.max(np.abs(err[:, 3:]))),
    )


def cmd_handeye_demo(args):
    out = output_dir(args)
    res = handeye_demo(args.seed or 0, args.poses, args.rot_noise, args.trans_noise)
    _atomic_write(os.path.join(out, "handeye.json"), _dumps(res))
    print(f"camera: {math.degrees(res['X_rotation_error']):.3g} deg, {1e3 * res['X_translation_error']:.3g} mm; "
          f"board: {math.degrees(res['Z_rotation_error']):.3g} deg, {1e3 * res['Z_translation_error']:.3g} mm")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="hexid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT} or ./hexid-out)")
        sp.add_argument("--seed", type=int)
        if config:
            sp.add_argument("--config", help="session config JSON")
            sp.add_argument("--geometry", help="geometry JSON (default: built-in desk model)")

    d = sub.add_parser("design", help="design excitations and safety-check trajectories")
    common(d)
    d.add_argument("--dofs", help="e.g. x | x,y,psi | all")
    d.add_argument("--band", nargs=2, type=float, metavar=("FMIN", "FMAX"))
    d.add_argument("--df", type=float, help="frequency resolution, Hz")
    d.add_argument("--periods", type=int)
    d.add_argument("--realizations", type=int)
    d.add_argument("--amplitude", type=float, help="per-harmonic amplitude, m (rad for rotations)")
    d.add_argument("--rotation-scale", type=float)
    d.add_argument("--fs", type=float)
    d.add_argument("--ramp", type=float)
    d.add_argument("--maxiter", type=int, default=200)
    d.add_argument("--no-optimize", action="store_true", help="random orthogonal phases only")
    d.add_argument("--threshold", type=float, default=joints.DEFAULT_THRESHOLD_MM, help="yoke clearance, mm")
    d.add_argument("--table", help="clearance table cache file")
    d.add_argument("--payload-mass", type=float, default=16.67)
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="run virtual experiments for a design")
    common(s)
    s.add_argument("--design", help="design JSON (default OUT/design.json)")
    s.add_argument("--model", help="dry | wet | point | model JSON path")
    s.add_argument("--noise", type=float, help="load-cell noise std (N, and N m unless --noise-moment)")
    s.add_argument("--noise-moment", type=float)
    s.add_argument("--delay", type=float, help="trigger delay, s")
    s.add_argument("--fault", nargs="+", type=float, metavar="G", help="x/y gain g0 [g1 per N of Fz]")
    s.add_argument("--static-fz", type=float)
    s.add_argument("--cell-datum", nargs=3, type=float)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("identify", help="estimate mass and damping from records")
    common(i, config=False)
    i.add_argument("records", nargs="*", help="record CSV files or directories")
    i.add_argument("--design")
    i.add_argument("--model", help="fixture used as truth (for M_s and RMSE)")
    i.add_argument("--rescale", type=float, help="x/y force rescale factor")
    i.add_argument("--remove-delay", action="store_true")
    i.add_argument("--half-window", type=int)
    i.add_argument("--degree", type=int, default=sysid.DEFAULT_DEGREE)
    i.set_defaults(func=cmd_identify)

    r = sub.add_parser("report", help="compare an identification report against a fixture")
    common(r, config=False)
    r.add_argument("report")
    r.add_argument("--model", required=True)
    r.add_argument("--tol", type=float, default=0.02)
    r.add_argument("--interpolate", action="store_true", help="allow off-node frequencies")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("clearance-table", help="build the yoke clearance lookup table")
    common(c, config=False)
    c.add_argument("--file")
    c.add_argument("--step", type=float, default=0.1)
    c.add_argument("--max-angle", type=float, default=90.0)
    c.add_argument("--yoke", nargs=3, type=float, metavar=("HALF_WIDTH", "DEPTH", "RADIUS"))
    c.add_argument("--csv", action="store_true")
    c.add_argument("--svg", action="store_true")
    c.add_argument("--stride", type=int, default=10)
    c.set_defaults(func=cmd_clearance_table)

    h = sub.add_parser("handeye-demo", help="synthetic hand-eye calibration round trip")
    common(h, config=False)
    h.add_argument("--poses", type=int, default=20)
    h.add_argument("--rot-noise", type=float, default=0.0)
    h.add_argument("--trans-noise", type=float, default=0.0)
    h.set_defaults(func=cmd_handeye_demo)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as e:
        print(f"hexid {args.command}: {e}", file=sys.stderr)
        return e.code
    except ValueError as e:
        print(f"hexid {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
