"""Command-line front end: ``hjvisc <subcommand> scenario.json [options]``.

Exit status: 0 on success, 2 when a certificate fails, 1 on any error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .errors import ConvergenceError, HJViscError
from .isaacs import check_isaacs, isaacs_gap
from .legendre import build_psi, legendre_rows
from .scenario import Scenario, SchemaError
from .testfunc import quadratic_bump
from .trajectories import (Curve, action_cost, containment_check, diff_inclusion_path,
                           j_lambda_payoff, w_lambda)
from .value import TimeValueField, ValueField, solve_evolutionary, solve_stationary
from .viscosity import certify_evolutionary, certify_stationary, default_radius

log = logging.getLogger("hjvisc")

EXIT_OK, EXIT_ERROR, EXIT_CERT_FAIL = 0, 1, 2


# output helpers ------------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def write_field_csv(path: Path, grid, values, times=None) -> None:
    cols = [f"x{a + 1}" for a in range(grid.dim)] + ["value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if times is None:
            w.writerow(cols)
            for x, v in zip(grid.points, values):
                w.writerow([_num(c) for c in x] + [_num(v)])
        else:
            w.writerow(cols + ["t"])
            for t, layer in zip(times, values):
                for x, v in zip(grid.points, layer):
                    w.writerow([_num(c) for c in x] + [_num(v), _num(t)])


def read_field_csv(path: Path, grid):
    """Node values (stationary) or (times, layers) when a ``t`` column is present."""
    with open(path) as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    d = grid.dim
    if "t" in header:
        times = np.unique(data[:, d + 1])
        layers = data[:, d].reshape(times.size, grid.size)
        pts = data[:grid.size, :d]
    else:
        times, layers, pts = None, data[:, d], data[:, :d]
    if pts.shape != grid.points.shape or np.max(np.abs(pts - grid.points)) > 1e-9:
        raise HJViscError(f"{path} does not hold values on the scenario grid")
    return times, layers


def _versions() -> dict:
    out = {"hjvisc": __version__, "python": platform.python_version(), "numpy": np.__version__}
    import scipy
    out["scipy"] = scipy.__version__
    if _kernels.NUMBA_AVAILABLE:
        import numba
        out["numba"] = numba.__version__
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_manifest(out: Path, command: str, scen: Scenario, scenario_path: Path,
                   results: dict, artifacts: list) -> None:
    raw = Path(scenario_path).read_bytes()
    write_json(out / f"manifest-{command}.json", {
        "command": command,
        "scenario": scen.config,
        "scenario_sha256": hashlib.sha256(raw).hexdigest(),
        "parameters": scen.parameters(),
        "backend": _kernels.backend(),
        "versions": _versions(),
        "results": results,
        "artifacts": artifacts,
    })


def _out_dir(args, scen: Scenario) -> Path:
    out = args.out or scen.config.get("output", {}).get("dir") or "."
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# subcommands -----------------------------------------------------------------------

def _solve(scen: Scenario):
    if scen.kind == "stationary":
        return solve_stationary(scen.hamiltonian, scen.grid, scen.lam, scen.data, scen.tau,
                                scen.velocities, scen.tol, scen.max_iters,
                                method=scen.conjugate_method)
    return solve_evolutionary(scen.hamiltonian, scen.grid, scen.lam, scen.data,
                              float(scen.problem["T"]), scen.tau, scen.velocities,
                              method=scen.conjugate_method)


def cmd_solve_stationary(args, scen: Scenario, out: Path) -> int:
    if scen.kind != "stationary":
        raise HJViscError("solve-stationary needs a stationary problem block")
    R = _solve(scen)
    path = out / "value.csv"
    write_field_csv(path, scen.grid, R.values)
    res = R.describe()
    res.update(sup_norm=R.sup_norm, h_sup_norm=float(np.max(np.abs(scen.data(scen.grid.points)))))
    write_manifest(out, "solve-stationary", scen, args.scenario, res, [path.name])
    return EXIT_OK


def cmd_solve_evolution(args, scen: Scenario, out: Path) -> int:
    if scen.kind != "evolutionary":
        raise HJViscError("solve-evolution needs an evolutionary problem block")
    F = _solve(scen)
    path = out / "values.csv"
    write_field_csv(path, scen.grid, F.values, F.times)
    write_manifest(out, "solve-evolution", scen, args.scenario, F.describe(), [path.name])
    return EXIT_OK


def _load_field(scen: Scenario, path: Path):
    times, values = read_field_csv(path, scen.grid)
    if scen.kind == "stationary":
        if times is not None:
            raise HJViscError("expected a stationary value field")
        return ValueField(scen.grid, values, scen.lam, tau=scen.tau,
                          velocities=scen.velocities)
    if times is None:
        raise HJViscError("expected a time-dependent value field")
    return TimeValueField(scen.grid, times, values, scen.lam, scen.velocities, scen.tau)


def _certify(scen: Scenario, fld):
    if scen.kind == "stationary":
        return certify_stationary(fld, scen.hamiltonian, scen.containment, scen.lam, scen.data,
                                  scen.family(), scen.cert_tol, scen.reg_radius)
    return certify_evolutionary(fld, scen.hamiltonian, scen.containment, scen.lam, scen.data,
                                scen.family(), scen.time_tests, scen.cert_tol, scen.reg_radius)


def cmd_certify(args, scen: Scenario, out: Path) -> int:
    fld = _load_field(scen, Path(args.field)) if args.field else _solve(scen)
    report = _certify(scen, fld)
    path = out / "report.json"
    write_json(path, report.to_dict())
    write_manifest(out, "certify", scen, args.scenario,
                   {"aggregate": report.to_dict()["aggregate"],
                    "failed": [r.index for r in report.results if not r.passed]}, [path.name])
    print(f"certificate: {'pass' if report.passed else 'fail'} "
          f"({sum(r.passed for r in report.results)}/{len(report.results)} pairs, "
          f"tol {report.tol:.3g})")
    return EXIT_OK if report.passed else EXIT_CERT_FAIL


def _parse_vec(text: str, dim: int) -> np.ndarray:
    vals = np.array([float(t) for t in text.split(",")])
    return np.broadcast_to(vals, (dim,)).copy()


def cmd_legendre_table(args, scen: Scenario, out: Path) -> int:
    H = scen.hamiltonian
    d = scen.grid.dim
    x = _parse_vec(args.x, d) if args.x else scen.grid.center
    speeds = np.linspace(-args.v_max, args.v_max, args.n)
    V = np.zeros((args.n, d))
    V[:, 0] = speeds
    rows = legendre_rows(H, x, V, method=scen.conjugate_method)
    path = out / "legendre.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        xs = ["x"] if d == 1 else [f"x{a + 1}" for a in range(d)]
        vs = ["v"] if d == 1 else [f"v{a + 1}" for a in range(d)]
        ps = ["argmax_p"] if d == 1 else [f"argmax_p{a + 1}" for a in range(d)]
        w.writerow(xs + vs + ["L"] + ps + ["saturated"])
        for xr, vr, L, p, sat in rows:
            w.writerow([_num(c) for c in xr] + [_num(c) for c in vr] + [_num(L)]
                       + [_num(c) for c in p] + [str(sat).lower()])
    write_manifest(out, "legendre-table", scen, args.scenario,
                   {"x": x.tolist(), "v_max": args.v_max, "n": args.n}, [path.name])
    return EXIT_OK


def cmd_psi_table(args, scen: Scenario, out: Path) -> int:
    grid = scen.grid
    centre = _parse_vec(args.center, grid.dim) if args.center else grid.center
    radius = args.radius or default_radius(grid)
    f = quadratic_bump(centre, args.curvature, radius, grid=grid)
    psi = build_psi(scen.hamiltonian, f, grid.points, v_max=args.v_max,
                    method=scen.conjugate_method)
    path = out / "psi.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "psi", "psi_over_r"])
        for r, p, q in psi.rows():
            w.writerow([_num(r), _num(p), _num(q)])
    write_manifest(out, "psi-table", scen, args.scenario,
                   {"C_fK": psi.c_fk, "v_max": psi.v_max, "center": centre.tolist(),
                    "curvature": args.curvature, "radius": radius}, [path.name])
    return EXIT_OK


def cmd_isaacs_check(args, scen: Scenario, out: Path) -> int:
    game = scen.game
    if game is None:
        raise HJViscError("isaacs-check needs a hamiltonian block with variant 'isaacs'")
    rng = np.random.default_rng(scen.seed)
    grid = scen.grid
    x = grid.points
    if x.shape[0] > args.points:
        x = x[rng.choice(x.shape[0], args.points, replace=False)]
    p = rng.uniform(-1, 1, size=(args.p_samples, grid.dim)) * game.p_max
    gap = isaacs_gap(game, x, p)
    validity = check_isaacs(game, grid, scen.containment)
    payload = {"gap": gap.to_dict(), "validity": validity.to_dict(),
               "n1": game.n1, "n2": game.n2, "separable": game.separable}
    path = out / "isaacs.json"
    write_json(path, payload)
    write_manifest(out, "isaacs-check", scen, args.scenario,
                   {"points": int(x.shape[0]), "p_samples": args.p_samples}, [path.name])
    print(json.dumps(_jsonable(gap.to_dict()), sort_keys=True))
    return EXIT_OK


def _payoffs(scen: Scenario, curve: Curve, horizon: float) -> dict:
    H = scen.hamiltonian
    out = {"action": action_cost(H, curve, horizon, scen.conjugate_method),
           "containment_residual": containment_check(H, scen.containment, curve, horizon,
                                                     scen.conjugate_method)}
    if scen.kind == "stationary":
        pay = j_lambda_payoff(H, curve, scen.lam, scen.data, horizon,
                              method=scen.conjugate_method)
        out.update(j_lambda=pay.value, j_lambda_approximate=pay.approximate)
    else:
        out["w_lambda"] = w_lambda(H, curve, horizon, scen.lam, scen.data,
                                   scen.conjugate_method)
    return out


def cmd_trace(args, scen: Scenario, out: Path) -> int:
    grid = scen.grid
    x0 = _parse_vec(args.x0, grid.dim) if args.x0 else grid.center
    curve = diff_inclusion_path(scen.hamiltonian, scen.data, x0, args.T, args.step, grid,
                                method=scen.conjugate_method)
    path = out / "curve.csv"
    curve.to_csv(path)
    res = {"x0": x0.tolist(), "T": args.T, "step": args.step,
           "young_residual": curve.meta["young_residual"],
           "threshold": curve.meta["threshold"]}
    res.update(_payoffs(scen, Curve.from_csv(path, grid), args.T))
    write_manifest(out, "trace", scen, args.scenario, res, [path.name])
    return EXIT_OK


def cmd_evaluate(args, scen: Scenario, out: Path) -> int:
    artifacts, res = [], {}
    if args.curve:
        curve = Curve.from_csv(args.curve, scen.grid)
        horizon = args.T if args.T is not None else curve.horizon
        res.update(_payoffs(scen, curve, horizon))
        path = out / "evaluation.json"
        write_json(path, res)
        artifacts.append(path.name)
    if args.field:
        fld = _load_field(scen, Path(args.field))
        if args.inject_spike is not None:
            report = _certify(scen, fld)
            kind = "dagger" if args.inject_spike >= 0 else "ddagger"
            node = args.node
            if node is None:
                node = next(r.node for r in report.results if r.kind == kind)
            values = np.array(fld.values, dtype=float)
            amount = args.inject_spike * report.tol
            if values.ndim == 2:
                values[:, node] += amount
            else:
                values[node] += amount
            path = out / ("tampered-" + Path(args.field).name)
            write_field_csv(path, scen.grid, values,
                            fld.times if isinstance(fld, TimeValueField) else None)
            artifacts.append(path.name)
            res.update(spike=amount, node=int(node))
    if not artifacts:
        raise HJViscError("evaluate needs --curve and/or --field")
    write_manifest(out, "evaluate", scen, args.scenario, res, artifacts)
    return EXIT_OK


COMMANDS = {
    "solve-stationary": cmd_solve_stationary,
    "solve-evolution": cmd_solve_evolution,
    "certify": cmd_certify,
    "legendre-table": cmd_legendre_table,
    "psi-table": cmd_psi_table,
    "isaacs-check": cmd_isaacs_check,
    "trace": cmd_trace,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjvisc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", type=Path)
        p.add_argument("--out", type=Path, help="output directory (default: scenario output.dir or .)")
        return p

    add("solve-stationary", "value iteration for the discounted problem")
    add("solve-evolution", "time stepping for the evolutionary problem")
    p = add("certify", "sub/supersolution certificates for a value field")
    p.add_argument("--field", type=Path, help="value CSV (solved on the fly if omitted)")
    p = add("legendre-table", "tabulate the conjugate along the first velocity axis")
    p.add_argument("--x", help="comma-separated point (default: grid centre)")
    p.add_argument("--v-max", type=float, default=2.0)
    p.add_argument("--n", type=int, default=41)
    p = add("psi-table", "tabulate the sublinear domination function")
    p.add_argument("--center")
    p.add_argument("--curvature", type=float, default=1.0)
    p.add_argument("--radius", type=float)
    p.add_argument("--v-max", type=float, default=10.0)
    p = add("isaacs-check", "Isaacs-condition gap and game validity")
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--p-samples", type=int, default=32)
    p = add("trace", "integrate the optimal-pairing path for the problem data")
    p.add_argument("--x0")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-3)
    p = add("evaluate", "payoffs of a curve CSV and/or tampering of a value field")
    p.add_argument("--curve", type=Path)
    p.add_argument("--T", type=float)
    p.add_argument("--field", type=Path)
    p.add_argument("--inject-spike", type=float, nargs="?", const=10.0, default=None,
                   metavar="FACTOR", help="add FACTOR * certificate tol at one node "
                   "(negative targets supersolution checks; default 10)")
    p.add_argument("--node", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scen = Scenario.load(args.scenario)
        out = _out_dir(args, scen)
        return COMMANDS[args.command](args, scen, out)
    except SchemaError as exc:
        print(f"error: schema violation at {exc}", file=sys.stderr)
    except ConvergenceError as exc:
        print(f"error: {exc} (last update norm {exc.last_update:.3e})", file=sys.stderr)
    except (HJViscError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
