"""Command line front end.

Three subcommands:

* ``eval``: evaluate Q, Wigner or the normalized f = 1 + W/<N> over a grid
  and write it to CSV or JSON.
* ``check``: run the self-consistency table for one state (normalization,
  Q positivity, the two Wigner routes against each other, closed forms
  where the family has one, optionally the kernel oracle) and exit 0 only
  if every row passes.
* ``figure``: evaluate one of the four preset states and write the field
  plus a small JSON sidecar with the headline numbers.

Exit codes: 0 success, 1 a check or oracle comparison failed, 2 bad input
or configuration, 3 truncation would exceed the hard cap, 4 file I/O.

``--state`` takes either a path or an inline JSON object; the object looks
like ``{"family": "CoherentPair", "params": {"r": 2.0, "phi_rel": 0.0},
"truncation": {"epsilon": 1e-10}}``.  Complex parameters are written as
``[re, im]`` pairs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .kernel import quasidist_via_kernel
from .quasidist import (
    EquatorGuardError,
    SphericalGrid,
    coherent_wigner_closed,
    evaluate_field,
    integrate,
    normalized_field,
    q_value,
    tmsv_wigner_closed,
    wigner_value,
)
from .states import (
    PolarizationState,
    StateSpec,
    TruncationCapError,
    build_state,
    mean_excitation,
)
from .su2 import resolve_oracle_cap

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_TRUNCATION_CAP = 3
EXIT_IO = 4

#: Seed for the random probe angles used by --oracle and check.
PROBE_SEED = 101
PROBE_COUNT = 20
ORACLE_TOL = 1e-10
NORM_TOL = 1e-6
ROUTE_TOL = 1e-9
CLOSED_TOL = 1e-8
Q_FLOOR = -1e-12

FIGURE_PRESETS = {
    "fig1": StateSpec(
        "CoherentPair", {"r": 5.0, "phi_rel": math.pi / 2}, epsilon=1e-10
    ),
    "fig2": StateSpec(
        "SqueezedPair",
        {"alpha_h": 5.0, "xi_h": 0.3, "alpha_v": 5.0, "xi_v": 0.3},
        epsilon=1e-10,
    ),
    "fig3": StateSpec("TwoModeSqueezedVacuum", {"xi": 0.9}, epsilon=1e-10),
    "fig4": StateSpec(
        "KerrEvolved",
        {
            "alpha_h": 5.0 / math.sqrt(2.0),
            "alpha_v": 5.0 / math.sqrt(2.0),
            "tau": math.pi / 2,
        },
        epsilon=1e-10,
    ),
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_spec(raw: str) -> StateSpec:
    text = raw
    if not raw.lstrip().startswith("{"):
        try:
            with open(raw, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read state file {raw!r}: {exc}") from exc
    try:
        return StateSpec.from_json(text)
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, f"bad state spec: {exc}") from exc


def _build(spec: StateSpec) -> PolarizationState:
    try:
        return build_state(spec)
    except TruncationCapError as exc:
        raise CliError(EXIT_TRUNCATION_CAP, str(exc)) from exc
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, f"bad state spec: {exc}") from exc


def _parse_grid(text: str) -> SphericalGrid:
    parts = text.split(",")
    try:
        if len(parts) != 2:
            raise ValueError
        n_polar, n_azimuthal = (int(p) for p in parts)
    except ValueError:
        raise CliError(
            EXIT_BAD_INPUT, f"--grid expects 'P,A' with two integers, got {text!r}"
        ) from None
    try:
        return SphericalGrid.gauss_legendre(n_polar, n_azimuthal)
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, str(exc)) from exc


def _format_g(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(path: str, field, f_values=None) -> None:
    grid = field.grid
    header = "theta,phi,value" + (",f" if f_values is not None else "")
    lines = [header]
    pos = 0
    for theta in grid.polar_thetas:
        for phi in grid.azimuthal_phis:
            row = f"{_format_g(theta)},{_format_g(phi)},{_format_g(field.values[pos])}"
            if f_values is not None:
                row += f",{_format_g(f_values[pos])}"
            lines.append(row)
            pos += 1
    _write_text(path, "\n".join(lines) + "\n")


def _write_json_field(path: str, field, f_values, integral: float) -> None:
    doc = {
        "kind": field.kind if f_values is None else "NormalizedF",
        "n_polar": field.grid.n_polar,
        "n_azimuthal": field.grid.n_azimuthal,
        "theta": [float(t) for t in field.grid.node_thetas],
        "phi": [float(p) for p in field.grid.node_phis],
        "value": [float(v) for v in field.values],
        "state_digest": field.state_digest,
        "integral": integral,
    }
    if f_values is not None:
        doc["f"] = [float(v) for v in f_values]
    _write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path!r}: {exc}") from exc


def _probe_angles():
    rng = np.random.default_rng(PROBE_SEED)
    thetas = rng.uniform(0.05, math.pi - 0.05, PROBE_COUNT)
    phis = rng.uniform(0.0, 2.0 * math.pi, PROBE_COUNT)
    return thetas, phis


def _oracle_deviation(state: PolarizationState) -> float:
    """Worst |fast - kernel| over the probe angles, both W and Q."""
    thetas, phis = _probe_angles()
    worst = 0.0
    for theta, phi in zip(thetas, phis):
        ref_w = quasidist_via_kernel(state, 0.0, theta, phi)
        ref_q = quasidist_via_kernel(state, -1.0, theta, phi)
        worst = max(worst, abs(wigner_value(state, theta, phi) - ref_w))
        worst = max(worst, abs(q_value(state, theta, phi) - ref_q))
    return worst


def run_eval(args) -> int:
    spec = _load_spec(args.state)
    state = _build(spec)
    grid = _parse_grid(args.grid)
    kind = args.kind
    f_values = None
    try:
        if kind == "q":
            field = evaluate_field(state, grid, "Q", workers=args.workers)
        else:
            field = evaluate_field(
                state, grid, "Wigner", method=args.method, workers=args.workers
            )
    except EquatorGuardError as exc:
        raise CliError(EXIT_BAD_INPUT, str(exc)) from exc
    if kind == "f":
        mean = mean_excitation(state)
        if mean <= 0.0:
            raise CliError(
                EXIT_BAD_INPUT, "f = 1 + W/<N> is undefined: state has <N> = 0"
            )
        f_values = normalized_field(field, mean).values
    integral = integrate(field)
    print(f"n_max {state.n_max}")
    print(f"integral {_format_g(integral)}")
    if f_values is not None:
        top = int(np.argmax(f_values))
        print(
            f"max f {_format_g(f_values[top])} at theta "
            f"{_format_g(grid.node_thetas[top])} phi {_format_g(grid.node_phis[top])}"
        )
    if args.out:
        if args.format == "csv":
            _write_rows(args.out, field, f_values)
        else:
            _write_json_field(args.out, field, f_values, integral)
        print(f"wrote {args.out}")
    if args.oracle:
        cap = resolve_oracle_cap()
        if state.n_max > cap:
            print(f"oracle skipped: n_max {state.n_max} exceeds cap {cap}")
        else:
            dev = _oracle_deviation(state)
            print(f"oracle deviation {dev:.3e}")
            if dev > ORACLE_TOL:
                print("oracle FAIL", file=sys.stderr)
                return EXIT_CHECK_FAILED
    return EXIT_OK


def _closed_form_row(spec: StateSpec, state, w_field):
    grid = w_field.grid
    if spec.family == "CoherentPair":
        ref = coherent_wigner_closed(
            float(spec.params["r"]),
            float(spec.params["phi_rel"]),
            grid.node_thetas,
            grid.node_phis,
        )
    elif spec.family == "TwoModeSqueezedVacuum":
        xi = spec.params["xi"]
        if isinstance(xi, list):
            xi = complex(xi[0], xi[1])
        ref = tmsv_wigner_closed(xi, grid.node_thetas)
    else:
        return ("SKIP", f"no closed form for {spec.family}")
    dev = float(np.max(np.abs(w_field.values - ref)))
    return ("PASS" if dev <= CLOSED_TOL else "FAIL", f"{dev:.3e}")


def run_check(args) -> int:
    spec = _load_spec(args.state)
    state = _build(spec)
    grid = _parse_grid(args.grid)
    rows = []

    w_field = evaluate_field(state, grid, "Wigner", workers=args.workers)
    q_field = evaluate_field(state, grid, "Q", workers=args.workers)

    dev = abs(integrate(w_field) - 1.0)
    rows.append(("norm(W)", "PASS" if dev <= NORM_TOL else "FAIL", f"{dev:.3e}"))
    dev = abs(integrate(q_field) - 1.0)
    rows.append(("norm(Q)", "PASS" if dev <= NORM_TOL else "FAIL", f"{dev:.3e}"))

    qmin = float(np.min(q_field.values))
    rows.append(
        ("Q nonnegative", "PASS" if qmin >= Q_FLOOR else "FAIL", f"min {qmin:.3e}")
    )

    try:
        d_field = evaluate_field(
            state, grid, "Wigner", method="double", workers=args.workers
        )
        dev = float(np.max(np.abs(d_field.values - w_field.values)))
        rows.append(
            ("triple vs double", "PASS" if dev <= ROUTE_TOL else "FAIL", f"{dev:.3e}")
        )
    except EquatorGuardError:
        rows.append(("triple vs double", "SKIP", "grid touches the equator band"))

    rows.append(("closed form",) + _closed_form_row(spec, state, w_field))

    if args.oracle:
        cap = resolve_oracle_cap()
        if state.n_max > cap:
            rows.append(
                ("kernel oracle", "SKIP", f"n_max {state.n_max} exceeds cap {cap}")
            )
        else:
            dev = _oracle_deviation(state)
            rows.append(
                ("kernel oracle", "PASS" if dev <= ORACLE_TOL else "FAIL", f"{dev:.3e}")
            )

    failed = any(status == "FAIL" for _, status, _ in rows)
    width = max(len(name) for name, _, _ in rows)
    for name, status, note in rows:
        print(f"{name:<{width}}  {status:<4}  {note}")
    print(f"{'overall':<{width}}  {'FAIL' if failed else 'PASS'}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def run_figure(args) -> int:
    spec = FIGURE_PRESETS[args.preset]
    state = _build(spec)
    grid = _parse_grid(args.grid)
    w_field = evaluate_field(state, grid, "Wigner", workers=args.workers)
    mean = mean_excitation(state)
    f_values = normalized_field(w_field, mean).values
    integral = integrate(w_field)
    top = int(np.argmax(f_values))
    meta = {
        "preset": args.preset,
        "family": spec.family,
        "params": spec.params,
        "n_max": state.n_max,
        "mean_excitation": mean,
        "integral": integral,
        "max_f": {
            "theta": float(grid.node_thetas[top]),
            "phi": float(grid.node_phis[top]),
            "value": float(f_values[top]),
        },
    }
    if args.format == "csv":
        _write_rows(args.out, w_field, f_values)
    else:
        _write_json_field(args.out, w_field, f_values, integral)
    _write_text(args.out + ".meta.json", json.dumps(meta, sort_keys=True) + "\n")
    print(f"preset {args.preset} n_max {state.n_max} integral {_format_g(integral)}")
    print(f"wrote {args.out} and {args.out}.meta.json")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polqdist",
        description="Polarization quasidistributions on the Poincare sphere.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_state=True):
        if with_state:
            p.add_argument(
                "--state", required=True, help="state spec file or inline JSON"
            )
        p.add_argument(
            "--grid", default="64,128", help="polar,azimuthal node counts"
        )
        p.add_argument(
            "--workers", type=int, default=1, help="threads over polar rows"
        )

    p_eval = sub.add_parser("eval", help="evaluate a distribution over a grid")
    add_common(p_eval)
    p_eval.add_argument(
        "--kind", choices=("q", "wigner", "f"), default="wigner"
    )
    p_eval.add_argument(
        "--method",
        choices=("triple", "double"),
        default="triple",
        help="Wigner summation route (ignored for --kind q)",
    )
    p_eval.add_argument("--oracle", action="store_true")
    p_eval.add_argument("--out", help="output path")
    p_eval.add_argument("--format", choices=("csv", "json"), default="csv")

    p_check = sub.add_parser("check", help="self-consistency table for one state")
    add_common(p_check)
    p_check.add_argument("--oracle", action="store_true")

    p_fig = sub.add_parser("figure", help="evaluate a preset state")
    add_common(p_fig, with_state=False)
    p_fig.add_argument("--preset", choices=sorted(FIGURE_PRESETS), required=True)
    p_fig.add_argument("--out", required=True)
    p_fig.add_argument("--format", choices=("csv", "json"), default="csv")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"eval": run_eval, "check": run_check, "figure": run_figure}
    try:
        return handlers[args.command](args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except TruncationCapError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_TRUNCATION_CAP
    except EquatorGuardError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
