"""Command-line interface.

Exit codes: 0 success, 1 input error (including usage errors and an
invalid circuit), 2 numeric defect.
"""
import csv
import io as _io
import sys

import click

from qcevents.circuit import validate_circuit
from qcevents.errors import InputError, NumericDefect
from qcevents.histories import consistency_check, history_distribution, sample_histories
from qcevents.influence import INFLUENCE_TOL, influence_graph
from qcevents.io import canonical_json, decomps_to_dict, load_json, read_bubble, read_circuit, read_decomps
from qcevents.preference import preferred_set
from qcevents.scenarios import (
    build_chsh_spec,
    build_complementarity_spec,
    build_local_friendliness_spec,
    build_pbr_spec,
    build_product_bell_spec,
    build_wigner_spec,
    classify,
    spec_from_dict,
    spec_structure,
    spec_to_dict,
)
from qcevents.tensor import DEFAULT_TOL

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

TEMPLATES = {
    "complementarity": lambda: build_complementarity_spec(),
    "wigner": lambda: build_wigner_spec(),
    "wigner-same-basis": lambda: build_wigner_spec(same_basis=True),
    "chsh": lambda: build_chsh_spec(),
    "bell-product": lambda: build_product_bell_spec(),
    "pbr": lambda: build_pbr_spec(),
    "pbr-orthogonal": lambda: build_pbr_spec(orthogonal=True),
    "local-friendliness": lambda: build_local_friendliness_spec(),
}


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _text(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        lines = []
        for key in sorted(obj, key=str):
            val = obj[key]
            if isinstance(val, (dict, list)) and val:
                lines.append(f"{pad}{key}:")
                lines.append(_text(val, indent + 1))
            else:
                lines.append(f"{pad}{key}: {_scalar(val)}")
        return "\n".join(lines)
    if isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj):
            return pad + " ".join(_scalar(v) for v in obj)
        return "\n".join(f"{pad}-\n{_text(v, indent + 1)}" for v in obj)
    return pad + _scalar(obj)


def _scalar(v):
    if isinstance(v, float):
        return format(v, ".6g")
    if isinstance(v, (list, dict)):
        return "[]" if isinstance(v, list) else "{}"
    return str(v)


def _render(data, schema, fmt, out):
    """JSON is canonical; text is a readable rendering with no stability guarantee."""
    if fmt == "csv":
        raise InputError("csv output is only available for the sample command")
    if fmt == "text":
        _emit(_text(data) + "\n", out)
    else:
        _emit(canonical_json(data, schema), out)


def _placed(circuit, decomps, bubble, tol, seed):
    if decomps and bubble:
        raise InputError("give either --decomps or --bubble, not both")
    if decomps:
        return read_decomps(decomps, circuit), None
    if bubble:
        return list(preferred_set(circuit, read_bubble(bubble), tol, seed).entries), read_bubble(bubble)
    raise InputError("one of --decomps or --bubble is required")


circuit_opt = click.option("--circuit", "circuit_path", type=click.Path(dir_okay=False), required=True, help="Circuit JSON file.")
out_opt = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write output here instead of stdout.")
fmt_opt = click.option(
    "--format", "fmt", type=click.Choice(["json", "text", "csv"]), default="json", show_default=True,
    help="json is canonical; text is for reading; csv is for sample only.",
)
tol_opt = click.option("--tol", type=float, default=None, help="Numerical tolerance (command default if omitted).")
seed_opt = click.option("--seed", type=int, default=0, show_default=True)


@click.group()
def cli():
    """Causal-event analysis of unitary circuits."""


@cli.command()
@circuit_opt
@tol_opt
@fmt_opt
@out_opt
def validate(circuit_path, tol, fmt, out):
    """Check circuit invariants; exit 1 if any fails."""
    c = read_circuit(circuit_path)
    diags = validate_circuit(c, DEFAULT_TOL if tol is None else tol)
    report = {
        "valid": not diags,
        "diagnostics": diags,
        "wires": len(c.wires),
        "gates": len(c.gates),
        "inputs": list(c.inputs) if not diags else [],
        "outputs": list(c.outputs) if not diags else [],
    }
    _render(report, "qcevents.validate/1", fmt, out)
    return EXIT_OK if not diags else EXIT_INPUT


@cli.command()
@circuit_opt
@click.option("--decomps", type=click.Path(dir_okay=False), required=True, help="Decompositions JSON file.")
@tol_opt
@fmt_opt
@out_opt
def influences(circuit_path, decomps, tol, fmt, out):
    """Interference influence graph between placed decompositions."""
    c = read_circuit(circuit_path)
    g = influence_graph(c, read_decomps(decomps, c), INFLUENCE_TOL if tol is None else tol)
    _render(g.to_dict(), "qcevents.influences/1", fmt, out)
    return EXIT_OK


@cli.command("preferred-set")
@circuit_opt
@click.option("--bubble", type=click.Path(dir_okay=False), required=True, help="Bubble JSON file.")
@tol_opt
@seed_opt
@fmt_opt
@out_opt
def preferred_set_cmd(circuit_path, bubble, tol, seed, fmt, out):
    """Preferred decompositions of a bubble, IN and OUT for each wire."""
    c = read_circuit(circuit_path)
    ps = preferred_set(c, read_bubble(bubble), DEFAULT_TOL if tol is None else tol, seed)
    data = ps.to_dict()
    data.update(decomps_to_dict(ps.entries))
    _render(data, "qcevents.preferred-set/1", fmt, out)
    return EXIT_OK


@cli.command()
@circuit_opt
@click.option("--decomps", type=click.Path(dir_okay=False), default=None)
@click.option("--bubble", type=click.Path(dir_okay=False), default=None)
@tol_opt
@seed_opt
@fmt_opt
@out_opt
def histories(circuit_path, decomps, bubble, tol, seed, fmt, out):
    """History distribution and consistency report."""
    c = read_circuit(circuit_path)
    placed, bub = _placed(c, decomps, bubble, DEFAULT_TOL if tol is None else tol, seed)
    rep = consistency_check(c, placed) if tol is None else consistency_check(c, placed, tol)
    data = history_distribution(c, placed).to_dict()
    data["consistency"] = rep.to_dict()
    data["bubble"] = bub
    _render(data, "qcevents.histories/1", fmt, out)
    return EXIT_OK


@cli.command()
@circuit_opt
@click.option("--decomps", type=click.Path(dir_okay=False), default=None)
@click.option("--bubble", type=click.Path(dir_okay=False), default=None)
@click.option("--n", "n", type=click.IntRange(min=0), default=10, show_default=True)
@tol_opt
@seed_opt
@fmt_opt
@out_opt
def sample(circuit_path, decomps, bubble, n, tol, seed, fmt, out):
    """Draw histories; row ``k`` is reproducible from seed ``seed + k`` alone."""
    c = read_circuit(circuit_path)
    placed, _ = _placed(c, decomps, bubble, DEFAULT_TOL if tol is None else tol, seed)
    dist = history_distribution(c, placed)
    rows = sample_histories(dist, n, seed)
    names = [f"{p.at.wire}:{p.at.side.lower()}" for p in dist.placed]
    if fmt == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed"] + names)
        for s, h in rows:
            w.writerow([s] + list(h))
        _emit(buf.getvalue(), out)
    else:
        data = {"events": names, "samples": [{"seed": s, "history": list(h)} for s, h in rows]}
        _render(data, "qcevents.sample/1", fmt, out)
    return EXIT_OK


@cli.command("classify")
@click.option("--spec", "spec_path", type=click.Path(dir_okay=False), required=True, help="Scenario spec JSON file.")
@tol_opt
@seed_opt
@fmt_opt
@out_opt
def classify_cmd(spec_path, tol, seed, fmt, out):
    """Classify a scenario spec and report its interference structure."""
    spec = spec_from_dict(load_json(spec_path))
    rep = classify(spec, DEFAULT_TOL if tol is None else tol, seed).to_dict()
    if spec.kind != "local_friendliness":
        label, _ = spec_structure(spec, search=False)
        rep["structure"] = label.to_dict()
    _render(rep, "qcevents.classify/1", fmt, out)
    return EXIT_OK


@cli.group()
def scenario():
    """Scenario templates."""


@scenario.command("build")
@click.argument("kind", type=click.Choice(sorted(TEMPLATES)))
@fmt_opt
@out_opt
def scenario_build(kind, fmt, out):
    """Emit a ready-made scenario spec."""
    data = spec_to_dict(TEMPLATES[kind]())
    _render(data, data.get("schema"), fmt, out)
    return EXIT_OK


def run(argv=None):
    """Run the CLI and return the exit code instead of exiting."""
    try:
        rv = cli.main(args=argv, prog_name="qce", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INPUT
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except InputError as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_INPUT
    except NumericDefect as exc:
        click.echo(f"numeric defect: {exc}", err=True)
        return EXIT_NUMERIC
    return int(rv or 0)


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
