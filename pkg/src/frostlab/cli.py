"""Command-line client.

Every subcommand builds the same JSON payload the HTTP service accepts and
either runs the handler in-process (default) or POSTs it to a running service
when ``--server URL`` is given.  Outputs are JSON on stdout; sweep commands
can also write their CSV with ``--out``.
"""
from __future__ import annotations

import json
import sys

import click

from .service import HANDLERS


def _dispatch(ctx: click.Context, path: str, payload: dict) -> dict:
    server = ctx.obj.get("server")
    if server:
        import httpx
        resp = httpx.post(f"{server.rstrip('/')}/{path}", json=payload,
                          timeout=600.0)
        if resp.status_code != 200:
            raise click.ClickException(f"{resp.status_code}: {resp.text}")
        return resp.json()
    try:
        return HANDLERS[path](payload)
    except (ValueError, AssertionError) as e:
        raise click.ClickException(str(e))


def _emit(result: dict) -> None:
    json.dump(result, sys.stdout, indent=1, default=float)
    sys.stdout.write("\n")


def _read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v != ""]


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="POST to a running frostlab service instead of running "
                   "in-process.")
@click.pass_context
def main(ctx, server):
    """Dyadic-measure decompositions, projections and experiments."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.group()
def measure():
    """Measure/set file inspection."""


@measure.command("info")
@click.argument("path")
@click.pass_context
def measure_info(ctx, path):
    _emit(_dispatch(ctx, "measure/info", {"object": _read_json(path)}))


@main.command()
@click.argument("measure_path")
@click.option("--T", "t_param", type=int, required=True)
@click.option("--ell", type=int, required=True)
@click.option("--eps", type=float, required=True)
@click.pass_context
def regularize(ctx, measure_path, t_param, ell, eps):
    """Split a measure into regular pieces."""
    _emit(_dispatch(ctx, "regularize", {"measure": _read_json(measure_path),
                                        "T": t_param, "ell": ell, "eps": eps}))


@main.group()
def lip():
    """Lipschitz-function decompositions."""


@lip.command("decompose")
@click.argument("f_path")
@click.option("--eps", type=float, required=True)
@click.option("--mode", type=click.Choice(["linear", "graded", "superlinear",
                                           "main"]), default="linear")
@click.option("--s", type=float, default=None)
@click.option("--t", type=float, default=None)
@click.pass_context
def lip_decompose(ctx, f_path, eps, mode, s, t):
    _emit(_dispatch(ctx, "lip/decompose",
                    {"function": _read_json(f_path), "eps": eps,
                     "mode": mode, "s": s, "t": t}))


@main.command()
@click.argument("piece_path")
@click.option("--u", type=float, default=None)
@click.option("--eps", type=float, required=True)
@click.option("--ahlfors", is_flag=True, default=False)
@click.pass_context
def multiscale(ctx, piece_path, u, eps, ahlfors):
    """Multiscale Frostman (or two-sided) scale decomposition."""
    if not ahlfors and u is None:
        raise click.ClickException("--u is required unless --ahlfors is set")
    _emit(_dispatch(ctx, "multiscale", {"piece": _read_json(piece_path),
                                        "u": u, "eps": eps,
                                        "ahlfors": ahlfors}))


@main.command("entropy-bound")
@click.argument("measure_path")
@click.option("--map", "map_name", required=True,
              type=click.Choice(["proj", "dist", "radial"]))
@click.option("--y", default=None, help="pin, comma-separated")
@click.option("--theta", default=None, help="direction, comma-separated")
@click.option("--dec", "dec_path", required=True)
@click.option("--k", type=int, default=None)
@click.pass_context
def entropy_bound(ctx, measure_path, map_name, y, theta, dec_path, k):
    """Lower bound on image entropy from projected conditionals."""
    _emit(_dispatch(ctx, "entropy/bound",
                    {"measure": _read_json(measure_path), "map": map_name,
                     "y": _floats(y) if y else None,
                     "theta": _floats(theta) if theta else None,
                     "dec": _read_json(dec_path), "k": k}))


@main.command()
@click.argument("measure_path")
@click.option("--theta", required=True, help="direction, comma-separated")
@click.option("--m", "out_level", type=int, required=True)
@click.pass_context
def project(ctx, measure_path, theta, out_level):
    """Pushforward under orthogonal projection."""
    _emit(_dispatch(ctx, "project", {"measure": _read_json(measure_path),
                                     "theta": _floats(theta),
                                     "m": out_level}))


@main.command()
@click.argument("measure_path")
@click.option("--sigma", type=float, required=True)
@click.pass_context
def energy(ctx, measure_path, sigma):
    """sigma-energy of a measure."""
    _emit(_dispatch(ctx, "energy", {"measure": _read_json(measure_path),
                                    "sigma": sigma}))


@main.command()
@click.argument("measure_path")
@click.argument("rho_path", required=False)
@click.option("--sigma", type=float, required=True)
@click.option("--kappa", type=float, required=True)
@click.option("--c", "c_param", type=float, default=1.0)
@click.option("--n-dirs", type=int, default=64)
@click.pass_context
def kaufman(ctx, measure_path, rho_path, sigma, kappa, c_param, n_dirs):
    """Averaged projected energy vs the Kaufman-type bound."""
    _emit(_dispatch(ctx, "kaufman",
                    {"measure": _read_json(measure_path),
                     "rho": _read_json(rho_path) if rho_path else None,
                     "sigma": sigma, "kappa": kappa, "C": c_param,
                     "n_dirs": n_dirs}))


@main.command()
@click.argument("mu_path")
@click.argument("nu_path")
@click.option("--delta0", type=float, required=True)
@click.option("--eta", type=float, required=True)
@click.option("--depth", type=int, required=True)
@click.option("--k", type=int, default=1)
@click.pass_context
def radial(ctx, mu_path, nu_path, delta0, eta, depth, k):
    """Finite-depth radial pruning of nu against the centers of mu."""
    _emit(_dispatch(ctx, "radial", {"mu": _read_json(mu_path),
                                    "nu": _read_json(nu_path),
                                    "delta0": delta0, "eta": eta,
                                    "depth": depth, "k": k}))


@main.command()
@click.argument("scenario_path")
@click.pass_context
def run(ctx, scenario_path):
    """Run a full pipeline scenario."""
    _emit(_dispatch(ctx, "run", {"scenario": _read_json(scenario_path)}))


@main.command()
@click.option("--set", "set_path", default=None, help="E as a set JSON file")
@click.option("--generator", default=None,
              help="generator name (with --m) instead of --set")
@click.option("--m", type=int, default=None)
@click.option("--delta", type=float, required=True)
@click.option("--a", "a_values", default=None, help="params, comma-separated")
@click.option("--a-count", type=int, default=None)
@click.option("--family", type=click.Choice(["horizontal", "slope"]),
              default="horizontal")
@click.option("--slope", type=float, default=0.0)
@click.pass_context
def incidence(ctx, set_path, generator, m, delta, a_values, a_count, family,
              slope):
    """Count point-curve incidences."""
    _emit(_dispatch(ctx, "incidence",
                    {"set": _read_json(set_path) if set_path else None,
                     "generator": {"name": generator} if generator else None,
                     "m": m, "delta": delta,
                     "A": _floats(a_values) if a_values else None,
                     "a_count": a_count, "family": family, "slope": slope}))


@main.command()
@click.argument("set_path")
@click.option("--m", type=int, required=True)
@click.option("--directions", type=int, default=64)
@click.option("--seed", type=int, default=0)
@click.option("--pins", default=None,
              help="semicolon-separated pins 'x,y;x,y' for the pinned-"
                   "distance experiment instead of projections")
@click.option("--out", "out_path", default=None, help="write CSV here")
@click.pass_context
def sweep(ctx, set_path, m, directions, seed, pins, out_path):
    """Projection-exponent or pinned-distance sweep (CSV)."""
    payload = {"set": _read_json(set_path), "m": m, "directions": directions,
               "seed": seed,
               "pins": [_floats(p) for p in pins.split(";")] if pins else None}
    result = _dispatch(ctx, "sweep", payload)
    if out_path:
        with open(out_path, "w", newline="") as fh:
            fh.write(result["csv"])
    _emit({k: v for k, v in result.items() if k != "csv"})


if __name__ == "__main__":
    main()
