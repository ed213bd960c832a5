"""HTTP service wrapping the library: one POST endpoint per operation.

Each endpoint takes a pydantic request model whose payload embeds the JSON
forms of the domain objects (measures, PL functions, pieces, scale
decompositions) and returns a plain JSON report.  The ``h_*`` handlers do the
actual work; the CLI calls them in-process, so the service is a thin wire
format around the same functions.
"""
from __future__ import annotations

from typing import List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .dyadic import DyadicMeasure, DyadicSet, count_cubes
from .entropy import multiscale_entropy_bound
from .liplib import (PLFunction, cover_by_linear, cover_by_linear_graded,
                     superlinear_chain, superlinear_decomposition)
from .maps import make_map, unit
from .multiscale import (ScaleDecomposition, ahlfors_multiscale,
                         frostman_multiscale)
from .plates import radial_prune
from .proj import SphereMeasure, energy, kaufman_check, project
from .regular import RegularPiece, decompose_regular
from .xlab import (Scenario, generate, horizontal_lines, incidence_count,
                   incidence_multiplicity, pinned_distance_experiment,
                   pipeline_run, projection_gain_sweep, sloped_lines)


def _load_measure_obj(obj: dict):
    if obj.get("cells") and "mass" in obj["cells"][0]:
        return DyadicMeasure.from_json(obj)
    return DyadicSet.from_json(obj)


# ---------------------------------------------------------------------------
# Handlers (shared by the service and the in-process CLI)
# ---------------------------------------------------------------------------

def h_measure_info(payload: dict) -> dict:
    x = _load_measure_obj(payload["object"])
    out = {"kind": "measure" if isinstance(x, DyadicMeasure) else "set",
           "d": x.d, "m": x.m, "cells": len(x),
           "counts": {j: count_cubes(x, j) for j in range(x.m + 1)}}
    if isinstance(x, DyadicMeasure):
        out["total_mass"] = float(x.total)
    return out


def h_regularize(payload: dict) -> dict:
    mu = DyadicMeasure.from_json(payload["measure"])
    dec = decompose_regular(mu, int(payload["T"]), int(payload["ell"]),
                            float(payload["eps"]))
    return {"pieces": [p.to_json() for p in dec.pieces],
            "residual": [p.to_json() for p in dec.residual],
            "remainder_mass": dec.remainder_mass,
            "union_mass": dec.union_mass, "warnings": dec.warnings}


def h_lip_decompose(payload: dict) -> dict:
    f = PLFunction.from_json(payload["function"])
    eps = float(payload["eps"])
    mode = payload.get("mode", "linear")
    if mode == "linear":
        dec = cover_by_linear(f, f.a, f.b, eps)
    elif mode == "graded":
        dec = cover_by_linear_graded(f, f.a, f.b, eps)
    elif mode == "superlinear":
        dec = superlinear_chain(f, f.a, f.b, eps)
    elif mode == "main":
        B = f.b - f.a
        s = payload.get("s")
        t = payload.get("t")
        s = float(s) if s is not None else float(f(f.b)) / B
        t = float(t) if t is not None else float(f(f.a + (1 - s) * B)) / B
        dec, xi = superlinear_decomposition(f, B, s, t, eps)
        out = dec.to_json()
        out["xi"] = xi
        return out
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return dec.to_json()


def h_multiscale(payload: dict) -> dict:
    piece = RegularPiece.from_json(payload["piece"])
    if payload.get("ahlfors"):
        sd, rep = ahlfors_multiscale(piece, float(payload["eps"]))
    else:
        sd, rep = frostman_multiscale(piece, float(payload["u"]),
                                      float(payload["eps"]))
    return {"decomposition": sd.to_json(), "report": rep.to_json()}


def h_entropy_bound(payload: dict) -> dict:
    mu = DyadicMeasure.from_json(payload["measure"])
    params = {}
    if payload.get("y") is not None:
        params["y"] = [float(v) for v in payload["y"]]
    if payload.get("theta") is not None:
        params["theta"] = [float(v) for v in payload["theta"]]
    F = make_map(payload["map"], mu.d, **params)
    dec = ScaleDecomposition.from_json(payload["dec"])
    lhs, rhs, deficit = multiscale_entropy_bound(mu, F, dec,
                                                 int(payload.get("k", F.k)))
    return {"lhs": lhs, "rhs": rhs, "deficit": deficit}


def h_project(payload: dict) -> dict:
    mu = DyadicMeasure.from_json(payload["measure"])
    theta = unit([float(v) for v in payload["theta"]])
    return project(mu, theta.reshape(1, -1), int(payload["m"])).to_json()


def h_energy(payload: dict) -> dict:
    mu = DyadicMeasure.from_json(payload["measure"])
    res = energy(mu, float(payload["sigma"]))
    return {"total": res.total, "offdiag": res.offdiag,
            "self_term": res.self_term}


def h_kaufman(payload: dict) -> dict:
    mu = DyadicMeasure.from_json(payload["measure"])
    if payload.get("rho") is not None:
        rho = SphereMeasure.from_json(payload["rho"])
    else:
        rho = SphereMeasure.uniform_circle(int(payload.get("n_dirs", 64)))
    return kaufman_check(mu, rho, float(payload["sigma"]),
                         float(payload["kappa"]),
                         float(payload.get("C", 1.0)))


def h_radial(payload: dict) -> dict:
    mu = DyadicMeasure.from_json(payload["mu"])
    nu = DyadicMeasure.from_json(payload["nu"])
    L, Kmap, report = radial_prune(
        mu, nu, float(payload["delta0"]), float(payload["eta"]),
        int(payload["depth"]), k=int(payload.get("k", 1)),
        kappa=payload.get("kappa"), C_nu=payload.get("C_nu"))
    K = next(iter(Kmap.values())) if Kmap else DyadicSet(nu.d, nu.m, [])
    return {"L": L.to_json(), "K": K.to_json(), "report": report}


def h_run(payload: dict) -> dict:
    return pipeline_run(Scenario.from_json(payload["scenario"]))


def h_incidence(payload: dict) -> dict:
    if payload.get("set") is not None:
        E = _load_measure_obj(payload["set"])
    else:
        gen = payload["generator"]
        E = generate(gen["name"], gen.get("params", {}), int(payload["m"]))
    delta = float(payload["delta"])
    if payload.get("A") is not None:
        A = [float(a) for a in payload["A"]]
    else:
        A = [(j + 0.5) * delta for j in range(int(payload["a_count"]))]
    family = payload.get("family", "horizontal")
    fam = horizontal_lines() if family == "horizontal" \
        else sloped_lines(float(payload.get("slope", 0.0)))
    return {"count": incidence_count(E, A, fam, delta),
            "multiplicity": incidence_multiplicity(E, A, fam, delta),
            "E": len(E.cells) if hasattr(E, "cells") else len(E),
            "A": len(A)}


def h_sweep(payload: dict) -> dict:
    x = _load_measure_obj(payload["set"])
    if payload.get("pins") is not None:
        return pinned_distance_experiment(x, payload["pins"],
                                          int(payload["m"]))
    return projection_gain_sweep(x, int(payload.get("directions", 64)),
                                 int(payload["m"]),
                                 seed=int(payload.get("seed", 0)))


HANDLERS = {
    "measure/info": h_measure_info,
    "regularize": h_regularize,
    "lip/decompose": h_lip_decompose,
    "multiscale": h_multiscale,
    "entropy/bound": h_entropy_bound,
    "project": h_project,
    "energy": h_energy,
    "kaufman": h_kaufman,
    "radial": h_radial,
    "run": h_run,
    "incidence": h_incidence,
    "sweep": h_sweep,
}


# ---------------------------------------------------------------------------
# FastAPI wiring
# ---------------------------------------------------------------------------

class MeasureInfoRequest(BaseModel):
    object: dict


class RegularizeRequest(BaseModel):
    measure: dict
    T: int
    ell: int
    eps: float


class LipDecomposeRequest(BaseModel):
    function: dict
    eps: float
    mode: str = "linear"
    s: Optional[float] = None
    t: Optional[float] = None


class MultiscaleRequest(BaseModel):
    piece: dict
    eps: float
    u: Optional[float] = None
    ahlfors: bool = False


class EntropyBoundRequest(BaseModel):
    measure: dict
    map: str
    dec: dict
    y: Optional[List[float]] = None
    theta: Optional[List[float]] = None
    k: Optional[int] = None


class ProjectRequest(BaseModel):
    measure: dict
    theta: List[float]
    m: int


class EnergyRequest(BaseModel):
    measure: dict
    sigma: float


class KaufmanRequest(BaseModel):
    measure: dict
    sigma: float
    kappa: float
    C: float = 1.0
    rho: Optional[dict] = None
    n_dirs: int = 64


class RadialRequest(BaseModel):
    mu: dict
    nu: dict
    delta0: float
    eta: float
    depth: int
    k: int = 1
    kappa: Optional[float] = None
    C_nu: Optional[float] = None


class RunRequest(BaseModel):
    scenario: dict


class IncidenceRequest(BaseModel):
    set: Optional[dict] = None
    generator: Optional[dict] = None
    m: Optional[int] = None
    delta: float
    A: Optional[List[float]] = None
    a_count: Optional[int] = None
    family: str = "horizontal"
    slope: float = 0.0


class SweepRequest(BaseModel):
    set: dict
    m: int
    directions: int = 64
    seed: int = 0
    pins: Optional[List[List[float]]] = None


app = FastAPI(title="frostlab", version="0.1.0")


def _run_handler(path: str, payload: dict) -> dict:
    try:
        return HANDLERS[path](payload)
    except (ValueError, AssertionError) as e:
        raise HTTPException(status_code=422, detail=str(e))


@app.post("/measure/info")
def measure_info(req: MeasureInfoRequest):
    return _run_handler("measure/info", req.model_dump())


@app.post("/regularize")
def regularize(req: RegularizeRequest):
    return _run_handler("regularize", req.model_dump())


@app.post("/lip/decompose")
def lip_decompose(req: LipDecomposeRequest):
    return _run_handler("lip/decompose", req.model_dump())


@app.post("/multiscale")
def multiscale(req: MultiscaleRequest):
    return _run_handler("multiscale", req.model_dump())


@app.post("/entropy/bound")
def entropy_bound(req: EntropyBoundRequest):
    return _run_handler("entropy/bound", req.model_dump())


@app.post("/project")
def project_measure(req: ProjectRequest):
    return _run_handler("project", req.model_dump())


@app.post("/energy")
def energy_of(req: EnergyRequest):
    return _run_handler("energy", req.model_dump())


@app.post("/kaufman")
def kaufman(req: KaufmanRequest):
    return _run_handler("kaufman", req.model_dump())


@app.post("/radial")
def radial(req: RadialRequest):
    return _run_handler("radial", req.model_dump())


@app.post("/run")
def run_pipeline(req: RunRequest):
    return _run_handler("run", req.model_dump())


@app.post("/incidence")
def incidence(req: IncidenceRequest):
    return _run_handler("incidence", req.model_dump())


@app.post("/sweep")
def sweep(req: SweepRequest):
    return _run_handler("sweep", req.model_dump())
