"""Thin command-line client for the simulator service.

Every subcommand talks to the HTTP API.  By default the app is mounted
in-process (no sockets involved), so the CLI works standalone; pass
--server to target a running `uvicorn gmtlsim.service:app` instead.  The
CLI itself only touches the config file, the dataset path it forwards, and
the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from .errors import ConfigError


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    # No server given: mount the app in-process (no sockets). The Starlette
    # test client is a regular httpx.Client with a sync-to-ASGI portal.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the testclient import warns about httpx pinning
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise ConfigError(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


def _cmd_simulate(args) -> int:
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    overrides = {
        "dataset": args.dataset,
        "out": args.out,
        "algorithm": args.algo,
        "tau": args.tau,
        "topology_kind": args.topology,
        "n_neighbors": args.n_neighbors,
        "seed": args.seed,
        "workers": args.workers,
    }
    request = {
        "config": config,
        "overrides": {k: v for k, v in overrides.items() if v is not None},
    }
    with _client(args.server) as client:
        body = _post(client, "/simulate", request)

    out_dir = args.out or config.get("out") or "results"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = 1 if body["failed"] else 0
    for run in body["runs"]:
        name = f"{run['label']}.metrics.csv" + (".partial" if run["error"] else "")
        (out / name).write_text(run["metrics_csv"], encoding="utf-8")
        if run["error"]:
            print(f"[FAIL] {run['label']}: {run['error']}")
        else:
            final = run["summary"].get("final_mean_metric")
            print(f"[ ok ] {run['label']}: final mean metric = {final}")
    suffix = ".partial" if status else ""
    (out / f"summary.json{suffix}").write_text(
        json.dumps(body["summary"], indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / f"plot.tsv{suffix}").write_text(body["plot_tsv"], encoding="utf-8")
    print(f"wrote {len(body['runs']) + 2} files to {out}")
    return status


def _cmd_bounds(args) -> int:
    payload = {
        "eta": args.eta,
        "L": args.L,
        "tau": args.tau,
        "zeta": args.zeta,
        "sigma_sq": args.sigma_sq,
        "K": args.K,
        "T": args.T,
        "f_init": args.f_init,
        "f_inf": args.f_inf,
        "beta": args.beta,
    }
    with _client(args.server) as client:
        body = _post(client, "/bounds", payload)
    if body["reason"]:
        print(f"learning-rate condition: infeasible ({body['reason']})")
    else:
        verdict = "feasible" if body["feasible"] else "violated"
        print(f"learning-rate condition: lhs = {body['lr_condition_lhs']:.6g} ({verdict})")
    bound = body["bound"]
    print(f"gradient-norm bound: {'unbounded (zeta = 1)' if bound is None else f'{bound:.6g}'}")
    return 0


def _cmd_inspect_topology(args) -> int:
    payload = {
        "kind": args.kind,
        "K": args.K,
        "n_neighbors": args.n_neighbors,
        "seed": args.seed,
        "uniform_weights": args.uniform_weights,
    }
    with _client(args.server) as client:
        body = _post(client, "/topology/inspect", payload)
    print(f"kind={body['kind']} K={body['K']} zeta={body['zeta']:.12g} "
          f"connected={body['connected']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmtlsim")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one experiment or sweep")
    sim.add_argument("--config", help="JSON config file")
    sim.add_argument("--dataset", help="graph JSON dataset path")
    sim.add_argument("--out", help="output directory (default: results)")
    sim.add_argument("--algo", choices=["spreadgnn", "fedgmtl", "fedavg", "isolated"])
    sim.add_argument("--tau", type=int)
    sim.add_argument("--topology", choices=["complete", "ring", "random"])
    sim.add_argument("--n-neighbors", dest="n_neighbors", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--workers", type=int)
    sim.set_defaults(func=_cmd_simulate)

    bnd = sub.add_parser("bounds", help="evaluate the convergence bound")
    bnd.add_argument("--eta", type=float, required=True)
    bnd.add_argument("--L", type=float, required=True)
    bnd.add_argument("--tau", type=int, required=True)
    bnd.add_argument("--zeta", type=float, required=True)
    bnd.add_argument("--sigma-sq", dest="sigma_sq", type=float, required=True)
    bnd.add_argument("--K", type=int, required=True)
    bnd.add_argument("--T", type=int, required=True)
    bnd.add_argument("--f-init", dest="f_init", type=float, default=1.0)
    bnd.add_argument("--f-inf", dest="f_inf", type=float, default=0.0)
    bnd.add_argument("--beta", type=float, default=0.0)
    bnd.set_defaults(func=_cmd_bounds)

    topo = sub.add_parser("inspect-topology", help="print a topology's spectral gap")
    topo.add_argument("--kind", choices=["complete", "ring", "random"], required=True)
    topo.add_argument("--K", type=int, required=True)
    topo.add_argument("--n-neighbors", dest="n_neighbors", type=int, default=2)
    topo.add_argument("--seed", type=int, default=0)
    topo.add_argument("--uniform-weights", action="store_true")
    topo.set_defaults(func=_cmd_inspect_topology)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
